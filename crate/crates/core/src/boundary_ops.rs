//! Exterior Green kernel, the double-layer operator `N_rho`, the boundary
//! integral solve for CGO traces on `Gamma`, and the `|l|` scaling study.
//!
//! The exterior kernel is obtained from the first-kind equation
//! `-G_rho(x - x0) = int_{dOmega} G_rho(x - y) sigma(y) ds(y)` collocated at
//! the boundary cells and solved by Tikhonov-filtered SVD. The hypersingular
//! double normal derivative is taken by one-sided extrapolation from points
//! offset off the surface along the outward normal: field points at
//! `s in {d, 2d}` and sources at `t in {1.5d, 3d}`, with `d = h/2`.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::cgo::{cgo_boundary_data, CgoProbe, FaddeevKernel, FaddeevQuadrature, Which};
use crate::forward::{BoundaryTrace, DnMap};
use crate::medium::PartialBoundary;
use crate::vec3::{add, rdot, scale, sub, CVec3, Vec3};
use crate::{Error, Result};

/// Default Tikhonov parameter relative to the largest singular value.
pub const DEFAULT_LAMBDA_REL: f64 = 1e-4;
/// Relative residual above which a first-kind solve is flagged.
pub const ILL_POSED_RESIDUAL: f64 = 0.1;
/// Largest admissible condition number of a regularized system.
pub const MAX_CONDITION: f64 = 1e12;

// ---------------------------------------------------------------------------
// Tikhonov-filtered SVD
// ---------------------------------------------------------------------------

/// SVD of a square or tall complex matrix for filtered least squares.
pub struct TikhonovSolver {
    u: Mat<Complex64>,
    s: Vec<f64>,
    v: Mat<Complex64>,
}

#[derive(Debug, Clone)]
pub struct TikhonovSolution {
    pub x: Mat<Complex64>,
    /// `||A x - b||_F / ||b||_F` from the filter factors.
    pub relative_residual: f64,
    pub solution_norm: f64,
}

impl TikhonovSolver {
    pub fn new(a: &Mat<Complex64>) -> Result<Self> {
        let svd = a.thin_svd().map_err(|e| Error::Factorization(format!("svd: {e:?}")))?;
        let s = svd.S().column_vector().iter().map(|z| z.re).collect();
        Ok(TikhonovSolver { u: svd.U().to_owned(), s, v: svd.V().to_owned() })
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn sigma_max(&self) -> f64 {
        self.s.first().copied().unwrap_or(0.0)
    }

    pub fn sigma_min(&self) -> f64 {
        self.s.last().copied().unwrap_or(0.0)
    }

    /// Condition number of the filtered inverse, `sigma_max / max(sigma_min, lambda)`.
    pub fn regularized_condition(&self, lambda: f64) -> f64 {
        self.sigma_max() / self.sigma_min().max(lambda)
    }

    /// Minimizes `||A x - b||^2 + lambda^2 ||x||^2` column by column.
    pub fn solve(&self, b: &Mat<Complex64>, lambda: f64) -> TikhonovSolution {
        let c = self.u.adjoint() * b;
        let mut filtered = c.clone();
        let mut res2 = 0.0;
        for i in 0..c.nrows() {
            let s = self.s[i];
            let denom = s * s + lambda * lambda;
            let (f, r) = if denom > 0.0 { (s / denom, lambda * lambda / denom) } else { (0.0, 1.0) };
            for j in 0..c.ncols() {
                filtered[(i, j)] = c[(i, j)] * f;
                res2 += (c[(i, j)] * r).norm_sqr();
            }
        }
        // part of b outside the range of U
        let b2: f64 = frob2(b);
        let c2: f64 = frob2(&c);
        res2 += (b2 - c2).max(0.0);
        let x = &self.v * &filtered;
        let bn = b2.sqrt();
        TikhonovSolution {
            relative_residual: if bn > 0.0 { res2.sqrt() / bn } else { 0.0 },
            solution_norm: frob2(&x).sqrt(),
            x,
        }
    }
}

fn frob2(a: &Mat<Complex64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat<Complex64>) -> Result<f64> {
    let s = a.singular_values().map_err(|e| Error::Factorization(format!("svd: {e:?}")))?;
    Ok(s.first().copied().unwrap_or(0.0))
}

// ---------------------------------------------------------------------------
// Exterior kernel
// ---------------------------------------------------------------------------

/// `int int 1/|y| dy` over `[-a0, a1] x [-b0, b1]`.
fn self_integral(extent: &[f64; 4]) -> f64 {
    let rect = |a: f64, b: f64| a * (b / a).asinh() + b * (a / b).asinh();
    let [a0, a1, b0, b1] = *extent;
    rect(a0, b0) + rect(a0, b1) + rect(a1, b0) + rect(a1, b1)
}

fn kernel_matrix(kern: &FaddeevKernel, targets: &[Vec3], sources: &[Vec3]) -> Mat<Complex64> {
    Mat::from_fn(targets.len(), sources.len(), |i, j| kern.eval(&sub(&targets[i], &sources[j])))
}

/// Collocated single-layer matrix `S_ij = G_rho(y_i - y_j) w_j` over all boundary cells.
pub fn single_layer_matrix(kern: &FaddeevKernel, patch: &PartialBoundary) -> Mat<Complex64> {
    let pts: Vec<Vec3> = patch.cells.iter().map(|c| c.position).collect();
    let two_pi2 = 2.0 * PI * PI;
    Mat::from_fn(pts.len(), pts.len(), |i, j| {
        let w = patch.cells[j].weight;
        if i == j {
            // G ~ 2 pi^2 (1/|x| - tau) + odd terms near the origin
            Complex64::new(two_pi2 * (self_integral(&patch.cells[i].extent) - kern.tau() * w), 0.0)
        } else {
            kern.eval(&sub(&pts[i], &pts[j])) * w
        }
    })
}

/// Solution of the first-kind equation for sources just outside `Gamma`.
pub struct ExteriorKernel {
    pub rho: CVec3,
    pub lambda: f64,
    /// Normal offsets of the source points.
    pub source_offsets: [f64; 2],
    /// Boundary densities `dG^D/dnu(y)`, one matrix per source offset:
    /// rows run over all boundary cells, columns over `Gamma` sources.
    pub densities: [Mat<Complex64>; 2],
    pub relative_residual: f64,
    pub solution_norm: f64,
    /// Residual above [`ILL_POSED_RESIDUAL`].
    pub ill_posed: bool,
    kernel: FaddeevKernel,
}

pub fn collocation_offset(patch: &PartialBoundary) -> f64 {
    0.5 * patch.domain.h()
}

fn offset_points(patch: &PartialBoundary, t: f64) -> Vec<Vec3> {
    patch
        .gamma()
        .iter()
        .map(|&i| add(&patch.cells[i].position, &scale(t, &patch.cells[i].normal)))
        .collect()
}

/// Solves the first-kind equation with `lambda = lambda_rel * sigma_max(S)`.
pub fn solve_exterior_kernel(rho: &CVec3, patch: &PartialBoundary, lambda_rel: f64) -> Result<ExteriorKernel> {
    if !(lambda_rel > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda_rel} must be positive")));
    }
    let kernel = FaddeevKernel::new(rho, &FaddeevQuadrature::default())?;
    let s = single_layer_matrix(&kernel, patch);
    let solver = TikhonovSolver::new(&s)?;
    let lambda = lambda_rel * solver.sigma_max();
    let d = collocation_offset(patch);
    let offsets = [1.5 * d, 3.0 * d];
    let pts: Vec<Vec3> = patch.cells.iter().map(|c| c.position).collect();
    let mut densities = Vec::with_capacity(2);
    let mut res2 = 0.0;
    let mut rhs2 = 0.0;
    let mut sol2 = 0.0;
    for &t in &offsets {
        let src = offset_points(patch, t);
        let mut b = kernel_matrix(&kernel, &pts, &src);
        for j in 0..b.ncols() {
            for i in 0..b.nrows() {
                b[(i, j)] = -b[(i, j)];
            }
        }
        let sol = solver.solve(&b, lambda);
        let bn2 = frob2(&b);
        res2 += sol.relative_residual.powi(2) * bn2;
        rhs2 += bn2;
        sol2 += sol.solution_norm.powi(2);
        densities.push(sol.x);
    }
    let relative_residual = if rhs2 > 0.0 { (res2 / rhs2).sqrt() } else { 0.0 };
    let d1 = densities.pop().unwrap();
    let d0 = densities.pop().unwrap();
    Ok(ExteriorKernel {
        rho: *rho,
        lambda,
        source_offsets: offsets,
        densities: [d0, d1],
        relative_residual,
        solution_norm: sol2.sqrt(),
        ill_posed: relative_residual > ILL_POSED_RESIDUAL,
        kernel,
    })
}

impl ExteriorKernel {
    /// `g^D(x_i, x0_j) = e^{x_i.rho} G^D(x_i, x0_j)` for field points `x_i` and
    /// sources at offset index `src`.
    fn green_dirichlet(&self, patch: &PartialBoundary, field: &[Vec3], src: usize) -> Mat<Complex64> {
        let sources = offset_points(patch, self.source_offsets[src]);
        let pts: Vec<Vec3> = patch.cells.iter().map(|c| c.position).collect();
        let direct = kernel_matrix(&self.kernel, field, &sources);
        let mut layer = kernel_matrix(&self.kernel, field, &pts);
        for j in 0..layer.ncols() {
            let w = patch.cells[j].weight;
            for i in 0..layer.nrows() {
                layer[(i, j)] *= w;
            }
        }
        let mut g = direct + &layer * &self.densities[src];
        for (i, x) in field.iter().enumerate() {
            let e = rdot(x, &self.rho).exp();
            for j in 0..g.ncols() {
                g[(i, j)] *= e;
            }
        }
        g
    }
}

/// Derivative at 0 of the quadratic through `(0, 0)`, `(a, fa)`, `(b, fb)`.
fn one_sided(fa: &Mat<Complex64>, fb: &Mat<Complex64>, a: f64, b: f64) -> Mat<Complex64> {
    let ca = b * b / (a * b * (b - a));
    let cb = a * a / (a * b * (b - a));
    Mat::from_fn(fa.nrows(), fa.ncols(), |i, j| fa[(i, j)] * ca - fb[(i, j)] * cb)
}

// ---------------------------------------------------------------------------
// N_rho
// ---------------------------------------------------------------------------

/// Dense `Gamma x Gamma` approximation of `d^2 g^D_rho / dnu(x) dnu(y)`.
#[derive(Debug, Clone)]
pub struct NRhoOperator {
    pub rho: CVec3,
    pub which: Which,
    /// Kernel values; `apply` multiplies by the surface weights.
    pub kernel: Mat<Complex64>,
    pub weights: Vec<f64>,
    pub gamma: Vec<usize>,
    pub lambda: f64,
    pub relative_residual: f64,
    pub ill_posed: bool,
}

pub fn assemble_n_rho(probe: &CgoProbe, which: Which, patch: &PartialBoundary, lambda_rel: f64) -> Result<NRhoOperator> {
    let rho = probe.rho(which);
    let ext = solve_exterior_kernel(&rho, patch, lambda_rel)?;
    Ok(n_rho_from_kernel(&ext, which, patch))
}

pub fn n_rho_from_kernel(ext: &ExteriorKernel, which: Which, patch: &PartialBoundary) -> NRhoOperator {
    let d = collocation_offset(patch);
    let field_offsets = [d, 2.0 * d];
    let mut per_source = Vec::with_capacity(2);
    for src in 0..2 {
        let f: Vec<Mat<Complex64>> = field_offsets
            .iter()
            .map(|&s| ext.green_dirichlet(patch, &offset_points(patch, s), src))
            .collect();
        per_source.push(one_sided(&f[0], &f[1], field_offsets[0], field_offsets[1]));
    }
    let kernel = one_sided(&per_source[0], &per_source[1], ext.source_offsets[0], ext.source_offsets[1]);
    NRhoOperator {
        rho: ext.rho,
        which,
        kernel,
        weights: patch.gamma().iter().map(|&i| patch.cells[i].weight).collect(),
        gamma: patch.gamma().to_vec(),
        lambda: ext.lambda,
        relative_residual: ext.relative_residual,
        ill_posed: ext.ill_posed,
    }
}

impl NRhoOperator {
    /// Discrete operator `A = K diag(w)` acting on Gamma values.
    pub fn matrix(&self) -> Mat<Complex64> {
        Mat::from_fn(self.kernel.nrows(), self.kernel.ncols(), |i, j| self.kernel[(i, j)] * self.weights[j])
    }

    pub fn apply_gamma(&self, f: &[Complex64]) -> Vec<Complex64> {
        (0..self.kernel.nrows())
            .map(|i| (0..f.len()).map(|j| self.kernel[(i, j)] * self.weights[j] * f[j]).sum())
            .collect()
    }

    /// `int_Gamma K(x, y) f(y) ds(y)` as a Gamma-only trace.
    pub fn apply(&self, f: &BoundaryTrace, patch: &PartialBoundary) -> Result<BoundaryTrace> {
        if patch.gamma() != self.gamma.as_slice() {
            return Err(Error::GridMismatch("N_rho built on a different patch".into()));
        }
        Ok(BoundaryTrace::from_gamma_values(patch, &self.apply_gamma(&f.gamma_values(patch))))
    }

    /// Operator norm in `L^2(Gamma, ds)`.
    pub fn operator_norm(&self) -> Result<f64> {
        let sw: Vec<f64> = self.weights.iter().map(|w| w.sqrt()).collect();
        let a = Mat::from_fn(self.kernel.nrows(), self.kernel.ncols(), |i, j| self.kernel[(i, j)] * (sw[i] * sw[j]));
        spectral_norm(&a)
    }

    pub fn all_finite(&self) -> bool {
        (0..self.kernel.nrows()).all(|i| (0..self.kernel.ncols()).all(|j| self.kernel[(i, j)].is_finite()))
    }
}

// ---------------------------------------------------------------------------
// Lemma 1 solve
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct Lemma1Solution {
    pub trace: BoundaryTrace,
    /// `sigma_max / sigma_min` of `Lambda + N_rho`.
    pub condition: f64,
    pub regularized_condition: f64,
    pub lambda: f64,
    /// Relative residual predicted by the Tikhonov filter factors.
    pub residual_bound: f64,
}

/// Solves `(Lambda + N_rho) u = (rho.nu) e^{x.rho}` on Gamma by filtered least squares.
pub fn lemma1_solve(dn: &DnMap, nrho: &NRhoOperator, probe: &CgoProbe, lambda_rel: f64) -> Result<Lemma1Solution> {
    lemma1_solve_with_matrix(&dn.gamma_matrix(), &dn.patch, nrho, probe, lambda_rel)
}

/// [`lemma1_solve`] with a precomputed Gamma matrix of the DN map.
pub fn lemma1_solve_with_matrix(
    lambda_gamma: &Mat<f64>,
    patch: &PartialBoundary,
    nrho: &NRhoOperator,
    probe: &CgoProbe,
    lambda_rel: f64,
) -> Result<Lemma1Solution> {
    let ng = patch.gamma_len();
    if lambda_gamma.nrows() != ng || nrho.kernel.nrows() != ng || patch.gamma() != nrho.gamma.as_slice() {
        return Err(Error::GridMismatch("DN map and N_rho live on different Gamma".into()));
    }
    let n = nrho.matrix();
    let a = Mat::from_fn(ng, ng, |i, j| n[(i, j)] + lambda_gamma[(i, j)]);
    let solver = TikhonovSolver::new(&a)?;
    let lambda = lambda_rel * solver.sigma_max();
    let regularized_condition = solver.regularized_condition(lambda);
    if !(regularized_condition <= MAX_CONDITION) {
        return Err(Error::SingularSystem { condition: regularized_condition });
    }
    let rhs = cgo_boundary_data(probe, nrho.which, patch)?.flux.gamma_values(patch);
    let b = Mat::from_fn(ng, 1, |i, _| rhs[i]);
    let sol = solver.solve(&b, lambda);
    let u: Vec<Complex64> = (0..ng).map(|i| sol.x[(i, 0)]).collect();
    let sigma_min = solver.sigma_min();
    Ok(Lemma1Solution {
        trace: BoundaryTrace::from_gamma_values(patch, &u),
        condition: if sigma_min > 0.0 { solver.sigma_max() / sigma_min } else { f64::INFINITY },
        regularized_condition,
        lambda,
        residual_bound: sol.relative_residual,
    })
}

/// Relative residual of `u` in `(Lambda + N_rho) u = (rho.nu) e^{x.rho}`,
/// applying the DN map by fresh forward solves.
pub fn lemma1_residual(dn: &DnMap, nrho: &NRhoOperator, probe: &CgoProbe, u: &BoundaryTrace) -> Result<f64> {
    let patch = &dn.patch;
    let lu = dn.apply(u)?.gamma_values(patch);
    let nu = nrho.apply_gamma(&u.gamma_values(patch));
    let rhs = cgo_boundary_data(probe, nrho.which, patch)?.flux.gamma_values(patch);
    let mut r2 = 0.0;
    let mut b2 = 0.0;
    for i in 0..rhs.len() {
        r2 += (lu[i] + nu[i] - rhs[i]).norm_sqr();
        b2 += rhs[i].norm_sqr();
    }
    Ok(if b2 > 0.0 { (r2 / b2).sqrt() } else { r2.sqrt() })
}

/// `|<u, v>_Gamma| / (||u|| ||v||)` with the Hermitian surface product.
pub fn trace_correlation(u: &BoundaryTrace, v: &BoundaryTrace, patch: &PartialBoundary) -> f64 {
    let nu = u.norm_gamma(patch);
    let nv = v.norm_gamma(patch);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    u.inner(v, patch).norm() / (nu * nv)
}

// ---------------------------------------------------------------------------
// |l| scaling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub l_values: Vec<f64>,
    pub norms: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Least-squares `c` in `||N|| ~ c |l|`.
    pub slope: f64,
    pub r2: f64,
    /// Fit of `log ||N||` against `log |l|`.
    pub loglog_slope: f64,
    pub loglog_r2: f64,
}

/// Least squares `y ~ c x` and its coefficient of determination.
pub fn fit_through_origin(x: &[f64], y: &[f64]) -> (f64, f64) {
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let c = sxy / sxx;
    (c, r_squared(y, &x.iter().map(|a| c * a).collect::<Vec<_>>()))
}

/// Ordinary least squares `y ~ a + b x`; returns `(b, a, r2)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    (b, a, r_squared(y, &x.iter().map(|v| a + b * v).collect::<Vec<_>>()))
}

fn r_squared(y: &[f64], fit: &[f64]) -> f64 {
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let sse: f64 = y.iter().zip(fit).map(|(a, b)| (a - b) * (a - b)).sum();
    let sst: f64 = y.iter().map(|a| (a - my) * (a - my)).sum();
    if sst == 0.0 {
        if sse == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - sse / sst
    }
}

/// Operator norms of `N_rho1(k, |l|)` for each `|l|` with the fits above.
pub fn lemma2_scaling_report(patch: &PartialBoundary, k: Vec3, lambda_rel: f64, l_values: &[f64]) -> Result<ScalingReport> {
    if l_values.len() < 3 {
        return Err(Error::InvalidArgument("need at least three |l| values".into()));
    }
    let mut norms = Vec::with_capacity(l_values.len());
    let mut residuals = Vec::with_capacity(l_values.len());
    for &l in l_values {
        let probe = crate::cgo::make_probe(k, l)?;
        let op = assemble_n_rho(&probe, Which::First, patch, lambda_rel)?;
        norms.push(op.operator_norm()?);
        residuals.push(op.relative_residual);
    }
    Ok(scaling_from_norms(l_values, norms, residuals))
}

pub fn scaling_from_norms(l_values: &[f64], norms: Vec<f64>, residuals: Vec<f64>) -> ScalingReport {
    let (slope, r2) = fit_through_origin(l_values, &norms);
    let lx: Vec<f64> = l_values.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let (loglog_slope, _, loglog_r2) = linear_fit(&lx, &ly);
    ScalingReport { l_values: l_values.to_vec(), norms, residuals, slope, r2, loglog_slope, loglog_r2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_integral_of_square() {
        // int over [-a, a]^2 of 1/|y| = 8 a asinh(1)
        let a = 0.3;
        let v = self_integral(&[a, a, a, a]);
        assert!((v - 8.0 * a * 1f64.asinh()).abs() < 1e-14);
    }

    #[test]
    fn zero_data_zero_solution() {
        let a = Mat::from_fn(5, 5, |i, j| Complex64::new(1.0 / (1.0 + i as f64 + j as f64), (i * j) as f64 * 0.01));
        let t = TikhonovSolver::new(&a).unwrap();
        let s = t.solve(&Mat::zeros(5, 2), 1e-3);
        assert_eq!(s.solution_norm, 0.0);
        assert_eq!(s.relative_residual, 0.0);
    }

    #[test]
    fn exact_linear_fit() {
        let x = [2.0, 4.0, 8.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v| 3.5 * v).collect();
        let (c, r2) = fit_through_origin(&x, &y);
        assert!((c - 3.5).abs() < 1e-14);
        assert!((r2 - 1.0).abs() < 1e-14);
    }
}
