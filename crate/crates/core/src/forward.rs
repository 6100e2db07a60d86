//! Finite-difference Helmholtz solver and partial Dirichlet-to-Neumann maps.
//!
//! The interior operator is `h^2 (Delta_h + omega^2 n)` on the interior nodes:
//! diagonal `-6 + h^2 omega^2 n`, unit off-diagonals. It is real symmetric and
//! factored once with a sparse LDL^T; complex boundary data are solved as two
//! real right-hand sides.

use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, supernodal, CholeskySymbolicParams, LdltRef, SymbolicCholesky,
    SymbolicCholeskyRaw, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par, Side};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::medium::{BoundaryCell, Domain, PartialBoundary, VoxelField};
use crate::{Error, Result};

/// Pivot ratio below which `omega^2` is treated as a Dirichlet eigenvalue.
pub const PIVOT_RATIO_MIN: f64 = 1e-10;

const SOLVE_CHUNK: usize = 256;

// ---------------------------------------------------------------------------
// Boundary traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Support {
    /// Values on all of the box boundary.
    Full,
    /// Values on `Gamma`, zero on its complement.
    Gamma,
}

/// Complex values on the boundary cells of a [`PartialBoundary`], in cell order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryTrace {
    pub values: Vec<Complex64>,
    pub support: Support,
}

impl BoundaryTrace {
    pub fn zeros(patch: &PartialBoundary, support: Support) -> Self {
        BoundaryTrace { values: vec![Complex64::new(0.0, 0.0); patch.len()], support }
    }

    /// Samples `f` at every cell; Gamma-only traces are zeroed off `Gamma`.
    pub fn from_fn(patch: &PartialBoundary, support: Support, f: impl Fn(&BoundaryCell) -> Complex64) -> Self {
        let values = patch
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if support == Support::Gamma && !patch.in_gamma(i) {
                    Complex64::new(0.0, 0.0)
                } else {
                    f(c)
                }
            })
            .collect();
        BoundaryTrace { values, support }
    }

    /// Builds a Gamma-only trace from values listed over `patch.gamma()`.
    pub fn from_gamma_values(patch: &PartialBoundary, gamma_values: &[Complex64]) -> Self {
        assert_eq!(gamma_values.len(), patch.gamma_len());
        let mut t = BoundaryTrace::zeros(patch, Support::Gamma);
        for (v, &i) in gamma_values.iter().zip(patch.gamma()) {
            t.values[i] = *v;
        }
        t
    }

    pub fn gamma_values(&self, patch: &PartialBoundary) -> Vec<Complex64> {
        patch.gamma().iter().map(|&i| self.values[i]).collect()
    }

    /// Copy with every non-`Gamma` cell set to zero.
    pub fn restricted(&self, patch: &PartialBoundary) -> Self {
        let mut t = self.clone();
        for (i, v) in t.values.iter_mut().enumerate() {
            if !patch.in_gamma(i) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        t.support = Support::Gamma;
        t
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Surface L2 norm over `Gamma`.
    pub fn norm_gamma(&self, patch: &PartialBoundary) -> f64 {
        patch
            .gamma()
            .iter()
            .map(|&i| patch.cells[i].weight * self.values[i].norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Bilinear surface product `int_Gamma f g ds` (no conjugation).
    pub fn bilinear(&self, other: &BoundaryTrace, patch: &PartialBoundary) -> Complex64 {
        patch
            .gamma()
            .iter()
            .map(|&i| self.values[i] * other.values[i] * patch.cells[i].weight)
            .sum()
    }

    /// Hermitian surface product `int_Gamma conj(f) g ds`.
    pub fn inner(&self, other: &BoundaryTrace, patch: &PartialBoundary) -> Complex64 {
        patch
            .gamma()
            .iter()
            .map(|&i| self.values[i].conj() * other.values[i] * patch.cells[i].weight)
            .sum()
    }

    pub fn axpy(&self, a: Complex64, other: &BoundaryTrace) -> BoundaryTrace {
        let values = self.values.iter().zip(&other.values).map(|(x, y)| x + a * y).collect();
        let support = if self.support == Support::Gamma && other.support == Support::Gamma {
            Support::Gamma
        } else {
            Support::Full
        };
        BoundaryTrace { values, support }
    }

    pub fn sub(&self, other: &BoundaryTrace) -> BoundaryTrace {
        self.axpy(Complex64::new(-1.0, 0.0), other)
    }

    pub fn scaled(&self, a: Complex64) -> BoundaryTrace {
        BoundaryTrace { values: self.values.iter().map(|v| a * v).collect(), support: self.support }
    }
}

/// Interior nodal values together with the Dirichlet data that produced them.
#[derive(Debug, Clone)]
pub struct DirichletSolution {
    pub interior: Vec<Complex64>,
    pub boundary: BoundaryTrace,
}

// ---------------------------------------------------------------------------
// Helmholtz system
// ---------------------------------------------------------------------------

pub struct HelmholtzSystem {
    domain: Domain,
    omega: f64,
    index: VoxelField,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    pivot_ratio: f64,
}

impl std::fmt::Debug for HelmholtzSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HelmholtzSystem")
            .field("domain", &self.domain)
            .field("omega", &self.omega)
            .field("pivot_ratio", &self.pivot_ratio)
            .finish()
    }
}

impl HelmholtzSystem {
    /// Assembles and factors `h^2 (Delta_h + omega^2 n)` for the index field `n`.
    pub fn assemble(index: &VoxelField, omega: f64) -> Result<Self> {
        if !(omega >= 0.0 && omega.is_finite()) {
            return Err(Error::InvalidArgument(format!("omega = {omega}")));
        }
        let domain = index.domain;
        let m = domain.m();
        let h = domain.h();
        let dim = domain.n_interior();
        let shift = h * h * omega * omega;

        let mut trip = Vec::with_capacity(4 * dim);
        for p in 0..dim {
            let [i, j, k] = domain.unindex(p);
            trip.push(Triplet::new(p, p, -6.0 + shift * index.values[p]));
            if i + 1 < m {
                trip.push(Triplet::new(domain.index([i + 1, j, k]), p, 1.0));
            }
            if j + 1 < m {
                trip.push(Triplet::new(domain.index([i, j + 1, k]), p, 1.0));
            }
            if k + 1 < m {
                trip.push(Triplet::new(domain.index([i, j, k + 1]), p, 1.0));
            }
        }
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(dim, dim, &trip)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let symbolic = factorize_symbolic_cholesky(
            a.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            CholeskySymbolicParams::default(),
        )
        .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        let mut factor = vec![0.0f64; symbolic.len_val()];
        let mut mem = MemBuffer::new(symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()));
        symbolic
            .factorize_numeric_ldlt(
                &mut factor,
                a.as_ref(),
                Side::Lower,
                LdltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;

        let pivot_ratio = pivot_ratio(&symbolic, &factor);
        if !(pivot_ratio >= PIVOT_RATIO_MIN) {
            return Err(Error::EigenvalueHit { ratio: pivot_ratio });
        }
        Ok(HelmholtzSystem { domain, omega, index: index.clone(), symbolic, factor, pivot_ratio })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn index(&self) -> &VoxelField {
        &self.index
    }

    /// `min |d| / max |d|` over the LDL^T pivots.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    /// Solves in place for real right-hand side columns of the scaled system.
    fn solve_columns(&self, rhs: &mut Mat<f64>) {
        let mut mem = MemBuffer::new(self.symbolic.solve_in_place_scratch::<f64>(rhs.ncols(), Par::Seq));
        LdltRef::new(&self.symbolic, &self.factor).solve_in_place_with_conj(
            Conj::No,
            rhs.as_mut(),
            Par::Seq,
            MemStack::new(&mut mem),
        );
    }

    fn check_patch(&self, patch: &PartialBoundary) -> Result<()> {
        if patch.domain != self.domain {
            return Err(Error::GridMismatch(format!(
                "patch grid {} vs system grid {}",
                patch.domain.grid_n, self.domain.grid_n
            )));
        }
        Ok(())
    }

    /// Solves `(Delta + omega^2 n) u = 0` with `u = f` on the boundary.
    pub fn solve_dirichlet(&self, patch: &PartialBoundary, f: &BoundaryTrace) -> Result<DirichletSolution> {
        Ok(self.solve_dirichlet_many(patch, std::slice::from_ref(f))?.pop().unwrap())
    }

    /// Batched [`solve_dirichlet`](Self::solve_dirichlet) sharing one factor.
    pub fn solve_dirichlet_many(&self, patch: &PartialBoundary, fs: &[BoundaryTrace]) -> Result<Vec<DirichletSolution>> {
        self.check_patch(patch)?;
        let dim = self.domain.n_interior();
        let inward: Vec<usize> = patch.cells.iter().map(|c| self.domain.index(c.inward(&self.domain, 1))).collect();
        let mut out = Vec::with_capacity(fs.len());
        for chunk in fs.chunks(SOLVE_CHUNK / 2) {
            let mut rhs = Mat::<f64>::zeros(dim, 2 * chunk.len());
            for (c, f) in chunk.iter().enumerate() {
                if f.values.len() != patch.len() {
                    return Err(Error::GridMismatch("trace length differs from patch".into()));
                }
                for (cell, v) in f.values.iter().enumerate() {
                    rhs[(inward[cell], 2 * c)] -= v.re;
                    rhs[(inward[cell], 2 * c + 1)] -= v.im;
                }
            }
            self.solve_columns(&mut rhs);
            for (c, f) in chunk.iter().enumerate() {
                let interior = (0..dim).map(|p| Complex64::new(rhs[(p, 2 * c)], rhs[(p, 2 * c + 1)])).collect();
                out.push(DirichletSolution { interior, boundary: f.clone() });
            }
        }
        Ok(out)
    }

    /// Max-norm residual of the scaled interior stencil.
    pub fn stencil_residual(&self, patch: &PartialBoundary, sol: &DirichletSolution) -> f64 {
        let d = &self.domain;
        let m = d.m();
        let h = d.h();
        let mut bnd = vec![Complex64::new(0.0, 0.0); d.n_interior()];
        for (cell, v) in patch.cells.iter().zip(&sol.boundary.values) {
            bnd[d.index(cell.inward(d, 1))] += v;
        }
        let u = &sol.interior;
        let mut worst = 0.0f64;
        for p in 0..d.n_interior() {
            let [i, j, k] = d.unindex(p);
            let mut s = u[p] * (-6.0 + h * h * self.omega * self.omega * self.index.values[p]) + bnd[p];
            for (ax, c) in [i, j, k].into_iter().enumerate() {
                let mut lo = [i, j, k];
                let mut hi = [i, j, k];
                if c > 0 {
                    lo[ax] = c - 1;
                    s += u[d.index(lo)];
                }
                if c + 1 < m {
                    hi[ax] = c + 1;
                    s += u[d.index(hi)];
                }
            }
            worst = worst.max(s.norm());
        }
        worst
    }

    /// Second-order one-sided normal derivative on `Gamma`.
    pub fn neumann_trace(&self, patch: &PartialBoundary, sol: &DirichletSolution) -> BoundaryTrace {
        let d = &self.domain;
        let inv2h = 1.0 / (2.0 * d.h());
        let mut t = BoundaryTrace::zeros(patch, Support::Gamma);
        for &i in patch.gamma() {
            let c = &patch.cells[i];
            let u1 = sol.interior[d.index(c.inward(d, 1))];
            let u2 = sol.interior[d.index(c.inward(d, 2))];
            t.values[i] = (3.0 * sol.boundary.values[i] - 4.0 * u1 + u2) * inv2h;
        }
        t
    }
}

fn pivot_ratio(symbolic: &SymbolicCholesky<usize>, factor: &[f64]) -> f64 {
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    let mut visit = |d: f64| {
        let d = d.abs();
        if d.is_nan() {
            dmin = f64::NAN;
        }
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    };
    match symbolic.raw() {
        SymbolicCholeskyRaw::Simplicial(s) => {
            let cp = s.col_ptr();
            for j in 0..s.nrows() {
                visit(factor[cp[j]]);
            }
        }
        SymbolicCholeskyRaw::Supernodal(s) => {
            let r = supernodal::SupernodalLdltRef::new(s, factor);
            for sn in 0..s.n_supernodes() {
                let v = r.supernode(sn).val();
                for q in 0..v.ncols() {
                    visit(v[(q, q)]);
                }
            }
        }
    }
    if dmax == 0.0 {
        0.0
    } else {
        dmin / dmax
    }
}

// ---------------------------------------------------------------------------
// DN maps
// ---------------------------------------------------------------------------

/// Partial DN map `f -> du/dnu |_Gamma` for one medium.
#[derive(Debug, Clone)]
pub struct DnMap {
    pub system: Arc<HelmholtzSystem>,
    pub patch: Arc<PartialBoundary>,
}

impl DnMap {
    pub fn new(system: Arc<HelmholtzSystem>, patch: Arc<PartialBoundary>) -> Result<Self> {
        system.check_patch(&patch)?;
        Ok(DnMap { system, patch })
    }

    /// Assembles the system for `index` and wraps it with `patch`.
    pub fn build(index: &VoxelField, omega: f64, patch: Arc<PartialBoundary>) -> Result<Self> {
        DnMap::new(Arc::new(HelmholtzSystem::assemble(index, omega)?), patch)
    }

    fn prepare(&self, f: &BoundaryTrace) -> BoundaryTrace {
        match f.support {
            Support::Gamma => f.restricted(&self.patch),
            Support::Full => f.clone(),
        }
    }

    pub fn apply(&self, f: &BoundaryTrace) -> Result<BoundaryTrace> {
        Ok(self.apply_many(std::slice::from_ref(f))?.pop().unwrap())
    }

    pub fn apply_many(&self, fs: &[BoundaryTrace]) -> Result<Vec<BoundaryTrace>> {
        let prepared: Vec<BoundaryTrace> = fs.iter().map(|f| self.prepare(f)).collect();
        let sols = self.system.solve_dirichlet_many(&self.patch, &prepared)?;
        Ok(sols.iter().map(|s| self.system.neumann_trace(&self.patch, s)).collect())
    }

    /// Dense real matrix of the map restricted to `Gamma`:
    /// entry `(i, j)` is the trace on Gamma cell `i` of the unit datum on Gamma cell `j`.
    pub fn gamma_matrix(&self) -> Mat<f64> {
        let d = &self.system.domain;
        let gamma = self.patch.gamma();
        let ng = gamma.len();
        let dim = d.n_interior();
        let inv2h = 1.0 / (2.0 * d.h());
        let mut out = Mat::<f64>::zeros(ng, ng);
        for start in (0..ng).step_by(SOLVE_CHUNK) {
            let end = (start + SOLVE_CHUNK).min(ng);
            let mut rhs = Mat::<f64>::zeros(dim, end - start);
            for j in start..end {
                let c = &self.patch.cells[gamma[j]];
                rhs[(d.index(c.inward(d, 1)), j - start)] = -1.0;
            }
            self.system.solve_columns(&mut rhs);
            for (i, &ci) in gamma.iter().enumerate() {
                let c = &self.patch.cells[ci];
                let p1 = d.index(c.inward(d, 1));
                let p2 = d.index(c.inward(d, 2));
                for j in start..end {
                    let own = if j == i { 3.0 } else { 0.0 };
                    out[(i, j)] = (own - 4.0 * rhs[(p1, j - start)] + rhs[(p2, j - start)]) * inv2h;
                }
            }
        }
        out
    }
}

/// `(Lambda_pert - Lambda_bg) f`.
pub fn dn_difference_apply(dn_pert: &DnMap, dn_bg: &DnMap, f: &BoundaryTrace) -> Result<BoundaryTrace> {
    Ok(dn_difference_apply_many(dn_pert, dn_bg, std::slice::from_ref(f))?.pop().unwrap())
}

pub fn dn_difference_apply_many(dn_pert: &DnMap, dn_bg: &DnMap, fs: &[BoundaryTrace]) -> Result<Vec<BoundaryTrace>> {
    if !dn_pert.patch.same_layout(&dn_bg.patch) {
        return Err(Error::GridMismatch("DN maps use different patches".into()));
    }
    if dn_pert.system.domain != dn_bg.system.domain {
        return Err(Error::GridMismatch("DN maps use different grids".into()));
    }
    let a = dn_pert.apply_many(fs)?;
    let b = dn_bg.apply_many(fs)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x.sub(y)).collect())
}

/// Adds i.i.d. complex Gaussian noise of standard deviation `sigma * max|trace|`
/// (so `E|z|^2 = (sigma max|trace|)^2`) to every supported cell.
pub fn add_measurement_noise(trace: &BoundaryTrace, patch: &PartialBoundary, sigma: f64, seed: u64) -> BoundaryTrace {
    if sigma <= 0.0 {
        return trace.clone();
    }
    let s = sigma * trace.norm_inf();
    if s == 0.0 {
        return trace.clone();
    }
    let normal = Normal::new(0.0, s / std::f64::consts::SQRT_2).expect("finite std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = trace.clone();
    for (i, v) in out.values.iter_mut().enumerate() {
        if trace.support == Support::Gamma && !patch.in_gamma(i) {
            continue;
        }
        let re = normal.sample(&mut rng);
        let im = normal.sample(&mut rng);
        *v += Complex64::new(re, im);
    }
    out
}
