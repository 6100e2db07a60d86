//! Fourier data functional, k-grid scans, localization and value recovery.
//!
//! For a probe pair `(rho1, rho2)` targeting `k`, the data functional is
//!
//! `D(k) = kappa int_Gamma u (Lambda_alpha - Lambda) v ds`,
//!
//! which approaches `int (n - n_alpha) e^{ik.x} dx` as `|l|` grows. Path B uses
//! `u = e^{x.rho1}`, `v = e^{x.rho2}`; path A replaces them by boundary
//! integral solutions. Inclusion centers are peaks of
//! `I(x) = sum_k D(k) e^{-ik.x}`.

use std::sync::OnceLock;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundary_ops::{assemble_n_rho, lemma1_solve_with_matrix, TikhonovSolver, DEFAULT_LAMBDA_REL};
use crate::cgo::{cgo_boundary_data, make_probe, CgoProbe, Which};
use crate::forward::{add_measurement_noise, BoundaryTrace, DnMap};
use crate::medium::{build_perturbed_index, Domain, PartialBoundary, RefractiveMedium};
use crate::vec3::{dist, dot, norm, Vec3};
use crate::{Error, Result};

/// Relative level of the no-inclusion data functional treated as numerical zero.
pub const NULL_LEVEL: f64 = 1e-12;
/// Largest tolerated fraction of failed k-samples in a scan.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;
/// Largest admissible condition of the exponential design matrix.
pub const MAX_DESIGN_CONDITION: f64 = 1e10;

const BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TracePath {
    A,
    B,
}

impl std::fmt::Display for TracePath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TracePath::A => "A",
            TracePath::B => "B",
        })
    }
}

/// Candidate overall normalizations of the data functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kappa {
    One,
    InvOmegaSq,
    OmegaSq,
}

impl Kappa {
    pub const ALL: [Kappa; 3] = [Kappa::One, Kappa::InvOmegaSq, Kappa::OmegaSq];

    pub fn factor(self, omega: f64) -> f64 {
        match self {
            Kappa::One => 1.0,
            Kappa::InvOmegaSq => 1.0 / (omega * omega),
            Kappa::OmegaSq => omega * omega,
        }
    }
}

// ---------------------------------------------------------------------------
// k-grids and samples
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KMask {
    Cube,
    Ball,
}

/// Symmetric tensor grid `{-kmax, ..., kmax}^3`, optionally clipped to `|k| <= kmax`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KGrid {
    pub kmax: f64,
    pub per_axis: usize,
    pub mask: KMask,
}

impl KGrid {
    pub fn validate(&self) -> Result<()> {
        if self.per_axis < 3 || self.per_axis % 2 == 0 {
            return Err(Error::InvalidArgument(format!("per-axis count {} must be odd and >= 3", self.per_axis)));
        }
        if !(self.kmax > 0.0 && self.kmax.is_finite()) {
            return Err(Error::InvalidArgument(format!("kmax = {}", self.kmax)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.kmax / (self.per_axis - 1) as f64
    }

    /// Axis values, exactly antisymmetric.
    pub fn axis(&self) -> Vec<f64> {
        let half = (self.per_axis / 2) as i64;
        (-half..=half).map(|i| i as f64 * self.kmax / half as f64).collect()
    }

    /// Nodes in lexicographic order (first component slowest).
    pub fn nodes(&self) -> Result<Vec<Vec3>> {
        self.validate()?;
        let ax = self.axis();
        let mut out = Vec::new();
        for &a in &ax {
            for &b in &ax {
                for &c in &ax {
                    let k = [a, b, c];
                    if self.mask == KMask::Ball && norm(&k) > self.kmax * (1.0 + 1e-12) {
                        continue;
                    }
                    out.push(k);
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub l_norm: f64,
    pub path: TracePath,
    pub sigma: f64,
    pub omega: f64,
    pub kappa: Kappa,
    pub seed: u64,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSample {
    pub k: Vec3,
    pub value: Complex64,
    /// `|kappa| ||u||_Gamma ||Lambda v||_Gamma`, the size of the terms that cancel in `D`.
    pub scale: f64,
    pub overflow_risk: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierSamples {
    pub kgrid: Vec<Vec3>,
    pub values: Vec<Complex64>,
    pub scales: Vec<f64>,
    pub meta: SampleMeta,
}

impl FourierSamples {
    /// Exact samples `D(k) = sum_j c_j e^{ik.z_j}` with unit scales.
    pub fn synthetic(kgrid: Vec<Vec3>, terms: &[(Vec3, Complex64)]) -> Self {
        let values = kgrid
            .iter()
            .map(|k| terms.iter().map(|(z, c)| c * Complex64::from_polar(1.0, dot(k, z))).sum())
            .collect();
        let n = kgrid.len();
        FourierSamples {
            kgrid,
            values,
            scales: vec![1.0; n],
            meta: SampleMeta {
                l_norm: f64::INFINITY,
                path: TracePath::B,
                sigma: 0.0,
                omega: 1.0,
                kappa: Kappa::One,
                seed: 0,
                failures: 0,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.kgrid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kgrid.is_empty()
    }

    /// Every node has its mirror image in the grid.
    pub fn is_symmetric(&self) -> bool {
        self.kgrid.iter().all(|k| {
            let m = [-k[0], -k[1], -k[2]];
            self.kgrid.iter().any(|q| dist(q, &m) <= 1e-12 * (1.0 + norm(k)))
        })
    }

    pub fn value_at(&self, k: &Vec3) -> Option<Complex64> {
        self.kgrid.iter().position(|q| dist(q, k) <= 1e-12 * (1.0 + norm(k))).map(|i| self.values[i])
    }

    /// Subset with `|k| <= kmax`.
    pub fn within(&self, kmax: f64) -> FourierSamples {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| norm(&self.kgrid[i]) <= kmax * (1.0 + 1e-12)).collect();
        FourierSamples {
            kgrid: keep.iter().map(|&i| self.kgrid[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
            scales: keep.iter().map(|&i| self.scales[i]).collect(),
            meta: self.meta.clone(),
        }
    }

    /// Same samples rescaled from normalization `self.meta.kappa` to `kappa`.
    pub fn renormalized(&self, kappa: Kappa) -> FourierSamples {
        let r = kappa.factor(self.meta.omega) / self.meta.kappa.factor(self.meta.omega);
        FourierSamples {
            kgrid: self.kgrid.clone(),
            values: self.values.iter().map(|v| v * r).collect(),
            scales: self.scales.iter().map(|s| s * r.abs()).collect(),
            meta: SampleMeta { kappa, ..self.meta.clone() },
        }
    }
}

// ---------------------------------------------------------------------------
// Data functional
// ---------------------------------------------------------------------------

/// Measurement setup shared by all k-samples.
pub struct FourierContext {
    pub dn_pert: DnMap,
    pub dn_bg: DnMap,
    pub l_norm: f64,
    pub path: TracePath,
    pub kappa: Kappa,
    /// Noise level applied to the DN-difference traces.
    pub sigma: f64,
    pub seed: u64,
    /// Tikhonov level for the path-A operators.
    pub lambda_rel: f64,
    gamma_pert: OnceLock<Mat<f64>>,
    gamma_bg: OnceLock<Mat<f64>>,
}

impl FourierContext {
    pub fn new(dn_pert: DnMap, dn_bg: DnMap, l_norm: f64, path: TracePath) -> Result<Self> {
        if !dn_pert.patch.same_layout(&dn_bg.patch) || dn_pert.system.domain() != dn_bg.system.domain() {
            return Err(Error::GridMismatch("perturbed and background DN maps differ in layout".into()));
        }
        Ok(FourierContext {
            dn_pert,
            dn_bg,
            l_norm,
            path,
            kappa: Kappa::InvOmegaSq,
            sigma: 0.0,
            seed: 0,
            lambda_rel: DEFAULT_LAMBDA_REL,
            gamma_pert: OnceLock::new(),
            gamma_bg: OnceLock::new(),
        })
    }

    /// Builds both DN maps for `medium` on `patch`.
    pub fn from_medium(
        medium: &RefractiveMedium,
        patch: std::sync::Arc<PartialBoundary>,
        omega: f64,
        l_norm: f64,
        path: TracePath,
    ) -> Result<Self> {
        let pert = build_perturbed_index(medium)?;
        let dn_pert = DnMap::build(&pert, omega, patch.clone())?;
        let dn_bg = DnMap::build(&medium.background_field(), omega, patch)?;
        FourierContext::new(dn_pert, dn_bg, l_norm, path)
    }

    pub fn with_kappa(mut self, kappa: Kappa) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn with_noise(mut self, sigma: f64, seed: u64) -> Self {
        self.sigma = sigma;
        self.seed = seed;
        self
    }

    pub fn omega(&self) -> f64 {
        self.dn_bg.system.omega()
    }

    pub fn patch(&self) -> &PartialBoundary {
        &self.dn_bg.patch
    }

    fn meta(&self, failures: usize) -> SampleMeta {
        SampleMeta {
            l_norm: self.l_norm,
            path: self.path,
            sigma: self.sigma,
            omega: self.omega(),
            kappa: self.kappa,
            seed: self.seed,
            failures,
        }
    }

    /// Per-frequency noise seed; depends only on the run seed and `k`.
    pub fn noise_seed(&self, k: &Vec3) -> u64 {
        let mut h = self.seed ^ 0x9e37_79b9_7f4a_7c15;
        for c in k {
            h = splitmix(h ^ c.to_bits());
        }
        h
    }

    /// `(Lambda_alpha - Lambda) v` with measurement noise when configured.
    pub fn measured_difference(&self, k: &Vec3, v: &BoundaryTrace) -> Result<(BoundaryTrace, BoundaryTrace)> {
        let mut out = self.measured_difference_many(&[(*k, v.clone())])?;
        Ok(out.pop().unwrap())
    }

    /// Batched DN differences; returns `(difference, background response)` pairs.
    fn measured_difference_many(&self, items: &[(Vec3, BoundaryTrace)]) -> Result<Vec<(BoundaryTrace, BoundaryTrace)>> {
        let vs: Vec<BoundaryTrace> = items.iter().map(|(_, v)| v.clone()).collect();
        let a = self.dn_pert.apply_many(&vs)?;
        let b = self.dn_bg.apply_many(&vs)?;
        Ok(items
            .iter()
            .zip(a.iter().zip(b))
            .map(|((k, _), (pa, pb))| {
                let diff = add_measurement_noise(&pa.sub(&pb), self.patch(), self.sigma, self.noise_seed(k));
                (diff, pb)
            })
            .collect())
    }

    fn path_a_traces(&self, probe: &CgoProbe) -> Result<(BoundaryTrace, BoundaryTrace)> {
        let patch = self.patch();
        let gp = self.gamma_pert.get_or_init(|| self.dn_pert.gamma_matrix());
        let gb = self.gamma_bg.get_or_init(|| self.dn_bg.gamma_matrix());
        let n1 = assemble_n_rho(probe, Which::First, patch, self.lambda_rel)?;
        let n2 = assemble_n_rho(probe, Which::Second, patch, self.lambda_rel)?;
        let u = lemma1_solve_with_matrix(gp, patch, &n1, probe, self.lambda_rel)?.trace;
        let v = lemma1_solve_with_matrix(gb, patch, &n2, probe, self.lambda_rel)?.trace;
        Ok((u, v))
    }

    fn traces(&self, probe: &CgoProbe) -> Result<(BoundaryTrace, BoundaryTrace, bool)> {
        let patch = self.patch();
        let t1 = cgo_boundary_data(probe, Which::First, patch)?;
        let t2 = cgo_boundary_data(probe, Which::Second, patch)?;
        let risk = t1.overflow_risk || t2.overflow_risk;
        match self.path {
            TracePath::B => Ok((t1.value, t2.value, risk)),
            TracePath::A => {
                let (u, v) = self.path_a_traces(probe)?;
                Ok((u, v, risk))
            }
        }
    }

    fn finish(&self, k: Vec3, u: &BoundaryTrace, diff: &BoundaryTrace, bg: &BoundaryTrace, risk: bool) -> FourierSample {
        let patch = self.patch();
        let kap = self.kappa.factor(self.omega());
        FourierSample {
            k,
            value: u.bilinear(diff, patch) * kap,
            scale: kap.abs() * u.norm_gamma(patch) * bg.norm_gamma(patch),
            overflow_risk: risk,
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One value of the data functional at the frequency targeted by `probe`.
pub fn fourier_sample(ctx: &FourierContext, probe: &CgoProbe) -> Result<FourierSample> {
    let (u, v, risk) = ctx.traces(probe)?;
    let (diff, bg) = ctx.measured_difference(&probe.k, &v)?;
    Ok(ctx.finish(probe.k, &u, &diff, &bg, risk))
}

fn sample_batch(ctx: &FourierContext, ks: &[Vec3]) -> Vec<Result<FourierSample>> {
    let mut prepared = Vec::with_capacity(ks.len());
    let mut out: Vec<Option<Result<FourierSample>>> = (0..ks.len()).map(|_| None).collect();
    for (i, k) in ks.iter().enumerate() {
        match make_probe(*k, ctx.l_norm).and_then(|p| ctx.traces(&p)) {
            Ok(t) => prepared.push((i, t)),
            Err(e) => out[i] = Some(Err(e)),
        }
    }
    let items: Vec<(Vec3, BoundaryTrace)> = prepared.iter().map(|(i, (_, v, _))| (ks[*i], v.clone())).collect();
    match ctx.measured_difference_many(&items) {
        Ok(diffs) => {
            for ((i, (u, _, risk)), (diff, bg)) in prepared.iter().zip(diffs) {
                out[*i] = Some(Ok(ctx.finish(ks[*i], u, &diff, &bg, *risk)));
            }
        }
        Err(e) => {
            let msg = e.to_string();
            for (i, _) in &prepared {
                out[*i] = Some(Err(Error::Factorization(msg.clone())));
            }
        }
    }
    out.into_iter().map(|o| o.unwrap()).collect()
}

/// Samples the data functional on `grid`; parallel over batches, ordered output.
pub fn scan_kgrid(ctx: &FourierContext, grid: &KGrid) -> Result<FourierSamples> {
    scan_nodes(ctx, &grid.nodes()?)
}

pub fn scan_nodes(ctx: &FourierContext, nodes: &[Vec3]) -> Result<FourierSamples> {
    let results: Vec<Result<FourierSample>> = nodes
        .par_chunks(BATCH)
        .map(|chunk| sample_batch(ctx, chunk))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    let total = results.len();
    let mut first = None;
    let mut kgrid = Vec::with_capacity(total);
    let mut values = Vec::with_capacity(total);
    let mut scales = Vec::with_capacity(total);
    let mut failed = 0;
    for r in results {
        match r {
            Ok(s) => {
                kgrid.push(s.k);
                values.push(s.value);
                scales.push(s.scale);
            }
            Err(e) => {
                failed += 1;
                first.get_or_insert(e.to_string());
            }
        }
    }
    if failed as f64 > MAX_FAILURE_FRACTION * total as f64 {
        return Err(Error::ScanFailed { failed, total, first: first.unwrap_or_default() });
    }
    Ok(FourierSamples { kgrid, values, scales, meta: ctx.meta(failed) })
}

// ---------------------------------------------------------------------------
// Oracle
// ---------------------------------------------------------------------------

/// Voxel quadrature of `int (n - n_alpha) e^{ik.x} dx` and its small-`alpha` limit.
#[derive(Debug, Clone)]
pub struct FourierOracle {
    cell_volume: f64,
    /// Nonzero voxels of `n - n_alpha`.
    pub voxels: Vec<(Vec3, f64)>,
    /// `(z_j, alpha^3 (n(z_j) - n_j) |B_j|)`.
    pub terms: Vec<(Vec3, f64)>,
}

pub fn oracle_fourier(medium: &RefractiveMedium) -> Result<FourierOracle> {
    let pert = build_perturbed_index(medium)?;
    let bg = medium.background_field();
    let d = medium.domain;
    let voxels = (0..d.n_interior())
        .filter_map(|p| {
            let diff = bg.values[p] - pert.values[p];
            (diff != 0.0).then(|| (d.interior_point(d.unindex(p)), diff))
        })
        .collect();
    let terms = (0..medium.inclusions.len())
        .map(|j| (medium.inclusions[j].center, medium.contrast_coefficient(j)))
        .collect();
    Ok(FourierOracle { cell_volume: d.h().powi(3), voxels, terms })
}

impl FourierOracle {
    pub fn quadrature(&self, k: &Vec3) -> Complex64 {
        self.voxels.iter().map(|(x, v)| Complex64::from_polar(v * self.cell_volume, dot(k, x))).sum()
    }

    pub fn small_alpha(&self, k: &Vec3) -> Complex64 {
        self.terms.iter().map(|(z, c)| Complex64::from_polar(*c, dot(k, z))).sum()
    }
}

/// Median relative error of `kappa * raw` against the oracle for each candidate.
#[derive(Debug, Clone, Serialize)]
pub struct KappaCalibration {
    pub chosen: Kappa,
    pub errors: Vec<(Kappa, f64)>,
}

/// Picks the normalization that best matches the oracle; `raw` must use `Kappa::One`.
pub fn calibrate_kappa(raw: &FourierSamples, oracle: &FourierOracle) -> KappaCalibration {
    let omega = raw.meta.omega;
    let base = raw.meta.kappa.factor(omega);
    let mut errors = Vec::new();
    for kappa in Kappa::ALL {
        let f = kappa.factor(omega) / base;
        let mut rel: Vec<f64> = raw
            .kgrid
            .iter()
            .zip(&raw.values)
            .map(|(k, v)| {
                let o = oracle.quadrature(k);
                (v * f - o).norm() / o.norm()
            })
            .collect();
        rel.sort_by(f64::total_cmp);
        errors.push((kappa, rel.get(rel.len() / 2).copied().unwrap_or(f64::INFINITY)));
    }
    let chosen = errors.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|e| e.0).unwrap_or(Kappa::InvOmegaSq);
    KappaCalibration { chosen, errors }
}

// ---------------------------------------------------------------------------
// Localization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeParams {
    /// Minimum separation of accepted peaks.
    pub c0: f64,
    /// Relative peak threshold.
    pub threshold: f64,
    /// Sub-voxel parabolic refinement.
    pub refine: bool,
}

impl Default for LocalizeParams {
    fn default() -> Self {
        LocalizeParams { c0: 0.15, threshold: 0.5, refine: true }
    }
}

#[derive(Debug, Clone)]
pub struct Localization {
    pub domain: Domain,
    /// `I(x)` on the interior nodes.
    pub volume: Vec<Complex64>,
    pub centers: Vec<Vec3>,
    pub peak_values: Vec<f64>,
    pub max_abs: f64,
}

impl Localization {
    pub fn magnitude(&self) -> Vec<f64> {
        self.volume.iter().map(|v| v.norm()).collect()
    }
}

/// `I(x) = sum_k D(k) e^{-ik.x}` on the interior nodes.
pub fn synthesize(samples: &FourierSamples, domain: &Domain) -> Vec<Complex64> {
    let m = domain.m();
    let xs: Vec<f64> = (0..m).map(|i| domain.interior(i)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); domain.n_interior()];
    let mut ex = vec![Complex64::new(0.0, 0.0); m];
    let mut ey = ex.clone();
    let mut ez = ex.clone();
    for (k, d) in samples.kgrid.iter().zip(&samples.values) {
        for i in 0..m {
            ex[i] = Complex64::from_polar(1.0, -k[0] * xs[i]) * d;
            ey[i] = Complex64::from_polar(1.0, -k[1] * xs[i]);
            ez[i] = Complex64::from_polar(1.0, -k[2] * xs[i]);
        }
        for i in 0..m {
            for j in 0..m {
                let a = ex[i] * ey[j];
                let row = &mut out[(i * m + j) * m..(i * m + j + 1) * m];
                for (o, z) in row.iter_mut().zip(&ez) {
                    *o += a * z;
                }
            }
        }
    }
    out
}

pub fn invert_and_localize(samples: &FourierSamples, domain: &Domain, params: &LocalizeParams) -> Result<Localization> {
    let volume = synthesize(samples, domain);
    let mag: Vec<f64> = volume.iter().map(|v| v.norm()).collect();
    let max_abs = mag.iter().copied().fold(0.0, f64::max);
    let floor = NULL_LEVEL * samples.scales.iter().sum::<f64>();
    if !(max_abs > 10.0 * floor) {
        return Err(Error::NoPeaks { max: max_abs, floor: 10.0 * floor });
    }
    let m = domain.m();
    let mut candidates = Vec::new();
    for p in 0..mag.len() {
        if mag[p] < params.threshold * max_abs {
            continue;
        }
        let [i, j, k] = domain.unindex(p);
        let mut is_max = true;
        'nb: for di in -1i64..=1 {
            for dj in -1i64..=1 {
                for dk in -1i64..=1 {
                    if di == 0 && dj == 0 && dk == 0 {
                        continue;
                    }
                    let q = [i as i64 + di, j as i64 + dj, k as i64 + dk];
                    if q.iter().any(|&c| c < 0 || c >= m as i64) {
                        continue;
                    }
                    let qi = domain.index([q[0] as usize, q[1] as usize, q[2] as usize]);
                    if mag[qi] > mag[p] || (mag[qi] == mag[p] && qi < p) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
        }
        if is_max {
            candidates.push(p);
        }
    }
    candidates.sort_by(|a, b| mag[*b].total_cmp(&mag[*a]).then(a.cmp(b)));
    let mut centers: Vec<Vec3> = Vec::new();
    let mut peak_values = Vec::new();
    for p in candidates {
        let x = if params.refine { refine_peak(&mag, domain, p) } else { domain.interior_point(domain.unindex(p)) };
        if centers.iter().all(|c| dist(c, &x) >= params.c0) {
            centers.push(x);
            peak_values.push(mag[p]);
        }
    }
    Ok(Localization { domain: *domain, volume, centers, peak_values, max_abs })
}

fn refine_peak(mag: &[f64], domain: &Domain, p: usize) -> Vec3 {
    let ijk = domain.unindex(p);
    let mut x = domain.interior_point(ijk);
    let h = domain.h();
    for ax in 0..3 {
        if ijk[ax] == 0 || ijk[ax] + 1 >= domain.m() {
            continue;
        }
        let mut lo = ijk;
        let mut hi = ijk;
        lo[ax] -= 1;
        hi[ax] += 1;
        let (fm, f0, fp) = (mag[domain.index(lo)], mag[p], mag[domain.index(hi)]);
        let curv = fm - 2.0 * f0 + fp;
        if curv < 0.0 {
            x[ax] += (0.5 * (fm - fp) / curv).clamp(-0.5, 0.5) * h;
        }
    }
    x
}

/// Sharpens centers by deflation: each center is relocated on the synthesis of
/// the samples with the fitted contributions of all other centers removed.
///
/// Removes the mutual side-lobe pull between nearby peaks.
pub fn refine_centers(samples: &FourierSamples, domain: &Domain, centers: &[Vec3], iterations: usize) -> Result<Vec<Vec3>> {
    let mut z = centers.to_vec();
    if z.len() < 2 {
        return Ok(z);
    }
    let h = domain.h();
    let m = domain.m() as i64;
    for _ in 0..iterations {
        let c = fit_coefficients(samples, &z)?;
        let mut next = z.clone();
        for j in 0..z.len() {
            let resid: Vec<Complex64> = samples
                .kgrid
                .iter()
                .zip(&samples.values)
                .map(|(k, d)| {
                    d - (0..z.len())
                        .filter(|&i| i != j)
                        .map(|i| c[i] * Complex64::from_polar(1.0, dot(k, &z[i])))
                        .sum::<Complex64>()
                })
                .collect();
            let eval = |x: &Vec3| -> f64 {
                samples
                    .kgrid
                    .iter()
                    .zip(&resid)
                    .map(|(k, r)| r * Complex64::from_polar(1.0, -dot(k, x)))
                    .sum::<Complex64>()
                    .norm()
            };
            // search the nodes within two voxels of the current estimate
            let base: Vec<i64> = (0..3).map(|ax| ((z[j][ax] + domain.half_side()) / h).round() as i64 - 1).collect();
            let mut best = (f64::NEG_INFINITY, [0i64; 3]);
            for di in -2..=2 {
                for dj in -2..=2 {
                    for dk in -2..=2 {
                        let q = [base[0] + di, base[1] + dj, base[2] + dk];
                        if q.iter().any(|&v| v < 0 || v >= m) {
                            continue;
                        }
                        let v = eval(&domain.interior_point([q[0] as usize, q[1] as usize, q[2] as usize]));
                        if v > best.0 {
                            best = (v, q);
                        }
                    }
                }
            }
            let q = best.1;
            let mut x = domain.interior_point([q[0] as usize, q[1] as usize, q[2] as usize]);
            for ax in 0..3 {
                let mut lo = x;
                let mut hi = x;
                lo[ax] -= h;
                hi[ax] += h;
                let (fm, f0, fp) = (eval(&lo), best.0, eval(&hi));
                let curv = fm - 2.0 * f0 + fp;
                if curv < 0.0 {
                    x[ax] += (0.5 * (fm - fp) / curv).clamp(-0.5, 0.5) * h;
                }
            }
            next[j] = x;
        }
        z = next;
    }
    Ok(z)
}

fn fit_coefficients(samples: &FourierSamples, centers: &[Vec3]) -> Result<Vec<Complex64>> {
    let e = Mat::from_fn(samples.len(), centers.len(), |i, j| {
        Complex64::from_polar(1.0, dot(&samples.kgrid[i], &centers[j]))
    });
    let solver = TikhonovSolver::new(&e)?;
    let d = Mat::from_fn(samples.len(), 1, |i, _| samples.values[i]);
    let sol = solver.solve(&d, 0.0);
    Ok((0..centers.len()).map(|j| sol.x[(j, 0)]).collect())
}

// ---------------------------------------------------------------------------
// Value recovery
// ---------------------------------------------------------------------------

/// Known quantities needed to turn a coefficient into an index value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValuePrior {
    pub alpha: f64,
    pub unit_volume: f64,
    /// Background index at the center.
    pub background: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValueRecovery {
    /// Estimates of `alpha^3 (n(z_j) - n_j) |B_j|`.
    pub coefficients: Vec<Complex64>,
    pub index_estimates: Vec<f64>,
    /// `||E c - D|| / ||D||`.
    pub residual: f64,
    pub condition: f64,
}

/// Least squares `D(k) ~ sum_j c_j e^{ik.z_j}`, then `n_j = n(z_j) - Re c_j / (alpha^3 |B_j|)`.
pub fn recover_values(samples: &FourierSamples, centers: &[Vec3], priors: &[ValuePrior]) -> Result<ValueRecovery> {
    if centers.is_empty() {
        return Err(Error::InvalidArgument("no centers".into()));
    }
    if centers.len() != priors.len() {
        return Err(Error::InvalidArgument("one prior per center required".into()));
    }
    if samples.len() < centers.len() {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let e = Mat::from_fn(samples.len(), centers.len(), |i, j| {
        Complex64::from_polar(1.0, dot(&samples.kgrid[i], &centers[j]))
    });
    let solver = TikhonovSolver::new(&e)?;
    let smin = solver.sigma_min();
    let condition = if smin > 0.0 { solver.sigma_max() / smin } else { f64::INFINITY };
    if !(condition <= MAX_DESIGN_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let d = Mat::from_fn(samples.len(), 1, |i, _| samples.values[i]);
    let sol = solver.solve(&d, 0.0);
    let coefficients: Vec<Complex64> = (0..centers.len()).map(|j| sol.x[(j, 0)]).collect();
    let index_estimates = coefficients
        .iter()
        .zip(priors)
        .map(|(c, p)| p.background - c.re / (p.alpha.powi(3) * p.unit_volume))
        .collect();
    Ok(ValueRecovery { coefficients, index_estimates, residual: sol.relative_residual, condition })
}

// ---------------------------------------------------------------------------
// Data-independent diagnostic
// ---------------------------------------------------------------------------

/// `-(sqrt 2 / omega^2) int_Gamma |eta|^-2 (eta.nu)^3 e^{ik.x} ds`.
pub fn theorem1_diagnostic(patch: &PartialBoundary, k: &Vec3, eta: &Vec3, omega: f64) -> Result<Complex64> {
    let ne = norm(eta);
    if ne == 0.0 {
        return Err(Error::InvalidArgument("eta = 0".into()));
    }
    if dot(eta, k).abs() > 1e-10 * ne * norm(k).max(1.0) {
        return Err(Error::InvalidArgument("eta.k != 0".into()));
    }
    let sum: Complex64 = patch
        .gamma()
        .iter()
        .map(|&i| {
            let c = &patch.cells[i];
            let en = dot(eta, &c.normal);
            Complex64::from_polar(c.weight * en * en * en / (ne * ne), dot(k, &c.position))
        })
        .sum();
    Ok(sum * (-std::f64::consts::SQRT_2 / (omega * omega)))
}
