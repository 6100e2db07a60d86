//! Probe triads, complex geometrical optics traces and the Faddeev kernel.

use std::f64::consts::PI;
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::forward::{BoundaryTrace, Support};
use crate::medium::PartialBoundary;
use crate::vec3::{cdot, complexify, cross, dot, norm, rdot, scale, sub, CVec3, Vec3};
use crate::{Error, Result};

/// Largest `Re(x.rho)` before traces are flagged as numerically risky.
pub const OVERFLOW_RISK_EXPONENT: f64 = 30.0;
/// Beyond `tau x1 = TAIL_SWITCH` the kernel is summed from its decaying tail,
/// which bounds the cancellation loss in the direct form by `e^12`.
const TAIL_SWITCH: f64 = 12.0;

/// Largest `Re(x.rho)` that still fits a double.
pub const OVERFLOW_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    First,
    Second,
}

/// Orthogonal triad `(eta, k, l)` with `rho1 = eta/2 + i(k+l)/2`, `rho2 = -eta/2 + i(k-l)/2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgoProbe {
    pub k: Vec3,
    pub l: Vec3,
    pub eta: Vec3,
    pub rho1: CVec3,
    pub rho2: CVec3,
}

impl CgoProbe {
    pub fn rho(&self, which: Which) -> CVec3 {
        match which {
            Which::First => self.rho1,
            Which::Second => self.rho2,
        }
    }

    pub fn l_norm(&self) -> f64 {
        norm(&self.l)
    }

    /// Largest deviation from the defining identities.
    pub fn algebra_defect(&self) -> f64 {
        let ik = complexify(&[0.0; 3], &self.k);
        let sum = [self.rho1[0] + self.rho2[0], self.rho1[1] + self.rho2[1], self.rho1[2] + self.rho2[2]];
        let sum_defect = (0..3).map(|i| (sum[i] - ik[i]).norm()).fold(0.0, f64::max);
        let eta2 = dot(&self.eta, &self.eta) - dot(&self.k, &self.k) - dot(&self.l, &self.l);
        [
            cdot(&self.rho1, &self.rho1).norm(),
            cdot(&self.rho2, &self.rho2).norm(),
            sum_defect,
            dot(&self.eta, &self.k).abs(),
            dot(&self.eta, &self.l).abs(),
            dot(&self.k, &self.l).abs(),
            eta2.abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Deterministic probe for target frequency `k` and `|l| = l_norm`.
pub fn make_probe(k: Vec3, l_norm: f64) -> Result<CgoProbe> {
    if !(l_norm >= 0.0) || k.iter().any(|c| !c.is_finite()) || !l_norm.is_finite() {
        return Err(Error::InvalidArgument(format!("probe k = {k:?}, |l| = {l_norm}")));
    }
    let nk = norm(&k);
    if nk == 0.0 && l_norm == 0.0 {
        return Err(Error::DegenerateProbe);
    }
    let e1 = [1.0, 0.0, 0.0];
    let e3 = [0.0, 0.0, 1.0];
    let (l, eta) = if nk > 0.0 {
        let reference = if norm(&cross(&k, &e3)) < 1e-8 * nk { e1 } else { e3 };
        let u = sub(&reference, &scale(dot(&reference, &k) / (nk * nk), &k));
        let u = scale(1.0 / norm(&u), &u);
        let khat = scale(1.0 / nk, &k);
        let eta = scale((nk * nk + l_norm * l_norm).sqrt(), &cross(&khat, &u));
        (scale(l_norm, &u), eta)
    } else {
        (scale(l_norm, &e3), scale(l_norm, &e1))
    };
    let half = |v: &Vec3| scale(0.5, v);
    let kpl = [k[0] + l[0], k[1] + l[1], k[2] + l[2]];
    let kml = [k[0] - l[0], k[1] - l[1], k[2] - l[2]];
    let rho1 = complexify(&half(&eta), &half(&kpl));
    let rho2 = complexify(&scale(-0.5, &eta), &half(&kml));
    Ok(CgoProbe { k, l, eta, rho1, rho2 })
}

// ---------------------------------------------------------------------------
// Boundary traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CgoTraces {
    /// `e^{x.rho}` on Gamma.
    pub value: BoundaryTrace,
    /// `(rho.nu) e^{x.rho}` on Gamma.
    pub flux: BoundaryTrace,
    /// `max Re(x.rho)` over Gamma.
    pub max_exponent: f64,
    /// Set when `max |Re(x.rho)|` exceeds [`OVERFLOW_RISK_EXPONENT`].
    pub overflow_risk: bool,
}

pub fn cgo_exponential(rho: &CVec3, x: &Vec3) -> Complex64 {
    rdot(x, rho).exp()
}

pub fn cgo_boundary_data(probe: &CgoProbe, which: Which, patch: &PartialBoundary) -> Result<CgoTraces> {
    let rho = probe.rho(which);
    let max_abs = patch
        .gamma()
        .iter()
        .map(|&i| rdot(&patch.cells[i].position, &rho).re.abs())
        .fold(0.0, f64::max);
    let max_exponent = patch
        .gamma()
        .iter()
        .map(|&i| rdot(&patch.cells[i].position, &rho).re)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_abs > OVERFLOW_EXPONENT {
        return Err(Error::Overflow { max_exponent: max_abs });
    }
    let value = BoundaryTrace::from_fn(patch, Support::Gamma, |c| cgo_exponential(&rho, &c.position));
    let flux = BoundaryTrace::from_fn(patch, Support::Gamma, |c| {
        rdot(&c.normal, &rho) * cgo_exponential(&rho, &c.position)
    });
    Ok(CgoTraces { value, flux, max_exponent, overflow_risk: max_abs > OVERFLOW_RISK_EXPONENT })
}

// ---------------------------------------------------------------------------
// Faddeev kernel
// ---------------------------------------------------------------------------

/// Resolution of the kernel quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaddeevQuadrature {
    /// Gauss-Legendre points per panel.
    pub order: usize,
    /// Multiplier on the number of panels.
    pub panel_scale: f64,
    /// Largest relative change tolerated between two refinements.
    pub tolerance: f64,
}

impl Default for FaddeevQuadrature {
    fn default() -> Self {
        FaddeevQuadrature { order: 12, panel_scale: 0.5, tolerance: 0.05 }
    }
}

/// `G_rho(x) = int e^{i x.xi} / (|xi|^2 + 2i rho.xi) dxi` for isotropic `rho`.
///
/// Writing `rho = tau (e1 + i e2)` with orthonormal `e1, e2` and `e3 = e1 x e2`,
/// integration by residues reduces the kernel to
///
/// `G(x) = 2 pi^2 e^{tau (x1 + i x2)} [ 1/|x| - int_0^tau J0(r s) e^{-x1 s} ds ]`,
///
/// with `x_i = x.e_i` and `r = (x2^2 + x3^2)^{1/2}`. It satisfies
/// `(Delta - 2 rho.grad) G = -(2 pi)^3 delta`.
#[derive(Debug, Clone)]
pub struct FaddeevKernel {
    tau: f64,
    e1: Vec3,
    e2: Vec3,
    e3: Vec3,
    rule: Vec<(f64, f64)>,
    panel_scale: f64,
}

fn gl_rule(order: usize) -> Vec<(f64, f64)> {
    let n = NonZeroUsize::new(order.max(1)).unwrap();
    GaussLegendre::new(n).as_node_weight_pairs().to_vec()
}

impl FaddeevKernel {
    pub fn new(rho: &CVec3, quad: &FaddeevQuadrature) -> Result<Self> {
        let a = crate::vec3::re(rho);
        let b = crate::vec3::im(rho);
        let na = norm(&a);
        let nb = norm(&b);
        let scale_ = na.max(nb);
        if scale_ == 0.0 {
            return Err(Error::InvalidArgument("rho = 0".into()));
        }
        if cdot(rho, rho).norm() > 1e-10 * scale_ * scale_ {
            return Err(Error::InvalidArgument("rho.rho != 0".into()));
        }
        let e1 = scale(1.0 / na, &a);
        let e2 = scale(1.0 / nb, &b);
        Ok(FaddeevKernel {
            tau: na,
            e1,
            e2,
            e3: cross(&e1, &e2),
            rule: gl_rule(quad.order),
            panel_scale: quad.panel_scale,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn integrate(&self, lo: f64, hi: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
        let w = (hi - lo) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let a = lo + p as f64 * w;
            let mut s = 0.0;
            for &(t, wt) in &self.rule {
                s += wt * f(a + 0.5 * w * (t + 1.0));
            }
            acc += 0.5 * w * s;
        }
        acc
    }

    fn panels(&self, count: f64) -> usize {
        ((count * self.panel_scale).ceil() as usize).max(1)
    }

    fn local(&self, x: &Vec3) -> (f64, f64, f64) {
        let x1 = dot(x, &self.e1);
        let x2 = dot(x, &self.e2);
        let x3 = dot(x, &self.e3);
        (x1, x2, (x2 * x2 + x3 * x3).sqrt())
    }

    /// Kernel value at `x != 0`.
    pub fn eval(&self, x: &Vec3) -> Complex64 {
        let (x1, x2, r) = self.local(x);
        if self.tau * x1 > TAIL_SWITCH {
            self.eval_tail(x1, x2, r)
        } else {
            self.eval_body(x1, x2, r)
        }
    }

    /// `e^{tau x1} / |x| - int_0^tau J0(r s) e^{x1 (tau - s)} ds`, stable for small `tau x1`.
    fn eval_body(&self, x1: f64, x2: f64, r: f64) -> Complex64 {
        let tau = self.tau;
        let len = (x1 * x1 + r * r).sqrt();
        let panels = self.panels((r * tau / PI).max(x1.abs() * tau / 8.0).max(1.0));
        let body = self.integrate(0.0, tau, panels, |s| libm::j0(r * s) * (x1 * (tau - s)).exp());
        Complex64::from_polar(2.0 * PI * PI, tau * x2) * ((tau * x1).exp() / len - body)
    }

    /// `int_0^inf J0(r (tau + u)) e^{-x1 u} du`, free of cancellation for large `tau x1`.
    fn eval_tail(&self, x1: f64, x2: f64, r: f64) -> Complex64 {
        let tau = self.tau;
        let upper = 36.0 / x1;
        let panels = self.panels((r * upper / PI).max(8.0));
        let tail = self.integrate(0.0, upper, panels, |u| libm::j0(r * (tau + u)) * (-x1 * u).exp());
        Complex64::from_polar(2.0 * PI * PI, tau * x2) * tail
    }
}

/// Evaluates `G_rho(x)` and checks it against a refinement with twice the panels.
pub fn faddeev_kernel(rho: &CVec3, x: &Vec3, quad: &FaddeevQuadrature) -> Result<Complex64> {
    if norm(x) == 0.0 {
        return Err(Error::InvalidArgument("x = 0 is the kernel singularity".into()));
    }
    let coarse = FaddeevKernel::new(rho, quad)?.eval(x);
    let fine_quad = FaddeevQuadrature { panel_scale: 2.0 * quad.panel_scale, ..*quad };
    let fine = FaddeevKernel::new(rho, &fine_quad)?.eval(x);
    if (coarse - fine).norm() > quad.tolerance * fine.norm() {
        return Err(Error::QuadratureDiverged { coarse: coarse.to_string(), fine: fine.to_string() });
    }
    Ok(fine)
}
