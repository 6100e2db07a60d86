use helmholtz_cgo::cgo::{
    cgo_boundary_data, cgo_exponential, faddeev_kernel, make_probe, FaddeevKernel, FaddeevQuadrature, Which,
};
use helmholtz_cgo::medium::{boundary_mesh, Domain, Face};
use helmholtz_cgo::vec3::{cdot, dot, CVec3};
use helmholtz_cgo::{Complex64, Error};
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn isotropic(tau: f64) -> CVec3 {
    [c(tau, 0.0), c(0.0, tau), c(0.0, 0.0)]
}

#[test]
fn stated_probe_example() {
    let p = make_probe([2.0, 0.0, 0.0], 4.0).unwrap();
    let s5 = 5f64.sqrt();
    assert_eq!(p.l, [0.0, 0.0, 4.0]);
    for (a, b) in p.eta.iter().zip([0.0, -20f64.sqrt(), 0.0]) {
        assert!((a - b).abs() < 1e-14);
    }
    let want = [c(0.0, 1.0), c(-s5, 0.0), c(0.0, 2.0)];
    for (a, b) in p.rho1.iter().zip(want) {
        assert!((a - b).norm() < 1e-14);
    }
    assert!(cdot(&p.rho1, &p.rho1).norm() < 1e-12);
}

#[test]
fn zero_frequency_and_degenerate_probes() {
    let p = make_probe([0.0; 3], 1.0).unwrap();
    for i in 0..3 {
        assert!((p.rho1[i] + p.rho2[i]).norm() < 1e-15);
    }
    assert!(matches!(make_probe([0.0; 3], 0.0), Err(Error::DegenerateProbe)));
}

#[test]
fn boundary_data_on_a_face() {
    let d = Domain::unit(12).unwrap();
    let patch = boundary_mesh(&d, &[Face::XPlus, Face::YMinus]).unwrap();
    let p = make_probe([0.0; 3], 1.0).unwrap();
    let t = cgo_boundary_data(&p, Which::First, &patch).unwrap();
    let want = c(p.eta[0] / 2.0, p.l[0] / 2.0);
    for &i in patch.gamma() {
        let cell = &patch.cells[i];
        if cell.face == Face::XPlus {
            let e = cgo_exponential(&p.rho1, &cell.position);
            assert!((t.flux.values[i] / e - want).norm() < 1e-12);
        }
    }
    for i in 0..patch.len() {
        if !patch.in_gamma(i) {
            assert_eq!(t.value.values[i], c(0.0, 0.0));
            assert_eq!(t.flux.values[i], c(0.0, 0.0));
        }
    }
    assert!(!t.overflow_risk);
    let big = make_probe([0.0; 3], 200.0).unwrap();
    let hot = cgo_boundary_data(&big, Which::First, &patch).unwrap();
    assert!(hot.overflow_risk && hot.max_exponent > 30.0);
    let huge = make_probe([0.0; 3], 5000.0).unwrap();
    assert!(matches!(cgo_boundary_data(&huge, Which::First, &patch), Err(Error::Overflow { .. })));
}

/// `4 pi int_0^inf sin(r s) / (r s) dr = 2 pi^2 / s`, by panel quadrature of `Si` with an
/// asymptotic tail.
fn radial_oracle(s: f64) -> f64 {
    let t_max = 400.0 * std::f64::consts::PI;
    let panels = 4000;
    let (nodes, weights) = ([-0.906179845938664, -0.538469310105683, 0.0, 0.538469310105683, 0.906179845938664],
        [0.236926885056189, 0.478628670499366, 0.568888888888889, 0.478628670499366, 0.236926885056189]);
    let w = t_max / panels as f64;
    let mut si = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * w;
        for (x, wt) in nodes.iter().zip(weights) {
            let t = mid + 0.5 * w * x;
            si += 0.5 * w * wt * t.sin() / t;
        }
    }
    si += t_max.cos() / t_max;
    4.0 * std::f64::consts::PI * si / s
}

#[test]
fn small_rho_limit_matches_radial_oracle() {
    let q = FaddeevQuadrature::default();
    let rho = isotropic(1e-3 / 2f64.sqrt());
    for s in [0.3, 0.5, 0.7, 1.0] {
        for dir in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.48, 0.6, 0.64]] {
            let x = [s * dir[0], s * dir[1], s * dir[2]];
            let g = faddeev_kernel(&rho, &x, &q).unwrap();
            let o = radial_oracle(s);
            assert!((g - o).norm() / o < 0.05, "s {s}: {g} vs {o}");
        }
    }
}

#[test]
fn reflection_fixing_rho_leaves_kernel_unchanged() {
    let q = FaddeevQuadrature::default();
    let k = FaddeevKernel::new(&isotropic(2f64.sqrt()), &q).unwrap();
    for x in [[0.3, -0.2, 0.4], [-0.5, 0.1, 0.2], [0.05, 0.4, -0.3]] {
        let a = k.eval(&x);
        let b = k.eval(&[x[0], x[1], -x[2]]);
        assert!((a - b).norm() <= 1e-12 * a.norm());
    }
}

#[test]
fn kernel_satisfies_conjugated_laplace_equation() {
    // Our convention: (Delta - 2 rho.grad) G = -(2 pi)^3 delta.
    let q = FaddeevQuadrature::default();
    let rho = isotropic(2f64.sqrt());
    let k = FaddeevKernel::new(&rho, &q).unwrap();
    let step = 2e-3;
    for dir in [[1.0, 0.0, 0.0], [-0.6, 0.8, 0.0], [0.0, 0.6, -0.8], [0.48, -0.6, 0.64]] {
        let x = [0.5 * dir[0], 0.5 * dir[1], 0.5 * dir[2]];
        let g0 = k.eval(&x);
        let mut lap = -6.0 * g0;
        let mut drift = c(0.0, 0.0);
        for ax in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[ax] += step;
            xm[ax] -= step;
            let (gp, gm) = (k.eval(&xp), k.eval(&xm));
            lap += gp + gm;
            drift += rho[ax] * (gp - gm) / (2.0 * step);
        }
        let res = lap / (step * step) - 2.0 * drift;
        assert!(res.norm() <= 1e-2 * g0.norm(), "residual {} vs |G| {}", res.norm(), g0.norm());
    }
}

#[test]
fn refinement_check_accepts_default_rule() {
    let q = FaddeevQuadrature::default();
    let rho = isotropic(5.0);
    assert!(faddeev_kernel(&rho, &[0.2, -0.3, 0.1], &q).is_ok());
    assert!(faddeev_kernel(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)], &[0.2, 0.0, 0.0], &q).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn probe_algebra_holds(kx in -10.0f64..10.0, ky in -10.0f64..10.0, kz in -10.0f64..10.0, l in 0.1f64..30.0) {
        let p = make_probe([kx, ky, kz], l).unwrap();
        let scale = (kx * kx + ky * ky + kz * kz + l * l).max(1.0);
        prop_assert!(p.algebra_defect() <= 1e-12 * scale);
        prop_assert!((p.l_norm() - l).abs() <= 1e-12 * l);
        let again = make_probe([kx, ky, kz], l).unwrap();
        prop_assert_eq!(format!("{:?}", p), format!("{:?}", again));
    }

    #[test]
    fn trace_product_is_plane_wave(kx in -6.0f64..6.0, ky in -6.0f64..6.0, kz in -6.0f64..6.0, l in 0.5f64..16.0,
                                   x in -0.5f64..0.5, y in -0.5f64..0.5, z in -0.5f64..0.5) {
        let p = make_probe([kx, ky, kz], l).unwrap();
        let pt = [x, y, z];
        let prod = cgo_exponential(&p.rho1, &pt) * cgo_exponential(&p.rho2, &pt);
        let want = c(0.0, dot(&p.k, &pt)).exp();
        prop_assert!((prod - want).norm() <= 1e-12);
        let modulus = cgo_exponential(&p.rho1, &pt).norm();
        prop_assert!((modulus / (dot(&p.eta, &pt) / 2.0).exp() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn cgo_exponential_is_discretely_harmonic(kx in -4.0f64..4.0, kz in -4.0f64..4.0, l in 1.0f64..8.0) {
        let p = make_probe([kx, 0.0, kz], l).unwrap();
        let h = 1.0 / 64.0;
        let x = [0.1, -0.2, 0.15];
        let e = |q: [f64; 3]| cgo_exponential(&p.rho1, &q);
        let mut lap = -6.0 * e(x);
        for ax in 0..3 {
            let mut a = x;
            let mut b = x;
            a[ax] += h;
            b[ax] -= h;
            lap += e(a) + e(b);
        }
        lap /= h * h;
        let r2: f64 = p.rho1.iter().map(|r| r.norm_sqr()).sum();
        prop_assert!(lap.norm() <= h * h * r2 * r2 * e(x).norm());
    }
}
