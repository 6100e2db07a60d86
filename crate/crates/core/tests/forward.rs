use std::sync::Arc;

use helmholtz_cgo::cgo::{cgo_boundary_data, make_probe, Which};
use helmholtz_cgo::forward::{
    add_measurement_noise, dn_difference_apply, BoundaryTrace, DnMap, HelmholtzSystem, Support,
};
use helmholtz_cgo::medium::{
    boundary_mesh, build_perturbed_index, Domain, Face, Inclusion, PartialBoundary, RefractiveMedium, Shape, VoxelField,
};
use helmholtz_cgo::pipeline::dn_symmetry_defect;
use helmholtz_cgo::{Complex64, Error};
use proptest::prelude::*;
use rayon::prelude::*;

fn full(n: usize) -> (Domain, Arc<PartialBoundary>) {
    let d = Domain::unit(n).unwrap();
    (d, Arc::new(boundary_mesh(&d, &Face::ALL).unwrap()))
}

/// Smallest eigenvalue of the 7-point `-Delta_h` on the interior nodes, by inverse
/// iteration with matrix-free conjugate gradients.
fn smallest_dirichlet_eigenvalue(n: usize) -> f64 {
    let m = n - 1;
    let h2 = (1.0 / n as f64).powi(2);
    let apply = |x: &[f64], y: &mut [f64]| {
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let p = (i * m + j) * m + k;
                    let mut s = 6.0 * x[p];
                    if i > 0 { s -= x[p - m * m]; }
                    if i + 1 < m { s -= x[p + m * m]; }
                    if j > 0 { s -= x[p - m]; }
                    if j + 1 < m { s -= x[p + m]; }
                    if k > 0 { s -= x[p - 1]; }
                    if k + 1 < m { s -= x[p + 1]; }
                    y[p] = s / h2;
                }
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let len = m * m * m;
    let mut v: Vec<f64> = (0..len).map(|p| 1.0 + 0.01 * (p % 7) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..40 {
        let nv = dot(&v, &v).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        let mut x = vec![0.0; len];
        let mut r = v.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; len];
        let mut rr = dot(&r, &r);
        for _ in 0..2000 {
            apply(&p, &mut ap);
            let a = rr / dot(&p, &ap);
            for q in 0..len {
                x[q] += a * p[q];
                r[q] -= a * ap[q];
            }
            let rr2 = dot(&r, &r);
            if rr2.sqrt() < 1e-14 {
                break;
            }
            for q in 0..len {
                p[q] = r[q] + rr2 / rr * p[q];
            }
            rr = rr2;
        }
        let mut ax = vec![0.0; len];
        apply(&x, &mut ax);
        lambda = dot(&x, &ax) / dot(&x, &x);
        v = x;
    }
    lambda
}

#[test]
fn eigenvalue_guard_fires_at_discrete_eigenvalue() {
    let (d, _) = full(16);
    let lambda = smallest_dirichlet_eigenvalue(16);
    assert!((lambda - 3.0 * std::f64::consts::PI.powi(2)).abs() < 0.2, "lambda {lambda}");
    let one = VoxelField::constant(d, 1.0);
    match HelmholtzSystem::assemble(&one, lambda.sqrt()) {
        Err(Error::EigenvalueHit { ratio }) => assert!(ratio < 1e-10),
        other => panic!("expected EigenvalueHit, got {other:?}"),
    }
    let ok = HelmholtzSystem::assemble(&one, 1.0).unwrap();
    assert!(ok.pivot_ratio() > 1e-3);
    let zero = VoxelField::constant(d, 0.0);
    assert!(HelmholtzSystem::assemble(&zero, 5.0).is_ok());
}

#[test]
fn laplace_reproduces_constants_and_linear_functions() {
    let (d, patch) = full(12);
    let sys = HelmholtzSystem::assemble(&VoxelField::constant(d, 0.0), 1.0).unwrap();
    let one = BoundaryTrace::from_fn(&patch, Support::Full, |_| Complex64::new(1.0, 0.0));
    let sol = sys.solve_dirichlet(&patch, &one).unwrap();
    assert!(sol.interior.iter().all(|u| (u - 1.0).norm() < 1e-12));
    assert!(sys.neumann_trace(&patch, &sol).values.iter().all(|v| v.norm() < 1e-10));

    let lin = BoundaryTrace::from_fn(&patch, Support::Full, |c| Complex64::new(c.position[0], 0.0));
    let sol = sys.solve_dirichlet(&patch, &lin).unwrap();
    for (p, u) in sol.interior.iter().enumerate() {
        let x = d.interior_point(d.unindex(p));
        assert!((u - x[0]).norm() < 1e-12);
    }
    assert!(sys.stencil_residual(&patch, &sol) <= 1e-10 * lin.norm_inf());
    let face = Arc::new(boundary_mesh(&d, &[Face::XPlus]).unwrap());
    let t = sys.neumann_trace(&face, &sys.solve_dirichlet(&face, &lin).unwrap());
    for &c in face.gamma() {
        assert!((t.values[c] - 1.0).norm() < 1e-10);
    }
}

fn plane_wave_errors(n: usize, omega: f64) -> (f64, f64) {
    let (d, patch) = full(n);
    let sys = HelmholtzSystem::assemble(&VoxelField::constant(d, 1.0), omega).unwrap();
    let wave = |x: f64| Complex64::new(0.0, omega * x).exp();
    let f = BoundaryTrace::from_fn(&patch, Support::Full, |c| wave(c.position[0]));
    let sol = sys.solve_dirichlet(&patch, &f).unwrap();
    let interior = sol
        .interior
        .iter()
        .enumerate()
        .map(|(p, u)| (u - wave(d.interior_point(d.unindex(p))[0])).norm())
        .fold(0.0, f64::max);
    let face = boundary_mesh(&d, &[Face::XPlus]).unwrap();
    let t = sys.neumann_trace(&face, &sys.solve_dirichlet(&face, &f).unwrap());
    let exact = Complex64::new(0.0, omega) * wave(0.5);
    let trace = face.gamma().iter().map(|&c| (t.values[c] - exact).norm()).fold(0.0, f64::max);
    (interior, trace)
}

#[test]
fn manufactured_plane_wave_converges_second_order() {
    let (e16, t16) = plane_wave_errors(16, 2.0);
    let (e32, t32) = plane_wave_errors(32, 2.0);
    let ratio = e16 / e32;
    assert!((3.0..=5.0).contains(&ratio), "interior ratio {ratio}");
    let tratio = t16 / t32;
    assert!((3.0..=5.0).contains(&tratio), "trace ratio {tratio} ({t16}, {t32})");
}

#[test]
fn gamma_only_inputs_ignore_complement() {
    let (d, _) = full(10);
    let patch = Arc::new(boundary_mesh(&d, &[Face::XMinus, Face::ZPlus]).unwrap());
    let bg = RefractiveMedium::homogeneous(d, 1.0);
    let pert = RefractiveMedium {
        alpha: 0.1,
        c0: 0.25,
        inclusions: vec![Inclusion { center: [0.0; 3], shape: Shape::Ball, index: 2.0 }],
        ..bg.clone()
    };
    let dn_bg = DnMap::build(&bg.background_field(), 1.0, patch.clone()).unwrap();
    let dn_pert = DnMap::build(&build_perturbed_index(&pert).unwrap(), 1.0, patch.clone()).unwrap();
    let f = BoundaryTrace::from_fn(&patch, Support::Gamma, |c| Complex64::new(c.position[1], c.position[2]));
    let mut dirty = f.clone();
    for (i, v) in dirty.values.iter_mut().enumerate() {
        if !patch.in_gamma(i) {
            *v = Complex64::new(3.0, -1.0);
        }
    }
    let a = dn_difference_apply(&dn_pert, &dn_bg, &f).unwrap();
    let b = dn_difference_apply(&dn_pert, &dn_bg, &dirty).unwrap();
    assert_eq!(a.values, b.values);
    assert!(a.norm_inf() > 0.0);

    let none = dn_difference_apply(&dn_bg, &dn_bg, &f).unwrap();
    assert!(none.norm_inf() == 0.0);

    let other = Arc::new(boundary_mesh(&Domain::unit(12).unwrap(), &[Face::XMinus]).unwrap());
    let dn_other = DnMap::build(&VoxelField::constant(Domain::unit(12).unwrap(), 1.0), 1.0, other).unwrap();
    assert!(matches!(dn_difference_apply(&dn_other, &dn_bg, &f), Err(Error::GridMismatch(_))));
}

#[test]
fn noise_statistics_and_determinism() {
    let (_, patch) = full(16);
    let t = BoundaryTrace::from_fn(&patch, Support::Full, |c| Complex64::new(1.0 + c.position[0], c.position[1]));
    assert_eq!(add_measurement_noise(&t, &patch, 0.0, 1).values, t.values);
    let a = add_measurement_noise(&t, &patch, 0.01, 9);
    assert_eq!(a.values, add_measurement_noise(&t, &patch, 0.01, 9).values);
    let diffs: Vec<Complex64> = a.values.iter().zip(&t.values).map(|(x, y)| x - y).collect();
    assert!(diffs.len() >= 1000);
    let std = (diffs.iter().map(|z| z.norm_sqr()).sum::<f64>() / diffs.len() as f64).sqrt();
    let target = 0.01 * t.norm_inf();
    assert!((std / target - 1.0).abs() < 0.2, "std {std} target {target}");
}

#[test]
fn dn_symmetry_defect_is_second_order_with_stable_constant() {
    let (d, patch) = full(16);
    let dn = DnMap::build(&VoxelField::constant(d, 1.0), 0.75, patch).unwrap();
    let h2 = d.h().powi(2);
    let c1 = dn_symmetry_defect(&dn, 1, 256).unwrap() / h2;
    let c2 = dn_symmetry_defect(&dn, 2, 256).unwrap() / h2;
    assert!((c1 / c2 - 1.0).abs() <= 0.2, "constants {c1} {c2}");
    assert!(c1 < 10.0);
}

#[test]
fn dn_difference_scales_like_alpha_cubed() {
    let (d, patch) = full(32);
    let z = [d.interior(18), d.interior(15), d.interior(15)];
    let probe = make_probe([2.0, 0.0, 0.0], 8.0).unwrap();
    let f = cgo_boundary_data(&probe, Which::Second, &patch).unwrap().value;
    let bg = RefractiveMedium::homogeneous(d, 1.0);
    let dn_bg = DnMap::build(&bg.background_field(), 0.75, patch.clone()).unwrap();
    let mut la = Vec::new();
    let mut ln = Vec::new();
    for alpha in [0.08, 0.04, 0.02] {
        let m = RefractiveMedium {
            alpha,
            inclusions: vec![Inclusion { center: z, shape: Shape::Ball, index: 2.0 }],
            ..bg.clone()
        };
        let dn = DnMap::build(&build_perturbed_index(&m).unwrap(), 0.75, patch.clone()).unwrap();
        la.push(f64::ln(alpha));
        ln.push(dn_difference_apply(&dn, &dn_bg, &f).unwrap().norm_gamma(&patch).ln());
    }
    let (slope, _, _) = helmholtz_cgo::boundary_ops::linear_fit(&la, &ln);
    assert!((2.5..=3.5).contains(&slope), "slope {slope}");
}

#[test]
fn distinct_media_give_distinct_data() {
    let (d, patch) = full(16);
    let a = RefractiveMedium::homogeneous(d, 1.0);
    let b = RefractiveMedium {
        alpha: 2.0 * d.h(),
        c0: 0.3,
        inclusions: vec![Inclusion { center: [0.0; 3], shape: Shape::Ball, index: 1.3 }],
        ..a.clone()
    };
    let dn_a = DnMap::build(&a.background_field(), 0.75, patch.clone()).unwrap();
    let dn_b = DnMap::build(&build_perturbed_index(&b).unwrap(), 0.75, patch.clone()).unwrap();
    let best = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]]
        .iter()
        .map(|k| {
            let f = cgo_boundary_data(&make_probe(*k, 8.0).unwrap(), Which::Second, &patch).unwrap().value;
            dn_difference_apply(&dn_b, &dn_a, &f).unwrap().norm_inf() / f.norm_inf()
        })
        .fold(0.0, f64::max);
    assert!(best > 10.0 * 1e-10, "best {best}");
}

#[test]
fn concurrent_applies_match_sequential() {
    let (d, patch) = full(12);
    let dn = DnMap::build(&VoxelField::constant(d, 1.0), 0.75, patch.clone()).unwrap();
    let inputs: Vec<BoundaryTrace> = (0..8)
        .map(|s| BoundaryTrace::from_fn(&patch, Support::Full, |c| Complex64::new((c.position[0] * s as f64).cos(), c.position[2])))
        .collect();
    let seq: Vec<_> = inputs.iter().map(|f| dn.apply(f).unwrap().values).collect();
    let par: Vec<_> = inputs.par_iter().map(|f| dn.apply(f).unwrap().values).collect();
    assert_eq!(seq, par);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn laplace_solutions_obey_maximum_principle(seed in 0u64..1000) {
        let (d, patch) = full(8);
        let sys = HelmholtzSystem::assemble(&VoxelField::constant(d, 0.0), 1.0).unwrap();
        let f = BoundaryTrace::from_fn(&patch, Support::Full, |c| {
            let s = seed as f64;
            Complex64::new((3.1 * c.position[0] + s).sin() + (2.3 * c.position[1] * s).cos() * c.position[2], 0.0)
        });
        let sol = sys.solve_dirichlet(&patch, &f).unwrap();
        let bmax = f.values.iter().map(|v| v.re).fold(f64::MIN, f64::max);
        let bmin = f.values.iter().map(|v| v.re).fold(f64::MAX, f64::min);
        for u in &sol.interior {
            prop_assert!(u.re <= bmax + 1e-12 && u.re >= bmin - 1e-12);
        }
    }

    #[test]
    fn dn_map_is_linear(a_re in -2.0f64..2.0, a_im in -2.0f64..2.0, s in 0.5f64..3.0) {
        let (d, patch) = full(8);
        let dn = DnMap::build(&VoxelField::constant(d, 1.3), 0.75, patch.clone()).unwrap();
        let f = BoundaryTrace::from_fn(&patch, Support::Gamma, |c| Complex64::new((s * c.position[0]).sin(), c.position[1]));
        let g = BoundaryTrace::from_fn(&patch, Support::Gamma, |c| Complex64::new(c.position[2], (s * c.position[1]).cos()));
        let a = Complex64::new(a_re, a_im);
        let lhs = dn.apply(&f.axpy(a, &g)).unwrap();
        let rhs = dn.apply(&f).unwrap().axpy(a, &dn.apply(&g).unwrap());
        let scale = lhs.norm_inf().max(1.0);
        prop_assert!(lhs.sub(&rhs).norm_inf() <= 1e-10 * scale);
    }
}
