// Dirichlet-to-Neumann map on one face: reciprocity and the inclusion signal.

use std::sync::Arc;

use helmholtz_cgo::forward::{dn_difference_apply, BoundaryTrace, DnMap, Support};
use helmholtz_cgo::medium::{boundary_mesh, build_perturbed_index, Domain, Face, Inclusion, RefractiveMedium, Shape};
use helmholtz_cgo::{Complex64, Result};

pub fn run_example() -> Result<String> {
    let domain = Domain::unit(16)?;
    let patch = Arc::new(boundary_mesh(&domain, &[Face::XPlus])?);
    let medium = RefractiveMedium {
        alpha: 0.1,
        inclusions: vec![Inclusion { center: [0.125, 0.0, 0.0], shape: Shape::Ball, index: 2.0 }],
        ..RefractiveMedium::homogeneous(domain, 1.0)
    };
    let omega = 0.75;
    let bg = DnMap::build(&medium.background_field(), omega, patch.clone())?;
    let pert = DnMap::build(&build_perturbed_index(&medium)?, omega, patch.clone())?;

    let mode = |a: f64, b: f64| {
        BoundaryTrace::from_fn(&patch, Support::Gamma, move |c| {
            Complex64::new((a * c.position[1]).cos() * (b * c.position[2]).cos(), 0.0)
        })
    };
    let f = mode(std::f64::consts::PI, 0.0);
    let g = mode(0.0, 2.0 * std::f64::consts::PI);
    let lhs = bg.apply(&f)?.bilinear(&g, &patch);
    let rhs = f.bilinear(&bg.apply(&g)?, &patch);
    let diff = dn_difference_apply(&pert, &bg, &f)?;

    Ok(format!(
        "{} cells on Gamma\n<Lf,g> = {lhs:.6e}\n<f,Lg> = {rhs:.6e}\n||(L - L0) f|| / ||L0 f|| = {:.3e}\n",
        patch.gamma_len(),
        diff.norm_gamma(&patch) / bg.apply(&f)?.norm_gamma(&patch)
    ))
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
