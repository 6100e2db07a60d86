// Double-layer operator and the boundary-integral CGO trace on a single face.

use std::sync::Arc;

use helmholtz_cgo::boundary_ops::{assemble_n_rho, lemma1_residual, lemma1_solve, trace_correlation, DEFAULT_LAMBDA_REL};
use helmholtz_cgo::cgo::{cgo_boundary_data, make_probe, Which};
use helmholtz_cgo::forward::DnMap;
use helmholtz_cgo::medium::{boundary_mesh, Domain, Face, VoxelField};
use helmholtz_cgo::Result;

pub fn run_example() -> Result<String> {
    let domain = Domain::unit(10)?;
    let patch = Arc::new(boundary_mesh(&domain, &[Face::XPlus])?);
    let dn = DnMap::build(&VoxelField::constant(domain, 1.0), 0.75, patch.clone())?;
    let probe = make_probe([2.0, 0.0, 0.0], 4.0)?;

    let nrho = assemble_n_rho(&probe, Which::First, &patch, DEFAULT_LAMBDA_REL)?;
    let sol = lemma1_solve(&dn, &nrho, &probe, DEFAULT_LAMBDA_REL)?;
    let residual = lemma1_residual(&dn, &nrho, &probe, &sol.trace)?;
    let lead = cgo_boundary_data(&probe, Which::First, &patch)?.value;

    Ok(format!(
        "{} cells; ||N_rho|| = {:.3e}\nresidual {residual:.3e} (bound {:.3e})\ncorrelation with e^(x.rho): {:.3}\n",
        patch.gamma_len(),
        nrho.operator_norm()?,
        sol.residual_bound,
        trace_correlation(&sol.trace, &lead, &patch)
    ))
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
