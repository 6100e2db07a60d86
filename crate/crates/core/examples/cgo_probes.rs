// Probe triads for a few Fourier nodes and their boundary exponentials.

use helmholtz_cgo::cgo::{cgo_boundary_data, make_probe, Which};
use helmholtz_cgo::medium::{boundary_mesh, Domain, Face};
use helmholtz_cgo::vec3::dot;
use helmholtz_cgo::Result;

pub fn run_example() -> Result<String> {
    let patch = boundary_mesh(&Domain::unit(12)?, &Face::ALL)?;
    let mut out = String::new();
    for k in [[2.0, 0.0, 0.0], [1.0, -3.0, 0.5], [0.0, 0.0, 6.0]] {
        let p = make_probe(k, 8.0)?;
        let data = cgo_boundary_data(&p, Which::First, &patch)?;
        out += &format!(
            "k = {k:?}: eta = [{:.3}, {:.3}, {:.3}], k.eta = {:.1e}, defect = {:.1e}, max Re(x.rho) = {:.3}\n",
            p.eta[0],
            p.eta[1],
            p.eta[2],
            dot(&p.k, &p.eta),
            p.algebra_defect(),
            data.max_exponent
        );
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
