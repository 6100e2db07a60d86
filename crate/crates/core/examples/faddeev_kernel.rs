// Faddeev kernel along a ray, compared with the free-space 2 pi^2 / |x|.

use helmholtz_cgo::cgo::{make_probe, FaddeevKernel, FaddeevQuadrature, Which};
use helmholtz_cgo::Result;

pub fn run_example() -> Result<String> {
    let probe = make_probe([1.0, 0.0, 0.0], 4.0)?;
    let kern = FaddeevKernel::new(&probe.rho(Which::First), &FaddeevQuadrature::default())?;
    let mut out = format!("tau = |Im rho| = {:.4}\n", kern.tau());
    for r in [0.05, 0.1, 0.2, 0.4, 0.8] {
        let x = [r / 3f64.sqrt(), r / 3f64.sqrt(), r / 3f64.sqrt()];
        let g = kern.eval(&x);
        let free = 2.0 * std::f64::consts::PI.powi(2) / r;
        out += &format!("|x| = {r:.2}: G = {g:.5}, |G| r / 2pi^2 = {:.4}\n", g.norm() / free);
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
