// Builds a two-ball phantom, checks placement and counts inclusion voxels.

use helmholtz_cgo::medium::{build_perturbed_index, validate_placement, Background, Domain, Inclusion, RefractiveMedium, Shape};
use helmholtz_cgo::Result;

pub fn run_example() -> Result<String> {
    let medium = RefractiveMedium {
        domain: Domain::unit(24)?,
        background: Background::Constant { value: 1.0 },
        alpha: 0.06,
        inclusions: vec![
            Inclusion { center: [-0.15, 0.05, 0.0], shape: Shape::Ball, index: 2.0 },
            Inclusion { center: [0.2, 0.05, 0.0], shape: Shape::Cube, index: 1.5 },
        ],
        c0: 0.15,
    };
    let report = validate_placement(&medium);
    let index = build_perturbed_index(&medium)?;
    let [nx, ny, nz] = index.dims();
    let mut counts = vec![0usize; medium.inclusions.len()];
    for i in 0..nx {
        for j in 0..ny {
            for k in 0..nz {
                let v = index.get([i, j, k]);
                for (c, inc) in counts.iter_mut().zip(&medium.inclusions) {
                    if v == inc.index {
                        *c += 1;
                    }
                }
            }
        }
    }
    let mut out = format!("grid {nx}x{ny}x{nz}, h = {:.4}\nplacement: {}\n", medium.domain.h(), if report.is_ok() { "ok" } else { "violated" });
    for (j, (inc, c)) in medium.inclusions.iter().zip(&counts).enumerate() {
        out += &format!("inclusion {}: {:?} at {:?}, n = {}, {c} voxels\n", j + 1, inc.shape, inc.center, inc.index);
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
