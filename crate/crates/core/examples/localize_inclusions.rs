// Scans the Fourier data of a single small ball, localizes it and recovers its index.

use std::sync::Arc;

use helmholtz_cgo::medium::{boundary_mesh, Face, Inclusion, RefractiveMedium, Shape, Domain};
use helmholtz_cgo::reconstruct::{
    invert_and_localize, recover_values, refine_centers, scan_kgrid, FourierContext, KGrid, KMask, Kappa, LocalizeParams,
    TracePath, ValuePrior,
};
use helmholtz_cgo::vec3::{norm, sub};
use helmholtz_cgo::Result;

pub fn run_example() -> Result<String> {
    let truth = [0.0625, -0.03125, 0.0];
    let medium = RefractiveMedium {
        alpha: 0.08,
        c0: 0.25,
        inclusions: vec![Inclusion { center: truth, shape: Shape::Ball, index: 2.0 }],
        ..RefractiveMedium::homogeneous(Domain::unit(16)?, 1.0)
    };
    let patch = Arc::new(boundary_mesh(&medium.domain, &Face::ALL)?);
    let ctx = FourierContext::from_medium(&medium, patch, 0.75, 8.0, TracePath::B)?.with_kappa(Kappa::InvOmegaSq);
    let samples = scan_kgrid(&ctx, &KGrid { kmax: 8.0, per_axis: 7, mask: KMask::Ball })?;

    let params = LocalizeParams { c0: medium.c0, ..LocalizeParams::default() };
    let loc = invert_and_localize(&samples, &medium.domain, &params)?;
    let centers = refine_centers(&samples, &medium.domain, &loc.centers, 3)?;
    let prior = ValuePrior { alpha: medium.alpha, unit_volume: Shape::Ball.unit_volume(), background: 1.0 };
    let values = recover_values(&samples, &centers, &[prior])?;

    let mut out = format!("{} Fourier samples\n", samples.len());
    for (c, n) in centers.iter().zip(&values.index_estimates) {
        out += &format!(
            "center [{:.4}, {:.4}, {:.4}], error {:.2} voxels, index {n:.3}\n",
            c[0],
            c[1],
            c[2],
            norm(&sub(c, &truth)) / medium.domain.h()
        );
    }
    Ok(out)
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
