// Full config-driven run into a temporary directory, followed by the report.

use helmholtz_cgo::config::RunConfig;
use helmholtz_cgo::pipeline::{report, run_pipeline, Command};
use helmholtz_cgo::Result;

const CONFIG: &str = r#"
[domain]
grid_n = 12
alpha = 0.08
c0 = 0.25

[physics]
l_sweep = [8.0]

[recon]
kgrid = { kmax = 6.0, per_axis = 5, mask = "ball" }
calibration = "inv_omega_sq"

[output]
pgm_slices = false

[[inclusions]]
center = [0.0, 0.0, 0.0]
shape = "ball"
index = 2.0
"#;

pub fn run_example() -> Result<String> {
    let mut cfg = RunConfig::parse_str(CONFIG)?;
    let dir = std::env::temp_dir().join(format!("helmholtz-cgo-example-{}", std::process::id()));
    cfg.output.dir = dir.to_string_lossy().into_owned();
    for c in [Command::Phantom, Command::Simulate, Command::Reconstruct] {
        run_pipeline(&cfg, c, None)?;
    }
    let rep = report(&dir)?;
    std::fs::remove_dir_all(&dir)?;
    Ok(format!("config hash {}\n{}", cfg.hash(), rep.text))
}

fn main() -> Result<()> {
    print!("{}", run_example()?);
    Ok(())
}
