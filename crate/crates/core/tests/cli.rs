use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Proc;

use helmholtz_cgo::config::{parse_config, RunConfig};
use helmholtz_cgo::pipeline::{report, run_pipeline, Command, RunOptions};
use helmholtz_cgo::Error;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_helmholtz-cgo");

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

const SMALL: &str = r#"
[domain]
grid_n = 12
alpha = 0.1
c0 = 0.25

[physics]
l_sweep = [4.0, 8.0]

[recon]
value_kmax = 4.0

[recon.kgrid]
kmax = 8.0
per_axis = 5
mask = "ball"

[data]
noise = 0.01
seed = 5

[[inclusions]]
center = [0.0, 0.0, 0.0]
shape = "ball"
index = 2.0
"#;

fn small(out: &Path) -> RunConfig {
    let mut cfg = RunConfig::parse_str(SMALL).unwrap();
    cfg.output.dir = out.to_string_lossy().into_owned();
    cfg
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn config_file_errors() {
    let dir = tempfile::tempdir().unwrap();
    let minimal = dir.path().join("minimal.toml");
    fs::write(&minimal, "[[inclusions]]\ncenter = [0.0, 0.0, 0.0]\nshape = \"ball\"\nindex = 2.0\n").unwrap();
    let cfg = parse_config(&minimal).unwrap();
    assert_eq!(cfg.domain.grid_n, 32);
    assert_eq!(cfg.inclusions.len(), 1);

    let typo = dir.path().join("typo.toml");
    fs::write(&typo, "[physics]\nomeega = 2.0\n").unwrap();
    match parse_config(&typo) {
        Err(e @ Error::Parse { line: 2, .. }) => assert!(e.to_string().contains("omeega")),
        other => panic!("{other:?}"),
    }

    let crowded = dir.path().join("crowded.toml");
    fs::write(
        &crowded,
        "[[inclusions]]\ncenter = [0.0, 0.0, 0.0]\nshape = \"ball\"\nindex = 2.0\n\
         [[inclusions]]\ncenter = [0.1, 0.0, 0.0]\nshape = \"ball\"\nindex = 2.0\n",
    )
    .unwrap();
    match parse_config(&crowded) {
        Err(e @ Error::Placement(_)) => {
            assert!(e.to_string().contains("pair (1, 2)"));
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(parse_config(&dir.path().join("absent.toml")), Err(Error::Io(_))));
}

#[test]
fn shipped_configs_parse_and_round_trip() {
    for name in ["one_inclusion.toml", "two_inclusions.toml", "no_inclusion.toml"] {
        let cfg = parse_config(&config_path(name)).unwrap();
        let again = RunConfig::parse_str(&cfg.canonical()).unwrap();
        assert_eq!(cfg, again, "{name}");
        assert_eq!(cfg.hash(), again.hash());
    }
}

#[test]
fn simulate_is_byte_identical_per_seed() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        run_pipeline(&small(dir), Command::Phantom, None).unwrap();
        run_pipeline(&small(dir), Command::Simulate, None).unwrap();
        run_pipeline(&small(dir), Command::Reconstruct, None).unwrap();
    }
    for f in ["phantom.vol", "dn_clean.bin", "dn_noisy.bin", "probes.json", "dn.json", "samples.csv", "result.json", "volume.vol"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let other = tempfile::tempdir().unwrap();
    let mut cfg = small(other.path());
    cfg.data.seed = 6;
    run_pipeline(&cfg, Command::Simulate, None).unwrap();
    assert_eq!(fs::read(a.path().join("dn_clean.bin")).unwrap(), fs::read(other.path().join("dn_clean.bin")).unwrap());
    assert_ne!(fs::read(a.path().join("dn_noisy.bin")).unwrap(), fs::read(other.path().join("dn_noisy.bin")).unwrap());
}

#[test]
fn report_checks_artifacts_in_order() {
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(report(empty.path()), Err(Error::MissingArtifact(ref f)) if f == "config.toml"));

    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small(dir.path()), Command::All, None).unwrap();
    let r = report(dir.path()).unwrap();
    assert_eq!(r.rows, 1);
    assert!(r.text.contains("alpha-scaling fit") && r.text.contains("|l| sweep"));
    let csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);

    fs::remove_file(dir.path().join("samples.csv")).unwrap();
    assert!(matches!(report(dir.path()), Err(Error::MissingArtifact(ref f)) if f == "samples.csv"));
}

#[test]
fn report_refuses_mixed_runs() {
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&small(dir.path()), Command::All, None).unwrap();
    let mut cfg = small(dir.path());
    cfg.data.seed = 99;
    run_pipeline(&cfg, Command::Phantom, None).unwrap();
    assert!(matches!(report(dir.path()), Err(Error::MixedRun { .. })));
    assert!(matches!(
        run_pipeline(&cfg, Command::Reconstruct, None),
        Err(Error::MixedRun { .. })
    ));
}

#[test]
fn cli_overrides_apply() {
    let cfg = small(Path::new("x"));
    let opts = RunOptions {
        out: Some("elsewhere".into()),
        seed: Some(42),
        path: Some(helmholtz_cgo::reconstruct::TracePath::A),
        l: Some(vec![6.0, 3.0, 12.0]),
        ..RunOptions::default()
    };
    let got = opts.apply(&cfg).unwrap();
    assert_eq!(got.output.dir, "elsewhere");
    assert_eq!(got.data.seed, 42);
    assert_eq!(got.physics.l, 6.0);
    assert_eq!(got.physics.l_sweep, vec![6.0, 3.0, 12.0]);
    assert!(RunOptions { l: Some(vec![]), ..RunOptions::default() }.apply(&cfg).is_err());
}

#[test]
fn binary_exit_codes_and_error_json() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[domain]\ngrid_n = 4\n").unwrap();
    let out = dir.path().join("out");
    let st = Proc::new(BIN).args(["phantom", "--config"]).arg(&bad).arg("--out").arg(&out).output().unwrap().status;
    assert_eq!(st.code(), Some(2));
    let err = read_json(&out.join("error.json"));
    assert_eq!(err["exit_code"], 2);

    let st = Proc::new(BIN).args(["report", "--out"]).arg(dir.path().join("nothing")).output().unwrap().status;
    assert_eq!(st.code(), Some(3));

    let good = dir.path().join("good.toml");
    fs::write(&good, SMALL).unwrap();
    let run = dir.path().join("run");
    let st = Proc::new(BIN)
        .args(["phantom", "--seed", "3", "--threads", "2", "--path", "B", "--l", "8,4", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&run)
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(0));
    let toml = fs::read_to_string(run.join("config.toml")).unwrap();
    assert!(toml.contains("seed = 3") && toml.contains("l_sweep = [8.0, 4.0]"));
}

#[test]
fn verify_on_background_only_config_passes_null_check() {
    let dir = tempfile::tempdir().unwrap();
    let st = Proc::new(BIN)
        .args(["verify", "--config"])
        .arg(config_path("no_inclusion.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(0));
    let sb = read_json(&dir.path().join("scoreboard.json"));
    let null = sb["checks"].as_array().unwrap().iter().find(|c| c["name"] == "fourier_null").unwrap();
    assert_eq!(null["pass"], true);
}

#[test]
fn all_on_default_one_inclusion_config() {
    let dir = tempfile::tempdir().unwrap();
    let st = Proc::new(BIN)
        .args(["all", "--config"])
        .arg(config_path("one_inclusion.toml"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap()
        .status;
    assert_eq!(st.code(), Some(0));
    let result = read_json(&dir.path().join("result.json"));
    assert_eq!(result["centers"].as_array().unwrap().len(), 1);
    assert!(result["matches"][0]["location_error"].is_number());
    assert!(dir.path().join("volume_z.pgm").is_file());
}
