//! Config-driven runs: phantom, simulate, reconstruct, verify, report.
//!
//! Every JSON sidecar records the hash of the canonical config; `report`
//! refuses directories whose sidecars disagree.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::boundary_ops::linear_fit;
use crate::cgo::{cgo_boundary_data, make_probe, CgoProbe, Which};
use crate::config::RunConfig;
use crate::forward::{add_measurement_noise, BoundaryTrace, DnMap, Support};
use crate::io;
use crate::medium::{
    boundary_mesh, build_perturbed_index, Inclusion, PartialBoundary, RefractiveMedium, Shape, VoxelField,
};
use crate::reconstruct::{
    calibrate_kappa, invert_and_localize, oracle_fourier, recover_values, refine_centers, scan_nodes,
    theorem1_diagnostic, FourierContext, FourierSamples, KGrid, KMask, Kappa, KappaCalibration, LocalizeParams,
    SampleMeta, TracePath, ValuePrior,
};
use crate::vec3::{dist, norm, Vec3};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Phantom,
    Simulate,
    Reconstruct,
    Verify,
    Report,
    All,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub path: Option<TracePath>,
    /// First value becomes `physics.l`; the full list becomes `physics.l_sweep`.
    pub l: Option<Vec<f64>>,
}

impl RunOptions {
    pub fn apply(&self, cfg: &RunConfig) -> Result<RunConfig> {
        let mut cfg = cfg.clone();
        if let Some(out) = &self.out {
            cfg.output.dir = out.to_string_lossy().into_owned();
        }
        if let Some(seed) = self.seed {
            cfg.data.seed = seed;
        }
        if let Some(path) = self.path {
            cfg.physics.path = path;
        }
        if let Some(l) = &self.l {
            let first = *l.first().ok_or_else(|| Error::Validation("--l needs at least one value".into()))?;
            cfg.physics.l = first;
            if l.len() > 1 {
                cfg.physics.l_sweep = l.clone();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub command: Command,
    pub out: PathBuf,
    pub artifacts: Vec<String>,
}

/// Runs `command` with the given thread count (default: one thread).
pub fn run_pipeline(cfg: &RunConfig, command: Command, threads: Option<usize>) -> Result<RunSummary> {
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(1).max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    pool.install(|| run_stages(cfg, command))
}

fn run_stages(cfg: &RunConfig, command: Command) -> Result<RunSummary> {
    let out = PathBuf::from(&cfg.output.dir);
    let mut artifacts = Vec::new();
    if command != Command::Report {
        fs::create_dir_all(&out)?;
    }
    let stages: &[Command] = match command {
        Command::All => &[Command::Phantom, Command::Simulate, Command::Reconstruct, Command::Verify, Command::Report],
        c => std::slice::from_ref(match c {
            Command::Phantom => &Command::Phantom,
            Command::Simulate => &Command::Simulate,
            Command::Reconstruct => &Command::Reconstruct,
            Command::Verify => &Command::Verify,
            _ => &Command::Report,
        }),
    };
    for stage in stages {
        let written = match stage {
            Command::Phantom => phantom(cfg, &out)?,
            Command::Simulate => simulate(cfg, &out)?,
            Command::Reconstruct => reconstruct(cfg, &out)?,
            Command::Verify => verify(cfg, &out)?,
            _ => report(&out)?.files,
        };
        artifacts.extend(written);
    }
    Ok(RunSummary { command, out, artifacts })
}

/// Machine-readable failure record written next to the artifacts.
pub fn write_error_json(out: &Path, command: Command, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join("error.json");
    io::write_json(
        &path,
        &json!({
            "command": command,
            "kind": err.kind(),
            "message": err.to_string(),
            "exit_code": err.exit_code(),
        }),
    )?;
    Ok(path)
}

fn write_config(cfg: &RunConfig, out: &Path) -> Result<String> {
    fs::write(out.join("config.toml"), cfg.canonical())?;
    Ok("config.toml".into())
}

fn patch_of(cfg: &RunConfig, medium: &RefractiveMedium) -> Result<Arc<PartialBoundary>> {
    Ok(Arc::new(boundary_mesh(&medium.domain, &cfg.boundary.faces)?))
}

fn c2(v: Complex64) -> [f64; 2] {
    [v.re, v.im]
}

// ---------------------------------------------------------------------------
// phantom
// ---------------------------------------------------------------------------

fn phantom(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let medium = cfg.medium()?;
    let field = build_perturbed_index(&medium)?;
    io::write_volume(&out.join("phantom.vol"), field.dims(), &field.values)?;
    let bg = medium.background_field();
    let inclusions: Vec<Value> = medium
        .inclusions
        .iter()
        .enumerate()
        .map(|(j, inc)| {
            json!({
                "center": inc.center,
                "shape": inc.shape,
                "index": inc.index,
                "voxels": voxels_of(&field, &bg, inc, &medium),
                "coefficient": medium.contrast_coefficient(j),
            })
        })
        .collect();
    io::write_json(
        &out.join("phantom.json"),
        &json!({
            "config_hash": cfg.hash(),
            "side": medium.domain.side,
            "grid_n": medium.domain.grid_n,
            "h": medium.domain.h(),
            "alpha": medium.alpha,
            "c0": medium.c0,
            "background": medium.background,
            "inclusions": inclusions,
            "volume": "phantom.vol",
            "dims": field.dims(),
        }),
    )?;
    Ok(vec![write_config(cfg, out)?, "phantom.vol".into(), "phantom.json".into()])
}

fn voxels_of(field: &VoxelField, bg: &VoxelField, inc: &Inclusion, medium: &RefractiveMedium) -> usize {
    let d = medium.domain;
    (0..d.n_interior())
        .filter(|&p| {
            field.values[p] != bg.values[p] && dist(&d.interior_point(d.unindex(p)), &inc.center) <= medium.alpha * 1.8
        })
        .count()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DnHeader {
    config_hash: String,
    grid_n: usize,
    side: f64,
    faces: Vec<crate::medium::Face>,
    omega: f64,
    sigma: f64,
    seed: u64,
    l: f64,
    rows: usize,
    cols: usize,
    probe_set: String,
    clean: String,
    noisy: String,
    /// `||Lambda v_k||_Gamma` per row, used for the null-level scale.
    background_norms: Vec<f64>,
}

fn simulate(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let medium = cfg.medium()?;
    let patch = patch_of(cfg, &medium)?;
    let ctx = FourierContext::from_medium(&medium, patch.clone(), cfg.physics.omega, cfg.physics.l, TracePath::B)?
        .with_noise(cfg.data.noise, cfg.data.seed);
    let nodes = cfg.recon.kgrid.nodes()?;
    let probes: Vec<CgoProbe> = nodes.iter().map(|k| make_probe(*k, cfg.physics.l)).collect::<Result<_>>()?;
    let vs: Vec<BoundaryTrace> = probes
        .iter()
        .map(|p| cgo_boundary_data(p, Which::Second, &patch).map(|t| t.value))
        .collect::<Result<_>>()?;
    let a = ctx.dn_pert.apply_many(&vs)?;
    let b = ctx.dn_bg.apply_many(&vs)?;
    let cols = patch.gamma_len();
    let mut clean = Vec::with_capacity(probes.len() * cols);
    let mut noisy = Vec::with_capacity(probes.len() * cols);
    let mut background_norms = Vec::with_capacity(probes.len());
    for ((p, ta), tb) in probes.iter().zip(&a).zip(&b) {
        let diff = ta.sub(tb);
        let nz = add_measurement_noise(&diff, &patch, cfg.data.noise, ctx.noise_seed(&p.k));
        clean.extend(diff.gamma_values(&patch));
        noisy.extend(nz.gamma_values(&patch));
        background_norms.push(tb.norm_gamma(&patch));
    }
    io::write_matrix(&out.join("dn_clean.bin"), probes.len(), cols, &clean)?;
    io::write_matrix(&out.join("dn_noisy.bin"), probes.len(), cols, &noisy)?;
    io::write_json(
        &out.join("probes.json"),
        &json!({ "config_hash": cfg.hash(), "l": cfg.physics.l, "probes": probes }),
    )?;
    let header = DnHeader {
        config_hash: cfg.hash(),
        grid_n: medium.domain.grid_n,
        side: medium.domain.side,
        faces: cfg.boundary.faces.clone(),
        omega: cfg.physics.omega,
        sigma: cfg.data.noise,
        seed: cfg.data.seed,
        l: cfg.physics.l,
        rows: probes.len(),
        cols,
        probe_set: "probes.json".into(),
        clean: "dn_clean.bin".into(),
        noisy: "dn_noisy.bin".into(),
        background_norms,
    };
    io::write_json(&out.join("dn.json"), &header)?;
    Ok(vec![
        write_config(cfg, out)?,
        "dn_clean.bin".into(),
        "dn_noisy.bin".into(),
        "probes.json".into(),
        "dn.json".into(),
    ])
}

// ---------------------------------------------------------------------------
// reconstruct
// ---------------------------------------------------------------------------

fn require(out: &Path, name: &str) -> Result<PathBuf> {
    let p = out.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(Error::MissingArtifact(name.into()))
    }
}

fn check_hash(out: &Path, name: &str, value: &Value, expected: &str) -> Result<()> {
    let got = value.get("config_hash").and_then(Value::as_str).unwrap_or("");
    if got != expected {
        return Err(Error::MixedRun { dir: out.join(name), first: expected.into(), second: got.into() });
    }
    Ok(())
}

/// Normalization fitted on a centered single ball with the run's settings.
pub fn calibrate(cfg: &RunConfig) -> Result<KappaCalibration> {
    let medium = cfg.medium()?;
    let d = medium.domain;
    let center_idx = d.m() / 2;
    let c = d.interior(center_idx);
    let n0 = medium.background.value_at(&[c, c, c]);
    let phantom = RefractiveMedium {
        inclusions: vec![Inclusion { center: [c, c, c], shape: Shape::Ball, index: n0 + 1.0 }],
        ..medium.clone()
    };
    let patch = patch_of(cfg, &phantom)?;
    let ctx = FourierContext::from_medium(&phantom, patch, cfg.physics.omega, cfg.physics.l, TracePath::B)?
        .with_kappa(Kappa::One);
    let nodes = KGrid { kmax: 2.0, per_axis: 3, mask: KMask::Cube }.nodes()?;
    let raw = scan_nodes(&ctx, &nodes)?;
    Ok(calibrate_kappa(&raw, &oracle_fourier(&phantom)?))
}

/// Axis frequencies `0, +-2 e_i` used by the quick checks.
fn probe_nodes() -> Vec<Vec3> {
    let mut v = vec![[0.0; 3]];
    for ax in 0..3 {
        for s in [-2.0, 2.0] {
            let mut k = [0.0; 3];
            k[ax] = s;
            v.push(k);
        }
    }
    v
}

fn samples_from_data(cfg: &RunConfig, out: &Path, patch: &PartialBoundary, kappa: Kappa) -> Result<FourierSamples> {
    let hash = cfg.hash();
    let dn_json = io::read_json(&require(out, "dn.json")?)?;
    check_hash(out, "dn.json", &dn_json, &hash)?;
    let header: DnHeader = serde_json::from_value(dn_json)?;
    let probes_json = io::read_json(&require(out, &header.probe_set)?)?;
    check_hash(out, &header.probe_set, &probes_json, &hash)?;
    let probes: Vec<CgoProbe> = serde_json::from_value(probes_json["probes"].clone())?;
    let (rows, cols, data) = io::read_matrix(&require(out, &header.noisy)?)?;
    if rows != probes.len() || cols != patch.gamma_len() {
        return Err(Error::Format { path: out.join(&header.noisy), message: "shape differs from probe set".into() });
    }
    let kap = kappa.factor(cfg.physics.omega);
    let mut kgrid = Vec::with_capacity(rows);
    let mut values = Vec::with_capacity(rows);
    let mut scales = Vec::with_capacity(rows);
    for (r, p) in probes.iter().enumerate() {
        let u = cgo_boundary_data(p, Which::First, patch)?.value;
        let diff = BoundaryTrace::from_gamma_values(patch, &data[r * cols..(r + 1) * cols]);
        kgrid.push(p.k);
        values.push(u.bilinear(&diff, patch) * kap);
        scales.push(kap.abs() * u.norm_gamma(patch) * header.background_norms[r]);
    }
    Ok(FourierSamples {
        kgrid,
        values,
        scales,
        meta: SampleMeta {
            l_norm: cfg.physics.l,
            path: TracePath::B,
            sigma: header.sigma,
            omega: cfg.physics.omega,
            kappa,
            seed: header.seed,
            failures: 0,
        },
    })
}

fn reconstruct(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let medium = cfg.medium()?;
    let patch = patch_of(cfg, &medium)?;
    let calibration = match cfg.recon.calibration.fixed() {
        Some(k) => KappaCalibration { chosen: k, errors: Vec::new() },
        None => calibrate(cfg)?,
    };
    let kappa = calibration.chosen;
    let samples = match cfg.physics.path {
        TracePath::B => samples_from_data(cfg, out, &patch, kappa)?,
        TracePath::A => {
            let ctx = FourierContext::from_medium(&medium, patch.clone(), cfg.physics.omega, cfg.physics.l, TracePath::A)?
                .with_kappa(kappa)
                .with_noise(cfg.data.noise, cfg.data.seed);
            let mut ctx = ctx;
            ctx.lambda_rel = cfg.recon.lambda;
            scan_nodes(&ctx, &cfg.recon.kgrid.nodes()?)?
        }
    };
    io::write_samples_csv(&out.join("samples.csv"), &samples)?;
    io::write_json(
        &out.join("samples.json"),
        &json!({
            "config_hash": cfg.hash(),
            "count": samples.len(),
            "meta": samples.meta,
            "kappa_calibration": calibration,
            "scales": samples.scales,
        }),
    )?;
    let mut files = vec![write_config(cfg, out)?, "samples.csv".into(), "samples.json".into()];

    let params = LocalizeParams { c0: medium.c0, threshold: cfg.recon.threshold, refine: true };
    let loc = invert_and_localize(&samples, &medium.domain, &params)?;
    let centers = refine_centers(&samples, &medium.domain, &loc.centers, cfg.recon.refine_iterations)?;
    let priors: Vec<ValuePrior> = centers
        .iter()
        .map(|c| ValuePrior {
            alpha: medium.alpha,
            unit_volume: nearest_shape(&medium, c).unit_volume(),
            background: medium.background.value_at(c),
        })
        .collect();
    let values = recover_values(&samples.within(cfg.recon.value_kmax), &centers, &priors)?;

    let mag = loc.magnitude();
    io::write_volume(&out.join("volume.vol"), [medium.domain.m(); 3], &mag)?;
    files.push("volume.vol".into());
    if cfg.output.pgm_slices {
        for p in io::write_pgm_slices(out, "volume", [medium.domain.m(); 3], &mag)? {
            files.push(p.file_name().unwrap().to_string_lossy().into_owned());
        }
    }

    let h = medium.domain.h();
    let matches: Vec<Value> = medium
        .inclusions
        .iter()
        .enumerate()
        .map(|(j, inc)| {
            let best = centers
                .iter()
                .enumerate()
                .min_by(|a, b| dist(a.1, &inc.center).total_cmp(&dist(b.1, &inc.center)));
            match best {
                Some((i, c)) => {
                    let e = dist(c, &inc.center);
                    json!({
                        "inclusion": j,
                        "recovered": i,
                        "true_center": inc.center,
                        "center": c,
                        "location_error": e,
                        "location_error_voxels": e / h,
                        "true_index": inc.index,
                        "index": values.index_estimates[i],
                        "index_error_rel": (values.index_estimates[i] - inc.index).abs() / inc.index.abs(),
                    })
                }
                None => json!({ "inclusion": j, "recovered": null }),
            }
        })
        .collect();

    let (l_sweep, theorem1) = diagnostics(cfg, &medium, &patch, kappa)?;
    io::write_json(
        &out.join("result.json"),
        &json!({
            "config_hash": cfg.hash(),
            "kappa": kappa,
            "centers": centers,
            "raw_centers": loc.centers,
            "peak_values": loc.peak_values,
            "coefficients": values.coefficients.iter().map(|c| c2(*c)).collect::<Vec<_>>(),
            "index_estimates": values.index_estimates,
            "residual": values.residual,
            "condition": values.condition,
            "matches": matches,
            "l_sweep": l_sweep,
            "theorem1": theorem1,
            "volume": "volume.vol",
        }),
    )?;
    files.push("result.json".into());
    Ok(files)
}

fn nearest_shape(medium: &RefractiveMedium, x: &Vec3) -> Shape {
    medium
        .inclusions
        .iter()
        .min_by(|a, b| dist(&a.center, x).total_cmp(&dist(&b.center, x)))
        .map_or(Shape::Ball, |i| i.shape)
}

/// Finite-`|l|` error table and the data-independent diagnostic on the axis frequencies.
fn diagnostics(cfg: &RunConfig, medium: &RefractiveMedium, patch: &Arc<PartialBoundary>, kappa: Kappa) -> Result<(Vec<Value>, Vec<Value>)> {
    if medium.inclusions.is_empty() {
        return Ok((Vec::new(), Vec::new()));
    }
    let oracle = oracle_fourier(medium)?;
    let base = FourierContext::from_medium(medium, patch.clone(), cfg.physics.omega, cfg.physics.l, TracePath::B)?;
    let nodes = probe_nodes();
    let mut sweep = Vec::new();
    let mut at_l = None;
    for &l in &cfg.physics.l_sweep {
        let ctx = FourierContext::new(base.dn_pert.clone(), base.dn_bg.clone(), l, TracePath::B)?.with_kappa(kappa);
        let s = scan_nodes(&ctx, &nodes)?;
        let mut rel: Vec<f64> =
            s.kgrid.iter().zip(&s.values).map(|(k, v)| (v - oracle.quadrature(k)).norm() / oracle.quadrature(k).norm()).collect();
        let max = rel.iter().copied().fold(0.0, f64::max);
        rel.sort_by(f64::total_cmp);
        sweep.push(json!({ "l": l, "median_rel_error": rel[rel.len() / 2], "max_rel_error": max }));
        if l == cfg.physics.l {
            at_l = Some(s);
        }
    }
    let s = match at_l {
        Some(s) => s,
        None => scan_nodes(&FourierContext::new(base.dn_pert.clone(), base.dn_bg.clone(), cfg.physics.l, TracePath::B)?.with_kappa(kappa), &nodes)?,
    };
    let mut thm = Vec::new();
    for (k, d) in s.kgrid.iter().zip(&s.values) {
        if norm(k) == 0.0 {
            continue;
        }
        let probe = make_probe(*k, cfg.physics.l)?;
        let v = theorem1_diagnostic(patch, k, &probe.eta, cfg.physics.omega)?;
        let o = oracle.quadrature(k);
        thm.push(json!({
            "k": k,
            "eta": probe.eta,
            "value": c2(v),
            "data": c2(*d),
            "oracle": c2(o),
            "rel_discrepancy_vs_oracle": (v - o).norm() / o.norm(),
        }));
    }
    Ok((sweep, thm))
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: String,
    pub detail: String,
}

fn check(name: &str, pass: bool, value: f64, threshold: &str, detail: impl Into<String>) -> Check {
    Check { name: name.into(), pass, value, threshold: threshold.into(), detail: detail.into() }
}

/// Runs the invariant suite on the configured medium.
pub fn verify_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let medium = cfg.medium()?;
    let patch = patch_of(cfg, &medium)?;
    let mut checks = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.data.seed);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let k = [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)];
        let l = rng.random_range(0.5..20.0);
        worst = worst.max(make_probe(k, l)?.algebra_defect());
    }
    checks.push(check("probe_algebra", worst <= 1e-12, worst, "<= 1e-12", "1000 random probes"));

    let placement = crate::medium::validate_placement(&medium);
    checks.push(check("placement", placement.is_ok(), placement.violations.len() as f64, "== 0", placement.to_string()));

    let omega = cfg.physics.omega;
    let nodes = probe_nodes();
    let null = FourierContext::from_medium(&medium.without_inclusions(), patch.clone(), omega, cfg.physics.l, TracePath::B)?;
    let s = scan_nodes(&null, &nodes)?;
    let ratio = s.values.iter().zip(&s.scales).map(|(v, sc)| v.norm() / sc).fold(0.0, f64::max);
    checks.push(check("fourier_null", ratio <= 1e-8, ratio, "<= 1e-8 x scale", "no-inclusion medium, path B"));

    let defect = dn_symmetry_defect(&null.dn_bg, cfg.data.seed, 32)?;
    let h2 = medium.domain.h().powi(2);
    checks.push(check(
        "dn_symmetry",
        defect <= 10.0 * h2,
        defect,
        "<= 10 h^2",
        format!("constant {:.4}", defect / h2),
    ));

    if !medium.inclusions.is_empty() {
        let kappa = match cfg.recon.calibration.fixed() {
            Some(k) => k,
            None => calibrate(cfg)?.chosen,
        };
        let oracle = oracle_fourier(&medium)?;
        let ctx = FourierContext::from_medium(&medium, patch.clone(), omega, cfg.physics.l, TracePath::B)?.with_kappa(kappa);
        let s = scan_nodes(&ctx, &nodes)?;
        let worst = s
            .kgrid
            .iter()
            .zip(&s.values)
            .map(|(k, v)| (v - oracle.quadrature(k)).norm() / oracle.quadrature(k).norm())
            .fold(0.0, f64::max);
        checks.push(check("oracle_match", worst <= 0.3, worst, "<= 0.3", format!("kappa {kappa:?}")));

        let mut conj = 0.0f64;
        for (k, v) in s.kgrid.iter().zip(&s.values) {
            if let Some(m) = s.value_at(&[-k[0], -k[1], -k[2]]) {
                conj = conj.max((m - v.conj()).norm() / v.norm());
            }
        }
        checks.push(check("conjugate_symmetry", conj <= 0.1, conj, "<= 0.1", ""));

        let (slope, count) = alpha_scaling_slope(&medium, &patch, omega, cfg.physics.l, kappa)?;
        checks.push(check("alpha_scaling", (2.5..=3.5).contains(&slope), slope, "in [2.5, 3.5]", format!("{count} alphas")));
    }
    Ok(checks)
}

/// Alpha ladder `0.08, 0.04, 0.02` at 32 nodes per unit side, scaled with `h`.
pub const ALPHA_LADDER: [f64; 3] = [0.08, 0.04, 0.02];

/// Log-log slope of `max_k |D(k)|` against `alpha` for one ball snapped to the
/// node nearest the first inclusion.
pub fn alpha_scaling_slope(medium: &RefractiveMedium, patch: &Arc<PartialBoundary>, omega: f64, l: f64, kappa: Kappa) -> Result<(f64, usize)> {
    let d = medium.domain;
    let first = medium.inclusions.first().ok_or(Error::InvalidArgument("no inclusion".into()))?;
    let snap = |x: f64| d.interior(((x + d.half_side()) / d.h()).round().clamp(1.0, d.m() as f64) as usize - 1);
    let center = [snap(first.center[0]), snap(first.center[1]), snap(first.center[2])];
    let single = RefractiveMedium {
        inclusions: vec![Inclusion { center, shape: Shape::Ball, index: first.index }],
        ..medium.clone()
    };
    let scale = 32.0 * d.h();
    let nodes = probe_nodes();
    let mut la = Vec::new();
    let mut ld = Vec::new();
    for a in ALPHA_LADDER {
        let m = single.with_alpha(a * scale);
        let ctx = FourierContext::from_medium(&m, patch.clone(), omega, l, TracePath::B)?.with_kappa(kappa);
        let s = scan_nodes(&ctx, &nodes)?;
        la.push(m.alpha.ln());
        ld.push(s.values.iter().map(|v| v.norm()).fold(0.0, f64::max).ln());
    }
    Ok((linear_fit(&la, &ld).0, la.len()))
}

/// Green's-identity defect `sum |<Lf, g> - <f, Lg>| / sum ||f|| ||Lg||` over smooth
/// random pairs on Gamma.
pub fn dn_symmetry_defect(dn: &DnMap, seed: u64, pairs: usize) -> Result<f64> {
    let patch = &dn.patch;
    let side = patch.domain.side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut traces = Vec::with_capacity(2 * pairs);
    for _ in 0..2 * pairs {
        let coef: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
        traces.push(BoundaryTrace::from_fn(patch, Support::Gamma, |c| {
            let [ta, tb] = c.face.tangential();
            let s = c.position[ta] / side + 0.5;
            let t = c.position[tb] / side + 0.5;
            let mut v = 0.0;
            for p in 0..3 {
                for q in 0..3 {
                    v += coef[3 * p + q]
                        * (std::f64::consts::PI * (p + 1) as f64 * s).sin()
                        * (std::f64::consts::PI * (q + 1) as f64 * t).sin();
                }
            }
            Complex64::new(v, 0.0)
        }));
    }
    let images = dn.apply_many(&traces)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..pairs {
        let (f, g) = (&traces[2 * i], &traces[2 * i + 1]);
        let (lf, lg) = (&images[2 * i], &images[2 * i + 1]);
        num += (lf.bilinear(g, patch) - f.bilinear(lg, patch)).norm();
        den += f.norm_gamma(patch) * lg.norm_gamma(patch);
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}

fn verify(cfg: &RunConfig, out: &Path) -> Result<Vec<String>> {
    let checks = verify_checks(cfg)?;
    let all_pass = checks.iter().all(|c| c.pass);
    io::write_json(
        &out.join("scoreboard.json"),
        &json!({ "config_hash": cfg.hash(), "all_pass": all_pass, "checks": checks }),
    )?;
    if !all_pass {
        let failed: Vec<&str> = checks.iter().filter(|c| !c.pass).map(|c| c.name.as_str()).collect();
        return Err(Error::Verification(failed.join(", ")));
    }
    Ok(vec![write_config(cfg, out)?, "scoreboard.json".into()])
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

/// Artifacts a complete run must contain, in check order.
pub const REQUIRED_ARTIFACTS: [&str; 6] =
    ["config.toml", "phantom.json", "dn.json", "samples.csv", "samples.json", "result.json"];
const SIDECARS: [&str; 6] = ["phantom.json", "dn.json", "probes.json", "samples.json", "result.json", "scoreboard.json"];

#[derive(Debug, Clone)]
pub struct Report {
    pub text: String,
    pub rows: usize,
    pub files: Vec<String>,
}

fn fmt_vec(v: &Value) -> String {
    match v.as_array() {
        Some(a) => format!(
            "({})",
            a.iter().map(|x| format!("{:.4}", x.as_f64().unwrap_or(f64::NAN))).collect::<Vec<_>>().join(", ")
        ),
        None => "-".into(),
    }
}

pub fn report(out: &Path) -> Result<Report> {
    for name in REQUIRED_ARTIFACTS {
        require(out, name)?;
    }
    let mut hash: Option<(String, String)> = None;
    for name in SIDECARS {
        let p = out.join(name);
        if !p.is_file() {
            continue;
        }
        let h = io::read_json(&p)?.get("config_hash").and_then(Value::as_str).unwrap_or("").to_string();
        match &hash {
            None => hash = Some((name.into(), h)),
            Some((_, first)) if *first != h => {
                return Err(Error::MixedRun { dir: out.to_path_buf(), first: first.clone(), second: h });
            }
            _ => {}
        }
    }
    let result = io::read_json(&out.join("result.json"))?;
    let mut text = String::new();
    let mut csv = String::from("inclusion,true_x,true_y,true_z,x,y,z,location_error,location_error_voxels,true_index,index,index_error_rel\n");
    text.push_str(&format!("run: {}\nconfig hash: {}\n\n", out.display(), hash.map(|h| h.1).unwrap_or_default()));
    text.push_str("per-inclusion recovery\n");
    let empty = Vec::new();
    let matches = result["matches"].as_array().unwrap_or(&empty);
    for m in matches {
        let f = |k: &str| m[k].as_f64().unwrap_or(f64::NAN);
        text.push_str(&format!(
            "  #{} true {} recovered {} error {:.4} ({:.2} voxels) index {:.3} vs {:.3} (rel {:.3})\n",
            m["inclusion"],
            fmt_vec(&m["true_center"]),
            fmt_vec(&m["center"]),
            f("location_error"),
            f("location_error_voxels"),
            f("index"),
            f("true_index"),
            f("index_error_rel"),
        ));
        let tc: Vec<f64> = m["true_center"].as_array().map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect()).unwrap_or(vec![f64::NAN; 3]);
        let c: Vec<f64> = m["center"].as_array().map(|a| a.iter().map(|x| x.as_f64().unwrap_or(f64::NAN)).collect()).unwrap_or(vec![f64::NAN; 3]);
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            m["inclusion"], tc[0], tc[1], tc[2], c[0], c[1], c[2],
            f("location_error"), f("location_error_voxels"), f("true_index"), f("index"), f("index_error_rel")
        ));
    }
    text.push_str(&format!("  recovered centers: {}\n\n", result["centers"].as_array().map_or(0, |a| a.len())));

    text.push_str("finite |l| sweep (relative error vs oracle, axis frequencies)\n");
    for row in result["l_sweep"].as_array().unwrap_or(&empty) {
        text.push_str(&format!(
            "  |l| = {:>5}: median {:.4} max {:.4}\n",
            row["l"], row["median_rel_error"].as_f64().unwrap_or(f64::NAN), row["max_rel_error"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    text.push_str("\ndata-independent diagnostic vs oracle (logged, not gated)\n");
    for row in result["theorem1"].as_array().unwrap_or(&empty) {
        text.push_str(&format!(
            "  k = {}: relative discrepancy {:.3e}\n",
            fmt_vec(&row["k"]),
            row["rel_discrepancy_vs_oracle"].as_f64().unwrap_or(f64::NAN)
        ));
    }
    text.push_str("\nalpha-scaling fit\n");
    let sb = out.join("scoreboard.json");
    if sb.is_file() {
        let sb = io::read_json(&sb)?;
        for c in sb["checks"].as_array().unwrap_or(&empty) {
            if c["name"] == "alpha_scaling" {
                text.push_str(&format!("  slope {} ({})\n", c["value"], if c["pass"] == true { "pass" } else { "fail" }));
            }
        }
        text.push_str("\nverification\n");
        for c in sb["checks"].as_array().unwrap_or(&empty) {
            text.push_str(&format!("  {:<20} {} value {}\n", c["name"].as_str().unwrap_or(""), if c["pass"] == true { "PASS" } else { "FAIL" }, c["value"]));
        }
    } else {
        text.push_str("  not run (no scoreboard.json)\n");
    }
    fs::write(out.join("report.txt"), &text)?;
    fs::write(out.join("report.csv"), &csv)?;
    Ok(Report { text, rows: matches.len(), files: vec!["report.txt".into(), "report.csv".into()] })
}
