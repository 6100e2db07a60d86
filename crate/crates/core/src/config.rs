//! Run configuration: a single TOML document with a canonical re-serialization.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary_ops::DEFAULT_LAMBDA_REL;
use crate::medium::{validate_placement, Background, Domain, Face, Inclusion, RefractiveMedium};
use crate::reconstruct::{KGrid, KMask, Kappa, TracePath};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainSection {
    pub side: f64,
    pub grid_n: usize,
    pub c0: f64,
    pub alpha: f64,
}

impl Default for DomainSection {
    fn default() -> Self {
        DomainSection { side: 1.0, grid_n: 32, c0: 0.15, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundarySection {
    /// Faces forming the measured patch.
    pub faces: Vec<Face>,
}

impl Default for BoundarySection {
    fn default() -> Self {
        BoundarySection { faces: Face::ALL.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub omega: f64,
    /// `|l|` used for reconstruction.
    pub l: f64,
    /// `|l|` values of the finite-`|l|` sweep.
    pub l_sweep: Vec<f64>,
    pub path: TracePath,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection { omega: 0.75, l: 8.0, l_sweep: vec![4.0, 8.0, 16.0], path: TracePath::B }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Relative noise level on DN-difference traces.
    pub noise: f64,
    pub seed: u64,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection { noise: 0.0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Fit the normalization on a calibration phantom.
    Auto,
    One,
    InvOmegaSq,
    OmegaSq,
}

impl Calibration {
    /// The fixed normalization, if any.
    pub fn fixed(self) -> Option<Kappa> {
        match self {
            Calibration::Auto => None,
            Calibration::One => Some(Kappa::One),
            Calibration::InvOmegaSq => Some(Kappa::InvOmegaSq),
            Calibration::OmegaSq => Some(Kappa::OmegaSq),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconSection {
    pub kgrid: KGrid,
    /// Samples with `|k|` up to this bound enter the value fit.
    pub value_kmax: f64,
    pub threshold: f64,
    /// Tikhonov level relative to the largest singular value.
    pub lambda: f64,
    /// Deflation passes of the center refinement.
    pub refine_iterations: usize,
    pub calibration: Calibration,
}

impl Default for ReconSection {
    fn default() -> Self {
        ReconSection {
            kgrid: KGrid { kmax: 16.0, per_axis: 9, mask: KMask::Ball },
            value_kmax: 8.0,
            threshold: 0.5,
            lambda: DEFAULT_LAMBDA_REL,
            refine_iterations: 3,
            calibration: Calibration::Auto,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
    /// Emit PGM slices of `|I|`.
    pub pgm_slices: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "run".into(), pgm_slices: true }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSection,
    pub boundary: BoundarySection,
    pub background: Background,
    pub physics: PhysicsSection,
    pub data: DataSection,
    pub recon: ReconSection,
    pub output: OutputSection,
    pub inclusions: Vec<Inclusion>,
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, column)
}

impl RunConfig {
    /// Parses and validates a configuration document.
    pub fn parse_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
            Error::Parse { line, column, message: e.message().to_string() }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn medium(&self) -> Result<RefractiveMedium> {
        Ok(RefractiveMedium {
            domain: Domain::new(self.domain.side, self.domain.grid_n).map_err(|e| Error::Validation(e.to_string()))?,
            background: self.background.clone(),
            alpha: self.domain.alpha,
            inclusions: self.inclusions.clone(),
            c0: self.domain.c0,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(m));
        if self.domain.grid_n < 8 {
            return bad(format!("domain.grid_n = {} must be >= 8", self.domain.grid_n));
        }
        if !(self.domain.side > 0.0) {
            return bad("domain.side must be positive".into());
        }
        if !(self.domain.alpha > 0.0) || !(self.domain.c0 > 0.0) {
            return bad("domain.alpha and domain.c0 must be positive".into());
        }
        if self.boundary.faces.is_empty() {
            return bad("boundary.faces must not be empty".into());
        }
        if !(self.physics.omega > 0.0) {
            return bad("physics.omega must be positive".into());
        }
        if !(self.physics.l > 0.0) || self.physics.l_sweep.iter().any(|l| !(*l > 0.0)) {
            return bad("physics.l values must be positive".into());
        }
        if !(self.data.noise >= 0.0) {
            return bad("data.noise must be nonnegative".into());
        }
        if !(self.recon.lambda > 0.0) {
            return bad("recon.lambda must be positive".into());
        }
        if !(self.recon.threshold > 0.0 && self.recon.threshold <= 1.0) {
            return bad("recon.threshold must lie in (0, 1]".into());
        }
        self.recon.kgrid.validate().map_err(|e| Error::Validation(format!("recon.kgrid: {e}")))?;
        let report = validate_placement(&self.medium()?);
        if !report.is_ok() {
            return Err(Error::Placement(report));
        }
        Ok(())
    }

    /// Canonical TOML text; parsing it yields an equal config.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical text with the output directory cleared, hex encoded.
    pub fn hash(&self) -> String {
        let mut placed = self.clone();
        placed.output.dir.clear();
        Sha256::digest(placed.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::parse_str(&text)
}
