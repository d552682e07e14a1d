//! Experiment configuration files. Every section rejects unknown keys.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use transdiff::feynman_kac::CaseDescriptor;
use transdiff::sde::{LocalTimeMode, Scheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    FkCompare,
    DensityCheck,
    SpectralSuite,
    Aronson,
    Localtime,
    EnsembleDump,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::FkCompare => "fk-compare",
            Kind::DensityCheck => "density-check",
            Kind::SpectralSuite => "spectral-suite",
            Kind::Aronson => "aronson",
            Kind::Localtime => "localtime",
            Kind::EnsembleDump => "ensemble-dump",
        }
    }
}

#[derive(Deserialize)]
struct Head {
    experiment: Kind,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySpec {
    Hyperplane {
        normal: Vec<f64>,
        #[serde(default)]
        offset: f64,
    },
    Sphere {
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "yes")]
        plus_inside: bool,
    },
}

impl GeometrySpec {
    pub fn dimension(&self) -> usize {
        match self {
            GeometrySpec::Hyperplane { normal, .. } => normal.len(),
            GeometrySpec::Sphere { center, .. } => center.len(),
        }
    }
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `a = ε± I`.
    Diagonal { eps_plus: f64, eps_minus: f64 },
    /// Constant symmetric matrices on each side with declared bounds.
    Constant { a_plus: Vec<Vec<f64>>, a_minus: Vec<Vec<f64>>, lambda: f64, big_lambda: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub dt_bulk: f64,
    pub layer_halfwidth: f64,
    /// Ignored by experiments that derive the horizon from their probe times.
    #[serde(default)]
    pub horizon: Option<f64>,
    pub n_paths: usize,
    #[serde(default = "layer_skew")]
    pub scheme: Scheme,
    #[serde(default)]
    pub local_time_mode: Option<LocalTimeMode>,
}

fn layer_skew() -> Scheme {
    Scheme::LayerSkew
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkCompare {
    pub experiment: Kind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub case: CaseDescriptor,
    pub sim: SimSpec,
    /// Fraction of `‖u0‖∞` tolerated as discretization bias.
    pub bias_budget: f64,
    /// Rerun at `dt/2` and require the systematic part not to grow.
    #[serde(default)]
    pub richardson: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Oracle {
    pub t: f64,
    pub half_width: f64,
    pub cells: usize,
    #[serde(default = "oracle_dt")]
    pub dt: f64,
    #[serde(default = "oracle_tolerance")]
    pub tolerance: f64,
}

fn oracle_dt() -> f64 {
    1e-4
}

fn oracle_tolerance() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampler {
    pub draws: usize,
    pub dt: f64,
    #[serde(default)]
    pub start: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCheck {
    pub experiment: Kind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub times: Vec<f64>,
    pub starts: Vec<f64>,
    /// Oracle comparison from a point mass at the interface.
    #[serde(default)]
    pub oracle: Option<Oracle>,
    #[serde(default)]
    pub sampler: Option<Sampler>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineGrid {
    pub half_width: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralSuite {
    pub experiment: Kind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub eps_plus: f64,
    pub eps_minus: f64,
    pub grid: LineGrid,
    #[serde(default = "twenty")]
    pub n_pairs: usize,
    /// Declared ellipticity constant; defaults to `min(ε₊, ε₋)`.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub t_list: Option<Vec<f64>>,
}

fn twenty() -> usize {
    20
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aronson {
    pub experiment: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// `(ε₊, ε₋)` pairs.
    pub coefficients: Vec<(f64, f64)>,
    pub grid: LineGrid,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Localtime {
    pub experiment: Kind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub geometry: GeometrySpec,
    pub coefficients: CoefficientSpec,
    pub x0: Vec<f64>,
    pub sim: SimSpec,
    pub layer_halfwidths: Vec<f64>,
    /// Finite-volume `E[K_T]` for line problems through the origin.
    #[serde(default)]
    pub reference: Option<LineGrid>,
    #[serde(default = "ten_percent")]
    pub agreement: f64,
    #[serde(default = "five_percent")]
    pub trend: f64,
}

fn ten_percent() -> f64 {
    0.10
}

fn five_percent() -> f64 {
    0.05
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleDump {
    pub experiment: Kind,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub geometry: GeometrySpec,
    pub coefficients: CoefficientSpec,
    pub x0: Vec<f64>,
    pub sim: SimSpec,
    /// Also write every `(t, x, K)` sample of every path.
    #[serde(default)]
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub enum Experiment {
    FkCompare(FkCompare),
    DensityCheck(DensityCheck),
    SpectralSuite(SpectralSuite),
    Aronson(Aronson),
    Localtime(Localtime),
    EnsembleDump(EnsembleDump),
}

impl Experiment {
    pub fn parse(text: &str) -> Result<Self> {
        let head: Head = serde_json::from_str(text).context("reading the experiment kind")?;
        let kind = head.experiment;
        let ctx = || format!("invalid {} config", kind.name());
        Ok(match kind {
            Kind::FkCompare => Experiment::FkCompare(serde_json::from_str(text).with_context(ctx)?),
            Kind::DensityCheck => Experiment::DensityCheck(serde_json::from_str(text).with_context(ctx)?),
            Kind::SpectralSuite => Experiment::SpectralSuite(serde_json::from_str(text).with_context(ctx)?),
            Kind::Aronson => Experiment::Aronson(serde_json::from_str(text).with_context(ctx)?),
            Kind::Localtime => Experiment::Localtime(serde_json::from_str(text).with_context(ctx)?),
            Kind::EnsembleDump => Experiment::EnsembleDump(serde_json::from_str(text).with_context(ctx)?),
        })
    }

    pub fn kind(&self) -> Kind {
        match self {
            Experiment::FkCompare(c) => c.experiment,
            Experiment::DensityCheck(c) => c.experiment,
            Experiment::SpectralSuite(c) => c.experiment,
            Experiment::Aronson(c) => c.experiment,
            Experiment::Localtime(c) => c.experiment,
            Experiment::EnsembleDump(c) => c.experiment,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            Experiment::FkCompare(c) => c.seed,
            Experiment::DensityCheck(c) => c.seed,
            Experiment::SpectralSuite(c) => c.seed,
            Experiment::Aronson(c) => c.seed,
            Experiment::Localtime(c) => c.seed,
            Experiment::EnsembleDump(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Experiment::FkCompare(c) => c.seed = seed,
            Experiment::DensityCheck(c) => c.seed = seed,
            Experiment::SpectralSuite(c) => c.seed = seed,
            Experiment::Aronson(c) => c.seed = seed,
            Experiment::Localtime(c) => c.seed = seed,
            Experiment::EnsembleDump(c) => c.seed = seed,
        }
    }

    pub fn output_dir(&self) -> Option<&PathBuf> {
        match self {
            Experiment::FkCompare(c) => c.output_dir.as_ref(),
            Experiment::DensityCheck(c) => c.output_dir.as_ref(),
            Experiment::SpectralSuite(c) => c.output_dir.as_ref(),
            Experiment::Aronson(c) => c.output_dir.as_ref(),
            Experiment::Localtime(c) => c.output_dir.as_ref(),
            Experiment::EnsembleDump(c) => c.output_dir.as_ref(),
        }
    }
}

/// Checks that a list is nonempty with finite positive entries.
pub fn positive_list(name: &str, v: &[f64]) -> Result<()> {
    if v.is_empty() {
        bail!("{name} must not be empty");
    }
    if let Some(bad) = v.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        bail!("{name} entries must be positive and finite, got {bad}");
    }
    Ok(())
}
