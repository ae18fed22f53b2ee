//! Experiment configuration: parsing, validation, hashing and conversion into
//! core instances.

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use rsmd_core::geometry::{CompositePenalty, FeasibleSet, GeometryKind, Norm};
use rsmd_core::problems::{make_instance, LinearTerm, MatrixSpec};
use rsmd_core::truncation::tau_window_max;
use rsmd_core::{Instance, InstanceSpec, NoiseKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryChoice {
    Euclidean,
    L1,
}

impl GeometryChoice {
    pub fn kind(self) -> GeometryKind {
        match self {
            GeometryChoice::Euclidean => GeometryKind::Euclidean,
            GeometryChoice::L1 => GeometryKind::L1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    L2,
    L1,
}

/// A scalar broadcast to every coordinate, or an explicit vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Fill {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl Fill {
    pub fn expand(&self, n: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Fill::Scalar(v) => Ok(vec![*v; n]),
            Fill::Vector(v) => {
                ensure!(v.len() == n, "{what}: expected {n} entries, found {}", v.len());
                Ok(v.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetConfig {
    /// Norm ball; the norm defaults to the geometry's.
    Ball {
        radius: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Fill>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        norm: Option<NormChoice>,
    },
    Box { lower: Fill, upper: Fill },
    Simplex {
        #[serde(default = "one")]
        scale: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumConfig {
    /// Eigenvalues spaced evenly in `[min, max]`.
    Linear { min: f64, max: f64 },
    Explicit { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LinearConfig {
    Zero,
    /// Unconstrained minimizer of the smooth part.
    Minimizer { point: Fill },
    Explicit { b: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyConfig {
    Zero,
    L1 { weight: f64 },
    Power { weight: f64, exponent: f64 },
    NegEntropy { weight: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub dim: usize,
    pub geometry: GeometryChoice,
    pub set: SetConfig,
    pub spectrum: SpectrumConfig,
    #[serde(default = "linear_zero")]
    pub linear: LinearConfig,
    #[serde(default = "penalty_zero")]
    pub penalty: PenaltyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Fill>,
    /// Seed for the random eigenbasis.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseConfig {
    None,
    Gaussian { sigma: f64 },
    StudentT { sigma: f64, dof: f64 },
    Pareto { sigma: f64, tail: f64 },
}

impl NoiseConfig {
    pub fn kind(&self) -> NoiseKind {
        match *self {
            NoiseConfig::None => NoiseKind::None,
            NoiseConfig::Gaussian { .. } => NoiseKind::Gaussian,
            NoiseConfig::StudentT { dof, .. } => NoiseKind::StudentT { dof },
            NoiseConfig::Pareto { tail, .. } => NoiseKind::Pareto { tail },
        }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseConfig::None => 0.0,
            NoiseConfig::Gaussian { sigma }
            | NoiseConfig::StudentT { sigma, .. }
            | NoiseConfig::Pareto { sigma, .. } => sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rsmd,
    SmdUntruncated,
    Multistage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Threshold {
    Tau,
    Universal,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AnchorConfig {
    /// Exact gradient at the proxy center.
    Exact,
    /// Geometric median of `ceil(10 tau)` oracle calls at the proxy center.
    /// `upsilon_sigma` is the dual-norm error budget assumed for it.
    Median { upsilon_sigma: f64 },
}

impl AnchorConfig {
    pub fn error_budget(&self) -> f64 {
        match *self {
            AnchorConfig::Exact => 0.0,
            AnchorConfig::Median { upsilon_sigma } => upsilon_sigma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultistageConfig {
    /// Initial radius; defaults to the radius of the set about the proxy center.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r0: Option<f64>,
    /// Growth constant; defaults to the instance's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default = "c1")]
    pub c1: f64,
    #[serde(default = "c2")]
    pub c2: f64,
}

impl Default for MultistageConfig {
    fn default() -> Self {
        MultistageConfig { r0: None, kappa: None, c1: c1(), c2: c2() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub instance: InstanceConfig,
    pub noise: NoiseConfig,
    pub method: Method,
    #[serde(default = "threshold_tau")]
    pub threshold: Threshold,
    /// Oracle budget `N`.
    pub iterations: usize,
    pub taus: Vec<f64>,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "anchor_exact")]
    pub anchor: AnchorConfig,
    #[serde(default)]
    pub multistage: MultistageConfig,
    /// Constant of the universal-threshold bound.
    #[serde(default = "c2")]
    pub universal_constant: f64,
    /// Replications whose full trajectory is written to `traces/`.
    #[serde(default = "one_usize")]
    pub trace_replications: usize,
    /// Whether coverage rows count towards the exit code.
    #[serde(default = "yes")]
    pub assert: bool,
    /// Not part of the hash.
    #[serde(default, skip_serializing)]
    pub out_dir: Option<String>,
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn c1() -> f64 {
    rsmd_core::multistage::DEFAULT_C1
}
fn c2() -> f64 {
    rsmd_core::multistage::DEFAULT_C2
}
fn linear_zero() -> LinearConfig {
    LinearConfig::Zero
}
fn penalty_zero() -> PenaltyConfig {
    PenaltyConfig::Zero
}
fn threshold_tau() -> Threshold {
    Threshold::Tau
}
fn anchor_exact() -> AnchorConfig {
    AnchorConfig::Exact
}

impl ExperimentConfig {
    /// Reads JSON or TOML, chosen by extension; unknown extensions try both.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        let cfg = match ext {
            "json" => Self::from_json(&text)?,
            "toml" => Self::from_toml(&text)?,
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text))?,
        };
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).context("parsing JSON config")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).context("parsing TOML config")
    }

    /// Canonical JSON of everything that affects results.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        format!("{digest:x}")[..16].to_string()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.instance.dim;
        ensure!(n >= 1, "instance.dim must be positive");
        ensure!(self.iterations >= 1, "iterations must be positive");
        ensure!(self.replications >= 1, "replications must be positive");
        ensure!(!self.taus.is_empty(), "taus must not be empty");
        ensure!(self.trace_replications <= self.replications, "trace_replications exceeds replications");
        let sigma = self.noise.sigma();
        ensure!(sigma.is_finite() && sigma >= 0.0, "noise sigma must be finite and nonnegative");
        self.noise.kind().validate()?;
        let upsilon_sigma = self.anchor.error_budget();
        ensure!(upsilon_sigma.is_finite() && upsilon_sigma >= 0.0, "anchor error budget must be nonnegative");
        let upsilon = if sigma > 0.0 { upsilon_sigma / sigma } else { 0.0 };
        // stage budgets are checked when the schedule is built
        let max = tau_window_max(self.iterations, upsilon);
        for &tau in &self.taus {
            ensure!(tau.is_finite() && tau >= 1.0, "tau {tau} must be at least 1");
            if self.method != Method::Multistage {
                ensure!(tau <= max, "tau {tau} outside [1, {max}] for N = {}", self.iterations);
            }
        }
        ensure!(self.universal_constant > 0.0, "universal_constant must be positive");
        let ms = &self.multistage;
        ensure!(ms.c1 > 0.0 && ms.c2 > 0.0, "multistage constants must be positive");
        if let Some(r0) = ms.r0 {
            ensure!(r0 > 0.0, "multistage.r0 must be positive");
        }
        if let Some(k) = ms.kappa {
            ensure!(k > 0.0, "multistage.kappa must be positive");
        }
        if self.method == Method::Multistage && self.threshold == Threshold::Universal {
            bail!("the multistage method uses tau-matched thresholds only");
        }
        // instance construction checks the rest
        self.build_instance()?;
        Ok(())
    }

    pub fn instance_spec(&self) -> Result<InstanceSpec> {
        let ic = &self.instance;
        let n = ic.dim;
        let kind = ic.geometry.kind();
        let set = match &ic.set {
            SetConfig::Ball { radius, center, norm } => {
                let c = match center {
                    Some(c) => c.expand(n, "set.center")?,
                    None => vec![0.0; n],
                };
                let norm = match norm {
                    Some(NormChoice::L2) => Norm::L2,
                    Some(NormChoice::L1) => Norm::L1,
                    None => kind.norm(),
                };
                FeasibleSet::ball(norm, c, *radius)?
            }
            SetConfig::Box { lower, upper } => {
                FeasibleSet::boxed(lower.expand(n, "set.lower")?, upper.expand(n, "set.upper")?)?
            }
            SetConfig::Simplex { scale } => FeasibleSet::simplex(n, *scale)?,
        };
        let spectrum = match &ic.spectrum {
            SpectrumConfig::Linear { min, max } => {
                if n == 1 {
                    vec![*max]
                } else {
                    (0..n).map(|i| min + (max - min) * i as f64 / (n - 1) as f64).collect()
                }
            }
            SpectrumConfig::Explicit { values } => values.clone(),
        };
        let mut spec = InstanceSpec::new(MatrixSpec::Spectrum(spectrum), set, kind);
        spec.linear = match &ic.linear {
            LinearConfig::Zero => LinearTerm::Zero,
            LinearConfig::Minimizer { point } => LinearTerm::Minimizer(point.expand(n, "linear.point")?),
            LinearConfig::Explicit { b } => LinearTerm::Explicit(b.clone()),
        };
        spec.penalty = match ic.penalty {
            PenaltyConfig::Zero => CompositePenalty::Zero,
            PenaltyConfig::L1 { weight } => CompositePenalty::L1 { weight },
            PenaltyConfig::Power { weight, exponent } => CompositePenalty::Power { weight, exponent },
            PenaltyConfig::NegEntropy { weight } => CompositePenalty::NegEntropy { weight },
        };
        spec.center = ic.center.as_ref().map(|c| c.expand(n, "instance.center")).transpose()?;
        spec.noise = self.noise.kind();
        spec.sigma = self.noise.sigma();
        spec.seed = ic.seed;
        Ok(spec)
    }

    pub fn build_instance(&self) -> Result<Instance> {
        Ok(make_instance(&self.instance_spec()?)?)
    }
}
