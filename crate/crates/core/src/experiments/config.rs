use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::GraphSpec;
use crate::kernels::KernelSpec;
use crate::sampling::{Embedding, MetricOrder, SigmaDiag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Converge,
    SweepR,
    Detect,
    Bias,
    Theory,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Mode::Converge => "converge",
            Mode::SweepR => "sweep-r",
            Mode::Detect => "detect",
            Mode::Bias => "bias",
            Mode::Theory => "theory",
        };
        f.write_str(s)
    }
}

/// One radius or a sweep list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Radius {
    Single(f64),
    Sweep(Vec<f64>),
}

impl Radius {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Radius::Single(r) => vec![*r],
            Radius::Sweep(v) => v.clone(),
        }
    }
}

/// `"auto"` or a positive number.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DeltaSetting {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for DeltaSetting {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            DeltaSetting::Auto => s.serialize_str("auto"),
            DeltaSetting::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for DeltaSetting {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(DeltaSetting::Fixed(v)),
            Raw::Str(s) if s == "auto" => Ok(DeltaSetting::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!("delta must be a number or \"auto\", got {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectSection {
    pub models: Vec<Embedding>,
    pub noise_sigmas: Vec<f64>,
    /// Grid size for the 1-D reference solver.
    pub reference_nodes: usize,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            models: vec![Embedding::Identity, Embedding::Sine],
            noise_sigmas: vec![0.0, 0.1, 0.25, 0.5, 1.0, 2.0, 3.0],
            reference_nodes: 4000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiasSection {
    pub radii: Vec<f64>,
    /// Hermite multi-index of the test eigenfunction.
    pub index: Vec<usize>,
    /// Sample size defining the bulk box `B_1`.
    pub bulk_n: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        Self { radii: vec![0.2, 0.1, 0.05, 0.025], index: vec![2], bulk_n: 5000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheorySection {
    pub count: usize,
}

impl Default for TheorySection {
    fn default() -> Self {
        Self { count: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub dense_max: usize,
    pub growth_cap: usize,
}

impl Default for SolverSection {
    fn default() -> Self {
        let o = crate::eigen::SolverOptions::default();
        Self { dense_max: o.dense_max, growth_cap: o.growth_cap }
    }
}

/// Flat key-value experiment description with one level of tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub n: usize,
    pub d: usize,
    /// Per-coordinate standard deviations; a single value is broadcast to `d`.
    pub sigma: Vec<f64>,
    /// Per-coordinate variances; overrides `sigma` when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
    pub r_n: Radius,
    #[serde(default = "default_p")]
    pub p: MetricOrder,
    #[serde(default)]
    pub kernel: KernelSpec,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(default)]
    pub delta: DeltaSetting,
    pub repetitions: usize,
    pub seed: u64,
    #[serde(default)]
    pub detect: DetectSection,
    #[serde(default)]
    pub bias: BiasSection,
    #[serde(default)]
    pub theory: TheorySection,
    #[serde(default)]
    pub solver: SolverSection,
}

fn default_p() -> MetricOrder {
    MetricOrder::L2
}

pub const PRESETS: &[&str] = &["fig1"];

impl ExperimentConfig {
    /// Built-in defaults by name, adjusted for the requested mode.
    pub fn preset(name: &str, mode: Mode) -> Result<Self> {
        if name != "fig1" {
            return Err(Error::Config(format!("unknown preset {name:?}; known: {PRESETS:?}")));
        }
        let mut c = Self {
            mode,
            n: 5000,
            d: 1,
            sigma: vec![1.0],
            variances: None,
            r_n: Radius::Single(0.05),
            p: MetricOrder::L2,
            kernel: KernelSpec::ConstantOne,
            m: 6,
            delta: DeltaSetting::Auto,
            repetitions: 100,
            seed: 20240917,
            detect: DetectSection::default(),
            bias: BiasSection::default(),
            theory: TheorySection::default(),
            solver: SolverSection::default(),
        };
        match mode {
            Mode::SweepR => {
                c.r_n = Radius::Sweep(vec![0.005, 0.02, 0.05, 0.1, 0.3, 0.5]);
                c.repetitions = 20;
            }
            Mode::Detect => c.repetitions = 20,
            Mode::Bias | Mode::Theory | Mode::Converge => {}
        }
        Ok(c)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.m == 0 {
            return Err(Error::Config("M must be at least 1".into()));
        }
        if self.d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        self.sigma_diag()?;
        let radii = self.r_n.values();
        if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config("r_n must be positive".into()));
        }
        if let Radius::Sweep(v) = &self.r_n {
            strictly_monotone(v, "r_n")?;
        }
        if let DeltaSetting::Fixed(v) = self.delta {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config("delta must be positive".into()));
            }
        }
        self.kernel.validate()?;
        match self.mode {
            Mode::Detect => {
                if self.d != 1 {
                    return Err(Error::Config("detect runs are one-dimensional".into()));
                }
                if self.detect.models.is_empty() || self.detect.noise_sigmas.is_empty() {
                    return Err(Error::Config("detect needs at least one model and one noise level".into()));
                }
                strictly_monotone(&self.detect.noise_sigmas, "detect.noise_sigmas")?;
                for e in &self.detect.models {
                    e.monotone_direction()?;
                }
            }
            Mode::Bias => {
                if self.bias.index.len() != self.d {
                    return Err(Error::Config("bias.index length must equal d".into()));
                }
                strictly_monotone(&self.bias.radii, "bias.radii")?;
            }
            _ => {}
        }
        Ok(())
    }

    pub fn sigma_diag(&self) -> Result<SigmaDiag> {
        if let Some(v) = &self.variances {
            return match v.len() {
                1 => SigmaDiag::new(vec![v[0]; self.d]),
                k if k == self.d => SigmaDiag::new(v.clone()),
                k => Err(Error::Config(format!("variances has {k} entries for d = {}", self.d))),
            };
        }
        let std = match self.sigma.len() {
            1 => vec![self.sigma[0]; self.d],
            k if k == self.d => self.sigma.clone(),
            k => return Err(Error::Config(format!("sigma has {k} entries for d = {}", self.d))),
        };
        SigmaDiag::from_std(&std)
    }

    pub fn graph_spec(&self, radius: f64) -> GraphSpec {
        GraphSpec::hard(radius, self.p, self.kernel.clone())
    }

    pub fn solver_options(&self) -> crate::eigen::SolverOptions {
        crate::eigen::SolverOptions {
            dense_max: self.solver.dense_max,
            growth_cap: self.solver.growth_cap,
            seed: self.seed,
            ..Default::default()
        }
    }
}

fn strictly_monotone(v: &[f64], name: &str) -> Result<()> {
    let inc = v.windows(2).all(|w| w[1] > w[0]);
    let dec = v.windows(2).all(|w| w[1] < w[0]);
    if inc || dec {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be strictly monotone")))
    }
}
