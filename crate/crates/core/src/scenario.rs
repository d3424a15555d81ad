//! Scenario files: one JSON document per scenario.
//!
//! ```json
//! {
//!   "primitives": {"r": 0.05, "mode": "exogenous_arrival", "lambda_bar": 0.8},
//!   "policy": {"b": 0.4, "phi": 0.5},
//!   "offer_dist": {"family": "truncated_lognormal", "mu": 0.0, "sigma": 0.5, "lo": 0.2, "hi": 5.0},
//!   "prior_dist": {"family": "uniform", "lo": 0.5, "hi": 3.0}
//! }
//! ```
//!
//! Without `"T"` the tax is balanced automatically. `"b"` takes either a
//! number or a schedule object (`constant`, `affine`, `table`).

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dist::{Distribution, DistributionSpec};
use crate::error::{Error, Result};
use crate::model::{BenefitSchedule, Primitives, WIPolicy};
use crate::oracle::SimConfig;
use crate::root::RootOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BenefitInput {
    Level(f64),
    Schedule(BenefitSchedule),
}

impl BenefitInput {
    fn schedule(&self) -> BenefitSchedule {
        match self {
            BenefitInput::Level(v) => BenefitSchedule::constant(*v),
            BenefitInput::Schedule(s) => s.clone(),
        }
    }
}

impl Default for BenefitInput {
    fn default() -> Self {
        BenefitInput::Level(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default)]
    pub b: BenefitInput,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub tax: Option<f64>,
    pub phi: f64,
    /// Defaults to `true` when `T` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub balance_tax: Option<bool>,
}

fn default_n_z() -> usize {
    201
}
fn default_n_w() -> usize {
    2001
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n_z")]
    pub n_z: usize,
    /// Wage nodes for value iteration.
    #[serde(default = "default_n_w")]
    pub n_w: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_z: default_n_z(),
            n_w: default_n_w(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub root: f64,
    pub quad: f64,
    /// Relative welfare gap between the two economies.
    pub equiv: f64,
    pub reservation: f64,
    pub effort: f64,
    pub budget: f64,
    pub surplus_match: f64,
    pub derivative: f64,
    pub pooling: f64,
    pub welfare_forms: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            root: 1e-12,
            quad: 1e-10,
            equiv: 1e-6,
            reservation: 1e-8,
            effort: 1e-6,
            budget: 1e-9,
            surplus_match: 1e-6,
            derivative: 1e-4,
            pooling: 1e-10,
            welfare_forms: 1e-8,
        }
    }
}

impl Tolerances {
    fn entries(&self) -> [(&'static str, f64); 10] {
        [
            ("root", self.root),
            ("quad", self.quad),
            ("equiv", self.equiv),
            ("reservation", self.reservation),
            ("effort", self.effort),
            ("budget", self.budget),
            ("surplus_match", self.surplus_match),
            ("derivative", self.derivative),
            ("pooling", self.pooling),
            ("welfare_forms", self.welfare_forms),
        ]
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("tolerances.{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub path: String,
    pub values: Vec<f64>,
}

/// Raw document as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub primitives: Primitives,
    pub policy: PolicyConfig,
    pub offer_dist: DistributionSpec,
    pub prior_dist: DistributionSpec,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub raw: ScenarioConfig,
    pub prim: Primitives,
    pub policy: WIPolicy,
    pub balance_tax: bool,
    pub offer: Distribution,
    pub prior: Distribution,
    pub n_z: usize,
    pub n_w: usize,
    pub tol: Tolerances,
    pub sim: Option<SimConfig>,
}

/// Paths a sweep may vary.
pub const SWEEP_PATHS: &[&str] = &[
    "policy.phi",
    "policy.T",
    "policy.b",
    "primitives.r",
    "primitives.lambda_bar",
    "primitives.kappa",
    "primitives.eta",
];

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

pub fn parse_config(text: &str) -> Result<Scenario> {
    let raw: ScenarioConfig = serde_json::from_str(text).map_err(config_err)?;
    Scenario::from_raw(raw)
}

pub fn load_config(path: &std::path::Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config(&text)
}

impl Scenario {
    pub fn from_raw(raw: ScenarioConfig) -> Result<Self> {
        // Parameter errors are reported as config errors naming the key.
        let named = |section: &str, e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::Config(format!("{section}.{name}: {reason}")),
            e => Error::Config(e.to_string()),
        };
        let prim = raw.primitives;
        prim.validate().map_err(|e| named("primitives", e))?;
        let benefit = raw.policy.b.schedule();
        let policy = WIPolicy::new(benefit, raw.policy.tax.unwrap_or(0.0), raw.policy.phi);
        policy.validate(prim.mode).map_err(|e| named("policy", e))?;
        let balance_tax = raw.policy.balance_tax.unwrap_or(raw.policy.tax.is_none());
        let offer = Distribution::new(raw.offer_dist.clone()).map_err(|e| named("offer_dist", e))?;
        let prior = Distribution::new(raw.prior_dist.clone()).map_err(|e| named("prior_dist", e))?;
        if raw.grid.n_z < 51 {
            return Err(Error::Config("grid.n_z must be at least 51".into()));
        }
        if raw.grid.n_w < 3 {
            return Err(Error::Config("grid.n_w must be at least 3".into()));
        }
        raw.tolerances.validate()?;
        if let Some(sim) = &raw.sim {
            sim.validate(prim.r).map_err(config_err)?;
        }
        if let Some(sw) = &raw.sweep {
            if !SWEEP_PATHS.contains(&sw.path.as_str()) {
                return Err(Error::Config(format!(
                    "sweep.path `{}` is not one of {}",
                    sw.path,
                    SWEEP_PATHS.join(", ")
                )));
            }
            if sw.values.is_empty() {
                return Err(Error::Config("sweep.values must not be empty".into()));
            }
        }
        Ok(Self {
            prim,
            policy,
            balance_tax,
            offer,
            prior,
            n_z: raw.grid.n_z,
            n_w: raw.grid.n_w,
            tol: raw.tolerances,
            sim: raw.sim,
            raw,
        })
    }

    pub fn root_options(&self) -> RootOptions {
        RootOptions::with_ftol(self.tol.root)
    }

    /// The same scenario with one swept parameter replaced.
    pub fn with_override(&self, path: &str, value: f64) -> Result<Self> {
        let mut doc = serde_json::to_value(&self.raw).map_err(config_err)?;
        let (section, key) = path
            .split_once('.')
            .filter(|_| SWEEP_PATHS.contains(&path))
            .ok_or_else(|| Error::Config(format!("unsupported sweep path `{path}`")))?;
        let obj = doc
            .get_mut(section)
            .and_then(Value::as_object_mut)
            .ok_or_else(|| Error::Config(format!("missing section `{section}`")))?;
        obj.insert(key.to_string(), Value::from(value));
        if let Some(root) = doc.as_object_mut() {
            root.remove("sweep");
        }
        let raw: ScenarioConfig = serde_json::from_value(doc).map_err(config_err)?;
        Self::from_raw(raw)
    }
}
