//! Scenario files (JSON, `schema: 1`).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1::L1Config;
use crate::params::{EnvironmentSpec, ParamsFile};
use crate::plant::{FaultModel, UncertaintyConfig};
use crate::supervisor::{HpcFault, Mode, MonitorConfig};
use crate::synthesis::SynthesisConfig;

pub const SCHEMA_VERSION: u32 = 1;

/// One piece of the environment script: from `t` on the vehicle drives in
/// `env`. Tags without a stored model are unforeseen and need `k_true`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub t: f64,
    pub env: String,
    #[serde(default)]
    pub uncertainty: UncertaintyConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_true: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub theta: f64,
    #[serde(default = "default_eps_margin")]
    pub eps_margin: f64,
}

fn default_eps_margin() -> f64 {
    0.01
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig { theta: 0.35, eps_margin: 0.01 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HpcConfig {
    #[serde(default = "default_mode")]
    pub initial_mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<HpcFault>,
    /// when given, the plant follows these dynamics while the HPC is in charge
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault_model: Option<FaultModel>,
}

fn default_mode() -> Mode {
    Mode::Rhac
}

impl Default for HpcConfig {
    fn default() -> Self {
        HpcConfig { initial_mode: Mode::Rhac, fault: None, fault_model: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnerConfig {
    pub period: f64,
    pub window: f64,
    pub mu_learned: f64,
    #[serde(default = "default_cond_cap")]
    pub cond_cap: f64,
}

fn default_cond_cap() -> f64 {
    crate::learning::DEFAULT_COND_CAP
}

/// Precomputed gains and certificate for one environment (one gain per submodel).
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoredGains {
    pub F1: [[f64; 2]; 2],
    pub F2: [[f64; 2]; 2],
    pub P_bar: [[f64; 2]; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub description: String,
    pub params: ParamsFile,
    pub schedule: Vec<Segment>,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    /// gains per environment tag; environments missing here are synthesized on load
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub gains: BTreeMap<String, StoredGains>,
    #[serde(default)]
    pub envelope: EnvelopeConfig,
    #[serde(default)]
    pub l1: L1Config,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub hpc: HpcConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerConfig>,
    pub x0: [f64; 2],
    pub t_end: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_rate")]
    pub output_rate: f64,
    #[serde(default = "default_dwell")]
    pub dwell_min: f64,
    /// start of each segment exempt from the slip audit
    #[serde(default = "default_transient")]
    pub transient: f64,
    #[serde(default)]
    pub seed: u64,
    /// marks runs expected to keep the slip below the bound after transients
    #[serde(default)]
    pub safe: bool,
}

fn default_h() -> f64 {
    1e-3
}
fn default_rate() -> f64 {
    100.0
}
fn default_dwell() -> f64 {
    30.0
}
fn default_transient() -> f64 {
    10.0
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Scenario::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn stored(&self, tag: &str) -> Option<(usize, &EnvironmentSpec)> {
        self.params.environments.iter().enumerate().find(|(_, e)| e.tag == tag && e.k_sigma.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Scenario(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        self.params.validate()?;
        self.l1.validate()?;
        if self.schedule.is_empty() || self.schedule[0].t != 0.0 {
            return bad("schedule must start at t = 0".into());
        }
        for w in self.schedule.windows(2) {
            if w[1].t <= w[0].t {
                return bad("schedule times must increase".into());
            }
            if w[1].t - w[0].t < self.dwell_min {
                return bad(format!("segment at t = {} is shorter than dwell_min", w[0].t));
            }
        }
        if self.stored(&self.schedule[0].env).is_none() {
            return bad("the first segment must be a stored environment".into());
        }
        for s in &self.schedule {
            if self.stored(&s.env).is_none() {
                if !s.k_true.is_some_and(|k| k > 0.0) {
                    return bad(format!("unforeseen segment {} needs a positive k_true", s.env));
                }
                if self.learner.is_none() {
                    return bad(format!("unforeseen segment {} needs a learner section", s.env));
                }
            }
            s.uncertainty.resolve(&self.params.vehicle)?;
        }
        if !(self.h > 0.0 && self.t_end > 0.0 && self.output_rate > 0.0) {
            return bad("h, t_end and output_rate must be positive".into());
        }
        if !(self.envelope.theta > 0.0 && self.envelope.theta < 1.0) {
            return bad("theta must lie in (0, 1)".into());
        }
        if let Some(l) = &self.learner {
            if self.h > l.period / 2.0 {
                return bad("integrator step must be at most half the learner period".into());
            }
            let ratio = l.period / self.h;
            if (ratio - ratio.round()).abs() > 1e-6 {
                return bad("learner period must be an integer multiple of h".into());
            }
            if crate::learning::window_samples(l.window, l.period) < 4 {
                return bad("learner window must hold at least 4 periods".into());
            }
        }
        Ok(())
    }

    /// Index of the segment active at `t`.
    pub fn segment_at(&self, t: f64) -> usize {
        self.schedule.iter().rposition(|s| s.t <= t).unwrap_or(0)
    }
}
