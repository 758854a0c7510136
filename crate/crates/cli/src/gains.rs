//! Gains file (`synthesize` output, `verify` / `bounds dwell` input) and
//! dotted-key scenario overrides.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use l1simplex_core::linalg::{mat2, rows, Mat2};
use l1simplex_core::sim::scenario::StoredGains;
use l1simplex_core::sim::Scenario;
use l1simplex_core::synthesis::{EnvSolution, Margins};

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainEntry {
    pub F1: [[f64; 2]; 2],
    pub F2: [[f64; 2]; 2],
    pub P_bar: [[f64; 2]; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub margins: Option<Margins>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_max_sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

pub type GainsFile = BTreeMap<String, GainEntry>;

impl GainEntry {
    pub fn from_solution(sol: &EnvSolution) -> Self {
        GainEntry {
            F1: rows(&sol.gains[0]),
            F2: rows(&sol.gains[1]),
            P_bar: rows(&sol.p_bar),
            margins: Some(sol.margins.clone()),
            lambda_max_sigma: Some(sol.cert.lambda_max_sigma),
            gamma: Some(sol.gamma),
        }
    }

    pub fn gains(&self) -> [Mat2; 2] {
        [mat2(self.F1), mat2(self.F2)]
    }

    pub fn p_bar(&self) -> Mat2 {
        mat2(self.P_bar)
    }

    pub fn stored(&self) -> StoredGains {
        StoredGains { F1: self.F1, F2: self.F2, P_bar: self.P_bar }
    }
}

/// Applies `key.path=value` overrides to a scenario. Keys must name fields of
/// the fully defaulted scenario; array elements are addressed by index.
pub fn apply_overrides(sc: &Scenario, sets: &[String]) -> Result<Scenario> {
    if sets.is_empty() {
        return Ok(sc.clone());
    }
    let mut root = serde_json::to_value(sc)?;
    for s in sets {
        let (key, raw) = s.split_once('=').ok_or_else(|| anyhow!("override {s:?} is not key=value"))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut node = &mut root;
        for part in key.split('.') {
            node = match node {
                Value::Object(map) => map.get_mut(part),
                Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)),
                _ => None,
            }
            .ok_or_else(|| anyhow!("unknown override key {key:?}"))?;
        }
        *node = value;
    }
    let text = root.to_string();
    Scenario::from_json(&text).context("scenario invalid after overrides")
}

pub fn parse_pair(s: &str) -> Result<[f64; 2]> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        bail!("expected two comma-separated numbers, got {s:?}");
    }
    Ok([parts[0].trim().parse()?, parts[1].trim().parse()?])
}
