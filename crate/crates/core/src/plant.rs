//! Real vehicle dynamics: the switched linear part plus scripted uncertainty.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{mat2, Mat2, Vec2, B};
use crate::params::VehicleParams;
use crate::vehicle::{a_matrix, Submodel};

/// One basis product `coeff · wᵃ · vᵇ · sin(·w) · cos(·w) · sin(·v) · cos(·v) · sin(·t) · cos(·t)`.
/// Each trigonometric factor is present only when its frequency is given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    #[serde(default)]
    pub w_pow: u32,
    #[serde(default)]
    pub v_pow: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sin_t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cos_t: Option<f64>,
}

impl Term {
    pub fn constant(c: f64) -> Self {
        Term { coeff: c, ..Default::default() }
    }

    pub fn eval(&self, w: f64, v: f64, t: f64) -> f64 {
        let mut y = self.coeff * w.powi(self.w_pow as i32) * v.powi(self.v_pow as i32);
        if let Some(a) = self.sin_w {
            y *= (a * w).sin();
        }
        if let Some(a) = self.cos_w {
            y *= (a * w).cos();
        }
        if let Some(a) = self.sin_v {
            y *= (a * v).sin();
        }
        if let Some(a) = self.cos_v {
            y *= (a * v).cos();
        }
        if let Some(a) = self.sin_t {
            y *= (a * t).sin();
        }
        if let Some(a) = self.cos_t {
            y *= (a * t).cos();
        }
        y
    }

    fn scaled(mut self, s: f64) -> Self {
        self.coeff *= s;
        self
    }
}

/// Axis-aligned state box on which the declared bounds are claimed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub w: [f64; 2],
    pub v: [f64; 2],
}

impl Default for Region {
    fn default() -> Self {
        Region { w: [0.0, 60.0], v: [0.0, 20.0] }
    }
}

/// Uncertainty `f(x, t) = [f_w, f_v]` entering the state derivative, with its
/// declared Lipschitz constant `l` and offset bound `b` on `region`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySpec {
    #[serde(default)]
    pub f_w: Vec<Term>,
    #[serde(default)]
    pub f_v: Vec<Term>,
    #[serde(default)]
    pub l: f64,
    #[serde(default)]
    pub b: f64,
    #[serde(default)]
    pub region: Region,
}

impl UncertaintySpec {
    pub fn none() -> Self {
        UncertaintySpec::default()
    }

    /// Builds the derivative-level uncertainty from raw wheel torque and
    /// longitudinal force disturbances: `f_w = −f̃_w/J`, `f_v = f̃_v/m`.
    pub fn from_raw(raw_w: Vec<Term>, raw_v: Vec<Term>, p: &VehicleParams, l: f64, b: f64, region: Region) -> Self {
        UncertaintySpec {
            f_w: raw_w.into_iter().map(|t| t.scaled(-1.0 / p.J)).collect(),
            f_v: raw_v.into_iter().map(|t| t.scaled(1.0 / p.m)).collect(),
            l,
            b,
            region,
        }
    }

    pub fn eval(&self, x: &Vec2, t: f64) -> Vec2 {
        let (w, v) = (x[0], x[1]);
        Vec2::new(
            self.f_w.iter().map(|c| c.eval(w, v, t)).sum(),
            self.f_v.iter().map(|c| c.eval(w, v, t)).sum(),
        )
    }

    pub fn is_zero(&self) -> bool {
        self.f_w.is_empty() && self.f_v.is_empty()
    }

    /// Named presets for the road disturbances used in the shipped scenarios.
    pub fn preset(name: &str, p: &VehicleParams) -> Result<Self> {
        let term = |coeff: f64| Term::constant(coeff);
        let region = Region::default();
        let spec = match name {
            "none" => UncertaintySpec::none(),
            // f̃_w = 0.01v² + 0.5cos t, f̃_v = 0.05 sin(5w) sin t
            "snow" => UncertaintySpec::from_raw(
                vec![Term { v_pow: 2, ..term(0.01) }, Term { cos_t: Some(1.0), ..term(0.5) }],
                vec![Term { sin_w: Some(5.0), sin_t: Some(1.0), ..term(0.05) }],
                p,
                0.1,
                0.11,
                region,
            ),
            // f̃_w = 0.05v + 0.1cos v, f̃_v = 0.5 sin v sin t
            "icy" => UncertaintySpec::from_raw(
                vec![Term { v_pow: 1, ..term(0.05) }, Term { cos_v: Some(1.0), ..term(0.1) }],
                vec![Term { sin_v: Some(1.0), sin_t: Some(1.0), ..term(0.5) }],
                p,
                0.035,
                0.025,
                region,
            ),
            // f̃_w = 0.005v² + 0.5cos 5t, f̃_v = 0.05 sin v sin t
            "icy_mild" => UncertaintySpec::from_raw(
                vec![Term { v_pow: 2, ..term(0.005) }, Term { cos_t: Some(5.0), ..term(0.5) }],
                vec![Term { sin_v: Some(1.0), sin_t: Some(1.0), ..term(0.05) }],
                p,
                0.05,
                0.11,
                region,
            ),
            // f̃_w = −0.3v² + 3cos 5t, f̃_v = 3 sin v sin t
            "unforeseen" => UncertaintySpec::from_raw(
                vec![Term { v_pow: 2, ..term(-0.3) }, Term { cos_t: Some(5.0), ..term(3.0) }],
                vec![Term { sin_v: Some(1.0), sin_t: Some(1.0), ..term(3.0) }],
                p,
                2.5,
                0.61,
                region,
            ),
            other => return Err(Error::InvalidParameter(format!("unknown uncertainty preset {other}"))),
        };
        Ok(spec)
    }
}

/// Scenario-level uncertainty entry: a named preset or an explicit table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum UncertaintyConfig {
    Preset { preset: String },
    Table(UncertaintySpec),
}

impl UncertaintyConfig {
    pub fn resolve(&self, p: &VehicleParams) -> Result<UncertaintySpec> {
        match self {
            UncertaintyConfig::Preset { preset } => UncertaintySpec::preset(preset, p),
            UncertaintyConfig::Table(s) => Ok(s.clone()),
        }
    }
}

impl Default for UncertaintyConfig {
    fn default() -> Self {
        UncertaintyConfig::Preset { preset: "none".into() }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundCheck {
    pub max_ratio_lipschitz: f64,
    pub max_offset: f64,
    pub lipschitz_violations: usize,
    pub offset_violations: usize,
}

/// Samples random state pairs in the declared region and random times and
/// checks `‖f(0,t)‖ ≤ b` and `‖f(x₁,t) − f(x₂,t)‖ ≤ l‖x₁ − x₂‖`.
pub fn check_bounds<R: Rng>(spec: &UncertaintySpec, samples: usize, t_max: f64, rng: &mut R) -> BoundCheck {
    let mut out = BoundCheck::default();
    let reg = spec.region;
    let draw = |rng: &mut R| {
        Vec2::new(rng.random_range(reg.w[0]..=reg.w[1]), rng.random_range(reg.v[0]..=reg.v[1]))
    };
    for _ in 0..samples {
        let t = rng.random_range(0.0..=t_max);
        let x1 = draw(rng);
        let x2 = draw(rng);
        let off = spec.eval(&Vec2::zeros(), t).norm();
        out.max_offset = out.max_offset.max(off);
        if off > spec.b {
            out.offset_violations += 1;
        }
        let d = (x1 - x2).norm();
        if d > 0.0 {
            let ratio = (spec.eval(&x1, t) - spec.eval(&x2, t)).norm() / d;
            out.max_ratio_lipschitz = out.max_ratio_lipschitz.max(ratio);
            if ratio > spec.l {
                out.lipschitz_violations += 1;
            }
        }
    }
    out
}

/// Dynamics of the real vehicle in one normal environment.
#[derive(Clone, Debug)]
pub struct Plant {
    pub k: f64,
    pub params: VehicleParams,
    pub uncertainty: UncertaintySpec,
}

impl Plant {
    pub fn new(k: f64, params: VehicleParams, uncertainty: UncertaintySpec) -> Self {
        Plant { k, params, uncertainty }
    }

    pub fn submodel(&self, x: &Vec2) -> Submodel {
        Submodel::from_state(x[0], x[1], self.params.r)
    }

    /// `A_{σⁱ} x + B u + f₀(x, t)` with the submodel read from the state.
    pub fn derivative(&self, x: &Vec2, u: f64, t: f64) -> Vec2 {
        self.derivative_in(self.submodel(x), x, u, t)
    }

    /// Same as [`Plant::derivative`] but with the submodel forced, as used
    /// while integrating up to a located boundary crossing.
    pub fn derivative_in(&self, sub: Submodel, x: &Vec2, u: f64, t: f64) -> Vec2 {
        a_matrix(self.k, sub, &self.params) * x + B * u + self.uncertainty.eval(x, t)
    }
}

/// Dynamics while the high-performance controller is in charge and faulty.
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    pub A_hpc: [[f64; 2]; 2],
    #[serde(default)]
    pub f_1: UncertaintyConfig,
}

impl FaultModel {
    pub fn a_hpc(&self) -> Mat2 {
        mat2(self.A_hpc)
    }
}

pub fn hpc_plant_derivative(x: &Vec2, u: f64, a_hpc: &Mat2, f1: &UncertaintySpec, t: f64) -> Vec2 {
    a_hpc * x + B * u + f1.eval(x, t)
}
