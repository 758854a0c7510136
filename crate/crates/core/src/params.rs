//! Physical constants and environment descriptors. All values are SI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// vehicle mass (kg)
    pub m: f64,
    /// wheel rotational inertia (kg·m²)
    pub J: f64,
    /// wheel radius (m)
    pub r: f64,
    /// aerodynamic drag constant (N·s²/m²)
    pub zeta: f64,
    /// viscous wheel friction (N·m·s/rad)
    pub varrho: f64,
    /// brake piston effective area (m²)
    pub C: f64,
    /// brake disc effective radius (m)
    pub r_b: f64,
    /// pad friction coefficient
    pub eta_b: f64,
    /// wheelbase (m); carried but unused by the longitudinal model
    pub l: f64,
    /// rear axle distance (m); unused
    pub l_r: f64,
    /// centre-of-gravity height (m); unused
    #[serde(default = "default_h")]
    pub h: f64,
    /// gravity (m/s²); unused
    #[serde(default = "default_g")]
    pub g: f64,
}

fn default_h() -> f64 {
    0.5
}

fn default_g() -> f64 {
    9.81
}

impl VehicleParams {
    /// The passenger-car values used throughout the examples (11.34 cm² piston,
    /// 124 mm disc radius converted to SI).
    pub fn reference_car() -> Self {
        VehicleParams {
            m: 540.0,
            J: 5.0,
            r: 0.31,
            zeta: 25.0,
            varrho: 1.0,
            C: 11.34e-4,
            r_b: 0.124,
            eta_b: 0.38,
            l: 2.63,
            l_r: 1.14,
            h: default_h(),
            g: default_g(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("m", self.m),
            ("J", self.J),
            ("r", self.r),
            ("zeta", self.zeta),
            ("varrho", self.varrho),
            ("C", self.C),
            ("r_b", self.r_b),
            ("eta_b", self.eta_b),
            ("l", self.l),
            ("l_r", self.l_r),
            ("h", self.h),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// A driving environment. `k_sigma` is absent for the learned model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentId {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_sigma: Option<f64>,
    pub mu_sigma: f64,
}

impl EnvironmentId {
    pub fn normal(tag: &str, k_sigma: f64, mu_sigma: f64) -> Self {
        EnvironmentId { tag: tag.to_string(), k_sigma: Some(k_sigma), mu_sigma }
    }

    pub fn learned(mu_sigma: f64) -> Self {
        EnvironmentId { tag: "learned".to_string(), k_sigma: None, mu_sigma }
    }

    pub fn is_learned(&self) -> bool {
        self.k_sigma.is_none()
    }

    pub fn k(&self) -> Result<f64> {
        self.k_sigma
            .ok_or_else(|| Error::InvalidParameter(format!("environment {} has no friction gain", self.tag)))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.k_sigma {
            if !(k.is_finite() && k > 0.0) {
                return Err(Error::InvalidParameter(format!("{}: k_sigma must be positive", self.tag)));
            }
        }
        if !(self.mu_sigma.is_finite() && self.mu_sigma > 0.0) {
            return Err(Error::InvalidParameter(format!("{}: mu_sigma must be positive", self.tag)));
        }
        Ok(())
    }
}

/// Environment entry of a parameter file: the descriptor plus the angular
/// velocity reference used for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub tag: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_sigma: Option<f64>,
    pub mu_sigma: f64,
    #[serde(default)]
    pub w_ref: f64,
}

impl EnvironmentSpec {
    pub fn id(&self) -> EnvironmentId {
        EnvironmentId { tag: self.tag.clone(), k_sigma: self.k_sigma, mu_sigma: self.mu_sigma }
    }
}

/// Parameter file: vehicle constants flattened at top level plus environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    #[serde(flatten)]
    pub vehicle: VehicleParams,
    pub environments: Vec<EnvironmentSpec>,
}

impl ParamsFile {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        for e in &self.environments {
            e.id().validate()?;
            if e.w_ref < 0.0 {
                return Err(Error::InvalidParameter(format!("{}: w_ref must be non-negative", e.tag)));
            }
        }
        Ok(())
    }
}
