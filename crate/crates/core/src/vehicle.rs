//! Reference computation, system matrices, slip and actuator split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{b_hat, Mat2, Vec2, B};
use crate::params::{EnvironmentId, VehicleParams};

/// Submodel 1 is traction (v ≥ wr), submodel 2 is braking (v < wr).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Submodel {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl Submodel {
    /// Ties at v = wr go to submodel 1.
    pub fn from_state(w: f64, v: f64, r: f64) -> Self {
        if v >= w * r {
            Submodel::One
        } else {
            Submodel::Two
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Submodel::One => 1,
            Submodel::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Result<Self> {
        match n {
            1 => Ok(Submodel::One),
            2 => Ok(Submodel::Two),
            _ => Err(Error::InvalidParameter(format!("submodel must be 1 or 2, got {n}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SwitchIndex {
    Normal { env: String, submodel: Submodel },
    Hpc,
    Learned,
}

impl std::fmt::Display for SwitchIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SwitchIndex::Normal { env, submodel } => write!(f, "{}{}", env, submodel.number()),
            SwitchIndex::Hpc => write!(f, "hpc"),
            SwitchIndex::Learned => write!(f, "learned"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferencePair {
    pub w_ref: f64,
    pub v_ref: f64,
}

impl ReferencePair {
    pub const ZERO: ReferencePair = ReferencePair { w_ref: 0.0, v_ref: 0.0 };

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.w_ref, self.v_ref)
    }
}

/// Closed-form equilibrium velocity for a wheel speed reference.
pub fn compute_reference(
    env: &EnvironmentId,
    w_ref: f64,
    submodel: Submodel,
    params: &VehicleParams,
) -> Result<ReferencePair> {
    let k = env.k()?;
    if w_ref < 0.0 {
        return Err(Error::InvalidParameter(format!("w_ref must be non-negative, got {w_ref}")));
    }
    let ratio = params.zeta * params.r * params.r / k;
    if ratio >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "zeta*r^2/k = {ratio:.4} >= 1 for {}: traction reference is singular",
            env.tag
        )));
    }
    let v_ref = match submodel {
        Submodel::One => params.r * w_ref / (1.0 - ratio),
        Submodel::Two => params.r * w_ref / (1.0 + ratio),
    };
    Ok(ReferencePair { w_ref, v_ref })
}

/// Relative residual of the equilibrium relation the reference must satisfy.
pub fn reference_residual(k: f64, pair: &ReferencePair, submodel: Submodel, params: &VehicleParams) -> f64 {
    let zr2 = params.zeta * params.r * params.r;
    let lhs = match submodel {
        Submodel::One => (k - zr2) * pair.v_ref,
        Submodel::Two => (k + zr2) * pair.v_ref,
    };
    let rhs = k * params.r * pair.w_ref;
    (lhs - rhs).abs() / rhs.abs().max(1e-300)
}

#[allow(non_snake_case)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SystemMatrices {
    pub A: Mat2,
    pub B: Vec2,
    pub B_hat: Mat2,
}

impl SystemMatrices {
    #[allow(non_snake_case)]
    pub fn from_a(A: Mat2) -> Self {
        SystemMatrices { A, B, B_hat: b_hat() }
    }
}

/// State matrix of one submodel for friction gain `k`.
pub fn a_matrix(k: f64, submodel: Submodel, p: &VehicleParams) -> Mat2 {
    let (m, j, r, z, rho) = (p.m, p.J, p.r, p.zeta, p.varrho);
    match submodel {
        Submodel::One => Mat2::new(
            (k - rho) / j,
            -k / (j * r),
            -k / (m * r),
            (k - z * r * r) / (m * r * r),
        ),
        Submodel::Two => Mat2::new(
            -(k + rho) / j,
            k / (j * r),
            k / (m * r),
            -(k + z * r * r) / (m * r * r),
        ),
    }
}

pub fn system_matrices(idx: &SwitchIndex, envs: &[EnvironmentId], params: &VehicleParams) -> Result<SystemMatrices> {
    match idx {
        SwitchIndex::Normal { env, submodel } => {
            let e = envs
                .iter()
                .find(|e| &e.tag == env)
                .ok_or_else(|| Error::InvalidParameter(format!("unknown environment {env}")))?;
            Ok(SystemMatrices::from_a(a_matrix(e.k()?, *submodel, params)))
        }
        _ => Err(Error::InvalidParameter(format!("{idx} has no stored system matrix"))),
    }
}

pub fn slip(w: f64, v: f64, r: f64) -> f64 {
    if v >= w * r {
        v - w * r
    } else {
        w * r - v
    }
}

/// How a scalar wheel acceleration command is split between drive torque and
/// brake pressure.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActuatorPolicy {
    /// Drive torque for u ≥ 0, brake pressure only for u < 0.
    #[default]
    Exclusive,
}

/// Returns (engine torque N·m, brake pressure Pa).
pub fn actuator_split(u: f64, p: &VehicleParams, policy: ActuatorPolicy) -> (f64, f64) {
    match policy {
        ActuatorPolicy::Exclusive => {
            if u >= 0.0 {
                (p.J * u, 0.0)
            } else {
                (0.0, -p.J * u / (p.C * p.eta_b * p.r_b))
            }
        }
    }
}

pub fn actuator_combine(t_e: f64, p_cmd: f64, p: &VehicleParams) -> f64 {
    (t_e - p.C * p.eta_b * p.r_b * p_cmd) / p.J
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snow() -> EnvironmentId {
        EnvironmentId::normal("snow", 70.0, 1.0)
    }

    #[test]
    fn snow_references() {
        let p = VehicleParams::reference_car();
        let r1 = compute_reference(&snow(), 40.0, Submodel::One, &p).unwrap();
        let r2 = compute_reference(&snow(), 40.0, Submodel::Two, &p).unwrap();
        assert!((r1.v_ref - 12.840711564776806).abs() < 1e-9);
        assert!((r2.v_ref - 11.988536307447948).abs() < 1e-9);
        assert!(reference_residual(70.0, &r1, Submodel::One, &p) < 1e-9);
        assert!(reference_residual(70.0, &r2, Submodel::Two, &p) < 1e-9);
        assert!(r1.v_ref >= p.r * 40.0 && r2.v_ref < p.r * 40.0);
    }

    #[test]
    fn zero_reference() {
        let p = VehicleParams::reference_car();
        for s in [Submodel::One, Submodel::Two] {
            assert_eq!(compute_reference(&snow(), 0.0, s, &p).unwrap().v_ref, 0.0);
        }
    }

    #[test]
    fn singular_traction_reference_rejected() {
        let p = VehicleParams::reference_car();
        let env = EnvironmentId::normal("glass", 2.0, 1.0);
        assert!(compute_reference(&env, 10.0, Submodel::One, &p).is_err());
    }

    #[test]
    fn matrices_match_hand_values() {
        let p = VehicleParams::reference_car();
        let a = a_matrix(70.0, Submodel::One, &p);
        let want = [13.8, -45.16129, -0.41816, 1.30261];
        for (got, w) in [a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]].iter().zip(want) {
            assert!((got - w).abs() < 5e-5, "{got} vs {w}");
        }
        let icy = a_matrix(35.0, Submodel::One, &p);
        assert!((icy[(0, 0)] - 6.8).abs() < 1e-12);
        assert!((icy[(0, 1)] + 22.5806).abs() < 1e-4);
        assert!((icy[(1, 0)] + 0.20908).abs() < 1e-5);
        assert!((icy[(1, 1)] - 0.62815).abs() < 1e-4);
    }

    #[test]
    fn diagonal_cancels_when_k_equals_both_constants() {
        let mut p = VehicleParams::reference_car();
        p.varrho = 2.0;
        p.zeta = 2.0 / (p.r * p.r);
        let a = a_matrix(2.0, Submodel::One, &p);
        assert!(a[(0, 0)].abs() < 1e-12 && a[(1, 1)].abs() < 1e-12);
    }

    #[test]
    fn submodels_differ_by_k_sign() {
        let p = VehicleParams::reference_car();
        let k = 70.0;
        let a1 = a_matrix(k, Submodel::One, &p);
        let a2 = a_matrix(k, Submodel::Two, &p);
        let (m, j, r) = (p.m, p.J, p.r);
        assert!((a1[(0, 0)] - a2[(0, 0)] - 2.0 * k / j).abs() < 1e-12);
        assert!((a1[(0, 1)] + a2[(0, 1)]).abs() < 1e-12);
        assert!((a1[(1, 0)] + a2[(1, 0)]).abs() < 1e-12);
        assert!((a1[(1, 1)] - a2[(1, 1)] - 2.0 * k / (m * r * r)).abs() < 1e-12);
    }

    #[test]
    fn slip_cases() {
        assert!(slip(40.0, 12.4, 0.31).abs() < 1e-12);
        assert!((slip(40.0, 13.0, 0.31) - 0.6).abs() < 1e-12);
        assert_eq!(slip(0.0, 5.0, 0.31), 5.0);
        assert!((slip(50.0, 5.0, 0.31) - 10.5).abs() < 1e-12);
    }

    #[test]
    fn actuator_examples() {
        let p = VehicleParams::reference_car();
        assert_eq!(actuator_split(0.0, &p, ActuatorPolicy::Exclusive), (0.0, 0.0));
        assert_eq!(actuator_split(2.0, &p, ActuatorPolicy::Exclusive), (10.0, 0.0));
        let (te, pc) = actuator_split(-2.0, &p, ActuatorPolicy::Exclusive);
        assert_eq!(te, 0.0);
        assert!((pc - 10.0 / (11.34e-4 * 0.38 * 0.124)).abs() < 1e-6);
        assert!((actuator_combine(te, pc, &p) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn tie_goes_to_traction() {
        assert_eq!(Submodel::from_state(40.0, 40.0 * 0.31, 0.31), Submodel::One);
    }
}
