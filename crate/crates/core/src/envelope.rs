//! Slip-safety vectors, ellipsoidal envelopes and the envelope-based trigger.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_max, quad, Mat2, Vec2};
use crate::params::VehicleParams;
use crate::vehicle::ReferencePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyVector {
    pub c_hat: Vec2,
    /// +1 when the reference is in the traction region (v ≥ wr), −1 otherwise.
    pub sign_mode: i8,
}

/// `ĉ = [rk/(ζr²v − μk), k/(μk − ζr²v)]` for the environment gain `k`,
/// slip bound `mu` and the velocity reference of the active submodel.
pub fn safety_vector(k: f64, mu: f64, rp: &ReferencePair, p: &VehicleParams) -> Result<SafetyVector> {
    let den = mu * k - p.zeta * p.r * p.r * rp.v_ref;
    if den.abs() < 1e-12 * (mu * k).abs().max(1.0) {
        return Err(Error::Singular(format!(
            "slip bound {mu} equals the desired slip of the reference, envelope is degenerate"
        )));
    }
    let sign_mode = if rp.v_ref >= p.r * rp.w_ref { 1 } else { -1 };
    Ok(SafetyVector { c_hat: Vec2::new(-p.r * k / den, k / den), sign_mode })
}

/// Safety vector for a zero reference, which does not depend on k.
pub fn zero_reference_vector(mu: f64, p: &VehicleParams) -> SafetyVector {
    SafetyVector { c_hat: Vec2::new(-p.r / mu, 1.0 / mu), sign_mode: 1 }
}

/// `−1 ≤ ĉᵀe ≤ 1`, which keeps the slip below the environment bound.
pub fn slip_safe_by_vector(e: &Vec2, sv: &SafetyVector) -> bool {
    let s = sv.c_hat.dot(e);
    (-1.0..=1.0).contains(&s)
}

/// Value of `ĉᵀ P̄⁻¹ ĉ`; the ellipse `eᵀP̄e ≤ 1` lies inside the slab iff ≤ 1.
pub fn containment_value(c_hat: &Vec2, p_bar: &Mat2) -> Result<f64> {
    let inv = p_bar
        .try_inverse()
        .filter(|_| crate::linalg::is_spd(p_bar))
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{p_bar:?}")))?;
    Ok(quad(&inv, c_hat))
}

pub fn containment_check(c_hat: &Vec2, p_bar: &Mat2) -> Result<bool> {
    Ok(containment_value(c_hat, p_bar)? <= 1.0 + 1e-12)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafetyEnvelope {
    #[serde(with = "crate::linalg::row_major")]
    pub p_bar: Mat2,
    pub theta: f64,
    pub eps_margin: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Membership {
    pub value: f64,
    pub inside_phi: bool,
    pub inside_theta: bool,
    pub clearance: f64,
}

impl SafetyEnvelope {
    pub fn new(p_bar: Mat2, theta: f64, eps_margin: f64) -> Result<Self> {
        if !crate::linalg::is_spd(&p_bar) {
            return Err(Error::NotPositiveDefinite(format!("{p_bar:?}")));
        }
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidParameter(format!("theta must be in (0,1), got {theta}")));
        }
        if !(eps_margin > 0.0 && eps_margin < 1.0) {
            return Err(Error::InvalidParameter(format!("eps_margin must be in (0,1), got {eps_margin}")));
        }
        Ok(SafetyEnvelope { p_bar, theta, eps_margin })
    }

    pub fn value(&self, e: &Vec2) -> f64 {
        quad(&self.p_bar, e)
    }

    pub fn membership(&self, e: &Vec2) -> Membership {
        let value = self.value(e);
        let clearance = boundary_distance(&self.p_bar, e);
        Membership {
            value,
            inside_phi: value <= 1.0 + 1e-12,
            inside_theta: value <= self.theta && clearance >= self.eps_margin,
            clearance,
        }
    }

    /// Largest clearance that every point of the θ-level set is guaranteed.
    pub fn guaranteed_clearance(&self) -> f64 {
        (1.0 - self.theta.sqrt()) / lambda_max(&self.p_bar).sqrt()
    }
}

/// Minimum Euclidean distance from `e` to the ellipse `yᵀPy = 1`.
///
/// The boundary is parameterized by angle in the eigenbasis of `P`, scanned on
/// a grid and refined with golden-section search.
pub fn boundary_distance(p: &Mat2, e: &Vec2) -> f64 {
    let eig = p.symmetric_eigen();
    let v = eig.eigenvectors;
    let s0 = 1.0 / eig.eigenvalues[0].sqrt();
    let s1 = 1.0 / eig.eigenvalues[1].sqrt();
    let point = |phi: f64| v * Vec2::new(s0 * phi.cos(), s1 * phi.sin());
    let dist2 = |phi: f64| (point(phi) - e).norm_squared();

    const GRID: usize = 720;
    let step = std::f64::consts::TAU / GRID as f64;
    let mut best = (0.0, f64::INFINITY);
    for i in 0..GRID {
        let phi = i as f64 * step;
        let d = dist2(phi);
        if d < best.1 {
            best = (phi, d);
        }
    }
    let (mut a, mut b) = (best.0 - step, best.0 + step);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (dist2(c), dist2(d));
    while (b - a).abs() > 1e-10 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = dist2(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = dist2(d);
        }
    }
    dist2(0.5 * (a + b)).min(best.1).sqrt()
}

/// Envelope trigger: the level θ has been reached and the error is moving
/// outward.
pub fn rule2_trigger(e: &Vec2, e_dot: &Vec2, env: &SafetyEnvelope) -> bool {
    env.value(e) >= env.theta && e.dot(&(env.p_bar * e_dot)) > 0.0
}

/// Serialized envelope for one environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeExport {
    #[serde(rename = "P_bar")]
    pub p_bar: [[f64; 2]; 2],
    pub theta: f64,
    pub eps_margin: f64,
    pub c_hat: Vec<[f64; 2]>,
}
