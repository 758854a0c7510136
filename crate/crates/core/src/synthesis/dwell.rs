//! Minimum dwell-time bounds for switching between environment certificates.

use log::warn;
use serde::{Deserialize, Serialize};

use super::LyapunovCert;
use crate::error::{Error, Result};
use crate::linalg::{lambda_max, lambda_min, Mat2, Vec2};
use crate::vehicle::ReferencePair;

fn check(certs: &[&LyapunovCert]) -> Result<()> {
    for c in certs {
        if !(c.lambda_max_sigma < 0.0) {
            return Err(Error::Certificate(format!("decay eigenvalue {} is not negative", c.lambda_max_sigma)));
        }
    }
    Ok(())
}

/// Fixed-reference bound as customarily stated:
/// `max_{p≠q} (λmax(P̄_p)/λ^p)·ln(λmin(P̄_q)/λmax(P̄_p))`, clamped at 0.
pub fn dwell_min_fixed(certs: &[LyapunovCert]) -> Result<f64> {
    pairwise(certs, |p, q| (lambda_max(&p.p_bar) / p.lambda_max_sigma) * (lambda_min(&q.p_bar) / lambda_max(&p.p_bar)).ln())
}

/// Bound obtained from the comparison `V_q ≤ (λmax(P̄_q)/λmin(P̄_p))·V_p` at a
/// switch: `max_{p≠q} (λmax(P̄_p)/λ^p)·ln(λmin(P̄_p)/λmax(P̄_q))`, clamped at 0.
/// This is the form that makes the value at switching instants decrease.
pub fn dwell_min_fixed_sound(certs: &[LyapunovCert]) -> Result<f64> {
    pairwise(certs, |p, q| (lambda_max(&p.p_bar) / p.lambda_max_sigma) * (lambda_min(&p.p_bar) / lambda_max(&q.p_bar)).ln())
}

fn pairwise(certs: &[LyapunovCert], term: impl Fn(&LyapunovCert, &LyapunovCert) -> f64) -> Result<f64> {
    check(&certs.iter().collect::<Vec<_>>())?;
    let mut best: f64 = 0.0;
    for (i, p) in certs.iter().enumerate() {
        for (j, q) in certs.iter().enumerate() {
            if i != j {
                best = best.max(term(p, q));
            }
        }
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpulseMap {
    #[serde(with = "crate::linalg::row_major")]
    pub e_k: Mat2,
}

/// Bound for switching with error jumps `ē(t_k) = E_k ē(t_k⁻)`:
/// `max_k (λmax(P̄_prev)/λ^prev)·ln(λmin(P̄_prev)/λmax(E_kᵀ P̄_next E_k))`.
/// `schedule[k]` is the certificate active before switch `k`, `schedule[k+1]`
/// the one after it.
pub fn dwell_min_impulsive(certs: &[LyapunovCert], maps: &[ImpulseMap], schedule: &[usize]) -> Result<f64> {
    if schedule.len() != maps.len() + 1 {
        return Err(Error::InvalidParameter(format!(
            "schedule has {} entries for {} switches",
            schedule.len(),
            maps.len()
        )));
    }
    let mut best: f64 = 0.0;
    for (k, map) in maps.iter().enumerate() {
        let prev = certs.get(schedule[k]).ok_or_else(|| Error::InvalidParameter("schedule index".into()))?;
        let next = certs.get(schedule[k + 1]).ok_or_else(|| Error::InvalidParameter("schedule index".into()))?;
        check(&[prev, next])?;
        if map.e_k.iter().all(|v| *v == 0.0) {
            return Err(Error::Singular("impulse map E_k is zero".into()));
        }
        let jumped = map.e_k.transpose() * next.p_bar * map.e_k;
        let term = (lambda_max(&prev.p_bar) / prev.lambda_max_sigma) * (lambda_min(&prev.p_bar) / lambda_max(&jumped)).ln();
        best = best.max(term);
    }
    Ok(best)
}

/// Rank-one map that reproduces a realized reference jump:
/// `E_k = I + Δ e⁻ᵀ/‖e⁻‖²` with `Δ = ref_old − ref_new`, so that
/// `E_k e⁻ = e⁻ + Δ`.
pub fn impulse_map_from_jump(e_minus: &Vec2, ref_old: &ReferencePair, ref_new: &ReferencePair) -> ImpulseMap {
    let delta = ref_old.as_vec() - ref_new.as_vec();
    let n2 = e_minus.norm_squared();
    if n2 == 0.0 {
        if delta.norm() > 0.0 {
            warn!("reference jump at zero tracking error cannot be written as a linear map; using identity");
        }
        return ImpulseMap { e_k: Mat2::identity() };
    }
    ImpulseMap { e_k: Mat2::identity() + delta * e_minus.transpose() / n2 }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert(p: Mat2, lam: f64) -> LyapunovCert {
        LyapunovCert { p_bar: p, lmi_eigs: vec![lam], lambda_max_sigma: lam }
    }

    #[test]
    fn identical_certificates_need_no_dwell() {
        let c = cert(Mat2::identity(), -1.0);
        assert_eq!(dwell_min_fixed(&[c.clone(), c.clone()]).unwrap(), 0.0);
        assert_eq!(dwell_min_fixed_sound(&[c.clone(), c]).unwrap(), 0.0);
    }

    #[test]
    fn scaled_pair_example() {
        let p = cert(Mat2::identity() * 2.0, -0.5);
        let q = cert(Mat2::identity(), -0.5);
        let v = dwell_min_fixed(&[p, q]).unwrap();
        assert!((v - 2.772588722239781).abs() < 1e-9, "{v}");
    }

    #[test]
    fn rejects_nonnegative_rate() {
        assert!(dwell_min_fixed(&[cert(Mat2::identity(), 0.0)]).is_err());
    }

    #[test]
    fn impulsive_examples() {
        let c = cert(Mat2::identity(), -1.0);
        let v = dwell_min_impulsive(std::slice::from_ref(&c), &[ImpulseMap { e_k: Mat2::identity() * 2.0 }], &[0, 0]).unwrap();
        assert!((v - 1.3862943611198906).abs() < 1e-9);
        let id = dwell_min_impulsive(std::slice::from_ref(&c), &[ImpulseMap { e_k: Mat2::identity() }], &[0, 0]).unwrap();
        assert_eq!(id, dwell_min_fixed_sound(&[c.clone(), c.clone()]).unwrap());
        assert!(dwell_min_impulsive(&[c], &[ImpulseMap { e_k: Mat2::zeros() }], &[0, 0]).is_err());
    }

    #[test]
    fn jump_maps() {
        let r0 = ReferencePair { w_ref: 1.0, v_ref: 1.0 };
        assert_eq!(impulse_map_from_jump(&Vec2::new(1.0, 2.0), &r0, &r0).e_k, Mat2::identity());
        let r1 = ReferencePair { w_ref: 0.5, v_ref: 1.2 };
        let e = impulse_map_from_jump(&Vec2::new(1.0, 0.0), &r0, &r1).e_k;
        assert!((e - Mat2::new(1.5, 0.0, -0.2, 1.0)).norm() < 1e-12);
        let r2 = ReferencePair { w_ref: 0.0, v_ref: 1.0 };
        let e = impulse_map_from_jump(&Vec2::new(0.0, 2.0), &r0, &r2).e_k;
        assert!((e - Mat2::new(1.0, 0.5, 0.0, 1.0)).norm() < 1e-12);
        let em = Vec2::new(0.3, -0.7);
        let e = impulse_map_from_jump(&em, &r0, &r1).e_k;
        assert!((e * em - (em + r0.as_vec() - r1.as_vec())).norm() < 1e-12);
        assert_eq!(impulse_map_from_jump(&Vec2::zeros(), &r0, &r1).e_k, Mat2::identity());
    }
}
