//! Switching gain synthesis and Lyapunov certificates.

pub mod barrier;
pub mod dwell;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{b_hat, lambda_max, lambda_min, lyap_residual, Mat2, Vec2};
use crate::params::VehicleParams;
use crate::vehicle::{a_matrix, Submodel};
use barrier::{q_of, Constraint, Problem};

/// Effective scalar feedback `(F^w, F^v)` of a gain matrix in the
/// `Â = A − B[F^w, F^v]` convention: the negated column sums of `F`.
pub fn effective_gains(f: &Mat2) -> (f64, f64) {
    (-(f[(0, 0)] + f[(1, 0)]), -(f[(0, 1)] + f[(1, 1)]))
}

/// Gain row applied to the tracking error, `1ᵀF`.
pub fn gain_row(f: &Mat2) -> Vec2 {
    Vec2::new(f[(0, 0)] + f[(1, 0)], f[(0, 1)] + f[(1, 1)])
}

pub fn closed_loop(a: &Mat2, f: &Mat2) -> Mat2 {
    a + b_hat() * f
}

/// Closed-form Hurwitz region in the effective gains for one submodel:
/// `F^w > fw_lower` and `F^v` on the correct side of an affine bound in `F^w`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainBounds {
    pub fw_lower: f64,
    pub fv_slope: f64,
    pub fv_intercept: f64,
    /// true: `F^v < bound` (traction submodel); false: `F^v > bound`
    pub fv_is_upper: bool,
}

impl GainBounds {
    pub fn from_a(a: &Mat2) -> Self {
        let ratio = a[(1, 1)] / a[(1, 0)];
        GainBounds {
            fw_lower: a[(0, 0)] + a[(1, 1)],
            fv_slope: ratio,
            fv_intercept: a[(0, 1)] - a[(0, 0)] * ratio,
            fv_is_upper: a[(1, 0)] < 0.0,
        }
    }

    pub fn fv_bound(&self, fw: f64) -> f64 {
        self.fv_intercept + self.fv_slope * fw
    }

    pub fn satisfied(&self, fw: f64, fv: f64) -> bool {
        let b = self.fv_bound(fw);
        fw > self.fw_lower && if self.fv_is_upper { fv < b } else { fv > b }
    }
}

pub fn hurwitz_gain_bounds(k: f64, sub: Submodel, p: &VehicleParams) -> GainBounds {
    GainBounds::from_a(&a_matrix(k, sub, p))
}

/// Largest eigenvalue of `ÂᵀP̄ + P̄Â` for `Â = A + B̂F`.
pub fn lmi_max_eig(a: &Mat2, f: &Mat2, p_bar: &Mat2) -> f64 {
    lambda_max(&lyap_residual(&closed_loop(a, f), p_bar))
}

pub fn verify_common_lyapunov(pairs: &[(Mat2, Mat2)], p_bar: &Mat2) -> bool {
    crate::linalg::is_spd(p_bar) && pairs.iter().all(|(a, f)| lmi_max_eig(a, f, p_bar) < -1e-9)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCert {
    #[serde(with = "crate::linalg::row_major")]
    pub p_bar: Mat2,
    pub lmi_eigs: Vec<f64>,
    pub lambda_max_sigma: f64,
}

impl LyapunovCert {
    pub fn from_pairs(p_bar: Mat2, pairs: &[(Mat2, Mat2)]) -> Self {
        let lmi_eigs: Vec<f64> = pairs.iter().map(|(a, f)| lmi_max_eig(a, f, &p_bar)).collect();
        let lambda_max_sigma = lmi_eigs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        LyapunovCert { p_bar, lmi_eigs, lambda_max_sigma }
    }

    pub fn is_valid(&self) -> bool {
        crate::linalg::is_spd(&self.p_bar) && self.lambda_max_sigma < 0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// strict margin demanded on the rate inequalities
    pub delta_lmi: f64,
    /// upper bound on the eigenvalues of `Q = P̄⁻¹`
    pub q_cap: f64,
    /// fraction of the largest feasible decay rate actually requested
    pub gamma_fraction: f64,
    /// decay rates above this are not searched
    pub gamma_cap: f64,
    pub restarts: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig { delta_lmi: 1e-4, q_cap: 1e4, gamma_fraction: 0.8, gamma_cap: 1.0, restarts: 4 }
    }
}

/// One environment's synthesis problem: the submodel matrices that must share
/// a certificate, the slab vectors the envelope must fit in, and extra error
/// vectors `d` the envelope must contain at level `dᵀP̄d ≤ level`.
#[derive(Clone, Debug)]
pub struct EnvProblem {
    pub tag: String,
    pub a_list: Vec<Mat2>,
    pub c_hats: Vec<Vec2>,
    pub containment: Vec<(Vec2, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Margins {
    pub q_min_eig: f64,
    pub slab: Vec<f64>,
    pub lmi: Vec<f64>,
    pub containment: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSolution {
    pub tag: String,
    #[serde(with = "crate::linalg::row_major")]
    pub q: Mat2,
    #[serde(with = "crate::linalg::row_major")]
    pub p_bar: Mat2,
    #[serde(with = "crate::linalg::row_major::seq")]
    pub gains: Vec<Mat2>,
    pub gamma: f64,
    pub gamma_max: f64,
    pub cert: LyapunovCert,
    pub margins: Margins,
}

fn rate_constraint(a: &Mat2, gamma: f64, delta: f64) -> Constraint {
    // (AQ + QAᵀ + 2γQ)₂₂ / 2 = a21 q12 + (a22 + γ) q22 ≤ −δ
    Constraint::Linear { a: [0.0, a[(1, 0)], a[(1, 1)] + gamma], b: -delta }
}

fn build(problem: &EnvProblem, cfg: &SynthesisConfig, gamma: f64) -> Problem {
    let mut constraints = Vec::new();
    for c in &problem.c_hats {
        constraints.push(Constraint::Linear { a: [c[0] * c[0], 2.0 * c[0] * c[1], c[1] * c[1]], b: 1.0 });
    }
    for a in &problem.a_list {
        constraints.push(rate_constraint(a, gamma, cfg.delta_lmi));
    }
    for (d, level) in &problem.containment {
        constraints.push(Constraint::MatrixFractional { d: *d, level: *level });
    }
    Problem { cap: cfg.q_cap, constraints }
}

/// Gain recovered from `Q` for one submodel: `Ĕ = [g; 0]` with `g` chosen so
/// that `AQ + QAᵀ + B̂Ĕ + ĔᵀB̂ᵀ = N₂₂·I − 2γQ`, then `F = Ĕ Q⁻¹`.
pub fn gain_from_q(a: &Mat2, q: &Mat2, gamma: f64) -> Mat2 {
    let n = a * q + q * a.transpose() + q * (2.0 * gamma);
    let g1 = 0.5 * (n[(1, 1)] - n[(0, 0)]);
    let g2 = -n[(0, 1)];
    let e = Mat2::new(g1, g2, 0.0, 0.0);
    e * q.try_inverse().expect("Q is positive definite")
}

fn start_point<R: Rng>(cfg: &SynthesisConfig, rng: &mut R, attempt: usize) -> [f64; 3] {
    let s = cfg.q_cap * 0.05 * if attempt == 0 { 1.0 } else { rng.random_range(0.05..0.9) };
    let skew = if attempt == 0 { 0.0 } else { rng.random_range(-0.5..0.5) };
    [s, skew * s, s]
}

fn feasible_at(problem: &EnvProblem, cfg: &SynthesisConfig, gamma: f64, rng: &mut ChaCha8Rng) -> Option<[f64; 3]> {
    let p = build(problem, cfg, gamma);
    for attempt in 0..cfg.restarts.max(1) {
        if let (Some(z), _) = p.find_feasible(start_point(cfg, rng, attempt)) {
            return Some(z);
        }
    }
    None
}

/// Solves one environment: finds the largest decay rate for which the
/// constraints are feasible, backs off to `gamma_fraction` of it, and picks
/// the maximum-volume envelope there.
pub fn synthesize_env(problem: &EnvProblem, cfg: &SynthesisConfig, seed: u64) -> Result<EnvSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if feasible_at(problem, cfg, 0.0, &mut rng).is_none() {
        let worst = build(problem, cfg, 0.0).worst_violation(start_point(cfg, &mut rng, 0));
        return Err(Error::Infeasible { restarts: cfg.restarts, best_margin: worst });
    }
    let mut lo = 0.0;
    let mut hi = cfg.gamma_cap;
    if feasible_at(problem, cfg, hi, &mut rng).is_some() {
        lo = hi;
    } else {
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if feasible_at(problem, cfg, mid, &mut rng).is_some() {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-6 * cfg.gamma_cap {
                break;
            }
        }
    }
    let gamma_max = lo;
    let gamma = cfg.gamma_fraction * gamma_max;
    debug!("{}: gamma_max = {gamma_max:.6}, using {gamma:.6}", problem.tag);

    let p = build(problem, cfg, gamma);
    let z0 = feasible_at(problem, cfg, gamma, &mut rng)
        .ok_or(Error::Infeasible { restarts: cfg.restarts, best_margin: f64::NAN })?;
    let z = p.optimize(z0).unwrap_or(z0);
    let z = if p.worst_violation(z) < 0.0 { z } else { z0 };
    let q = q_of(&z);
    let p_bar = q.try_inverse().ok_or_else(|| Error::Singular("Q".into()))?;
    let p_bar = crate::linalg::symmetrize(&p_bar);
    let gains: Vec<Mat2> = problem.a_list.iter().map(|a| gain_from_q(a, &q, gamma)).collect();
    let pairs: Vec<(Mat2, Mat2)> = problem.a_list.iter().cloned().zip(gains.iter().cloned()).collect();
    let cert = LyapunovCert::from_pairs(p_bar, &pairs);
    let margins = Margins {
        q_min_eig: lambda_min(&q),
        slab: problem.c_hats.iter().map(|c| crate::linalg::quad(&q, c) - 1.0).collect(),
        lmi: problem
            .a_list
            .iter()
            .zip(&gains)
            .map(|(a, f)| lambda_max(&crate::linalg::symmetrize(&(closed_loop(a, f) * q + q * closed_loop(a, f).transpose()))))
            .collect(),
        containment: problem.containment.iter().map(|(d, l)| crate::linalg::quad(&p_bar, d) - l).collect(),
    };
    if !cert.is_valid() {
        return Err(Error::Certificate(format!("{}: synthesized certificate invalid ({:?})", problem.tag, cert.lmi_eigs)));
    }
    Ok(EnvSolution { tag: problem.tag.clone(), q, p_bar, gains, gamma, gamma_max, cert, margins })
}
