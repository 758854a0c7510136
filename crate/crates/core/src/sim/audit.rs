//! Post-run audits: Lyapunov decrease across switches, slip/submodel
//! consistency of traces, and dwell-time spacing of logged switches.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{quad, Mat2, Vec2};
use crate::sim::trace::TraceRow;
use crate::supervisor::Event;
use crate::vehicle::slip;

/// `e^{At} = e^{s}·M` with `M` of moderate size, so long horizons do not
/// underflow.
pub fn expm_scaled(a: &Mat2, t: f64) -> (f64, Mat2) {
    let m = 0.5 * a.trace();
    let disc = m * m - a.determinant();
    let shifted = a - Mat2::identity() * m;
    let scale = 1e-12 * (m * m).max(a.norm_squared()).max(1e-300);
    if disc > scale {
        let d = disc.sqrt();
        let q = (-2.0 * d * t).exp();
        let sinh_part = -(-2.0 * d * t).exp_m1() / (2.0 * d);
        ((m + d) * t, Mat2::identity() * (0.5 * (1.0 + q)) + shifted * sinh_part)
    } else if disc < -scale {
        let w = (-disc).sqrt();
        (m * t, Mat2::identity() * (w * t).cos() + shifted * ((w * t).sin() / w))
    } else {
        (m * t, Mat2::identity() + shifted * t)
    }
}

/// A vector stored as `e^{log_norm}·dir` with `‖dir‖ = 1`.
#[derive(Clone, Copy, Debug)]
pub struct LogVec {
    pub log_norm: f64,
    pub dir: Vec2,
}

impl LogVec {
    pub fn new(e: &Vec2) -> Self {
        let n = e.norm();
        LogVec { log_norm: n.ln(), dir: e / n }
    }

    pub fn apply(&mut self, m: &Mat2, log_scale: f64) {
        let v = m * self.dir;
        let n = v.norm();
        self.log_norm += log_scale + n.ln();
        self.dir = v / n;
    }

    pub fn flow(&mut self, a: &Mat2, t: f64) {
        let (s, m) = expm_scaled(a, t);
        self.apply(&m, s);
    }

    /// `ln(eᵀPe)`.
    pub fn log_v(&self, p: &Mat2) -> f64 {
        2.0 * self.log_norm + quad(p, &self.dir).ln()
    }
}

/// One environment of a switched error system: the certificate and the
/// closed loops it covers.
#[derive(Clone, Debug)]
pub struct AuditEnv {
    pub p_bar: Mat2,
    pub closed_loops: Vec<Mat2>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `ln V_{σ(t_k)}(ē(t_k))` at t₀ and after every switch
    pub log_v_at_switches: Vec<f64>,
    pub decrease_violations: usize,
    pub envelope_violations: usize,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.decrease_violations == 0 && self.envelope_violations == 0
    }
}

/// Runs the uncertainty-free switched error dynamics. `schedule[k] = (env, τ_k)`
/// holds `env` for `τ_k`; before interval `k ≥ 1` the error is mapped by
/// `jumps[k−1]` (identity when `jumps` is empty). Inside each interval the
/// submodel changes at random instants. Checks that V at switches strictly
/// decreases and the error stays inside `{eᵀP̄e ≤ θ}` of the active environment.
pub fn audit_switched<R: Rng>(
    envs: &[AuditEnv],
    schedule: &[(usize, f64)],
    jumps: &[Mat2],
    e0: &Vec2,
    theta: f64,
    rng: &mut R,
) -> AuditReport {
    let mut rep = AuditReport::default();
    let mut e = LogVec::new(e0);
    let ln_theta = theta.ln();
    for (k, (env, tau)) in schedule.iter().enumerate() {
        let p = &envs[*env].p_bar;
        if k > 0 {
            if let Some(m) = jumps.get(k - 1) {
                e.apply(m, 0.0);
            }
        }
        let lv = e.log_v(p);
        if let Some(prev) = rep.log_v_at_switches.last() {
            if lv >= *prev {
                rep.decrease_violations += 1;
            }
        }
        rep.log_v_at_switches.push(lv);
        if lv > ln_theta + 1e-12 {
            rep.envelope_violations += 1;
        }
        let pieces = rng.random_range(1..=3usize);
        let mut cuts: Vec<f64> = (0..pieces - 1).map(|_| rng.random::<f64>() * tau).collect();
        cuts.push(0.0);
        cuts.push(*tau);
        cuts.sort_by(|a, b| a.total_cmp(b));
        for w in cuts.windows(2) {
            let loops = &envs[*env].closed_loops;
            let a = &loops[rng.random_range(0..loops.len())];
            e.flow(a, w[1] - w[0]);
            if e.log_v(p) > ln_theta + 1e-12 {
                rep.envelope_violations += 1;
            }
        }
    }
    rep
}

/// Rows whose `slip` column differs from the slip recomputed from `w`, `v`.
pub fn slip_mismatches(rows: &[TraceRow], r: f64) -> usize {
    rows.iter().filter(|row| (row.slip - slip(row.w, row.v, r)).abs() > 1e-9 * (1.0 + row.slip.abs())).count()
}

/// Rows recorded with a submodel that disagrees with `v` vs `wr` by more than `tol`.
pub fn crossing_violations(rows: &[TraceRow], r: f64, tol: f64) -> usize {
    rows.iter()
        .filter(|row| {
            let g = row.v - row.w * r;
            (row.submodel == 1 && g < -tol) || (row.submodel == 2 && g > tol)
        })
        .count()
}

/// Pairs of consecutive switches in the same category closer than `dwell_min`.
pub fn dwell_violations(events: &[Event], dwell_min: f64) -> usize {
    let mut bad = 0;
    let mut last: Vec<(crate::supervisor::Category, f64)> = Vec::new();
    for e in events.iter().filter(|e| e.rule != "degraded" && e.from != e.to) {
        let Some(cat) = e.category else { continue };
        if let Some((_, t)) = last.iter().find(|(c, _)| *c == cat) {
            if e.t - t < dwell_min - 1e-9 {
                bad += 1;
            }
        }
        last.retain(|(c, _)| *c != cat);
        last.push((cat, e.t));
    }
    bad
}

/// `V_σ` on the first trace row at or after each event.
pub fn v_at_switches(rows: &[TraceRow], events: &[Event]) -> Vec<(f64, f64)> {
    events
        .iter()
        .filter_map(|e| rows.iter().find(|r| r.t >= e.t).map(|r| (e.t, r.V_sigma)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn scaled_exponential_matches_dense() {
        let cases = [
            Mat2::new(-3.0, 1.0, 0.5, -2.0),
            Mat2::new(-1.0, 4.0, -4.0, -1.0),
            Mat2::new(-2.0, 1.0, 0.0, -2.0),
            Mat2::new(13.8 - 37.0, -45.16 + 120.0, -0.418, 1.30),
        ];
        for a in cases {
            for t in [0.0, 0.01, 0.7, 3.0] {
                let (s, m) = expm_scaled(&a, t);
                let want = (a * t).exp();
                assert!((m * s.exp() - want).norm() <= 1e-9 * (1.0 + want.norm()), "{a} {t}");
            }
        }
    }

    #[test]
    fn long_horizon_does_not_underflow() {
        let a = Mat2::new(-2.0, 0.0, 0.0, -0.05);
        let mut e = LogVec::new(&Vec2::new(1.0, 1.0));
        e.flow(&a, 1e5);
        assert!((e.log_norm + 0.05 * 1e5).abs() < 1e-6);
        assert!((e.dir - Vec2::new(0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn single_environment_is_monotone() {
        let env = AuditEnv { p_bar: Mat2::identity(), closed_loops: vec![Mat2::new(-1.0, 0.2, -0.2, -1.0)] };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let sched: Vec<(usize, f64)> = (0..5).map(|_| (0, 0.5)).collect();
        let rep = audit_switched(&[env], &sched, &[], &Vec2::new(0.3, 0.1), 0.35, &mut rng);
        assert!(rep.passed(), "{rep:?}");
    }
}
