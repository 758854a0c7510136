//! Simplex decision logic: uncertainty monitor, Rule I threshold, rule
//! evaluation with dwell gating, and the stand-in high-performance controller.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::l1::rhac_control;
use crate::linalg::{Mat2, Vec2, B};
use crate::params::VehicleParams;
use crate::vehicle::ReferencePair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    #[serde(default = "default_omega_z")]
    pub omega_z: f64,
    pub l0: f64,
    pub b0: f64,
}

fn default_omega_z() -> f64 {
    20.0
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig { omega_z: 20.0, l0: 0.1, b0: 0.11 }
    }
}

impl MonitorConfig {
    /// `(A_z, B_z, C_z)`: first-order low pass with unity DC gain per channel.
    pub fn triple(&self) -> (Mat2, Mat2, Mat2) {
        let w = self.omega_z;
        (-Mat2::identity() * w, Mat2::identity(), Mat2::identity() * w)
    }
}

/// Uncertainty monitor plus the running Rule-I threshold.
#[derive(Clone, Debug)]
pub struct Monitor {
    pub cfg: MonitorConfig,
    pub z: Vec2,
    kernel: Vec<f64>,
    dt: f64,
    history: VecDeque<f64>,
}

impl Monitor {
    /// `dt` is the spacing at which [`Monitor::record`] will be called.
    pub fn new(cfg: MonitorConfig, dt: f64, x: &Vec2) -> Self {
        let (a, b, c) = cfg.triple();
        // kernel ‖C e^{As} B‖ sampled until it falls below 1e-10 of its peak
        let step = (a * dt).exp();
        let mut e = Mat2::identity();
        let mut kernel = Vec::new();
        let peak = (c * b).norm();
        loop {
            let k = spectral(&(c * e * b));
            kernel.push(k);
            if k < 1e-10 * peak || kernel.len() > 10_000_000 {
                break;
            }
            e = step * e;
        }
        let mut m = Monitor { cfg, z: Vec2::zeros(), kernel, dt, history: VecDeque::new() };
        m.reset(x);
        m
    }

    /// `z := −B_z x` and a fresh threshold integral.
    pub fn reset(&mut self, x: &Vec2) {
        let (_, b, _) = self.cfg.triple();
        self.z = -(b * x);
        self.history.clear();
    }

    pub fn rhs(&self, z: &Vec2, x: &Vec2, u: f64, a_hpc: &Mat2) -> Vec2 {
        let (a, b, _) = self.cfg.triple();
        a * z + (a * b - b * a_hpc) * x - b * B * u
    }

    pub fn f_hat_at(&self, z: &Vec2, x: &Vec2) -> Vec2 {
        let (_, b, c) = self.cfg.triple();
        c * z + c * b * x
    }

    pub fn f_hat(&self, x: &Vec2) -> Vec2 {
        self.f_hat_at(&self.z, x)
    }

    /// Appends `l₀‖x‖ + b₀` at the current instant; call once per step.
    pub fn record(&mut self, x: &Vec2) {
        self.history.push_front(self.cfg.l0 * x.norm() + self.cfg.b0);
        if self.history.len() > self.kernel.len() {
            self.history.pop_back();
        }
    }

    /// `∫ ‖C_z e^{A_z(t−τ)} B_z‖ (l₀‖x(τ)‖ + b₀) dτ` by the trapezoid rule
    /// over the recorded samples, truncated where the kernel has decayed.
    pub fn threshold(&self) -> f64 {
        let n = self.history.len();
        if n < 2 {
            return 0.0;
        }
        let mut acc = 0.0;
        for (i, s) in self.history.iter().enumerate() {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            acc += w * self.kernel[i] * s;
        }
        acc * self.dt
    }
}

fn spectral(m: &Mat2) -> f64 {
    m.svd(false, false).singular_values.max()
}

/// One explicit RK4 step of the monitor with `x`, `u` held.
pub fn monitor_step(mon: &mut Monitor, x: &Vec2, u: f64, a_hpc: &Mat2, dt: f64) {
    let z = mon.z;
    let k1 = mon.rhs(&z, x, u, a_hpc);
    let k2 = mon.rhs(&(z + k1 * (dt / 2.0)), x, u, a_hpc);
    let k3 = mon.rhs(&(z + k2 * (dt / 2.0)), x, u, a_hpc);
    let k4 = mon.rhs(&(z + k3 * dt), x, u, a_hpc);
    mon.z = z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Hpc,
    Rhac,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Hpc => "hpc",
            Mode::Rhac => "rhac",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveModel {
    Stored(usize),
    Learned,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Controller,
    Model,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rule {
    I,
    II,
    III,
    IV,
    #[serde(rename = "environment")]
    Environment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Action {
    ActivateRhac,
    ActivateLearned,
    SwitchEnvironment(usize),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub rule: Rule,
    pub action: Action,
    pub trigger_value: f64,
    pub threshold: f64,
}

impl Decision {
    pub fn category(&self) -> Category {
        match self.action {
            Action::ActivateRhac => Category::Controller,
            _ => Category::Model,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SwitchDecision {
    pub accepted: Vec<Decision>,
    pub deferred: Vec<Decision>,
}

/// Per-step measurements the rules look at.
#[derive(Clone, Copy, Debug)]
pub struct RuleInputs {
    pub t: f64,
    pub f_hat_norm: f64,
    pub threshold: f64,
    pub envelope_value: f64,
    pub theta: f64,
    /// envelope crossed outward (see `envelope::rule2_trigger`)
    pub rule2: bool,
    /// environment reported by the oracle; `None` when it has no stored model
    pub oracle: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct SupervisorState {
    pub mode: Mode,
    pub model: ActiveModel,
    pub dwell_min: f64,
    last_controller: Option<f64>,
    last_model: Option<f64>,
}

impl SupervisorState {
    pub fn new(mode: Mode, model: ActiveModel, dwell_min: f64) -> Self {
        SupervisorState { mode, model, dwell_min, last_controller: None, last_model: None }
    }

    pub fn last_switch(&self, cat: Category) -> Option<f64> {
        match cat {
            Category::Controller => self.last_controller,
            Category::Model => self.last_model,
        }
    }

    fn allowed(&self, cat: Category, t: f64) -> bool {
        self.last_switch(cat).is_none_or(|s| t - s >= self.dwell_min)
    }

    /// Records an applied decision.
    pub fn apply(&mut self, d: &Decision, t: f64) {
        match d.action {
            Action::ActivateRhac => {
                self.mode = Mode::Rhac;
                self.last_controller = Some(t);
            }
            Action::ActivateLearned => {
                self.model = ActiveModel::Learned;
                self.last_model = Some(t);
            }
            Action::SwitchEnvironment(i) => {
                self.model = ActiveModel::Stored(i);
                self.last_model = Some(t);
            }
        }
    }
}

pub fn evaluate_rules(sup: &SupervisorState, inp: &RuleInputs) -> SwitchDecision {
    let rule1 = inp.f_hat_norm > inp.threshold;
    let mut wanted = Vec::new();
    let by_monitor = |rule| Decision { rule, action: Action::ActivateRhac, trigger_value: inp.f_hat_norm, threshold: inp.threshold };
    let by_envelope = |rule| Decision { rule, action: Action::ActivateRhac, trigger_value: inp.envelope_value, threshold: inp.theta };
    if sup.mode == Mode::Hpc {
        if rule1 {
            wanted.push(by_monitor(Rule::I));
        } else if inp.rule2 {
            wanted.push(by_envelope(Rule::II));
        }
    }
    match (sup.model, inp.oracle) {
        (ActiveModel::Stored(_), None) => {
            if rule1 {
                wanted.push(Decision { action: Action::ActivateLearned, ..by_monitor(Rule::III) });
            } else if inp.rule2 {
                wanted.push(Decision { action: Action::ActivateLearned, ..by_envelope(Rule::IV) });
            }
        }
        (ActiveModel::Stored(i), Some(j)) if i != j => wanted.push(Decision {
            rule: Rule::Environment,
            action: Action::SwitchEnvironment(j),
            trigger_value: j as f64,
            threshold: i as f64,
        }),
        _ => {}
    }
    let mut out = SwitchDecision::default();
    for d in wanted {
        if sup.allowed(d.category(), inp.t) {
            out.accepted.push(d);
        } else {
            out.deferred.push(d);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HpcFault {
    Zero { t_fault: f64 },
    Bias { t_fault: f64, bias: f64 },
    SignFlip { t_fault: f64 },
}

impl HpcFault {
    fn t_fault(&self) -> f64 {
        match self {
            HpcFault::Zero { t_fault } | HpcFault::Bias { t_fault, .. } | HpcFault::SignFlip { t_fault } => *t_fault,
        }
    }
}

/// Stand-in high-performance controller: the model-reference tracking law,
/// optionally corrupted after a fault time.
pub fn hpc_controller(
    t: f64,
    e_bar: &Vec2,
    rp: &ReferencePair,
    f: &Mat2,
    fault: Option<&HpcFault>,
    p: &VehicleParams,
) -> f64 {
    let nominal = rhac_control(e_bar, rp, f, 0.0, false, p);
    match fault {
        Some(fl) if t >= fl.t_fault() => match fl {
            HpcFault::Zero { .. } => 0.0,
            HpcFault::Bias { bias, .. } => nominal + bias,
            HpcFault::SignFlip { .. } => {
                let fb = crate::synthesis::gain_row(f).dot(e_bar);
                nominal - 2.0 * fb
            }
        },
        _ => nominal,
    }
}

/// One line of the event log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub rule: String,
    pub from: String,
    pub to: String,
    pub trigger_value: f64,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "E_k")]
    pub e_k: Option<[[f64; 2]; 2]>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(t: f64) -> RuleInputs {
        RuleInputs { t, f_hat_norm: 0.0, threshold: 1.0, envelope_value: 0.1, theta: 0.35, rule2: false, oracle: Some(0) }
    }

    #[test]
    fn zero_state_gives_zero_measurement() {
        let mut m = Monitor::new(MonitorConfig::default(), 1e-3, &Vec2::zeros());
        let a = Mat2::new(13.8, -45.0, -0.4, 1.3);
        for _ in 0..1000 {
            monitor_step(&mut m, &Vec2::zeros(), 0.0, &a, 1e-3);
            m.record(&Vec2::zeros());
        }
        assert_eq!(m.f_hat(&Vec2::zeros()).norm(), 0.0);
    }

    fn run_plant(f1: Vec2, secs: f64) -> Vec2 {
        // x' = A x + B u + f1 integrated alongside the monitor
        let a = Mat2::new(-2.0, 0.5, 0.1, -1.0);
        let dt = 1e-3;
        let mut x = Vec2::new(1.0, -0.5);
        let mut m = Monitor::new(MonitorConfig::default(), dt, &x);
        let n = (secs / dt) as usize;
        for i in 0..n {
            let u = (i as f64 * dt).sin();
            let xd = |y: &Vec2| a * y + B * u + f1;
            let mut zz = m.z;
            let k1 = (xd(&x), m.rhs(&zz, &x, u, &a));
            let x2 = x + k1.0 * (dt / 2.0);
            let k2 = (xd(&x2), m.rhs(&(zz + k1.1 * (dt / 2.0)), &x2, u, &a));
            let x3 = x + k2.0 * (dt / 2.0);
            let k3 = (xd(&x3), m.rhs(&(zz + k2.1 * (dt / 2.0)), &x3, u, &a));
            let x4 = x + k3.0 * dt;
            let k4 = (xd(&x4), m.rhs(&(zz + k3.1 * dt), &x4, u, &a));
            x += (k1.0 + k2.0 * 2.0 + k3.0 * 2.0 + k4.0) * (dt / 6.0);
            zz += (k1.1 + k2.1 * 2.0 + k3.1 * 2.0 + k4.1) * (dt / 6.0);
            m.z = zz;
        }
        m.f_hat(&x)
    }

    #[test]
    fn measurement_tracks_constant_uncertainty() {
        assert!(run_plant(Vec2::zeros(), 0.5).norm() < 1e-3);
        let fh = run_plant(Vec2::new(0.7, 0.0), 1.0);
        assert!((fh - Vec2::new(0.7, 0.0)).norm() < 1e-3, "{fh}");
    }

    #[test]
    fn threshold_for_resting_state() {
        let cfg = MonitorConfig { omega_z: 20.0, l0: 0.3, b0: 0.2 };
        let dt = 1e-3;
        let mut m = Monitor::new(cfg.clone(), dt, &Vec2::zeros());
        assert_eq!(m.threshold(), 0.0);
        let mut last = 0.0;
        for i in 1..=3000 {
            m.record(&Vec2::zeros());
            let th = m.threshold();
            assert!(th >= last);
            last = th;
            if i == 50 {
                let t = 49.0 * dt;
                assert!((th - 0.2 * (1.0 - (-20.0 * t).exp())).abs() < 1e-4, "{th}");
            }
        }
        assert!((last - 0.2).abs() < 1e-4);
    }

    #[test]
    fn rules_fire_and_gate() {
        let sup = SupervisorState::new(Mode::Hpc, ActiveModel::Stored(0), 30.0);
        assert!(evaluate_rules(&sup, &inputs(5.0)).accepted.is_empty());
        let hot = RuleInputs { f_hat_norm: 2.0, ..inputs(5.0) };
        let d = evaluate_rules(&sup, &hot);
        assert_eq!(d.accepted.len(), 1);
        assert_eq!(d.accepted[0].rule, Rule::I);
        let unforeseen = RuleInputs { rule2: true, envelope_value: 0.4, oracle: None, ..inputs(121.0) };
        let d = evaluate_rules(&sup, &unforeseen);
        let rules: Vec<_> = d.accepted.iter().map(|d| d.rule).collect();
        assert_eq!(rules, vec![Rule::II, Rule::IV]);

        let mut sup = SupervisorState::new(Mode::Hpc, ActiveModel::Stored(0), 30.0);
        sup.apply(&d.accepted[0], 100.0);
        sup.mode = Mode::Hpc;
        let again = RuleInputs { rule2: true, ..inputs(115.0) };
        let d = evaluate_rules(&sup, &again);
        assert!(d.accepted.is_empty());
        assert_eq!(d.deferred.len(), 1);
        assert_eq!(evaluate_rules(&sup, &RuleInputs { t: 130.0, ..again }).accepted.len(), 1);
    }

    #[test]
    fn environment_change_switches_stored_model() {
        let sup = SupervisorState::new(Mode::Rhac, ActiveModel::Stored(0), 30.0);
        let d = evaluate_rules(&sup, &RuleInputs { oracle: Some(1), ..inputs(120.0) });
        assert_eq!(d.accepted[0].action, Action::SwitchEnvironment(1));
    }

    #[test]
    fn hpc_stub_variants() {
        let p = VehicleParams::reference_car();
        let rp = ReferencePair { w_ref: 40.0, v_ref: 12.84 };
        let f = Mat2::new(-37.0, 120.0, 0.0, 0.0);
        let e = Vec2::new(0.3, 0.1);
        let nominal = rhac_control(&e, &rp, &f, 0.0, false, &p);
        assert_eq!(hpc_controller(1.0, &e, &rp, &f, None, &p), nominal);
        let zero = HpcFault::Zero { t_fault: 2.0 };
        assert_eq!(hpc_controller(1.0, &e, &rp, &f, Some(&zero), &p), nominal);
        assert_eq!(hpc_controller(2.0, &e, &rp, &f, Some(&zero), &p), 0.0);
        let flip = HpcFault::SignFlip { t_fault: 0.0 };
        let ff = crate::l1::feedforward(&rp, &p);
        assert!((hpc_controller(0.0, &e, &rp, &f, Some(&flip), &p) - (ff - (nominal - ff))).abs() < 1e-12);
    }
}
