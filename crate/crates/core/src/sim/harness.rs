//! Closed-loop integration: plant, L1 controller, monitor and model reference
//! advanced together by fixed-step RK4 with submodel-crossing localization.

use std::collections::VecDeque;

use log::{debug, info, warn};
use nalgebra::SVector;
use serde::{Deserialize, Serialize};

use crate::envelope::{rule2_trigger, safety_vector, zero_reference_vector, SafetyEnvelope};
use crate::error::{Error, Result};
use crate::l1::{self, performance_bound, L1ControllerState, PerformanceBound};
use crate::learning::{learn_model_capped, window_samples, SampleWindow};
use crate::linalg::{lambda_max, mat2, quad, Mat2, Vec2, B};
use crate::params::{EnvironmentSpec, VehicleParams};
use crate::plant::UncertaintySpec;
use crate::sim::scenario::{Scenario, StoredGains};
use crate::sim::trace::TraceRow;
use crate::supervisor::{
    evaluate_rules, hpc_controller, Action, ActiveModel, Category, Event, Mode, Monitor, Rule, RuleInputs,
    SupervisorState,
};
use crate::synthesis::dwell::impulse_map_from_jump;
use crate::synthesis::{gain_row, synthesize_env, EnvProblem, LyapunovCert};
use crate::vehicle::{a_matrix, actuator_split, compute_reference, slip, ActuatorPolicy, ReferencePair, Submodel};

type Aug = SVector<f64, 12>;

const X: usize = 0;
const XT: usize = 2;
const FT: usize = 4;
const XB: usize = 6;
const Z: usize = 8;
const XR: usize = 10;

fn get(y: &Aug, i: usize) -> Vec2 {
    Vec2::new(y[i], y[i + 1])
}

fn set(y: &mut Aug, i: usize, v: &Vec2) {
    y[i] = v[0];
    y[i + 1] = v[1];
}

/// Everything precomputed for one stored environment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvData {
    pub tag: String,
    pub k: f64,
    pub mu: f64,
    pub refs: [ReferencePair; 2],
    #[serde(with = "crate::linalg::row_major::seq")]
    pub gains: [Mat2; 2],
    #[serde(with = "crate::linalg::row_major::seq")]
    pub a: [Mat2; 2],
    pub c_hats: [Vec2; 2],
    #[serde(with = "crate::linalg::row_major")]
    pub p_bar: Mat2,
    pub cert: LyapunovCert,
}

impl EnvData {
    fn idx(s: Submodel) -> usize {
        s.number() as usize - 1
    }
}

/// The learned model reference installed by Rule III/IV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnedInfo {
    pub t: f64,
    #[serde(rename = "A_learned", with = "crate::linalg::row_major")]
    pub a: Mat2,
    #[serde(rename = "F_learned", with = "crate::linalg::row_major")]
    pub f: Mat2,
    #[serde(with = "crate::linalg::row_major")]
    pub p_bar: Mat2,
    pub cond_p: f64,
    pub residual: f64,
    pub gamma: f64,
    /// level at which the learned envelope contains the activation state, if any
    pub containment_level: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerfInterval {
    pub t_start: f64,
    pub t_end: f64,
    pub model: String,
    pub bound: Option<PerformanceBound>,
    /// preconditions for the tracking bound hold on this interval
    pub applicable: bool,
    pub max_deviation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: String,
    pub steps: usize,
    pub crossings: usize,
    pub projection_clamps: usize,
    pub max_f_tilde: f64,
    pub rho: f64,
    pub max_slip: f64,
    pub max_slip_after_transient: f64,
    pub slip_violations_after_transient: usize,
    pub learned: Option<LearnedInfo>,
    pub perf_intervals: Vec<PerfInterval>,
    pub final_state: [f64; 2],
    pub environments: Vec<EnvData>,
}

pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub events: Vec<Event>,
    pub summary: RunSummary,
}

struct SegData {
    t: f64,
    tag: String,
    oracle: Option<usize>,
    k_true: f64,
    mu: f64,
    unc: UncertaintySpec,
}

/// Control context fixed over one integration step.
#[derive(Clone, Copy)]
struct Law {
    a_model: Mat2,
    f: Mat2,
    rp: ReferencePair,
    learned: bool,
    p_bar: Mat2,
}

/// References of both submodels and the synthesis problem of one stored environment.
pub fn environment_problem(spec: &EnvironmentSpec, p: &VehicleParams) -> Result<([ReferencePair; 2], EnvProblem)> {
    let env = spec.id();
    let k = env.k()?;
    let mut refs = [ReferencePair::ZERO; 2];
    let mut a_list = Vec::new();
    let mut c_hats = Vec::new();
    for s in [Submodel::One, Submodel::Two] {
        let rp = compute_reference(&env, spec.w_ref, s, p)?;
        refs[EnvData::idx(s)] = rp;
        a_list.push(a_matrix(k, s, p));
        c_hats.push(if spec.w_ref == 0.0 {
            zero_reference_vector(spec.mu_sigma, p).c_hat
        } else {
            safety_vector(k, spec.mu_sigma, &rp, p)?.c_hat
        });
    }
    Ok((refs, EnvProblem { tag: spec.tag.clone(), a_list, c_hats, containment: vec![] }))
}

/// Synthesizes (or loads) the gains and certificate of one stored environment.
pub fn prepare_env(spec: &EnvironmentSpec, stored: Option<&StoredGains>, sc: &Scenario) -> Result<EnvData> {
    let (refs, prob) = environment_problem(spec, &sc.params.vehicle)?;
    let a = [prob.a_list[0], prob.a_list[1]];
    let c_hats = [prob.c_hats[0], prob.c_hats[1]];
    let (gains, p_bar) = match stored {
        Some(g) => ([mat2(g.F1), mat2(g.F2)], mat2(g.P_bar)),
        None => {
            let sol = synthesize_env(&prob, &sc.synthesis, sc.seed)?;
            info!("{}: synthesized gains, decay rate {:.4}", spec.tag, sol.gamma);
            ([sol.gains[0], sol.gains[1]], sol.p_bar)
        }
    };
    let cert = LyapunovCert::from_pairs(p_bar, &[(a[0], gains[0]), (a[1], gains[1])]);
    Ok(EnvData { tag: spec.tag.clone(), k: spec.id().k()?, mu: spec.mu_sigma, refs, gains, a, c_hats, p_bar, cert })
}

pub fn prepare(sc: &Scenario) -> Result<Vec<EnvData>> {
    sc.params
        .environments
        .iter()
        .filter(|e| e.k_sigma.is_some())
        .map(|e| prepare_env(e, sc.gains.get(&e.tag), sc))
        .collect()
}

struct Sim<'a> {
    sc: &'a Scenario,
    p: &'a VehicleParams,
    envs: Vec<EnvData>,
    segs: Vec<SegData>,
    fault_a: Option<Mat2>,
    fault_f1: UncertaintySpec,
    learned: Option<LearnedInfo>,
    sup: SupervisorState,
    monitor: Monitor,
    seg: usize,
}

impl<'a> Sim<'a> {
    fn law(&self, s: Submodel) -> Law {
        match (self.sup.model, &self.learned) {
            (ActiveModel::Learned, Some(l)) => {
                Law { a_model: l.a, f: l.f, rp: ReferencePair::ZERO, learned: true, p_bar: l.p_bar }
            }
            _ => {
                let i = match self.sup.model {
                    ActiveModel::Stored(i) => i,
                    ActiveModel::Learned => 0,
                };
                let e = &self.envs[i];
                let j = EnvData::idx(s);
                Law { a_model: e.a[j], f: e.gains[j], rp: e.refs[j], learned: false, p_bar: e.p_bar }
            }
        }
    }

    fn model_tag(&self) -> String {
        match self.sup.model {
            ActiveModel::Stored(i) => self.envs[i].tag.clone(),
            ActiveModel::Learned => "learned".into(),
        }
    }

    fn monitor_a(&self, law: &Law) -> Mat2 {
        self.fault_a.unwrap_or(law.a_model)
    }

    fn control(&self, t: f64, y: &Aug, law: &Law) -> f64 {
        let x = get(y, X);
        let e = x - law.rp.as_vec();
        match self.sup.mode {
            Mode::Hpc => hpc_controller(t, &e, &law.rp, &law.f, self.sc.hpc.fault.as_ref(), self.p),
            Mode::Rhac => {
                let u_ad = self.sc.l1.filter().2.dot(&get(y, XB));
                l1::rhac_control(&e, &law.rp, &law.f, u_ad, law.learned, self.p)
            }
        }
    }

    fn rhs(&self, t: f64, y: &Aug, s: Submodel, law: &Law) -> Aug {
        let x = get(y, X);
        let u = self.control(t, y, law);
        let seg = &self.segs[self.seg];
        let xd = match (self.sup.mode, self.fault_a) {
            (Mode::Hpc, Some(a)) => crate::plant::hpc_plant_derivative(&x, u, &a, &self.fault_f1, t),
            _ => a_matrix(seg.k_true, s, self.p) * x + B * u + seg.unc.eval(&x, t),
        };
        let mut d = Aug::zeros();
        set(&mut d, X, &xd);
        let zd = self.monitor.rhs(&get(y, Z), &x, u, &self.monitor_a(law));
        set(&mut d, Z, &zd);
        match self.sup.mode {
            Mode::Rhac => {
                let c = L1ControllerState { x_tilde: get(y, XT), f_tilde: get(y, FT), x_breve: get(y, XB) };
                set(&mut d, XT, &l1::predictor_rhs(&law.a_model, &x, u, &c, &self.sc.l1));
                set(&mut d, FT, &l1::adaptation_rhs(&x, &c, &self.sc.l1));
                set(&mut d, XB, &l1::filter_rhs(&c, &self.sc.l1));
                let xr = get(y, XR);
                let ff = if law.learned { 0.0 } else { l1::feedforward(&law.rp, self.p) };
                let ur = gain_row(&law.f).dot(&(xr - law.rp.as_vec())) + ff;
                set(&mut d, XR, &(law.a_model * xr + B * ur));
            }
            Mode::Hpc => set(&mut d, XR, &xd),
        }
        d
    }

    fn rk4(&self, t: f64, y: &Aug, h: f64, s: Submodel) -> Aug {
        let law = self.law(s);
        let k1 = self.rhs(t, y, s, &law);
        let k2 = self.rhs(t + h / 2.0, &(y + k1 * (h / 2.0)), s, &law);
        let k3 = self.rhs(t + h / 2.0, &(y + k2 * (h / 2.0)), s, &law);
        let k4 = self.rhs(t + h, &(y + k3 * h), s, &law);
        y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
    }

    fn side(&self, y: &Aug) -> Submodel {
        Submodel::from_state(y[X], y[X + 1], self.p.r)
    }

    /// Advances one step of length `h`, splitting it at submodel crossings.
    fn step(&self, t: f64, y: &Aug, s: &mut Submodel, crossings: &mut usize) -> Aug {
        let mut t0 = t;
        let mut y0 = *y;
        let mut left = self.sc.h;
        for _ in 0..4 {
            let y1 = self.rk4(t0, &y0, left, *s);
            if self.side(&y1) == *s {
                return y1;
            }
            let (mut lo, mut hi) = (0.0, left);
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                if self.side(&self.rk4(t0, &y0, mid, *s)) == *s {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            y0 = self.rk4(t0, &y0, hi, *s);
            t0 += hi;
            left -= hi;
            *s = match s {
                Submodel::One => Submodel::Two,
                Submodel::Two => Submodel::One,
            };
            *crossings += 1;
            if left <= 0.0 {
                return y0;
            }
        }
        let y1 = self.rk4(t0, &y0, left, *s);
        *s = self.side(&y1);
        y1
    }

    fn segment_bounds(&self) -> (f64, f64) {
        let seg = &self.segs[self.seg];
        let (mut l, mut b) = (seg.unc.l, seg.unc.b);
        if self.fault_a.is_some() {
            l = l.max(self.fault_f1.l);
            b = b.max(self.fault_f1.b);
        }
        (l, b)
    }

    fn perf_interval(&self, t: f64, s: Submodel, e_act: &Vec2) -> PerfInterval {
        let law = self.law(s);
        let (l, b) = self.segment_bounds();
        let bound = performance_bound(
            &law.a_model,
            &law.f,
            &law.p_bar,
            &self.sc.l1,
            e_act,
            &law.rp.as_vec(),
            l,
            b,
            self.sc.dwell_min,
        )
        .map_err(|e| warn!("t = {t:.3}: no tracking bound ({e})"))
        .ok();
        let applicable = bound
            .as_ref()
            .is_some_and(|pb| pb.valid && pb.eps_track + pb.delta <= 1.0 / lambda_max(&law.p_bar).sqrt());
        PerfInterval { t_start: t, t_end: t, model: self.model_tag(), bound, applicable, max_deviation: 0.0 }
    }

    fn learn_and_synthesize(&self, t: f64, buf: &VecDeque<(Vec2, f64)>, x: &Vec2) -> Result<LearnedInfo> {
        let lc = self.sc.learner.as_ref().ok_or_else(|| Error::Scenario("no learner configured".into()))?;
        let m = window_samples(lc.window, lc.period);
        if buf.len() < m + 1 {
            return Err(Error::InvalidParameter(format!("only {} samples recorded", buf.len())));
        }
        let states: Vec<Vec2> = buf.iter().map(|(x, _)| *x).collect();
        let controls: Vec<f64> = buf.iter().take(m).map(|(_, u)| *u).collect();
        let lm = learn_model_capped(&SampleWindow { period: lc.period, states, controls }, lc.cond_cap)?;
        let c_hat = zero_reference_vector(lc.mu_learned, self.p).c_hat;
        // θ first; the unit level set must lie in the slab, so a state with
        // |ĉᵀx| > √θ can only be contained at a level between (ĉᵀx)² and 1
        let slab = c_hat.dot(x).powi(2);
        let mut levels = vec![self.sc.envelope.theta];
        if slab < 1.0 && slab >= self.sc.envelope.theta {
            levels.push(0.5 * (slab + 1.0));
        }
        let mut found = None;
        for level in levels {
            let prob = EnvProblem {
                tag: "learned".into(),
                a_list: vec![lm.a_learned],
                c_hats: vec![c_hat],
                containment: vec![(*x, level)],
            };
            match synthesize_env(&prob, &self.sc.synthesis, self.sc.seed) {
                Ok(sol) => {
                    found = Some((sol, Some(level)));
                    break;
                }
                Err(e) => warn!("t = {t:.3}: learned envelope cannot contain the current error at level {level:.3} ({e})"),
            }
        }
        let (sol, containment_level) = match found {
            Some(f) => f,
            None => {
                let prob = EnvProblem { tag: "learned".into(), a_list: vec![lm.a_learned], c_hats: vec![c_hat], containment: vec![] };
                (synthesize_env(&prob, &self.sc.synthesis, self.sc.seed)?, None)
            }
        };
        Ok(LearnedInfo {
            t,
            a: lm.a_learned,
            f: sol.gains[0],
            p_bar: sol.p_bar,
            cond_p: lm.cond_p,
            residual: lm.residual,
            gamma: sol.gamma,
            containment_level,
        })
    }
}

pub fn run_scenario(sc: &Scenario) -> Result<RunOutput> {
    let envs = prepare(sc)?;
    run_prepared(sc, envs)
}

pub fn run_prepared(sc: &Scenario, envs: Vec<EnvData>) -> Result<RunOutput> {
    sc.validate()?;
    let p = &sc.params.vehicle;
    let learner_mu = sc.learner.as_ref().map(|l| l.mu_learned).unwrap_or(1.0);
    let mut segs = Vec::new();
    for s in &sc.schedule {
        let stored = envs.iter().position(|e| e.tag == s.env);
        let (k_true, mu) = match stored {
            Some(i) => (s.k_true.unwrap_or(envs[i].k), envs[i].mu),
            None => (s.k_true.expect("validated"), learner_mu),
        };
        segs.push(SegData { t: s.t, tag: s.env.clone(), oracle: stored, k_true, mu, unc: s.uncertainty.resolve(p)? });
    }
    let first = segs[0].oracle.expect("validated");
    let (fault_a, fault_f1) = match &sc.hpc.fault_model {
        Some(fm) => (Some(fm.a_hpc()), fm.f_1.resolve(p)?),
        None => (None, UncertaintySpec::none()),
    };
    let x0 = Vec2::new(sc.x0[0], sc.x0[1]);
    let mut sim = Sim {
        sc,
        p,
        envs,
        segs,
        fault_a,
        fault_f1,
        learned: None,
        sup: SupervisorState::new(sc.hpc.initial_mode, ActiveModel::Stored(first), sc.dwell_min),
        monitor: Monitor::new(sc.monitor.clone(), sc.h, &x0),
        seg: 0,
    };

    let mut y = Aug::zeros();
    set(&mut y, X, &x0);
    set(&mut y, Z, &sim.monitor.z);
    set(&mut y, XT, &x0);
    set(&mut y, XR, &x0);
    let mut s = sim.side(&y);
    let mut events = Vec::new();
    let mut trace = Vec::new();
    let mut perf: Vec<PerfInterval> = Vec::new();
    let mut crossings = 0usize;
    let mut clamps = 0usize;
    let mut max_ft: f64 = 0.0;
    let (mut max_slip, mut max_slip_tr, mut slip_viol) = (0.0f64, 0.0f64, 0usize);
    let mut e_act = x0 - sim.law(s).rp.as_vec();
    if sc.hpc.initial_mode == Mode::Rhac {
        perf.push(sim.perf_interval(0.0, s, &e_act));
    }

    let n_steps = (sc.t_end / sc.h).round() as usize;
    let out_every = ((1.0 / (sc.output_rate * sc.h)).round() as usize).max(1);
    let (sample_every, buf_len) = match &sc.learner {
        Some(l) => ((l.period / sc.h).round() as usize, window_samples(l.window, l.period) + 1),
        None => (usize::MAX, 0),
    };
    let mut buf: VecDeque<(Vec2, f64)> = VecDeque::new();
    let mut learn_retry_at = f64::NEG_INFINITY;
    let rho = sc.l1.rho;
    let mut x_prev = x0;

    for n in 0..=n_steps {
        let t = n as f64 * sc.h;
        while sim.seg + 1 < sim.segs.len() && t >= sim.segs[sim.seg + 1].t - 0.5 * sc.h {
            sim.seg += 1;
            debug!("t = {t:.3}: entering segment {}", sim.segs[sim.seg].tag);
        }
        let x = get(&y, X);
        let law = sim.law(s);
        let u = sim.control(t, &y, &law);
        sim.monitor.z = get(&y, Z);
        sim.monitor.record(&x);

        let sl = slip(x[0], x[1], p.r);
        let seg_mu = sim.segs[sim.seg].mu;
        max_slip = max_slip.max(sl);
        if t - sim.segs[sim.seg].t >= sc.transient {
            max_slip_tr = max_slip_tr.max(sl);
            if sl > seg_mu {
                slip_viol += 1;
            }
        }
        if sc.learner.is_some() && n % sample_every == 0 {
            buf.push_back((x, u));
            if buf.len() > buf_len {
                buf.pop_front();
            }
        }
        if sim.sup.mode == Mode::Rhac {
            if let Some(last) = perf.last_mut() {
                last.max_deviation = last.max_deviation.max((x - get(&y, XR)).norm());
                last.t_end = t;
            }
        }
        let e = x - law.rp.as_vec();
        let env_value = quad(&law.p_bar, &e);
        let threshold = sim.monitor.threshold();
        let f_hat = sim.monitor.f_hat(&x).norm();

        if n % out_every == 0 {
            let (t_e, p_cmd) = actuator_split(u, p, ActuatorPolicy::Exclusive);
            let xr = get(&y, XR);
            trace.push(TraceRow {
                t,
                w: x[0],
                v: x[1],
                w_ref: law.rp.w_ref,
                v_ref: law.rp.v_ref,
                slip: sl,
                u,
                T_e: t_e,
                P_cmd: p_cmd,
                active_controller: sim.sup.mode,
                active_model: sim.model_tag(),
                submodel: s.number(),
                f_hat_norm: f_hat,
                rule1_threshold: threshold,
                envelope_value: env_value,
                f_tilde_w: y[FT],
                f_tilde_v: y[FT + 1],
                x_tilde_w: y[XT],
                x_tilde_v: y[XT + 1],
                V_sigma: quad(&law.p_bar, &(xr - law.rp.as_vec())),
                x_bar_w: xr[0],
                x_bar_v: xr[1],
                mu_sigma: seg_mu,
                segment: sim.seg,
            });
        }
        if n == n_steps {
            break;
        }

        // supervisor decisions at the step boundary
        let e_dot = if n == 0 { Vec2::zeros() } else { (x - x_prev) / sc.h };
        let envelope = SafetyEnvelope { p_bar: law.p_bar, theta: sc.envelope.theta, eps_margin: sc.envelope.eps_margin };
        let inputs = RuleInputs {
            t,
            f_hat_norm: f_hat,
            threshold,
            envelope_value: env_value,
            theta: sc.envelope.theta,
            rule2: n > 0 && rule2_trigger(&e, &e_dot, &envelope),
            oracle: sim.segs[sim.seg].oracle,
        };
        let decision = evaluate_rules(&sim.sup, &inputs);
        let mut changed = false;
        let mut activated = false;
        for d in &decision.accepted {
            let from = sim.model_tag();
            let rule = rule_name(d.rule);
            match d.action {
                Action::ActivateRhac => {
                    sim.sup.apply(d, t);
                    set(&mut y, XT, &x);
                    set(&mut y, FT, &Vec2::zeros());
                    set(&mut y, XB, &Vec2::zeros());
                    set(&mut y, XR, &x);
                    activated = true;
                    changed = true;
                    info!("t = {t:.3}: rule {rule} activates RHAC");
                    events.push(event(t, rule, "hpc", "rhac", d, Category::Controller, None));
                }
                Action::ActivateLearned => {
                    if t < learn_retry_at {
                        continue;
                    }
                    match sim.learn_and_synthesize(t, &buf, &(x - ReferencePair::ZERO.as_vec())) {
                        Ok(info) => {
                            info!("t = {t:.3}: rule {rule} activates the learned model {:?}", info.a);
                            sim.learned = Some(info);
                            sim.sup.apply(d, t);
                            changed = true;
                            events.push(event(t, rule, &from, "learned", d, Category::Model, None));
                        }
                        Err(err) => {
                            warn!("t = {t:.3}: learning failed ({err}); keeping {from}");
                            learn_retry_at = t + sc.learner.as_ref().map(|l| l.period).unwrap_or(sc.h);
                            events.push(event(t, "degraded", &from, &from, d, Category::Model, None));
                        }
                    }
                }
                Action::SwitchEnvironment(j) => {
                    let ref_old = sim.law(s).rp;
                    sim.sup.apply(d, t);
                    let ref_new = sim.law(s).rp;
                    let e_minus = get(&y, XR) - ref_old.as_vec();
                    let map = impulse_map_from_jump(&e_minus, &ref_old, &ref_new);
                    changed = true;
                    let to = sim.envs[j].tag.clone();
                    events.push(event(t, rule, &from, &to, d, Category::Model, Some(crate::linalg::rows(&map.e_k))));
                }
            }
        }
        if changed {
            sim.monitor.reset(&x);
            set(&mut y, Z, &sim.monitor.z);
            if activated {
                e_act = x - sim.law(s).rp.as_vec();
            }
            if sim.sup.mode == Mode::Rhac {
                perf.push(sim.perf_interval(t, s, &e_act));
            }
        }
        for d in &decision.deferred {
            debug!("t = {t:.3}: rule {} deferred by dwell time", rule_name(d.rule));
        }

        x_prev = x;
        let mut y_next = sim.step(t, &y, &mut s, &mut crossings);
        let mut c = L1ControllerState { f_tilde: get(&y_next, FT), ..Default::default() };
        if c.clamp_estimate(rho) {
            clamps += 1;
            set(&mut y_next, FT, &c.f_tilde);
        }
        max_ft = max_ft.max(c.f_tilde.norm());
        if !y_next.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { step: n + 1, t: t + sc.h });
        }
        y = y_next;
    }

    let x_end = get(&y, X);
    let summary = RunSummary {
        name: sc.name.clone(),
        steps: n_steps,
        crossings,
        projection_clamps: clamps,
        max_f_tilde: max_ft,
        rho,
        max_slip,
        max_slip_after_transient: max_slip_tr,
        slip_violations_after_transient: slip_viol,
        learned: sim.learned.clone(),
        perf_intervals: perf,
        final_state: [x_end[0], x_end[1]],
        environments: sim.envs.clone(),
    };
    Ok(RunOutput { trace, events, summary })
}

fn rule_name(r: Rule) -> &'static str {
    match r {
        Rule::I => "I",
        Rule::II => "II",
        Rule::III => "III",
        Rule::IV => "IV",
        Rule::Environment => "environment",
    }
}

fn event(
    t: f64,
    rule: &str,
    from: &str,
    to: &str,
    d: &crate::supervisor::Decision,
    category: Category,
    e_k: Option<[[f64; 2]; 2]>,
) -> Event {
    Event {
        t,
        rule: rule.to_string(),
        from: from.to_string(),
        to: to.to_string(),
        trigger_value: d.trigger_value,
        threshold: d.threshold,
        category: Some(category),
        e_k,
    }
}
