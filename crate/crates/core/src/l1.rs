//! L1 adaptive controller: state predictor, projection-based adaptation, low
//! pass filter, control law and the tracking-bound calculator.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{lambda_min, quad, spectral_abscissa, Mat2, Vec2, B};
use crate::params::VehicleParams;
use crate::synthesis::{closed_loop, gain_row};
use crate::vehicle::ReferencePair;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Config {
    pub alpha: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub rho: f64,
    /// defaults to `1 − 0.1ρ²`
    #[serde(default)]
    pub vartheta: Option<f64>,
    #[serde(default = "default_omega_c")]
    pub omega_c: f64,
    #[serde(default)]
    pub delta_sqrt: bool,
}

fn default_omega_c() -> f64 {
    50.0
}

impl Default for L1Config {
    fn default() -> Self {
        L1Config { alpha: 10.0, k: 1e4, rho: 1.0, vartheta: None, omega_c: 50.0, delta_sqrt: false }
    }
}

impl L1Config {
    pub fn vartheta(&self) -> f64 {
        self.vartheta.unwrap_or(1.0 - 0.1 * self.rho * self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        let th = self.vartheta();
        if !(self.alpha > 0.0 && self.k > 0.0 && self.rho > 0.0 && self.omega_c > 0.0) {
            return Err(Error::InvalidParameter("alpha, K, rho and omega_c must be positive".into()));
        }
        if !(th > 1.0 - self.rho * self.rho && th < 1.0) {
            return Err(Error::InvalidParameter(format!("vartheta {th} outside (1 - rho^2, 1)")));
        }
        Ok(())
    }

    /// Filter realization `(Ă, B̆, C̆)`: two first-order sections `ω/(s+ω)`
    /// whose outputs are summed.
    pub fn filter(&self) -> (Mat2, Mat2, Vec2) {
        (-Mat2::identity() * self.omega_c, Mat2::identity() * self.omega_c, Vec2::new(1.0, 1.0))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct L1ControllerState {
    pub x_tilde: Vec2,
    pub f_tilde: Vec2,
    pub x_breve: Vec2,
}

impl L1ControllerState {
    /// State at the activation instant: predictor on the measured state,
    /// filter empty, no uncertainty estimate yet.
    pub fn activate(x: &Vec2) -> Self {
        L1ControllerState { x_tilde: *x, f_tilde: Vec2::zeros(), x_breve: Vec2::zeros() }
    }

    pub fn u_ad(&self, cfg: &L1Config) -> f64 {
        cfg.filter().2.dot(&self.x_breve)
    }

    /// Pulls `f̃` back onto the ball of radius ρ if an integration step left
    /// it marginally outside. Returns whether a clamp happened.
    pub fn clamp_estimate(&mut self, rho: f64) -> bool {
        let n = self.f_tilde.norm();
        if n > rho {
            self.f_tilde *= rho / n;
            while self.f_tilde.norm() > rho {
                self.f_tilde *= 1.0 - f64::EPSILON;
            }
            true
        } else {
            false
        }
    }
}

fn g_of(p: &Vec2, rho: f64, vartheta: f64) -> f64 {
    (p.dot(p) - rho * rho + 1.0 - vartheta) / (1.0 - vartheta)
}

pub fn proj(p: &Vec2, q: &Vec2, rho: f64, vartheta: f64) -> Vec2 {
    let g = g_of(p, rho, vartheta);
    let grad = p * (2.0 / (1.0 - vartheta));
    let gn = grad.norm_squared();
    if g > 0.0 && q.dot(&grad) > 0.0 && gn > 0.0 {
        q - grad * (grad.dot(q) * g / gn)
    } else {
        *q
    }
}

pub fn predictor_rhs(a: &Mat2, x: &Vec2, u: f64, c: &L1ControllerState, cfg: &L1Config) -> Vec2 {
    a * x + B * u + c.f_tilde - (c.x_tilde - x) * cfg.alpha
}

pub fn adaptation_rhs(x: &Vec2, c: &L1ControllerState, cfg: &L1Config) -> Vec2 {
    proj(&c.f_tilde, &(x - c.x_tilde), cfg.rho, cfg.vartheta()) * cfg.k
}

pub fn filter_rhs(c: &L1ControllerState, cfg: &L1Config) -> Vec2 {
    let (a, b, _) = cfg.filter();
    a * c.x_breve + b * c.f_tilde
}

fn rk4<F: Fn(&L1ControllerState) -> L1ControllerState>(c: &L1ControllerState, dt: f64, f: F) -> L1ControllerState {
    let add = |s: &L1ControllerState, d: &L1ControllerState, h: f64| L1ControllerState {
        x_tilde: s.x_tilde + d.x_tilde * h,
        f_tilde: s.f_tilde + d.f_tilde * h,
        x_breve: s.x_breve + d.x_breve * h,
    };
    let k1 = f(c);
    let k2 = f(&add(c, &k1, dt / 2.0));
    let k3 = f(&add(c, &k2, dt / 2.0));
    let k4 = f(&add(c, &k3, dt));
    L1ControllerState {
        x_tilde: c.x_tilde + (k1.x_tilde + k2.x_tilde * 2.0 + k3.x_tilde * 2.0 + k4.x_tilde) * (dt / 6.0),
        f_tilde: c.f_tilde + (k1.f_tilde + k2.f_tilde * 2.0 + k3.f_tilde * 2.0 + k4.f_tilde) * (dt / 6.0),
        x_breve: c.x_breve + (k1.x_breve + k2.x_breve * 2.0 + k3.x_breve * 2.0 + k4.x_breve) * (dt / 6.0),
    }
}

/// One RK4 step of the predictor with `x` and `u` held over the step.
pub fn predictor_step(c: &L1ControllerState, x: &Vec2, u: f64, a: &Mat2, cfg: &L1Config, dt: f64) -> L1ControllerState {
    rk4(c, dt, |s| L1ControllerState { x_tilde: predictor_rhs(a, x, u, s, cfg), ..Default::default() })
}

pub fn adaptation_step(c: &L1ControllerState, x: &Vec2, cfg: &L1Config, dt: f64) -> L1ControllerState {
    let mut out = rk4(c, dt, |s| L1ControllerState { f_tilde: adaptation_rhs(x, s, cfg), ..Default::default() });
    out.clamp_estimate(cfg.rho);
    out
}

pub fn filter_step(c: &L1ControllerState, cfg: &L1Config, dt: f64) -> (L1ControllerState, f64) {
    let out = rk4(c, dt, |s| L1ControllerState { x_breve: filter_rhs(s, cfg), ..Default::default() });
    (out, out.u_ad(cfg))
}

/// Model-reference feedforward `(ϱw + ζrv)/J` that holds the reference point.
pub fn feedforward(rp: &ReferencePair, p: &VehicleParams) -> f64 {
    (p.varrho * rp.w_ref + p.zeta * p.r * rp.v_ref) / p.J
}

/// `u = 1ᵀF ē + u_ff − u_ad`; the learned model carries no feedforward.
pub fn rhac_control(e_bar: &Vec2, rp: &ReferencePair, f: &Mat2, u_ad: f64, learned: bool, p: &VehicleParams) -> f64 {
    let ff = if learned { 0.0 } else { feedforward(rp, p) };
    gain_row(f).dot(e_bar) + ff - u_ad
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerformanceBound {
    pub delta: f64,
    pub mu_bound: f64,
    pub chi: f64,
    pub eps_track: f64,
    /// `‖H B T(s)(s+α)‖_L1` and `‖H (I − B T(s))‖_L1`
    pub h_l1_norms: [f64; 2],
    pub valid: bool,
}

struct Realization {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
}

fn cascade_tracking(acl: &Mat2, cfg: &L1Config) -> Realization {
    // input f (2) → filter x̆ → B·(s+α)T → H
    let (af, bf, cf) = cfg.filter();
    let mut a = DMatrix::zeros(4, 4);
    let mut b = DMatrix::zeros(4, 2);
    let mut c = DMatrix::zeros(2, 4);
    let out_x = cf.transpose() * (af + Mat2::identity() * cfg.alpha);
    let out_u = cf.transpose() * bf;
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = af[(i, j)];
            a[(2 + i, 2 + j)] = acl[(i, j)];
            a[(2 + i, j)] = B[i] * out_x[j];
            b[(i, j)] = bf[(i, j)];
            b[(2 + i, j)] = B[i] * out_u[j];
        }
        c[(i, 2 + i)] = 1.0;
    }
    Realization { a, b, c }
}

fn cascade_residual(acl: &Mat2, cfg: &L1Config) -> Realization {
    // H (I − B T): input f drives H directly and through −B·T
    let (af, bf, cf) = cfg.filter();
    let mut a = DMatrix::zeros(4, 4);
    let mut b = DMatrix::zeros(4, 2);
    let mut c = DMatrix::zeros(2, 4);
    for i in 0..2 {
        for j in 0..2 {
            a[(i, j)] = af[(i, j)];
            a[(2 + i, 2 + j)] = acl[(i, j)];
            a[(2 + i, j)] = -B[i] * cf[j];
            b[(i, j)] = bf[(i, j)];
        }
        b[(2 + i, i)] = 1.0;
        c[(i, 2 + i)] = 1.0;
    }
    Realization { a, b, c }
}

/// Induced ∞-norm L1 norm of a stable realization: trapezoidal integral of
/// the absolute impulse response entries, maximum row sum.
fn l1_norm(rz: &Realization, slowest: f64, fastest: f64, refine: usize) -> f64 {
    let horizon = 10.0 / slowest;
    let mut dt = (0.02 / fastest).min(horizon / 2e4);
    dt /= refine as f64;
    let steps = (horizon / dt).ceil() as usize;
    let phi = (&rz.a * dt).exp();
    let mut x = rz.b.clone();
    let mut acc = DMatrix::<f64>::zeros(rz.c.nrows(), rz.b.ncols());
    let mut prev = (&rz.c * &x).abs();
    for _ in 0..steps {
        x = &phi * &x;
        let g = (&rz.c * &x).abs();
        acc += (&prev + &g) * (0.5 * dt);
        prev = g;
    }
    (0..acc.nrows()).map(|i| acc.row(i).sum()).fold(0.0, f64::max)
}

pub fn transfer_l1_norms(acl: &Mat2, cfg: &L1Config, refine: usize) -> Result<[f64; 2]> {
    let abscissa = spectral_abscissa(acl);
    if !(abscissa < 0.0) {
        return Err(Error::InvalidParameter("closed loop is not Hurwitz".into()));
    }
    let eig = acl.complex_eigenvalues();
    let fastest = eig.iter().map(|l| l.norm()).fold(cfg.omega_c, f64::max);
    let slowest = (-abscissa).min(cfg.omega_c);
    Ok([
        l1_norm(&cascade_tracking(acl, cfg), slowest, fastest, refine),
        l1_norm(&cascade_residual(acl, cfg), slowest, fastest, refine),
    ])
}

/// `μ = 4ρ² + ((4αρ² + 2ρl)/α)(1/(1 − e^{−2α·dwell}) + 1)`.
pub fn mu_bound(cfg: &L1Config, l: f64, dwell_min: f64) -> f64 {
    let (a, r) = (cfg.alpha, cfg.rho);
    4.0 * r * r + (4.0 * a * r * r + 2.0 * r * l) / a * (1.0 / (1.0 - (-2.0 * a * dwell_min).exp()) + 1.0)
}

pub fn delta_of(e_act: &Vec2, p_bar: &Mat2, sqrt: bool) -> f64 {
    let d = quad(p_bar, e_act) / lambda_min(p_bar);
    if sqrt {
        d.sqrt()
    } else {
        d
    }
}

/// Tracking bound after activation for the closed loop `A + B̂F`.
#[allow(clippy::too_many_arguments)]
pub fn performance_bound(
    a: &Mat2,
    f: &Mat2,
    p_bar: &Mat2,
    cfg: &L1Config,
    e_act: &Vec2,
    x_star: &Vec2,
    l: f64,
    b: f64,
    dwell_min: f64,
) -> Result<PerformanceBound> {
    cfg.validate()?;
    let norms = transfer_l1_norms(&closed_loop(a, f), cfg, 1)?;
    let delta = delta_of(e_act, p_bar, cfg.delta_sqrt);
    let mu = mu_bound(cfg, l, dwell_min);
    let chi = norms[1] * l;
    // (b/l)·χ written as b·‖H(I − BT)‖ so that l = 0 is well defined
    let eps = (norms[0] * (mu / cfg.k).sqrt() + (delta + x_star.norm()) * chi + b * norms[1]) / (1.0 - chi);
    Ok(PerformanceBound { delta, mu_bound: mu, chi, eps_track: eps, h_l1_norms: norms, valid: chi < 1.0 && eps > 0.0 })
}
