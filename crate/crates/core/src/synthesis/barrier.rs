//! Log-barrier Newton method over the three free entries of a symmetric 2×2
//! matrix `Q = [[q11, q12], [q12, q22]]`.
//!
//! The switching LMI has a rank-one input matrix, so for a fixed `Q` the
//! gain variables can be eliminated in closed form and only scalar or 2×2
//! convex constraints on `Q` remain. They are handled here.

use nalgebra::{DMatrix, DVector};

use crate::linalg::{Mat2, Vec2};

const BASIS: [[f64; 4]; 3] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

fn basis(i: usize) -> Mat2 {
    let b = BASIS[i];
    Mat2::new(b[0], b[1], b[2], b[3])
}

pub fn q_of(z: &[f64]) -> Mat2 {
    Mat2::new(z[0], z[1], z[1], z[2])
}

#[derive(Clone, Debug)]
pub enum Constraint {
    /// `a·z ≤ b`
    Linear { a: [f64; 3], b: f64 },
    /// `dᵀQ⁻¹d ≤ level`
    MatrixFractional { d: Vec2, level: f64 },
}

impl Constraint {
    /// Constraint value `g(z)` in `g ≤ 0` form, with gradient and Hessian.
    fn eval(&self, z: &[f64]) -> Option<(f64, [f64; 3], [[f64; 3]; 3])> {
        match self {
            Constraint::Linear { a, b } => Some((a[0] * z[0] + a[1] * z[1] + a[2] * z[2] - b, *a, [[0.0; 3]; 3])),
            Constraint::MatrixFractional { d, level } => {
                let qi = q_of(z).try_inverse()?;
                let y = qi * d;
                let g = d.dot(&y) - level;
                let mut grad = [0.0; 3];
                let mut hess = [[0.0; 3]; 3];
                let ey: Vec<Vec2> = (0..3).map(|i| basis(i) * y).collect();
                for i in 0..3 {
                    grad[i] = -y.dot(&ey[i]);
                    for j in 0..3 {
                        let t = ey[i].dot(&(qi * ey[j]));
                        hess[i][j] = 2.0 * t;
                    }
                }
                Some((g, grad, hess))
            }
        }
    }
}

/// Problem: minimize `−log det Q` subject to `Q ≻ 0`, `Q ≺ cap·I` and the
/// listed constraints.
#[derive(Clone, Debug)]
pub struct Problem {
    pub cap: f64,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// variables (z, s), minimize s with all listed constraints relaxed by s
    Feasibility,
    Optimize,
}

impl Problem {
    fn eval(&self, x: &DVector<f64>, t: f64, phase: Phase) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let n = x.len();
        let z = [x[0], x[1], x[2]];
        let q = q_of(&z);
        let det = q.determinant();
        if !(q[(0, 0)] > 0.0 && det > 0.0) {
            return None;
        }
        let s_mat = Mat2::identity() * self.cap - q;
        let det_s = s_mat.determinant();
        if !(s_mat[(0, 0)] > 0.0 && det_s > 0.0) {
            return None;
        }
        let qi = q.try_inverse()?;
        let si = s_mat.try_inverse()?;
        let mut val = 0.0;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);

        // −log det Q is both the volume objective and the Q ≻ 0 barrier; in the
        // feasibility phase it only acts as a barrier.
        let w_logdet = if phase == Phase::Optimize { t + 1.0 } else { 1.0 };
        val -= w_logdet * det.ln();
        val -= det_s.ln();
        for i in 0..3 {
            let ei = basis(i);
            g[i] += -w_logdet * (qi * ei).trace() + (si * ei).trace();
            for j in 0..3 {
                let ej = basis(j);
                h[(i, j)] += w_logdet * (qi * ei * qi * ej).trace() + (si * ei * si * ej).trace();
            }
        }
        if phase == Phase::Feasibility {
            val += t * x[3];
            g[3] += t;
        }
        for c in &self.constraints {
            let (gv, cg, ch) = c.eval(&z)?;
            let slack = if phase == Phase::Feasibility { x[3] - gv } else { -gv };
            if !(slack > 0.0) {
                return None;
            }
            val -= slack.ln();
            // d(−ln slack) = −(d slack)/slack, slack = s − g or −g
            let mut ds = DVector::zeros(n);
            for i in 0..3 {
                ds[i] = -cg[i];
            }
            if phase == Phase::Feasibility {
                ds[3] = 1.0;
            }
            g -= &ds / slack;
            h += (&ds * ds.transpose()) / (slack * slack);
            for i in 0..3 {
                for j in 0..3 {
                    h[(i, j)] += ch[i][j] / slack;
                }
            }
        }
        Some((val, g, h))
    }

    fn center(&self, x: &mut DVector<f64>, t: f64, phase: Phase) -> bool {
        for _ in 0..200 {
            let Some((f, g, h)) = self.eval(x, t, phase) else { return false };
            let scale = h.diagonal().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-300);
            let reg = &h + DMatrix::identity(x.len(), x.len()) * (scale * 1e-14);
            let dx = match reg.clone().cholesky() {
                Some(c) => -c.solve(&g),
                None => match reg.lu().solve(&(-&g)) {
                    Some(d) => d,
                    None => return false,
                },
            };
            let dec = -g.dot(&dx);
            if dec / 2.0 < 1e-11 {
                return true;
            }
            let mut step = 1.0;
            loop {
                let cand = &*x + &dx * step;
                if let Some((fc, _, _)) = self.eval(&cand, t, phase) {
                    if fc <= f - 0.25 * step * dec {
                        *x = cand;
                        break;
                    }
                }
                step *= 0.5;
                if step < 1e-14 {
                    return true;
                }
            }
            if phase == Phase::Feasibility && x[3] < -1e-9 {
                return true;
            }
        }
        true
    }

    /// Finds a strictly feasible point starting from `z0` (which must satisfy
    /// `0 ≺ Q ≺ cap·I`). Returns the point and the achieved worst slack.
    pub fn find_feasible(&self, z0: [f64; 3]) -> (Option<[f64; 3]>, f64) {
        let worst = self
            .constraints
            .iter()
            .filter_map(|c| c.eval(&z0).map(|v| v.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < 0.0 {
            return (Some(z0), worst);
        }
        let mut x = DVector::from_vec(vec![z0[0], z0[1], z0[2], worst.abs() * 1.1 + 1.0]);
        if self.eval(&x, 1.0, Phase::Feasibility).is_none() {
            return (None, f64::INFINITY);
        }
        let mut t = 1.0;
        for _ in 0..60 {
            if !self.center(&mut x, t, Phase::Feasibility) {
                break;
            }
            if x[3] < -1e-9 {
                break;
            }
            t *= 8.0;
        }
        let z = [x[0], x[1], x[2]];
        let worst = self
            .constraints
            .iter()
            .filter_map(|c| c.eval(&z).map(|v| v.0))
            .fold(f64::NEG_INFINITY, f64::max);
        if worst < 0.0 {
            (Some(z), worst)
        } else {
            (None, worst)
        }
    }

    /// Maximizes `log det Q` from a strictly feasible start.
    pub fn optimize(&self, z0: [f64; 3]) -> Option<[f64; 3]> {
        let mut x = DVector::from_vec(z0.to_vec());
        let m = (self.constraints.len() + 3) as f64;
        let mut t = 1.0;
        while m / t > 1e-9 {
            if !self.center(&mut x, t, Phase::Optimize) {
                return None;
            }
            t *= 10.0;
        }
        Some([x[0], x[1], x[2]])
    }

    pub fn worst_violation(&self, z: [f64; 3]) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.eval(&z).map(|v| v.0).unwrap_or(f64::INFINITY))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_volume_inside_slab_and_cap() {
        // |e₂| ≤ 1 slab, cap 4: optimum Q = diag(4, 1) up to the barrier gap
        let p = Problem { cap: 4.0, constraints: vec![Constraint::Linear { a: [0.0, 0.0, 1.0], b: 1.0 }] };
        let (z, _) = p.find_feasible([0.5, 0.0, 0.5]);
        let z = p.optimize(z.unwrap()).unwrap();
        assert!((z[0] - 4.0).abs() < 1e-6 && z[1].abs() < 1e-6 && (z[2] - 1.0).abs() < 1e-6, "{z:?}");
    }

    #[test]
    fn feasibility_phase_reaches_interior() {
        let p = Problem {
            cap: 100.0,
            constraints: vec![
                Constraint::Linear { a: [0.0, -1.0, 2.0], b: -0.1 },
                Constraint::MatrixFractional { d: Vec2::new(3.0, 1.0), level: 0.5 },
            ],
        };
        let (z, worst) = p.find_feasible([1.0, 0.0, 1.0]);
        let z = z.unwrap();
        assert!(worst < 0.0);
        let q = q_of(&z);
        assert!(q.determinant() > 0.0);
        let d = Vec2::new(3.0, 1.0);
        assert!(d.dot(&(q.try_inverse().unwrap() * d)) < 0.5);
    }

    #[test]
    fn infeasible_detected() {
        // q22 ≤ −1 cannot hold for Q ≻ 0
        let p = Problem { cap: 10.0, constraints: vec![Constraint::Linear { a: [0.0, 0.0, 1.0], b: -1.0 }] };
        assert!(p.find_feasible([1.0, 0.0, 1.0]).0.is_none());
    }
}
