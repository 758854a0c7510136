//! Small fixed-size helpers. Everything in the controller is 2×2, so the
//! symmetric eigenvalues and Hurwitz tests are done in closed form.

use nalgebra::{DMatrix, Matrix2, Vector2};

pub type Mat2 = Matrix2<f64>;
pub type Vec2 = Vector2<f64>;

pub const B: Vec2 = Vec2::new(1.0, 0.0);

pub fn b_hat() -> Mat2 {
    Mat2::new(1.0, 1.0, 0.0, 0.0)
}

pub fn mat2(rows: [[f64; 2]; 2]) -> Mat2 {
    Mat2::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
}

pub fn rows(m: &Mat2) -> [[f64; 2]; 2] {
    [[m[(0, 0)], m[(0, 1)]], [m[(1, 0)], m[(1, 1)]]]
}

/// Serde adapter writing a matrix as nested rows `[[a, b], [c, d]]`.
pub mod row_major {
    use super::{mat2, rows, Mat2};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat2, s: S) -> Result<S::Ok, S::Error> {
        rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat2, D::Error> {
        Ok(mat2(<[[f64; 2]; 2]>::deserialize(d)?))
    }

    /// Same for a list of matrices.
    pub mod seq {
        use super::super::{mat2, rows, Mat2};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer, M: AsRef<[Mat2]>>(ms: &M, s: S) -> Result<S::Ok, S::Error> {
            ms.as_ref().iter().map(rows).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>, M: TryFrom<Vec<Mat2>>>(d: D) -> Result<M, D::Error> {
            let v: Vec<Mat2> = Vec::<[[f64; 2]; 2]>::deserialize(d)?.into_iter().map(mat2).collect();
            let n = v.len();
            M::try_from(v).map_err(|_| serde::de::Error::custom(format!("unexpected number of matrices ({n})")))
        }
    }
}

/// Eigenvalues (ascending) of the symmetric part of `m`.
pub fn sym_eigs(m: &Mat2) -> (f64, f64) {
    let a = m[(0, 0)];
    let d = m[(1, 1)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let mean = 0.5 * (a + d);
    let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    (mean - rad, mean + rad)
}

pub fn lambda_min(m: &Mat2) -> f64 {
    sym_eigs(m).0
}

pub fn lambda_max(m: &Mat2) -> f64 {
    sym_eigs(m).1
}

pub fn is_spd(m: &Mat2) -> bool {
    (m[(0, 1)] - m[(1, 0)]).abs() <= 1e-9 * (1.0 + m.abs().max()) && lambda_min(m) > 0.0
}

pub fn symmetrize(m: &Mat2) -> Mat2 {
    0.5 * (m + m.transpose())
}

/// 2×2 Hurwitz test via trace < 0 and det > 0, both with a margin.
pub fn is_hurwitz(m: &Mat2, margin: f64) -> bool {
    m.trace() < -margin && m.determinant() > margin
}

/// Largest real part of the eigenvalues of a 2×2 matrix.
pub fn spectral_abscissa(m: &Mat2) -> f64 {
    let tr = m.trace();
    let disc = tr * tr / 4.0 - m.determinant();
    if disc >= 0.0 {
        tr / 2.0 + disc.sqrt()
    } else {
        tr / 2.0
    }
}

/// `Aᵀ P + P A`, symmetrized against roundoff.
pub fn lyap_residual(a: &Mat2, p: &Mat2) -> Mat2 {
    symmetrize(&(a.transpose() * p + p * a))
}

pub fn quad(p: &Mat2, e: &Vec2) -> f64 {
    e.dot(&(p * e))
}

/// Spectral norm of a general (small) matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().svd(false, false).singular_values;
    s.iter().cloned().fold(0.0, f64::max)
}

/// Eigenvalues of a symmetric dynamic matrix, ascending.
pub fn sym_eigs_dyn(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let mut v: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}
