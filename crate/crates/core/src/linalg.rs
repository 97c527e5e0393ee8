//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DVector};

/// Largest condition number accepted for a least-squares design.
pub const MAX_CONDITION: f64 = 1e10;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

/// Inverse of a symmetric positive definite matrix via Cholesky. `None` if
/// the factorization fails.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    let chol = m.clone().cholesky()?;
    let mut inv = chol.inverse();
    symmetrize(&mut inv);
    Some(inv)
}

/// Solve `m x = rhs` for SPD `m`.
pub fn spd_solve(m: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.nrows() == 0 {
        return Some(DMatrix::zeros(0, rhs.ncols()));
    }
    let chol = m.clone().cholesky()?;
    Some(chol.solve(rhs))
}

pub fn spd_log_det(m: &DMatrix<f64>) -> Option<f64> {
    if m.nrows() == 0 {
        return Some(0.0);
    }
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Thin-SVD backed least squares for a full-column-rank design.
#[derive(Debug, Clone)]
pub struct LeastSquares {
    /// Moore–Penrose inverse, `k × n`.
    pub pinv: DMatrix<f64>,
    /// `(ZᵀZ)⁻¹`, `k × k`.
    pub gram_inv: DMatrix<f64>,
    pub condition: f64,
}

impl LeastSquares {
    /// Returns `None` when the design is rank deficient or its condition
    /// number exceeds [`MAX_CONDITION`].
    pub fn new(z: &DMatrix<f64>) -> Option<Self> {
        let (n, k) = z.shape();
        if k == 0 || n < k {
            return None;
        }
        let svd = z.clone().svd(true, true);
        let s = &svd.singular_values;
        let smax = s.max();
        let smin = s.min();
        if !(smin > 0.0) || !smax.is_finite() || smax / smin > MAX_CONDITION {
            return None;
        }
        let u = svd.u.as_ref()?;
        let v = svd.v_t.as_ref()?.transpose();
        let mut v_scaled = v.clone();
        for (c, &sv) in s.iter().enumerate() {
            v_scaled.column_mut(c).scale_mut(1.0 / sv);
        }
        let pinv = &v_scaled * u.transpose();
        let mut gram_inv = &v_scaled * v_scaled.transpose();
        symmetrize(&mut gram_inv);
        Some(Self {
            pinv,
            gram_inv,
            condition: smax / smin,
        })
    }

    pub fn coefficients(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.pinv * y
    }
}

/// Columns `2..B` of a Householder reflector whose first column is `±u`,
/// i.e. an orthonormal basis of the complement of a unit vector `u`.
pub fn orthonormal_completion(u: &DVector<f64>) -> DMatrix<f64> {
    let b = u.len();
    if b <= 1 {
        return DMatrix::zeros(b, 0);
    }
    let sign = if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = u.clone();
    v[0] += sign;
    let vv = v.dot(&v);
    let mut h = DMatrix::<f64>::identity(b, b);
    h -= (&v * v.transpose()) * (2.0 / vv);
    h.columns(1, b - 1).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_is_orthonormal() {
        let u = DVector::from_vec(vec![0.6, -0.8, 0.0]).normalize();
        let c = orthonormal_completion(&u);
        assert_eq!(c.shape(), (3, 2));
        let ctc = c.transpose() * &c;
        assert!((ctc - DMatrix::identity(2, 2)).amax() < 1e-12);
        assert!((c.transpose() * &u).amax() < 1e-12);

        let neg = DVector::from_vec(vec![-1.0, 0.0]);
        let c = orthonormal_completion(&neg);
        assert!((c.transpose() * &neg).amax() < 1e-12);
        assert!((c.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn least_squares_rejects_zero_column() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.0, 2.0, 0.0, 3.0]);
        assert!(LeastSquares::new(&z).is_none());
    }

    #[test]
    fn least_squares_pinv_is_left_inverse() {
        let z = DMatrix::from_row_slice(4, 2, &[1.0, 0.5, 2.0, -1.0, 0.0, 3.0, 1.0, 1.0]);
        let ls = LeastSquares::new(&z).unwrap();
        assert!((&ls.pinv * &z - DMatrix::identity(2, 2)).amax() < 1e-12);
        let g = (z.transpose() * &z).try_inverse().unwrap();
        assert!((g - &ls.gram_inv).amax() < 1e-12);
    }
}
