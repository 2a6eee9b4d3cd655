//! Least-squares residual machinery on a thin QR factorisation.

use super::matrix::{dot, norm_sq, Matrix};
use crate::error::{Error, Result};

/// Gram matrices whose reciprocal condition estimate falls below this are rejected.
pub const RCOND_THRESHOLD: f64 = 1e-10;

/// Orthonormal basis of the column span of a design sub-matrix, `X_M = Q R`.
///
/// Built with twice-iterated modified Gram–Schmidt so the residual
/// `(I - QQᵀ) y` stays accurate even when columns are mildly collinear.
#[derive(Debug, Clone)]
pub struct ColumnBasis {
    n: usize,
    /// Orthonormal columns, each of length `n`.
    q: Vec<Vec<f64>>,
    /// Upper-triangular `R`, row-major `k x k`.
    r: Vec<f64>,
    columns: Vec<usize>,
}

impl ColumnBasis {
    /// Factorises the columns `cols` of `x` (in the given order).
    pub fn new(x: &Matrix, cols: &[usize]) -> Result<Self> {
        let n = x.rows();
        let k = cols.len();
        if let Some(&bad) = cols.iter().find(|&&c| c >= x.cols()) {
            return Err(Error::DimensionMismatch(format!(
                "column {bad} requested from a matrix with {} columns",
                x.cols()
            )));
        }
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut r = vec![0.0; k * k];
        for (c, &col) in cols.iter().enumerate() {
            let mut v = x.column(col);
            for _ in 0..2 {
                for (i, qi) in q.iter().enumerate() {
                    let h = dot(qi, &v);
                    for t in 0..n {
                        v[t] -= h * qi[t];
                    }
                    r[i * k + c] += h;
                }
            }
            let norm = norm_sq(&v).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::RankDeficient {
                    columns: cols.to_vec(),
                });
            }
            r[c * k + c] = norm;
            for t in &mut v {
                *t /= norm;
            }
            q.push(v);
        }
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for c in 0..k {
            let d = r[c * k + c].abs();
            lo = lo.min(d);
            hi = hi.max(d);
        }
        if k > 0 && (lo / hi).powi(2) < RCOND_THRESHOLD {
            return Err(Error::RankDeficient {
                columns: cols.to_vec(),
            });
        }
        Ok(Self {
            n,
            q,
            r,
            columns: cols.to_vec(),
        })
    }

    pub fn rank(&self) -> usize {
        self.q.len()
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    /// `(I - P_X) y`.
    pub fn residual(&self, y: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y.len(), self.n);
        let mut v = y.to_vec();
        for _ in 0..2 {
            for qi in &self.q {
                let h = dot(qi, &v);
                for t in 0..self.n {
                    v[t] -= h * qi[t];
                }
            }
        }
        v
    }

    /// Least-squares coefficients `(XᵀX)⁻¹ Xᵀ y`, ordered like the factorised columns.
    pub fn coefficients(&self, y: &[f64]) -> Vec<f64> {
        let k = self.rank();
        let qty: Vec<f64> = self.q.iter().map(|qi| dot(qi, y)).collect();
        let mut beta = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = qty[i];
            for j in i + 1..k {
                s -= self.r[i * k + j] * beta[j];
            }
            beta[i] = s / self.r[i * k + i];
        }
        beta
    }

    /// `X (XᵀX)⁻¹ e_pos`: the contrast whose inner product with `y` is the
    /// `pos`-th least-squares coefficient.
    pub fn coefficient_contrast(&self, pos: usize) -> Vec<f64> {
        let k = self.rank();
        // Rᵀ s = e_pos
        let mut s = vec![0.0; k];
        for i in 0..k {
            let mut acc = if i == pos { 1.0 } else { 0.0 };
            for j in 0..i {
                acc -= self.r[j * k + i] * s[j];
            }
            s[i] = acc / self.r[i * k + i];
        }
        let mut eta = vec![0.0; self.n];
        for (qi, si) in self.q.iter().zip(&s) {
            for t in 0..self.n {
                eta[t] += si * qi[t];
            }
        }
        eta
    }
}

/// Residual sum of squares of `y` regressed on all columns of `x_m`.
pub fn rss(y: &[f64], x_m: &Matrix) -> Result<f64> {
    if y.len() != x_m.rows() {
        return Err(Error::DimensionMismatch(format!(
            "response of length {} against {} design rows",
            y.len(),
            x_m.rows()
        )));
    }
    let cols: Vec<usize> = (0..x_m.cols()).collect();
    let basis = ColumnBasis::new(x_m, &cols)?;
    Ok(norm_sq(&basis.residual(y)))
}

/// The residual projector `I - X (XᵀX)⁻¹ Xᵀ`; the identity when `x_m` has no columns.
pub fn residual_operator(x_m: &Matrix) -> Result<Matrix> {
    let n = x_m.rows();
    let cols: Vec<usize> = (0..x_m.cols()).collect();
    let basis = ColumnBasis::new(x_m, &cols)?;
    let mut out = Matrix::identity(n);
    for qi in &basis.q {
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, out.get(i, j) - qi[i] * qi[j]);
            }
        }
    }
    // Exact symmetry.
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (out.get(i, j) + out.get(j, i));
            out.set(i, j, v);
            out.set(j, i, v);
        }
    }
    Ok(out)
}
