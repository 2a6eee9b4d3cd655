use serde::{Deserialize, Serialize};

use super::matrix::{backward_substitute_transposed, cholesky, forward_substitute, Matrix};
use crate::error::{Error, Result};

/// One diagonal block of the stacked covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CovBlock {
    /// `variance · I_n`
    Scaled { n: usize, variance: f64 },
    /// General SPD block with its Cholesky factor.
    Dense { matrix: Matrix, chol: Matrix },
}

impl CovBlock {
    pub fn scaled(n: usize, variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::Config(format!(
                "noise variance must be positive and finite, got {variance}"
            )));
        }
        Ok(CovBlock::Scaled { n, variance })
    }

    pub fn dense(matrix: Matrix) -> Result<Self> {
        let n = matrix.rows();
        if matrix.cols() != n {
            return Err(Error::DimensionMismatch("covariance block must be square".into()));
        }
        for i in 0..n {
            for j in 0..i {
                let (a, b) = (matrix.get(i, j), matrix.get(j, i));
                if (a - b).abs() > 1e-12 * (1.0 + a.abs().max(b.abs())) {
                    return Err(Error::Config("covariance block is not symmetric".into()));
                }
            }
        }
        let chol = cholesky(&matrix)
            .ok_or_else(|| Error::Config("covariance block is not positive definite".into()))?;
        Ok(CovBlock::Dense { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovBlock::Scaled { n, .. } => *n,
            CovBlock::Dense { matrix, .. } => matrix.rows(),
        }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        match self {
            CovBlock::Scaled { variance, .. } => v.iter().map(|x| x * variance).collect(),
            CovBlock::Dense { matrix, .. } => matrix.mat_vec(v).expect("block dimension"),
        }
    }

    fn whiten(&self, v: &[f64]) -> Vec<f64> {
        match self {
            CovBlock::Scaled { variance, .. } => {
                let s = variance.sqrt();
                v.iter().map(|x| x / s).collect()
            }
            CovBlock::Dense { chol, .. } => forward_substitute(chol, v),
        }
    }

    fn solve(&self, v: &[f64]) -> Vec<f64> {
        match self {
            CovBlock::Scaled { variance, .. } => v.iter().map(|x| x / variance).collect(),
            CovBlock::Dense { chol, .. } => {
                backward_substitute_transposed(chol, &forward_substitute(chol, v))
            }
        }
    }

    fn to_matrix(&self) -> Matrix {
        match self {
            CovBlock::Scaled { n, variance } => Matrix::identity(*n).scale(*variance),
            CovBlock::Dense { matrix, .. } => matrix.clone(),
        }
    }
}

/// Block-diagonal covariance `diag(Σˢ, Σᵗ)` of the stacked response `(Yˢ; Yᵗ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockCovariance {
    pub source: CovBlock,
    pub target: CovBlock,
}

impl BlockCovariance {
    pub fn identity(n_s: usize, n_t: usize) -> Self {
        Self::scalar(n_s, n_t, 1.0).expect("unit variance")
    }

    pub fn scalar(n_s: usize, n_t: usize, variance: f64) -> Result<Self> {
        Ok(Self {
            source: CovBlock::scaled(n_s, variance)?,
            target: CovBlock::scaled(n_t, variance)?,
        })
    }

    pub fn per_domain(n_s: usize, var_s: f64, n_t: usize, var_t: f64) -> Result<Self> {
        Ok(Self {
            source: CovBlock::scaled(n_s, var_s)?,
            target: CovBlock::scaled(n_t, var_t)?,
        })
    }

    pub fn dense(source: Matrix, target: Matrix) -> Result<Self> {
        Ok(Self {
            source: CovBlock::dense(source)?,
            target: CovBlock::dense(target)?,
        })
    }

    pub fn n_source(&self) -> usize {
        self.source.dim()
    }

    pub fn n_target(&self) -> usize {
        self.target.dim()
    }

    pub fn dim(&self) -> usize {
        self.n_source() + self.n_target()
    }

    fn split<'a>(&self, v: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        assert_eq!(v.len(), self.dim(), "vector length must match the covariance");
        v.split_at(self.n_source())
    }

    /// `Σ v`
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let (s, t) = self.split(v);
        let mut out = self.source.apply(s);
        out.extend(self.target.apply(t));
        out
    }

    /// `Σ⁻¹ v`
    pub fn solve(&self, v: &[f64]) -> Vec<f64> {
        let (s, t) = self.split(v);
        let mut out = self.source.solve(s);
        out.extend(self.target.solve(t));
        out
    }

    /// `L⁻¹ v` with `Σ = L Lᵀ`, so that `‖L⁻¹ v‖² = vᵀ Σ⁻¹ v`.
    pub fn whiten(&self, v: &[f64]) -> Vec<f64> {
        let (s, t) = self.split(v);
        let mut out = self.source.whiten(s);
        out.extend(self.target.whiten(t));
        out
    }

    pub fn is_scaled_identity(&self) -> Option<f64> {
        match (&self.source, &self.target) {
            (CovBlock::Scaled { variance: a, .. }, CovBlock::Scaled { variance: b, .. })
                if a == b =>
            {
                Some(*a)
            }
            _ => None,
        }
    }

    pub fn to_matrix(&self) -> Matrix {
        let (ns, nt) = (self.n_source(), self.n_target());
        let (s, t) = (self.source.to_matrix(), self.target.to_matrix());
        let mut out = Matrix::zeros(ns + nt, ns + nt);
        for i in 0..ns {
            for j in 0..ns {
                out.set(i, j, s.get(i, j));
            }
        }
        for i in 0..nt {
            for j in 0..nt {
                out.set(ns + i, ns + j, t.get(i, j));
            }
        }
        out
    }

    /// Sub-covariance restricted to the given source and target indices.
    pub fn restrict(&self, source_idx: &[usize], target_idx: &[usize]) -> Result<Self> {
        fn block(b: &CovBlock, idx: &[usize]) -> Result<CovBlock> {
            match b {
                CovBlock::Scaled { variance, .. } => CovBlock::scaled(idx.len(), *variance),
                CovBlock::Dense { matrix, .. } => {
                    CovBlock::dense(matrix.select_rows(idx).select_columns(idx))
                }
            }
        }
        Ok(Self {
            source: block(&self.source, source_idx)?,
            target: block(&self.target, target_idx)?,
        })
    }
}
