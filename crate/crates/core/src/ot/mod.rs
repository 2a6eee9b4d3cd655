//! Exact optimal-transport domain adaptation.
//!
//! The transportation LP between the empirical source and target measures is
//! solved by a primal simplex that exposes its optimal basis, so the set of
//! line parameters `z` on which that basis stays optimal can be written as a
//! system of quadratic inequalities in `z`.
//!
//! Cost decomposition on the line `y(z) = a + b z`:
//! `c(z) = c' + (Θa)∘(Θa) + 2 (Θa)∘(Θb) z + (Θb)∘(Θb) z²`,
//! where `c'` holds the squared feature distances and `(Θy)_(i,j) = yˢ_i - yᵗ_j`.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{
    local_component, solve_quad_system, IntervalSet, Matrix, QuadInequality, Quadratic, COEFF_TOL,
};

pub(crate) use simplex::BasisState;

/// One domain's features and responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainData {
    pub x: Matrix,
    pub y: Vec<f64>,
}

impl DomainData {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows but {} responses",
                x.rows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response vector".into()));
        }
        Ok(Self { x, y })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }
}

/// The pairwise-difference operator `Θ = [I ⊗ 1, -1 ⊗ I]`, kept implicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairDifference {
    pub n_s: usize,
    pub n_t: usize,
}

impl PairDifference {
    /// `(Θ y)_(i,j) = y_i - y_(n_s + j)` in row-major `(i, j)` order.
    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n_s + self.n_t);
        let (ys, yt) = y.split_at(self.n_s);
        let mut out = Vec::with_capacity(self.n_s * self.n_t);
        for &s in ys {
            for &t in yt {
                out.push(s - t);
            }
        }
        out
    }

    pub fn to_matrix(&self) -> Matrix {
        let (ns, nt) = (self.n_s, self.n_t);
        let mut m = Matrix::zeros(ns * nt, ns + nt);
        for i in 0..ns {
            for j in 0..nt {
                m.set(i * nt + j, i, 1.0);
                m.set(i * nt + j, ns + j, -1.0);
            }
        }
        m
    }
}

/// Squared feature distances `c'` (row-major over `(i, j)`) and the pair-difference operator.
pub fn cost_vector(source: &DomainData, target: &DomainData) -> Result<(Vec<f64>, PairDifference)> {
    if source.p() != target.p() {
        return Err(Error::DimensionMismatch(format!(
            "source has {} features, target has {}",
            source.p(),
            target.p()
        )));
    }
    let mut c = Vec::with_capacity(source.n() * target.n());
    for i in 0..source.n() {
        let xs = source.x.row(i);
        for j in 0..target.n() {
            let xt = target.x.row(j);
            let mut acc = 0.0;
            for k in 0..xs.len() {
                let d = xs[k] - xt[k];
                acc += d * d;
            }
            c.push(acc);
        }
    }
    Ok((
        c,
        PairDifference {
            n_s: source.n(),
            n_t: target.n(),
        },
    ))
}

/// Transport cost as a quadratic in `z` along `a + b z`.
#[derive(Debug, Clone)]
pub struct LineCost {
    pub(crate) coeffs: Vec<Quadratic>,
    pub(crate) fixed_cost: Vec<f64>,
    pub(crate) theta: PairDifference,
}

impl LineCost {
    /// `p̃ = c' + (Θa)², q̃ = 2(Θa)(Θb), f̃ = (Θb)²`.
    pub fn new(c_prime: &[f64], theta: PairDifference, a: &[f64], b: &[f64]) -> Result<Self> {
        let dim = theta.n_s + theta.n_t;
        if a.len() != dim || b.len() != dim || c_prime.len() != theta.n_s * theta.n_t {
            return Err(Error::DimensionMismatch("line cost inputs".into()));
        }
        let ta = theta.apply(a);
        let tb = theta.apply(b);
        let coeffs = c_prime
            .iter()
            .zip(ta.iter().zip(&tb))
            .map(|(c, (ta, tb))| Quadratic::new(c + ta * ta, 2.0 * ta * tb, tb * tb))
            .collect();
        Ok(Self {
            coeffs,
            fixed_cost: c_prime.to_vec(),
            theta,
        })
    }

    fn constant(c_prime: &[f64], theta: PairDifference, y: &[f64]) -> Result<Self> {
        if y.len() != theta.n_s + theta.n_t || c_prime.len() != theta.n_s * theta.n_t {
            return Err(Error::DimensionMismatch("transport cost inputs".into()));
        }
        let ty = theta.apply(y);
        let coeffs = c_prime
            .iter()
            .zip(&ty)
            .map(|(c, d)| Quadratic::new(c + d * d, 0.0, 0.0))
            .collect();
        Ok(Self {
            coeffs,
            fixed_cost: c_prime.to_vec(),
            theta,
        })
    }

    pub fn at(&self, z: f64) -> Vec<f64> {
        self.coeffs.iter().map(|q| q.eval(z)).collect()
    }

    /// Optimal basis at `z0`, choosing among tied optima the one that stays
    /// optimal just to the right of `z0`. Warm-starts from `warm` when given.
    pub fn solve_at(&self, z0: f64, warm: Option<&TransportSolution>) -> Result<TransportSolution> {
        let (ns, nt) = (self.theta.n_s, self.theta.n_t);
        if ns == 0 || nt == 0 {
            return Err(Error::DimensionMismatch("empty domain".into()));
        }
        let mut state = match warm {
            Some(sol) if sol.state.m == ns && sol.state.n == nt => sol.state.clone(),
            _ => BasisState::northwest(ns, nt),
        };
        let pivots = state.optimize(&self.coeffs, z0)?;
        Ok(TransportSolution::from_state(state, self.fixed_cost.clone(), pivots))
    }

    /// Connected piece of the basis-invariance region that contains `z0`.
    pub fn basis_component(&self, solution: &TransportSolution, z0: f64) -> Result<Option<(f64, f64)>> {
        let system = self.optimality_system(solution)?;
        Ok(local_component(&system, COEFF_TOL, z0, z_tolerance(z0)))
    }

    fn optimality_system(&self, solution: &TransportSolution) -> Result<Vec<QuadInequality>> {
        Ok(solution
            .state
            .reduced_costs(&self.coeffs)?
            .into_iter()
            .map(|(_, d)| QuadInequality::ge_zero(d))
            .collect())
    }
}

pub(crate) fn z_tolerance(z: f64) -> f64 {
    1e-9 * (1.0 + z.abs())
}

/// Optimal basic feasible solution of the transportation LP.
#[derive(Debug, Clone)]
pub struct TransportSolution {
    /// `n_s x n_t` optimal coupling `T̂`.
    pub plan: Matrix,
    /// Sorted basic cell indices over the row-major `(i, j)` flattening.
    pub basis: Vec<usize>,
    /// Feature part `c'` of the cost vector.
    pub fixed_cost: Vec<f64>,
    pub pivots: usize,
    pub(crate) state: BasisState,
}

impl TransportSolution {
    fn from_state(state: BasisState, fixed_cost: Vec<f64>, pivots: usize) -> Self {
        let (m, n) = (state.m, state.n);
        let total = (m * n) as f64;
        let mut plan = Matrix::zeros(m, n);
        for c in 0..m * n {
            if state.flow[c] != 0 {
                plan.set(c / n, c % n, state.flow[c] as f64 / total);
            }
        }
        Self {
            plan,
            basis: state.basis_cells(),
            fixed_cost,
            pivots,
            state,
        }
    }

    pub fn n_s(&self) -> usize {
        self.state.m
    }

    pub fn n_t(&self) -> usize {
        self.state.n
    }

    /// `⟨T, C⟩` for a flattened cost vector.
    pub fn objective(&self, cost: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, &v) in cost.iter().enumerate() {
            acc += self.plan.as_slice()[c] * v;
        }
        acc
    }

    /// Integer flows scaled by `n_s·n_t`; equal keys mean identical plans.
    pub fn plan_key(&self) -> &[i64] {
        &self.state.flow
    }
}

/// Solves the transportation LP with cost `c' + (Θy)∘(Θy)` and uniform marginals.
pub fn solve_transport(c_prime: &[f64], theta: PairDifference, y: &[f64]) -> Result<TransportSolution> {
    LineCost::constant(c_prime, theta, y)?.solve_at(0.0, None)
}

/// Basis-invariance region `{z : p + q z + f z² ≥ 0}` of `solution` along `a + b z`.
pub fn region_zu(solution: &TransportSolution, a: &[f64], b: &[f64]) -> Result<IntervalSet> {
    let theta = PairDifference {
        n_s: solution.n_s(),
        n_t: solution.n_t(),
    };
    let cost = LineCost::new(&solution.fixed_cost, theta, a, b)?;
    Ok(solve_quad_system(&cost.optimality_system(solution)?, COEFF_TOL))
}

/// Source domain mapped onto the target: `X̃ˢ = n_s T̂ Xᵗ`, `Ỹˢ = n_s T̂ Yᵗ`.
pub fn transform_source(plan: &Matrix, target: &DomainData) -> Result<DomainData> {
    if plan.cols() != target.n() {
        return Err(Error::DimensionMismatch(format!(
            "plan has {} columns, target has {} rows",
            plan.cols(),
            target.n()
        )));
    }
    let scaled = plan.scale(plan.rows() as f64);
    let x = scaled.matmul(&target.x)?;
    let y = scaled.mat_vec(&target.y)?;
    DomainData::new(x, y)
}

/// `Ω = [[0, n_s T], [0, I]]`, stored by its transport block.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix {
    /// `n_s · T`, shape `n_s x n_t`.
    transport: Matrix,
}

impl OmegaMatrix {
    pub fn n_s(&self) -> usize {
        self.transport.rows()
    }

    pub fn n_t(&self) -> usize {
        self.transport.cols()
    }

    pub fn dim(&self) -> usize {
        self.n_s() + self.n_t()
    }

    /// `Ω v` for a stacked vector `v = (vˢ; vᵗ)`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.dim());
        let vt = &v[self.n_s()..];
        let mut out = self.transport.mat_vec(vt).expect("omega block shape");
        out.extend_from_slice(vt);
        out
    }

    /// `Ω X` for a stacked design `X = (Xˢ; Xᵗ)`.
    pub fn apply_design(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.dim() {
            return Err(Error::DimensionMismatch("stacked design rows".into()));
        }
        let rows: Vec<usize> = (self.n_s()..self.dim()).collect();
        let xt = x.select_rows(&rows);
        self.transport.matmul(&xt)?.vstack(&xt)
    }

    pub fn to_matrix(&self) -> Matrix {
        let (ns, nt) = (self.n_s(), self.n_t());
        let mut m = Matrix::zeros(ns + nt, ns + nt);
        for i in 0..ns {
            for j in 0..nt {
                m.set(i, ns + j, self.transport.get(i, j));
            }
        }
        for j in 0..nt {
            m.set(ns + j, ns + j, 1.0);
        }
        m
    }
}

pub fn omega(plan: &Matrix) -> OmegaMatrix {
    OmegaMatrix {
        transport: plan.scale(plan.rows() as f64),
    }
}

/// Stacks source over target features: `X = (Xˢ; Xᵗ)`.
pub fn stack_design(source: &DomainData, target: &DomainData) -> Result<Matrix> {
    source.x.vstack(&target.x)
}

/// Stacks source over target responses.
pub fn stack_response(source: &DomainData, target: &DomainData) -> Vec<f64> {
    let mut y = source.y.clone();
    y.extend_from_slice(&target.y);
    y
}

#[cfg(test)]
mod tests;
