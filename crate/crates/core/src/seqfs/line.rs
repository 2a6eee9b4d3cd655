//! Selection along the line `Ω(a + b z)` and the quadratic systems that
//! characterise where a given selection outcome is reproduced.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::{
    adj_r2_divisor, backward_picks, criterion_penalty, forward_picks, path_models, without_feature,
    with_feature, Criterion, CriterionKind, Direction, ModelScorer, SelectionTrace,
};
use crate::error::{Error, Result};
use crate::numkernel::{
    local_component, solve_quad_system, BlockCovariance, ColumnBasis, IntervalSet, Matrix,
    QuadInequality, Quadratic, COEFF_TOL,
};
use crate::ot::{z_tolerance, OmegaMatrix};

/// Relative tolerance when comparing two model scores at a point.
const COMPARE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy)]
struct ModelQuads {
    rss: Quadratic,
    /// `rᵀ Σ⁻¹ r` along the line; present only when a covariance was supplied.
    whitened: Option<Quadratic>,
}

/// Transformed design and response line for one transport basis, with a
/// per-model cache of the residual quadratics.
#[derive(Debug, Clone)]
pub struct LineContext {
    x: Matrix,
    a: Vec<f64>,
    b: Vec<f64>,
    sigma: Option<BlockCovariance>,
    cache: HashMap<Vec<usize>, Option<ModelQuads>>,
}

/// Outcome of running the selection at one point of the line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSelection {
    /// Selection truncated at the chosen size.
    pub trace: SelectionTrace,
    /// Full path for criterion-driven runs; equal to `trace` for a fixed size.
    pub path: SelectionTrace,
    pub k_hat: usize,
}

impl LineSelection {
    pub fn final_set(&self) -> &[usize] {
        &self.trace.final_set
    }
}

impl LineContext {
    /// `x` is the stacked untransformed design `(X^s; X^t)`; `a`, `b` the
    /// untransformed response line. `sigma` is needed only for AIC/BIC.
    pub fn new(
        omega: &OmegaMatrix,
        x: &Matrix,
        a: &[f64],
        b: &[f64],
        sigma: Option<&BlockCovariance>,
    ) -> Result<Self> {
        let dim = omega.dim();
        if a.len() != dim || b.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "line of length {}/{} against transform of size {dim}",
                a.len(),
                b.len()
            )));
        }
        if let Some(s) = sigma {
            if s.dim() != dim {
                return Err(Error::DimensionMismatch("covariance against stacked response".into()));
            }
        }
        Ok(Self {
            x: omega.apply_design(x)?,
            a: omega.apply(a),
            b: omega.apply(b),
            sigma: sigma.cloned(),
            cache: HashMap::new(),
        })
    }

    pub fn n_total(&self) -> usize {
        self.x.rows()
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    fn quads(&mut self, model: &[usize]) -> Result<Option<ModelQuads>> {
        if let Some(q) = self.cache.get(model) {
            return Ok(*q);
        }
        let out = match ColumnBasis::new(&self.x, model) {
            Ok(basis) => {
                let ra = basis.residual(&self.a);
                let rb = basis.residual(&self.b);
                let whitened = self
                    .sigma
                    .as_ref()
                    .map(|s| Quadratic::norm_sq_of_line(&s.whiten(&ra), &s.whiten(&rb)));
                Some(ModelQuads {
                    rss: Quadratic::norm_sq_of_line(&ra, &rb),
                    whitened,
                })
            }
            Err(Error::RankDeficient { .. }) => None,
            Err(e) => return Err(e),
        };
        self.cache.insert(model.to_vec(), out);
        Ok(out)
    }

    /// RSS of `model` as a quadratic in `z`; `None` when the model is rank deficient.
    pub fn rss(&mut self, model: &[usize]) -> Result<Option<Quadratic>> {
        Ok(self.quads(model)?.map(|q| q.rss))
    }

    /// Criterion score of `model` as a quadratic in `z`.
    pub fn score(&mut self, kind: CriterionKind, model: &[usize]) -> Result<Quadratic> {
        let n = self.n_total();
        let q = self
            .quads(model)?
            .ok_or_else(|| Error::RankDeficient { columns: model.to_vec() })?;
        let size = model.len() as f64;
        match kind {
            CriterionKind::Aic | CriterionKind::Bic => {
                let w = q.whitened.ok_or_else(|| {
                    Error::Config("AIC/BIC scoring requires a covariance".into())
                })?;
                Ok(w.add_constant(criterion_penalty(kind, n) * size))
            }
            CriterionKind::AdjR2 => Ok(q.rss.scale(1.0 / adj_r2_divisor(n, model.len())?)),
        }
    }

    /// Runs the selection as it would be run on `Ω(a + b z)` for `z` just to the right of `z0`.
    pub fn select(&mut self, direction: Direction, criterion: Criterion, z0: f64) -> Result<LineSelection> {
        let p = self.p();
        let path_k = match (criterion, direction) {
            (Criterion::Fixed(k), _) => k,
            (_, Direction::Forward) => p,
            (_, Direction::Backward) => 1,
        };
        let picks = {
            let mut scorer = LineScorer { ctx: self, z0 };
            match direction {
                Direction::Forward => forward_picks(&mut scorer, p, path_k)?,
                Direction::Backward => backward_picks(&mut scorer, p, path_k)?,
            }
        };
        let path = SelectionTrace::from_path(direction, p, picks, criterion);
        let Some(kind) = criterion.kind() else {
            return Ok(LineSelection {
                trace: path.clone(),
                path,
                k_hat: path_k,
            });
        };
        let scores = (1..=p)
            .map(|k| {
                let model = path
                    .model_of_size(k)
                    .ok_or_else(|| Error::Invariant(format!("path has no model of size {k}")))?
                    .clone();
                self.score(kind, &model)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut k_hat = 1;
        for k in 2..=p {
            if compare(&scores[k - 1], &scores[k_hat - 1], z0) == Ordering::Less {
                k_hat = k;
            }
        }
        Ok(LineSelection {
            trace: path.truncated(k_hat, criterion),
            path,
            k_hat,
        })
    }

    /// Inequalities `Q(chosen) − Q(competitor) ≤ 0` for every step of `path`, ordered by (step, competitor).
    pub fn path_system(&mut self, path: &SelectionTrace) -> Result<Vec<QuadInequality>> {
        let p = self.p();
        let mut system = Vec::new();
        match path.direction {
            Direction::Forward => {
                let mut prev: Vec<usize> = Vec::new();
                for &pick in &path.picks {
                    let chosen = self.required_rss(&with_feature(&prev, pick))?;
                    for j in (0..p).filter(|j| *j != pick && !prev.contains(j)) {
                        if let Some(other) = self.rss(&with_feature(&prev, j))? {
                            system.push(QuadInequality::le_zero(chosen.sub(&other)));
                        }
                    }
                    prev = with_feature(&prev, pick);
                }
            }
            Direction::Backward => {
                let models = path_models(Direction::Backward, p, &path.picks);
                if self.rss(&models[0])?.is_none() {
                    return Err(Error::RankDeficient { columns: models[0].clone() });
                }
                for (cur, &pick) in models.iter().zip(&path.picks) {
                    let chosen = self.required_rss(&without_feature(cur, pick))?;
                    for &j in cur.iter().filter(|j| **j != pick) {
                        if let Some(other) = self.rss(&without_feature(cur, j))? {
                            system.push(QuadInequality::le_zero(chosen.sub(&other)));
                        }
                    }
                }
            }
        }
        Ok(system)
    }

    /// Inequalities `score(M_k̂) − score(M_k) ≤ 0` for every other size `k` on the path.
    pub fn criterion_system(
        &mut self,
        kind: CriterionKind,
        path: &SelectionTrace,
        k_hat: usize,
    ) -> Result<Vec<QuadInequality>> {
        let p = self.p();
        let model_of = |k: usize| {
            path.model_of_size(k)
                .cloned()
                .ok_or_else(|| Error::Invariant(format!("path has no model of size {k}")))
        };
        let chosen = self.score(kind, &model_of(k_hat)?)?;
        let mut system = Vec::with_capacity(p.saturating_sub(1));
        for k in (1..=p).filter(|&k| k != k_hat) {
            let other = self.score(kind, &model_of(k)?)?;
            system.push(QuadInequality::le_zero(chosen.sub(&other)));
        }
        Ok(system)
    }

    /// Full system describing "same path and, for criteria, same chosen size".
    pub fn selection_system(&mut self, selection: &LineSelection) -> Result<Vec<QuadInequality>> {
        let mut system = self.path_system(&selection.path)?;
        if let Some(kind) = selection.trace.criterion.kind() {
            system.extend(self.criterion_system(kind, &selection.path, selection.k_hat)?);
        }
        Ok(system)
    }

    /// Connected piece of the selection region that contains `z0`.
    pub fn selection_component(&mut self, selection: &LineSelection, z0: f64) -> Result<Option<(f64, f64)>> {
        let system = self.selection_system(selection)?;
        Ok(local_component(&system, COEFF_TOL, z0, z_tolerance(z0)))
    }

    fn required_rss(&mut self, model: &[usize]) -> Result<Quadratic> {
        self.rss(model)?
            .ok_or_else(|| Error::RankDeficient { columns: model.to_vec() })
    }
}

fn compare(a: &Quadratic, b: &Quadratic, z0: f64) -> Ordering {
    let scale = a.eval(z0).abs() + b.eval(z0).abs();
    a.sub(b).right_sign(z0, scale, COMPARE_TOL)
}

struct LineScorer<'a> {
    ctx: &'a mut LineContext,
    z0: f64,
}

impl ModelScorer for LineScorer<'_> {
    type Score = Quadratic;

    fn score(&mut self, model: &[usize]) -> Result<Option<Quadratic>> {
        self.ctx.rss(model)
    }

    fn better(&self, a: &Quadratic, b: &Quadratic) -> bool {
        compare(a, b, self.z0) == Ordering::Less
    }
}

/// Set of `z` on which forward selection on `Ω(a + b z)` follows `trace`.
pub fn region_zv_forward(
    trace: &SelectionTrace,
    omega: &OmegaMatrix,
    x: &Matrix,
    a: &[f64],
    b: &[f64],
) -> Result<IntervalSet> {
    if trace.direction != Direction::Forward {
        return Err(Error::Config("expected a forward trace".into()));
    }
    let mut ctx = LineContext::new(omega, x, a, b, None)?;
    Ok(solve_quad_system(&ctx.path_system(trace)?, COEFF_TOL))
}

/// Set of `z` on which backward elimination on `Ω(a + b z)` follows `trace`.
pub fn region_zv_backward(
    trace: &SelectionTrace,
    omega: &OmegaMatrix,
    x: &Matrix,
    a: &[f64],
    b: &[f64],
) -> Result<IntervalSet> {
    if trace.direction != Direction::Backward {
        return Err(Error::Config("expected a backward trace".into()));
    }
    let mut ctx = LineContext::new(omega, x, a, b, None)?;
    Ok(solve_quad_system(&ctx.path_system(trace)?, COEFF_TOL))
}

/// Set of `z` on which the criterion picks size `k_hat` among the models of `path`.
#[allow(clippy::too_many_arguments)]
pub fn region_z_criterion(
    kind: CriterionKind,
    path: &SelectionTrace,
    k_hat: usize,
    omega: &OmegaMatrix,
    x: &Matrix,
    a: &[f64],
    b: &[f64],
    sigma: &BlockCovariance,
) -> Result<IntervalSet> {
    let mut ctx = LineContext::new(omega, x, a, b, Some(sigma))?;
    Ok(solve_quad_system(&ctx.criterion_system(kind, path, k_hat)?, COEFF_TOL))
}
