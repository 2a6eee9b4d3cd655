//! Forward and backward sequential feature selection, model-size criteria,
//! and the line-parametric selection-invariance regions.

mod line;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{norm_sq, BlockCovariance, ColumnBasis, Matrix};

pub use line::{
    region_z_criterion, region_zv_backward, region_zv_forward, LineContext, LineSelection,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

/// Data-driven model-size criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    Aic,
    Bic,
    AdjR2,
}

/// How the number of selected features is decided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Fixed(usize),
    Aic,
    Bic,
    AdjR2,
}

impl Criterion {
    pub fn kind(&self) -> Option<CriterionKind> {
        match self {
            Criterion::Fixed(_) => None,
            Criterion::Aic => Some(CriterionKind::Aic),
            Criterion::Bic => Some(CriterionKind::Bic),
            Criterion::AdjR2 => Some(CriterionKind::AdjR2),
        }
    }
}

impl From<CriterionKind> for Criterion {
    fn from(k: CriterionKind) -> Self {
        match k {
            CriterionKind::Aic => Criterion::Aic,
            CriterionKind::Bic => Criterion::Bic,
            CriterionKind::AdjR2 => Criterion::AdjR2,
        }
    }
}

/// The ordered sequence of models visited by one selection run.
///
/// Forward: `steps = [M_1, …, M_K]`, `picks[k]` is the feature added at step `k+1`.
/// Backward: `steps = [M_p, M_{p-1}, …, M_K]`, `picks[k]` is the feature removed
/// going from `steps[k]` to `steps[k+1]`. Every set is sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SelectionTrace {
    pub direction: Direction,
    pub steps: Vec<Vec<usize>>,
    pub picks: Vec<usize>,
    pub final_set: Vec<usize>,
    pub criterion: Criterion,
}

impl SelectionTrace {
    fn from_path(direction: Direction, p: usize, picks: Vec<usize>, criterion: Criterion) -> Self {
        let steps = path_models(direction, p, &picks);
        let final_set = steps.last().cloned().unwrap_or_default();
        Self {
            direction,
            steps,
            picks,
            final_set,
            criterion,
        }
    }

    /// The prefix of a full path that ends at `k` selected features.
    pub fn truncated(&self, k: usize, criterion: Criterion) -> SelectionTrace {
        let (picks, steps) = match self.direction {
            Direction::Forward => (self.picks[..k].to_vec(), self.steps[..k].to_vec()),
            Direction::Backward => {
                let drop = self.steps[0].len() - k;
                (self.picks[..drop].to_vec(), self.steps[..=drop].to_vec())
            }
        };
        SelectionTrace {
            direction: self.direction,
            final_set: steps.last().cloned().unwrap_or_default(),
            steps,
            picks,
            criterion,
        }
    }

    /// The model with exactly `k` features along this path, if visited.
    pub fn model_of_size(&self, k: usize) -> Option<&Vec<usize>> {
        self.steps.iter().find(|m| m.len() == k)
    }
}

/// Models along a path, from its pick sequence.
pub(crate) fn path_models(direction: Direction, p: usize, picks: &[usize]) -> Vec<Vec<usize>> {
    match direction {
        Direction::Forward => {
            let mut cur = Vec::new();
            picks
                .iter()
                .map(|&j| {
                    cur.push(j);
                    let mut m = cur.clone();
                    m.sort_unstable();
                    m
                })
                .collect()
        }
        Direction::Backward => {
            let mut cur: Vec<usize> = (0..p).collect();
            let mut out = vec![cur.clone()];
            for &j in picks {
                cur.retain(|&c| c != j);
                out.push(cur.clone());
            }
            out
        }
    }
}

pub(crate) fn with_feature(model: &[usize], j: usize) -> Vec<usize> {
    let mut m = model.to_vec();
    m.push(j);
    m.sort_unstable();
    m
}

pub(crate) fn without_feature(model: &[usize], j: usize) -> Vec<usize> {
    model.iter().copied().filter(|&c| c != j).collect()
}

/// Scores candidate models for the greedy search.
pub(crate) trait ModelScorer {
    type Score;
    /// `None` marks a candidate that fails the rank threshold.
    fn score(&mut self, model: &[usize]) -> Result<Option<Self::Score>>;
    /// Strict preference; ties keep the earlier (smaller-index) candidate.
    fn better(&self, a: &Self::Score, b: &Self::Score) -> bool;
}

pub(crate) fn forward_picks<S: ModelScorer>(scorer: &mut S, p: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > p {
        return Err(Error::Config(format!("K must lie in 1..={p}, got {k}")));
    }
    let mut model: Vec<usize> = Vec::new();
    let mut picks = Vec::with_capacity(k);
    for step in 0..k {
        let mut best: Option<(usize, S::Score)> = None;
        for j in (0..p).filter(|j| !model.contains(j)) {
            let Some(s) = scorer.score(&with_feature(&model, j))? else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, b)| scorer.better(&s, b)) {
                best = Some((j, s));
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::InsufficientFeatures {
                requested: k,
                admissible: step,
            });
        };
        model = with_feature(&model, j);
        picks.push(j);
    }
    Ok(picks)
}

pub(crate) fn backward_picks<S: ModelScorer>(scorer: &mut S, p: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > p {
        return Err(Error::Config(format!("K must lie in 1..={p}, got {k}")));
    }
    let mut model: Vec<usize> = (0..p).collect();
    if scorer.score(&model)?.is_none() {
        return Err(Error::RankDeficient { columns: model });
    }
    let mut picks = Vec::with_capacity(p - k);
    while model.len() > k {
        let mut best: Option<(usize, S::Score)> = None;
        for &j in &model {
            let Some(s) = scorer.score(&without_feature(&model, j))? else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, b)| scorer.better(&s, b)) {
                best = Some((j, s));
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::RankDeficient { columns: model });
        };
        model = without_feature(&model, j);
        picks.push(j);
    }
    Ok(picks)
}

/// Plain RSS scoring on concrete data.
struct DataScorer<'a> {
    x: &'a Matrix,
    y: &'a [f64],
}

impl ModelScorer for DataScorer<'_> {
    type Score = f64;

    fn score(&mut self, model: &[usize]) -> Result<Option<f64>> {
        match ColumnBasis::new(self.x, model) {
            Ok(basis) => Ok(Some(norm_sq(&basis.residual(self.y)))),
            Err(Error::RankDeficient { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn better(&self, a: &f64, b: &f64) -> bool {
        a < b
    }
}

fn check_shapes(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows but {} responses",
            x.rows(),
            y.len()
        )));
    }
    Ok(())
}

/// Greedy forward selection of `k` features minimising the RSS at each step.
pub fn forward_select(x: &Matrix, y: &[f64], k: usize) -> Result<SelectionTrace> {
    check_shapes(x, y)?;
    let picks = forward_picks(&mut DataScorer { x, y }, x.cols(), k)?;
    Ok(SelectionTrace::from_path(
        Direction::Forward,
        x.cols(),
        picks,
        Criterion::Fixed(k),
    ))
}

/// Greedy backward elimination from the full model down to `k` features.
pub fn backward_select(x: &Matrix, y: &[f64], k: usize) -> Result<SelectionTrace> {
    check_shapes(x, y)?;
    let picks = backward_picks(&mut DataScorer { x, y }, x.cols(), k)?;
    Ok(SelectionTrace::from_path(
        Direction::Backward,
        x.cols(),
        picks,
        Criterion::Fixed(k),
    ))
}

pub fn select(x: &Matrix, y: &[f64], direction: Direction, k: usize) -> Result<SelectionTrace> {
    match direction {
        Direction::Forward => forward_select(x, y, k),
        Direction::Backward => backward_select(x, y, k),
    }
}

/// Penalty added per selected feature (AIC/BIC) or the RSS divisor (adjusted R²).
pub(crate) fn criterion_penalty(kind: CriterionKind, n_total: usize) -> f64 {
    match kind {
        CriterionKind::Aic => 2.0,
        CriterionKind::Bic => (n_total as f64).ln(),
        CriterionKind::AdjR2 => 0.0,
    }
}

pub(crate) fn adj_r2_divisor(n_total: usize, size: usize) -> Result<f64> {
    if size + 1 >= n_total {
        return Err(Error::Config(format!(
            "adjusted R² needs n - |M| - 1 > 0, got n = {n_total}, |M| = {size}"
        )));
    }
    Ok((n_total - size - 1) as f64)
}

/// Criterion value of `model` on the transformed data; smaller is better for every kind.
///
/// AIC/BIC use the generalised residual quadratic `rᵀ Σ⁻¹ r`; the adjusted-R²
/// score is `RSS / (n - |M| - 1)`, whose minimiser maximises adjusted R².
pub fn criterion_score(
    kind: CriterionKind,
    model: &[usize],
    x: &Matrix,
    y: &[f64],
    sigma: &BlockCovariance,
    n_total: usize,
) -> Result<f64> {
    check_shapes(x, y)?;
    let basis = ColumnBasis::new(x, model)?;
    let resid = basis.residual(y);
    let size = model.len() as f64;
    match kind {
        CriterionKind::Aic | CriterionKind::Bic => {
            if sigma.dim() != y.len() {
                return Err(Error::DimensionMismatch("covariance against response".into()));
            }
            let w = sigma.whiten(&resid);
            Ok(norm_sq(&w) + criterion_penalty(kind, n_total) * size)
        }
        CriterionKind::AdjR2 => Ok(norm_sq(&resid) / adj_r2_divisor(n_total, model.len())?),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionScore {
    pub model: Vec<usize>,
    pub value: f64,
}

/// Outcome of a criterion-driven selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionSelection {
    /// Path truncated at the chosen size.
    pub trace: SelectionTrace,
    pub k_hat: usize,
    /// Full path (`K = 1…p` forward, `p…1` backward).
    pub path: SelectionTrace,
    /// Scores for model sizes `1…p`.
    pub scores: Vec<CriterionScore>,
}

/// Runs the full path, scores every visited model and keeps the best size (ties to smaller `K`).
pub fn select_with_criterion(
    kind: CriterionKind,
    x: &Matrix,
    y: &[f64],
    sigma: &BlockCovariance,
    direction: Direction,
) -> Result<CriterionSelection> {
    let p = x.cols();
    let path = select(x, y, direction, match direction {
        Direction::Forward => p,
        Direction::Backward => 1,
    })?;
    let n_total = y.len();
    let mut scores = Vec::with_capacity(p);
    for k in 1..=p {
        let model = path
            .model_of_size(k)
            .ok_or_else(|| Error::Invariant(format!("path has no model of size {k}")))?;
        scores.push(CriterionScore {
            model: model.clone(),
            value: criterion_score(kind, model, x, y, sigma, n_total)?,
        });
    }
    let mut k_hat = 1;
    for k in 2..=p {
        if scores[k - 1].value < scores[k_hat - 1].value {
            k_hat = k;
        }
    }
    Ok(CriterionSelection {
        trace: path.truncated(k_hat, kind.into()),
        k_hat,
        path,
        scores,
    })
}

#[cfg(test)]
mod tests;
