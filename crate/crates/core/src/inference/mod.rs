//! Selective inference for features chosen after transport-based adaptation.

mod pvalue;
mod scan;
mod split;

use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{dot, BlockCovariance, ColumnBasis, IntervalSet, Matrix};
use crate::ot::{stack_response, z_tolerance, DomainData, TransportSolution};
use crate::seqfs::{Criterion, Direction, LineSelection};

pub use pvalue::{
    log_interval_mass, log_upper_tail, ordered_sequences, p_bonferroni, p_naive, p_over_conditioning,
    truncated_p,
};
pub use scan::{assemble_region, divide_and_conquer, ScanProblem, ScanResult, Subproblem, STEP_FLOOR};
pub use split::{p_data_splitting, split_halves, DataSplitResult};

/// Per-domain noise variances from full-model residuals, `RSS / (n - p)`.
///
/// A domain with too few rows to estimate borrows the other domain's value.
pub fn estimate_covariance(source: &DomainData, target: &DomainData) -> Result<BlockCovariance> {
    let estimate = |d: &DomainData| -> Result<Option<f64>> {
        if d.n() <= d.p() {
            return Ok(None);
        }
        let cols: Vec<usize> = (0..d.p()).collect();
        let rss = crate::numkernel::rss(&d.y, &d.x.select_columns(&cols))?;
        Ok(Some(rss / (d.n() - d.p()) as f64).filter(|v| *v > 0.0))
    };
    let (vs, vt) = (estimate(source)?, estimate(target)?);
    match (vs.or(vt), vt.or(vs)) {
        (Some(vs), Some(vt)) => BlockCovariance::per_domain(source.n(), vs, target.n(), vt),
        _ => Err(Error::Config(
            "cannot estimate the noise variance: neither domain has more rows than features; pass --sigma".into(),
        )),
    }
}

/// Stacked response `(Yˢ; Yᵗ)` with its block-diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedResponse {
    pub y: Vec<f64>,
    pub sigma: BlockCovariance,
}

impl StackedResponse {
    pub fn new(y: Vec<f64>, sigma: BlockCovariance) -> Result<Self> {
        if y.len() != sigma.dim() {
            return Err(Error::DimensionMismatch(format!(
                "response of length {} against covariance of size {}",
                y.len(),
                sigma.dim()
            )));
        }
        Ok(Self { y, sigma })
    }
}

/// The contrast testing one selected coefficient and the line through the data along it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDirection {
    pub feature: usize,
    pub eta: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub z_obs: f64,
    /// `ηᵀ Σ η`.
    pub variance: f64,
}

/// Contrast for the coefficient of `feature` in the target-only least-squares fit on `model`.
///
/// `η = (0; Xᵗ_M (Xᵗ_Mᵀ Xᵗ_M)⁻¹ e_j)`, `b = Ση / ηᵀΣη`, `a = y - b ηᵀy`.
pub fn build_direction(
    feature: usize,
    model: &[usize],
    x_target: &Matrix,
    stacked: &StackedResponse,
) -> Result<TestDirection> {
    let pos = model
        .iter()
        .position(|&m| m == feature)
        .ok_or_else(|| Error::Config(format!("feature {feature} is not in the selected set {model:?}")))?;
    let n_s = stacked.sigma.n_source();
    if x_target.rows() != stacked.sigma.n_target() {
        return Err(Error::DimensionMismatch("target design against covariance".into()));
    }
    let contrast = ColumnBasis::new(x_target, model)?.coefficient_contrast(pos);
    let mut eta = vec![0.0; n_s];
    eta.extend(contrast);
    let sigma_eta = stacked.sigma.apply(&eta);
    let variance = dot(&eta, &sigma_eta);
    if !(variance > 0.0) {
        return Err(Error::Invariant("contrast has zero variance".into()));
    }
    let b: Vec<f64> = sigma_eta.iter().map(|v| v / variance).collect();
    let z_obs = dot(&eta, &stacked.y);
    let a = stacked.y.iter().zip(&b).map(|(y, b)| y - b * z_obs).collect();
    Ok(TestDirection {
        feature,
        eta,
        a,
        b,
        z_obs,
        variance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub direction: Direction,
    pub criterion: Criterion,
    /// Half-width of the scan range in units of the statistic's standard deviation.
    pub z_mult: f64,
    /// Worker threads for per-feature inference; `1` runs sequentially.
    pub threads: usize,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Forward,
            criterion: Criterion::Fixed(3),
            z_mult: 20.0,
            threads: 1,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_mult > 0.0 && self.z_mult.is_finite()) {
            return Err(Error::Config(format!("z multiplier must be positive, got {}", self.z_mult)));
        }
        if self.threads == 0 {
            return Err(Error::Config("thread count must be at least 1".into()));
        }
        Ok(())
    }
}

/// Transport and selection on the observed data.
#[derive(Debug, Clone)]
pub struct Observation {
    pub transport: TransportSolution,
    pub selection: LineSelection,
}

impl Observation {
    pub fn selected(&self) -> &[usize] {
        self.selection.final_set()
    }
}

/// Runs adaptation and selection on the observed response.
pub fn observe(problem: &ScanProblem, y: &[f64]) -> Result<Observation> {
    let zero = vec![0.0; y.len()];
    let cost = problem.line_cost(y, &zero)?;
    let (transport, _, selection) = problem.evaluate(&cost, y, &zero, 0.0, None)?;
    Ok(Observation { transport, selection })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectiveResult {
    pub feature: usize,
    pub z_obs: f64,
    pub std_dev: f64,
    pub region: IntervalSet,
    /// The single (basis, selection) piece containing `z_obs`.
    pub observed_interval: (f64, f64),
    pub p_selective: f64,
    pub p_naive: f64,
    pub p_bonferroni: f64,
    pub p_oc: f64,
    pub subproblem_count: usize,
    pub forced_steps: usize,
    pub scan_range: (f64, f64),
    #[serde(skip)]
    pub wall_time: Duration,
}

/// Scan half-width: `z_mult` standard deviations, widened to keep `z_obs` well inside.
pub fn scan_half_width(z_obs: f64, std_dev: f64, z_mult: f64) -> f64 {
    (z_mult * std_dev).max(z_obs.abs() + 10.0 * std_dev)
}

/// Full inference for one selected feature.
pub fn infer_feature(
    problem: &ScanProblem,
    stacked: &StackedResponse,
    observation: &Observation,
    feature: usize,
    z_mult: f64,
) -> Result<SelectiveResult> {
    let start = Instant::now();
    let model = observation.selected();
    let target_rows: Vec<usize> = (problem.n_source()..problem.n_source() + problem.n_target()).collect();
    let x_target = problem.x.select_rows(&target_rows);
    let dir = build_direction(feature, model, &x_target, stacked)?;
    let sd = dir.variance.sqrt();

    // Observed piece, computed directly at z_obs.
    let cost = problem.line_cost(&dir.a, &dir.b)?;
    let (solution, mut ctx, selection) = problem.evaluate(&cost, &dir.a, &dir.b, dir.z_obs, None)?;
    if selection.final_set() != model {
        return Err(Error::Invariant(format!(
            "line reconstruction selects {:?}, observed {:?}",
            selection.final_set(),
            model
        )));
    }
    let z_tol = z_tolerance(dir.z_obs);
    let basis_piece = cost.basis_component(&solution, dir.z_obs)?;
    let selection_piece = ctx.selection_component(&selection, dir.z_obs)?;
    let observed_interval = match (basis_piece, selection_piece) {
        (Some(u), Some(v)) => (u.0.max(v.0), u.1.min(v.1)),
        _ => {
            return Err(Error::Invariant(
                "observed point violates its own optimality or selection conditions".into(),
            ))
        }
    };

    let half = scan_half_width(dir.z_obs, sd, z_mult);
    let scan = divide_and_conquer(problem, &dir.a, &dir.b, -half, half)?;
    let region = assemble_region(&scan.subproblems, model)?;
    if region.distance_to_boundary(dir.z_obs) > z_tol && !region.contains(dir.z_obs) {
        return Err(Error::Invariant(format!(
            "observed statistic {} lies outside its truncation region",
            dir.z_obs
        )));
    }
    let p_selective = truncated_p(dir.z_obs, dir.variance, &region)?;
    let p_oc = p_over_conditioning(dir.z_obs, dir.variance, observed_interval)?;
    let k = model.len();
    Ok(SelectiveResult {
        feature,
        z_obs: dir.z_obs,
        std_dev: sd,
        region,
        observed_interval,
        p_selective,
        p_naive: p_naive(dir.z_obs, dir.variance)?,
        p_bonferroni: p_bonferroni(dir.z_obs, dir.variance, problem.p(), k)?,
        p_oc,
        subproblem_count: scan.subproblems.len(),
        forced_steps: scan.forced_steps,
        scan_range: (-half, half),
        wall_time: start.elapsed(),
    })
}

/// Observed selection plus one inference outcome per selected feature.
#[derive(Debug)]
pub struct Analysis {
    pub observation: Observation,
    pub results: Vec<Result<SelectiveResult>>,
}

impl Analysis {
    pub fn selected(&self) -> &[usize] {
        self.observation.selected()
    }
}

/// End-to-end pipeline: adapt, select, then test every selected feature.
///
/// A failure for one feature is reported in its slot without stopping the others.
pub fn run_si_seqfs_da(
    source: &DomainData,
    target: &DomainData,
    sigma: &BlockCovariance,
    config: &InferenceConfig,
) -> Result<Analysis> {
    config.validate()?;
    let problem = ScanProblem::new(source, target, sigma, config.direction, config.criterion)?;
    let stacked = StackedResponse::new(stack_response(source, target), sigma.clone())?;
    let observation = observe(&problem, &stacked.y)?;
    let features = observation.selected().to_vec();
    let run = |&j: &usize| infer_feature(&problem, &stacked, &observation, j, config.z_mult);
    let results = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| features.par_iter().map(run).collect())
    } else {
        features.iter().map(run).collect()
    };
    Ok(Analysis { observation, results })
}
