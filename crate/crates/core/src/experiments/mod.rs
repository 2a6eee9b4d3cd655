//! Synthetic data, the FPR/TPR/timing simulation harness, and CSV ingestion.

mod ingest;
pub mod stats;

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{
    build_direction, infer_feature, observe, p_bonferroni, p_data_splitting, p_naive, InferenceConfig,
    ScanProblem, StackedResponse,
};
use crate::numkernel::{BlockCovariance, Matrix};
use crate::ot::{stack_response, DomainData};
use crate::seqfs::{Criterion, Direction};

pub use ingest::{ingest_csv, CsvLayout, IngestOptions, IngestedData};
use stats::{ks_uniform, spearman, wilson_interval};

/// Normal quantile for two-sided 95% intervals.
const Z_95: f64 = 1.959963984540054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Selective,
    Oc,
    Naive,
    Bonferroni,
    Ds,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Selective, Method::Oc, Method::Naive, Method::Bonferroni, Method::Ds];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Selective => "selective",
            Method::Oc => "oc",
            Method::Naive => "naive",
            Method::Bonferroni => "bonferroni",
            Method::Ds => "ds",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_s: usize,
    pub n_t: usize,
    pub p: usize,
    pub beta_s: f64,
    /// Target coefficient for single-level runs (timing); the FPR study forces zero.
    pub beta_t: f64,
    /// Target coefficients swept by the TPR study.
    pub beta_levels: Vec<f64>,
    /// Source sizes swept by the timing study.
    pub ns_grid: Vec<usize>,
    pub trials: usize,
    pub alpha: f64,
    pub seed: u64,
    pub methods: Vec<Method>,
    pub direction: Direction,
    pub criterion: Criterion,
    pub z_mult: f64,
    /// Worker threads for trials; results do not depend on it.
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_s: 50,
            n_t: 10,
            p: 5,
            beta_s: 2.0,
            beta_t: 0.0,
            beta_levels: vec![1.0, 2.0, 3.0, 4.0],
            ns_grid: vec![50, 100, 150, 200],
            trials: 500,
            alpha: 0.05,
            seed: 0,
            methods: Method::ALL.to_vec(),
            direction: Direction::Forward,
            criterion: Criterion::Fixed(3),
            z_mult: 20.0,
            threads: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::Config("at least one trial is required".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.p == 0 || self.n_s == 0 || self.n_t == 0 {
            return Err(Error::Config("n_s, n_t and p must be positive".into()));
        }
        if let Criterion::Fixed(k) = self.criterion {
            if k == 0 || k > self.p {
                return Err(Error::Config(format!("K must lie in 1..={}, got {k}", self.p)));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if !self.beta_s.is_finite() || !self.beta_t.is_finite() {
            return Err(Error::Config("coefficients must be finite".into()));
        }
        self.inference().validate()
    }

    pub fn inference(&self) -> InferenceConfig {
        InferenceConfig {
            direction: self.direction,
            criterion: self.criterion,
            z_mult: self.z_mult,
            threads: 1,
        }
    }

    fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }
}

/// Draws `Y = Xβ + ε` with `X ~ N(0, I_p)`, `ε ~ N(0, 1)` for each domain.
pub fn generate_synthetic(config: &SimConfig, rng: &mut impl Rng) -> Result<(DomainData, DomainData)> {
    let mut draw = |n: usize, beta: f64| {
        let x: Vec<f64> = (0..n * config.p).map(|_| rng.sample(StandardNormal)).collect();
        let x = Matrix::from_vec(n, config.p, x)?;
        let y = (0..n)
            .map(|i| beta * x.row(i).iter().sum::<f64>() + rng.sample::<f64, _>(StandardNormal))
            .collect();
        DomainData::new(x, y)
    };
    let source = draw(config.n_s, config.beta_s)?;
    let target = draw(config.n_t, config.beta_t)?;
    Ok((source, target))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialPValues {
    pub selective: Option<f64>,
    pub oc: Option<f64>,
    pub naive: Option<f64>,
    pub bonferroni: Option<f64>,
    pub ds: Option<f64>,
}

impl TrialPValues {
    pub fn get(&self, m: Method) -> Option<f64> {
        match m {
            Method::Selective => self.selective,
            Method::Oc => self.oc,
            Method::Naive => self.naive,
            Method::Bonferroni => self.bonferroni,
            Method::Ds => self.ds,
        }
    }

    fn keep_only(&mut self, methods: &[Method]) {
        for m in Method::ALL.into_iter().filter(|m| !methods.contains(m)) {
            *match m {
                Method::Selective => &mut self.selective,
                Method::Oc => &mut self.oc,
                Method::Naive => &mut self.naive,
                Method::Bonferroni => &mut self.bonferroni,
                Method::Ds => &mut self.ds,
            } = None;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub selected: Vec<usize>,
    /// The feature tested in this trial, drawn uniformly from `selected`.
    pub feature: usize,
    pub p_values: TrialPValues,
    pub subproblems: Option<usize>,
    pub forced_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_secs: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRate {
    pub method: Method,
    /// Trials in which the method produced a p-value.
    pub trials: usize,
    pub rejections: usize,
    pub rate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsSummary {
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    pub n_s: usize,
    pub beta_t: f64,
    pub rates: Vec<MethodRate>,
    pub mean_subproblems: Option<f64>,
    pub forced_steps: usize,
    pub ks_selective: Option<KsSummary>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_wall_time_secs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub median_wall_time_secs: Option<f64>,
    pub records: Vec<TrialRecord>,
}

impl LevelReport {
    pub fn rate(&self, m: Method) -> Option<&MethodRate> {
        self.rates.iter().find(|r| r.method == m)
    }

    /// Per-trial rejection indicators for `m`, `None` where no p-value was produced.
    pub fn rejections(&self, m: Method, alpha: f64) -> Vec<Option<bool>> {
        self.records
            .iter()
            .map(|r| r.p_values.get(m).map(|p| p <= alpha))
            .collect()
    }

    pub fn p_values(&self, m: Method) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.p_values.get(m)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Fpr,
    Tpr,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub study: Study,
    pub config: SimConfig,
    pub levels: Vec<LevelReport>,
    /// Rank correlation between source size and mean sub-problem count (timing study).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub spearman_ns_subproblems: Option<f64>,
}

impl SimReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Invariant(format!("report serialisation: {e}")))
    }

    /// Aligned-column summary, one row per (level, method).
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>6} {:>8} {:<11} {:>7} {:>6} {:>8} {:>8} {:>8} {:>11}",
            "n_s", "beta_t", "method", "trials", "rej", "rate", "ci_low", "ci_high", "subproblems"
        );
        for level in &self.levels {
            for r in &level.rates {
                let subs = level
                    .mean_subproblems
                    .map_or_else(|| "-".to_string(), |m| format!("{m:.1}"));
                let _ = writeln!(
                    out,
                    "{:>6} {:>8.3} {:<11} {:>7} {:>6} {:>8.4} {:>8.4} {:>8.4} {:>11}",
                    level.n_s,
                    level.beta_t,
                    r.method.name(),
                    r.trials,
                    r.rejections,
                    r.rate,
                    r.ci_low,
                    r.ci_high,
                    subs
                );
            }
            if let Some(t) = level.mean_wall_time_secs {
                let _ = writeln!(out, "{:>6} mean time per p-value: {:.6} s", level.n_s, t);
            }
        }
        if let Some(rho) = self.spearman_ns_subproblems {
            let _ = writeln!(out, "spearman(n_s, subproblems) = {rho:.4}");
        }
        out
    }
}

fn level_seed(seed: u64, level: usize) -> u64 {
    seed.wrapping_add((level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Independent stream per (level seed, trial index), so results do not depend on scheduling.
fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn run_trial(config: &SimConfig, rng: &mut ChaCha8Rng, timing: bool) -> Result<TrialRecord> {
    let (source, target) = generate_synthetic(config, rng)?;
    let pick = rng.random::<f64>();
    let ds_seed = rng.next_u64();
    let ds_pick = rng.random::<f64>();
    let choose = |set: &[usize], u: f64| set[((u * set.len() as f64) as usize).min(set.len() - 1)];

    let sigma = BlockCovariance::identity(config.n_s, config.n_t);
    let inference = config.inference();
    let problem = ScanProblem::new(&source, &target, &sigma, inference.direction, inference.criterion)?;
    let stacked = StackedResponse::new(stack_response(&source, &target), sigma.clone())?;
    let observation = observe(&problem, &stacked.y)?;
    let selected = observation.selected().to_vec();
    let feature = choose(&selected, pick);

    let mut p = TrialPValues::default();
    let (mut subproblems, mut forced, mut wall) = (None, None, None);
    if config.wants(Method::Selective) || config.wants(Method::Oc) {
        let start = Instant::now();
        let res = infer_feature(&problem, &stacked, &observation, feature, config.z_mult)?;
        if !res.region.contains(res.z_obs) && res.region.distance_to_boundary(res.z_obs) > 1e-9 {
            return Err(Error::Invariant(format!("z_obs {} outside its region", res.z_obs)));
        }
        if timing {
            wall = Some(start.elapsed().as_secs_f64());
        }
        p.selective = Some(res.p_selective);
        p.oc = Some(res.p_oc);
        p.naive = Some(res.p_naive);
        p.bonferroni = Some(res.p_bonferroni);
        subproblems = Some(res.subproblem_count);
        forced = Some(res.forced_steps);
    } else if config.wants(Method::Naive) || config.wants(Method::Bonferroni) {
        let dir = build_direction(feature, &selected, &target.x, &stacked)?;
        p.naive = Some(p_naive(dir.z_obs, dir.variance)?);
        p.bonferroni = Some(p_bonferroni(dir.z_obs, dir.variance, config.p, selected.len())?);
    }
    p.keep_only(&config.methods);
    if config.wants(Method::Ds) {
        let split = p_data_splitting(&source, &target, &sigma, &inference, ds_seed)?;
        let idx = ((ds_pick * split.selected.len() as f64) as usize).min(split.selected.len() - 1);
        p.ds = split.p_values[idx];
    }
    Ok(TrialRecord {
        selected,
        feature,
        p_values: p,
        subproblems,
        forced_steps: forced,
        wall_time_secs: wall,
    })
}

fn summarise(config: &SimConfig, records: Vec<TrialRecord>, timing: bool) -> LevelReport {
    let rates = config
        .methods
        .iter()
        .map(|&m| {
            let ps: Vec<f64> = records.iter().filter_map(|r| r.p_values.get(m)).collect();
            let rejections = ps.iter().filter(|&&p| p <= config.alpha).count();
            let (ci_low, ci_high) = wilson_interval(rejections, ps.len(), Z_95);
            MethodRate {
                method: m,
                trials: ps.len(),
                rejections,
                rate: if ps.is_empty() { 0.0 } else { rejections as f64 / ps.len() as f64 },
                ci_low,
                ci_high,
            }
        })
        .collect();
    let subs: Vec<f64> = records.iter().filter_map(|r| r.subproblems.map(|s| s as f64)).collect();
    let sel: Vec<f64> = records.iter().filter_map(|r| r.p_values.selective).collect();
    let times: Vec<f64> = records.iter().filter_map(|r| r.wall_time_secs).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    LevelReport {
        n_s: config.n_s,
        beta_t: config.beta_t,
        rates,
        mean_subproblems: mean(&subs),
        forced_steps: records.iter().filter_map(|r| r.forced_steps).sum(),
        ks_selective: (!sel.is_empty()).then(|| {
            let (statistic, p_value) = ks_uniform(&sel);
            KsSummary { statistic, p_value }
        }),
        mean_wall_time_secs: if timing { mean(&times) } else { None },
        median_wall_time_secs: if timing { stats::median(&times) } else { None },
        records,
    }
}

fn run_level(config: &SimConfig, level: usize, timing: bool) -> Result<LevelReport> {
    let seed = level_seed(config.seed, level);
    let one = |t: usize| run_trial(config, &mut trial_rng(seed, t), timing);
    let records: Vec<TrialRecord> = if config.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| (0..config.trials).into_par_iter().map(one).collect::<Result<_>>())?
    } else {
        (0..config.trials).map(one).collect::<Result<_>>()?
    };
    Ok(summarise(config, records, timing))
}

/// Null study: all target coefficients zero.
pub fn run_fpr_study(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let cfg = SimConfig {
        beta_t: 0.0,
        ..config.clone()
    };
    Ok(SimReport {
        study: Study::Fpr,
        levels: vec![run_level(&cfg, 0, false)?],
        config: cfg,
        spearman_ns_subproblems: None,
    })
}

/// Power study over `config.beta_levels`; every target coefficient is set to the level.
pub fn run_tpr_study(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    if config.beta_levels.is_empty() {
        return Err(Error::Config("no coefficient levels given".into()));
    }
    if let Some(b) = config.beta_levels.iter().find(|b| **b == 0.0 || !b.is_finite()) {
        return Err(Error::Config(format!(
            "true positive rate is undefined at target coefficient {b}; use the FPR study"
        )));
    }
    let levels = config
        .beta_levels
        .iter()
        .enumerate()
        .map(|(l, &b)| {
            let cfg = SimConfig {
                beta_t: b,
                ..config.clone()
            };
            run_level(&cfg, l, false)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SimReport {
        study: Study::Tpr,
        config: config.clone(),
        levels,
        spearman_ns_subproblems: None,
    })
}

/// Wall time and sub-problem counts per p-value across `config.ns_grid`.
pub fn run_timing_study(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    if config.ns_grid.is_empty() || config.ns_grid.contains(&0) {
        return Err(Error::Config("source-size grid must be non-empty and positive".into()));
    }
    let mut cfg = config.clone();
    if !cfg.methods.contains(&Method::Selective) {
        cfg.methods.push(Method::Selective);
    }
    let levels = cfg
        .ns_grid
        .iter()
        .enumerate()
        .map(|(l, &ns)| {
            let level_cfg = SimConfig {
                n_s: ns,
                ..cfg.clone()
            };
            run_level(&level_cfg, l, true)
        })
        .collect::<Result<Vec<_>>>()?;
    let xs: Vec<f64> = levels.iter().map(|l| l.n_s as f64).collect();
    let ys: Vec<f64> = levels.iter().map(|l| l.mean_subproblems.unwrap_or(0.0)).collect();
    Ok(SimReport {
        study: Study::Time,
        spearman_ns_subproblems: spearman(&xs, &ys),
        config: cfg,
        levels,
    })
}
