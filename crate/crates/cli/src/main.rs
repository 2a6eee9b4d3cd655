//! `sisda`: selective p-values for features picked by sequential selection
//! after optimal-transport domain adaptation.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use sisda_core::experiments::{
    ingest_csv, run_fpr_study, run_timing_study, run_tpr_study, CsvLayout, IngestOptions, Method, SimConfig,
};
use sisda_core::inference::{estimate_covariance, run_si_seqfs_da, InferenceConfig};
use sisda_core::numkernel::{BlockCovariance, CovBlock, Matrix};
use sisda_core::seqfs::{Criterion, Direction};
use sisda_core::Error;

const P_DIGITS: usize = 6;
const ENDPOINT_DIGITS: usize = 9;

#[derive(Parser)]
#[command(name = "sisda", version, about = "Selective inference for sequential feature selection after OT domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select features on CSV data and report a p-value for each selected feature.
    Analyze(AnalyzeArgs),
    /// False positive rates on synthetic null data.
    SimulateFpr(SimArgs),
    /// True positive rates over a grid of target coefficients.
    SimulateTpr(SimArgs),
    /// Time and sub-problem counts per p-value over a grid of source sizes.
    SimulateTime(SimArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DirectionArg {
    Forward,
    Backward,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CriterionArg {
    Fixed,
    Aic,
    Bic,
    Adjr2,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputArg {
    Json,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Selective,
    Oc,
    Naive,
    Bonferroni,
    Ds,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Selective => Method::Selective,
            MethodArg::Oc => Method::Oc,
            MethodArg::Naive => Method::Naive,
            MethodArg::Bonferroni => Method::Bonferroni,
            MethodArg::Ds => Method::Ds,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    #[arg(long, value_enum, default_value = "forward")]
    direction: DirectionArg,
    #[arg(long, value_enum, default_value = "fixed")]
    criterion: CriterionArg,
    /// Number of features to select; required with `--criterion fixed`, rejected otherwise.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Half-width of the scanned line in standard deviations.
    #[arg(long, default_value_t = 20.0)]
    z_mult: f64,
    /// RNG seed; the SISDA_SEED environment variable takes precedence.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "json")]
    output: OutputArg,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Source-domain CSV (with `--target`).
    #[arg(long, conflicts_with = "data")]
    source: Option<PathBuf>,
    /// Target-domain CSV (with `--source`).
    #[arg(long, conflicts_with = "data")]
    target: Option<PathBuf>,
    /// Single CSV holding both domains (with `--domain-column`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    domain_column: Option<String>,
    #[arg(long, default_value = "source")]
    source_label: String,
    #[arg(long, default_value = "target")]
    target_label: String,
    #[arg(long, default_value = "y")]
    response: String,
    /// Comma-separated feature columns; defaults to all other columns.
    #[arg(long, value_delimiter = ',')]
    features: Option<Vec<String>>,
    /// Subsample the source domain to this many rows.
    #[arg(long)]
    ns: Option<usize>,
    /// Subsample the target domain to this many rows.
    #[arg(long)]
    nt: Option<usize>,
    /// Noise covariance: identity, scalar:<variance>, file:<path.json>, or estimate.
    #[arg(long, default_value = "estimate")]
    sigma: String,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 50)]
    ns: usize,
    #[arg(long, default_value_t = 10)]
    nt: usize,
    #[arg(long, default_value_t = 5)]
    p: usize,
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Source coefficient shared by every feature.
    #[arg(long, default_value_t = 2.0)]
    beta_s: f64,
    /// Target coefficient for the timing study.
    #[arg(long, default_value_t = 0.0)]
    beta_t: f64,
    /// Target coefficient levels for the TPR study.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    beta_levels: Vec<f64>,
    /// Source sizes for the timing study.
    #[arg(long, value_delimiter = ',', default_value = "50,100,150,200")]
    ns_grid: Vec<usize>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "selective,oc,naive,bonferroni,ds")]
    methods: Vec<MethodArg>,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) | Error::Input(_) | Error::Csv(_) | Error::Io(_) => 2,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

impl CommonArgs {
    fn criterion(&self) -> Result<Criterion, Failure> {
        match (self.criterion, self.k) {
            (CriterionArg::Fixed, Some(k)) => Ok(Criterion::Fixed(k)),
            (CriterionArg::Fixed, None) => Err(config_error("--criterion fixed requires --k")),
            (_, Some(_)) => Err(config_error(
                "--k conflicts with --criterion aic/bic/adjr2, which choose the model size themselves",
            )),
            (CriterionArg::Aic, None) => Ok(Criterion::Aic),
            (CriterionArg::Bic, None) => Ok(Criterion::Bic),
            (CriterionArg::Adjr2, None) => Ok(Criterion::AdjR2),
        }
    }

    fn direction(&self) -> Direction {
        match self.direction {
            DirectionArg::Forward => Direction::Forward,
            DirectionArg::Backward => Direction::Backward,
        }
    }

    fn seed(&self) -> Result<u64, Failure> {
        match std::env::var("SISDA_SEED") {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| config_error(format!("SISDA_SEED must be an unsigned integer, got '{v}'"))),
            Err(_) => Ok(self.seed),
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(config_error(format!("--alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.threads == 0 {
            return Err(config_error("--threads must be at least 1"));
        }
        Ok(())
    }
}

/// Rounds to `digits` significant digits; non-finite values become null.
fn round_sig(x: f64, digits: usize) -> Value {
    if !x.is_finite() {
        return Value::Null;
    }
    let rounded: f64 = format!("{:.*e}", digits - 1, x).parse().expect("formatted float");
    json!(rounded)
}

fn parse_block(value: &Value, n: usize, name: &str) -> Result<CovBlock, Failure> {
    if let Some(v) = value.as_f64() {
        return Ok(CovBlock::scaled(n, v)?);
    }
    let rows = value
        .as_array()
        .ok_or_else(|| config_error(format!("sigma file: '{name}' must be a number or a matrix")))?;
    let parsed: Option<Vec<Vec<f64>>> = rows
        .iter()
        .map(|r| r.as_array().and_then(|r| r.iter().map(Value::as_f64).collect()))
        .collect();
    let parsed = parsed.ok_or_else(|| config_error(format!("sigma file: '{name}' has non-numeric entries")))?;
    Ok(CovBlock::dense(Matrix::from_rows(&parsed)?)?)
}

fn load_sigma_file(path: &str, n_s: usize, n_t: usize) -> Result<BlockCovariance, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {path}: {e}")))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| config_error(format!("sigma file {path} is not JSON: {e}")))?;
    let get = |k: &str| {
        value
            .get(k)
            .ok_or_else(|| config_error(format!("sigma file {path} lacks '{k}'")))
    };
    Ok(BlockCovariance {
        source: parse_block(get("source")?, n_s, "source")?,
        target: parse_block(get("target")?, n_t, "target")?,
    })
}

fn analyze(args: AnalyzeArgs) -> Result<String, Failure> {
    let common = &args.common;
    common.validate()?;
    let criterion = common.criterion()?;
    let seed = common.seed()?;
    let layout = match (&args.source, &args.target, &args.data, &args.domain_column) {
        (Some(s), Some(t), None, _) => CsvLayout::Split {
            source: s.clone(),
            target: t.clone(),
        },
        (None, None, Some(d), Some(col)) => CsvLayout::Labelled {
            path: d.clone(),
            domain_column: col.clone(),
            source_label: args.source_label.clone(),
            target_label: args.target_label.clone(),
        },
        (None, None, Some(_), None) => return Err(config_error("--data requires --domain-column")),
        _ => return Err(config_error("give both --source and --target, or --data with --domain-column")),
    };
    let data = ingest_csv(
        &layout,
        &IngestOptions {
            response: args.response.clone(),
            features: args.features.clone(),
            n_source: args.ns,
            n_target: args.nt,
            seed,
        },
    )?;
    let (n_s, n_t) = (data.source.n(), data.target.n());
    let sigma = match args.sigma.split_once(':') {
        None if args.sigma == "identity" => BlockCovariance::identity(n_s, n_t),
        None if args.sigma == "estimate" => estimate_covariance(&data.source, &data.target)?,
        Some(("scalar", v)) => {
            let v: f64 = v
                .parse()
                .map_err(|_| config_error(format!("--sigma scalar:<variance> needs a number, got '{v}'")))?;
            BlockCovariance::scalar(n_s, n_t, v)?
        }
        Some(("file", path)) => {
            // Blocks cover every row of each domain; keep the subsampled ones.
            let full = load_sigma_file(path, n_s, n_t)?;
            if full.n_source() == n_s && full.n_target() == n_t {
                full
            } else {
                full.restrict(&data.source_rows, &data.target_rows)?
            }
        }
        _ => {
            return Err(config_error(format!(
                "--sigma must be identity, scalar:<v>, file:<path> or estimate, got '{}'",
                args.sigma
            )))
        }
    };
    if sigma.n_source() != n_s || sigma.n_target() != n_t {
        return Err(config_error(format!(
            "covariance blocks are {}x{} and {}x{}, data has {n_s} source and {n_t} target rows",
            sigma.n_source(),
            sigma.n_source(),
            sigma.n_target(),
            sigma.n_target()
        )));
    }
    let config = InferenceConfig {
        direction: common.direction(),
        criterion,
        z_mult: common.z_mult,
        threads: common.threads,
    };
    let analysis = run_si_seqfs_da(&data.source, &data.target, &sigma, &config)?;

    let records: Vec<Value> = analysis
        .selected()
        .iter()
        .zip(&analysis.results)
        .map(|(&j, res)| {
            let mut rec = Map::new();
            rec.insert("feature".into(), json!(data.feature_names[j]));
            rec.insert("feature_index".into(), json!(j));
            match res {
                Ok(r) => {
                    rec.insert("beta_hat".into(), round_sig(r.z_obs, ENDPOINT_DIGITS));
                    rec.insert("std_error".into(), round_sig(r.std_dev, ENDPOINT_DIGITS));
                    for (k, v) in [
                        ("p_selective", r.p_selective),
                        ("p_naive", r.p_naive),
                        ("p_bonferroni", r.p_bonferroni),
                        ("p_oc", r.p_oc),
                    ] {
                        rec.insert(k.into(), round_sig(v, P_DIGITS));
                    }
                    let region: Vec<Value> = r
                        .region
                        .intervals()
                        .iter()
                        .map(|&(lo, hi)| json!([round_sig(lo, ENDPOINT_DIGITS), round_sig(hi, ENDPOINT_DIGITS)]))
                        .collect();
                    rec.insert("region".into(), Value::Array(region));
                    rec.insert("reject".into(), json!(r.p_selective <= common.alpha));
                    rec.insert("error".into(), Value::Null);
                }
                Err(e) => {
                    for k in ["beta_hat", "std_error", "p_selective", "p_naive", "p_bonferroni", "p_oc"] {
                        rec.insert(k.into(), Value::Null);
                    }
                    rec.insert("region".into(), json!([]));
                    rec.insert("reject".into(), Value::Null);
                    rec.insert("error".into(), json!(e.to_string()));
                }
            }
            Value::Object(rec)
        })
        .collect();

    Ok(match common.output {
        OutputArg::Json => serde_json::to_string_pretty(&records).expect("records serialise") + "\n",
        OutputArg::Table => analyze_table(&records),
    })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => "-".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn analyze_table(records: &[Value]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>14} {:>12} {:>12} {:>12} {:>12} {:>9} {:>7}",
        "feature", "beta_hat", "p_selective", "p_oc", "p_naive", "p_bonferroni", "intervals", "reject"
    );
    for r in records {
        let _ = writeln!(
            out,
            "{:<16} {:>14} {:>12} {:>12} {:>12} {:>12} {:>9} {:>7}",
            cell(&r["feature"]),
            cell(&r["beta_hat"]),
            cell(&r["p_selective"]),
            cell(&r["p_oc"]),
            cell(&r["p_naive"]),
            cell(&r["p_bonferroni"]),
            r["region"].as_array().map_or(0, Vec::len),
            cell(&r["reject"]),
        );
        if let Value::String(e) = &r["error"] {
            let _ = writeln!(out, "  error: {e}");
        }
    }
    out
}

/// Rounds every per-trial p-value in a serialised report.
fn round_report_p_values(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (k, v) in map.iter_mut() {
                if k == "p_values" || k == "p_value" {
                    round_leaves(v);
                } else {
                    round_report_p_values(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(round_report_p_values),
        _ => {}
    }
}

fn round_leaves(value: &mut Value) {
    match value {
        Value::Number(n) => {
            if let Some(x) = n.as_f64() {
                *value = round_sig(x, P_DIGITS);
            }
        }
        Value::Object(map) => map.values_mut().for_each(round_leaves),
        _ => {}
    }
}

#[derive(Clone, Copy)]
enum Study {
    Fpr,
    Tpr,
    Time,
}

fn simulate(study: Study, args: SimArgs) -> Result<String, Failure> {
    let common = &args.common;
    common.validate()?;
    let mut methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    methods.sort();
    methods.dedup();
    let config = SimConfig {
        n_s: args.ns,
        n_t: args.nt,
        p: args.p,
        beta_s: args.beta_s,
        beta_t: args.beta_t,
        beta_levels: args.beta_levels.clone(),
        ns_grid: args.ns_grid.clone(),
        trials: args.trials,
        alpha: common.alpha,
        seed: common.seed()?,
        methods,
        direction: common.direction(),
        criterion: common.criterion()?,
        z_mult: common.z_mult,
        threads: common.threads,
    };
    let report = match study {
        Study::Fpr => run_fpr_study(&config)?,
        Study::Tpr => run_tpr_study(&config)?,
        Study::Time => run_timing_study(&config)?,
    };
    Ok(match common.output {
        OutputArg::Json => {
            let mut value: Value = serde_json::from_str(&report.to_json()?).expect("report is JSON");
            round_report_p_values(&mut value);
            serde_json::to_string_pretty(&value).expect("report serialises") + "\n"
        }
        OutputArg::Table => report.to_table(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::SimulateFpr(a) => simulate(Study::Fpr, a),
        Command::SimulateTpr(a) => simulate(Study::Tpr, a),
        Command::SimulateTime(a) => simulate(Study::Time, a),
    };
    match result {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
