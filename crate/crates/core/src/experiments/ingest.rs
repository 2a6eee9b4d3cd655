//! Headered CSV input for real-data analyses.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;
use crate::ot::DomainData;

/// Where the two domains come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CsvLayout {
    /// One file per domain with identical feature columns.
    Split { source: PathBuf, target: PathBuf },
    /// One file whose `domain_column` holds `source_label` or `target_label`.
    Labelled {
        path: PathBuf,
        domain_column: String,
        source_label: String,
        target_label: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IngestOptions {
    pub response: String,
    /// Feature columns in order; defaults to every column except the response and domain label.
    pub features: Option<Vec<String>>,
    pub n_source: Option<usize>,
    pub n_target: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestedData {
    pub source: DomainData,
    pub target: DomainData,
    pub feature_names: Vec<String>,
    /// Rows kept from each domain, as positions within that domain's records.
    pub source_rows: Vec<usize>,
    pub target_rows: Vec<usize>,
}

struct Table {
    name: String,
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        let headers = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader.records().collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self {
            name: path.display().to_string(),
            headers,
            rows,
        })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Input(format!("column '{name}' not found in {}", self.name)))
    }

    fn numeric(&self, rows: &[usize], col: usize) -> Result<Vec<f64>> {
        rows.iter()
            .map(|&r| {
                let cell = &self.rows[r][col];
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Input(format!(
                            "non-numeric value '{cell}' in column '{}' at data row {} of {}",
                            self.headers[col],
                            r + 1,
                            self.name
                        ))
                    })
            })
            .collect()
    }
}

/// One domain's rows of a table.
struct Slice<'a> {
    table: &'a Table,
    rows: Vec<usize>,
}

impl Slice<'_> {
    fn columns(&self, names: &[String]) -> Result<Vec<Vec<f64>>> {
        names
            .iter()
            .map(|n| self.table.numeric(&self.rows, self.table.column(n)?))
            .collect()
    }
}

fn to_domain(columns: &[Vec<f64>], response: Vec<f64>, keep: &[usize]) -> Result<DomainData> {
    let p = columns.len();
    let mut data = Vec::with_capacity(keep.len() * p);
    for &r in keep {
        data.extend(columns.iter().map(|c| c[r]));
    }
    DomainData::new(
        Matrix::from_vec(keep.len(), p, data)?,
        keep.iter().map(|&r| response[r]).collect(),
    )
}

fn subsample(n: usize, want: Option<usize>, rng: &mut ChaCha8Rng, what: &str) -> Result<Vec<usize>> {
    match want {
        None => Ok((0..n).collect()),
        Some(k) if k > n => Err(Error::Config(format!("requested {k} {what} rows but only {n} available"))),
        Some(k) => {
            let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

/// Parses the CSV input, z-scores every feature with the source mean and
/// standard deviation (applied to both domains), then draws the seeded
/// subsamples.
pub fn ingest_csv(layout: &CsvLayout, options: &IngestOptions) -> Result<IngestedData> {
    let (source_table, target_table, label_col);
    let (source, target) = match layout {
        CsvLayout::Split { source: s, target: t } => {
            source_table = Table::read(s)?;
            target_table = Table::read(t)?;
            label_col = None;
            (
                Slice {
                    table: &source_table,
                    rows: (0..source_table.rows.len()).collect(),
                },
                Slice {
                    table: &target_table,
                    rows: (0..target_table.rows.len()).collect(),
                },
            )
        }
        CsvLayout::Labelled {
            path,
            domain_column,
            source_label,
            target_label,
        } => {
            source_table = Table::read(path)?;
            let col = source_table.column(domain_column)?;
            label_col = Some(domain_column.clone());
            let pick = |label: &str| -> Vec<usize> {
                (0..source_table.rows.len())
                    .filter(|&r| &source_table.rows[r][col] == label)
                    .collect()
            };
            (
                Slice {
                    table: &source_table,
                    rows: pick(source_label),
                },
                Slice {
                    table: &source_table,
                    rows: pick(target_label),
                },
            )
        }
    };
    let features: Vec<String> = match &options.features {
        Some(f) => f.clone(),
        None => source
            .table
            .headers
            .iter()
            .filter(|h| **h != options.response && Some(*h) != label_col.as_ref())
            .cloned()
            .collect(),
    };
    if features.is_empty() {
        return Err(Error::Input("no feature columns".into()));
    }
    if source.rows.len() < 2 || target.rows.is_empty() {
        return Err(Error::Input(format!(
            "need at least two source rows and one target row, found {} and {}",
            source.rows.len(),
            target.rows.len()
        )));
    }

    let mut xs = source.columns(&features)?;
    let mut xt = target.columns(&features)?;
    let ys = source.columns(std::slice::from_ref(&options.response))?.remove(0);
    let yt = target.columns(std::slice::from_ref(&options.response))?.remove(0);

    for (name, (cs, ct)) in features.iter().zip(xs.iter_mut().zip(xt.iter_mut())) {
        let n = cs.len() as f64;
        let mean = cs.iter().sum::<f64>() / n;
        let sd = (cs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Input(format!("column '{name}' is constant in the source domain")));
        }
        for v in cs.iter_mut().chain(ct.iter_mut()) {
            *v = (*v - mean) / sd;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let source_rows = subsample(ys.len(), options.n_source, &mut rng, "source")?;
    let target_rows = subsample(yt.len(), options.n_target, &mut rng, "target")?;
    Ok(IngestedData {
        source: to_domain(&xs, ys, &source_rows)?,
        target: to_domain(&xt, yt, &target_rows)?,
        feature_names: features,
        source_rows,
        target_rows,
    })
}
