//! Data-splitting baseline: select on one half, test on the other.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{build_direction, observe, p_naive, InferenceConfig, ScanProblem, StackedResponse};
use crate::error::{Error, Result};
use crate::numkernel::BlockCovariance;
use crate::ot::{stack_response, DomainData};

/// Seeded 50/50 partition of `0..n`; both halves sorted, the first has `n / 2` entries.
pub fn split_halves(n: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut second = idx.split_off(n / 2);
    idx.sort_unstable();
    second.sort_unstable();
    (idx, second)
}

fn subset(d: &DomainData, rows: &[usize]) -> Result<DomainData> {
    DomainData::new(d.x.select_rows(rows), rows.iter().map(|&r| d.y[r]).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSplitResult {
    /// Features selected on the first half.
    pub selected: Vec<usize>,
    /// Naive p-value on the held-out target rows for each selected feature;
    /// `None` when the held-out design cannot identify the coefficient.
    pub p_values: Vec<Option<f64>>,
}

/// Splits both domains in half by a seeded shuffle, runs adaptation and
/// selection on the first half with its own transport problem, and tests the
/// selected coefficients on the second half's target rows.
pub fn p_data_splitting(
    source: &DomainData,
    target: &DomainData,
    sigma: &BlockCovariance,
    config: &InferenceConfig,
    seed: u64,
) -> Result<DataSplitResult> {
    if source.n() < 2 || target.n() < 2 {
        return Err(Error::Config("data splitting needs at least two rows per domain".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (src_a, src_b) = split_halves(source.n(), &mut rng);
    let (tgt_a, tgt_b) = split_halves(target.n(), &mut rng);

    let (sa, ta) = (subset(source, &src_a)?, subset(target, &tgt_a)?);
    let sigma_a = sigma.restrict(&src_a, &tgt_a)?;
    let problem = ScanProblem::new(&sa, &ta, &sigma_a, config.direction, config.criterion)?;
    let observation = observe(&problem, &stack_response(&sa, &ta))?;
    let selected = observation.selected().to_vec();

    let (sb, tb) = (subset(source, &src_b)?, subset(target, &tgt_b)?);
    let held_out = StackedResponse::new(stack_response(&sb, &tb), sigma.restrict(&src_b, &tgt_b)?)?;
    let p_values = selected
        .iter()
        .map(|&j| match build_direction(j, &selected, &tb.x, &held_out) {
            Ok(dir) => p_naive(dir.z_obs, dir.variance).map(Some),
            Err(Error::RankDeficient { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DataSplitResult { selected, p_values })
}
