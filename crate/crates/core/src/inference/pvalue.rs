//! Gaussian tail arithmetic and the p-values built on it.

use statrs::function::erf::{erf, erfc};

use crate::error::{Error, Result};
use crate::numkernel::IntervalSet;

const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Beyond this point `erfc` is replaced by the asymptotic tail series.
const SERIES_FROM: f64 = 25.0;

/// `log P(Z ≥ x)` for a standard normal `Z`, accurate far into both tails.
pub fn log_upper_tail(x: f64) -> f64 {
    if x == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::NEG_INFINITY {
        return 0.0;
    }
    if x < SERIES_FROM {
        if x < -5.0 {
            return (-0.5 * erfc(-x / SQRT_2)).ln_1p();
        }
        return (0.5 * erfc(x / SQRT_2)).ln();
    }
    let x2 = x * x;
    let series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2) + 105.0 / (x2 * x2 * x2 * x2);
    -0.5 * x2 - (x * (2.0 * std::f64::consts::PI).sqrt()).ln() + series.ln()
}

/// `log(exp(hi_tail_lo) - exp(hi_tail_hi))` given `log_lo ≥ log_hi`.
fn log_diff(log_lo: f64, log_hi: f64) -> f64 {
    if log_hi == f64::NEG_INFINITY {
        return log_lo;
    }
    let d = log_hi - log_lo;
    if d >= 0.0 {
        return f64::NEG_INFINITY;
    }
    log_lo + (-d.exp_m1()).ln()
}

/// `log P(lo ≤ Z ≤ hi)` for a standard normal, taking differences on the side away from zero.
pub fn log_interval_mass(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return f64::NEG_INFINITY;
    }
    if lo >= 0.0 {
        log_diff(log_upper_tail(lo), log_upper_tail(hi))
    } else if hi <= 0.0 {
        log_diff(log_upper_tail(-hi), log_upper_tail(-lo))
    } else {
        let lo_part = if lo == f64::NEG_INFINITY { 1.0 } else { erf(-lo / SQRT_2) };
        let hi_part = if hi == f64::INFINITY { 1.0 } else { erf(hi / SQRT_2) };
        (0.5 * (lo_part + hi_part)).ln()
    }
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

fn log_set_mass(set: &IntervalSet) -> f64 {
    let terms: Vec<f64> = set
        .intervals()
        .iter()
        .map(|&(lo, hi)| log_interval_mass(lo, hi))
        .collect();
    log_sum_exp(&terms)
}

fn check_variance(variance: f64) -> Result<f64> {
    if !(variance > 0.0 && variance.is_finite()) {
        return Err(Error::Config(format!("test-statistic variance must be positive, got {variance}")));
    }
    Ok(variance.sqrt())
}

/// Two-sided p-value of a centred Gaussian truncated to `region`:
/// `P(|Z| ≥ |z_obs| | Z ∈ region)` with `Z ~ N(0, variance)`.
pub fn truncated_p(z_obs: f64, variance: f64, region: &IntervalSet) -> Result<f64> {
    let sd = check_variance(variance)?;
    let scaled = IntervalSet::from_intervals(
        region
            .intervals()
            .iter()
            .map(|&(lo, hi)| (lo / sd, hi / sd))
            .collect(),
    );
    let t = (z_obs / sd).abs();
    let log_den = log_set_mass(&scaled);
    if log_den == f64::NEG_INFINITY {
        return Err(Error::MassUnderflow);
    }
    let tails = scaled
        .clip(f64::NEG_INFINITY, -t)
        .union(&scaled.clip(t, f64::INFINITY));
    let log_num = log_set_mass(&tails);
    Ok((log_num - log_den).exp().clamp(0.0, 1.0))
}

/// Untruncated two-sided p-value `2 P(Z ≥ |z_obs| / σ)`.
pub fn p_naive(z_obs: f64, variance: f64) -> Result<f64> {
    let sd = check_variance(variance)?;
    Ok(erfc((z_obs / sd).abs() / SQRT_2).min(1.0))
}

/// Number of ordered selection sequences of length `k` from `p` features, `p!/(p-k)!`.
pub fn ordered_sequences(p: usize, k: usize) -> f64 {
    (0..k.min(p)).map(|i| (p - i) as f64).product()
}

/// Naive p-value multiplied by the number of ordered selection sequences, capped at one.
pub fn p_bonferroni(z_obs: f64, variance: f64, p: usize, k: usize) -> Result<f64> {
    Ok((ordered_sequences(p, k) * p_naive(z_obs, variance)?).min(1.0))
}

/// Truncated p-value conditioned on the single sub-problem interval containing `z_obs`.
pub fn p_over_conditioning(z_obs: f64, variance: f64, interval: (f64, f64)) -> Result<f64> {
    truncated_p(z_obs, variance, &IntervalSet::single(interval.0, interval.1))
}
