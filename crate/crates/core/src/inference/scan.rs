//! Divide-and-conquer sweep of the line `a + b z`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{BlockCovariance, IntervalSet, Matrix};
use crate::ot::{cost_vector, omega, stack_design, DomainData, LineCost, PairDifference, TransportSolution};
use crate::seqfs::{Criterion, Direction, LineContext, LineSelection};

/// Intervals narrower than this are stepped over and counted.
pub const STEP_FLOOR: f64 = 1e-9;

/// Everything the pipeline needs that does not depend on the response.
#[derive(Debug, Clone)]
pub struct ScanProblem {
    pub(crate) x: Matrix,
    pub(crate) fixed_cost: Vec<f64>,
    pub(crate) theta: PairDifference,
    pub(crate) sigma: BlockCovariance,
    pub direction: Direction,
    pub criterion: Criterion,
}

impl ScanProblem {
    pub fn new(
        source: &DomainData,
        target: &DomainData,
        sigma: &BlockCovariance,
        direction: Direction,
        criterion: Criterion,
    ) -> Result<Self> {
        let (fixed_cost, theta) = cost_vector(source, target)?;
        if sigma.n_source() != source.n() || sigma.n_target() != target.n() {
            return Err(Error::DimensionMismatch(format!(
                "covariance blocks {}+{} against domains {}+{}",
                sigma.n_source(),
                sigma.n_target(),
                source.n(),
                target.n()
            )));
        }
        if let Criterion::Fixed(k) = criterion {
            if k == 0 || k > source.p() {
                return Err(Error::Config(format!("K must lie in 1..={}, got {k}", source.p())));
            }
        }
        Ok(Self {
            x: stack_design(source, target)?,
            fixed_cost,
            theta,
            sigma: sigma.clone(),
            direction,
            criterion,
        })
    }

    pub fn n_source(&self) -> usize {
        self.theta.n_s
    }

    pub fn n_target(&self) -> usize {
        self.theta.n_t
    }

    pub fn p(&self) -> usize {
        self.x.cols()
    }

    pub fn sigma(&self) -> &BlockCovariance {
        &self.sigma
    }

    pub fn line_cost(&self, a: &[f64], b: &[f64]) -> Result<LineCost> {
        LineCost::new(&self.fixed_cost, self.theta, a, b)
    }

    /// Transport and selection at a single point, with the right-limit convention.
    pub fn evaluate(
        &self,
        cost: &LineCost,
        a: &[f64],
        b: &[f64],
        z: f64,
        warm: Option<&TransportSolution>,
    ) -> Result<(TransportSolution, LineContext, LineSelection)> {
        let solution = cost.solve_at(z, warm)?;
        let mut ctx = LineContext::new(&omega(&solution.plan), &self.x, a, b, Some(&self.sigma))?;
        let selection = ctx.select(self.direction, self.criterion, z)?;
        Ok((solution, ctx, selection))
    }
}

/// One piece of the sweep: a fixed transport basis and a fixed selection outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subproblem {
    pub basis: Vec<usize>,
    pub picks: Vec<usize>,
    pub k_hat: usize,
    pub final_set: Vec<usize>,
    pub interval: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub subproblems: Vec<Subproblem>,
    pub forced_steps: usize,
}

fn forced_end(z: f64) -> f64 {
    let end = z + STEP_FLOOR;
    if end > z {
        end
    } else {
        z + z.abs() * f64::EPSILON * 2.0
    }
}

/// Sweeps `[z_min, z_max]`, recording each (basis, selection) piece in order.
///
/// Each outer pivot solves the transport problem, takes the piece of its
/// basis-invariance region to the right, and walks the selection pieces
/// inside it. Consecutive intervals share endpoints, so they tile the range.
pub fn divide_and_conquer(
    problem: &ScanProblem,
    a: &[f64],
    b: &[f64],
    z_min: f64,
    z_max: f64,
) -> Result<ScanResult> {
    if !(z_min < z_max) || !z_min.is_finite() || !z_max.is_finite() {
        return Err(Error::Config(format!("scan range [{z_min}, {z_max}] is not a proper interval")));
    }
    let cost = problem.line_cost(a, b)?;
    let mut subproblems = Vec::new();
    let mut forced_steps = 0;
    let mut warm: Option<TransportSolution> = None;
    let mut z = z_min;
    while z < z_max {
        let solution = cost.solve_at(z, warm.as_ref())?;
        let mut ru = cost
            .basis_component(&solution, z)?
            .map_or(z, |(_, hi)| hi)
            .min(z_max);
        if ru - z < STEP_FLOOR {
            ru = forced_end(z).min(z_max);
            forced_steps += 1;
        }
        let mut ctx = LineContext::new(&omega(&solution.plan), &problem.x, a, b, Some(&problem.sigma))?;
        let mut zz = z;
        while zz < ru {
            let selection = ctx.select(problem.direction, problem.criterion, zz)?;
            let mut hi = ctx
                .selection_component(&selection, zz)?
                .map_or(zz, |(_, hi)| hi)
                .min(ru);
            if hi - zz < STEP_FLOOR {
                hi = forced_end(zz).min(ru);
                forced_steps += 1;
            }
            subproblems.push(Subproblem {
                basis: solution.basis.clone(),
                picks: selection.path.picks.clone(),
                k_hat: selection.k_hat,
                final_set: selection.trace.final_set.clone(),
                interval: (zz, hi),
            });
            zz = hi;
        }
        z = zz;
        warm = Some(solution);
    }
    Ok(ScanResult {
        subproblems,
        forced_steps,
    })
}

/// Union of the intervals whose selected set equals `observed`.
pub fn assemble_region(subproblems: &[Subproblem], observed: &[usize]) -> Result<IntervalSet> {
    let mut target = observed.to_vec();
    target.sort_unstable();
    let pieces: Vec<(f64, f64)> = subproblems
        .iter()
        .filter(|s| {
            let mut m = s.final_set.clone();
            m.sort_unstable();
            m == target
        })
        .map(|s| s.interval)
        .collect();
    if pieces.is_empty() {
        return Err(Error::Invariant(format!(
            "no scanned interval reproduces the selected set {target:?}"
        )));
    }
    Ok(IntervalSet::from_intervals(pieces))
}
