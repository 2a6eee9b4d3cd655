//! Scalar quadratic inequalities in `z` and unions of intervals.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

/// Coefficient magnitudes below this are treated as zero.
pub const COEFF_TOL: f64 = 1e-12;
/// Intervals closer than this are merged.
pub const MERGE_TOL: f64 = 1e-10;

/// `w + r z + o z²` as a function of the scalar line parameter.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Quadratic {
    pub w: f64,
    pub r: f64,
    pub o: f64,
}

impl Quadratic {
    pub const ZERO: Quadratic = Quadratic {
        w: 0.0,
        r: 0.0,
        o: 0.0,
    };

    pub fn new(w: f64, r: f64, o: f64) -> Self {
        Self { w, r, o }
    }

    /// `‖a + b z‖²` given the two vectors.
    pub fn norm_sq_of_line(a: &[f64], b: &[f64]) -> Self {
        Self {
            w: dot(a, a),
            r: 2.0 * dot(a, b),
            o: dot(b, b),
        }
    }

    #[inline]
    pub fn eval(&self, z: f64) -> f64 {
        self.w + z * (self.r + z * self.o)
    }

    #[inline]
    pub fn slope(&self, z: f64) -> f64 {
        self.r + 2.0 * self.o * z
    }

    pub fn sub(&self, other: &Quadratic) -> Quadratic {
        Quadratic::new(self.w - other.w, self.r - other.r, self.o - other.o)
    }

    pub fn scale(&self, f: f64) -> Quadratic {
        Quadratic::new(self.w * f, self.r * f, self.o * f)
    }

    pub fn add_constant(&self, c: f64) -> Quadratic {
        Quadratic::new(self.w + c, self.r, self.o)
    }

    /// Sign of the quadratic on `[z, z + ε)` for infinitesimal `ε > 0`.
    ///
    /// Value, first and second derivative are compared in turn; each is
    /// treated as zero when it is within `rel_tol` of `scale`.
    pub fn right_sign(&self, z: f64, scale: f64, rel_tol: f64) -> Ordering {
        let tol = rel_tol * scale.max(1.0);
        let v = self.eval(z);
        if v < -tol {
            return Ordering::Less;
        }
        if v > tol {
            return Ordering::Greater;
        }
        let tol_d = rel_tol * (self.r.abs() + 2.0 * (self.o * z).abs()).max(1.0);
        let d = self.slope(z);
        if d < -tol_d {
            return Ordering::Less;
        }
        if d > tol_d {
            return Ordering::Greater;
        }
        if self.o < -COEFF_TOL {
            Ordering::Less
        } else if self.o > COEFF_TOL {
            Ordering::Greater
        } else {
            Ordering::Equal
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    /// `w + r z + o z² ≤ 0`
    NonPositive,
    /// `w + r z + o z² ≥ 0`
    NonNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadInequality {
    pub w: f64,
    pub r: f64,
    pub o: f64,
    pub sense: Sense,
}

impl QuadInequality {
    pub fn le_zero(q: Quadratic) -> Self {
        Self {
            w: q.w,
            r: q.r,
            o: q.o,
            sense: Sense::NonPositive,
        }
    }

    pub fn ge_zero(q: Quadratic) -> Self {
        Self {
            w: q.w,
            r: q.r,
            o: q.o,
            sense: Sense::NonNegative,
        }
    }

    /// Coefficients of the equivalent `≤ 0` form.
    fn normalized(&self) -> (f64, f64, f64) {
        match self.sense {
            Sense::NonPositive => (self.w, self.r, self.o),
            Sense::NonNegative => (-self.w, -self.r, -self.o),
        }
    }

    pub fn holds_at(&self, z: f64) -> bool {
        let (w, r, o) = self.normalized();
        w + z * (r + z * o) <= 0.0
    }

    /// Exact solution set of this single inequality.
    pub fn solve(&self, tol: f64) -> IntervalSet {
        let (w, r, o) = self.normalized();
        let all = IntervalSet::full();
        if o.abs() < tol {
            if r.abs() < tol {
                return if w <= tol { all } else { IntervalSet::empty() };
            }
            let root = -w / r;
            return if r > 0.0 {
                IntervalSet::single(f64::NEG_INFINITY, root)
            } else {
                IntervalSet::single(root, f64::INFINITY)
            };
        }
        let disc = r * r - 4.0 * o * w;
        if disc <= -tol {
            return if o > 0.0 { IntervalSet::empty() } else { all };
        }
        if disc <= 0.0 {
            let root = -r / (2.0 * o);
            return if o > 0.0 {
                IntervalSet::single(root, root)
            } else {
                all
            };
        }
        let sq = disc.sqrt();
        // Numerically stable pair of roots.
        let qq = -0.5 * (r + r.signum() * sq);
        let (z1, z2) = if qq == 0.0 {
            (0.0, 0.0)
        } else {
            let a = qq / o;
            let b = w / qq;
            if a < b {
                (a, b)
            } else {
                (b, a)
            }
        };
        if o > 0.0 {
            IntervalSet::single(z1, z2)
        } else {
            IntervalSet::from_intervals(vec![(f64::NEG_INFINITY, z1), (z2, f64::INFINITY)])
        }
    }
}

/// Sorted union of disjoint closed intervals; endpoints may be infinite.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalSet {
    intervals: Vec<(f64, f64)>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self {
            intervals: Vec::new(),
        }
    }

    pub fn full() -> Self {
        Self::single(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn single(lo: f64, hi: f64) -> Self {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Self::empty();
        }
        Self {
            intervals: vec![(lo, hi)],
        }
    }

    /// Normalises arbitrary intervals: drops empty ones, sorts, merges overlaps and near-touching neighbours.
    pub fn from_intervals(mut raw: Vec<(f64, f64)>) -> Self {
        raw.retain(|&(lo, hi)| lo <= hi);
        raw.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (lo, hi) in raw {
            match out.last_mut() {
                Some(last) if lo <= last.1 + MERGE_TOL => {
                    if hi > last.1 {
                        last.1 = hi;
                    }
                }
                _ => out.push((lo, hi)),
            }
        }
        Self { intervals: out }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn contains(&self, z: f64) -> bool {
        self.intervals.iter().any(|&(lo, hi)| lo <= z && z <= hi)
    }

    /// Distance from `z` to the nearest endpoint.
    pub fn distance_to_boundary(&self, z: f64) -> f64 {
        self.intervals
            .iter()
            .flat_map(|&(lo, hi)| [lo, hi])
            .filter(|e| e.is_finite())
            .map(|e| (e - z).abs())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].0.max(b[j].0);
            let hi = a[i].1.min(b[j].1);
            if lo <= hi {
                out.push((lo, hi));
            }
            if a[i].1 < b[j].1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet::from_intervals(out)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        IntervalSet::from_intervals(all)
    }

    pub fn clip(&self, lo: f64, hi: f64) -> IntervalSet {
        self.intersect(&IntervalSet::single(lo, hi))
    }

    /// The interval that contains `z` up to `tol`, preferring the one reaching furthest right.
    pub fn component_near(&self, z: f64, tol: f64) -> Option<(f64, f64)> {
        self.intervals
            .iter()
            .copied()
            .filter(|&(lo, hi)| lo - tol <= z && z <= hi + tol)
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }

    /// Total length; infinite for unbounded sets.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(lo, hi)| hi - lo).sum()
    }
}

/// Solution set of the conjunction of all inequalities.
pub fn solve_quad_system(system: &[QuadInequality], tolerance: f64) -> IntervalSet {
    let mut acc = IntervalSet::full();
    for ineq in system {
        acc = acc.intersect(&ineq.solve(tolerance));
        if acc.is_empty() {
            break;
        }
    }
    acc
}

/// The connected component of the system's solution set that contains `z0`.
///
/// Each inequality contributes the piece of its own solution set around `z0`
/// (within `z_tol`); the component is their intersection. Returns `None`
/// when some inequality is violated at `z0` beyond the tolerance.
pub fn local_component(
    system: &[QuadInequality],
    tolerance: f64,
    z0: f64,
    z_tol: f64,
) -> Option<(f64, f64)> {
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for ineq in system {
        let (l, h) = ineq.solve(tolerance).component_near(z0, z_tol)?;
        lo = lo.max(l);
        hi = hi.min(h);
    }
    Some((lo, hi))
}

/// `(aᵀLa, aᵀLb + bᵀLa, bᵀLb)` so that `(a + bz)ᵀ L (a + bz) = w + r z + o z²`.
pub fn quad_form_coeffs(a: &[f64], b: &[f64], l: &Matrix) -> Result<(f64, f64, f64)> {
    let n = l.rows();
    if l.cols() != n || a.len() != n || b.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "quadratic form of a {}x{} matrix with vectors of length {} and {}",
            n,
            l.cols(),
            a.len(),
            b.len()
        )));
    }
    let la = l.mat_vec(a)?;
    let lb = l.mat_vec(b)?;
    Ok((dot(a, &la), dot(a, &lb) + dot(b, &la), dot(b, &lb)))
}
