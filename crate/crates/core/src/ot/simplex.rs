//! Primal transportation simplex on the spanning-tree basis.
//!
//! Marginals `1/n_s` and `1/n_t` are scaled by `n_s·n_t` so that every basic
//! flow is an integer: row supplies are `n_t`, column demands `n_s`. Degenerate
//! pivots are therefore detected exactly and Bland's rule is applied without
//! tolerance on the primal side.
//!
//! Costs are quadratics in the line parameter. Pricing at `z0` uses the sign of
//! each reduced cost on `[z0, z0 + ε)`, which makes the returned basis the one
//! that stays optimal immediately to the right of `z0`. With constant costs this
//! is plain value pricing.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::numkernel::Quadratic;

/// Relative tolerance on reduced-cost values and slopes during pricing.
pub(crate) const PRICING_TOL: f64 = 1e-11;

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BasisState {
    pub m: usize,
    pub n: usize,
    /// Integer flow per cell, scaled by `m·n`; zero for nonbasic cells.
    pub flow: Vec<i64>,
    pub basic: Vec<bool>,
}

impl BasisState {
    /// North-west corner start; always a spanning tree with `m + n - 1` cells.
    pub fn northwest(m: usize, n: usize) -> Self {
        let mut flow = vec![0i64; m * n];
        let mut basic = vec![false; m * n];
        let (mut i, mut j) = (0usize, 0usize);
        let mut supply = n as i64;
        let mut demand = m as i64;
        loop {
            let x = supply.min(demand);
            flow[i * n + j] = x;
            basic[i * n + j] = true;
            supply -= x;
            demand -= x;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if supply == 0 && i < m - 1 {
                i += 1;
                supply = n as i64;
            } else {
                j += 1;
                demand = m as i64;
            }
        }
        Self { m, n, flow, basic }
    }

    pub fn basis_cells(&self) -> Vec<usize> {
        (0..self.m * self.n).filter(|&c| self.basic[c]).collect()
    }

    /// Tree adjacency: node `i < m` is a row, node `m + j` a column; each entry is `(neighbour, cell)`.
    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let (m, n) = (self.m, self.n);
        let mut adj = vec![Vec::new(); m + n];
        for cell in 0..m * n {
            if self.basic[cell] {
                let (i, j) = (cell / n, cell % n);
                adj[i].push((m + j, cell));
                adj[m + j].push((i, cell));
            }
        }
        adj
    }

    /// Dual potentials `(u, v)` with `u_i + v_j = c_ij` on the tree, `u_0 = 0`.
    pub fn potentials(&self, cost: &[Quadratic]) -> Result<(Vec<Quadratic>, Vec<Quadratic>)> {
        let (m, n) = (self.m, self.n);
        let adj = self.adjacency();
        let mut pot = vec![Quadratic::ZERO; m + n];
        let mut seen = vec![false; m + n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(node) = queue.pop_front() {
            for &(next, cell) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    reached += 1;
                    pot[next] = cost[cell].sub(&pot[node]);
                    queue.push_back(next);
                }
            }
        }
        if reached != m + n {
            return Err(Error::Invariant(
                "transport basis is not a spanning tree (singular basis matrix)".into(),
            ));
        }
        let v = pot.split_off(m);
        Ok((pot, v))
    }

    /// Reduced costs `c_ij - u_i - v_j` of every nonbasic cell, in cell order.
    pub fn reduced_costs(&self, cost: &[Quadratic]) -> Result<Vec<(usize, Quadratic)>> {
        let (u, v) = self.potentials(cost)?;
        let n = self.n;
        Ok((0..self.m * n)
            .filter(|&c| !self.basic[c])
            .map(|c| (c, cost[c].sub(&u[c / n]).sub(&v[c % n])))
            .collect())
    }

    /// Cells on the tree path from row `i` to column `j`, starting next to row `i`.
    fn tree_path(&self, i: usize, j: usize) -> Vec<usize> {
        let m = self.m;
        let adj = self.adjacency();
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; m + self.n];
        let mut seen = vec![false; m + self.n];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        let target = m + j;
        while let Some(node) = queue.pop_front() {
            if node == target {
                break;
            }
            for &(next, cell) in &adj[node] {
                if !seen[next] {
                    seen[next] = true;
                    parent[next] = Some((node, cell));
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = target;
        while let Some((prev, cell)) = parent[node] {
            path.push(cell);
            node = prev;
        }
        path.reverse();
        path
    }

    /// Runs Bland-rule pivots until no nonbasic cell has a negative reduced cost
    /// on `[z0, z0 + ε)`. Returns the number of pivots.
    pub fn optimize(&mut self, cost: &[Quadratic], z0: f64) -> Result<usize> {
        let scale = cost
            .iter()
            .fold(1.0f64, |acc, c| acc.max(c.eval(z0).abs()));
        let max_pivots = 200 * (self.m * self.n + self.m + self.n) + 1000;
        let n = self.n;
        for pivots in 0..max_pivots {
            let reduced = self.reduced_costs(cost)?;
            let entering = reduced
                .iter()
                .find(|(_, d)| d.right_sign(z0, scale, PRICING_TOL) == Ordering::Less)
                .map(|&(c, _)| c);
            let Some(enter) = entering else {
                return Ok(pivots);
            };
            let path = self.tree_path(enter / n, enter % n);
            debug_assert!(path.len() % 2 == 1);
            // Even positions lose flow, odd positions gain it.
            let mut theta = i64::MAX;
            let mut leave = usize::MAX;
            for &cell in path.iter().step_by(2) {
                let f = self.flow[cell];
                if f < theta || (f == theta && cell < leave) {
                    theta = f;
                    leave = cell;
                }
            }
            for (k, &cell) in path.iter().enumerate() {
                if k % 2 == 0 {
                    self.flow[cell] -= theta;
                } else {
                    self.flow[cell] += theta;
                }
            }
            self.flow[enter] = theta;
            self.basic[enter] = true;
            self.basic[leave] = false;
            debug_assert_eq!(self.flow[leave], 0);
        }
        Err(Error::Invariant(format!(
            "transport simplex did not terminate within {max_pivots} pivots"
        )))
    }
}
