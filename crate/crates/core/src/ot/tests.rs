use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;

fn random_domain(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DomainData {
    let x: Vec<f64> = (0..n * p).map(|_| rng.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    DomainData::new(Matrix::from_vec(n, p, x).unwrap(), y).unwrap()
}

/// Transportation constraint matrix `H` with its last (redundant) row dropped.
fn constraint_matrix(m: usize, n: usize) -> Vec<Vec<f64>> {
    let mut h = vec![vec![0.0; m * n]; m + n];
    for i in 0..m {
        for j in 0..n {
            h[i][i * n + j] = 1.0;
            h[m + j][i * n + j] = 1.0;
        }
    }
    h.pop();
    h
}

/// Dense Gaussian elimination with partial pivoting; `None` if singular.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Minimum cost over every basic feasible solution, by enumerating bases.
fn vertex_enumeration_min(m: usize, n: usize, cost: &[f64]) -> f64 {
    let h = constraint_matrix(m, n);
    let mut rhs = vec![1.0 / m as f64; m];
    rhs.extend(vec![1.0 / n as f64; n]);
    rhs.pop();
    let mut best = f64::INFINITY;
    for basis in combinations(m * n, m + n - 1) {
        let a: Vec<Vec<f64>> = h
            .iter()
            .map(|row| basis.iter().map(|&c| row[c]).collect())
            .collect();
        if let Some(x) = dense_solve(a, rhs.clone()) {
            if x.iter().all(|&v| v >= -1e-12) {
                let obj: f64 = basis.iter().zip(&x).map(|(&c, v)| cost[c] * v).sum();
                best = best.min(obj);
            }
        }
    }
    best
}

#[test]
fn cost_vector_examples() {
    let one = DomainData::new(Matrix::from_rows(&[vec![0.3, 1.0]]).unwrap(), vec![0.0]).unwrap();
    let (c, _) = cost_vector(&one, &one).unwrap();
    assert_eq!(c, vec![0.0]);

    let s = DomainData::new(Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap(), vec![3.0, 5.0]).unwrap();
    let t = DomainData::new(Matrix::from_rows(&[vec![0.0], vec![2.0]]).unwrap(), vec![0.0, 0.0]).unwrap();
    let (c, theta) = cost_vector(&s, &t).unwrap();
    assert_eq!(c, vec![0.0, 4.0, 1.0, 1.0]);
    assert_eq!(theta.to_matrix().mat_vec(&[1.0, 2.0, 3.0, 4.0]).unwrap(), theta.apply(&[1.0, 2.0, 3.0, 4.0]));

    let theta = PairDifference { n_s: 2, n_t: 1 };
    assert_eq!(theta.apply(&[3.0, 5.0, 1.0]), vec![2.0, 4.0]);

    let wide = DomainData::new(Matrix::zeros(1, 3), vec![0.0]).unwrap();
    assert!(cost_vector(&one, &wide).is_err());
}

#[test]
fn single_pair_plan_is_forced() {
    let sol = solve_transport(&[2.5], PairDifference { n_s: 1, n_t: 1 }, &[1.0, -1.0]).unwrap();
    assert_eq!(sol.plan, Matrix::from_rows(&[vec![1.0]]).unwrap());
    assert_eq!(sol.basis, vec![0]);
}

#[test]
fn two_by_two_diagonal_cost_gives_half_identity() {
    let theta = PairDifference { n_s: 2, n_t: 2 };
    let sol = solve_transport(&[0.0, 1.0, 1.0, 0.0], theta, &[0.0; 4]).unwrap();
    let expect = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
    assert_eq!(sol.plan, expect);
    assert_eq!(sol.basis.len(), 3);
}

#[test]
fn simplex_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let shapes = [(1, 3), (2, 2), (2, 3), (3, 2), (3, 3), (2, 5), (4, 3), (3, 4), (6, 2), (2, 6), (1, 12), (12, 1)];
    for trial in 0..60 {
        let (m, n) = shapes[trial % shapes.len()];
        let s = random_domain(&mut rng, m, 2);
        let t = random_domain(&mut rng, n, 2);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let y = stack_response(&s, &t);
        let sol = solve_transport(&c, theta, &y).unwrap();
        let full: Vec<f64> = c.iter().zip(theta.apply(&y)).map(|(c, d)| c + d * d).collect();
        let oracle = vertex_enumeration_min(m, n, &full);
        assert!((sol.objective(&full) - oracle).abs() < 1e-9, "trial {trial}: {} vs {oracle}", sol.objective(&full));
        assert_eq!(sol.basis.len(), m + n - 1);
        for i in 0..m {
            let row: f64 = sol.plan.row(i).iter().sum();
            assert!((row - 1.0 / m as f64).abs() < 1e-10);
        }
        for j in 0..n {
            let col: f64 = sol.plan.column(j).iter().sum();
            assert!((col - 1.0 / n as f64).abs() < 1e-10);
        }
        for cell in 0..m * n {
            if !sol.basis.contains(&cell) {
                assert_eq!(sol.plan.as_slice()[cell], 0.0);
            }
            assert!(sol.plan.as_slice()[cell] >= 0.0);
        }
    }
}

#[test]
fn transform_source_examples() {
    let target = DomainData::new(
        Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -4.0]]).unwrap(),
        vec![0.5, 1.5],
    )
    .unwrap();
    let half = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
    assert_eq!(transform_source(&half, &target).unwrap(), target);

    let mixing = Matrix::from_rows(&[vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
    let out = transform_source(&mixing, &target).unwrap();
    for i in 0..2 {
        assert_eq!(out.x.row(i), &[2.0, -1.0]);
        assert_eq!(out.y[i], 1.0);
    }

    let single = DomainData::new(Matrix::from_rows(&[vec![7.0]]).unwrap(), vec![2.0]).unwrap();
    let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
    assert_eq!(transform_source(&one, &single).unwrap(), single);
}

#[test]
fn omega_structure() {
    let om = omega(&Matrix::from_rows(&[vec![1.0]]).unwrap());
    assert_eq!(om.to_matrix(), Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let s = random_domain(&mut rng, 6, 3);
        let t = random_domain(&mut rng, 4, 3);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let y = stack_response(&s, &t);
        let sol = solve_transport(&c, theta, &y).unwrap();
        let om = omega(&sol.plan);
        let dense = om.to_matrix();
        // Top block of Ω y is the transported source response.
        let oy = om.apply(&y);
        let tr = transform_source(&sol.plan, &t).unwrap();
        for i in 0..6 {
            assert!((oy[i] - tr.y[i]).abs() < 1e-12);
        }
        assert!(dense.mat_vec(&y).unwrap().iter().zip(&oy).all(|(a, b)| (a - b).abs() < 1e-12));
        // Ω² = Ω, checked numerically.
        let sq = dense.matmul(&dense).unwrap();
        assert!(sq.sub(&dense).unwrap().max_abs() < 1e-12);
        let x = stack_design(&s, &t).unwrap();
        let ox = om.apply_design(&x).unwrap();
        assert!(ox.sub(&dense.matmul(&x).unwrap()).unwrap().max_abs() < 1e-12);
    }
}

#[test]
fn tree_reduced_costs_match_dense_basis_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for &(m, n) in &[(3, 2), (4, 3), (5, 5), (2, 6)] {
        let s = random_domain(&mut rng, m, 2);
        let t = random_domain(&mut rng, n, 2);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let y = stack_response(&s, &t);
        let sol = solve_transport(&c, theta, &y).unwrap();
        let full: Vec<f64> = c.iter().zip(theta.apply(&y)).map(|(c, d)| c + d * d).collect();
        let cost: Vec<Quadratic> = full.iter().map(|&v| Quadratic::new(v, 0.0, 0.0)).collect();
        let tree = sol.state.reduced_costs(&cost).unwrap();
        // Dense route: duals y solve H_Bᵀ y = c_B, reduced cost c_N - H_Nᵀ y.
        let h = constraint_matrix(m, n);
        let at: Vec<Vec<f64>> = sol
            .basis
            .iter()
            .map(|&cell| h.iter().map(|row| row[cell]).collect())
            .collect();
        let cb: Vec<f64> = sol.basis.iter().map(|&cell| full[cell]).collect();
        let duals = dense_solve(at, cb).expect("basis matrix must be nonsingular");
        for (cell, d) in tree {
            let hn: f64 = h.iter().zip(&duals).map(|(row, y)| row[cell] * y).sum();
            assert!((full[cell] - hn - d.w).abs() < 1e-9);
            assert!(d.w >= -1e-9, "optimal basis must have nonnegative reduced costs");
        }
    }
}

fn line_instance(rng: &mut ChaCha8Rng, m: usize, n: usize) -> (DomainData, DomainData, Vec<f64>, Vec<f64>) {
    let s = random_domain(rng, m, 2);
    let t = random_domain(rng, n, 2);
    let a = stack_response(&s, &t);
    let mut b = vec![0.0; m];
    b.extend((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    (s, t, a, b)
}

#[test]
fn trivial_region_for_single_pair() {
    let s = DomainData::new(Matrix::from_rows(&[vec![1.0]]).unwrap(), vec![0.2]).unwrap();
    let t = DomainData::new(Matrix::from_rows(&[vec![0.0]]).unwrap(), vec![-0.4]).unwrap();
    let (c, theta) = cost_vector(&s, &t).unwrap();
    let sol = solve_transport(&c, theta, &stack_response(&s, &t)).unwrap();
    let region = region_zu(&sol, &[0.2, -0.4], &[0.0, 1.0]).unwrap();
    assert_eq!(region, IntervalSet::full());
}

#[test]
fn region_contains_its_own_point_and_is_basis_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for trial in 0..20 {
        let (s, t, a, b) = line_instance(&mut rng, 5, 3);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let z0: f64 = rng.random_range(-2.0..2.0);
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b * z0).collect();
        let sol = solve_transport(&c, theta, &y).unwrap();
        let region = region_zu(&sol, &a, &b).unwrap();
        assert!(region.component_near(z0, 1e-9).is_some(), "trial {trial}: z0 outside its region");
        let (lo, hi) = region.component_near(z0, 1e-9).unwrap();
        let line = LineCost::new(&c, theta, &a, &b).unwrap();
        for k in 0..50 {
            let (l, h) = (lo.max(z0 - 50.0), hi.min(z0 + 50.0));
            let z = l + (h - l) * (k as f64 + 0.5) / 50.0;
            let warm = line.solve_at(z, Some(&sol)).unwrap();
            assert_eq!(warm.basis, sol.basis, "trial {trial}: basis changed inside region at {z}");
            let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b * z).collect();
            let cold = solve_transport(&c, theta, &y).unwrap();
            assert_eq!(cold.plan, sol.plan, "trial {trial}: plan changed inside region at {z}");
        }
    }
}

#[test]
fn region_endpoints_match_grid_resolve_on_two_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for trial in 0..10 {
        let (s, t, a, b) = line_instance(&mut rng, 2, 2);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let sol = solve_transport(&c, theta, &a).unwrap();
        let region = region_zu(&sol, &a, &b).unwrap();
        let (lo, hi) = (-10.0, 10.0);
        let steps = 10_000;
        for k in 0..=steps {
            let z = lo + (hi - lo) * k as f64 / steps as f64;
            if region.distance_to_boundary(z) < 1e-6 {
                continue;
            }
            let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b * z).collect();
            let at = solve_transport(&c, theta, &y).unwrap();
            // 2x2 vertices are degenerate, so compare plans rather than bases.
            assert_eq!(
                at.plan == sol.plan,
                region.contains(z),
                "trial {trial}, z = {z}, region {:?}",
                region
            );
        }
    }
}

#[test]
fn boundary_is_sharp_for_nondegenerate_exits() {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut checked = 0;
    for _ in 0..20 {
        let (s, t, a, b) = line_instance(&mut rng, 4, 3);
        let (c, theta) = cost_vector(&s, &t).unwrap();
        let sol = solve_transport(&c, theta, &a).unwrap();
        let region = region_zu(&sol, &a, &b).unwrap();
        let (_, hi) = region.component_near(0.0, 1e-9).unwrap();
        if !hi.is_finite() {
            continue;
        }
        let z = hi + 1e-4;
        let y: Vec<f64> = a.iter().zip(&b).map(|(a, b)| a + b * z).collect();
        let outside = solve_transport(&c, theta, &y).unwrap();
        let line = LineCost::new(&c, theta, &a, &b).unwrap();
        let cost_out = line.at(z);
        // Either a different basis, or a degenerate tie with equal objective.
        if outside.basis == sol.basis {
            panic!("basis unchanged beyond region endpoint {hi}");
        }
        assert!(outside.objective(&cost_out) <= sol.objective(&cost_out) + 1e-12);
        checked += 1;
    }
    assert!(checked > 5);
}
