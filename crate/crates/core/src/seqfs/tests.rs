use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::numkernel::IntervalSet;
use crate::ot::{cost_vector, omega, solve_transport, stack_design, stack_response, DomainData, OmegaMatrix};

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
    Matrix::from_vec(n, p, (0..n * p).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// RSS through the normal equations, solved by Gaussian elimination.
fn normal_equation_rss(x: &Matrix, y: &[f64], model: &[usize]) -> f64 {
    let k = model.len();
    let mut g = vec![vec![0.0; k + 1]; k];
    for (r, &i) in model.iter().enumerate() {
        for (c, &j) in model.iter().enumerate() {
            g[r][c] = (0..x.rows()).map(|t| x.get(t, i) * x.get(t, j)).sum();
        }
        g[r][k] = (0..x.rows()).map(|t| x.get(t, i) * y[t]).sum();
    }
    for col in 0..k {
        let piv = (col..k).max_by(|&a, &b| g[a][col].abs().total_cmp(&g[b][col].abs())).unwrap();
        g.swap(col, piv);
        for r in 0..k {
            if r != col {
                let f = g[r][col] / g[col][col];
                for c in col..=k {
                    g[r][c] -= f * g[col][c];
                }
            }
        }
    }
    let beta: Vec<f64> = (0..k).map(|r| g[r][k] / g[r][r]).collect();
    (0..x.rows())
        .map(|t| {
            let fit: f64 = model.iter().zip(&beta).map(|(&j, b)| x.get(t, j) * b).sum();
            (y[t] - fit).powi(2)
        })
        .sum()
}

/// Greedy oracle scoring every candidate afresh at every step.
fn greedy_oracle(x: &Matrix, y: &[f64], k: usize, backward: bool) -> Vec<usize> {
    let p = x.cols();
    let mut model: Vec<usize> = if backward { (0..p).collect() } else { Vec::new() };
    let mut picks = Vec::new();
    let steps = if backward { p - k } else { k };
    for _ in 0..steps {
        let candidates: Vec<usize> = if backward {
            model.clone()
        } else {
            (0..p).filter(|j| !model.contains(j)).collect()
        };
        let scored: Vec<(usize, f64)> = candidates
            .iter()
            .map(|&j| {
                let mut m: Vec<usize> = if backward {
                    model.iter().copied().filter(|&c| c != j).collect()
                } else {
                    let mut m = model.clone();
                    m.push(j);
                    m
                };
                m.sort_unstable();
                (j, normal_equation_rss(x, y, &m))
            })
            .collect();
        let best = scored
            .iter()
            .fold(scored[0], |acc, &s| if s.1 < acc.1 { s } else { acc });
        picks.push(best.0);
        if backward {
            model.retain(|&c| c != best.0);
        } else {
            model.push(best.0);
        }
    }
    picks
}

fn orthogonal_design(n: usize, p: usize) -> Matrix {
    let mut x = Matrix::zeros(n, p);
    for j in 0..p {
        x.set(j, j, 1.0);
    }
    x
}

#[test]
fn forward_exact_fit_selects_that_column() {
    let x = orthogonal_design(6, 4);
    let y = (0..6).map(|t| 2.0 * x.get(t, 3)).collect::<Vec<_>>();
    let trace = forward_select(&x, &y, 1).unwrap();
    assert_eq!(trace.final_set, vec![3]);
    assert_eq!(trace.steps, vec![vec![3]]);
}

#[test]
fn forward_full_size_selects_everything() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = gaussian_matrix(&mut rng, 9, 4);
    let y = gaussian_vec(&mut rng, 9);
    let trace = forward_select(&x, &y, 4).unwrap();
    assert_eq!(trace.final_set, vec![0, 1, 2, 3]);
    for w in trace.steps.windows(2) {
        assert_eq!(w[1].len(), w[0].len() + 1);
        assert!(w[0].iter().all(|j| w[1].contains(j)));
    }
}

#[test]
fn forward_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let x = gaussian_matrix(&mut rng, 8, 4);
        let y = gaussian_vec(&mut rng, 8);
        let trace = forward_select(&x, &y, 2).unwrap();
        assert_eq!(trace.picks, greedy_oracle(&x, &y, 2, false));
    }
}

#[test]
fn backward_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = gaussian_matrix(&mut rng, 7, 3);
    let y = gaussian_vec(&mut rng, 7);
    let trace = backward_select(&x, &y, 3).unwrap();
    assert_eq!(trace.final_set, vec![0, 1, 2]);
    assert!(trace.picks.is_empty());
    assert_eq!(trace.steps.len(), 1);

    let x = orthogonal_design(6, 4);
    let y = (0..6).map(|t| 2.0 * x.get(t, 1)).collect::<Vec<_>>();
    assert_eq!(backward_select(&x, &y, 1).unwrap().final_set, vec![1]);
}

#[test]
fn backward_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..50 {
        let x = gaussian_matrix(&mut rng, 10, 4);
        let y = gaussian_vec(&mut rng, 10);
        let trace = backward_select(&x, &y, 2).unwrap();
        assert_eq!(trace.picks, greedy_oracle(&x, &y, 2, true));
        for w in trace.steps.windows(2) {
            assert_eq!(w[1].len() + 1, w[0].len());
        }
    }
}

#[test]
fn selection_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = gaussian_matrix(&mut rng, 6, 3);
    let y = gaussian_vec(&mut rng, 6);
    assert!(matches!(forward_select(&x, &y, 0), Err(Error::Config(_))));
    assert!(matches!(forward_select(&x, &y, 4), Err(Error::Config(_))));

    // Column 2 duplicates column 0: the third forward step has no admissible candidate.
    let mut dup = x.clone();
    for t in 0..6 {
        dup.set(t, 2, x.get(t, 0));
    }
    match forward_select(&dup, &y, 3) {
        Err(Error::InsufficientFeatures { requested, admissible }) => {
            assert_eq!((requested, admissible), (3, 2));
        }
        other => panic!("expected insufficient features, got {other:?}"),
    }
    assert!(forward_select(&dup, &y, 2).is_ok());
    assert!(matches!(backward_select(&dup, &y, 1), Err(Error::RankDeficient { .. })));

    let wide = gaussian_matrix(&mut rng, 3, 5);
    let y3 = gaussian_vec(&mut rng, 3);
    assert!(matches!(backward_select(&wide, &y3, 2), Err(Error::RankDeficient { .. })));
}

#[test]
fn criterion_score_examples() {
    let x = orthogonal_design(6, 3);
    let y: Vec<f64> = (0..6).map(|t| x.get(t, 0) - 3.0 * x.get(t, 2)).collect();
    let sigma = BlockCovariance::identity(2, 4);
    let aic = criterion_score(CriterionKind::Aic, &[0, 2], &x, &y, &sigma, 6).unwrap();
    assert!((aic - 4.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian_matrix(&mut rng, 12, 4);
    let y = gaussian_vec(&mut rng, 12);
    let model = [1, 3];
    let aic = criterion_score(CriterionKind::Aic, &model, &x, &y, &sigma_for(12), 12).unwrap();
    let bic = criterion_score(CriterionKind::Bic, &model, &x, &y, &sigma_for(12), 12).unwrap();
    assert!((bic - aic - (12f64.ln() - 2.0) * 2.0).abs() < 1e-10);
}

fn sigma_for(n: usize) -> BlockCovariance {
    BlockCovariance::per_domain(n / 2, 1.5, n - n / 2, 0.7).unwrap()
}

#[test]
fn criterion_score_matches_independent_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let n = 12;
        let x = gaussian_matrix(&mut rng, n, 4);
        let y = gaussian_vec(&mut rng, n);
        let sigma = sigma_for(n);
        let var: Vec<f64> = (0..n).map(|t| if t < n / 2 { 1.5 } else { 0.7 }).collect();
        for model in [vec![0], vec![1, 2], vec![0, 2, 3]] {
            // Residual from the normal equations, weighted by the inverse variances.
            let k = model.len();
            let rss = normal_equation_rss(&x, &y, &model);
            let basis = ColumnBasis::new(&x, &model).unwrap();
            let beta = basis.coefficients(&y);
            let weighted: f64 = (0..n)
                .map(|t| {
                    let fit: f64 = model.iter().zip(&beta).map(|(&j, b)| x.get(t, j) * b).sum();
                    (y[t] - fit).powi(2) / var[t]
                })
                .sum();
            let aic = criterion_score(CriterionKind::Aic, &model, &x, &y, &sigma, n).unwrap();
            let bic = criterion_score(CriterionKind::Bic, &model, &x, &y, &sigma, n).unwrap();
            let adj = criterion_score(CriterionKind::AdjR2, &model, &x, &y, &sigma, n).unwrap();
            assert!((aic - (weighted + 2.0 * k as f64)).abs() < 1e-9);
            assert!((bic - (weighted + (n as f64).ln() * k as f64)).abs() < 1e-9);
            assert!((adj - rss / (n - k - 1) as f64).abs() < 1e-9);
        }
    }
    let x = gaussian_matrix(&mut rng, 4, 3);
    let y = gaussian_vec(&mut rng, 4);
    let sigma = BlockCovariance::identity(2, 2);
    assert!(matches!(
        criterion_score(CriterionKind::AdjR2, &[0, 1, 2], &x, &y, &sigma, 4),
        Err(Error::Config(_))
    ));
}

#[test]
fn single_feature_always_picks_size_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x = gaussian_matrix(&mut rng, 6, 1);
    let y = gaussian_vec(&mut rng, 6);
    let sigma = BlockCovariance::identity(3, 3);
    for kind in [CriterionKind::Aic, CriterionKind::Bic, CriterionKind::AdjR2] {
        for dir in [Direction::Forward, Direction::Backward] {
            let sel = select_with_criterion(kind, &x, &y, &sigma, dir).unwrap();
            assert_eq!(sel.k_hat, 1);
            assert_eq!(sel.trace.final_set, vec![0]);
        }
    }
}

#[test]
fn bic_on_noise_matches_exhaustive_scoring() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 200;
    let sigma = BlockCovariance::identity(150, 50);
    let mut sizes = Vec::new();
    for _ in 0..20 {
        let x = gaussian_matrix(&mut rng, n, 5);
        let y = gaussian_vec(&mut rng, n);
        for dir in [Direction::Forward, Direction::Backward] {
            let sel = select_with_criterion(CriterionKind::Bic, &x, &y, &sigma, dir).unwrap();
            // Oracle: score every model on the path through the normal equations.
            let scores: Vec<f64> = (1..=5)
                .map(|k| {
                    let m = sel.path.model_of_size(k).unwrap();
                    normal_equation_rss(&x, &y, m) + (n as f64).ln() * k as f64
                })
                .collect();
            let best = (1..=5)
                .fold(1, |b, k| if scores[k - 1] < scores[b - 1] { k } else { b });
            assert_eq!(sel.k_hat, best);
            assert_eq!(sel.trace.final_set, *sel.path.model_of_size(best).unwrap());
            sizes.push(sel.k_hat);
        }
    }
    let small = sizes.iter().filter(|&&k| k <= 2).count();
    assert!(small * 10 >= sizes.len() * 9, "sizes {sizes:?}");
}

#[test]
fn aic_recovers_two_signal_features() {
    // Both features carry signal; AIC must not drop either.
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 40;
    let sigma = BlockCovariance::identity(30, 10);
    let mut hits = 0;
    let trials = 200;
    for _ in 0..trials {
        let mut x = Matrix::zeros(n, 2);
        for t in 0..n {
            x.set(t, t % 2, 1.0);
        }
        let eps = gaussian_vec(&mut rng, n);
        let y: Vec<f64> = (0..n).map(|t| 1.0 * x.get(t, 0) + 1.0 * x.get(t, 1) + eps[t]).collect();
        let sel = select_with_criterion(CriterionKind::Aic, &x, &y, &sigma, Direction::Forward).unwrap();
        if sel.k_hat == 2 {
            hits += 1;
        }
    }
    assert!(hits * 100 >= trials * 95, "{hits}/{trials}");
}

#[test]
fn adjusted_r2_surrogate_picks_literal_maximiser() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 15;
    let sigma = BlockCovariance::identity(10, 5);
    for _ in 0..50 {
        let x = gaussian_matrix(&mut rng, n, 4);
        let mut y = gaussian_vec(&mut rng, n);
        for (t, v) in y.iter_mut().enumerate() {
            *v += 0.8 * x.get(t, 1);
        }
        let mean = y.iter().sum::<f64>() / n as f64;
        let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        for dir in [Direction::Forward, Direction::Backward] {
            let sel = select_with_criterion(CriterionKind::AdjR2, &x, &y, &sigma, dir).unwrap();
            let adj = |k: usize| {
                let rss = normal_equation_rss(&x, &y, sel.path.model_of_size(k).unwrap());
                1.0 - (rss / (n - k - 1) as f64) / (tss / (n - 1) as f64)
            };
            let best = (1..=4).fold(1, |b, k| if adj(k) > adj(b) { k } else { b });
            assert_eq!(sel.k_hat, best);
        }
    }
}

// Line-parametric regions.

struct LineInstance {
    omega: OmegaMatrix,
    x: Matrix,
    a: Vec<f64>,
    b: Vec<f64>,
    sigma: BlockCovariance,
}

fn line_instance(rng: &mut ChaCha8Rng, ns: usize, nt: usize, p: usize) -> LineInstance {
    let src = DomainData::new(gaussian_matrix(rng, ns, p), gaussian_vec(rng, ns)).unwrap();
    let tgt = DomainData::new(gaussian_matrix(rng, nt, p), gaussian_vec(rng, nt)).unwrap();
    let (c, theta) = cost_vector(&src, &tgt).unwrap();
    let sol = solve_transport(&c, theta, &stack_response(&src, &tgt)).unwrap();
    LineInstance {
        omega: omega(&sol.plan),
        x: stack_design(&src, &tgt).unwrap(),
        a: gaussian_vec(rng, ns + nt),
        b: gaussian_vec(rng, ns + nt).iter().map(|v| 0.3 * v).collect(),
        sigma: BlockCovariance::per_domain(ns, 1.3, nt, 0.8).unwrap(),
    }
}

impl LineInstance {
    fn data_at(&self, z: f64) -> (Matrix, Vec<f64>) {
        let y: Vec<f64> = self.a.iter().zip(&self.b).map(|(a, b)| a + b * z).collect();
        (self.omega.apply_design(&self.x).unwrap(), self.omega.apply(&y))
    }

    fn context(&self) -> LineContext {
        LineContext::new(&self.omega, &self.x, &self.a, &self.b, Some(&self.sigma)).unwrap()
    }
}

fn near_endpoint(region: &IntervalSet, z: f64, tol: f64) -> bool {
    region
        .intervals()
        .iter()
        .any(|&(lo, hi)| (z - lo).abs() < tol || (z - hi).abs() < tol)
}

/// Compares region membership with an oracle predicate on a dense grid.
fn check_grid(region: &IntervalSet, oracle: impl Fn(f64) -> bool, range: f64, points: usize) -> usize {
    let mut checked = 0;
    for i in 0..points {
        let z = -range + 2.0 * range * i as f64 / (points - 1) as f64;
        if near_endpoint(region, z, 1e-6) {
            continue;
        }
        assert_eq!(region.contains(z), oracle(z), "disagreement at z = {z}, region {region:?}");
        checked += 1;
    }
    checked
}

#[test]
fn trivial_regions_are_the_whole_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let inst = line_instance(&mut rng, 4, 3, 1);
    let trace = SelectionTrace::from_path(Direction::Forward, 1, vec![0], Criterion::Fixed(1));
    let r = region_zv_forward(&trace, &inst.omega, &inst.x, &inst.a, &inst.b).unwrap();
    assert_eq!(r, IntervalSet::full());
    let path = trace.clone();
    let r = region_z_criterion(CriterionKind::Aic, &path, 1, &inst.omega, &inst.x, &inst.a, &inst.b, &inst.sigma)
        .unwrap();
    assert_eq!(r, IntervalSet::full());

    let inst = line_instance(&mut rng, 4, 3, 3);
    let trace = SelectionTrace::from_path(Direction::Backward, 3, vec![], Criterion::Fixed(3));
    let r = region_zv_backward(&trace, &inst.omega, &inst.x, &inst.a, &inst.b).unwrap();
    assert_eq!(r, IntervalSet::full());
}

#[test]
fn line_selection_matches_data_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let inst = line_instance(&mut rng, 6, 4, 4);
        let mut ctx = inst.context();
        for z in [-2.0, -0.3, 0.0, 0.7, 3.1] {
            let (xt, y) = inst.data_at(z);
            for dir in [Direction::Forward, Direction::Backward] {
                let line = ctx.select(dir, Criterion::Fixed(2), z).unwrap();
                assert_eq!(line.trace, select(&xt, &y, dir, 2).unwrap());
                for kind in [CriterionKind::Aic, CriterionKind::Bic, CriterionKind::AdjR2] {
                    let line = ctx.select(dir, kind.into(), z).unwrap();
                    let data = select_with_criterion(kind, &xt, &y, &inst.sigma, dir).unwrap();
                    assert_eq!(line.k_hat, data.k_hat);
                    assert_eq!(line.trace, data.trace);
                    assert_eq!(line.path.picks, data.path.picks);
                }
            }
        }
    }
}

#[test]
fn forward_region_matches_grid_reselection() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let inst = line_instance(&mut rng, 7, 4, 3);
        let z0 = 0.4;
        let (xt, y) = inst.data_at(z0);
        let trace = forward_select(&xt, &y, 2).unwrap();
        let region = region_zv_forward(&trace, &inst.omega, &inst.x, &inst.a, &inst.b).unwrap();
        assert!(region.contains(z0));
        let checked = check_grid(
            &region,
            |z| {
                let (xt, y) = inst.data_at(z);
                forward_select(&xt, &y, 2).unwrap().picks == trace.picks
            },
            20.0,
            10_000,
        );
        assert!(checked > 9_900);
    }
}

#[test]
fn backward_region_matches_grid_reselection() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..5 {
        let inst = line_instance(&mut rng, 8, 5, 4);
        let z0 = -0.2;
        let (xt, y) = inst.data_at(z0);
        let trace = backward_select(&xt, &y, 2).unwrap();
        let region = region_zv_backward(&trace, &inst.omega, &inst.x, &inst.a, &inst.b).unwrap();
        assert!(region.contains(z0));
        check_grid(
            &region,
            |z| {
                let (xt, y) = inst.data_at(z);
                backward_select(&xt, &y, 2).unwrap().picks == trace.picks
            },
            20.0,
            10_000,
        );
    }
}

#[test]
fn criterion_regions_match_joint_grid_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for kind in [CriterionKind::Aic, CriterionKind::Bic, CriterionKind::AdjR2] {
        for dir in [Direction::Forward, Direction::Backward] {
            let inst = line_instance(&mut rng, 7, 4, 3);
            let z0 = 0.1;
            let (xt, y) = inst.data_at(z0);
            let sel = select_with_criterion(kind, &xt, &y, &inst.sigma, dir).unwrap();
            let path_region = match dir {
                Direction::Forward => region_zv_forward(&sel.path, &inst.omega, &inst.x, &inst.a, &inst.b),
                Direction::Backward => region_zv_backward(&sel.path, &inst.omega, &inst.x, &inst.a, &inst.b),
            }
            .unwrap();
            let crit = region_z_criterion(
                kind, &sel.path, sel.k_hat, &inst.omega, &inst.x, &inst.a, &inst.b, &inst.sigma,
            )
            .unwrap();
            assert!(crit.contains(z0));
            let joint = path_region.intersect(&crit);
            check_grid(
                &joint,
                |z| {
                    let (xt, y) = inst.data_at(z);
                    let s = select_with_criterion(kind, &xt, &y, &inst.sigma, dir).unwrap();
                    s.path.picks == sel.path.picks && s.k_hat == sel.k_hat
                },
                20.0,
                10_000,
            );
            // The criterion part alone, for points where the path is unchanged.
            check_grid(
                &crit,
                |z| {
                    let (xt, y) = inst.data_at(z);
                    let s = select_with_criterion(kind, &xt, &y, &inst.sigma, dir).unwrap();
                    if s.path.picks != sel.path.picks {
                        return crit.contains(z);
                    }
                    s.k_hat == sel.k_hat
                },
                20.0,
                2_000,
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn greedy_pick_dominates_competitors(seed in any::<u64>(), k in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian_matrix(&mut rng, 9, 4);
        let y = gaussian_vec(&mut rng, 9);
        let trace = forward_select(&x, &y, k).unwrap();
        let mut prev: Vec<usize> = Vec::new();
        for &pick in &trace.picks {
            let chosen = normal_equation_rss(&x, &y, &with_feature(&prev, pick));
            for j in (0..4).filter(|j| !prev.contains(j)) {
                let other = normal_equation_rss(&x, &y, &with_feature(&prev, j));
                prop_assert!(chosen <= other + 1e-10);
            }
            prev = with_feature(&prev, pick);
        }
    }

    #[test]
    fn observed_point_lies_in_its_selection_component(seed in any::<u64>(), z0 in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = line_instance(&mut rng, 6, 4, 4);
        let mut ctx = inst.context();
        for dir in [Direction::Forward, Direction::Backward] {
            for crit in [Criterion::Fixed(2), Criterion::Aic, Criterion::Bic, Criterion::AdjR2] {
                let sel = ctx.select(dir, crit, z0).unwrap();
                let (lo, hi) = ctx.selection_component(&sel, z0).unwrap().unwrap();
                prop_assert!(lo <= z0 + 1e-9 && z0 <= hi + 1e-9);
            }
        }
    }
}
