//! Survival estimators against exact recursions and the coupling order.

use looptree::estimators::{
    domination_report, survival_curve, threshold_bisection, Experiment, Model, ThresholdSettings,
};
use looptree::explore::TreeSource;
use looptree::percolation::{delayed_pruning_mask, pruning_probability, PruningParams};
use looptree::rng::stream;
use looptree::{generate_regular, OffspringLaw};

/// Probability that the link cluster of the root of a `d`-regular tree
/// reaches depth `depth` when edges are kept with probability `p`.
fn regular_link_survival(d: usize, p: f64, depth: usize) -> f64 {
    let mut below = 1.0;
    for _ in 1..depth {
        below = 1.0 - (1.0 - p * below).powi(d as i32 - 1);
    }
    1.0 - (1.0 - p * below).powi(d as i32)
}

#[test]
fn link_survival_matches_recursion() {
    let p: f64 = 0.4;
    let beta = -(1.0 - p).ln();
    let exp = Experiment::new(TreeSource::regular(3).unwrap(), 1.0, 8, 100_000, 31);
    let curve = survival_curve(Model::Link, &exp, &[beta]).unwrap();
    let exact = regular_link_survival(3, p, 8);
    let (est, se) = (curve.estimates[0], curve.stderrs[0]);
    assert!((est - exact).abs() < 3.0 * se, "{est} ± {se} vs {exact}");
}

#[test]
fn link_survival_on_a_grid_matches_recursion() {
    let grid: Vec<f64> = [0.3, 0.45, 0.6, 0.8]
        .iter()
        .map(|p: &f64| -(1.0 - p).ln())
        .collect();
    let exp = Experiment::new(TreeSource::regular(4).unwrap(), 0.5, 6, 20_000, 32);
    let curve = survival_curve(Model::Link, &exp, &grid).unwrap();
    for (i, &beta) in grid.iter().enumerate() {
        let exact = regular_link_survival(4, 1.0 - (-beta).exp(), 6);
        assert!(
            (curve.estimates[i] - exact).abs() < 3.0 * curve.stderrs[i].max(1e-3),
            "{beta}"
        );
    }
}

/// Survival to depth `depth` of the link cluster of a Poisson(`mean`)
/// Galton-Watson tree kept with probability `p`.
fn poisson_link_survival(mean: f64, p: f64, depth: usize) -> f64 {
    (0..depth).fold(1.0, |q, _| 1.0 - (-mean * p * q).exp())
}

#[test]
fn galton_watson_link_threshold_matches_finite_depth_value() {
    let (mut lo, mut hi) = (0.01f64, 0.99f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if poisson_link_survival(2.0, mid, 12) >= 0.05 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let exact = -(1.0 - lo).ln();
    let source = TreeSource::galton_watson(&OffspringLaw::Poisson(2.0)).unwrap();
    let exp = Experiment::new(source, 1.0, 12, 100_000, 33);
    let settings = ThresholdSettings {
        tolerance: 1e-3,
        ..ThresholdSettings::default()
    };
    let est = threshold_bisection(Model::Link, &exp, settings).unwrap();
    assert!(est.ci.0 <= est.beta_hat && est.beta_hat <= est.ci.1);
    assert!(
        est.ci.0 - 0.005 <= exact && exact <= est.ci.1 + 0.005,
        "{est:?} vs {exact}"
    );
}

#[test]
fn coupled_survival_is_ordered() {
    let grid: Vec<f64> = (0..6).map(|i| 0.2 + 0.15 * i as f64).collect();
    let exp = Experiment::new(TreeSource::regular(4).unwrap(), 1.0, 8, 3000, 34);
    let rows = domination_report(&exp, &grid, 3.0).unwrap();
    for row in &rows {
        assert!(!row.violation, "{row:?}");
        assert!(row.p_delay <= row.p_link);
    }
    assert!(rows.last().unwrap().p_link > 0.5);
    assert!(rows[0].p_link < 0.05);
}

#[test]
fn delayed_removal_frequency_matches_quadrature() {
    let tree = generate_regular(4, 3).unwrap();
    let params = PruningParams::new(1.0, 1.0).unwrap();
    let exact = pruning_probability(4, Some(4), &params).unwrap();
    let mut rng = stream(35);
    let (mut removed, mut trials) = (0usize, 0usize);
    for _ in 0..10_000 {
        let mask = delayed_pruning_mask(&tree, &params, &mut rng).unwrap();
        for v in tree.children(tree.root()) {
            removed += mask.removed[v] as usize;
            trials += 1;
        }
        assert!(mask.removed_vertices().iter().all(|&v| tree.depth(v) == 1));
    }
    let est = removed as f64 / trials as f64;
    let se = (exact * (1.0 - exact) / trials as f64).sqrt();
    assert!((est - exact).abs() < 3.0 * se, "{est} vs {exact}");
}
