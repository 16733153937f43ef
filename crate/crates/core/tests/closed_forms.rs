//! Exhaustion runs compared against closed-form minimizers.

mod common;

use cvp::el_analysis::{check_condition_iv, verify_el};
use cvp::pipeline::{run_exhaustion, RunOptions, WindowPolicy};
use cvp::{KernelSpec, MetricSpace};

#[test]
fn exponential_kernel_matches_the_tridiagonal_inverse() {
    // L_ij = q^|i-j| has a tridiagonal inverse, so L^{-1} 1 is explicit
    let q = (-1.0f64).exp();
    let interior = (1.0 - q) / (1.0 + q);
    let end = 1.0 / (1.0 + q);
    let f = common::exponential();
    for stage in &f.run.stages {
        let first = stage.points[0];
        let last = *stage.points.last().unwrap();
        for &x in &stage.points {
            let expected = if x == first || x == last { end } else { interior };
            assert!((stage.measure.weight(x) - expected).abs() < 1e-10, "{x:?}");
        }
        let expected_total = 2.0 * end + (stage.points.len() - 2) as f64 * interior;
        assert!((stage.lambda - expected_total).abs() < 1e-9);
    }
    // ℓ vanishes on the whole final stage, not only on the window
    let el = verify_el(&f.run.limit, &f.lagrangian, &f.space.all_points(), 1e-10).unwrap();
    assert!(el.passed);
    let iv = check_condition_iv(&f.run.limit, &f.lagrangian);
    assert!((iv.sup - 1.0).abs() < 1e-10);
}

#[test]
fn wide_tent_approaches_three_fifths() {
    // w + (w_- + w_+)/3 = 1 in the bulk; boundary effects decay like 0.382^k
    let f = common::wide_tent();
    for &x in &f.run.window {
        assert!((f.run.limit.weight(x) - 0.6).abs() < 1e-8);
    }
    let center = f.space.lookup("0").unwrap();
    assert!((f.run.stages[0].measure.weight(center) - 0.6).abs() < 1e-10);
}

#[test]
fn identity_lambda_counts_points() {
    let f = common::identity_grid();
    let sizes: Vec<f64> = f.run.stages.iter().map(|s| s.points.len() as f64).collect();
    assert_eq!(sizes, vec![21.0, 41.0, 101.0]);
    for (lambda, size) in f.run.diagnostics.lambda.iter().zip(&sizes) {
        assert!((lambda - size).abs() < 1e-9);
    }
}

#[test]
fn truncated_gaussian_run_stabilizes() {
    let space = MetricSpace::integer_grid(-40, 40).unwrap();
    let kernel = cvp::lagrangian::make_kernel(&KernelSpec::truncated_gaussian(1.0, 1.0, 1.5), &space).unwrap();
    let ex = space.build_exhaustion(space.lookup("0").unwrap(), &[25.0, 35.0, 40.0]).unwrap();
    let options = RunOptions {
        window: WindowPolicy::Margin(20.0),
        ..RunOptions::default()
    };
    let run = run_exhaustion(&space, &kernel, &ex, &options).unwrap();
    assert!(run.diagnostics.stabilized, "{:?}", run.diagnostics.last_pair_discrepancy);
    let el = verify_el(&run.limit, &kernel, &run.window, 1e-8).unwrap();
    assert!(el.passed);
    // boundary effects decay like 0.438^k; bulk weight solves w (1 + 2 e^{-1}) = 1
    let bulk = 1.0 / (1.0 + 2.0 * (-1.0f64).exp());
    assert!((run.limit.weight(space.lookup("0").unwrap()) - bulk).abs() < 1e-8);
}
