//! Property tests for the space, kernel and solver invariants.

use proptest::prelude::*;

use cvp::lagrangian::{make_kernel, tail_index, verify_entropy_decay_with, CoverMode, ProfileShape};
use cvp::simplex_solver::{brute_force_minimizer, minimize_on_compact};
use cvp::{CompactProblem, DecayProfile, KernelSpec, MetricSpace, PointId, SolverOptions};

fn cloud(coords: &[(f64, f64)]) -> MetricSpace {
    MetricSpace::from_coords(
        "cloud",
        coords.iter().enumerate().map(|(i, _)| format!("p{i}")).collect(),
        coords.iter().map(|&(a, b)| vec![a, b]).collect(),
    )
    .unwrap()
}

fn distinct_coords(max: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::btree_set((0i32..40, 0i32..40), 2..max)
        .prop_map(|s| s.into_iter().map(|(a, b)| (a as f64 * 0.5, b as f64 * 0.5)).collect())
}

fn symmetric_matrix(max: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(0.0f64..1.0, n * n).prop_map(move |v| {
            let mut rows = vec![vec![0.0; n]; n];
            for i in 0..n {
                for j in i..n {
                    let x = if i == j { 1.0 - v[i * n + j] } else { v[i * n + j] };
                    rows[i][j] = x;
                    rows[j][i] = x;
                }
            }
            rows
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn balls_are_monotone(coords in distinct_coords(30), x in 0usize..30, r1 in 0.0f64..10.0, r2 in 0.0f64..10.0) {
        let space = cloud(&coords);
        let x = PointId(x % space.len());
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        let small = space.closed_ball(x, lo).unwrap();
        let big = space.closed_ball(x, hi).unwrap();
        prop_assert!(small.iter().all(|p| big.contains(p)));
    }

    #[test]
    fn greedy_cover_covers_the_ball(coords in distinct_coords(30), x in 0usize..30, r in 0.0f64..8.0, delta in 0.1f64..4.0) {
        let space = cloud(&coords);
        let x = PointId(x % space.len());
        let centers = space.greedy_cover(x, r, delta).unwrap();
        for p in space.closed_ball(x, r).unwrap() {
            prop_assert!(centers.iter().any(|&c| space.dist(c, p) <= delta));
        }
        prop_assert_eq!(centers.len(), space.covering_number(x, r, delta).unwrap());
    }

    #[test]
    fn covering_number_is_monotone(coords in distinct_coords(30), x in 0usize..30, r in 0.0f64..6.0, d in 0.1f64..3.0) {
        let space = cloud(&coords);
        let x = PointId(x % space.len());
        let n = space.covering_number(x, r, d).unwrap();
        prop_assert!(space.covering_number(x, r, 2.0 * d).unwrap() <= n);
        prop_assert!(space.covering_number(x, r + 1.0, d).unwrap() >= n);
    }

    #[test]
    fn greedy_cover_dominates_the_exact_cover(coords in distinct_coords(14), x in 0usize..14, r in 0.0f64..6.0, d in 0.1f64..3.0) {
        let space = cloud(&coords);
        let x = PointId(x % space.len());
        prop_assert!(space.exact_covering_number(x, r, d).unwrap() <= space.covering_number(x, r, d).unwrap());
    }

    #[test]
    fn exhaustions_are_nested_and_exhaust(coords in distinct_coords(30), x in 0usize..30) {
        let space = cloud(&coords);
        let x = PointId(x % space.len());
        let reach = space.all_points().into_iter().map(|p| space.dist(x, p)).fold(0.0, f64::max);
        // radii at realized distances so that every stage grows
        let mut radii: Vec<f64> = space.realized_distances(x).unwrap();
        radii.retain(|&d| d > 0.0);
        radii.truncate(4);
        if radii.last() != Some(&reach) {
            radii.push(reach);
        }
        let ex = space.build_exhaustion(x, &radii).unwrap();
        for pair in ex.stages.windows(2) {
            prop_assert!(pair[0].iter().all(|p| pair[1].contains(p)));
        }
        prop_assert_eq!(ex.stages.last().unwrap().len(), space.len());
        prop_assert!(ex.covers_all);
    }

    #[test]
    fn kernels_are_symmetric_with_positive_diagonal(coords in distinct_coords(25), kind in 0usize..3, scale in 0.3f64..3.0) {
        let space = cloud(&coords);
        let spec = match kind {
            0 => KernelSpec::tent(1.0 + scale, scale),
            1 => KernelSpec::truncated_gaussian(scale, scale, 2.0 * scale),
            _ => KernelSpec::exponential(scale, scale),
        };
        let l = make_kernel(&spec, &space).unwrap();
        for x in space.points() {
            prop_assert!(l.eval(x, x) > 0.0);
            for y in space.points() {
                prop_assert!(l.eval(x, y) >= 0.0);
                prop_assert_eq!(l.eval(x, y), l.eval(y, x));
            }
        }
    }

    #[test]
    fn effective_range_is_monotone(coords in distinct_coords(25), a in prop::collection::btree_set(0usize..25, 1..5), extra in prop::collection::btree_set(0usize..25, 0..5)) {
        let space = cloud(&coords);
        let l = make_kernel(&KernelSpec::tent(1.0, 1.2), &space).unwrap();
        let n = space.len();
        let small: Vec<PointId> = a.iter().map(|&i| PointId(i % n)).collect();
        let mut big = small.clone();
        big.extend(extra.iter().map(|&i| PointId(i % n)));
        let r_small = l.effective_range(&small);
        let r_big = l.effective_range(&big);
        prop_assert!(r_small.iter().all(|p| r_big.contains(p)));
    }

    #[test]
    fn tail_index_is_non_increasing_in_eps(e1 in 0.001f64..2.0, e2 in 0.001f64..2.0, amp in 0.1f64..10.0, deg in 0u32..3) {
        let profile = DecayProfile::new(
            ProfileShape::Exp { amplitude: amp, rate: 1.0, degree: deg, shift: 3.0 },
            1.0,
            1.0,
        ).unwrap();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(tail_index(&profile, hi).unwrap() <= tail_index(&profile, lo).unwrap());
    }

    #[test]
    fn greedy_entropy_check_is_conservative(n in 4usize..14, sigma in 0.3f64..2.0, amp in 0.5f64..40.0) {
        let space = MetricSpace::integer_grid(0, n as i64 - 1).unwrap();
        let l = make_kernel(&KernelSpec::exponential(1.0, sigma), &space).unwrap();
        let profile = DecayProfile::new(
            ProfileShape::Exp { amplitude: amp, rate: 1.0 / sigma, degree: 1, shift: 2.0 },
            1.0,
            1.0,
        ).unwrap();
        let greedy = verify_entropy_decay_with(&l, &space, &profile, &[], CoverMode::Greedy).unwrap();
        let exact = verify_entropy_decay_with(&l, &space, &profile, &[], CoverMode::Exact).unwrap();
        prop_assert!(!greedy.holds || exact.holds);
        prop_assert!(greedy.violations >= exact.violations);
    }

    #[test]
    fn solutions_live_on_the_simplex(rows in symmetric_matrix(10)) {
        let p = CompactProblem::from_matrix(&rows, SolverOptions::default()).unwrap();
        for sol in [minimize_on_compact(&p).unwrap(), brute_force_minimizer(&p).unwrap()] {
            let total: f64 = sol.weights.iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12);
            prop_assert!(sol.weights.iter().all(|&w| w >= 0.0));
            let quad: f64 = (0..rows.len())
                .flat_map(|i| (0..rows.len()).map(move |j| (i, j)))
                .map(|(i, j)| sol.weights[i] * sol.weights[j] * rows[i][j])
                .sum();
            prop_assert!((sol.value - quad).abs() <= 1e-12);
            prop_assert!(sol.s_param > 0.0);
        }
    }

    #[test]
    fn solver_never_undercuts_the_oracle(rows in symmetric_matrix(8)) {
        let p = CompactProblem::from_matrix(&rows, SolverOptions::default()).unwrap();
        let sol = minimize_on_compact(&p).unwrap();
        let oracle = brute_force_minimizer(&p).unwrap();
        prop_assert!(sol.value >= oracle.value - 1e-9);
        prop_assert!(sol.kkt.within(1e-8));
    }
}
