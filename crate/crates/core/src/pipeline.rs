//! Exhaustion runs: minimize on every stage, rescale so the EL parameter is
//! one, and track how the stage measures settle on an inspection window.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};
use crate::lagrangian::Lagrangian;
use crate::measure::DiscreteMeasure;
use crate::numeric::csum;
use crate::simplex_solver::{minimize_with_starts, CompactProblem, CompactSolution, KktResiduals, SolverOptions};
use crate::space::{interior, Exhaustion, MetricSpace, PointId};

/// Stage minimizer scaled by `λ = 1/s`, extended by zero to the whole space.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledMinimizer {
    pub stage_index: usize,
    pub points: Vec<PointId>,
    pub measure: DiscreteMeasure,
    pub lambda: f64,
    pub s_unscaled: f64,
    pub kkt: KktResiduals,
    pub degenerate: bool,
    pub certified_global: bool,
}

/// Scales a stage solution so that its EL parameter becomes one.
pub fn rescale(
    stage_index: usize,
    solution: &CompactSolution,
    full_space: &MetricSpace,
    tol: f64,
) -> Result<ScaledMinimizer> {
    let s = solution.s_param;
    if !(s > tol) {
        return Err(CvpError::DegenerateStage(s));
    }
    let lambda = 1.0 / s;
    let scaled: Vec<f64> = solution.weights.iter().map(|w| lambda * w).collect();
    let measure = DiscreteMeasure::from_dense(full_space, &solution.points, &scaled)?;
    Ok(ScaledMinimizer {
        stage_index,
        points: solution.points.clone(),
        measure,
        lambda,
        s_unscaled: s,
        kkt: solution.kkt,
        degenerate: solution.degenerate,
        certified_global: solution.certified_global,
    })
}

/// `ℓ^[n]` on the stage and on the stage support.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageResiduals {
    /// `inf_{K_n} ℓ^[n]`.
    pub inf_on_stage: f64,
    /// `max_{supp ρ^[n]} |ℓ^[n]|`.
    pub max_abs_on_support: f64,
    /// `λ_n · s_n - 1`.
    pub normalization_error: f64,
}

pub fn stage_residuals(stage: &ScaledMinimizer, lagrangian: &Lagrangian) -> StageResiduals {
    let mut inf = f64::INFINITY;
    let mut max_abs = 0.0f64;
    for &x in &stage.points {
        let ell = stage.measure.potential(lagrangian, x) - 1.0;
        inf = inf.min(ell);
        if stage.measure.weight(x) > 0.0 {
            max_abs = max_abs.max(ell.abs());
        }
    }
    StageResiduals {
        inf_on_stage: inf,
        max_abs_on_support: max_abs,
        normalization_error: stage.lambda * stage.s_unscaled - 1.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassProbe {
    pub x: PointId,
    pub requested_radius: f64,
    /// Radius after shrinking to satisfy `L(y,z) >= L(x,x)/2` on the ball.
    pub radius: f64,
    pub mass: f64,
    pub bound: f64,
    pub margin: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassBoundReport {
    pub probes: Vec<MassProbe>,
    pub skipped: Vec<(PointId, String)>,
    pub violations: usize,
}

fn ball_is_admissible(lagrangian: &Lagrangian, ball: &[PointId], half: f64) -> bool {
    ball.iter()
        .all(|&y| ball.iter().all(|&z| lagrangian.eval(y, z) >= half))
}

/// Checks `ρ^[n](U) <= 2 / L(x,x)` on balls `U` around each probe.
pub fn local_mass_bound_check(
    stage: &ScaledMinimizer,
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    probes: &[PointId],
    radius: f64,
    tol: f64,
) -> Result<MassBoundReport> {
    if !(radius >= 0.0) {
        return Err(CvpError::invalid("probe radius must be nonnegative"));
    }
    let mut out = Vec::with_capacity(probes.len());
    let mut skipped = Vec::new();
    for &x in probes {
        space.check(x)?;
        let half = lagrangian.eval(x, x) / 2.0;
        let mut candidates: Vec<f64> = space
            .realized_distances(x)?
            .into_iter()
            .filter(|&d| d <= radius)
            .collect();
        candidates.reverse();
        let mut chosen = None;
        for r in candidates {
            let ball = space.closed_ball(x, r)?;
            if ball_is_admissible(lagrangian, &ball, half) {
                chosen = Some((r, ball));
                break;
            }
        }
        let Some((r, ball)) = chosen else {
            skipped.push((x, format!("no admissible ball within radius {radius}")));
            continue;
        };
        let mass = stage.measure.mass_of(&ball);
        let bound = 2.0 / lagrangian.eval(x, x);
        out.push(MassProbe {
            x,
            requested_radius: radius,
            radius: r,
            mass,
            bound,
            margin: bound - mass,
            ok: mass <= bound + tol,
        });
    }
    let violations = out.iter().filter(|p| !p.ok).count();
    Ok(MassBoundReport {
        probes: out,
        skipped,
        violations,
    })
}

/// Which points of a stage are far enough from its boundary to inspect.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowPolicy {
    /// Points whose kernel range lies inside the stage.
    Range,
    /// Points whose closed ball of the given radius lies inside the stage.
    Margin(f64),
}

impl WindowPolicy {
    pub fn apply(&self, space: &MetricSpace, lagrangian: &Lagrangian, stage: &[PointId]) -> Vec<PointId> {
        match *self {
            WindowPolicy::Range => {
                let inside: std::collections::BTreeSet<PointId> = stage.iter().copied().collect();
                stage
                    .iter()
                    .copied()
                    .filter(|&x| lagrangian.effective_range(&[x]).iter().all(|y| inside.contains(y)))
                    .collect()
            }
            WindowPolicy::Margin(m) => interior(space, stage, m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub solver: SolverOptions,
    pub window: WindowPolicy,
    /// Bound on the last-pair weight discrepancy on the window.
    pub stabilization_tol: f64,
    /// Seed each stage with the previous stage's weights; forces sequential solving.
    pub warm_start: bool,
    /// Keep only every `stride`-th stage (always keeping the last).
    pub stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            solver: SolverOptions::default(),
            window: WindowPolicy::Range,
            stabilization_tol: 1e-6,
            warm_start: false,
            stride: 1,
        }
    }
}

/// `max_{x ∈ K_m interior} |ρ^[n](x) - ρ^[N](x)|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub m: usize,
    pub n: usize,
    pub interior_size: usize,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDiagnostics {
    pub lambda: Vec<f64>,
    pub residuals: Vec<StageResiduals>,
    pub degenerate: Vec<bool>,
    pub certified_global: Vec<bool>,
    pub discrepancies: Vec<Discrepancy>,
    /// Window discrepancy between the last two stages, if there are two.
    pub last_pair_discrepancy: Option<f64>,
    pub stabilization_tol: f64,
    pub stabilized: bool,
    /// Supports on the window changed between some pair of consecutive stages.
    pub oscillating: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionRun {
    pub exhaustion: Exhaustion,
    pub stages: Vec<ScaledMinimizer>,
    /// Final stage's scaled measure on its whole stage.
    pub limit: DiscreteMeasure,
    pub window: Vec<PointId>,
    pub diagnostics: RunDiagnostics,
}

fn max_discrepancy(a: &DiscreteMeasure, b: &DiscreteMeasure, set: &[PointId]) -> f64 {
    set.iter()
        .map(|&x| (a.weight(x) - b.weight(x)).abs())
        .fold(0.0, f64::max)
}

fn solve_stage(
    stage_index: usize,
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    points: &[PointId],
    options: &RunOptions,
    warm: Option<&DiscreteMeasure>,
) -> Result<ScaledMinimizer> {
    let wrap = |e: CvpError| CvpError::Stage {
        stage: stage_index,
        source: Box::new(e),
    };
    let problem = CompactProblem::new(lagrangian, points, options.solver).map_err(wrap)?;
    let starts: Vec<Vec<f64>> = warm
        .filter(|m| points.iter().any(|&p| m.weight(p) > 0.0))
        .map(|m| vec![points.iter().map(|&p| m.weight(p)).collect()])
        .unwrap_or_default();
    let solution = minimize_with_starts(&problem, &starts).map_err(wrap)?;
    log::info!(
        "stage {stage_index}: {} points, support {}, s = {:e}",
        points.len(),
        solution.support().len(),
        solution.s_param
    );
    rescale(stage_index, &solution, space, f64::MIN_POSITIVE).map_err(wrap)
}

/// Runs the construction over every stage of `exhaustion`.
pub fn run_exhaustion(
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    exhaustion: &Exhaustion,
    options: &RunOptions,
) -> Result<ExhaustionRun> {
    lagrangian.check_space(space)?;
    if exhaustion.is_empty() {
        return Err(CvpError::invalid("exhaustion has no stages"));
    }
    if options.stride == 0 {
        return Err(CvpError::invalid("stride must be at least 1"));
    }
    if !(options.stabilization_tol >= 0.0) {
        return Err(CvpError::invalid("stabilization tolerance must be nonnegative"));
    }
    let exhaustion = exhaustion.thinned(options.stride);
    let stages: Vec<ScaledMinimizer> = if options.warm_start {
        let mut out: Vec<ScaledMinimizer> = Vec::with_capacity(exhaustion.len());
        for (i, points) in exhaustion.stages.iter().enumerate() {
            let warm = out.last().map(|s| &s.measure);
            out.push(solve_stage(i, space, lagrangian, points, options, warm)?);
        }
        out
    } else {
        exhaustion
            .stages
            .par_iter()
            .enumerate()
            .map(|(i, points)| solve_stage(i, space, lagrangian, points, options, None))
            .collect::<Result<_>>()?
    };

    let last = stages.len() - 1;
    let window_base = if last == 0 {
        &exhaustion.stages[0]
    } else {
        &exhaustion.stages[last - 1]
    };
    let window = if last == 0 {
        window_base.clone()
    } else {
        options.window.apply(space, lagrangian, window_base)
    };
    let limit = stages[last].measure.clone();

    let mut discrepancies = Vec::new();
    for m in 0..last {
        let inner = options.window.apply(space, lagrangian, &exhaustion.stages[m]);
        for n in (m + 1)..=last {
            discrepancies.push(Discrepancy {
                m,
                n,
                interior_size: inner.len(),
                max_abs: max_discrepancy(&stages[n].measure, &limit, &inner),
            });
        }
    }
    let last_pair_discrepancy =
        (last > 0).then(|| max_discrepancy(&stages[last - 1].measure, &stages[last].measure, &window));
    let stabilized = last_pair_discrepancy.is_none_or(|d| d <= options.stabilization_tol);
    let oscillating = stages.windows(2).any(|pair| {
        window
            .iter()
            .any(|&x| (pair[0].measure.weight(x) > 0.0) != (pair[1].measure.weight(x) > 0.0))
    });
    if !stabilized {
        log::warn!(
            "run did not stabilize: last-pair discrepancy {:?} exceeds {}",
            last_pair_discrepancy,
            options.stabilization_tol
        );
    }
    let diagnostics = RunDiagnostics {
        lambda: stages.iter().map(|s| s.lambda).collect(),
        residuals: stages.iter().map(|s| stage_residuals(s, lagrangian)).collect(),
        degenerate: stages.iter().map(|s| s.degenerate).collect(),
        certified_global: stages.iter().map(|s| s.certified_global).collect(),
        discrepancies,
        last_pair_discrepancy,
        stabilization_tol: options.stabilization_tol,
        stabilized,
        oscillating,
    };
    Ok(ExhaustionRun {
        exhaustion,
        stages,
        limit,
        window,
        diagnostics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportTrack {
    pub x: PointId,
    /// `dist(x, supp ρ^[n])` per stage; `None` for an empty stage support.
    pub distances: Vec<Option<f64>>,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportReport {
    pub tracks: Vec<SupportTrack>,
    pub passed: bool,
}

/// Number of final stages over which monotone behavior is required.
const TAIL_STAGES: usize = 3;

fn monotone_tail(values: &[f64], tol: f64) -> bool {
    let start = values.len().saturating_sub(TAIL_STAGES);
    values[start..].windows(2).all(|w| w[1] <= w[0] + tol)
}

/// For each limit support point on the window, the distance to every stage support.
pub fn check_support_approximation(run: &ExhaustionRun, space: &MetricSpace) -> SupportReport {
    let supports: Vec<Vec<PointId>> = run.stages.iter().map(|s| s.measure.support()).collect();
    let tracks: Vec<SupportTrack> = run
        .window
        .iter()
        .copied()
        .filter(|&x| run.limit.weight(x) > 0.0)
        .map(|x| {
            let distances: Vec<Option<f64>> = supports
                .iter()
                .map(|s| s.iter().map(|&y| space.dist(x, y)).reduce(f64::min))
                .collect();
            let finite: Vec<f64> = distances.iter().map(|d| d.unwrap_or(f64::INFINITY)).collect();
            let ok = finite.last().is_some_and(|&d| d == 0.0) && monotone_tail(&finite, 0.0);
            SupportTrack { x, distances, ok }
        })
        .collect();
    let passed = tracks.iter().all(|t| t.ok);
    SupportReport { tracks, passed }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllTrack {
    pub x: PointId,
    /// `|ℓ^(n)(x) - ℓ(x)|` per stage.
    pub gaps: Vec<f64>,
    pub monotone_tail: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllConvergenceReport {
    pub tracks: Vec<EllTrack>,
    /// Smallest realized distance between distinct points.
    pub h: f64,
    /// `max_{x,z ∈ window, d(x,z) <= h} |ℓ^(n)(x) - ℓ^(n)(z)|` per stage.
    pub modulus: Vec<f64>,
    pub modulus_sup: f64,
    pub passed: bool,
}

/// Pointwise convergence of `ℓ^(n)` at the sample points and a discrete
/// equicontinuity modulus on the window.
pub fn check_ell_convergence(
    run: &ExhaustionRun,
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    sample_points: &[PointId],
    tol: f64,
) -> Result<EllConvergenceReport> {
    if run.stages.len() < 2 {
        return Err(CvpError::invalid("ℓ convergence needs at least two stages"));
    }
    let ell = |m: &DiscreteMeasure, x: PointId| m.potential(lagrangian, x) - 1.0;
    let mut tracks = Vec::with_capacity(sample_points.len());
    for &x in sample_points {
        space.check(x)?;
        let target = ell(&run.limit, x);
        let gaps: Vec<f64> = run.stages.iter().map(|s| (ell(&s.measure, x) - target).abs()).collect();
        let monotone = monotone_tail(&gaps, tol);
        tracks.push(EllTrack {
            x,
            gaps,
            monotone_tail: monotone,
        });
    }
    let h = space.min_separation();
    let modulus: Vec<f64> = run
        .stages
        .par_iter()
        .map(|s| {
            let values: Vec<f64> = run.window.iter().map(|&x| ell(&s.measure, x)).collect();
            let mut worst = 0.0f64;
            for (i, &x) in run.window.iter().enumerate() {
                for (j, &z) in run.window.iter().enumerate().skip(i + 1) {
                    if space.dist(x, z) <= h {
                        worst = worst.max((values[i] - values[j]).abs());
                    }
                }
            }
            worst
        })
        .collect();
    let modulus_sup = modulus.iter().copied().fold(0.0, f64::max);
    let passed = tracks.iter().all(|t| t.monotone_tail);
    Ok(EllConvergenceReport {
        tracks,
        h,
        modulus,
        modulus_sup,
        passed,
    })
}

/// `Σ_{y : d(x,y) > R} ρ(y) L(x,y)`.
pub fn tail_mass(
    measure: &DiscreteMeasure,
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    x: PointId,
    r: f64,
) -> Result<f64> {
    space.check(x)?;
    measure.check_kernel(lagrangian)?;
    Ok(csum(
        measure
            .iter()
            .filter(|&(y, _)| space.dist(x, y) > r)
            .map(|(y, w)| w * lagrangian.eval(x, y)),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lagrangian::{make_kernel, KernelSpec};

    fn tent_grid(lo: i64, hi: i64) -> (MetricSpace, Lagrangian) {
        let space = MetricSpace::integer_grid(lo, hi).unwrap();
        let l = make_kernel(&KernelSpec::tent(1.0, 1.0), &space).unwrap();
        (space, l)
    }

    fn solution(points: Vec<PointId>, weights: Vec<f64>, s: f64) -> CompactSolution {
        CompactSolution {
            points,
            weights,
            value: s,
            s_param: s,
            kkt: KktResiduals {
                max_abs_on_support: 0.0,
                min_residual: 0.0,
                s,
            },
            certified_global: true,
            degenerate: false,
        }
    }

    #[test]
    fn rescale_examples() {
        let space = MetricSpace::integer_grid(0, 2).unwrap();
        let pts = space.all_points();
        let scaled = rescale(0, &solution(pts.clone(), vec![1.0 / 3.0; 3], 1.0 / 3.0), &space, 1e-12).unwrap();
        assert_eq!(scaled.lambda, 3.0);
        for p in &pts {
            assert!((scaled.measure.weight(*p) - 1.0).abs() < 1e-15);
        }
        assert!((scaled.measure.total() - 3.0).abs() < 1e-14);

        let two = MetricSpace::integer_grid(0, 1).unwrap();
        let l = Lagrangian::from_matrix(&two, vec![vec![1.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let scaled = rescale(0, &solution(two.all_points(), vec![0.5, 0.5], 0.75), &two, 1e-12).unwrap();
        assert!((scaled.lambda - 4.0 / 3.0).abs() < 1e-15);
        let r = stage_residuals(&scaled, &l);
        assert!(r.max_abs_on_support < 1e-15 && r.inf_on_stage.abs() < 1e-15);

        let one = MetricSpace::integer_grid(0, 0).unwrap();
        let scaled = rescale(0, &solution(one.all_points(), vec![1.0], 2.5), &one, 1e-12).unwrap();
        assert!((scaled.measure.weight(PointId(0)) - 0.4).abs() < 1e-15);

        assert!(matches!(
            rescale(0, &solution(one.all_points(), vec![1.0], 0.0), &one, 1e-12),
            Err(CvpError::DegenerateStage(_))
        ));
    }

    #[test]
    fn identity_grid_run() {
        let (space, l) = tent_grid(-8, 8);
        let center = space.lookup("0").unwrap();
        let ex = space.build_exhaustion(center, &[2.0, 4.0, 6.0]).unwrap();
        let run = run_exhaustion(&space, &l, &ex, &RunOptions::default()).unwrap();
        assert_eq!(run.stages.len(), 3);
        for stage in &run.stages {
            for &p in &stage.points {
                assert!((stage.measure.weight(p) - 1.0).abs() < 1e-12);
            }
            assert!((stage.lambda - stage.points.len() as f64).abs() < 1e-9);
        }
        assert!(run.diagnostics.discrepancies.iter().all(|d| d.max_abs < 1e-12));
        assert!(run.diagnostics.stabilized);
        // window: points of the radius-4 stage whose neighbors are inside it
        assert_eq!(run.window.len(), 9);
        let support = check_support_approximation(&run, &space);
        assert!(support.passed);
        assert!(support.tracks.iter().all(|t| t.distances.last() == Some(&Some(0.0))));
        // points already in the first stage are in every stage support
        assert!(support
            .tracks
            .iter()
            .filter(|t| space.dist(center, t.x) <= 2.0)
            .all(|t| t.distances.iter().all(|d| *d == Some(0.0))));
        let ell = check_ell_convergence(&run, &space, &l, &run.window, 1e-12).unwrap();
        assert!(ell.passed);
        // ℓ^(n)(x) = -1 while x is outside stage n, and 0 afterwards
        for t in &ell.tracks {
            let inside = space.dist(center, t.x) <= 2.0;
            assert_eq!(t.gaps[0] > 0.5, !inside);
            assert!(t.gaps[1..].iter().all(|g| *g < 1e-12));
        }
        assert!(ell.modulus.last().unwrap() < &1e-12);
    }

    #[test]
    fn warm_start_and_stride_agree() {
        let (space, l) = tent_grid(-8, 8);
        let center = space.lookup("0").unwrap();
        let ex = space.build_exhaustion(center, &[2.0, 4.0, 6.0, 8.0]).unwrap();
        let opts = RunOptions {
            warm_start: true,
            stride: 2,
            ..RunOptions::default()
        };
        let run = run_exhaustion(&space, &l, &ex, &opts).unwrap();
        assert_eq!(run.exhaustion.radii, vec![4.0, 8.0]);
        assert_eq!(run.limit.total(), 17.0);
    }

    #[test]
    fn single_stage_run() {
        let (space, l) = tent_grid(-3, 3);
        let ex = space.build_exhaustion(space.lookup("0").unwrap(), &[3.0]).unwrap();
        let run = run_exhaustion(&space, &l, &ex, &RunOptions::default()).unwrap();
        assert_eq!(run.limit, run.stages[0].measure);
        assert_eq!(run.window.len(), 7);
        assert!(run.diagnostics.last_pair_discrepancy.is_none());
        assert!(check_ell_convergence(&run, &space, &l, &[PointId(0)], 1e-9).is_err());
    }

    #[test]
    fn constant_kernel_stage_is_degenerate() {
        let space = MetricSpace::integer_grid(0, 3).unwrap();
        let l = Lagrangian::from_matrix(&space, vec![vec![0.5; 4]; 4]).unwrap();
        let ex = Exhaustion::from_stages(&space, vec![vec![PointId(0), PointId(1)], space.all_points()]).unwrap();
        let run = run_exhaustion(&space, &l, &ex, &RunOptions::default()).unwrap();
        assert!(run.diagnostics.degenerate.iter().all(|d| *d));
        assert_eq!(run.limit.support(), vec![PointId(0)]);
        assert_eq!(run.limit.weight(PointId(0)), 2.0);
    }

    #[test]
    fn support_distance_shrinks_for_off_center_points() {
        // the far-right point only enters in the last stage
        let (space, l) = tent_grid(0, 6);
        let ex = Exhaustion::from_stages(
            &space,
            vec![
                (0..3).map(PointId).collect(),
                (0..5).map(PointId).collect(),
                (0..7).map(PointId).collect(),
            ],
        )
        .unwrap();
        let mut run = run_exhaustion(&space, &l, &ex, &RunOptions::default()).unwrap();
        run.window = vec![PointId(6)];
        let report = check_support_approximation(&run, &space);
        assert_eq!(report.tracks[0].distances, vec![Some(4.0), Some(2.0), Some(0.0)]);
        assert!(report.passed);
    }

    #[test]
    fn local_mass_bound_examples() {
        let (space, l) = tent_grid(-5, 5);
        let ex = space.build_exhaustion(PointId(5), &[5.0]).unwrap();
        let run = run_exhaustion(&space, &l, &ex, &RunOptions::default()).unwrap();
        let report = local_mass_bound_check(&run.stages[0], &space, &l, &[PointId(5)], 0.5, 1e-12).unwrap();
        assert!((report.probes[0].mass - 1.0).abs() < 1e-12);
        assert_eq!(report.probes[0].bound, 2.0);
        assert_eq!(report.violations, 0);
        // a radius-1 ball holds neighbors with L = 0 < 1/2 and is shrunk back
        let report = local_mass_bound_check(&run.stages[0], &space, &l, &[PointId(5)], 1.0, 1e-12).unwrap();
        assert_eq!(report.probes[0].radius, 0.0);

        let one = MetricSpace::integer_grid(0, 1).unwrap();
        let big = Lagrangian::from_matrix(&one, vec![vec![4.0, 0.0], vec![0.0, 4.0]]).unwrap();
        let heavy = ScaledMinimizer {
            stage_index: 0,
            points: one.all_points(),
            measure: DiscreteMeasure::from_dense(&one, &one.all_points(), &[0.6, 0.1]).unwrap(),
            lambda: 1.0,
            s_unscaled: 1.0,
            kkt: KktResiduals {
                max_abs_on_support: 0.0,
                min_residual: 0.0,
                s: 1.0,
            },
            degenerate: false,
            certified_global: false,
        };
        let report = local_mass_bound_check(&heavy, &one, &big, &[PointId(0)], 0.1, 1e-12).unwrap();
        assert_eq!(report.probes[0].bound, 0.5);
        assert_eq!(report.violations, 1);
    }

    #[test]
    fn tail_mass_examples() {
        let (space, l) = tent_grid(-4, 4);
        let uniform = DiscreteMeasure::uniform(&space, 1.0).unwrap();
        assert_eq!(tail_mass(&uniform, &space, &l, PointId(4), 1.0).unwrap(), 0.0);
        assert_eq!(tail_mass(&DiscreteMeasure::zero(&space), &space, &l, PointId(4), 0.5).unwrap(), 0.0);

        let space = MetricSpace::integer_grid(-30, 30).unwrap();
        let l = make_kernel(&KernelSpec::exponential(1.0, 1.0), &space).unwrap();
        let uniform = DiscreteMeasure::uniform(&space, 1.0).unwrap();
        let x = space.lookup("0").unwrap();
        let direct: f64 = (4..=30).map(|k| 2.0 * (-(k as f64)).exp()).sum();
        let tail = tail_mass(&uniform, &space, &l, x, 3.0).unwrap();
        assert!((tail - direct).abs() < 1e-15);
        assert!(tail < 0.3);
    }
}
