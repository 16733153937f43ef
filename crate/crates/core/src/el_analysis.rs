//! Checks on the limit measure: the Euler-Lagrange equations on a window,
//! integrability of `ℓ`, the sufficient conditions for compact range,
//! non-triviality bounds and sampled minimality.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};
use crate::lagrangian::{tail_index, DecayProfile, Lagrangian, MAX_WITNESSES};
use crate::measure::{action_difference, make_variation, DiscreteMeasure};
use crate::pipeline::ExhaustionRun;
use crate::space::{MetricSpace, PointId};

pub const DEFAULT_EL_TOL: f64 = 1e-6;
/// `ΔS` below this counts as a minimality failure.
pub const DEFAULT_DELTA_S_THRESHOLD: f64 = -1e-8;
/// Fraction of the positivity-preserving step actually taken.
const STEP_SAFETY: f64 = 0.9;

/// `ℓ(x) = Σ_y ρ(y) L(x,y) - 1`.
pub fn ell(rho: &DiscreteMeasure, lagrangian: &Lagrangian, x: PointId) -> Result<f64> {
    if x.0 >= lagrangian.len() {
        return Err(CvpError::UnknownPoint(format!("#{}", x.0)));
    }
    rho.check_kernel(lagrangian)?;
    Ok(rho.potential(lagrangian, x) - 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ElReport {
    /// `ℓ` at every window point.
    pub ell_values: BTreeMap<PointId, f64>,
    pub support: Vec<PointId>,
    /// `min_{window} ℓ`.
    pub inf_ell: f64,
    pub argmin: PointId,
    /// `max_{supp ρ ∩ window} |ℓ|`; zero if the intersection is empty.
    pub max_abs_on_support: f64,
    pub window: Vec<PointId>,
    pub tol: f64,
    pub passed: bool,
    pub condition_iv_sup: Option<f64>,
    pub flags: BTreeMap<String, bool>,
}

/// Certifies `ℓ >= 0` on the window and `ℓ = 0` on the support there.
pub fn verify_el(rho: &DiscreteMeasure, lagrangian: &Lagrangian, window: &[PointId], tol: f64) -> Result<ElReport> {
    if window.is_empty() {
        return Err(CvpError::invalid("EL window must be nonempty"));
    }
    rho.check_kernel(lagrangian)?;
    let mut ell_values = BTreeMap::new();
    for &x in window {
        ell_values.insert(x, ell(rho, lagrangian, x)?);
    }
    let (&argmin, &inf_ell) = ell_values
        .iter()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("window is nonempty");
    let max_abs_on_support = ell_values
        .iter()
        .filter(|(x, _)| rho.weight(**x) > 0.0)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max);
    let inf_ok = inf_ell >= -tol;
    let support_ok = max_abs_on_support <= tol;
    let iv = check_condition_iv(rho, lagrangian);
    let flags = BTreeMap::from([
        ("inf_nonnegative".to_string(), inf_ok),
        ("zero_on_support".to_string(), support_ok),
        ("condition_iv".to_string(), iv.integrable),
    ]);
    Ok(ElReport {
        ell_values,
        support: rho.support(),
        inf_ell,
        argmin,
        max_abs_on_support,
        window: window.to_vec(),
        tol,
        passed: inf_ok && support_ok,
        condition_iv_sup: Some(iv.sup),
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionIvReport {
    /// `sup_x Σ_y ρ(y) L(x,y)` over all points.
    pub sup: f64,
    pub argmax: Option<PointId>,
    pub integrable: bool,
}

/// `sup_x ∫ L(x,y) dρ(y)` over the whole space.
pub fn check_condition_iv(rho: &DiscreteMeasure, lagrangian: &Lagrangian) -> ConditionIvReport {
    let all: Vec<PointId> = (0..lagrangian.len()).map(PointId).collect();
    check_condition_iv_on(rho, lagrangian, &all)
}

/// As [`check_condition_iv`], restricted to `points`.
pub fn check_condition_iv_on(rho: &DiscreteMeasure, lagrangian: &Lagrangian, points: &[PointId]) -> ConditionIvReport {
    let best = points
        .par_iter()
        .map(|&x| (x, rho.potential(lagrangian, x)))
        .reduce_with(|a, b| if b.1 > a.1 || (b.1 == a.1 && b.0 < a.0) { b } else { a });
    let sup = best.map_or(0.0, |(_, v)| v);
    ConditionIvReport {
        sup,
        argmax: best.map(|(x, _)| x),
        integrable: sup.is_finite(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientConditionsReport {
    /// (a) `c = inf L(x,x) > 0`.
    pub a: bool,
    pub c: f64,
    /// (b) `sup L <= 𝒞 < ∞`.
    pub b: bool,
    pub big_c: f64,
    /// (c) every `K_x` is covered by admissible balls, uniformly in `x`.
    pub c_ok: bool,
    /// Largest cover size needed, when every `K_x` could be covered.
    pub n: Option<usize>,
    /// Points `x` where some element of `K_x` lies in no admissible ball.
    pub uncoverable: Vec<PointId>,
}

/// Covers `K_x` greedily by closed balls `B(y, r)` with `L(x,·) > c/2` on the ball.
/// `None` if some point of `K_x` lies in no admissible ball.
fn admissible_cover(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    x: PointId,
    target: &[PointId],
    r: f64,
    half: f64,
) -> Result<Option<usize>> {
    let row = lagrangian.row(x);
    let mut balls: Vec<Vec<PointId>> = Vec::new();
    for y in space.points() {
        let ball = space.closed_ball(y, r)?;
        if ball.iter().all(|z| row[z.0] > half) {
            balls.push(ball);
        }
    }
    let mut uncovered: BTreeSet<PointId> = target.iter().copied().collect();
    let mut count = 0;
    while let Some(&p) = uncovered.iter().next() {
        let best = balls
            .iter()
            .filter(|b| b.binary_search(&p).is_ok())
            .max_by_key(|b| b.iter().filter(|z| uncovered.contains(z)).count());
        let Some(ball) = best else {
            return Ok(None);
        };
        for z in ball {
            uncovered.remove(z);
        }
        count += 1;
    }
    Ok(Some(count))
}

/// Conditions (a)-(c) under which the limit of a compact-range run is a
/// nonzero EL measure. Balls of radius `delta_cover` serve as cover elements.
pub fn check_sufficient_conditions(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    delta_cover: f64,
) -> Result<SufficientConditionsReport> {
    lagrangian.check_space(space)?;
    if !(delta_cover >= 0.0) || !delta_cover.is_finite() {
        return Err(CvpError::invalid("cover radius must be finite and nonnegative"));
    }
    let c = lagrangian.diagonal_infimum();
    let big_c = lagrangian.sup_value();
    let half = c / 2.0;
    let covers: Vec<(PointId, Option<usize>)> = space
        .all_points()
        .into_par_iter()
        .map(|x| {
            let k_x = lagrangian.effective_range(&[x]);
            admissible_cover(lagrangian, space, x, &k_x, delta_cover, half).map(|n| (x, n))
        })
        .collect::<Result<_>>()?;
    let uncoverable: Vec<PointId> = covers.iter().filter(|(_, n)| n.is_none()).map(|(x, _)| *x).collect();
    let c_ok = uncoverable.is_empty();
    let n = c_ok.then(|| covers.iter().filter_map(|(_, n)| *n).max().unwrap_or(0));
    Ok(SufficientConditionsReport {
        a: c > 0.0,
        c,
        b: big_c.is_finite(),
        big_c,
        c_ok,
        n,
        uncoverable,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NontrivialProbe {
    pub x: PointId,
    pub k_x_size: usize,
    /// `1 / sup_{K_x} L(x,·)`.
    pub c_x: f64,
    /// `ρ(K_x)` for the limit measure.
    pub mass: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NontrivialityReport {
    pub probes: Vec<NontrivialProbe>,
    pub total_mass: f64,
    pub nonzero: bool,
    pub passed: bool,
}

/// Lower bounds `ρ(K_x) >= c_x` at the last stage's support points and `ρ ≠ 0`.
pub fn nontriviality_check(run: &ExhaustionRun, lagrangian: &Lagrangian, tol: f64) -> NontrivialityReport {
    let probes: Vec<NontrivialProbe> = run
        .stages
        .last()
        .map(|s| s.measure.support())
        .unwrap_or_default()
        .into_iter()
        .map(|x| {
            let k_x = lagrangian.effective_range(&[x]);
            let sup = k_x.iter().map(|&y| lagrangian.eval(x, y)).fold(0.0, f64::max);
            let c_x = 1.0 / sup;
            let mass = run.limit.mass_of(&k_x);
            NontrivialProbe {
                x,
                k_x_size: k_x.len(),
                c_x,
                mass,
                ok: mass >= c_x - tol,
            }
        })
        .collect();
    let total_mass = if run.stages.is_empty() { 0.0 } else { run.limit.total() };
    let nonzero = total_mass > 0.0;
    if !nonzero {
        log::error!("limit measure is zero; the run is vacuous");
    }
    let passed = nonzero && probes.iter().all(|p| p.ok);
    NontrivialityReport {
        probes,
        total_mass,
        nonzero,
        passed,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaProbe {
    pub x: PointId,
    /// `ρ(K_{x,ε})`.
    pub mass: f64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaReport {
    pub eps: f64,
    pub n0: u64,
    /// `sup L`.
    pub big_c: f64,
    /// `(1 - ε) / 𝒞`.
    pub gamma: f64,
    pub probes: Vec<GammaProbe>,
    pub passed: bool,
    /// Set when the EL precondition is unmet and no probe was evaluated.
    pub refused: Option<String>,
}

/// `ρ(closed_ball(x, N₀(ε))) >= (1 - ε) / sup L` at every window point of a
/// passing EL report.
pub fn gamma_lower_bound(
    rho: &DiscreteMeasure,
    space: &MetricSpace,
    lagrangian: &Lagrangian,
    profile: &DecayProfile,
    eps: f64,
    el: &ElReport,
    tol: f64,
) -> Result<GammaReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(CvpError::invalid(format!("eps must lie in (0,1), got {eps}")));
    }
    lagrangian.check_space(space)?;
    let n0 = tail_index(profile, eps)?;
    let big_c = lagrangian.sup_value();
    let gamma = (1.0 - eps) / big_c;
    if !el.passed {
        return Ok(GammaReport {
            eps,
            n0,
            big_c,
            gamma,
            probes: Vec::new(),
            passed: false,
            refused: Some("EL report did not pass on the window".to_string()),
        });
    }
    let probes: Vec<GammaProbe> = el
        .window
        .iter()
        .map(|&x| {
            let mass = rho.mass_of(&space.closed_ball(x, n0 as f64)?);
            Ok(GammaProbe {
                x,
                mass,
                ok: mass >= gamma - tol,
            })
        })
        .collect::<Result<_>>()?;
    let passed = probes.iter().all(|p| p.ok);
    Ok(GammaReport {
        eps,
        n0,
        big_c,
        gamma,
        probes,
        passed,
        refused: None,
    })
}

/// `ρ(closed_ball(x, r))` for each radius.
pub fn ball_masses(rho: &DiscreteMeasure, space: &MetricSpace, x: PointId, radii: &[f64]) -> Result<Vec<f64>> {
    radii
        .iter()
        .map(|&r| Ok(rho.mass_of(&space.closed_ball(x, r)?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationMode {
    /// Support of at most `cap` window points.
    CompactSupport,
    /// Support of any size up to the whole window.
    FiniteVolume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerSpec {
    pub mode: VariationMode,
    pub cap: usize,
    /// Optional upper bound on the step `t` (first-order regime).
    pub max_step: Option<f64>,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        SamplerSpec {
            mode: VariationMode::CompactSupport,
            cap: 8,
            max_step: None,
            seed: 0,
            threshold: DEFAULT_DELTA_S_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimalityWitness {
    pub trial: usize,
    pub delta: Vec<(PointId, f64)>,
    pub delta_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MinimalityReport {
    pub trials: usize,
    pub mode: VariationMode,
    pub min_delta_s: f64,
    pub failure_count: usize,
    /// Most negative failures, for replay.
    pub failures: Vec<MinimalityWitness>,
    pub passed: bool,
}

fn dirichlet(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= total);
    v
}

/// Draws one balanced, positivity-preserving variation on `window`.
/// `None` when the drawn points admit no negative part.
pub fn sample_variation(
    rho: &DiscreteMeasure,
    window: &[PointId],
    spec: &SamplerSpec,
    trial: usize,
) -> Option<Vec<(PointId, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(trial as u64);
    let max_k = match spec.mode {
        VariationMode::CompactSupport => spec.cap.min(window.len()),
        VariationMode::FiniteVolume => window.len(),
    };
    if max_k < 2 {
        return None;
    }
    let k = rng.random_range(2..=max_k);
    let chosen: Vec<PointId> = sample(&mut rng, window.len(), k).into_iter().map(|i| window[i]).collect();
    let mut negative: Vec<bool> = chosen
        .iter()
        .map(|&p| rho.weight(p) > 0.0 && rng.random_bool(0.5))
        .collect();
    if !negative.iter().any(|&n| n) {
        let massive: Vec<usize> = (0..k).filter(|&i| rho.weight(chosen[i]) > 0.0).collect();
        if massive.is_empty() {
            return None;
        }
        negative[massive[rng.random_range(0..massive.len())]] = true;
    }
    if negative.iter().all(|&n| n) {
        negative[rng.random_range(0..k)] = false;
    }
    let pos: Vec<PointId> = (0..k).filter(|&i| !negative[i]).map(|i| chosen[i]).collect();
    let neg: Vec<PointId> = (0..k).filter(|&i| negative[i]).map(|i| chosen[i]).collect();
    let p = dirichlet(&mut rng, pos.len());
    let q = dirichlet(&mut rng, neg.len());
    let t_max = neg
        .iter()
        .zip(&q)
        .map(|(&x, &qx)| rho.weight(x) / qx)
        .fold(f64::INFINITY, f64::min);
    let u: f64 = 1.0 - rng.random::<f64>();
    let mut t = STEP_SAFETY * t_max * u;
    if let Some(cap) = spec.max_step {
        t = t.min(cap);
    }
    let mut delta: Vec<(PointId, f64)> = pos.iter().zip(&p).map(|(&x, &px)| (x, t * px)).collect();
    delta.extend(neg.iter().zip(&q).map(|(&x, &qx)| (x, -t * qx)));
    delta.sort_by_key(|(x, _)| *x);
    Some(delta)
}

/// Trial index, action difference and the sampled perturbation.
type Trial = (usize, f64, Vec<(PointId, f64)>);

/// Sampled check that no admissible variation on the window lowers the action.
pub fn test_minimality(
    rho: &DiscreteMeasure,
    lagrangian: &Lagrangian,
    window: &[PointId],
    sampler: &SamplerSpec,
    trials: usize,
) -> Result<MinimalityReport> {
    if trials == 0 {
        return Err(CvpError::invalid("minimality needs at least one trial"));
    }
    if sampler.cap < 2 {
        return Err(CvpError::invalid("variation support cap must be at least 2"));
    }
    rho.check_kernel(lagrangian)?;
    let results: Vec<Trial> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let Some(delta) = sample_variation(rho, window, sampler, trial) else {
                return Ok((trial, 0.0, Vec::new()));
            };
            let variation = make_variation(rho, delta.iter().copied())?;
            let ds = action_difference(rho, &variation, lagrangian)?;
            Ok((trial, ds, delta))
        })
        .collect::<Result<_>>()?;
    let min_delta_s = results.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let mut failures: Vec<MinimalityWitness> = results
        .into_iter()
        .filter(|r| r.1 < sampler.threshold)
        .map(|(trial, delta_s, delta)| MinimalityWitness { trial, delta, delta_s })
        .collect();
    let failure_count = failures.len();
    failures.sort_by(|a, b| a.delta_s.total_cmp(&b.delta_s).then(a.trial.cmp(&b.trial)));
    failures.truncate(MAX_WITNESSES);
    Ok(MinimalityReport {
        trials,
        mode: sampler.mode,
        min_delta_s,
        failure_count,
        failures,
        passed: failure_count == 0,
    })
}
