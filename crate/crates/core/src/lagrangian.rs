//! Lagrangian kernels and the structural hypotheses placed on them.
//!
//! A [`Lagrangian`] is materialized as a dense symmetric matrix over the
//! points of one [`MetricSpace`]. Construction asserts nonnegativity,
//! exact symmetry and a strictly positive diagonal, so every value of this
//! type satisfies those invariants. Lower semi-continuity is automatic on
//! a finite discrete space and is not checked.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};
use crate::space::{Exhaustion, MetricSpace, PointId};

/// Maximum number of violating pairs kept in a decay report.
pub const MAX_WITNESSES: usize = 10;

/// Relative slack on the pointwise decay bound, to absorb rounding in `f / (C E)`.
const DECAY_BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Tent,
    TruncatedGaussian,
    Exponential,
    Matrix,
}

/// Kernel description as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
}

fn one() -> f64 {
    1.0
}

impl KernelSpec {
    pub fn tent(amplitude: f64, range: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Tent,
            amplitude,
            range: Some(range),
            sigma: None,
            matrix: None,
        }
    }

    pub fn truncated_gaussian(amplitude: f64, sigma: f64, range: f64) -> Self {
        KernelSpec {
            kind: KernelKind::TruncatedGaussian,
            amplitude,
            range: Some(range),
            sigma: Some(sigma),
            matrix: None,
        }
    }

    pub fn exponential(amplitude: f64, sigma: f64) -> Self {
        KernelSpec {
            kind: KernelKind::Exponential,
            amplitude,
            range: None,
            sigma: Some(sigma),
            matrix: None,
        }
    }

    pub fn matrix(rows: Vec<Vec<f64>>) -> Self {
        KernelSpec {
            kind: KernelKind::Matrix,
            amplitude: 1.0,
            range: None,
            sigma: None,
            matrix: Some(rows),
        }
    }
}

/// What is known a priori about the range of a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum RangeDecl {
    /// `L(x,y) = 0` whenever `d(x,y) >= r` (tent) or `> r` (truncated gaussian).
    Finite(f64),
    /// The kernel never vanishes.
    Infinite,
    /// No declared range (explicit matrices).
    Unknown,
}

/// Symmetric nonnegative kernel with strictly positive diagonal, bound to one space.
#[derive(Debug, Clone, PartialEq)]
pub struct Lagrangian {
    spec: KernelSpec,
    space_id: String,
    n: usize,
    values: Vec<f64>,
}

/// Builds the kernel described by `spec` on `space`.
pub fn make_kernel(spec: &KernelSpec, space: &MetricSpace) -> Result<Lagrangian> {
    let n = space.len();
    let positive = |name: &str, v: Option<f64>| -> Result<f64> {
        match v {
            Some(v) if v > 0.0 && v.is_finite() => Ok(v),
            Some(v) => Err(CvpError::Construction(format!("{name} must be positive, got {v}"))),
            None => Err(CvpError::Construction(format!(
                "{:?} kernel requires `{name}`",
                spec.kind
            ))),
        }
    };
    let analytic = |f: &dyn Fn(f64) -> f64| -> Vec<f64> {
        let mut values = vec![0.0; n * n];
        for x in space.points() {
            for y in space.points().skip(x.0) {
                let v = f(space.dist(x, y));
                values[x.0 * n + y.0] = v;
                values[y.0 * n + x.0] = v;
            }
        }
        values
    };
    let values = match spec.kind {
        KernelKind::Tent => {
            let a = positive("amplitude", Some(spec.amplitude))?;
            let r = positive("range", spec.range)?;
            analytic(&|d| a * (1.0 - d / r).max(0.0))
        }
        KernelKind::TruncatedGaussian => {
            let a = positive("amplitude", Some(spec.amplitude))?;
            let r = positive("range", spec.range)?;
            let s = positive("sigma", spec.sigma)?;
            analytic(&|d| if d <= r { a * (-(d * d) / (s * s)).exp() } else { 0.0 })
        }
        KernelKind::Exponential => {
            let a = positive("amplitude", Some(spec.amplitude))?;
            let s = positive("sigma", spec.sigma)?;
            analytic(&|d| a * (-d / s).exp())
        }
        KernelKind::Matrix => {
            let rows = spec
                .matrix
                .as_ref()
                .ok_or_else(|| CvpError::Construction("matrix kernel requires `matrix`".into()))?;
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CvpError::Construction(format!(
                    "kernel matrix must be {n}x{n} to match the space"
                )));
            }
            rows.iter().flatten().copied().collect()
        }
    };
    Lagrangian::validated(spec.clone(), space.id().to_string(), n, values)
}

impl Lagrangian {
    /// Kernel given by an explicit matrix over the points of `space`.
    pub fn from_matrix(space: &MetricSpace, rows: Vec<Vec<f64>>) -> Result<Self> {
        make_kernel(&KernelSpec::matrix(rows), space)
    }

    fn validated(spec: KernelSpec, space_id: String, n: usize, values: Vec<f64>) -> Result<Self> {
        for i in 0..n {
            let diag = values[i * n + i];
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(CvpError::Construction(format!(
                    "L(x,x) must be strictly positive, got {diag} at point #{i}"
                )));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(CvpError::Construction(format!(
                        "L must be finite and nonnegative, got {v} at (#{i}, #{j})"
                    )));
                }
                if v != values[j * n + i] {
                    return Err(CvpError::Construction(format!(
                        "L is not symmetric at (#{i}, #{j})"
                    )));
                }
            }
        }
        Ok(Lagrangian {
            spec,
            space_id,
            n,
            values,
        })
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn kind(&self) -> KernelKind {
        self.spec.kind
    }

    pub fn space_id(&self) -> &str {
        &self.space_id
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn eval(&self, x: PointId, y: PointId) -> f64 {
        self.values[x.0 * self.n + y.0]
    }

    /// Row `L(x, ·)`.
    pub fn row(&self, x: PointId) -> &[f64] {
        &self.values[x.0 * self.n..(x.0 + 1) * self.n]
    }

    /// Dense row-major block `L(points_i, points_j)`.
    pub fn block(&self, points: &[PointId]) -> Vec<f64> {
        let m = points.len();
        let mut out = Vec::with_capacity(m * m);
        for &x in points {
            let row = self.row(x);
            out.extend(points.iter().map(|&y| row[y.0]));
        }
        out
    }

    pub fn declared_range(&self) -> RangeDecl {
        match self.spec.kind {
            KernelKind::Tent | KernelKind::TruncatedGaussian => {
                RangeDecl::Finite(self.spec.range.unwrap_or(f64::NAN))
            }
            KernelKind::Exponential => RangeDecl::Infinite,
            KernelKind::Matrix => RangeDecl::Unknown,
        }
    }

    /// `c = min_x L(x,x)`; strictly positive by construction.
    pub fn diagonal_infimum(&self) -> f64 {
        (0..self.n)
            .map(|i| self.values[i * self.n + i])
            .fold(f64::INFINITY, f64::min)
    }

    /// `sup_{x,y} L(x,y)`.
    pub fn sup_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Minimal `K'` with `L(x,y) = 0` for all `x ∈ K`, `y ∉ K'`.
    pub fn effective_range(&self, set: &[PointId]) -> Vec<PointId> {
        (0..self.n)
            .map(PointId)
            .filter(|&y| set.iter().any(|&x| self.eval(x, y) > 0.0))
            .collect()
    }

    pub(crate) fn check_space(&self, space: &MetricSpace) -> Result<()> {
        if self.space_id != space.id() || self.n != space.len() {
            return Err(CvpError::SpaceMismatch(
                self.space_id.clone(),
                space.id().to_string(),
            ));
        }
        Ok(())
    }
}

/// `c = inf_x L(x,x)` over the points of `space`.
pub fn diagonal_infimum(lagrangian: &Lagrangian, space: &MetricSpace) -> Result<f64> {
    lagrangian.check_space(space)?;
    Ok(lagrangian.diagonal_infimum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRange {
    pub stage: usize,
    pub stage_size: usize,
    pub range_size: usize,
    /// `K' ⊆ K + r₀` for kernels with a declared finite range.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub within_thickening: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompactRangeReport {
    pub holds: bool,
    pub declared: RangeDecl,
    pub range_map: Vec<StageRange>,
}

/// Checks that every stage's effective range stays bounded.
///
/// With a declared range `r₀` the effective range must lie in the metric
/// thickening `K + r₀`. Kernels that never vanish fail outright. Explicit
/// matrices pass when no proper stage already reaches the whole space.
pub fn verify_compact_range(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    exhaustion: &Exhaustion,
) -> Result<CompactRangeReport> {
    lagrangian.check_space(space)?;
    let declared = lagrangian.declared_range();
    let mut holds = !matches!(declared, RangeDecl::Infinite);
    let mut range_map = Vec::with_capacity(exhaustion.len());
    for (i, stage) in exhaustion.stages.iter().enumerate() {
        let k_prime = lagrangian.effective_range(stage);
        let within_thickening = match declared {
            RangeDecl::Finite(r0) => {
                let ok = k_prime
                    .iter()
                    .all(|&y| stage.iter().any(|&x| space.dist(x, y) <= r0));
                holds &= ok;
                Some(ok)
            }
            RangeDecl::Unknown => {
                if stage.len() < space.len() && k_prime.len() == space.len() {
                    holds = false;
                }
                None
            }
            RangeDecl::Infinite => None,
        };
        range_map.push(StageRange {
            stage: i,
            stage_size: stage.len(),
            range_size: k_prime.len(),
            within_thickening,
        });
    }
    Ok(CompactRangeReport {
        holds,
        declared,
        range_map,
    })
}

/// Monotonically decreasing integrable tail profile `f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "f", content = "params", rename_all = "snake_case")]
pub enum ProfileShape {
    /// `f(d) = amplitude · (d + shift)^degree · exp(-rate · d)`.
    Exp {
        amplitude: f64,
        rate: f64,
        #[serde(default)]
        degree: u32,
        #[serde(default)]
        shift: f64,
    },
    /// `f(d) = amplitude · (d + shift)^(-exponent)`.
    Poly {
        amplitude: f64,
        exponent: f64,
        shift: f64,
    },
    /// `f(d) = amplitude · max(0, 1 - d / range)`.
    Tent { amplitude: f64, range: f64 },
}

impl ProfileShape {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CvpError::Profile(msg));
        match *self {
            ProfileShape::Exp {
                amplitude,
                rate,
                degree,
                shift,
            } => {
                if !(amplitude >= 0.0) || !amplitude.is_finite() {
                    return bad(format!("amplitude must be nonnegative, got {amplitude}"));
                }
                if !(rate > 0.0) {
                    return bad(format!("exp profile with rate {rate} is not integrable"));
                }
                if !(shift >= 0.0) {
                    return bad(format!("shift must be nonnegative, got {shift}"));
                }
                // d/dd log f = degree/(d+shift) - rate <= 0 on d >= 0
                if degree > 0 && (shift == 0.0 || degree as f64 > rate * shift) {
                    return bad(format!(
                        "exp profile with degree {degree}, rate {rate}, shift {shift} is not decreasing"
                    ));
                }
            }
            ProfileShape::Poly {
                amplitude,
                exponent,
                shift,
            } => {
                if !(amplitude >= 0.0) || !amplitude.is_finite() {
                    return bad(format!("amplitude must be nonnegative, got {amplitude}"));
                }
                if !(exponent > 1.0) {
                    return bad(format!("poly profile with exponent {exponent} is not integrable"));
                }
                if !(shift > 0.0) {
                    return bad(format!("poly profile needs a positive shift, got {shift}"));
                }
            }
            ProfileShape::Tent { amplitude, range } => {
                if !(amplitude >= 0.0) || !amplitude.is_finite() {
                    return bad(format!("amplitude must be nonnegative, got {amplitude}"));
                }
                if !(range > 0.0) || !range.is_finite() {
                    return bad(format!("tent profile needs a positive range, got {range}"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, d: f64) -> f64 {
        match *self {
            ProfileShape::Exp {
                amplitude,
                rate,
                degree,
                shift,
            } => amplitude * (d + shift).powi(degree as i32) * (-rate * d).exp(),
            ProfileShape::Poly {
                amplitude,
                exponent,
                shift,
            } => amplitude * (d + shift).powf(-exponent),
            ProfileShape::Tent { amplitude, range } => amplitude * (1.0 - d / range).max(0.0),
        }
    }

    /// `∫_t^∞ f(x) dx` for `t >= 0`, in closed form.
    pub fn tail_integral(&self, t: f64) -> f64 {
        match *self {
            ProfileShape::Exp {
                amplitude,
                rate,
                degree,
                shift,
            } => {
                // ∫_t^∞ (x+b)^p e^{-kx} dx = e^{-kt} Σ_{j=0}^{p} p!/(p-j)! (t+b)^{p-j} / k^{j+1}
                let u = t + shift;
                let mut falling = 1.0;
                let mut acc = 0.0;
                for j in 0..=degree {
                    acc += falling * u.powi((degree - j) as i32) / rate.powi(j as i32 + 1);
                    falling *= (degree - j) as f64;
                }
                amplitude * (-rate * t).exp() * acc
            }
            ProfileShape::Poly {
                amplitude,
                exponent,
                shift,
            } => amplitude * (t + shift).powf(1.0 - exponent) / (exponent - 1.0),
            ProfileShape::Tent { amplitude, range } => {
                if t >= range {
                    0.0
                } else {
                    let rest = range - t.max(0.0);
                    let head = if t < 0.0 { -t * amplitude } else { 0.0 };
                    head + amplitude * rest * rest / (2.0 * range)
                }
            }
        }
    }
}

/// Decay data: the profile `f`, the entropy ball radius `δ`, the diagonal
/// infimum `c` and `C = 1 + 2/c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayProfile {
    pub shape: ProfileShape,
    pub delta: f64,
    pub c: f64,
    pub big_c: f64,
}

/// Profile description in config files: `{ "f": …, "params": {…}, "delta": … }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    #[serde(flatten)]
    pub shape: ProfileShape,
    pub delta: f64,
}

impl ProfileSpec {
    /// Binds the profile to a kernel, taking `c` from its diagonal.
    pub fn build(&self, lagrangian: &Lagrangian) -> Result<DecayProfile> {
        DecayProfile::new(self.shape, self.delta, lagrangian.diagonal_infimum())
    }
}

impl DecayProfile {
    pub fn new(shape: ProfileShape, delta: f64, c: f64) -> Result<Self> {
        shape.validate()?;
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(CvpError::Profile(format!("delta must be positive, got {delta}")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(CvpError::Profile(format!("c must be positive, got {c}")));
        }
        Ok(DecayProfile {
            shape,
            delta,
            c,
            big_c: 1.0 + 2.0 / c,
        })
    }

    pub fn f(&self, d: f64) -> f64 {
        self.shape.eval(d)
    }

    pub fn tail_integral(&self, t: f64) -> f64 {
        self.shape.tail_integral(t)
    }

    /// `C_x(r, δ) = C · E_x(r + 2, δ)` with the greedy covering number.
    pub fn entropy_constant(&self, space: &MetricSpace, x: PointId, r: f64) -> Result<f64> {
        Ok(self.big_c * space.covering_number(x, r + 2.0, self.delta)? as f64)
    }

    /// Rescales distances by `1/delta`: the returned profile has `δ = 1` and
    /// `f̃(s) = f(δ s)`, matching a metric rescaled with [`MetricSpace::rescaled`].
    pub fn rescaled_to_unit_delta(&self) -> Result<Self> {
        let s = self.delta;
        let shape = match self.shape {
            ProfileShape::Exp {
                amplitude,
                rate,
                degree,
                shift,
            } => ProfileShape::Exp {
                amplitude: amplitude * s.powi(degree as i32),
                rate: rate * s,
                degree,
                shift: shift / s,
            },
            ProfileShape::Poly {
                amplitude,
                exponent,
                shift,
            } => ProfileShape::Poly {
                amplitude: amplitude * s.powf(-exponent),
                exponent,
                shift: shift / s,
            },
            ProfileShape::Tent { amplitude, range } => ProfileShape::Tent {
                amplitude,
                range: range / s,
            },
        };
        DecayProfile::new(shape, 1.0, self.c)
    }
}

/// Smallest integer `N₀ > 1` with `∫_{N₀-1}^∞ f < eps/3`.
pub fn tail_index(profile: &DecayProfile, eps: f64) -> Result<u64> {
    if !(eps > 0.0) {
        return Err(CvpError::invalid(format!("eps must be positive, got {eps}")));
    }
    let target = eps / 3.0;
    let ok = |n: u64| profile.tail_integral((n - 1) as f64) < target;
    if ok(2) {
        return Ok(2);
    }
    let mut hi = 4u64;
    while !ok(hi) {
        if hi > 1 << 52 {
            return Err(CvpError::Profile(format!(
                "tail integral does not drop below {target:e}"
            )));
        }
        hi *= 2;
    }
    let mut lo = hi / 2; // !ok(lo)
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBallReport {
    /// `c/2` threshold used.
    pub threshold: f64,
    /// Largest realized radius whose closed ball satisfies `L(x,·) >= c/2`,
    /// minimized over the points outside the core. `None` if no point is outside.
    pub radius: Option<f64>,
    /// The next realized distance after `radius`, i.e. the first distance at
    /// which `L(x,·) >= c/2` fails (minimized over the points outside the
    /// core). This is the supremum over open balls. `None` means no failure.
    pub sup_bound: Option<f64>,
    /// Point attaining `radius`.
    pub argmin: Option<PointId>,
}

impl EntropyBallReport {
    /// Whether the open-ball supremum reaches `delta`.
    pub fn admits(&self, delta: f64) -> bool {
        self.sup_bound.is_none_or(|s| s >= delta)
    }
}

/// Entropy ball radius `δ` outside the compact core `exclude`.
pub fn entropy_ball_radius(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    exclude: &[PointId],
) -> Result<EntropyBallReport> {
    lagrangian.check_space(space)?;
    let threshold = lagrangian.diagonal_infimum() / 2.0;
    let core: BTreeSet<PointId> = exclude.iter().copied().collect();
    let mut radius: Option<(f64, PointId)> = None;
    let mut sup_bound: Option<f64> = None;
    for x in space.points().filter(|x| !core.contains(x)) {
        let mut by_distance: Vec<(f64, f64)> = space
            .points()
            .map(|y| (space.dist(x, y), lagrangian.eval(x, y)))
            .collect();
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut good = 0.0;
        let mut fail = None;
        for &(d, v) in &by_distance {
            if v < threshold {
                fail = Some(d);
                break;
            }
            good = d;
        }
        if radius.is_none_or(|(r, _)| good < r) {
            radius = Some((good, x));
        }
        if let Some(f) = fail {
            sup_bound = Some(sup_bound.map_or(f, |s: f64| s.min(f)));
        }
    }
    Ok(EntropyBallReport {
        threshold,
        radius: radius.map(|(r, _)| r),
        sup_bound,
        argmin: radius.map(|(_, x)| x),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMode {
    /// Greedy covers: an upper bound on `E_x`, making the check conservative.
    Greedy,
    /// Exact minimal covers; only for balls of at most 16 points.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayWitness {
    pub x: PointId,
    pub y: PointId,
    pub distance: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyDecayReport {
    pub holds: bool,
    /// (a) `c > 0`.
    pub diagonal_ok: bool,
    pub c: f64,
    /// (b) entropy ball radius reaches `δ` outside the core.
    pub ball_ok: bool,
    pub ball: EntropyBallReport,
    /// (c) pointwise bound `L(x,y) <= f(d) / (C · E_x(d + 2, δ))`.
    pub decay_ok: bool,
    pub violations: usize,
    pub witnesses: Vec<DecayWitness>,
}

/// Checks the three decay-in-entropy conditions with greedy covering numbers.
pub fn verify_entropy_decay(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    profile: &DecayProfile,
    core: &[PointId],
) -> Result<EntropyDecayReport> {
    verify_entropy_decay_with(lagrangian, space, profile, core, CoverMode::Greedy)
}

pub fn verify_entropy_decay_with(
    lagrangian: &Lagrangian,
    space: &MetricSpace,
    profile: &DecayProfile,
    core: &[PointId],
    mode: CoverMode,
) -> Result<EntropyDecayReport> {
    lagrangian.check_space(space)?;
    let c = lagrangian.diagonal_infimum();
    let diagonal_ok = c > 0.0;
    let ball = entropy_ball_radius(lagrangian, space, core)?;
    let ball_ok = ball.admits(profile.delta);

    let per_point: Vec<Result<Vec<DecayWitness>>> = space
        .all_points()
        .into_par_iter()
        .map(|x| {
            let mut cache: Vec<(f64, f64)> = Vec::new();
            let mut found = Vec::new();
            for y in space.points().filter(|&y| y != x) {
                let d = space.dist(x, y);
                let e = match cache.iter().find(|(dd, _)| *dd == d) {
                    Some(&(_, e)) => e,
                    None => {
                        let e = match mode {
                            CoverMode::Greedy => space.covering_number(x, d + 2.0, profile.delta)?,
                            CoverMode::Exact => {
                                space.exact_covering_number(x, d + 2.0, profile.delta)?
                            }
                        } as f64;
                        cache.push((d, e));
                        e
                    }
                };
                let bound = profile.f(d) / (profile.big_c * e);
                let value = lagrangian.eval(x, y);
                if value > bound * (1.0 + DECAY_BOUND_SLACK) {
                    found.push(DecayWitness {
                        x,
                        y,
                        distance: d,
                        value,
                        bound,
                    });
                }
            }
            Ok(found)
        })
        .collect();
    let mut violations = 0;
    let mut witnesses = Vec::new();
    for found in per_point {
        let found = found?;
        violations += found.len();
        witnesses.extend(found.into_iter().take(MAX_WITNESSES.saturating_sub(witnesses.len())));
    }
    let decay_ok = violations == 0;
    Ok(EntropyDecayReport {
        holds: diagonal_ok && ball_ok && decay_ok,
        diagonal_ok,
        c,
        ball_ok,
        ball,
        decay_ok,
        violations,
        witnesses,
    })
}
