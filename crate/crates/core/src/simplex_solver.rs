//! Minimization of `S_K(w) = wᵀ L w` over the probability simplex on a
//! compact stage `K`, and certification of the per-stage EL/KKT system
//!
//! ```text
//! (L w)_i = s  on supp w,     (L w)_i >= s  on K,     s = wᵀ L w.
//! ```
//!
//! The local method is Frank-Wolfe with away steps and exact line search,
//! followed by an active-set polish that solves the KKT system on the
//! identified face. The objective is non-convex whenever `L` is indefinite,
//! so several starts are run and the best stationary point wins. Small
//! stages can additionally be certified against [`brute_force_minimizer`],
//! which enumerates every support.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CvpError, Result};
use crate::lagrangian::Lagrangian;
use crate::numeric::csum;
use crate::space::PointId;

/// Hard cap on the support enumeration of the oracle.
pub const ORACLE_HARD_MAX: usize = 16;

/// Relative tolerance under which two objective values count as tied.
const TIE_TOL: f64 = 1e-9;

/// Pivot ratio below which a face system is treated as singular.
const SINGULAR_PIVOT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// KKT residual tolerance.
    pub tol: f64,
    pub max_iter: usize,
    /// Random Dirichlet starts in addition to the barycenter and the best vertex.
    pub restarts: usize,
    pub seed: u64,
    /// Stages with at most this many points are certified by the oracle.
    pub oracle_max: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 100_000,
            restarts: 8,
            seed: 0,
            oracle_max: 12,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(CvpError::invalid(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(CvpError::invalid("solver max_iter must be at least 1"));
        }
        Ok(())
    }
}

/// `S_K` on one stage: the stage points and the kernel block over them.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactProblem {
    points: Vec<PointId>,
    block: Vec<f64>,
    pub options: SolverOptions,
}

impl CompactProblem {
    pub fn new(lagrangian: &Lagrangian, stage: &[PointId], options: SolverOptions) -> Result<Self> {
        if stage.is_empty() {
            return Err(CvpError::invalid("compact stage must be nonempty"));
        }
        if let Some(p) = stage.iter().find(|p| p.0 >= lagrangian.len()) {
            return Err(CvpError::UnknownPoint(format!("#{}", p.0)));
        }
        options.validate()?;
        Ok(CompactProblem {
            points: stage.to_vec(),
            block: lagrangian.block(stage),
            options,
        })
    }

    /// Problem on an explicit symmetric matrix with positive diagonal;
    /// points are numbered `0..n`.
    pub fn from_matrix(rows: &[Vec<f64>], options: SolverOptions) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(CvpError::invalid("kernel block must be a nonempty square matrix"));
        }
        options.validate()?;
        for i in 0..n {
            if !(rows[i][i] > 0.0) {
                return Err(CvpError::Construction(format!(
                    "diagonal entry {i} must be strictly positive"
                )));
            }
            for j in 0..n {
                if !rows[i][j].is_finite() || rows[i][j] < 0.0 {
                    return Err(CvpError::Construction(format!(
                        "entry ({i},{j}) must be finite and nonnegative"
                    )));
                }
                if rows[i][j] != rows[j][i] {
                    return Err(CvpError::Construction(format!("block is not symmetric at ({i},{j})")));
                }
            }
        }
        Ok(CompactProblem {
            points: (0..n).map(PointId).collect(),
            block: rows.iter().flatten().copied().collect(),
            options,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[PointId] {
        &self.points
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.block[i * self.points.len() + j]
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.points.len();
        &self.block[i * n..(i + 1) * n]
    }

    fn scale(&self) -> f64 {
        self.block.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
    }

    fn apply(&self, w: &[f64]) -> Vec<f64> {
        (0..self.len())
            .map(|i| csum(self.row(i).iter().zip(w).map(|(a, b)| a * b)))
            .collect()
    }
}

/// Per-stage KKT record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktResiduals {
    /// `max_{i ∈ supp w} |(Lw)_i - s|`.
    pub max_abs_on_support: f64,
    /// `min_{i ∈ K} (Lw)_i - s`; nonnegative up to tolerance at a KKT point.
    pub min_residual: f64,
    /// `s = wᵀ L w`.
    pub s: f64,
}

impl KktResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.max_abs_on_support <= tol && self.min_residual >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompactSolution {
    pub points: Vec<PointId>,
    /// Normalized weights aligned with `points`.
    pub weights: Vec<f64>,
    pub value: f64,
    /// EL parameter `s`; equals `value` at a stationary point.
    pub s_param: f64,
    pub kkt: KktResiduals,
    /// Set only when the support enumeration confirmed global optimality.
    pub certified_global: bool,
    /// Non-unique minimizer (tied supports or a singular face system).
    pub degenerate: bool,
}

impl CompactSolution {
    /// Indices (into `points`) with positive weight.
    pub fn support(&self) -> Vec<usize> {
        support_of(&self.weights)
    }

    pub fn support_points(&self) -> Vec<PointId> {
        self.support().into_iter().map(|i| self.points[i]).collect()
    }
}

fn support_of(w: &[f64]) -> Vec<usize> {
    w.iter()
        .enumerate()
        .filter(|(_, &x)| x > 0.0)
        .map(|(i, _)| i)
        .collect()
}

fn residuals_from(w: &[f64], lw: &[f64]) -> KktResiduals {
    let s = csum(w.iter().zip(lw).map(|(a, b)| a * b));
    let mut max_abs = 0.0f64;
    let mut min_res = f64::INFINITY;
    for (wi, li) in w.iter().zip(lw) {
        let r = li - s;
        if *wi > 0.0 {
            max_abs = max_abs.max(r.abs());
        }
        min_res = min_res.min(r);
    }
    KktResiduals {
        max_abs_on_support: max_abs,
        min_residual: min_res,
        s,
    }
}

/// KKT residuals of `solution` with respect to `problem`.
pub fn kkt_residuals(solution: &CompactSolution, problem: &CompactProblem) -> Result<KktResiduals> {
    if solution.weights.len() != problem.len() {
        return Err(CvpError::invalid("solution weights do not match the problem size"));
    }
    let lw = problem.apply(&solution.weights);
    Ok(residuals_from(&solution.weights, &lw))
}

/// Residuals of an arbitrary weight vector on `problem`.
pub fn residuals_for(problem: &CompactProblem, weights: &[f64]) -> Result<KktResiduals> {
    if weights.len() != problem.len() {
        return Err(CvpError::invalid("weights do not match the problem size"));
    }
    Ok(residuals_from(weights, &problem.apply(weights)))
}

/// Solves `L_SS u = s 1`, `Σ u = 1` on the face `S`. `None` if singular.
fn face_system(problem: &CompactProblem, support: &[usize]) -> Option<(Vec<f64>, f64)> {
    let m = support.len();
    let a = DMatrix::from_fn(m + 1, m + 1, |i, j| match (i < m, j < m) {
        (true, true) => problem.entry(support[i], support[j]),
        (true, false) => -1.0,
        (false, true) => 1.0,
        (false, false) => 0.0,
    });
    let mut b = DVector::zeros(m + 1);
    b[m] = 1.0;
    let lu = a.full_piv_lu();
    let diag = lu.u().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(d.abs()), hi.max(d.abs())));
    if !(lo > SINGULAR_PIVOT * hi) {
        return None;
    }
    let x = lu.solve(&b)?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((x.iter().take(m).copied().collect(), x[m]))
}

struct Local {
    w: Vec<f64>,
    value: f64,
    kkt: KktResiduals,
    iterations: usize,
    singular: bool,
}

impl Local {
    fn new(problem: &CompactProblem, mut w: Vec<f64>, iterations: usize, singular: bool) -> Self {
        let total = csum(w.iter().copied());
        w.iter_mut().for_each(|x| *x /= total);
        let lw = problem.apply(&w);
        let kkt = residuals_from(&w, &lw);
        Local {
            value: kkt.s,
            w,
            kkt,
            iterations,
            singular,
        }
    }
}

/// Away-step Frank-Wolfe until both gaps fall below `gap_tol` or `budget` runs out.
fn frank_wolfe(problem: &CompactProblem, w: &mut [f64], gap_tol: f64, budget: usize) -> usize {
    let n = problem.len();
    let mut lw = problem.apply(w);
    for it in 0..budget {
        if it % 256 == 255 {
            lw = problem.apply(w);
        }
        let s: f64 = w.iter().zip(&lw).map(|(a, b)| a * b).sum();
        let (i_fw, &l_fw) = lw
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty");
        let (j_aw, l_aw) = (0..n)
            .filter(|&j| w[j] > 0.0)
            .map(|j| (j, lw[j]))
            .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("support is nonempty");
        let gap_fw = s - l_fw;
        let gap_aw = l_aw - s;
        if gap_fw.max(gap_aw) <= gap_tol {
            return it;
        }
        // f(w + γ d) = f(w) + 2γ dᵀLw + γ² dᵀLd
        let toward = gap_fw >= gap_aw || w[j_aw] >= 1.0;
        let (slope, curvature, gamma_max) = if toward {
            (l_fw - s, problem.entry(i_fw, i_fw) - 2.0 * l_fw + s, 1.0)
        } else {
            let wj = w[j_aw];
            (s - l_aw, s - 2.0 * l_aw + problem.entry(j_aw, j_aw), wj / (1.0 - wj))
        };
        let gamma = if curvature > 0.0 {
            (-slope / curvature).clamp(0.0, gamma_max)
        } else {
            gamma_max
        };
        if gamma <= 0.0 {
            return it;
        }
        if toward {
            let row = problem.row(i_fw);
            for k in 0..n {
                w[k] *= 1.0 - gamma;
                lw[k] = (1.0 - gamma) * lw[k] + gamma * row[k];
            }
            w[i_fw] += gamma;
        } else {
            let row = problem.row(j_aw);
            for k in 0..n {
                w[k] *= 1.0 + gamma;
                lw[k] = (1.0 + gamma) * lw[k] - gamma * row[k];
            }
            w[j_aw] -= gamma;
            if gamma == gamma_max || w[j_aw] < 0.0 {
                w[j_aw] = 0.0;
            }
        }
    }
    budget
}

/// Active-set refinement: solve the face system on the current support,
/// drop negative weights, add violated off-support indices.
fn polish(problem: &CompactProblem, w: &[f64]) -> Option<Vec<f64>> {
    let n = problem.len();
    let add_tol = 1e-13 * problem.scale();
    let mut support = support_of(w);
    for _ in 0..(4 * n + 16) {
        let (u, s) = face_system(problem, &support)?;
        if let Some((k, _)) = u
            .iter()
            .enumerate()
            .filter(|(_, &v)| v <= 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1))
        {
            support.remove(k);
            continue;
        }
        let mut full = vec![0.0; n];
        for (&i, &v) in support.iter().zip(&u) {
            full[i] = v;
        }
        let lw = problem.apply(&full);
        let violated = (0..n)
            .filter(|i| support.binary_search(i).is_err())
            .map(|i| (i, lw[i] - s))
            .filter(|&(_, r)| r < -add_tol)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match violated {
            Some((j, _)) => {
                let pos = support.binary_search(&j).unwrap_err();
                support.insert(pos, j);
            }
            None => return Some(full),
        }
    }
    None
}

fn local_solve(problem: &CompactProblem, start: Vec<f64>) -> Local {
    let opts = &problem.options;
    let scale = problem.scale();
    let tol = opts.tol;
    let mut w = start;
    let mut used = 0;
    let mut last_singular = false;
    let phases = [(tol.max(1e-6) * scale, opts.max_iter / 10 + 1), (0.1 * tol * scale, opts.max_iter)];
    for (gap_tol, cap) in phases {
        let budget = cap.min(opts.max_iter).saturating_sub(used);
        used += frank_wolfe(problem, &mut w, gap_tol, budget);
        let fw = Local::new(problem, w.clone(), used, false);
        match polish(problem, &w) {
            Some(p) => {
                last_singular = false;
                let polished = Local::new(problem, p, used, false);
                if polished.kkt.within(tol) && polished.value <= fw.value + TIE_TOL * fw.value.abs().max(1.0) {
                    return polished;
                }
            }
            None => last_singular = true,
        }
        if fw.kkt.within(tol) {
            return Local { singular: last_singular, ..fw };
        }
        if used >= opts.max_iter {
            break;
        }
    }
    Local::new(problem, w, used, last_singular)
}

fn lex_less(a: &[usize], b: &[usize]) -> bool {
    a < b
}

/// Picks the lowest value; near-ties go to the lexicographically smallest support.
fn pick_best<'a, I>(candidates: I) -> Option<(usize, bool)>
where
    I: IntoIterator<Item = (usize, f64, &'a [usize])>,
{
    let mut best: Option<(usize, f64, &[usize])> = None;
    let mut tie_other_support = false;
    for (idx, value, support) in candidates {
        match best {
            None => best = Some((idx, value, support)),
            Some((_, bv, bs)) => {
                let tol = TIE_TOL * bv.abs().max(1.0);
                if value < bv - tol {
                    best = Some((idx, value, support));
                    tie_other_support = false;
                } else if (value - bv).abs() <= tol {
                    if support != bs {
                        tie_other_support = true;
                    }
                    if lex_less(support, bs) || (support == bs && value < bv) {
                        best = Some((idx, value.min(bv), support));
                    }
                }
            }
        }
    }
    best.map(|(i, _, _)| (i, tie_other_support))
}

fn dirichlet_start(n: usize, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut w: Vec<f64> = (0..n).map(|_| Exp1.sample(&mut rng)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    w
}

/// Multi-start minimization of `S_K` with the default starts.
pub fn minimize_on_compact(problem: &CompactProblem) -> Result<CompactSolution> {
    minimize_with_starts(problem, &[])
}

/// As [`minimize_on_compact`], with additional caller-supplied starts
/// (any nonnegative vectors with positive sum; they are normalized).
pub fn minimize_with_starts(problem: &CompactProblem, extra: &[Vec<f64>]) -> Result<CompactSolution> {
    let n = problem.len();
    let opts = problem.options;
    if n == 1 {
        let v = problem.entry(0, 0);
        return Ok(CompactSolution {
            points: problem.points.clone(),
            weights: vec![1.0],
            value: v,
            s_param: v,
            kkt: KktResiduals {
                max_abs_on_support: 0.0,
                min_residual: 0.0,
                s: v,
            },
            certified_global: true,
            degenerate: false,
        });
    }

    let mut starts: Vec<Vec<f64>> = Vec::with_capacity(opts.restarts + 2 + extra.len());
    starts.push(vec![1.0 / n as f64; n]);
    let best_vertex = (0..n)
        .min_by(|&a, &b| problem.entry(a, a).total_cmp(&problem.entry(b, b)))
        .expect("nonempty");
    let mut vertex = vec![0.0; n];
    vertex[best_vertex] = 1.0;
    starts.push(vertex);
    for w in extra {
        if w.len() != n || w.iter().any(|x| !(*x >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) {
            return Err(CvpError::invalid("warm start must be a nonnegative vector of the stage size"));
        }
        let total: f64 = w.iter().sum();
        starts.push(w.iter().map(|x| x / total).collect());
    }
    starts.extend((0..opts.restarts).map(|k| dirichlet_start(n, opts.seed, k as u64)));

    let locals: Vec<Local> = starts.into_par_iter().map(|s| local_solve(problem, s)).collect();
    let supports: Vec<Vec<usize>> = locals.iter().map(|l| support_of(&l.w)).collect();
    let converged = locals
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kkt.within(opts.tol))
        .map(|(i, l)| (i, l.value, supports[i].as_slice()));
    let Some((best, tied)) = pick_best(converged) else {
        let worst = locals
            .iter()
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .expect("at least one start");
        return Err(CvpError::SolverFailure {
            iterations: worst.iterations,
            best_value: worst.value,
            best_weights: worst.w.clone(),
            residuals: worst.kkt,
        });
    };
    let local = &locals[best];
    let mut solution = CompactSolution {
        points: problem.points.clone(),
        weights: local.w.clone(),
        value: local.value,
        s_param: local.kkt.s,
        kkt: local.kkt,
        certified_global: false,
        degenerate: tied || local.singular,
    };
    if n <= opts.oracle_max.min(ORACLE_HARD_MAX) {
        let oracle = brute_force_minimizer(problem)?;
        let tol = TIE_TOL * oracle.value.abs().max(1.0);
        solution.certified_global = solution.value <= oracle.value + tol;
        if !solution.certified_global {
            log::warn!(
                "multi-start value {} exceeds the enumerated global minimum {}",
                solution.value,
                oracle.value
            );
        }
    }
    Ok(solution)
}

/// Global minimum of `S_K` by enumerating every nonempty support.
///
/// For each support `S` the face system `L_SS w = s 1, Σ w = 1` is solved;
/// candidates with `w > 0` and `(Lw)_i >= s` off `S` are kept, together with
/// all simplex vertices. Singular face systems are skipped.
pub fn brute_force_minimizer(problem: &CompactProblem) -> Result<CompactSolution> {
    let n = problem.len();
    if n > ORACLE_HARD_MAX {
        return Err(CvpError::Size {
            size: n,
            limit: ORACLE_HARD_MAX,
        });
    }
    let off_tol = 1e-12 * problem.scale();
    let masks: Vec<u32> = (1u32..(1u32 << n)).collect();
    let mut candidates: Vec<(Vec<usize>, Vec<f64>, f64)> = masks
        .into_par_iter()
        .filter_map(|mask| {
            let support: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let Some((u, s)) = face_system(problem, &support) else {
                log::debug!("oracle: singular face system on support {support:?}");
                return None;
            };
            if u.iter().any(|&v| !(v > 0.0)) {
                return None;
            }
            let mut w = vec![0.0; n];
            for (&i, &v) in support.iter().zip(&u) {
                w[i] = v;
            }
            let lw = problem.apply(&w);
            let feasible = (0..n)
                .filter(|i| mask & (1 << i) == 0)
                .all(|i| lw[i] >= s - off_tol);
            feasible.then(|| {
                let value = residuals_from(&w, &lw).s;
                (support, w, value)
            })
        })
        .collect();
    for i in 0..n {
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        candidates.push((vec![i], w, problem.entry(i, i)));
    }
    let (best, tied) = pick_best(
        candidates
            .iter()
            .enumerate()
            .map(|(k, (s, _, v))| (k, *v, s.as_slice())),
    )
    .expect("vertices are always candidates");
    let (_, w, _) = &candidates[best];
    let kkt = residuals_from(w, &problem.apply(w));
    Ok(CompactSolution {
        points: problem.points.clone(),
        weights: w.clone(),
        value: kkt.s,
        s_param: kkt.s,
        kkt,
        certified_global: true,
        degenerate: tied,
    })
}
