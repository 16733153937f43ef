//! Config-driven commands behind the `cvp` binary.
//!
//! * `solve` runs an exhaustion and writes `run.json` plus one CSV per stage.
//! * `verify` re-evaluates named checks on a `run.json` and writes `verify.json`.
//! * `oracle` prints the enumerated global minimizer of a small kernel matrix.
//! * `sweep` runs the cartesian product of config overrides.
//!
//! Exit codes: 0 all checks passed, 1 usage/config/IO error, 2 EL failure,
//! 3 minimality witness found, 4 another condition check failed.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::el_analysis::{
    check_condition_iv, check_condition_iv_on, check_sufficient_conditions, gamma_lower_bound, nontriviality_check,
    test_minimality, verify_el, SamplerSpec, VariationMode, DEFAULT_DELTA_S_THRESHOLD, DEFAULT_EL_TOL,
};
use crate::lagrangian::{make_kernel, tail_index, verify_compact_range, verify_entropy_decay, KernelSpec, Lagrangian, ProfileSpec};
use crate::measure::{DiscreteMeasure, MeasureFile};
use crate::pipeline::{
    check_ell_convergence, check_support_approximation, local_mass_bound_check, run_exhaustion, stage_residuals,
    tail_mass, ExhaustionRun, RunDiagnostics, RunOptions, ScaledMinimizer, StageResiduals, WindowPolicy,
};
use crate::report::{sha256_hex, to_csv_bytes, to_json_bytes, write_atomic, write_json};
use crate::simplex_solver::{brute_force_minimizer, CompactProblem, KktResiduals, SolverOptions, ORACLE_HARD_MAX};
use crate::space::{Exhaustion, MetricSpace, PointId, SpaceFile};
use crate::CvpError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_EL: i32 = 2;
pub const EXIT_MINIMALITY: i32 = 3;
pub const EXIT_CONDITION: i32 = 4;

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExhaustionSpec {
    /// Label of the center point.
    pub center: String,
    pub radii: Vec<f64>,
}

/// A check, written either as its bare name or as an object with parameters.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_cover: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<VariationMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core_radius: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CheckEntry {
    Name(String),
    Full(CheckSpec),
}

fn checks_from_entries<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Vec<CheckSpec>, D::Error> {
    let entries: Vec<CheckEntry> = Deserialize::deserialize(d)?;
    Ok(entries
        .into_iter()
        .map(|e| match e {
            CheckEntry::Name(name) => CheckSpec {
                name,
                ..CheckSpec::default()
            },
            CheckEntry::Full(spec) => spec,
        })
        .collect())
}

fn default_window() -> WindowPolicy {
    WindowPolicy::Range
}

fn default_stabilization() -> f64 {
    1e-6
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Space file, relative to the config file.
    pub space: PathBuf,
    pub kernel: KernelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileSpec>,
    pub exhaustion: ExhaustionSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_window")]
    pub window: WindowPolicy,
    #[serde(default = "default_stabilization")]
    pub stabilization_tol: f64,
    #[serde(default)]
    pub warm_start: bool,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default, deserialize_with = "checks_from_entries")]
    pub checks: Vec<CheckSpec>,
    /// Output directory, relative to the config file. Not part of the report.
    #[serde(default, skip_serializing)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            solver: SolverOptions {
                seed: self.seed,
                ..self.solver
            },
            window: self.window,
            stabilization_tol: self.stabilization_tol,
            warm_start: self.warm_start,
            stride: self.stride,
        }
    }

    pub fn hash(&self) -> anyhow::Result<String> {
        Ok(sha256_hex(&to_json_bytes(self)?))
    }
}

/// Reads a config; returns it with the directory relative paths resolve against.
pub fn load_config(path: &Path) -> anyhow::Result<(RunConfig, PathBuf)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let config: RunConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    Ok((config, base_dir(path)))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn load_space(path: &Path) -> anyhow::Result<MetricSpace> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read space file {}", path.display()))?;
    let file: SpaceFile =
        serde_json::from_str(&text).with_context(|| format!("invalid space file {}", path.display()))?;
    MetricSpace::from_file(&file).with_context(|| format!("invalid space in {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub index: usize,
    pub radius: f64,
    pub size: usize,
    pub lambda: f64,
    pub s: f64,
    pub kkt: KktResiduals,
    pub residuals: StageResiduals,
    pub degenerate: bool,
    pub certified_global: bool,
    pub measure: MeasureFile,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub config: RunConfig,
    pub space: SpaceFile,
    pub kernel: KernelSpec,
    pub profile: Option<ProfileSpec>,
    pub exhaustion: Exhaustion,
    pub stages: Vec<StageRecord>,
    pub limit: MeasureFile,
    pub window: Vec<String>,
    pub diagnostics: RunDiagnostics,
}

/// Everything needed to evaluate checks on a finished run.
pub struct RunContext {
    pub report: RunReport,
    pub space: MetricSpace,
    pub lagrangian: Lagrangian,
    pub run: ExhaustionRun,
}

impl RunReport {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read run report {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid run report {}", path.display()))
    }

    pub fn into_context(self) -> anyhow::Result<RunContext> {
        let space = MetricSpace::from_file(&self.space)?;
        let lagrangian = make_kernel(&self.kernel, &space)?;
        if self.stages.len() != self.exhaustion.len() {
            bail!("run report has {} stages but {} exhaustion stages", self.stages.len(), self.exhaustion.len());
        }
        let stages = self
            .stages
            .iter()
            .zip(&self.exhaustion.stages)
            .map(|(rec, points)| {
                Ok(ScaledMinimizer {
                    stage_index: rec.index,
                    points: points.clone(),
                    measure: DiscreteMeasure::from_file(&space, &rec.measure)?,
                    lambda: rec.lambda,
                    s_unscaled: rec.s,
                    kkt: rec.kkt,
                    degenerate: rec.degenerate,
                    certified_global: rec.certified_global,
                })
            })
            .collect::<crate::Result<Vec<_>>>()?;
        let window = self
            .window
            .iter()
            .map(|l| space.lookup(l))
            .collect::<crate::Result<Vec<_>>>()?;
        let run = ExhaustionRun {
            exhaustion: self.exhaustion.clone(),
            stages,
            limit: DiscreteMeasure::from_file(&space, &self.limit)?,
            window,
            diagnostics: self.diagnostics.clone(),
        };
        Ok(RunContext {
            report: self,
            space,
            lagrangian,
            run,
        })
    }
}

#[derive(Serialize)]
struct StageRow<'a> {
    point: &'a str,
    ell: f64,
    weight: f64,
}

/// Runs the exhaustion described by `config` and writes `run.json` and the
/// stage CSVs into `out`. Returns the path of `run.json`.
pub fn cmd_solve(config: &RunConfig, base: &Path, out: &Path) -> anyhow::Result<PathBuf> {
    let space = load_space(&base.join(&config.space))?;
    let lagrangian = make_kernel(&config.kernel, &space).context("cannot build the kernel")?;
    if let Some(p) = &config.profile {
        p.build(&lagrangian).context("invalid decay profile")?;
    }
    let center = space
        .lookup(&config.exhaustion.center)
        .context("exhaustion center is not a point of the space")?;
    let exhaustion = space
        .build_exhaustion(center, &config.exhaustion.radii)
        .context("invalid exhaustion radii")?;
    let run = run_exhaustion(&space, &lagrangian, &exhaustion, &config.run_options())?;

    let stages: Vec<StageRecord> = run
        .stages
        .iter()
        .zip(&run.diagnostics.residuals)
        .map(|(s, r)| StageRecord {
            index: s.stage_index,
            radius: run.exhaustion.radii[s.stage_index],
            size: s.points.len(),
            lambda: s.lambda,
            s: s.s_unscaled,
            kkt: s.kkt,
            residuals: *r,
            degenerate: s.degenerate,
            certified_global: s.certified_global,
            measure: s.measure.to_file(&space),
        })
        .collect();
    let report = RunReport {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        config_hash: config.hash()?,
        config: config.clone(),
        space: space.to_file(),
        kernel: config.kernel.clone(),
        profile: config.profile,
        exhaustion: run.exhaustion.clone(),
        stages,
        limit: run.limit.to_file(&space),
        window: run.window.iter().map(|&x| space.label(x).to_string()).collect(),
        diagnostics: run.diagnostics.clone(),
    };
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    for s in &run.stages {
        let rows = s.points.iter().map(|&x| StageRow {
            point: space.label(x),
            ell: s.measure.potential(&lagrangian, x) - 1.0,
            weight: s.measure.weight(x),
        });
        write_atomic(&out.join(format!("stage_{:03}.csv", s.stage_index)), &to_csv_bytes(rows)?)?;
    }
    let path = out.join("run.json");
    write_json(&path, &report)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Normalization,
    MassBound,
    El,
    ConditionIv,
    Sufficient,
    Nontriviality,
    Gamma,
    Minimality,
    Support,
    EllConvergence,
    EntropyDecay,
    CompactRange,
    TailMass,
}

impl CheckKind {
    pub const ALL: [CheckKind; 13] = [
        CheckKind::Normalization,
        CheckKind::MassBound,
        CheckKind::El,
        CheckKind::ConditionIv,
        CheckKind::Sufficient,
        CheckKind::Nontriviality,
        CheckKind::Gamma,
        CheckKind::Minimality,
        CheckKind::Support,
        CheckKind::EllConvergence,
        CheckKind::EntropyDecay,
        CheckKind::CompactRange,
        CheckKind::TailMass,
    ];

    pub fn parse(name: &str) -> crate::Result<Self> {
        serde_json::from_value(Value::String(name.to_string())).map_err(|_| {
            let known: Vec<String> = Self::ALL
                .iter()
                .map(|k| serde_json::to_value(k).expect("unit variant").as_str().unwrap_or_default().to_string())
                .collect();
            CvpError::InvalidInput(format!("unknown check `{name}` (known: {})", known.join(", ")))
        })
    }

    /// Exit code reported when this check fails.
    pub fn failure_code(self) -> i32 {
        match self {
            CheckKind::El | CheckKind::Normalization => EXIT_EL,
            CheckKind::Minimality => EXIT_MINIMALITY,
            _ => EXIT_CONDITION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: CheckKind,
    pub passed: bool,
    pub detail: Value,
}

/// Contents of `verify.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub run_hash: String,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
    pub exit_code: i32,
}

/// Overrides applied on top of the per-check parameters.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct VerifyOverrides {
    pub trials: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

fn to_detail<T: Serialize>(value: &T) -> anyhow::Result<Value> {
    Ok(serde_json::to_value(value)?)
}

fn require_profile(ctx: &RunContext, name: &str) -> anyhow::Result<crate::DecayProfile> {
    let spec = ctx
        .report
        .profile
        .ok_or_else(|| CvpError::InvalidInput(format!("check `{name}` needs a decay profile in the config")))?;
    Ok(spec.build(&ctx.lagrangian)?)
}

fn evenly_spaced(points: &[PointId], count: usize) -> Vec<PointId> {
    if points.len() <= count {
        return points.to_vec();
    }
    (0..count).map(|i| points[i * points.len() / count]).collect()
}

fn run_check(ctx: &RunContext, kind: CheckKind, spec: &CheckSpec, ov: &VerifyOverrides) -> anyhow::Result<CheckOutcome> {
    let tol = |default: f64| ov.tol.or(spec.tol).unwrap_or(default);
    let space = &ctx.space;
    let l = &ctx.lagrangian;
    let run = &ctx.run;
    let (passed, detail) = match kind {
        CheckKind::Normalization => {
            let tol = tol(1e-7);
            let residuals: Vec<StageResiduals> = run.stages.iter().map(|s| stage_residuals(s, l)).collect();
            let passed = residuals.iter().all(|r| {
                r.inf_on_stage.abs() <= tol && r.max_abs_on_support <= tol && r.normalization_error.abs() <= 1e-12
            });
            (passed, to_detail(&residuals)?)
        }
        CheckKind::MassBound => {
            let tol = tol(1e-8);
            let budget = spec.probes.unwrap_or(50).max(1);
            let per_stage = budget.div_ceil(run.stages.len().max(1));
            let radius = spec.radius.unwrap_or_else(|| space.diameter());
            let mut reports = Vec::new();
            for s in &run.stages {
                let probes = evenly_spaced(&s.points, per_stage);
                reports.push(local_mass_bound_check(s, space, l, &probes, radius, tol)?);
            }
            (reports.iter().all(|r| r.violations == 0), to_detail(&reports)?)
        }
        CheckKind::El => {
            let r = verify_el(&run.limit, l, &run.window, tol(DEFAULT_EL_TOL))?;
            (r.passed, to_detail(&r)?)
        }
        CheckKind::ConditionIv => {
            let all = check_condition_iv(&run.limit, l);
            let window = check_condition_iv_on(&run.limit, l, &run.window);
            (
                all.integrable,
                serde_json::json!({ "all": to_detail(&all)?, "window": to_detail(&window)? }),
            )
        }
        CheckKind::Sufficient => {
            let delta = spec.delta_cover.unwrap_or(space.min_separation() / 2.0);
            let r = check_sufficient_conditions(l, space, delta)?;
            (r.a && r.b && r.c_ok, to_detail(&r)?)
        }
        CheckKind::Nontriviality => {
            let r = nontriviality_check(run, l, tol(1e-8));
            (r.passed, to_detail(&r)?)
        }
        CheckKind::Gamma => {
            let profile = require_profile(ctx, "gamma")?;
            let el = verify_el(&run.limit, l, &run.window, DEFAULT_EL_TOL)?;
            let r = gamma_lower_bound(&run.limit, space, l, &profile, spec.eps.unwrap_or(0.5), &el, tol(1e-8))?;
            (r.passed, to_detail(&r)?)
        }
        CheckKind::Minimality => {
            let trials = ov.trials.or(spec.trials).unwrap_or(10_000);
            if trials == 0 {
                return Err(CvpError::invalid("minimality needs --trials >= 1").into());
            }
            let sampler = SamplerSpec {
                mode: spec.mode.unwrap_or(VariationMode::CompactSupport),
                cap: spec.cap.unwrap_or(8),
                max_step: spec.max_step,
                seed: ov.seed.unwrap_or(ctx.report.config.seed),
                threshold: -tol(-DEFAULT_DELTA_S_THRESHOLD),
            };
            let r = test_minimality(&run.limit, l, &run.window, &sampler, trials)?;
            (r.passed, to_detail(&r)?)
        }
        CheckKind::Support => {
            let r = check_support_approximation(run, space);
            (r.passed, to_detail(&r)?)
        }
        CheckKind::EllConvergence => {
            let r = check_ell_convergence(run, space, l, &run.window, tol(1e-9))?;
            (r.passed, to_detail(&r)?)
        }
        CheckKind::EntropyDecay => {
            let profile = require_profile(ctx, "entropy_decay")?;
            let core = match spec.core_radius {
                Some(r) => space.closed_ball(run.exhaustion.center, r)?,
                None => Vec::new(),
            };
            let r = verify_entropy_decay(l, space, &profile, &core)?;
            (r.holds, to_detail(&r)?)
        }
        CheckKind::CompactRange => {
            let r = verify_compact_range(l, space, &run.exhaustion)?;
            (r.holds, to_detail(&r)?)
        }
        CheckKind::TailMass => {
            let profile = require_profile(ctx, "tail_mass")?;
            let eps = spec.eps.unwrap_or(0.3);
            let n0 = tail_index(&profile, eps)?;
            let radius = spec.radius.unwrap_or((n0 - 1) as f64);
            let mut worst = 0.0f64;
            for s in &run.stages {
                for &x in &run.window {
                    worst = worst.max(tail_mass(&s.measure, space, l, x, radius)?);
                }
            }
            (
                worst < eps,
                serde_json::json!({ "eps": eps, "n0": n0, "radius": radius, "max_tail": worst }),
            )
        }
    };
    Ok(CheckOutcome {
        name: kind,
        passed,
        detail,
    })
}

/// Resolves check names against the config's check list (for parameters).
pub fn resolve_checks(config: &RunConfig, names: &[String]) -> crate::Result<Vec<(CheckKind, CheckSpec)>> {
    let specs: Vec<CheckSpec> = if names.is_empty() {
        if config.checks.is_empty() {
            vec![CheckSpec {
                name: "el".to_string(),
                ..CheckSpec::default()
            }]
        } else {
            config.checks.clone()
        }
    } else {
        names
            .iter()
            .map(|n| {
                config.checks.iter().find(|c| &c.name == n).cloned().unwrap_or_else(|| CheckSpec {
                    name: n.clone(),
                    ..CheckSpec::default()
                })
            })
            .collect()
    };
    specs
        .into_iter()
        .map(|s| Ok((CheckKind::parse(&s.name)?, s)))
        .collect()
}

/// Aggregated exit code: EL failures dominate minimality, which dominates conditions.
pub fn exit_code(outcomes: &[CheckOutcome]) -> i32 {
    [EXIT_EL, EXIT_MINIMALITY, EXIT_CONDITION]
        .into_iter()
        .find(|&code| outcomes.iter().any(|o| !o.passed && o.name.failure_code() == code))
        .unwrap_or(EXIT_OK)
}

/// Evaluates checks on `run.json` and writes `verify.json` to `out`
/// (default: the run's directory).
pub fn cmd_verify(
    run_path: &Path,
    names: &[String],
    overrides: &VerifyOverrides,
    out: Option<&Path>,
) -> anyhow::Result<(i32, VerifyReport, PathBuf)> {
    if overrides.trials == Some(0) {
        return Err(CvpError::invalid("--trials must be at least 1").into());
    }
    let bytes = fs::read(run_path).with_context(|| format!("cannot read run report {}", run_path.display()))?;
    let run_hash = sha256_hex(&bytes);
    let report = RunReport::load(run_path)?;
    let checks = resolve_checks(&report.config, names)?;
    let ctx = report.into_context()?;
    let outcomes = checks
        .iter()
        .map(|(kind, spec)| run_check(&ctx, *kind, spec, overrides))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let code = exit_code(&outcomes);
    let verify = VerifyReport {
        tool: TOOL.to_string(),
        version: VERSION.to_string(),
        config_hash: ctx.report.config_hash.clone(),
        run_hash,
        passed: code == EXIT_OK,
        checks: outcomes,
        exit_code: code,
    };
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| base_dir(run_path));
    let path = dir.join("verify.json");
    write_json(&path, &verify)?;
    Ok((code, verify, path))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixFile {
    Rows(Vec<Vec<f64>>),
    Wrapped { matrix: Vec<Vec<f64>> },
}

/// Enumerated global minimizer of a kernel matrix (or its leading `size` block).
pub fn cmd_oracle(matrix_path: &Path, size: Option<usize>) -> anyhow::Result<crate::CompactSolution> {
    let text =
        fs::read_to_string(matrix_path).with_context(|| format!("cannot read matrix {}", matrix_path.display()))?;
    let rows = match serde_json::from_str::<MatrixFile>(&text)
        .with_context(|| format!("{} is not a JSON matrix", matrix_path.display()))?
    {
        MatrixFile::Rows(r) | MatrixFile::Wrapped { matrix: r } => r,
    };
    let n = size.unwrap_or(rows.len());
    if n > ORACLE_HARD_MAX {
        return Err(CvpError::Size {
            size: n,
            limit: ORACLE_HARD_MAX,
        }
        .into());
    }
    if n == 0 || n > rows.len() {
        bail!("size {n} does not fit a {}-row matrix", rows.len());
    }
    let block: Vec<Vec<f64>> = rows.iter().take(n).map(|r| r.iter().take(n).copied().collect()).collect();
    let problem = CompactProblem::from_matrix(&block, SolverOptions::default())?;
    Ok(brute_force_minimizer(&problem)?)
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Base run config, relative to the sweep file.
    pub base: PathBuf,
    /// Dotted config paths and the values each takes.
    pub axes: BTreeMap<String, Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub index: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, Value>,
    pub config_hash: String,
    pub run: String,
    pub stabilized: bool,
}

fn set_path(root: &mut Value, path: &str, value: Value) -> anyhow::Result<()> {
    let mut node = root;
    let mut parts = path.split('.').peekable();
    while let Some(key) = parts.next() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| anyhow!("sweep axis `{path}`: `{key}` is not inside an object"))?;
        if parts.peek().is_none() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        node = obj.entry(key.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    bail!("empty sweep axis")
}

/// Runs every combination of the axis values; run `i` uses seed `base.seed + i`.
pub fn cmd_sweep(sweep_path: &Path, out: &Path) -> anyhow::Result<Vec<SweepEntry>> {
    let text = fs::read_to_string(sweep_path).with_context(|| format!("cannot read sweep {}", sweep_path.display()))?;
    let sweep: SweepConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid sweep {}", sweep_path.display()))?;
    let base_path = base_dir(sweep_path).join(&sweep.base);
    let base_text = fs::read_to_string(&base_path)
        .with_context(|| format!("cannot read base config {}", base_path.display()))?;
    let base_value: Value = serde_json::from_str(&base_text)?;
    let (base_config, base) = load_config(&base_path)?;
    if sweep.axes.values().any(|v| v.is_empty()) {
        bail!("every sweep axis needs at least one value");
    }
    let axes: Vec<(&String, &Vec<Value>)> = sweep.axes.iter().collect();
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut entries = Vec::with_capacity(total);
    for index in 0..total {
        let mut value = base_value.clone();
        let mut assignments = BTreeMap::new();
        let mut rest = index;
        for (path, values) in axes.iter().rev() {
            let v = values[rest % values.len()].clone();
            rest /= values.len();
            set_path(&mut value, path, v.clone())?;
            assignments.insert((*path).clone(), v);
        }
        let seed = base_config.seed + index as u64;
        set_path(&mut value, "seed", Value::from(seed))?;
        let config: RunConfig =
            serde_json::from_value(value).with_context(|| format!("sweep point {index} is not a valid config"))?;
        let dir = out.join(format!("run_{index:03}"));
        let run_path = cmd_solve(&config, &base, &dir).with_context(|| format!("sweep point {index} failed"))?;
        let report = RunReport::load(&run_path)?;
        entries.push(SweepEntry {
            index,
            seed,
            assignments,
            config_hash: report.config_hash,
            run: format!("run_{index:03}/run.json"),
            stabilized: report.diagnostics.stabilized,
        });
    }
    write_json(&out.join("sweep.json"), &entries)?;
    Ok(entries)
}

#[derive(Debug, Parser)]
#[command(name = "cvp", version, about = "Solve and verify causal variational principles on point clouds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an exhaustion and write run.json plus stage CSVs.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        stride: Option<usize>,
        /// Solver KKT tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Evaluate checks on a run report and write verify.json.
    Verify {
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated check names; defaults to the config's checks.
        #[arg(long, value_delimiter = ',')]
        checks: Vec<String>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the enumerated global minimizer of a small kernel matrix.
    Oracle {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        size: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of config overrides.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Caps the global worker pool at `CVP_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("CVP_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<i32> {
    match command {
        Command::Solve {
            config,
            out,
            seed,
            stride,
            tol,
        } => {
            let (mut cfg, base) = load_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = stride {
                cfg.stride = s;
            }
            if let Some(t) = tol {
                cfg.solver.tol = t;
            }
            let out = out
                .or_else(|| cfg.output.as_ref().map(|o| base.join(o)))
                .unwrap_or_else(|| base.join("out"));
            let path = cmd_solve(&cfg, &base, &out)?;
            println!("{}", path.display());
            Ok(EXIT_OK)
        }
        Command::Verify {
            run,
            checks,
            trials,
            tol,
            seed,
            out,
        } => {
            let overrides = VerifyOverrides { trials, tol, seed };
            let (code, report, path) = cmd_verify(&run, &checks, &overrides, out.as_deref())?;
            for c in &report.checks {
                let name = serde_json::to_value(c.name)?;
                println!("{:<16} {}", name.as_str().unwrap_or_default(), if c.passed { "pass" } else { "FAIL" });
            }
            println!("{}", path.display());
            Ok(code)
        }
        Command::Oracle { matrix, size, out } => {
            let solution = cmd_oracle(&matrix, size)?;
            let bytes = to_json_bytes(&solution)?;
            if let Some(path) = out {
                write_atomic(&path, &bytes)?;
            }
            print!("{}", String::from_utf8_lossy(&bytes));
            Ok(EXIT_OK)
        }
        Command::Sweep { config, out } => {
            let out = out.unwrap_or_else(|| base_dir(&config).join("sweep"));
            let entries = cmd_sweep(&config, &out)?;
            println!("{} runs written to {}", entries.len(), out.display());
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn check_names_parse() {
        assert_eq!(CheckKind::parse("el").unwrap(), CheckKind::El);
        assert_eq!(CheckKind::parse("ell_convergence").unwrap(), CheckKind::EllConvergence);
        let err = CheckKind::parse("bogus").unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("minimality"));
    }

    #[test]
    fn exit_code_priority() {
        let outcome = |name, passed| CheckOutcome {
            name,
            passed,
            detail: Value::Null,
        };
        assert_eq!(exit_code(&[outcome(CheckKind::El, true)]), EXIT_OK);
        assert_eq!(
            exit_code(&[outcome(CheckKind::Sufficient, false), outcome(CheckKind::Minimality, false)]),
            EXIT_MINIMALITY
        );
        assert_eq!(
            exit_code(&[outcome(CheckKind::Minimality, false), outcome(CheckKind::El, false)]),
            EXIT_EL
        );
        assert_eq!(exit_code(&[outcome(CheckKind::Gamma, false)]), EXIT_CONDITION);
    }

    #[test]
    fn config_accepts_bare_and_detailed_checks() {
        let cfg: RunConfig = serde_json::from_value(serde_json::json!({
            "space": "s.json",
            "kernel": { "kind": "tent", "range": 1.0 },
            "exhaustion": { "center": "0", "radii": [1.0, 2.0] },
            "checks": ["el", { "name": "minimality", "trials": 10 }],
            "output": "out"
        }))
        .unwrap();
        assert_eq!(cfg.checks[0].name, "el");
        assert_eq!(cfg.checks[1].trials, Some(10));
        assert_eq!(cfg.window, WindowPolicy::Range);
        assert_eq!(cfg.stride, 1);
        // the output directory does not enter the hash
        let mut other = cfg.clone();
        other.output = Some(PathBuf::from("elsewhere"));
        assert_eq!(cfg.hash().unwrap(), other.hash().unwrap());
        other.seed = 1;
        assert_ne!(cfg.hash().unwrap(), other.hash().unwrap());
    }

    #[test]
    fn unknown_config_fields_are_rejected() {
        let r: Result<RunConfig, _> = serde_json::from_value(serde_json::json!({
            "space": "s.json",
            "kernel": { "kind": "tent", "range": 1.0 },
            "exhaustion": { "center": "0", "radii": [1.0] },
            "sead": 3
        }));
        assert!(r.is_err());
    }

    #[test]
    fn dotted_paths_create_objects() {
        let mut v = serde_json::json!({ "kernel": { "range": 1.0 } });
        set_path(&mut v, "kernel.range", Value::from(2.0)).unwrap();
        set_path(&mut v, "solver.tol", Value::from(1e-9)).unwrap();
        assert_eq!(v["kernel"]["range"], 2.0);
        assert_eq!(v["solver"]["tol"], 1e-9);
        let mut scalar = Value::from(1);
        assert!(set_path(&mut scalar, "a.b", Value::Null).is_err());
    }

    #[test]
    fn evenly_spaced_probes() {
        let pts: Vec<PointId> = (0..10).map(PointId).collect();
        assert_eq!(evenly_spaced(&pts, 20).len(), 10);
        assert_eq!(evenly_spaced(&pts, 3), vec![PointId(0), PointId(3), PointId(6)]);
    }
}
