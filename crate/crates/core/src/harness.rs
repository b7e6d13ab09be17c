//! Monte-Carlo experiments.
//!
//! A run draws a trajectory from its own `(seed, run)` stream; runs execute
//! in parallel and their squared deviations are summed in run order, so the
//! averaged curves do not depend on scheduling. The deviation is measured
//! against `w*` for SG, against the noiseless fixed point `w_inf` for ATP
//! and PTA, and against the mean final iterate for the primal-dual
//! baselines.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{PrimalDualKind, PrimalDualRunner};
use crate::cournot::{self, CournotSpec, DEFAULT_LAYOUT_SEED};
use crate::equilibrium::{
    self, AnalysisConstants, BiasBound, BoundKind, FixedPointOptions, NoiseConstants, SolveOptions, StepBound,
};
use crate::error::{GnepError, Result};
use crate::penalty::{AffineConstraint, PenaltyConfig};
use crate::rng::run_rng;
use crate::schema::GameDocument;
use crate::strategies::{GradientMode, Learner, Problem, StepSizes, StrategyKind};

/// Where the game of an experiment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    /// The generated 20-factory, 7-market Cournot network.
    GeneratedNetwork {
        #[serde(default = "default_layout_seed")]
        layout_seed: u64,
    },
    Cournot(CournotSpec),
    Document(GameDocument),
}

fn default_layout_seed() -> u64 {
    DEFAULT_LAYOUT_SEED
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Sg,
    Atp,
    Pta,
    /// Arrow-Hurwicz.
    Ah,
    /// Iterative Tikhonov.
    Tik,
}

impl Algorithm {
    pub fn strategy(self) -> Option<StrategyKind> {
        match self {
            Algorithm::Sg => Some(StrategyKind::Sg),
            Algorithm::Atp => Some(StrategyKind::Atp),
            Algorithm::Pta => Some(StrategyKind::Pta),
            Algorithm::Ah | Algorithm::Tik => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sg => "SG",
            Algorithm::Atp => "ATP",
            Algorithm::Pta => "PTA",
            Algorithm::Ah => "AH",
            Algorithm::Tik => "TIK",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = GnepError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sg" => Ok(Algorithm::Sg),
            "atp" => Ok(Algorithm::Atp),
            "pta" => Ok(Algorithm::Pta),
            "ah" => Ok(Algorithm::Ah),
            "tik" => Ok(Algorithm::Tik),
            other => Err(GnepError::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

/// A uniform step-size or one per agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Uniform(f64),
    PerAgent(Vec<f64>),
}

impl StepSpec {
    pub fn resolve(&self, num_agents: usize) -> Result<StepSizes> {
        match self {
            StepSpec::Uniform(mu) => StepSizes::uniform(num_agents, *mu),
            StepSpec::PerAgent(mu) => {
                if mu.len() != num_agents {
                    return Err(GnepError::Dimension {
                        expected: num_agents,
                        found: mu.len(),
                        context: "per-agent step-sizes",
                    });
                }
                StepSizes::new(mu.clone())
            }
        }
    }

    /// Same specification with every step multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        match self {
            StepSpec::Uniform(mu) => StepSpec::Uniform(mu * s),
            StepSpec::PerAgent(mu) => StepSpec::PerAgent(mu.iter().map(|m| m * s).collect()),
        }
    }

    pub fn max(&self) -> f64 {
        match self {
            StepSpec::Uniform(mu) => *mu,
            StepSpec::PerAgent(mu) => mu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Full description of one Monte-Carlo experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub algorithm: Algorithm,
    pub mu: StepSpec,
    #[serde(default = "default_rho")]
    pub rho: f64,
    /// Tikhonov regularization, used by `tik` only.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_iters")]
    pub num_iters: usize,
    #[serde(default = "default_runs")]
    pub num_runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Initial profile; zero when absent.
    #[serde(default)]
    pub w0: Option<Vec<f64>>,
    /// Record every `thinning`-th iteration.
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    /// Trailing fraction of iterations averaged for the steady-state MSD.
    #[serde(default = "default_window")]
    pub steady_window: f64,
    /// Use sampled gradients; `false` runs the noiseless recursions.
    #[serde(default = "default_true")]
    pub stochastic: bool,
}

fn default_rho() -> f64 {
    200.0
}
fn default_epsilon() -> f64 {
    0.5012
}
fn default_iters() -> usize {
    5000
}
fn default_runs() -> usize {
    200
}
fn default_thinning() -> usize {
    1
}
fn default_window() -> f64 {
    0.1
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    /// Defaults on the generated Cournot network.
    pub fn cournot(algorithm: Algorithm, mu: f64) -> Self {
        Self {
            game: GameSource::GeneratedNetwork {
                layout_seed: DEFAULT_LAYOUT_SEED,
            },
            algorithm,
            mu: StepSpec::Uniform(mu),
            rho: default_rho(),
            epsilon: default_epsilon(),
            num_iters: default_iters(),
            num_runs: default_runs(),
            seed: 0,
            w0: None,
            thinning: default_thinning(),
            steady_window: default_window(),
            stochastic: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_runs == 0 {
            return Err(GnepError::Config("num_runs must be at least 1".into()));
        }
        if self.num_iters == 0 {
            return Err(GnepError::Config("num_iters must be at least 1".into()));
        }
        if !(self.steady_window > 0.0 && self.steady_window <= 0.5) {
            return Err(GnepError::Config(format!(
                "steady-state window must lie in (0, 0.5], got {}",
                self.steady_window
            )));
        }
        if self.thinning == 0 {
            return Err(GnepError::Config("thinning must be at least 1".into()));
        }
        if self.algorithm == Algorithm::Tik && !(self.epsilon >= 0.0) {
            return Err(GnepError::Config("epsilon must be >= 0".into()));
        }
        PenaltyConfig::new(self.rho)?;
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Game, constraints and step-sizes resolved from a configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub steps: StepSizes,
    pub w0: DVector<f64>,
    /// Inequalities handled by multipliers in the primal-dual baselines.
    pub coupling: Vec<AffineConstraint>,
}

pub fn resolve(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let (game, cs) = match &cfg.game {
        GameSource::GeneratedNetwork { layout_seed } => cournot::build_game(&cournot::generated_network(*layout_seed))?,
        GameSource::Cournot(spec) => cournot::build_game(spec)?,
        GameSource::Document(doc) => doc.clone().into_parts()?,
    };
    let problem = Problem::new(game, cs, PenaltyConfig::new(cfg.rho)?)?;
    let steps = cfg.mu.resolve(problem.topology().num_agents())?;
    let w0 = match &cfg.w0 {
        Some(w) => {
            let w = DVector::from_vec(w.clone());
            problem.game.check_dim(&w)?;
            w
        }
        None => DVector::zeros(problem.dim()),
    };
    let coupling = problem.constraints.coupling_inequalities();
    Ok(Setup {
        problem,
        steps,
        w0,
        coupling,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// `w*`, the penalized Nash equilibrium.
    NashEquilibrium,
    /// `w_inf`, the noiseless fixed point of ATP/PTA.
    FixedPoint,
    /// The mean of the final iterates over runs.
    MeanFinalIterate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iter: usize,
    pub msd: f64,
}

/// Averaged outcome of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub curve: Vec<CurvePoint>,
    pub steady_state_msd: f64,
    /// First iteration of the steady-state window.
    pub steady_window_start: usize,
    /// Contraction-time estimate used to place the window.
    pub burn_in: usize,
    pub reference: ReferenceKind,
    /// `||w* - w_inf||` for ATP/PTA, `0` for SG, absent for the baselines.
    pub bias: Option<f64>,
    /// Smallest action component seen in any run at any iteration.
    pub min_action: f64,
    pub completed_runs: usize,
    /// `(run, iteration)` of every diverged run.
    pub diverged_runs: Vec<(usize, usize)>,
    /// Violated analysis conditions and other caveats.
    pub flags: Vec<String>,
}

impl ExperimentResult {
    /// First recorded iteration with `msd <= level`.
    pub fn iterations_to_reach(&self, level: f64) -> Option<usize> {
        self.curve.iter().find(|p| p.msd <= level).map(|p| p.iter)
    }
}

struct RunOutput {
    deviations: Vec<f64>,
    last: DVector<f64>,
    min_action: f64,
}

enum Runner<'a> {
    Penalty(Learner<'a>),
    PrimalDual(PrimalDualRunner<'a>),
}

impl Runner<'_> {
    fn advance(&mut self, mode: &mut GradientMode<'_>) -> Result<()> {
        match self {
            Runner::Penalty(l) => l.advance(mode),
            Runner::PrimalDual(p) => p.advance(mode),
        }
    }

    fn iterate(&self) -> &DVector<f64> {
        match self {
            Runner::Penalty(l) => l.iterate(),
            Runner::PrimalDual(p) => p.iterate(),
        }
    }
}

fn recorded(iter: usize, cfg: &ExperimentConfig) -> bool {
    iter.is_multiple_of(cfg.thinning) || iter == cfg.num_iters
}

fn run_once(
    cfg: &ExperimentConfig,
    setup: &Setup,
    run: usize,
    reference: Option<&DVector<f64>>,
) -> std::result::Result<RunOutput, (usize, usize)> {
    let mut rng = run_rng(cfg.seed, run as u64);
    let fail = |e: GnepError| match e {
        GnepError::Divergence { iteration, .. } => (run, iteration),
        _ => (run, 0),
    };
    let mut runner = match cfg.algorithm.strategy() {
        Some(kind) => Runner::Penalty(Learner::new(kind, &setup.problem, &setup.steps, setup.w0.clone()).map_err(fail)?),
        None => {
            let kind = match cfg.algorithm {
                Algorithm::Tik => PrimalDualKind::Tikhonov { eps: cfg.epsilon },
                _ => PrimalDualKind::ArrowHurwicz,
            };
            Runner::PrimalDual(
                PrimalDualRunner::new(kind, &setup.problem.game, &setup.coupling, setup.steps.mu_max(), setup.w0.clone())
                    .map_err(fail)?,
            )
        }
    };
    let mut deviations = Vec::new();
    let mut min_action = setup.w0.min();
    if let Some(r) = reference {
        deviations.push((runner.iterate() - r).norm_squared());
    }
    for i in 1..=cfg.num_iters {
        let res = if cfg.stochastic {
            runner.advance(&mut GradientMode::Sampled(&mut rng))
        } else {
            runner.advance(&mut GradientMode::Exact)
        };
        res.map_err(fail)?;
        min_action = min_action.min(runner.iterate().min());
        if let (Some(r), true) = (reference, recorded(i, cfg)) {
            deviations.push((runner.iterate() - r).norm_squared());
        }
    }
    Ok(RunOutput {
        deviations,
        last: runner.iterate().clone(),
        min_action,
    })
}

type RunResults = Vec<std::result::Result<RunOutput, (usize, usize)>>;

fn run_all(cfg: &ExperimentConfig, setup: &Setup, reference: Option<&DVector<f64>>) -> RunResults {
    (0..cfg.num_runs)
        .into_par_iter()
        .map(|r| run_once(cfg, setup, r, reference))
        .collect()
}

type Failures = Vec<(usize, usize)>;

fn split_failures(results: RunResults, total: usize) -> Result<(Vec<RunOutput>, Failures)> {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for r in results {
        match r {
            Ok(o) => ok.push(o),
            Err(f) => failed.push(f),
        }
    }
    if 2 * failed.len() > total {
        return Err(GnepError::ExperimentFailed { failed, total });
    }
    Ok((ok, failed))
}

/// Reference point, bias and caveats for a penalty-based algorithm.
fn penalty_reference(
    kind: StrategyKind,
    setup: &Setup,
    w_star: &DVector<f64>,
    flags: &mut Vec<String>,
) -> Result<(DVector<f64>, ReferenceKind, f64)> {
    if kind == StrategyKind::Sg {
        return Ok((w_star.clone(), ReferenceKind::NashEquilibrium, 0.0));
    }
    let consts = AnalysisConstants::compute(&setup.problem, &setup.steps, 0.0, 0.0)?;
    match equilibrium::step_size_bound(BoundKind::Deterministic, &consts) {
        Ok(b) if b.satisfied() => {}
        Ok(b) => flags.push(format!("fixed-point conditions not met: {}", b.violations.join("; "))),
        Err(e) => flags.push(format!("fixed-point conditions not met: {e}")),
    }
    let opts = FixedPointOptions {
        require_conditions: false,
        solve: SolveOptions {
            initial: Some(w_star.clone()),
            ..SolveOptions::default()
        },
    };
    match equilibrium::solve_fixed_point(kind, &setup.problem, &setup.steps, &opts) {
        Ok(fp) => {
            let bias = (w_star - &fp.w).norm();
            Ok((fp.w, ReferenceKind::FixedPoint, bias))
        }
        Err(e) => {
            flags.push(format!("fixed point unavailable ({e}); measuring against w*"));
            Ok((w_star.clone(), ReferenceKind::NashEquilibrium, f64::NAN))
        }
    }
}

/// Iterations for the noiseless error to shrink by `tol`.
fn burn_in(cfg: &ExperimentConfig, setup: &Setup, tol: f64) -> Result<usize> {
    let consts = AnalysisConstants::compute(&setup.problem, &setup.steps, 0.0, 0.0)?;
    let kappa = match cfg.algorithm {
        Algorithm::Atp | Algorithm::Pta
            if equilibrium::step_size_bound(BoundKind::Deterministic, &consts)
                .map(|b| b.satisfied())
                .unwrap_or(false) =>
        {
            equilibrium::contraction_modulus(&consts)
        }
        _ => 1.0 - setup.steps.mu_min() * consts.nu,
    };
    if !(kappa > 0.0 && kappa < 1.0) {
        return Ok(0);
    }
    Ok((tol.ln() / kappa.ln()).ceil() as usize)
}

/// Runs the Monte-Carlo experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let setup = resolve(cfg)?;
    let mut flags = Vec::new();
    let (reference, reference_kind, bias) = match cfg.algorithm.strategy() {
        Some(kind) => {
            let w_star = equilibrium::solve_penalized_nash(&setup.problem, &SolveOptions::default())?;
            let (r, k, b) = penalty_reference(kind, &setup, &w_star, &mut flags)?;
            (r, k, Some(b))
        }
        None => {
            let (first, _) = split_failures(run_all(cfg, &setup, None), cfg.num_runs)?;
            let mut mean = DVector::zeros(setup.problem.dim());
            for o in &first {
                mean += &o.last;
            }
            mean /= first.len() as f64;
            (mean, ReferenceKind::MeanFinalIterate, None)
        }
    };
    let (outputs, diverged_runs) = split_failures(run_all(cfg, &setup, Some(&reference)), cfg.num_runs)?;
    let iters: Vec<usize> = (0..=cfg.num_iters).filter(|&i| recorded(i, cfg)).collect();
    let mut sums = vec![0.0; iters.len()];
    let mut min_action = f64::INFINITY;
    for o in &outputs {
        for (s, d) in sums.iter_mut().zip(&o.deviations) {
            *s += d;
        }
        min_action = min_action.min(o.min_action);
    }
    let n = outputs.len() as f64;
    let curve: Vec<CurvePoint> = iters
        .iter()
        .zip(&sums)
        .map(|(&iter, s)| CurvePoint { iter, msd: s / n })
        .collect();

    let burn_in = burn_in(cfg, &setup, 1e-6)?;
    let trailing = cfg.num_iters - ((cfg.steady_window * cfg.num_iters as f64).ceil() as usize).min(cfg.num_iters);
    if burn_in > trailing {
        flags.push(format!(
            "contraction-time estimate {burn_in} exceeds the start of the steady-state window {trailing}"
        ));
    }
    let steady_window_start = trailing;
    let window: Vec<f64> = curve
        .iter()
        .filter(|p| p.iter >= steady_window_start)
        .map(|p| p.msd)
        .collect();
    let steady_state_msd = window.iter().sum::<f64>() / window.len() as f64;
    Ok(ExperimentResult {
        config: cfg.clone(),
        curve,
        steady_state_msd,
        steady_window_start,
        burn_in,
        reference: reference_kind,
        bias,
        min_action,
        completed_runs: outputs.len(),
        diverged_runs,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    Mu,
    Rho,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Mu => "mu",
            SweepParam::Rho => "rho",
        }
    }
}

impl std::str::FromStr for SweepParam {
    type Err = GnepError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mu" => Ok(SweepParam::Mu),
            "rho" => Ok(SweepParam::Rho),
            other => Err(GnepError::Config(format!("cannot sweep `{other}`; use mu or rho"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: f64,
    pub steady_msd: Option<f64>,
    pub bias: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub param: SweepParam,
    pub rows: Vec<SweepRow>,
}

/// One experiment per value; failures are recorded in the row and the
/// sweep continues.
pub fn sweep(template: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(GnepError::Config("sweep needs at least one value".into()));
    }
    let rows = values
        .iter()
        .map(|&v| {
            let mut cfg = template.clone();
            match param {
                SweepParam::Mu => cfg.mu = StepSpec::Uniform(v),
                SweepParam::Rho => cfg.rho = v,
            }
            match run_experiment(&cfg) {
                Ok(r) => SweepRow {
                    param: v,
                    steady_msd: Some(r.steady_state_msd),
                    bias: r.bias,
                    error: None,
                },
                Err(e) => SweepRow {
                    param: v,
                    steady_msd: None,
                    bias: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(SweepTable { param, rows })
}

/// Bias `||w* - w_inf||` alone, without Monte-Carlo runs.
pub fn fixed_point_bias(cfg: &ExperimentConfig) -> Result<f64> {
    let setup = resolve(cfg)?;
    let kind = cfg
        .algorithm
        .strategy()
        .filter(|k| *k != StrategyKind::Sg)
        .ok_or_else(|| GnepError::Config("bias is defined for ATP and PTA".into()))?;
    let w_star = equilibrium::solve_penalized_nash(&setup.problem, &SolveOptions::default())?;
    let opts = FixedPointOptions {
        require_conditions: false,
        solve: SolveOptions {
            initial: Some(w_star.clone()),
            ..SolveOptions::default()
        },
    };
    let fp = equilibrium::solve_fixed_point(kind, &setup.problem, &setup.steps, &opts)?;
    Ok((w_star - fp.w).norm())
}

/// A bound or the reason it is unavailable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundReport {
    Bound(StepBound),
    Unavailable { kind: BoundKind, reason: String },
}

/// Constants, bounds and equilibrium summary of a configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub constants: AnalysisConstants,
    pub noise: NoiseConstants,
    pub bounds: Vec<BoundReport>,
    /// `||F(w*)||`, entering the bias bounds.
    pub f_star_norm: f64,
    pub nash_residual: f64,
    pub penalty_at_nash: f64,
    pub bias_bounds: Vec<(StrategyKind, Option<BiasBound>)>,
}

pub fn analyze(cfg: &ExperimentConfig, noise_samples: usize) -> Result<AnalysisReport> {
    let setup = resolve(cfg)?;
    let mut rng = run_rng(cfg.seed, u64::MAX);
    let noise = equilibrium::noise_constants(&setup.problem.game, noise_samples, &mut rng)?;
    let constants = AnalysisConstants::compute(&setup.problem, &setup.steps, noise.alpha, noise.beta)?;
    let bounds = BoundKind::ALL
        .iter()
        .map(|&kind| match equilibrium::step_size_bound(kind, &constants) {
            Ok(b) => BoundReport::Bound(b),
            Err(e) => BoundReport::Unavailable {
                kind,
                reason: e.to_string(),
            },
        })
        .collect();
    let w_star = equilibrium::solve_penalized_nash(&setup.problem, &SolveOptions::default())?;
    let f_star_norm = setup.problem.game.block_gradient(&w_star)?.norm();
    let nash_residual = setup.problem.penalized_operator(&w_star)?.norm();
    let penalty_at_nash = crate::penalty::penalty_value(&setup.problem.constraints, &setup.problem.penalty, &w_star)?;
    let bias_bounds = [StrategyKind::Atp, StrategyKind::Pta]
        .into_iter()
        .map(|k| (k, equilibrium::bias_bound(k, &constants, f_star_norm).ok()))
        .collect();
    Ok(AnalysisReport {
        constants,
        noise,
        bounds,
        f_star_norm,
        nash_residual,
        penalty_at_nash,
        bias_bounds,
    })
}

/// Metadata written next to every CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config: ExperimentConfig,
    pub analysis: AnalysisReport,
    pub steady_state_msd: Option<f64>,
    pub bias: Option<f64>,
    pub flags: Vec<String>,
    pub sweep: Option<SweepTable>,
}

pub fn write_curve_csv(path: &Path, result: &ExperimentResult) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iter", "msd"])?;
    for p in &result.curve {
        w.write_record([p.iter.to_string(), format!("{:e}", p.msd)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["param", "steady_msd", "bias"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &table.rows {
        w.write_record([format!("{:e}", r.param), fmt(r.steady_msd), fmt(r.bias)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sidecar(path: &Path, sidecar: &Sidecar) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(sidecar)?)?;
    Ok(())
}
