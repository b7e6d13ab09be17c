//! Penalized online learning dynamics.
//!
//! With `U = diag{mu_k I_{M_k}}` and `G` either the exact or a sampled block
//! gradient:
//!
//! * SG:  `w = w_prev - U G(w_prev) - rho U grad p(w_prev)`
//! * ATP: `psi = w_prev - U G(w_prev)`, then `w = psi - rho U grad p(psi)`
//! * PTA: `psi = w_prev - rho U grad p(w_prev)`, then `w = psi - U G(psi)`

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::model::{QuadraticGame, Topology};
use crate::penalty::{self, ConstraintSet, PenaltyConfig};
use crate::rng::RunRng;

/// Iterates with a norm above this are treated as diverged.
pub const DIVERGENCE_NORM: f64 = 1e12;

/// A game together with its shared constraints and penalty choice.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub game: QuadraticGame,
    pub constraints: ConstraintSet,
    pub penalty: PenaltyConfig,
}

impl Problem {
    pub fn new(game: QuadraticGame, constraints: ConstraintSet, penalty: PenaltyConfig) -> Result<Self> {
        if constraints.dim() != game.dim() {
            return Err(GnepError::Dimension {
                expected: game.dim(),
                found: constraints.dim(),
                context: "constraint set dimension",
            });
        }
        Ok(Self {
            game,
            constraints,
            penalty,
        })
    }

    pub fn dim(&self) -> usize {
        self.game.dim()
    }

    pub fn topology(&self) -> &Topology {
        self.game.topology()
    }

    /// Same problem with a different penalty parameter.
    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut cfg = self.penalty;
        cfg.rho = PenaltyConfig::new(rho)?.rho;
        Ok(Self {
            penalty: cfg,
            ..self.clone()
        })
    }

    /// Penalized operator `F(w) + rho grad p(w)`.
    pub fn penalized_operator(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.game.check_dim(w)?;
        self.penalty.require_differentiable()?;
        let mut f = self.game.gradient_unchecked(w);
        penalty::accumulate_gradient(&self.constraints, w, self.penalty.rho, &mut f);
        Ok(f)
    }
}

/// Per-agent constant step-sizes `mu_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    mu: Vec<f64>,
}

impl StepSizes {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if mu.is_empty() {
            return Err(GnepError::Config("no step-sizes given".into()));
        }
        if let Some(m) = mu.iter().find(|m| !(**m > 0.0) || !m.is_finite()) {
            return Err(GnepError::Config(format!("step-sizes must be positive, got {m}")));
        }
        Ok(Self { mu })
    }

    pub fn uniform(num_agents: usize, mu: f64) -> Result<Self> {
        Self::new(vec![mu; num_agents])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.mu
    }

    pub fn mu_max(&self) -> f64 {
        self.mu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mu_min(&self) -> f64 {
        self.mu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `t = 1 - mu_min / mu_max`, in `[0, 1)`.
    pub fn t(&self) -> f64 {
        1.0 - self.mu_min() / self.mu_max()
    }

    /// The same sizes scaled by `s`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        Self::new(self.mu.iter().map(|m| m * s).collect())
    }

    /// Diagonal of `U`, one entry per action coordinate.
    pub fn per_entry(&self, topology: &Topology) -> Result<DVector<f64>> {
        if self.mu.len() != topology.num_agents() {
            return Err(GnepError::Dimension {
                expected: topology.num_agents(),
                found: self.mu.len(),
                context: "step-sizes per agent",
            });
        }
        let mut u = DVector::zeros(topology.total_dim());
        for (k, &m) in self.mu.iter().enumerate() {
            for i in topology.block(k) {
                u[i] = m;
            }
        }
        Ok(u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Sg,
    Atp,
    Pta,
}

impl StrategyKind {
    /// `(c1, c2)` of the unified two-step recursion; `None` for SG.
    pub fn coefficients(self) -> Option<(f64, f64)> {
        match self {
            StrategyKind::Sg => None,
            StrategyKind::Atp => Some((0.0, 1.0)),
            StrategyKind::Pta => Some((1.0, 0.0)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Sg => "SG",
            StrategyKind::Atp => "ATP",
            StrategyKind::Pta => "PTA",
        }
    }
}

/// Where the cost gradient comes from at each step.
pub enum GradientMode<'r> {
    Exact,
    Sampled(&'r mut RunRng),
}

impl GradientMode<'_> {
    fn eval(&mut self, game: &QuadraticGame, w: &DVector<f64>) -> DVector<f64> {
        match self {
            GradientMode::Exact => game.gradient_unchecked(w),
            GradientMode::Sampled(rng) => game.sample_unchecked(w, *rng),
        }
    }
}

fn advance(
    kind: StrategyKind,
    problem: &Problem,
    u: &DVector<f64>,
    w: &DVector<f64>,
    mode: &mut GradientMode<'_>,
) -> DVector<f64> {
    let rho = problem.penalty.rho;
    let cs = &problem.constraints;
    let penalize = |x: &DVector<f64>| {
        let mut g = DVector::zeros(x.len());
        penalty::accumulate_gradient(cs, x, rho, &mut g);
        x - u.component_mul(&g)
    };
    match kind {
        StrategyKind::Sg => {
            let mut g = mode.eval(&problem.game, w);
            penalty::accumulate_gradient(cs, w, rho, &mut g);
            w - u.component_mul(&g)
        }
        StrategyKind::Atp => {
            let psi = w - u.component_mul(&mode.eval(&problem.game, w));
            penalize(&psi)
        }
        StrategyKind::Pta => {
            let psi = penalize(w);
            let g = mode.eval(&problem.game, &psi);
            psi - u.component_mul(&g)
        }
    }
}

fn check_finite(w: &DVector<f64>, iteration: usize) -> Result<()> {
    let norm = w.norm();
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(GnepError::Divergence { iteration, norm });
    }
    Ok(())
}

/// One update of strategy `kind` from `w_prev`. A divergence error reports
/// iteration 1.
pub fn step(
    kind: StrategyKind,
    problem: &Problem,
    steps: &StepSizes,
    w_prev: &DVector<f64>,
    mut mode: GradientMode<'_>,
) -> Result<DVector<f64>> {
    let mut learner = Learner::new(kind, problem, steps, w_prev.clone())?;
    learner.advance(&mut mode)?;
    Ok(learner.w)
}

/// Stateful runner for one trajectory.
#[derive(Debug, Clone)]
pub struct Learner<'a> {
    kind: StrategyKind,
    problem: &'a Problem,
    u: DVector<f64>,
    w: DVector<f64>,
    iteration: usize,
}

impl<'a> Learner<'a> {
    pub fn new(kind: StrategyKind, problem: &'a Problem, steps: &StepSizes, w0: DVector<f64>) -> Result<Self> {
        problem.game.check_dim(&w0)?;
        problem.penalty.require_differentiable()?;
        let u = steps.per_entry(problem.topology())?;
        Ok(Self {
            kind,
            problem,
            u,
            w: w0,
            iteration: 0,
        })
    }

    pub fn advance(&mut self, mode: &mut GradientMode<'_>) -> Result<()> {
        let next = advance(self.kind, self.problem, &self.u, &self.w, mode);
        self.iteration += 1;
        check_finite(&next, self.iteration)?;
        self.w = next;
        Ok(())
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.w
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }
}

/// Recorded iterates of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// Iteration index of each recorded iterate (starting with 0).
    pub iterations: Vec<usize>,
    pub iterates: Vec<DVector<f64>>,
}

/// Runs `num_iters` updates from `w0`, recording `w_0` and every
/// `thinning`-th iterate (the last iterate is always kept).
pub fn run_trajectory(
    kind: StrategyKind,
    problem: &Problem,
    steps: &StepSizes,
    w0: DVector<f64>,
    num_iters: usize,
    thinning: usize,
    mut mode: GradientMode<'_>,
) -> Result<Trajectory> {
    if num_iters == 0 {
        return Err(GnepError::Config("num_iters must be at least 1".into()));
    }
    let thinning = thinning.max(1);
    let mut learner = Learner::new(kind, problem, steps, w0)?;
    let mut out = Trajectory {
        iterations: vec![0],
        iterates: vec![learner.w.clone()],
    };
    for i in 1..=num_iters {
        learner.advance(&mut mode)?;
        if i % thinning == 0 || i == num_iters {
            out.iterations.push(i);
            out.iterates.push(learner.w.clone());
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NoiseModel;
    use crate::penalty::AffineConstraint;
    use crate::rng::run_rng;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    fn scalar_problem(constrained: bool, rho: f64) -> Problem {
        let t = Topology::new(vec![1], vec![vec![0]]).unwrap();
        let game = QuadraticGame::new(
            t.clone(),
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -2.0),
            NoiseModel::none(),
        )
        .unwrap();
        let cs = if constrained {
            ConstraintSet::new(&t, vec![], vec![AffineConstraint::new([(0, 1.0)], 0.0)]).unwrap()
        } else {
            ConstraintSet::empty(&t)
        };
        Problem::new(game, cs, PenaltyConfig::new(rho).unwrap()).unwrap()
    }

    #[test]
    fn scalar_hand_step() {
        let p = scalar_problem(false, 10.0);
        let s = StepSizes::uniform(1, 0.1).unwrap();
        for kind in [StrategyKind::Sg, StrategyKind::Atp, StrategyKind::Pta] {
            let w = step(kind, &p, &s, &DVector::zeros(1), GradientMode::Exact).unwrap();
            assert!((w[0] - 0.2).abs() < 1e-15, "{kind:?}");
        }
    }

    #[test]
    fn constrained_scalar_steps_differ_by_order() {
        // from w = 2: F = 2, penalty gradient = rho * 2
        let p = scalar_problem(true, 1.0);
        let s = StepSizes::uniform(1, 0.1).unwrap();
        let w0 = DVector::from_element(1, 2.0);
        let sg = step(StrategyKind::Sg, &p, &s, &w0, GradientMode::Exact).unwrap()[0];
        let atp = step(StrategyKind::Atp, &p, &s, &w0, GradientMode::Exact).unwrap()[0];
        let pta = step(StrategyKind::Pta, &p, &s, &w0, GradientMode::Exact).unwrap()[0];
        assert!((sg - 1.6).abs() < 1e-15);
        // psi = 2 - 0.2 = 1.8, w = 1.8 - 0.18
        assert!((atp - 1.62).abs() < 1e-15);
        // psi = 2 - 0.2 = 1.8, w = 1.8 - 0.1 * 1.6
        assert!((pta - 1.64).abs() < 1e-15);
    }

    #[test]
    fn step_sizes_derived_values() {
        let s = StepSizes::new(vec![0.2, 0.1, 0.4]).unwrap();
        assert_eq!(s.mu_max(), 0.4);
        assert_eq!(s.mu_min(), 0.1);
        assert!((s.t() - 0.75).abs() < 1e-15);
        assert!(StepSizes::new(vec![0.1, 0.0]).is_err());
        assert!(StepSizes::new(vec![]).is_err());
    }

    #[test]
    fn coefficients_are_complementary() {
        for kind in [StrategyKind::Atp, StrategyKind::Pta] {
            let (c1, c2) = kind.coefficients().unwrap();
            assert_eq!(c1 * c1, c1);
            assert_eq!(c2 * c2, c2);
            assert_eq!(c1 * c2, 0.0);
            assert_eq!(c1 + c2, 1.0);
        }
        assert_eq!(StrategyKind::Sg.coefficients(), None);
    }

    #[test]
    fn one_iteration_trajectory_matches_step() {
        let p = scalar_problem(true, 3.0);
        let s = StepSizes::uniform(1, 0.05).unwrap();
        let w0 = DVector::from_element(1, 0.7);
        let t = run_trajectory(StrategyKind::Atp, &p, &s, w0.clone(), 1, 1, GradientMode::Exact).unwrap();
        let w1 = step(StrategyKind::Atp, &p, &s, &w0, GradientMode::Exact).unwrap();
        assert_eq!(t.iterates.last().unwrap(), &w1);
        assert_eq!(t.iterations, vec![0, 1]);
    }

    #[test]
    fn blow_up_is_reported_with_iteration() {
        let p = scalar_problem(false, 0.0);
        let s = StepSizes::uniform(1, 5.0).unwrap();
        let err = run_trajectory(StrategyKind::Sg, &p, &s, DVector::zeros(1), 1000, 1, GradientMode::Exact)
            .unwrap_err();
        match err {
            GnepError::Divergence { iteration, .. } => assert!(iteration > 1 && iteration < 1000),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn thinning_keeps_last() {
        let p = scalar_problem(false, 0.0);
        let s = StepSizes::uniform(1, 0.1).unwrap();
        let t = run_trajectory(StrategyKind::Sg, &p, &s, DVector::zeros(1), 10, 4, GradientMode::Exact).unwrap();
        assert_eq!(t.iterations, vec![0, 4, 8, 10]);
    }

    fn noisy_pair() -> Problem {
        let t = Topology::from_links(vec![1, 1], &[(0, 1)]).unwrap();
        let noise = NoiseModel::additive_uniform(vec![
            (
                0.5,
                crate::model::NoiseDirection {
                    matrix: vec![(0, 0, 1.0), (0, 1, 1.0)],
                    vector: vec![],
                },
            ),
            (
                1.0,
                crate::model::NoiseDirection {
                    matrix: vec![],
                    vector: vec![(1, 1.0)],
                },
            ),
        ]);
        let game = QuadraticGame::new(
            t.clone(),
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 0.5, 2.0]),
            DVector::from_vec(vec![-1.0, 1.0]),
            noise,
        )
        .unwrap();
        Problem::new(game, ConstraintSet::empty(&t), PenaltyConfig::new(0.0).unwrap()).unwrap()
    }

    proptest! {
        #[test]
        fn strategies_coincide_without_constraints(seed in 0u64..1000, mu in 0.01f64..0.2) {
            let p = noisy_pair();
            let s = StepSizes::new(vec![mu, mu * 0.5]).unwrap();
            let run = |kind| {
                let mut rng = run_rng(seed, 0);
                run_trajectory(kind, &p, &s, DVector::from_vec(vec![0.3, -0.2]), 20, 1, GradientMode::Sampled(&mut rng))
                    .unwrap()
            };
            let a = run(StrategyKind::Sg);
            prop_assert_eq!(&a, &run(StrategyKind::Atp));
            prop_assert_eq!(&a, &run(StrategyKind::Pta));
        }

        #[test]
        fn seeded_runs_are_reproducible(seed in 0u64..1000) {
            let p = noisy_pair();
            let s = StepSizes::uniform(2, 0.1).unwrap();
            let run = || {
                let mut rng = run_rng(seed, 5);
                run_trajectory(StrategyKind::Sg, &p, &s, DVector::zeros(2), 30, 3, GradientMode::Sampled(&mut rng))
                    .unwrap()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
