//! Deterministic oracles and analysis constants.
//!
//! * [`solve_penalized_nash`] finds the unique zero `w*` of the penalized
//!   operator `F(w) + rho grad p(w)`;
//! * [`solve_fixed_point`] finds the fixed point `w_inf` of the noiseless
//!   ATP/PTA recursion;
//! * [`noise_constants`] gives the gradient-noise constants `(alpha, beta)`;
//! * [`step_size_bound`], [`contraction_modulus`] and [`bias_bound`]
//!   evaluate the step-size conditions and the error bounds of the analysis.
//!
//! Both solvers use a semismooth Newton iteration with a backtracking line
//! search on the residual norm (the maps are piecewise affine), falling back
//! to the plain recursion if Newton stalls.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::linalg;
use crate::model::{NoiseKind, QuadraticGame};
use crate::penalty::{self, penalty_lipschitz_constants};
use crate::strategies::{Problem, StepSizes, StrategyKind};

/// Constants entering the step-size conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConstants {
    pub nu: f64,
    pub delta: f64,
    pub delta_p: f64,
    pub gamma: Vec<f64>,
    pub rho: f64,
    pub mu_max: f64,
    pub t: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl AnalysisConstants {
    pub fn compute(problem: &Problem, steps: &StepSizes, alpha: f64, beta: f64) -> Result<Self> {
        let mc = problem.game.monotonicity_constants();
        let lip = penalty_lipschitz_constants(&problem.constraints, &problem.penalty, problem.topology(), 1.0)?;
        Ok(Self {
            nu: mc.nu,
            delta: mc.delta,
            delta_p: lip.delta_p,
            gamma: lip.gamma,
            rho: problem.penalty.rho,
            mu_max: steps.mu_max(),
            t: steps.t(),
            alpha,
            beta,
        })
    }

    /// `nu' = nu - t (delta + rho delta_p)`.
    pub fn nu_prime(&self) -> f64 {
        self.nu - self.t * (self.delta + self.rho * self.delta_p)
    }

    /// `nu'' = nu - t delta`.
    pub fn nu_dprime(&self) -> f64 {
        self.nu - self.t * self.delta
    }

    /// Lipschitz constant `delta + rho delta_p` of the penalized operator.
    pub fn penalized_lipschitz(&self) -> f64 {
        self.delta + self.rho * self.delta_p
    }

    /// Same constants at another step-size configuration.
    pub fn with_steps(&self, mu_max: f64, t: f64) -> Self {
        Self {
            mu_max,
            t,
            ..self.clone()
        }
    }
}

/// Gradient-noise constants `alpha = lambda_max(E[B~'B~])` and
/// `beta = E||b~||^2`.
///
/// `alpha` and `beta` are the closed-form values when the noise model
/// admits them (always the case for additive uniform disturbances); the
/// Monte-Carlo estimates and their standard errors are reported alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConstants {
    pub alpha: f64,
    pub beta: f64,
    pub empirical_alpha: f64,
    pub alpha_se: f64,
    pub empirical_beta: f64,
    pub beta_se: f64,
    pub num_samples: usize,
}

impl NoiseConstants {
    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            empirical_alpha: 0.0,
            alpha_se: 0.0,
            empirical_beta: 0.0,
            beta_se: 0.0,
            num_samples: 0,
        }
    }
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Noise constants of `game`; the Monte-Carlo part uses `num_samples` draws.
///
/// Disturbances are independent with variances `h_j^2 / 3`, so
/// `E[B~'B~] = sum_j var_j D_j'D_j` and `E||b~||^2 = sum_j var_j ||d_j||^2`.
/// The empirical `alpha` is `lambda_max` of the sample second moment, with
/// the standard error of `||B~ u||^2` along its top eigenvector `u`.
pub fn noise_constants<R: Rng + ?Sized>(
    game: &QuadraticGame,
    num_samples: usize,
    rng: &mut R,
) -> Result<NoiseConstants> {
    let noise = game.noise();
    if noise.kind == NoiseKind::None || noise.directions.is_empty() {
        return Ok(NoiseConstants::zero());
    }
    if num_samples < 2 {
        return Err(GnepError::Config("noise constants need at least 2 samples".into()));
    }
    let m = game.dim();
    let dmats: Vec<DMatrix<f64>> = noise.directions.iter().map(|d| d.dense_matrix(m)).collect();
    let dvecs: Vec<DVector<f64>> = noise.directions.iter().map(|d| d.dense_vector(m)).collect();
    let nj = dmats.len();
    let gram = |weights: &DMatrix<f64>| {
        let mut s = DMatrix::zeros(m, m);
        for j in 0..nj {
            for l in 0..nj {
                if weights[(j, l)] != 0.0 {
                    s += weights[(j, l)] * dmats[j].transpose() * &dmats[l];
                }
            }
        }
        s
    };
    let var = DMatrix::from_diagonal(&DVector::from_vec(noise.variances()));
    let (_, alpha) = linalg::sym_eig_extremes(&gram(&var));
    let beta: f64 = (0..nj).map(|j| var[(j, j)] * dvecs[j].norm_squared()).sum();

    let draws: Vec<Vec<f64>> = (0..num_samples).map(|_| noise.draw(rng)).collect();
    let mut second = DMatrix::zeros(nj, nj);
    for v in &draws {
        for j in 0..nj {
            for l in 0..nj {
                second[(j, l)] += v[j] * v[l];
            }
        }
    }
    second /= num_samples as f64;
    let (empirical_alpha, u) = linalg::sym_top_eigenvector(&gram(&second));
    let du: Vec<DVector<f64>> = dmats.iter().map(|d| d * &u).collect();
    let xs: Vec<f64> = draws
        .iter()
        .map(|v| {
            let bu = v.iter().zip(&du).fold(DVector::zeros(m), |acc, (vj, d)| acc + *vj * d);
            bu.norm_squared()
        })
        .collect();
    let (_, alpha_se) = mean_se(&xs);
    let bs: Vec<f64> = draws
        .iter()
        .map(|v| {
            v.iter()
                .zip(&dvecs)
                .fold(DVector::zeros(m), |acc, (vj, d)| acc + *vj * d)
                .norm_squared()
        })
        .collect();
    let (empirical_beta, beta_se) = mean_se(&bs);
    Ok(NoiseConstants {
        alpha,
        beta,
        empirical_alpha,
        alpha_se,
        empirical_beta,
        beta_se,
        num_samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// Mean-square stability of the stochastic-gradient dynamics.
    SgStochastic,
    /// Unique fixed point of the noiseless ATP/PTA recursion.
    Deterministic,
    /// Bounded MSE of the stochastic ATP/PTA recursion.
    Stochastic,
    /// Small bias `||w* - w_inf|| = O(mu_max)`; same conditions as
    /// [`BoundKind::Deterministic`].
    Bias,
}

impl BoundKind {
    pub const ALL: [BoundKind; 4] = [
        BoundKind::SgStochastic,
        BoundKind::Deterministic,
        BoundKind::Stochastic,
        BoundKind::Bias,
    ];
}

/// Step-size bound together with the conditions on `t` and `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepBound {
    pub kind: BoundKind,
    /// `mu_max` must stay strictly below this value.
    pub mu_bound: f64,
    /// `t` must stay strictly below this value.
    pub t_bound: f64,
    /// `rho` must exceed this value (0 when there is no such condition).
    pub rho_bound: f64,
    /// Conditions that fail for the given constants.
    pub violations: Vec<String>,
}

impl StepBound {
    pub fn satisfied(&self) -> bool {
        self.violations.is_empty()
    }
}

fn two_term_bound(c: &AnalysisConstants, d2: f64) -> f64 {
    let nu1 = c.nu_prime();
    let nu2 = c.nu_dprime();
    let rdp = c.rho * c.delta_p;
    let den = d2 + rdp * rdp - 4.0 * c.t * nu2 * rdp;
    let first = if den > 0.0 { 2.0 * nu1 / den } else { f64::INFINITY };
    let second = if c.t == 0.0 {
        nu1 / d2
    } else if rdp > 0.0 {
        (nu1 + c.t * (rdp * rdp - d2) / rdp) / d2
    } else {
        f64::NEG_INFINITY
    };
    first.min(second)
}

/// Evaluates the step-size conditions of `kind` at `c`.
///
/// Fails with [`GnepError::ConditionViolated`] when `nu' <= 0`, i.e. the
/// step-sizes are too heterogeneous for any positive bound.
pub fn step_size_bound(kind: BoundKind, c: &AnalysisConstants) -> Result<StepBound> {
    let lp = c.penalized_lipschitz();
    let t_bound = c.nu / lp;
    if !(c.nu_prime() > 0.0) {
        return Err(GnepError::ConditionViolated(format!(
            "t < nu/(delta + rho delta_p) = {t_bound:e} (t = {})",
            c.t
        )));
    }
    let (mu_bound, rho_bound) = match kind {
        BoundKind::SgStochastic => (2.0 * c.nu_prime() / (lp * lp + 2.0 * c.alpha), 0.0),
        BoundKind::Deterministic | BoundKind::Bias => {
            (two_term_bound(c, c.delta * c.delta), c.delta / c.delta_p)
        }
        BoundKind::Stochastic => {
            let d2 = c.delta * c.delta + 2.0 * c.alpha;
            (two_term_bound(c, d2), d2.sqrt() / c.delta_p)
        }
    };
    let mut violations = Vec::new();
    if !(c.mu_max < mu_bound) {
        violations.push(format!("mu_max = {:e} is not below {mu_bound:e}", c.mu_max));
    }
    if !(c.t < t_bound) {
        violations.push(format!("t = {} is not below {t_bound:e}", c.t));
    }
    if !(c.rho > rho_bound) {
        violations.push(format!("rho = {} does not exceed {rho_bound:e}", c.rho));
    }
    Ok(StepBound {
        kind,
        mu_bound,
        t_bound,
        rho_bound,
        violations,
    })
}

/// `(Y, X)` with `Y = 1 + 2 t mu rho delta_p + mu^2 rho^2 delta_p^2` and
/// `X = 1 - 2 mu nu'' + mu^2 d2`.
fn yx(c: &AnalysisConstants, d2: f64) -> (f64, f64) {
    let mu = c.mu_max;
    let rdp = c.rho * c.delta_p;
    let y = 1.0 + 2.0 * c.t * mu * rdp + mu * mu * rdp * rdp;
    let x = 1.0 - 2.0 * mu * c.nu_dprime() + mu * mu * d2;
    (y, x)
}

/// `a_1 = 1 - Y X`; with `stochastic` the variant `a_2` where `delta^2` is
/// replaced by `delta^2 + 2 alpha`.
pub fn contraction_margin(c: &AnalysisConstants, stochastic: bool) -> f64 {
    let d2 = c.delta * c.delta + if stochastic { 2.0 * c.alpha } else { 0.0 };
    let (y, x) = yx(c, d2);
    1.0 - y * x
}

/// Contraction modulus `sqrt(1 - a_1)` of the noiseless ATP/PTA map.
pub fn contraction_modulus(c: &AnalysisConstants) -> f64 {
    (1.0 - contraction_margin(c, false)).max(0.0).sqrt()
}

/// Ingredients and value of the bias bound
/// `||w* - w_inf|| <= b/a_1 + sqrt(eta/a_1 + b^2/a_1^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasBound {
    pub a1: f64,
    pub b: f64,
    pub eta: f64,
    pub bound: f64,
}

/// Bias bound for ATP/PTA given `||F(w*)||`.
pub fn bias_bound(kind: StrategyKind, c: &AnalysisConstants, f_star_norm: f64) -> Result<BiasBound> {
    let (c1, c2) = kind
        .coefficients()
        .ok_or_else(|| GnepError::Config("the SG dynamics have no bias".into()))?;
    let mu = c.mu_max;
    let d = c.delta;
    let rdp = c.rho * c.delta_p;
    let a1 = contraction_margin(c, false);
    if !(a1 > 0.0) {
        return Err(GnepError::ConditionViolated(format!("a_1 = {a1:e} is not positive")));
    }
    let (y, _) = yx(c, d * d);
    let z = c1 * (1.0 + mu * d) * d + c2 * (1.0 + mu * rdp) * rdp;
    let b = 2.0 * mu * mu * f_star_norm * y.sqrt() * z;
    let eta = mu.powi(4) * (c1 * d * d + c2 * rdp * rdp) * f_star_norm * f_star_norm;
    let bound = b / a1 + (eta / a1 + (b / a1).powi(2)).sqrt();
    Ok(BiasBound { a1, b, eta, bound })
}

/// Small step-size slope `2 d_1 (c_1 delta + c_2 rho delta_p)` of the bias
/// bound, with `d_1 = ||F(w*)|| / nu'`.
pub fn bias_slope_limit(kind: StrategyKind, c: &AnalysisConstants, f_star_norm: f64) -> Result<f64> {
    let (c1, c2) = kind
        .coefficients()
        .ok_or_else(|| GnepError::Config("the SG dynamics have no bias".into()))?;
    let d1 = f_star_norm / c.nu_prime();
    Ok(2.0 * d1 * (c1 * c.delta + c2 * c.rho * c.delta_p))
}

/// Options for the deterministic solvers.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Residual tolerance.
    pub tol: f64,
    pub max_newton: usize,
    /// Iteration cap of the fallback recursion.
    pub max_recursion: usize,
    pub initial: Option<DVector<f64>>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_newton: 500,
            max_recursion: 10_000_000,
            initial: None,
        }
    }
}

/// Semismooth Newton with backtracking on `||r||`. Returns `None` if it
/// stalls.
fn newton<R, J>(residual: R, jacobian: J, mut w: DVector<f64>, tol: f64, max_iter: usize) -> Option<DVector<f64>>
where
    R: Fn(&DVector<f64>) -> DVector<f64>,
    J: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut r = residual(&w);
    let mut rn = r.norm();
    for _ in 0..max_iter {
        let d = linalg::solve(&jacobian(&w), &(-&r))?;
        if !d.iter().all(|x| x.is_finite()) {
            return None;
        }
        if rn <= tol && d.norm() <= tol * (1.0 + w.norm()) {
            return Some(w);
        }
        let mut s = 1.0;
        loop {
            let cand = &w + s * &d;
            let rc = residual(&cand);
            let rcn = rc.norm();
            if rcn <= (1.0 - 1e-4 * s) * rn || (rcn <= rn && rn <= tol) {
                w = cand;
                r = rc;
                rn = rcn;
                break;
            }
            s *= 0.5;
            if s < 1e-12 {
                return if rn <= tol { Some(w) } else { None };
            }
        }
    }
    (rn <= tol).then_some(w)
}

/// Unique penalized Nash equilibrium `w*(rho)`: the zero of
/// `F(w) + rho grad p(w)`, with `||F^p(w*)|| <= tol`.
pub fn solve_penalized_nash(problem: &Problem, opts: &SolveOptions) -> Result<DVector<f64>> {
    problem.penalty.require_differentiable()?;
    let mc = problem.game.monotonicity_constants();
    if !mc.strongly_monotone {
        return Err(GnepError::ConditionViolated(format!(
            "F is not strongly monotone (nu = {:e})",
            mc.nu
        )));
    }
    let m = problem.dim();
    let w0 = opts.initial.clone().unwrap_or_else(|| DVector::zeros(m));
    problem.game.check_dim(&w0)?;
    let rho = problem.penalty.rho;
    let res = |w: &DVector<f64>| {
        let mut f = problem.game.gradient_unchecked(w);
        penalty::accumulate_gradient(&problem.constraints, w, rho, &mut f);
        f
    };
    let jac = |w: &DVector<f64>| problem.game.matrix() + rho * penalty::penalty_hessian(&problem.constraints, w);
    if let Some(w) = newton(res, jac, w0.clone(), opts.tol, opts.max_newton) {
        return Ok(w);
    }
    // forward recursion with step nu / L^2, a contraction for strongly
    // monotone Lipschitz operators
    let lip = penalty_lipschitz_constants(&problem.constraints, &problem.penalty, problem.topology(), 1.0)?;
    let l = mc.delta + rho * lip.delta_p;
    let mu = mc.nu / (l * l);
    let mut w = w0;
    let mut rn = f64::INFINITY;
    for _ in 0..opts.max_recursion {
        let r = res(&w);
        rn = r.norm();
        if rn <= opts.tol {
            return Ok(w);
        }
        w -= mu * r;
    }
    Err(GnepError::NoConvergence {
        iterations: opts.max_recursion,
        residual: rn,
    })
}

/// Fixed point of the noiseless ATP/PTA recursion with its auxiliaries.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub w: DVector<f64>,
    pub phi: DVector<f64>,
    pub psi: DVector<f64>,
}

/// One application of the noiseless unified map, returning `(phi, psi, w)`.
pub fn unified_map(
    kind: StrategyKind,
    problem: &Problem,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>)> {
    let (c1, c2) = kind
        .coefficients()
        .ok_or_else(|| GnepError::Config("the unified map covers ATP and PTA only".into()))?;
    let rho = problem.penalty.rho;
    let pen = |x: &DVector<f64>, c: f64| {
        if c == 0.0 {
            return x.clone();
        }
        let mut g = DVector::zeros(x.len());
        penalty::accumulate_gradient(&problem.constraints, x, c * rho, &mut g);
        x - u.component_mul(&g)
    };
    let phi = pen(w, c1);
    let psi = &phi - u.component_mul(&problem.game.gradient_unchecked(&phi));
    let next = pen(&psi, c2);
    Ok((phi, psi, next))
}

/// Options for [`solve_fixed_point`].
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub solve: SolveOptions,
    /// Refuse to solve when the noiseless step-size conditions fail.
    pub require_conditions: bool,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        Self {
            solve: SolveOptions::default(),
            require_conditions: true,
        }
    }
}

/// Fixed point `w_inf` of the noiseless ATP/PTA recursion, with
/// `||w_inf - T(w_inf)|| <= tol`.
pub fn solve_fixed_point(
    kind: StrategyKind,
    problem: &Problem,
    steps: &StepSizes,
    opts: &FixedPointOptions,
) -> Result<FixedPoint> {
    problem.penalty.require_differentiable()?;
    let (c1, c2) = kind
        .coefficients()
        .ok_or_else(|| GnepError::Config("fixed points are defined for ATP and PTA".into()))?;
    if opts.require_conditions {
        let c = AnalysisConstants::compute(problem, steps, 0.0, 0.0)?;
        let b = step_size_bound(BoundKind::Deterministic, &c)?;
        if !b.satisfied() {
            return Err(GnepError::ConditionViolated(b.violations.join("; ")));
        }
    }
    let m = problem.dim();
    let u = steps.per_entry(problem.topology())?;
    let w0 = opts.solve.initial.clone().unwrap_or_else(|| DVector::zeros(m));
    problem.game.check_dim(&w0)?;
    let rho = problem.penalty.rho;
    let res = |w: &DVector<f64>| {
        let (_, _, t) = unified_map(kind, problem, &u, w).expect("coefficients checked");
        w - t
    };
    let ud = DMatrix::from_diagonal(&u);
    let id = DMatrix::<f64>::identity(m, m);
    let adapt = &id - &ud * problem.game.matrix();
    let jac = |w: &DVector<f64>| {
        let (_, psi, _) = unified_map(kind, problem, &u, w).expect("coefficients checked");
        let pre = if c1 != 0.0 {
            &id - c1 * rho * &ud * penalty::penalty_hessian(&problem.constraints, w)
        } else {
            id.clone()
        };
        let post = if c2 != 0.0 {
            &id - c2 * rho * &ud * penalty::penalty_hessian(&problem.constraints, &psi)
        } else {
            id.clone()
        };
        &id - post * &adapt * pre
    };
    let w = match newton(res, jac, w0.clone(), opts.solve.tol, opts.solve.max_newton) {
        Some(w) => w,
        None => {
            let mut w = w0;
            let mut rn = f64::INFINITY;
            let mut done = false;
            for _ in 0..opts.solve.max_recursion {
                let (_, _, t) = unified_map(kind, problem, &u, &w)?;
                rn = (&t - &w).norm();
                w = t;
                if !rn.is_finite() {
                    break;
                }
                if rn <= opts.solve.tol {
                    done = true;
                    break;
                }
            }
            if !done {
                return Err(GnepError::NoConvergence {
                    iterations: opts.solve.max_recursion,
                    residual: rn,
                });
            }
            w
        }
    };
    let (phi, psi, _) = unified_map(kind, problem, &u, &w)?;
    Ok(FixedPoint { w, phi, psi })
}
