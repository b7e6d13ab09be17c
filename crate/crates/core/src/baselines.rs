//! Projection-based primal-dual baselines.
//!
//! Both keep one multiplier `lambda_l >= 0` per coupling inequality
//! `g_l(w) = a_l'w + c_l <= 0` and project actions onto the nonnegative
//! orthant. With `G` the (sampled) block gradient:
//!
//! * Arrow-Hurwicz:
//!   `w = P[w - mu (G(w) + sum_l lambda_l a_l)]`,
//!   `lambda = P[lambda + mu g(w)]`
//! * iterative Tikhonov adds `-mu eps w` to the first update and
//!   `-mu eps lambda` to the second.
//!
//! Both updates read the previous iterate `(w, lambda)`.

use nalgebra::DVector;

use crate::error::{GnepError, Result};
use crate::model::QuadraticGame;
use crate::penalty::AffineConstraint;
use crate::strategies::{GradientMode, DIVERGENCE_NORM};

/// Componentwise `max(0, v)`.
pub fn project_nonneg(v: &DVector<f64>) -> DVector<f64> {
    v.map(|x| x.max(0.0))
}

/// Actions and multipliers of a primal-dual run.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualState {
    pub w: DVector<f64>,
    /// One nonnegative multiplier per coupling constraint.
    pub lambda: DVector<f64>,
}

impl PrimalDualState {
    pub fn new(w: DVector<f64>, num_constraints: usize) -> Self {
        Self {
            w,
            lambda: DVector::zeros(num_constraints),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrimalDualKind {
    ArrowHurwicz,
    /// Iterative Tikhonov with regularization `eps >= 0`.
    Tikhonov { eps: f64 },
}

/// Generic primal-dual update; `eps = 0` gives Arrow-Hurwicz.
fn primal_dual_step(
    game: &QuadraticGame,
    coupling: &[AffineConstraint],
    mu: f64,
    eps: f64,
    state: &PrimalDualState,
    mode: &mut GradientMode<'_>,
) -> Result<PrimalDualState> {
    game.check_dim(&state.w)?;
    if state.lambda.len() != coupling.len() {
        return Err(GnepError::Dimension {
            expected: coupling.len(),
            found: state.lambda.len(),
            context: "multipliers per coupling constraint",
        });
    }
    let w = &state.w;
    let mut dir = match mode {
        GradientMode::Exact => game.gradient_unchecked(w),
        GradientMode::Sampled(rng) => game.sample_unchecked(w, *rng),
    };
    for (c, &lam) in coupling.iter().zip(state.lambda.iter()) {
        if lam != 0.0 {
            for &(i, a) in c.coeffs() {
                dir[i] += lam * a;
            }
        }
    }
    if eps != 0.0 {
        dir += eps * w;
    }
    let w_next = project_nonneg(&(w - mu * dir));
    let lambda_next = DVector::from_iterator(
        coupling.len(),
        coupling
            .iter()
            .zip(state.lambda.iter())
            .map(|(c, &lam)| (lam + mu * c.value(w) - mu * eps * lam).max(0.0)),
    );
    let norm = w_next.norm().max(lambda_next.norm());
    if !norm.is_finite() || norm > DIVERGENCE_NORM {
        return Err(GnepError::Divergence { iteration: 1, norm });
    }
    Ok(PrimalDualState {
        w: w_next,
        lambda: lambda_next,
    })
}

pub fn arrow_hurwicz_step(
    game: &QuadraticGame,
    coupling: &[AffineConstraint],
    mu: f64,
    state: &PrimalDualState,
    mut mode: GradientMode<'_>,
) -> Result<PrimalDualState> {
    primal_dual_step(game, coupling, mu, 0.0, state, &mut mode)
}

pub fn tikhonov_step(
    game: &QuadraticGame,
    coupling: &[AffineConstraint],
    mu: f64,
    eps: f64,
    state: &PrimalDualState,
    mut mode: GradientMode<'_>,
) -> Result<PrimalDualState> {
    if !(eps >= 0.0) {
        return Err(GnepError::Config(format!("regularization must be >= 0, got {eps}")));
    }
    primal_dual_step(game, coupling, mu, eps, state, &mut mode)
}

/// Stateful primal-dual runner, the counterpart of
/// [`Learner`](crate::strategies::Learner).
#[derive(Debug, Clone)]
pub struct PrimalDualRunner<'a> {
    game: &'a QuadraticGame,
    coupling: &'a [AffineConstraint],
    mu: f64,
    eps: f64,
    state: PrimalDualState,
    iteration: usize,
}

impl<'a> PrimalDualRunner<'a> {
    pub fn new(
        kind: PrimalDualKind,
        game: &'a QuadraticGame,
        coupling: &'a [AffineConstraint],
        mu: f64,
        w0: DVector<f64>,
    ) -> Result<Self> {
        game.check_dim(&w0)?;
        if !(mu > 0.0) {
            return Err(GnepError::Config(format!("step-size must be positive, got {mu}")));
        }
        let eps = match kind {
            PrimalDualKind::ArrowHurwicz => 0.0,
            PrimalDualKind::Tikhonov { eps } if eps >= 0.0 => eps,
            PrimalDualKind::Tikhonov { eps } => {
                return Err(GnepError::Config(format!("regularization must be >= 0, got {eps}")))
            }
        };
        Ok(Self {
            game,
            coupling,
            mu,
            eps,
            state: PrimalDualState::new(w0, coupling.len()),
            iteration: 0,
        })
    }

    pub fn advance(&mut self, mode: &mut GradientMode<'_>) -> Result<()> {
        self.iteration += 1;
        self.state = primal_dual_step(self.game, self.coupling, self.mu, self.eps, &self.state, mode)
            .map_err(|e| match e {
                GnepError::Divergence { norm, .. } => GnepError::Divergence {
                    iteration: self.iteration,
                    norm,
                },
                e => e,
            })?;
        Ok(())
    }

    pub fn state(&self) -> &PrimalDualState {
        &self.state
    }

    pub fn iterate(&self) -> &DVector<f64> {
        &self.state.w
    }
}
