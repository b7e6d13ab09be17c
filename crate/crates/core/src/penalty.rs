//! Shared affine constraints and their penalty reformulation.
//!
//! Equalities `a'w + c = 0` are penalized with `theta_ep(x) = x^2` and
//! inequalities `a'w + c <= 0` with the half-quadratic `theta_ip`. The
//! aggregate penalty is `p(w) = sum theta_ep(h_u(w)) + sum theta_ip(g_q(w))`
//! and the penalized operator is `F(w) + rho * grad p(w)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::model::Topology;

pub fn theta_ep(x: f64) -> f64 {
    x * x
}

pub fn theta_ep_prime(x: f64) -> f64 {
    2.0 * x
}

/// Half-quadratic penalty: `0` for `x <= 0`, `x^2 / 2` otherwise.
pub fn theta_ip(x: f64) -> f64 {
    if x > 0.0 {
        0.5 * x * x
    } else {
        0.0
    }
}

/// Derivative of [`theta_ip`]; the value at the kink is `0` from both sides.
pub fn theta_ip_prime(x: f64) -> f64 {
    x.max(0.0)
}

/// Exact (non-smooth) penalty `max(0, x)`.
pub fn theta_ip_exact(x: f64) -> f64 {
    x.max(0.0)
}

/// Affine function `a'w + c` with sparse `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "AffineDoc", into = "AffineDoc")]
pub struct AffineConstraint {
    coeffs: Vec<(usize, f64)>,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
struct AffineDoc {
    a: BTreeMap<usize, f64>,
    c: f64,
}

impl From<AffineDoc> for AffineConstraint {
    fn from(d: AffineDoc) -> Self {
        Self::new(d.a, d.c)
    }
}

impl From<AffineConstraint> for AffineDoc {
    fn from(a: AffineConstraint) -> Self {
        AffineDoc {
            a: a.coeffs.into_iter().collect(),
            c: a.offset,
        }
    }
}

impl AffineConstraint {
    /// Repeated indices are summed and zero coefficients dropped.
    pub fn new(coeffs: impl IntoIterator<Item = (usize, f64)>, offset: f64) -> Self {
        let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
        for (i, a) in coeffs {
            *merged.entry(i).or_insert(0.0) += a;
        }
        Self {
            coeffs: merged.into_iter().filter(|&(_, a)| a != 0.0).collect(),
            offset,
        }
    }

    pub fn coeffs(&self) -> &[(usize, f64)] {
        &self.coeffs
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn value(&self, w: &DVector<f64>) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * w[i]).sum::<f64>() + self.offset
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|&(_, a)| a * a).sum::<f64>().sqrt()
    }

    /// Norm of the coefficients touching agent `k`'s block.
    pub fn block_norm(&self, topology: &Topology, k: usize) -> f64 {
        let r = topology.block(k);
        self.coeffs
            .iter()
            .filter(|(i, _)| r.contains(i))
            .map(|&(_, a)| a * a)
            .sum::<f64>()
            .sqrt()
    }

    pub fn dense(&self, m: usize) -> DVector<f64> {
        let mut v = DVector::zeros(m);
        for &(i, a) in &self.coeffs {
            v[i] = a;
        }
        v
    }

    fn agents(&self, topology: &Topology) -> Vec<usize> {
        let mut ks: Vec<usize> = self.coeffs.iter().map(|&(i, _)| topology.owner(i)).collect();
        ks.dedup();
        ks.sort_unstable();
        ks.dedup();
        ks
    }

    /// True for a plain sign bound `-a w_i <= 0` with `a > 0`.
    pub fn is_nonnegativity_bound(&self) -> bool {
        self.offset == 0.0 && self.coeffs.len() == 1 && self.coeffs[0].1 < 0.0
    }
}

/// The distinct shared constraints of the network, with the agents sharing
/// each one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    dim: usize,
    equalities: Vec<AffineConstraint>,
    inequalities: Vec<AffineConstraint>,
    eq_members: Vec<Vec<usize>>,
    ineq_members: Vec<Vec<usize>>,
}

impl ConstraintSet {
    /// Validates the shared-constraint condition and removes repeats.
    pub fn new(
        topology: &Topology,
        equalities: Vec<AffineConstraint>,
        inequalities: Vec<AffineConstraint>,
    ) -> Result<Self> {
        let dim = topology.total_dim();
        let dedup = |list: Vec<AffineConstraint>| -> Result<(Vec<AffineConstraint>, Vec<Vec<usize>>)> {
            let mut out: Vec<AffineConstraint> = Vec::with_capacity(list.len());
            let mut members = Vec::with_capacity(list.len());
            for c in list {
                if let Some(&(i, _)) = c.coeffs.iter().find(|&&(i, _)| i >= dim) {
                    return Err(GnepError::Structure(format!(
                        "constraint coefficient index {i} exceeds action dimension {dim}"
                    )));
                }
                if !c.offset.is_finite() || c.coeffs.iter().any(|(_, a)| !a.is_finite()) {
                    return Err(GnepError::Structure("non-finite constraint data".into()));
                }
                let agents = c.agents(topology);
                for (x, &k) in agents.iter().enumerate() {
                    for &l in &agents[x + 1..] {
                        if !topology.are_neighbors(k, l) {
                            return Err(GnepError::Structure(format!(
                                "constraint couples agents {k} and {l}, which are not neighbors"
                            )));
                        }
                    }
                }
                if !out.contains(&c) {
                    out.push(c);
                    members.push(agents);
                }
            }
            Ok((out, members))
        };
        let (equalities, eq_members) = dedup(equalities)?;
        let (inequalities, ineq_members) = dedup(inequalities)?;
        Ok(Self {
            dim,
            equalities,
            inequalities,
            eq_members,
            ineq_members,
        })
    }

    pub fn empty(topology: &Topology) -> Self {
        Self {
            dim: topology.total_dim(),
            equalities: Vec::new(),
            inequalities: Vec::new(),
            eq_members: Vec::new(),
            ineq_members: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn equalities(&self) -> &[AffineConstraint] {
        &self.equalities
    }

    pub fn inequalities(&self) -> &[AffineConstraint] {
        &self.inequalities
    }

    /// Agents sharing equality `u`.
    pub fn equality_members(&self, u: usize) -> &[usize] {
        &self.eq_members[u]
    }

    /// Agents sharing inequality `q`.
    pub fn inequality_members(&self, q: usize) -> &[usize] {
        &self.ineq_members[q]
    }

    pub fn is_empty(&self) -> bool {
        self.equalities.is_empty() && self.inequalities.is_empty()
    }

    /// Inequalities other than plain sign bounds; these are the coupling
    /// constraints handled with multipliers by the primal-dual baselines.
    pub fn coupling_inequalities(&self) -> Vec<AffineConstraint> {
        self.inequalities
            .iter()
            .filter(|c| !c.is_nonnegativity_bound())
            .cloned()
            .collect()
    }

    /// Largest violation over all constraints (0 when feasible).
    pub fn max_violation(&self, w: &DVector<f64>) -> f64 {
        let eq = self.equalities.iter().map(|c| c.value(w).abs());
        let ineq = self.inequalities.iter().map(|c| c.value(w).max(0.0));
        eq.chain(ineq).fold(0.0, f64::max)
    }

    fn check_dim(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim {
            return Err(GnepError::Dimension {
                expected: self.dim,
                found: w.len(),
                context: "action profile",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EqPenalty {
    #[default]
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IneqPenalty {
    #[default]
    HalfQuadratic,
    /// `max(0, x)`; not differentiable, so only usable for evaluation.
    L1Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub rho: f64,
    #[serde(default)]
    pub eq_kind: EqPenalty,
    #[serde(default)]
    pub ineq_kind: IneqPenalty,
}

impl PenaltyConfig {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho >= 0.0) || !rho.is_finite() {
            return Err(GnepError::Config(format!("penalty parameter must be >= 0, got {rho}")));
        }
        Ok(Self {
            rho,
            eq_kind: EqPenalty::Quadratic,
            ineq_kind: IneqPenalty::HalfQuadratic,
        })
    }

    pub fn is_differentiable(&self) -> bool {
        self.ineq_kind == IneqPenalty::HalfQuadratic
    }

    pub(crate) fn require_differentiable(&self) -> Result<()> {
        if self.is_differentiable() {
            Ok(())
        } else {
            Err(GnepError::NonDifferentiable("l1_exact"))
        }
    }
}

/// Aggregate penalty `p(w)` (without the factor `rho`).
pub fn penalty_value(cs: &ConstraintSet, cfg: &PenaltyConfig, w: &DVector<f64>) -> Result<f64> {
    cs.check_dim(w)?;
    let ineq: fn(f64) -> f64 = match cfg.ineq_kind {
        IneqPenalty::HalfQuadratic => theta_ip,
        IneqPenalty::L1Exact => theta_ip_exact,
    };
    let eq: f64 = cs.equalities.iter().map(|c| theta_ep(c.value(w))).sum();
    let iq: f64 = cs.inequalities.iter().map(|c| ineq(c.value(w))).sum();
    Ok(eq + iq)
}

/// `grad p(w)` stacked over all agents.
pub fn penalty_gradient(
    cs: &ConstraintSet,
    cfg: &PenaltyConfig,
    w: &DVector<f64>,
) -> Result<DVector<f64>> {
    cs.check_dim(w)?;
    cfg.require_differentiable()?;
    let mut g = DVector::zeros(cs.dim);
    accumulate_gradient(cs, w, 1.0, &mut g);
    Ok(g)
}

/// `out += scale * grad p(w)`; inputs are assumed validated.
pub(crate) fn accumulate_gradient(cs: &ConstraintSet, w: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
    for c in &cs.equalities {
        let d = scale * theta_ep_prime(c.value(w));
        for &(i, a) in &c.coeffs {
            out[i] += d * a;
        }
    }
    for c in &cs.inequalities {
        let v = c.value(w);
        if v > 0.0 {
            let d = scale * v;
            for &(i, a) in &c.coeffs {
                out[i] += d * a;
            }
        }
    }
}

/// Gradient of agent `k`'s own penalty `p_k(w^k)` with respect to `w_k`,
/// built only from the constraints `k` shares and the actions of its
/// neighborhood.
pub fn agent_penalty_gradient(
    cs: &ConstraintSet,
    cfg: &PenaltyConfig,
    topology: &Topology,
    k: usize,
    w: &DVector<f64>,
) -> Result<Vec<f64>> {
    cs.check_dim(w)?;
    cfg.require_differentiable()?;
    let block = topology.block(k);
    let mut g = vec![0.0; block.len()];
    let mut add = |c: &AffineConstraint, d: f64| {
        for &(i, a) in &c.coeffs {
            if block.contains(&i) {
                g[i - block.start] += d * a;
            }
        }
    };
    for (c, members) in cs.equalities.iter().zip(&cs.eq_members) {
        if members.contains(&k) {
            add(c, theta_ep_prime(c.value(w)));
        }
    }
    for (c, members) in cs.inequalities.iter().zip(&cs.ineq_members) {
        if members.contains(&k) {
            add(c, theta_ip_prime(c.value(w)));
        }
    }
    Ok(g)
}

/// Element of the generalized Hessian of `p` at `w`: `2aa'` for every
/// equality plus `aa'` for every strictly violated inequality.
pub fn penalty_hessian(cs: &ConstraintSet, w: &DVector<f64>) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(cs.dim, cs.dim);
    let mut add = |c: &AffineConstraint, s: f64| {
        for &(i, a) in &c.coeffs {
            for &(j, b) in &c.coeffs {
                h[(i, j)] += s * a * b;
            }
        }
    };
    for c in &cs.equalities {
        add(c, 2.0);
    }
    for c in &cs.inequalities {
        if c.value(w) > 0.0 {
            add(c, 1.0);
        }
    }
    h
}

/// Per-agent Lipschitz constants of the penalty gradients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyLipschitz {
    pub gamma: Vec<f64>,
    pub delta_p: f64,
}

/// Analytic Lipschitz constants `gamma_k` and `delta_p = ||gamma||`.
///
/// Each equality contributes `2 ||a_k|| ||a||` to `gamma_k` and each
/// inequality `||a_k|| ||a||`, where `a_k` is the part of `a` acting on
/// agent `k`. For affine constraints these hold globally; `box_radius` only
/// has to be positive.
pub fn penalty_lipschitz_constants(
    cs: &ConstraintSet,
    cfg: &PenaltyConfig,
    topology: &Topology,
    box_radius: f64,
) -> Result<PenaltyLipschitz> {
    cfg.require_differentiable()?;
    if !(box_radius > 0.0) {
        return Err(GnepError::Config(format!("box radius must be positive, got {box_radius}")));
    }
    let mut gamma = vec![0.0; topology.num_agents()];
    let mut add = |c: &AffineConstraint, members: &[usize], factor: f64| {
        let n = c.norm();
        for &k in members {
            gamma[k] += factor * c.block_norm(topology, k) * n;
        }
    };
    for (c, m) in cs.equalities.iter().zip(&cs.eq_members) {
        add(c, m, 2.0);
    }
    for (c, m) in cs.inequalities.iter().zip(&cs.ineq_members) {
        add(c, m, 1.0);
    }
    let delta_p = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    Ok(PenaltyLipschitz { gamma, delta_p })
}
