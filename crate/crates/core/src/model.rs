//! Networked quadratic games.
//!
//! A game is described by its agent [`Topology`], the block matrix `B` and
//! vector `b` of the expected block gradient `F(w) = B w + b`, and a
//! [`NoiseModel`] describing how single realizations `B_i`, `b_i` scatter
//! around their means.

use std::collections::VecDeque;
use std::ops::{Deref, DerefMut, Range};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::linalg;

/// Agents, their action dimensions and their neighborhoods.
///
/// Neighborhoods are stored sorted and always contain the agent itself. The
/// neighbor relation is symmetric and the graph is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    dims: Vec<usize>,
    neighborhoods: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl Topology {
    pub fn new(dims: Vec<usize>, mut neighborhoods: Vec<Vec<usize>>) -> Result<Self> {
        let n = dims.len();
        if n == 0 {
            return Err(GnepError::Structure("network has no agents".into()));
        }
        if neighborhoods.len() != n {
            return Err(GnepError::Dimension {
                expected: n,
                found: neighborhoods.len(),
                context: "neighborhood count",
            });
        }
        if let Some(k) = dims.iter().position(|&d| d == 0) {
            return Err(GnepError::Structure(format!("agent {k} has an empty action")));
        }
        for (k, nb) in neighborhoods.iter_mut().enumerate() {
            nb.sort_unstable();
            nb.dedup();
            if let Some(&bad) = nb.iter().find(|&&l| l >= n) {
                return Err(GnepError::Structure(format!(
                    "agent {k} lists unknown neighbor {bad}"
                )));
            }
            if nb.binary_search(&k).is_err() {
                return Err(GnepError::Structure(format!(
                    "agent {k} is missing from its own neighborhood"
                )));
            }
        }
        for k in 0..n {
            for &l in &neighborhoods[k] {
                if neighborhoods[l].binary_search(&k).is_err() {
                    return Err(GnepError::Structure(format!(
                        "neighbor relation is not symmetric: {l} in N_{k} but {k} not in N_{l}"
                    )));
                }
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        let topo = Self {
            dims,
            neighborhoods,
            offsets,
        };
        if !topo.is_connected() {
            return Err(GnepError::Structure("agent graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Builds a topology from undirected agent links; self-loops are implied.
    pub fn from_links(dims: Vec<usize>, links: &[(usize, usize)]) -> Result<Self> {
        let n = dims.len();
        let mut nb: Vec<Vec<usize>> = (0..n).map(|k| vec![k]).collect();
        for &(a, b) in links {
            if a >= n || b >= n {
                return Err(GnepError::Structure(format!("link ({a}, {b}) out of range")));
            }
            nb[a].push(b);
            nb[b].push(a);
        }
        Self::new(dims, nb)
    }

    pub fn num_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total action dimension `M`.
    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Index range of agent `k`'s block inside the stacked profile.
    pub fn block(&self, k: usize) -> Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    /// Agent owning the stacked coordinate `index`.
    pub fn owner(&self, index: usize) -> usize {
        match self.offsets.binary_search(&index) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    pub fn neighborhood(&self, k: usize) -> &[usize] {
        &self.neighborhoods[k]
    }

    pub fn neighborhoods(&self) -> &[Vec<usize>] {
        &self.neighborhoods
    }

    pub fn are_neighbors(&self, k: usize, l: usize) -> bool {
        self.neighborhoods[k].binary_search(&l).is_ok()
    }

    /// `M^k`, the dimension of the neighborhood action `w^k`.
    pub fn neighborhood_dim(&self, k: usize) -> usize {
        self.neighborhoods[k].iter().map(|&l| self.dims[l]).sum()
    }

    fn is_connected(&self) -> bool {
        let n = self.num_agents();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(k) = queue.pop_front() {
            for &l in &self.neighborhoods[k] {
                if !seen[l] {
                    seen[l] = true;
                    queue.push_back(l);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Stacked action profile `w = col{w_1, ..., w_N}`.
///
/// Dereferences to the underlying vector so it can be handed to every
/// operation taking `&DVector<f64>`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionProfile(pub DVector<f64>);

impl ActionProfile {
    pub fn zeros(topology: &Topology) -> Self {
        Self(DVector::zeros(topology.total_dim()))
    }

    /// Stacks per-agent blocks, checking each length against the topology.
    pub fn from_blocks(topology: &Topology, blocks: &[Vec<f64>]) -> Result<Self> {
        if blocks.len() != topology.num_agents() {
            return Err(GnepError::Dimension {
                expected: topology.num_agents(),
                found: blocks.len(),
                context: "number of action blocks",
            });
        }
        let mut data = Vec::with_capacity(topology.total_dim());
        for (k, blk) in blocks.iter().enumerate() {
            if blk.len() != topology.dims()[k] {
                return Err(GnepError::Dimension {
                    expected: topology.dims()[k],
                    found: blk.len(),
                    context: "action block length",
                });
            }
            data.extend_from_slice(blk);
        }
        Ok(Self(DVector::from_vec(data)))
    }

    /// The action `w_k` of agent `k`.
    pub fn block(&self, topology: &Topology, k: usize) -> Vec<f64> {
        self.0.as_slice()[topology.block(k)].to_vec()
    }

    /// The neighborhood action `w^k`, blocks ordered by agent index.
    pub fn neighborhood(&self, topology: &Topology, k: usize) -> Vec<f64> {
        topology
            .neighborhood(k)
            .iter()
            .flat_map(|&l| self.0.as_slice()[topology.block(l)].iter().copied())
            .collect()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

impl Deref for ActionProfile {
    type Target = DVector<f64>;
    fn deref(&self) -> &DVector<f64> {
        &self.0
    }
}

impl DerefMut for ActionProfile {
    fn deref_mut(&mut self) -> &mut DVector<f64> {
        &mut self.0
    }
}

impl From<DVector<f64>> for ActionProfile {
    fn from(v: DVector<f64>) -> Self {
        Self(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    AdditiveUniform,
}

/// One disturbance direction: the realization adds `v * matrix` to `B` and
/// `v * vector` to `b`, with `v` uniform on `[-h, h]`.
///
/// A direction may disturb `B` or `b` but not both, so the two disturbances
/// stay independent.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseDirection {
    /// Sparse `(row, col, coeff)` entries.
    #[serde(default)]
    pub matrix: Vec<(usize, usize, f64)>,
    /// Sparse `(index, coeff)` entries.
    #[serde(default)]
    pub vector: Vec<(usize, f64)>,
}

impl NoiseDirection {
    fn apply(&self, w: &DVector<f64>, scale: f64, out: &mut DVector<f64>) {
        for &(r, c, a) in &self.matrix {
            out[r] += scale * a * w[c];
        }
        for &(i, a) in &self.vector {
            out[i] += scale * a;
        }
    }

    /// Dense copy of the matrix part.
    pub fn dense_matrix(&self, m: usize) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(m, m);
        for &(r, c, a) in &self.matrix {
            d[(r, c)] += a;
        }
        d
    }

    pub fn dense_vector(&self, m: usize) -> DVector<f64> {
        let mut d = DVector::zeros(m);
        for &(i, a) in &self.vector {
            d[i] += a;
        }
        d
    }
}

/// Zero-mean disturbance model for the sampled gradient.
///
/// Every realization draws one independent `v_j ~ U[-h_j, h_j]` per
/// direction, in direction order, from the caller's stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    #[serde(default)]
    pub half_widths: Vec<f64>,
    #[serde(default)]
    pub directions: Vec<NoiseDirection>,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            half_widths: Vec::new(),
            directions: Vec::new(),
        }
    }

    pub fn additive_uniform(terms: Vec<(f64, NoiseDirection)>) -> Self {
        let (half_widths, directions) = terms.into_iter().unzip();
        Self {
            kind: NoiseKind::AdditiveUniform,
            half_widths,
            directions,
        }
    }

    pub fn is_none(&self) -> bool {
        self.kind == NoiseKind::None || self.half_widths.iter().all(|&h| h == 0.0)
    }

    fn validate(&self, m: usize) -> Result<()> {
        match self.kind {
            NoiseKind::None => Ok(()),
            NoiseKind::AdditiveUniform => {
                if self.half_widths.len() != self.directions.len() {
                    return Err(GnepError::Dimension {
                        expected: self.directions.len(),
                        found: self.half_widths.len(),
                        context: "noise half-widths per direction",
                    });
                }
                if let Some(h) = self.half_widths.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
                    return Err(GnepError::Structure(format!("invalid half-width {h}")));
                }
                for (j, d) in self.directions.iter().enumerate() {
                    if d.matrix.iter().any(|&(r, c, _)| r >= m || c >= m)
                        || d.vector.iter().any(|&(i, _)| i >= m)
                    {
                        return Err(GnepError::Structure(format!(
                            "noise direction {j} indexes outside the action space"
                        )));
                    }
                    if !d.matrix.is_empty() && !d.vector.is_empty() {
                        return Err(GnepError::Structure(format!(
                            "noise direction {j} disturbs both B and b"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// Draws one disturbance vector `v` (empty when there is no noise).
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self.kind {
            NoiseKind::None => Vec::new(),
            NoiseKind::AdditiveUniform => self
                .half_widths
                .iter()
                .map(|&h| h * (2.0 * rng.gen::<f64>() - 1.0))
                .collect(),
        }
    }

    /// Variance `h^2 / 3` of each disturbance.
    pub fn variances(&self) -> Vec<f64> {
        match self.kind {
            NoiseKind::None => Vec::new(),
            NoiseKind::AdditiveUniform => self.half_widths.iter().map(|h| h * h / 3.0).collect(),
        }
    }
}

/// A networked game with quadratic costs.
///
/// `B` is stored dense; block `(k, l)` must vanish unless `l` is a neighbor of
/// `k`, and the diagonal blocks must be symmetric (they are twice the
/// Hessian of a quadratic cost).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticGame {
    topology: Topology,
    b_mat: DMatrix<f64>,
    b_vec: DVector<f64>,
    noise: NoiseModel,
}

impl QuadraticGame {
    pub fn new(
        topology: Topology,
        b_mat: DMatrix<f64>,
        b_vec: DVector<f64>,
        noise: NoiseModel,
    ) -> Result<Self> {
        let m = topology.total_dim();
        if b_mat.nrows() != m || b_mat.ncols() != m {
            return Err(GnepError::Dimension {
                expected: m,
                found: if b_mat.nrows() != m { b_mat.nrows() } else { b_mat.ncols() },
                context: "B matrix side",
            });
        }
        if b_vec.len() != m {
            return Err(GnepError::Dimension {
                expected: m,
                found: b_vec.len(),
                context: "b vector",
            });
        }
        for k in 0..topology.num_agents() {
            let rows = topology.block(k);
            for l in 0..topology.num_agents() {
                let cols = topology.block(l);
                let nonzero = rows
                    .clone()
                    .any(|r| cols.clone().any(|c| b_mat[(r, c)] != 0.0));
                if nonzero && !topology.are_neighbors(k, l) {
                    return Err(GnepError::Structure(format!(
                        "B block ({k}, {l}) is nonzero but {l} is not a neighbor of {k}"
                    )));
                }
            }
            for r in rows.clone() {
                for c in rows.clone() {
                    let (x, y) = (b_mat[(r, c)], b_mat[(c, r)]);
                    if (x - y).abs() > 1e-12 * (1.0 + x.abs().max(y.abs())) {
                        return Err(GnepError::Structure(format!(
                            "diagonal block {k} of B is not symmetric"
                        )));
                    }
                }
            }
        }
        noise.validate(m)?;
        for d in &noise.directions {
            for &(r, c, a) in &d.matrix {
                if a != 0.0 && !topology.are_neighbors(topology.owner(r), topology.owner(c)) {
                    return Err(GnepError::Structure(
                        "noise direction couples non-neighbors".into(),
                    ));
                }
            }
        }
        Ok(Self {
            topology,
            b_mat,
            b_vec,
            noise,
        })
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn dim(&self) -> usize {
        self.topology.total_dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b_mat
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.b_vec
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    /// Same game with the noise model replaced.
    pub fn with_noise(&self, noise: NoiseModel) -> Result<Self> {
        Self::new(self.topology.clone(), self.b_mat.clone(), self.b_vec.clone(), noise)
    }

    pub(crate) fn check_dim(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(GnepError::Dimension {
                expected: self.dim(),
                found: w.len(),
                context: "action profile",
            });
        }
        Ok(())
    }

    /// Expected block gradient `F(w) = B w + b`.
    pub fn block_gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(w)?;
        Ok(self.gradient_unchecked(w))
    }

    pub(crate) fn gradient_unchecked(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.b_mat * w + &self.b_vec
    }

    /// One realization `Q_i(w) = B_i w + b_i` of the block gradient.
    pub fn sample_gradient<R: Rng + ?Sized>(
        &self,
        w: &DVector<f64>,
        rng: &mut R,
    ) -> Result<DVector<f64>> {
        self.check_dim(w)?;
        Ok(self.sample_unchecked(w, rng))
    }

    pub(crate) fn sample_unchecked<R: Rng + ?Sized>(
        &self,
        w: &DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        let mut g = self.gradient_unchecked(w);
        let v = self.noise.draw(rng);
        for (d, vj) in self.noise.directions.iter().zip(v) {
            d.apply(w, vj, &mut g);
        }
        g
    }

    /// Gradient noise `s_i(w) = Q_i(w) - F(w)` for one realization.
    pub fn sample_noise<R: Rng + ?Sized>(&self, w: &DVector<f64>, rng: &mut R) -> Result<DVector<f64>> {
        self.check_dim(w)?;
        let mut s = DVector::zeros(self.dim());
        let v = self.noise.draw(rng);
        for (d, vj) in self.noise.directions.iter().zip(v) {
            d.apply(w, vj, &mut s);
        }
        Ok(s)
    }

    /// One full realization `(B_i, b_i)`.
    pub fn sample_matrices<R: Rng + ?Sized>(&self, rng: &mut R) -> (DMatrix<f64>, DVector<f64>) {
        let mut bm = self.b_mat.clone();
        let mut bv = self.b_vec.clone();
        let v = self.noise.draw(rng);
        for (d, vj) in self.noise.directions.iter().zip(v) {
            for &(r, c, a) in &d.matrix {
                bm[(r, c)] += vj * a;
            }
            for &(i, a) in &d.vector {
                bv[i] += vj * a;
            }
        }
        (bm, bv)
    }

    /// Expected cost of agent `k`:
    /// `J_k(w) = w_k' B_kk w_k / 2 + sum_{l != k} w_k' B_kl w_l + b_k' w_k`,
    /// whose gradient in `w_k` is the `k`-th block of `F(w)`.
    pub fn agent_cost(&self, k: usize, w: &DVector<f64>) -> Result<f64> {
        self.check_dim(w)?;
        let rows = self.topology.block(k);
        let mut cost = 0.0;
        for r in rows.clone() {
            let mut acc = self.b_vec[r];
            for c in 0..self.dim() {
                let coeff = if rows.contains(&c) { 0.5 } else { 1.0 };
                acc += coeff * self.b_mat[(r, c)] * w[c];
            }
            cost += w[r] * acc;
        }
        Ok(cost)
    }

    /// `nu = lambda_min((B + B')/2)` and `delta = sigma_max(B)`.
    pub fn monotonicity_constants(&self) -> MonotonicityConstants {
        let sym = linalg::symmetric_part(&self.b_mat);
        let (nu, _) = linalg::sym_eig_extremes(&sym);
        let delta = linalg::sigma_max(&self.b_mat);
        MonotonicityConstants {
            nu,
            delta,
            strongly_monotone: nu > 0.0,
        }
    }
}

/// Strong-monotonicity and Lipschitz constants of `F`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityConstants {
    pub nu: f64,
    pub delta: f64,
    /// `false` when `nu <= 0`; the analysis results then do not apply.
    pub strongly_monotone: bool,
}
