//! Stochastic network Cournot competition.
//!
//! Factory `k` delivers `w_k(u)` to each market it serves. Its cost is
//! `(x_k + v_x,k) (sum_u w_k(u))^2` and market `l` pays the price
//! `q_l - (y_l + v_y,l) r(l)`, where `r(l)` is the total delivery to `l`.
//! The expected gradient of factory `k` in `w_k(u)` (market `l`) is
//! `2 x_k sum w_k - q_l + y_l (w_k(u) + r(l))`, so
//!
//! * `B` has `2 x_k + 2 y_l` on the diagonal, `2 x_k` between entries of the
//!   same factory, and `y_l` between entries of different factories serving
//!   the same market;
//! * `b = -q_l` entrywise.
//!
//! Shared constraints are `-w_k(u) <= 0` and `r(l) - h_l <= 0`.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::model::{NoiseDirection, NoiseModel, QuadraticGame, Topology};
use crate::penalty::{AffineConstraint, ConstraintSet};

/// Half-widths of the uniform disturbances on `x_k` and `y_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CournotNoise {
    pub vx: f64,
    pub vy: f64,
}

/// Cournot network description.
///
/// `edges` lists `(factory, market)` pairs; the actions of a factory are
/// stacked in the order its edges appear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CournotSpec {
    #[serde(rename = "N")]
    pub num_factories: usize,
    #[serde(rename = "L")]
    pub num_markets: usize,
    pub edges: Vec<(usize, usize)>,
    pub x: Vec<f64>,
    pub q: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub noise: CournotNoise,
}

impl CournotSpec {
    /// Uniform parameters on a given incidence.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        num_factories: usize,
        num_markets: usize,
        edges: Vec<(usize, usize)>,
        x: f64,
        q: f64,
        y: f64,
        h: f64,
        noise: CournotNoise,
    ) -> Self {
        Self {
            num_factories,
            num_markets,
            edges,
            x: vec![x; num_factories],
            q: vec![q; num_markets],
            y: vec![y; num_markets],
            h: vec![h; num_markets],
            noise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (n, l) = (self.num_factories, self.num_markets);
        if n == 0 || l == 0 {
            return Err(GnepError::Structure("need at least one factory and one market".into()));
        }
        for (name, len, want) in [
            ("x", self.x.len(), n),
            ("q", self.q.len(), l),
            ("y", self.y.len(), l),
            ("h", self.h.len(), l),
        ] {
            if len != want {
                return Err(GnepError::Structure(format!("{name} has {len} entries, expected {want}")));
            }
        }
        if self.x.iter().chain(&self.q).chain(&self.y).any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(GnepError::Structure("x, q and y must be positive".into()));
        }
        if self.h.iter().any(|v| !v.is_finite()) {
            return Err(GnepError::Structure("capacities must be finite".into()));
        }
        if !(self.noise.vx >= 0.0 && self.noise.vy >= 0.0) {
            return Err(GnepError::Structure("noise half-widths must be >= 0".into()));
        }
        let mut seen = vec![vec![false; l]; n];
        for &(k, m) in &self.edges {
            if k >= n || m >= l {
                return Err(GnepError::Structure(format!("edge ({k}, {m}) out of range")));
            }
            if seen[k][m] {
                return Err(GnepError::Structure(format!("edge ({k}, {m}) listed twice")));
            }
            seen[k][m] = true;
        }
        if let Some(k) = (0..n).find(|&k| !seen[k].iter().any(|&s| s)) {
            return Err(GnepError::Structure(format!("factory {k} serves no market")));
        }
        if let Some(m) = (0..l).find(|&m| !seen.iter().any(|row| row[m])) {
            return Err(GnepError::Structure(format!("market {m} has no supplier")));
        }
        Ok(())
    }

    /// `(factory, market)` of every action coordinate, in stacked order.
    pub fn entries(&self) -> Vec<(usize, usize)> {
        (0..self.num_factories)
            .flat_map(|k| self.edges.iter().copied().filter(move |&(f, _)| f == k))
            .collect()
    }

    fn dims(&self) -> Vec<usize> {
        let mut d = vec![0; self.num_factories];
        for &(k, _) in &self.edges {
            d[k] += 1;
        }
        d
    }

    /// Factories are neighbors iff they share a market.
    pub fn topology(&self) -> Result<Topology> {
        self.validate()?;
        let n = self.num_factories;
        let mut links = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                let shared = self
                    .edges
                    .iter()
                    .any(|&(k, m)| k == a && self.edges.contains(&(b, m)));
                if shared {
                    links.push((a, b));
                }
            }
        }
        Topology::from_links(self.dims(), &links)
    }

    /// Capacity constraints `r(l) - h_l <= 0`, one per market.
    pub fn capacity_constraints(&self) -> Vec<AffineConstraint> {
        let entries = self.entries();
        (0..self.num_markets)
            .map(|m| {
                AffineConstraint::new(
                    entries.iter().enumerate().filter(|(_, e)| e.1 == m).map(|(i, _)| (i, 1.0)),
                    -self.h[m],
                )
            })
            .collect()
    }

    /// Realized cost of factory `k` under disturbances `vx` (per factory)
    /// and `vy` (per market), straight from the cost and price functions.
    pub fn sampled_cost(&self, k: usize, w: &DVector<f64>, vx: &[f64], vy: &[f64]) -> f64 {
        let entries = self.entries();
        let mut r = vec![0.0; self.num_markets];
        for (i, &(_, m)) in entries.iter().enumerate() {
            r[m] += w[i];
        }
        let own: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].0 == k).collect();
        let total: f64 = own.iter().map(|&i| w[i]).sum();
        let cost = (self.x[k] + vx[k]) * total * total;
        let revenue: f64 = own
            .iter()
            .map(|&i| {
                let m = entries[i].1;
                w[i] * (self.q[m] - (self.y[m] + vy[m]) * r[m])
            })
            .sum();
        cost - revenue
    }
}

/// Builds the quadratic game and the shared constraints of `spec`.
pub fn build_game(spec: &CournotSpec) -> Result<(QuadraticGame, ConstraintSet)> {
    let topology = spec.topology()?;
    let entries = spec.entries();
    let m = entries.len();
    let mut b = DMatrix::zeros(m, m);
    for (i, &(ki, li)) in entries.iter().enumerate() {
        for (j, &(kj, lj)) in entries.iter().enumerate() {
            let mut v = 0.0;
            if ki == kj {
                v += 2.0 * spec.x[ki];
            }
            if li == lj {
                v += if i == j { 2.0 * spec.y[li] } else { spec.y[li] };
            }
            b[(i, j)] = v;
        }
    }
    let bv = DVector::from_iterator(m, entries.iter().map(|&(_, l)| -spec.q[l]));
    let noise = if spec.noise.vx == 0.0 && spec.noise.vy == 0.0 {
        NoiseModel::none()
    } else {
        noise_model(spec, &entries)
    };
    let game = QuadraticGame::new(topology.clone(), b, bv, noise)?;
    let nonneg = (0..m).map(|i| AffineConstraint::new([(i, -1.0)], 0.0));
    let ineqs = nonneg.chain(spec.capacity_constraints()).collect();
    let cs = ConstraintSet::new(&topology, vec![], ineqs)?;
    Ok((game, cs))
}

/// One direction per factory (its `x_k`) followed by one per market (its
/// `y_l`, shared by every supplier of that market).
fn noise_model(spec: &CournotSpec, entries: &[(usize, usize)]) -> NoiseModel {
    let mut terms = Vec::with_capacity(spec.num_factories + spec.num_markets);
    for k in 0..spec.num_factories {
        let own: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].0 == k).collect();
        let matrix = own
            .iter()
            .flat_map(|&i| own.iter().map(move |&j| (i, j, 2.0)))
            .collect();
        terms.push((spec.noise.vx, NoiseDirection { matrix, vector: vec![] }));
    }
    for l in 0..spec.num_markets {
        let serving: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].1 == l).collect();
        let matrix = serving
            .iter()
            .flat_map(|&i| serving.iter().map(move |&j| (i, j, if i == j { 2.0 } else { 1.0 })))
            .collect();
        terms.push((spec.noise.vy, NoiseDirection { matrix, vector: vec![] }));
    }
    NoiseModel::additive_uniform(terms)
}

/// Factors with `B = X X' + Y1 Y1' + Y2 Y2'`: `X` is diagonal with
/// `sqrt(y_l)` for the market of each entry, `Y1` (M x N) holds
/// `sqrt(2 x_k)` on the entries of factory `k`, and `Y2` (M x L) holds
/// `sqrt(y_l)` on the entries serving market `l`.
pub fn decomposition_certificate(spec: &CournotSpec) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    spec.validate()?;
    let entries = spec.entries();
    let m = entries.len();
    let x = DMatrix::from_diagonal(&DVector::from_iterator(m, entries.iter().map(|&(_, l)| spec.y[l].sqrt())));
    let mut y1 = DMatrix::zeros(m, spec.num_factories);
    let mut y2 = DMatrix::zeros(m, spec.num_markets);
    for (i, &(k, l)) in entries.iter().enumerate() {
        y1[(i, k)] = (2.0 * spec.x[k]).sqrt();
        y2[(i, l)] = spec.y[l].sqrt();
    }
    Ok((x, y1, y2))
}

/// Seed of the default generated layout used by [`generated_network`].
pub const DEFAULT_LAYOUT_SEED: u64 = 2;

/// Twenty factories and seven markets with `x = 4`, `q = 12`, `y = 4`,
/// `h = 1` and uniform disturbances on `[-4, 4]`.
///
/// The incidence is drawn from a ChaCha8 stream seeded with `seed_layout`:
/// each factory picks 1 to 3 distinct markets uniformly; draws are repeated
/// until every market has a supplier and the factory graph is connected.
pub fn generated_network(seed_layout: u64) -> CournotSpec {
    const N: usize = 20;
    const L: usize = 7;
    let mut rng = ChaCha8Rng::seed_from_u64(seed_layout);
    loop {
        let mut edges = Vec::new();
        for k in 0..N {
            let count = rng.gen_range(1..=3);
            let mut markets = sample(&mut rng, L, count).into_vec();
            markets.sort_unstable();
            edges.extend(markets.into_iter().map(|m| (k, m)));
        }
        let spec = CournotSpec::uniform(N, L, edges, 4.0, 12.0, 4.0, 1.0, CournotNoise { vx: 4.0, vy: 4.0 });
        if spec.topology().is_ok() {
            return spec;
        }
    }
}
