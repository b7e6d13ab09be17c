//! JSON document for general games.
//!
//! ```json
//! {
//!   "N": 2,
//!   "dims": [1, 1],
//!   "neighborhoods": [[0, 1], [0, 1]],
//!   "B": [2.0, 0.5, 0.5, 2.0],
//!   "b": [-1.0, -1.0],
//!   "noise": {"kind": "none"},
//!   "constraints": {
//!     "equalities": [],
//!     "inequalities": [{"a": {"0": 1.0, "1": 1.0}, "c": -1.0}]
//!   }
//! }
//! ```
//!
//! `B` is row-major. Noise directions are `{"matrix": [[row, col, coeff], ...],
//! "vector": [[index, coeff], ...]}` paired with `half_widths`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GnepError, Result};
use crate::model::{NoiseModel, QuadraticGame, Topology};
use crate::penalty::{AffineConstraint, ConstraintSet};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ConstraintsDocument {
    #[serde(default)]
    pub equalities: Vec<AffineConstraint>,
    #[serde(default)]
    pub inequalities: Vec<AffineConstraint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameDocument {
    #[serde(rename = "N")]
    pub num_agents: usize,
    pub dims: Vec<usize>,
    pub neighborhoods: Vec<Vec<usize>>,
    #[serde(rename = "B")]
    pub b_matrix: Vec<f64>,
    pub b: Vec<f64>,
    #[serde(default = "NoiseModel::none")]
    pub noise: NoiseModel,
    #[serde(default)]
    pub constraints: ConstraintsDocument,
}

impl GameDocument {
    pub fn from_parts(game: &QuadraticGame, cs: &ConstraintSet) -> Self {
        let t = game.topology();
        let m = game.dim();
        let mut b_matrix = Vec::with_capacity(m * m);
        for r in 0..m {
            b_matrix.extend(game.matrix().row(r).iter());
        }
        Self {
            num_agents: t.num_agents(),
            dims: t.dims().to_vec(),
            neighborhoods: t.neighborhoods().to_vec(),
            b_matrix,
            b: game.offset().iter().copied().collect(),
            noise: game.noise().clone(),
            constraints: ConstraintsDocument {
                equalities: cs.equalities().to_vec(),
                inequalities: cs.inequalities().to_vec(),
            },
        }
    }

    pub fn into_parts(self) -> Result<(QuadraticGame, ConstraintSet)> {
        if self.dims.len() != self.num_agents {
            return Err(GnepError::Dimension {
                expected: self.num_agents,
                found: self.dims.len(),
                context: "dims per agent",
            });
        }
        let topology = Topology::new(self.dims, self.neighborhoods)?;
        let m = topology.total_dim();
        if self.b_matrix.len() != m * m {
            return Err(GnepError::Dimension {
                expected: m * m,
                found: self.b_matrix.len(),
                context: "row-major B entries",
            });
        }
        let b = DMatrix::from_row_slice(m, m, &self.b_matrix);
        if self.b.len() != m {
            return Err(GnepError::Dimension {
                expected: m,
                found: self.b.len(),
                context: "b vector",
            });
        }
        let cs = ConstraintSet::new(&topology, self.constraints.equalities, self.constraints.inequalities)?;
        let game = QuadraticGame::new(topology, b, DVector::from_vec(self.b), self.noise)?;
        Ok((game, cs))
    }
}
