use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::costs::{CostError, CostSpec};
use crate::model::{ModelError, StorageSystem};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Cost(#[from] CostError),
}

/// A validated storage system together with the cost to minimize.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub system: StorageSystem,
    pub cost: CostSpec,
}

impl Problem {
    pub fn new(system: StorageSystem, cost: CostSpec) -> Result<Self, ProblemError> {
        cost.check_horizon(system.horizon())?;
        Ok(Self { system, cost })
    }

    /// Hex SHA-256 over every number that defines the instance. Used to make
    /// sure solver and oracle results refer to the same problem.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let p = self.system.params();
        for v in [p.eta_c, p.eta_d, p.lambda, p.delta, p.x0] {
            h.update(v.to_le_bytes());
        }
        h.update((p.horizon as u64).to_le_bytes());
        let b = self.system.bounds();
        for v in [&b.u_max, &b.u_min_mag, &b.x_max, &b.x_min] {
            for e in v {
                h.update(e.to_le_bytes());
            }
        }
        h.update(self.cost.family_name().as_bytes());
        for (name, v) in self.cost.parameter_vectors() {
            h.update(name.as_bytes());
            for e in v {
                h.update(e.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}
