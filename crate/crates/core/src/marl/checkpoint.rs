//! Versioned JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "greenwave-checkpoint",
//!   "version": 1,
//!   "scope": "neighbor",
//!   "algo": "mappo",
//!   "input_dim": 104,
//!   "action_set": [-8, -4, -2, -1, 0, 1, 2, 4, 8],
//!   "policy": [{"shape": [64, 104], "weights": [...], "bias": [...]}, ...],
//!   "critic": [...]
//! }
//! ```
//!
//! Floats are written with shortest round-trip formatting, so a checkpoint
//! reloads bit-exactly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Agents, Algo};
use crate::error::{Error, Result};
use crate::nn::{Dense, Mlp};
use crate::observation::Scope;
use crate::signal::Seconds;

pub const FORMAT: &str = "greenwave-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    /// `[outputs, inputs]`.
    pub shape: [usize; 2],
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scope: Scope,
    pub algo: Algo,
    pub input_dim: usize,
    pub action_set: Vec<Seconds>,
    pub policy: Vec<Tensor>,
    pub critic: Vec<Tensor>,
}

fn tensors(net: &Mlp) -> Vec<Tensor> {
    net.layers
        .iter()
        .map(|l| Tensor {
            shape: [l.outputs, l.inputs],
            weights: l.weights.clone(),
            bias: l.bias.clone(),
        })
        .collect()
}

fn network(tensors: &[Tensor]) -> Result<Mlp> {
    Mlp::from_layers(
        tensors
            .iter()
            .map(|t| Dense {
                inputs: t.shape[1],
                outputs: t.shape[0],
                weights: t.weights.clone(),
                bias: t.bias.clone(),
            })
            .collect(),
    )
}

impl Checkpoint {
    pub fn new(agents: &Agents, scope: Scope, algo: Algo, action_set: &[Seconds]) -> Self {
        Self {
            format: FORMAT.to_string(),
            version: VERSION,
            scope,
            algo,
            input_dim: agents.policy.input_dim(),
            action_set: action_set.to_vec(),
            policy: tensors(&agents.policy),
            critic: tensors(&agents.critic),
        }
    }

    pub fn agents(&self) -> Result<Agents> {
        if self.format != FORMAT || self.version != VERSION {
            return Err(Error::config(
                "checkpoint.format",
                format!("unsupported checkpoint {} v{}", self.format, self.version),
            ));
        }
        let policy = network(&self.policy)?;
        if policy.input_dim() != self.input_dim {
            return Err(Error::Dimension(format!(
                "header says {} inputs, policy tensors have {}",
                self.input_dim,
                policy.input_dim()
            )));
        }
        Ok(Agents {
            policy,
            critic: network(&self.critic)?,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        crate::scenario::read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::StreamRng;
    use rand::SeedableRng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = StreamRng::seed_from_u64(3);
        let agents = Agents {
            policy: Mlp::new(&[6, 5, 9], 0.01, &mut rng),
            critic: Mlp::new(&[8, 5, 1], 1.0, &mut rng),
        };
        let ck = Checkpoint::new(&agents, Scope::Neighbor, Algo::Mappo, &[-8, -4, -2, -1, 0, 1, 2, 4, 8]);
        let back: Checkpoint = serde_json::from_str(&ck.to_json()).unwrap();
        assert_eq!(back, ck);
        let restored = back.agents().unwrap();
        let bits = |m: &Mlp| m.params().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&restored.policy), bits(&agents.policy));
        assert_eq!(bits(&restored.critic), bits(&agents.critic));
    }

    #[test]
    fn rejects_foreign_format() {
        let mut rng = StreamRng::seed_from_u64(3);
        let agents = Agents {
            policy: Mlp::new(&[2, 9], 0.01, &mut rng),
            critic: Mlp::new(&[2, 1], 1.0, &mut rng),
        };
        let mut ck = Checkpoint::new(&agents, Scope::Local, Algo::Ippo, &[0; 9]);
        ck.version = 99;
        assert!(ck.agents().is_err());
    }
}
