//! Scenario files and their compiled, ready-to-simulate form.

use std::path::Path;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marl::TrainConfig;
use crate::network::{validate_network, Network, NetworkSpec};
use crate::observation::{Observer, RewardWeights};
use crate::randomization::RandomizationConfig;
use crate::signal::{ActionSet, SignalsConfig};
use crate::sim::{DemandSpec, SimState};

/// One scenario document. Unknown keys anywhere are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub network: NetworkSpec,
    pub demand: DemandSpec,
    #[serde(default)]
    pub signals: SignalsConfig,
    #[serde(default)]
    pub randomization: RandomizationConfig,
    #[serde(default)]
    pub training: TrainConfig,
}

/// Parses JSON, reporting failures with the JSON path of the offending value.
pub fn from_json_str<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config {
            path: format!("{origin}:{path}"),
            message: e.into_inner().to_string(),
        }
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    from_json_str(&text, &path.display().to_string())
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        from_json_str(text, "scenario")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Validates everything and builds the shared simulation context.
    pub fn compile(&self) -> Result<Env> {
        let report = validate_network(&self.network);
        if !report.is_ok() {
            return Err(Error::InvalidNetwork(report));
        }
        let network = Arc::new(Network::new(self.network.clone())?);
        self.demand.check(&network)?;
        self.signals.check()?;
        self.randomization.check()?;
        self.training.check()?;
        let actions = self.signals.action_set.build()?;
        let observer = Observer::new(&network, &self.training.observation)?;
        Ok(Env {
            network,
            demand: self.demand.clone(),
            signals: self.signals.clone(),
            actions,
            observer,
            reward: self.training.reward,
            randomization: self.randomization.clone(),
        })
    }
}

/// Everything needed to start episodes of one scenario.
#[derive(Debug, Clone)]
pub struct Env {
    pub network: Arc<Network>,
    pub demand: DemandSpec,
    pub signals: SignalsConfig,
    pub actions: ActionSet,
    pub observer: Observer,
    pub reward: RewardWeights,
    pub randomization: RandomizationConfig,
}

impl Env {
    pub fn reset(&self, seed: u64) -> Result<SimState> {
        SimState::reset(Arc::clone(&self.network), &self.demand, &self.signals, seed)
    }

    /// Same network and settings with a different demand.
    pub fn with_demand(&self, demand: DemandSpec) -> Result<Env> {
        demand.check(&self.network)?;
        Ok(Env {
            demand,
            ..self.clone()
        })
    }

    pub fn horizon(&self) -> u64 {
        self.demand.horizon_s
    }
}
