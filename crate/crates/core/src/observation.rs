//! Agent observations (local, neighbor, global) and the per-agent reward.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::sim::{AgentCounters, Interval, SimState};

/// Every observation entry lies in `[0, OBSERVATION_BOUND]`.
pub const OBSERVATION_BOUND: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Local,
    Neighbor,
    Global,
}

impl std::str::FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Scope::Local),
            "neighbor" => Ok(Scope::Neighbor),
            "global" => Ok(Scope::Global),
            other => Err(Error::config("scope", format!("unknown scope `{other}`"))),
        }
    }
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scope::Local => "local",
            Scope::Neighbor => "neighbor",
            Scope::Global => "global",
        })
    }
}

/// `"auto"` or an explicit neighbor slot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KMax {
    Fixed(usize),
    #[serde(with = "auto_tag")]
    Auto,
}

mod auto_tag {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str("auto")
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<(), D::Error> {
        let s = String::deserialize(d)?;
        if s == "auto" {
            Ok(())
        } else {
            Err(serde::de::Error::custom(format!("expected \"auto\", got {s:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationConfig {
    #[serde(default = "default_k_max")]
    pub k_max: KMax,
    /// Vehicle count mapped to 1.0.
    #[serde(default = "default_capacity_norm")]
    pub capacity_norm: f64,
}

fn default_k_max() -> KMax {
    KMax::Auto
}

fn default_capacity_norm() -> f64 {
    40.0
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            k_max: default_k_max(),
            capacity_norm: default_capacity_norm(),
        }
    }
}

/// Builds fixed-length observation vectors for one network.
///
/// A local block is laid out as
/// `[phase one-hot | elapsed | movement queues | approaching vehicles]`,
/// each section padded to the network-wide maximum so that every
/// intersection's block has the same length.
#[derive(Debug, Clone, PartialEq)]
pub struct Observer {
    max_phases: usize,
    max_movements: usize,
    max_incoming: usize,
    k_max: usize,
    capacity_norm: f64,
}

impl Observer {
    pub fn new(network: &Network, config: &ObservationConfig) -> Result<Self> {
        if !(config.capacity_norm > 0.0 && config.capacity_norm.is_finite()) {
            return Err(Error::config(
                "training.observation.capacity_norm",
                "must be positive",
            ));
        }
        let needed = network.max_neighbors();
        let k_max = match config.k_max {
            KMax::Auto => needed,
            KMax::Fixed(k) if k >= needed => k,
            KMax::Fixed(k) => {
                return Err(Error::config(
                    "training.observation.k_max",
                    format!("{k} is below the largest neighborhood ({needed})"),
                ))
            }
        };
        let max_of = |f: fn(&crate::network::Intersection) -> usize| {
            network.intersections.iter().map(f).max().unwrap_or(0)
        };
        Ok(Self {
            max_phases: max_of(|n| n.phases.len()),
            max_movements: max_of(|n| n.movements.len()),
            max_incoming: max_of(|n| n.incoming.len()),
            k_max,
            capacity_norm: config.capacity_norm,
        })
    }

    pub fn local_len(&self) -> usize {
        self.max_phases + 1 + self.max_movements + self.max_incoming
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn dim(&self, scope: Scope, agents: usize) -> usize {
        match scope {
            Scope::Local => self.local_len(),
            Scope::Neighbor => (1 + self.k_max) * self.local_len() + self.k_max,
            Scope::Global => agents * self.local_len(),
        }
    }

    fn count(&self, n: usize) -> f64 {
        (n as f64 / self.capacity_norm).min(OBSERVATION_BOUND)
    }

    pub fn local_observation(&self, state: &SimState, agent: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.local_len()];
        self.write_local(state, agent, &mut out);
        out
    }

    fn write_local(&self, state: &SimState, agent: usize, out: &mut [f64]) {
        let network = state.network();
        let node = &network.intersections[agent];
        let signal = state.signal(agent);
        out[signal.phase] = 1.0;
        let since_phase_start = match signal.interval {
            Interval::Green => signal.elapsed_in_interval,
            Interval::Yellow => signal.green_target + signal.elapsed_in_interval,
            Interval::AllRed => signal.green_target + signal.program.yellow + signal.elapsed_in_interval,
        };
        out[self.max_phases] =
            (since_phase_start as f64 / signal.program.g_max as f64).clamp(0.0, OBSERVATION_BOUND);
        let queues = self.max_phases + 1;
        for (k, &m) in node.movements.iter().enumerate() {
            out[queues + k] = self.count(state.queue_len(m));
        }
        let approaching = queues + self.max_movements;
        for (k, &l) in node.incoming.iter().enumerate() {
            out[approaching + k] = self.count(state.approaching_in_range(l));
        }
    }

    /// Own block, then one block per neighbor in ascending id order, zero
    /// padded to `k_max` blocks, then the presence mask.
    pub fn neighbor_observation(&self, state: &SimState, agent: usize) -> Vec<f64> {
        let len = self.local_len();
        let mut out = vec![0.0; (1 + self.k_max) * len + self.k_max];
        self.write_local(state, agent, &mut out[..len]);
        let neighbors = &state.network().intersections[agent].neighbors;
        for (k, &j) in neighbors.iter().enumerate() {
            self.write_local(state, j, &mut out[(1 + k) * len..(2 + k) * len]);
            out[(1 + self.k_max) * len + k] = 1.0;
        }
        out
    }

    /// Every intersection's local block in ascending id order.
    pub fn global_observation(&self, state: &SimState) -> Vec<f64> {
        let len = self.local_len();
        let agents = state.network().num_intersections();
        let mut out = vec![0.0; agents * len];
        for agent in 0..agents {
            self.write_local(state, agent, &mut out[agent * len..(agent + 1) * len]);
        }
        out
    }

    pub fn observe(&self, state: &SimState, agent: usize, scope: Scope) -> Vec<f64> {
        match scope {
            Scope::Local => self.local_observation(state, agent),
            Scope::Neighbor => self.neighbor_observation(state, agent),
            Scope::Global => self.global_observation(state),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    #[serde(default)]
    pub w_travel: f64,
    #[serde(default)]
    pub w_wait: f64,
    #[serde(default)]
    pub w_speed: f64,
    #[serde(default)]
    pub w_throughput: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        Self {
            w_travel: 0.0,
            w_wait: 1.0,
            w_speed: 0.0,
            w_throughput: 0.2,
        }
    }
}

impl RewardWeights {
    pub fn check(&self) -> Result<()> {
        let w = [self.w_travel, self.w_wait, self.w_speed, self.w_throughput];
        if w.iter().any(|x| !x.is_finite()) {
            return Err(Error::config("training.reward", "weights must be finite"));
        }
        if w.iter().all(|x| *x == 0.0) {
            return Err(Error::config("training.reward", "at least one weight must be nonzero"));
        }
        Ok(())
    }
}

/// Fraction of vehicles on the incoming links that are not queued; 1 when
/// the links are empty.
pub fn speed_proxy(c: &AgentCounters) -> f64 {
    if c.present == 0 {
        1.0
    } else {
        c.moving as f64 / c.present as f64
    }
}

/// Reward for one agent over the interval bracketed by two counter
/// snapshots. Larger is better: time terms enter negated.
pub fn compute_reward(prev: &AgentCounters, next: &AgentCounters, weights: &RewardWeights) -> f64 {
    let mut r = 0.0;
    if weights.w_travel != 0.0 {
        r -= weights.w_travel * (next.travel_s - prev.travel_s);
    }
    if weights.w_wait != 0.0 {
        r -= weights.w_wait * (next.wait_s - prev.wait_s);
    }
    if weights.w_speed != 0.0 {
        r += weights.w_speed * speed_proxy(next);
    }
    if weights.w_throughput != 0.0 {
        r += weights.w_throughput * (next.crossed - prev.crossed);
    }
    r
}
