//! Signal programs, duration-adjustment action sets and the classical
//! controllers (fixed-time and max-pressure).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{IntersectionId, Network};
use crate::observation::Scope;

/// Number of entries in every action set; the policy head has this many logits.
pub const ACTION_COUNT: usize = 9;

/// Seconds.
pub type Seconds = i64;

/// Per-intersection cyclic green plan.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalProgram {
    pub greens: Vec<Seconds>,
    pub yellow: Seconds,
    pub all_red: Seconds,
    pub g_min: Seconds,
    pub g_max: Seconds,
}

impl SignalProgram {
    /// Returns a copy with phase `phase`'s green moved by `delta` and clipped
    /// to `[g_min, g_max]`.
    pub fn apply_duration_adjustment(&self, phase: usize, delta: Seconds) -> SignalProgram {
        let mut next = self.clone();
        next.adjust(phase, delta);
        next
    }

    pub fn adjust(&mut self, phase: usize, delta: Seconds) {
        let g = &mut self.greens[phase];
        *g = (*g + delta).clamp(self.g_min, self.g_max);
    }

    pub fn num_phases(&self) -> usize {
        self.greens.len()
    }
}

/// Signal timing block of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsConfig {
    #[serde(default = "default_yellow")]
    pub yellow_s: Seconds,
    #[serde(default = "default_all_red")]
    pub all_red_s: Seconds,
    #[serde(default = "default_g_min")]
    pub g_min_s: Seconds,
    #[serde(default = "default_g_max")]
    pub g_max_s: Seconds,
    #[serde(default = "default_initial_green")]
    pub initial_green_s: Seconds,
    /// Optional per-phase-index initial greens overriding `initial_green_s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase_greens_s: Option<Vec<Seconds>>,
    #[serde(default)]
    pub action_set: ActionSetConfig,
}

fn default_yellow() -> Seconds {
    3
}
fn default_all_red() -> Seconds {
    2
}
fn default_g_min() -> Seconds {
    5
}
fn default_g_max() -> Seconds {
    90
}
fn default_initial_green() -> Seconds {
    30
}

impl Default for SignalsConfig {
    fn default() -> Self {
        Self {
            yellow_s: default_yellow(),
            all_red_s: default_all_red(),
            g_min_s: default_g_min(),
            g_max_s: default_g_max(),
            initial_green_s: default_initial_green(),
            phase_greens_s: None,
            action_set: ActionSetConfig::default(),
        }
    }
}

impl SignalsConfig {
    pub fn check(&self) -> Result<()> {
        if self.yellow_s < 0 || self.all_red_s < 0 {
            return Err(Error::config("signals", "yellow and all-red must be non-negative"));
        }
        if self.g_min_s < 1 || self.g_min_s > self.g_max_s {
            return Err(Error::config(
                "signals.g_min_s",
                format!("need 1 <= g_min ({}) <= g_max ({})", self.g_min_s, self.g_max_s),
            ));
        }
        let within = |g: Seconds| (self.g_min_s..=self.g_max_s).contains(&g);
        if !within(self.initial_green_s) {
            return Err(Error::config(
                "signals.initial_green_s",
                format!("{} outside [g_min, g_max]", self.initial_green_s),
            ));
        }
        if let Some(greens) = &self.phase_greens_s {
            if let Some(g) = greens.iter().find(|g| !within(**g)) {
                return Err(Error::config(
                    "signals.phase_greens_s",
                    format!("{g} outside [g_min, g_max]"),
                ));
            }
        }
        self.action_set.build().map(|_| ())
    }

    /// Initial program for an intersection with `phases` phases.
    pub fn program(&self, phases: usize) -> SignalProgram {
        let greens = (0..phases)
            .map(|p| {
                self.phase_greens_s
                    .as_ref()
                    .and_then(|g| g.get(p).copied())
                    .unwrap_or(self.initial_green_s)
            })
            .collect();
        SignalProgram {
            greens,
            yellow: self.yellow_s,
            all_red: self.all_red_s,
            g_min: self.g_min_s,
            g_max: self.g_max_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ActionSetConfig {
    Exponential { lambda: i64 },
    Linear { steps: Vec<Seconds> },
}

impl Default for ActionSetConfig {
    fn default() -> Self {
        ActionSetConfig::Exponential { lambda: 2 }
    }
}

impl ActionSetConfig {
    pub fn build(&self) -> Result<ActionSet> {
        match self {
            ActionSetConfig::Exponential { lambda } => exponential_action_set(*lambda),
            ActionSetConfig::Linear { steps } => linear_action_set(steps),
        }
    }
}

/// Fixed index-to-adjustment mapping with nine signed entries, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSet {
    pub values: [Seconds; ACTION_COUNT],
    pub kind: ActionSetConfig,
}

impl ActionSet {
    fn symmetric(magnitudes: [Seconds; 4], kind: ActionSetConfig) -> Self {
        let mut values = [0; ACTION_COUNT];
        for (k, m) in magnitudes.iter().enumerate() {
            values[3 - k] = -m;
            values[5 + k] = *m;
        }
        Self { values, kind }
    }

    pub fn value(&self, index: usize) -> Option<Seconds> {
        self.values.get(index).copied()
    }

    /// Index of the no-change action.
    pub fn zero_index(&self) -> usize {
        ACTION_COUNT / 2
    }

    /// Distinct adjustment values in ascending order.
    pub fn distinct(&self) -> Vec<Seconds> {
        let mut v = self.values.to_vec();
        v.dedup();
        v
    }
}

/// `[-λ³, -λ², -λ, -1, 0, 1, λ, λ², λ³]`. Duplicates are kept for λ = 1.
pub fn exponential_action_set(lambda: i64) -> Result<ActionSet> {
    if lambda < 1 {
        return Err(Error::config(
            "signals.action_set.lambda",
            format!("lambda must be >= 1, got {lambda}"),
        ));
    }
    let mut magnitudes = [0; 4];
    for (k, m) in magnitudes.iter_mut().enumerate() {
        *m = lambda.checked_pow(k as u32).ok_or_else(|| {
            Error::config("signals.action_set.lambda", format!("lambda {lambda} overflows"))
        })?;
    }
    Ok(ActionSet::symmetric(
        magnitudes,
        ActionSetConfig::Exponential { lambda },
    ))
}

/// Symmetric set built from four positive ascending magnitudes plus zero.
pub fn linear_action_set(steps: &[Seconds]) -> Result<ActionSet> {
    let path = "signals.action_set.steps";
    let magnitudes: [Seconds; 4] = steps.try_into().map_err(|_| {
        Error::config(path, format!("expected 4 magnitudes, got {}", steps.len()))
    })?;
    if magnitudes[0] <= 0 || magnitudes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(path, "magnitudes must be positive and ascending"));
    }
    Ok(ActionSet::symmetric(
        magnitudes,
        ActionSetConfig::Linear {
            steps: steps.to_vec(),
        },
    ))
}

/// What a controller asks the signal to do when a green interval ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Cyclic control: adjust the upcoming phase's green by the action-set
    /// entry at this index, then advance to the next phase in order.
    Adjust(usize),
    /// Acyclic control: serve this phase for one `g_min` slot. Choosing the
    /// current phase extends its green without a clearance interval.
    Serve(usize),
}

/// Everything a controller may look at when deciding.
#[derive(Debug, Clone, Copy)]
pub struct DecisionContext<'a> {
    pub intersection: IntersectionId,
    /// Agent index, i.e. the intersection's position in ascending id order.
    pub agent: usize,
    pub ending_phase: usize,
    pub upcoming_phase: usize,
    pub program: &'a SignalProgram,
    /// Observation at the controller's requested scope, if any.
    pub observation: Option<&'a [f64]>,
    /// Queue length of every movement in the network, by movement index.
    pub queues: &'a [usize],
    pub network: &'a Network,
}

/// A signal-control policy.
pub trait Controller: Send + Sync {
    fn name(&self) -> String;

    /// Observation scope the controller needs in its context, if any.
    fn observation_scope(&self) -> Option<Scope> {
        None
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Decision;
}

/// Never changes the program.
#[derive(Debug, Clone)]
pub struct FixedTimeController {
    zero: usize,
}

pub fn fixed_time_controller(actions: &ActionSet) -> FixedTimeController {
    FixedTimeController {
        zero: actions.zero_index(),
    }
}

impl Controller for FixedTimeController {
    fn name(&self) -> String {
        "fixtime".to_string()
    }

    fn decide(&self, _ctx: &DecisionContext<'_>) -> Decision {
        Decision::Adjust(self.zero)
    }
}

/// Acyclic max-pressure heuristic serving `g_min` slots.
#[derive(Debug, Clone, Default)]
pub struct MaxPressureController;

pub fn max_pressure_controller() -> MaxPressureController {
    MaxPressureController
}

/// Pressure of every phase at one intersection.
pub fn phase_pressures(network: &Network, agent: usize, queues: &[usize]) -> Vec<f64> {
    let node = &network.intersections[agent];
    node.phases
        .iter()
        .map(|movements| {
            movements
                .iter()
                .map(|&m| {
                    let mv = &network.movements[m];
                    let downstream = &network.links[mv.to_link].movements;
                    let out = if downstream.is_empty() {
                        0.0
                    } else {
                        downstream.iter().map(|&d| queues[d] as f64).sum::<f64>()
                            / downstream.len() as f64
                    };
                    queues[m] as f64 - out
                })
                .sum()
        })
        .collect()
}

impl Controller for MaxPressureController {
    fn name(&self) -> String {
        "maxpressure".to_string()
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Decision {
        let pressures = phase_pressures(ctx.network, ctx.agent, ctx.queues);
        let mut best = 0;
        for (p, &v) in pressures.iter().enumerate() {
            if v > pressures[best] {
                best = p;
            }
        }
        Decision::Serve(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn program(g: Seconds) -> SignalProgram {
        SignalProgram {
            greens: vec![g, 30],
            yellow: 3,
            all_red: 2,
            g_min: 10,
            g_max: 90,
        }
    }

    #[test]
    fn exponential_sets() {
        assert_eq!(
            exponential_action_set(2).unwrap().values,
            [-8, -4, -2, -1, 0, 1, 2, 4, 8]
        );
        assert_eq!(
            exponential_action_set(3).unwrap().values,
            [-27, -9, -3, -1, 0, 1, 3, 9, 27]
        );
        let degenerate = exponential_action_set(1).unwrap();
        assert_eq!(degenerate.values, [-1, -1, -1, -1, 0, 1, 1, 1, 1]);
        assert_eq!(degenerate.distinct(), vec![-1, 0, 1]);
        assert!(exponential_action_set(0).is_err());
    }

    #[test]
    fn linear_sets() {
        assert_eq!(
            linear_action_set(&[2, 4, 6, 8]).unwrap().values,
            [-8, -6, -4, -2, 0, 2, 4, 6, 8]
        );
        assert_eq!(
            linear_action_set(&[5, 10, 15, 20]).unwrap().values,
            [-20, -15, -10, -5, 0, 5, 10, 15, 20]
        );
        assert_eq!(
            linear_action_set(&[1, 2, 4, 8]).unwrap().values,
            exponential_action_set(2).unwrap().values
        );
        assert!(linear_action_set(&[1, 2, 3]).is_err());
        assert!(linear_action_set(&[2, 1, 3, 4]).is_err());
        assert!(linear_action_set(&[0, 1, 2, 3]).is_err());
    }

    #[test]
    fn adjustment_clips() {
        assert_eq!(program(47).apply_duration_adjustment(0, 8).greens, vec![55, 30]);
        assert_eq!(program(12).apply_duration_adjustment(0, -8).greens, vec![10, 30]);
        assert_eq!(program(88).apply_duration_adjustment(0, 8).greens, vec![90, 30]);
    }

    #[test]
    fn signals_config_rejects_bad_bounds() {
        let mut cfg = SignalsConfig::default();
        assert!(cfg.check().is_ok());
        cfg.g_min_s = 100;
        assert!(cfg.check().is_err());
        let cfg = SignalsConfig {
            phase_greens_s: Some(vec![47, 200]),
            ..SignalsConfig::default()
        };
        assert!(cfg.check().is_err());
    }

    #[test]
    fn signals_json_defaults() {
        let cfg: SignalsConfig = serde_json::from_str(
            r#"{"yellow_s":3,"all_red_s":2,"g_min_s":5,"g_max_s":90,"initial_green_s":30,"action_set":{"kind":"exponential","lambda":2}}"#,
        )
        .unwrap();
        assert_eq!(cfg, SignalsConfig::default());
        assert!(serde_json::from_str::<SignalsConfig>(r#"{"bogus":1}"#).is_err());
    }
}
