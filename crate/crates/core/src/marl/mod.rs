//! Multi-agent PPO with parameter sharing.
//!
//! Every intersection runs the same policy network on its own observation
//! (decentralized actors). The critic is trained on the global observation
//! plus the agent's one-hot index in MAPPO mode, or on the agent's own
//! observation in IPPO mode. Agents decide asynchronously at the end of their
//! own green intervals, so each agent contributes its own transition stream.

pub mod buffer;
pub mod checkpoint;
pub mod dist;
pub mod gae;
pub mod ppo;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Mlp, OptimizerKind};
use crate::observation::{compute_reward, ObservationConfig, RewardWeights, Scope};
use crate::randomization::episode_ratios;
use crate::scenario::Env;
use crate::seeding::{self, tag};
use crate::signal::{Controller, Decision, DecisionContext, ACTION_COUNT};
use crate::sim::{metrics_report, run_episode, MetricsReport, SimState};

pub use checkpoint::Checkpoint;
pub use buffer::{RolloutBuffer, Sample, Stream, Transition};
pub use dist::{select_action, SelectMode};
pub use gae::{gae_advantages, gae_with_discounts};
pub use ppo::{actor_loss_grad, critic_loss_grad, ppo_update, Optimizers, PpoParams, UpdateStats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algo {
    Mappo,
    Ippo,
}

impl std::str::FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mappo" => Ok(Algo::Mappo),
            "ippo" => Ok(Algo::Ippo),
            other => Err(Error::config("algo", format!("unknown algorithm `{other}`"))),
        }
    }
}

impl std::fmt::Display for Algo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algo::Mappo => "mappo",
            Algo::Ippo => "ippo",
        })
    }
}

/// `training` block of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub scope: Scope,
    pub algo: Algo,
    pub seed: u64,
    pub iterations: usize,
    /// Episodes collected per iteration, one per rollout worker.
    pub episodes_per_iteration: usize,
    /// Training episode length; the demand horizon when absent.
    pub episode_horizon_s: Option<u64>,
    pub gamma: f64,
    /// Seconds of simulated time per discount step. Absent: one step per
    /// decision.
    pub discount_unit_s: Option<f64>,
    pub gae_lambda: f64,
    pub clip: f64,
    pub learning_rate: f64,
    pub critic_learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub optimizer: OptimizerKind,
    /// Multiplies raw rewards before they enter the buffer.
    pub reward_scale: f64,
    pub hidden: usize,
    /// Seed of the per-iteration greedy evaluation episode.
    pub eval_seed: u64,
    pub reward: RewardWeights,
    pub observation: ObservationConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            scope: Scope::Neighbor,
            algo: Algo::Mappo,
            seed: 1,
            iterations: 50,
            episodes_per_iteration: 16,
            episode_horizon_s: None,
            gamma: 0.99,
            discount_unit_s: Some(10.0),
            gae_lambda: 0.95,
            clip: 0.2,
            learning_rate: 3e-4,
            critic_learning_rate: 1e-3,
            epochs: 8,
            minibatch: 64,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            optimizer: OptimizerKind::Adam,
            reward_scale: 1e-4,
            hidden: 64,
            eval_seed: 1_000_003,
            reward: RewardWeights::default(),
            observation: ObservationConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::config(format!("training.{field}"), msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma", format!("{} outside [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda", format!("{} outside [0, 1]", self.gae_lambda));
        }
        if !(self.clip > 0.0) {
            return bad("clip", format!("{} must be positive", self.clip));
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("critic_learning_rate", self.critic_learning_rate),
            ("max_grad_norm", self.max_grad_norm),
            ("reward_scale", self.reward_scale),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, format!("{v} must be positive"));
            }
        }
        if self.epochs == 0 || self.minibatch == 0 || self.hidden == 0 || self.episodes_per_iteration == 0 {
            return bad("epochs", "epochs, minibatch, hidden and episodes_per_iteration must be >= 1".into());
        }
        if let Some(unit) = self.discount_unit_s {
            if !(unit > 0.0 && unit.is_finite()) {
                return bad("discount_unit_s", format!("{unit} must be positive"));
            }
        }
        if self.episode_horizon_s == Some(0) {
            return bad("episode_horizon_s", "must be positive".into());
        }
        self.reward.check()
    }

    pub fn ppo_params(&self) -> PpoParams {
        PpoParams {
            clip: self.clip,
            entropy_coef: self.entropy_coef,
            learning_rate: self.learning_rate,
            critic_learning_rate: self.critic_learning_rate,
            epochs: self.epochs,
            minibatch: self.minibatch,
            max_grad_norm: self.max_grad_norm,
            optimizer: self.optimizer,
        }
    }
}

/// Input width of the actor for a scope.
pub fn actor_dim(env: &Env, scope: Scope) -> usize {
    env.observer.dim(scope, env.network.num_intersections())
}

/// Input width of the critic.
pub fn critic_dim(env: &Env, scope: Scope, algo: Algo) -> usize {
    match algo {
        Algo::Mappo => env.observer.dim(Scope::Global, env.network.num_intersections()) + env.network.num_intersections(),
        Algo::Ippo => actor_dim(env, scope),
    }
}

pub fn critic_input(env: &Env, state: &SimState, agent: usize, algo: Algo, own_obs: &[f64]) -> Vec<f64> {
    match algo {
        Algo::Mappo => {
            let mut x = env.observer.global_observation(state);
            let agents = env.network.num_intersections();
            x.extend((0..agents).map(|a| if a == agent { 1.0 } else { 0.0 }));
            x
        }
        Algo::Ippo => own_obs.to_vec(),
    }
}

/// Actor and critic for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct Agents {
    pub policy: Mlp,
    pub critic: Mlp,
}

impl Agents {
    pub fn init(env: &Env, cfg: &TrainConfig) -> Self {
        let mut rng = seeding::stream(cfg.seed, &[tag::POLICY_INIT]);
        let h = cfg.hidden;
        let policy = Mlp::new(&[actor_dim(env, cfg.scope), h, h, ACTION_COUNT], 0.01, &mut rng);
        let critic = Mlp::new(&[critic_dim(env, cfg.scope, cfg.algo), h, h, 1], 1.0, &mut rng);
        Self { policy, critic }
    }
}

/// Greedy (or sampling) controller backed by a policy network.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub policy: Mlp,
    pub scope: Scope,
    pub label: String,
    mode: SelectMode,
    /// Seed for sampling mode; each decision derives its own stream.
    seed: u64,
}

impl PolicyController {
    pub fn greedy(policy: Mlp, scope: Scope, label: impl Into<String>) -> Self {
        Self {
            policy,
            scope,
            label: label.into(),
            mode: SelectMode::Greedy,
            seed: 0,
        }
    }

    /// Samples actions; the draw for a decision is keyed by agent and the
    /// observation bytes so that `decide` stays a pure function.
    pub fn sampling(policy: Mlp, scope: Scope, label: impl Into<String>, seed: u64) -> Self {
        Self {
            mode: SelectMode::Sample,
            seed,
            ..Self::greedy(policy, scope, label)
        }
    }
}

impl Controller for PolicyController {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn observation_scope(&self) -> Option<Scope> {
        Some(self.scope)
    }

    fn decide(&self, ctx: &DecisionContext<'_>) -> Decision {
        let obs = ctx.observation.expect("observation requested through observation_scope");
        let key = obs
            .iter()
            .fold(ctx.agent as u64, |acc, x| acc.rotate_left(7) ^ x.to_bits());
        let mut rng = seeding::stream(self.seed, &[tag::ACTIONS, key]);
        // Dimension problems are caught before the episode starts, see
        // `check_policy`; a failure here means an invariant was broken.
        let (action, _) = select_action(&self.policy, obs, &mut rng, self.mode).expect("policy input width checked");
        Decision::Adjust(action)
    }
}

/// Verifies that a policy fits the scenario's observation shape.
pub fn check_policy(env: &Env, policy: &Mlp, scope: Scope) -> Result<()> {
    let expected = actor_dim(env, scope);
    if policy.input_dim() != expected {
        return Err(Error::Dimension(format!(
            "policy expects {} inputs but {scope} observations of this scenario have {expected}",
            policy.input_dim()
        )));
    }
    if policy.output_dim() != ACTION_COUNT {
        return Err(Error::Dimension(format!(
            "policy has {} outputs, action sets have {ACTION_COUNT}",
            policy.output_dim()
        )));
    }
    Ok(())
}

/// Runs one episode with `controller` on `env` and returns its metrics.
pub fn evaluate(env: &Env, controller: &dyn Controller, seed: u64) -> Result<MetricsReport> {
    let state = env.reset(seed)?;
    run_episode(state, controller, env.horizon(), &env.actions, &env.observer)
}

/// Collects one training episode for every agent with the shared policy.
pub fn collect_episode(
    env: &Env,
    agents: &Agents,
    cfg: &TrainConfig,
    episode_seed: u64,
    episode_key: u64,
) -> Result<(Vec<Stream>, MetricsReport)> {
    let mut state = env.reset(episode_seed)?;
    state.set_turning_ratios(episode_ratios(&env.network, &env.randomization, episode_key)?)?;
    let horizon = cfg.episode_horizon_s.unwrap_or_else(|| env.horizon());
    let n = env.network.num_intersections();
    let mut rng = seeding::stream(episode_seed, &[tag::ACTIONS]);
    let mut streams: Vec<Stream> = (0..n)
        .map(|agent| Stream {
            agent,
            ..Stream::default()
        })
        .collect();
    // Decision in progress per agent and the counters at its start.
    let mut open: Vec<Option<(Transition, crate::sim::AgentCounters)>> = vec![None; n];

    while state.clock() < horizon {
        let report = state.step()?;
        for &agent in &report.decisions {
            let now = state.counters(agent);
            if let Some((mut t, start)) = open[agent].take() {
                t.reward = compute_reward(&start, &now, &env.reward) * cfg.reward_scale;
                streams[agent].transitions.push(t);
            }
            let obs = env.observer.observe(&state, agent, cfg.scope);
            let critic_in = critic_input(env, &state, agent, cfg.algo, &obs);
            let (action, log_prob) = select_action(&agents.policy, &obs, &mut rng, SelectMode::Sample)?;
            let value = agents.critic.predict(&critic_in)?[0];
            state.resolve(agent, Decision::Adjust(action), &env.actions)?;
            open[agent] = Some((
                Transition {
                    agent,
                    obs,
                    critic_input: critic_in,
                    action,
                    log_prob,
                    reward: 0.0,
                    value,
                    done: false,
                    time: state.clock(),
                },
                now,
            ));
        }
    }

    // The horizon truncates the episode: close open decisions and bootstrap.
    for agent in 0..n {
        let now = state.counters(agent);
        let obs = env.observer.observe(&state, agent, cfg.scope);
        let critic_in = critic_input(env, &state, agent, cfg.algo, &obs);
        streams[agent].bootstrap = agents.critic.predict(&critic_in)?[0];
        streams[agent].end_time = state.clock();
        if let Some((mut t, start)) = open[agent].take() {
            t.reward = compute_reward(&start, &now, &env.reward) * cfg.reward_scale;
            streams[agent].transitions.push(t);
        }
    }
    Ok((streams, metrics_report(state.metrics(), horizon)))
}

/// One row of the training curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: usize,
    pub mean_reward: f64,
    pub eval_awt: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agents: Agents,
    pub curve: Vec<CurvePoint>,
}

/// Worker thread cap from `GREENWAVE_THREADS`, if set.
pub fn thread_cap() -> Option<usize> {
    std::env::var("GREENWAVE_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|n| *n > 0)
}

/// Runs `jobs` independent tasks on the rayon pool (capped by
/// `GREENWAVE_THREADS`) and returns results in job order.
pub fn run_parallel<T: Send>(jobs: usize, f: impl Fn(usize) -> Result<T> + Sync + Send) -> Result<Vec<T>> {
    let work = || (0..jobs).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match thread_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config("GREENWAVE_THREADS", e.to_string()))?
            .install(work),
        None => work(),
    }
}

/// AWT used on the training curve; a run with no completions scores the
/// horizon, the worst any trip could have waited.
pub fn awt_or_horizon(report: &MetricsReport) -> f64 {
    report.awt.unwrap_or(report.horizon_s as f64)
}

/// Trains a shared policy with PPO and a MAPPO or IPPO critic.
///
/// The run is a pure function of `(env, cfg)`: rollouts are keyed by
/// `(seed, iteration, worker)` and merged in worker order.
pub fn train(env: &Env, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.check()?;
    let mut agents = Agents::init(env, cfg);
    let mut optimizers = Optimizers::new(cfg.optimizer, &agents.policy, &agents.critic);
    let mut curve = Vec::with_capacity(cfg.iterations);
    let params = cfg.ppo_params();
    let eval_env = Env {
        randomization: env.randomization.with_enabled(false),
        ..env.clone()
    };

    for iteration in 0..cfg.iterations {
        let snapshot = &agents;
        let episodes = run_parallel(cfg.episodes_per_iteration, |worker| {
            let seed = seeding::derive_seed(cfg.seed, &[tag::ROLLOUT, iteration as u64, worker as u64]);
            let key = seeding::derive_seed(cfg.seed, &[iteration as u64, worker as u64]);
            collect_episode(env, snapshot, cfg, seed, key)
        })?;
        let mut buffer = RolloutBuffer::new(cfg.gamma, cfg.gae_lambda).with_discount_unit(cfg.discount_unit_s);
        for (streams, _) in episodes {
            for s in streams {
                buffer.push_stream(s);
            }
        }
        let mean_reward = buffer.mean_reward();
        let samples = buffer.samples()?;
        let mut rng = seeding::stream(cfg.seed, &[tag::MINIBATCH, iteration as u64]);
        ppo_update(&mut agents.policy, &mut agents.critic, &mut optimizers, &samples, &params, &mut rng)?;

        let controller = PolicyController::greedy(agents.policy.clone(), cfg.scope, "rl");
        let report = evaluate(&eval_env, &controller, cfg.eval_seed)?;
        curve.push(CurvePoint {
            iteration: iteration + 1,
            mean_reward,
            eval_awt: awt_or_horizon(&report),
        });
    }
    Ok(TrainOutcome { agents, curve })
}
