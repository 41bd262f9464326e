//! Clipped-surrogate PPO losses, their gradients and the update loop.

use rand::seq::SliceRandom;
use rand::Rng;

use super::buffer::Sample;
use super::dist::{entropy, log_softmax};
use crate::error::{Error, Result};
use crate::nn::{clip_grad_norm, Mlp, Optimizer, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoParams {
    pub clip: f64,
    pub entropy_coef: f64,
    pub learning_rate: f64,
    pub critic_learning_rate: f64,
    pub epochs: usize,
    pub minibatch: usize,
    pub max_grad_norm: f64,
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ActorLoss {
    pub loss: f64,
    pub surrogate: f64,
    pub entropy: f64,
    /// Fraction of samples whose clipped branch was active.
    pub clip_fraction: f64,
}

/// `−mean(min(ρA, clip(ρ, 1−ε, 1+ε)A)) − c·mean(H)` and its gradient.
pub fn actor_loss_grad(policy: &Mlp, batch: &[&Sample], clip: f64, entropy_coef: f64) -> Result<(ActorLoss, Vec<f64>)> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; policy.num_params()];
    let mut stats = ActorLoss::default();
    for s in batch {
        let (logits, cache) = policy.forward(&s.obs)?;
        let lp = log_softmax(&logits);
        let p: Vec<f64> = lp.iter().map(|x| x.exp()).collect();
        let h = entropy(&lp);
        let ratio = (lp[s.action] - s.old_log_prob).exp();
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(1.0 - clip, 1.0 + clip) * s.advantage;
        let surrogate = unclipped.min(clipped);
        stats.surrogate += surrogate / n;
        stats.entropy += h / n;

        let mut dz = vec![0.0; logits.len()];
        if unclipped <= clipped {
            // d(−ρA)/dz = −ρA (onehot − p)
            let coef = -unclipped / n;
            for (k, d) in dz.iter_mut().enumerate() {
                let onehot = if k == s.action { 1.0 } else { 0.0 };
                *d += coef * (onehot - p[k]);
            }
        } else {
            stats.clip_fraction += 1.0 / n;
        }
        if entropy_coef != 0.0 {
            // d(−cH)/dz_k = c p_k (log p_k + H)
            for (k, d) in dz.iter_mut().enumerate() {
                *d += entropy_coef * p[k] * (lp[k] + h) / n;
            }
        }
        policy.backward_into(&cache, &dz, &mut grad)?;
    }
    stats.loss = -stats.surrogate - entropy_coef * stats.entropy;
    Ok((stats, grad))
}

/// `mean((V − R)²)` and its gradient.
pub fn critic_loss_grad(critic: &Mlp, batch: &[&Sample]) -> Result<(f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let mut grad = vec![0.0; critic.num_params()];
    let mut loss = 0.0;
    for s in batch {
        let (v, cache) = critic.forward(&s.critic_input)?;
        let err = v[0] - s.ret;
        loss += err * err / n;
        critic.backward_into(&cache, &[2.0 * err / n], &mut grad)?;
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// Mean gradient norms before clipping.
    pub actor_grad_norm: f64,
    pub critic_grad_norm: f64,
    pub minibatches: usize,
}

/// Optimizer state of an actor/critic pair, kept across iterations.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizers {
    pub policy: Optimizer,
    pub critic: Optimizer,
}

impl Optimizers {
    pub fn new(kind: OptimizerKind, policy: &Mlp, critic: &Mlp) -> Self {
        Self {
            policy: Optimizer::new(kind, policy.num_params()),
            critic: Optimizer::new(kind, critic.num_params()),
        }
    }
}

/// Runs `epochs` passes of shuffled minibatch gradient descent on both nets.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut Mlp,
    critic: &mut Mlp,
    optimizers: &mut Optimizers,
    samples: &[Sample],
    params: &PpoParams,
    rng: &mut R,
) -> Result<UpdateStats> {
    if samples.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut stats = UpdateStats::default();
    let size = params.minibatch.max(1);
    for _ in 0..params.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&k| &samples[k]).collect();
            let (actor, mut g_actor) = actor_loss_grad(policy, &batch, params.clip, params.entropy_coef)?;
            let (critic_loss, mut g_critic) = critic_loss_grad(critic, &batch)?;
            if !actor.loss.is_finite() || !critic_loss.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss (actor {}, critic {critic_loss}) after {} minibatches",
                    actor.loss, stats.minibatches
                )));
            }
            stats.actor_grad_norm += clip_grad_norm(&mut g_actor, params.max_grad_norm);
            stats.critic_grad_norm += clip_grad_norm(&mut g_critic, params.max_grad_norm);
            optimizers.policy.step(policy, &g_actor, params.learning_rate)?;
            optimizers.critic.step(critic, &g_critic, params.critic_learning_rate)?;
            stats.actor_loss = actor.loss;
            stats.critic_loss = critic_loss;
            stats.entropy = actor.entropy;
            stats.clip_fraction = actor.clip_fraction;
            stats.minibatches += 1;
        }
    }
    if !policy.is_finite() || !critic.is_finite() {
        return Err(Error::Numerical("parameters became non-finite".into()));
    }
    let n = stats.minibatches as f64;
    stats.actor_grad_norm /= n;
    stats.critic_grad_norm /= n;
    Ok(stats)
}
