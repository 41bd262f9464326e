//! Generalized advantage estimation.

use crate::error::{Error, Result};

/// Backward GAE recursion over one agent's decision stream.
///
/// `δ_t = r_t + γ V_{t+1} (1 − done_t) − V_t` and
/// `A_t = δ_t + γ λ (1 − done_t) A_{t+1}`, with `V_{T} = bootstrap`.
/// Returns `(advantages, returns)` where `returns = A + V`.
pub fn gae_advantages(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    gae_with_discounts(rewards, values, dones, bootstrap, &vec![gamma; rewards.len()], lambda)
}

/// GAE with a separate discount per step: `discounts[t]` links step `t` to
/// step `t + 1` (or to the bootstrap value for the last step).
pub fn gae_with_discounts(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    discounts: &[f64],
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::EmptyBuffer);
    }
    if values.len() != n || dones.len() != n || discounts.len() != n {
        return Err(Error::Dimension(format!(
            "{n} rewards, {} values, {} done flags, {} discounts",
            values.len(),
            dones.len(),
            discounts.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut next_advantage = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let gamma = discounts[t];
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_advantage = delta + gamma * lambda * live * next_advantage;
        advantages[t] = next_advantage;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}

/// Shifts and scales to mean 0, standard deviation 1 (population std).
/// A single sample is only centered.
pub fn normalize(advantages: &mut [f64]) {
    let n = advantages.len();
    if n == 0 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    for a in advantages.iter_mut() {
        *a -= mean;
    }
    if n < 2 {
        return;
    }
    let std = (advantages.iter().map(|a| a * a).sum::<f64>() / n as f64).sqrt();
    if std > 1e-12 {
        for a in advantages.iter_mut() {
            *a /= std;
        }
    }
}
