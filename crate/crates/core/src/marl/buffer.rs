use serde::{Deserialize, Serialize};

use super::gae::{gae_with_discounts, normalize};
use crate::error::{Error, Result};
use crate::signal::ACTION_COUNT;

/// One decision of one agent and what followed until its next decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub agent: usize,
    pub obs: Vec<f64>,
    pub critic_input: Vec<f64>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
    /// Simulation time of the decision, s.
    pub time: u64,
}

/// An agent's time-ordered transitions within one episode, plus the critic's
/// value at the point where the stream was cut off.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Stream {
    pub agent: usize,
    pub transitions: Vec<Transition>,
    pub bootstrap: f64,
    /// Simulation time at which `bootstrap` was taken, s.
    pub end_time: u64,
}

/// Training sample after advantage estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub obs: Vec<f64>,
    pub critic_input: Vec<f64>,
    pub action: usize,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone)]
pub struct RolloutBuffer {
    pub streams: Vec<Stream>,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// When set, the discount between two decisions `Δt` seconds apart is
    /// `γ^(Δt / unit)` instead of `γ`.
    pub discount_unit_s: Option<f64>,
}

impl RolloutBuffer {
    pub fn new(gamma: f64, gae_lambda: f64) -> Self {
        Self {
            streams: Vec::new(),
            gamma,
            gae_lambda,
            discount_unit_s: None,
        }
    }

    pub fn with_discount_unit(mut self, unit_s: Option<f64>) -> Self {
        self.discount_unit_s = unit_s;
        self
    }

    fn discounts(&self, stream: &Stream) -> Vec<f64> {
        let ts = &stream.transitions;
        match self.discount_unit_s {
            None => vec![self.gamma; ts.len()],
            Some(unit) => (0..ts.len())
                .map(|k| {
                    let next = ts.get(k + 1).map_or(stream.end_time, |t| t.time);
                    let dt = next.saturating_sub(ts[k].time) as f64;
                    self.gamma.powf(dt / unit)
                })
                .collect(),
        }
    }

    pub fn push_stream(&mut self, stream: Stream) {
        if !stream.transitions.is_empty() {
            self.streams.push(stream);
        }
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(|s| s.transitions.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mean_reward(&self) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        self.streams
            .iter()
            .flat_map(|s| &s.transitions)
            .map(|t| t.reward)
            .sum::<f64>()
            / n as f64
    }

    /// Runs GAE per stream, then normalizes advantages over the whole buffer.
    pub fn samples(&self) -> Result<Vec<Sample>> {
        if self.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut samples = Vec::with_capacity(self.len());
        for stream in &self.streams {
            let ts = &stream.transitions;
            let past_end = self.discount_unit_s.is_some() && ts.last().is_some_and(|t| t.time > stream.end_time);
            if past_end || ts.windows(2).any(|w| w[0].time > w[1].time) {
                return Err(Error::Numerical(format!("stream of agent {} is not time-ordered", stream.agent)));
            }
            let rewards: Vec<f64> = ts.iter().map(|t| t.reward).collect();
            let values: Vec<f64> = ts.iter().map(|t| t.value).collect();
            let dones: Vec<bool> = ts.iter().map(|t| t.done).collect();
            let discounts = self.discounts(stream);
            let (adv, ret) = gae_with_discounts(&rewards, &values, &dones, stream.bootstrap, &discounts, self.gae_lambda)?;
            for ((t, a), r) in ts.iter().zip(adv).zip(ret) {
                if t.action >= ACTION_COUNT || t.log_prob > 0.0 {
                    return Err(Error::Numerical(format!("malformed transition at t={}", t.time)));
                }
                samples.push(Sample {
                    obs: t.obs.clone(),
                    critic_input: t.critic_input.clone(),
                    action: t.action,
                    old_log_prob: t.log_prob,
                    advantage: a,
                    ret: r,
                });
            }
        }
        let mut adv: Vec<f64> = samples.iter().map(|s| s.advantage).collect();
        if adv.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numerical("non-finite advantage".into()));
        }
        normalize(&mut adv);
        for (s, a) in samples.iter_mut().zip(adv) {
            s.advantage = a;
        }
        Ok(samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transition(time: u64, reward: f64, value: f64) -> Transition {
        Transition {
            agent: 0,
            obs: vec![0.0],
            critic_input: vec![0.0],
            action: 0,
            log_prob: -1.0,
            reward,
            value,
            done: false,
            time,
        }
    }

    fn stream(times: &[u64], end_time: u64) -> Stream {
        Stream {
            agent: 0,
            transitions: times.iter().map(|&t| transition(t, 1.0, 0.0)).collect(),
            bootstrap: 2.0,
            end_time,
        }
    }

    #[test]
    fn discounts_scale_with_elapsed_time() {
        let buf = RolloutBuffer::new(0.5, 1.0).with_discount_unit(Some(10.0));
        let d = buf.discounts(&stream(&[0, 10, 30], 35));
        assert_eq!(d, vec![0.5, 0.25, 0.5f64.powf(0.5)]);
        let plain = RolloutBuffer::new(0.5, 1.0);
        assert_eq!(plain.discounts(&stream(&[0, 10, 30], 35)), vec![0.5; 3]);
    }

    #[test]
    fn returns_use_time_based_discounts() {
        // λ = 1 makes returns plain discounted sums: R1 = 1 + 0.25·2, R0 = 1 + 0.5·R1.
        let mut buf = RolloutBuffer::new(0.5, 1.0).with_discount_unit(Some(10.0));
        buf.push_stream(stream(&[0, 10], 30));
        let s = buf.samples().unwrap();
        assert_eq!(s[1].ret, 1.5);
        assert_eq!(s[0].ret, 1.75);
    }

    #[test]
    fn advantages_are_normalized_across_streams() {
        let mut buf = RolloutBuffer::new(0.9, 0.95);
        buf.push_stream(stream(&[0, 5, 9], 12));
        let mut other = stream(&[0, 7], 12);
        other.agent = 1;
        other.transitions[0].reward = -3.0;
        buf.push_stream(other);
        let adv: Vec<f64> = buf.samples().unwrap().iter().map(|s| s.advantage).collect();
        let mean = adv.iter().sum::<f64>() / adv.len() as f64;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / adv.len() as f64;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_unordered_and_empty_buffers() {
        assert!(matches!(RolloutBuffer::new(0.9, 0.9).samples(), Err(Error::EmptyBuffer)));
        let mut buf = RolloutBuffer::new(0.9, 0.9);
        buf.push_stream(stream(&[10, 5], 20));
        assert!(buf.samples().is_err());
        let mut late = RolloutBuffer::new(0.9, 0.9).with_discount_unit(Some(1.0));
        late.push_stream(stream(&[0, 30], 20));
        assert!(late.samples().is_err());
    }

    #[test]
    fn empty_streams_are_dropped() {
        let mut buf = RolloutBuffer::new(0.9, 0.9);
        buf.push_stream(Stream::default());
        assert!(buf.is_empty());
    }
}
