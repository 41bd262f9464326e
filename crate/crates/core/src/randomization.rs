//! Episode-level turning-ratio randomization.
//!
//! Every movement's base ratio is scaled by an independent factor
//! `1 + ε`, `ε ~ U(-δ, δ)`, and each approach is then renormalized so its
//! ratios sum to one again. The noise is multiplicative, so a movement with a
//! zero base ratio stays at zero.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::seeding::{self, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomizationConfig {
    #[serde(default)]
    pub enabled: bool,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_noise_seed")]
    pub noise_seed: u64,
}

fn default_delta() -> f64 {
    0.3
}

fn default_noise_seed() -> u64 {
    7
}

impl Default for RandomizationConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            delta: default_delta(),
            noise_seed: default_noise_seed(),
        }
    }
}

impl RandomizationConfig {
    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta) {
            return Err(Error::config(
                "randomization.delta",
                format!("{} outside [0, 1]", self.delta),
            ));
        }
        Ok(())
    }

    pub fn with_enabled(&self, enabled: bool) -> Self {
        Self {
            enabled,
            ..self.clone()
        }
    }
}

/// Perturbs one approach's ratios.
///
/// One uniform draw is consumed per movement regardless of `delta`, so the
/// stream position after the call depends only on the movement count.
pub fn perturb_approach<R: Rng + ?Sized>(ratios: &[f64], delta: f64, rng: &mut R) -> Result<Vec<f64>> {
    if ratios.iter().sum::<f64>() <= 0.0 {
        return Err(Error::config(
            "network.turning_ratio",
            "approach has all-zero turning ratios",
        ));
    }
    let scaled: Vec<f64> = ratios
        .iter()
        .map(|r| {
            let eps = (2.0 * rng.gen::<f64>() - 1.0) * delta;
            r * (1.0 + eps)
        })
        .collect();
    if delta == 0.0 {
        // Renormalizing would only add rounding noise to an exact identity.
        return Ok(ratios.to_vec());
    }
    Ok(normalize(&scaled).unwrap_or_else(|| ratios.to_vec()))
}

/// Applies given noise factors to one approach: `r̂ = r(1 + ε)`, then
/// renormalizes. Returns `None` if every scaled ratio is zero.
pub fn apply_noise(ratios: &[f64], eps: &[f64]) -> Option<Vec<f64>> {
    let scaled: Vec<f64> = ratios.iter().zip(eps).map(|(r, e)| r * (1.0 + e)).collect();
    normalize(&scaled)
}

fn normalize(scaled: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = scaled.iter().sum();
    if total > 0.0 {
        Some(scaled.iter().map(|r| r / total).collect())
    } else {
        None
    }
}

/// Perturbs every approach's ratios with a shared noise stream.
pub fn perturb_turning_ratios<R: Rng + ?Sized>(
    approaches: &[Vec<f64>],
    config: &RandomizationConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    config.check()?;
    approaches
        .iter()
        .map(|ratios| perturb_approach(ratios, config.delta, rng))
        .collect()
}

/// Turning ratios, indexed by movement, to use in one episode.
///
/// With randomization disabled this is the network's base ratios. The noise
/// comes from its own stream keyed by `noise_seed` and the episode key, so it
/// never touches arrival or turning draws.
pub fn episode_ratios(network: &Network, config: &RandomizationConfig, episode_key: u64) -> Result<Vec<f64>> {
    let mut ratios = network.base_ratios();
    if !config.enabled {
        return Ok(ratios);
    }
    config.check()?;
    let mut rng = seeding::stream(config.noise_seed, &[tag::RATIO_NOISE, episode_key]);
    for approach in network.approaches() {
        let base: Vec<f64> = approach.iter().map(|&m| ratios[m]).collect();
        let perturbed = perturb_approach(&base, config.delta, &mut rng)?;
        for (&m, r) in approach.iter().zip(perturbed) {
            ratios[m] = r;
        }
    }
    Ok(ratios)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::StreamRng;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn cfg(delta: f64) -> RandomizationConfig {
        RandomizationConfig {
            enabled: true,
            delta,
            noise_seed: 7,
        }
    }

    #[test]
    fn zero_delta_is_identity() {
        let mut rng = StreamRng::seed_from_u64(1);
        let out = perturb_turning_ratios(&[vec![0.5, 0.3, 0.2]], &cfg(0.0), &mut rng).unwrap();
        assert_eq!(out, vec![vec![0.5, 0.3, 0.2]]);
    }

    #[test]
    fn single_movement_stays_unity() {
        let mut rng = StreamRng::seed_from_u64(1);
        for delta in [0.0, 0.3, 1.0] {
            let out = perturb_turning_ratios(&[vec![1.0]], &cfg(delta), &mut rng).unwrap();
            assert_eq!(out, vec![vec![1.0]]);
        }
    }

    #[test]
    fn hand_evaluated_noise() {
        // r̂ = (0.5·1.2, 0.5·0.8) = (0.6, 0.4), already summing to one.
        let out = apply_noise(&[0.5, 0.5], &[0.2, -0.2]).unwrap();
        assert!((out[0] - 0.6).abs() < 1e-12);
        assert!((out[1] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn all_zero_ratios_rejected() {
        let mut rng = StreamRng::seed_from_u64(1);
        assert!(perturb_turning_ratios(&[vec![0.0, 0.0]], &cfg(0.3), &mut rng).is_err());
    }

    #[test]
    fn delta_out_of_range_rejected() {
        let mut rng = StreamRng::seed_from_u64(1);
        assert!(perturb_turning_ratios(&[vec![1.0]], &cfg(1.5), &mut rng).is_err());
    }

    #[test]
    fn same_seed_same_ratios() {
        let a = perturb_turning_ratios(&[vec![0.5, 0.3, 0.2]], &cfg(0.5), &mut StreamRng::seed_from_u64(9)).unwrap();
        let b = perturb_turning_ratios(&[vec![0.5, 0.3, 0.2]], &cfg(0.5), &mut StreamRng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn normalized_bounded_and_support_preserving(
            raw in prop::collection::vec(0.0f64..1.0, 1..6),
            zero_mask in prop::collection::vec(any::<bool>(), 6),
            delta in 0.0f64..0.99,
            seed in any::<u64>(),
        ) {
            let mut base: Vec<f64> = raw.iter().zip(&zero_mask).map(|(r, z)| if *z { 0.0 } else { *r }).collect();
            if base.iter().sum::<f64>() <= 1e-6 {
                base[0] = 1.0;
            }
            let total: f64 = base.iter().sum();
            let base: Vec<f64> = base.iter().map(|r| r / total).collect();
            let mut rng = StreamRng::seed_from_u64(seed);
            let out = perturb_approach(&base, delta, &mut rng).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for (r, p) in base.iter().zip(&out) {
                prop_assert!(*p >= 0.0);
                if *r == 0.0 {
                    prop_assert_eq!(*p, 0.0);
                }
                let lo = r * (1.0 - delta) / (1.0 + delta);
                let hi = r * (1.0 + delta) / (1.0 - delta);
                prop_assert!(*p >= lo - 1e-12 && *p <= hi + 1e-12);
            }
        }
    }
}
