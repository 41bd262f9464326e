//! Categorical policy distribution over action logits.

use rand::Rng;

use crate::error::Result;
use crate::nn::Mlp;

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
    logits.iter().map(|z| z - log_sum).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

/// `-Σ p log p` given log-probabilities.
pub fn entropy(log_probs: &[f64]) -> f64 {
    -log_probs.iter().map(|lp| lp.exp() * lp).sum::<f64>()
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Sample,
    Greedy,
}

/// Draws an index from `softmax(logits)` by inverse CDF.
pub fn sample_index<R: Rng + ?Sized>(log_probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (k, lp) in log_probs.iter().enumerate() {
        cumulative += lp.exp();
        if u < cumulative {
            return k;
        }
    }
    // Rounding left the CDF just short of one.
    argmax(log_probs)
}

/// Picks an action for `obs`, returning the index and its log-probability.
pub fn select_action<R: Rng + ?Sized>(
    policy: &Mlp,
    obs: &[f64],
    rng: &mut R,
    mode: SelectMode,
) -> Result<(usize, f64)> {
    let logits = policy.predict(obs)?;
    let log_probs = log_softmax(&logits);
    let action = match mode {
        SelectMode::Sample => sample_index(&log_probs, rng),
        SelectMode::Greedy => argmax(&logits),
    };
    Ok((action, log_probs[action]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Dense;
    use crate::seeding::StreamRng;
    use rand::SeedableRng;

    fn bias_policy(bias: Vec<f64>) -> Mlp {
        let mut layer = Dense::zeros(1, bias.len());
        layer.bias = bias;
        Mlp::from_layers(vec![layer]).unwrap()
    }

    #[test]
    fn softmax_sums_to_one() {
        for logits in [vec![0.0; 9], vec![3.0, -1.0, 700.0, 0.5], vec![-1e3, 1e3]] {
            let p = softmax(&logits);
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn greedy_ties_go_low() {
        let policy = bias_policy(vec![0.0; 9]);
        let mut rng = StreamRng::seed_from_u64(0);
        let (a, lp) = select_action(&policy, &[0.0], &mut rng, SelectMode::Greedy).unwrap();
        assert_eq!(a, 0);
        assert!((lp - (1.0f64 / 9.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn saturated_logit_always_chosen() {
        let mut bias = vec![0.0; 9];
        bias[6] = 1e6;
        let policy = bias_policy(bias);
        let mut rng = StreamRng::seed_from_u64(3);
        for _ in 0..1000 {
            let (a, lp) = select_action(&policy, &[0.0], &mut rng, SelectMode::Sample).unwrap();
            assert_eq!(a, 6);
            assert!(lp.abs() < 1e-9);
        }
    }

    #[test]
    fn sampled_log_prob_matches_probability() {
        let policy = bias_policy(vec![0.3, -0.2, 1.1, 0.0]);
        let p = softmax(&[0.3, -0.2, 1.1, 0.0]);
        let mut rng = StreamRng::seed_from_u64(8);
        for _ in 0..100 {
            let (a, lp) = select_action(&policy, &[0.0], &mut rng, SelectMode::Sample).unwrap();
            assert!((lp - p[a].ln()).abs() <= 1e-9);
            assert!(lp <= 0.0);
        }
    }

    #[test]
    fn sampling_frequencies_follow_probabilities() {
        // logits (0, ln 2): p = (1/3, 2/3). Binomial count of index 1 over n draws
        // has mean 2n/3 and variance n·2/9.
        let policy = bias_policy(vec![0.0, 2f64.ln()]);
        let mut rng = StreamRng::seed_from_u64(21);
        let n = 100_000;
        let ones = (0..n)
            .filter(|_| select_action(&policy, &[0.0], &mut rng, SelectMode::Sample).unwrap().0 == 1)
            .count() as f64;
        let mean = n as f64 * 2.0 / 3.0;
        let sd = (n as f64 * 2.0 / 9.0).sqrt();
        assert!((ones - mean).abs() <= 3.0 * sd, "{ones} vs {mean} ± {}", 3.0 * sd);
    }

    #[test]
    fn entropy_of_uniform() {
        let lp = log_softmax(&[0.0; 9]);
        assert!((entropy(&lp) - 9f64.ln()).abs() < 1e-12);
    }
}
