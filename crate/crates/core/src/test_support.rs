//! Seeded random instances shared by the unit tests.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::mdp::{RewardModel, StochasticPolicy, TabularMdp, Transitions};

/// Random dense MDP with exact row sums and a point-mass start state.
pub fn random_mdp(rng: &mut ChaCha8Rng, n: usize, m: usize, gamma: f64) -> TabularMdp {
    let mut data = vec![0.0; n * m * n];
    for chunk in data.chunks_mut(n) {
        let mut sum = 0.0;
        for x in chunk.iter_mut() {
            *x = rng.gen_range(0.01..1.0);
            sum += *x;
        }
        for x in chunk.iter_mut() {
            *x /= sum;
        }
        let s: f64 = chunk.iter().sum();
        chunk[n - 1] += 1.0 - s;
    }
    let t = Transitions::new(n, m, data).unwrap();
    let mut p0 = vec![1.0 / n as f64; n];
    let s: f64 = p0.iter().sum();
    p0[n - 1] += 1.0 - s;
    TabularMdp::new(t, gamma, p0, None).unwrap()
}

/// As [`random_mdp`] but with uniform random state rewards in `[lo, hi)`.
pub fn random_mdp_with_reward(
    rng: &mut ChaCha8Rng,
    n: usize,
    m: usize,
    gamma: f64,
    lo: f64,
    hi: f64,
) -> TabularMdp {
    let base = random_mdp(rng, n, m, gamma);
    let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
    base.with_reward(RewardModel::tabular(rewards)).unwrap()
}

/// Random row-stochastic policy with exact row sums.
pub fn random_policy(rng: &mut ChaCha8Rng, n: usize, m: usize) -> StochasticPolicy {
    let mut probs = vec![0.0; n * m];
    for row in probs.chunks_mut(m) {
        let mut sum = 0.0;
        for x in row.iter_mut() {
            *x = rng.gen_range(0.01..1.0);
            sum += *x;
        }
        for x in row.iter_mut() {
            *x /= sum;
        }
        let s: f64 = row.iter().sum();
        row[m - 1] += 1.0 - s;
    }
    StochasticPolicy::new(n, m, probs).unwrap()
}
