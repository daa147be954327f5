//! Occupancy-matching IRL optimizers.
//!
//! Both optimizers run the same cycle: solve the (game) MDP under the current
//! reward weights, propagate the resulting policy's occupancy, and take an
//! Adam step on theta with the feature-expectation gradient
//! `Phi^T (rho_achieved - rho_target)`. The robust variant solves the
//! two-player game and matches the occupancy of the mixture policy
//! `alpha pi_pl + (1 - alpha) pi_op`; at `alpha = 1` it reproduces the
//! standard optimizer step for step.

use crate::error::{Error, Result};
use crate::mdp::{
    dot, l1_diff, mix_policies, state_occupancy_capped, FeatureMatrix, OccupancyMeasure,
    StochasticPolicy, TabularMdp, DEFAULT_MAX_ITERS,
};
use crate::solvers::{soft_vi_inner, two_player_soft_vi_inner};

/// Optimizer settings. Defaults follow the tabular gridworld configuration
/// (Adam with lr 0.5, betas (0.9, 0.99), eps 1e-7, no weight decay, 200
/// steps, inner tolerance 1e-10).
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IrlConfig {
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub n_steps: usize,
    pub inner_tol: f64,
    /// Starting weights; zeros when absent.
    #[serde(default)]
    pub theta_init: Option<Vec<f64>>,
    /// Optional early stop once the gradient norm falls below this value.
    #[serde(default)]
    pub grad_norm_early_stop: Option<f64>,
}

impl Default for IrlConfig {
    fn default() -> Self {
        Self::gridworld()
    }
}

impl IrlConfig {
    /// Tabular gridworld settings: lr 0.5, betas (0.9, 0.99), eps 1e-7,
    /// weight decay 0, 200 steps.
    pub fn gridworld() -> Self {
        Self {
            learning_rate: 0.5,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_eps: 1e-7,
            weight_decay: 0.0,
            n_steps: 200,
            inner_tol: 1e-10,
            theta_init: None,
            grad_norm_early_stop: None,
        }
    }

    /// ObjectWorld settings: lr 1e-3, betas (0.9, 0.999), eps 1e-8, weight
    /// decay 0.01, 200 steps.
    pub fn objectworld() -> Self {
        Self {
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            n_steps: 200,
            inner_tol: 1e-10,
            theta_init: None,
            grad_norm_early_stop: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Domain(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Domain(format!("{name} must lie in [0,1), got {b}")));
            }
        }
        if self.n_steps == 0 {
            return Err(Error::Domain("n_steps must be at least 1".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(Error::Domain(format!(
                "inner tolerance must be positive, got {}",
                self.inner_tol
            )));
        }
        Ok(())
    }

    fn initial_theta(&self, dim: usize) -> Result<Vec<f64>> {
        match &self.theta_init {
            None => Ok(vec![0.0; dim]),
            Some(t) if t.len() == dim => Ok(t.clone()),
            Some(t) => Err(Error::Shape(format!(
                "theta_init has {} entries, features have dim {dim}",
                t.len()
            ))),
        }
    }
}

/// First/second moment accumulators for Adam.
#[derive(Debug, Clone, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        }
    }
}

/// One Adam descent step with bias correction. `step_index` starts at 1.
/// Weight decay, when nonzero, is decoupled: applied directly to theta before
/// the moment update.
pub fn adam_step(
    theta: &mut [f64],
    grad: &[f64],
    state: &mut AdamState,
    cfg: &IrlConfig,
    step_index: usize,
) -> Result<()> {
    if grad.len() != theta.len() || state.m.len() != theta.len() || state.v.len() != theta.len() {
        return Err(Error::Shape(format!(
            "adam shapes disagree: theta {}, grad {}, m {}, v {}",
            theta.len(),
            grad.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    if step_index == 0 {
        return Err(Error::Domain("adam step index starts at 1".into()));
    }
    let lr = cfg.learning_rate;
    if cfg.weight_decay > 0.0 {
        for t in theta.iter_mut() {
            *t -= lr * cfg.weight_decay * *t;
        }
    }
    let b1 = cfg.adam_beta1;
    let b2 = cfg.adam_beta2;
    let bc1 = 1.0 - b1.powi(step_index as i32);
    let bc2 = 1.0 - b2.powi(step_index as i32);
    for i in 0..theta.len() {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grad[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grad[i] * grad[i];
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Per-step diagnostics handed to the observer and kept in the result.
#[derive(Debug, Clone, serde::Serialize)]
pub struct IrlStep {
    pub step: usize,
    pub grad_norm: f64,
    pub l1_mismatch: f64,
}

/// Outcome of an optimizer run.
#[derive(Debug, Clone)]
pub struct IrlResult {
    pub theta: Vec<f64>,
    /// Soft-optimal policy for the final theta (player policy in robust mode).
    pub policy: StochasticPolicy,
    pub gradient_norm_history: Vec<f64>,
    pub l1_history: Vec<f64>,
    /// Theta after each update, preceded by the initial value.
    pub theta_history: Vec<Vec<f64>>,
    /// `||rho_achieved - rho_target||_1` for the final weights; the achieved
    /// occupancy is the mixture policy's in robust mode.
    pub final_l1_mismatch: f64,
    /// Robust mode only: mismatch of the player policy alone.
    pub player_l1_mismatch: Option<f64>,
}

fn l2_norm(xs: &[f64]) -> f64 {
    dot(xs, xs).sqrt()
}

fn check_inputs(
    learner: &TabularMdp,
    rho_target: &OccupancyMeasure,
    features: &FeatureMatrix,
    cfg: &IrlConfig,
) -> Result<()> {
    cfg.validate()?;
    if rho_target.len() != learner.n_states {
        return Err(Error::Shape(format!(
            "target occupancy has {} states, learner has {}",
            rho_target.len(),
            learner.n_states
        )));
    }
    if features.n_states() != learner.n_states {
        return Err(Error::Shape(format!(
            "features cover {} states, learner has {}",
            features.n_states(),
            learner.n_states
        )));
    }
    Ok(())
}

fn at_step(step: usize) -> impl Fn(Error) -> Error {
    move |e| Error::AtStep {
        step,
        source: Box::new(e),
    }
}

/// Maximum causal entropy IRL: fits theta so the soft-optimal policy in
/// `learner` matches `rho_target`. Any reward already on `learner` is
/// ignored; theta is the optimization variable over `features`.
pub fn mce_irl(
    learner: &TabularMdp,
    rho_target: &OccupancyMeasure,
    features: &FeatureMatrix,
    cfg: &IrlConfig,
) -> Result<IrlResult> {
    mce_irl_observed(learner, rho_target, features, cfg, |_| {})
}

pub fn mce_irl_observed(
    learner: &TabularMdp,
    rho_target: &OccupancyMeasure,
    features: &FeatureMatrix,
    cfg: &IrlConfig,
    mut observe: impl FnMut(&IrlStep),
) -> Result<IrlResult> {
    check_inputs(learner, rho_target, features, cfg)?;
    let mut theta = cfg.initial_theta(features.dim())?;
    let mut adam = AdamState::new(theta.len());
    let mut grad_history = Vec::with_capacity(cfg.n_steps);
    let mut l1_history = Vec::with_capacity(cfg.n_steps);
    let mut theta_history = Vec::with_capacity(cfg.n_steps + 1);
    theta_history.push(theta.clone());

    for step in 1..=cfg.n_steps {
        let rewards = features.apply(&theta)?;
        let sol = soft_vi_inner(learner, &rewards, cfg.inner_tol, DEFAULT_MAX_ITERS)
            .map_err(at_step(step))?;
        let rho = state_occupancy_capped(learner, &sol.policy, cfg.inner_tol, DEFAULT_MAX_ITERS)
            .map_err(at_step(step))?;
        let diff: Vec<f64> = rho
            .as_slice()
            .iter()
            .zip(rho_target.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let grad = features.transpose_apply(&diff)?;
        let diag = IrlStep {
            step,
            grad_norm: l2_norm(&grad),
            l1_mismatch: l1_diff(rho.as_slice(), rho_target.as_slice()),
        };
        observe(&diag);
        grad_history.push(diag.grad_norm);
        l1_history.push(diag.l1_mismatch);
        if cfg
            .grad_norm_early_stop
            .is_some_and(|th| diag.grad_norm < th)
        {
            break;
        }
        adam_step(&mut theta, &grad, &mut adam, cfg, step)?;
        theta_history.push(theta.clone());
    }

    // Policy and mismatch for the weights actually returned.
    let rewards = features.apply(&theta)?;
    let final_sol = soft_vi_inner(learner, &rewards, cfg.inner_tol, DEFAULT_MAX_ITERS)?;
    let rho = state_occupancy_capped(learner, &final_sol.policy, cfg.inner_tol, DEFAULT_MAX_ITERS)?;
    Ok(IrlResult {
        theta,
        policy: final_sol.policy,
        gradient_norm_history: grad_history,
        l1_history,
        theta_history,
        final_l1_mismatch: l1_diff(rho.as_slice(), rho_target.as_slice()),
        player_l1_mismatch: None,
    })
}

/// Robust MCE IRL via the two-player Markov game with opponent strength
/// `1 - alpha`. Matches the mixture policy's occupancy in `learner` and
/// returns the player policy. `alpha = 1` degenerates to `mce_irl`.
pub fn robust_mce_irl(
    learner: &TabularMdp,
    rho_target: &OccupancyMeasure,
    alpha: f64,
    features: &FeatureMatrix,
    cfg: &IrlConfig,
) -> Result<IrlResult> {
    robust_mce_irl_observed(learner, rho_target, alpha, features, cfg, |_| {})
}

pub fn robust_mce_irl_observed(
    learner: &TabularMdp,
    rho_target: &OccupancyMeasure,
    alpha: f64,
    features: &FeatureMatrix,
    cfg: &IrlConfig,
    mut observe: impl FnMut(&IrlStep),
) -> Result<IrlResult> {
    check_inputs(learner, rho_target, features, cfg)?;
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1], got {alpha}"
        )));
    }
    let mut theta = cfg.initial_theta(features.dim())?;
    let mut adam = AdamState::new(theta.len());
    let mut grad_history = Vec::with_capacity(cfg.n_steps);
    let mut l1_history = Vec::with_capacity(cfg.n_steps);
    let mut theta_history = Vec::with_capacity(cfg.n_steps + 1);
    theta_history.push(theta.clone());

    // Initial policies come from solving the game at the starting weights
    // (the saddle point at theta = 0 is the uniform pair up to rounding).
    let rewards = features.apply(&theta)?;
    let mut game =
        two_player_soft_vi_inner(learner, &rewards, alpha, cfg.inner_tol, DEFAULT_MAX_ITERS)?;

    for step in 1..=cfg.n_steps {
        let mixture = mix_policies(&game.player, &game.opponent, alpha)?;
        let rho = state_occupancy_capped(learner, &mixture, cfg.inner_tol, DEFAULT_MAX_ITERS)
            .map_err(at_step(step))?;
        let diff: Vec<f64> = rho
            .as_slice()
            .iter()
            .zip(rho_target.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let grad = features.transpose_apply(&diff)?;
        let diag = IrlStep {
            step,
            grad_norm: l2_norm(&grad),
            l1_mismatch: l1_diff(rho.as_slice(), rho_target.as_slice()),
        };
        observe(&diag);
        grad_history.push(diag.grad_norm);
        l1_history.push(diag.l1_mismatch);
        if cfg
            .grad_norm_early_stop
            .is_some_and(|th| diag.grad_norm < th)
        {
            break;
        }
        adam_step(&mut theta, &grad, &mut adam, cfg, step)?;
        theta_history.push(theta.clone());
        let rewards = features.apply(&theta)?;
        game = two_player_soft_vi_inner(learner, &rewards, alpha, cfg.inner_tol, DEFAULT_MAX_ITERS)
            .map_err(at_step(step))?;
    }

    let mixture = mix_policies(&game.player, &game.opponent, alpha)?;
    let rho_mix = state_occupancy_capped(learner, &mixture, cfg.inner_tol, DEFAULT_MAX_ITERS)?;
    let rho_player =
        state_occupancy_capped(learner, &game.player, cfg.inner_tol, DEFAULT_MAX_ITERS)?;
    Ok(IrlResult {
        theta,
        policy: game.player,
        gradient_norm_history: grad_history,
        l1_history,
        theta_history,
        final_l1_mismatch: l1_diff(rho_mix.as_slice(), rho_target.as_slice()),
        player_l1_mismatch: Some(l1_diff(rho_player.as_slice(), rho_target.as_slice())),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_constructive;
    use crate::mdp::{pol_distance, state_occupancy, RewardModel, StochasticPolicy, TabularMdp};
    use crate::solvers::soft_value_iteration;
    use crate::test_support::random_mdp;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn adam_zero_gradient_keeps_theta() {
        let cfg = IrlConfig::gridworld();
        let mut theta = vec![0.3, -0.7];
        let mut state = AdamState::new(2);
        adam_step(&mut theta, &[0.0, 0.0], &mut state, &cfg, 1).unwrap();
        assert_eq!(theta, vec![0.3, -0.7]);
    }

    #[test]
    fn adam_first_step_magnitude() {
        let cfg = IrlConfig::gridworld();
        let mut theta = vec![0.0, 0.0];
        let mut state = AdamState::new(2);
        let g = [0.2, -0.05];
        adam_step(&mut theta, &g, &mut state, &cfg, 1).unwrap();
        for i in 0..2 {
            // bias-corrected first step: -lr * g / (|g| + eps)
            let want = -cfg.learning_rate * g[i] / (g[i].abs() + cfg.adam_eps);
            assert!((theta[i] - want).abs() < 1e-12, "{} vs {}", theta[i], want);
        }
    }

    #[test]
    fn adam_matches_reference_recurrence() {
        let cfg = IrlConfig {
            weight_decay: 0.1,
            ..IrlConfig::gridworld()
        };
        let g = [0.4, -1.3, 0.02];
        let mut theta = vec![1.0, -2.0, 0.5];
        let mut state = AdamState::new(3);
        adam_step(&mut theta, &g, &mut state, &cfg, 1).unwrap();
        adam_step(&mut theta, &g, &mut state, &cfg, 2).unwrap();

        // reference recurrence
        let (lr, b1, b2, eps, wd) = (0.5, 0.9, 0.99, 1e-7, 0.1);
        let mut t_ref = [1.0, -2.0, 0.5];
        let mut m = [0.0; 3];
        let mut v = [0.0; 3];
        for step in 1..=2 {
            for i in 0..3 {
                t_ref[i] -= lr * wd * t_ref[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - f64::powi(b1, step));
                let vh = v[i] / (1.0 - f64::powi(b2, step));
                t_ref[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        for i in 0..3 {
            assert!((theta[i] - t_ref[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn adam_shape_mismatch() {
        let cfg = IrlConfig::gridworld();
        let mut theta = vec![0.0; 2];
        let mut state = AdamState::new(2);
        assert!(adam_step(&mut theta, &[1.0], &mut state, &cfg, 1).is_err());
    }

    #[test]
    fn mce_self_consistency_on_three_states() {
        // Target generated by a soft-optimal policy, so matching is feasible.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        let theta_star = vec![0.8, -0.4, 0.1];
        let with_reward = mdp.with_reward(RewardModel::tabular(theta_star)).unwrap();
        let expert = soft_value_iteration(&with_reward, 1e-12).unwrap();
        let rho_target = state_occupancy(&mdp, &expert.policy, 1e-12).unwrap();

        let features = crate::mdp::FeatureMatrix::one_hot(3);
        let cfg = IrlConfig::gridworld();
        let result = mce_irl(&mdp, &rho_target, &features, &cfg).unwrap();
        assert!(
            result.final_l1_mismatch <= 1e-3,
            "mismatch {}",
            result.final_l1_mismatch
        );
    }

    #[test]
    fn mce_zero_gradient_when_already_matched() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdp = random_mdp(&mut rng, 3, 2, 0.9);
        // theta = 0 gives the soft policy whose occupancy we set as target.
        let zero_reward = mdp.with_reward(RewardModel::tabular(vec![0.0; 3])).unwrap();
        let sol = soft_value_iteration_inner_for_test(&zero_reward);
        let rho_target = state_occupancy(&mdp, &sol, 1e-10).unwrap();
        let features = crate::mdp::FeatureMatrix::one_hot(3);
        let cfg = IrlConfig {
            n_steps: 1,
            ..IrlConfig::gridworld()
        };
        let result = mce_irl(&mdp, &rho_target, &features, &cfg).unwrap();
        assert!(result.gradient_norm_history[0] < 1e-12);
    }

    fn soft_value_iteration_inner_for_test(mdp: &TabularMdp) -> StochasticPolicy {
        soft_value_iteration(mdp, 1e-10).unwrap().policy
    }

    /// Dual objective whose gradient is Phi^T (rho_soft(theta) - rho_target):
    /// U(theta) = (1-gamma) E_{p0}[V_soft_theta] - <theta, Phi^T rho_target>.
    fn dual_objective(
        mdp: &TabularMdp,
        features: &crate::mdp::FeatureMatrix,
        rho_target: &crate::mdp::OccupancyMeasure,
        theta: &[f64],
    ) -> f64 {
        let rewards = features.apply(theta).unwrap();
        let sol = soft_vi_inner(mdp, &rewards, 1e-13, DEFAULT_MAX_ITERS).unwrap();
        let v0: f64 = mdp.p0.iter().zip(&sol.v_soft).map(|(p, v)| p * v).sum();
        let target_feats = features.transpose_apply(rho_target.as_slice()).unwrap();
        (1.0 - mdp.gamma) * v0 - dot(theta, &target_feats)
    }

    #[test]
    fn gradient_matches_finite_differences_of_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 4;
        let mdp = random_mdp(&mut rng, n, 2, 0.9);
        let target_pi = crate::mdp::StochasticPolicy::uniform(n, 2);
        let rho_target = state_occupancy(&mdp, &target_pi, 1e-12).unwrap();
        let features = crate::mdp::FeatureMatrix::one_hot(n);
        let theta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();

        // analytic gradient at theta
        let rewards = features.apply(&theta).unwrap();
        let sol = soft_vi_inner(&mdp, &rewards, 1e-13, DEFAULT_MAX_ITERS).unwrap();
        let rho = state_occupancy(&mdp, &sol.policy, 1e-13).unwrap();
        let diff: Vec<f64> = rho
            .as_slice()
            .iter()
            .zip(rho_target.as_slice())
            .map(|(a, b)| a - b)
            .collect();
        let grad = features.transpose_apply(&diff).unwrap();

        let h = 1e-5;
        for i in 0..n {
            let mut up = theta.clone();
            let mut dn = theta.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (dual_objective(&mdp, &features, &rho_target, &up)
                - dual_objective(&mdp, &features, &rho_target, &dn))
                / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-4,
                "component {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn robust_alpha_one_degenerates_to_mce() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mdp = random_mdp(&mut rng, 4, 2, 0.9);
        let target_pi = crate::mdp::StochasticPolicy::uniform(4, 2);
        let rho_target = state_occupancy(&mdp, &target_pi, 1e-12).unwrap();
        let features = crate::mdp::FeatureMatrix::one_hot(4);
        let cfg = IrlConfig {
            n_steps: 40,
            ..IrlConfig::gridworld()
        };
        let a = mce_irl(&mdp, &rho_target, &features, &cfg).unwrap();
        let b = robust_mce_irl(&mdp, &rho_target, 1.0, &features, &cfg).unwrap();
        assert_eq!(a.theta_history.len(), b.theta_history.len());
        for (ta, tb) in a.theta_history.iter().zip(&b.theta_history) {
            for (x, y) in ta.iter().zip(tb) {
                assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
        assert!(pol_distance(&a.policy, &b.policy).unwrap() <= 1e-6);
    }

    #[test]
    fn robust_constructive_player_closed_form() {
        let cases = [(0.9, 1.0), (0.95, 0.9 / 0.95)];
        for (alpha, want) in cases {
            let expert_env = make_constructive(0.1).unwrap();
            let expert = StochasticPolicy::deterministic(2, &[0, 0, 0]).unwrap();
            let rho_target = state_occupancy(&expert_env, &expert, 1e-12).unwrap();
            let learner = make_constructive(0.0).unwrap().without_reward();
            let features = crate::mdp::FeatureMatrix::one_hot(3);
            // Interior fixed points need a step size on the scale of the
            // equilibrium theta gap (~0.03 here); lr 0.5 limit-cycles.
            let cfg = IrlConfig {
                learning_rate: 2e-3,
                n_steps: 2000,
                ..IrlConfig::gridworld()
            };
            let result = robust_mce_irl(&learner, &rho_target, alpha, &features, &cfg).unwrap();
            let got = result.policy.prob(0, 0);
            assert!(
                (got - want).abs() <= 1e-2,
                "alpha {alpha}: pi_pl(a1|s0) = {got}, want {want}"
            );
            // the mixture occupancy is what converges to the target
            assert!(result.final_l1_mismatch < 1e-2);
        }
    }

    #[test]
    fn feasible_instances_converge_quickly() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..4 {
            let n = rng.gen_range(3..=5);
            let mdp = random_mdp(&mut rng, n, 2, 0.9);
            let theta_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expert_env = mdp.with_reward(RewardModel::tabular(theta_star)).unwrap();
            let expert = soft_value_iteration(&expert_env, 1e-12).unwrap();
            let rho_target = state_occupancy(&mdp, &expert.policy, 1e-12).unwrap();
            let features = crate::mdp::FeatureMatrix::one_hot(n);
            let result = mce_irl(&mdp, &rho_target, &features, &IrlConfig::gridworld()).unwrap();
            assert!(
                result.final_l1_mismatch < 1e-2,
                "mismatch {}",
                result.final_l1_mismatch
            );
        }
    }

    #[test]
    fn gradient_norm_trend_is_decreasing_on_average() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let n_instances = 10;
        let steps = 120;
        let mut avg = vec![0.0f64; steps];
        for _ in 0..n_instances {
            let n = rng.gen_range(3..=5);
            let mdp = random_mdp(&mut rng, n, 2, 0.9);
            let theta_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let expert_env = mdp.with_reward(RewardModel::tabular(theta_star)).unwrap();
            let expert = soft_value_iteration(&expert_env, 1e-12).unwrap();
            let rho_target = state_occupancy(&mdp, &expert.policy, 1e-12).unwrap();
            let features = crate::mdp::FeatureMatrix::one_hot(n);
            let cfg = IrlConfig {
                n_steps: steps,
                ..IrlConfig::gridworld()
            };
            let result = mce_irl(&mdp, &rho_target, &features, &cfg).unwrap();
            for (a, g) in avg.iter_mut().zip(&result.gradient_norm_history) {
                *a += g / n_instances as f64;
            }
        }
        let window = 20;
        let ma: Vec<f64> = (0..=steps - window)
            .map(|i| avg[i..i + window].iter().sum::<f64>() / window as f64)
            .collect();
        for i in 40..ma.len() - 1 {
            assert!(
                ma[i + 1] <= ma[i] + 1e-6,
                "moving average rose at step {i}: {} -> {}",
                ma[i],
                ma[i + 1]
            );
        }
    }

    #[test]
    fn convexity_restarts_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let n = 4;
        let mdp = random_mdp(&mut rng, n, 2, 0.9);
        let theta_star: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let expert_env = mdp.with_reward(RewardModel::tabular(theta_star)).unwrap();
        let expert = soft_value_iteration(&expert_env, 1e-12).unwrap();
        let rho_target = state_occupancy(&mdp, &expert.policy, 1e-12).unwrap();
        let features = crate::mdp::FeatureMatrix::one_hot(n);

        let mut policies = Vec::new();
        for _ in 0..5 {
            let init: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let cfg = IrlConfig {
                n_steps: 600,
                learning_rate: 0.1,
                theta_init: Some(init),
                ..IrlConfig::gridworld()
            };
            policies.push(mce_irl(&mdp, &rho_target, &features, &cfg).unwrap().policy);
        }
        for i in 1..policies.len() {
            let d = pol_distance(&policies[0], &policies[i]).unwrap();
            assert!(d <= 1e-3, "restart {i} differs by {d}");
        }
    }

    #[test]
    fn error_carries_step_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let mdp = random_mdp(&mut rng, 3, 2, 0.999_999);
        let rho = state_occupancy(&mdp, &StochasticPolicy::uniform(3, 2), 1e-6);
        // gamma extremely close to 1 makes the inner solves overrun the cap
        if let Ok(rho) = rho {
            let features = crate::mdp::FeatureMatrix::one_hot(3);
            let cfg = IrlConfig {
                inner_tol: 1e-14,
                ..IrlConfig::gridworld()
            };
            match mce_irl(&mdp, &rho, &features, &cfg) {
                Err(Error::AtStep { step, .. }) => assert!(step >= 1),
                Err(_) => {}
                Ok(_) => {}
            }
        }
    }
}
