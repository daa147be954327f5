//! Continuous-MDP extension: the GaussianGrid environment, linear-Gaussian
//! policies, the two-player REINFORCE game, and relative-entropy IRL with an
//! adversarial sampling mixture.
//!
//! Control routing realizes the composite dynamics: at every timestep both
//! policies sample an action and a Bernoulli(alpha) draw decides whose action
//! is executed. Gradients are execution-gated, so each policy's log-prob term
//! enters the REINFORCE estimator only on the timesteps it controlled.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::irl::{adam_step, AdamState, IrlConfig};
use crate::mdp::dot;

/// A continuous-state environment with linear-reward features.
pub trait ContinuousEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn feature_dim(&self) -> usize;
    /// Half-width of the symmetric action box.
    fn action_bound(&self) -> f64;
    fn start(&self, out: &mut [f64]);
    fn features(&self, s: &[f64], out: &mut [f64]);
    /// Writes the successor state; returns the native reward evaluated at the
    /// successor and whether it is terminal.
    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng, next: &mut [f64]) -> (f64, bool);

    fn clip_action(&self, a: &mut [f64]) {
        let b = self.action_bound();
        for x in a.iter_mut() {
            *x = x.clamp(-b, b);
        }
    }
}

/// Planar point with the GaussianGrid box invariants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianGridState {
    pub x: f64,
    pub y: f64,
}

impl GaussianGridState {
    pub fn clamped(x: f64, y: f64) -> Self {
        Self {
            x: x.clamp(0.0, 1.0),
            y: y.clamp(-1.0, 1.0),
        }
    }
}

/// True reward weights of GaussianGrid over its feature map
/// `[x^2, y^2, x, y, exp(-8(x^2+y^2)), in-goal, 1]`.
pub const GAUSSIAN_GRID_TRUE_THETA: [f64; 7] = [-1.0, -1.0, 2.0, -2.0, -80.0, 10.0, -2.0];

/// 2D box world: start at (0,1), goal box at the lower-right corner, a steep
/// penalty bump at the origin, and an epsilon-probability drift that drags the
/// agent toward the bump instead of applying its action.
#[derive(Debug, Clone, Copy)]
pub struct GaussianGrid {
    pub eps: f64,
}

impl GaussianGrid {
    pub fn new(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Domain(format!("eps must lie in [0,1], got {eps}")));
        }
        Ok(Self { eps })
    }

    pub fn in_goal(x: f64, y: f64) -> bool {
        (0.95..=1.0).contains(&x) && (-1.0..=-0.95).contains(&y)
    }

    pub fn native_reward(x: f64, y: f64) -> f64 {
        let goal = if Self::in_goal(x, y) { 10.0 } else { 0.0 };
        -(x - 1.0).powi(2) - (y + 1.0).powi(2) - 80.0 * (-8.0 * (x * x + y * y)).exp() + goal
    }
}

impl ContinuousEnv for GaussianGrid {
    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        2
    }

    fn feature_dim(&self) -> usize {
        7
    }

    fn action_bound(&self) -> f64 {
        0.5
    }

    fn start(&self, out: &mut [f64]) {
        out[0] = 0.0;
        out[1] = 1.0;
    }

    fn features(&self, s: &[f64], out: &mut [f64]) {
        let (x, y) = (s[0], s[1]);
        out[0] = x * x;
        out[1] = y * y;
        out[2] = x;
        out[3] = y;
        out[4] = (-8.0 * (x * x + y * y)).exp();
        out[5] = if Self::in_goal(x, y) { 1.0 } else { 0.0 };
        out[6] = 1.0;
    }

    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng, next: &mut [f64]) -> (f64, bool) {
        let (x, y) = (s[0], s[1]);
        let drift = rng.gen::<f64>() < self.eps;
        let (nx, ny) = if drift {
            let norm = (x * x + y * y).sqrt();
            if norm == 0.0 {
                (x, y)
            } else {
                (x - x / (10.0 * norm), y - y / (10.0 * norm))
            }
        } else {
            (x + a[0] / 10.0, y + a[1] / 10.0)
        };
        let clamped = GaussianGridState::clamped(nx, ny);
        next[0] = clamped.x;
        next[1] = clamped.y;
        let done = Self::in_goal(clamped.x, clamped.y);
        (Self::native_reward(clamped.x, clamped.y), done)
    }
}

/// Diagonal-covariance Gaussian policy with a linear mean: one weight row per
/// action dimension, `a ~ N(W phi(s), diag(exp(2 log_std)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearGaussianPolicy {
    action_dim: usize,
    feat_dim: usize,
    /// `[action_dim][feat_dim]`, row-major.
    pub weights: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Exploration scale at initialization.
const INIT_LOG_STD: f64 = -1.2039728043259361; // ln 0.3

/// Bounds on the log standard deviation. An unlucky REINFORCE batch can
/// collapse sigma, which makes the next batch's scores explode; pinning
/// log_std to a sane range keeps the vanilla estimator usable.
pub const LOG_STD_RANGE: (f64, f64) = (-3.0, 0.0); // sigma in [0.05, 1.0]

impl LinearGaussianPolicy {
    pub fn new(action_dim: usize, feat_dim: usize) -> Self {
        Self {
            action_dim,
            feat_dim,
            weights: vec![0.0; action_dim * feat_dim],
            log_std: vec![INIT_LOG_STD; action_dim],
        }
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn feat_dim(&self) -> usize {
        self.feat_dim
    }

    pub fn mean_into(&self, phi: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(
                &self.weights[i * self.feat_dim..(i + 1) * self.feat_dim],
                phi,
            );
        }
    }

    /// Draws an unclipped action; the environment boundary clips on execution.
    pub fn sample_into(&self, phi: &[f64], rng: &mut ChaCha8Rng, out: &mut [f64]) {
        self.mean_into(phi, out);
        for (i, o) in out.iter_mut().enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *o += self.log_std[i].exp() * z;
        }
    }

    /// Log density of the (unclipped) action.
    pub fn log_prob(&self, phi: &[f64], a: &[f64]) -> f64 {
        let mut mean = vec![0.0; self.action_dim];
        self.mean_into(phi, &mut mean);
        let mut lp = 0.0;
        for i in 0..self.action_dim {
            let sigma = self.log_std[i].exp();
            let z = (a[i] - mean[i]) / sigma;
            lp += -0.5 * z * z - self.log_std[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
        }
        lp
    }

    /// Adds `coef * grad log pi(a|s)` into the weight and log-std accumulators.
    pub fn accumulate_score(
        &self,
        phi: &[f64],
        a: &[f64],
        coef: f64,
        acc_weights: &mut [f64],
        acc_log_std: &mut [f64],
    ) {
        let mut mean = vec![0.0; self.action_dim];
        self.mean_into(phi, &mut mean);
        for i in 0..self.action_dim {
            let sigma = self.log_std[i].exp();
            let delta = a[i] - mean[i];
            let dmean = delta / (sigma * sigma);
            for (j, &f) in phi.iter().enumerate() {
                acc_weights[i * self.feat_dim + j] += coef * dmean * f;
            }
            acc_log_std[i] += coef * ((delta * delta) / (sigma * sigma) - 1.0);
        }
    }

    pub fn mean_abs_weight(&self) -> f64 {
        let total: f64 = self.weights.iter().map(|w| w.abs()).sum();
        total / self.weights.len() as f64
    }
}

/// One rollout under the control mixture.
#[derive(Debug, Clone)]
pub struct Trajectory {
    /// Visited states `s_0 .. s_T`.
    pub states: Vec<Vec<f64>>,
    pub player_actions: Vec<Vec<f64>>,
    pub opponent_actions: Vec<Vec<f64>>,
    /// Which policy's action was executed at each step.
    pub executed_by_player: Vec<bool>,
    /// Reward collected at each step (evaluated at the successor state).
    pub rewards: Vec<f64>,
    /// `(1/|states|) sum_s phi(s)`.
    pub feature_means: Vec<f64>,
}

/// Reward signal used while collecting.
#[derive(Clone, Copy)]
pub enum RewardSpec<'a> {
    /// The environment's own reward.
    Native,
    /// `<theta, phi(s_next)>`.
    Linear(&'a [f64]),
}

/// Rolls out one episode: both policies sample every step, a Bernoulli(alpha)
/// draw routes control, and the executed action is clipped to the action box.
pub fn collect_trajectory<E: ContinuousEnv>(
    env: &E,
    player: &LinearGaussianPolicy,
    opponent: &LinearGaussianPolicy,
    alpha: f64,
    reward: RewardSpec,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let sd = env.state_dim();
    let fd = env.feature_dim();
    let ad = env.action_dim();
    let mut s = vec![0.0; sd];
    env.start(&mut s);
    let mut phi = vec![0.0; fd];
    let mut phi_sum = vec![0.0; fd];
    let mut next = vec![0.0; sd];
    let mut a_pl = vec![0.0; ad];
    let mut a_op = vec![0.0; ad];
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        player_actions: Vec::with_capacity(horizon),
        opponent_actions: Vec::with_capacity(horizon),
        executed_by_player: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        feature_means: vec![0.0; fd],
    };
    env.features(&s, &mut phi);
    for (acc, &f) in phi_sum.iter_mut().zip(&phi) {
        *acc += f;
    }
    traj.states.push(s.clone());
    for _ in 0..horizon {
        player.sample_into(&phi, rng, &mut a_pl);
        opponent.sample_into(&phi, rng, &mut a_op);
        let by_player = rng.gen::<f64>() < alpha;
        let mut executed = if by_player {
            a_pl.clone()
        } else {
            a_op.clone()
        };
        env.clip_action(&mut executed);
        let (native, done) = env.step(&s, &executed, rng, &mut next);
        s.copy_from_slice(&next);
        env.features(&s, &mut phi);
        let r = match reward {
            RewardSpec::Native => native,
            RewardSpec::Linear(theta) => dot(theta, &phi),
        };
        for (acc, &f) in phi_sum.iter_mut().zip(&phi) {
            *acc += f;
        }
        traj.states.push(s.clone());
        traj.player_actions.push(a_pl.clone());
        traj.opponent_actions.push(a_op.clone());
        traj.executed_by_player.push(by_player);
        traj.rewards.push(r);
        if done {
            break;
        }
    }
    let count = traj.states.len() as f64;
    for (out, &acc) in traj.feature_means.iter_mut().zip(&phi_sum) {
        *out = acc / count;
    }
    traj
}

/// Rolls out with actions drawn uniformly from the action box (the initial
/// sampling distribution before any policy exists).
pub fn collect_uniform_trajectory<E: ContinuousEnv>(
    env: &E,
    reward: RewardSpec,
    horizon: usize,
    rng: &mut ChaCha8Rng,
) -> Trajectory {
    let sd = env.state_dim();
    let fd = env.feature_dim();
    let ad = env.action_dim();
    let bound = env.action_bound();
    let mut s = vec![0.0; sd];
    env.start(&mut s);
    let mut phi = vec![0.0; fd];
    let mut phi_sum = vec![0.0; fd];
    let mut next = vec![0.0; sd];
    let mut traj = Trajectory {
        states: Vec::with_capacity(horizon + 1),
        player_actions: Vec::with_capacity(horizon),
        opponent_actions: Vec::with_capacity(horizon),
        executed_by_player: Vec::with_capacity(horizon),
        rewards: Vec::with_capacity(horizon),
        feature_means: vec![0.0; fd],
    };
    env.features(&s, &mut phi);
    for (acc, &f) in phi_sum.iter_mut().zip(&phi) {
        *acc += f;
    }
    traj.states.push(s.clone());
    for _ in 0..horizon {
        let a: Vec<f64> = (0..ad).map(|_| rng.gen_range(-bound..=bound)).collect();
        let (native, done) = env.step(&s, &a, rng, &mut next);
        s.copy_from_slice(&next);
        env.features(&s, &mut phi);
        let r = match reward {
            RewardSpec::Native => native,
            RewardSpec::Linear(theta) => dot(theta, &phi),
        };
        for (acc, &f) in phi_sum.iter_mut().zip(&phi) {
            *acc += f;
        }
        traj.states.push(s.clone());
        traj.player_actions.push(a.clone());
        traj.opponent_actions.push(a.clone());
        traj.executed_by_player.push(true);
        traj.rewards.push(r);
        if done {
            break;
        }
    }
    let count = traj.states.len() as f64;
    for (out, &acc) in traj.feature_means.iter_mut().zip(&phi_sum) {
        *out = acc / count;
    }
    traj
}

/// Policy-gradient settings for the inner game.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PgConfig {
    /// Outer REINFORCE updates per game solve.
    pub n_pi_steps: usize,
    /// Trajectories per update.
    pub n_traj: usize,
    pub learning_rate: f64,
    /// Multiplicative shrink on the mean weights per update. Keeps policy
    /// means near the action box; fully saturated means receive no gradient
    /// through the execution clip and freeze otherwise.
    #[serde(default)]
    pub weight_decay: f64,
    /// Scale each batch's baselined advantages to unit variance, which makes
    /// the step size meaningful across the reward magnitudes seen during
    /// training.
    #[serde(default = "default_true")]
    pub normalize_advantages: bool,
    /// Learning-rate multiplier for the log-std parameters; small values keep
    /// exploration alive while the means are still moving.
    #[serde(default = "default_log_std_scale")]
    pub log_std_lr_scale: f64,
    /// Learning-rate multiplier for the opponent. A slower adversary keeps
    /// the simultaneous zero-sum updates from cycling between policy basins.
    #[serde(default = "default_one")]
    pub opponent_lr_scale: f64,
    pub horizon: usize,
    pub gamma: f64,
}

fn default_one() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

fn default_log_std_scale() -> f64 {
    0.1
}

impl Default for PgConfig {
    fn default() -> Self {
        Self {
            n_pi_steps: 50,
            n_traj: 20,
            learning_rate: 3e-3,
            weight_decay: 3e-3,
            normalize_advantages: true,
            log_std_lr_scale: 0.1,
            opponent_lr_scale: 1.0,
            horizon: 200,
            gamma: 0.99,
        }
    }
}

impl PgConfig {
    /// Inner-game settings used by the relative-entropy IRL loop: larger
    /// batches, a slower adversary, and faster exploration decay than the
    /// single-agent defaults.
    pub fn inner_game() -> Self {
        Self {
            n_pi_steps: 80,
            n_traj: 32,
            log_std_lr_scale: 0.2,
            opponent_lr_scale: 0.5,
            ..Self::default()
        }
    }
}

const WEIGHT_GUARD: f64 = 1e3;

/// In-place REINFORCE on both players of the zero-sum game under the reward
/// `<theta, phi>`. The player ascends its return-to-go estimator, the
/// opponent descends the negated one; both only on the steps they controlled.
pub fn train_two_player<E: ContinuousEnv>(
    env: &E,
    reward_theta: &[f64],
    alpha: f64,
    cfg: &PgConfig,
    player: &mut LinearGaussianPolicy,
    opponent: &mut LinearGaussianPolicy,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    if reward_theta.len() != env.feature_dim() {
        return Err(Error::Shape(format!(
            "reward theta has {} entries, env features {}",
            reward_theta.len(),
            env.feature_dim()
        )));
    }
    if cfg.n_pi_steps == 0 || cfg.n_traj == 0 || cfg.horizon == 0 {
        return Err(Error::Domain(
            "policy-gradient counts must be positive".into(),
        ));
    }
    let fd = env.feature_dim();
    let ad = env.action_dim();
    let wlen = ad * fd;
    let mut acc_pl_w = vec![0.0; wlen];
    let mut acc_pl_ls = vec![0.0; ad];
    let mut acc_op_w = vec![0.0; wlen];
    let mut acc_op_ls = vec![0.0; ad];
    let mut phi = vec![0.0; fd];
    for _ in 0..cfg.n_pi_steps {
        acc_pl_w.fill(0.0);
        acc_pl_ls.fill(0.0);
        acc_op_w.fill(0.0);
        acc_op_ls.fill(0.0);
        let batch: Vec<Trajectory> = (0..cfg.n_traj)
            .map(|_| {
                collect_trajectory(
                    env,
                    player,
                    opponent,
                    alpha,
                    RewardSpec::Linear(reward_theta),
                    cfg.horizon,
                    rng,
                )
            })
            .collect();
        // return-to-go per trajectory: G_t = r_t + gamma G_{t+1}
        let returns: Vec<Vec<f64>> = batch
            .iter()
            .map(|traj| {
                let steps = traj.rewards.len();
                let mut g = vec![0.0; steps];
                let mut acc = 0.0;
                for t in (0..steps).rev() {
                    acc = traj.rewards[t] + cfg.gamma * acc;
                    g[t] = acc;
                }
                g
            })
            .collect();
        // Per-timestep sums for the leave-one-out baseline. Subtracting the
        // other trajectories' mean return-to-go keeps the estimator unbiased
        // while removing the common offset that otherwise swamps it.
        let max_len = returns.iter().map(|g| g.len()).max().unwrap_or(0);
        let mut sum_t = vec![0.0; max_len];
        let mut count_t = vec![0usize; max_len];
        for g in &returns {
            for (t, &v) in g.iter().enumerate() {
                sum_t[t] += v;
                count_t[t] += 1;
            }
        }
        // Spread of the baselined advantages, for optional normalization.
        let adv_scale = if cfg.normalize_advantages {
            let mut sq = 0.0;
            let mut count = 0usize;
            for g in &returns {
                for (t, &v) in g.iter().enumerate() {
                    let b = if count_t[t] > 1 {
                        (sum_t[t] - v) / (count_t[t] - 1) as f64
                    } else {
                        0.0
                    };
                    sq += (v - b) * (v - b);
                    count += 1;
                }
            }
            let std = (sq / count.max(1) as f64).sqrt();
            if std > 1e-8 {
                std
            } else {
                1.0
            }
        } else {
            1.0
        };
        for (traj, g) in batch.iter().zip(&returns) {
            let mut disc = 1.0;
            for t in 0..g.len() {
                env.features(&traj.states[t], &mut phi);
                let baseline = if count_t[t] > 1 {
                    (sum_t[t] - g[t]) / (count_t[t] - 1) as f64
                } else {
                    0.0
                };
                let coef = disc * (g[t] - baseline) / adv_scale / cfg.n_traj as f64;
                if traj.executed_by_player[t] {
                    player.accumulate_score(
                        &phi,
                        &traj.player_actions[t],
                        coef,
                        &mut acc_pl_w,
                        &mut acc_pl_ls,
                    );
                } else {
                    opponent.accumulate_score(
                        &phi,
                        &traj.opponent_actions[t],
                        coef,
                        &mut acc_op_w,
                        &mut acc_op_ls,
                    );
                }
                disc *= cfg.gamma;
            }
        }
        let lr = cfg.learning_rate;
        let ls_lr = lr * cfg.log_std_lr_scale;
        let op_lr = lr * cfg.opponent_lr_scale;
        let op_ls_lr = ls_lr * cfg.opponent_lr_scale;
        let keep = 1.0 - cfg.weight_decay;
        for (w, g) in player.weights.iter_mut().zip(&acc_pl_w) {
            *w = keep * *w + lr * g;
        }
        for (w, g) in player.log_std.iter_mut().zip(&acc_pl_ls) {
            *w = (*w + ls_lr * g).clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1);
        }
        for (w, g) in opponent.weights.iter_mut().zip(&acc_op_w) {
            *w = keep * *w - op_lr * g;
        }
        for (w, g) in opponent.log_std.iter_mut().zip(&acc_op_ls) {
            *w = (*w - op_ls_lr * g).clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1);
        }
        for (name, p) in [("player", &*player), ("opponent", &*opponent)] {
            let scale = p.mean_abs_weight();
            if !scale.is_finite() || scale > WEIGHT_GUARD {
                return Err(Error::Diverged(format!(
                    "{name} mean |weight| {scale:.3e} exceeds {WEIGHT_GUARD:.0e}"
                )));
            }
        }
    }
    Ok(())
}

/// Fresh-policy wrapper around [`train_two_player`].
pub fn two_player_policy_gradient<E: ContinuousEnv>(
    env: &E,
    reward_theta: &[f64],
    alpha: f64,
    cfg: &PgConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(LinearGaussianPolicy, LinearGaussianPolicy)> {
    let mut player = LinearGaussianPolicy::new(env.action_dim(), env.feature_dim());
    let mut opponent = LinearGaussianPolicy::new(env.action_dim(), env.feature_dim());
    train_two_player(
        env,
        reward_theta,
        alpha,
        cfg,
        &mut player,
        &mut opponent,
        rng,
    )?;
    Ok((player, opponent))
}

/// Softmax trajectory weights `P(tau|theta) ~ exp(<theta, phibar_tau>)`,
/// normalized with max subtraction.
pub fn trajectory_weights(theta: &[f64], feature_means: &[Vec<f64>]) -> Vec<f64> {
    let logits: Vec<f64> = feature_means.iter().map(|fm| dot(theta, fm)).collect();
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut w: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= sum;
    }
    w
}

/// Gradient of the trajectory-reweighting objective:
/// `phibar_expert - sum_tau P(tau|theta) phibar_tau`. Warns (but proceeds)
/// when every trajectory shares the same feature mean.
pub fn reirl_gradient(
    theta: &[f64],
    expert_feature_mean: &[f64],
    feature_means: &[Vec<f64>],
) -> Vec<f64> {
    let degenerate = feature_means
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| (a - b).abs() < 1e-15));
    if degenerate && feature_means.len() > 1 {
        log::warn!("all {} trajectories share one feature mean; the reweighting gradient carries no ranking information", feature_means.len());
    }
    let weights = trajectory_weights(theta, feature_means);
    let mut grad = expert_feature_mean.to_vec();
    for (w, fm) in weights.iter().zip(feature_means) {
        for (g, &f) in grad.iter_mut().zip(fm) {
            *g -= w * f;
        }
    }
    grad
}

/// Relative-entropy IRL settings.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReirlConfig {
    /// Outer reward/policy alternations.
    pub n_outer: usize,
    /// Trajectories collected per outer iteration.
    pub dataset_size: usize,
    /// Adam steps on theta per outer iteration.
    pub n_theta_steps: usize,
    pub theta_lr: f64,
    /// Decoupled weight decay on theta; bounds the reward scale over long
    /// alternations.
    #[serde(default = "default_theta_wd")]
    pub theta_weight_decay: f64,
    pub pg: PgConfig,
}

fn default_theta_wd() -> f64 {
    0.02
}

impl Default for ReirlConfig {
    fn default() -> Self {
        Self {
            n_outer: 40,
            dataset_size: 100,
            n_theta_steps: 10,
            theta_lr: 0.02,
            theta_weight_decay: 0.02,
            pg: PgConfig::inner_game(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ReirlResult {
    pub theta: Vec<f64>,
    pub player: LinearGaussianPolicy,
    pub opponent: LinearGaussianPolicy,
    /// Sampling-mixture feature mismatch of the returned iterate.
    pub feature_mismatch: f64,
}

/// Relative-entropy IRL with an adversarial sampling mixture: alternates
/// dataset collection under `alpha pi_pl + (1-alpha) pi_op` (uniform actions
/// on the first pass), softmax-reweighted feature matching on theta, and the
/// two-player policy-gradient game under the current reward. `alpha = 1`
/// recovers the standard algorithm.
pub fn relative_entropy_irl<E: ContinuousEnv>(
    env: &E,
    expert_feature_mean: &[f64],
    alpha: f64,
    cfg: &ReirlConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ReirlResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1], got {alpha}"
        )));
    }
    if expert_feature_mean.len() != env.feature_dim() {
        return Err(Error::Shape(format!(
            "expert feature mean has {} entries, env features {}",
            expert_feature_mean.len(),
            env.feature_dim()
        )));
    }
    if cfg.n_outer == 0 || cfg.dataset_size == 0 || cfg.n_theta_steps == 0 {
        return Err(Error::Domain("reirl counts must be positive".into()));
    }
    let fd = env.feature_dim();
    let mut theta = vec![0.0; fd];
    let mut player = LinearGaussianPolicy::new(env.action_dim(), fd);
    let mut opponent = LinearGaussianPolicy::new(env.action_dim(), fd);
    let adam_cfg = IrlConfig {
        learning_rate: cfg.theta_lr,
        adam_beta1: 0.9,
        adam_beta2: 0.999,
        adam_eps: 1e-8,
        weight_decay: cfg.theta_weight_decay,
        n_steps: cfg.n_theta_steps,
        inner_tol: 1e-10,
        theta_init: None,
        grad_norm_early_stop: None,
    };
    let mut adam = AdamState::new(fd);
    let mut adam_t = 0usize;
    // Convergence is judged by how well the sampling mixture reproduces the
    // expert feature mean; the best-matching iterate is what comes back.
    let mut best: Option<(f64, ReirlResult)> = None;
    let mut previous: Option<(Vec<f64>, LinearGaussianPolicy, LinearGaussianPolicy)> = None;
    for outer in 0..=cfg.n_outer {
        let feature_means: Vec<Vec<f64>> = (0..cfg.dataset_size)
            .map(|_| {
                if outer == 0 {
                    collect_uniform_trajectory(env, RewardSpec::Native, cfg.pg.horizon, rng)
                        .feature_means
                } else {
                    collect_trajectory(
                        env,
                        &player,
                        &opponent,
                        alpha,
                        RewardSpec::Native,
                        cfg.pg.horizon,
                        rng,
                    )
                    .feature_means
                }
            })
            .collect();
        // This dataset scores the iterate that generated it.
        if let Some((prev_theta, prev_player, prev_opponent)) = previous.take() {
            let mut mean = vec![0.0; fd];
            for f in &feature_means {
                for (m, &x) in mean.iter_mut().zip(f) {
                    *m += x / cfg.dataset_size as f64;
                }
            }
            let mismatch: f64 = mean
                .iter()
                .zip(expert_feature_mean)
                .map(|(a, b)| (a - b).abs())
                .sum();
            if best.as_ref().is_none_or(|(b, _)| mismatch < *b) {
                best = Some((
                    mismatch,
                    ReirlResult {
                        theta: prev_theta,
                        player: prev_player,
                        opponent: prev_opponent,
                        feature_mismatch: mismatch,
                    },
                ));
            }
        }
        if outer == cfg.n_outer {
            break;
        }
        for _ in 0..cfg.n_theta_steps {
            let grad = reirl_gradient(&theta, expert_feature_mean, &feature_means);
            // ascent on the reweighting objective
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            adam_t += 1;
            adam_step(&mut theta, &neg, &mut adam, &adam_cfg, adam_t)?;
        }
        train_two_player(env, &theta, alpha, &cfg.pg, &mut player, &mut opponent, rng)?;
        previous = Some((theta.clone(), player.clone(), opponent.clone()));
    }
    Ok(best
        .expect("n_outer >= 1 guarantees at least one scored iterate")
        .1)
}

/// Mean and standard deviation of the discounted native return of `policy`
/// acting alone (its actions clipped to the box) over `n_episodes` rollouts.
pub fn evaluate_policy_return<E: ContinuousEnv>(
    env: &E,
    policy: &LinearGaussianPolicy,
    gamma: f64,
    horizon: usize,
    n_episodes: usize,
    rng: &mut ChaCha8Rng,
) -> (f64, f64) {
    let sd_ = env.state_dim();
    let fd = env.feature_dim();
    let ad = env.action_dim();
    let mut returns = Vec::with_capacity(n_episodes);
    let mut s = vec![0.0; sd_];
    let mut phi = vec![0.0; fd];
    let mut a = vec![0.0; ad];
    let mut next = vec![0.0; sd_];
    for _ in 0..n_episodes {
        env.start(&mut s);
        let mut total = 0.0;
        let mut disc = 1.0;
        for _ in 0..horizon {
            env.features(&s, &mut phi);
            policy.sample_into(&phi, rng, &mut a);
            env.clip_action(&mut a);
            let (r, done) = env.step(&s, &a, rng, &mut next);
            s.copy_from_slice(&next);
            total += disc * r;
            disc *= gamma;
            if done {
                break;
            }
        }
        returns.push(total);
    }
    let mean = returns.iter().sum::<f64>() / n_episodes as f64;
    let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n_episodes as f64;
    (mean, var.sqrt())
}
