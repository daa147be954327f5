//! Continuous-control experiment: trains a GaussianGrid expert with policy
//! gradient under the true reward in the expert environment, hands its
//! demonstration feature means to relative-entropy IRL in the learner
//! environment, and evaluates the recovered player policies.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use robust_irl::reirl::{
    collect_trajectory, evaluate_policy_return, relative_entropy_irl, train_two_player,
    GaussianGrid, LinearGaussianPolicy, PgConfig, ReirlConfig, RewardSpec,
    GAUSSIAN_GRID_TRUE_THETA,
};
use robust_irl::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpertConfig {
    /// Policy-gradient updates used to train the expert on the true reward.
    pub n_pi_steps: usize,
    pub n_traj: usize,
    pub learning_rate: f64,
    /// Demonstration batch size.
    pub n_demos: usize,
}

impl Default for ExpertConfig {
    fn default() -> Self {
        Self {
            n_pi_steps: 1000,
            n_traj: 20,
            learning_rate: 3e-3,
            n_demos: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReirlExperimentConfig {
    pub eps_e: f64,
    pub eps_l: f64,
    /// Robust opponent strengths; 1.0 is reported as "reirl" (the standard
    /// algorithm), anything else as "robust-reirl".
    pub alphas: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub reirl: ReirlConfig,
    #[serde(default)]
    pub expert: ExpertConfig,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
}

fn default_eval_episodes() -> usize {
    100
}

impl ReirlExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for &e in [self.eps_e, self.eps_l].iter() {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Domain(format!(
                    "noise level must lie in [0,1], got {e}"
                )));
            }
        }
        if self.alphas.is_empty() || self.seeds.is_empty() {
            return Err(Error::Domain("alphas and seeds must be non-empty".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::Domain(format!("alpha must lie in (0,1], got {a}")));
            }
        }
        if self.eval_episodes == 0 {
            return Err(Error::Domain("eval_episodes must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReirlRow {
    pub seed: u64,
    pub method: String,
    pub eps_e: f64,
    pub eps_l: f64,
    pub alpha: f64,
    pub mean_return: f64,
    pub sd_return: f64,
}

pub const REIRL_CSV_HEADER: &str = "seed,method,eps_e,eps_l,alpha,mean_return,sd_return";

pub fn render_reirl_csv(rows: &[ReirlRow]) -> String {
    let mut out = String::from(REIRL_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.11e},{:.11e}\n",
            r.seed, r.method, r.eps_e, r.eps_l, r.alpha, r.mean_return, r.sd_return
        ));
    }
    out
}

/// Stream-splitting: one master seed yields independent substreams per stage.
fn substream(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(salt))
}

/// Trains an expert in the eps_e environment and returns its demonstration
/// feature mean together with the expert's evaluation return in its own
/// environment (a diagnostic).
pub fn train_expert(
    eps_e: f64,
    cfg: &ExpertConfig,
    seed: u64,
) -> Result<(Vec<f64>, LinearGaussianPolicy, f64)> {
    let env = GaussianGrid::new(eps_e)?;
    let mut player = LinearGaussianPolicy::new(2, 7);
    let mut shadow = LinearGaussianPolicy::new(2, 7);
    let pg = PgConfig {
        n_pi_steps: cfg.n_pi_steps,
        n_traj: cfg.n_traj,
        learning_rate: cfg.learning_rate,
        ..PgConfig::default()
    };
    let mut rng = substream(seed, 1);
    // alpha = 1: single-agent REINFORCE on the true reward
    train_two_player(
        &env,
        &GAUSSIAN_GRID_TRUE_THETA,
        1.0,
        &pg,
        &mut player,
        &mut shadow,
        &mut rng,
    )?;

    let mut demo_rng = substream(seed, 2);
    let mut mean = vec![0.0; 7];
    for _ in 0..cfg.n_demos {
        let traj = collect_trajectory(
            &env,
            &player,
            &shadow,
            1.0,
            RewardSpec::Native,
            pg.horizon,
            &mut demo_rng,
        );
        for (m, &f) in mean.iter_mut().zip(&traj.feature_means) {
            *m += f / cfg.n_demos as f64;
        }
    }
    let (expert_return, _) = evaluate_policy_return(
        &env,
        &player,
        pg.gamma,
        pg.horizon,
        50,
        &mut substream(seed, 3),
    );
    Ok((mean, player, expert_return))
}

/// Full protocol: per seed, train the expert under eps_e, then run each
/// configured learner variant under eps_l and evaluate in the learner
/// environment with the true reward.
pub fn run_reirl_experiment(cfg: &ReirlExperimentConfig) -> Result<Vec<ReirlRow>> {
    cfg.validate()?;
    let learner_env = GaussianGrid::new(cfg.eps_l)?;
    let mut rows = Vec::new();
    for &seed in &cfg.seeds {
        let (phibar_e, _, expert_return) = train_expert(cfg.eps_e, &cfg.expert, seed)?;
        log::info!("seed {seed}: expert return {expert_return:.3}");
        for (k, &alpha) in cfg.alphas.iter().enumerate() {
            let mut rng = substream(seed, 100 + k as u64);
            let result =
                relative_entropy_irl(&learner_env, &phibar_e, alpha, &cfg.reirl, &mut rng)?;
            let (mean, sd) = evaluate_policy_return(
                &learner_env,
                &result.player,
                cfg.reirl.pg.gamma,
                cfg.reirl.pg.horizon,
                cfg.eval_episodes,
                &mut substream(seed, 200 + k as u64),
            );
            rows.push(ReirlRow {
                seed,
                method: if alpha == 1.0 {
                    "reirl".into()
                } else {
                    "robust-reirl".into()
                },
                eps_e: cfg.eps_e,
                eps_l: cfg.eps_l,
                alpha,
                mean_return: mean,
                sd_return: sd,
            });
        }
    }
    Ok(rows)
}
