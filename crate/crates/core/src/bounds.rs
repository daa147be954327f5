//! Closed-form performance-bound calculators. Every function here is a pure
//! formula evaluator over [`BoundInputs`]; adversarial quantities such as the
//! distance to the worst-case kernel are supplied by the caller, never
//! computed internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::RewardModel;

/// Scalar inputs shared by the calculators. `r_abs_max` is derived from the
/// reward range rather than stored.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundInputs {
    pub gamma: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub n_actions: usize,
    /// `d_dyn(T^L, T^E)` in [0, 2].
    pub d_dyn: f64,
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub d_pol: Option<f64>,
}

impl BoundInputs {
    pub fn new(gamma: f64, r_min: f64, r_max: f64, n_actions: usize, d_dyn: f64) -> Result<Self> {
        let inputs = Self {
            gamma,
            r_min,
            r_max,
            n_actions,
            d_dyn,
            alpha: None,
            d_pol: None,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!(
                "gamma must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if self.r_min > self.r_max {
            return Err(Error::Domain(format!(
                "r_min {} exceeds r_max {}",
                self.r_min, self.r_max
            )));
        }
        if self.n_actions == 0 {
            return Err(Error::Domain("n_actions must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.d_dyn) {
            return Err(Error::Domain(format!(
                "d_dyn must lie in [0,2], got {}",
                self.d_dyn
            )));
        }
        if let Some(a) = self.alpha {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Domain(format!("alpha must lie in [0,1], got {a}")));
            }
        }
        if let Some(d) = self.d_pol {
            if !(0.0..=2.0).contains(&d) {
                return Err(Error::Domain(format!("d_pol must lie in [0,2], got {d}")));
            }
        }
        Ok(())
    }

    /// Reads the reward range off an environment's reward model.
    pub fn from_reward(
        gamma: f64,
        reward: &RewardModel,
        n_actions: usize,
        d_dyn: f64,
    ) -> Result<Self> {
        Self::new(gamma, reward.r_min(), reward.r_max(), n_actions, d_dyn)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn with_d_pol(mut self, d_pol: f64) -> Self {
        self.d_pol = Some(d_pol);
        self
    }

    pub fn r_abs_max(&self) -> f64 {
        self.r_min.abs().max(self.r_max.abs())
    }

    fn alpha_required(&self) -> Result<f64> {
        self.alpha
            .ok_or_else(|| Error::Domain("this bound needs alpha".into()))
    }
}

/// `kappa = sqrt(gamma * max(r_max + ln|A|, -ln|A| - r_min))`, the soft-policy
/// sensitivity constant.
pub fn kappa(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let log_a = (inputs.n_actions as f64).ln();
    let arg = (inputs.r_max + log_a).max(-log_a - inputs.r_min);
    let radicand = inputs.gamma * arg;
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "kappa radicand {radicand} is negative; the bound does not apply"
        )));
    }
    Ok(radicand.sqrt())
}

/// Total-variation bound between the soft-optimal policies of one reward
/// under two kernels: `2 min(kappa sqrt(d)/(1-gamma), kappa^2 d/(1-gamma)^2)`,
/// clamped at the trivial ceiling 2.
pub fn lemma1_pol_bound(inputs: &BoundInputs) -> Result<f64> {
    let k = kappa(inputs)?;
    let g = 1.0 - inputs.gamma;
    let d = inputs.d_dyn;
    let branch_sqrt = k * d.sqrt() / g;
    let branch_lin = k * k * d / (g * g);
    Ok((2.0 * branch_sqrt.min(branch_lin)).min(2.0))
}

/// Performance gap of occupancy matching under a hard expert:
/// `gamma |R|max d_dyn / (1-gamma)^2`.
pub fn thm1_gap_bound(inputs: &BoundInputs) -> Result<f64> {
    inputs.validate()?;
    let g = 1.0 - inputs.gamma;
    Ok(inputs.gamma * inputs.r_abs_max() * inputs.d_dyn / (g * g))
}

pub fn soft_expert_gap_terms(inputs: &BoundInputs) -> Result<Vec<(&'static str, f64)>> {
    let k = kappa(inputs)?;
    let g = 1.0 - inputs.gamma;
    let r = inputs.r_abs_max();
    let d = inputs.d_dyn;
    Ok(vec![
        ("demonstration", inputs.gamma * r * d / (g * g)),
        ("soft_sensitivity", 2.0 * k * r * d.sqrt() / (g * g * g)),
    ])
}

/// Gap bound for a soft-optimal expert: the hard-expert term plus the
/// soft-policy sensitivity term `2 kappa |R|max sqrt(d) / (1-gamma)^3`.
pub fn soft_expert_gap_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(soft_expert_gap_terms(inputs)?.iter().map(|(_, v)| v).sum())
}

pub fn robust_gap_terms(inputs: &BoundInputs) -> Result<Vec<(&'static str, f64)>> {
    inputs.validate()?;
    let alpha = inputs.alpha_required()?;
    let g = 1.0 - inputs.gamma;
    let scale = inputs.r_abs_max() / (g * g);
    Ok(vec![
        ("dynamics", scale * inputs.gamma * inputs.d_dyn),
        ("opponent", scale * 2.0 * (1.0 - alpha)),
    ])
}

/// Robust-learner gap: `(|R|max/(1-gamma)^2) (gamma d_dyn + 2(1-alpha))`.
pub fn robust_gap_bound(inputs: &BoundInputs) -> Result<f64> {
    Ok(robust_gap_terms(inputs)?.iter().map(|(_, v)| v).sum())
}

pub fn reward_transfer_terms(
    inputs: &BoundInputs,
    d_dyn_train_learner: f64,
    kappa_train: f64,
    d_pol_term: f64,
) -> Result<Vec<(&'static str, f64)>> {
    inputs.validate()?;
    for (name, d) in [
        ("d_dyn_train_learner", d_dyn_train_learner),
        ("d_pol_term", d_pol_term),
    ] {
        if !(0.0..=2.0).contains(&d) {
            return Err(Error::Domain(format!("{name} must lie in [0,2], got {d}")));
        }
    }
    let g = 1.0 - inputs.gamma;
    let scale = inputs.r_abs_max() / (g * g);
    Ok(vec![
        ("demonstration", scale * inputs.gamma * inputs.d_dyn),
        (
            "train_soft_sensitivity",
            scale * 2.0 * kappa_train * d_dyn_train_learner.sqrt() / g,
        ),
        ("train_dynamics", scale * inputs.gamma * d_dyn_train_learner),
        ("policy_term", scale * d_pol_term),
    ])
}

/// Reward-transfer gap: four terms scaled by `|R|max/(1-gamma)^2` covering the
/// expert mismatch, the training-kernel soft sensitivity, the training-kernel
/// dynamics shift, and the final policy substitution.
pub fn reward_transfer_bound(
    inputs: &BoundInputs,
    d_dyn_train_learner: f64,
    kappa_train: f64,
    d_pol_term: f64,
) -> Result<f64> {
    Ok(
        reward_transfer_terms(inputs, d_dyn_train_learner, kappa_train, d_pol_term)?
            .iter()
            .map(|(_, v)| v)
            .sum(),
    )
}

/// Simplified reward transfer when training happens on the expert kernel and
/// the evaluated policy is the transferred soft policy itself:
/// `2 |R|max/(1-gamma)^2 (gamma d + kappa sqrt(d)/(1-gamma))`.
pub fn reward_transfer_bound_simplified(inputs: &BoundInputs, kappa_expert: f64) -> Result<f64> {
    inputs.validate()?;
    let g = 1.0 - inputs.gamma;
    let d = inputs.d_dyn;
    Ok(2.0 * inputs.r_abs_max() / (g * g) * (inputs.gamma * d + kappa_expert * d.sqrt() / g))
}

pub fn infeasible_gap_terms(
    inputs: &BoundInputs,
    d_dyn_expert_tstar: f64,
) -> Result<Vec<(&'static str, f64)>> {
    inputs.validate()?;
    let alpha = inputs.alpha_required()?;
    let d_pol = inputs
        .d_pol
        .ok_or_else(|| Error::Domain("the infeasible-case bound needs d_pol".into()))?;
    if !(0.0..=2.0).contains(&d_dyn_expert_tstar) {
        return Err(Error::Domain(format!(
            "d_dyn_expert_tstar must lie in [0,2], got {d_dyn_expert_tstar}"
        )));
    }
    let g = 1.0 - inputs.gamma;
    let scale = inputs.r_abs_max() / (g * g);
    let d = inputs.d_dyn;
    Ok(vec![
        ("demonstration", scale * inputs.gamma * d),
        (
            "transfer",
            scale * inputs.gamma * 2.0 * (1.0 - alpha) * (1.0 - alpha),
        ),
        ("infeasibility_policy", scale * d_pol),
        (
            "infeasibility_dynamics",
            scale * inputs.gamma * (alpha * d + (1.0 - alpha) * d_dyn_expert_tstar),
        ),
    ])
}

/// Gap bound when exact matching is impossible: demonstration + transfer +
/// infeasibility terms. `inputs.d_dyn` is `d(T^E, T^L)`, `inputs.d_pol` is
/// `d_pol(pi*_E, pi_pl)`, and `d_dyn_expert_tstar` is the distance from the
/// expert kernel to the adversarial minimizer.
pub fn infeasible_gap_bound(inputs: &BoundInputs, d_dyn_expert_tstar: f64) -> Result<f64> {
    Ok(infeasible_gap_terms(inputs, d_dyn_expert_tstar)?
        .iter()
        .map(|(_, v)| v)
        .sum())
}

/// Opponent-strength choice minimizing the infeasible-case bound:
/// `alpha = min(1, 1 - d(T^E,T^L)/4 + d(T*,T^E)/4)`.
pub fn corollary_alpha_choice(d_dyn_expert_learner: f64, d_dyn_tstar_expert: f64) -> Result<f64> {
    for (name, d) in [
        ("d_dyn_expert_learner", d_dyn_expert_learner),
        ("d_dyn_tstar_expert", d_dyn_tstar_expert),
    ] {
        if !(0.0..=2.0).contains(&d) {
            return Err(Error::Domain(format!("{name} must lie in [0,2], got {d}")));
        }
    }
    Ok((1.0 - d_dyn_expert_learner / 4.0 + d_dyn_tstar_expert / 4.0).min(1.0))
}

/// Closed forms for the 3-state reference example.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstructiveGaps {
    /// Gap of plain occupancy matching: `2 gamma eps_e / (1-gamma)`.
    pub mce_gap: f64,
    /// Gap of the robust learner: `(2 gamma/(1-gamma)) |alpha - (1-eps_e)| / alpha`.
    pub robust_gap: f64,
    /// Converged player probability of the good action: `(1-eps_e)/alpha`.
    pub player_a1_prob: f64,
}

/// Evaluates the constructive example's closed forms. The player policy is
/// well-defined only when `alpha >= 1 - eps_e`.
pub fn constructive_gaps(eps_e: f64, gamma: f64, alpha: f64) -> Result<ConstructiveGaps> {
    if !(0.0..=1.0).contains(&eps_e) {
        return Err(Error::Domain(format!(
            "eps_e must lie in [0,1], got {eps_e}"
        )));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Domain(format!(
            "gamma must lie in (0,1), got {gamma}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0,1], got {alpha}"
        )));
    }
    if alpha < 1.0 - eps_e {
        return Err(Error::Domain(format!(
            "player policy not well-defined: alpha {alpha} < 1 - eps_e {}",
            1.0 - eps_e
        )));
    }
    let horizon = gamma / (1.0 - gamma);
    Ok(ConstructiveGaps {
        mce_gap: 2.0 * horizon * eps_e,
        robust_gap: 2.0 * horizon * (alpha - (1.0 - eps_e)).abs() / alpha,
        player_a1_prob: (1.0 - eps_e) / alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(gamma: f64, r_min: f64, r_max: f64, n_actions: usize, d: f64) -> BoundInputs {
        BoundInputs::new(gamma, r_min, r_max, n_actions, d).unwrap()
    }

    #[test]
    fn kappa_values() {
        let k = kappa(&inputs(0.99, -1.0, 1.0, 2, 0.0)).unwrap();
        assert!((k - 1.294687494631174).abs() < 1e-12);

        // gamma -> 0 limit
        let k = kappa(&inputs(1e-12, -1.0, 1.0, 2, 0.0)).unwrap();
        assert!(k < 1e-5);

        // R identically -ln|A| makes both max arguments vanish
        let la = (2.0f64).ln();
        let k = kappa(&inputs(0.9, -la, -la, 2, 0.0)).unwrap();
        assert!(k.abs() < 1e-12);
    }

    #[test]
    fn lemma1_values() {
        assert_eq!(
            lemma1_pol_bound(&inputs(0.9, 0.0, 1.0, 4, 0.0)).unwrap(),
            0.0
        );
        let b = lemma1_pol_bound(&inputs(0.9, 0.0, 1.0, 4, 0.1)).unwrap();
        // frozen from direct evaluation of 2*min(k sqrt(d)/(1-g), k^2 d/(1-g)^2)
        assert!(
            (b - 2.0).abs() < 1e-12,
            "clamped at the TV ceiling, got {b}"
        );
        // small enough d to stay below the clamp
        let b = lemma1_pol_bound(&inputs(0.9, 0.0, 1.0, 4, 1e-4)).unwrap();
        let k = kappa(&inputs(0.9, 0.0, 1.0, 4, 1e-4)).unwrap();
        let want = 2.0 * (k * (1e-4f64).sqrt() / 0.1).min(k * k * 1e-4 / 0.01);
        assert!((b - want).abs() < 1e-12);
        assert!(lemma1_pol_bound(&inputs(0.9, 0.0, 1.0, 4, 2.0)).unwrap() <= 2.0);
    }

    #[test]
    fn thm1_values() {
        assert_eq!(
            thm1_gap_bound(&inputs(0.99, -1.0, 1.0, 4, 0.0)).unwrap(),
            0.0
        );
        let b = thm1_gap_bound(&inputs(0.99, -1.0, 1.0, 4, 0.198)).unwrap();
        assert!((b - 1960.2).abs() < 1e-9, "got {b}");
        let b = thm1_gap_bound(&inputs(0.5, -2.0, 2.0, 4, 1.0)).unwrap();
        assert!((b - 4.0).abs() < 1e-12);
    }

    #[test]
    fn soft_expert_values() {
        assert_eq!(
            soft_expert_gap_bound(&inputs(0.9, -1.0, 1.0, 2, 0.0)).unwrap(),
            0.0
        );
        let b = soft_expert_gap_bound(&inputs(0.9, -1.0, 1.0, 2, 0.04)).unwrap();
        assert!((b - 497.3744363579712).abs() < 1e-9, "got {b}");
        // dominates the hard-expert bound
        for d in [0.01, 0.1, 0.5, 1.0] {
            let i = inputs(0.9, -1.0, 1.0, 2, d);
            assert!(soft_expert_gap_bound(&i).unwrap() > thm1_gap_bound(&i).unwrap());
        }
    }

    #[test]
    fn robust_values() {
        let i = inputs(0.99, -1.0, 1.0, 4, 0.198).with_alpha(1.0);
        assert!((robust_gap_bound(&i).unwrap() - thm1_gap_bound(&i).unwrap()).abs() < 1e-12);
        let i = inputs(0.99, -1.0, 1.0, 4, 0.198).with_alpha(0.9);
        let b = robust_gap_bound(&i).unwrap();
        assert!((b - 3960.2).abs() < 1e-8, "got {b}");
        let i = inputs(0.99, -1.0, 1.0, 4, 0.0).with_alpha(1.0);
        assert_eq!(robust_gap_bound(&i).unwrap(), 0.0);
    }

    #[test]
    fn reward_transfer_values() {
        let i = inputs(0.9, -1.0, 1.0, 2, 0.0);
        assert_eq!(reward_transfer_bound(&i, 0.0, 1.0, 0.0).unwrap(), 0.0);

        let i = inputs(0.9, -1.0, 1.0, 2, 0.01);
        let k = kappa(&i).unwrap();
        let simplified = reward_transfer_bound_simplified(&i, k).unwrap();
        assert!(
            (simplified - 248.68721817898557).abs() < 1e-9,
            "got {simplified}"
        );

        // general form reduces to the simplified one under the substitutions
        let general = reward_transfer_bound(&i, i.d_dyn, k, 0.0).unwrap();
        assert!((general - simplified).abs() < 1e-9);
    }

    #[test]
    fn infeasible_values() {
        let i = inputs(0.9, -1.0, 1.0, 2, 0.0)
            .with_alpha(1.0)
            .with_d_pol(0.0);
        assert_eq!(infeasible_gap_bound(&i, 0.0).unwrap(), 0.0);

        let i = inputs(0.9, -1.0, 1.0, 2, 0.2)
            .with_alpha(0.9)
            .with_d_pol(0.05);
        let b = infeasible_gap_bound(&i, 0.1).unwrap();
        assert!((b - 41.9).abs() < 1e-9, "got {b}");
        let terms = infeasible_gap_terms(&i, 0.1).unwrap();
        assert!((terms[0].1 - 18.0).abs() < 1e-9);
        assert!((terms[1].1 - 1.8).abs() < 1e-9);
        assert!((terms[2].1 + terms[3].1 - 22.1).abs() < 1e-9);

        // transfer term vanishes at alpha = 1
        let i = inputs(0.9, -1.0, 1.0, 2, 0.2)
            .with_alpha(1.0)
            .with_d_pol(0.05);
        let terms = infeasible_gap_terms(&i, 0.1).unwrap();
        assert_eq!(terms[1].1, 0.0);
    }

    #[test]
    fn alpha_choice_values() {
        assert_eq!(corollary_alpha_choice(0.0, 0.0).unwrap(), 1.0);
        assert!((corollary_alpha_choice(0.4, 0.0).unwrap() - 0.9).abs() < 1e-12);
        assert_eq!(corollary_alpha_choice(0.3, 0.3).unwrap(), 1.0);
        assert_eq!(corollary_alpha_choice(0.3, 0.5).unwrap(), 1.0);
        assert!(corollary_alpha_choice(2.5, 0.0).is_err());
    }

    #[test]
    fn constructive_gap_values() {
        // alpha = 1 - eps_e kills the robust gap
        let g = constructive_gaps(0.1, 0.99, 0.9).unwrap();
        assert!(g.robust_gap.abs() < 1e-12);
        assert!((g.player_a1_prob - 1.0).abs() < 1e-12);

        let g = constructive_gaps(0.1, 0.99, 1.0).unwrap();
        assert!((g.mce_gap - 19.8).abs() < 1e-9);
        assert!((g.robust_gap - 19.8).abs() < 1e-9);

        let g = constructive_gaps(0.0, 0.99, 1.0).unwrap();
        assert_eq!(g.mce_gap, 0.0);
        assert_eq!(g.robust_gap, 0.0);

        assert!(constructive_gaps(0.1, 0.99, 0.85).is_err());
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(BoundInputs::new(1.0, 0.0, 1.0, 2, 0.1).is_err());
        assert!(BoundInputs::new(0.9, 1.0, 0.0, 2, 0.1).is_err());
        assert!(BoundInputs::new(0.9, 0.0, 1.0, 2, 2.5).is_err());
        assert!(robust_gap_bound(&inputs(0.9, 0.0, 1.0, 2, 0.1)).is_err());
    }
}
