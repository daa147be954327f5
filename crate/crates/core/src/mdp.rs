//! Core tabular-MDP types: transition tensors, policies, reward models,
//! occupancy measures, and the distance/mixing/return operations on them.
//!
//! Conventions used throughout the crate:
//! - transition tensors are dense, laid out `[s][a][s']` row-major;
//! - occupancy measures carry the `(1 - gamma)` normalization, so they sum to 1;
//! - entropy is measured in nats, with `0 * ln 0 = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for probability rows summing to one.
pub const ROW_SUM_TOL: f64 = 1e-12;
/// Tolerance for an occupancy measure summing to one.
pub const OCC_SUM_TOL: f64 = 1e-9;
/// Default fixed-point tolerance for occupancy propagation.
pub const DEFAULT_OCC_TOL: f64 = 1e-10;
/// Iteration cap shared by the fixed-point solvers in this crate.
pub const DEFAULT_MAX_ITERS: usize = 100_000;

/// Dense transition tensor `T(s'|s,a)`, stored `[s][a][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct Transitions {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl Transitions {
    pub fn new(n_states: usize, n_actions: usize, data: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Invalid {
                what: "transition tensor",
                why: "state and action counts must be positive".into(),
            });
        }
        if data.len() != n_states * n_actions * n_states {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {}",
                data.len(),
                n_states * n_actions * n_states
            )));
        }
        let t = Self {
            n_states,
            n_actions,
            data,
        };
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = t.row(s, a);
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(Error::Invalid {
                        what: "transition tensor",
                        why: format!("entry outside [0,1] at (s={s}, a={a})"),
                    });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::Invalid {
                        what: "transition tensor",
                        why: format!("T(.|s={s},a={a}) sums to {sum}, not 1"),
                    });
                }
            }
        }
        Ok(t)
    }

    /// Builds the tensor from a closure giving `T(s'|s,a)`.
    pub fn from_fn(
        n_states: usize,
        n_actions: usize,
        f: impl Fn(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = vec![0.0; n_states * n_actions * n_states];
        for s in 0..n_states {
            for a in 0..n_actions {
                for s2 in 0..n_states {
                    data[(s * n_actions + a) * n_states + s2] = f(s2, s, a);
                }
            }
        }
        Self::new(n_states, n_actions, data)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// `T(.|s,a)` as a slice over next states.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.data[base..base + self.n_states]
    }

    /// `T(s'|s,a)`.
    #[inline]
    pub fn prob(&self, s_next: usize, s: usize, a: usize) -> f64 {
        self.data[(s * self.n_actions + a) * self.n_states + s_next]
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Shape(format!(
                "tensors are {}x{} and {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }
}

/// Linear features: one row `phi(s)` per state, `n_states x dim` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_states: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_states: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_states * dim {
            return Err(Error::Shape(format!(
                "feature matrix has {} entries, expected {}",
                data.len(),
                n_states * dim
            )));
        }
        Ok(Self {
            n_states,
            dim,
            data,
        })
    }

    /// Identity features: `phi(s)` is the s-th standard basis vector.
    pub fn one_hot(n_states: usize) -> Self {
        let mut data = vec![0.0; n_states * n_states];
        for s in 0..n_states {
            data[s * n_states + s] = 1.0;
        }
        Self {
            n_states,
            dim: n_states,
            data,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.data[s * self.dim..(s + 1) * self.dim]
    }

    /// `Phi^T x` for a state-indexed vector `x`: the feature expectation map.
    pub fn transpose_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_states {
            return Err(Error::Shape(format!(
                "vector of length {} against {} states",
                x.len(),
                self.n_states
            )));
        }
        let mut out = vec![0.0; self.dim];
        for s in 0..self.n_states {
            let row = self.row(s);
            for (o, &f) in out.iter_mut().zip(row) {
                *o += x[s] * f;
            }
        }
        Ok(out)
    }

    /// `Phi theta`: reward value per state.
    pub fn apply(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if theta.len() != self.dim {
            return Err(Error::Shape(format!(
                "theta of length {}, features have dim {}",
                theta.len(),
                self.dim
            )));
        }
        Ok((0..self.n_states)
            .map(|s| dot(self.row(s), theta))
            .collect())
    }
}

/// Linear reward `R(s) = <theta, phi(s)>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardModel {
    pub features: FeatureMatrix,
    pub theta: Vec<f64>,
}

impl RewardModel {
    pub fn new(features: FeatureMatrix, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != features.dim() {
            return Err(Error::Shape(format!(
                "theta of length {} against feature dim {}",
                theta.len(),
                features.dim()
            )));
        }
        Ok(Self { features, theta })
    }

    /// One-hot features with the given per-state reward values.
    pub fn tabular(values: Vec<f64>) -> Self {
        let n = values.len();
        Self {
            features: FeatureMatrix::one_hot(n),
            theta: values,
        }
    }

    pub fn value(&self, s: usize) -> f64 {
        dot(self.features.row(s), &self.theta)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.features.n_states())
            .map(|s| self.value(s))
            .collect()
    }

    pub fn r_min(&self) -> f64 {
        self.values().into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn r_max(&self) -> f64 {
        self.values().into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn r_abs_max(&self) -> f64 {
        self.r_min().abs().max(self.r_max().abs())
    }
}

/// Finite MDP with dense dynamics. The reward is optional so the same type can
/// describe a learner environment with the reward stripped.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transitions: Transitions,
    pub gamma: f64,
    pub p0: Vec<f64>,
    pub reward: Option<RewardModel>,
}

impl TabularMdp {
    pub fn new(
        transitions: Transitions,
        gamma: f64,
        p0: Vec<f64>,
        reward: Option<RewardModel>,
    ) -> Result<Self> {
        let n_states = transitions.n_states();
        let n_actions = transitions.n_actions();
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Invalid {
                what: "MDP",
                why: format!("gamma must lie in (0,1), got {gamma}"),
            });
        }
        if p0.len() != n_states {
            return Err(Error::Shape(format!(
                "p0 of length {} against {} states",
                p0.len(),
                n_states
            )));
        }
        if p0.iter().any(|&p| p < 0.0) {
            return Err(Error::Invalid {
                what: "MDP",
                why: "p0 has a negative entry".into(),
            });
        }
        let sum: f64 = p0.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Invalid {
                what: "MDP",
                why: format!("p0 sums to {sum}, not 1"),
            });
        }
        if let Some(r) = &reward {
            if r.features.n_states() != n_states {
                return Err(Error::Shape(format!(
                    "reward features cover {} states, MDP has {}",
                    r.features.n_states(),
                    n_states
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transitions,
            gamma,
            p0,
            reward,
        })
    }

    pub fn reward(&self) -> Result<&RewardModel> {
        self.reward.as_ref().ok_or(Error::MissingReward)
    }

    /// Same MDP with a different reward attached.
    pub fn with_reward(&self, reward: RewardModel) -> Result<Self> {
        Self::new(
            self.transitions.clone(),
            self.gamma,
            self.p0.clone(),
            Some(reward),
        )
    }

    /// Same MDP with the reward stripped, as handed to IRL learners.
    pub fn without_reward(&self) -> Self {
        Self {
            reward: None,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MdpJson::from(self)).expect("MDP serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MdpJson = serde_json::from_str(text)?;
        raw.try_into()
    }
}

/// Row-stochastic policy table `pi(a|s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Shape(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Invalid {
                    what: "policy",
                    why: format!("probability outside [0,1] in state {s}"),
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Invalid {
                    what: "policy",
                    why: format!("pi(.|s={s}) sums to {sum}, not 1"),
                });
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
        }
    }

    /// Point-mass policy on one action per state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let n_states = actions.len();
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Domain(format!(
                    "action {a} out of range in state {s}"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    #[inline]
    pub fn prob(&self, a: usize, s: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.probs.chunks(self.n_actions)
    }

    /// Shannon entropy of `pi(.|s)` in nats.
    pub fn entropy(&self, s: usize) -> f64 {
        entropy(self.row(s))
    }

    fn same_shape(&self, other: &Self) -> Result<()> {
        if self.n_states != other.n_states || self.n_actions != other.n_actions {
            return Err(Error::Shape(format!(
                "policies are {}x{} and {}x{}",
                self.n_states, self.n_actions, other.n_states, other.n_actions
            )));
        }
        Ok(())
    }

    fn compatible(&self, mdp: &TabularMdp) -> Result<()> {
        if self.n_states != mdp.n_states || self.n_actions != mdp.n_actions {
            return Err(Error::Shape(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.n_states, self.n_actions, mdp.n_states, mdp.n_actions
            )));
        }
        Ok(())
    }
}

/// Discounted state-visitation vector, normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyMeasure {
    rho: Vec<f64>,
}

impl OccupancyMeasure {
    pub fn new(rho: Vec<f64>) -> Result<Self> {
        if rho.iter().any(|&x| x < 0.0) {
            return Err(Error::Invalid {
                what: "occupancy measure",
                why: "negative entry".into(),
            });
        }
        let sum: f64 = rho.iter().sum();
        if (sum - 1.0).abs() > OCC_SUM_TOL {
            return Err(Error::Invalid {
                what: "occupancy measure",
                why: format!("sums to {sum}, not 1"),
            });
        }
        Ok(Self { rho })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `||rho - other||_1`.
    pub fn l1_distance(&self, other: &OccupancyMeasure) -> f64 {
        l1_diff(&self.rho, &other.rho)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn l1_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Shannon entropy in nats with the `0 ln 0 = 0` convention.
pub fn entropy(probs: &[f64]) -> f64 {
    probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.ln())
        .sum()
}

/// Policy-conditioned state transition matrix `P_pi(s -> s') = sum_a pi(a|s) T(s'|s,a)`,
/// stored `[s][s']` row-major.
pub(crate) fn policy_transition(mdp: &TabularMdp, policy: &StochasticPolicy) -> Vec<f64> {
    let n = mdp.n_states;
    let mut p = vec![0.0; n * n];
    for s in 0..n {
        let pi_row = policy.row(s);
        for a in 0..mdp.n_actions {
            let w = pi_row[a];
            if w == 0.0 {
                continue;
            }
            let t_row = mdp.transitions.row(s, a);
            for s2 in 0..n {
                p[s * n + s2] += w * t_row[s2];
            }
        }
    }
    p
}

/// Discounted state occupancy of `policy` in `mdp`, by fixed-point propagation
/// of the Bellman flow map from `rho_0 = (1 - gamma) p0`.
///
/// Stops once the sup-norm change drops to `tol` and the mass deficit
/// `gamma^(k+1)` is small enough for the sum-to-one invariant to hold.
pub fn state_occupancy(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    tol: f64,
) -> Result<OccupancyMeasure> {
    state_occupancy_capped(mdp, policy, tol, DEFAULT_MAX_ITERS)
}

pub fn state_occupancy_capped(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    tol: f64,
    max_iters: usize,
) -> Result<OccupancyMeasure> {
    policy.compatible(mdp)?;
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    let n = mdp.n_states;
    let gamma = mdp.gamma;
    let p_pi = policy_transition(mdp, policy);
    let base: Vec<f64> = mdp.p0.iter().map(|&p| (1.0 - gamma) * p).collect();
    let mut rho = base.clone();
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        for (s2, out) in next.iter_mut().enumerate() {
            let mut acc = 0.0;
            for s in 0..n {
                acc += rho[s] * p_pi[s * n + s2];
            }
            *out = base[s2] + gamma * acc;
        }
        residual = rho
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut rho, &mut next);
        let mass_gap = (1.0 - rho.iter().sum::<f64>()).abs();
        if residual <= tol && mass_gap <= OCC_SUM_TOL / 4.0 {
            return OccupancyMeasure::new(rho);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        residual,
    })
}

/// Sup-norm Bellman-flow residual of `(policy, rho)` in `mdp`.
pub fn flow_residual(
    mdp: &TabularMdp,
    policy: &StochasticPolicy,
    rho: &OccupancyMeasure,
) -> Result<f64> {
    policy.compatible(mdp)?;
    if rho.len() != mdp.n_states {
        return Err(Error::Shape(format!(
            "occupancy of length {} against {} states",
            rho.len(),
            mdp.n_states
        )));
    }
    let n = mdp.n_states;
    let p_pi = policy_transition(mdp, policy);
    let r = rho.as_slice();
    let mut worst = 0.0f64;
    for s2 in 0..n {
        let mut acc = 0.0;
        for s in 0..n {
            acc += r[s] * p_pi[s * n + s2];
        }
        let res = (r[s2] - (1.0 - mdp.gamma) * mdp.p0[s2] - mdp.gamma * acc).abs();
        worst = worst.max(res);
    }
    Ok(worst)
}

/// `d_dyn(T, T') = max_{s,a} ||T(.|s,a) - T'(.|s,a)||_1`, bounded by 2.
pub fn dyn_distance(t1: &Transitions, t2: &Transitions) -> Result<f64> {
    t1.same_shape(t2)?;
    let mut worst = 0.0f64;
    for s in 0..t1.n_states() {
        for a in 0..t1.n_actions() {
            worst = worst.max(l1_diff(t1.row(s, a), t2.row(s, a)));
        }
    }
    Ok(worst)
}

/// `d_pol(pi, pi') = max_s ||pi(.|s) - pi'(.|s)||_1`, bounded by 2.
pub fn pol_distance(p1: &StochasticPolicy, p2: &StochasticPolicy) -> Result<f64> {
    p1.same_shape(p2)?;
    let mut worst = 0.0f64;
    for s in 0..p1.n_states() {
        worst = worst.max(l1_diff(p1.row(s), p2.row(s)));
    }
    Ok(worst)
}

/// Convex combination `(1 - eps) t_ref + eps t_bar` of two transition tensors.
pub fn mix_dynamics(t_ref: &Transitions, t_bar: &Transitions, eps: f64) -> Result<Transitions> {
    t_ref.same_shape(t_bar)?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!(
            "mixing weight must lie in [0,1], got {eps}"
        )));
    }
    let data = t_ref
        .data
        .iter()
        .zip(&t_bar.data)
        .map(|(&a, &b)| (1.0 - eps) * a + eps * b)
        .collect();
    Transitions::new(t_ref.n_states(), t_ref.n_actions(), data)
}

/// Convex combination `alpha p_pl + (1 - alpha) p_op` of two policies.
pub fn mix_policies(
    p_pl: &StochasticPolicy,
    p_op: &StochasticPolicy,
    alpha: f64,
) -> Result<StochasticPolicy> {
    p_pl.same_shape(p_op)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "mixing weight must lie in [0,1], got {alpha}"
        )));
    }
    let probs = p_pl
        .probs
        .iter()
        .zip(&p_op.probs)
        .map(|(&a, &b)| alpha * a + (1.0 - alpha) * b)
        .collect();
    StochasticPolicy::new(p_pl.n_states(), p_pl.n_actions(), probs)
}

/// Expected discounted return `<R, rho> / (1 - gamma)` of `policy` in `mdp`.
pub fn expected_return(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<f64> {
    let reward = mdp.reward()?;
    let rho = state_occupancy(mdp, policy, DEFAULT_OCC_TOL)?;
    Ok(return_from_occupancy(&reward.values(), &rho, mdp.gamma))
}

/// Return as a linear functional of the occupancy alone.
pub fn return_from_occupancy(reward_values: &[f64], rho: &OccupancyMeasure, gamma: f64) -> f64 {
    dot(reward_values, rho.as_slice()) / (1.0 - gamma)
}

/// Entropy-regularized return `(1/(1-gamma)) sum_s rho(s) [R(s) + H(pi(.|s))]`.
pub fn soft_return(mdp: &TabularMdp, policy: &StochasticPolicy) -> Result<f64> {
    let reward = mdp.reward()?;
    policy.compatible(mdp)?;
    let rho = state_occupancy(mdp, policy, DEFAULT_OCC_TOL)?;
    let values = reward.values();
    let total: f64 = rho
        .as_slice()
        .iter()
        .enumerate()
        .map(|(s, &r)| r * (values[s] + policy.entropy(s)))
        .sum();
    Ok(total / (1.0 - mdp.gamma))
}

// JSON schema for MDP interchange: probabilities as IEEE-754 doubles, no
// renormalization on load; invalid input is rejected by the validating
// constructors.
#[derive(Serialize, Deserialize)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    p0: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
    reward: Option<RewardJson>,
}

#[derive(Serialize, Deserialize)]
struct RewardJson {
    features: Vec<Vec<f64>>,
    theta: Vec<f64>,
}

impl From<&TabularMdp> for MdpJson {
    fn from(m: &TabularMdp) -> Self {
        let transitions = (0..m.n_states)
            .map(|s| {
                (0..m.n_actions)
                    .map(|a| m.transitions.row(s, a).to_vec())
                    .collect()
            })
            .collect();
        let reward = m.reward.as_ref().map(|r| RewardJson {
            features: (0..m.n_states)
                .map(|s| r.features.row(s).to_vec())
                .collect(),
            theta: r.theta.clone(),
        });
        MdpJson {
            n_states: m.n_states,
            n_actions: m.n_actions,
            gamma: m.gamma,
            p0: m.p0.clone(),
            transitions,
            reward,
        }
    }
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;

    fn try_from(raw: MdpJson) -> Result<Self> {
        if raw.transitions.len() != raw.n_states {
            return Err(Error::Shape(
                "transition outer dimension != n_states".into(),
            ));
        }
        let mut data = Vec::with_capacity(raw.n_states * raw.n_actions * raw.n_states);
        for per_state in &raw.transitions {
            if per_state.len() != raw.n_actions {
                return Err(Error::Shape(
                    "transition action dimension != n_actions".into(),
                ));
            }
            for row in per_state {
                if row.len() != raw.n_states {
                    return Err(Error::Shape("transition row length != n_states".into()));
                }
                data.extend_from_slice(row);
            }
        }
        let transitions = Transitions::new(raw.n_states, raw.n_actions, data)?;
        let reward = match raw.reward {
            None => None,
            Some(r) => {
                let dim = r.theta.len();
                let mut fdata = Vec::with_capacity(raw.n_states * dim);
                if r.features.len() != raw.n_states {
                    return Err(Error::Shape("feature rows != n_states".into()));
                }
                for row in &r.features {
                    if row.len() != dim {
                        return Err(Error::Shape("feature row length != theta length".into()));
                    }
                    fdata.extend_from_slice(row);
                }
                Some(RewardModel::new(
                    FeatureMatrix::new(raw.n_states, dim, fdata)?,
                    r.theta,
                )?)
            }
        };
        TabularMdp::new(transitions, raw.gamma, raw.p0, reward)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_constructive;

    fn single_state_mdp(gamma: f64) -> TabularMdp {
        let t = Transitions::new(1, 1, vec![1.0]).unwrap();
        TabularMdp::new(t, gamma, vec![1.0], Some(RewardModel::tabular(vec![0.0]))).unwrap()
    }

    fn two_state_chain(gamma: f64) -> TabularMdp {
        // Symmetric chain: each action deterministically swaps the state.
        let t = Transitions::from_fn(2, 2, |s2, s, _a| if s2 != s { 1.0 } else { 0.0 }).unwrap();
        TabularMdp::new(t, gamma, vec![0.5, 0.5], None).unwrap()
    }

    #[test]
    fn occupancy_single_state_is_one() {
        let mdp = single_state_mdp(0.7);
        let pi = StochasticPolicy::uniform(1, 1);
        let rho = state_occupancy(&mdp, &pi, 1e-10).unwrap();
        assert!((rho.as_slice()[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn occupancy_constructive_closed_form() {
        let mdp = make_constructive(0.1).unwrap();
        let pi = StochasticPolicy::deterministic(2, &[0, 0, 0]).unwrap();
        let rho = state_occupancy(&mdp, &pi, 1e-12).unwrap();
        let r = rho.as_slice();
        assert!((r[0] - 0.01).abs() < 1e-9, "rho(s0)={}", r[0]);
        assert!((r[1] - 0.891).abs() < 1e-9, "rho(s1)={}", r[1]);
        assert!((r[2] - 0.099).abs() < 1e-9, "rho(s2)={}", r[2]);
    }

    /// Independent oracle: solve the Bellman-flow linear system exactly.
    fn occupancy_linear_solve(mdp: &TabularMdp, policy: &StochasticPolicy) -> Vec<f64> {
        let n = mdp.n_states;
        let p_pi = policy_transition(mdp, policy);
        // (I - gamma P_pi^T) rho = (1 - gamma) p0
        let mut a = nalgebra::DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = if i == j { 1.0 } else { 0.0 } - mdp.gamma * p_pi[j * n + i];
            }
        }
        let b = nalgebra::DVector::from_iterator(n, mdp.p0.iter().map(|&p| (1.0 - mdp.gamma) * p));
        let x = a.lu().solve(&b).expect("flow system is nonsingular");
        x.iter().copied().collect()
    }

    #[test]
    fn occupancy_matches_linear_solve_on_chain() {
        let mdp = two_state_chain(0.5);
        let pi = StochasticPolicy::uniform(2, 2);
        let rho = state_occupancy(&mdp, &pi, 1e-12).unwrap();
        let exact = occupancy_linear_solve(&mdp, &pi);
        for (got, want) in rho.as_slice().iter().zip(&exact) {
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn occupancy_matches_linear_solve_on_random_mdps() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for trial in 0..20 {
            let n = rng.gen_range(2..=20);
            let m = rng.gen_range(1..=4);
            let mdp = random_mdp(&mut rng, n, m, 0.9);
            let pi = random_policy(&mut rng, n, m);
            let tol = 1e-10;
            let rho = state_occupancy(&mdp, &pi, tol).unwrap();
            let exact = occupancy_linear_solve(&mdp, &pi);
            for (got, want) in rho.as_slice().iter().zip(&exact) {
                assert!(
                    (got - want).abs() < 10.0 * tol,
                    "trial {trial}: {got} vs {want}"
                );
            }
            assert!(flow_residual(&mdp, &pi, &rho).unwrap() < 1e-9);
        }
    }

    #[test]
    fn occupancy_iteration_cap_errors() {
        let mdp = two_state_chain(0.99);
        let pi = StochasticPolicy::uniform(2, 2);
        let err = state_occupancy_capped(&mdp, &pi, 1e-12, 5).unwrap_err();
        match err {
            Error::NoConvergence {
                iterations,
                residual,
            } => {
                assert_eq!(iterations, 5);
                assert!(residual > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    use crate::test_support::{random_mdp, random_policy};

    #[test]
    fn dyn_distance_identity_and_oracle() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = random_mdp(&mut rng, 3, 2, 0.9);
        assert_eq!(dyn_distance(&a.transitions, &a.transitions).unwrap(), 0.0);
        let b = random_mdp(&mut rng, 3, 2, 0.9);
        // naive triple-loop oracle
        let mut want = 0.0f64;
        for s in 0..3 {
            for act in 0..2 {
                let mut acc = 0.0;
                for s2 in 0..3 {
                    acc += (a.transitions.prob(s2, s, act) - b.transitions.prob(s2, s, act)).abs();
                }
                if acc > want {
                    want = acc;
                }
            }
        }
        let got = dyn_distance(&a.transitions, &b.transitions).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!(got <= 2.0);
    }

    #[test]
    fn dyn_distance_shape_error() {
        let a = single_state_mdp(0.5);
        let b = two_state_chain(0.5);
        assert!(matches!(
            dyn_distance(&a.transitions, &b.transitions),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn pol_distance_cases() {
        use rand::SeedableRng;
        let p = StochasticPolicy::deterministic(2, &[0, 1]).unwrap();
        assert_eq!(pol_distance(&p, &p).unwrap(), 0.0);
        let q = StochasticPolicy::deterministic(2, &[1, 1]).unwrap();
        assert_eq!(pol_distance(&p, &q).unwrap(), 2.0);

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let a = random_policy(&mut rng, 4, 3);
        let b = random_policy(&mut rng, 4, 3);
        let mut want = 0.0f64;
        for s in 0..4 {
            let acc: f64 = (0..3).map(|x| (a.prob(x, s) - b.prob(x, s)).abs()).sum();
            want = want.max(acc);
        }
        assert!((pol_distance(&a, &b).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn distances_are_metrics_on_samples() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(19);
        for _ in 0..20 {
            let a = random_mdp(&mut rng, 4, 2, 0.9).transitions;
            let b = random_mdp(&mut rng, 4, 2, 0.9).transitions;
            let c = random_mdp(&mut rng, 4, 2, 0.9).transitions;
            let ab = dyn_distance(&a, &b).unwrap();
            let ba = dyn_distance(&b, &a).unwrap();
            let bc = dyn_distance(&b, &c).unwrap();
            let ac = dyn_distance(&a, &c).unwrap();
            assert_eq!(ab, ba);
            assert!(ac <= ab + bc + 1e-12);
            assert!(ab <= 2.0);
        }
    }

    #[test]
    fn mix_dynamics_cases() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let a = random_mdp(&mut rng, 2, 2, 0.9).transitions;
        let b = random_mdp(&mut rng, 2, 2, 0.9).transitions;
        assert_eq!(mix_dynamics(&a, &b, 0.0).unwrap(), a);
        assert_eq!(mix_dynamics(&a, &b, 1.0).unwrap(), b);
        let m = mix_dynamics(&a, &b, 0.3).unwrap();
        for s in 0..2 {
            for act in 0..2 {
                for s2 in 0..2 {
                    let want = 0.7 * a.prob(s2, s, act) + 0.3 * b.prob(s2, s, act);
                    assert!((m.prob(s2, s, act) - want).abs() < 1e-15);
                }
            }
        }
        assert!(matches!(mix_dynamics(&a, &b, 1.5), Err(Error::Domain(_))));
    }

    #[test]
    fn mix_policies_cases() {
        let pl = StochasticPolicy::deterministic(2, &[0]).unwrap();
        let op = StochasticPolicy::deterministic(2, &[1]).unwrap();
        assert_eq!(mix_policies(&pl, &op, 1.0).unwrap(), pl);
        assert_eq!(mix_policies(&pl, &op, 0.0).unwrap(), op);
        let m = mix_policies(&pl, &op, 0.9).unwrap();
        assert!((m.prob(0, 0) - 0.9).abs() < 1e-15);
        assert!((m.prob(1, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn expected_return_constructive_closed_form() {
        let mdp = make_constructive(0.1).unwrap();
        let expert = StochasticPolicy::deterministic(2, &[0, 0, 0]).unwrap();
        let v = expected_return(&mdp, &expert).unwrap();
        assert!((v - 79.2).abs() < 1e-6, "got {v}");
    }

    #[test]
    fn expected_return_zero_reward() {
        let mdp = two_state_chain(0.5)
            .with_reward(RewardModel::tabular(vec![0.0, 0.0]))
            .unwrap();
        let v = expected_return(&mdp, &StochasticPolicy::uniform(2, 2)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn expected_return_missing_reward() {
        let mdp = two_state_chain(0.5);
        assert!(matches!(
            expected_return(&mdp, &StochasticPolicy::uniform(2, 2)),
            Err(Error::MissingReward)
        ));
    }

    #[test]
    fn expected_return_matches_monte_carlo() {
        use rand::prelude::*;
        let mdp = two_state_chain(0.9)
            .with_reward(RewardModel::tabular(vec![1.0, -0.5]))
            .unwrap();
        let pi = StochasticPolicy::new(2, 2, vec![0.7, 0.3, 0.2, 0.8]).unwrap();
        let exact = expected_return(&mdp, &pi).unwrap();

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let n_rollouts = 100_000;
        let horizon = 1000;
        let rewards = mdp.reward().unwrap().values();
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n_rollouts {
            let mut s = if rng.gen::<f64>() < mdp.p0[0] { 0 } else { 1 };
            let mut ret = 0.0;
            let mut disc = 1.0;
            for _ in 0..horizon {
                ret += disc * rewards[s];
                disc *= mdp.gamma;
                let a = if rng.gen::<f64>() < pi.prob(0, s) {
                    0
                } else {
                    1
                };
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut next = mdp.n_states - 1;
                for s2 in 0..mdp.n_states {
                    acc += mdp.transitions.prob(s2, s, a);
                    if u < acc {
                        next = s2;
                        break;
                    }
                }
                s = next;
            }
            sum += ret;
            sumsq += ret * ret;
        }
        let mean = sum / n_rollouts as f64;
        let var = (sumsq / n_rollouts as f64 - mean * mean).max(0.0);
        let se = (var / n_rollouts as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * se + 1e-6,
            "MC mean {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn soft_return_single_state_uniform() {
        let t = Transitions::new(1, 2, vec![1.0, 1.0]).unwrap();
        let mdp =
            TabularMdp::new(t, 0.5, vec![1.0], Some(RewardModel::tabular(vec![0.0]))).unwrap();
        let v = soft_return(&mdp, &StochasticPolicy::uniform(1, 2)).unwrap();
        assert!((v - 1.3862943611198906).abs() < 1e-9);
    }

    #[test]
    fn soft_return_deterministic_equals_expected() {
        let mdp = make_constructive(0.2).unwrap();
        let pi = StochasticPolicy::deterministic(2, &[0, 1, 0]).unwrap();
        let hard = expected_return(&mdp, &pi).unwrap();
        let soft = soft_return(&mdp, &pi).unwrap();
        assert!((hard - soft).abs() < 1e-12);
    }

    #[test]
    fn return_is_functional_of_occupancy_only() {
        // Policies that differ only inside absorbing states share an occupancy.
        let mdp = make_constructive(0.3).unwrap();
        let a = StochasticPolicy::new(3, 2, vec![0.6, 0.4, 1.0, 0.0, 0.3, 0.7]).unwrap();
        let b = StochasticPolicy::new(3, 2, vec![0.6, 0.4, 0.2, 0.8, 0.9, 0.1]).unwrap();
        let rho_a = state_occupancy(&mdp, &a, 1e-12).unwrap();
        let rho_b = state_occupancy(&mdp, &b, 1e-12).unwrap();
        assert!(rho_a.l1_distance(&rho_b) < 1e-10);
        let va = expected_return(&mdp, &a).unwrap();
        let vb = expected_return(&mdp, &b).unwrap();
        assert!((va - vb).abs() < 1e-9);
    }

    #[test]
    fn mdp_json_round_trip_and_rejection() {
        let mdp = make_constructive(0.25).unwrap();
        let text = mdp.to_json();
        let back = TabularMdp::from_json(&text).unwrap();
        assert_eq!(mdp, back);

        // Broken row must be rejected, not renormalized.
        let bad = text.replace("1.0", "0.9");
        assert!(TabularMdp::from_json(&bad).is_err());
    }

    #[test]
    fn entropy_zero_log_zero() {
        assert_eq!(entropy(&[1.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5]) - std::f64::consts::LN_2).abs() < 1e-15);
    }
}
