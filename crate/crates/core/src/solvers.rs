//! Exact dynamic-programming solvers: hard value iteration, soft (entropy
//! regularized) value iteration, and the saddle-point value iteration for the
//! two-player zero-sum game with composite dynamics
//! `T_two(s'|s,apl,aop) = alpha T(s'|s,apl) + (1-alpha) T(s'|s,aop)`.

use crate::error::{Error, Result};
use crate::mdp::{StochasticPolicy, TabularMdp, Transitions, DEFAULT_MAX_ITERS};

/// Solution of the soft Bellman optimality equations.
#[derive(Debug, Clone)]
pub struct SoftSolution {
    pub v_soft: Vec<f64>,
    /// `Q(s,a)`, row-major `[s][a]`.
    pub q_soft: Vec<f64>,
    pub policy: StochasticPolicy,
}

impl SoftSolution {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_soft[s * self.policy.n_actions() + a]
    }
}

/// Solution of the (hard) Bellman optimality equations.
#[derive(Debug, Clone)]
pub struct HardSolution {
    pub v_star: Vec<f64>,
    /// `Q(s,a)`, row-major `[s][a]`.
    pub q_star: Vec<f64>,
    /// Greedy policy with deterministic lowest-index tie-breaking.
    pub policy: StochasticPolicy,
}

impl HardSolution {
    pub fn q(&self, s: usize, a: usize) -> f64 {
        self.q_star[s * self.policy.n_actions() + a]
    }

    pub fn greedy_actions(&self) -> Vec<usize> {
        (0..self.policy.n_states())
            .map(|s| {
                self.policy
                    .row(s)
                    .iter()
                    .position(|&p| p == 1.0)
                    .expect("greedy policy row is a point mass")
            })
            .collect()
    }
}

/// Saddle point of the two-player game: soft-max player, greedy opponent.
#[derive(Debug, Clone)]
pub struct TwoPlayerSolution {
    /// Joint `Q(s, a_pl, a_op)`, row-major `[s][a_pl][a_op]`.
    pub joint_q: Vec<f64>,
    pub v: Vec<f64>,
    pub player: StochasticPolicy,
    /// Deterministic, greedy w.r.t. `Q_op(s, a_op) = lse_pl Q(s, ., a_op)`.
    pub opponent: StochasticPolicy,
}

impl TwoPlayerSolution {
    pub fn joint(&self, s: usize, a_pl: usize, a_op: usize) -> f64 {
        let m = self.player.n_actions();
        self.joint_q[(s * m + a_pl) * m + a_op]
    }

    /// `Q_pl(s, a_pl) = min_op Q(s, a_pl, a_op)`.
    pub fn player_q(&self, s: usize, a_pl: usize) -> f64 {
        let m = self.player.n_actions();
        (0..m)
            .map(|a_op| self.joint(s, a_pl, a_op))
            .fold(f64::INFINITY, f64::min)
    }

    /// `Q_op(s, a_op) = lse_pl Q(s, a_pl, a_op)`.
    pub fn opponent_q(&self, s: usize, a_op: usize) -> f64 {
        let m = self.player.n_actions();
        let col: Vec<f64> = (0..m).map(|a_pl| self.joint(s, a_pl, a_op)).collect();
        logsumexp(&col)
    }
}

/// Composite two-player transition tensor, laid out `[s][a_pl][a_op][s']`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPlayerTransitions {
    n_states: usize,
    n_actions: usize,
    data: Vec<f64>,
}

impl TwoPlayerTransitions {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    #[inline]
    pub fn row(&self, s: usize, a_pl: usize, a_op: usize) -> &[f64] {
        let m = self.n_actions;
        let base = ((s * m + a_pl) * m + a_op) * self.n_states;
        &self.data[base..base + self.n_states]
    }

    pub fn prob(&self, s_next: usize, s: usize, a_pl: usize, a_op: usize) -> f64 {
        self.row(s, a_pl, a_op)[s_next]
    }
}

/// Log-sum-exp with max subtraction.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Normalized softmax with max subtraction, written into `out`.
fn softmax_into(xs: &[f64], out: &mut [f64]) {
    let m = xs.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(xs) {
        *o = (x - m).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(())
}

/// `tv[s][a] = sum_s' T(s'|s,a) v[s']`, the one-step expectation table.
fn expectation_table(t: &Transitions, v: &[f64], tv: &mut [f64]) {
    let n = t.n_states();
    let m = t.n_actions();
    for s in 0..n {
        for a in 0..m {
            tv[s * m + a] = crate::mdp::dot(t.row(s, a), v);
        }
    }
}

/// Hard value iteration. Greedy ties break to the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> Result<HardSolution> {
    value_iteration_capped(mdp, tol, DEFAULT_MAX_ITERS)
}

pub fn value_iteration_capped(
    mdp: &TabularMdp,
    tol: f64,
    max_iters: usize,
) -> Result<HardSolution> {
    check_tol(tol)?;
    let rewards = mdp.reward()?.values();
    let n = mdp.n_states;
    let m = mdp.n_actions;
    let gamma = mdp.gamma;
    let mut v = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut tv = vec![0.0; n * m];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        expectation_table(&mdp.transitions, &v, &mut tv);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m {
                let q = rewards[s] + gamma * tv[s * m + a];
                if q > best {
                    best = q;
                }
            }
            v_new[s] = best;
        }
        residual = v
            .iter()
            .zip(&v_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut v_new);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_iters,
            residual,
        });
    }
    let mut q_star = vec![0.0; n * m];
    expectation_table(&mdp.transitions, &v, &mut tv);
    let mut actions = vec![0usize; n];
    let mut v_out = vec![0.0; n];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        let mut best_a = 0;
        for a in 0..m {
            let q = rewards[s] + gamma * tv[s * m + a];
            q_star[s * m + a] = q;
            if q > best {
                best = q;
                best_a = a;
            }
        }
        actions[s] = best_a;
        v_out[s] = best;
    }
    Ok(HardSolution {
        v_star: v_out,
        q_star,
        policy: StochasticPolicy::deterministic(m, &actions)?,
    })
}

/// Soft value iteration: the fixed point of
/// `V(s) = lse_a [ R(s) + gamma sum_s' T(s'|s,a) V(s') ]`.
pub fn soft_value_iteration(mdp: &TabularMdp, tol: f64) -> Result<SoftSolution> {
    soft_value_iteration_capped(mdp, tol, DEFAULT_MAX_ITERS)
}

pub fn soft_value_iteration_capped(
    mdp: &TabularMdp,
    tol: f64,
    max_iters: usize,
) -> Result<SoftSolution> {
    check_tol(tol)?;
    let rewards = mdp.reward()?.values();
    soft_vi_inner(mdp, &rewards, tol, max_iters)
}

/// Soft VI against explicit reward values (the IRL loop re-solves under a
/// changing theta without rebuilding the MDP).
pub(crate) fn soft_vi_inner(
    mdp: &TabularMdp,
    rewards: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<SoftSolution> {
    let n = mdp.n_states;
    let m = mdp.n_actions;
    let gamma = mdp.gamma;
    let mut v = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut tv = vec![0.0; n * m];
    let mut q_row = vec![0.0; m];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        expectation_table(&mdp.transitions, &v, &mut tv);
        for s in 0..n {
            for a in 0..m {
                q_row[a] = rewards[s] + gamma * tv[s * m + a];
            }
            v_new[s] = logsumexp(&q_row);
        }
        residual = v
            .iter()
            .zip(&v_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut v_new);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_iters,
            residual,
        });
    }
    // One more backup from the converged V keeps (V, Q, pi) mutually consistent.
    let mut q_soft = vec![0.0; n * m];
    let mut probs = vec![0.0; n * m];
    let mut v_out = vec![0.0; n];
    expectation_table(&mdp.transitions, &v, &mut tv);
    for s in 0..n {
        for a in 0..m {
            q_soft[s * m + a] = rewards[s] + gamma * tv[s * m + a];
        }
        let row = &q_soft[s * m..(s + 1) * m];
        v_out[s] = logsumexp(row);
        softmax_into(row, &mut probs[s * m..(s + 1) * m]);
    }
    Ok(SoftSolution {
        v_soft: v_out,
        q_soft,
        policy: StochasticPolicy::new(n, m, probs)?,
    })
}

/// Composite dynamics where the opponent's action is executed with
/// probability `1 - alpha`.
pub fn two_player_transition(mdp: &TabularMdp, alpha: f64) -> Result<TwoPlayerTransitions> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    let n = mdp.n_states;
    let m = mdp.n_actions;
    let mut data = vec![0.0; n * m * m * n];
    for s in 0..n {
        for a_pl in 0..m {
            let pl_row = mdp.transitions.row(s, a_pl);
            for a_op in 0..m {
                let op_row = mdp.transitions.row(s, a_op);
                let base = ((s * m + a_pl) * m + a_op) * n;
                for s2 in 0..n {
                    data[base + s2] = alpha * pl_row[s2] + (1.0 - alpha) * op_row[s2];
                }
            }
        }
    }
    Ok(TwoPlayerTransitions {
        n_states: n,
        n_actions: m,
        data,
    })
}

/// Two-player soft value iteration:
/// `V(s) = lse_pl [ min_op Q(s, a_pl, a_op) ]` with
/// `Q(s,a_pl,a_op) = R(s) + gamma sum_s' T_two(s'|s,a_pl,a_op) V(s')`.
///
/// Ties in the opponent's argmin break to the lowest action index.
pub fn two_player_soft_vi(mdp: &TabularMdp, alpha: f64, tol: f64) -> Result<TwoPlayerSolution> {
    two_player_soft_vi_capped(mdp, alpha, tol, DEFAULT_MAX_ITERS)
}

pub fn two_player_soft_vi_capped(
    mdp: &TabularMdp,
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<TwoPlayerSolution> {
    check_tol(tol)?;
    let rewards = mdp.reward()?.values();
    two_player_soft_vi_inner(mdp, &rewards, alpha, tol, max_iters)
}

pub(crate) fn two_player_soft_vi_inner(
    mdp: &TabularMdp,
    rewards: &[f64],
    alpha: f64,
    tol: f64,
    max_iters: usize,
) -> Result<TwoPlayerSolution> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!(
            "alpha must lie in [0,1], got {alpha}"
        )));
    }
    let n = mdp.n_states;
    let m = mdp.n_actions;
    let gamma = mdp.gamma;
    let mut v = vec![0.0; n];
    let mut v_new = vec![0.0; n];
    let mut tv = vec![0.0; n * m];
    let mut q_pl_row = vec![0.0; m];
    let mut converged = false;
    let mut residual = f64::INFINITY;
    // Because the opponent enters Q only through (1 - alpha) tv(s, a_op),
    // min_op Q picks the opponent action with the smallest expectation; the
    // joint tensor never needs materializing inside the loop.
    for _ in 0..max_iters {
        expectation_table(&mdp.transitions, &v, &mut tv);
        for s in 0..n {
            let row = &tv[s * m..(s + 1) * m];
            let tv_min = row.iter().fold(f64::INFINITY, |a, &b| a.min(b));
            for a_pl in 0..m {
                q_pl_row[a_pl] = rewards[s] + gamma * (alpha * row[a_pl] + (1.0 - alpha) * tv_min);
            }
            v_new[s] = logsumexp(&q_pl_row);
        }
        residual = v
            .iter()
            .zip(&v_new)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut v, &mut v_new);
        if residual <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            iterations: max_iters,
            residual,
        });
    }

    // Materialize the joint Q from the converged V and extract both policies.
    expectation_table(&mdp.transitions, &v, &mut tv);
    let mut joint_q = vec![0.0; n * m * m];
    let mut player_probs = vec![0.0; n * m];
    let mut opponent_actions = vec![0usize; n];
    let mut v_out = vec![0.0; n];
    let mut q_op_row = vec![0.0; m];
    for s in 0..n {
        let row = &tv[s * m..(s + 1) * m];
        for a_pl in 0..m {
            for a_op in 0..m {
                joint_q[(s * m + a_pl) * m + a_op] =
                    rewards[s] + gamma * (alpha * row[a_pl] + (1.0 - alpha) * row[a_op]);
            }
        }
        for (a_pl, q) in q_pl_row.iter_mut().enumerate() {
            let base = (s * m + a_pl) * m;
            *q = joint_q[base..base + m]
                .iter()
                .fold(f64::INFINITY, |a, &b| a.min(b));
        }
        v_out[s] = logsumexp(&q_pl_row);
        softmax_into(&q_pl_row, &mut player_probs[s * m..(s + 1) * m]);
        for (a_op, q) in q_op_row.iter_mut().enumerate() {
            let col: Vec<f64> = (0..m)
                .map(|a_pl| joint_q[(s * m + a_pl) * m + a_op])
                .collect();
            *q = logsumexp(&col);
        }
        let mut best = f64::INFINITY;
        let mut best_a = 0;
        for (a_op, &q) in q_op_row.iter().enumerate() {
            if q < best {
                best = q;
                best_a = a_op;
            }
        }
        opponent_actions[s] = best_a;
    }
    Ok(TwoPlayerSolution {
        joint_q,
        v: v_out,
        player: StochasticPolicy::new(n, m, player_probs)?,
        opponent: StochasticPolicy::deterministic(m, &opponent_actions)?,
    })
}
