//! Existence test for occupancy matching: stack the Bellman-flow constraints
//! and the per-state policy-normalization constraints into a linear system
//! `T pi = v` over the flattened policy vector, then compare matrix ranks
//! (Rouché-Capelli). A minimum-norm least-squares witness is also produced so
//! feasible verdicts come with a concrete matching policy.
//!
//! Flow rows carry the discount factor: row `s` of the system reads
//! `gamma * sum_{s',a'} rho(s') T(s|s',a') pi(a'|s') = rho(s) - (1-gamma) p0(s)`,
//! which is exactly the Bellman flow constraint rearranged. Columns are
//! state-major: column index `s' * |A| + a'`.

use crate::error::{Error, Result};
use crate::mdp::{OccupancyMeasure, StochasticPolicy, TabularMdp};

/// Dense row-major matrix, just big enough for the flow systems here.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, x: f64) {
        self.data[r * self.cols + c] = x;
    }

    /// Appends `v` as an extra column.
    pub fn augment(&self, v: &[f64]) -> Matrix {
        assert_eq!(v.len(), self.rows);
        let mut out = Matrix::zeros(self.rows, self.cols + 1);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(r, c, self.get(r, c));
            }
            out.set(r, self.cols, v[r]);
        }
        out
    }
}

/// The stacked linear system for occupancy matching, with the rank verdict
/// filled in by [`check_feasibility`].
#[derive(Debug, Clone)]
pub struct FlowSystem {
    /// `2|S| x |S||A|`: flow rows (with the discount factor) over the
    /// normalization rows.
    pub t_matrix: Matrix,
    /// Length `2|S|`: `rho(s) - (1-gamma) p0(s)` then all ones.
    pub v_vector: Vec<f64>,
    pub rank_t: Option<usize>,
    pub rank_augmented: Option<usize>,
    pub feasible: Option<bool>,
    /// Corollary sufficient condition: `rank_t == 2|S|`.
    pub full_rank: Option<bool>,
}

/// Builds the flow matrix and right-hand side without computing ranks.
pub fn build_flow_system(learner: &TabularMdp, rho: &OccupancyMeasure) -> Result<FlowSystem> {
    let n = learner.n_states;
    let m = learner.n_actions;
    if rho.len() != n {
        return Err(Error::Shape(format!(
            "occupancy has {} entries, MDP has {n} states",
            rho.len()
        )));
    }
    let r = rho.as_slice();
    let gamma = learner.gamma;
    let mut t = Matrix::zeros(2 * n, n * m);
    for s in 0..n {
        for s2 in 0..n {
            for a in 0..m {
                t.set(
                    s,
                    s2 * m + a,
                    gamma * r[s2] * learner.transitions.prob(s, s2, a),
                );
            }
        }
    }
    for s2 in 0..n {
        for a in 0..m {
            t.set(n + s2, s2 * m + a, 1.0);
        }
    }
    let mut v = Vec::with_capacity(2 * n);
    for s in 0..n {
        v.push(r[s] - (1.0 - gamma) * learner.p0[s]);
    }
    v.extend(std::iter::repeat_n(1.0, n));
    Ok(FlowSystem {
        t_matrix: t,
        v_vector: v,
        rank_t: None,
        rank_augmented: None,
        feasible: None,
        full_rank: None,
    })
}

/// Numerical rank by row-echelon reduction with partial pivoting. A pivot
/// counts when its magnitude exceeds `rel_tol` times the largest absolute
/// entry of the original matrix.
pub fn numerical_rank(m: &Matrix, rel_tol: f64) -> Result<usize> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::Domain(format!(
            "rel_tol must lie in (0,1), got {rel_tol}"
        )));
    }
    if m.rows == 0 || m.cols == 0 {
        return Ok(0);
    }
    let scale = m.data.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()));
    let threshold = rel_tol * scale;
    let mut work = m.clone();
    let mut rank = 0;
    let mut pivot_row = 0;
    for col in 0..work.cols {
        if pivot_row >= work.rows {
            break;
        }
        // partial pivoting: largest magnitude in this column at or below pivot_row
        let mut best = pivot_row;
        for r in pivot_row + 1..work.rows {
            if work.get(r, col).abs() > work.get(best, col).abs() {
                best = r;
            }
        }
        if work.get(best, col).abs() <= threshold {
            continue;
        }
        if best != pivot_row {
            for c in 0..work.cols {
                let tmp = work.get(pivot_row, c);
                work.set(pivot_row, c, work.get(best, c));
                work.set(best, c, tmp);
            }
        }
        let pivot = work.get(pivot_row, col);
        for r in pivot_row + 1..work.rows {
            let factor = work.get(r, col) / pivot;
            if factor != 0.0 {
                for c in col..work.cols {
                    let x = work.get(r, c) - factor * work.get(pivot_row, c);
                    work.set(r, c, x);
                }
                work.set(r, col, 0.0);
            }
        }
        rank += 1;
        pivot_row += 1;
    }
    Ok(rank)
}

/// Fills the rank fields and the feasibility verdict.
pub fn check_feasibility(
    learner: &TabularMdp,
    rho: &OccupancyMeasure,
    rel_tol: f64,
) -> Result<FlowSystem> {
    let mut fs = build_flow_system(learner, rho)?;
    let rank_t = numerical_rank(&fs.t_matrix, rel_tol)?;
    let augmented = fs.t_matrix.augment(&fs.v_vector);
    let rank_aug = numerical_rank(&augmented, rel_tol)?;
    fs.rank_t = Some(rank_t);
    fs.rank_augmented = Some(rank_aug);
    fs.feasible = Some(rank_t == rank_aug);
    fs.full_rank = Some(rank_t == fs.t_matrix.rows);
    Ok(fs)
}

/// Default relative pivot threshold for the rank test.
pub const DEFAULT_RANK_TOL: f64 = 1e-9;

/// Outcome of solving `T pi = v` for a matching-policy witness.
#[derive(Debug, Clone)]
pub enum MatchingOutcome {
    Policy(StochasticPolicy),
    Infeasible(InfeasibilityReport),
}

/// Diagnostics when no valid policy witness exists.
#[derive(Debug, Clone, serde::Serialize)]
pub struct InfeasibilityReport {
    /// `||T pi_ls - v||_2` of the least-squares solution.
    pub residual: f64,
    /// Most negative entry of the least-squares solution.
    pub most_negative: f64,
}

/// Minimum-norm least-squares witness for the flow system. A solution with
/// residual at most 1e-8 and entries above -1e-9 is clamped and renormalized
/// into a policy; anything else comes back as a report.
pub fn solve_matching_policy(fs: &FlowSystem) -> Result<MatchingOutcome> {
    let rows = fs.t_matrix.rows;
    let cols = fs.t_matrix.cols;
    let n = rows / 2;
    let m = cols / n;
    let a = nalgebra::DMatrix::from_row_slice(rows, cols, &fs.t_matrix.data);
    let b = nalgebra::DVector::from_column_slice(&fs.v_vector);
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Domain(format!("svd solve failed: {e}")))?;
    let residual = (&a * &x - &b).norm();
    let most_negative = x.iter().fold(0.0f64, |acc, &v| acc.min(v));
    if residual <= 1e-8 && most_negative >= -1e-9 {
        let mut probs: Vec<f64> = x.iter().map(|&p| p.max(0.0)).collect();
        for row in probs.chunks_mut(m) {
            let sum: f64 = row.iter().sum();
            for p in row.iter_mut() {
                *p /= sum;
            }
            let s: f64 = row.iter().sum();
            row[m - 1] += 1.0 - s;
        }
        Ok(MatchingOutcome::Policy(StochasticPolicy::new(n, m, probs)?))
    } else {
        Ok(MatchingOutcome::Infeasible(InfeasibilityReport {
            residual,
            most_negative,
        }))
    }
}

/// Least-squares residual of the flow system, the independent oracle for the
/// rank verdict.
pub fn least_squares_residual(fs: &FlowSystem) -> Result<f64> {
    let a =
        nalgebra::DMatrix::from_row_slice(fs.t_matrix.rows, fs.t_matrix.cols, &fs.t_matrix.data);
    let b = nalgebra::DVector::from_column_slice(&fs.v_vector);
    let svd = a.clone().svd(true, true);
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Domain(format!("svd solve failed: {e}")))?;
    Ok((&a * &x - &b).norm())
}
