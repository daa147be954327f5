//! Benchmark environment constructors: the GridWorld family, ObjectWorld, the
//! low-dimensional GridWorld-L, and the 3-state constructive MDP with known
//! closed-form solutions.
//!
//! Grid cells are indexed row-major (`s = row * n + col`); the four actions
//! are up, down, left, right in that order. Moving off-grid keeps the agent
//! in place. Reward values for the grid presets are qualitative (goal regions
//! and penalty corridors) and are not claimed to be numerically canonical.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{mix_dynamics, FeatureMatrix, RewardModel, TabularMdp, Transitions};

pub const GRID_GAMMA: f64 = 0.99;
pub const OBJECTWORLD_GAMMA: f64 = 0.7;
pub const N_GRID_ACTIONS: usize = 4;

/// Feature parameterization attached to a grid environment.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMode {
    OneHot,
    Custom(FeatureMatrix),
}

/// Square gridworld description.
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub n: usize,
    /// Per-cell reward, `n * n` entries, row-major.
    pub reward_map: Vec<f64>,
    /// Absorbing cells (self-loop under every action).
    pub terminal_cells: Vec<usize>,
    pub feature_mode: FeatureMode,
    pub gamma: f64,
}

impl GridSpec {
    pub fn new(n: usize, reward_map: Vec<f64>) -> Result<Self> {
        if reward_map.len() != n * n {
            return Err(Error::Shape(format!(
                "reward map has {} entries for a {n}x{n} grid",
                reward_map.len()
            )));
        }
        Ok(Self {
            n,
            reward_map,
            terminal_cells: Vec::new(),
            feature_mode: FeatureMode::OneHot,
            gamma: GRID_GAMMA,
        })
    }
}

/// Deterministic cardinal-move dynamics on an `n x n` grid.
fn grid_transitions(n: usize, terminal: &[usize]) -> Transitions {
    let n_states = n * n;
    let is_terminal = {
        let mut v = vec![false; n_states];
        for &t in terminal {
            v[t] = true;
        }
        v
    };
    Transitions::from_fn(n_states, N_GRID_ACTIONS, |s2, s, a| {
        let target = if is_terminal[s] {
            s
        } else {
            let (r, c) = (s / n, s % n);
            let (r2, c2) = match a {
                0 => (r.wrapping_sub(1), c), // up
                1 => (r + 1, c),             // down
                2 => (r, c.wrapping_sub(1)), // left
                _ => (r, c + 1),             // right
            };
            if r2 < n && c2 < n {
                r2 * n + c2
            } else {
                s
            }
        };
        if s2 == target {
            1.0
        } else {
            0.0
        }
    })
    .expect("deterministic grid rows are stochastic")
}

/// Deterministic gridworld with uniform initial distribution.
pub fn make_gridworld(spec: &GridSpec) -> Result<TabularMdp> {
    let n_states = spec.n * spec.n;
    if spec.reward_map.len() != n_states {
        return Err(Error::Shape(format!(
            "reward map has {} entries for a {}x{} grid",
            spec.reward_map.len(),
            spec.n,
            spec.n
        )));
    }
    for &t in &spec.terminal_cells {
        if t >= n_states {
            return Err(Error::Domain(format!("terminal cell {t} out of range")));
        }
    }
    let transitions = grid_transitions(spec.n, &spec.terminal_cells);
    let features = match &spec.feature_mode {
        FeatureMode::OneHot => FeatureMatrix::one_hot(n_states),
        FeatureMode::Custom(f) => f.clone(),
    };
    let reward =
        match &spec.feature_mode {
            FeatureMode::OneHot => RewardModel::new(features, spec.reward_map.clone())?,
            FeatureMode::Custom(_) => return Err(Error::Domain(
                "custom feature mode requires an explicit theta; build the RewardModel directly"
                    .into(),
            )),
        };
    let p0 = uniform_p0(n_states);
    TabularMdp::new(transitions, spec.gamma, p0, Some(reward))
}

fn uniform_p0(n_states: usize) -> Vec<f64> {
    let mut p0 = vec![1.0 / n_states as f64; n_states];
    let sum: f64 = p0.iter().sum();
    p0[n_states - 1] += 1.0 - sum;
    p0
}

/// Noise-mixed copy: transitions become `(1-eps) T + eps * uniform`.
/// Reward, discount, and initial distribution are unchanged.
pub fn make_noisy(mdp: &TabularMdp, eps: f64) -> Result<TabularMdp> {
    let n = mdp.n_states;
    let uniform = Transitions::from_fn(n, mdp.n_actions, |_, _, _| 1.0 / n as f64)?;
    let mixed = mix_dynamics(&mdp.transitions, &uniform, eps)?;
    TabularMdp::new(mixed, mdp.gamma, mdp.p0.clone(), mdp.reward.clone())
}

/// Outer color drives the reward; inner color is a distractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectColor {
    Blue,
    Green,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub cell: usize,
    pub outer: ObjectColor,
    pub inner: ObjectColor,
}

#[derive(Debug, Clone)]
pub struct ObjectWorldSpec {
    pub n: usize,
    pub n_objects: usize,
    pub seed: u64,
}

/// ObjectWorld with the MDP plus the generated layout (object placement,
/// inner colors, goal cell) for anyone building richer feature maps.
#[derive(Debug, Clone)]
pub struct ObjectWorldLayout {
    pub mdp: TabularMdp,
    pub objects: Vec<PlacedObject>,
    pub goal: usize,
}

fn chebyshev(n: usize, a: usize, b: usize) -> usize {
    let (ra, ca) = (a / n, a % n);
    let (rb, cb) = (b / n, b % n);
    ra.abs_diff(rb).max(ca.abs_diff(cb))
}

/// Builds the full ObjectWorld layout. Rewards: -2 within three cells of an
/// outer-blue object, 0 if additionally within two cells of an outer-green
/// object, -1 otherwise ("within k" is Chebyshev ring distance <= k).
pub fn build_objectworld(spec: &ObjectWorldSpec) -> Result<ObjectWorldLayout> {
    let n_states = spec.n * spec.n;
    if spec.n_objects > n_states {
        return Err(Error::Domain(format!(
            "{} objects cannot occupy {} cells",
            spec.n_objects, n_states
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cells: Vec<usize> = (0..n_states).collect();
    // Distinct placement via partial Fisher-Yates.
    for i in 0..spec.n_objects {
        let j = rng.gen_range(i..n_states);
        cells.swap(i, j);
    }
    let pick = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            ObjectColor::Blue
        } else {
            ObjectColor::Green
        }
    };
    let objects: Vec<PlacedObject> = (0..spec.n_objects)
        .map(|i| {
            let outer = pick(&mut rng);
            let inner = pick(&mut rng);
            PlacedObject {
                cell: cells[i],
                outer,
                inner,
            }
        })
        .collect();

    let reward_map: Vec<f64> = (0..n_states)
        .map(|s| {
            let near_blue = objects
                .iter()
                .any(|o| o.outer == ObjectColor::Blue && chebyshev(spec.n, s, o.cell) <= 3);
            let near_green = objects
                .iter()
                .any(|o| o.outer == ObjectColor::Green && chebyshev(spec.n, s, o.cell) <= 2);
            if near_blue && near_green {
                0.0
            } else if near_blue {
                -2.0
            } else {
                -1.0
            }
        })
        .collect();

    let white: Vec<usize> = (0..n_states).filter(|&s| reward_map[s] == 0.0).collect();
    if white.is_empty() {
        return Err(Error::Domain(
            "no white (zero-reward) cell to host the goal".into(),
        ));
    }
    let goal = white[rng.gen_range(0..white.len())];

    // One-hot features augmented with a reached-goal indicator column. The
    // true theta reproduces the cell rewards and leaves the goal column free
    // for the learner.
    let dim = n_states + 1;
    let mut fdata = vec![0.0; n_states * dim];
    for s in 0..n_states {
        fdata[s * dim + s] = 1.0;
        if s == goal {
            fdata[s * dim + n_states] = 1.0;
        }
    }
    let features = FeatureMatrix::new(n_states, dim, fdata)?;
    let mut theta = reward_map.clone();
    theta.push(0.0);
    let reward = RewardModel::new(features, theta)?;

    let transitions = grid_transitions(spec.n, &[]);
    let mdp = TabularMdp::new(
        transitions,
        OBJECTWORLD_GAMMA,
        uniform_p0(n_states),
        Some(reward),
    )?;
    Ok(ObjectWorldLayout { mdp, objects, goal })
}

pub fn make_objectworld(spec: &ObjectWorldSpec) -> Result<TabularMdp> {
    Ok(build_objectworld(spec)?.mdp)
}

/// The 3-state, 2-action reference MDP: s1 and s2 are absorbing,
/// `T(s1|s0,a1) = 1 - eps`, `T(s2|s0,a1) = eps`, `T(s2|s0,a2) = 1`,
/// start in s0, rewards (0, 1, -1), gamma = 0.99.
pub fn make_constructive(eps: f64) -> Result<TabularMdp> {
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::Domain(format!("eps must lie in [0,1], got {eps}")));
    }
    let t = Transitions::new(
        3,
        2,
        vec![
            // s0: a1 -> s1 w.p. 1-eps, s2 w.p. eps; a2 -> s2
            0.0,
            1.0 - eps,
            eps,
            0.0,
            0.0,
            1.0,
            // s1 absorbing
            0.0,
            1.0,
            0.0,
            0.0,
            1.0,
            0.0,
            // s2 absorbing
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            1.0,
        ],
    )?;
    TabularMdp::new(
        t,
        GRID_GAMMA,
        vec![1.0, 0.0, 0.0],
        Some(RewardModel::tabular(vec![0.0, 1.0, -1.0])),
    )
}

/// Per-cell hazard class for GridWorld-L.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Danger {
    None,
    Type1,
    Type2,
}

#[derive(Debug, Clone)]
pub struct GridLSpec {
    pub n: usize,
    pub danger: Vec<Danger>,
    pub terminal_cells: Vec<usize>,
}

/// True weights for the 3-dimensional GridWorld-L reward.
pub const GRIDWORLD_L_WEIGHTS: [f64; 3] = [-2.0, -6.0, -1.0];

/// Low-dimensional gridworld: binary features
/// `[is danger-1, is danger-2, is non-terminal]` with reward `<w, phi>`,
/// `w = [-2, -6, -1]`. Dynamics follow `make_gridworld` with the given
/// terminals absorbing.
pub fn make_gridworld_l(spec: &GridLSpec) -> Result<TabularMdp> {
    let n_states = spec.n * spec.n;
    if spec.danger.len() != n_states {
        return Err(Error::Shape(format!(
            "danger map has {} entries for a {}x{} grid",
            spec.danger.len(),
            spec.n,
            spec.n
        )));
    }
    let terminal = {
        let mut v = vec![false; n_states];
        for &t in &spec.terminal_cells {
            if t >= n_states {
                return Err(Error::Domain(format!("terminal cell {t} out of range")));
            }
            v[t] = true;
        }
        v
    };
    let mut fdata = vec![0.0; n_states * 3];
    for s in 0..n_states {
        match spec.danger[s] {
            Danger::Type1 => fdata[s * 3] = 1.0,
            Danger::Type2 => fdata[s * 3 + 1] = 1.0,
            Danger::None => {}
        }
        if !terminal[s] {
            fdata[s * 3 + 2] = 1.0;
        }
    }
    let features = FeatureMatrix::new(n_states, 3, fdata)?;
    let reward = RewardModel::new(features, GRIDWORLD_L_WEIGHTS.to_vec())?;
    let transitions = grid_transitions(spec.n, &spec.terminal_cells);
    TabularMdp::new(transitions, GRID_GAMMA, uniform_p0(n_states), Some(reward))
}

/// Named environment presets addressable from the CLI and the experiment
/// harness.
pub const PRESET_NAMES: [&str; 7] = [
    "grid-1",
    "grid-2",
    "grid-3",
    "grid-4",
    "objectworld-10",
    "gridworld-l",
    "constructive",
];

/// Builds a preset. `size` overrides the grid side length where that makes
/// sense; `seed` feeds ObjectWorld placement; `constructive_eps` sets the
/// reference epsilon of the constructive MDP.
pub fn make_preset(
    name: &str,
    size: Option<usize>,
    seed: u64,
    constructive_eps: f64,
) -> Result<TabularMdp> {
    match name {
        "grid-1" => make_gridworld(&grid_preset_spec(1, size.unwrap_or(5))?),
        "grid-2" => make_gridworld(&grid_preset_spec(2, size.unwrap_or(5))?),
        "grid-3" => make_gridworld(&grid_preset_spec(3, size.unwrap_or(5))?),
        "grid-4" => make_gridworld(&grid_preset_spec(4, size.unwrap_or(5))?),
        "objectworld-10" => make_objectworld(&ObjectWorldSpec {
            n: size.unwrap_or(10),
            n_objects: 6,
            seed,
        }),
        "gridworld-l" => make_gridworld_l(&gridworld_l_preset_spec(size.unwrap_or(5))?),
        "constructive" => make_constructive(constructive_eps),
        other => Err(Error::Domain(format!(
            "unknown preset '{other}' (expected one of {PRESET_NAMES:?})"
        ))),
    }
}

/// Qualitative reward layouts for the four grid presets: a high-reward goal
/// region plus penalty corridors. Values are in [-1, 1].
pub fn grid_preset_spec(which: usize, n: usize) -> Result<GridSpec> {
    if n < 3 {
        return Err(Error::Domain("grid presets need n >= 3".into()));
    }
    let cell = |r: usize, c: usize| r * n + c;
    let mut reward = vec![0.0; n * n];
    match which {
        // Single goal in the far corner.
        1 => {
            reward[cell(n - 1, n - 1)] = 1.0;
        }
        // Goal in the far corner behind a penalty wall with a gap.
        2 => {
            reward[cell(n - 1, n - 1)] = 1.0;
            let wall_col = n / 2;
            for r in 0..n {
                if r != n - 1 {
                    reward[cell(r, wall_col)] = -1.0;
                }
            }
        }
        // Two goal regions of different value plus a penalty band.
        3 => {
            reward[cell(0, n - 1)] = 0.5;
            reward[cell(n - 1, n - 1)] = 1.0;
            let band_row = n / 2;
            for c in 0..n {
                if c != 0 {
                    reward[cell(band_row, c)] = -1.0;
                }
            }
        }
        // Central goal surrounded by a penalty ring.
        4 => {
            let mid = n / 2;
            reward[cell(mid, mid)] = 1.0;
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let r = mid as i64 + dr;
                    let c = mid as i64 + dc;
                    if r >= 0 && c >= 0 && (r as usize) < n && (c as usize) < n {
                        reward[cell(r as usize, c as usize)] = -1.0;
                    }
                }
            }
        }
        other => return Err(Error::Domain(format!("grid preset {other} does not exist"))),
    }
    GridSpec::new(n, reward)
}

/// Shipped GridWorld-L layout: terminal goal in the far corner, a type-1
/// hazard column with a gap, and two isolated type-2 hazards.
pub fn gridworld_l_preset_spec(n: usize) -> Result<GridLSpec> {
    if n < 4 {
        return Err(Error::Domain("gridworld-l preset needs n >= 4".into()));
    }
    let cell = |r: usize, c: usize| r * n + c;
    let mut danger = vec![Danger::None; n * n];
    let hazard_col = n / 2;
    for r in 0..n - 1 {
        danger[cell(r, hazard_col)] = Danger::Type1;
    }
    danger[cell(1, n - 1)] = Danger::Type2;
    danger[cell(n - 2, 0)] = Danger::Type2;
    Ok(GridLSpec {
        n,
        danger,
        terminal_cells: vec![cell(n - 1, n - 1)],
    })
}
