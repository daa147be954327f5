use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use robust_irl::bounds::{
    constructive_gaps, corollary_alpha_choice, infeasible_gap_terms, kappa, lemma1_pol_bound,
    reward_transfer_bound_simplified, reward_transfer_terms, robust_gap_terms,
    soft_expert_gap_terms, thm1_gap_bound, BoundInputs,
};
use robust_irl::envs::{make_noisy, make_preset};
use robust_irl::feasibility::{
    check_feasibility, solve_matching_policy, MatchingOutcome, DEFAULT_RANK_TOL,
};
use robust_irl::irl::{mce_irl_observed, robust_mce_irl_observed, IrlConfig, IrlResult};
use robust_irl::mdp::{OccupancyMeasure, StochasticPolicy, TabularMdp};
use robust_irl::solvers::{soft_value_iteration, two_player_soft_vi, value_iteration};

use robust_irl_cli::harness::{
    emit_results, render_results, run_experiment, ExperimentConfig, OutputFormat,
};
use robust_irl_cli::reirl_exp::{render_reirl_csv, run_reirl_experiment, ReirlExperimentConfig};

/// Occupancy-matching IRL toolkit: exact tabular solvers, robust two-player
/// training under dynamics mismatch, feasibility tests, bound calculators,
/// and the mismatch experiment harness.
#[derive(Parser)]
#[command(name = "robust-irl", version, about)]
struct Cli {
    /// JSON configuration file (meaning depends on the subcommand).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for seeded constructions and evaluations.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format for tabular results.
    #[arg(long, global = true, default_value = "csv")]
    format: OutputFormat,

    /// Worker threads for the experiment sweep; defaults to the core count.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Environment constructors.
    Env {
        #[command(subcommand)]
        action: EnvCommand,
    },
    /// Solve an MDP exactly (hard, soft, or two-player value iteration).
    Solve(SolveArgs),
    /// Maximum causal entropy IRL against a target occupancy.
    Irl(IrlArgs),
    /// Robust MCE IRL via the two-player game.
    RobustIrl(RobustIrlArgs),
    /// Rank test for occupancy-matching feasibility.
    Feasibility(FeasibilityArgs),
    /// Closed-form bound calculators.
    Bounds(BoundsArgs),
    /// The (eps_E, eps_L, alpha) mismatch sweep.
    Experiment(ExperimentArgs),
    /// Continuous-control relative-entropy IRL experiment.
    Reirl,
}

#[derive(Subcommand)]
enum EnvCommand {
    /// Emit an environment preset as MDP JSON.
    Make(EnvMakeArgs),
}

#[derive(Args)]
struct EnvMakeArgs {
    /// One of: grid-1, grid-2, grid-3, grid-4, objectworld-10, gridworld-l, constructive.
    #[arg(long)]
    preset: String,
    /// Grid side length override.
    #[arg(long)]
    size: Option<usize>,
    /// Mix the dynamics with uniform noise at this level.
    #[arg(long)]
    noise: Option<f64>,
    /// Reference epsilon for the constructive preset.
    #[arg(long, default_value_t = 0.0)]
    constructive_eps: f64,
}

#[derive(Args)]
struct SolveArgs {
    /// MDP JSON file.
    #[arg(long)]
    mdp: PathBuf,
    /// hard | soft | two-player
    #[arg(long, default_value = "soft")]
    kind: String,
    /// Opponent strength complement for two-player solves.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
}

#[derive(Args)]
struct IrlArgs {
    /// Learner MDP JSON (any reward on it is ignored).
    #[arg(long)]
    mdp: PathBuf,
    /// Target occupancy JSON (a bare array).
    #[arg(long)]
    rho: PathBuf,
    /// Force one-hot features instead of the MDP's own feature matrix.
    #[arg(long)]
    onehot: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
}

#[derive(Args)]
struct RobustIrlArgs {
    #[command(flatten)]
    irl: IrlArgs,
    /// Opponent takes control with probability 1 - alpha.
    #[arg(long)]
    alpha: f64,
}

#[derive(Args)]
struct FeasibilityArgs {
    #[arg(long)]
    mdp: PathBuf,
    #[arg(long)]
    rho: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    rel_tol: f64,
}

#[derive(Args)]
struct BoundsArgs {
    /// kappa | lemma1 | thm1 | soft-expert | robust | reward-transfer |
    /// reward-transfer-simplified | infeasible | alpha-choice | constructive
    formula: String,
    /// Inputs as inline JSON (see the README for the field names).
    #[arg(long)]
    inputs: String,
}

#[derive(Args)]
struct ExperimentArgs {
    /// 10x10 grid with Monte Carlo evaluation instead of the desk-scale default.
    #[arg(long)]
    paper_scale: bool,
}

/// Errors that should exit with status 2 (bad configuration) versus 1
/// (runtime failure).
enum CliError {
    Config(String),
    Run(String),
}

impl CliError {
    fn config(e: impl std::fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    fn run(e: impl std::fmt::Display) -> Self {
        CliError::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), CliError> {
    match out {
        None => {
            print!("{text}");
            std::io::stdout().flush().map_err(CliError::run)
        }
        Some(path) => {
            if let Some(parent) = path.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent).map_err(CliError::run)?;
                }
            }
            std::fs::write(path, text).map_err(CliError::run)
        }
    }
}

fn load_mdp(path: &Path) -> Result<TabularMdp, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    TabularMdp::from_json(&text).map_err(CliError::config)
}

fn load_rho(path: &Path) -> Result<OccupancyMeasure, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let values: Vec<f64> = serde_json::from_str(&text)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    OccupancyMeasure::new(values).map_err(CliError::config)
}

fn policy_json(p: &StochasticPolicy) -> serde_json::Value {
    json!((0..p.n_states())
        .map(|s| p.row(s).to_vec())
        .collect::<Vec<_>>())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Env {
            action: EnvCommand::Make(args),
        } => {
            let mut mdp = make_preset(&args.preset, args.size, cli.seed, args.constructive_eps)
                .map_err(CliError::config)?;
            if let Some(eps) = args.noise {
                mdp = make_noisy(&mdp, eps).map_err(CliError::config)?;
            }
            write_output(&cli.out, &(mdp.to_json() + "\n"))
        }

        Command::Solve(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let value = match args.kind.as_str() {
                "hard" => {
                    let sol = value_iteration(&mdp, args.tol).map_err(CliError::run)?;
                    json!({
                        "kind": "hard",
                        "v": sol.v_star,
                        "q": q_nested(&sol.q_star, mdp.n_actions),
                        "policy": policy_json(&sol.policy),
                    })
                }
                "soft" => {
                    let sol = soft_value_iteration(&mdp, args.tol).map_err(CliError::run)?;
                    json!({
                        "kind": "soft",
                        "v": sol.v_soft,
                        "q": q_nested(&sol.q_soft, mdp.n_actions),
                        "policy": policy_json(&sol.policy),
                    })
                }
                "two-player" => {
                    let alpha = args
                        .alpha
                        .ok_or_else(|| CliError::config("two-player solve needs --alpha"))?;
                    let sol = two_player_soft_vi(&mdp, alpha, args.tol).map_err(CliError::run)?;
                    let m = mdp.n_actions;
                    let joint: Vec<Vec<Vec<f64>>> = (0..mdp.n_states)
                        .map(|s| {
                            (0..m)
                                .map(|apl| (0..m).map(|aop| sol.joint(s, apl, aop)).collect())
                                .collect()
                        })
                        .collect();
                    json!({
                        "kind": "two-player",
                        "alpha": alpha,
                        "v": sol.v,
                        "joint_q": joint,
                        "player": policy_json(&sol.player),
                        "opponent": policy_json(&sol.opponent),
                    })
                }
                other => {
                    return Err(CliError::config(format!(
                        "unknown solve kind '{other}' (hard | soft | two-player)"
                    )))
                }
            };
            write_output(
                &cli.out,
                &(serde_json::to_string_pretty(&value).unwrap() + "\n"),
            )
        }

        Command::Irl(args) => {
            let (mdp, rho, features, cfg) = irl_setup(&args, &cli.config)?;
            let result = mce_irl_observed(&mdp, &rho, &features, &cfg, jsonl_observer())
                .map_err(CliError::run)?;
            write_output(&cli.out, &(irl_result_json(&result) + "\n"))
        }

        Command::RobustIrl(args) => {
            let (mdp, rho, features, cfg) = irl_setup(&args.irl, &cli.config)?;
            let result =
                robust_mce_irl_observed(&mdp, &rho, args.alpha, &features, &cfg, jsonl_observer())
                    .map_err(CliError::run)?;
            write_output(&cli.out, &(irl_result_json(&result) + "\n"))
        }

        Command::Feasibility(args) => {
            let mdp = load_mdp(&args.mdp)?;
            let rho = load_rho(&args.rho)?;
            let fs = check_feasibility(&mdp, &rho, args.rel_tol).map_err(CliError::run)?;
            let witness = solve_matching_policy(&fs).map_err(CliError::run)?;
            let (witness_residual, witness_policy) = match &witness {
                MatchingOutcome::Policy(p) => (0.0, Some(policy_json(p))),
                MatchingOutcome::Infeasible(rep) => (rep.residual, None),
            };
            let value = json!({
                "rank_t": fs.rank_t,
                "rank_augmented": fs.rank_augmented,
                "feasible": fs.feasible,
                "full_rank": fs.full_rank,
                "witness_residual": witness_residual,
                "witness_policy": witness_policy,
            });
            write_output(
                &cli.out,
                &(serde_json::to_string_pretty(&value).unwrap() + "\n"),
            )
        }

        Command::Bounds(args) => {
            let value = eval_bounds(&args).map_err(CliError::config)?;
            write_output(
                &cli.out,
                &(serde_json::to_string_pretty(&value).unwrap() + "\n"),
            )
        }

        Command::Experiment(args) => {
            if let Some(n) = cli.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(CliError::config)?;
            }
            let mut cfg = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(CliError::config)?;
                    serde_json::from_str::<ExperimentConfig>(&text).map_err(CliError::config)?
                }
                None => ExperimentConfig::desk_default(),
            };
            if args.paper_scale {
                cfg = cfg.paper_scale();
            }
            cfg.validate().map_err(CliError::config)?;
            let base = make_preset(&cfg.env_preset, cfg.size, cfg.env_seed, 0.1)
                .map_err(CliError::config)?;
            let (rows, had_error) = run_experiment(&cfg, &base).map_err(CliError::run)?;
            match &cli.out {
                Some(path) => emit_results(&rows, path, cli.format).map_err(CliError::run)?,
                None => print!("{}", render_results(&rows, cli.format)),
            }
            if had_error {
                return Err(CliError::Run(
                    "one or more sweep cells failed; see the error column".into(),
                ));
            }
            Ok(())
        }

        Command::Reirl => {
            let cfg = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(CliError::config)?;
                    serde_json::from_str::<ReirlExperimentConfig>(&text)
                        .map_err(CliError::config)?
                }
                None => {
                    return Err(CliError::Config(
                        "reirl needs --config with a ReirlExperimentConfig JSON".into(),
                    ))
                }
            };
            cfg.validate().map_err(CliError::config)?;
            let rows = run_reirl_experiment(&cfg).map_err(CliError::run)?;
            write_output(&cli.out, &render_reirl_csv(&rows))
        }
    }
}

fn q_nested(q: &[f64], n_actions: usize) -> Vec<Vec<f64>> {
    q.chunks(n_actions).map(|c| c.to_vec()).collect()
}

fn irl_setup(
    args: &IrlArgs,
    config: &Option<PathBuf>,
) -> Result<
    (
        TabularMdp,
        OccupancyMeasure,
        robust_irl::FeatureMatrix,
        IrlConfig,
    ),
    CliError,
> {
    let mdp = load_mdp(&args.mdp)?;
    let rho = load_rho(&args.rho)?;
    let features = if args.onehot {
        robust_irl::FeatureMatrix::one_hot(mdp.n_states)
    } else {
        match &mdp.reward {
            Some(r) => r.features.clone(),
            None => robust_irl::FeatureMatrix::one_hot(mdp.n_states),
        }
    };
    let mut cfg = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(CliError::config)?;
            serde_json::from_str::<IrlConfig>(&text).map_err(CliError::config)?
        }
        None => IrlConfig::gridworld(),
    };
    if let Some(lr) = args.lr {
        cfg.learning_rate = lr;
    }
    if let Some(steps) = args.steps {
        cfg.n_steps = steps;
    }
    if let Some(tol) = args.inner_tol {
        cfg.inner_tol = tol;
    }
    cfg.validate().map_err(CliError::config)?;
    Ok((mdp.without_reward(), rho, features, cfg))
}

/// Streams {step, grad_norm, l1_mismatch} JSON lines to stderr.
fn jsonl_observer() -> impl FnMut(&robust_irl::irl::IrlStep) {
    |step: &robust_irl::irl::IrlStep| {
        eprintln!("{}", serde_json::to_string(step).unwrap());
    }
}

fn irl_result_json(result: &IrlResult) -> String {
    serde_json::to_string_pretty(&json!({
        "theta": result.theta,
        "policy": policy_json(&result.policy),
        "final_l1_mismatch": result.final_l1_mismatch,
        "player_l1_mismatch": result.player_l1_mismatch,
        "gradient_norm_history": result.gradient_norm_history,
    }))
    .unwrap()
}

fn eval_bounds(args: &BoundsArgs) -> Result<serde_json::Value, String> {
    #[derive(serde::Deserialize)]
    struct Extra {
        #[serde(flatten)]
        raw: serde_json::Value,
    }
    let extra: Extra = serde_json::from_str(&args.inputs).map_err(|e| e.to_string())?;
    let get = |name: &str| -> Result<f64, String> {
        extra
            .raw
            .get(name)
            .and_then(|v| v.as_f64())
            .ok_or(format!("missing field '{name}'"))
    };
    let parse_inputs = || -> Result<BoundInputs, String> {
        serde_json::from_str::<BoundInputs>(&args.inputs)
            .map_err(|e| e.to_string())
            .and_then(|i| i.validate().map(|_| i).map_err(|e| e.to_string()))
    };
    let with_terms = |total: f64, terms: Vec<(&'static str, f64)>| {
        json!({
            "formula": args.formula,
            "value": total,
            "terms": terms.into_iter().collect::<std::collections::BTreeMap<_, _>>(),
        })
    };
    let plain = |total: f64| json!({ "formula": args.formula, "value": total });
    let e = |err: robust_irl::Error| err.to_string();
    match args.formula.as_str() {
        "kappa" => Ok(plain(kappa(&parse_inputs()?).map_err(e)?)),
        "lemma1" => Ok(plain(lemma1_pol_bound(&parse_inputs()?).map_err(e)?)),
        "thm1" => Ok(plain(thm1_gap_bound(&parse_inputs()?).map_err(e)?)),
        "soft-expert" => {
            let terms = soft_expert_gap_terms(&parse_inputs()?).map_err(e)?;
            Ok(with_terms(terms.iter().map(|(_, v)| v).sum(), terms))
        }
        "robust" => {
            let terms = robust_gap_terms(&parse_inputs()?).map_err(e)?;
            Ok(with_terms(terms.iter().map(|(_, v)| v).sum(), terms))
        }
        "reward-transfer" => {
            let inputs = parse_inputs()?;
            let terms = reward_transfer_terms(
                &inputs,
                get("d_dyn_train_learner")?,
                get("kappa_train")?,
                get("d_pol_term")?,
            )
            .map_err(e)?;
            Ok(with_terms(terms.iter().map(|(_, v)| v).sum(), terms))
        }
        "reward-transfer-simplified" => {
            let inputs = parse_inputs()?;
            Ok(plain(
                reward_transfer_bound_simplified(&inputs, get("kappa_expert")?).map_err(e)?,
            ))
        }
        "infeasible" => {
            let inputs = parse_inputs()?;
            let terms = infeasible_gap_terms(&inputs, get("d_dyn_expert_tstar")?).map_err(e)?;
            Ok(with_terms(terms.iter().map(|(_, v)| v).sum(), terms))
        }
        "alpha-choice" => Ok(plain(
            corollary_alpha_choice(get("d_dyn_expert_learner")?, get("d_dyn_tstar_expert")?)
                .map_err(e)?,
        )),
        "constructive" => {
            let gaps = constructive_gaps(get("eps_e")?, get("gamma")?, get("alpha")?).map_err(e)?;
            Ok(json!({
                "formula": "constructive",
                "mce_gap": gaps.mce_gap,
                "robust_gap": gaps.robust_gap,
                "player_a1_prob": gaps.player_a1_prob,
            }))
        }
        other => Err(format!("unknown formula '{other}'")),
    }
}
