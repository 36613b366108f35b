//! Command-line front end. Every command is deterministic given its inputs.

use std::fmt::Display;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::Error;
use crate::io::{dataset_hash, scenario_hash, to_json, DatasetFile, Policy, PolicyFile, ReportFile, ScenarioConfig};
use crate::known::{loss_to_go_known, solve_known, value_known};
use crate::model::{generate_dataset, validate_scenario, Belief, Dataset, Scenario};
use crate::offline::{loss_to_go_offline, marginal_value, offline_pipeline, solve_offline, value_offline};
use crate::online::{loss_to_go_online, solve_online_capped, value_online, DEFAULT_NODE_CAP};
use crate::oracle::{
    brute_force_optimum_capped, exact_report, monte_carlo_loss, Conditioning, EvalMode, StrategyClass, StrategyTable,
    DEFAULT_STRATEGY_CAP,
};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// Unreadable or unparsable input, or an unwritable output.
    pub const PARSE: u8 = 1;
    /// Invalid scenario or arguments.
    pub const INVALID: u8 = 2;
    pub const HASH_MISMATCH: u8 = 3;
    pub const CAP_EXCEEDED: u8 = 4;
    /// Training data or observations with zero probability.
    pub const IMPOSSIBLE: u8 = 5;
    /// Brute force and dynamic programming disagree.
    pub const ORACLE_MISMATCH: u8 = 6;
}

/// Agreement required between the exhaustive search and the DP value.
pub const ORACLE_TOL: f64 = 1e-9;
/// Cap on the number of training sets enumerated for marginal values.
const MARGINAL_DATASET_CAP: u128 = 1 << 20;

#[derive(Debug, Parser)]
#[command(
    name = "dyninf",
    version,
    about = "Exact solver and verifier for finite dynamic inference problems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a scenario file and report every violation.
    Validate { config: PathBuf },
    /// Solve a scenario and write the policy.
    Solve(SolveArgs),
    /// Evaluate a stored policy exactly or by simulation.
    Evaluate(EvaluateArgs),
    /// Compare the DP optimum against exhaustive search over a strategy class.
    Oracle(OracleArgs),
    /// Draw a training set from the imitation data model.
    GenData(GenDataArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SolveMode {
    Known,
    Offline,
    Online,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub config: PathBuf,
    #[arg(long, value_enum)]
    pub mode: SolveMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Training set (offline mode).
    #[arg(long, conflicts_with = "belief")]
    pub dataset: Option<PathBuf>,
    /// Comma-separated posterior to condition on (offline mode).
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub belief: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_NODE_CAP)]
    pub node_cap: usize,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    pub config: PathBuf,
    pub policy: PathBuf,
    #[arg(long, conflicts_with = "mc", required_unless_present = "mc")]
    pub exact: bool,
    /// Number of Monte Carlo trajectories.
    #[arg(long, requires = "seed")]
    pub mc: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training set the offline policy was fitted on.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write per-state loss-to-go as `round,node,x,value`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub class: StrategyClass,
    /// Condition offline classes on this training set.
    #[arg(long, conflicts_with = "m")]
    pub dataset: Option<PathBuf>,
    /// Average offline classes over training sets of this length.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_STRATEGY_CAP)]
    pub cap: u128,
    /// Write the minimizing strategy table.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub w: usize,
    #[arg(long)]
    pub m: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::CapExceeded { .. } => exit::CAP_EXCEEDED,
            Error::ImpossibleDataset | Error::ImpossibleObservation { .. } | Error::NodeNotFound { .. } => {
                exit::IMPOSSIBLE
            }
            Error::Invalid(_) | Error::ShapeMismatch(_) | Error::IndexOutOfRange { .. } | Error::ModeMismatch(_) => {
                exit::INVALID
            }
        };
        Failure::new(code, e)
    }
}

type Outcome = std::result::Result<u8, Failure>;

/// Runs a parsed command, writing results to `out` and diagnostics to
/// `err`. Returns the process exit code.
pub fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> u8 {
    let result = match cli.command {
        Command::Validate { config } => validate(&config, out),
        Command::Solve(args) => solve(&args, out),
        Command::Evaluate(args) => evaluate(&args, out),
        Command::Oracle(args) => oracle(&args, out),
        Command::GenData(args) => gen_data(&args, out),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn read(path: &Path) -> std::result::Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::new(exit::PARSE, format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> std::result::Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::new(exit::PARSE, format!("cannot write {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> std::result::Result<T, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::new(exit::PARSE, format!("cannot parse {}: {e}", path.display())))
}

fn say(out: &mut dyn Write, line: impl Display) -> std::result::Result<(), Failure> {
    writeln!(out, "{line}").map_err(|e| Failure::new(exit::PARSE, format!("cannot write output: {e}")))
}

/// Loads a scenario, returning every structural and numeric violation.
fn load_scenario(path: &Path) -> std::result::Result<Scenario, Failure> {
    let config: ScenarioConfig = parse_json(path)?;
    let violations = match config.to_scenario() {
        Ok(s) => {
            let v = validate_scenario(&s);
            if v.is_empty() {
                return Ok(s);
            }
            v
        }
        Err(v) => v,
    };
    let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
    Err(Failure::new(
        exit::INVALID,
        format!(
            "{} has {} violation(s):\n{}",
            path.display(),
            violations.len(),
            lines.join("\n")
        ),
    ))
}

fn load_dataset(path: &Path) -> std::result::Result<Dataset, Failure> {
    let file: DatasetFile = parse_json(path)?;
    Ok(file.dataset()?)
}

fn validate(config: &Path, out: &mut dyn Write) -> Outcome {
    let s = load_scenario(config)?;
    let mode = if s.is_learning() { "learning" } else { "known" };
    say(
        out,
        format!(
            "ok: |X|={} |Y|={} |Yhat|={} n={} mode={mode} hash={}",
            s.n_x(),
            s.n_y(),
            s.n_yhat(),
            s.horizon,
            scenario_hash(&s)
        ),
    )?;
    Ok(exit::OK)
}

fn solve(args: &SolveArgs, out: &mut dyn Write) -> Outcome {
    let s = load_scenario(&args.config)?;
    if args.mode != SolveMode::Offline && (args.dataset.is_some() || args.belief.is_some()) {
        return Err(Failure::new(
            exit::INVALID,
            "--dataset and --belief apply to offline mode only",
        ));
    }
    let (policy, value, data_hash) = match args.mode {
        SolveMode::Known => {
            let p = solve_known(&s)?;
            let value = value_known(&s, &p)?;
            (Policy::Known(p), value, None)
        }
        SolveMode::Offline => {
            let (p, data_hash) = match (&args.dataset, &args.belief) {
                (Some(path), _) => {
                    let d = load_dataset(path)?;
                    (offline_pipeline(&s, &d)?, Some(dataset_hash(&d)))
                }
                (None, Some(b)) => (solve_offline(&s, &Belief::new(b.clone()))?, None),
                (None, None) => return Err(Failure::new(exit::INVALID, "offline mode needs --dataset or --belief")),
            };
            let value = value_offline(&s, &p)?;
            (Policy::Offline(p), value, data_hash)
        }
        SolveMode::Online => {
            let p = solve_online_capped(&s, args.node_cap)?;
            let value = value_online(&s, &p)?;
            let counts: Vec<String> = p.graph.node_counts().iter().map(usize::to_string).collect();
            say(out, format!("nodes per round: {}", counts.join(" ")))?;
            (Policy::Online(p), value, None)
        }
    };
    write(
        &args.out,
        &to_json(&PolicyFile::from_policy(&s, &policy, value, data_hash)),
    )?;
    say(out, format!("value: {value}"))?;
    Ok(exit::OK)
}

fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Outcome {
    let s = load_scenario(&args.config)?;
    let file: PolicyFile = parse_json(&args.policy)?;
    let hash = scenario_hash(&s);
    if file.scenario_hash != hash {
        return Err(Failure::new(
            exit::HASH_MISMATCH,
            format!(
                "policy was solved for scenario {} but the config hashes to {hash}",
                file.scenario_hash
            ),
        ));
    }
    let policy = file.to_policy()?;
    let (table, cond) = match &policy {
        Policy::Known(p) => {
            if args.dataset.is_some() {
                return Err(Failure::new(
                    exit::INVALID,
                    "--dataset applies to offline policies only",
                ));
            }
            (StrategyTable::from_known_policy(p), None)
        }
        Policy::Offline(p) => {
            let cond = match &args.dataset {
                Some(path) => {
                    let d = load_dataset(path)?;
                    match &file.dataset_hash {
                        Some(h) if *h != dataset_hash(&d) => {
                            return Err(Failure::new(
                                exit::HASH_MISMATCH,
                                "dataset does not match the one the policy was fitted on",
                            ))
                        }
                        _ => Conditioning::Dataset(d),
                    }
                }
                None => Conditioning::Belief(p.belief.clone()),
            };
            (StrategyTable::from_offline_policy(p), Some(cond))
        }
        Policy::Online(p) => {
            if args.dataset.is_some() {
                return Err(Failure::new(
                    exit::INVALID,
                    "--dataset applies to offline policies only",
                ));
            }
            (StrategyTable::from_online_policy(&s, p)?, None)
        }
    };

    let report = match args.mc {
        Some(samples) => {
            let seed = args.seed.expect("clap enforces --seed with --mc");
            monte_carlo_loss(&s, &table, samples, seed, cond.as_ref())?
        }
        None => exact_report(&s, &table, cond.as_ref())?,
    };
    if report.mode == EvalMode::MonteCarlo {
        say(
            out,
            format!(
                "loss: {} ± {} (samples {}, seed {})",
                report.loss,
                report.stderr,
                report.samples,
                report.seed.unwrap_or(0)
            ),
        )?;
    } else {
        say(out, format!("loss: {}", report.loss))?;
    }

    if let Some(path) = &args.csv {
        write(path, &loss_to_go_csv(&s, &policy)?)?;
    }
    if let Some(path) = &args.out {
        write(path, &to_json(&ReportFile::new(&s, table.class, report)))?;
    }
    Ok(exit::OK)
}

fn loss_to_go_csv(s: &Scenario, policy: &Policy) -> std::result::Result<String, Failure> {
    let mut csv = String::from("round,node,x,value\n");
    for i in 0..s.horizon {
        let nodes = match policy {
            Policy::Online(p) => p.graph.nodes[i].len(),
            _ => 1,
        };
        for node in 0..nodes {
            for x in 0..s.n_x() {
                let value = match policy {
                    Policy::Known(p) => loss_to_go_known(s, p, i, x)?,
                    Policy::Offline(p) => loss_to_go_offline(s, p, i, x)?,
                    Policy::Online(p) => loss_to_go_online(s, p, i, node, x)?,
                };
                csv.push_str(&format!("{},{node},{x},{value}\n", i + 1));
            }
        }
    }
    Ok(csv)
}

fn oracle(args: &OracleArgs, out: &mut dyn Write) -> Outcome {
    let s = load_scenario(&args.config)?;
    let class = args.class;
    let cond = if class.is_offline() {
        match (&args.dataset, args.m) {
            (Some(path), _) => Conditioning::Dataset(load_dataset(path)?),
            (None, Some(m)) => Conditioning::Marginal { m },
            (None, None) => return Err(Failure::new(exit::INVALID, "offline classes need --dataset or --m")),
        }
        .into()
    } else {
        if args.dataset.is_some() || args.m.is_some() {
            return Err(Failure::new(
                exit::INVALID,
                "--dataset and --m apply to offline classes only",
            ));
        }
        None
    };
    let (table, brute) = brute_force_optimum_capped(&s, class, cond.as_ref(), args.cap)?;
    let dp = if class.is_known() {
        value_known(&s, &solve_known(&s)?)?
    } else if class.is_online() {
        value_online(&s, &solve_online_capped(&s, DEFAULT_NODE_CAP)?)?
    } else {
        match cond.as_ref() {
            Some(Conditioning::Dataset(d)) => value_offline(&s, &offline_pipeline(&s, d)?)?,
            Some(Conditioning::Marginal { m }) => marginal_value(&s, *m, MARGINAL_DATASET_CAP)?,
            _ => unreachable!("offline conditioning is set above"),
        }
    };
    let diff = (brute - dp).abs();
    say(out, format!("class: {class}"))?;
    say(out, format!("brute force: {brute}"))?;
    say(out, format!("dp: {dp}"))?;
    say(out, format!("diff: {diff:e}"))?;
    if let Some(path) = &args.out {
        write(path, &to_json(&table))?;
    }
    if diff <= ORACLE_TOL {
        say(out, "agree")?;
        Ok(exit::OK)
    } else {
        say(out, "DISAGREE")?;
        Ok(exit::ORACLE_MISMATCH)
    }
}

fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Outcome {
    let s = load_scenario(&args.config)?;
    let d = generate_dataset(&s, args.w, args.m, args.seed)?;
    write(
        &args.out,
        &to_json(&DatasetFile::new(&d, Some(args.w), Some(args.seed))),
    )?;
    say(out, format!("wrote {} pairs (hash {})", d.len(), dataset_hash(&d)))?;
    Ok(exit::OK)
}
