//! The `cmc-explore` command line.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 usage or configuration error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::chain::CountTensor;
use crate::environments::load_environment;
use crate::error::{Error, Result};
use crate::experiment::{Experiment, ExperimentConfig, Method, PlanSettings, PolicyRun, PolicySummary};
use crate::policies::Policy;
use crate::report::{self, OptimizerRecord};
use crate::simulator::Trajectory;

/// Caps the worker threads used for trajectory and candidate evaluation.
pub const THREADS_VAR: &str = "CMC_EXPLORE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "cmc-explore", version, about = "Explore controllable Markov chains")]
#[command(subcommand_negates_reqs = true)]
struct Cli {
    /// Run the full pipeline of a shipped experiment (example1..example6) or a config file.
    #[arg(long, value_name = "EXPERIMENT", required = true)]
    reproduce: Option<String>,

    /// Directory for the reproduced tables and records.
    #[arg(long, requires = "reproduce")]
    out: Option<PathBuf>,

    /// Master seed overriding the experiment's.
    #[arg(long, requires = "reproduce")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Search for the best parameter vector.
    Optimize {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        search: SearchArgs,
    },
    /// Simulate a policy and export its trajectories.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Simulate the rollout policy over a base policy.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Plan a shortest path on a learned model.
    Plan {
        #[command(flatten)]
        common: Common,
        /// Learned counts; learned by simulating the parametric policy if absent.
        #[arg(long, value_name = "FILE")]
        model: Option<PathBuf>,
        /// Restriction vector defining the admissible sets U_0(i, r).
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        r: Option<Vec<usize>>,
        #[arg(long, default_value_t = 0.99)]
        discount: f64,
        /// One-based goal state.
        #[arg(long)]
        goal: Option<usize>,
        /// One-based start state; the entrance by default.
        #[arg(long)]
        start: Option<usize>,
    },
    /// Run the parametric policy against greedy, random and rollout-over-greedy.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        r: Option<Vec<usize>>,
        #[arg(long)]
        tails: Option<usize>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct EnvArgs {
    /// Builtin environment, e.g. example4 or example4-modified-maze.
    #[arg(long)]
    env: Option<String>,
    /// Environment document.
    #[arg(long, value_name = "FILE")]
    env_file: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct Common {
    #[command(flatten)]
    env: EnvArgs,
    /// Number of periods; the shipped experiment's horizon by default.
    #[arg(long)]
    horizon: Option<usize>,
    /// Monte-Carlo trajectories on stochastic chains.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Dirichlet prior pseudo-count.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Exhaustive,
    Cem,
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// One-based ranges, e.g. "1:2,1:2,1:20".
    #[arg(long, value_name = "RANGES", value_parser = parse_ranges)]
    param_space: Option<Ranges>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    elite_fraction: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    /// Exhaustive pass over the time constants of the CEM result.
    #[arg(long)]
    refine: bool,
}

#[derive(Debug, Args)]
struct PolicyArgs {
    /// parametric, optimize, greedy or random; rollout takes it as the base.
    #[arg(long, default_value = "parametric")]
    policy: String,
    /// Parameter vector of the parametric policy, e.g. "1,1,7".
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    r: Option<Vec<usize>>,
    /// Rollout tails per successor on stochastic chains.
    #[arg(long)]
    tails: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
struct Ranges(Vec<(usize, usize)>);

fn parse_ranges(text: &str) -> std::result::Result<Ranges, String> {
    text.split(',')
        .map(|part| {
            let (lo, hi) = part
                .split_once(':')
                .ok_or_else(|| format!("range '{part}' is not lo:hi"))?;
            let lo = lo.trim().parse().map_err(|_| format!("bad lower bound in '{part}'"))?;
            let hi = hi.trim().parse().map_err(|_| format!("bad upper bound in '{part}'"))?;
            Ok((lo, hi))
        })
        .collect::<std::result::Result<_, _>>()
        .map(Ranges)
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric(_) => 3,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 2,
    }
}

pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

/// Parses `args` (program name first) and runs the command.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        let _ = writeln!(err, "error: {e}");
        return exit_code(&e);
    }
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_VAR} must be a positive integer, got '{value}'")))?;
    // A pool built earlier in this process keeps its size.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        None => {
            let name = cli.reproduce.expect("clap requires --reproduce without a subcommand");
            reproduce(&name, cli.out, cli.seed, out)
        }
        Some(Command::Optimize { common, search }) => {
            let exp = experiment(&common, Some(&search))?;
            let result = exp.optimize()?;
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                report::write_json(&dir.join("result.json"), &OptimizerRecord::from(&result))?;
                report::write_trace(File::create(dir.join("trace.csv"))?, &result.trace)?;
            }
            emit(out, &OptimizerRecord::from(&result))
        }
        Some(Command::Simulate { common, policy }) => {
            let exp = experiment(&common, None)?;
            let (policy, r) = resolve_policy(&exp, &policy)?;
            let run = exp.simulate(&policy)?;
            finish_run(&exp, &run, r, common.out.as_deref(), out)
        }
        Some(Command::Rollout { common, policy }) => {
            let mut exp = experiment(&common, None)?;
            if let Some(t) = policy.tails {
                exp.config.rollout.tails = t;
            }
            let (base, r) = resolve_policy(&exp, &policy)?;
            let run = exp.rollout(&base)?;
            finish_run(&exp, &run, r, common.out.as_deref(), out)
        }
        Some(Command::Plan {
            common,
            model,
            r,
            discount,
            goal,
            start,
        }) => {
            let exp = experiment(&common, None)?;
            let goal = goal
                .or_else(|| exp.config.plan.as_ref().map(|p| p.goal))
                .ok_or_else(|| Error::Config("plan needs --goal".into()))?;
            let settings = PlanSettings {
                discount,
                goal,
                start,
                variants: Vec::new(),
            };
            let (plan, counts) = match (&model, &r) {
                (Some(path), r) => {
                    let counts = report::load_counts(path)?;
                    check_counts(&exp, &counts)?;
                    (exp.plan(&counts, r.as_deref(), &settings)?, None)
                }
                (None, Some(r)) => {
                    let (plan, counts) = exp.learn_and_plan(r, &settings)?;
                    (plan, Some(counts))
                }
                (None, None) => return Err(Error::Config("plan needs --model or --r".into())),
            };
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                report::write_json(&dir.join("plan.json"), &plan)?;
                if let Some(counts) = &counts {
                    report::save_counts(&dir.join("counts.json"), counts)?;
                }
                if let Some(maze) = &plan.rendered {
                    std::fs::write(dir.join("maze.txt"), maze)?;
                }
            }
            emit(out, &plan)?;
            if let Some(maze) = &plan.rendered {
                write!(out, "{maze}")?;
            }
            Ok(())
        }
        Some(Command::Compare {
            common,
            r,
            tails,
            search,
        }) => {
            let mut exp = experiment(&common, Some(&search))?;
            if let Some(t) = tails {
                exp.config.rollout.tails = t;
            }
            let r = match r {
                Some(r) => r,
                None => exp.config.r.clone().map_or_else(|| exp.optimize().map(|s| s.r), Ok)?,
            };
            let runs = [
                exp.simulate(&exp.policy("parametric", Some(&r))?)?,
                exp.simulate(&exp.policy("greedy", None)?)?,
                exp.simulate(&exp.policy("random", None)?)?,
                exp.rollout(&exp.policy("greedy", None)?)?,
            ];
            let labels: Vec<String> = runs.iter().map(|r| r.label.clone()).collect();
            let curves: Vec<Vec<f64>> = runs.iter().map(PolicyRun::curve).collect();
            let summary = CompareSummary {
                environment: &exp.bundle.name,
                horizon: exp.config.horizon,
                r: &r,
                policies: runs.iter().map(PolicyRun::summary).collect(),
            };
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                report::write_curves(File::create(dir.join("curves.csv"))?, &labels, &curves)?;
                let first: Vec<&Trajectory> = runs.iter().filter_map(|r| r.trajectories.first()).collect();
                report::write_trajectories(File::create(dir.join("trajectory.csv"))?, &first)?;
                report::write_json(&dir.join("summary.json"), &summary)?;
            }
            emit(out, &summary)
        }
    }
}

#[derive(Serialize)]
struct CompareSummary<'a> {
    environment: &'a str,
    horizon: usize,
    r: &'a [usize],
    policies: Vec<PolicySummary>,
}

#[derive(Serialize)]
struct RunSummary<'a> {
    environment: &'a str,
    horizon: usize,
    r: Option<&'a [usize]>,
    #[serde(flatten)]
    summary: PolicySummary,
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<()> {
    out.write_all(report::to_json(value)?.as_bytes())?;
    Ok(())
}

fn check_counts(exp: &Experiment, counts: &CountTensor) -> Result<()> {
    let (s, m) = (exp.bundle.cmc.num_states(), exp.bundle.cmc.num_controls());
    if counts.num_states() != s || counts.num_controls() != m {
        return Err(Error::Shape(format!(
            "model has {} states x {} controls, environment {s} x {m}",
            counts.num_states(),
            counts.num_controls()
        )));
    }
    Ok(())
}

fn finish_run(
    exp: &Experiment,
    run: &PolicyRun,
    r: Option<Vec<usize>>,
    dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<()> {
    let summary = RunSummary {
        environment: &exp.bundle.name,
        horizon: exp.config.horizon,
        r: r.as_deref(),
        summary: run.summary(),
    };
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        let all: Vec<&Trajectory> = run.trajectories.iter().collect();
        report::write_trajectories(File::create(dir.join("trajectory.csv"))?, &all)?;
        report::write_curves(
            File::create(dir.join("curve.csv"))?,
            std::slice::from_ref(&run.label),
            &[run.curve()],
        )?;
        let mut counts = CountTensor::for_chain(&exp.bundle.cmc);
        for t in &run.trajectories {
            counts.merge(&t.counts)?;
        }
        report::save_counts(&dir.join("counts.json"), &counts)?;
        report::write_json(&dir.join("summary.json"), &summary)?;
    }
    emit(out, &summary)
}

fn resolve_policy(exp: &Experiment, args: &PolicyArgs) -> Result<(Policy, Option<Vec<usize>>)> {
    match args.policy.as_str() {
        "optimize" => {
            let r = exp.optimize()?.r;
            Ok((exp.policy("parametric", Some(&r))?, Some(r)))
        }
        "parametric" => {
            let r = args
                .r
                .clone()
                .or_else(|| exp.config.r.clone())
                .ok_or_else(|| Error::Config("the parametric policy needs --r (or --policy optimize)".into()))?;
            Ok((exp.policy("parametric", Some(&r))?, Some(r)))
        }
        name => Ok((exp.policy(name, None)?, None)),
    }
}

/// The shipped experiment for a builtin environment, or a bare config.
fn base_config(env: &EnvArgs, horizon: Option<usize>) -> Result<ExperimentConfig> {
    let shipped = env.env.as_deref().and_then(|name| {
        let base = name.split_once('-').map_or(name, |(b, _)| b);
        ExperimentConfig::builtin(base).ok()
    });
    let mut cfg = match shipped {
        Some(cfg) => cfg,
        None => {
            let horizon = horizon.ok_or_else(|| Error::Config("--horizon is required for this environment".into()))?;
            ExperimentConfig::parse(&format!(r#"{{"environment": "", "horizon": {horizon}}}"#))?
        }
    };
    if let Some(name) = &env.env {
        cfg.environment = name.clone();
    }
    Ok(cfg)
}

fn experiment(common: &Common, search: Option<&SearchArgs>) -> Result<Experiment> {
    let mut cfg = base_config(&common.env, common.horizon)?;
    if let Some(h) = common.horizon {
        cfg.horizon = h;
    }
    if let Some(n) = common.trajectories {
        cfg.trajectories = n;
    }
    if let Some(a) = common.alpha {
        cfg.alpha = a;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
        cfg.search.seed = None;
    }
    if let Some(args) = search {
        let s = &mut cfg.search;
        if let Some(m) = args.method {
            s.method = match m {
                MethodArg::Exhaustive => Method::Exhaustive,
                MethodArg::Cem => Method::Cem,
            };
        }
        if let Some(Ranges(ranges)) = &args.param_space {
            s.param_space = Some(ranges.clone());
        }
        s.population = args.population.unwrap_or(s.population);
        s.elite_fraction = args.elite_fraction.unwrap_or(s.elite_fraction);
        s.iterations = args.iterations.unwrap_or(s.iterations);
        s.restarts = args.restarts.unwrap_or(s.restarts);
        s.refine |= args.refine;
    }
    match &common.env.env_file {
        Some(path) => {
            if !path.exists() {
                return Err(Error::Config(format!(
                    "environment file {} does not exist",
                    path.display()
                )));
            }
            cfg.environment = path.display().to_string();
            let bundle = load_environment(path)?;
            Experiment::with_bundle(cfg, bundle)
        }
        None => Experiment::new(cfg),
    }
}

fn reproduce(name: &str, dir: Option<PathBuf>, seed: Option<u64>, out: &mut dyn Write) -> Result<()> {
    let mut cfg = if name.ends_with(".json") {
        ExperimentConfig::load(Path::new(name))?
    } else {
        ExperimentConfig::builtin(name)?
    };
    if let Some(s) = seed {
        cfg.seed = s;
        cfg.search.seed = None;
    }
    let dir = dir.or_else(|| cfg.output.clone());
    let rep = Experiment::new(cfg)?.reproduce()?;
    if let Some(dir) = dir {
        rep.write(&dir)?;
    }
    emit(out, &rep.summary())
}
