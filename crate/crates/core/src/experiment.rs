//! Experiment configurations and the pipeline behind `--reproduce`:
//! search for r*, simulate it against the baselines, roll out, plan.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chain::{missing_information, ControlSpace, CountTensor, EstimatorConfig, State};
use crate::environments::{builtin, load_environment, EnvironmentBundle};
use crate::error::{Error, Result};
use crate::measures::InfoMeasure;
use crate::optimizer::{
    cem_optimize, exhaustive_search, refine_time_constants, CemParams, ParamSpace, SearchProblem, SearchResult,
    EXHAUSTIVE_LIMIT,
};
use crate::planner::{extract_path, policy_iteration, PlanExport, PlanningProblem};
use crate::policies::{control_set, ControlSetParams, Policy};
use crate::report::{self, OptimizerRecord};
use crate::rollout::{run_rollouts, RolloutConfig};
use crate::simulator::{mean_missing_information, run_trajectories, ObjectiveEstimate, SimConfig, Trajectory};

const EXAMPLES: [&str; 6] = [
    include_str!("../fixtures/experiments/example1.json"),
    include_str!("../fixtures/experiments/example2.json"),
    include_str!("../fixtures/experiments/example3.json"),
    include_str!("../fixtures/experiments/example4.json"),
    include_str!("../fixtures/experiments/example5.json"),
    include_str!("../fixtures/experiments/example6.json"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Exhaustive when the space has at most `EXHAUSTIVE_LIMIT` vectors, CEM otherwise.
    #[default]
    Auto,
    Exhaustive,
    Cem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSettings {
    pub method: Method,
    /// One-based `[lo, hi]` per component; the full standard space if absent.
    pub param_space: Option<Vec<(usize, usize)>>,
    /// Monte-Carlo trajectories per candidate; the experiment's count if absent.
    pub trajectories: Option<usize>,
    pub population: usize,
    pub elite_fraction: f64,
    pub initial_p: f64,
    pub iterations: usize,
    pub tolerance: f64,
    pub restarts: usize,
    /// Exhaustive pass over the time constants of the CEM result.
    pub refine: bool,
    pub seed: Option<u64>,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let cem = CemParams::default();
        Self {
            method: Method::Auto,
            param_space: None,
            trajectories: None,
            population: cem.population,
            elite_fraction: cem.elite_fraction,
            initial_p: cem.initial_p,
            iterations: cem.max_iterations,
            tolerance: cem.tolerance,
            restarts: cem.restarts,
            refine: false,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutSettings {
    /// Base policies: `parametric`, `greedy` or `random`.
    pub bases: Vec<String>,
    /// Tails per successor on stochastic chains.
    pub tails: usize,
    pub trajectories: Option<usize>,
}

impl Default for RolloutSettings {
    fn default() -> Self {
        Self {
            bases: vec!["parametric".into(), "greedy".into()],
            tails: 100,
            trajectories: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSettings {
    #[serde(default = "default_discount")]
    pub discount: f64,
    /// One-based goal state.
    pub goal: usize,
    /// One-based start state; the entrance if absent.
    #[serde(default)]
    pub start: Option<usize>,
    /// Environment variants planned on in addition to the base environment.
    #[serde(default)]
    pub variants: Vec<String>,
}

fn default_discount() -> f64 {
    0.99
}

fn default_alpha() -> f64 {
    0.05
}

fn default_one() -> usize {
    1
}

fn default_baseline() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Builtin name (`example4`) or path to an environment document.
    pub environment: String,
    pub horizon: usize,
    /// Monte-Carlo trajectories on stochastic chains.
    #[serde(default = "default_one")]
    pub trajectories: usize,
    /// Trajectories for the random baseline on deterministic chains.
    #[serde(default = "default_baseline")]
    pub baseline_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Fixed parameter vector; skips the search when present.
    #[serde(default)]
    pub r: Option<Vec<usize>>,
    /// Reference vector, reported next to the search result.
    #[serde(default)]
    pub reference_r: Option<Vec<usize>>,
    #[serde(default)]
    pub search: SearchSettings,
    #[serde(default)]
    pub rollout: RolloutSettings,
    #[serde(default)]
    pub plan: Option<PlanSettings>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// The shipped configuration for `exampleN`.
    pub fn builtin(name: &str) -> Result<Self> {
        let n: usize = name
            .strip_prefix("example")
            .and_then(|n| n.parse().ok())
            .filter(|n| (1..=6).contains(n))
            .ok_or_else(|| Error::Config(format!("no experiment '{name}'; choose example1 to example6")))?;
        Self::parse(EXAMPLES[n - 1])
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::Document(format!("line {} column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Document(m) => Error::Document(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be >= 1".into()));
        }
        if self.trajectories == 0 || self.baseline_trajectories == 0 {
            return Err(Error::Config("trajectory counts must be >= 1".into()));
        }
        EstimatorConfig::new(self.alpha)?;
        Ok(())
    }
}

/// Resolves a builtin name, falling back to a file path.
pub fn resolve_environment(reference: &str) -> Result<EnvironmentBundle> {
    let path = Path::new(reference);
    if reference.ends_with(".json") || path.components().count() > 1 {
        if !path.exists() {
            return Err(Error::Config(format!("environment file {reference} does not exist")));
        }
        return load_environment(path);
    }
    builtin(reference)
}

/// One policy's trajectories and their summary.
#[derive(Debug, Clone)]
pub struct PolicyRun {
    pub label: String,
    pub trajectories: Vec<Trajectory>,
}

impl PolicyRun {
    pub fn objective(&self) -> ObjectiveEstimate {
        ObjectiveEstimate::from_totals(self.trajectories.iter().map(Trajectory::total_h).collect())
    }

    pub fn final_missing_information(&self) -> f64 {
        let n = self.trajectories.len() as f64;
        self.trajectories
            .iter()
            .map(Trajectory::final_missing_information)
            .sum::<f64>()
            / n
    }

    pub fn curve(&self) -> Vec<f64> {
        mean_missing_information(&self.trajectories)
    }

    pub fn summary(&self) -> PolicySummary {
        let objective = self.objective();
        PolicySummary {
            policy: self.label.clone(),
            trajectories: self.trajectories.len(),
            objective_mean: objective.mean,
            objective_stderr: objective.stderr,
            final_missing_information: self.final_missing_information(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: String,
    pub trajectories: usize,
    pub objective_mean: f64,
    pub objective_stderr: f64,
    pub final_missing_information: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanOutcome {
    pub environment: String,
    pub iterations: usize,
    #[serde(flatten)]
    pub export: PlanExport,
    #[serde(skip)]
    pub rendered: Option<String>,
}

/// An environment together with the estimator, initial counts and settings.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub bundle: EnvironmentBundle,
    pub measure: InfoMeasure,
    pub initial_counts: CountTensor,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let bundle = resolve_environment(&config.environment)?;
        Self::with_bundle(config, bundle)
    }

    pub fn with_bundle(config: ExperimentConfig, bundle: EnvironmentBundle) -> Result<Self> {
        config.validate()?;
        let measure = InfoMeasure::pig(EstimatorConfig::new(config.alpha)?);
        let initial_counts = CountTensor::for_chain(&bundle.cmc);
        Ok(Self {
            config,
            bundle,
            measure,
            initial_counts,
        })
    }

    pub fn space(&self) -> ControlSpace {
        self.bundle.cmc.control_space()
    }

    pub fn initial_missing_information(&self) -> Result<f64> {
        missing_information(&self.bundle.cmc, &self.initial_counts, &self.measure.cfg)
    }

    fn stochastic(&self) -> bool {
        !self.bundle.cmc.is_deterministic()
    }

    /// Trajectories for a policy; random policies on deterministic chains
    /// use the baseline count.
    pub fn sim(&self, random: bool) -> Result<SimConfig> {
        let n = if self.stochastic() {
            self.config.trajectories
        } else if random {
            self.config.baseline_trajectories
        } else {
            1
        };
        SimConfig::new(self.config.horizon, n, self.config.seed)
    }

    pub fn param_space(&self) -> Result<ParamSpace> {
        match &self.config.search.param_space {
            Some(ranges) => ParamSpace::new(self.bundle.shape, ranges.clone()),
            None => self.bundle.param_space(self.config.horizon),
        }
    }

    pub fn params(&self, r: &[usize]) -> Result<ControlSetParams> {
        ControlSetParams::from_vector(self.bundle.shape, r)
    }

    pub fn policy(&self, name: &str, r: Option<&[usize]>) -> Result<Policy> {
        match name {
            "parametric" => {
                let r = r.ok_or_else(|| Error::Config("the parametric policy needs a parameter vector".into()))?;
                Policy::parametric(self.params(r)?, self.measure, self.space())
            }
            "greedy" => Ok(Policy::greedy(self.measure, self.space())),
            "random" => Ok(Policy::uniform_random(self.measure, self.space())),
            other => Err(Error::Config(format!(
                "unknown policy '{other}'; expected parametric, greedy or random"
            ))),
        }
    }

    fn problem(&self) -> SearchProblem<'_> {
        SearchProblem {
            truth: &self.bundle.cmc,
            measure: self.measure,
            start: self.bundle.entrance,
            initial_counts: &self.initial_counts,
        }
    }

    /// Searches for r* according to the search settings.
    pub fn optimize(&self) -> Result<SearchResult> {
        let s = &self.config.search;
        let space = self.param_space()?;
        let n = if self.stochastic() {
            s.trajectories.unwrap_or(self.config.trajectories)
        } else {
            1
        };
        let sim = SimConfig::new(self.config.horizon, n, self.config.seed)?;
        let problem = self.problem();
        let exhaustive = match s.method {
            Method::Auto => space.size() <= EXHAUSTIVE_LIMIT,
            Method::Exhaustive => true,
            Method::Cem => false,
        };
        if exhaustive {
            return exhaustive_search(&problem, &space, &sim);
        }
        let params = CemParams {
            population: s.population,
            elite_fraction: s.elite_fraction,
            initial_p: s.initial_p,
            max_iterations: s.iterations,
            tolerance: s.tolerance,
            seed: s.seed.unwrap_or(self.config.seed),
            restarts: s.restarts,
        };
        let found = cem_optimize(&problem, &space, &sim, &params)?;
        if !s.refine {
            return Ok(found);
        }
        let refined = refine_time_constants(&problem, &space, &sim, &found.r)?;
        Ok(SearchResult {
            iterations: found.iterations,
            evaluated: found.evaluated + refined.evaluated,
            trace: found.trace,
            ..refined
        })
    }

    /// The configured vector, or the search result.
    pub fn resolve_r(&self) -> Result<(Vec<usize>, Option<SearchResult>)> {
        match &self.config.r {
            Some(r) => {
                self.params(r)?;
                Ok((r.clone(), None))
            }
            None => {
                let found = self.optimize()?;
                Ok((found.r.clone(), Some(found)))
            }
        }
    }

    pub fn simulate(&self, policy: &Policy) -> Result<PolicyRun> {
        let random = policy.label() == "random";
        let trajectories = run_trajectories(
            &self.bundle.cmc,
            policy,
            self.bundle.entrance,
            &self.initial_counts,
            &self.sim(random)?,
        )?;
        Ok(PolicyRun {
            label: policy.label().to_string(),
            trajectories,
        })
    }

    pub fn rollout(&self, base: &Policy) -> Result<PolicyRun> {
        let random = base.label() == "random";
        let cfg = RolloutConfig::for_chain(
            &self.bundle.cmc,
            base.clone(),
            self.config.horizon,
            self.config.rollout.tails,
        )?;
        let mut sim = self.sim(random)?;
        if self.stochastic() || random {
            sim.num_trajectories = self.config.rollout.trajectories.unwrap_or(sim.num_trajectories);
        }
        if sim.num_trajectories == 0 {
            return Err(Error::Config("rollout trajectories must be >= 1".into()));
        }
        let mut trajectories = run_rollouts(&self.bundle.cmc, &cfg, self.bundle.entrance, &self.initial_counts, &sim)?;
        let label = match base.label() {
            "parametric" => "rollout".to_string(),
            other => format!("rollout-{other}"),
        };
        for t in &mut trajectories {
            t.policy = label.clone();
        }
        Ok(PolicyRun { label, trajectories })
    }

    /// Plans on `counts` with the admissible sets `U_0(i, r)`, or the
    /// observed controls of each state when `r` is absent.
    pub fn plan(&self, counts: &CountTensor, r: Option<&[usize]>, settings: &PlanSettings) -> Result<PlanOutcome> {
        let s = self.bundle.cmc.num_states();
        let one_based = |what: &str, v: usize| -> Result<State> {
            if (1..=s).contains(&v) {
                Ok(v - 1)
            } else {
                Err(Error::Config(format!("{what} state {v} outside 1..={s}")))
            }
        };
        let goal = one_based("goal", settings.goal)?;
        let start = match settings.start {
            Some(v) => one_based("start", v)?,
            None => self.bundle.entrance,
        };
        let space = self.space();
        let admissible: Vec<Vec<_>> = match r {
            Some(r) => {
                let params = self.params(r)?;
                (0..s).map(|i| control_set(0, i, &params, space.controls(i))).collect()
            }
            // Without r, only controls the model has data for.
            None => (0..s)
                .map(|i| {
                    let seen: Vec<_> = space
                        .controls(i)
                        .iter()
                        .copied()
                        .filter(|&u| counts.row_total(u, i) > 0)
                        .collect();
                    if seen.is_empty() {
                        space.controls(i).to_vec()
                    } else {
                        seen
                    }
                })
                .collect(),
        };
        let problem = PlanningProblem::from_counts(
            counts,
            &self.measure.cfg,
            PlanningProblem::goal_costs(s, goal),
            settings.discount,
            admissible,
        )?;
        let solution = policy_iteration(&problem, &problem.default_policy())?;
        let path = extract_path(&problem, &solution.policy, start, goal);
        Ok(PlanOutcome {
            environment: self.bundle.name.clone(),
            iterations: solution.iterations,
            export: PlanExport::new(&solution, &path),
            rendered: self.bundle.render(&path),
        })
    }

    /// Re-learns the model on this environment with `r` and plans on it.
    pub fn learn_and_plan(&self, r: &[usize], settings: &PlanSettings) -> Result<(PlanOutcome, CountTensor)> {
        let run = self.simulate(&self.policy("parametric", Some(r))?)?;
        let mut counts = CountTensor::for_chain(&self.bundle.cmc);
        for t in &run.trajectories {
            counts.merge(&t.counts)?;
        }
        let outcome = self.plan(&counts, Some(r), settings)?;
        Ok((outcome, counts))
    }

    /// The full pipeline: search, baselines, rollouts and plans.
    pub fn reproduce(&self) -> Result<Reproduction> {
        let initial = self.initial_missing_information()?;
        let (r, search) = self.resolve_r()?;
        let parametric = self.policy("parametric", Some(&r))?;
        let mut runs = vec![self.simulate(&parametric)?];
        for name in ["greedy", "random"] {
            runs.push(self.simulate(&self.policy(name, None)?)?);
        }
        for base in &self.config.rollout.bases {
            let base = self.policy(base, Some(&r))?;
            runs.push(self.rollout(&base)?);
        }
        let mut plans = Vec::new();
        let mut counts = None;
        if let Some(settings) = &self.config.plan {
            let (outcome, learned) = self.learn_and_plan(&r, settings)?;
            plans.push(outcome);
            counts = Some(learned);
            for variant in &settings.variants {
                let name = format!("{}-{variant}", self.config.environment);
                let other = Experiment::with_bundle(self.config.clone(), builtin(&name)?)?;
                plans.push(other.learn_and_plan(&r, settings)?.0);
            }
        }
        Ok(Reproduction {
            environment: self.bundle.name.clone(),
            horizon: self.config.horizon,
            initial_missing_information: initial,
            r,
            reference_r: self.config.reference_r.clone(),
            search,
            runs,
            plans,
            counts,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Reproduction {
    pub environment: String,
    pub horizon: usize,
    pub initial_missing_information: f64,
    pub r: Vec<usize>,
    pub reference_r: Option<Vec<usize>>,
    pub search: Option<SearchResult>,
    pub runs: Vec<PolicyRun>,
    pub plans: Vec<PlanOutcome>,
    /// Counts learned by the parametric policy on the base environment.
    pub counts: Option<CountTensor>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReproductionSummary<'a> {
    pub environment: &'a str,
    pub horizon: usize,
    pub initial_missing_information: f64,
    pub r: &'a [usize],
    pub reference_r: Option<&'a [usize]>,
    pub search: Option<OptimizerRecord>,
    pub policies: Vec<PolicySummary>,
    pub plans: Vec<&'a PlanOutcome>,
}

impl Reproduction {
    pub fn run(&self, label: &str) -> Option<&PolicyRun> {
        self.runs.iter().find(|r| r.label == label)
    }

    pub fn summary(&self) -> ReproductionSummary<'_> {
        ReproductionSummary {
            environment: &self.environment,
            horizon: self.horizon,
            initial_missing_information: self.initial_missing_information,
            r: &self.r,
            reference_r: self.reference_r.as_deref(),
            search: self.search.as_ref().map(OptimizerRecord::from),
            policies: self.runs.iter().map(PolicyRun::summary).collect(),
            plans: self.plans.iter().collect(),
        }
    }

    /// Writes every table and record into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        if let Some(search) = &self.search {
            report::write_json(&dir.join("result.json"), &OptimizerRecord::from(search))?;
            report::write_trace(std::fs::File::create(dir.join("trace.csv"))?, &search.trace)?;
        }
        let first: Vec<&Trajectory> = self.runs.iter().filter_map(|r| r.trajectories.first()).collect();
        report::write_trajectories(std::fs::File::create(dir.join("trajectory.csv"))?, &first)?;
        let labels: Vec<String> = self.runs.iter().map(|r| r.label.clone()).collect();
        let curves: Vec<Vec<f64>> = self.runs.iter().map(PolicyRun::curve).collect();
        report::write_curves(std::fs::File::create(dir.join("curves.csv"))?, &labels, &curves)?;
        if let Some(counts) = &self.counts {
            report::save_counts(&dir.join("counts.json"), counts)?;
        }
        for plan in &self.plans {
            report::write_json(&dir.join(format!("plan-{}.json", plan.environment)), plan)?;
            if let Some(maze) = &plan.rendered {
                std::fs::write(dir.join(format!("maze-{}.txt", plan.environment)), maze)?;
            }
        }
        report::write_json(&dir.join("summary.json"), &self.summary())
    }
}
