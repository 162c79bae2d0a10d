//! Search over control-set parameters: exhaustive enumeration and a
//! cross-entropy method with one binomial distribution per parameter.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{Cmc, CountTensor, State};
use crate::error::{Error, Result};
use crate::measures::InfoMeasure;
use crate::policies::{ControlSetParams, ParamRole, ParamShape, Policy, TIE_TOLERANCE};
use crate::simulator::{check_start, derive_seed, evaluate_unchecked, stream_rng, ObjectiveEstimate, SimConfig};

/// Largest number of candidates [`exhaustive_search`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Inclusive one-based integer ranges for every component of `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpace {
    shape: ParamShape,
    ranges: Vec<(usize, usize)>,
}

impl ParamSpace {
    pub fn new(shape: ParamShape, ranges: Vec<(usize, usize)>) -> Result<Self> {
        if ranges.len() != shape.len() {
            return Err(Error::Config(format!(
                "parameter space has {} ranges, shape expects {}",
                ranges.len(),
                shape.len()
            )));
        }
        if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| *lo < 1 || hi < lo) {
            return Err(Error::Config(format!("invalid parameter range [{lo}, {hi}]")));
        }
        Ok(Self { shape, ranges })
    }

    /// States in `1..=num_states`, controls in `1..=num_controls` and time
    /// constants in `1..=horizon`.
    pub fn standard(shape: ParamShape, num_states: usize, num_controls: usize, horizon: usize) -> Result<Self> {
        let ranges = (0..shape.len())
            .map(|n| match shape.role(n) {
                ParamRole::State => (1, num_states),
                ParamRole::Control => (1, num_controls),
                ParamRole::Time => (1, horizon),
            })
            .collect();
        Self::new(shape, ranges)
    }

    pub fn shape(&self) -> ParamShape {
        self.shape
    }

    pub fn ranges(&self) -> &[(usize, usize)] {
        &self.ranges
    }

    pub fn size(&self) -> u128 {
        self.ranges
            .iter()
            .map(|(lo, hi)| (hi - lo + 1) as u128)
            .fold(1u128, |acc, w| acc.saturating_mul(w))
    }

    pub fn contains(&self, r: &[usize]) -> bool {
        r.len() == self.ranges.len() && r.iter().zip(&self.ranges).all(|(x, (lo, hi))| lo <= x && x <= hi)
    }

    /// The `index`-th vector in lexicographic order (first component slowest).
    fn nth(&self, mut index: u128) -> Vec<usize> {
        let mut r = vec![0; self.ranges.len()];
        for (n, (lo, hi)) in self.ranges.iter().enumerate().rev() {
            let width = (hi - lo + 1) as u128;
            r[n] = lo + (index % width) as usize;
            index /= width;
        }
        r
    }

    /// Whether every entry slot of a role draws from the same range, so
    /// reordering entries keeps a vector inside the space.
    fn permutation_closed(&self) -> bool {
        let e = self.shape.entries;
        let same = |start: usize, len: usize| self.ranges[start..start + len].windows(2).all(|w| w[0] == w[1]);
        same(0, e) && same(e, e) && (self.shape.time_constants == 1 || same(2 * e, self.shape.time_constants))
    }

    /// Sorts restriction entries so equivalent vectors coincide.
    pub fn canonicalize(&self, r: &[usize]) -> Vec<usize> {
        if !self.permutation_closed() {
            return r.to_vec();
        }
        match ControlSetParams::from_vector(self.shape, r) {
            Ok(params) => params.canonical().to_vector(self.shape),
            Err(_) => r.to_vec(),
        }
    }
}

/// Outcome of a policy-space search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchResult {
    pub r: Vec<usize>,
    pub objective: ObjectiveEstimate,
    pub evaluated: usize,
    pub iterations: usize,
    pub trace: Vec<TraceRow>,
}

impl SearchResult {
    pub fn params(&self, shape: ParamShape) -> ControlSetParams {
        ControlSetParams::from_vector(shape, &self.r).expect("search results are valid vectors")
    }
}

/// One CEM iteration: the best objective seen so far and the updated
/// success probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub best_objective: f64,
    pub p: Vec<f64>,
}

/// The inputs shared by every candidate evaluation.
#[derive(Debug, Clone, Copy)]
pub struct SearchProblem<'a> {
    pub truth: &'a Cmc,
    pub measure: InfoMeasure,
    pub start: State,
    pub initial_counts: &'a CountTensor,
}

impl SearchProblem<'_> {
    fn policy(&self, shape: ParamShape, r: &[usize]) -> Option<Policy> {
        let params = ControlSetParams::from_vector(shape, r).ok()?;
        Policy::parametric(params, self.measure, self.truth.control_space()).ok()
    }

    /// Mean objective of `r`, or `None` when `r` is not a legal policy.
    fn score(&self, shape: ParamShape, r: &[usize], sim: &SimConfig) -> Option<f64> {
        let policy = self.policy(shape, r)?;
        Some(evaluate_unchecked(self.truth, &policy, self.start, self.initial_counts, sim).mean)
    }

    fn estimate(&self, shape: ParamShape, r: &[usize], sim: &SimConfig) -> Result<ObjectiveEstimate> {
        let policy = self
            .policy(shape, r)
            .ok_or_else(|| Error::Config(format!("parameter vector {r:?} is not a legal policy")))?;
        Ok(evaluate_unchecked(
            self.truth,
            &policy,
            self.start,
            self.initial_counts,
            sim,
        ))
    }
}

#[inline]
fn improves(candidate: f64, incumbent: f64) -> bool {
    candidate - incumbent > TIE_TOLERANCE * candidate.abs().max(incumbent.abs())
}

/// Evaluates every vector of `space`; ties keep the first vector in
/// lexicographic order. All candidates share the same random streams.
pub fn exhaustive_search(problem: &SearchProblem<'_>, space: &ParamSpace, sim: &SimConfig) -> Result<SearchResult> {
    check_start(problem.truth, problem.start, problem.initial_counts)?;
    let size = space.size();
    if size > EXHAUSTIVE_LIMIT {
        return Err(Error::Capacity(format!(
            "parameter space has {size} candidates (limit {EXHAUSTIVE_LIMIT}); use the cross-entropy method"
        )));
    }
    let shape = space.shape();
    let scores: Vec<Option<f64>> = (0..size)
        .into_par_iter()
        .map(|n| problem.score(shape, &space.nth(n), sim))
        .collect();
    let mut best: Option<(u128, f64)> = None;
    for (n, score) in scores.iter().enumerate() {
        if let Some(s) = *score {
            if best.is_none_or(|(_, b)| improves(s, b)) {
                best = Some((n as u128, s));
            }
        }
    }
    let (index, _) = best.ok_or_else(|| Error::Config("no candidate is a legal policy".into()))?;
    let r = space.nth(index);
    let objective = problem.estimate(shape, &r, sim)?;
    Ok(SearchResult {
        r,
        objective,
        evaluated: scores.iter().filter(|s| s.is_some()).count(),
        iterations: 1,
        trace: Vec::new(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CemParams {
    pub population: usize,
    pub elite_fraction: f64,
    pub initial_p: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub seed: u64,
    /// Independent runs from fresh distributions; the best result wins.
    pub restarts: usize,
}

impl Default for CemParams {
    fn default() -> Self {
        Self {
            population: 100,
            elite_fraction: 0.1,
            initial_p: 0.5,
            max_iterations: 50,
            tolerance: 1e-3,
            seed: 0,
            restarts: 1,
        }
    }
}

impl CemParams {
    fn validate(&self) -> Result<()> {
        if self.population == 0 || self.max_iterations == 0 || self.restarts == 0 {
            return Err(Error::Config("CEM needs a population, an iteration and a run".into()));
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(Error::Config("elite fraction must lie in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.initial_p) {
            return Err(Error::Config("initial success probability must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn elite_count(&self) -> usize {
        ((self.population as f64 * self.elite_fraction).ceil() as usize).clamp(1, self.population)
    }
}

/// Per-parameter binomial distributions: component `n` is drawn as
/// `lower[n] + Binomial(trials[n], p[n])`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CemState {
    pub lower: Vec<usize>,
    pub trials: Vec<usize>,
    pub p: Vec<f64>,
    pub iteration: usize,
}

impl CemState {
    pub fn new(space: &ParamSpace, initial_p: f64) -> Self {
        Self {
            lower: space.ranges().iter().map(|(lo, _)| *lo).collect(),
            trials: space.ranges().iter().map(|(lo, hi)| hi - lo).collect(),
            p: vec![initial_p.clamp(0.0, 1.0); space.ranges().len()],
            iteration: 0,
        }
    }

    /// Mean of each component under the current distributions.
    pub fn mean(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.trials)
            .zip(&self.p)
            .map(|((lo, n), p)| *lo as f64 + *n as f64 * p)
            .collect()
    }
}

/// Draws `m` candidate vectors.
pub fn cem_generate<R: Rng + ?Sized>(state: &CemState, m: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let dists: Vec<Binomial> = state
        .trials
        .iter()
        .zip(&state.p)
        .map(|(&n, &p)| Binomial::new(n as u64, p).expect("p lies in [0, 1]"))
        .collect();
    (0..m)
        .map(|_| {
            dists
                .iter()
                .zip(&state.lower)
                .zip(&state.trials)
                .map(|((d, lo), n)| lo + (d.sample(rng) as usize).min(*n))
                .collect()
        })
        .collect()
}

/// Refits every `p` to the elite mean: `p = mean(r - lower) / trials`.
pub fn cem_update(state: &CemState, elites: &[Vec<usize>]) -> Result<CemState> {
    if elites.is_empty() {
        return Err(Error::Config("CEM update needs at least one elite".into()));
    }
    let p = (0..state.p.len())
        .map(|n| {
            if state.trials[n] == 0 {
                return state.p[n];
            }
            let mean = elites.iter().map(|r| (r[n] - state.lower[n]) as f64).sum::<f64>() / elites.len() as f64;
            (mean / state.trials[n] as f64).clamp(0.0, 1.0)
        })
        .collect();
    Ok(CemState {
        lower: state.lower.clone(),
        trials: state.trials.clone(),
        p,
        iteration: state.iteration + 1,
    })
}

/// Generate / select / update until the distributions stop moving.
///
/// Candidates of one iteration share a master seed so they are compared on
/// identical noise. The returned vector is the best one ever evaluated,
/// re-estimated under `sim.master_seed`; with several restarts the best
/// re-estimate wins and its trace is returned.
pub fn cem_optimize(
    problem: &SearchProblem<'_>,
    space: &ParamSpace,
    sim: &SimConfig,
    params: &CemParams,
) -> Result<SearchResult> {
    check_start(problem.truth, problem.start, problem.initial_counts)?;
    params.validate()?;
    let mut best: Option<SearchResult> = None;
    let mut evaluated = 0;
    for run in 0..params.restarts {
        let seed = if run == 0 {
            params.seed
        } else {
            derive_seed(params.seed, run as u64)
        };
        let result = cem_run(problem, space, sim, params, seed)?;
        evaluated += result.evaluated;
        if best
            .as_ref()
            .is_none_or(|b| improves(result.objective.mean, b.objective.mean))
        {
            best = Some(result);
        }
    }
    let mut best = best.expect("at least one run");
    best.evaluated = evaluated;
    Ok(best)
}

fn cem_run(
    problem: &SearchProblem<'_>,
    space: &ParamSpace,
    sim: &SimConfig,
    params: &CemParams,
    seed: u64,
) -> Result<SearchResult> {
    let shape = space.shape();
    let elites_wanted = params.elite_count();
    let mut state = CemState::new(space, params.initial_p);
    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut trace = Vec::new();
    let mut evaluated = 0;
    // On a deterministic chain the score does not depend on the seed, so it
    // can be kept across iterations.
    let reuse = problem.truth.is_deterministic();
    let mut scored: HashMap<Vec<usize>, Option<f64>> = HashMap::new();

    for iteration in 1..=params.max_iterations {
        let mut rng = stream_rng(seed, iteration as u64);
        let candidates: Vec<Vec<usize>> = cem_generate(&state, params.population, &mut rng)
            .into_iter()
            .map(|r| space.canonicalize(&r))
            .collect();

        let iteration_sim = SimConfig {
            master_seed: derive_seed(sim.master_seed, iteration as u64),
            ..*sim
        };
        if !reuse {
            scored.clear();
        }
        let mut fresh: Vec<&Vec<usize>> = candidates.iter().filter(|r| !scored.contains_key(*r)).collect();
        fresh.sort();
        fresh.dedup();
        let results: Vec<(Vec<usize>, Option<f64>)> = fresh
            .par_iter()
            .map(|r| ((*r).clone(), problem.score(shape, r, &iteration_sim)))
            .collect();
        evaluated += results.len();
        scored.extend(results);

        // Distinct candidates only, in draw order, so repeated copies of one
        // vector cannot fill the elite set.
        let mut seen = HashSet::new();
        let mut ranked: Vec<(usize, f64)> = candidates
            .iter()
            .enumerate()
            .filter(|(_, r)| seen.insert(*r))
            .filter_map(|(n, r)| scored[r].map(|s| (n, s)))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if ranked.is_empty() {
            trace.push(TraceRow {
                iteration,
                best_objective: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1),
                p: state.p.clone(),
            });
            continue;
        }
        let (top, top_score) = ranked[0];
        if best.as_ref().is_none_or(|(_, b)| improves(top_score, *b)) {
            best = Some((candidates[top].clone(), top_score));
        }
        let elites: Vec<Vec<usize>> = ranked
            .iter()
            .take(elites_wanted)
            .map(|(n, _)| candidates[*n].clone())
            .collect();
        let next = cem_update(&state, &elites)?;
        let shift = next
            .p
            .iter()
            .zip(&state.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        state = next;
        trace.push(TraceRow {
            iteration,
            best_objective: best.as_ref().map_or(f64::NEG_INFINITY, |b| b.1),
            p: state.p.clone(),
        });
        if shift < params.tolerance {
            break;
        }
    }

    let (r, _) = best.ok_or_else(|| Error::Config("no generated candidate was a legal policy".into()))?;
    let objective = problem.estimate(shape, &r, sim)?;
    Ok(SearchResult {
        r,
        objective,
        evaluated,
        iterations: trace.len(),
        trace,
    })
}

/// Exhaustive search over the time constants of `r` with its
/// `(state, control)` entries held fixed. Returns `r` itself when nothing
/// beats it.
pub fn refine_time_constants(
    problem: &SearchProblem<'_>,
    space: &ParamSpace,
    sim: &SimConfig,
    r: &[usize],
) -> Result<SearchResult> {
    if !space.contains(r) {
        return Err(Error::Config(format!("{r:?} is outside the parameter space")));
    }
    let shape = space.shape();
    let ranges = space
        .ranges()
        .iter()
        .enumerate()
        .map(|(n, range)| match shape.role(n) {
            ParamRole::Time => *range,
            _ => (r[n], r[n]),
        })
        .collect();
    let pinned = ParamSpace::new(shape, ranges)?;
    let refined = exhaustive_search(problem, &pinned, sim)?;
    let start = problem.estimate(shape, r, sim)?;
    if improves(refined.objective.mean, start.mean) {
        Ok(refined)
    } else {
        Ok(SearchResult {
            r: r.to_vec(),
            objective: start,
            evaluated: refined.evaluated,
            iterations: 1,
            trace: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example_one() -> Cmc {
        Cmc::new(2, 2, vec![0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    fn space_1d(lo: usize, hi: usize) -> ParamSpace {
        ParamSpace::new(ParamShape::independent(1), vec![(1, 1), (1, 1), (lo, hi)]).unwrap()
    }

    #[test]
    fn space_validation_and_size() {
        let shape = ParamShape::independent(1);
        assert!(ParamSpace::new(shape, vec![(1, 2), (1, 2)]).is_err());
        assert!(ParamSpace::new(shape, vec![(0, 2), (1, 2), (1, 3)]).is_err());
        assert!(ParamSpace::new(shape, vec![(3, 2), (1, 2), (1, 3)]).is_err());
        let space = ParamSpace::standard(shape, 2, 2, 20).unwrap();
        assert_eq!(space.size(), 80);
        assert_eq!(space.nth(0), vec![1, 1, 1]);
        assert_eq!(space.nth(79), vec![2, 2, 20]);
        assert_eq!(space.nth(6), vec![1, 1, 7]);
        assert!(space.contains(&[2, 1, 20]));
        assert!(!space.contains(&[3, 1, 20]));
    }

    #[test]
    fn canonical_form_sorts_entries() {
        let space = ParamSpace::standard(ParamShape::independent(3), 4, 4, 40).unwrap();
        assert_eq!(
            space.canonicalize(&[3, 1, 2, 3, 1, 2, 28, 8, 18]),
            vec![1, 2, 3, 1, 2, 3, 8, 18, 28]
        );
    }

    #[test]
    fn degenerate_distributions_hit_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let space = ParamSpace::standard(ParamShape::independent(1), 5, 3, 30).unwrap();
        let mut state = CemState::new(&space, 0.0);
        assert!(cem_generate(&state, 50, &mut rng).iter().all(|r| r == &vec![1, 1, 1]));
        state.p = vec![1.0; 3];
        assert!(cem_generate(&state, 50, &mut rng).iter().all(|r| r == &vec![5, 3, 30]));
    }

    #[test]
    fn binomial_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = CemState::new(&space_1d(1, 21), 0.5);
        assert_eq!(state.trials[2], 20);
        let draws = cem_generate(&state, 10_000, &mut rng);
        let mean = draws.iter().map(|r| (r[2] - 1) as f64).sum::<f64>() / draws.len() as f64;
        assert!((mean - 10.0).abs() < 0.3, "{mean}");
    }

    #[test]
    fn update_fits_elite_mean() {
        let state = CemState::new(&space_1d(1, 21), 0.5);
        let same = cem_update(&state, &[vec![1, 1, 6], vec![1, 1, 6]]).unwrap();
        assert!((same.p[2] - 0.25).abs() < 1e-15);
        assert!((same.mean()[2] - 6.0).abs() < 1e-12);
        let mid = cem_update(&state, &[vec![1, 1, 11]]).unwrap();
        assert_eq!(mid.p[2], 0.5);
        let extremes = cem_update(&state, &[vec![1, 1, 1], vec![1, 1, 21]]).unwrap();
        assert_eq!(extremes.p[2], 0.5);
        assert_eq!(extremes.iteration, 1);
        // Zero-width ranges keep their probability.
        assert_eq!(extremes.p[0], 0.5);
        assert!(cem_update(&state, &[]).is_err());
    }

    #[test]
    fn identical_elites_at_a_bound_are_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let state = CemState::new(&space_1d(1, 21), 0.5);
        let pinned = cem_update(&state, &vec![vec![1, 1, 21]; 3]).unwrap();
        assert!(cem_generate(&pinned, 100, &mut rng).iter().all(|r| r[2] == 21));
    }

    #[test]
    fn exhaustive_guard() {
        let truth = example_one();
        let f0 = CountTensor::for_chain(&truth);
        let problem = SearchProblem {
            truth: &truth,
            measure: InfoMeasure::default(),
            start: 0,
            initial_counts: &f0,
        };
        let huge = ParamSpace::new(ParamShape::independent(1), vec![(1, 2), (1, 2), (1, 300_000)]).unwrap();
        let sim = SimConfig::new(20, 1, 0).unwrap();
        assert!(matches!(
            exhaustive_search(&problem, &huge, &sim),
            Err(Error::Capacity(_))
        ));
        let point = ParamSpace::new(ParamShape::independent(1), vec![(2, 2), (1, 1), (5, 5)]).unwrap();
        assert_eq!(exhaustive_search(&problem, &point, &sim).unwrap().r, vec![2, 1, 5]);
    }

    #[test]
    fn width_one_space_converges_immediately() {
        let truth = example_one();
        let f0 = CountTensor::for_chain(&truth);
        let problem = SearchProblem {
            truth: &truth,
            measure: InfoMeasure::default(),
            start: 0,
            initial_counts: &f0,
        };
        let point = ParamSpace::new(ParamShape::independent(1), vec![(1, 1), (1, 1), (7, 7)]).unwrap();
        let sim = SimConfig::new(20, 1, 0).unwrap();
        let result = cem_optimize(&problem, &point, &sim, &CemParams::default()).unwrap();
        assert_eq!(result.r, vec![1, 1, 7]);
        assert_eq!(result.iterations, 1);
    }

    #[test]
    fn refinement_finds_best_release_time() {
        let truth = example_one();
        let f0 = CountTensor::for_chain(&truth);
        let problem = SearchProblem {
            truth: &truth,
            measure: InfoMeasure::default(),
            start: 0,
            initial_counts: &f0,
        };
        let space = ParamSpace::standard(ParamShape::independent(1), 2, 2, 20).unwrap();
        let sim = SimConfig::new(20, 1, 0).unwrap();
        let refined = refine_time_constants(&problem, &space, &sim, &[1, 1, 15]).unwrap();
        assert_eq!(refined.r, vec![1, 1, 7]);
        let kept = refine_time_constants(&problem, &space, &sim, &[1, 1, 7]).unwrap();
        assert_eq!(kept.r, vec![1, 1, 7]);
        assert!(refine_time_constants(&problem, &space, &sim, &[3, 1, 7]).is_err());
    }

    #[test]
    fn restarts_never_lose_to_a_single_run() {
        let truth = Cmc::new(4, 4, {
            let mut t = vec![0.0; 64];
            for u in 0..4 {
                for i in 0..4 {
                    let j = if u < 3 && i == u { i + 1 } else { i };
                    t[(u * 4 + i) * 4 + j] = 1.0;
                }
            }
            t
        })
        .unwrap();
        let f0 = CountTensor::for_chain(&truth);
        let problem = SearchProblem {
            truth: &truth,
            measure: InfoMeasure::default(),
            start: 0,
            initial_counts: &f0,
        };
        let space = ParamSpace::standard(ParamShape::independent(3), 4, 4, 40).unwrap();
        let sim = SimConfig::new(40, 1, 0).unwrap();
        let one = CemParams {
            max_iterations: 10,
            ..CemParams::default()
        };
        let single = cem_optimize(&problem, &space, &sim, &one).unwrap();
        let many = cem_optimize(&problem, &space, &sim, &CemParams { restarts: 3, ..one }).unwrap();
        assert!(many.objective.mean >= single.objective.mean);
        assert!(many.evaluated > single.evaluated);
    }

    fn run_toy(space: &ParamSpace, target: &[usize], seed: u64) -> CemState {
        let score = |r: &Vec<usize>| -> f64 {
            -r.iter()
                .zip(target)
                .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                .sum::<f64>()
        };
        let mut state = CemState::new(space, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..50 {
            let mut pop = cem_generate(&state, 100, &mut rng);
            pop.sort_by(|a, b| score(b).total_cmp(&score(a)));
            state = cem_update(&state, &pop[..10]).unwrap();
        }
        state
    }

    #[test]
    fn cem_concentrates_on_separable_toy_objective() {
        let space = ParamSpace::new(
            ParamShape::independent(2),
            vec![(1, 10), (1, 10), (1, 4), (1, 4), (1, 30), (1, 30)],
        )
        .unwrap();
        // Maximiser on the range bounds: the distributions become point masses.
        let corner = [1usize, 10, 1, 4, 1, 30];
        let state = run_toy(&space, &corner, 9);
        assert!(state.p.iter().all(|&p| p == 0.0 || p == 1.0), "{:?}", state.p);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        assert!(cem_generate(&state, 50, &mut rng)
            .iter()
            .all(|r| r.as_slice() == corner));

        // Interior maximiser: binomial spread keeps some mass around it.
        let target = [3usize, 8, 1, 4, 12, 27];
        let mean = run_toy(&space, &target, 9).mean();
        for (m, t) in mean.iter().zip(&target) {
            assert!((m - *t as f64).abs() < 1.0, "{mean:?}");
        }
    }
}
