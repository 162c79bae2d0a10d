//! Trajectory simulation, Monte-Carlo objective estimates and a brute-force
//! dynamic-programming oracle for tiny instances.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{row_missing_information, Cmc, Control, CountTensor, State};
use crate::error::{check_index, Error, Result};
use crate::measures::InfoMeasure;
use crate::policies::{argmax_first, Policy};

pub type StreamRng = ChaCha8Rng;

/// Independent random stream `stream` of the generator seeded by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Mixes `salt` into `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        ^ salt
            .wrapping_add(0x9e37_79b9_7f4a_7c15)
            .wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub horizon: usize,
    pub num_trajectories: usize,
    pub master_seed: u64,
}

impl SimConfig {
    pub fn new(horizon: usize, num_trajectories: usize, master_seed: u64) -> Result<Self> {
        if horizon == 0 || num_trajectories == 0 {
            return Err(Error::Config("horizon and trajectory count must be >= 1".into()));
        }
        Ok(Self {
            horizon,
            num_trajectories,
            master_seed,
        })
    }

    /// One trajectory for deterministic chains, `stochastic` otherwise.
    pub fn for_chain(truth: &Cmc, horizon: usize, stochastic: usize, master_seed: u64) -> Result<Self> {
        let n = if truth.is_deterministic() { 1 } else { stochastic };
        Self::new(horizon, n, master_seed)
    }
}

/// Counts plus cached per-row scores for one exploring agent.
#[derive(Debug, Clone)]
pub(crate) struct Explorer<'a> {
    truth: &'a Cmc,
    measure: InfoMeasure,
    counts: CountTensor,
    gain: Vec<f64>,
    row_mi: Option<Vec<f64>>,
    pub(crate) state: State,
}

impl<'a> Explorer<'a> {
    pub(crate) fn new(
        truth: &'a Cmc,
        measure: InfoMeasure,
        counts: CountTensor,
        state: State,
        track_missing_information: bool,
    ) -> Self {
        let s = truth.num_states();
        let m = truth.num_controls();
        let mut gain = vec![0.0; s * m];
        for u in 0..m {
            for i in 0..s {
                gain[u * s + i] = measure.evaluate_row(counts.row(u, i));
            }
        }
        let row_mi = track_missing_information.then(|| {
            let mut mi = vec![0.0; s * m];
            for u in 0..m {
                for i in 0..s {
                    if truth.is_admissible(i, u) {
                        mi[u * s + i] = row_missing_information(truth.row(u, i), counts.row(u, i), measure.cfg.alpha());
                    }
                }
            }
            mi
        });
        Self {
            truth,
            measure,
            counts,
            gain,
            row_mi,
            state,
        }
    }

    pub(crate) fn truth(&self) -> &'a Cmc {
        self.truth
    }

    #[inline]
    pub(crate) fn gain(&self, i: State, u: Control) -> f64 {
        self.gain[u * self.truth.num_states() + i]
    }

    pub(crate) fn into_counts(self) -> CountTensor {
        self.counts
    }

    pub(crate) fn missing_information(&self) -> f64 {
        self.row_mi.as_ref().map_or(f64::NAN, |mi| mi.iter().sum())
    }

    /// Moves along `i -> j` under `u` and returns the gain earned against
    /// the counts before the update.
    pub(crate) fn apply(&mut self, u: Control, j: State) -> f64 {
        let i = self.state;
        let idx = u * self.truth.num_states() + i;
        let h = self.gain[idx];
        self.counts.record(u, i, j);
        let row = self.counts.row(u, i);
        self.gain[idx] = self.measure.evaluate_row(row);
        if let Some(mi) = self.row_mi.as_mut() {
            if self.truth.is_admissible(i, u) {
                mi[idx] = row_missing_information(self.truth.row(u, i), row, self.measure.cfg.alpha());
            }
        }
        self.state = j;
        h
    }
}

/// Anything that picks a control for an exploring agent.
pub(crate) trait Controller: Sync {
    fn choose(&self, k: usize, explorer: &Explorer<'_>, rng: &mut StreamRng) -> Control;
}

impl Controller for Policy {
    fn choose(&self, k: usize, explorer: &Explorer<'_>, rng: &mut StreamRng) -> Control {
        let i = explorer.state;
        self.select_with(k, i, |u| explorer.gain(i, u), rng)
    }
}

/// Runs periods `first..=last`, returning the accumulated gain.
pub(crate) fn advance<C: Controller + ?Sized>(
    explorer: &mut Explorer<'_>,
    controller: &C,
    first: usize,
    last: usize,
    rng: &mut StreamRng,
    mut records: Option<&mut Vec<PeriodRecord>>,
) -> f64 {
    let mut total = 0.0;
    for k in first..=last {
        let i = explorer.state;
        let u = controller.choose(k, explorer, rng);
        let j = explorer.truth.sample_next(i, u, rng);
        let h = explorer.apply(u, j);
        total += h;
        if let Some(out) = records.as_deref_mut() {
            out.push(PeriodRecord {
                period: k,
                state: i,
                control: u,
                h_bits: h,
                missing_info_bits: explorer.missing_information(),
            });
        }
    }
    total
}

/// One period of a trajectory: the state occupied, the control applied, the
/// gain earned and the missing information after the count update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodRecord {
    pub period: usize,
    pub state: State,
    pub control: Control,
    pub h_bits: f64,
    pub missing_info_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub policy: String,
    pub initial_missing_information: f64,
    pub records: Vec<PeriodRecord>,
    pub counts: CountTensor,
    pub final_state: State,
}

impl Trajectory {
    pub fn total_h(&self) -> f64 {
        self.records.iter().map(|r| r.h_bits).sum()
    }

    pub fn final_missing_information(&self) -> f64 {
        self.records
            .last()
            .map_or(self.initial_missing_information, |r| r.missing_info_bits)
    }

    /// Number of samples of row `(i, u)`.
    pub fn visits(&self, i: State, u: Control) -> u64 {
        self.counts.row_total(u, i)
    }

    /// Missing information after each period, starting with period 0.
    pub fn missing_information_curve(&self) -> Vec<f64> {
        std::iter::once(self.initial_missing_information)
            .chain(self.records.iter().map(|r| r.missing_info_bits))
            .collect()
    }

    /// First period at which the trajectory occupies `state`, if any.
    pub fn first_arrival(&self, state: State) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.state == state)
            .map(|r| r.period)
            .or_else(|| (self.final_state == state).then_some(self.records.len() + 1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectiveEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub totals: Vec<f64>,
}

impl ObjectiveEstimate {
    pub fn from_totals(totals: Vec<f64>) -> Self {
        let n = totals.len() as f64;
        let mean = totals.iter().sum::<f64>() / n;
        let stderr = if totals.len() > 1 {
            let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, totals }
    }
}

pub(crate) fn check_start(truth: &Cmc, i0: State, f0: &CountTensor) -> Result<()> {
    check_index("state", i0, truth.num_states())?;
    f0.check_shape(truth.num_states(), truth.num_controls())
}

fn check_policy(truth: &Cmc, policy: &Policy) -> Result<()> {
    if policy.space().num_states() != truth.num_states() || policy.space().num_controls() != truth.num_controls() {
        return Err(Error::Shape("policy and chain disagree on dimensions".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn run_controller<C: Controller + ?Sized>(
    truth: &Cmc,
    controller: &C,
    label: &str,
    measure: InfoMeasure,
    i0: State,
    f0: &CountTensor,
    horizon: usize,
    rng: &mut StreamRng,
) -> Trajectory {
    let mut explorer = Explorer::new(truth, measure, f0.clone(), i0, true);
    let initial_missing_information = explorer.missing_information();
    let mut records = Vec::with_capacity(horizon);
    advance(&mut explorer, controller, 1, horizon, rng, Some(&mut records));
    let final_state = explorer.state;
    Trajectory {
        policy: label.to_string(),
        initial_missing_information,
        records,
        counts: explorer.into_counts(),
        final_state,
    }
}

/// Simulates one trajectory of `cfg.horizon` periods.
pub fn run_trajectory(
    truth: &Cmc,
    policy: &Policy,
    i0: State,
    f0: &CountTensor,
    cfg: &SimConfig,
    traj_index: u64,
) -> Result<Trajectory> {
    check_start(truth, i0, f0)?;
    check_policy(truth, policy)?;
    let mut rng = stream_rng(cfg.master_seed, traj_index);
    Ok(run_controller(
        truth,
        policy,
        policy.label(),
        *policy.measure(),
        i0,
        f0,
        cfg.horizon,
        &mut rng,
    ))
}

/// Simulates `cfg.num_trajectories` independent trajectories.
pub fn run_trajectories(
    truth: &Cmc,
    policy: &Policy,
    i0: State,
    f0: &CountTensor,
    cfg: &SimConfig,
) -> Result<Vec<Trajectory>> {
    check_start(truth, i0, f0)?;
    check_policy(truth, policy)?;
    Ok((0..cfg.num_trajectories as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(cfg.master_seed, t);
            run_controller(
                truth,
                policy,
                policy.label(),
                *policy.measure(),
                i0,
                f0,
                cfg.horizon,
                &mut rng,
            )
        })
        .collect())
}

/// Monte-Carlo estimate of the expected total gain of `policy`.
pub fn evaluate_objective(
    truth: &Cmc,
    policy: &Policy,
    i0: State,
    f0: &CountTensor,
    cfg: &SimConfig,
) -> Result<ObjectiveEstimate> {
    check_start(truth, i0, f0)?;
    check_policy(truth, policy)?;
    Ok(evaluate_unchecked(truth, policy, i0, f0, cfg))
}

pub(crate) fn evaluate_unchecked(
    truth: &Cmc,
    policy: &Policy,
    i0: State,
    f0: &CountTensor,
    cfg: &SimConfig,
) -> ObjectiveEstimate {
    let totals: Vec<f64> = (0..cfg.num_trajectories as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(cfg.master_seed, t);
            let mut explorer = Explorer::new(truth, *policy.measure(), f0.clone(), i0, false);
            advance(&mut explorer, policy, 1, cfg.horizon, &mut rng, None)
        })
        .collect();
    ObjectiveEstimate::from_totals(totals)
}

/// Period-wise mean missing information over trajectories of equal length.
pub fn mean_missing_information(trajectories: &[Trajectory]) -> Vec<f64> {
    let Some(first) = trajectories.first() else {
        return Vec::new();
    };
    let mut mean = vec![0.0; first.records.len() + 1];
    for t in trajectories {
        for (acc, v) in mean.iter_mut().zip(t.missing_information_curve()) {
            *acc += v;
        }
    }
    let n = trajectories.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

/// Optimal expected total gain from the exact finite-horizon recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpSolution {
    pub value: f64,
    pub first_control: Control,
}

/// Largest horizon the exact recursion accepts.
pub const DP_MAX_HORIZON: usize = 8;
/// Largest `|S| * |U|` the exact recursion accepts.
pub const DP_MAX_ROWS: usize = 8;

/// Exact backward recursion over every reachable `(state, counts)` pair,
/// using the true transition probabilities. Only feasible for tiny chains.
pub fn exact_dp_oracle(truth: &Cmc, measure: &InfoMeasure, i0: State, horizon: usize) -> Result<DpSolution> {
    check_index("state", i0, truth.num_states())?;
    if horizon > DP_MAX_HORIZON || truth.num_states() * truth.num_controls() > DP_MAX_ROWS {
        return Err(Error::Capacity(format!(
            "exact recursion is limited to N <= {DP_MAX_HORIZON} and |S||U| <= {DP_MAX_ROWS} \
             (got N = {horizon}, |S||U| = {})",
            truth.num_states() * truth.num_controls()
        )));
    }
    if horizon == 0 {
        return Err(Error::Config("horizon must be >= 1".into()));
    }
    let mut memo = HashMap::new();
    let counts = CountTensor::for_chain(truth);
    let values: Vec<(Control, f64)> = truth
        .admissible_controls(i0)
        .map(|u| (u, q_value(truth, measure, 1, horizon, i0, u, &counts, &mut memo)))
        .collect();
    let best = argmax_first(0..values.len(), |n| values[n].1).expect("state has a control");
    Ok(DpSolution {
        value: values[best].1,
        first_control: values[best].0,
    })
}

type DpKey = (usize, State, Vec<u32>);

fn optimal_to_go(
    truth: &Cmc,
    measure: &InfoMeasure,
    k: usize,
    horizon: usize,
    i: State,
    counts: &CountTensor,
    memo: &mut HashMap<DpKey, f64>,
) -> f64 {
    if k > horizon {
        return 0.0;
    }
    let key = (k, i, counts.as_slice().to_vec());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let best = truth
        .admissible_controls(i)
        .map(|u| q_value(truth, measure, k, horizon, i, u, counts, memo))
        .fold(f64::NEG_INFINITY, f64::max);
    memo.insert(key, best);
    best
}

#[allow(clippy::too_many_arguments)]
fn q_value(
    truth: &Cmc,
    measure: &InfoMeasure,
    k: usize,
    horizon: usize,
    i: State,
    u: Control,
    counts: &CountTensor,
    memo: &mut HashMap<DpKey, f64>,
) -> f64 {
    let mut value = measure.evaluate(i, u, counts);
    for (j, p) in truth.support(u, i) {
        let mut next = counts.clone();
        next.record(u, i, j);
        value += p * optimal_to_go(truth, measure, k + 1, horizon, j, &next, memo);
    }
    value
}
