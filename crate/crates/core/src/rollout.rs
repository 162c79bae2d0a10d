//! One-step lookahead with a simulated base policy supplying the tail value.

use rand::Rng;
use rayon::prelude::*;

use crate::chain::{Cmc, Control, CountTensor, State};
use crate::error::{check_index, Error, Result};
use crate::policies::{argmax_first, Policy, PolicyKind};
use crate::simulator::{
    advance, check_start, run_controller, stream_rng, Controller, Explorer, ObjectiveEstimate, SimConfig, StreamRng,
    Trajectory,
};

/// Which controls the lookahead compares at each period.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RolloutCandidates {
    /// Every admissible control of the current state.
    #[default]
    Full,
    /// Only the controls the base policy itself may use at this period.
    BaseControlSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutConfig {
    pub base: Policy,
    /// Simulated tails per successor state.
    pub tails: usize,
    pub horizon: usize,
    pub candidates: RolloutCandidates,
}

impl RolloutConfig {
    pub fn new(base: Policy, tails: usize, horizon: usize) -> Result<Self> {
        if tails == 0 || horizon == 0 {
            return Err(Error::Config("rollout needs tails >= 1 and horizon >= 1".into()));
        }
        Ok(Self {
            base,
            tails,
            horizon,
            candidates: RolloutCandidates::Full,
        })
    }

    /// 1 tail for deterministic chains, `stochastic` tails otherwise.
    pub fn for_chain(truth: &Cmc, base: Policy, horizon: usize, stochastic: usize) -> Result<Self> {
        let tails = if truth.is_deterministic() { 1 } else { stochastic };
        Self::new(base, tails, horizon)
    }

    pub fn with_candidates(mut self, candidates: RolloutCandidates) -> Self {
        self.candidates = candidates;
        self
    }

    fn tails_needed(&self, truth: &Cmc) -> usize {
        let random_base = matches!(self.base.kind(), PolicyKind::UniformRandom);
        if truth.is_deterministic() && !random_base {
            1
        } else {
            self.tails
        }
    }
}

fn tail_mean(explorer: &Explorer<'_>, base: &Policy, k: usize, horizon: usize, tails: usize, seed: u64) -> f64 {
    if k >= horizon {
        return 0.0;
    }
    let sum: f64 = (0..tails as u64)
        .map(|t| {
            let mut rng = stream_rng(seed, t);
            let mut tail = explorer.clone();
            advance(&mut tail, base, k + 1, horizon, &mut rng, None)
        })
        .sum();
    sum / tails as f64
}

/// Mean gain collected by `base` over periods `k + 1..=horizon`, starting in
/// `j` with counts `counts`, over `tails` simulated continuations.
#[allow(clippy::too_many_arguments)]
pub fn rollout_value(
    truth: &Cmc,
    base: &Policy,
    k: usize,
    j: State,
    counts: &CountTensor,
    horizon: usize,
    tails: usize,
    seed: u64,
) -> Result<f64> {
    check_start(truth, j, counts)?;
    if tails == 0 {
        return Err(Error::Config("tails must be >= 1".into()));
    }
    let explorer = Explorer::new(truth, *base.measure(), counts.clone(), j, false);
    Ok(tail_mean(&explorer, base, k, horizon, tails, seed))
}

struct Lookahead<'c> {
    cfg: &'c RolloutConfig,
    tails: usize,
}

impl Lookahead<'_> {
    fn q_values(&self, k: usize, explorer: &Explorer<'_>, seed: u64) -> Vec<(Control, f64)> {
        let truth = explorer.truth();
        let i = explorer.state;
        let candidates: Vec<Control> = match self.cfg.candidates {
            RolloutCandidates::Full => truth.admissible_controls(i).collect(),
            RolloutCandidates::BaseControlSet => self.cfg.base.candidate_controls(k, i),
        };
        candidates
            .into_iter()
            .map(|u| {
                let mut q = explorer.gain(i, u);
                for (j, p) in truth.support(u, i) {
                    let mut next = explorer.clone();
                    next.apply(u, j);
                    q += p * tail_mean(&next, &self.cfg.base, k, self.cfg.horizon, self.tails, seed);
                }
                (u, q)
            })
            .collect()
    }
}

impl Controller for Lookahead<'_> {
    fn choose(&self, k: usize, explorer: &Explorer<'_>, rng: &mut StreamRng) -> Control {
        let seed: u64 = rng.gen();
        let q = self.q_values(k, explorer, seed);
        let best = argmax_first(0..q.len(), |n| q[n].1).expect("state has a control");
        q[best].0
    }
}

/// The lookahead's choice at period `k` in state `i`.
pub fn rollout_step(
    truth: &Cmc,
    k: usize,
    i: State,
    counts: &CountTensor,
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<Control> {
    check_index("state", i, truth.num_states())?;
    check_start(truth, i, counts)?;
    let lookahead = Lookahead {
        cfg,
        tails: cfg.tails_needed(truth),
    };
    let explorer = Explorer::new(truth, *cfg.base.measure(), counts.clone(), i, false);
    let mut rng = stream_rng(seed, 0);
    Ok(lookahead.choose(k, &explorer, &mut rng))
}

/// A full trajectory with the lookahead acting at every period.
pub fn run_rollout(
    truth: &Cmc,
    cfg: &RolloutConfig,
    i0: State,
    f0: &CountTensor,
    master_seed: u64,
    traj_index: u64,
) -> Result<Trajectory> {
    check_start(truth, i0, f0)?;
    let lookahead = Lookahead {
        cfg,
        tails: cfg.tails_needed(truth),
    };
    let mut rng = stream_rng(master_seed, traj_index);
    Ok(run_controller(
        truth,
        &lookahead,
        "rollout",
        *cfg.base.measure(),
        i0,
        f0,
        cfg.horizon,
        &mut rng,
    ))
}

/// Independent rollout trajectories, one per stream of `sim.master_seed`.
pub fn run_rollouts(
    truth: &Cmc,
    cfg: &RolloutConfig,
    i0: State,
    f0: &CountTensor,
    sim: &SimConfig,
) -> Result<Vec<Trajectory>> {
    check_start(truth, i0, f0)?;
    (0..sim.num_trajectories as u64)
        .into_par_iter()
        .map(|t| run_rollout(truth, cfg, i0, f0, sim.master_seed, t))
        .collect()
}

/// Monte-Carlo estimate of the rollout policy's expected total gain.
pub fn evaluate_rollout(
    truth: &Cmc,
    cfg: &RolloutConfig,
    i0: State,
    f0: &CountTensor,
    sim: &SimConfig,
) -> Result<ObjectiveEstimate> {
    let trajectories = run_rollouts(truth, cfg, i0, f0, sim)?;
    Ok(ObjectiveEstimate::from_totals(
        trajectories.iter().map(Trajectory::total_h).collect(),
    ))
}
