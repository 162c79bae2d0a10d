//! Time-varying control sets and the exploration policies built on them.
//!
//! Periods are one-based: the first decision of a trajectory happens at
//! period `k = 1`. A restriction with time constant `t` removes its control
//! while `k < t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{Control, ControlSpace, CountTensor, State};
use crate::error::{Error, Result};
use crate::measures::InfoMeasure;

/// Relative tolerance under which two scores count as tied.
pub(crate) const TIE_TOLERANCE: f64 = 1e-11;

/// Index of the best-scoring candidate; near-ties go to the earliest one.
pub(crate) fn argmax_first<I, F>(candidates: I, mut score: F) -> Option<Control>
where
    I: IntoIterator<Item = Control>,
    F: FnMut(Control) -> f64,
{
    let mut best: Option<(Control, f64)> = None;
    for u in candidates {
        let s = score(u);
        match best {
            None => best = Some((u, s)),
            Some((_, b)) if s - b > TIE_TOLERANCE * s.abs().max(b.abs()) => best = Some((u, s)),
            _ => {}
        }
    }
    best.map(|(u, _)| u)
}

/// One restricted `(state, control)` pair and the period it is released at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RestrictionEntry {
    pub state: State,
    pub control: Control,
    pub time_constant: usize,
}

impl RestrictionEntry {
    #[inline]
    pub fn is_active(&self, k: usize) -> bool {
        k < self.time_constant
    }
}

/// How a flat parameter vector is split into restriction entries.
///
/// The vector is laid out as all entry states, then all entry controls, then
/// the time constants. `time_constants` is either 1 (shared by every entry) or
/// equal to `entries`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamShape {
    pub entries: usize,
    pub time_constants: usize,
}

impl ParamShape {
    pub fn new(entries: usize, time_constants: usize) -> Result<Self> {
        if entries == 0 || !(time_constants == 1 || time_constants == entries) {
            return Err(Error::Config(format!(
                "parameter shape needs >= 1 entry and 1 or {entries} time constants, got {time_constants}"
            )));
        }
        Ok(Self {
            entries,
            time_constants,
        })
    }

    /// A per-entry time constant for every entry.
    pub fn independent(entries: usize) -> Self {
        Self {
            entries,
            time_constants: entries,
        }
    }

    /// One time constant shared by all entries.
    pub fn shared(entries: usize) -> Self {
        Self {
            entries,
            time_constants: 1,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.entries + self.time_constants
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Which role a vector position plays.
    pub fn role(&self, position: usize) -> ParamRole {
        if position < self.entries {
            ParamRole::State
        } else if position < 2 * self.entries {
            ParamRole::Control
        } else {
            ParamRole::Time
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRole {
    State,
    Control,
    Time,
}

/// The parameter `r` of a parametric control set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlSetParams {
    pub entries: Vec<RestrictionEntry>,
}

impl ControlSetParams {
    pub fn new(entries: Vec<RestrictionEntry>) -> Self {
        Self { entries }
    }

    /// Decodes a one-based parameter vector, e.g. `(1, 1, 7)`.
    pub fn from_vector(shape: ParamShape, r: &[usize]) -> Result<Self> {
        if r.len() != shape.len() {
            return Err(Error::Config(format!(
                "parameter vector has {} components, shape expects {}",
                r.len(),
                shape.len()
            )));
        }
        if r.contains(&0) {
            return Err(Error::Config(
                "parameter components are one-based and must be >= 1".into(),
            ));
        }
        let e = shape.entries;
        let entries = (0..e)
            .map(|n| RestrictionEntry {
                state: r[n] - 1,
                control: r[e + n] - 1,
                time_constant: if shape.time_constants == 1 {
                    r[2 * e]
                } else {
                    r[2 * e + n]
                },
            })
            .collect();
        Ok(Self { entries })
    }

    /// Encodes back to a one-based vector. With a shared time constant the
    /// first entry's value is used.
    pub fn to_vector(&self, shape: ParamShape) -> Vec<usize> {
        let mut r: Vec<usize> = self.entries.iter().map(|e| e.state + 1).collect();
        r.extend(self.entries.iter().map(|e| e.control + 1));
        if shape.time_constants == 1 {
            r.push(self.entries.first().map_or(1, |e| e.time_constant));
        } else {
            r.extend(self.entries.iter().map(|e| e.time_constant));
        }
        r
    }

    /// Entries sorted by state (then control, then time); entries are an
    /// unordered set so this does not change the policy.
    pub fn canonical(&self) -> Self {
        let mut entries = self.entries.clone();
        entries.sort();
        Self { entries }
    }

    pub fn max_time_constant(&self) -> usize {
        self.entries.iter().map(|e| e.time_constant).max().unwrap_or(1)
    }

    fn is_restricted(&self, k: usize, i: State, u: Control) -> bool {
        self.entries
            .iter()
            .any(|e| e.state == i && e.control == u && e.is_active(k))
    }

    /// Checks indices against `space` and that no state ever loses all of its
    /// controls.
    pub fn validate(&self, space: &ControlSpace) -> Result<()> {
        for e in &self.entries {
            if e.state >= space.num_states() || e.control >= space.num_controls() {
                return Err(Error::Config(format!(
                    "restriction (state {}, control {}) is out of range",
                    e.state + 1,
                    e.control + 1
                )));
            }
            if e.time_constant == 0 {
                return Err(Error::Config("time constants must be >= 1".into()));
            }
        }
        for i in 0..space.num_states() {
            if control_set(1, i, self, space.controls(i)).is_empty() {
                return Err(Error::Config(format!(
                    "restrictions remove every control of state {}",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

/// `U_k(i, r)`: the full set minus controls restricted at state `i` while
/// `k` is below their time constant.
pub fn control_set(k: usize, i: State, r: &ControlSetParams, full: &[Control]) -> Vec<Control> {
    full.iter().copied().filter(|&u| !r.is_restricted(k, i, u)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PolicyKind {
    Parametric(ControlSetParams),
    GreedyUnrestricted,
    UniformRandom,
    /// Open-loop control sequence; period `k` applies entry `k - 1`.
    Fixed(Vec<Control>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    kind: PolicyKind,
    measure: InfoMeasure,
    space: ControlSpace,
}

impl Policy {
    pub fn new(kind: PolicyKind, measure: InfoMeasure, space: ControlSpace) -> Result<Self> {
        match &kind {
            PolicyKind::Parametric(r) => r.validate(&space)?,
            PolicyKind::Fixed(seq) => {
                if let Some(u) = seq.iter().find(|&&u| u >= space.num_controls()) {
                    return Err(Error::Config(format!("fixed control {} out of range", u + 1)));
                }
            }
            PolicyKind::GreedyUnrestricted | PolicyKind::UniformRandom => {}
        }
        Ok(Self { kind, measure, space })
    }

    pub fn parametric(r: ControlSetParams, measure: InfoMeasure, space: ControlSpace) -> Result<Self> {
        Self::new(PolicyKind::Parametric(r), measure, space)
    }

    pub fn greedy(measure: InfoMeasure, space: ControlSpace) -> Self {
        Self {
            kind: PolicyKind::GreedyUnrestricted,
            measure,
            space,
        }
    }

    pub fn uniform_random(measure: InfoMeasure, space: ControlSpace) -> Self {
        Self {
            kind: PolicyKind::UniformRandom,
            measure,
            space,
        }
    }

    pub fn kind(&self) -> &PolicyKind {
        &self.kind
    }

    pub fn measure(&self) -> &InfoMeasure {
        &self.measure
    }

    pub fn space(&self) -> &ControlSpace {
        &self.space
    }

    /// Short tag used in exported tables.
    pub fn label(&self) -> &'static str {
        match self.kind {
            PolicyKind::Parametric(_) => "parametric",
            PolicyKind::GreedyUnrestricted => "greedy",
            PolicyKind::UniformRandom => "random",
            PolicyKind::Fixed(_) => "fixed",
        }
    }

    /// Controls this policy may choose from at `(k, i)`.
    pub fn candidate_controls(&self, k: usize, i: State) -> Vec<Control> {
        let full = self.space.controls(i);
        match &self.kind {
            PolicyKind::Parametric(r) => control_set(k, i, r, full),
            _ => full.to_vec(),
        }
    }

    pub fn select_control<R: Rng + ?Sized>(&self, k: usize, i: State, counts: &CountTensor, rng: &mut R) -> Control {
        self.select_with(k, i, |u| self.measure.evaluate(i, u, counts), rng)
    }

    /// Same as [`Policy::select_control`] with the measure supplied by the
    /// caller, e.g. from a cache.
    pub(crate) fn select_with<R, F>(&self, k: usize, i: State, score: F, rng: &mut R) -> Control
    where
        R: Rng + ?Sized,
        F: FnMut(Control) -> f64,
    {
        let full = self.space.controls(i);
        match &self.kind {
            PolicyKind::GreedyUnrestricted => argmax_first(full.iter().copied(), score).expect("state has a control"),
            PolicyKind::Parametric(r) => {
                argmax_first(full.iter().copied().filter(|&u| !r.is_restricted(k, i, u)), score)
                    .expect("validated control set is never empty")
            }
            PolicyKind::UniformRandom => full[rng.gen_range(0..full.len())],
            PolicyKind::Fixed(seq) => seq[(k - 1).min(seq.len() - 1)],
        }
    }
}
