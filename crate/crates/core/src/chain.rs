//! Ground-truth controllable Markov chains, visit counts and the Dirichlet-mean
//! estimate built from them.
//!
//! Indices are zero-based throughout the library. Tensors are stored densely in
//! `(control, source, target)` order so a single transition row is a contiguous
//! slice.

use rand::Rng;

use crate::error::{check_index, Error, Result};

pub type State = usize;
pub type Control = usize;

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// A controllable Markov chain: one row-stochastic matrix per control.
///
/// Some `(state, control)` pairs may be declared inadmissible. Their rows are
/// still stored (and still stochastic) but no policy may select them and they
/// do not contribute to the missing information.
#[derive(Debug, Clone, PartialEq)]
pub struct Cmc {
    num_states: usize,
    num_controls: usize,
    transitions: Vec<f64>,
    admissible: Vec<bool>,
}

impl Cmc {
    /// Builds a chain from a dense `(u, i, j)` tensor.
    pub fn new(num_states: usize, num_controls: usize, transitions: Vec<f64>) -> Result<Self> {
        if num_states == 0 || num_controls == 0 {
            return Err(Error::Config("a chain needs at least one state and one control".into()));
        }
        let expected = num_controls * num_states * num_states;
        if transitions.len() != expected {
            return Err(Error::Shape(format!(
                "transition tensor has {} entries, expected {expected}",
                transitions.len()
            )));
        }
        let cmc = Self {
            num_states,
            num_controls,
            transitions,
            admissible: vec![true; num_states * num_controls],
        };
        for u in 0..num_controls {
            for i in 0..num_states {
                let row = cmc.row(u, i);
                if let Some(p) = row.iter().find(|p| !(**p >= 0.0 && **p <= 1.0)) {
                    return Err(Error::Config(format!(
                        "row (control {}, state {}) has entry {p} outside [0, 1]",
                        u + 1,
                        i + 1
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::Config(format!(
                        "row (control {}, state {}) sums to {sum}",
                        u + 1,
                        i + 1
                    )));
                }
            }
        }
        Ok(cmc)
    }

    /// Marks `(state, control)` pairs as inadmissible. Every state must keep at
    /// least one admissible control.
    pub fn with_inadmissible(mut self, pairs: &[(State, Control)]) -> Result<Self> {
        for &(i, u) in pairs {
            check_index("state", i, self.num_states)?;
            check_index("control", u, self.num_controls)?;
            self.admissible[i * self.num_controls + u] = false;
        }
        for i in 0..self.num_states {
            if self.admissible_controls(i).next().is_none() {
                return Err(Error::Config(format!("state {} has no admissible control", i + 1)));
            }
        }
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    #[inline]
    pub fn row(&self, u: Control, i: State) -> &[f64] {
        let start = (u * self.num_states + i) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    #[inline]
    pub fn prob(&self, u: Control, i: State, j: State) -> f64 {
        self.row(u, i)[j]
    }

    #[inline]
    pub fn is_admissible(&self, i: State, u: Control) -> bool {
        self.admissible[i * self.num_controls + u]
    }

    pub fn admissible_controls(&self, i: State) -> impl Iterator<Item = Control> + '_ {
        (0..self.num_controls).filter(move |&u| self.is_admissible(i, u))
    }

    /// Admissibility as seen by an agent: which controls exist in which state.
    pub fn control_space(&self) -> ControlSpace {
        ControlSpace {
            num_states: self.num_states,
            num_controls: self.num_controls,
            allowed: (0..self.num_states)
                .map(|i| self.admissible_controls(i).collect())
                .collect(),
        }
    }

    /// Successors with non-zero probability, in state order.
    pub fn support(&self, u: Control, i: State) -> impl Iterator<Item = (State, f64)> + '_ {
        self.row(u, i).iter().copied().enumerate().filter(|(_, p)| *p > 0.0)
    }

    pub fn is_deterministic(&self) -> bool {
        self.transitions.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Draws a successor of `i` under `u`.
    pub fn sample_next<R: Rng + ?Sized>(&self, i: State, u: Control, rng: &mut R) -> State {
        let row = self.row(u, i);
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        let mut last = 0;
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                last = j;
                if x < acc {
                    return j;
                }
            }
        }
        last
    }
}

/// The per-state admissible control sets, without any transition knowledge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlSpace {
    num_states: usize,
    num_controls: usize,
    allowed: Vec<Vec<Control>>,
}

impl ControlSpace {
    /// Every control admissible in every state.
    pub fn full(num_states: usize, num_controls: usize) -> Self {
        Self {
            num_states,
            num_controls,
            allowed: vec![(0..num_controls).collect(); num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn controls(&self, i: State) -> &[Control] {
        &self.allowed[i]
    }
}

/// Visit counts `F[u][i][j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTensor {
    num_states: usize,
    num_controls: usize,
    counts: Vec<u32>,
    total: u64,
}

impl CountTensor {
    pub fn zeros(num_states: usize, num_controls: usize) -> Self {
        Self {
            num_states,
            num_controls,
            counts: vec![0; num_controls * num_states * num_states],
            total: 0,
        }
    }

    pub fn for_chain(cmc: &Cmc) -> Self {
        Self::zeros(cmc.num_states(), cmc.num_controls())
    }

    pub fn from_dense(num_states: usize, num_controls: usize, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != num_controls * num_states * num_states {
            return Err(Error::Shape(format!(
                "count tensor has {} entries, expected {}",
                counts.len(),
                num_controls * num_states * num_states
            )));
        }
        let total = counts.iter().map(|&c| u64::from(c)).sum();
        Ok(Self {
            num_states,
            num_controls,
            counts,
            total,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_controls(&self) -> usize {
        self.num_controls
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    #[inline]
    pub fn row(&self, u: Control, i: State) -> &[u32] {
        let start = (u * self.num_states + i) * self.num_states;
        &self.counts[start..start + self.num_states]
    }

    pub fn get(&self, u: Control, i: State, j: State) -> u32 {
        self.row(u, i)[j]
    }

    pub fn row_total(&self, u: Control, i: State) -> u64 {
        self.row(u, i).iter().map(|&c| u64::from(c)).sum()
    }

    /// Records one observed transition `i -> j` under `u`.
    #[inline]
    pub fn record(&mut self, u: Control, i: State, j: State) {
        self.counts[(u * self.num_states + i) * self.num_states + j] += 1;
        self.total += 1;
    }

    /// Adds `other` entry-wise.
    pub fn merge(&mut self, other: &CountTensor) -> Result<()> {
        self.check_shape(other.num_states, other.num_controls)?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_controls: usize) -> Result<()> {
        if self.num_states != num_states || self.num_controls != num_controls {
            return Err(Error::Shape(format!(
                "count tensor is {}x{}, expected {num_states} states x {num_controls} controls",
                self.num_states, self.num_controls
            )));
        }
        Ok(())
    }
}

/// Dirichlet prior pseudo-count per outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    alpha: f64,
}

impl EstimatorConfig {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("Dirichlet alpha must be positive, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { alpha: 0.05 }
    }
}

/// Posterior-mean estimate of one transition row from its counts.
pub fn estimate_counts(row: &[u32], alpha: f64) -> Vec<f64> {
    let total: f64 = row.iter().map(|&c| f64::from(c)).sum::<f64>() + alpha * row.len() as f64;
    row.iter().map(|&c| (f64::from(c) + alpha) / total).collect()
}

/// Estimated distribution of successors of `i` under `u`.
pub fn estimate_row(counts: &CountTensor, u: Control, i: State, cfg: &EstimatorConfig) -> Result<Vec<f64>> {
    check_index("control", u, counts.num_controls())?;
    check_index("state", i, counts.num_states())?;
    Ok(estimate_counts(counts.row(u, i), cfg.alpha()))
}

/// `KL(p || q)` in bits. Returns `f64::INFINITY` when `p` puts mass where `q`
/// has none.
///
/// # Panics
///
/// Panics if the two distributions have different lengths.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions must have equal length");
    let mut total = 0.0;
    for (&pj, &qj) in p.iter().zip(q) {
        if pj > 0.0 {
            if qj <= 0.0 {
                return f64::INFINITY;
            }
            total += pj * (pj / qj).log2();
        }
    }
    total.max(0.0)
}

/// KL divergence between a true row and its count-based estimate.
pub(crate) fn row_missing_information(truth: &[f64], counts: &[u32], alpha: f64) -> f64 {
    let total: f64 = counts.iter().map(|&c| f64::from(c)).sum::<f64>() + alpha * counts.len() as f64;
    let mut kl = 0.0;
    for (&p, &c) in truth.iter().zip(counts) {
        if p > 0.0 {
            kl += p * (p * total / (f64::from(c) + alpha)).log2();
        }
    }
    kl.max(0.0)
}

/// Sum over admissible `(i, u)` of `KL(true row || estimated row)`, in bits.
pub fn missing_information(truth: &Cmc, counts: &CountTensor, cfg: &EstimatorConfig) -> Result<f64> {
    counts.check_shape(truth.num_states(), truth.num_controls())?;
    let mut total = 0.0;
    for u in 0..truth.num_controls() {
        for i in 0..truth.num_states() {
            if truth.is_admissible(i, u) {
                total += row_missing_information(truth.row(u, i), counts.row(u, i), cfg.alpha());
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state_chain(p: f64) -> Cmc {
        // u=1: 1 -> (p, 1-p), 2 -> 2. u=2: self-loops.
        Cmc::new(2, 2, vec![p, 1.0 - p, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn estimate_of_zero_counts_is_uniform() {
        let f = CountTensor::zeros(2, 1);
        let cfg = EstimatorConfig::new(0.05).unwrap();
        let row = estimate_row(&f, 0, 0, &cfg).unwrap();
        assert_abs_diff_eq!(row[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(row[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn estimate_with_counts() {
        let row = estimate_counts(&[6, 0], 0.05);
        assert_abs_diff_eq!(row[0], 6.05 / 6.1, epsilon = 1e-12);
        assert_abs_diff_eq!(row[0], 0.991803, epsilon = 1e-6);
        assert_abs_diff_eq!(row[1], 0.008197, epsilon = 1e-6);
        let even = estimate_counts(&[1, 1], 1.0);
        assert_eq!(even, vec![0.5, 0.5]);
    }

    #[test]
    fn estimate_row_rejects_bad_indices() {
        let f = CountTensor::zeros(2, 2);
        let cfg = EstimatorConfig::default();
        assert!(matches!(
            estimate_row(&f, 2, 0, &cfg),
            Err(Error::Index { what: "control", .. })
        ));
        assert!(matches!(
            estimate_row(&f, 0, 5, &cfg),
            Err(Error::Index { what: "state", .. })
        ));
    }

    #[test]
    fn alpha_must_be_positive() {
        assert!(EstimatorConfig::new(0.0).is_err());
        assert!(EstimatorConfig::new(-1.0).is_err());
        assert!(EstimatorConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]), 1.0, epsilon = 1e-12);
        let q = estimate_counts(&[6, 0], 0.05);
        // log2(6.1 / 6.05)
        assert_abs_diff_eq!(kl_divergence(&[1.0, 0.0], &q), 0.0118741, epsilon = 1e-7);
        assert_eq!(kl_divergence(&[0.5, 0.5], &[1.0, 0.0]), f64::INFINITY);
    }

    #[test]
    fn missing_information_of_example_one() {
        let truth = two_state_chain(0.0);
        let cfg = EstimatorConfig::new(0.05).unwrap();
        let mut f = CountTensor::for_chain(&truth);
        assert_abs_diff_eq!(missing_information(&truth, &f, &cfg).unwrap(), 4.0, epsilon = 1e-12);

        // p_11(2) x6, p_12(1) x1, p_22(1) x7, p_22(2) x6.
        for _ in 0..6 {
            f.record(1, 0, 0);
        }
        f.record(0, 0, 1);
        for _ in 0..7 {
            f.record(0, 1, 1);
        }
        for _ in 0..6 {
            f.record(1, 1, 1);
        }
        let oracle = (1.1f64 / 1.05).log2() + 2.0 * (6.1f64 / 6.05).log2() + (7.1f64 / 7.05).log2();
        let mi = missing_information(&truth, &f, &cfg).unwrap();
        assert_abs_diff_eq!(mi, oracle, epsilon = 1e-12);
        assert!((mi - 0.101).abs() < 0.01, "{mi}");
    }

    #[test]
    fn missing_information_checks_shape() {
        let truth = two_state_chain(0.0);
        let f = CountTensor::zeros(3, 2);
        assert!(matches!(
            missing_information(&truth, &f, &EstimatorConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn inadmissible_rows_are_excluded() {
        let truth = two_state_chain(0.0).with_inadmissible(&[(1, 1)]).unwrap();
        let mi = missing_information(&truth, &CountTensor::for_chain(&truth), &EstimatorConfig::default()).unwrap();
        assert_abs_diff_eq!(mi, 3.0, epsilon = 1e-12);
        assert_eq!(truth.control_space().controls(1), &[0]);
        assert!(two_state_chain(0.0).with_inadmissible(&[(0, 0), (0, 1)]).is_err());
    }

    #[test]
    fn rejects_non_stochastic_rows() {
        assert!(Cmc::new(2, 1, vec![0.5, 0.4, 0.0, 1.0]).is_err());
        assert!(Cmc::new(2, 1, vec![1.5, -0.5, 0.0, 1.0]).is_err());
        assert!(Cmc::new(2, 1, vec![1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn sampling_point_mass_and_frequency() {
        let truth = two_state_chain(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            assert_eq!(truth.sample_next(0, 0, &mut rng), 1);
        }
        let biased = Cmc::new(2, 1, vec![0.25, 0.75, 0.0, 1.0]).unwrap();
        let n = 100_000;
        let hits = (0..n).filter(|_| biased.sample_next(0, 0, &mut rng) == 0).count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.25).abs() < 0.01, "{freq}");
    }

    #[test]
    fn sampling_is_seeded() {
        let truth = Cmc::new(2, 1, vec![0.25, 0.75, 0.5, 0.5]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..64)
                .map(|k| truth.sample_next(k % 2, 0, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
    }

    #[test]
    fn recording_increments_one_entry() {
        let mut f = CountTensor::zeros(3, 2);
        let before = f.clone();
        f.record(1, 2, 0);
        let changed: Vec<_> = f
            .as_slice()
            .iter()
            .zip(before.as_slice())
            .filter(|(a, b)| a != b)
            .collect();
        assert_eq!(changed.len(), 1);
        assert_eq!(f.total(), 1);
        assert_eq!(f.get(1, 2, 0), 1);
    }

    proptest! {
        #[test]
        fn estimates_are_normalized(counts in prop::collection::vec(0u32..10_000, 1..30),
                                    alpha in 1e-3f64..10.0) {
            let row = estimate_counts(&counts, alpha);
            let sum: f64 = row.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p > 0.0));
        }

        #[test]
        fn estimate_concentrates_on_observed_outcome(n in 1u32..100_000, s in 2usize..26,
                                                      j in 0usize..25, alpha in 1e-3f64..1.0) {
            let j = j % s;
            let mut counts = vec![0; s];
            counts[j] = n;
            let row = estimate_counts(&counts, alpha);
            let bound = 1.0 - (s as f64 - 1.0) * alpha / (f64::from(n) + s as f64 * alpha);
            prop_assert!((row[j] - bound).abs() < 1e-12);
        }

        #[test]
        fn gibbs_inequality(a in prop::collection::vec(0.0f64..1.0, 2..12),
                            b in prop::collection::vec(0.01f64..1.0, 2..12)) {
            let n = a.len().min(b.len());
            let sa: f64 = a[..n].iter().sum::<f64>() + 1e-9;
            let sb: f64 = b[..n].iter().sum();
            let p: Vec<f64> = a[..n].iter().map(|x| (x + 1e-9 / n as f64) / sa).collect();
            let q: Vec<f64> = b[..n].iter().map(|x| x / sb).collect();
            prop_assert!(kl_divergence(&p, &q) >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p), 0.0);
        }

        #[test]
        fn zero_counts_give_maximal_missing_information(s in 1usize..8, m in 1usize..4,
                                                        targets in prop::collection::vec(0usize..8, 32),
                                                        alpha in 0.01f64..2.0) {
            let mut t = vec![0.0; m * s * s];
            for u in 0..m {
                for i in 0..s {
                    t[(u * s + i) * s + targets[(u * s + i) % 32] % s] = 1.0;
                }
            }
            let truth = Cmc::new(s, m, t).unwrap();
            let mi = missing_information(&truth, &CountTensor::for_chain(&truth),
                                         &EstimatorConfig::new(alpha).unwrap()).unwrap();
            let expected = (s * m) as f64 * (s as f64).log2();
            prop_assert!((mi - expected).abs() < 1e-9);
        }
    }
}
