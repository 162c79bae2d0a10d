//! Information measures `h(i, u, F)` that score how much a control is expected
//! to teach about its transition row.

use crate::chain::{Control, CountTensor, EstimatorConfig, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Predicted information gain.
    Pig,
}

/// An information measure together with the estimator it is evaluated under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoMeasure {
    pub kind: MeasureKind,
    pub cfg: EstimatorConfig,
}

impl InfoMeasure {
    pub fn pig(cfg: EstimatorConfig) -> Self {
        Self {
            kind: MeasureKind::Pig,
            cfg,
        }
    }

    pub fn evaluate(&self, i: State, u: Control, counts: &CountTensor) -> f64 {
        self.evaluate_row(counts.row(u, i))
    }

    /// Scores a single count row.
    #[inline]
    pub fn evaluate_row(&self, row: &[u32]) -> f64 {
        match self.kind {
            MeasureKind::Pig => pig_row(row, self.cfg.alpha()),
        }
    }
}

impl Default for InfoMeasure {
    fn default() -> Self {
        Self::pig(EstimatorConfig::default())
    }
}

/// Predicted information gain of applying `u` in `i`, in bits.
pub fn pig(i: State, u: Control, counts: &CountTensor, cfg: &EstimatorConfig) -> f64 {
    pig_row(counts.row(u, i), cfg.alpha())
}

/// Predicted information gain of one count row, in bits.
///
/// With pseudo-counts `c_j = F_j + alpha` and `T = sum_j c_j`, a temporary
/// increment of outcome `j*` rescales every other entry by `T / (T + 1)`, so
///
/// `KL(p' || p) = log2(T / (T + 1)) + (c_j* + 1) / (T + 1) * log2((c_j* + 1) / c_j*)`
///
/// and the expectation over `j*` collapses to a single pass over the row.
/// Unvisited outcomes share one term, which keeps rows with equal count
/// multisets bit-identical.
pub fn pig_row(row: &[u32], alpha: f64) -> f64 {
    let mut visited = 0.0;
    let mut zeros = 0usize;
    let mut observed = 0u64;
    for &c in row {
        if c == 0 {
            zeros += 1;
        } else {
            let c = f64::from(c);
            let pseudo = c + alpha;
            visited += pseudo * (pseudo + 1.0) * (1.0 / pseudo).ln_1p();
            observed += c as u64;
        }
    }
    let unvisited = if zeros > 0 {
        zeros as f64 * alpha * (alpha + 1.0) * (1.0 / alpha).ln_1p()
    } else {
        0.0
    };
    let total = observed as f64 + alpha * row.len() as f64;
    let nats = (unvisited + visited) / (total * (total + 1.0)) - (1.0 / total).ln_1p();
    (nats / std::f64::consts::LN_2).max(0.0)
}
