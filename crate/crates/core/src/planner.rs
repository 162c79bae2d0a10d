//! Discounted shortest-path planning on a learned model by exact policy
//! iteration.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::chain::{estimate_counts, Control, CountTensor, EstimatorConfig, State};
use crate::error::{check_index, Error, Result};
use crate::policies::TIE_TOLERANCE;

const RESIDUAL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningProblem {
    num_states: usize,
    num_controls: usize,
    /// `(u, i, j)` transition tensor of the planning model.
    transitions: Vec<f64>,
    costs: Vec<f64>,
    discount: f64,
    admissible: Vec<Vec<Control>>,
}

impl PlanningProblem {
    pub fn new(
        num_states: usize,
        num_controls: usize,
        transitions: Vec<f64>,
        costs: Vec<f64>,
        discount: f64,
        admissible: Vec<Vec<Control>>,
    ) -> Result<Self> {
        if transitions.len() != num_controls * num_states * num_states {
            return Err(Error::Shape("planning tensor has the wrong size".into()));
        }
        if costs.len() != num_states || admissible.len() != num_states {
            return Err(Error::Shape(
                "costs and admissible sets need one entry per state".into(),
            ));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::Config(format!("discount must lie in (0, 1), got {discount}")));
        }
        if costs.iter().any(|&g| !(g >= 0.0 && g.is_finite())) {
            return Err(Error::Config("stage costs must be finite and non-negative".into()));
        }
        if !costs.contains(&0.0) {
            return Err(Error::Config("at least one state needs zero cost".into()));
        }
        for (i, set) in admissible.iter().enumerate() {
            if set.is_empty() {
                return Err(Error::Config(format!("state {} has no admissible control", i + 1)));
            }
            for &u in set {
                check_index("control", u, num_controls)?;
            }
        }
        Ok(Self {
            num_states,
            num_controls,
            transitions,
            costs,
            discount,
            admissible,
        })
    }

    /// Builds the planning model from visit counts: every row is the
    /// Dirichlet-mean estimate.
    pub fn from_counts(
        counts: &CountTensor,
        cfg: &EstimatorConfig,
        costs: Vec<f64>,
        discount: f64,
        admissible: Vec<Vec<Control>>,
    ) -> Result<Self> {
        let s = counts.num_states();
        let m = counts.num_controls();
        let mut transitions = Vec::with_capacity(m * s * s);
        for u in 0..m {
            for i in 0..s {
                transitions.extend(estimate_counts(counts.row(u, i), cfg.alpha()));
            }
        }
        Self::new(s, m, transitions, costs, discount, admissible)
    }

    /// Unit cost everywhere except a zero-cost goal.
    pub fn goal_costs(num_states: usize, goal: State) -> Vec<f64> {
        (0..num_states).map(|i| if i == goal { 0.0 } else { 1.0 }).collect()
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn admissible(&self, i: State) -> &[Control] {
        &self.admissible[i]
    }

    pub fn row(&self, u: Control, i: State) -> &[f64] {
        let start = (u * self.num_states + i) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    /// `g(i) + discount * sum_j p_ij(u) J(j)`.
    pub fn q_value(&self, i: State, u: Control, values: &[f64]) -> f64 {
        let expected: f64 = self.row(u, i).iter().zip(values).map(|(p, v)| p * v).sum();
        self.costs[i] + self.discount * expected
    }

    fn check_policy(&self, mu: &[Control]) -> Result<()> {
        if mu.len() != self.num_states {
            return Err(Error::Shape("policy needs one control per state".into()));
        }
        for (i, &u) in mu.iter().enumerate() {
            if !self.admissible[i].contains(&u) {
                return Err(Error::Config(format!(
                    "control {} is not admissible in state {}",
                    u + 1,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    /// The lowest admissible control in every state.
    pub fn default_policy(&self) -> Vec<Control> {
        self.admissible.iter().map(|set| set[0]).collect()
    }
}

/// Solves `(I - discount * P_mu) J = g` for the value of `mu`.
pub fn policy_evaluation(problem: &PlanningProblem, mu: &[Control]) -> Result<Vec<f64>> {
    problem.check_policy(mu)?;
    let n = problem.num_states;
    let a = problem.discount;
    let m = DMatrix::from_fn(n, n, |i, j| {
        let delta = if i == j { 1.0 } else { 0.0 };
        delta - a * problem.row(mu[i], i)[j]
    });
    let g = DVector::from_column_slice(&problem.costs);
    let j = m
        .clone()
        .lu()
        .solve(&g)
        .ok_or_else(|| Error::Numeric("policy evaluation system is singular".into()))?;
    let residual = (&m * &j - &g).amax();
    if residual.is_nan() || residual >= RESIDUAL_TOLERANCE {
        return Err(Error::Numeric(format!(
            "policy evaluation residual {residual:e} exceeds {RESIDUAL_TOLERANCE:e}"
        )));
    }
    Ok(j.iter().copied().collect())
}

/// Greedy policy with respect to `values`; near-ties go to the lowest control.
pub fn policy_improvement(problem: &PlanningProblem, values: &[f64]) -> Result<Vec<Control>> {
    if values.len() != problem.num_states {
        return Err(Error::Shape("value vector needs one entry per state".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("value vector is not finite".into()));
    }
    Ok((0..problem.num_states)
        .map(|i| {
            let mut best: Option<(Control, f64)> = None;
            for &u in problem.admissible(i) {
                let q = problem.q_value(i, u, values);
                match best {
                    None => best = Some((u, q)),
                    Some((_, b)) if b - q > TIE_TOLERANCE * q.abs().max(b.abs()) => best = Some((u, q)),
                    _ => {}
                }
            }
            best.expect("admissible set is non-empty").0
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    pub policy: Vec<Control>,
    pub values: Vec<f64>,
    pub iterations: usize,
}

/// Alternates evaluation and improvement until the policy is a fixed point.
pub fn policy_iteration(problem: &PlanningProblem, initial: &[Control]) -> Result<PlanSolution> {
    let mut mu = initial.to_vec();
    let mut values = policy_evaluation(problem, &mu)?;
    let max_iterations = (problem.num_controls as f64)
        .powi(problem.num_states.min(64) as i32)
        .min(1e6) as usize
        + 1;
    for iteration in 1..=max_iterations {
        let mut next = policy_improvement(problem, &values)?;
        // Keep the incumbent control on exact ties so the loop cannot cycle.
        for i in 0..problem.num_states {
            let incumbent = problem.q_value(i, mu[i], &values);
            let challenger = problem.q_value(i, next[i], &values);
            if incumbent - challenger <= TIE_TOLERANCE * incumbent.abs().max(challenger.abs()) {
                next[i] = mu[i];
            }
        }
        if next == mu {
            return Ok(PlanSolution {
                policy: policy_improvement(problem, &values)?,
                values,
                iterations: iteration,
            });
        }
        let next_values = policy_evaluation(problem, &next)?;
        for (new, old) in next_values.iter().zip(&values) {
            if *new > old + 1e-9 * old.abs().max(1.0) {
                return Err(Error::Numeric(
                    "policy iteration value increased; model is inconsistent".into(),
                ));
            }
        }
        mu = next;
        values = next_values;
    }
    Err(Error::Numeric(format!(
        "policy iteration did not converge in {max_iterations} iterations"
    )))
}

/// Follows `policy` from `start` along the most likely successor until the
/// goal is reached or `num_states` steps have been taken.
pub fn extract_path(problem: &PlanningProblem, policy: &[Control], start: State, goal: State) -> Vec<State> {
    let mut path = vec![start];
    let mut i = start;
    for _ in 0..problem.num_states {
        if i == goal {
            break;
        }
        let row = problem.row(policy[i], i);
        let next = row
            .iter()
            .enumerate()
            .fold(
                (i, f64::NEG_INFINITY),
                |best, (j, &p)| if p > best.1 { (j, p) } else { best },
            )
            .0;
        if next == i {
            break;
        }
        path.push(next);
        i = next;
    }
    path
}

/// Exported plan with one-based states and controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanExport {
    pub policy: std::collections::BTreeMap<String, usize>,
    pub values: std::collections::BTreeMap<String, f64>,
    pub path: Vec<usize>,
}

impl PlanExport {
    pub fn new(solution: &PlanSolution, path: &[State]) -> Self {
        Self {
            policy: solution
                .policy
                .iter()
                .enumerate()
                .map(|(i, u)| ((i + 1).to_string(), u + 1))
                .collect(),
            values: solution
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| ((i + 1).to_string(), *v))
                .collect(),
            path: path.iter().map(|s| s + 1).collect(),
        }
    }
}
