//! The example chains, a grid/maze compiler and the JSON environment format.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::{Cmc, Control, State};
use crate::error::{Error, Result};
use crate::optimizer::ParamSpace;
use crate::policies::ParamShape;

const EXAMPLE3: &str = include_str!("../fixtures/environments/example3.json");
const EXAMPLE4: &str = include_str!("../fixtures/environments/example4.json");
const EXAMPLE4_MODIFIED: &str = include_str!("../fixtures/environments/example4-modified.json");
const EXAMPLE5: &str = include_str!("../fixtures/environments/example5.json");
const EXAMPLE6: &str = include_str!("../fixtures/environments/example6.json");

/// Row-sum tolerance accepted in environment documents.
pub const DOCUMENT_TOLERANCE: f64 = 1e-9;

/// Grid moves, in control order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Down, Direction::Left, Direction::Right];

    pub fn control(self) -> Control {
        self as Control
    }

    pub fn from_control(u: Control) -> Option<Self> {
        Self::ALL.get(u).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

/// A cell that can only be left in one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonBacktracking {
    pub cell: State,
    pub exit: Direction,
}

/// Rectangular maze; cells are zero-based and row-major from the top left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub walls: Vec<(State, State)>,
    pub absorbing: Vec<State>,
    pub non_backtracking: Vec<NonBacktracking>,
    pub entrance: State,
}

impl GridSpec {
    pub fn open(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            walls: Vec::new(),
            absorbing: Vec::new(),
            non_backtracking: Vec::new(),
            entrance: 0,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// The in-bounds neighbour of `cell` in direction `d`, ignoring walls.
    pub fn neighbor(&self, cell: State, d: Direction) -> Option<State> {
        let (r, c) = (cell / self.cols, cell % self.cols);
        match d {
            Direction::Up if r > 0 => Some(cell - self.cols),
            Direction::Down if r + 1 < self.rows => Some(cell + self.cols),
            Direction::Left if c > 0 => Some(cell - 1),
            Direction::Right if c + 1 < self.cols => Some(cell + 1),
            _ => None,
        }
    }

    fn has_wall(&self, a: State, b: State) -> bool {
        self.walls.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
    }

    /// Where a move in direction `d` ends up when walls and the boundary are
    /// the only obstacles.
    pub fn open_move(&self, cell: State, d: Direction) -> Option<State> {
        self.neighbor(cell, d).filter(|&n| !self.has_wall(cell, n))
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Config("grid needs at least one row and column".into()));
        }
        let cells = self.num_cells();
        let in_range = |what: &str, c: State| -> Result<()> {
            if c < cells {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{what} cell {} outside a {cells}-cell grid",
                    c + 1
                )))
            }
        };
        in_range("entrance", self.entrance)?;
        for &(a, b) in &self.walls {
            in_range("wall", a)?;
            in_range("wall", b)?;
            if !Direction::ALL.iter().any(|&d| self.neighbor(a, d) == Some(b)) {
                return Err(Error::Config(format!(
                    "wall [{}, {}] joins non-adjacent cells",
                    a + 1,
                    b + 1
                )));
            }
        }
        for &a in &self.absorbing {
            in_range("absorbing", a)?;
        }
        for nb in &self.non_backtracking {
            in_range("non-backtracking", nb.cell)?;
            if self.absorbing.contains(&nb.cell) {
                return Err(Error::Config(format!(
                    "cell {} is both absorbing and non-backtracking",
                    nb.cell + 1
                )));
            }
            if self.open_move(nb.cell, nb.exit).is_none() {
                return Err(Error::Config(format!(
                    "non-backtracking cell {} cannot exit {}",
                    nb.cell + 1,
                    nb.exit.name()
                )));
            }
        }
        Ok(())
    }

    /// Successor of `cell` under control `u` in the compiled chain.
    pub fn successor(&self, cell: State, u: Control) -> State {
        let d = Direction::from_control(u).expect("grid controls are 0..4");
        if self.absorbing.contains(&cell) {
            return cell;
        }
        if let Some(nb) = self.non_backtracking.iter().find(|nb| nb.cell == cell) {
            if nb.exit != d {
                return cell;
            }
        }
        self.open_move(cell, d).unwrap_or(cell)
    }
}

/// A ready-to-run exploration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentBundle {
    pub name: String,
    pub cmc: Cmc,
    pub entrance: State,
    pub labels: Vec<String>,
    /// Layout of the parameter vector for this environment's experiment.
    pub shape: ParamShape,
    pub grid: Option<GridSpec>,
}

impl EnvironmentBundle {
    fn new(name: &str, cmc: Cmc, entrance: State, labels: Option<Vec<String>>, shape: ParamShape) -> Result<Self> {
        if entrance >= cmc.num_states() {
            return Err(Error::Config(format!(
                "entrance {} outside {} states",
                entrance + 1,
                cmc.num_states()
            )));
        }
        let labels = labels.unwrap_or_else(|| (1..=cmc.num_states()).map(|i| i.to_string()).collect());
        if labels.len() != cmc.num_states() {
            return Err(Error::Config(format!(
                "{} labels for {} states",
                labels.len(),
                cmc.num_states()
            )));
        }
        Ok(Self {
            name: name.to_string(),
            cmc,
            entrance,
            labels,
            shape,
            grid: None,
        })
    }

    /// States, controls and time constants over their full ranges.
    pub fn param_space(&self, horizon: usize) -> Result<ParamSpace> {
        ParamSpace::standard(self.shape, self.cmc.num_states(), self.cmc.num_controls(), horizon)
    }

    pub fn with_shape(mut self, shape: ParamShape) -> Self {
        self.shape = shape;
        self
    }

    pub fn render(&self, path: &[State]) -> Option<String> {
        self.grid.as_ref().map(|g| render_grid(g, path))
    }
}

/// Turns a maze into a deterministic chain with one control per direction.
pub fn compile_grid(spec: &GridSpec) -> Result<EnvironmentBundle> {
    spec.validate()?;
    let s = spec.num_cells();
    let mut transitions = vec![0.0; 4 * s * s];
    for u in 0..4 {
        for i in 0..s {
            transitions[(u * s + i) * s + spec.successor(i, u)] = 1.0;
        }
    }
    let cmc = Cmc::new(s, 4, transitions)?;
    let mut bundle = EnvironmentBundle::new("grid", cmc, spec.entrance, None, ParamShape::independent(1))?;
    bundle.grid = Some(spec.clone());
    Ok(bundle)
}

/// Example 1 with slip probability `p` on the first row.
pub fn example_one(p: f64) -> Result<EnvironmentBundle> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("probability {p} outside [0, 1]")));
    }
    let cmc = Cmc::new(2, 2, vec![p, 1.0 - p, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0])?;
    EnvironmentBundle::new("example1", cmc, 0, None, ParamShape::independent(1))
}

fn example_two() -> Result<EnvironmentBundle> {
    let s = 4;
    let mut transitions = vec![0.0; s * s * s];
    for u in 0..s {
        for i in 0..s {
            let j = if u < 3 && i == u { i + 1 } else { i };
            transitions[(u * s + i) * s + j] = 1.0;
        }
    }
    let cmc = Cmc::new(s, s, transitions)?;
    EnvironmentBundle::new("example2", cmc, 0, None, ParamShape::independent(3))
}

/// The built-in examples. Example 1 accepts the variant `stochastic`
/// (slip probability 0.1) and Example 4 the variant `modified-maze`.
pub fn build_example(n: usize, variant: Option<&str>) -> Result<EnvironmentBundle> {
    let unknown = |v: &str| Err(Error::Config(format!("example {n} has no variant '{v}'")));
    let bundle = match (n, variant) {
        (1, None) => example_one(0.0)?,
        (1, Some("stochastic")) => example_one(0.1)?,
        (2, None) => example_two()?,
        (3, None) => parse_environment(EXAMPLE3)?.with_shape(ParamShape::shared(2)),
        (4, None) => parse_environment(EXAMPLE4)?.with_shape(ParamShape::shared(3)),
        (4, Some("modified-maze")) => parse_environment(EXAMPLE4_MODIFIED)?.with_shape(ParamShape::shared(3)),
        (5, None) => parse_environment(EXAMPLE5)?.with_shape(ParamShape::independent(2)),
        (6, None) => parse_environment(EXAMPLE6)?,
        (1..=6, Some(v)) => return unknown(v),
        _ => return Err(Error::Config(format!("no example {n}; choose 1 to 6"))),
    };
    Ok(bundle)
}

/// Resolves names such as `example4` or `example4-modified-maze`.
pub fn builtin(name: &str) -> Result<EnvironmentBundle> {
    let rest = name
        .strip_prefix("example")
        .ok_or_else(|| Error::Config(format!("unknown environment '{name}'")))?;
    let (num, variant) = match rest.split_once('-') {
        Some((num, variant)) => (num, Some(variant)),
        None => (rest, None),
    };
    let n = num
        .parse()
        .map_err(|_| Error::Config(format!("unknown environment '{name}'")))?;
    let mut bundle = build_example(n, variant)?;
    bundle.name = name.to_string();
    Ok(bundle)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowDocument {
    pub u: usize,
    pub i: usize,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDocument {
    #[serde(rename = "type", default, skip_serializing)]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub states: usize,
    pub controls: usize,
    pub rows: Vec<RowDocument>,
    /// One-based `[state, control]` pairs.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inadmissible: Vec<[usize; 2]>,
    #[serde(default = "one")]
    pub entrance: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ParamShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDocument {
    #[serde(rename = "type", default, skip_serializing)]
    pub kind: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub walls: Vec<[usize; 2]>,
    #[serde(default)]
    pub absorbing: Vec<usize>,
    #[serde(default)]
    pub non_backtracking: Vec<NonBacktracking>,
    #[serde(default = "one")]
    pub entrance: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ParamShape>,
}

fn one() -> usize {
    1
}

/// An environment file; every index in it is one-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum EnvironmentDocument {
    Tensor(TensorDocument),
    Grid(GridDocument),
}

fn one_based(what: &str, index: usize, size: usize) -> Result<usize> {
    if (1..=size).contains(&index) {
        Ok(index - 1)
    } else {
        Err(Error::Document(format!("{what} {index} outside 1..={size}")))
    }
}

impl TensorDocument {
    fn into_bundle(self) -> Result<EnvironmentBundle> {
        let (s, m) = (self.states, self.controls);
        if s == 0 || m == 0 {
            return Err(Error::Document("states and controls must be positive".into()));
        }
        let mut transitions = vec![0.0; m * s * s];
        let mut seen = vec![false; m * s];
        for (n, row) in self.rows.iter().enumerate() {
            let u = one_based(&format!("rows[{n}].u"), row.u, m)?;
            let i = one_based(&format!("rows[{n}].i"), row.i, s)?;
            if std::mem::replace(&mut seen[u * s + i], true) {
                return Err(Error::Document(format!("rows[{n}] repeats (u={}, i={})", row.u, row.i)));
            }
            if row.probs.len() != s {
                return Err(Error::Document(format!(
                    "rows[{n}] has {} probabilities, expected {s}",
                    row.probs.len()
                )));
            }
            if let Some(p) = row.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::Document(format!("rows[{n}] has probability {p} outside [0, 1]")));
            }
            let sum: f64 = row.probs.iter().sum();
            if (sum - 1.0).abs() > DOCUMENT_TOLERANCE {
                return Err(Error::Document(format!(
                    "rows[{n}] (u={}, i={}) sums to {sum}, not 1",
                    row.u, row.i
                )));
            }
            // Within the document tolerance but outside the chain's own: renormalise.
            let scale = if (sum - 1.0).abs() > 1e-12 { sum } else { 1.0 };
            let dst = &mut transitions[(u * s + i) * s..(u * s + i + 1) * s];
            for (d, p) in dst.iter_mut().zip(&row.probs) {
                *d = p / scale;
            }
        }
        if let Some(missing) = seen.iter().position(|&b| !b) {
            return Err(Error::Document(format!(
                "no row for (u={}, i={})",
                missing / s + 1,
                missing % s + 1
            )));
        }
        let inadmissible = self
            .inadmissible
            .iter()
            .enumerate()
            .map(|(n, [i, u])| {
                Ok((
                    one_based(&format!("inadmissible[{n}] state"), *i, s)?,
                    one_based(&format!("inadmissible[{n}] control"), *u, m)?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let cmc = Cmc::new(s, m, transitions)?.with_inadmissible(&inadmissible)?;
        let entrance = one_based("entrance", self.entrance, s)?;
        let name = self.name.unwrap_or_else(|| "tensor".into());
        EnvironmentBundle::new(
            &name,
            cmc,
            entrance,
            self.labels,
            self.shape.unwrap_or(ParamShape::independent(1)),
        )
    }

    fn from_bundle(bundle: &EnvironmentBundle) -> Self {
        let cmc = &bundle.cmc;
        let (s, m) = (cmc.num_states(), cmc.num_controls());
        let rows = (0..m)
            .flat_map(|u| {
                (0..s).map(move |i| RowDocument {
                    u: u + 1,
                    i: i + 1,
                    probs: cmc.row(u, i).to_vec(),
                })
            })
            .collect();
        let inadmissible = (0..s)
            .flat_map(|i| (0..m).map(move |u| (i, u)))
            .filter(|&(i, u)| !cmc.is_admissible(i, u))
            .map(|(i, u)| [i + 1, u + 1])
            .collect();
        Self {
            kind: None,
            name: Some(bundle.name.clone()),
            states: s,
            controls: m,
            rows,
            inadmissible,
            entrance: bundle.entrance + 1,
            labels: Some(bundle.labels.clone()),
            shape: Some(bundle.shape),
        }
    }
}

impl GridDocument {
    fn into_bundle(self) -> Result<EnvironmentBundle> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::Document("grid rows and cols must be positive".into()));
        }
        let cells = self.rows * self.cols;
        let cell = |what: String, c: usize| one_based(&what, c, cells);
        let walls = self
            .walls
            .iter()
            .enumerate()
            .map(|(n, [a, b])| Ok((cell(format!("walls[{n}]"), *a)?, cell(format!("walls[{n}]"), *b)?)))
            .collect::<Result<Vec<_>>>()?;
        let absorbing = self
            .absorbing
            .iter()
            .enumerate()
            .map(|(n, a)| cell(format!("absorbing[{n}]"), *a))
            .collect::<Result<Vec<_>>>()?;
        let non_backtracking = self
            .non_backtracking
            .iter()
            .enumerate()
            .map(|(n, nb)| {
                Ok(NonBacktracking {
                    cell: cell(format!("non_backtracking[{n}].cell"), nb.cell)?,
                    exit: nb.exit,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = GridSpec {
            rows: self.rows,
            cols: self.cols,
            walls,
            absorbing,
            non_backtracking,
            entrance: cell("entrance".into(), self.entrance)?,
        };
        let mut bundle = compile_grid(&spec)?;
        if let Some(name) = self.name {
            bundle.name = name;
        }
        if let Some(shape) = self.shape {
            bundle.shape = shape;
        }
        Ok(bundle)
    }

    fn from_spec(bundle: &EnvironmentBundle, spec: &GridSpec) -> Self {
        Self {
            kind: None,
            name: Some(bundle.name.clone()),
            rows: spec.rows,
            cols: spec.cols,
            walls: spec.walls.iter().map(|&(a, b)| [a + 1, b + 1]).collect(),
            absorbing: spec.absorbing.iter().map(|a| a + 1).collect(),
            non_backtracking: spec
                .non_backtracking
                .iter()
                .map(|nb| NonBacktracking {
                    cell: nb.cell + 1,
                    exit: nb.exit,
                })
                .collect(),
            entrance: spec.entrance + 1,
            shape: Some(bundle.shape),
        }
    }
}

impl EnvironmentDocument {
    pub fn into_bundle(self) -> Result<EnvironmentBundle> {
        match self {
            EnvironmentDocument::Tensor(doc) => doc.into_bundle(),
            EnvironmentDocument::Grid(doc) => doc.into_bundle(),
        }
    }

    pub fn from_bundle(bundle: &EnvironmentBundle) -> Self {
        match &bundle.grid {
            Some(spec) => EnvironmentDocument::Grid(GridDocument::from_spec(bundle, spec)),
            None => EnvironmentDocument::Tensor(TensorDocument::from_bundle(bundle)),
        }
    }
}

pub fn parse_environment(text: &str) -> Result<EnvironmentBundle> {
    let located = |e: serde_json::Error| {
        Error::Document(format!(
            "malformed environment at line {} column {}: {e}",
            e.line(),
            e.column()
        ))
    };
    // Dispatch on the tag first so field errors keep their source position.
    let kind = serde_json::from_str::<serde_json::Value>(text)
        .map_err(located)?
        .get("type")
        .and_then(|t| t.as_str().map(str::to_string));
    match kind.as_deref() {
        Some("tensor") => serde_json::from_str::<TensorDocument>(text)
            .map_err(located)?
            .into_bundle(),
        Some("grid") => serde_json::from_str::<GridDocument>(text)
            .map_err(located)?
            .into_bundle(),
        Some(other) => Err(Error::Document(format!("unknown environment type '{other}'"))),
        None => Err(Error::Document(
            "environment needs a \"type\" of \"tensor\" or \"grid\"".into(),
        )),
    }
}

pub fn load_environment(path: &Path) -> Result<EnvironmentBundle> {
    let text = std::fs::read_to_string(path)?;
    parse_environment(&text).map_err(|e| match e {
        Error::Document(msg) => Error::Document(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_environment(bundle: &EnvironmentBundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvironmentDocument::from_bundle(bundle))?)
}

/// ASCII picture of a maze: `#` absorbing, `>` non-backtracking, path cells
/// numbered by the order they are visited (mod 10 beyond nine steps).
pub fn render_grid(spec: &GridSpec, path: &[State]) -> String {
    let mut out = String::new();
    let horizontal = |out: &mut String, r: usize| {
        out.push('+');
        for c in 0..spec.cols {
            let cell = r * spec.cols + c;
            let open = r > 0 && r < spec.rows && !spec.has_wall(cell - spec.cols, cell);
            out.push_str(if open { "   +" } else { "---+" });
        }
        out.push('\n');
    };
    for r in 0..spec.rows {
        horizontal(&mut out, r);
        out.push('|');
        for c in 0..spec.cols {
            let cell = r * spec.cols + c;
            let mark = if spec.absorbing.contains(&cell) {
                " # ".to_string()
            } else if spec.non_backtracking.iter().any(|nb| nb.cell == cell) {
                " > ".to_string()
            } else if let Some(step) = path.iter().position(|&p| p == cell) {
                format!("{:^3}", step % 10)
            } else {
                "   ".to_string()
            };
            out.push_str(&mark);
            let wall = c + 1 == spec.cols || spec.has_wall(cell, cell + 1);
            out.push(if wall { '|' } else { ' ' });
        }
        out.push('\n');
    }
    horizontal(&mut out, spec.rows);
    let _ = writeln!(
        out,
        "{}",
        path.iter().map(|p| (p + 1).to_string()).collect::<Vec<_>>().join(" ")
    );
    out
}

/// States reachable from `start` under any control sequence.
pub fn reachable(cmc: &Cmc, start: State) -> BTreeSet<State> {
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for u in cmc.admissible_controls(i) {
            for (j, _) in cmc.support(u, i) {
                if seen.insert(j) {
                    queue.push_back(j);
                }
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_one_rows() {
        let b = build_example(1, None).unwrap();
        assert_eq!(b.cmc.row(0, 0), &[0.0, 1.0]);
        assert_eq!(b.cmc.row(1, 0), &[1.0, 0.0]);
        assert_eq!(b.cmc.row(0, 1), &[0.0, 1.0]);
        assert_eq!(b.cmc.row(1, 1), &[0.0, 1.0]);
        let s = build_example(1, Some("stochastic")).unwrap();
        assert_eq!(s.cmc.row(0, 0), &[0.1, 0.9]);
        assert!(build_example(1, Some("nope")).is_err());
        assert!(build_example(7, None).is_err());
    }

    #[test]
    fn example_two_chain() {
        let b = build_example(2, None).unwrap();
        for u in 0..4 {
            for i in 0..4 {
                let j = if u < 3 && i == u { i + 1 } else { i };
                assert_eq!(b.cmc.prob(u, i, j), 1.0, "u={u} i={i}");
            }
        }
    }

    #[test]
    fn example_three_corners() {
        let b = build_example(3, None).unwrap();
        let cmc = &b.cmc;
        assert_eq!((cmc.num_states(), cmc.num_controls()), (16, 4));
        // Cell 1: up and left blocked.
        assert_eq!(cmc.prob(0, 0, 0), 1.0);
        assert_eq!(cmc.prob(1, 0, 4), 1.0);
        assert_eq!(cmc.prob(2, 0, 0), 1.0);
        assert_eq!(cmc.prob(3, 0, 1), 1.0);
        // Cell 4: up and right blocked.
        assert_eq!(cmc.prob(0, 3, 3), 1.0);
        assert_eq!(cmc.prob(1, 3, 7), 1.0);
        assert_eq!(cmc.prob(2, 3, 2), 1.0);
        assert_eq!(cmc.prob(3, 3, 3), 1.0);
        // Cell 13: down and left blocked.
        assert_eq!(cmc.prob(0, 12, 8), 1.0);
        assert_eq!(cmc.prob(1, 12, 12), 1.0);
        assert_eq!(cmc.prob(3, 12, 13), 1.0);
        for u in 0..4 {
            assert_eq!(cmc.prob(u, 15, 15), 1.0);
        }
        assert_eq!(cmc.prob(3, 14, 15), 1.0);
        assert_eq!(cmc.prob(1, 11, 15), 1.0);
    }

    #[test]
    fn single_cell_grid_self_loops() {
        let b = compile_grid(&GridSpec::open(1, 1)).unwrap();
        for u in 0..4 {
            assert_eq!(b.cmc.row(u, 0), &[1.0]);
        }
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::open(2, 2);
        g.walls.push((0, 3));
        assert!(compile_grid(&g).is_err());
        let mut g = GridSpec::open(2, 2);
        g.walls.push((0, 1));
        g.non_backtracking.push(NonBacktracking {
            cell: 0,
            exit: Direction::Right,
        });
        assert!(compile_grid(&g).is_err());
        let mut g = GridSpec::open(2, 2);
        g.non_backtracking.push(NonBacktracking {
            cell: 0,
            exit: Direction::Up,
        });
        assert!(compile_grid(&g).is_err());
        let mut g = GridSpec::open(2, 2);
        g.absorbing.push(4);
        assert!(compile_grid(&g).is_err());
    }

    #[test]
    fn non_backtracking_cells_have_one_exit() {
        let b = build_example(5, None).unwrap();
        for (cell, exit) in [(14, 13), (12, 11)] {
            for u in 0..4 {
                let expected = if u == Direction::Left.control() { exit } else { cell };
                assert_eq!(b.cmc.prob(u, cell, expected), 1.0);
            }
        }
        assert_eq!(b.cmc.prob(Direction::Down.control(), 9, 14), 1.0);
        assert_eq!(b.cmc.prob(Direction::Left.control(), 13, 12), 1.0);
    }

    #[test]
    fn example_six_admissibility() {
        let b = build_example(6, None).unwrap();
        assert!(!b.cmc.is_admissible(0, 1));
        assert!(!b.cmc.is_admissible(2, 0));
        assert!(b.cmc.is_admissible(1, 1));
        assert_eq!(b.cmc.row(0, 0), &[0.75, 0.25, 0.0]);
        assert_eq!(b.cmc.row(1, 1), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn round_trip_every_example() {
        for n in 1..=6 {
            let b = build_example(n, None).unwrap();
            let back = parse_environment(&save_environment(&b).unwrap()).unwrap();
            assert_eq!(back.cmc, b.cmc, "example {n}");
            assert_eq!(back.entrance, b.entrance);
            assert_eq!(back.shape, b.shape);
        }
        let s = example_one(0.3).unwrap();
        let back = parse_environment(&save_environment(&s).unwrap()).unwrap();
        assert_eq!(back.cmc.transitions(), s.cmc.transitions());
    }

    #[test]
    fn bad_row_is_reported_by_index() {
        let doc = r#"{"type":"tensor","states":2,"controls":1,
            "rows":[{"u":1,"i":1,"probs":[0.5,0.5]},{"u":1,"i":2,"probs":[0.5,0.4]}]}"#;
        let err = parse_environment(doc).unwrap_err().to_string();
        assert!(err.contains("rows[1]"), "{err}");
        assert!(err.contains("0.9"), "{err}");
    }

    #[test]
    fn schema_errors_name_the_location() {
        let doc = "{\"type\":\"grid\",\n\"rows\":2,\"cols\":2,\"bogus\":1}";
        let err = parse_environment(doc).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line 2"), "{err}");
        let missing = r#"{"type":"tensor","states":2,"controls":1,"rows":[{"u":1,"i":1,"probs":[1,0]}]}"#;
        assert!(parse_environment(missing).unwrap_err().to_string().contains("u=1, i=2"));
    }

    #[test]
    fn tolerance_window_renormalises() {
        let doc = r#"{"type":"tensor","states":2,"controls":1,
            "rows":[{"u":1,"i":1,"probs":[0.5,0.5000000001]},{"u":1,"i":2,"probs":[0,1]}]}"#;
        let b = parse_environment(doc).unwrap();
        assert!((b.cmc.row(0, 0).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn builtin_names() {
        assert_eq!(
            builtin("example4-modified-maze").unwrap().cmc,
            build_example(4, Some("modified-maze")).unwrap().cmc
        );
        assert!(builtin("maze").is_err());
        assert!(builtin("example9").is_err());
    }

    #[test]
    fn render_marks_features() {
        let b = build_example(5, None).unwrap();
        let art = b.render(&[2, 7]).unwrap();
        assert_eq!(art.matches('>').count(), 2);
        assert!(art.ends_with("3 8\n"));
        let maze = build_example(4, None).unwrap().render(&[]).unwrap();
        assert_eq!(maze.matches('#').count(), 3);
    }
}
