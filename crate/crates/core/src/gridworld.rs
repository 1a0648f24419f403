//! Treasure-hunt grid world with an exact action-value oracle.
//!
//! The agent moves one cell per step in one of four directions; moves into a
//! wall leave it in place. An observation is terminal once the agent stands on
//! the treasure. The optimal action value of a move is minus the number of
//! steps still needed after taking it, so `q_star` is known in closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_WIDTH: u32 = 5;
pub const DEFAULT_HEIGHT: u32 = 5;
pub const DEFAULT_MAX_STEPS: u32 = 150;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: u32,
    pub height: u32,
    pub max_steps: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: DEFAULT_WIDTH,
            height: DEFAULT_HEIGHT,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl GridConfig {
    pub fn new(width: u32, height: u32, max_steps: u32) -> Result<Self> {
        let cfg = Self {
            width,
            height,
            max_steps,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidGrid(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.max_steps < self.width + self.height {
            return Err(Error::InvalidGrid(format!(
                "max_steps {} is below width + height = {}",
                self.max_steps,
                self.width + self.height
            )));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    /// Number of non-terminal observations, `C·(C−1)` for `C` cells.
    pub fn observation_count(&self) -> usize {
        let c = self.cell_count();
        c * (c - 1)
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.col >= 0
            && cell.row >= 0
            && cell.col < self.width as i32
            && cell.row < self.height as i32
    }

    pub fn cell_index(&self, cell: Cell) -> usize {
        cell.row as usize * self.width as usize + cell.col as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index % w) as i32, (index / w) as i32)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cell_count()).map(move |i| self.cell_at(i))
    }

    /// Dense index of a non-terminal observation, treasure-major.
    pub fn rank(&self, obs: &Observation) -> usize {
        let c = self.cell_count();
        let t = self.cell_index(obs.treasure);
        let a = self.cell_index(obs.agent);
        debug_assert_ne!(a, t);
        t * (c - 1) + if a < t { a } else { a - 1 }
    }

    /// Inverse of [`GridConfig::rank`].
    pub fn observation(&self, rank: usize) -> Observation {
        let c = self.cell_count();
        let t = rank / (c - 1);
        let mut a = rank % (c - 1);
        if a >= t {
            a += 1;
        }
        Observation {
            agent: self.cell_at(a),
            treasure: self.cell_at(t),
        }
    }

    /// All non-terminal observations in rank order.
    pub fn observations(&self) -> impl Iterator<Item = Observation> + '_ {
        (0..self.observation_count()).map(move |r| self.observation(r))
    }

    pub fn check(&self, obs: &Observation) -> Result<()> {
        if !self.contains(obs.agent) || !self.contains(obs.treasure) {
            return Err(Error::OutOfBounds(*obs));
        }
        Ok(())
    }

    fn check_live(&self, obs: &Observation) -> Result<()> {
        self.check(obs)?;
        if obs.is_terminal() {
            return Err(Error::TerminalObservation(*obs));
        }
        Ok(())
    }

    /// Deterministic transition with wall clamping.
    pub fn step(&self, obs: &Observation, action: Action) -> Result<Observation> {
        self.check_live(obs)?;
        Ok(self.step_unchecked(obs, action))
    }

    pub(crate) fn step_unchecked(&self, obs: &Observation, action: Action) -> Observation {
        let (dc, dr) = action.delta();
        let moved = Cell::new(obs.agent.col + dc, obs.agent.row + dr);
        Observation {
            agent: if self.contains(moved) {
                moved
            } else {
                obs.agent
            },
            treasure: obs.treasure,
        }
    }

    /// Optimal action value: `−(1 + D(next agent, treasure))`.
    pub fn q_star(&self, obs: &Observation, action: Action) -> Result<f64> {
        self.check_live(obs)?;
        Ok(self.q_star_unchecked(obs, action))
    }

    pub(crate) fn q_star_unchecked(&self, obs: &Observation, action: Action) -> f64 {
        let next = self.step_unchecked(obs, action);
        -(1.0 + next.agent.manhattan(next.treasure) as f64)
    }

    pub fn q_star_table(&self, obs: &Observation) -> Result<[f64; 4]> {
        self.check_live(obs)?;
        Ok(Action::ALL.map(|a| self.q_star_unchecked(obs, a)))
    }

    /// Positive action value `q(a,o) − min_a' q(a',o)`.
    pub fn q_star_plus(&self, obs: &Observation, action: Action) -> Result<f64> {
        let table = self.q_star_plus_table(obs)?;
        Ok(table[action.index()])
    }

    pub fn q_star_plus_table(&self, obs: &Observation) -> Result<[f64; 4]> {
        Ok(positive_part(self.q_star_table(obs)?))
    }

    /// Argmax of `q_star`, lowest action index on ties.
    pub fn best_action(&self, obs: &Observation) -> Result<Action> {
        Ok(Action::from_index(argmax(&self.q_star_table(obs)?)))
    }

    /// Uniform mass over every non-terminal observation.
    pub fn uniform_mu(&self) -> ObservationDistribution {
        let n = self.observation_count();
        ObservationDistribution {
            weights: vec![1.0 / n as f64; n],
        }
    }
}

/// Shifts a value table so that its minimum is zero.
pub fn positive_part(values: [f64; 4]) -> [f64; 4] {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    values.map(|v| v - min)
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub col: i32,
    pub row: i32,
}

impl Cell {
    pub const fn new(col: i32, row: i32) -> Self {
        Self { col, row }
    }

    pub fn manhattan(self, other: Cell) -> u32 {
        self.col.abs_diff(other.col) + self.row.abs_diff(other.row)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.col, self.row)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observation {
    pub agent: Cell,
    pub treasure: Cell,
}

impl Observation {
    pub const fn new(agent: Cell, treasure: Cell) -> Self {
        Self { agent, treasure }
    }

    pub fn is_terminal(&self) -> bool {
        self.agent == self.treasure
    }

    /// Remaining shortest-path length.
    pub fn distance(&self) -> u32 {
        self.agent.manhattan(self.treasure)
    }
}

impl fmt::Display for Observation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "agent={} treasure={}", self.agent, self.treasure)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Right = 0,
    Down = 1,
    Left = 2,
    Up = 3,
}

impl Action {
    pub const COUNT: usize = 4;
    pub const ALL: [Action; 4] = [Action::Right, Action::Down, Action::Left, Action::Up];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    /// `(Δcol, Δrow)`; row 0 is the top of the grid.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::Right => (1, 0),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Up => (0, -1),
        }
    }

    pub fn opposite(self) -> Action {
        Self::ALL[(self.index() + 2) % 4]
    }

    pub fn name(self) -> &'static str {
        match self {
            Action::Right => "right",
            Action::Down => "down",
            Action::Left => "left",
            Action::Up => "up",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Probability mass over non-terminal observations, stored in rank order.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationDistribution {
    weights: Vec<f64>,
}

impl ObservationDistribution {
    pub fn new(grid: &GridConfig, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.observation_count() {
            return Err(Error::InvalidParameter(format!(
                "expected {} observation weights, got {}",
                grid.observation_count(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, grid: &GridConfig, obs: &Observation) -> f64 {
        self.weights[grid.rank(obs)]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}
