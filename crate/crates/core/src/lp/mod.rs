//! Linear programming: a dense two-phase tableau simplex for small problems,
//! and a revised simplex that can grow its column set on demand (delayed
//! column generation).

mod dense;
mod mps;
mod revised;

use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};

pub use dense::solve_dense_simplex;
pub use mps::write_mps;
pub use revised::{solve_dcg, solve_revised, ColumnGenerator, GeneratedColumn};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RowSense {
    Le,
    Eq,
    Ge,
}

impl RowSense {
    fn flipped(self) -> Self {
        match self {
            RowSense::Le => RowSense::Ge,
            RowSense::Ge => RowSense::Le,
            RowSense::Eq => RowSense::Eq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum VarBound {
    NonNegative,
    Free,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub name: String,
    pub sense: RowSense,
    pub rhs: f64,
}

/// A variable and its sparse coefficient column, sorted by row index.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub objective: f64,
    pub bound: VarBound,
    pub entries: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub direction: Direction,
    pub rows: Vec<Row>,
    pub columns: Vec<Column>,
}

impl LinearProgram {
    pub fn new(direction: Direction) -> Self {
        LinearProgram {
            direction,
            rows: Vec::new(),
            columns: Vec::new(),
        }
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn add_row(&mut self, name: impl Into<String>, sense: RowSense, rhs: f64) -> usize {
        self.rows.push(Row {
            name: name.into(),
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    /// Adds a column; entries are sorted, zero entries dropped, and duplicate
    /// or out-of-range rows rejected.
    pub fn add_column(
        &mut self,
        name: impl Into<String>,
        objective: f64,
        bound: VarBound,
        entries: Vec<(usize, f64)>,
    ) -> Result<usize> {
        let entries = normalize_entries(entries, self.rows.len())?;
        self.columns.push(Column {
            name: name.into(),
            objective,
            bound,
            entries,
        });
        Ok(self.columns.len() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        for (j, c) in self.columns.iter().enumerate() {
            if !c.objective.is_finite() {
                return Err(Error::input(format!("column {j}: non-finite objective")));
            }
            for w in c.entries.windows(2) {
                if w[0].0 >= w[1].0 {
                    return Err(Error::input(format!("column {j}: entries not strictly sorted")));
                }
            }
            if c.entries.iter().any(|(r, v)| *r >= self.rows.len() || !v.is_finite()) {
                return Err(Error::input(format!("column {j}: bad entry")));
            }
        }
        if self.rows.iter().any(|r| !r.rhs.is_finite()) {
            return Err(Error::input("non-finite right-hand side"));
        }
        Ok(())
    }

    /// Objective value of `x` in the program's own direction.
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.columns.iter().zip(x).map(|(c, v)| c.objective * v).sum()
    }

    /// Largest violation of rows and bounds at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut activity = vec![0.0; self.rows.len()];
        let mut worst: f64 = 0.0;
        for (c, v) in self.columns.iter().zip(x) {
            if c.bound == VarBound::NonNegative {
                worst = worst.max(-v);
            }
            for (r, a) in &c.entries {
                activity[*r] += a * v;
            }
        }
        for (row, act) in self.rows.iter().zip(activity) {
            let viol = match row.sense {
                RowSense::Le => act - row.rhs,
                RowSense::Ge => row.rhs - act,
                RowSense::Eq => (act - row.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }
}

pub(crate) fn normalize_entries(mut entries: Vec<(usize, f64)>, rows: usize) -> Result<Vec<(usize, f64)>> {
    entries.retain(|(_, v)| *v != 0.0);
    entries.sort_by_key(|(r, _)| *r);
    for w in entries.windows(2) {
        if w[0].0 == w[1].0 {
            return Err(Error::input(format!("duplicate entry in row {}", w[0].0)));
        }
    }
    if let Some((r, _)) = entries.iter().find(|(r, _)| *r >= rows) {
        return Err(Error::input(format!("entry in row {r} but only {rows} rows")));
    }
    Ok(entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: Status,
    /// Values of the program's columns, followed by generated columns in the
    /// order they were generated.
    pub primal: Vec<f64>,
    /// Row duals as sensitivities `d objective / d rhs` in the program's own
    /// direction.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub columns_generated: usize,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimplexOptions {
    pub feasibility_tol: f64,
    pub reduced_cost_tol: f64,
    pub pivot_tol: f64,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
    pub max_iterations: usize,
    /// Row and column limit for the dense solver.
    pub dense_max_dim: usize,
    /// Tableau entry limit for the dense solver.
    pub dense_max_entries: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feasibility_tol: 1e-7,
            reduced_cost_tol: 1e-9,
            pivot_tol: 1e-10,
            bland_after: 50,
            refactor_every: 100,
            max_iterations: 1_000_000,
            dense_max_dim: 10_000,
            dense_max_entries: 50_000_000,
        }
    }
}
