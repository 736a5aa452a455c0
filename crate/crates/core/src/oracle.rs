//! Primal check: the bounding problem restricted to measures supported on a
//! finite candidate grid. Its optimum is a lower bound on the worst case, so
//! comparing it with the dual bound gives an empirical duality gap.

use std::collections::{HashMap, HashSet};

use serde::Serialize;

use crate::dual_builder::{solve_bound, BoundStatus, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{Cell, CellKey, Partition};
use crate::lp::{solve_dense_simplex, Direction, LinearProgram, RowSense, SimplexOptions, Status, VarBound};
use crate::model::Model;
use crate::test_functions::{PiecewiseAffine, Sense};

/// Relative gap accepted between the primal oracle and the dual bound.
pub const GAP_TOL: f64 = 1e-6;

/// Grid points closer than this (per coordinate) are merged.
const DEDUP_TOL: f64 = 1e-9;

/// A candidate atom. With a cell attached, functions take their values from
/// the cell's affine pieces (the atom is a limit of points inside the cell);
/// without one they are evaluated pointwise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridPoint {
    pub point: Vec<f64>,
    pub cell: Option<CellKey>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGrid {
    dimension: usize,
    points: Vec<GridPoint>,
}

impl CandidateGrid {
    pub fn new(dimension: usize) -> Self {
        CandidateGrid {
            dimension,
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, point: Vec<f64>, cell: Option<CellKey>) -> Result<()> {
        if point.len() != self.dimension {
            return Err(Error::input(format!(
                "grid point has {} coordinates, expected {}",
                point.len(),
                self.dimension
            )));
        }
        if point.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("grid points must be finite"));
        }
        self.points.push(GridPoint { point, cell });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    /// Drops points that repeat an earlier point with the same cell.
    pub fn dedup(&mut self) {
        let mut seen = HashSet::new();
        self.points.retain(|p| {
            let q: Vec<i64> = p.point.iter().map(|v| (v / DEDUP_TOL).round() as i64).collect();
            seen.insert((q, p.cell))
        });
    }

    /// Every vertex of every cell, attributed to that cell. Unbounded cells are
    /// clipped to `[-radius, radius]` when a radius is given and skipped
    /// otherwise; each such cell produces a warning.
    pub fn cell_vertices(partition: &Partition, radius: Option<f64>, budget: usize) -> Result<(Self, Vec<String>)> {
        let mut grid = CandidateGrid::new(partition.dimension());
        let mut warnings = Vec::new();
        for cell in partition.cells(budget)? {
            let verts = if cell.is_bounded() {
                cell.vertices()?.to_vec()
            } else if let Some(r) = radius {
                warnings.push(format!("cell {} is unbounded; clipped to radius {r}", cell.key()));
                cell.clipped_vertices(r)
            } else {
                warnings.push(format!("cell {} is unbounded and has no grid points", cell.key()));
                continue;
            };
            for v in verts {
                grid.push(v, Some(cell.key()))?;
            }
        }
        grid.dedup();
        Ok((grid, warnings))
    }

    /// The given points, each attributed to every cell that contains it.
    /// Points outside the support are rejected.
    pub fn from_points_in_cells(partition: &Partition, points: &[Vec<f64>]) -> Result<Self> {
        let mut grid = CandidateGrid::new(partition.dimension());
        for x in points {
            let keys = partition.locate(x);
            if keys.is_empty() {
                return Err(Error::input(format!("point {x:?} is outside the support")));
            }
            for key in keys {
                grid.push(x.clone(), Some(key))?;
            }
        }
        grid.dedup();
        Ok(grid)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PrimalSolution {
    pub status: Status,
    /// Worst-case value over the grid; `-inf` when no grid measure is
    /// feasible.
    pub value: f64,
    pub weights: Vec<f64>,
}

/// `max sum_i w_i h(x_i)` over probability weights on the grid meeting every
/// constraint of the model.
pub fn solve_primal_discretization(model: &Model, grid: &CandidateGrid, opts: &SimplexOptions) -> Result<PrimalSolution> {
    if grid.dimension != model.dimension() {
        return Err(Error::input("grid dimension does not match the model"));
    }
    let mut lp = LinearProgram::new(Direction::Maximize);
    for t in model.tests() {
        let sense = match t.sense {
            Sense::Upper => RowSense::Le,
            Sense::Lower => RowSense::Ge,
            Sense::Equality => RowSense::Eq,
        };
        lp.add_row(t.id.clone(), sense, t.bound);
    }
    let mass = lp.add_row("mass", RowSense::Eq, 1.0);
    let risk = model.risk();
    let mut cells: HashMap<CellKey, Cell> = HashMap::new();
    for (i, gp) in grid.points().iter().enumerate() {
        let x = &gp.point;
        let (values, h) = match gp.cell {
            Some(key) => {
                let cell = match cells.entry(key) {
                    std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                    std::collections::hash_map::Entry::Vacant(e) => e.insert(model.partition().cell(key)?),
                };
                let cell = &*cell;
                if !cell.contains_with_tol(x, 1e-9) {
                    return Err(Error::input(format!("grid point {i} is not in its cell {key}")));
                }
                let values = model
                    .tests()
                    .iter()
                    .map(|t| Ok(t.restrict_to_cell(cell)?.eval(x)))
                    .collect::<Result<Vec<f64>>>()?;
                (values, risk.value_on_cell(cell, x)?)
            }
            None => (model.tests().iter().map(|t| t.evaluate(x)).collect(), risk.evaluate(x)),
        };
        let mut entries: Vec<(usize, f64)> = values.into_iter().enumerate().collect();
        entries.push((mass, 1.0));
        lp.add_column(format!("w{i}"), h, VarBound::NonNegative, entries)?;
    }
    let sol = solve_dense_simplex(&lp, opts)?;
    let value = match sol.status {
        Status::Optimal | Status::IterationLimit => sol.objective,
        Status::Infeasible => f64::NEG_INFINITY,
        Status::Unbounded => f64::INFINITY,
    };
    Ok(PrimalSolution {
        status: sol.status,
        value,
        weights: sol.primal,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DualityGap {
    pub primal: f64,
    pub dual: f64,
    /// `dual - primal`; never negative up to rounding.
    pub gap: f64,
    /// `gap / max(1, |primal|)`.
    pub relative_gap: f64,
    pub primal_status: Status,
    pub dual_status: BoundStatus,
}

impl DualityGap {
    pub fn within(&self, tol: f64) -> bool {
        self.relative_gap.abs() <= tol
    }
}

/// Solves both sides and reports the gap between them.
pub fn duality_gap(model: &Model, grid: &CandidateGrid, opts: &SolverOptions) -> Result<DualityGap> {
    let primal = solve_primal_discretization(model, grid, &opts.simplex)?;
    let dual = solve_bound(model, opts)?;
    let gap = dual.bound - primal.value;
    let relative_gap = if gap.is_finite() {
        gap / primal.value.abs().max(1.0)
    } else {
        gap
    };
    Ok(DualityGap {
        primal: primal.value,
        dual: dual.bound,
        gap,
        relative_gap,
        primal_status: primal.status,
        dual_status: dual.status,
    })
}
