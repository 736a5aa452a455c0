//! Finite reformulations of the semi-infinite dual, one cell at a time, and
//! the LPs assembled from them.
//!
//! With multipliers `y` for the integral constraints and `z0` for the mass
//! constraint, the dual asks for `sum_k y_k f_k(x) + z0 >= h(x)` everywhere.
//! On a cell every function is affine, so each cell contributes either
//!
//! * a Farkas block: free moment variables and one multiplier per half-space,
//! * a single row after eliminating the half-space multipliers, valid when
//!   the tests are constant on the cell, or
//! * one row per vertex, valid on bounded cells.
//!
//! The LP handed to the simplex is the transpose of this dual: one row per
//! dual variable and one column per cell row, so a column's value is the mass
//! a worst-case measure puts on the cell.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use dashmap::DashMap;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, CellKey, Halfspace, Slice, TauSide};
use crate::lp::{
    solve_dcg, solve_dense_simplex, ColumnGenerator, Direction, GeneratedColumn, LinearProgram, LpSolution,
    RowSense, SimplexOptions, Status, VarBound,
};
use crate::model::{Model, Multiplier};
use crate::test_functions::{Affine, PiecewiseAffine, RiskKind, TestFunctionKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReductionMode {
    /// Eliminate where the tests are constant, vertices on other bounded
    /// cells, Farkas blocks elsewhere.
    #[default]
    Auto,
    Explicit,
    LambdaEliminated,
    Vertex,
}

/// `sum_k coefficients[k] * y_k + z0 >= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRow {
    pub cell: CellKey,
    pub label: String,
    pub coefficients: Vec<f64>,
    pub rhs: f64,
}

/// The dual constraint on one polyhedron `{x : <f_j, x> >= l_j}` in Farkas
/// form: multiplier functions restrict to `slopes[k] . x + constants[k]` and
/// the risk to `risk`.
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasPiece {
    pub cell: CellKey,
    pub label: String,
    pub halfspaces: Vec<Halfspace>,
    pub slopes: Vec<Vec<f64>>,
    pub constants: Vec<f64>,
    pub risk: Affine,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellBlock {
    Eliminated(Vec<DualRow>),
    Farkas(Vec<FarkasPiece>),
    Vertex(Vec<DualRow>),
}

/// Optimal half-space multipliers for a fixed slope `g` and the value
/// `C = sum_j lambda_j l_j`, which equals `-max_{x in P} <g, x>`.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaCertificate {
    pub lambda: Vec<f64>,
    pub c: f64,
}

/// Solves `max sum lambda_j l_j s.t. sum lambda_j f_j = -g, lambda >= 0`.
///
/// Returns `None` when no multipliers exist, i.e. `<g, x>` is unbounded above
/// on the polyhedron. The polyhedron is assumed nonempty, so `g = 0` gives
/// `C = 0` directly.
pub fn precompute_cell_lambda(
    halfspaces: &[Halfspace],
    g: &[f64],
    opts: &SimplexOptions,
) -> Result<Option<LambdaCertificate>> {
    if g.iter().all(|v| *v == 0.0) {
        return Ok(Some(LambdaCertificate {
            lambda: vec![0.0; halfspaces.len()],
            c: 0.0,
        }));
    }
    let mut lp = LinearProgram::new(Direction::Maximize);
    for (i, gi) in g.iter().enumerate() {
        lp.add_row(format!("g{i}"), RowSense::Eq, -gi);
    }
    for (j, h) in halfspaces.iter().enumerate() {
        if h.normal.len() != g.len() {
            return Err(Error::input("half-space and slope dimensions differ"));
        }
        let entries = h.normal.iter().copied().enumerate().collect();
        lp.add_column(format!("l{j}"), h.bound, VarBound::NonNegative, entries)?;
    }
    let sol = solve_dense_simplex(&lp, opts)?;
    match sol.status {
        Status::Optimal => Ok(Some(LambdaCertificate {
            c: sol.objective,
            lambda: sol.primal,
        })),
        Status::Infeasible => Ok(None),
        Status::Unbounded => Err(Error::Reduction {
            cell: "?".into(),
            reason: "half-space system is empty".into(),
        }),
        Status::IterationLimit => Err(Error::Reduction {
            cell: "?".into(),
            reason: "iteration limit in multiplier LP".into(),
        }),
    }
}

/// Restrictions of every multiplier function (sign applied) and of the risk.
struct CellData {
    tests: Vec<Affine>,
    risk: Affine,
}

fn cell_data(model: &Model, cell: &Cell) -> Result<CellData> {
    let tests = model
        .multipliers()
        .iter()
        .map(|m| {
            let a = model.tests()[m.test].restrict_to_cell(cell)?;
            Ok(Affine {
                gradient: a.gradient.iter().map(|v| v * m.sign).collect(),
                constant: a.constant * m.sign,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let risk = model.risk().restrict_to_cell(cell)?;
    Ok(CellData { tests, risk })
}

/// Polyhedra and risk pieces of a cell. A cell that touches the threshold
/// hyperplane only at the top corner of the support gets a second piece for
/// that contact face, where the VaR indicator is 1.
fn risk_pieces(model: &Model, cell: &Cell, risk: &Affine) -> Result<Vec<(String, Vec<Halfspace>, Affine)>> {
    let mut pieces = vec![(format!("cell{}", cell.key()), cell.halfspaces().to_vec(), risk.clone())];
    let r = model.risk();
    if r.kind == RiskKind::VarIndicator && cell.touches_tau() {
        let n = cell.dimension();
        let mut hs = cell.halfspaces().to_vec();
        hs.push(Halfspace::new(vec![1.0; n], r.tau)?);
        pieces.push((format!("cell{}:face", cell.key()), hs, Affine::constant(n, 1.0)));
    }
    Ok(pieces)
}

pub fn farkas_constraints_linear(model: &Model, cell: &Cell) -> Result<Vec<FarkasPiece>> {
    let data = cell_data(model, cell)?;
    Ok(risk_pieces(model, cell, &data.risk)?
        .into_iter()
        .map(|(label, halfspaces, risk)| FarkasPiece {
            cell: cell.key(),
            label,
            halfspaces,
            slopes: data.tests.iter().map(|a| a.gradient.clone()).collect(),
            constants: data.tests.iter().map(|a| a.constant).collect(),
            risk,
        })
        .collect())
}

/// One row per risk piece, valid when every multiplier function is constant
/// on the cell.
pub fn eliminated_constraints(model: &Model, cell: &Cell, opts: &SimplexOptions) -> Result<Vec<DualRow>> {
    let data = cell_data(model, cell)?;
    if data.tests.iter().any(|a| !a.is_constant()) {
        return Err(Error::Unsupported(format!(
            "cell {}: half-space multipliers can only be eliminated where the tests are constant",
            cell.key()
        )));
    }
    let coefficients: Vec<f64> = data.tests.iter().map(|a| a.constant).collect();
    risk_pieces(model, cell, &data.risk)?
        .into_iter()
        .map(|(label, halfspaces, risk)| {
            let cert = precompute_cell_lambda(&halfspaces, &risk.gradient, opts)
                .map_err(|e| with_cell(e, cell.key()))?
                .ok_or_else(|| Error::InfeasibleOnCell {
                    cell: cell.key().to_string(),
                })?;
            Ok(DualRow {
                cell: cell.key(),
                label,
                coefficients: coefficients.clone(),
                rhs: risk.constant - cert.c,
            })
        })
        .collect()
}

fn with_cell(e: Error, key: CellKey) -> Error {
    match e {
        Error::Reduction { reason, .. } => Error::Reduction {
            cell: key.to_string(),
            reason,
        },
        other => other,
    }
}

/// One row per vertex of a bounded cell, with the risk seen from inside the
/// cell.
pub fn concave_vertex_constraints(model: &Model, cell: &Cell) -> Result<Vec<DualRow>> {
    let data = cell_data(model, cell)?;
    let risk = model.risk();
    cell.vertices()?
        .iter()
        .enumerate()
        .map(|(i, q)| {
            Ok(DualRow {
                cell: cell.key(),
                label: format!("cell{}:v{i}", cell.key()),
                coefficients: data.tests.iter().map(|a| a.eval(q)).collect(),
                rhs: risk.value_on_cell(cell, q)?,
            })
        })
        .collect()
}

fn tests_constant_on(model: &Model, cell: &Cell) -> Result<bool> {
    for m in model.multipliers() {
        if !model.tests()[m.test].restrict_to_cell(cell)?.is_constant() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Which reduction `mode` uses on `cell`. Modes that cannot apply to a cell
/// fall back to the Farkas block.
pub fn block_kind(model: &Model, cell: &Cell, mode: ReductionMode) -> Result<BlockKind> {
    Ok(match mode {
        ReductionMode::Explicit => BlockKind::Farkas,
        ReductionMode::LambdaEliminated => {
            if tests_constant_on(model, cell)? {
                BlockKind::Eliminated
            } else {
                BlockKind::Farkas
            }
        }
        ReductionMode::Vertex => {
            if cell.is_bounded() {
                BlockKind::Vertex
            } else {
                BlockKind::Farkas
            }
        }
        ReductionMode::Auto => {
            if tests_constant_on(model, cell)? {
                BlockKind::Eliminated
            } else if cell.is_bounded() {
                BlockKind::Vertex
            } else {
                BlockKind::Farkas
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Eliminated,
    Farkas,
    Vertex,
}

pub fn cell_block(model: &Model, cell: &Cell, mode: ReductionMode, opts: &SimplexOptions) -> Result<CellBlock> {
    Ok(match block_kind(model, cell, mode)? {
        BlockKind::Eliminated => CellBlock::Eliminated(eliminated_constraints(model, cell, opts)?),
        BlockKind::Farkas => CellBlock::Farkas(farkas_constraints_linear(model, cell)?),
        BlockKind::Vertex => CellBlock::Vertex(concave_vertex_constraints(model, cell)?),
    })
}

/// The dual as finitely many rows and Farkas pieces.
#[derive(Debug, Clone)]
pub struct DualLp {
    pub multipliers: Vec<Multiplier>,
    pub rows: Vec<DualRow>,
    pub pieces: Vec<FarkasPiece>,
    pub dimension: usize,
}

/// Materializes the reduction of every cell.
pub fn assemble_dual_lp(model: &Model, mode: ReductionMode, cell_budget: usize, opts: &SimplexOptions) -> Result<DualLp> {
    let mut rows = Vec::new();
    let mut pieces = Vec::new();
    for cell in model.partition().cells(cell_budget)? {
        match cell_block(model, &cell, mode, opts)? {
            CellBlock::Eliminated(r) | CellBlock::Vertex(r) => rows.extend(r),
            CellBlock::Farkas(p) => pieces.extend(p),
        }
    }
    Ok(DualLp {
        multipliers: model.multipliers().to_vec(),
        rows,
        pieces,
        dimension: model.dimension(),
    })
}

impl DualLp {
    /// Index of the mass (`z0`) row in [`DualLp::transpose`].
    pub fn mass_row(&self) -> usize {
        self.multipliers.len()
    }

    /// `min sum rhs_k y_k + z0` subject to every row and piece. Columns are
    /// `y`, then `z0`, then the half-space multipliers of each piece.
    pub fn dual_program(&self) -> Result<LinearProgram> {
        let k = self.multipliers.len();
        let n = self.dimension;
        let mut lp = LinearProgram::new(Direction::Minimize);
        // rows first, collecting entries per column
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k + 1];
        for r in &self.rows {
            let i = lp.add_row(r.label.clone(), RowSense::Ge, r.rhs);
            for (c, v) in r.coefficients.iter().enumerate() {
                cols[c].push((i, *v));
            }
            cols[k].push((i, 1.0));
        }
        let mut lambda_cols = Vec::new();
        for p in &self.pieces {
            let first = lp.num_rows();
            for i in 0..n {
                lp.add_row(format!("{}:g{i}", p.label), RowSense::Eq, p.risk.gradient[i]);
                for (c, s) in p.slopes.iter().enumerate() {
                    cols[c].push((first + i, s[i]));
                }
            }
            let ineq = lp.add_row(format!("{}:e", p.label), RowSense::Ge, p.risk.constant);
            for (c, v) in p.constants.iter().enumerate() {
                cols[c].push((ineq, *v));
            }
            cols[k].push((ineq, 1.0));
            for (j, h) in p.halfspaces.iter().enumerate() {
                let mut e: Vec<(usize, f64)> = (0..n).map(|i| (first + i, -h.normal[i])).collect();
                e.push((ineq, h.bound));
                lambda_cols.push((format!("{}:l{j}", p.label), e));
            }
        }
        for (c, entries) in cols.into_iter().enumerate() {
            if c < k {
                let m = &self.multipliers[c];
                lp.add_column(m.name.clone(), m.rhs, m.bound, entries)?;
            } else {
                lp.add_column("z0", 1.0, VarBound::Free, entries)?;
            }
        }
        for (name, e) in lambda_cols {
            lp.add_column(name, 0.0, VarBound::NonNegative, e)?;
        }
        Ok(lp)
    }

    /// The LP dual of [`DualLp::dual_program`], in maximization form.
    pub fn transpose(&self) -> Result<LinearProgram> {
        let mut lp = master_rows(&self.multipliers);
        let k = self.multipliers.len();
        for r in &self.rows {
            lp.add_column(r.label.clone(), r.rhs, VarBound::NonNegative, row_column(&r.coefficients, k))?;
        }
        for p in &self.pieces {
            add_piece_columns(&mut lp, p, k)?;
        }
        Ok(lp)
    }
}

/// Rows of the transposed program: one per multiplier, then the mass row.
fn master_rows(multipliers: &[Multiplier]) -> LinearProgram {
    let mut lp = LinearProgram::new(Direction::Maximize);
    for m in multipliers {
        let sense = match m.bound {
            VarBound::NonNegative => RowSense::Le,
            VarBound::Free => RowSense::Eq,
        };
        lp.add_row(m.name.clone(), sense, m.rhs);
    }
    lp.add_row("mass", RowSense::Eq, 1.0);
    lp
}

fn row_column(coefficients: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut e: Vec<(usize, f64)> = coefficients.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
    e.push((k, 1.0));
    e
}

/// Mass column `p` and free moment columns `u` of one Farkas piece, with one
/// new row `<f_j, u> - l_j p >= 0` per half-space.
fn add_piece_columns(lp: &mut LinearProgram, p: &FarkasPiece, k: usize) -> Result<()> {
    let n = p.risk.gradient.len();
    let first = lp.num_rows();
    for j in 0..p.halfspaces.len() {
        lp.add_row(format!("{}:h{j}", p.label), RowSense::Le, 0.0);
    }
    let mut mass = row_column(&p.constants, k);
    for (j, h) in p.halfspaces.iter().enumerate() {
        mass.push((first + j, h.bound));
    }
    lp.add_column(format!("{}:p", p.label), p.risk.constant, VarBound::NonNegative, mass)?;
    for i in 0..n {
        let mut e: Vec<(usize, f64)> = p.slopes.iter().enumerate().map(|(c, s)| (c, s[i])).collect();
        for (j, h) in p.halfspaces.iter().enumerate() {
            e.push((first + j, -h.normal[i]));
        }
        lp.add_column(format!("{}:u{i}", p.label), p.risk.gradient[i], VarBound::Free, e)?;
    }
    Ok(())
}

/// A column offered during pricing: cell plus row index within the cell's
/// block (vertex number, or 0 for an eliminated cell).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub key: CellKey,
    pub index: usize,
    pub reduced_cost: f64,
}

/// Constant contribution of a multiplier to the cells of a range of slabs.
#[derive(Debug, Clone, Copy)]
struct SlabTerm {
    multiplier: usize,
    first: usize,
    end: usize,
    value: f64,
}

/// Position of breakpoint `v` in `bp`, or `usize::MAX` when absent.
fn slab_index(bp: &[f64], v: f64) -> usize {
    if v.is_infinite() {
        return bp.iter().position(|b| *b == v).unwrap_or(usize::MAX);
    }
    bp.iter()
        .enumerate()
        .filter(|(_, b)| b.is_finite())
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(usize::MAX)
}

/// Prices cells of the partition against master duals without materializing
/// them. Cells whose tests are constant are priced from per-slab aggregates,
/// vertex rows are built on first use, and Farkas cells are expected in the
/// seed program (see [`CellColumnGenerator::seed`]).
pub struct CellColumnGenerator<'m> {
    model: &'m Model,
    mode: ReductionMode,
    opts: SimplexOptions,
    k: usize,
    axis_terms: Vec<Vec<SlabTerm>>,
    global_terms: Vec<(usize, f64)>,
    sloped_axis: Vec<Vec<bool>>,
    sloped_global: bool,
    touching: Option<CellKey>,
    memo: DashMap<CellKey, f64>,
    vertex_rows: HashMap<CellKey, Vec<DualRow>>,
    offered: HashSet<(CellKey, usize)>,
    batch: usize,
    scan_limit: usize,
    history: Vec<(CellKey, GeneratedColumn)>,
}

impl<'m> CellColumnGenerator<'m> {
    pub fn new(model: &'m Model, mode: ReductionMode, opts: SimplexOptions, batch: usize) -> Result<Self> {
        let p = model.partition();
        let n = p.dimension();
        let mut axis_terms = vec![Vec::new(); n];
        let mut global_terms = Vec::new();
        let mut sloped_axis: Vec<Vec<bool>> = (0..n).map(|a| vec![false; p.slabs_on_axis(a)]).collect();
        let mut sloped_global = false;
        for (k, m) in model.multipliers().iter().enumerate() {
            let t = &model.tests()[m.test];
            let value = match &t.kind {
                TestFunctionKind::SlabIndicator => 1.0,
                TestFunctionKind::SlabAffine { offset, .. } => *offset,
            } * m.sign;
            let constant = t.is_piecewise_constant();
            match &t.slab {
                None => {
                    if constant {
                        global_terms.push((k, value));
                    } else {
                        sloped_global = true;
                    }
                }
                Some(s) => {
                    let bp = &p.breakpoints()[s.axis];
                    let (first, end) = (slab_index(bp, s.lower), slab_index(bp, s.upper));
                    if first == usize::MAX || end == usize::MAX || first >= end {
                        return Err(Error::input(format!("test function `{}`: slab does not match the grid", t.id)));
                    }
                    if constant {
                        axis_terms[s.axis].push(SlabTerm {
                            multiplier: k,
                            first,
                            end,
                            value,
                        });
                    } else {
                        sloped_axis[s.axis][first..end].iter_mut().for_each(|b| *b = true);
                    }
                }
            }
        }
        let top: Vec<usize> = (0..n).map(|a| p.slabs_on_axis(a) - 1).collect();
        let top_key = CellKey {
            grid: p.grid_index(&top),
            slice: Slice::Whole,
        };
        let touching = match p.cell(top_key) {
            Ok(c) if c.touches_tau() => Some(top_key),
            _ => None,
        };
        Ok(CellColumnGenerator {
            model,
            mode,
            opts,
            k: model.multipliers().len(),
            axis_terms,
            global_terms,
            sloped_axis,
            sloped_global,
            touching,
            memo: DashMap::new(),
            vertex_rows: HashMap::new(),
            offered: HashSet::new(),
            batch: batch.max(1),
            scan_limit: 8 * batch.max(1),
            history: Vec::new(),
        })
    }

    fn box_is_bounded(&self, multi: &[usize]) -> bool {
        let bp = self.model.partition().breakpoints();
        multi
            .iter()
            .enumerate()
            .all(|(a, j)| bp[a][*j].is_finite() && bp[a][*j + 1].is_finite())
    }

    fn box_is_constant(&self, multi: &[usize]) -> bool {
        !self.sloped_global && multi.iter().enumerate().all(|(a, j)| !self.sloped_axis[a][*j])
    }

    fn kind(&self, multi: &[usize]) -> BlockKind {
        let constant = self.box_is_constant(multi);
        let bounded = self.box_is_bounded(multi);
        match self.mode {
            ReductionMode::Explicit => BlockKind::Farkas,
            ReductionMode::LambdaEliminated if constant => BlockKind::Eliminated,
            ReductionMode::LambdaEliminated => BlockKind::Farkas,
            ReductionMode::Vertex if bounded => BlockKind::Vertex,
            ReductionMode::Vertex => BlockKind::Farkas,
            ReductionMode::Auto if constant => BlockKind::Eliminated,
            ReductionMode::Auto if bounded => BlockKind::Vertex,
            ReductionMode::Auto => BlockKind::Farkas,
        }
    }

    /// Master program holding the Farkas blocks of every cell that needs
    /// one; all other cells are left to pricing.
    pub fn seed(&self) -> Result<LinearProgram> {
        let p = self.model.partition();
        let mut lp = master_rows(self.model.multipliers());
        for key in p.keys() {
            let multi = p.multi_index(key.grid);
            if self.kind(&multi) == BlockKind::Farkas {
                let cell = p.cell(key)?;
                for piece in farkas_constraints_linear(self.model, &cell)? {
                    add_piece_columns(&mut lp, &piece, self.k)?;
                }
            }
        }
        Ok(lp)
    }

    /// Objective of the eliminated column of a cell: the maximum of the risk
    /// over the cell.
    fn eliminated_rhs(&self, key: CellKey, side: TauSide) -> Result<f64> {
        let risk = self.model.risk();
        match (risk.kind, side) {
            (RiskKind::VarIndicator, TauSide::Above) => Ok(1.0),
            (RiskKind::VarIndicator, _) => Ok(if self.touching == Some(key) { 1.0 } else { 0.0 }),
            (RiskKind::CvarHinge, TauSide::Above) => {
                if let Some(v) = self.memo.get(&key) {
                    return Ok(*v);
                }
                let cell = self.model.partition().cell(key)?;
                let g = vec![1.0; cell.dimension()];
                let cert = precompute_cell_lambda(cell.halfspaces(), &g, &self.opts)
                    .map_err(|e| with_cell(e, key))?
                    .ok_or_else(|| Error::InfeasibleOnCell { cell: key.to_string() })?;
                let v = -risk.tau - cert.c;
                self.memo.insert(key, v);
                Ok(v)
            }
            (RiskKind::CvarHinge, _) => Ok(0.0),
        }
    }

    fn vertex_rows(&mut self, key: CellKey) -> Result<&[DualRow]> {
        if !self.vertex_rows.contains_key(&key) {
            let cell = self.model.partition().cell(key)?;
            let rows = concave_vertex_constraints(self.model, &cell)?;
            self.vertex_rows.insert(key, rows);
        }
        Ok(&self.vertex_rows[&key])
    }

    /// Scans cells in pricing order and returns the negative-reduced-cost
    /// columns found, most negative first. Stops early once `limit`
    /// candidates are collected; a `limit` of `usize::MAX` scans every cell.
    pub fn pricing_scan(&mut self, shadow: &[f64], scale: f64, tol: f64, limit: usize) -> Result<Vec<Candidate>> {
        let p = self.model.partition();
        let n = p.dimension();
        let bp = p.breakpoints();
        let mass = shadow[self.k];
        let weights: Vec<Vec<f64>> = (0..n)
            .map(|a| {
                let mut w = vec![0.0; p.slabs_on_axis(a)];
                for t in &self.axis_terms[a] {
                    let v = shadow[t.multiplier] * t.value;
                    w[t.first..t.end].iter_mut().for_each(|x| *x += v);
                }
                w
            })
            .collect();
        let base: f64 = mass + self.global_terms.iter().map(|(k, v)| shadow[*k] * v).sum::<f64>();
        let mut found = Vec::new();
        let mut multi = vec![0usize; n];
        'passes: for want in [TauSide::Above, TauSide::Below] {
            multi.iter_mut().for_each(|j| *j = 0);
            for grid in 0..p.grid_len() {
                if grid > 0 {
                    let mut a = n;
                    loop {
                        a -= 1;
                        multi[a] += 1;
                        if multi[a] < p.slabs_on_axis(a) {
                            break;
                        }
                        multi[a] = 0;
                    }
                }
                let lo: f64 = (0..n).map(|a| bp[a][multi[a]]).sum();
                let hi: f64 = (0..n).map(|a| bp[a][multi[a] + 1]).sum();
                let class = p.classify(lo, hi);
                let key = match (class, want) {
                    (crate::geometry::BoxClass::Split, TauSide::Above) => CellKey { grid, slice: Slice::Above },
                    (crate::geometry::BoxClass::Split, _) => CellKey { grid, slice: Slice::Below },
                    (crate::geometry::BoxClass::Above, TauSide::Above) => CellKey { grid, slice: Slice::Whole },
                    (crate::geometry::BoxClass::Below, TauSide::Below) => CellKey { grid, slice: Slice::Whole },
                    _ => continue,
                };
                match self.kind(&multi) {
                    BlockKind::Farkas => {}
                    BlockKind::Eliminated => {
                        if self.offered.contains(&(key, 0)) {
                            continue;
                        }
                        let lhs = base + (0..n).map(|a| weights[a][multi[a]]).sum::<f64>();
                        let rc = lhs - scale * self.eliminated_rhs(key, want)?;
                        if rc < -tol {
                            found.push(Candidate {
                                key,
                                index: 0,
                                reduced_cost: rc,
                            });
                        }
                    }
                    BlockKind::Vertex => {
                        let k = self.k;
                        let mut local = Vec::new();
                        for (i, row) in self.vertex_rows(key)?.iter().enumerate() {
                            let lhs: f64 = shadow[k] + row.coefficients.iter().zip(shadow).map(|(c, s)| c * s).sum::<f64>();
                            let rc = lhs - scale * row.rhs;
                            if rc < -tol {
                                local.push(Candidate {
                                    key,
                                    index: i,
                                    reduced_cost: rc,
                                });
                            }
                        }
                        found.extend(local.into_iter().filter(|c| !self.offered.contains(&(c.key, c.index))));
                    }
                }
                if found.len() >= limit {
                    break 'passes;
                }
            }
        }
        found.sort_by(|a, b| a.reduced_cost.total_cmp(&b.reduced_cost));
        Ok(found)
    }

    fn column_for(&mut self, c: &Candidate) -> Result<GeneratedColumn> {
        let p = self.model.partition();
        let multi = p.multi_index(c.key.grid);
        match self.kind(&multi) {
            BlockKind::Eliminated => {
                let mut entries: Vec<(usize, f64)> = self.global_terms.clone();
                for (a, terms) in self.axis_terms.iter().enumerate() {
                    for t in terms {
                        if t.first <= multi[a] && multi[a] < t.end {
                            entries.push((t.multiplier, t.value));
                        }
                    }
                }
                entries.push((self.k, 1.0));
                let side = p.key_side(c.key);
                Ok(GeneratedColumn {
                    name: format!("cell{}", c.key),
                    objective: self.eliminated_rhs(c.key, side)?,
                    entries,
                })
            }
            BlockKind::Vertex => {
                let k = self.k;
                let row = &self.vertex_rows(c.key)?[c.index];
                Ok(GeneratedColumn {
                    name: row.label.clone(),
                    objective: row.rhs,
                    entries: row_column(&row.coefficients, k),
                })
            }
            BlockKind::Farkas => unreachable!("Farkas cells are never priced"),
        }
    }

    /// Generated columns so far, in the order the master received them.
    pub fn history(&self) -> &[(CellKey, GeneratedColumn)] {
        &self.history
    }
}

impl ColumnGenerator for CellColumnGenerator<'_> {
    fn price(&mut self, shadow: &[f64], objective_scale: f64, tol: f64) -> Result<Vec<GeneratedColumn>> {
        let found = self.pricing_scan(shadow, objective_scale, tol, self.scan_limit)?;
        let mut out = Vec::new();
        for c in found.iter().take(self.batch) {
            self.offered.insert((c.key, c.index));
            let col = self.column_for(c)?;
            self.history.push((c.key, col.clone()));
            out.push(col);
        }
        log::debug!(
            "pricing: {} candidates, {} columns added, {} generated in total",
            found.len(),
            out.len(),
            self.history.len()
        );
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Revised simplex on the transposed dual with cells priced in lazily.
    #[default]
    Dcg,
    /// Dense tableau simplex on the fully materialized transposed dual.
    Dense,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverOptions {
    pub mode: ReductionMode,
    pub method: SolveMethod,
    pub simplex: SimplexOptions,
    pub cell_budget: usize,
    /// Columns added to the master per pricing round.
    pub pricing_batch: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mode: ReductionMode::Auto,
            method: SolveMethod::Dcg,
            simplex: SimplexOptions::default(),
            cell_budget: crate::geometry::DEFAULT_CELL_BUDGET,
            pricing_batch: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundStatus {
    Optimal,
    /// No measure satisfies the constraints.
    Infeasible,
    /// The worst case is `+inf`.
    Unbounded,
    IterationLimit,
}

impl BoundStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            BoundStatus::Optimal => 0,
            BoundStatus::Infeasible => 2,
            BoundStatus::Unbounded => 3,
            BoundStatus::IterationLimit => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstraintReport {
    pub name: String,
    /// Dual multiplier: change in the bound per unit change of the constraint
    /// level.
    pub dual: f64,
    /// Integral of the test function under the worst-case measure.
    pub integral: f64,
    pub level: f64,
    pub binding: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellMass {
    pub cell: String,
    pub mass: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundResult {
    pub status: BoundStatus,
    #[serde(serialize_with = "crate::report::extended_f64")]
    pub bound: f64,
    /// Multiplier of the total-mass constraint.
    #[serde(serialize_with = "crate::report::extended_f64")]
    pub mass_dual: f64,
    pub constraints: Vec<ConstraintReport>,
    /// Cells carrying mass in the worst-case measure, by cell key.
    pub support: Vec<CellMass>,
    pub iterations: usize,
    pub columns_generated: usize,
    /// Columns in the final master program, seeded plus generated.
    pub master_columns: usize,
    /// Cell whose risk grows without bound, when the bound is infinite for
    /// that reason.
    pub unbounded_cell: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl BoundResult {
    /// Multiplier values in the order of [`Model::multipliers`].
    pub fn multiplier_values(&self) -> Vec<f64> {
        self.constraints.iter().map(|c| c.dual).collect()
    }
}

/// Worst-case expectation of the risk functional over all measures meeting
/// the model's constraints.
pub fn solve_bound(model: &Model, opts: &SolverOptions) -> Result<BoundResult> {
    let start = Instant::now();
    match solve_inner(model, opts) {
        Ok(mut r) => {
            r.wall_time = start.elapsed();
            Ok(r)
        }
        Err(Error::InfeasibleOnCell { cell }) => Ok(BoundResult {
            status: BoundStatus::Unbounded,
            bound: f64::INFINITY,
            mass_dual: f64::NAN,
            constraints: Vec::new(),
            support: Vec::new(),
            iterations: 0,
            columns_generated: 0,
            master_columns: 0,
            unbounded_cell: Some(cell),
            wall_time: start.elapsed(),
        }),
        Err(e) => Err(e),
    }
}

fn solve_inner(model: &Model, opts: &SolverOptions) -> Result<BoundResult> {
    let (lp, sol, extra) = match opts.method {
        SolveMethod::Dense => {
            // every cell contributes at least one column; refuse before
            // materializing anything
            let cells = model.partition().grid_len();
            if cells > opts.simplex.dense_max_dim {
                return Err(Error::Capacity {
                    what: "dense simplex columns",
                    requested: cells,
                    budget: opts.simplex.dense_max_dim,
                });
            }
            let dual = assemble_dual_lp(model, opts.mode, opts.cell_budget, &opts.simplex)?;
            let lp = dual.transpose()?;
            let sol = solve_dense_simplex(&lp, &opts.simplex)?;
            (lp, sol, Vec::new())
        }
        SolveMethod::Dcg => {
            if model.partition().grid_len() > opts.cell_budget {
                return Err(Error::Capacity {
                    what: "grid cells",
                    requested: model.partition().grid_len(),
                    budget: opts.cell_budget,
                });
            }
            let mut gen = CellColumnGenerator::new(model, opts.mode, opts.simplex.clone(), opts.pricing_batch)?;
            let seed = gen.seed()?;
            let sol = solve_dcg(&seed, &mut gen, &opts.simplex)?;
            let extra = gen.history().to_vec();
            (seed, sol, extra)
        }
    };
    Ok(summarize(model, &lp, &sol, &extra))
}

/// Cell key of a column that carries mass (everything except Farkas moment
/// columns, whose names end in `:u<i>`).
fn cell_of_column(name: &str) -> Option<&str> {
    let rest = name.strip_prefix("cell")?;
    let mut parts = rest.split(':');
    let key = parts.next()?;
    match parts.next_back() {
        Some(last) if last.starts_with('u') => None,
        _ => Some(key),
    }
}

fn summarize(model: &Model, lp: &LinearProgram, sol: &LpSolution, extra: &[(CellKey, GeneratedColumn)]) -> BoundResult {
    let k = model.multipliers().len();
    let status = match sol.status {
        Status::Optimal => BoundStatus::Optimal,
        Status::Infeasible => BoundStatus::Infeasible,
        Status::Unbounded => BoundStatus::Unbounded,
        Status::IterationLimit => BoundStatus::IterationLimit,
    };
    let mut activity = vec![0.0; k];
    let mut masses: std::collections::BTreeMap<String, f64> = Default::default();
    let columns = lp
        .columns
        .iter()
        .map(|c| (c.name.as_str(), &c.entries))
        .chain(extra.iter().map(|(_, g)| (g.name.as_str(), &g.entries)));
    for ((name, entries), x) in columns.zip(&sol.primal) {
        if *x == 0.0 {
            continue;
        }
        for (r, v) in entries.iter() {
            if *r < k {
                activity[*r] += v * x;
            }
        }
        if let Some(key) = cell_of_column(name) {
            *masses.entry(key.to_string()).or_insert(0.0) += x;
        }
    }
    let optimal = status == BoundStatus::Optimal;
    let constraints = model
        .multipliers()
        .iter()
        .enumerate()
        .map(|(i, m)| ConstraintReport {
            name: m.name.clone(),
            // `+ 0.0` turns -0 into 0
            dual: if optimal { sol.duals[i] + 0.0 } else { f64::NAN },
            integral: m.sign * activity[i],
            level: m.sign * m.rhs,
            binding: optimal && (activity[i] - m.rhs).abs() <= 1e-7 * (1.0 + m.rhs.abs()),
        })
        .collect();
    let support = if optimal {
        masses
            .into_iter()
            .filter(|(_, m)| *m > 1e-12)
            .map(|(cell, mass)| CellMass { cell, mass })
            .collect()
    } else {
        Vec::new()
    };
    let bound = match status {
        BoundStatus::Optimal | BoundStatus::IterationLimit => sol.objective,
        BoundStatus::Unbounded => f64::INFINITY,
        BoundStatus::Infeasible => f64::NEG_INFINITY,
    };
    BoundResult {
        status,
        bound,
        mass_dual: if optimal { sol.duals[k] + 0.0 } else { f64::NAN },
        constraints,
        support,
        iterations: sol.iterations,
        columns_generated: sol.columns_generated,
        master_columns: lp.num_cols() + extra.len(),
        unbounded_cell: None,
        wall_time: sol.wall_time,
    }
}

/// `sup_x h(x) - sum_k y_k f_k(x) - z0` over every cell, with the cell where
/// it is attained. A value `<= 0` certifies that `(y, z0)` is dual feasible,
/// i.e. that no column of the transposed program has negative reduced cost.
pub fn max_dual_violation(
    model: &Model,
    y: &[f64],
    z0: f64,
    cell_budget: usize,
    opts: &SimplexOptions,
) -> Result<(f64, Option<CellKey>)> {
    let p = model.partition();
    if p.grid_len() > cell_budget {
        return Err(Error::Capacity {
            what: "grid cells",
            requested: p.grid_len(),
            budget: cell_budget,
        });
    }
    if y.len() != model.multipliers().len() {
        return Err(Error::input("multiplier vector has the wrong length"));
    }
    let keys: Vec<CellKey> = p.keys().collect();
    let per_cell = keys
        .par_iter()
        .map(|key| {
            let cell = p.cell(*key)?;
            let data = cell_data(model, &cell)?;
            let mut worst = f64::NEG_INFINITY;
            for (_, hs, risk) in risk_pieces(model, &cell, &data.risk)? {
                let mut g = risk.gradient.clone();
                let mut e = risk.constant - z0;
                for (a, yk) in data.tests.iter().zip(y) {
                    for (gi, vi) in g.iter_mut().zip(&a.gradient) {
                        *gi -= yk * vi;
                    }
                    e -= yk * a.constant;
                }
                let v = match precompute_cell_lambda(&hs, &g, opts).map_err(|err| with_cell(err, *key))? {
                    Some(cert) => e - cert.c,
                    None => f64::INFINITY,
                };
                worst = worst.max(v);
            }
            Ok((worst, *key))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_cell
        .into_iter()
        .fold((f64::NEG_INFINITY, None), |acc, (v, key)| if v > acc.0 { (v, Some(key)) } else { acc }))
}
