//! Polyhedral cells and the grid partition induced by per-axis breakpoints.
//!
//! Cells are never stored in bulk: a [`Partition`] only keeps the breakpoints
//! and the risk threshold, and a [`Cell`] is rebuilt from its [`CellKey`] on
//! demand. Pricing over exponentially many cells therefore costs memory only
//! for the cells that are actually touched.

use std::collections::HashSet;
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default limit on the number of grid boxes a partition may describe.
pub const DEFAULT_CELL_BUDGET: usize = 1 << 26;

/// Membership tolerance for `cell_contains`.
pub const CONTAINS_TOL: f64 = 1e-12;

/// Tolerance used when checking vertices against halfspaces.
pub const VERTEX_TOL: f64 = 1e-9;

/// Absolute slack used when comparing coordinate sums against `tau`.
pub(crate) fn tau_tolerance(tau: f64) -> f64 {
    1e-12 * (1.0 + tau.abs())
}

/// `<normal, x> >= bound`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Halfspace {
    pub normal: Vec<f64>,
    pub bound: f64,
}

impl Halfspace {
    pub fn new(normal: Vec<f64>, bound: f64) -> Result<Self> {
        if normal.iter().all(|v| *v == 0.0) {
            return Err(Error::input("halfspace normal must not be the zero vector"));
        }
        Ok(Halfspace { normal, bound })
    }

    fn axis(dim: usize, axis: usize, sign: f64, bound: f64) -> Self {
        let mut normal = vec![0.0; dim];
        normal[axis] = sign;
        Halfspace { normal, bound }
    }

    fn sum(dim: usize, sign: f64, bound: f64) -> Self {
        Halfspace {
            normal: vec![sign; dim],
            bound,
        }
    }

    /// `<normal, x> - bound`; nonnegative inside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.normal, x) - self.bound
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

/// Which piece of a grid box a cell is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slice {
    /// The box was not cut by the hyperplane.
    Whole,
    /// The part of a cut box with `sum(x) <= tau`.
    Below,
    /// The part of a cut box with `sum(x) >= tau`.
    Above,
}

/// Position of a cell relative to the risk hyperplane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauSide {
    Below,
    Above,
    /// The partition carries no threshold.
    Unsliced,
}

/// Identifies a cell: the lexicographic grid index of its box plus the slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub grid: usize,
    pub slice: Slice,
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.slice {
            Slice::Whole => write!(f, "#{}", self.grid),
            Slice::Below => write!(f, "#{}-", self.grid),
            Slice::Above => write!(f, "#{}+", self.grid),
        }
    }
}

/// One polyhedral piece of the partition in inequality form.
#[derive(Debug)]
pub struct Cell {
    key: CellKey,
    multi_index: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    tau: Option<f64>,
    side: TauSide,
    touches_tau: bool,
    halfspaces: Vec<Halfspace>,
    vertices: OnceLock<Vec<Vec<f64>>>,
}

impl Clone for Cell {
    fn clone(&self) -> Self {
        let vertices = OnceLock::new();
        if let Some(v) = self.vertices.get() {
            let _ = vertices.set(v.clone());
        }
        Cell {
            key: self.key,
            multi_index: self.multi_index.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            tau: self.tau,
            side: self.side,
            touches_tau: self.touches_tau,
            halfspaces: self.halfspaces.clone(),
            vertices,
        }
    }
}

impl Cell {
    pub fn key(&self) -> CellKey {
        self.key
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    /// Per-axis slab index of the underlying grid box.
    pub fn multi_index(&self) -> &[usize] {
        &self.multi_index
    }

    /// Lower corner of the underlying box (entries may be `-inf`).
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Upper corner of the underlying box (entries may be `+inf`).
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn halfspaces(&self) -> &[Halfspace] {
        &self.halfspaces
    }

    pub fn side(&self) -> TauSide {
        self.side
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// True for the single whole cell below `tau` whose top corner is the top
    /// corner of the whole support and lies on the hyperplane. This is the only
    /// place where `{sum(x) >= tau}` meets the support without an adjacent
    /// cell above the hyperplane.
    pub fn touches_tau(&self) -> bool {
        self.touches_tau
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// `(min, max)` of `sum(x)` over the cell.
    pub fn sum_range(&self) -> (f64, f64) {
        let lo: f64 = self.lower.iter().sum();
        let hi: f64 = self.upper.iter().sum();
        match (self.key.slice, self.tau) {
            (Slice::Below, Some(t)) => (lo, t),
            (Slice::Above, Some(t)) => (t, hi),
            _ => (lo, hi),
        }
    }

    /// `true` iff `<f_j, x> >= l_j - 1e-12` for every halfspace.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_with_tol(x, CONTAINS_TOL)
    }

    pub fn contains_with_tol(&self, x: &[f64], tol: f64) -> bool {
        debug_assert_eq!(x.len(), self.dimension());
        self.halfspaces.iter().all(|h| h.slack(x) >= -tol)
    }

    /// Extreme points of a bounded cell, computed once and cached.
    pub fn vertices(&self) -> Result<&[Vec<f64>]> {
        if !self.is_bounded() {
            return Err(Error::Unsupported(format!(
                "vertex form requested for unbounded cell {}",
                self.key
            )));
        }
        Ok(self.vertices.get_or_init(|| self.enumerate_vertices()))
    }

    fn enumerate_vertices(&self) -> Vec<Vec<f64>> {
        box_slice_vertices(&self.lower, &self.upper, self.key.slice, self.tau)
    }

    /// Vertices of the cell intersected with `[-radius, radius]` on every
    /// unbounded side. Empty if the clipped cell is empty.
    pub fn clipped_vertices(&self, radius: f64) -> Vec<Vec<f64>> {
        let lower: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| if l.is_finite() { *l } else { (-radius).min(u - 1.0) })
            .collect();
        let upper: Vec<f64> = self
            .upper
            .iter()
            .zip(&lower)
            .map(|(u, l)| if u.is_finite() { *u } else { radius.max(l + 1.0) })
            .collect();
        box_slice_vertices(&lower, &upper, self.key.slice, self.tau)
    }
}

/// Vertices of the box `[lower, upper]`, cut to one side of `sum(x) = tau`
/// for sliced cells.
fn box_slice_vertices(lower: &[f64], upper: &[f64], slice: Slice, tau: Option<f64>) -> Vec<Vec<f64>> {
    let n = lower.len();
    let corners: Vec<Vec<f64>> = (0..1usize << n)
        .map(|mask| {
            (0..n)
                .map(|a| if mask >> a & 1 == 1 { upper[a] } else { lower[a] })
                .collect()
        })
        .collect();
    let (tau, keep_below) = match (slice, tau) {
        (Slice::Below, Some(t)) => (t, true),
        (Slice::Above, Some(t)) => (t, false),
        _ => return corners,
    };
    let tol = tau_tolerance(tau);
    let sums: Vec<f64> = corners.iter().map(|c| c.iter().sum()).collect();
    let mut out: Vec<Vec<f64>> = corners
        .iter()
        .zip(&sums)
        .filter(|(_, s)| if keep_below { **s <= tau + tol } else { **s >= tau - tol })
        .map(|(c, _)| c.clone())
        .collect();
    // Edges of the box crossing the hyperplane strictly.
    for mask in 0..1usize << n {
        for a in 0..n {
            if mask >> a & 1 == 1 {
                continue;
            }
            let other = mask | 1 << a;
            let (s0, s1) = (sums[mask], sums[other]);
            if (s0 < tau - tol && s1 > tau + tol) || (s1 < tau - tol && s0 > tau + tol) {
                let mut p = corners[mask].clone();
                let rest: f64 = p.iter().enumerate().filter(|(i, _)| *i != a).map(|(_, v)| v).sum();
                p[a] = tau - rest;
                out.push(p);
            }
        }
    }
    dedup_points(out, VERTEX_TOL)
}

/// Removes points within `tol` (max-norm) of an earlier point.
pub(crate) fn dedup_points(points: Vec<Vec<f64>>, tol: f64) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(points.len());
    for p in points {
        let dup = out
            .iter()
            .any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() <= tol));
        if !dup {
            out.push(p);
        }
    }
    out
}

/// Enumerates vertices of a cell. Fails for unbounded cells.
pub fn cell_vertices(cell: &Cell) -> Result<Vec<Vec<f64>>> {
    cell.vertices().map(|v| v.to_vec())
}

/// `true` iff every halfspace of `cell` holds at `x` up to 1e-12.
pub fn cell_contains(cell: &Cell, x: &[f64]) -> bool {
    cell.contains(x)
}

/// Grid partition of the breakpoint box, optionally sliced by `sum(x) = tau`.
#[derive(Debug, Clone)]
pub struct Partition {
    breakpoints: Vec<Vec<f64>>,
    tau: Option<f64>,
    strides: Vec<usize>,
    grid_len: usize,
}

/// Builds the grid partition with the default cell budget.
pub fn build_box_partition(breakpoints: Vec<Vec<f64>>, tau: Option<f64>) -> Result<Partition> {
    Partition::with_budget(breakpoints, tau, DEFAULT_CELL_BUDGET)
}

impl Partition {
    pub fn with_budget(breakpoints: Vec<Vec<f64>>, tau: Option<f64>, budget: usize) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::input("partition needs at least one axis"));
        }
        for (axis, bp) in breakpoints.iter().enumerate() {
            if bp.len() < 2 {
                return Err(Error::input(format!("axis {axis}: need at least 2 breakpoints")));
            }
            if bp.iter().any(|v| v.is_nan()) {
                return Err(Error::input(format!("axis {axis}: NaN breakpoint")));
            }
            if bp.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::input(format!("axis {axis}: breakpoints must be strictly increasing")));
            }
            let last = bp.len() - 1;
            if bp[1..].contains(&f64::NEG_INFINITY)
                || bp[..last].contains(&f64::INFINITY)
            {
                return Err(Error::input(format!(
                    "axis {axis}: infinite breakpoints only allowed at the ends"
                )));
            }
        }
        if let Some(t) = tau {
            if !t.is_finite() {
                return Err(Error::input("tau must be finite"));
            }
        }
        let n = breakpoints.len();
        let mut strides = vec![1usize; n];
        let mut grid_len = 1usize;
        for axis in (0..n).rev() {
            strides[axis] = grid_len;
            grid_len = grid_len
                .checked_mul(breakpoints[axis].len() - 1)
                .ok_or(Error::Capacity {
                    what: "grid cells",
                    requested: usize::MAX,
                    budget,
                })?;
        }
        if grid_len > budget {
            return Err(Error::Capacity {
                what: "grid cells",
                requested: grid_len,
                budget,
            });
        }
        Ok(Partition {
            breakpoints,
            tau,
            strides,
            grid_len,
        })
    }

    pub fn dimension(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn breakpoints(&self) -> &[Vec<f64>] {
        &self.breakpoints
    }

    pub fn tau(&self) -> Option<f64> {
        self.tau
    }

    /// Number of grid boxes (before slicing).
    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn slabs_on_axis(&self, axis: usize) -> usize {
        self.breakpoints[axis].len() - 1
    }

    pub fn is_bounded(&self) -> bool {
        self.breakpoints
            .iter()
            .all(|bp| bp[0].is_finite() && bp[bp.len() - 1].is_finite())
    }

    pub fn multi_index(&self, grid: usize) -> Vec<usize> {
        let mut rest = grid;
        self.strides
            .iter()
            .map(|s| {
                let j = rest / s;
                rest %= s;
                j
            })
            .collect()
    }

    pub fn grid_index(&self, multi: &[usize]) -> usize {
        multi.iter().zip(&self.strides).map(|(j, s)| j * s).sum()
    }

    /// Sum of the upper breakpoints: the maximum of `sum(x)` over the support.
    pub fn max_sum(&self) -> f64 {
        self.breakpoints.iter().map(|bp| bp[bp.len() - 1]).sum()
    }

    /// Which slices a box with the given coordinate-sum range splits into.
    pub(crate) fn classify(&self, lo_sum: f64, hi_sum: f64) -> BoxClass {
        match self.tau {
            None => BoxClass::Unsliced,
            Some(t) => {
                let tol = tau_tolerance(t);
                if lo_sum < t - tol && hi_sum > t + tol {
                    BoxClass::Split
                } else if lo_sum >= t - tol {
                    BoxClass::Above
                } else {
                    BoxClass::Below
                }
            }
        }
    }

    fn box_bounds(&self, multi: &[usize]) -> (Vec<f64>, Vec<f64>) {
        let lower = multi.iter().enumerate().map(|(a, j)| self.breakpoints[a][*j]).collect();
        let upper = multi.iter().enumerate().map(|(a, j)| self.breakpoints[a][*j + 1]).collect();
        (lower, upper)
    }

    /// Keys of the cells carved out of grid box `grid`.
    pub fn keys_at(&self, grid: usize) -> Vec<CellKey> {
        let (lower, upper) = self.box_bounds(&self.multi_index(grid));
        let class = self.classify(lower.iter().sum(), upper.iter().sum());
        class
            .slices()
            .iter()
            .map(|slice| CellKey { grid, slice: *slice })
            .collect()
    }

    /// Constructs the cell for `key`.
    pub fn cell(&self, key: CellKey) -> Result<Cell> {
        if key.grid >= self.grid_len {
            return Err(Error::input(format!("cell {key} out of range")));
        }
        let multi = self.multi_index(key.grid);
        let (lower, upper) = self.box_bounds(&multi);
        let class = self.classify(lower.iter().sum(), upper.iter().sum());
        if !class.slices().contains(&key.slice) {
            return Err(Error::input(format!("cell {key} does not exist in this partition")));
        }
        let n = self.dimension();
        let mut halfspaces = Vec::with_capacity(2 * n + 1);
        for a in 0..n {
            if lower[a].is_finite() {
                halfspaces.push(Halfspace::axis(n, a, 1.0, lower[a]));
            }
            if upper[a].is_finite() {
                halfspaces.push(Halfspace::axis(n, a, -1.0, -upper[a]));
            }
        }
        let side = match (class, key.slice) {
            (BoxClass::Unsliced, _) => TauSide::Unsliced,
            (BoxClass::Above, _) | (_, Slice::Above) => TauSide::Above,
            _ => TauSide::Below,
        };
        if let Some(t) = self.tau {
            match key.slice {
                Slice::Below => halfspaces.push(Halfspace::sum(n, -1.0, -t)),
                Slice::Above => halfspaces.push(Halfspace::sum(n, 1.0, t)),
                Slice::Whole => {}
            }
        }
        let touches_tau = match (self.tau, key.slice, side) {
            (Some(t), Slice::Whole, TauSide::Below) => {
                let top = multi
                    .iter()
                    .enumerate()
                    .all(|(a, j)| *j + 1 == self.slabs_on_axis(a));
                let hi: f64 = upper.iter().sum();
                top && hi.is_finite() && (hi - t).abs() <= tau_tolerance(t)
            }
            _ => false,
        };
        Ok(Cell {
            key,
            multi_index: multi,
            lower,
            upper,
            tau: self.tau,
            side,
            touches_tau,
            halfspaces,
            vertices: OnceLock::new(),
        })
    }

    /// All cell keys in lexicographic order of the grid multi-index.
    pub fn keys(&self) -> impl Iterator<Item = CellKey> + '_ {
        (0..self.grid_len).flat_map(move |g| self.keys_at(g))
    }

    /// Scan order for pricing: lexicographic, cells above `tau` first.
    pub fn pricing_order(&self) -> impl Iterator<Item = CellKey> + '_ {
        let above = self
            .keys()
            .filter(move |k| self.key_side(*k) == TauSide::Above);
        let rest = self
            .keys()
            .filter(move |k| self.key_side(*k) != TauSide::Above);
        above.chain(rest)
    }

    pub(crate) fn key_side(&self, key: CellKey) -> TauSide {
        match key.slice {
            Slice::Above => TauSide::Above,
            Slice::Below => TauSide::Below,
            Slice::Whole => {
                let (lower, upper) = self.box_bounds(&self.multi_index(key.grid));
                match self.classify(lower.iter().sum(), upper.iter().sum()) {
                    BoxClass::Above => TauSide::Above,
                    BoxClass::Unsliced => TauSide::Unsliced,
                    _ => TauSide::Below,
                }
            }
        }
    }

    /// Total number of cells after slicing. Walks the whole grid.
    pub fn cell_count(&self) -> usize {
        (0..self.grid_len).map(|g| self.keys_at(g).len()).sum()
    }

    /// Materializes every cell, failing if there are more than `budget`.
    pub fn cells(&self, budget: usize) -> Result<Vec<Cell>> {
        if self.grid_len > budget {
            return Err(Error::Capacity {
                what: "materialized cells",
                requested: self.grid_len,
                budget,
            });
        }
        self.keys().map(|k| self.cell(k)).collect()
    }

    /// Keys of all cells containing `x` (several when `x` is on a boundary).
    pub fn locate(&self, x: &[f64]) -> Vec<CellKey> {
        if x.len() != self.dimension() {
            return Vec::new();
        }
        let mut per_axis: Vec<Vec<usize>> = Vec::with_capacity(x.len());
        for (a, bp) in self.breakpoints.iter().enumerate() {
            let mut js = Vec::new();
            for j in 0..bp.len() - 1 {
                if x[a] >= bp[j] - CONTAINS_TOL && x[a] <= bp[j + 1] + CONTAINS_TOL {
                    js.push(j);
                }
            }
            if js.is_empty() {
                return Vec::new();
            }
            per_axis.push(js);
        }
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut counter = vec![0usize; per_axis.len()];
        loop {
            let multi: Vec<usize> = counter.iter().enumerate().map(|(a, c)| per_axis[a][*c]).collect();
            let grid = self.grid_index(&multi);
            for key in self.keys_at(grid) {
                if seen.insert(key) {
                    if let Ok(cell) = self.cell(key) {
                        if cell.contains(x) {
                            out.push(key);
                        }
                    }
                }
            }
            // odometer
            let mut a = per_axis.len();
            loop {
                if a == 0 {
                    return out;
                }
                a -= 1;
                counter[a] += 1;
                if counter[a] < per_axis[a].len() {
                    break;
                }
                counter[a] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BoxClass {
    Unsliced,
    Below,
    Above,
    Split,
}

impl BoxClass {
    pub(crate) fn slices(self) -> &'static [Slice] {
        match self {
            BoxClass::Split => &[Slice::Below, Slice::Above],
            _ => &[Slice::Whole],
        }
    }
}
