//! Revised simplex with an explicit basis inverse, product-form updates and
//! periodic refactorization. Columns can be supplied lazily by a
//! [`ColumnGenerator`].

use std::time::Instant;

use super::{normalize_entries, Direction, LinearProgram, LpSolution, RowSense, SimplexOptions, Status, VarBound};
use crate::error::{Error, Result};

/// A nonnegative column proposed by a generator, with entries in the
/// program's original row space.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedColumn {
    pub name: String,
    pub objective: f64,
    pub entries: Vec<(usize, f64)>,
}

/// Supplies columns whose reduced cost is negative.
///
/// The reduced cost of a candidate column `a` with objective `c` is
/// `shadow · a - objective_scale * c`. In phase two of a maximization
/// `shadow` is the row sensitivity vector and `objective_scale` is 1; in
/// phase one `objective_scale` is 0.
pub trait ColumnGenerator {
    fn price(&mut self, shadow: &[f64], objective_scale: f64, tol: f64) -> Result<Vec<GeneratedColumn>>;
}

struct NoColumns;

impl ColumnGenerator for NoColumns {
    fn price(&mut self, _: &[f64], _: f64, _: f64) -> Result<Vec<GeneratedColumn>> {
        Ok(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    /// Original column with sign.
    Structural(usize, f64),
    Generated(usize),
    Slack,
    Artificial,
}

struct IntCol {
    kind: Kind,
    /// Objective of the original program for this column (sign applied).
    objective: f64,
    /// Entries after row flips.
    entries: Vec<(usize, f64)>,
}

struct State<'a> {
    m: usize,
    cols: Vec<IntCol>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    b: Vec<f64>,
    flip: Vec<f64>,
    generated: usize,
    opts: &'a SimplexOptions,
    since_refactor: usize,
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

impl<'a> State<'a> {
    fn cost(&self, j: usize, phase_one: bool, w: f64) -> f64 {
        if phase_one {
            if self.cols[j].kind == Kind::Artificial {
                1.0
            } else {
                0.0
            }
        } else if self.cols[j].kind == Kind::Artificial {
            0.0
        } else {
            w * self.cols[j].objective
        }
    }

    fn duals(&self, phase_one: bool, w: f64) -> Vec<f64> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        for (r, &bj) in self.basis.iter().enumerate() {
            let c = self.cost(bj, phase_one, w);
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[r * m..(r + 1) * m];
            for (p, v) in pi.iter_mut().zip(row) {
                *p += c * v;
            }
        }
        pi
    }

    fn reduced_cost(&self, j: usize, pi: &[f64], phase_one: bool, w: f64) -> f64 {
        let mut d = self.cost(j, phase_one, w);
        for (i, v) in &self.cols[j].entries {
            d -= pi[*i] * v;
        }
        d
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for (i, v) in &self.cols[j].entries {
            for (r, a) in alpha.iter_mut().enumerate() {
                *a += self.binv[r * m + i] * v;
            }
        }
        alpha
    }

    fn pivot(&mut self, r: usize, q: usize, alpha: &[f64]) -> Result<()> {
        let m = self.m;
        let p = alpha[r];
        let step = self.xb[r] / p;
        for i in 0..m {
            if i != r {
                self.xb[i] -= alpha[i] * step;
            }
        }
        self.xb[r] = step;
        let pivot_row: Vec<f64> = self.binv[r * m..(r + 1) * m].iter().map(|v| v / p).collect();
        for i in 0..m {
            let f = alpha[i];
            if i == r || f == 0.0 {
                continue;
            }
            let row = &mut self.binv[i * m..(i + 1) * m];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
        }
        self.binv[r * m..(r + 1) * m].copy_from_slice(&pivot_row);
        self.is_basic[self.basis[r]] = false;
        self.is_basic[q] = true;
        self.basis[r] = q;
        self.since_refactor += 1;
        if self.since_refactor >= self.opts.refactor_every {
            self.refactor()?;
        }
        Ok(())
    }

    /// Rebuilds the basis inverse from scratch with partial pivoting.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (k, &bj) in self.basis.iter().enumerate() {
            for (i, v) in &self.cols[bj].entries {
                a[i * m + k] = *v;
            }
        }
        let norm_a = one_norm(&a, m);
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let (piv, pv) = (c..m)
                .map(|r| (r, a[r * m + c].abs()))
                .fold((c, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
            if pv <= self.opts.pivot_tol * norm_a.max(1.0) * 1e-3 {
                return Err(Error::Factorization {
                    pivot: pv,
                    condition: if pv > 0.0 { norm_a / pv } else { f64::INFINITY },
                });
            }
            if piv != c {
                for k in 0..m {
                    a.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let p = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r == c {
                    continue;
                }
                let f = a[r * m + c];
                if f == 0.0 {
                    continue;
                }
                for k in 0..m {
                    a[r * m + k] -= f * a[c * m + k];
                    inv[r * m + k] -= f * inv[c * m + k];
                }
            }
        }
        self.binv = inv;
        let mut xb = vec![0.0; m];
        for (r, x) in xb.iter_mut().enumerate() {
            *x = (0..m).map(|i| self.binv[r * m + i] * self.b[i]).sum();
        }
        self.xb = xb;
        self.since_refactor = 0;
        Ok(())
    }

    fn add_generated(&mut self, g: GeneratedColumn) -> Result<usize> {
        let entries = normalize_entries(g.entries, self.m)?;
        if !g.objective.is_finite() || entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::input(format!("generated column `{}` is not finite", g.name)));
        }
        let entries = entries.into_iter().map(|(i, v)| (i, v * self.flip[i])).collect();
        self.cols.push(IntCol {
            kind: Kind::Generated(self.generated),
            objective: g.objective,
            entries,
        });
        self.is_basic.push(false);
        self.generated += 1;
        Ok(self.cols.len() - 1)
    }

    fn optimize(
        &mut self,
        gen: &mut dyn ColumnGenerator,
        phase_one: bool,
        w: f64,
        iterations: &mut usize,
    ) -> Result<Outcome> {
        let tol = self.opts.reduced_cost_tol;
        let mut degenerate_run = 0usize;
        let mut bland = false;
        loop {
            if *iterations >= self.opts.max_iterations {
                return Ok(Outcome::IterationLimit);
            }
            let pi = self.duals(phase_one, w);
            let allowed = |s: &Self, j: usize| !s.is_basic[j] && (phase_one || s.cols[j].kind != Kind::Artificial);
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if !allowed(self, j) {
                    continue;
                }
                let d = self.reduced_cost(j, &pi, phase_one, w);
                if d < -tol && entering.is_none_or(|(_, bd)| d < bd) {
                    entering = Some((j, d));
                    if bland {
                        break;
                    }
                }
            }
            if entering.is_none() {
                let shadow: Vec<f64> = pi.iter().zip(&self.flip).map(|(p, f)| -p * f).collect();
                let scale = if phase_one { 0.0 } else { -w };
                let fresh = gen.price(&shadow, scale, tol)?;
                for g in fresh {
                    let j = self.add_generated(g)?;
                    let d = self.reduced_cost(j, &pi, phase_one, w);
                    if d < -tol && entering.is_none_or(|(_, bd)| d < bd) {
                        entering = Some((j, d));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(Outcome::Optimal);
            };
            let alpha = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let ai = alpha[i];
                let ratio = if !phase_one && self.cols[self.basis[i]].kind == Kind::Artificial {
                    // zero-level artificial: must leave before it moves
                    if ai.abs() > self.opts.pivot_tol {
                        0.0
                    } else {
                        continue;
                    }
                } else if ai > self.opts.pivot_tol {
                    self.xb[i].max(0.0) / ai
                } else {
                    continue;
                };
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((r, best)) => {
                        let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                        let better = if tie {
                            if bland {
                                self.basis[i] < self.basis[r]
                            } else {
                                ai.abs() > alpha[r].abs()
                            }
                        } else {
                            ratio < best
                        };
                        if better {
                            Some((i, ratio))
                        } else {
                            Some((r, best))
                        }
                    }
                };
            }
            let Some((r, step)) = leave else {
                return Ok(Outcome::Unbounded);
            };
            if step <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run >= self.opts.bland_after {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
                bland = false;
            }
            if self.xb[r] < 0.0 {
                self.xb[r] = 0.0;
            }
            self.pivot(r, q, &alpha)?;
            *iterations += 1;
        }
    }

    /// Pivots zero-level artificials out of the basis where some other
    /// column has a usable entry in their row.
    fn drive_out_artificials(&mut self) -> Result<()> {
        let m = self.m;
        for r in 0..m {
            if self.cols[self.basis[r]].kind != Kind::Artificial {
                continue;
            }
            let rho = self.binv[r * m..(r + 1) * m].to_vec();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..self.cols.len() {
                if self.is_basic[j] || self.cols[j].kind == Kind::Artificial {
                    continue;
                }
                let v: f64 = self.cols[j].entries.iter().map(|(i, a)| rho[*i] * a).sum();
                if v.abs() > 1e-7 && best.is_none_or(|(_, bv)| v.abs() > bv) {
                    best = Some((j, v.abs()));
                }
            }
            if let Some((q, _)) = best {
                let alpha = self.ftran(q);
                self.pivot(r, q, &alpha)?;
            }
        }
        Ok(())
    }
}

fn one_norm(a: &[f64], m: usize) -> f64 {
    (0..m)
        .map(|c| (0..m).map(|r| a[r * m + c].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Solves `lp` with the revised simplex method.
pub fn solve_revised(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    solve_dcg(lp, &mut NoColumns, opts)
}

/// Solves the program formed by `seed` plus every column `gen` can produce,
/// asking the generator for columns only when the current ones price out.
/// Generated variables are nonnegative and appear after the seed's columns
/// in the returned primal vector.
pub fn solve_dcg(seed: &LinearProgram, gen: &mut dyn ColumnGenerator, opts: &SimplexOptions) -> Result<LpSolution> {
    let start = Instant::now();
    seed.validate()?;
    let m = seed.num_rows();
    let flip: Vec<f64> = seed.rows.iter().map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 }).collect();
    let sense: Vec<RowSense> = seed
        .rows
        .iter()
        .zip(&flip)
        .map(|(r, f)| if *f < 0.0 { r.sense.flipped() } else { r.sense })
        .collect();
    let b: Vec<f64> = seed.rows.iter().zip(&flip).map(|(r, f)| r.rhs * f).collect();

    let mut cols = Vec::new();
    for (j, c) in seed.columns.iter().enumerate() {
        let entries: Vec<(usize, f64)> = c.entries.iter().map(|(i, v)| (*i, v * flip[*i])).collect();
        cols.push(IntCol {
            kind: Kind::Structural(j, 1.0),
            objective: c.objective,
            entries: entries.clone(),
        });
        if c.bound == VarBound::Free {
            cols.push(IntCol {
                kind: Kind::Structural(j, -1.0),
                objective: -c.objective,
                entries: entries.into_iter().map(|(i, v)| (i, -v)).collect(),
            });
        }
    }
    let mut basis = vec![0usize; m];
    for i in 0..m {
        match sense[i] {
            RowSense::Le => {
                basis[i] = cols.len();
                cols.push(IntCol {
                    kind: Kind::Slack,
                    objective: 0.0,
                    entries: vec![(i, 1.0)],
                });
            }
            RowSense::Ge => {
                cols.push(IntCol {
                    kind: Kind::Slack,
                    objective: 0.0,
                    entries: vec![(i, -1.0)],
                });
                basis[i] = cols.len();
                cols.push(IntCol {
                    kind: Kind::Artificial,
                    objective: 0.0,
                    entries: vec![(i, 1.0)],
                });
            }
            RowSense::Eq => {
                basis[i] = cols.len();
                cols.push(IntCol {
                    kind: Kind::Artificial,
                    objective: 0.0,
                    entries: vec![(i, 1.0)],
                });
            }
        }
    }
    let unit_of_row = basis.clone();
    let mut is_basic = vec![false; cols.len()];
    for &bj in &basis {
        is_basic[bj] = true;
    }
    let mut binv = vec![0.0; m * m];
    for i in 0..m {
        binv[i * m + i] = 1.0;
    }
    let mut st = State {
        m,
        cols,
        basis,
        is_basic,
        binv,
        xb: b.clone(),
        b,
        flip,
        generated: 0,
        opts,
        since_refactor: 0,
    };
    let w = match seed.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let mut iterations = 0usize;

    let mut status = None;
    if st.basis.iter().any(|&bj| st.cols[bj].kind == Kind::Artificial) {
        match st.optimize(gen, true, w, &mut iterations)? {
            Outcome::IterationLimit => status = Some(Status::IterationLimit),
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
            Outcome::Optimal => {
                st.refactor()?;
                let infeas: f64 = st
                    .basis
                    .iter()
                    .zip(&st.xb)
                    .filter(|(bj, _)| st.cols[**bj].kind == Kind::Artificial)
                    .map(|(_, x)| x.max(0.0))
                    .sum();
                let scale = 1.0 + st.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                if infeas > opts.feasibility_tol * scale {
                    status = Some(Status::Infeasible);
                } else {
                    st.drive_out_artificials()?;
                }
            }
        }
    }
    let status = match status {
        Some(s) => s,
        None => match st.optimize(gen, false, w, &mut iterations)? {
            Outcome::Optimal => Status::Optimal,
            Outcome::Unbounded => Status::Unbounded,
            Outcome::IterationLimit => Status::IterationLimit,
        },
    };
    if status == Status::Optimal {
        st.refactor()?;
    }

    let n = seed.num_cols();
    let mut primal = vec![0.0; n + st.generated];
    let mut gen_objective = vec![0.0; st.generated];
    for c in &st.cols {
        if let Kind::Generated(g) = c.kind {
            gen_objective[g] = c.objective;
        }
    }
    for (r, &bj) in st.basis.iter().enumerate() {
        match st.cols[bj].kind {
            Kind::Structural(j, s) => primal[j] += s * st.xb[r],
            Kind::Generated(g) => primal[n + g] = st.xb[r],
            _ => {}
        }
    }
    let pi = st.duals(false, w);
    let duals: Vec<f64> = if status == Status::Optimal {
        (0..m).map(|i| w * pi[i] * st.flip[i]).collect()
    } else {
        vec![0.0; m]
    };
    debug_assert_eq!(unit_of_row.len(), m);
    let objective = match status {
        Status::Infeasible => f64::NAN,
        Status::Unbounded => w * f64::NEG_INFINITY,
        _ => {
            seed.objective_value(&primal[..n])
                + primal[n..].iter().zip(&gen_objective).map(|(x, c)| x * c).sum::<f64>()
        }
    };
    Ok(LpSolution {
        status,
        primal,
        duals,
        objective,
        iterations,
        columns_generated: st.generated,
        wall_time: start.elapsed(),
    })
}
