//! Two-phase tableau simplex on a dense matrix.

use std::time::Instant;

use super::{Direction, LinearProgram, LpSolution, RowSense, SimplexOptions, Status, VarBound};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
enum Var {
    /// Original column `j` with sign (+1, or -1 for the negative half of a free
    /// variable).
    Structural(usize, f64),
    Slack,
    Artificial,
}

struct Tableau {
    m: usize,
    n: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    fn pivot(&mut self, r: usize, q: usize, reduced: &mut [f64]) {
        let n = self.n;
        let p = self.a[r * n + q];
        {
            let row = &mut self.a[r * n..(r + 1) * n];
            for v in row.iter_mut() {
                *v /= p;
            }
        }
        self.b[r] /= p;
        let (pivot_row, br) = (self.a[r * n..(r + 1) * n].to_vec(), self.b[r]);
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * n + q];
            if f == 0.0 {
                continue;
            }
            let row = &mut self.a[i * n..(i + 1) * n];
            for (v, pr) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pr;
            }
            row[q] = 0.0;
            self.b[i] -= f * br;
        }
        let f = reduced[q];
        if f != 0.0 {
            for (d, pr) in reduced.iter_mut().zip(&pivot_row) {
                *d -= f * pr;
            }
            reduced[q] = 0.0;
        }
        self.basis[r] = q;
    }

    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj];
            if cb == 0.0 {
                continue;
            }
            for (j, dj) in d.iter_mut().enumerate() {
                *dj -= cb * self.at(i, j);
            }
        }
        d
    }
}

enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

fn optimize(
    t: &mut Tableau,
    reduced: &mut [f64],
    allowed: &[bool],
    opts: &SimplexOptions,
    iterations: &mut usize,
) -> Outcome {
    let mut degenerate_run = 0usize;
    let mut bland = false;
    loop {
        if *iterations >= opts.max_iterations {
            return Outcome::IterationLimit;
        }
        let entering = if bland {
            (0..t.n).find(|&j| allowed[j] && reduced[j] < -opts.reduced_cost_tol)
        } else {
            let mut best = None;
            let mut best_val = -opts.reduced_cost_tol;
            for j in 0..t.n {
                if allowed[j] && reduced[j] < best_val {
                    best_val = reduced[j];
                    best = Some(j);
                }
            }
            best
        };
        let Some(q) = entering else {
            return Outcome::Optimal;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.m {
            let aiq = t.at(i, q);
            if aiq <= opts.pivot_tol {
                continue;
            }
            let ratio = t.b[i].max(0.0) / aiq;
            leave = match leave {
                None => Some((i, ratio)),
                Some((r, best)) => {
                    let tie = (ratio - best).abs() <= 1e-12 * (1.0 + best.abs());
                    if ratio < best && !tie {
                        Some((i, ratio))
                    } else if tie {
                        let better = if bland {
                            t.basis[i] < t.basis[r]
                        } else {
                            aiq > t.at(r, q)
                        };
                        if better {
                            Some((i, ratio.min(best)))
                        } else {
                            Some((r, best))
                        }
                    } else {
                        Some((r, best))
                    }
                }
            };
        }
        let Some((r, step)) = leave else {
            return Outcome::Unbounded;
        };
        if step <= 1e-12 {
            degenerate_run += 1;
            if degenerate_run >= opts.bland_after {
                bland = true;
            }
        } else {
            degenerate_run = 0;
            bland = false;
        }
        t.pivot(r, q, reduced);
        *iterations += 1;
    }
}

/// Solves `lp` with a two-phase dense tableau simplex. Dantzig pricing, with
/// Bland's rule after a run of degenerate pivots.
pub fn solve_dense_simplex(lp: &LinearProgram, opts: &SimplexOptions) -> Result<LpSolution> {
    let start = Instant::now();
    lp.validate()?;
    let m = lp.num_rows();
    if m > opts.dense_max_dim {
        return Err(Error::Capacity {
            what: "dense simplex rows",
            requested: m,
            budget: opts.dense_max_dim,
        });
    }
    if lp.num_cols() > opts.dense_max_dim {
        return Err(Error::Capacity {
            what: "dense simplex columns",
            requested: lp.num_cols(),
            budget: opts.dense_max_dim,
        });
    }

    let flip: Vec<f64> = lp.rows.iter().map(|r| if r.rhs < 0.0 { -1.0 } else { 1.0 }).collect();
    let sense: Vec<RowSense> = lp
        .rows
        .iter()
        .zip(&flip)
        .map(|(r, f)| if *f < 0.0 { r.sense.flipped() } else { r.sense })
        .collect();

    let mut vars: Vec<Var> = Vec::new();
    for (j, c) in lp.columns.iter().enumerate() {
        vars.push(Var::Structural(j, 1.0));
        if c.bound == VarBound::Free {
            vars.push(Var::Structural(j, -1.0));
        }
    }
    let first_slack = vars.len();
    let mut slack_of_row = vec![None; m];
    for (i, s) in sense.iter().enumerate() {
        if *s != RowSense::Eq {
            slack_of_row[i] = Some(vars.len());
            vars.push(Var::Slack);
        }
    }
    // identity column for each row: a +1 slack or an artificial
    let mut unit_of_row = vec![0usize; m];
    for i in 0..m {
        if sense[i] == RowSense::Le {
            unit_of_row[i] = slack_of_row[i].unwrap();
        } else {
            unit_of_row[i] = vars.len();
            vars.push(Var::Artificial);
        }
    }
    let n = vars.len();
    let entries = m.saturating_mul(n);
    if entries > opts.dense_max_entries {
        return Err(Error::Capacity {
            what: "dense tableau entries",
            requested: entries,
            budget: opts.dense_max_entries,
        });
    }

    let mut a = vec![0.0; m * n];
    for (k, v) in vars.iter().enumerate() {
        if let Var::Structural(j, sign) = v {
            for (i, val) in &lp.columns[*j].entries {
                a[i * n + k] = sign * val * flip[*i];
            }
        }
    }
    for i in 0..m {
        if let Some(s) = slack_of_row[i] {
            a[i * n + s] = if sense[i] == RowSense::Le { 1.0 } else { -1.0 };
        }
        a[i * n + unit_of_row[i]] = 1.0;
    }
    let b: Vec<f64> = lp.rows.iter().zip(&flip).map(|(r, f)| r.rhs * f).collect();
    let mut t = Tableau {
        m,
        n,
        a,
        b,
        basis: unit_of_row.clone(),
    };
    debug_assert!(first_slack <= n);

    let is_art: Vec<bool> = vars.iter().map(|v| *v == Var::Artificial).collect();
    let mut iterations = 0usize;

    if is_art.iter().any(|x| *x) {
        let cost1: Vec<f64> = is_art.iter().map(|x| if *x { 1.0 } else { 0.0 }).collect();
        let mut d = t.reduced_costs(&cost1);
        let allowed = vec![true; n];
        match optimize(&mut t, &mut d, &allowed, opts, &mut iterations) {
            Outcome::IterationLimit => {
                return Ok(finish(lp, &t, &vars, &[], Status::IterationLimit, iterations, start, &flip, &unit_of_row))
            }
            Outcome::Unbounded => unreachable!("phase one objective is bounded below"),
            Outcome::Optimal => {}
        }
        let infeas: f64 = t
            .basis
            .iter()
            .enumerate()
            .filter(|(_, bj)| is_art[**bj])
            .map(|(i, _)| t.b[i])
            .sum();
        let scale = 1.0 + t.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > opts.feasibility_tol * scale {
            return Ok(finish(lp, &t, &vars, &[], Status::Infeasible, iterations, start, &flip, &unit_of_row));
        }
        // drive zero-level artificials out of the basis where possible
        for r in 0..m {
            if !is_art[t.basis[r]] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                if is_art[j] {
                    continue;
                }
                let v = t.at(r, j).abs();
                if v > opts.pivot_tol && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            if let Some((q, _)) = best {
                let mut dummy = vec![0.0; n];
                t.pivot(r, q, &mut dummy);
            }
        }
    }

    let sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let cost: Vec<f64> = vars
        .iter()
        .map(|v| match v {
            Var::Structural(j, s) => sign * s * lp.columns[*j].objective,
            _ => 0.0,
        })
        .collect();
    let mut d = t.reduced_costs(&cost);
    let allowed: Vec<bool> = is_art.iter().map(|x| !x).collect();
    let status = match optimize(&mut t, &mut d, &allowed, opts, &mut iterations) {
        Outcome::Optimal => Status::Optimal,
        Outcome::Unbounded => Status::Unbounded,
        Outcome::IterationLimit => Status::IterationLimit,
    };
    Ok(finish(lp, &t, &vars, &d, status, iterations, start, &flip, &unit_of_row))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    lp: &LinearProgram,
    t: &Tableau,
    vars: &[Var],
    reduced: &[f64],
    status: Status,
    iterations: usize,
    start: Instant,
    flip: &[f64],
    unit_of_row: &[usize],
) -> LpSolution {
    let mut primal = vec![0.0; lp.num_cols()];
    for (i, &bj) in t.basis.iter().enumerate() {
        if let Var::Structural(j, s) = vars[bj] {
            primal[j] += s * t.b[i];
        }
    }
    let sign = match lp.direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let duals = if reduced.is_empty() {
        vec![0.0; t.m]
    } else {
        // unit columns have zero cost, so pi_i = -reduced cost
        (0..t.m).map(|i| sign * -reduced[unit_of_row[i]] * flip[i]).collect()
    };
    let objective = match status {
        Status::Infeasible => f64::NAN,
        Status::Unbounded => match lp.direction {
            Direction::Minimize => f64::NEG_INFINITY,
            Direction::Maximize => f64::INFINITY,
        },
        _ => lp.objective_value(&primal),
    };
    LpSolution {
        status,
        primal,
        duals,
        objective,
        iterations,
        columns_generated: 0,
        wall_time: start.elapsed(),
    }
}
