//! Command implementations behind the `riskdual` binary.

use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{load_config, LoadedConfig};
use crate::dual_builder::{assemble_dual_lp, solve_bound, BoundStatus, SolveMethod, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{Partition, DEFAULT_CELL_BUDGET};
use crate::lp::write_mps;
use crate::model::Model;
use crate::oracle::{solve_primal_discretization, CandidateGrid};
use crate::report::{BenchRow, BenchTable, MachineReport, Report, Timing, Verification, TOOL_NAME, TOOL_VERSION};
use crate::test_functions::{RiskFunctional, Sense, Slab, TestFunction};

/// Overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub budget_cells: Option<usize>,
    /// Write the materialized master program here (fixed MPS) before solving.
    pub dump_mps: Option<std::path::PathBuf>,
}

struct Prepared {
    loaded: LoadedConfig,
    seed: u64,
    solver: SolverOptions,
    machine: MachineReport,
    model: Model,
    warnings: Vec<String>,
}

fn prepare(path: &Path, command: &str, run: &RunOptions) -> Result<Prepared> {
    let loaded = load_config(path)?;
    let seed = run.seed.or(loaded.config.seed).unwrap_or(0);
    let solver = loaded.solver_options(run.budget_cells);
    let estimated = loaded.estimate_bounds(seed)?;
    let model = loaded.build_model(&estimated, solver.cell_budget)?;
    let mut warnings = Vec::new();
    let p = model.partition();
    if !p.is_bounded() && p.max_sum() == f64::INFINITY {
        warnings.push(format!(
            "unbounded cells reach the half-space sum(x) >= {}; the worst case may only be approached in a limit",
            model.risk().tau
        ));
    }
    let machine = MachineReport {
        tool: TOOL_NAME,
        version: TOOL_VERSION,
        command: command.to_string(),
        config_sha256: loaded.sha256.clone(),
        seed,
        dimension: loaded.config.dimension,
        risk: loaded.risk(),
        estimated_bounds: estimated,
        result: None,
        verification: None,
    };
    Ok(Prepared {
        loaded,
        seed,
        solver,
        machine,
        model,
        warnings,
    })
}

/// `riskdual bound`: the worst-case bound with its certificate.
pub fn cmd_bound(path: &Path, run: &RunOptions) -> Result<Report> {
    let start = Instant::now();
    let mut p = prepare(path, "bound", run)?;
    log::info!("config {} seed {}", p.loaded.sha256, p.seed);
    if let Some(out) = &run.dump_mps {
        let lp = assemble_dual_lp(&p.model, p.solver.mode, p.solver.cell_budget, &p.solver.simplex)?.transpose()?;
        let mut file = std::io::BufWriter::new(std::fs::File::create(out)?);
        write_mps(&lp, "riskdual", &mut file)?;
    }
    let result = solve_bound(&p.model, &p.solver)?;
    let solve = result.wall_time;
    if let Some(cell) = &result.unbounded_cell {
        p.warnings.push(format!("risk is unbounded on cell {cell}"));
    }
    p.machine.result = Some(result);
    Ok(Report {
        machine: p.machine,
        timing: timing(start, solve),
        warnings: p.warnings,
    })
}

/// `riskdual verify`: the bound plus the primal value on a candidate grid.
///
/// The default grid is every vertex of every cell, which closes the gap on a
/// bounded support. Clipped or user grids only give a lower bound.
pub fn cmd_verify(path: &Path, run: &RunOptions) -> Result<Report> {
    let start = Instant::now();
    let mut p = prepare(path, "verify", run)?;
    let oracle = p.loaded.config.oracle.clone();
    let partition = p.model.partition();
    let mut grid = if oracle.replace_grid {
        CandidateGrid::new(partition.dimension())
    } else {
        let (g, w) = CandidateGrid::cell_vertices(partition, oracle.radius, p.solver.cell_budget)?;
        p.warnings.extend(w);
        g
    };
    let extra = CandidateGrid::from_points_in_cells(partition, &oracle.points)?;
    for gp in extra.points() {
        grid.push(gp.point.clone(), gp.cell)?;
    }
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::input("the candidate grid is empty"));
    }
    let result = solve_bound(&p.model, &p.solver)?;
    let primal = solve_primal_discretization(&p.model, &grid, &p.solver.simplex)?;
    let gap = result.bound - primal.value;
    let relative_gap = if gap.is_finite() {
        gap / primal.value.abs().max(1.0)
    } else {
        gap
    };
    let lower_bound_only = oracle.replace_grid || !partition.is_bounded();
    let pass = if result.status == BoundStatus::Infeasible {
        primal.value == f64::NEG_INFINITY
    } else {
        relative_gap.abs() <= oracle.gap_tol
    };
    p.machine.verification = Some(Verification {
        primal: primal.value,
        dual: result.bound,
        gap,
        relative_gap,
        gap_tol: oracle.gap_tol,
        pass,
        grid_points: grid.len(),
        primal_status: primal.status,
        lower_bound_only,
    });
    let solve = result.wall_time;
    p.machine.result = Some(result);
    Ok(Report {
        machine: p.machine,
        timing: timing(start, solve),
        warnings: p.warnings,
    })
}

/// `riskdual bootstrap`: only the estimated integral bounds.
pub fn cmd_bootstrap(path: &Path, run: &RunOptions) -> Result<Report> {
    let start = Instant::now();
    let p = prepare(path, "bootstrap", run)?;
    Ok(Report {
        machine: p.machine,
        timing: timing(start, Duration::ZERO),
        warnings: p.warnings,
    })
}

fn timing(start: Instant, solve: Duration) -> Timing {
    Timing {
        wall_seconds: start.elapsed().as_secs_f64(),
        solve_seconds: solve.as_secs_f64(),
    }
}

/// Synthetic benchmark instance on `[0, 1]^d` with about `k` grid boxes:
/// `m = round(k^(1/d))` equal slabs per axis, a VaR threshold at `0.75 d`,
/// and an upper bound `(1 + u/2) / m` on the mass of every slab with `u`
/// uniform on `[0, 1)`.
pub fn bench_instance(d: usize, k: usize, seed: u64) -> Result<Model> {
    if d == 0 || k == 0 {
        return Err(Error::input("bench needs d >= 1 and k >= 1"));
    }
    let m = ((k as f64).powf(1.0 / d as f64).round() as usize).max(1);
    let bp: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let tau = 0.75 * d as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((d as u64) << 32) ^ k as u64);
    let mut tests = Vec::with_capacity(d * m);
    for axis in 0..d {
        for j in 0..m {
            let u: f64 = rng.gen();
            tests.push(TestFunction::slab_indicator(
                format!("s{axis}_{j}"),
                Slab::new(axis, bp[j], bp[j + 1]),
                Sense::Upper,
                (1.0 + 0.5 * u) / m as f64,
            ));
        }
    }
    let partition = Partition::with_budget(vec![bp; d], Some(tau), DEFAULT_CELL_BUDGET)?;
    Model::new(partition, tests, RiskFunctional::var(tau))
}

#[derive(Debug, Clone)]
pub struct BenchSpec {
    pub dims: Vec<usize>,
    pub cells: Vec<usize>,
    pub runs: usize,
    pub seed: u64,
}

impl Default for BenchSpec {
    fn default() -> Self {
        BenchSpec {
            dims: vec![2, 3, 4],
            cells: vec![256, 4096],
            runs: 5,
            seed: 0,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// One benchmark row: median wall times of column generation and the dense
/// simplex on the same instance.
pub fn bench_row(d: usize, k: usize, runs: usize, seed: u64) -> Result<BenchRow> {
    let model = bench_instance(d, k, seed)?;
    let budget = model.partition().grid_len().max(DEFAULT_CELL_BUDGET);
    let dcg_opts = SolverOptions {
        method: SolveMethod::Dcg,
        cell_budget: budget,
        ..SolverOptions::default()
    };
    let ss_opts = SolverOptions {
        method: SolveMethod::Dense,
        ..dcg_opts.clone()
    };
    let runs = runs.max(1);
    let mut dcg_times = Vec::with_capacity(runs);
    let mut dcg = None;
    for _ in 0..runs {
        let r = solve_bound(&model, &dcg_opts)?;
        dcg_times.push(r.wall_time.as_secs_f64());
        dcg = Some(r);
    }
    let dcg = dcg.expect("at least one run");
    let mut ss_times = Vec::with_capacity(runs);
    let mut ss_objective = None;
    for _ in 0..runs {
        match solve_bound(&model, &ss_opts) {
            Ok(r) => {
                ss_times.push(r.wall_time.as_secs_f64());
                ss_objective = Some(r.bound);
            }
            Err(Error::Capacity { .. }) => break,
            Err(e) => return Err(e),
        }
    }
    let dcg_seconds = median(dcg_times);
    let ss_seconds = (!ss_times.is_empty()).then(|| median(ss_times));
    Ok(BenchRow {
        d,
        k,
        cells: model.partition().grid_len(),
        dcg_seconds,
        ss_seconds,
        ratio: ss_seconds.map(|s| dcg_seconds / s),
        dcg_objective: dcg.bound,
        ss_objective,
        objectives_agree: ss_objective.map(|s| (dcg.bound - s).abs() <= 1e-7 * s.abs().max(1.0)),
        columns_generated: dcg.columns_generated,
    })
}

pub fn cmd_bench(spec: &BenchSpec) -> Result<BenchTable> {
    let mut rows = Vec::new();
    for &d in &spec.dims {
        for &k in &spec.cells {
            log::info!("bench d={d} k={k}");
            rows.push(bench_row(d, k, spec.runs, spec.seed)?);
        }
    }
    Ok(BenchTable { runs: spec.runs, rows })
}
