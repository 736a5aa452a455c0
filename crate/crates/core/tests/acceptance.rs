//! Acceptance criteria, one report line each.
//!
//! Run with `cargo test -p riskdual-core --test acceptance -- --nocapture` to
//! see the lines.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use riskdual::app::{bench_row, cmd_bound, RunOptions};
use riskdual::data_io::{bootstrap_integral_bounds, SampleSet};
use riskdual::dual_builder::{
    max_dual_violation, precompute_cell_lambda, solve_bound, BoundStatus, ReductionMode, SolveMethod, SolverOptions,
};
use riskdual::geometry::{Cell, Partition};
use riskdual::lp::{solve_dense_simplex, Direction, LinearProgram, RowSense, SimplexOptions, Status, VarBound};
use riskdual::model::Model;
use riskdual::oracle::{solve_primal_discretization, CandidateGrid};
use riskdual::test_functions::{RiskFunctional, Sense, Slab, TestFunction};

struct Outcome {
    id: &'static str,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

/// Criteria whose stated target conflicts with exact arithmetic. They are run
/// as written and must fail; see the README.
const KNOWN_FAILURES: &[&str] = &["1b"];

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / b.abs().max(1.0)
}

fn grid_from(p: &Partition) -> CandidateGrid {
    CandidateGrid::cell_vertices(p, None, 1 << 20).unwrap().0
}

// ---------------------------------------------------------------- criterion 1

/// `max P(X >= 1)` over measures on the two points {0, 1} with
/// `E[1 + a X] = level`; returns (weights, value).
fn two_point(a: f64, level: f64) -> (Vec<f64>, f64) {
    let p = Partition::with_budget(vec![vec![0.0, 1.0]], Some(1.0), 16).unwrap();
    let t = TestFunction::slab_affine("phi", None, vec![a], 1.0, Sense::Equality, level);
    let m = Model::new(p, vec![t], RiskFunctional::var(1.0)).unwrap();
    let mut g = CandidateGrid::new(1);
    g.push(vec![0.0], None).unwrap();
    g.push(vec![1.0], None).unwrap();
    let s = solve_primal_discretization(&m, &g, &SimplexOptions::default()).unwrap();
    (s.weights, s.value)
}

fn criterion_1() -> Vec<Outcome> {
    let start = Instant::now();
    let a = 1.0;
    let (w, v) = two_point(a, 1.0 + 5.0 * a / 9.0);
    let pass_a = (w[0] - 4.0 / 9.0).abs() <= 1e-9 && (w[1] - 5.0 / 9.0).abs() <= 1e-9 && (v - 5.0 / 9.0).abs() <= 1e-9;
    let ea = start.elapsed();
    let out_a = Outcome {
        id: "1a",
        title: "two-point oracle, density 2(1+x)/3",
        pass: pass_a && ea < Duration::from_secs(1),
        detail: format!("atoms ({:.12}, {:.12}), value {:.12}; expected (4/9, 5/9), 5/9", w[0], w[1], v),
        elapsed: ea,
    };

    let start = Instant::now();
    let (w, v) = two_point(a, 1.0 + 3.0 * a / 4.0);
    let pass_b = (w[0] - 0.75).abs() <= 1e-9 && (w[1] - 0.25).abs() <= 1e-9 && (v - 0.25).abs() <= 1e-9;
    // The mean constraint alone fixes the weights: w1 = (level - 1) / a.
    let w1 = 3.0 / 4.0;
    let derived = (w[0] - (1.0 - w1)).abs() <= 1e-9 && (w[1] - w1).abs() <= 1e-9 && (v - w1).abs() <= 1e-9;
    assert!(derived, "oracle disagrees with the closed form: {w:?} {v}");
    let eb = start.elapsed();
    let out_b = Outcome {
        id: "1b",
        title: "two-point oracle, density 3x^2",
        pass: pass_b && eb < Duration::from_secs(1),
        detail: format!(
            "atoms ({:.12}, {:.12}), value {:.12}; target (3/4, 1/4), 1/4; \
             E[1+X] = 7/4 on {{0,1}} forces weight 3/4 at 1",
            w[0], w[1], v
        ),
        elapsed: eb,
    };
    vec![out_a, out_b]
}

// ------------------------------------------------------------ criteria 2, 3, 6

/// Random bounded instance on `[0, 1]^d` with slab-indicator bounds estimated
/// by bootstrap from a random Beta sample.
fn sampled_instance(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=2usize);
    let m = if rng.gen_bool(0.5) { 2 } else { 4 };
    let breakpoints: Vec<Vec<f64>> = (0..d)
        .map(|_| {
            let mut inner: Vec<f64> = (1..m)
                .map(|j| (j as f64 + rng.gen_range(-0.3..0.3)) / m as f64)
                .collect();
            inner.sort_by(f64::total_cmp);
            let mut bp = vec![0.0];
            bp.extend(inner);
            bp.push(1.0);
            bp
        })
        .collect();
    let shapes: Vec<(f64, f64)> = (0..d)
        .map(|_| (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0)))
        .collect();
    let rows: Vec<Vec<f64>> = (0..300)
        .map(|_| {
            shapes
                .iter()
                .map(|(a, b)| Beta::new(*a, *b).unwrap().sample(&mut rng))
                .collect()
        })
        .collect();
    let samples = SampleSet::new(rows, "random").unwrap();
    let mut tests = Vec::new();
    for (axis, bp) in breakpoints.iter().enumerate() {
        for j in 0..m {
            let f = TestFunction::slab_indicator(
                format!("s{axis}_{j}"),
                Slab::new(axis, bp[j], bp[j + 1]),
                Sense::Upper,
                0.0,
            );
            let b = bootstrap_integral_bounds(&samples, &f, 0.95, 200, rng.gen()).unwrap();
            tests.push(TestFunction { bound: b.upper, ..f.clone() });
            tests.push(TestFunction {
                sense: Sense::Lower,
                bound: b.lower,
                ..f
            });
        }
    }
    let tau = rng.gen_range(0.3..0.9) * d as f64;
    let risk = if rng.gen_bool(0.5) {
        RiskFunctional::var(tau)
    } else {
        RiskFunctional::cvar(tau)
    };
    let p = Partition::with_budget(breakpoints, Some(tau), 1 << 20).unwrap();
    Model::new(p, tests, risk).unwrap()
}

fn instances() -> Vec<Model> {
    (0..100).map(|i| sampled_instance(1000 + i)).collect()
}

fn criterion_2(models: &[Model]) -> Outcome {
    let start = Instant::now();
    let mut violations = 0;
    let mut worst: f64 = f64::NEG_INFINITY;
    let opts = SolverOptions::default();
    for (i, m) in models.iter().enumerate() {
        let dual = solve_bound(m, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        // vertex grid plus random interior points evaluated pointwise
        let mut grid = grid_from(m.partition());
        for _ in 0..50 {
            let x: Vec<f64> = (0..m.dimension()).map(|_| rng.gen_range(0.001..0.999)).collect();
            grid.push(x, None).unwrap();
        }
        for g in [grid_from(m.partition()), grid] {
            let primal = solve_primal_discretization(m, &g, &SimplexOptions::default()).unwrap();
            let excess = if primal.value == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                (primal.value - dual.bound) / dual.bound.abs().max(1.0)
            };
            worst = worst.max(excess);
            if excess > 1e-7 {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "2",
        title: "weak duality on 100 sampled instances",
        pass: violations == 0 && elapsed < Duration::from_secs(30),
        detail: format!("{violations} violations over 200 grids, worst relative excess {worst:.3e}"),
        elapsed,
    }
}

fn criterion_3(models: &[Model]) -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    let mut infeasible = 0;
    for m in models {
        let dual = solve_bound(m, &SolverOptions::default()).unwrap();
        let primal = solve_primal_discretization(m, &grid_from(m.partition()), &SimplexOptions::default()).unwrap();
        if dual.status == BoundStatus::Infeasible {
            infeasible += 1;
            if primal.status != Status::Infeasible {
                failures += 1;
            }
            continue;
        }
        let gap = rel(dual.bound, primal.value);
        worst = worst.max(gap);
        if !(gap <= 1e-6) {
            failures += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "3",
        title: "zero gap on the vertex grid",
        pass: failures == 0,
        detail: format!("{failures} failures, worst relative gap {worst:.3e}, {infeasible} infeasible on both sides"),
        elapsed,
    }
}

fn criterion_6(models: &[Model]) -> Outcome {
    let start = Instant::now();
    let mut worst_obj: f64 = 0.0;
    let mut worst_viol: f64 = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    let mut count = 0;
    let check = |label: String,
                 m: &Model,
                 worst_obj: &mut f64,
                 worst_viol: &mut f64,
                 failures: &mut Vec<String>| {
        let dcg = solve_bound(
            m,
            &SolverOptions {
                method: SolveMethod::Dcg,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        let dense = solve_bound(
            m,
            &SolverOptions {
                method: SolveMethod::Dense,
                ..SolverOptions::default()
            },
        )
        .unwrap();
        if dcg.status != dense.status {
            failures.push(format!("{label}: status {:?} vs {:?}", dcg.status, dense.status));
            return;
        }
        if dcg.status != BoundStatus::Optimal {
            return;
        }
        let r = rel(dcg.bound, dense.bound);
        *worst_obj = worst_obj.max(r);
        let (viol, _) =
            max_dual_violation(m, &dcg.multiplier_values(), dcg.mass_dual, 1 << 20, &SimplexOptions::default())
                .unwrap();
        *worst_viol = worst_viol.max(viol);
        if r > 1e-7 || viol > 1e-7 {
            failures.push(format!("{label}: rel {r:.2e} violation {viol:.2e}"));
        }
    };
    for (i, m) in models.iter().enumerate() {
        check(format!("sampled {i}"), m, &mut worst_obj, &mut worst_viol, &mut failures);
        count += 1;
    }
    for d in 1..=2 {
        for k in [16usize, 256, 1024, 4096] {
            let m = riskdual::app::bench_instance(d, k, 7).unwrap();
            check(format!("grid d={d} k={k}"), &m, &mut worst_obj, &mut worst_viol, &mut failures);
            count += 1;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "6",
        title: "column generation matches the dense solver",
        pass: failures.is_empty(),
        detail: format!(
            "{count} instances, worst relative difference {worst_obj:.3e}, worst dual violation {worst_viol:.3e}{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; {}", failures.join(", "))
            }
        ),
        elapsed,
    }
}

// ---------------------------------------------------------------- criterion 4

/// Random instance with affine test functions whose bounds come from a
/// random discrete measure, so the constraints are consistent.
fn affine_instance(seed: u64) -> Model {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..=3usize);
    let m = rng.gen_range(2..=3usize);
    let bp: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let points: Vec<Vec<f64>> = (0..8).map(|_| (0..d).map(|_| rng.gen::<f64>()).collect()).collect();
    let mut tests = Vec::new();
    for t in 0..rng.gen_range(2..=4) {
        let axis = rng.gen_range(0..d);
        let j = rng.gen_range(0..m);
        let slab = Slab::new(axis, bp[j], bp[j + 1]);
        let f = if t == 0 {
            TestFunction::slab_indicator(format!("i{t}"), slab, Sense::Upper, 0.0)
        } else {
            let coefficients: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let slab = rng.gen_bool(0.7).then_some(slab);
            TestFunction::slab_affine(format!("a{t}"), slab, coefficients, rng.gen_range(0.0..1.0), Sense::Upper, 0.0)
        };
        use riskdual::test_functions::PiecewiseAffine;
        let mean = points.iter().map(|x| f.evaluate(x)).sum::<f64>() / points.len() as f64;
        let slack = rng.gen_range(0.0..0.1);
        tests.push(TestFunction {
            bound: mean + slack,
            ..f.clone()
        });
        tests.push(TestFunction {
            sense: Sense::Lower,
            bound: mean - slack,
            ..f
        });
    }
    let tau = rng.gen_range(0.3..0.9) * d as f64;
    let risk = if rng.gen_bool(0.5) {
        RiskFunctional::var(tau)
    } else {
        RiskFunctional::cvar(tau)
    };
    let p = Partition::with_budget(vec![bp; d], Some(tau), 1 << 20).unwrap();
    Model::new(p, tests, risk).unwrap()
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for i in 0..50 {
        let m = affine_instance(5000 + i);
        let values: Vec<(ReductionMode, f64)> = [ReductionMode::Explicit, ReductionMode::LambdaEliminated, ReductionMode::Vertex]
            .into_iter()
            .map(|mode| {
                let r = solve_bound(
                    &m,
                    &SolverOptions {
                        mode,
                        method: SolveMethod::Dense,
                        ..SolverOptions::default()
                    },
                )
                .unwrap();
                (mode, r.bound)
            })
            .collect();
        for (mode, v) in &values[1..] {
            let r = rel(*v, values[0].1);
            worst = worst.max(r);
            if !(r <= 1e-8) {
                failures.push(format!("instance {i} {mode:?}: {v} vs {}", values[0].1));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "4",
        title: "Farkas, eliminated and vertex blocks agree",
        pass: failures.is_empty(),
        detail: format!("50 instances, worst relative difference {worst:.3e} {}", failures.join(", ")),
        elapsed,
    }
}

// ---------------------------------------------------------------- criterion 5

/// `max <g, x>` over the cell, solved as an LP in `x`.
fn support_function(cell: &Cell, g: &[f64]) -> Option<f64> {
    let n = g.len();
    let mut lp = LinearProgram::new(Direction::Maximize);
    for h in cell.halfspaces() {
        lp.add_row("h", RowSense::Ge, h.bound);
    }
    for i in 0..n {
        let entries = cell
            .halfspaces()
            .iter()
            .enumerate()
            .filter(|(_, h)| h.normal[i] != 0.0)
            .map(|(j, h)| (j, h.normal[i]))
            .collect();
        lp.add_column(format!("x{i}"), g[i], VarBound::Free, entries).unwrap();
    }
    let s = solve_dense_simplex(&lp, &SimplexOptions::default()).unwrap();
    match s.status {
        Status::Optimal => Some(s.objective),
        Status::Unbounded => None,
        other => panic!("support LP: {other:?}"),
    }
}

/// The multiplier LP written directly, as a minimization.
fn multiplier_lp(cell: &Cell, g: &[f64]) -> Option<f64> {
    let mut lp = LinearProgram::new(Direction::Minimize);
    for (i, gi) in g.iter().enumerate() {
        lp.add_row(format!("g{i}"), RowSense::Eq, -gi);
    }
    for (j, h) in cell.halfspaces().iter().enumerate() {
        let entries = h.normal.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        lp.add_column(format!("l{j}"), -h.bound, VarBound::NonNegative, entries).unwrap();
    }
    let s = solve_dense_simplex(&lp, &SimplexOptions::default()).unwrap();
    match s.status {
        Status::Optimal => Some(-s.objective),
        Status::Infeasible => None,
        other => panic!("multiplier LP: {other:?}"),
    }
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut sliced = 0;
    for i in 0..50 {
        let d = rng.gen_range(1..=4usize);
        let bp: Vec<Vec<f64>> = (0..d)
            .map(|_| {
                let mut v: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
                v.sort_by(f64::total_cmp);
                v.dedup();
                v
            })
            .collect();
        let lo: f64 = bp.iter().map(|b| b[0]).sum();
        let hi: f64 = bp.iter().map(|b| b[b.len() - 1]).sum();
        let tau = rng.gen_range(lo..hi);
        let p = Partition::with_budget(bp, Some(tau), 1 << 20).unwrap();
        let keys: Vec<_> = p.keys().collect();
        let cell = p.cell(keys[rng.gen_range(0..keys.len())]).unwrap();
        if cell.halfspaces().len() > 2 * d {
            sliced += 1;
        }
        let g: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = precompute_cell_lambda(cell.halfspaces(), &g, &SimplexOptions::default())
            .unwrap()
            .expect("bounded cell")
            .c;
        let by_lp = multiplier_lp(&cell, &g).expect("bounded cell");
        let by_support = -support_function(&cell, &g).expect("bounded cell");
        let by_vertices = -cell
            .vertices()
            .unwrap()
            .iter()
            .map(|q| q.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        for (name, v) in [("multiplier LP", by_lp), ("support LP", by_support), ("vertices", by_vertices)] {
            let e = (c - v).abs();
            worst = worst.max(e);
            if e > 1e-9 {
                failures.push(format!("cell {i} vs {name}: {c} vs {v}"));
            }
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "5",
        title: "per-cell multiplier constant",
        pass: failures.is_empty(),
        detail: format!(
            "50 cells ({sliced} sliced), worst absolute difference {worst:.3e} {}",
            failures.join(", ")
        ),
        elapsed,
    }
}

// ---------------------------------------------------------------- criterion 7

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut pass = true;
    for d in [3, 4] {
        let row = bench_row(d, 4096, 5, 0).unwrap();
        let ok = matches!(row.ss_seconds, Some(ss) if row.dcg_seconds <= ss) && row.objectives_agree == Some(true);
        pass &= ok;
        notes.push(format!(
            "d={d} k=4096: DCG {:.4}s, SS {}",
            row.dcg_seconds,
            row.ss_seconds.map_or("budget".into(), |s| format!("{s:.4}s"))
        ));
    }
    let row = bench_row(4, 65536, 5, 0).unwrap();
    let ok = row.ss_seconds.is_none() && row.dcg_objective.is_finite();
    pass &= ok;
    notes.push(format!(
        "d=4 k=65536: DCG {:.4}s (bound {:.6}), SS {}",
        row.dcg_seconds,
        row.dcg_objective,
        row.ss_seconds.map_or("budget".into(), |s| format!("{s:.4}s"))
    ));
    let elapsed = start.elapsed();
    Outcome {
        id: "7",
        title: "benchmark trend",
        pass: pass && elapsed < Duration::from_secs(600),
        detail: notes.join("; "),
        elapsed,
    }
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let slab = Slab::new(0, 0.0, 0.5);
    let f = TestFunction::slab_indicator("half", slab, Sense::Upper, 0.0);
    let mut notes = Vec::new();
    let mut pass = true;
    // (name, sampler, true P[X <= 0.5])
    let cases: [(&str, fn(&mut ChaCha8Rng) -> f64, f64); 2] = [
        ("uniform", |r| r.gen::<f64>(), 0.5),
        ("triangular", |r| r.gen::<f64>().sqrt(), 0.25),
    ];
    for (name, draw, truth) in cases {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut covered = 0;
        for trial in 0..200u64 {
            let rows: Vec<Vec<f64>> = (0..1000).map(|_| vec![draw(&mut rng)]).collect();
            let s = SampleSet::new(rows, name).unwrap();
            let b = bootstrap_integral_bounds(&s, &f, 0.95, 1000, trial).unwrap();
            if b.lower <= truth && truth <= b.upper {
                covered += 1;
            }
        }
        let rate = covered as f64 / 200.0;
        pass &= (0.90..=1.0).contains(&rate);
        notes.push(format!("{name} {rate:.3}"));
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "8",
        title: "bootstrap coverage",
        pass: pass && elapsed < Duration::from_secs(120),
        detail: format!("coverage over 200 trials: {}", notes.join(", ")),
        elapsed,
    }
}

// ---------------------------------------------------------------- criterion 9

fn criterion_9() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: String = (0..400)
        .map(|_| format!("{},{}\n", rng.gen::<f64>(), rng.gen::<f64>().powi(2)))
        .collect();
    std::fs::write(dir.path().join("s.csv"), format!("x0,x1\n{rows}")).unwrap();
    let config = r#"{
        "schema": 1,
        "dimension": 2,
        "breakpoints": [[0, 0.25, 0.5, 0.75, 1], [0, 0.5, 1]],
        "risk": {"kind": "cvar_hinge", "tau": 1.2},
        "test_functions": [
            {"id": "a", "kind": "slab_indicator", "slab": {"axis": 0, "lower": 0.75, "upper": 1},
             "bound": {"bootstrap": {"samples": "s.csv", "replicates": 500}}},
            {"id": "b", "kind": "slab_indicator", "slab": {"axis": 1, "lower": 0.5, "upper": 1},
             "bound": {"bootstrap": {"samples": "s.csv", "replicates": 500}}},
            {"id": "m", "kind": "slab_affine", "coefficients": [1, 1], "offset": 0,
             "sense": "upper", "bound": 0.9}
        ],
        "seed": 42
    }"#;
    let path = dir.path().join("model.json");
    std::fs::write(&path, config).unwrap();
    let run = RunOptions::default();
    let reference = cmd_bound(&path, &run).unwrap().machine_json();
    let mut identical = true;
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        for _ in 0..2 {
            let again = pool.install(|| cmd_bound(&path, &run).unwrap().machine_json());
            identical &= again == reference;
        }
    }
    let elapsed = start.elapsed();
    Outcome {
        id: "9",
        title: "deterministic machine report",
        pass: identical,
        detail: format!("7 runs on 1, 2 and 4 threads, {} bytes, identical: {identical}", reference.len()),
        elapsed,
    }
}

#[test]
fn acceptance() {
    let models = instances();
    let mut outcomes = criterion_1();
    outcomes.push(criterion_2(&models));
    outcomes.push(criterion_3(&models));
    outcomes.push(criterion_4());
    outcomes.push(criterion_5());
    outcomes.push(criterion_6(&models));
    outcomes.push(criterion_7());
    outcomes.push(criterion_8());
    outcomes.push(criterion_9());
    for o in &outcomes {
        let known = KNOWN_FAILURES.contains(&o.id);
        let verdict = match (o.pass, known) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        println!(
            "criterion {:<3} {:<12} {:<44} {:>8.2}s  {}",
            o.id,
            verdict,
            o.title,
            o.elapsed.as_secs_f64(),
            o.detail
        );
    }
    for o in &outcomes {
        if KNOWN_FAILURES.contains(&o.id) {
            assert!(!o.pass, "criterion {} now passes; update KNOWN_FAILURES", o.id);
        } else {
            assert!(o.pass, "criterion {} failed: {}", o.id, o.detail);
        }
    }
}
