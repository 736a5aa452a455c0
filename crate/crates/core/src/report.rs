//! Run reports: a deterministic machine-readable section, timings kept apart
//! from it, and text/CSV renderings.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::data_io::IntegralBound;
use crate::dual_builder::{BoundResult, BoundStatus};
use crate::error::{Error, Result};
use crate::lp::Status;
use crate::test_functions::RiskFunctional;

pub const TOOL_NAME: &str = "riskdual";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit code when verification on the full vertex grid misses the gap
/// tolerance.
pub const EXIT_VERIFY_FAILED: i32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Text,
    Json,
    Csv,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(OutputFormat::Text),
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::input(format!("unknown format `{other}`"))),
        }
    }
}

/// Writes non-finite floats as the strings `"inf"`, `"-inf"` or `"nan"`
/// instead of `null`.
pub fn extended_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn fmt_num(v: f64) -> String {
    if v != 0.0 && v.abs() < 1e-4 {
        format!("{v:e}")
    } else if v.is_finite() {
        format!("{v}")
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Verification {
    #[serde(serialize_with = "extended_f64")]
    pub primal: f64,
    #[serde(serialize_with = "extended_f64")]
    pub dual: f64,
    #[serde(serialize_with = "extended_f64")]
    pub gap: f64,
    #[serde(serialize_with = "extended_f64")]
    pub relative_gap: f64,
    pub gap_tol: f64,
    pub pass: bool,
    pub grid_points: usize,
    pub primal_status: Status,
    /// The grid was user supplied or the support is unbounded, so the primal
    /// value is only a lower bound and a gap is not a failure of the solver.
    pub lower_bound_only: bool,
}

/// Everything in this section is a pure function of the configuration, the
/// seed and the tool version.
#[derive(Debug, Clone, Serialize)]
pub struct MachineReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub dimension: usize,
    pub risk: RiskFunctional,
    pub estimated_bounds: Vec<IntegralBound>,
    pub result: Option<BoundResult>,
    pub verification: Option<Verification>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timing {
    pub wall_seconds: f64,
    pub solve_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub machine: MachineReport,
    pub timing: Timing,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn machine_json(&self) -> String {
        serde_json::to_string_pretty(&self.machine).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn exit_code(&self) -> i32 {
        if let Some(r) = &self.machine.result {
            if r.status != BoundStatus::Optimal {
                return r.status.exit_code();
            }
        }
        match &self.machine.verification {
            Some(v) if !v.pass && !v.lower_bound_only => EXIT_VERIFY_FAILED,
            _ => 0,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.to_text(),
            OutputFormat::Json => self.to_json() + "\n",
            OutputFormat::Csv => self.to_csv(),
        }
    }

    pub fn to_text(&self) -> String {
        let m = &self.machine;
        let mut s = String::new();
        let _ = writeln!(s, "{} {} {}", m.tool, m.version, m.command);
        let _ = writeln!(s, "config sha256: {}", m.config_sha256);
        let _ = writeln!(s, "seed: {}", m.seed);
        let _ = writeln!(s, "risk: {} at tau = {}, dimension {}", m.risk.kind, m.risk.tau, m.dimension);
        if !m.estimated_bounds.is_empty() {
            let _ = writeln!(s, "\nestimated bounds:");
            for b in &m.estimated_bounds {
                let _ = writeln!(
                    s,
                    "  {:<20} [{}, {}]  level {}, {} replicates",
                    b.function, b.lower, b.upper, b.level, b.replicates
                );
            }
        }
        if let Some(r) = &m.result {
            let _ = writeln!(s, "\nstatus: {:?}", r.status);
            let _ = writeln!(s, "bound: {}", fmt_num(r.bound));
            if let Some(cell) = &r.unbounded_cell {
                let _ = writeln!(s, "risk is unbounded on cell {cell}; no finite certificate exists");
            }
            if r.status == BoundStatus::Optimal {
                let _ = writeln!(s, "mass multiplier: {}", r.mass_dual);
                let _ = writeln!(s, "\nconstraints:");
                let _ = writeln!(s, "  {:<24} {:>14} {:>14} {:>14}  state", "name", "level", "integral", "dual");
                for c in &r.constraints {
                    let _ = writeln!(
                        s,
                        "  {:<24} {:>14.8} {:>14.8} {:>14.8}  {}",
                        c.name,
                        c.level,
                        c.integral,
                        c.dual,
                        if c.binding { "binding" } else { "slack" }
                    );
                }
                let _ = writeln!(s, "\nworst-case mass on {} cell(s)", r.support.len());
            }
            let _ = writeln!(
                s,
                "iterations: {}, columns generated: {}, master columns: {}",
                r.iterations, r.columns_generated, r.master_columns
            );
        }
        if let Some(v) = &m.verification {
            let _ = writeln!(s, "\nverification on {} grid points:", v.grid_points);
            let _ = writeln!(s, "  primal {} ({:?})", fmt_num(v.primal), v.primal_status);
            let _ = writeln!(s, "  dual   {}", fmt_num(v.dual));
            let _ = writeln!(s, "  gap    {} (relative {})", fmt_num(v.gap), fmt_num(v.relative_gap));
            let verdict = if v.pass { "pass" } else { "fail" };
            let _ = writeln!(s, "  {verdict} at tolerance {:e}", v.gap_tol);
            if v.lower_bound_only {
                let _ = writeln!(s, "  the grid is user supplied or clipped, so the primal value is a lower bound only");
            }
        }
        let _ = writeln!(
            s,
            "\nwall time {:.3} s (solve {:.3} s)",
            self.timing.wall_seconds, self.timing.solve_seconds
        );
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        let _ = writeln!(s, "\nmachine:\n{}", self.machine_json());
        s
    }

    /// Constraint table, or the estimated bounds when no bound was computed.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        match &self.machine.result {
            Some(r) => {
                let _ = w.write_record(["name", "level", "integral", "dual", "binding"]);
                for c in &r.constraints {
                    let _ = w.write_record([
                        c.name.clone(),
                        fmt_num(c.level),
                        fmt_num(c.integral),
                        fmt_num(c.dual),
                        c.binding.to_string(),
                    ]);
                }
                let _ = w.write_record(["bound".to_string(), fmt_num(r.bound), String::new(), String::new(), String::new()]);
            }
            None => {
                let _ = w.write_record(["function", "lower", "upper", "level", "replicates"]);
                for b in &self.machine.estimated_bounds {
                    let _ = w.write_record([
                        b.function.clone(),
                        fmt_num(b.lower),
                        fmt_num(b.upper),
                        b.level.to_string(),
                        b.replicates.to_string(),
                    ]);
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub d: usize,
    pub k: usize,
    pub cells: usize,
    pub dcg_seconds: f64,
    /// `None` when the dense solver's budget rejected the instance.
    pub ss_seconds: Option<f64>,
    pub ratio: Option<f64>,
    pub dcg_objective: f64,
    pub ss_objective: Option<f64>,
    pub objectives_agree: Option<bool>,
    pub columns_generated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchTable {
    pub runs: usize,
    pub rows: Vec<BenchRow>,
}

impl BenchTable {
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => serde_json::to_string_pretty(self).expect("table serializes") + "\n",
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Text => self.to_text(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "median of {} run(s); times in seconds", self.runs);
        let _ = writeln!(
            s,
            "{:>2} {:>8} {:>8} {:>11} {:>11} {:>9} {:>8}",
            "d", "k", "cells", "DCG", "SS", "DCG/SS", "agree"
        );
        for r in &self.rows {
            let ss = r.ss_seconds.map_or("budget".to_string(), |t| format!("{t:.5}"));
            let ratio = r.ratio.map_or("-".to_string(), |x| format!("{x:.3}"));
            let agree = match r.objectives_agree {
                Some(true) => "yes",
                Some(false) => "NO",
                None => "-",
            };
            let _ = writeln!(
                s,
                "{:>2} {:>8} {:>8} {:>11.5} {:>11} {:>9} {:>8}",
                r.d, r.k, r.cells, r.dcg_seconds, ss, ratio, agree
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let _ = w.write_record([
            "d",
            "k",
            "cells",
            "dcg_seconds",
            "ss_seconds",
            "ratio",
            "dcg_objective",
            "ss_objective",
            "objectives_agree",
            "columns_generated",
        ]);
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let _ = w.write_record([
                r.d.to_string(),
                r.k.to_string(),
                r.cells.to_string(),
                r.dcg_seconds.to_string(),
                r.ss_seconds.map_or("budget".to_string(), |x| x.to_string()),
                opt(r.ratio),
                r.dcg_objective.to_string(),
                opt(r.ss_objective),
                r.objectives_agree.map_or(String::new(), |b| b.to_string()),
                r.columns_generated.to_string(),
            ]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}
