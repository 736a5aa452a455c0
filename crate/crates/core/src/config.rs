//! JSON model configuration.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "dimension": 1,
//!   "breakpoints": [[0, 1]],
//!   "risk": {"kind": "var_indicator", "tau": 1},
//!   "test_functions": [
//!     {"id": "mean", "kind": "slab_affine", "coefficients": [1], "offset": 1,
//!      "sense": "equality", "bound": 1.5555555555555556}
//!   ]
//! }
//! ```
//!
//! A bound is a number (used with `sense`), an interval `{"lower", "upper"}`,
//! or `{"bootstrap": {"samples": "file.csv", "level", "replicates", "seed"}}`
//! estimated from data. Intervals become one upper and one lower constraint.
//! Breakpoints may be `"-inf"` / `"inf"` at the ends of an axis.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_io::{bootstrap_integral_bounds, load_samples_csv, IntegralBound, SampleSet};
use crate::dual_builder::{ReductionMode, SolveMethod, SolverOptions};
use crate::error::{Error, Result};
use crate::geometry::{Partition, DEFAULT_CELL_BUDGET};
use crate::model::Model;
use crate::oracle::GAP_TOL;
use crate::test_functions::{RiskFunctional, RiskKind, Sense, Slab, TestFunction, TestFunctionKind};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Breakpoint {
    Value(f64),
    Named(NamedBreakpoint),
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
pub enum NamedBreakpoint {
    #[serde(rename = "-inf")]
    NegInf,
    #[serde(rename = "inf", alias = "+inf")]
    Inf,
}

impl Breakpoint {
    fn value(self) -> f64 {
        match self {
            Breakpoint::Value(v) => v,
            Breakpoint::Named(NamedBreakpoint::NegInf) => f64::NEG_INFINITY,
            Breakpoint::Named(NamedBreakpoint::Inf) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RiskConfig {
    pub kind: RiskKind,
    pub tau: f64,
}

fn default_level() -> f64 {
    0.95
}

fn default_replicates() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSpec {
    /// CSV path, relative to the configuration file.
    pub samples: PathBuf,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum BoundSpec {
    Literal(f64),
    Interval { lower: f64, upper: f64 },
    Bootstrap { bootstrap: BootstrapSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SlabConfig {
    pub axis: usize,
    pub lower: Breakpoint,
    pub upper: Breakpoint,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
pub struct TestFunctionConfig {
    pub id: String,
    #[serde(flatten)]
    pub kind: TestFunctionKind,
    #[serde(default)]
    pub slab: Option<SlabConfig>,
    #[serde(default)]
    pub sense: Option<Sense>,
    pub bound: BoundSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub mode: ReductionMode,
    #[serde(default)]
    pub method: SolveMethod,
    pub feasibility_tol: Option<f64>,
    pub reduced_cost_tol: Option<f64>,
    pub pivot_tol: Option<f64>,
    pub bland_after: Option<usize>,
    pub refactor_every: Option<usize>,
    pub max_iterations: Option<usize>,
    pub dense_max_dim: Option<usize>,
    pub cell_budget: Option<usize>,
    pub pricing_batch: Option<usize>,
}

fn default_gap_tol() -> f64 {
    GAP_TOL
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    /// Extra candidate points, attributed to every cell containing them.
    #[serde(default)]
    pub points: Vec<Vec<f64>>,
    /// Use only `points` instead of adding them to the vertex grid.
    #[serde(default)]
    pub replace_grid: bool,
    /// Clipping radius for unbounded cells.
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            points: Vec::new(),
            replace_grid: false,
            radius: None,
            gap_tol: GAP_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub schema: u32,
    pub dimension: usize,
    pub breakpoints: Vec<Vec<Breakpoint>>,
    pub risk: RiskConfig,
    #[serde(default)]
    pub test_functions: Vec<TestFunctionConfig>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub oracle: OracleConfig,
    /// Base seed for bootstrap entries without their own seed.
    #[serde(default)]
    pub seed: Option<u64>,
}

/// A parsed configuration with the data needed to reproduce a run.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ModelConfig,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the configuration bytes.
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn load_config(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&bytes, base_dir)
}

pub fn parse_config(bytes: &[u8], base_dir: PathBuf) -> Result<LoadedConfig> {
    let config: ModelConfig = serde_json::from_slice(bytes)?;
    if config.schema != SCHEMA_VERSION {
        return Err(Error::input(format!(
            "unsupported schema {} (expected {SCHEMA_VERSION})",
            config.schema
        )));
    }
    if config.breakpoints.len() != config.dimension {
        return Err(Error::input(format!(
            "dimension is {} but {} breakpoint lists are given",
            config.dimension,
            config.breakpoints.len()
        )));
    }
    for t in &config.test_functions {
        if let BoundSpec::Bootstrap { bootstrap } = &t.bound {
            let p = base_dir.join(&bootstrap.samples);
            if !p.is_file() {
                return Err(Error::input(format!(
                    "test function `{}`: sample file {} not found",
                    t.id,
                    p.display()
                )));
            }
        }
    }
    Ok(LoadedConfig {
        config,
        base_dir,
        sha256: sha256_hex(bytes),
    })
}

impl LoadedConfig {
    pub fn breakpoints(&self) -> Vec<Vec<f64>> {
        self.config
            .breakpoints
            .iter()
            .map(|axis| axis.iter().map(|b| b.value()).collect())
            .collect()
    }

    pub fn risk(&self) -> RiskFunctional {
        RiskFunctional {
            kind: self.config.risk.kind,
            tau: self.config.risk.tau,
        }
    }

    pub fn solver_options(&self, budget_cells: Option<usize>) -> SolverOptions {
        let s = &self.config.solver;
        let mut o = SolverOptions {
            mode: s.mode,
            method: s.method,
            ..SolverOptions::default()
        };
        let x = &mut o.simplex;
        x.feasibility_tol = s.feasibility_tol.unwrap_or(x.feasibility_tol);
        x.reduced_cost_tol = s.reduced_cost_tol.unwrap_or(x.reduced_cost_tol);
        x.pivot_tol = s.pivot_tol.unwrap_or(x.pivot_tol);
        x.bland_after = s.bland_after.unwrap_or(x.bland_after);
        x.refactor_every = s.refactor_every.unwrap_or(x.refactor_every);
        x.max_iterations = s.max_iterations.unwrap_or(x.max_iterations);
        x.dense_max_dim = s.dense_max_dim.unwrap_or(x.dense_max_dim);
        o.cell_budget = budget_cells.or(s.cell_budget).unwrap_or(DEFAULT_CELL_BUDGET);
        o.pricing_batch = s.pricing_batch.unwrap_or(o.pricing_batch);
        o
    }

    /// Resolves every bound, estimating bootstrap entries from their sample
    /// files. Entry `i` without its own seed uses `seed + i`.
    pub fn estimate_bounds(&self, seed: u64) -> Result<Vec<IntegralBound>> {
        let n = self.config.dimension;
        let mut cache: HashMap<PathBuf, SampleSet> = HashMap::new();
        let mut out = Vec::new();
        for (i, t) in self.config.test_functions.iter().enumerate() {
            let BoundSpec::Bootstrap { bootstrap } = &t.bound else {
                continue;
            };
            let path = self.base_dir.join(&bootstrap.samples);
            if !cache.contains_key(&path) {
                cache.insert(path.clone(), load_samples_csv(&path)?);
            }
            let samples = &cache[&path];
            if samples.dimension() != n {
                return Err(Error::input(format!(
                    "{}: samples have {} columns, model dimension is {n}",
                    path.display(),
                    samples.dimension()
                )));
            }
            let f = self.function(t, Sense::Upper, 0.0);
            let s = bootstrap.seed.unwrap_or(seed.wrapping_add(i as u64));
            out.push(bootstrap_integral_bounds(samples, &f, bootstrap.level, bootstrap.replicates, s)?);
        }
        Ok(out)
    }

    fn function(&self, t: &TestFunctionConfig, sense: Sense, bound: f64) -> TestFunction {
        TestFunction {
            id: t.id.clone(),
            kind: t.kind.clone(),
            slab: t.slab.map(|s| Slab::new(s.axis, s.lower.value(), s.upper.value())),
            sense,
            bound,
        }
    }

    /// Builds the model, using `estimated` for bootstrap bounds (in the order
    /// [`LoadedConfig::estimate_bounds`] returns them).
    pub fn build_model(&self, estimated: &[IntegralBound], cell_budget: usize) -> Result<Model> {
        let mut tests = Vec::new();
        let mut est = estimated.iter();
        for t in &self.config.test_functions {
            match &t.bound {
                BoundSpec::Literal(b) => {
                    let sense = t.sense.ok_or_else(|| {
                        Error::input(format!("test function `{}`: a numeric bound needs a sense", t.id))
                    })?;
                    tests.push(self.function(t, sense, *b));
                }
                BoundSpec::Interval { lower, upper } => {
                    push_interval(&mut tests, self.function(t, Sense::Upper, 0.0), *lower, *upper)?;
                }
                BoundSpec::Bootstrap { .. } => {
                    let b = est
                        .next()
                        .ok_or_else(|| Error::input(format!("test function `{}`: bound not estimated", t.id)))?;
                    push_interval(&mut tests, self.function(t, Sense::Upper, 0.0), b.lower, b.upper)?;
                }
            }
        }
        let risk = self.risk();
        let partition = Partition::with_budget(self.breakpoints(), Some(risk.tau), cell_budget)?;
        Model::new(partition, tests, risk)
    }
}

fn push_interval(tests: &mut Vec<TestFunction>, f: TestFunction, lower: f64, upper: f64) -> Result<()> {
    if !(lower <= upper) {
        return Err(Error::input(format!("test function `{}`: lower bound exceeds upper bound", f.id)));
    }
    tests.push(TestFunction {
        sense: Sense::Upper,
        bound: upper,
        ..f.clone()
    });
    tests.push(TestFunction {
        sense: Sense::Lower,
        bound: lower,
        ..f
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{
        "schema": 1,
        "dimension": 1,
        "breakpoints": [[0, 1]],
        "risk": {"kind": "var_indicator", "tau": 1},
        "test_functions": [
            {"id": "m", "kind": "slab_affine", "coefficients": [1], "offset": 1,
             "sense": "equality", "bound": 1.5555555555555556}
        ]
    }"#;

    #[test]
    fn parses_literal_bounds() {
        let c = parse_config(LINE.as_bytes(), PathBuf::new()).unwrap();
        let m = c.build_model(&[], 1000).unwrap();
        assert_eq!(m.tests().len(), 1);
        assert_eq!(m.tests()[0].sense, Sense::Equality);
        assert_eq!(c.sha256.len(), 64);
    }

    #[test]
    fn intervals_and_infinite_breakpoints() {
        let text = r#"{
            "schema": 1, "dimension": 2,
            "breakpoints": [["-inf", 0, 1], [0, 1, "inf"]],
            "risk": {"kind": "cvar_hinge", "tau": 1.5},
            "test_functions": [
                {"id": "a", "kind": "slab_indicator", "slab": {"axis": 1, "lower": 1, "upper": "inf"},
                 "bound": {"lower": 0.1, "upper": 0.2}}
            ],
            "solver": {"mode": "vertex", "method": "dense", "pricing_batch": 4}
        }"#;
        let c = parse_config(text.as_bytes(), PathBuf::new()).unwrap();
        assert_eq!(c.breakpoints()[0][0], f64::NEG_INFINITY);
        assert_eq!(c.breakpoints()[1][2], f64::INFINITY);
        let m = c.build_model(&[], 1000).unwrap();
        assert_eq!(m.multipliers().len(), 2);
        let o = c.solver_options(Some(77));
        assert_eq!((o.mode, o.method, o.cell_budget, o.pricing_batch), (ReductionMode::Vertex, SolveMethod::Dense, 77, 4));
    }

    #[test]
    fn rejects_bad_documents() {
        let wrong_schema = LINE.replace("\"schema\": 1", "\"schema\": 2");
        assert!(parse_config(wrong_schema.as_bytes(), PathBuf::new()).is_err());
        let wrong_dim = LINE.replace("\"dimension\": 1", "\"dimension\": 2");
        assert!(parse_config(wrong_dim.as_bytes(), PathBuf::new()).is_err());
        let no_sense = LINE.replace("\"sense\": \"equality\",", "");
        let c = parse_config(no_sense.as_bytes(), PathBuf::new()).unwrap();
        assert!(c.build_model(&[], 1000).is_err());
        let missing = LINE.replace(
            "\"bound\": 1.5555555555555556",
            "\"bound\": {\"bootstrap\": {\"samples\": \"nope.csv\"}}",
        );
        assert!(parse_config(missing.as_bytes(), PathBuf::new()).is_err());
    }

    #[test]
    fn bootstrap_bounds_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let rows: String = (0..200).map(|i| format!("{}\n", (i % 10) as f64 / 10.0)).collect();
        std::fs::write(dir.path().join("s.csv"), format!("x\n{rows}")).unwrap();
        let text = r#"{
            "schema": 1, "dimension": 1, "breakpoints": [[0, 0.5, 1]],
            "risk": {"kind": "var_indicator", "tau": 0.9},
            "test_functions": [
                {"id": "lo", "kind": "slab_indicator", "slab": {"axis": 0, "lower": 0, "upper": 0.5},
                 "bound": {"bootstrap": {"samples": "s.csv", "replicates": 200}}}
            ]
        }"#;
        let path = dir.path().join("c.json");
        std::fs::write(&path, text).unwrap();
        let c = load_config(&path).unwrap();
        let est = c.estimate_bounds(3).unwrap();
        assert_eq!(est.len(), 1);
        // closed slab: six of every ten samples fall in [0, 0.5]
        assert!(est[0].lower < 0.6 && est[0].upper > 0.6);
        assert_eq!(est, c.estimate_bounds(3).unwrap());
        let m = c.build_model(&est, 1000).unwrap();
        assert_eq!(m.multipliers().len(), 2);
    }
}
