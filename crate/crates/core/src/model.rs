//! A validated bounding problem: partition, constrained test functions and
//! the risk functional.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Partition;
use crate::lp::VarBound;
use crate::test_functions::{RiskFunctional, Sense, TestFunction};

/// Breakpoint matching tolerance, relative to the breakpoint magnitude.
const ENDPOINT_TOL: f64 = 1e-12;

/// One dual variable: the multiplier of a single integral constraint written
/// as `∫ sign * f dF <= rhs` (or `=` when free).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multiplier {
    pub name: String,
    /// Index into [`Model::tests`].
    pub test: usize,
    pub sign: f64,
    pub rhs: f64,
    pub bound: VarBound,
}

pub struct Model {
    partition: Partition,
    tests: Vec<TestFunction>,
    risk: RiskFunctional,
    multipliers: Vec<Multiplier>,
}

impl Model {
    pub fn new(partition: Partition, tests: Vec<TestFunction>, risk: RiskFunctional) -> Result<Self> {
        if !risk.tau.is_finite() {
            return Err(Error::input("tau must be finite"));
        }
        if partition.tau() != Some(risk.tau) {
            return Err(Error::input(format!(
                "partition is sliced at {:?} but the risk threshold is {}",
                partition.tau(),
                risk.tau
            )));
        }
        let n = partition.dimension();
        let mut seen = std::collections::HashSet::new();
        let mut multipliers = Vec::with_capacity(tests.len());
        for (i, t) in tests.iter().enumerate() {
            t.check_dimension(n)?;
            if let Some(slab) = &t.slab {
                let bp = &partition.breakpoints()[slab.axis];
                for end in [slab.lower, slab.upper] {
                    if !bp.iter().any(|b| same_point(*b, end)) {
                        return Err(Error::input(format!(
                            "test function `{}`: slab endpoint {end} is not a breakpoint of axis {}",
                            t.id, slab.axis
                        )));
                    }
                }
            }
            let (sign, bound, tag) = match t.sense {
                Sense::Upper => (1.0, VarBound::NonNegative, "upper"),
                Sense::Lower => (-1.0, VarBound::NonNegative, "lower"),
                Sense::Equality => (1.0, VarBound::Free, "eq"),
            };
            let name = format!("{}:{tag}", t.id);
            if !seen.insert(name.clone()) {
                return Err(Error::input(format!("duplicate constraint `{name}`")));
            }
            multipliers.push(Multiplier {
                name,
                test: i,
                sign,
                rhs: sign * t.bound,
                bound,
            });
        }
        Ok(Model {
            partition,
            tests,
            risk,
            multipliers,
        })
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn tests(&self) -> &[TestFunction] {
        &self.tests
    }

    pub fn risk(&self) -> RiskFunctional {
        self.risk
    }

    pub fn dimension(&self) -> usize {
        self.partition.dimension()
    }

    pub fn multipliers(&self) -> &[Multiplier] {
        &self.multipliers
    }
}

fn same_point(a: f64, b: f64) -> bool {
    if a.is_infinite() || b.is_infinite() {
        return a == b;
    }
    (a - b).abs() <= ENDPOINT_TOL * (1.0 + a.abs().max(b.abs()))
}
