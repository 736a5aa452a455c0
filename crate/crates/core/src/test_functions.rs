//! Test functions and risk functionals, with their affine restrictions to
//! partition cells.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data_io::SampleSet;
use crate::error::{Error, Result};
use crate::geometry::{tau_tolerance, Cell};

/// Tolerance for deciding whether a cell lies inside a slab.
const SLAB_TOL: f64 = 1e-12;

/// `x -> <gradient, x> + constant`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Affine {
    pub gradient: Vec<f64>,
    pub constant: f64,
}

impl Affine {
    pub fn zero(dim: usize) -> Self {
        Affine::constant(dim, 0.0)
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Affine {
            gradient: vec![0.0; dim],
            constant: c,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        crate::geometry::dot(&self.gradient, x) + self.constant
    }

    pub fn is_constant(&self) -> bool {
        self.gradient.iter().all(|g| *g == 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.is_constant() && self.constant == 0.0
    }
}

/// Functions that are affine on every cell of a compatible partition.
pub trait PiecewiseAffine {
    /// Affine data `(v, c)` with `f(x) = <v, x> + c` on the cell.
    fn restrict_to_cell(&self, cell: &Cell) -> Result<Affine>;

    /// Pointwise value; slabs and half-spaces are closed.
    fn evaluate(&self, x: &[f64]) -> f64;
}

/// Closed interval `[lower, upper]` on one coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Slab {
    pub axis: usize,
    pub lower: f64,
    pub upper: f64,
}

impl Slab {
    pub fn new(axis: usize, lower: f64, upper: f64) -> Self {
        Slab { axis, lower, upper }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let v = x[self.axis];
        v >= self.lower && v <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `∫ f dF <= bound`
    Upper,
    /// `∫ f dF >= bound`
    Lower,
    /// `∫ f dF = bound`
    Equality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunctionKind {
    SlabIndicator,
    /// `1_S(x) * (<coefficients, x> + offset)`
    SlabAffine { coefficients: Vec<f64>, offset: f64 },
}

/// A test function with the bound on its integral.
#[derive(Debug, Clone, PartialEq)]
pub struct TestFunction {
    pub id: String,
    pub kind: TestFunctionKind,
    /// `None` means the function is supported on the whole space.
    pub slab: Option<Slab>,
    pub sense: Sense,
    pub bound: f64,
}

impl TestFunction {
    pub fn slab_indicator(id: impl Into<String>, slab: Slab, sense: Sense, bound: f64) -> Self {
        TestFunction {
            id: id.into(),
            kind: TestFunctionKind::SlabIndicator,
            slab: Some(slab),
            sense,
            bound,
        }
    }

    pub fn slab_affine(
        id: impl Into<String>,
        slab: Option<Slab>,
        coefficients: Vec<f64>,
        offset: f64,
        sense: Sense,
        bound: f64,
    ) -> Self {
        TestFunction {
            id: id.into(),
            kind: TestFunctionKind::SlabAffine { coefficients, offset },
            slab,
            sense,
            bound,
        }
    }

    pub fn check_dimension(&self, n: usize) -> Result<()> {
        if let Some(s) = &self.slab {
            if s.axis >= n {
                return Err(Error::input(format!(
                    "test function `{}`: axis {} out of range for dimension {n}",
                    self.id, s.axis
                )));
            }
            if !(s.lower < s.upper) {
                return Err(Error::input(format!("test function `{}`: empty slab", self.id)));
            }
        } else if self.kind == TestFunctionKind::SlabIndicator {
            return Err(Error::input(format!("slab indicator `{}` needs a slab", self.id)));
        }
        if let TestFunctionKind::SlabAffine { coefficients, .. } = &self.kind {
            if coefficients.len() != n {
                return Err(Error::input(format!(
                    "test function `{}`: {} coefficients for dimension {n}",
                    self.id,
                    coefficients.len()
                )));
            }
        }
        if !self.bound.is_finite() {
            return Err(Error::input(format!("test function `{}`: bound must be finite", self.id)));
        }
        Ok(())
    }

    /// Value on the support of the slab.
    fn inner(&self, dim: usize) -> Affine {
        match &self.kind {
            TestFunctionKind::SlabIndicator => Affine::constant(dim, 1.0),
            TestFunctionKind::SlabAffine { coefficients, offset } => Affine {
                gradient: coefficients.clone(),
                constant: *offset,
            },
        }
    }

    /// Whether the function can be nonconstant somewhere.
    pub fn is_piecewise_constant(&self) -> bool {
        match &self.kind {
            TestFunctionKind::SlabIndicator => true,
            TestFunctionKind::SlabAffine { coefficients, .. } => coefficients.iter().all(|c| *c == 0.0),
        }
    }
}

impl PiecewiseAffine for TestFunction {
    fn restrict_to_cell(&self, cell: &Cell) -> Result<Affine> {
        let n = cell.dimension();
        let Some(slab) = &self.slab else {
            return Ok(self.inner(n));
        };
        let lo = cell.lower()[slab.axis];
        let hi = cell.upper()[slab.axis];
        if lo >= slab.lower - SLAB_TOL && hi <= slab.upper + SLAB_TOL {
            Ok(self.inner(n))
        } else if hi <= slab.lower + SLAB_TOL || lo >= slab.upper - SLAB_TOL {
            Ok(Affine::zero(n))
        } else {
            Err(Error::PartitionIncompatible {
                function: self.id.clone(),
                cell: cell.key().to_string(),
                reason: format!(
                    "cell spans [{lo}, {hi}] on axis {}, slab is [{}, {}]",
                    slab.axis, slab.lower, slab.upper
                ),
            })
        }
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        match &self.slab {
            Some(s) if !s.contains(x) => 0.0,
            _ => self.inner(x.len()).eval(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    /// `1{sum(x) >= tau}`
    VarIndicator,
    /// `max(0, sum(x) - tau)`
    CvarHinge,
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RiskKind::VarIndicator => f.write_str("var_indicator"),
            RiskKind::CvarHinge => f.write_str("cvar_hinge"),
        }
    }
}

/// The objective `h` whose worst-case expectation is bounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskFunctional {
    pub kind: RiskKind,
    pub tau: f64,
}

impl RiskFunctional {
    pub fn var(tau: f64) -> Self {
        RiskFunctional {
            kind: RiskKind::VarIndicator,
            tau,
        }
    }

    pub fn cvar(tau: f64) -> Self {
        RiskFunctional {
            kind: RiskKind::CvarHinge,
            tau,
        }
    }

    /// Value at `x` seen from inside `cell`: the cell's affine piece, except
    /// that a cell touching the hyperplane at the top corner of the support
    /// carries the indicator's value 1 on its contact face.
    pub fn value_on_cell(&self, cell: &Cell, x: &[f64]) -> Result<f64> {
        let base = self.restrict_to_cell(cell)?.eval(x);
        if self.kind == RiskKind::VarIndicator && cell.touches_tau() {
            let s: f64 = x.iter().sum();
            if s >= self.tau - 1e-9 * (1.0 + self.tau.abs()) {
                return Ok(1.0);
            }
        }
        Ok(base)
    }
}

impl PiecewiseAffine for RiskFunctional {
    fn restrict_to_cell(&self, cell: &Cell) -> Result<Affine> {
        let n = cell.dimension();
        let (lo, hi) = cell.sum_range();
        let tol = tau_tolerance(self.tau);
        if hi <= self.tau + tol {
            Ok(Affine::zero(n))
        } else if lo >= self.tau - tol {
            Ok(match self.kind {
                RiskKind::VarIndicator => Affine::constant(n, 1.0),
                RiskKind::CvarHinge => Affine {
                    gradient: vec![1.0; n],
                    constant: -self.tau,
                },
            })
        } else {
            Err(Error::PartitionIncompatible {
                function: self.kind.to_string(),
                cell: cell.key().to_string(),
                reason: format!("sum(x) ranges over [{lo}, {hi}] across tau = {}", self.tau),
            })
        }
    }

    fn evaluate(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().sum();
        match self.kind {
            RiskKind::VarIndicator => {
                if s >= self.tau {
                    1.0
                } else {
                    0.0
                }
            }
            RiskKind::CvarHinge => (s - self.tau).max(0.0),
        }
    }
}

/// Sample mean of `f` over the observations.
pub fn empirical_integral(f: &TestFunction, samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::input("empty sample set"));
    }
    f.check_dimension(samples.dimension())?;
    let total: f64 = samples.rows().iter().map(|x| f.evaluate(x)).sum();
    Ok(total / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_box_partition, CellKey, Slice};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn whole(grid: usize) -> CellKey {
        CellKey { grid, slice: Slice::Whole }
    }

    #[test]
    fn indicator_on_its_slab() {
        let p = build_box_partition(vec![vec![0.0, 0.5, 1.0]; 2], None).unwrap();
        let cell = p.cell(whole(p.grid_index(&[0, 1]))).unwrap();
        let f = TestFunction::slab_indicator("s", Slab::new(0, 0.0, 0.5), Sense::Upper, 0.5);
        assert_eq!(f.restrict_to_cell(&cell).unwrap(), Affine::constant(2, 1.0));
        let g = TestFunction::slab_indicator("t", Slab::new(1, 0.0, 0.5), Sense::Upper, 0.5);
        assert!(g.restrict_to_cell(&cell).unwrap().is_zero());
        let wide = TestFunction::slab_indicator("w", Slab::new(0, 0.25, 0.75), Sense::Upper, 0.5);
        assert!(matches!(
            wide.restrict_to_cell(&cell),
            Err(Error::PartitionIncompatible { .. })
        ));
    }

    #[test]
    fn risk_restrictions() {
        let p = build_box_partition(vec![vec![0.0, 1.0, 2.0]; 2], Some(2.0)).unwrap();
        let top = p.cell(whole(p.grid_index(&[1, 1]))).unwrap();
        let h = RiskFunctional::cvar(2.0);
        assert_eq!(
            h.restrict_to_cell(&top).unwrap(),
            Affine {
                gradient: vec![1.0, 1.0],
                constant: -2.0
            }
        );
        let p = build_box_partition(vec![vec![0.0, 0.5, 1.0]; 2], Some(1.0)).unwrap();
        let low = p.cell(whole(0)).unwrap();
        assert!(RiskFunctional::var(1.0).restrict_to_cell(&low).unwrap().is_zero());
        let unsliced = build_box_partition(vec![vec![0.0, 1.0]; 2], None).unwrap();
        let c = unsliced.cell(whole(0)).unwrap();
        assert!(RiskFunctional::var(1.0).restrict_to_cell(&c).is_err());
    }

    #[test]
    fn pointwise_values() {
        assert_eq!(RiskFunctional::cvar(2.0).evaluate(&[2.0, 2.0]), 2.0);
        assert_eq!(RiskFunctional::var(1.0).evaluate(&[0.4, 0.4]), 0.0);
        assert_eq!(RiskFunctional::var(1.0).evaluate(&[0.5, 0.5]), 1.0);
        let f = TestFunction::slab_affine("a", Some(Slab::new(0, 0.0, 1.0)), vec![1.0, 0.0], 1.0, Sense::Upper, 2.0);
        assert_eq!(f.evaluate(&[0.5, 7.0]), 1.5);
        assert_eq!(f.evaluate(&[1.5, 7.0]), 0.0);
        let ind = TestFunction::slab_indicator("s", Slab::new(0, 0.0, 0.5), Sense::Upper, 1.0);
        assert_eq!(ind.evaluate(&[0.5, 3.0]), 1.0);
        assert_eq!(ind.evaluate(&[0.0, 3.0]), 1.0);
    }

    #[test]
    fn empirical_means() {
        let f = TestFunction::slab_affine("lin", None, vec![1.0], 1.0, Sense::Equality, 0.0);
        let s = SampleSet::new(vec![vec![0.0], vec![1.0]], "t").unwrap();
        assert_eq!(empirical_integral(&f, &s).unwrap(), 1.5);
        let ind = TestFunction::slab_indicator("s", Slab::new(0, 0.0, 0.5), Sense::Upper, 1.0);
        let s = SampleSet::new(vec![vec![0.1], vec![0.2], vec![0.9]], "t").unwrap();
        assert!((empirical_integral(&ind, &s).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empirical_integral_against_known_density() {
        // f(x) = 2/3 (1 + x) on [0, 1]; inverse cdf of F(x) = (2x + x^2) / 3.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..1_000_000)
            .map(|_| {
                let u: f64 = rng.gen();
                vec![-1.0 + (1.0 + 3.0 * u).sqrt()]
            })
            .collect();
        let s = SampleSet::new(rows, "density").unwrap();
        let f = TestFunction::slab_affine("lin", None, vec![1.0], 1.0, Sense::Equality, 0.0);
        let v = empirical_integral(&f, &s).unwrap();
        assert!((v - (1.0 + 5.0 / 9.0)).abs() < 0.01, "{v}");
    }

    #[test]
    fn restriction_matches_pointwise_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let bp = vec![vec![0.0, 0.3, 0.7, 1.0], vec![0.0, 0.5, 1.0]];
        let tau = 0.9;
        let p = build_box_partition(bp.clone(), Some(tau)).unwrap();
        let mut fns: Vec<TestFunction> = Vec::new();
        for (axis, b) in bp.iter().enumerate() {
            for j in 0..b.len() - 1 {
                fns.push(TestFunction::slab_affine(
                    format!("a{axis}{j}"),
                    Some(Slab::new(axis, b[j], b[j + 1])),
                    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                    rng.gen_range(-1.0..1.0),
                    Sense::Upper,
                    1.0,
                ));
            }
        }
        let risks = [RiskFunctional::var(tau), RiskFunctional::cvar(tau)];
        for cell in p.cells(100).unwrap() {
            let verts = cell.vertices().unwrap().to_vec();
            for _ in 0..100 {
                // random interior point: convex combination of vertices
                let w: Vec<f64> = verts.iter().map(|_| rng.gen_range(0.01..1.0)).collect();
                let total: f64 = w.iter().sum();
                let x: Vec<f64> = (0..2)
                    .map(|a| verts.iter().zip(&w).map(|(v, wi)| v[a] * wi).sum::<f64>() / total)
                    .collect();
                for f in &fns {
                    let aff = f.restrict_to_cell(&cell).unwrap();
                    assert!((aff.eval(&x) - f.evaluate(&x)).abs() < 1e-12);
                }
                for h in &risks {
                    let aff = h.restrict_to_cell(&cell).unwrap();
                    let s: f64 = x.iter().sum();
                    if (s - tau).abs() > 1e-9 {
                        assert!((aff.eval(&x) - h.evaluate(&x)).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn slab_indicators_partition_each_axis() {
        let bp = [0.0, 0.2, 0.5, 1.0];
        let fns: Vec<TestFunction> = (0..3)
            .map(|j| TestFunction::slab_indicator(format!("s{j}"), Slab::new(0, bp[j], bp[j + 1]), Sense::Upper, 1.0))
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let x = [rng.gen_range(0.0..1.0)];
            if bp.contains(&x[0]) {
                continue;
            }
            let total: f64 = fns.iter().map(|f| f.evaluate(&x)).sum();
            assert_eq!(total, 1.0);
        }
    }

    #[test]
    fn touching_cell_sees_the_indicator_on_its_face() {
        let p = build_box_partition(vec![vec![0.0, 1.0]], Some(1.0)).unwrap();
        let cell = p.cell(whole(0)).unwrap();
        let h = RiskFunctional::var(1.0);
        assert!(h.restrict_to_cell(&cell).unwrap().is_zero());
        assert_eq!(h.value_on_cell(&cell, &[1.0]).unwrap(), 1.0);
        assert_eq!(h.value_on_cell(&cell, &[0.5]).unwrap(), 0.0);
    }
}
