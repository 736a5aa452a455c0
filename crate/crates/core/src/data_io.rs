//! Sample ingestion and bootstrap confidence bounds on test-function integrals.

use std::io::Read;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::test_functions::{PiecewiseAffine, TestFunction};

/// Multivariate observations, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dimension: usize,
    rows: Vec<Vec<f64>>,
    source: String,
}

impl SampleSet {
    pub fn new(rows: Vec<Vec<f64>>, source: impl Into<String>) -> Result<Self> {
        let dimension = match rows.first() {
            Some(r) => r.len(),
            None => return Err(Error::input("sample set is empty")),
        };
        if dimension == 0 {
            return Err(Error::input("samples must have at least one coordinate"));
        }
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dimension {
                return Err(Error::input(format!(
                    "sample {i} has {} coordinates, expected {dimension}",
                    r.len()
                )));
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::input(format!("sample {i} has a non-finite coordinate")));
            }
        }
        Ok(SampleSet {
            dimension,
            rows,
            source: source.into(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

/// Reads a CSV with one header row naming the axes and one numeric row per
/// observation.
pub fn load_samples_csv(path: impl AsRef<Path>) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_samples_csv(file, &path.display().to_string())
}

pub fn read_samples_csv<R: Read>(reader: R, source: &str) -> Result<SampleSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let width = rdr.headers()?.len();
    let mut rows = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        // header is line 1
        let line = i + 2;
        let record = record.map_err(|e| Error::Parse {
            source_name: source.to_string(),
            line,
            message: e.to_string(),
        })?;
        if record.len() != width {
            return Err(Error::Parse {
                source_name: source.to_string(),
                line,
                message: format!("expected {width} fields, found {}", record.len()),
            });
        }
        let row = record
            .iter()
            .map(|field| {
                field.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    source_name: source.to_string(),
                    line,
                    message: format!("non-numeric field `{field}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::input(format!("{source}: no data rows")));
    }
    SampleSet::new(rows, source)
}

/// Bootstrap confidence bounds on one integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegralBound {
    pub function: String,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub replicates: usize,
}

/// Linearly interpolated empirical quantile of sorted data.
pub(crate) fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Percentile bootstrap interval for `∫ f dF` at confidence `level`.
///
/// Replicate `r` draws from its own ChaCha stream `(seed, r)`, so the result
/// does not depend on how replicates are scheduled across threads.
pub fn bootstrap_integral_bounds(
    samples: &SampleSet,
    f: &TestFunction,
    level: f64,
    replicates: usize,
    seed: u64,
) -> Result<IntegralBound> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::input(format!("confidence level {level} not in (0, 1)")));
    }
    if replicates < 100 {
        return Err(Error::input(format!("need at least 100 replicates, got {replicates}")));
    }
    f.check_dimension(samples.dimension())?;
    let values: Vec<f64> = samples.rows().iter().map(|x| f.evaluate(x)).collect();
    let (lower, upper) = percentile_interval(&values, level, replicates, seed);
    Ok(IntegralBound {
        function: f.id.clone(),
        lower,
        upper,
        level,
        replicates,
    })
}

/// Percentile interval of the resampled mean of `values`.
pub fn percentile_interval(values: &[f64], level: f64, replicates: usize, seed: u64) -> (f64, f64) {
    let k = values.len();
    let mut means: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            let mut acc = 0.0;
            for _ in 0..k {
                acc += values[rng.gen_range(0..k)];
            }
            acc / k as f64
        })
        .collect();
    means.sort_by(|a, b| a.total_cmp(b));
    let alpha = (1.0 - level) / 2.0;
    (
        interpolated_quantile(&means, alpha),
        interpolated_quantile(&means, 1.0 - alpha),
    )
}
