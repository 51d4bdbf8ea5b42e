//! Versioned JSON result documents.
//!
//! Every document has the shape
//!
//! ```text
//! { "schema": "survscan-result/1", "kind": "...", "manifest": {...}, "result": {...} }
//! ```
//!
//! The manifest records how the result was produced, including wall-clock
//! timings. The `result` body is a pure function of the inputs and the
//! resolved configuration, so reruns reproduce it byte for byte.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use survscan_core::{CvResult, FitResult};

use crate::io::{Fingerprint, IoError};

pub const SCHEMA: &str = "survscan-result/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// Command line as invoked.
    pub command: Vec<String>,
    /// Every option after defaults and environment were applied.
    pub config: serde_json::Value,
    pub dataset: Option<Fingerprint>,
    pub version: String,
    /// Seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document<T> {
    pub schema: String,
    pub kind: String,
    pub manifest: Manifest,
    pub result: T,
}

impl<T: Serialize> Document<T> {
    pub fn new(kind: &str, manifest: Manifest, result: T) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            kind: kind.to_string(),
            manifest,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result documents serialize");
        s.push('\n');
        s
    }

    /// Writes to `path`, or to stdout without one.
    pub fn write(&self, path: Option<&Path>) -> Result<(), IoError> {
        let json = self.to_json();
        match path {
            Some(p) => std::fs::write(p, json).map_err(|source| IoError::Write {
                path: p.to_path_buf(),
                source,
            }),
            None => std::io::stdout()
                .write_all(json.as_bytes())
                .map_err(|source| IoError::Write {
                    path: "<stdout>".into(),
                    source,
                }),
        }
    }
}

/// Coefficients as parallel index/value lists of the nonzeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseBeta {
    pub length: usize,
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl SparseBeta {
    pub fn new(beta: &[f64], names: &[String]) -> Self {
        let indices: Vec<usize> = (0..beta.len()).filter(|&j| beta[j] != 0.0).collect();
        Self {
            length: beta.len(),
            names: indices.iter().map(|&j| names[j].clone()).collect(),
            values: indices.iter().map(|&j| beta[j]).collect(),
            indices,
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.length];
        for (&j, &v) in self.indices.iter().zip(&self.values) {
            out[j] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitBody {
    pub beta: SparseBeta,
    pub objective: f64,
    pub log_likelihood: f64,
    pub cycles: usize,
    pub converged: bool,
    pub nonzero_count: usize,
    pub skipped_steps: usize,
    pub monotonicity_violations: usize,
    pub objective_trace: Vec<f64>,
}

impl FitBody {
    pub fn new(fit: &FitResult, names: &[String]) -> Self {
        Self {
            beta: SparseBeta::new(&fit.beta, names),
            objective: fit.objective,
            log_likelihood: fit.log_likelihood,
            cycles: fit.cycles,
            converged: fit.converged,
            nonzero_count: fit.nonzero_count,
            skipped_steps: fit.skipped_steps,
            monotonicity_violations: fit.monotonicity_violations,
            objective_trace: fit.objective_trace.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub value: f64,
    /// Absent when every replicate at this value failed.
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvBody {
    pub curve: Vec<CurvePoint>,
    pub selected_index: usize,
    pub selected_value: f64,
    pub failed_replicates: usize,
    pub final_fit: FitBody,
}

impl CvBody {
    pub fn new(cv: &CvResult, names: &[String]) -> Self {
        let finite = |v: f64| v.is_finite().then_some(v);
        Self {
            curve: cv
                .curve
                .iter()
                .map(|g| CurvePoint {
                    value: g.value,
                    mean: finite(g.mean),
                    sd: finite(g.sd),
                    evaluations: g.evaluations,
                })
                .collect(),
            selected_index: cv.selected_index,
            selected_value: cv.selected_value,
            failed_replicates: cv.failed_replicates,
            final_fit: FitBody::new(&cv.final_fit, names),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapBody {
    pub coefficient: usize,
    pub name: String,
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub resamples: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateBody {
    pub model: String,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub n_events: usize,
    pub n_competing: usize,
    pub obs_file: String,
    pub matrix_file: String,
    /// Coefficients of the simulated (primary-event) hazard.
    pub true_beta: Vec<f64>,
    /// Competing-event coefficients, Fine-Gray only.
    pub true_beta_competing: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub n: usize,
    pub threads: usize,
    pub rep: usize,
    pub total_seconds: f64,
    pub grad_hess_seconds: f64,
    pub cycles: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSummary {
    pub n: usize,
    pub threads: usize,
    pub median_total_seconds: f64,
    pub median_grad_hess_seconds: f64,
    /// Median total time of the first thread count at this size divided by
    /// this row's.
    pub speedup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchBody {
    pub model: String,
    pub cols: usize,
    pub density: f64,
    pub rows: Vec<BenchRow>,
    pub summary: Vec<BenchSummary>,
}
