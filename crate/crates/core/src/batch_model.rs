//! Maximum batch size model.
//!
//! ```text
//! max_bs = floor( c0 * (gpu_mem - model_mem) / (seq_len * ((1 - c1) + c1 * sparsity)) )
//! ```
//!
//! `c0` is the per-model scaling coefficient and `c1` the MoE coefficient,
//! the share of per-query memory that shrinks with sparsity.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::{BatchObservation, Catalog, CatalogError};

#[derive(Debug, Error)]
pub enum BatchModelError {
    #[error("invalid input `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("no observations to calibrate against")]
    NoObservations,
    #[error("observations span multiple models: \"{first}\" and \"{other}\"")]
    MixedModels { first: String, other: String },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> BatchModelError {
    BatchModelError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchCoeffs {
    /// Scaling coefficient, > 0.
    pub c0: f64,
    /// MoE coefficient, in [0, 1].
    pub c1: f64,
}

impl BatchCoeffs {
    pub fn new(c0: f64, c1: f64) -> Result<Self, BatchModelError> {
        let c = BatchCoeffs { c0, c1 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), BatchModelError> {
        if !(self.c0.is_finite() && self.c0 > 0.0) {
            return Err(invalid("c0", format!("must be finite and > 0, got {}", self.c0)));
        }
        if !(0.0..=1.0).contains(&self.c1) {
            return Err(invalid("c1", format!("must lie in [0, 1], got {}", self.c1)));
        }
        Ok(())
    }

    /// Per-query memory multiplier `(1 - c1) + c1 * sparsity`.
    pub fn sparsity_factor(&self, sparsity: f64) -> f64 {
        (1.0 - self.c1) + self.c1 * sparsity
    }

    /// Prediction before the floor is applied; 0 when the model does not fit.
    pub fn raw_batch(&self, gpu_mem: f64, model_mem: f64, seq_len: u32, sparsity: f64) -> f64 {
        let free = gpu_mem - model_mem;
        if free <= 0.0 {
            return 0.0;
        }
        self.c0 * free / (seq_len as f64 * self.sparsity_factor(sparsity))
    }
}

fn check_inputs(gpu_mem: f64, model_mem: f64, seq_len: u32, sparsity: f64) -> Result<(), BatchModelError> {
    if !(gpu_mem.is_finite() && gpu_mem > 0.0) {
        return Err(invalid("gpu_mem", format!("must be finite and > 0, got {gpu_mem}")));
    }
    if !(model_mem.is_finite() && model_mem >= 0.0) {
        return Err(invalid("model_mem", format!("must be finite and >= 0, got {model_mem}")));
    }
    if seq_len < 1 {
        return Err(invalid("seq_len", "must be >= 1"));
    }
    if !(sparsity.is_finite() && sparsity > 0.0 && sparsity <= 1.0) {
        return Err(invalid("sparsity", format!("must lie in (0, 1], got {sparsity}")));
    }
    Ok(())
}

/// Largest batch that fits in GPU memory. Returns 0 when the model alone
/// fills (or exceeds) the GPU.
pub fn predict_max_batch(
    coeffs: &BatchCoeffs,
    gpu_mem: f64,
    model_mem: f64,
    seq_len: u32,
    sparsity: f64,
) -> Result<u64, BatchModelError> {
    coeffs.validate()?;
    check_inputs(gpu_mem, model_mem, seq_len, sparsity)?;
    Ok(coeffs.raw_batch(gpu_mem, model_mem, seq_len, sparsity).floor() as u64)
}

/// Applies [`predict_max_batch`] to each memory capacity in `mem_grid`.
pub fn project_max_batch(
    coeffs: &BatchCoeffs,
    model_mem: f64,
    seq_len: u32,
    sparsity: f64,
    mem_grid: &[f64],
) -> Result<Vec<(f64, u64)>, BatchModelError> {
    if mem_grid.is_empty() {
        return Err(invalid("mem_grid", "must not be empty"));
    }
    mem_grid
        .iter()
        .map(|&mem| Ok((mem, predict_max_batch(coeffs, mem, model_mem, seq_len, sparsity)?)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationEntry {
    pub observation: BatchObservation,
    pub predicted: u64,
    /// `predicted - observed`.
    pub residual: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationReport {
    pub coeffs: BatchCoeffs,
    pub residuals: Vec<CalibrationEntry>,
    pub max_abs_residual: u64,
    pub exact_matches: usize,
}

/// Search grid for calibration. The coarse pass covers `[c0_min, c0_max]`
/// and `[0, 1]`; the refinement pass re-scans one coarse cell around the
/// best point at `refine` times the resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationGrid {
    pub c0_min: f64,
    pub c0_max: f64,
    pub c0_step: f64,
    pub c1_step: f64,
    pub refine: u32,
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        CalibrationGrid {
            c0_min: 0.5,
            c0_max: 200.0,
            c0_step: 0.05,
            c1_step: 0.005,
            refine: 10,
        }
    }
}

/// Resolved numeric inputs of one observation.
struct Point {
    gpu_mem: f64,
    model_mem: f64,
    seq_len: u32,
    sparsity: f64,
    observed: u64,
}

#[derive(Debug, Clone, Copy)]
struct Score {
    sum_abs: u64,
    max_abs: u64,
    c0: f64,
    c1: f64,
}

impl Score {
    fn cmp(&self, other: &Score) -> Ordering {
        self.sum_abs
            .cmp(&other.sum_abs)
            .then(self.max_abs.cmp(&other.max_abs))
            .then(self.c0.total_cmp(&other.c0))
            .then(self.c1.total_cmp(&other.c1))
    }
}

fn evaluate(points: &[Point], c0: f64, c1: f64) -> Score {
    let coeffs = BatchCoeffs { c0, c1 };
    let mut sum_abs = 0;
    let mut max_abs = 0;
    for p in points {
        let pred = coeffs
            .raw_batch(p.gpu_mem, p.model_mem, p.seq_len, p.sparsity)
            .floor() as u64;
        let r = pred.abs_diff(p.observed);
        sum_abs += r;
        max_abs = max_abs.max(r);
    }
    Score { sum_abs, max_abs, c0, c1 }
}

fn scan(points: &[Point], c0s: &[f64], c1s: &[f64], best: &mut Option<Score>) {
    for &c0 in c0s {
        for &c1 in c1s {
            let s = evaluate(points, c0, c1);
            if best.is_none_or(|b| s.cmp(&b) == Ordering::Less) {
                *best = Some(s);
            }
        }
    }
}

fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Calibrates with the default grid.
pub fn calibrate_batch_coeffs(
    observations: &[BatchObservation],
    catalog: &Catalog,
) -> Result<CalibrationReport, BatchModelError> {
    calibrate_batch_coeffs_with(observations, catalog, &CalibrationGrid::default())
}

/// Finds the coefficients minimising the summed absolute integer residual.
/// Ties go to the smaller maximum residual, then the smaller `c0`, then the
/// smaller `c1`, so the result is unique for a given input.
pub fn calibrate_batch_coeffs_with(
    observations: &[BatchObservation],
    catalog: &Catalog,
    grid: &CalibrationGrid,
) -> Result<CalibrationReport, BatchModelError> {
    let first = observations.first().ok_or(BatchModelError::NoObservations)?;
    if let Some(o) = observations.iter().find(|o| o.model != first.model) {
        return Err(BatchModelError::MixedModels {
            first: first.model.clone(),
            other: o.model.clone(),
        });
    }
    if !(grid.c0_min > 0.0 && grid.c0_max >= grid.c0_min && grid.c0_step > 0.0 && grid.c1_step > 0.0 && grid.refine >= 1) {
        return Err(invalid("grid", format!("malformed calibration grid {grid:?}")));
    }

    let model = catalog.require_model(&first.model, "batch observation")?;
    let mut points = Vec::with_capacity(observations.len());
    for o in observations {
        let gpu = catalog.require_gpu(&o.gpu, "batch observation")?;
        let ds = catalog.require_dataset(&o.dataset, "batch observation")?;
        check_inputs(gpu.memory_gib, model.resident_memory_gib, ds.median_seq_len, o.sparsity)?;
        points.push(Point {
            gpu_mem: gpu.memory_gib,
            model_mem: model.resident_memory_gib,
            seq_len: ds.median_seq_len,
            sparsity: o.sparsity,
            observed: o.observed_max_bs,
        });
    }

    let mut best = None;
    scan(
        &points,
        &axis(grid.c0_min, grid.c0_max, grid.c0_step),
        &axis(0.0, 1.0, grid.c1_step),
        &mut best,
    );
    let coarse = best.expect("grid is nonempty");

    let fine_c0 = grid.c0_step / grid.refine as f64;
    let fine_c1 = grid.c1_step / grid.refine as f64;
    let r = grid.refine as i64;
    let c0s: Vec<f64> = (-r..=r)
        .map(|i| coarse.c0 + i as f64 * fine_c0)
        .filter(|&c| c > 0.0 && c >= grid.c0_min - grid.c0_step && c <= grid.c0_max + grid.c0_step)
        .collect();
    let c1s: Vec<f64> = (-r..=r)
        .map(|i| coarse.c1 + i as f64 * fine_c1)
        .filter(|c| (0.0..=1.0).contains(c))
        .collect();
    scan(&points, &c0s, &c1s, &mut best);
    let winner = best.expect("grid is nonempty");

    let coeffs = BatchCoeffs::new(winner.c0, winner.c1)?;
    let residuals: Vec<CalibrationEntry> = observations
        .iter()
        .zip(&points)
        .map(|(o, p)| {
            let predicted = coeffs
                .raw_batch(p.gpu_mem, p.model_mem, p.seq_len, p.sparsity)
                .floor() as u64;
            CalibrationEntry {
                observation: o.clone(),
                predicted,
                residual: predicted as i64 - o.observed_max_bs as i64,
            }
        })
        .collect();
    let max_abs_residual = residuals.iter().map(|e| e.residual.unsigned_abs()).max().unwrap_or(0);
    let exact_matches = residuals.iter().filter(|e| e.residual == 0).count();
    Ok(CalibrationReport {
        coeffs,
        residuals,
        max_abs_residual,
        exact_matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixtral_observed_values() {
        let c = BatchCoeffs::new(8.0, 0.93).unwrap();
        assert_eq!(predict_max_batch(&c, 48.0, 23.35, 79, 1.0).unwrap(), 2);
        assert_eq!(predict_max_batch(&c, 48.0, 23.35, 79, 0.25).unwrap(), 8);
        assert_eq!(predict_max_batch(&c, 48.0, 23.35, 174, 1.0).unwrap(), 1);
        assert_eq!(predict_max_batch(&c, 48.0, 23.35, 174, 0.25).unwrap(), 3);
    }

    #[test]
    fn no_free_memory() {
        let c = BatchCoeffs::new(8.0, 0.93).unwrap();
        assert_eq!(predict_max_batch(&c, 23.35, 23.35, 79, 1.0).unwrap(), 0);
        assert_eq!(predict_max_batch(&c, 20.0, 23.35, 79, 1.0).unwrap(), 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = BatchCoeffs::new(8.0, 0.5).unwrap();
        assert!(predict_max_batch(&c, 0.0, 1.0, 79, 1.0).is_err());
        assert!(predict_max_batch(&c, 48.0, -1.0, 79, 1.0).is_err());
        assert!(predict_max_batch(&c, 48.0, 1.0, 0, 1.0).is_err());
        assert!(predict_max_batch(&c, 48.0, 1.0, 79, 0.0).is_err());
        assert!(predict_max_batch(&c, 48.0, 1.0, 79, 1.5).is_err());
        assert!(BatchCoeffs::new(0.0, 0.5).is_err());
        assert!(BatchCoeffs::new(1.0, 1.5).is_err());
    }

    #[test]
    fn c1_edge_cases() {
        let c = BatchCoeffs::new(3.0, 0.0).unwrap();
        assert_eq!(c.raw_batch(48.0, 8.0, 10, 0.25), c.raw_batch(48.0, 8.0, 10, 1.0));
        let c = BatchCoeffs::new(1.0, 1.0).unwrap();
        assert_eq!(c.raw_batch(48.0, 8.0, 10, 1.0), 40.0 / 10.0);
    }

    #[test]
    fn projection() {
        let c = BatchCoeffs::new(8.0, 0.93).unwrap();
        assert_eq!(
            project_max_batch(&c, 23.35, 79, 0.25, &[48.0, 96.0]).unwrap(),
            vec![(48.0, 8), (96.0, 24)]
        );
        assert_eq!(
            project_max_batch(&c, 23.35, 79, 0.25, &[23.35]).unwrap(),
            vec![(23.35, 0)]
        );
        assert!(project_max_batch(&c, 23.35, 79, 0.25, &[]).is_err());
    }

    fn tiny_catalog() -> Catalog {
        Catalog::from_json_str(
            r#"{"gpus":[{"name":"G","memory_gib":48.0}],
                "models":[{"name":"M","param_count":1,"resident_memory_gib":8.0,"num_layers":2,
                           "num_moe_layers":1,"num_experts":8,"default_top_k":2},
                          {"name":"N","param_count":1,"resident_memory_gib":8.0,"num_layers":2,
                           "num_moe_layers":1,"num_experts":8,"default_top_k":2}],
                "datasets":[{"name":"D","num_queries":10,"median_seq_len":100,"task_tag":"x"}],
                "samples":[],"batch_observations":[]}"#,
        )
        .unwrap()
    }

    fn obs(model: &str, s: f64, bs: u64) -> BatchObservation {
        BatchObservation {
            gpu: "G".into(),
            model: model.into(),
            dataset: "D".into(),
            sparsity: s,
            observed_max_bs: bs,
        }
    }

    #[test]
    fn calibration_errors() {
        let cat = tiny_catalog();
        assert!(matches!(
            calibrate_batch_coeffs(&[], &cat),
            Err(BatchModelError::NoObservations)
        ));
        assert!(matches!(
            calibrate_batch_coeffs(&[obs("M", 1.0, 2), obs("N", 1.0, 2)], &cat),
            Err(BatchModelError::MixedModels { .. })
        ));
    }

    #[test]
    fn repeated_single_observation_is_reproduced() {
        let cat = tiny_catalog();
        let o = obs("M", 1.0, 5);
        let rep = calibrate_batch_coeffs(&[o.clone(), o], &cat).unwrap();
        assert_eq!(rep.exact_matches, 2);
        assert_eq!(rep.max_abs_residual, 0);
    }
}
