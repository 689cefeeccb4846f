//! Logarithmic throughput model.
//!
//! Two parameterisations are supported:
//!
//! ```text
//! literal: T = c2 * ln(bs / (sparsity * c3)) + c4
//! power:   T = c2 * ln(bs / sparsity^c3) + c4
//! ```
//!
//! In the literal form `c3` only shifts the intercept, so it cannot be
//! separated from `c4` by fitting; fits pin it to 1. The power form makes
//! `c3` an exponent on sparsity, which is identifiable whenever the samples
//! cover at least two sparsities. Both forms are linear in their free
//! parameters once the logarithms are taken, so fitting is an ordinary
//! linear least-squares problem solved by QR.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ProfileSample;

#[derive(Debug, Error, PartialEq)]
pub enum ThroughputError {
    #[error("invalid input `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("no samples")]
    NoSamples,
    #[error("samples mix configurations: {first} and {other}")]
    MixedKeys { first: String, other: String },
    #[error("insufficient data for {form} fit: {reason}")]
    Insufficient { form: ThroughputForm, reason: String },
    #[error("design matrix is rank deficient: {0}")]
    RankDeficient(String),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ThroughputError {
    ThroughputError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ThroughputForm {
    Literal,
    Power,
}

impl fmt::Display for ThroughputForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ThroughputForm::Literal => "literal",
            ThroughputForm::Power => "power",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputCoeffs {
    /// Scaling coefficient.
    pub c2: f64,
    /// MoE attenuation coefficient.
    pub c3: f64,
    /// Intercept: the throughput at batch size 1 and sparsity 1.
    pub c4: f64,
    pub form: ThroughputForm,
}

impl ThroughputCoeffs {
    pub fn literal(c2: f64, c3: f64, c4: f64) -> Self {
        ThroughputCoeffs { c2, c3, c4, form: ThroughputForm::Literal }
    }

    pub fn power(c2: f64, c3: f64, c4: f64) -> Self {
        ThroughputCoeffs { c2, c3, c4, form: ThroughputForm::Power }
    }

    pub fn validate(&self) -> Result<(), ThroughputError> {
        for (field, v) in [("c2", self.c2), ("c3", self.c3), ("c4", self.c4)] {
            if !v.is_finite() {
                return Err(invalid(field, format!("must be finite, got {v}")));
            }
        }
        if self.c3 <= 0.0 {
            return Err(invalid("c3", format!("must be > 0, got {}", self.c3)));
        }
        Ok(())
    }

    /// Noiseless evaluation without argument checks.
    fn eval(&self, batch_size: u64, sparsity: f64) -> f64 {
        let bs = batch_size as f64;
        match self.form {
            ThroughputForm::Literal => self.c2 * (bs / (sparsity * self.c3)).ln() + self.c4,
            ThroughputForm::Power => self.c2 * (bs / sparsity.powf(self.c3)).ln() + self.c4,
        }
    }
}

/// Predicted throughput in queries/second. The value may be non-positive for
/// extreme coefficients; interpreting that is left to the caller.
pub fn predict_throughput(
    coeffs: &ThroughputCoeffs,
    batch_size: u64,
    sparsity: f64,
) -> Result<f64, ThroughputError> {
    if batch_size < 1 {
        return Err(invalid("batch_size", "must be >= 1"));
    }
    if !(sparsity.is_finite() && sparsity > 0.0 && sparsity <= 1.0) {
        return Err(invalid("sparsity", format!("must lie in (0, 1], got {sparsity}")));
    }
    if coeffs.form == ThroughputForm::Literal && coeffs.c3 <= 0.0 {
        return Err(invalid("c3", format!("literal form needs c3 > 0, got {}", coeffs.c3)));
    }
    Ok(coeffs.eval(batch_size, sparsity))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResidual {
    pub sample: ProfileSample,
    pub predicted: f64,
    /// `predicted - measured`.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub coeffs: ThroughputCoeffs,
    pub rmse: f64,
    pub residuals: Vec<SampleResidual>,
    pub sample_count: usize,
    /// Non-fatal findings, e.g. a non-positive scaling coefficient.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn residuals(coeffs: &ThroughputCoeffs, samples: &[ProfileSample]) -> Result<Vec<SampleResidual>, ThroughputError> {
    samples
        .iter()
        .map(|s| {
            let predicted = predict_throughput(coeffs, s.batch_size, s.sparsity)?;
            Ok(SampleResidual {
                sample: s.clone(),
                predicted,
                residual: predicted - s.throughput_qps,
            })
        })
        .collect()
}

fn rmse_of(res: &[SampleResidual]) -> f64 {
    let sq: f64 = res.iter().map(|r| r.residual * r.residual).sum();
    (sq / res.len() as f64).sqrt()
}

/// Root mean squared error of `coeffs` over `samples`.
pub fn rmse(coeffs: &ThroughputCoeffs, samples: &[ProfileSample]) -> Result<f64, ThroughputError> {
    if samples.is_empty() {
        return Err(ThroughputError::NoSamples);
    }
    Ok(rmse_of(&residuals(coeffs, samples)?))
}

/// Solves `min ||A x - y||` by thin QR. Returns `None` when `A` is
/// numerically rank deficient.
pub(crate) fn solve_least_squares(a: DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.ncols();
    if a.nrows() < n {
        return None;
    }
    let qr = a.qr();
    let r = qr.r();
    let scale = (0..n).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if scale == 0.0 || (0..n).any(|i| r[(i, i)].abs() <= 1e-10 * scale) {
        return None;
    }
    let qty = qr.q().transpose() * y;
    r.solve_upper_triangular(&qty)
}

fn key(s: &ProfileSample) -> String {
    format!("(gpu \"{}\", model \"{}\", dataset \"{}\")", s.gpu, s.model, s.dataset)
}

/// Fits the throughput model to samples that share one (gpu, model, dataset).
pub fn fit_throughput(samples: &[ProfileSample], form: ThroughputForm) -> Result<FitReport, ThroughputError> {
    let first = samples.first().ok_or(ThroughputError::NoSamples)?;
    if let Some(s) = samples
        .iter()
        .find(|s| s.gpu != first.gpu || s.model != first.model || s.dataset != first.dataset)
    {
        return Err(ThroughputError::MixedKeys {
            first: key(first),
            other: key(s),
        });
    }
    for s in samples {
        if s.batch_size < 1 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if !(s.sparsity.is_finite() && s.sparsity > 0.0 && s.sparsity <= 1.0) {
            return Err(invalid("sparsity", format!("must lie in (0, 1], got {}", s.sparsity)));
        }
        if !(s.throughput_qps.is_finite() && s.throughput_qps > 0.0) {
            return Err(invalid("throughput_qps", format!("must be > 0, got {}", s.throughput_qps)));
        }
    }

    let batch_sizes: BTreeSet<u64> = samples.iter().map(|s| s.batch_size).collect();
    let sparsities: BTreeSet<u64> = samples.iter().map(|s| s.sparsity.to_bits()).collect();
    let insufficient = |reason: String| ThroughputError::Insufficient { form, reason };
    let n = samples.len();

    let y = DVector::from_iterator(n, samples.iter().map(|s| s.throughput_qps));
    let coeffs = match form {
        ThroughputForm::Literal => {
            if n < 2 {
                return Err(insufficient(format!("needs at least 2 samples, got {n}")));
            }
            if batch_sizes.len() < 2 {
                return Err(insufficient("needs at least 2 distinct batch sizes".into()));
            }
            let a = DMatrix::from_fn(n, 2, |i, j| {
                let s = &samples[i];
                if j == 0 {
                    (s.batch_size as f64 / s.sparsity).ln()
                } else {
                    1.0
                }
            });
            let x = solve_least_squares(a, &y)
                .ok_or_else(|| ThroughputError::RankDeficient("ln(batch_size / sparsity) does not vary".into()))?;
            ThroughputCoeffs::literal(x[0], 1.0, x[1])
        }
        ThroughputForm::Power => {
            if n < 3 {
                return Err(insufficient(format!("needs at least 3 samples, got {n}")));
            }
            if batch_sizes.len() < 2 {
                return Err(insufficient("needs at least 2 distinct batch sizes".into()));
            }
            if sparsities.len() < 2 {
                return Err(insufficient("needs at least 2 distinct sparsities".into()));
            }
            let a = DMatrix::from_fn(n, 3, |i, j| {
                let s = &samples[i];
                match j {
                    0 => (s.batch_size as f64).ln(),
                    1 => -s.sparsity.ln(),
                    _ => 1.0,
                }
            });
            let x = solve_least_squares(a, &y).ok_or_else(|| {
                ThroughputError::RankDeficient("batch size and sparsity vary together".into())
            })?;
            if x[0] == 0.0 {
                return Err(ThroughputError::RankDeficient(
                    "fitted batch-size slope is zero, attenuation is undefined".into(),
                ));
            }
            ThroughputCoeffs::power(x[0], x[1] / x[0], x[2])
        }
    };

    let mut warnings = Vec::new();
    if coeffs.c2 <= 0.0 {
        warnings.push(format!("scaling coefficient c2 = {} is not positive", coeffs.c2));
    }
    if coeffs.c3 <= 0.0 {
        warnings.push(format!("attenuation coefficient c3 = {} is not positive", coeffs.c3));
    }

    let residuals = residuals(&coeffs, samples)?;
    Ok(FitReport {
        coeffs,
        rmse: rmse_of(&residuals),
        residuals,
        sample_count: n,
        warnings,
    })
}
