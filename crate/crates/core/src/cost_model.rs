//! Wall-clock time and rental cost of a fine-tuning job.
//!
//! The job processes `N = num_queries * epochs` queries at the throughput
//! predicted for the largest batch that fits on the GPU:
//!
//! ```text
//! wall_seconds = N / throughput_qps
//! total_usd    = wall_seconds / 3600 * hourly_price_usd
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch_model::{predict_max_batch, BatchModelError};
use crate::catalog::{Catalog, CatalogError};
use crate::throughput_model::{predict_throughput, ThroughputError, ThroughputForm};

#[derive(Debug, Error)]
pub enum CostError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("invalid query `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("model \"{model}\" has no calibrated batch coefficients")]
    MissingBatchCoeffs { model: String },
    #[error("model \"{model}\" has no throughput coefficients for dataset \"{dataset}\" on gpu \"{gpu}\"")]
    MissingThroughputCoeffs {
        model: String,
        dataset: String,
        gpu: String,
    },
    #[error("gpu \"{gpu}\" has no hourly price")]
    MissingPrice { gpu: String },
    #[error("model \"{model}\" does not fit on gpu \"{gpu}\" (predicted max batch size 0)")]
    DoesNotFit { model: String, gpu: String },
    #[error("predicted throughput {throughput} qps at batch size {batch_size} is out of the model's range")]
    ThroughputOutOfRange { throughput: f64, batch_size: u64 },
    #[error(transparent)]
    Batch(#[from] BatchModelError),
    #[error(transparent)]
    Throughput(#[from] ThroughputError),
    #[error("no gpus to compare")]
    NoGpus,
    #[error("gpu \"{gpu}\": {source}")]
    ForGpu {
        gpu: String,
        #[source]
        source: Box<CostError>,
    },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> CostError {
    CostError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostQuery {
    pub model: String,
    pub dataset: String,
    pub gpu: String,
    pub sparsity: f64,
    pub epochs: u32,
    /// Replaces the dataset's query count.
    pub override_queries: Option<u64>,
    /// Replaces the dataset's median sequence length for batch prediction.
    pub seq_len_override: Option<u32>,
    /// Throughput form to use. `None` prefers power, then literal.
    pub form: Option<ThroughputForm>,
}

impl CostQuery {
    pub fn new(model: &str, dataset: &str, gpu: &str, sparsity: f64, epochs: u32) -> Self {
        CostQuery {
            model: model.to_string(),
            dataset: dataset.to_string(),
            gpu: gpu.to_string(),
            sparsity,
            epochs,
            override_queries: None,
            seq_len_override: None,
            form: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub max_batch_size: u64,
    pub throughput_qps: f64,
    pub wall_seconds: f64,
    pub total_usd: f64,
    pub hourly_price_usd: f64,
}

impl CostEstimate {
    /// Builds an estimate from already-predicted batch size and throughput.
    pub fn from_parts(
        max_batch_size: u64,
        throughput_qps: f64,
        hourly_price_usd: f64,
        query_epochs: u64,
    ) -> CostEstimate {
        let wall_seconds = query_epochs as f64 / throughput_qps;
        CostEstimate {
            max_batch_size,
            throughput_qps,
            wall_seconds,
            total_usd: wall_seconds / 3600.0 * hourly_price_usd,
            hourly_price_usd,
        }
    }

    pub fn wall_hours(&self) -> f64 {
        self.wall_seconds / 3600.0
    }
}

pub fn estimate_cost(catalog: &Catalog, query: &CostQuery) -> Result<CostEstimate, CostError> {
    if query.epochs < 1 {
        return Err(invalid("epochs", "must be >= 1"));
    }
    if query.override_queries == Some(0) {
        return Err(invalid("override_queries", "must be >= 1"));
    }
    if query.seq_len_override == Some(0) {
        return Err(invalid("seq_len_override", "must be >= 1"));
    }
    let model = catalog.require_model(&query.model, "cost query")?;
    let dataset = catalog.require_dataset(&query.dataset, "cost query")?;
    let gpu = catalog.require_gpu(&query.gpu, "cost query")?;

    let batch_coeffs = model.batch_coeffs.ok_or_else(|| CostError::MissingBatchCoeffs {
        model: model.name.clone(),
    })?;
    let forms = match query.form {
        Some(f) => vec![f],
        None => vec![ThroughputForm::Power, ThroughputForm::Literal],
    };
    let tp_coeffs = forms
        .iter()
        .find_map(|&f| model.throughput_coeffs_for(&dataset.name, &gpu.name, f))
        .ok_or_else(|| CostError::MissingThroughputCoeffs {
            model: model.name.clone(),
            dataset: dataset.name.clone(),
            gpu: gpu.name.clone(),
        })?;
    let price = gpu.hourly_price_usd.ok_or_else(|| CostError::MissingPrice {
        gpu: gpu.name.clone(),
    })?;

    let seq_len = query.seq_len_override.unwrap_or(dataset.median_seq_len);
    let max_batch_size = predict_max_batch(
        &batch_coeffs,
        gpu.memory_gib,
        model.resident_memory_gib,
        seq_len,
        query.sparsity,
    )?;
    if max_batch_size == 0 {
        return Err(CostError::DoesNotFit {
            model: model.name.clone(),
            gpu: gpu.name.clone(),
        });
    }
    let throughput = predict_throughput(tp_coeffs, max_batch_size, query.sparsity)?;
    if !(throughput.is_finite() && throughput > 0.0) {
        return Err(CostError::ThroughputOutOfRange {
            throughput,
            batch_size: max_batch_size,
        });
    }
    let queries = query.override_queries.unwrap_or(dataset.num_queries);
    Ok(CostEstimate::from_parts(
        max_batch_size,
        throughput,
        price,
        queries * query.epochs as u64,
    ))
}

/// Estimates the query on each GPU and sorts cheapest first. Ties are broken
/// by shorter wall time, then by GPU name.
pub fn compare_gpus<S: AsRef<str>>(
    catalog: &Catalog,
    template: &CostQuery,
    gpus: &[S],
) -> Result<Vec<(String, CostEstimate)>, CostError> {
    if gpus.is_empty() {
        return Err(CostError::NoGpus);
    }
    let mut rows = gpus
        .iter()
        .map(|g| {
            let gpu = g.as_ref();
            let query = CostQuery {
                gpu: gpu.to_string(),
                ..template.clone()
            };
            estimate_cost(catalog, &query)
                .map(|e| (gpu.to_string(), e))
                .map_err(|source| CostError::ForGpu {
                    gpu: gpu.to_string(),
                    source: Box::new(source),
                })
        })
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by(|(na, a), (nb, b)| {
        a.total_usd
            .total_cmp(&b.total_usd)
            .then(a.wall_seconds.total_cmp(&b.wall_seconds))
            .then_with(|| na.cmp(nb))
    });
    Ok(rows)
}

/// Rescales time and cost linearly from `original_queries` to `new_queries`.
pub fn scale_by_dataset(
    estimate: &CostEstimate,
    original_queries: u64,
    new_queries: u64,
) -> Result<CostEstimate, CostError> {
    if original_queries < 1 {
        return Err(invalid("original_queries", "must be >= 1"));
    }
    if new_queries < 1 {
        return Err(invalid("new_queries", "must be >= 1"));
    }
    if original_queries == new_queries {
        return Ok(*estimate);
    }
    let factor = new_queries as f64 / original_queries as f64;
    Ok(CostEstimate {
        wall_seconds: estimate.wall_seconds * factor,
        total_usd: estimate.total_usd * factor,
        ..*estimate
    })
}
