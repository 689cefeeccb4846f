//! Catalog of GPUs, models, datasets and measurements.
//!
//! A catalog is a single JSON document with the top-level lists `gpus`,
//! `models`, `datasets`, `samples` and `batch_observations`. Unknown keys are
//! rejected everywhere. Units are fixed: memory in GiB, sequence lengths in
//! tokens, throughput in queries/second, prices in USD/hour.
//!
//! Profile samples can also be exchanged as CSV with the exact header
//! `gpu,model,dataset,sparsity,batch_size,throughput_qps`.

use std::collections::HashSet;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batch_model::BatchCoeffs;
use crate::throughput_model::{ThroughputCoeffs, ThroughputForm};

/// Exact header of a profile-sample CSV file.
pub const SAMPLE_CSV_HEADER: [&str; 6] = [
    "gpu",
    "model",
    "dataset",
    "sparsity",
    "batch_size",
    "throughput_qps",
];

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column} (field `{field}`): {message}")]
    Parse {
        line: usize,
        column: usize,
        field: String,
        message: String,
    },
    #[error("{context} references unknown {kind} \"{name}\"")]
    DanglingReference {
        context: String,
        kind: &'static str,
        name: String,
    },
    #[error("duplicate {kind} name \"{name}\"")]
    Duplicate { kind: &'static str, name: String },
    #[error("invalid field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("CSV line {line}: {message}")]
    Csv { line: u64, message: String },
}

impl CatalogError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        CatalogError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpuSpec {
    pub name: String,
    pub memory_gib: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hourly_price_usd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_compute_tflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_bandwidth_gbs: Option<f64>,
}

/// Fitted throughput coefficients for one (dataset, GPU) pair of a model.
/// The form is carried inside `coeffs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThroughputEntry {
    pub dataset: String,
    pub gpu: String,
    pub coeffs: ThroughputCoeffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub param_count: u64,
    pub resident_memory_gib: f64,
    pub num_layers: u32,
    pub num_moe_layers: u32,
    pub num_experts: u32,
    pub default_top_k: u32,
    /// Locally calibrated coefficients; the only ones used for prediction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_coeffs: Option<BatchCoeffs>,
    /// Externally reported coefficients, kept for reference only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published_batch_coeffs: Option<BatchCoeffs>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub throughput_coeffs: Vec<ThroughputEntry>,
}

impl ModelSpec {
    pub fn throughput_coeffs_for(
        &self,
        dataset: &str,
        gpu: &str,
        form: ThroughputForm,
    ) -> Option<&ThroughputCoeffs> {
        self.throughput_coeffs
            .iter()
            .find(|e| e.dataset == dataset && e.gpu == gpu && e.coeffs.form == form)
            .map(|e| &e.coeffs)
    }

    /// Inserts or replaces the coefficients for `(dataset, gpu, coeffs.form)`.
    pub fn set_throughput_coeffs(&mut self, dataset: &str, gpu: &str, coeffs: ThroughputCoeffs) {
        match self
            .throughput_coeffs
            .iter_mut()
            .find(|e| e.dataset == dataset && e.gpu == gpu && e.coeffs.form == coeffs.form)
        {
            Some(entry) => entry.coeffs = coeffs,
            None => self.throughput_coeffs.push(ThroughputEntry {
                dataset: dataset.to_string(),
                gpu: gpu.to_string(),
                coeffs,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub name: String,
    pub num_queries: u64,
    pub median_seq_len: u32,
    pub task_tag: String,
}

/// One measured throughput point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSample {
    pub gpu: String,
    pub model: String,
    pub dataset: String,
    pub sparsity: f64,
    pub batch_size: u64,
    pub throughput_qps: f64,
}

impl ProfileSample {
    pub fn validate(&self) -> Result<(), CatalogError> {
        check_sparsity("sparsity", self.sparsity)?;
        if self.batch_size < 1 {
            return Err(CatalogError::invalid("batch_size", "must be >= 1"));
        }
        if !(self.throughput_qps.is_finite() && self.throughput_qps > 0.0) {
            return Err(CatalogError::invalid(
                "throughput_qps",
                format!("must be finite and > 0, got {}", self.throughput_qps),
            ));
        }
        Ok(())
    }
}

/// Observed maximum batch size for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchObservation {
    pub gpu: String,
    pub model: String,
    pub dataset: String,
    pub sparsity: f64,
    pub observed_max_bs: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Catalog {
    pub gpus: Vec<GpuSpec>,
    pub models: Vec<ModelSpec>,
    pub datasets: Vec<DatasetSpec>,
    pub samples: Vec<ProfileSample>,
    pub batch_observations: Vec<BatchObservation>,
}

fn check_positive(field: &str, v: f64) -> Result<(), CatalogError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(CatalogError::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

pub(crate) fn check_sparsity(field: &str, s: f64) -> Result<(), CatalogError> {
    if s.is_finite() && s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(CatalogError::invalid(field, format!("must lie in (0, 1], got {s}")))
    }
}

fn unique<'a>(
    kind: &'static str,
    names: impl Iterator<Item = &'a str>,
) -> Result<HashSet<&'a str>, CatalogError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(CatalogError::Duplicate {
                kind,
                name: n.to_string(),
            });
        }
    }
    Ok(seen)
}

impl Catalog {
    /// Parses and validates a catalog from JSON text.
    pub fn from_json_str(text: &str) -> Result<Catalog, CatalogError> {
        let mut de = serde_json::Deserializer::from_str(text);
        let catalog: Catalog = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            CatalogError::Parse {
                line: inner.line(),
                column: inner.column(),
                field,
                message: inner.to_string(),
            }
        })?;
        de.end().map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            field: ".".to_string(),
            message: e.to_string(),
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("catalog serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn gpu(&self, name: &str) -> Option<&GpuSpec> {
        self.gpus.iter().find(|g| g.name == name)
    }

    pub fn model(&self, name: &str) -> Option<&ModelSpec> {
        self.models.iter().find(|m| m.name == name)
    }

    pub fn model_mut(&mut self, name: &str) -> Option<&mut ModelSpec> {
        self.models.iter_mut().find(|m| m.name == name)
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetSpec> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn require_gpu(&self, name: &str, context: &str) -> Result<&GpuSpec, CatalogError> {
        self.gpu(name).ok_or_else(|| dangling(context, "gpu", name))
    }

    pub fn require_model(&self, name: &str, context: &str) -> Result<&ModelSpec, CatalogError> {
        self.model(name).ok_or_else(|| dangling(context, "model", name))
    }

    pub fn require_dataset(&self, name: &str, context: &str) -> Result<&DatasetSpec, CatalogError> {
        self.dataset(name).ok_or_else(|| dangling(context, "dataset", name))
    }

    /// Checks every field invariant and cross-reference.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let gpus = unique("gpu", self.gpus.iter().map(|g| g.name.as_str()))?;
        let models = unique("model", self.models.iter().map(|m| m.name.as_str()))?;
        let datasets = unique("dataset", self.datasets.iter().map(|d| d.name.as_str()))?;

        for g in &self.gpus {
            let at = |f: &str| format!("gpus[{}].{f}", g.name);
            check_positive(&at("memory_gib"), g.memory_gib)?;
            for (f, v) in [
                ("hourly_price_usd", g.hourly_price_usd),
                ("peak_compute_tflops", g.peak_compute_tflops),
                ("mem_bandwidth_gbs", g.mem_bandwidth_gbs),
            ] {
                if let Some(v) = v {
                    check_positive(&at(f), v)?;
                }
            }
        }

        for m in &self.models {
            let at = |f: &str| format!("models[{}].{f}", m.name);
            check_positive(&at("resident_memory_gib"), m.resident_memory_gib)?;
            if m.num_experts < 1 {
                return Err(CatalogError::invalid(at("num_experts"), "must be >= 1"));
            }
            if m.default_top_k < 1 || m.default_top_k > m.num_experts {
                return Err(CatalogError::invalid(
                    at("default_top_k"),
                    format!("must lie in [1, num_experts={}]", m.num_experts),
                ));
            }
            if m.num_moe_layers > m.num_layers {
                return Err(CatalogError::invalid(
                    at("num_moe_layers"),
                    format!("must not exceed num_layers={}", m.num_layers),
                ));
            }
            for (f, c) in [
                ("batch_coeffs", &m.batch_coeffs),
                ("published_batch_coeffs", &m.published_batch_coeffs),
            ] {
                if let Some(c) = c {
                    c.validate()
                        .map_err(|e| CatalogError::invalid(at(f), e.to_string()))?;
                }
            }
            let mut keys = HashSet::new();
            for e in &m.throughput_coeffs {
                let ctx = format!("models[{}].throughput_coeffs", m.name);
                if !datasets.contains(e.dataset.as_str()) {
                    return Err(dangling(&ctx, "dataset", &e.dataset));
                }
                if !gpus.contains(e.gpu.as_str()) {
                    return Err(dangling(&ctx, "gpu", &e.gpu));
                }
                e.coeffs
                    .validate()
                    .map_err(|err| CatalogError::invalid(format!("{ctx}[{}/{}]", e.dataset, e.gpu), err.to_string()))?;
                if !keys.insert((e.dataset.as_str(), e.gpu.as_str(), e.coeffs.form)) {
                    return Err(CatalogError::invalid(
                        ctx,
                        format!(
                            "duplicate entry for dataset \"{}\", gpu \"{}\", form {}",
                            e.dataset, e.gpu, e.coeffs.form
                        ),
                    ));
                }
            }
        }

        for d in &self.datasets {
            if d.num_queries < 1 {
                return Err(CatalogError::invalid(
                    format!("datasets[{}].num_queries", d.name),
                    "must be >= 1",
                ));
            }
            if d.median_seq_len < 1 {
                return Err(CatalogError::invalid(
                    format!("datasets[{}].median_seq_len", d.name),
                    "must be >= 1",
                ));
            }
        }

        let resolve = |ctx: &str, gpu: &str, model: &str, dataset: &str| {
            if !gpus.contains(gpu) {
                return Err(dangling(ctx, "gpu", gpu));
            }
            if !models.contains(model) {
                return Err(dangling(ctx, "model", model));
            }
            if !datasets.contains(dataset) {
                return Err(dangling(ctx, "dataset", dataset));
            }
            Ok(())
        };

        for (i, s) in self.samples.iter().enumerate() {
            let ctx = format!("samples[{i}]");
            s.validate().map_err(|e| prefix(&ctx, e))?;
            resolve(&ctx, &s.gpu, &s.model, &s.dataset)?;
        }
        for (i, o) in self.batch_observations.iter().enumerate() {
            let ctx = format!("batch_observations[{i}]");
            check_sparsity(&format!("{ctx}.sparsity"), o.sparsity)?;
            resolve(&ctx, &o.gpu, &o.model, &o.dataset)?;
        }
        Ok(())
    }
}

fn dangling(context: &str, kind: &'static str, name: &str) -> CatalogError {
    CatalogError::DanglingReference {
        context: context.to_string(),
        kind,
        name: name.to_string(),
    }
}

fn prefix(ctx: &str, e: CatalogError) -> CatalogError {
    match e {
        CatalogError::Invalid { field, reason } => CatalogError::Invalid {
            field: format!("{ctx}.{field}"),
            reason,
        },
        other => other,
    }
}

/// Reads and validates a catalog file.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<Catalog, CatalogError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Catalog::from_json_str(&text)
}

/// Fraction of experts active per token, `active_k / num_experts`.
pub fn sparsity_of(model: &ModelSpec, active_k: u32) -> Result<f64, CatalogError> {
    if active_k < 1 || active_k > model.num_experts {
        return Err(CatalogError::invalid(
            "active_k",
            format!(
                "must lie in [1, {}] for model \"{}\", got {active_k}",
                model.num_experts, model.name
            ),
        ));
    }
    Ok(active_k as f64 / model.num_experts as f64)
}

/// Parses profile samples from CSV. Line numbers in errors are 1-based and
/// count the header as line 1.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<Vec<ProfileSample>, CatalogError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| CatalogError::Csv {
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().ne(SAMPLE_CSV_HEADER.iter().copied()) {
        return Err(CatalogError::Csv {
            line: 1,
            message: format!(
                "expected header `{}`, got `{}`",
                SAMPLE_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let header = header.clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CatalogError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let sample: ProfileSample = record
            .deserialize(Some(&header))
            .map_err(|e| CatalogError::Csv {
                line,
                message: e.to_string(),
            })?;
        sample.validate().map_err(|e| CatalogError::Csv {
            line,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn load_samples_csv(path: impl AsRef<Path>) -> Result<Vec<ProfileSample>, CatalogError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CatalogError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_samples_csv(file)
}

/// Writes samples in the catalog CSV format, numbers at full precision.
pub fn write_samples_csv<W: Write>(samples: &[ProfileSample], writer: W) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(SAMPLE_CSV_HEADER)?;
    for s in samples {
        wtr.write_record([
            s.gpu.clone(),
            s.model.clone(),
            s.dataset.clone(),
            s.sparsity.to_string(),
            s.batch_size.to_string(),
            s.throughput_qps.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
      "gpus": [{"name": "A40", "memory_gib": 48.0, "hourly_price_usd": 0.79}],
      "models": [{"name": "Mixtral", "param_count": 47000000000, "resident_memory_gib": 23.35,
                  "num_layers": 32, "num_moe_layers": 8, "num_experts": 8, "default_top_k": 2}],
      "datasets": [{"name": "CS", "num_queries": 15000, "median_seq_len": 79, "task_tag": "common-sense"}],
      "samples": [],
      "batch_observations": []
    }"#;

    #[test]
    fn loads_small_catalog() {
        let c = Catalog::from_json_str(SMALL).unwrap();
        assert_eq!(c.gpus.len(), 1);
        assert_eq!(c.models.len(), 1);
        assert_eq!(c.datasets.len(), 1);
        assert_eq!(c.gpu("A40").unwrap().memory_gib, 48.0);
        assert_eq!(c.model("Mixtral").unwrap().resident_memory_gib, 23.35);
        assert_eq!(c.dataset("CS").unwrap().median_seq_len, 79);
    }

    #[test]
    fn empty_catalog() {
        let c = Catalog::from_json_str(
            r#"{"gpus":[],"models":[],"datasets":[],"samples":[],"batch_observations":[]}"#,
        )
        .unwrap();
        assert_eq!(c, Catalog::default());
    }

    #[test]
    fn dangling_gpu_is_named() {
        let text = SMALL.replace(
            r#""samples": []"#,
            r#""samples": [{"gpu": "B200", "model": "Mixtral", "dataset": "CS",
                             "sparsity": 0.25, "batch_size": 2, "throughput_qps": 0.7}]"#,
        );
        let err = Catalog::from_json_str(&text).unwrap_err();
        assert!(matches!(err, CatalogError::DanglingReference { .. }));
        assert!(err.to_string().contains("\"B200\""), "{err}");
    }

    #[test]
    fn unknown_key_rejected_with_location() {
        let text = SMALL.replace(r#""memory_gib": 48.0"#, r#""memory_gib": 48.0, "vram": 1"#);
        let err = Catalog::from_json_str(&text).unwrap_err();
        match err {
            CatalogError::Parse { line, field, message, .. } => {
                assert_eq!(line, 2);
                assert!(field.contains("gpus[0]"), "{field}");
                assert!(message.contains("vram"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invariant_violation_names_field() {
        let text = SMALL.replace(r#""memory_gib": 48.0"#, r#""memory_gib": 0.0"#);
        let err = Catalog::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("gpus[A40].memory_gib"), "{err}");

        let text = SMALL.replace(r#""default_top_k": 2"#, r#""default_top_k": 9"#);
        let err = Catalog::from_json_str(&text).unwrap_err();
        assert!(err.to_string().contains("default_top_k"), "{err}");
    }

    #[test]
    fn duplicate_names_rejected() {
        let text = SMALL.replace(
            r#""gpus": [{"name": "A40", "memory_gib": 48.0, "hourly_price_usd": 0.79}]"#,
            r#""gpus": [{"name": "A40", "memory_gib": 48.0}, {"name": "A40", "memory_gib": 40.0}]"#,
        );
        assert!(matches!(
            Catalog::from_json_str(&text),
            Err(CatalogError::Duplicate { kind: "gpu", .. })
        ));
    }

    #[test]
    fn sparsity_encoding() {
        let c = Catalog::from_json_str(SMALL).unwrap();
        let m = c.model("Mixtral").unwrap();
        assert_eq!(sparsity_of(m, 8).unwrap(), 1.0);
        assert_eq!(sparsity_of(m, 2).unwrap(), 0.25);
        assert!(sparsity_of(m, 0).is_err());
        assert!(sparsity_of(m, 9).is_err());
    }

    #[test]
    fn csv_header_must_match_exactly() {
        let ok = "gpu,model,dataset,sparsity,batch_size,throughput_qps\nA40,Mixtral,CS,0.25,2,0.7\n";
        let s = read_samples_csv(ok.as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].batch_size, 2);

        let reordered = "model,gpu,dataset,sparsity,batch_size,throughput_qps\nMixtral,A40,CS,0.25,2,0.7\n";
        let err = read_samples_csv(reordered.as_bytes()).unwrap_err();
        assert!(matches!(err, CatalogError::Csv { line: 1, .. }));
    }

    #[test]
    fn csv_bad_row_reports_line() {
        let text = "gpu,model,dataset,sparsity,batch_size,throughput_qps\n\
                    A40,Mixtral,CS,0.25,2,0.7\n\
                    A40,Mixtral,CS,0.25,zero,0.7\n";
        match read_samples_csv(text.as_bytes()).unwrap_err() {
            CatalogError::Csv { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let text = "gpu,model,dataset,sparsity,batch_size,throughput_qps\n\
                    A40,Mixtral,CS,0.25,2,-1\n";
        match read_samples_csv(text.as_bytes()).unwrap_err() {
            CatalogError::Csv { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("throughput_qps"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_write_then_read() {
        let samples = vec![ProfileSample {
            gpu: "A40".into(),
            model: "Mixtral".into(),
            dataset: "CS".into(),
            sparsity: 0.25,
            batch_size: 8,
            throughput_qps: 1.768,
        }];
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        assert_eq!(read_samples_csv(buf.as_slice()).unwrap(), samples);
    }
}
