//! `ftcost` command line.
//!
//! Exit codes: 0 on success, 1 when a model or calibration step fails, 2 on
//! bad input (unreadable files, malformed data, invalid flags).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::batch_model::{calibrate_batch_coeffs, predict_max_batch, project_max_batch, BatchModelError};
use crate::catalog::{load_catalog, load_samples_csv, write_samples_csv, CatalogError};
use crate::cost_model::{compare_gpus, estimate_cost, CostError, CostEstimate, CostQuery};
use crate::report::{render_csv, render_table, OutputFormat, Section};
use crate::router_sim::{expert_load, random_logits, read_logits_csv, route_topk, RouterInput};
use crate::synth_workload::{generate_samples, RooflineParams, SampleLabels};
use crate::throughput_model::{fit_throughput, predict_throughput, ThroughputError, ThroughputForm};

#[derive(Debug, Parser)]
#[command(name = "ftcost", version, about = "Batch size, throughput and cost models for MoE LLM fine-tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate a model's batch-size coefficients against its observations.
    CalibrateBatch(CalibrateArgs),
    /// Fit throughput coefficients to profile samples (CSV).
    Fit(FitArgs),
    /// Predict max batch size and throughput for one configuration.
    Predict(PredictArgs),
    /// Estimate time and cost of a fine-tuning job on one GPU.
    Cost(CostArgs),
    /// Rank GPUs by estimated fine-tuning cost.
    Compare(CompareArgs),
    /// Generate synthetic profile samples from a roofline model.
    Synth(SynthArgs),
    /// Route tokens with top-k gating and report expert load.
    Route(RouteArgs),
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
    /// Write the calibrated coefficients back into the catalog file.
    #[arg(long)]
    save: bool,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long, value_enum, default_value_t = ThroughputForm::Power)]
    form: ThroughputForm,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
    /// Store the coefficients in this catalog (requires --catalog).
    #[arg(long, requires = "catalog")]
    save: bool,
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    model: String,
    #[arg(long)]
    dataset: String,
    #[arg(long, value_parser = parse_sparsity)]
    sparsity: f64,
    /// Override the dataset's median sequence length.
    #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
    seq_len: Option<u32>,
    #[arg(long, value_enum)]
    form: Option<ThroughputForm>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long)]
    gpu: String,
    /// Also project the max batch size onto these memory sizes (GiB).
    #[arg(long, value_delimiter = ',')]
    mem_grid: Vec<f64>,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct JobArgs {
    #[command(flatten)]
    query: QueryArgs,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    epochs: u32,
    /// Override the dataset's query count.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    queries: Option<u64>,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct CostArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long)]
    gpu: String,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    job: JobArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    gpus: Vec<String>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = RooflineParams::default().peak_compute_tflops)]
    peak_tflops: f64,
    #[arg(long, default_value_t = RooflineParams::default().mem_bandwidth_gbs)]
    bandwidth_gbs: f64,
    #[arg(long, default_value_t = RooflineParams::default().weight_bytes)]
    weight_bytes: f64,
    #[arg(long, default_value_t = RooflineParams::default().flops_per_token)]
    flops_per_token: f64,
    #[arg(long, default_value_t = RooflineParams::default().activation_bytes_per_token)]
    activation_bytes_per_token: f64,
    #[arg(long, default_value_t = RooflineParams::default().seq_len)]
    seq_len: u32,
    #[arg(long, default_value_t = RooflineParams::default().moe_flop_fraction)]
    moe_flop_fraction: f64,
    #[arg(long, default_value_t = RooflineParams::default().fixed_overhead_s)]
    overhead_s: f64,
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    batches: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "0.25,1")]
    sparsities: Vec<f64>,
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "synthetic-gpu")]
    gpu: String,
    #[arg(long, default_value = "synthetic-model")]
    model: String,
    #[arg(long, default_value = "synthetic-dataset")]
    dataset: String,
    /// Also write the samples as catalog CSV to this path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

#[derive(Debug, Args)]
struct RouteArgs {
    /// Logits CSV, one token per row; random logits are drawn when absent.
    #[arg(long)]
    logits: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    tokens: usize,
    #[arg(long, default_value_t = 8)]
    experts: usize,
    #[arg(long, default_value_t = 2)]
    top_k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    format: OutputFormat,
}

fn parse_sparsity(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v <= 1.0 {
        Ok(v)
    } else {
        Err(format!("sparsity must lie in (0, 1], got {v}"))
    }
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
enum Failure {
    Input(String),
    Model(String),
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Model(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Model(m) => m,
        }
    }
}

impl From<CatalogError> for Failure {
    fn from(e: CatalogError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<BatchModelError> for Failure {
    fn from(e: BatchModelError) -> Self {
        match e {
            BatchModelError::Catalog(c) => c.into(),
            BatchModelError::Invalid { .. } => Failure::Input(e.to_string()),
            other => Failure::Model(other.to_string()),
        }
    }
}

impl From<ThroughputError> for Failure {
    fn from(e: ThroughputError) -> Self {
        match e {
            ThroughputError::Invalid { .. } => Failure::Input(e.to_string()),
            other => Failure::Model(other.to_string()),
        }
    }
}

impl From<CostError> for Failure {
    fn from(e: CostError) -> Self {
        let text = e.to_string();
        let mut inner = &e;
        while let CostError::ForGpu { source, .. } = inner {
            inner = source;
        }
        match inner {
            CostError::Catalog(_) | CostError::Invalid { .. } => Failure::Input(text),
            CostError::Batch(BatchModelError::Invalid { .. } | BatchModelError::Catalog(_)) => Failure::Input(text),
            CostError::Throughput(ThroughputError::Invalid { .. }) => Failure::Input(text),
            _ => Failure::Model(text),
        }
    }
}

struct Output {
    sections: Vec<Section>,
    json: serde_json::Value,
}

impl Output {
    fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Table => render_table(&self.sections),
            OutputFormat::Csv => render_csv(&self.sections),
            OutputFormat::Json => {
                let mut s = serde_json::to_string_pretty(&self.json).expect("json value serializes");
                s.push('\n');
                s
            }
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("serializable")
}

/// Parses `args` (including the program name) and runs the command. Output
/// goes to `out`, diagnostics to `err`; the return value is the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = out.write_all(text.as_bytes());
            } else {
                let _ = err.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let (result, format) = match cli.command {
        Command::CalibrateBatch(a) => (calibrate(&a), a.format),
        Command::Fit(a) => (fit(&a), a.format),
        Command::Predict(a) => (predict(&a), a.format),
        Command::Cost(a) => (cost(&a), a.job.format),
        Command::Compare(a) => (compare(&a), a.job.format),
        Command::Synth(a) => (synth(&a), a.format),
        Command::Route(a) => (route(&a), a.format),
    };
    match result {
        Ok(output) => {
            if out.write_all(output.render(format).as_bytes()).is_err() {
                return 2;
            }
            0
        }
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message());
            f.code()
        }
    }
}

fn calibrate(a: &CalibrateArgs) -> Result<Output, Failure> {
    let mut catalog = load_catalog(&a.catalog)?;
    catalog.require_model(&a.model, "--model")?;
    let observations: Vec<_> = catalog
        .batch_observations
        .iter()
        .filter(|o| o.model == a.model)
        .cloned()
        .collect();
    if observations.is_empty() {
        return Err(Failure::Model(format!(
            "no batch observations for model \"{}\" in {}",
            a.model,
            a.catalog.display()
        )));
    }
    let report = calibrate_batch_coeffs(&observations, &catalog)?;

    let mut coeffs = Section::new(Some("coefficients"), &["model", "c0", "c1", "max_abs_residual", "exact_matches", "observations"]);
    coeffs.row(vec![
        a.model.as_str().into(),
        report.coeffs.c0.into(),
        report.coeffs.c1.into(),
        report.max_abs_residual.into(),
        report.exact_matches.into(),
        report.residuals.len().into(),
    ]);
    let mut rows = Section::new(Some("residuals"), &["gpu", "dataset", "sparsity", "observed", "predicted", "residual"]);
    for e in &report.residuals {
        rows.row(vec![
            e.observation.gpu.as_str().into(),
            e.observation.dataset.as_str().into(),
            e.observation.sparsity.into(),
            e.observation.observed_max_bs.into(),
            e.predicted.into(),
            e.residual.into(),
        ]);
    }
    if a.save {
        catalog
            .model_mut(&a.model)
            .expect("model resolved above")
            .batch_coeffs = Some(report.coeffs);
        catalog.save(&a.catalog)?;
    }
    Ok(Output {
        sections: vec![coeffs, rows],
        json: to_json(&report),
    })
}

fn fit(a: &FitArgs) -> Result<Output, Failure> {
    let samples = load_samples_csv(&a.samples)?;
    let report = fit_throughput(&samples, a.form)?;

    let mut coeffs = Section::new(Some("coefficients"), &["form", "c2", "c3", "c4", "rmse", "samples"]);
    coeffs.row(vec![
        a.form.to_string().into(),
        report.coeffs.c2.into(),
        report.coeffs.c3.into(),
        report.coeffs.c4.into(),
        report.rmse.into(),
        report.sample_count.into(),
    ]);
    let mut rows = Section::new(Some("residuals"), &["batch_size", "sparsity", "measured", "predicted", "residual"]);
    for r in &report.residuals {
        rows.row(vec![
            r.sample.batch_size.into(),
            r.sample.sparsity.into(),
            r.sample.throughput_qps.into(),
            r.predicted.into(),
            r.residual.into(),
        ]);
    }
    let mut sections = vec![coeffs, rows];
    if !report.warnings.is_empty() {
        let mut w = Section::new(Some("warnings"), &["warning"]);
        for msg in &report.warnings {
            w.row(vec![msg.as_str().into()]);
        }
        sections.push(w);
    }

    if a.save {
        let path = a.catalog.as_ref().expect("clap enforces --catalog with --save");
        let mut catalog = load_catalog(path)?;
        let first = &samples[0];
        catalog.require_gpu(&first.gpu, "samples")?;
        catalog.require_dataset(&first.dataset, "samples")?;
        catalog.require_model(&first.model, "samples")?;
        report
            .coeffs
            .validate()
            .map_err(|e| Failure::Model(format!("refusing to save coefficients: {e}")))?;
        catalog
            .model_mut(&first.model)
            .expect("model resolved above")
            .set_throughput_coeffs(&first.dataset, &first.gpu, report.coeffs);
        catalog.save(path)?;
    }
    Ok(Output {
        sections,
        json: to_json(&report),
    })
}

fn predict(a: &PredictArgs) -> Result<Output, Failure> {
    let q = &a.query;
    let catalog = load_catalog(&q.catalog)?;
    let model = catalog.require_model(&q.model, "--model")?;
    let dataset = catalog.require_dataset(&q.dataset, "--dataset")?;
    let gpu = catalog.require_gpu(&a.gpu, "--gpu")?;
    let coeffs = model
        .batch_coeffs
        .ok_or_else(|| Failure::Model(format!("model \"{}\" has no calibrated batch coefficients", model.name)))?;
    let seq_len = q.seq_len.unwrap_or(dataset.median_seq_len);
    let max_bs = predict_max_batch(&coeffs, gpu.memory_gib, model.resident_memory_gib, seq_len, q.sparsity)?;

    let forms = match q.form {
        Some(f) => vec![f],
        None => vec![ThroughputForm::Power, ThroughputForm::Literal],
    };
    let tp = forms
        .iter()
        .find_map(|&f| model.throughput_coeffs_for(&dataset.name, &gpu.name, f));
    let throughput = match tp {
        Some(c) if max_bs >= 1 => Some(predict_throughput(c, max_bs, q.sparsity)?),
        _ => None,
    };

    let mut main = Section::new(None, &["model", "dataset", "gpu", "memory_gib", "seq_len", "sparsity", "max_batch_size", "throughput_qps"]);
    main.row(vec![
        model.name.as_str().into(),
        dataset.name.as_str().into(),
        gpu.name.as_str().into(),
        gpu.memory_gib.into(),
        (seq_len as u64).into(),
        q.sparsity.into(),
        max_bs.into(),
        throughput.into(),
    ]);
    let mut sections = vec![main];
    let mut projection = Vec::new();
    if !a.mem_grid.is_empty() {
        projection = project_max_batch(&coeffs, model.resident_memory_gib, seq_len, q.sparsity, &a.mem_grid)?;
        let mut s = Section::new(Some("projection"), &["memory_gib", "max_batch_size"]);
        for (m, b) in &projection {
            s.row(vec![(*m).into(), (*b).into()]);
        }
        sections.push(s);
    }

    #[derive(Serialize)]
    struct Prediction<'a> {
        model: &'a str,
        dataset: &'a str,
        gpu: &'a str,
        memory_gib: f64,
        seq_len: u32,
        sparsity: f64,
        max_batch_size: u64,
        throughput_qps: Option<f64>,
        #[serde(skip_serializing_if = "Vec::is_empty")]
        projection: Vec<(f64, u64)>,
    }
    let json = to_json(&Prediction {
        model: &model.name,
        dataset: &dataset.name,
        gpu: &gpu.name,
        memory_gib: gpu.memory_gib,
        seq_len,
        sparsity: q.sparsity,
        max_batch_size: max_bs,
        throughput_qps: throughput,
        projection,
    });
    Ok(Output { sections, json })
}

fn job_query(j: &JobArgs, gpu: &str) -> CostQuery {
    CostQuery {
        model: j.query.model.clone(),
        dataset: j.query.dataset.clone(),
        gpu: gpu.to_string(),
        sparsity: j.query.sparsity,
        epochs: j.epochs,
        override_queries: j.queries,
        seq_len_override: j.query.seq_len,
        form: j.query.form,
    }
}

#[derive(Serialize)]
struct CostRow {
    gpu: String,
    memory_gib: f64,
    #[serde(flatten)]
    estimate: CostEstimate,
}

fn cost_output(catalog: &crate::catalog::Catalog, rows: Vec<(String, CostEstimate)>) -> Output {
    let mut s = Section::new(
        None,
        &["gpu", "memory_gib", "max_batch_size", "throughput_qps", "usd_per_hour", "wall_hours", "total_usd"],
    );
    let mut json_rows = Vec::new();
    for (name, e) in rows {
        let memory_gib = catalog.gpu(&name).map_or(f64::NAN, |g| g.memory_gib);
        s.row(vec![
            name.as_str().into(),
            memory_gib.into(),
            e.max_batch_size.into(),
            e.throughput_qps.into(),
            e.hourly_price_usd.into(),
            e.wall_hours().into(),
            e.total_usd.into(),
        ]);
        json_rows.push(CostRow {
            gpu: name,
            memory_gib,
            estimate: e,
        });
    }
    Output {
        sections: vec![s],
        json: to_json(&json_rows),
    }
}

fn cost(a: &CostArgs) -> Result<Output, Failure> {
    let catalog = load_catalog(&a.job.query.catalog)?;
    let e = estimate_cost(&catalog, &job_query(&a.job, &a.gpu))?;
    Ok(cost_output(&catalog, vec![(a.gpu.clone(), e)]))
}

fn compare(a: &CompareArgs) -> Result<Output, Failure> {
    let catalog = load_catalog(&a.job.query.catalog)?;
    let rows = compare_gpus(&catalog, &job_query(&a.job, ""), &a.gpus)?;
    Ok(cost_output(&catalog, rows))
}

fn synth(a: &SynthArgs) -> Result<Output, Failure> {
    let params = RooflineParams {
        peak_compute_tflops: a.peak_tflops,
        mem_bandwidth_gbs: a.bandwidth_gbs,
        weight_bytes: a.weight_bytes,
        flops_per_token: a.flops_per_token,
        activation_bytes_per_token: a.activation_bytes_per_token,
        seq_len: a.seq_len,
        moe_flop_fraction: a.moe_flop_fraction,
        fixed_overhead_s: a.overhead_s,
    };
    let labels = SampleLabels {
        gpu: a.gpu.clone(),
        model: a.model.clone(),
        dataset: a.dataset.clone(),
    };
    let samples = generate_samples(&params, &labels, &a.batches, &a.sparsities, a.sigma, a.seed)
        .map_err(|e| Failure::Input(e.to_string()))?;
    if let Some(path) = &a.out {
        let file = std::fs::File::create(path)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
        write_samples_csv(&samples, file).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    }
    let mut s = Section::new(None, &crate::catalog::SAMPLE_CSV_HEADER);
    for x in &samples {
        s.row(vec![
            x.gpu.as_str().into(),
            x.model.as_str().into(),
            x.dataset.as_str().into(),
            x.sparsity.into(),
            x.batch_size.into(),
            x.throughput_qps.into(),
        ]);
    }
    Ok(Output {
        sections: vec![s],
        json: to_json(&samples),
    })
}

fn route(a: &RouteArgs) -> Result<Output, Failure> {
    let logits = match &a.logits {
        Some(path) => {
            let file = std::fs::File::open(path)
                .map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
            read_logits_csv(file).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => random_logits(a.tokens, a.experts, a.seed),
    };
    let input = RouterInput::new(logits, a.top_k).map_err(|e| Failure::Input(e.to_string()))?;
    let routes = route_topk(&input);
    let load = expert_load(&routes, input.num_experts()).map_err(|e| Failure::Model(e.to_string()))?;

    let mut per_expert = Section::new(Some("experts"), &["expert", "count", "share_pct"]);
    for (i, (c, s)) in load.counts.iter().zip(&load.shares_pct).enumerate() {
        per_expert.row(vec![i.into(), (*c).into(), (*s).into()]);
    }
    let mut summary = Section::new(Some("summary"), &["tokens", "experts", "top_k", "variance_pct", "imbalance_factor"]);
    summary.row(vec![
        input.num_tokens().into(),
        input.num_experts().into(),
        input.top_k().into(),
        load.variance_pct.into(),
        load.imbalance_factor.into(),
    ]);
    Ok(Output {
        sections: vec![per_expert, summary],
        json: to_json(&load),
    })
}
