//! Analytical performance and cost models for fine-tuning mixture-of-experts
//! LLMs on a single GPU.
//!
//! * [`batch_model`]: largest batch that fits in GPU memory, and calibration
//!   of its coefficients from observed maxima.
//! * [`throughput_model`]: logarithmic throughput-vs-batch-size model and its
//!   least-squares fit.
//! * [`cost_model`]: wall-clock time and rental cost of a job, GPU ranking.
//! * [`router_sim`]: top-k gating and expert load statistics.
//! * [`synth_workload`]: roofline generator for synthetic profile samples and
//!   stage/layer time breakdowns.
//! * [`catalog`]: the shared data model and its JSON/CSV formats.
//! * [`cli`]: the `ftcost` command line.

pub mod batch_model;
pub mod catalog;
pub mod cli;
pub mod cost_model;
pub mod report;
pub mod router_sim;
pub mod synth_workload;
pub mod throughput_model;

pub use batch_model::{calibrate_batch_coeffs, predict_max_batch, project_max_batch, BatchCoeffs, CalibrationReport};
pub use catalog::{load_catalog, sparsity_of, Catalog, DatasetSpec, GpuSpec, ModelSpec, ProfileSample};
pub use cost_model::{compare_gpus, estimate_cost, scale_by_dataset, CostEstimate, CostQuery};
pub use router_sim::{compare_loads, expert_load, route_topk, ExpertLoad, RouterInput};
pub use synth_workload::{generate_samples, simulate_throughput, stage_breakdown, RooflineParams, StageShares};
pub use throughput_model::{fit_throughput, predict_throughput, rmse, FitReport, ThroughputCoeffs, ThroughputForm};
