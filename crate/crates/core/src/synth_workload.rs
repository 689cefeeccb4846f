//! Roofline-style synthetic workload.
//!
//! One training step over a batch costs
//!
//! ```text
//! t_compute = batch * seq_len * flops_per_token * (1 - moe_flop_fraction * (1 - sparsity)) / peak
//! t_memory  = (weight_bytes + batch * seq_len * activation_bytes_per_token) / bandwidth
//! t         = max(t_compute, t_memory) + fixed_overhead_s
//! ```
//!
//! and throughput is `batch / t`. Small batches are dominated by streaming
//! the weights (throughput grows almost linearly with batch size); past the
//! crossover the step becomes compute bound and throughput flattens out.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::ProfileSample;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> SynthError {
    SynthError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RooflineParams {
    pub peak_compute_tflops: f64,
    pub mem_bandwidth_gbs: f64,
    /// Bytes of weights streamed per step.
    pub weight_bytes: f64,
    /// Dense-model FLOPs per token per step.
    pub flops_per_token: f64,
    pub activation_bytes_per_token: f64,
    pub seq_len: u32,
    /// Fraction of `flops_per_token` spent in expert layers.
    pub moe_flop_fraction: f64,
    pub fixed_overhead_s: f64,
}

impl Default for RooflineParams {
    /// A 24 GB weight stream on a 150 TFLOP/s, 696 GB/s device; memory bound
    /// at small batches, crossing over to compute bound near batch 13 when
    /// dense.
    fn default() -> Self {
        RooflineParams {
            peak_compute_tflops: 150.0,
            mem_bandwidth_gbs: 696.0,
            weight_bytes: 24e9,
            flops_per_token: 16e9,
            activation_bytes_per_token: 6e7,
            seq_len: 128,
            moe_flop_fraction: 0.85,
            fixed_overhead_s: 0.0,
        }
    }
}

fn check_sparsity(sparsity: f64) -> Result<(), SynthError> {
    if sparsity.is_finite() && sparsity > 0.0 && sparsity <= 1.0 {
        Ok(())
    } else {
        Err(invalid("sparsity", format!("must lie in (0, 1], got {sparsity}")))
    }
}

impl RooflineParams {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (field, v) in [
            ("peak_compute_tflops", self.peak_compute_tflops),
            ("mem_bandwidth_gbs", self.mem_bandwidth_gbs),
            ("weight_bytes", self.weight_bytes),
            ("flops_per_token", self.flops_per_token),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        if !(self.activation_bytes_per_token.is_finite() && self.activation_bytes_per_token >= 0.0) {
            return Err(invalid("activation_bytes_per_token", "must be finite and >= 0"));
        }
        if self.seq_len < 1 {
            return Err(invalid("seq_len", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.moe_flop_fraction) {
            return Err(invalid("moe_flop_fraction", "must lie in [0, 1]"));
        }
        if !(self.fixed_overhead_s.is_finite() && self.fixed_overhead_s >= 0.0) {
            return Err(invalid("fixed_overhead_s", "must be finite and >= 0"));
        }
        Ok(())
    }

    fn flop_scale(&self, sparsity: f64) -> f64 {
        1.0 - self.moe_flop_fraction * (1.0 - sparsity)
    }

    /// Seconds of arithmetic per step.
    pub fn compute_time(&self, batch: f64, sparsity: f64) -> f64 {
        batch * self.seq_len as f64 * self.flops_per_token * self.flop_scale(sparsity)
            / (self.peak_compute_tflops * 1e12)
    }

    /// Seconds of memory traffic per step.
    pub fn memory_time(&self, batch: f64) -> f64 {
        (self.weight_bytes + batch * self.seq_len as f64 * self.activation_bytes_per_token)
            / (self.mem_bandwidth_gbs * 1e9)
    }

    pub fn step_time(&self, batch: f64, sparsity: f64) -> f64 {
        self.compute_time(batch, sparsity).max(self.memory_time(batch)) + self.fixed_overhead_s
    }

    /// Batch size at which compute time catches up with memory time, or
    /// `None` if the step stays memory bound for every batch size.
    pub fn crossover_batch(&self, sparsity: f64) -> Option<f64> {
        let per_batch = self.seq_len as f64
            * (self.flops_per_token * self.flop_scale(sparsity) / (self.peak_compute_tflops * 1e12)
                - self.activation_bytes_per_token / (self.mem_bandwidth_gbs * 1e9));
        (per_batch > 0.0).then(|| self.weight_bytes / (self.mem_bandwidth_gbs * 1e9) / per_batch)
    }

    /// Throughput limit as the batch grows without bound.
    pub fn throughput_ceiling(&self, sparsity: f64) -> f64 {
        let per_query_compute = self.compute_time(1.0, sparsity);
        let per_query_memory = self.seq_len as f64 * self.activation_bytes_per_token / (self.mem_bandwidth_gbs * 1e9);
        1.0 / per_query_compute.max(per_query_memory)
    }
}

/// Queries per second for one step of `batch_size` queries.
pub fn simulate_throughput(params: &RooflineParams, batch_size: u64, sparsity: f64) -> Result<f64, SynthError> {
    params.validate()?;
    if batch_size < 1 {
        return Err(invalid("batch_size", "must be >= 1"));
    }
    check_sparsity(sparsity)?;
    let b = batch_size as f64;
    Ok(b / params.step_time(b, sparsity))
}

/// Names attached to generated samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleLabels {
    pub gpu: String,
    pub model: String,
    pub dataset: String,
}

impl Default for SampleLabels {
    fn default() -> Self {
        SampleLabels {
            gpu: "synthetic-gpu".into(),
            model: "synthetic-model".into(),
            dataset: "synthetic-dataset".into(),
        }
    }
}

/// Evaluates the roofline on `batch_grid x sparsity_grid` (batch-major) and
/// applies multiplicative log-normal noise `exp(N(0, noise_sigma))` drawn
/// from a ChaCha8 stream seeded with `seed`. With `noise_sigma == 0` no
/// random numbers are drawn and the output is the noiseless curve.
pub fn generate_samples(
    params: &RooflineParams,
    labels: &SampleLabels,
    batch_grid: &[u64],
    sparsity_grid: &[f64],
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<ProfileSample>, SynthError> {
    params.validate()?;
    if batch_grid.is_empty() {
        return Err(invalid("batch_grid", "must not be empty"));
    }
    if sparsity_grid.is_empty() {
        return Err(invalid("sparsity_grid", "must not be empty"));
    }
    if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
        return Err(invalid("noise_sigma", format!("must be finite and >= 0, got {noise_sigma}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| invalid("noise_sigma", e.to_string()))?;

    let mut out = Vec::with_capacity(batch_grid.len() * sparsity_grid.len());
    for &b in batch_grid {
        for &s in sparsity_grid {
            let clean = simulate_throughput(params, b, s)?;
            let throughput_qps = if noise_sigma == 0.0 {
                clean
            } else {
                let z: f64 = noise.sample(&mut rng);
                clean * z.exp()
            };
            out.push(ProfileSample {
                gpu: labels.gpu.clone(),
                model: labels.model.clone(),
                dataset: labels.dataset.clone(),
                sparsity: s,
                batch_size: b,
                throughput_qps,
            });
        }
    }
    Ok(out)
}

/// Fractions of a training step spent in each stage, plus the share of the
/// forward and backward time taken by the MoE layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageShares {
    pub forward: f64,
    pub backward: f64,
    pub optimizer: f64,
    pub moe_layer_share: f64,
    /// All weights are trained, so backward does at least the forward work.
    #[serde(default)]
    pub full_finetune: bool,
}

impl StageShares {
    pub fn validate(&self) -> Result<(), SynthError> {
        for (field, v) in [
            ("forward", self.forward),
            ("backward", self.backward),
            ("optimizer", self.optimizer),
            ("moe_layer_share", self.moe_layer_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("must lie in [0, 1], got {v}")));
            }
        }
        let sum = self.forward + self.backward + self.optimizer;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(invalid("forward+backward+optimizer", format!("must sum to 1, got {sum}")));
        }
        if self.full_finetune && self.backward < self.forward {
            return Err(invalid("backward", "must be >= forward for full fine-tuning"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StageBreakdown {
    pub forward_s: f64,
    pub backward_s: f64,
    pub optimizer_s: f64,
    /// Forward plus backward time inside MoE layers.
    pub moe_layer_s: f64,
    /// Forward plus backward time in every other layer.
    pub other_layers_s: f64,
    pub total_s: f64,
}

impl StageBreakdown {
    pub fn stage_rows(&self) -> [(&'static str, f64); 3] {
        [
            ("forward", self.forward_s),
            ("backward", self.backward_s),
            ("optimizer", self.optimizer_s),
        ]
    }

    pub fn layer_rows(&self) -> [(&'static str, f64); 3] {
        [
            ("moe", self.moe_layer_s),
            ("other", self.other_layers_s),
            ("optimizer", self.optimizer_s),
        ]
    }
}

pub fn stage_breakdown(shares: &StageShares, total_step_s: f64) -> Result<StageBreakdown, SynthError> {
    shares.validate()?;
    if !(total_step_s.is_finite() && total_step_s > 0.0) {
        return Err(invalid("total_step_s", format!("must be finite and > 0, got {total_step_s}")));
    }
    let forward_s = shares.forward * total_step_s;
    let backward_s = shares.backward * total_step_s;
    let optimizer_s = shares.optimizer * total_step_s;
    let fwd_bwd = forward_s + backward_s;
    let moe_layer_s = shares.moe_layer_share * fwd_bwd;
    Ok(StageBreakdown {
        forward_s,
        backward_s,
        optimizer_s,
        moe_layer_s,
        other_layers_s: fwd_bwd - moe_layer_s,
        total_s: total_step_s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn weight_bound() -> RooflineParams {
        RooflineParams::default()
    }

    #[test]
    fn memory_bound_doubling() {
        let p = weight_bound();
        let r = simulate_throughput(&p, 2, 1.0).unwrap() / simulate_throughput(&p, 1, 1.0).unwrap();
        assert!(r > 1.5 && r <= 2.0, "{r}");
    }

    #[test]
    fn sparsity_only_touches_compute() {
        let p = weight_bound();
        let f = 1.0 - 0.75 * p.moe_flop_fraction;
        assert!((p.compute_time(7.0, 0.25) - f * p.compute_time(7.0, 1.0)).abs() < 1e-15);
    }

    #[test]
    fn approaches_ceiling_from_below() {
        let p = weight_bound();
        let ceiling = p.throughput_ceiling(1.0);
        let mut prev = 0.0;
        for b in [1u64, 10, 100, 1000, 100_000] {
            let t = simulate_throughput(&p, b, 1.0).unwrap();
            assert!(t <= ceiling * (1.0 + 1e-12));
            assert!(t >= prev);
            prev = t;
        }
        assert!((prev - ceiling).abs() / ceiling < 1e-3);
    }

    #[test]
    fn crossover_splits_regimes() {
        let p = weight_bound();
        let b = p.crossover_batch(1.0).unwrap();
        assert!((p.compute_time(b, 1.0) - p.memory_time(b)).abs() < 1e-12);
        assert!(p.memory_time(b.floor()) >= p.compute_time(b.floor(), 1.0));
        assert!(p.compute_time(b.ceil(), 1.0) >= p.memory_time(b.ceil()));

        let no_cross = RooflineParams {
            activation_bytes_per_token: 1e9,
            ..p
        };
        assert!(no_cross.crossover_batch(1.0).is_none());
    }

    #[test]
    fn noiseless_samples_match_curve() {
        let p = weight_bound();
        let s = generate_samples(&p, &SampleLabels::default(), &[1, 2, 4], &[0.25, 1.0], 0.0, 7).unwrap();
        assert_eq!(s.len(), 6);
        assert_eq!((s[1].batch_size, s[1].sparsity), (1, 1.0));
        for x in &s {
            assert_eq!(x.throughput_qps, simulate_throughput(&p, x.batch_size, x.sparsity).unwrap());
        }
    }

    #[test]
    fn seeded_noise_repeats() {
        let p = weight_bound();
        let l = SampleLabels::default();
        let a = generate_samples(&p, &l, &[1, 2, 4], &[0.25, 1.0], 0.05, 11).unwrap();
        let b = generate_samples(&p, &l, &[1, 2, 4], &[0.25, 1.0], 0.05, 11).unwrap();
        let c = generate_samples(&p, &l, &[1, 2, 4], &[0.25, 1.0], 0.05, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|x| x.throughput_qps > 0.0));
    }

    #[test]
    fn rejects_bad_params() {
        let p = weight_bound();
        assert!(simulate_throughput(&p, 0, 1.0).is_err());
        assert!(simulate_throughput(&p, 1, 0.0).is_err());
        let bad = RooflineParams { mem_bandwidth_gbs: 0.0, ..p };
        assert!(simulate_throughput(&bad, 1, 1.0).is_err());
        let l = SampleLabels::default();
        assert!(generate_samples(&p, &l, &[], &[1.0], 0.0, 0).is_err());
        assert!(generate_samples(&p, &l, &[1], &[1.0], -0.1, 0).is_err());
    }

    #[test]
    fn stage_examples() {
        let shares = StageShares {
            forward: 0.3,
            backward: 0.6,
            optimizer: 0.1,
            moe_layer_share: 0.85,
            full_finetune: true,
        };
        let b = stage_breakdown(&shares, 10.0).unwrap();
        assert!((b.forward_s - 3.0).abs() < 1e-12);
        assert!((b.backward_s - 6.0).abs() < 1e-12);
        assert!((b.optimizer_s - 1.0).abs() < 1e-12);
        assert!((b.moe_layer_s - 7.65).abs() < 1e-12);
        let layer_sum: f64 = b.layer_rows().iter().map(|r| r.1).sum();
        assert!((layer_sum - 10.0).abs() < 1e-9);

        let none = stage_breakdown(&StageShares { moe_layer_share: 0.0, ..shares }, 10.0).unwrap();
        assert_eq!(none.moe_layer_s, 0.0);
        assert!((none.other_layers_s - 9.0).abs() < 1e-12);
    }

    #[test]
    fn stage_validation() {
        let bad_sum = StageShares {
            forward: 0.3,
            backward: 0.3,
            optimizer: 0.1,
            moe_layer_share: 0.5,
            full_finetune: false,
        };
        assert!(stage_breakdown(&bad_sum, 1.0).is_err());
        let backwards = StageShares {
            forward: 0.6,
            backward: 0.3,
            optimizer: 0.1,
            moe_layer_share: 0.5,
            full_finetune: true,
        };
        assert!(stage_breakdown(&backwards, 1.0).is_err());
        assert!(stage_breakdown(&StageShares { full_finetune: false, ..backwards }, 1.0).is_ok());
        assert!(stage_breakdown(&StageShares { full_finetune: false, ..backwards }, 0.0).is_err());
    }
}
