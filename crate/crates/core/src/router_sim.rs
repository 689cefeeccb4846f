//! Top-k MoE gating and expert load statistics.
//!
//! Each token's router logits go through a softmax and the `k` most probable
//! experts are selected. Equal scores go to the lower expert index. No
//! capacity limit is applied, so no token is ever dropped.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum RouterError {
    #[error("router input needs at least one token")]
    NoTokens,
    #[error("router input needs at least one expert")]
    NoExperts,
    #[error("token {token} has {got} logits, expected {expected}")]
    Ragged { token: usize, got: usize, expected: usize },
    #[error("logit for token {token}, expert {expert} is not finite")]
    NonFinite { token: usize, expert: usize },
    #[error("top_k must lie in [1, {num_experts}], got {top_k}")]
    TopK { top_k: usize, num_experts: usize },
    #[error("token {token} is assigned to expert {expert}, but there are only {num_experts} experts")]
    ExpertOutOfRange {
        token: usize,
        expert: usize,
        num_experts: usize,
    },
    #[error("expert counts differ: {before} before vs {after} after")]
    ExpertCountMismatch { before: usize, after: usize },
}

/// Router logits, `num_tokens x num_experts`, plus the gating width.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterInput {
    logits: Vec<Vec<f64>>,
    top_k: usize,
}

impl RouterInput {
    pub fn new(logits: Vec<Vec<f64>>, top_k: usize) -> Result<Self, RouterError> {
        let num_experts = logits.first().ok_or(RouterError::NoTokens)?.len();
        if num_experts == 0 {
            return Err(RouterError::NoExperts);
        }
        for (token, row) in logits.iter().enumerate() {
            if row.len() != num_experts {
                return Err(RouterError::Ragged {
                    token,
                    got: row.len(),
                    expected: num_experts,
                });
            }
            if let Some(expert) = row.iter().position(|v| !v.is_finite()) {
                return Err(RouterError::NonFinite { token, expert });
            }
        }
        if top_k < 1 || top_k > num_experts {
            return Err(RouterError::TopK { top_k, num_experts });
        }
        Ok(RouterInput { logits, top_k })
    }

    pub fn logits(&self) -> &[Vec<f64>] {
        &self.logits
    }

    pub fn top_k(&self) -> usize {
        self.top_k
    }

    pub fn num_tokens(&self) -> usize {
        self.logits.len()
    }

    pub fn num_experts(&self) -> usize {
        self.logits[0].len()
    }
}

/// The experts chosen for one token, highest score first, with their
/// softmax probabilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenRoute {
    pub experts: Vec<usize>,
    pub weights: Vec<f64>,
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Routes every token to its top-k experts.
pub fn route_topk(input: &RouterInput) -> Vec<TokenRoute> {
    input
        .logits
        .iter()
        .map(|row| {
            // Softmax preserves order, so select on the raw logits.
            let mut order: Vec<usize> = (0..row.len()).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            order.truncate(input.top_k);
            let probs = softmax(row);
            TokenRoute {
                weights: order.iter().map(|&e| probs[e]).collect(),
                experts: order,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertLoad {
    pub counts: Vec<u64>,
    /// Percentage of all assignments per expert.
    pub shares_pct: Vec<f64>,
    /// Population variance of `shares_pct`.
    pub variance_pct: f64,
    /// Max count over mean count.
    pub imbalance_factor: f64,
}

impl ExpertLoad {
    pub fn from_counts(counts: Vec<u64>) -> Result<ExpertLoad, RouterError> {
        if counts.is_empty() {
            return Err(RouterError::NoExperts);
        }
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(RouterError::NoTokens);
        }
        let e = counts.len() as f64;
        let shares_pct: Vec<f64> = counts.iter().map(|&c| 100.0 * c as f64 / total as f64).collect();
        let mean_share = shares_pct.iter().sum::<f64>() / e;
        let variance_pct = shares_pct.iter().map(|s| (s - mean_share).powi(2)).sum::<f64>() / e;
        let max = *counts.iter().max().expect("nonempty") as f64;
        let imbalance_factor = max / (total as f64 / e);
        Ok(ExpertLoad {
            counts,
            shares_pct,
            variance_pct,
            imbalance_factor,
        })
    }

    pub fn num_experts(&self) -> usize {
        self.counts.len()
    }

    /// Index of the largest share, lowest index on ties.
    pub fn dominant_expert(&self) -> usize {
        let mut best = 0;
        for (i, s) in self.shares_pct.iter().enumerate() {
            if *s > self.shares_pct[best] {
                best = i;
            }
        }
        best
    }
}

pub fn expert_load(assignments: &[TokenRoute], num_experts: usize) -> Result<ExpertLoad, RouterError> {
    if num_experts == 0 {
        return Err(RouterError::NoExperts);
    }
    let mut counts = vec![0u64; num_experts];
    for (token, route) in assignments.iter().enumerate() {
        for &expert in &route.experts {
            if expert >= num_experts {
                return Err(RouterError::ExpertOutOfRange {
                    token,
                    expert,
                    num_experts,
                });
            }
            counts[expert] += 1;
        }
    }
    ExpertLoad::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoadDelta {
    /// `after.variance_pct - before.variance_pct`.
    pub variance_delta: f64,
    /// Per-expert `after - before` share, in percentage points.
    pub share_deltas: Vec<f64>,
    /// Most used expert after the change.
    pub dominant_expert: usize,
}

pub fn compare_loads(before: &ExpertLoad, after: &ExpertLoad) -> Result<LoadDelta, RouterError> {
    if before.num_experts() != after.num_experts() || before.shares_pct.len() != after.shares_pct.len() {
        return Err(RouterError::ExpertCountMismatch {
            before: before.num_experts(),
            after: after.num_experts(),
        });
    }
    Ok(LoadDelta {
        variance_delta: after.variance_pct - before.variance_pct,
        share_deltas: after
            .shares_pct
            .iter()
            .zip(&before.shares_pct)
            .map(|(a, b)| a - b)
            .collect(),
        dominant_expert: after.dominant_expert(),
    })
}

/// Standard-normal logits from a seeded ChaCha8 stream, row-major.
pub fn random_logits(num_tokens: usize, num_experts: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_tokens)
        .map(|_| (0..num_experts).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Parses logits CSV: one token per line, one column per expert, no header.
pub fn read_logits_csv<R: std::io::Read>(reader: R) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| e.to_string())?;
        let line = record.position().map_or(0, |p| p.line());
        let row = record
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| format!("line {line}: `{f}`: {e}")))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}
