//! Position propensities and counterfactual utility estimators.
//!
//! Propensities come from the randomized slice of the log: under a uniform
//! shuffle every position sees the same item distribution, so the ratio of
//! observed to expected clicks at a position measures its examination rate.
//! Utilities are estimated by inverse propensity scoring (IPS) or its
//! self-normalized form (SNIPS), and the training loss relaxes the top-k
//! selection through a softmax so the SNIPS estimate is differentiable in the
//! ranking scores.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::LoggedImpression;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityEntry {
    pub position: usize,
    pub propensity: f64,
    pub clicks: usize,
    pub expected_clicks: f64,
    pub count: usize,
}

/// Estimated examination probability per display position (1-based,
/// contiguous).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityTable {
    pub entries: Vec<PropensityEntry>,
    pub epsilon_min: f64,
}

impl PropensityTable {
    /// Table from known propensities, e.g. the simulator's true curve.
    pub fn from_values(values: &[f64], epsilon_min: f64) -> Self {
        PropensityTable {
            entries: values
                .iter()
                .enumerate()
                .map(|(i, &v)| PropensityEntry {
                    position: i + 1,
                    propensity: v.clamp(epsilon_min, 1.0),
                    clicks: 0,
                    expected_clicks: 0.0,
                    count: 0,
                })
                .collect(),
            epsilon_min,
        }
    }

    pub fn propensity(&self, position: usize) -> Result<f64> {
        position
            .checked_sub(1)
            .and_then(|i| self.entries.get(i))
            .map(|e| e.propensity)
            .ok_or(Error::MissingPosition(position))
    }

    pub fn max_position(&self) -> usize {
        self.entries.len()
    }

    /// Importance weights `1 / e(pos)` for a list of impressions.
    pub fn weights(&self, impressions: &[LoggedImpression]) -> Result<Vec<f64>> {
        impressions
            .iter()
            .map(|imp| self.propensity(imp.position).map(|e| 1.0 / e))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropensityConfig {
    pub min_count: usize,
    pub epsilon_min: f64,
}

impl Default for PropensityConfig {
    fn default() -> Self {
        PropensityConfig {
            min_count: 50,
            epsilon_min: 0.01,
        }
    }
}

/// Relative examination propensities from randomized impressions.
///
/// `reference_ctr[i]` is the full-examination click probability predicted for
/// impression `i` by a reference model. The raw estimate at a position is
/// `clicks / sum(reference_ctr)`; it is normalized so the top position has
/// propensity 1 and clipped to `[epsilon_min, 1]`. When the top position has
/// no clicks the raw ratios are clipped without normalizing.
pub fn estimate_propensities(
    impressions: &[LoggedImpression],
    reference_ctr: &[f64],
    config: &PropensityConfig,
) -> Result<PropensityTable> {
    if impressions.len() != reference_ctr.len() {
        return Err(Error::LengthMismatch {
            what: "impressions vs reference ctr",
            left: impressions.len(),
            right: reference_ctr.len(),
        });
    }
    if impressions.is_empty() {
        return Err(Error::EmptyInput("randomized impressions"));
    }
    let max_pos = impressions.iter().map(|i| i.position).max().unwrap_or(0);
    let mut clicks = vec![0usize; max_pos];
    let mut expected = vec![0.0; max_pos];
    let mut counts = vec![0usize; max_pos];
    for (imp, &ctr) in impressions.iter().zip(reference_ctr) {
        if !imp.randomized {
            return Err(Error::NotRandomized(imp.position));
        }
        if imp.position == 0 {
            return Err(Error::MissingPosition(0));
        }
        let p = imp.position - 1;
        clicks[p] += imp.clicked as usize;
        expected[p] += ctr;
        counts[p] += 1;
    }
    if let Some(p) = counts.iter().position(|&c| c < config.min_count) {
        return Err(Error::InsufficientPositionSamples {
            position: p + 1,
            count: counts[p],
            min_count: config.min_count,
        });
    }
    let raw: Vec<f64> = clicks
        .iter()
        .zip(&expected)
        .map(|(&c, &e)| if e > 0.0 { c as f64 / e } else { 0.0 })
        .collect();
    let anchor = raw[0];
    let entries = (0..max_pos)
        .map(|p| {
            let rel = if anchor > 0.0 { raw[p] / anchor } else { raw[p] };
            PropensityEntry {
                position: p + 1,
                propensity: rel.clamp(config.epsilon_min, 1.0),
                clicks: clicks[p],
                expected_clicks: expected[p],
                count: counts[p],
            }
        })
        .collect();
    Ok(PropensityTable {
        entries,
        epsilon_min: config.epsilon_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "IPS")]
    Ips,
    #[serde(rename = "SNIPS")]
    Snips,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub estimator: Estimator,
    pub value: f64,
    pub variance: f64,
    pub ess: f64,
    pub n: usize,
    pub epsilon_min: f64,
}

/// Which logged quantity counts as reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Realized revenue on conversion, else 0.
    #[default]
    Revenue,
    Click,
}

impl RewardKind {
    pub fn of(self, imp: &LoggedImpression) -> f64 {
        match self {
            RewardKind::Revenue => imp.reward,
            RewardKind::Click => imp.clicked as u8 as f64,
        }
    }
}

fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// IPS over explicit rewards and importance weights.
pub fn ips_weighted(rewards: &[f64], weights: &[f64], epsilon_min: f64) -> Result<UtilityEstimate> {
    check_weighted(rewards, weights)?;
    let n = rewards.len();
    let terms: Vec<f64> = rewards.iter().zip(weights).map(|(r, w)| r * w).collect();
    let mean = terms.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        terms.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (n - 1) as f64 / n as f64
    } else {
        0.0
    };
    Ok(UtilityEstimate {
        estimator: Estimator::Ips,
        value: mean,
        variance,
        ess: effective_sample_size(weights),
        n,
        epsilon_min,
    })
}

/// SNIPS over explicit rewards and importance weights, with delta-method
/// variance `mean((w_i (r_i - U))^2) / (n * mean(w)^2)`.
pub fn snips_weighted(rewards: &[f64], weights: &[f64], epsilon_min: f64) -> Result<UtilityEstimate> {
    check_weighted(rewards, weights)?;
    let n = rewards.len();
    let w_sum: f64 = weights.iter().sum();
    if !(w_sum > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    let value = rewards.iter().zip(weights).map(|(r, w)| r * w).sum::<f64>() / w_sum;
    let w_bar = w_sum / n as f64;
    let spread = rewards
        .iter()
        .zip(weights)
        .map(|(r, w)| {
            let d = w * (r - value);
            d * d
        })
        .sum::<f64>()
        / n as f64;
    Ok(UtilityEstimate {
        estimator: Estimator::Snips,
        value,
        variance: spread / (n as f64 * w_bar * w_bar),
        ess: effective_sample_size(weights),
        n,
        epsilon_min,
    })
}

fn check_weighted(rewards: &[f64], weights: &[f64]) -> Result<()> {
    if rewards.is_empty() {
        return Err(Error::EmptyInput("utility estimate"));
    }
    if rewards.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "rewards vs weights",
            left: rewards.len(),
            right: weights.len(),
        });
    }
    Ok(())
}

pub fn ips_estimate(
    impressions: &[LoggedImpression],
    table: &PropensityTable,
    reward: RewardKind,
) -> Result<UtilityEstimate> {
    let weights = table.weights(impressions)?;
    let rewards: Vec<f64> = impressions.iter().map(|i| reward.of(i)).collect();
    ips_weighted(&rewards, &weights, table.epsilon_min)
}

pub fn snips_estimate(
    impressions: &[LoggedImpression],
    table: &PropensityTable,
    reward: RewardKind,
) -> Result<UtilityEstimate> {
    let weights = table.weights(impressions)?;
    let rewards: Vec<f64> = impressions.iter().map(|i| reward.of(i)).collect();
    snips_weighted(&rewards, &weights, table.epsilon_min)
}

/// Contiguous runs of impressions sharing a slate id.
pub fn slate_ranges(impressions: &[LoggedImpression]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=impressions.len() {
        if i == impressions.len() || impressions[i].slate != impressions[start].slate {
            if i > start {
                out.push(start..i);
            }
            start = i;
        }
    }
    out
}

/// Soft probability of each item entering the top `k` of its slate:
/// `1 - (1 - p_i)^k` with `p = softmax(scores / tau)`.
pub fn soft_topk_inclusion(scores: &[f64], k: usize, tau: f64) -> Vec<f64> {
    softmax(scores, tau)
        .iter()
        .map(|p| 1.0 - (1.0 - p).powi(k as i32))
        .collect()
}

fn softmax(scores: &[f64], tau: f64) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| ((s - m) / tau).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|x| x / z).collect()
}

/// Logged batch for the counterfactual loss: per-impression ranking score,
/// reward and importance weight, grouped into slates.
#[derive(Debug, Clone, Copy)]
pub struct CfBatch<'a> {
    pub scores: &'a [f64],
    pub rewards: &'a [f64],
    pub weights: &'a [f64],
    pub slates: &'a [Range<usize>],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CfConfig {
    pub k: usize,
    pub tau: f64,
    pub alpha: f64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            k: 10,
            tau: 0.1,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CfLoss {
    pub loss: f64,
    pub value: f64,
    pub variance: f64,
    /// d loss / d score, aligned with the batch.
    pub grad: Vec<f64>,
}

/// `-U + alpha * Var(U)` where `U` is SNIPS over rewards scaled by each
/// item's soft top-k inclusion probability.
pub fn cf_loss(batch: CfBatch<'_>, config: &CfConfig) -> Result<CfLoss> {
    let n = batch.scores.len();
    if batch.rewards.len() != n || batch.weights.len() != n {
        return Err(Error::LengthMismatch {
            what: "counterfactual batch columns",
            left: n,
            right: batch.rewards.len().min(batch.weights.len()),
        });
    }
    if !(config.alpha >= 0.0) {
        return Err(Error::config("alpha", "must be nonnegative"));
    }
    if !(config.tau > 0.0) {
        return Err(Error::config("tau", "must be positive"));
    }
    if config.k == 0 {
        return Err(Error::config("top_k", "must be at least 1"));
    }
    let k = config.k as i32;
    let mut probs = vec![0.0; n];
    let mut inclusion = vec![0.0; n];
    for r in batch.slates {
        let p = softmax(&batch.scores[r.clone()], config.tau);
        for (j, i) in r.clone().enumerate() {
            probs[i] = p[j];
            inclusion[i] = 1.0 - (1.0 - p[j]).powi(k);
        }
    }
    let relaxed: Vec<f64> = inclusion.iter().zip(batch.rewards).map(|(pi, r)| pi * r).collect();
    let est = snips_weighted(&relaxed, batch.weights, 0.0)?;

    // d loss / d relaxed_j = -w_j/W + alpha * 2/W^2 [w_j^2 (x_j - U) - (w_j/W) sum_i w_i^2 (x_i - U)]
    let w_sum: f64 = batch.weights.iter().sum();
    let s: f64 = relaxed
        .iter()
        .zip(batch.weights)
        .map(|(x, w)| w * w * (x - est.value))
        .sum();
    let c = 2.0 / (w_sum * w_sum);
    let d_relaxed: Vec<f64> = relaxed
        .iter()
        .zip(batch.weights)
        .map(|(x, &w)| -w / w_sum + config.alpha * c * (w * w * (x - est.value) - w / w_sum * s))
        .collect();

    let mut grad = vec![0.0; n];
    for r in batch.slates {
        // chain through inclusion = 1 - (1 - p)^k and the softmax
        let g: Vec<f64> = r
            .clone()
            .map(|i| d_relaxed[i] * batch.rewards[i] * config.k as f64 * (1.0 - probs[i]).powi(k - 1))
            .collect();
        let mean_g: f64 = r.clone().zip(&g).map(|(i, gi)| probs[i] * gi).sum();
        for (j, i) in r.clone().enumerate() {
            grad[i] = probs[i] * (g[j] - mean_g) / config.tau;
        }
    }
    Ok(CfLoss {
        loss: -est.value + config.alpha * est.variance,
        value: est.value,
        variance: est.variance,
        grad,
    })
}

/// Bootstrap replicates of an estimator over impressions resampled with
/// replacement.
pub fn bootstrap(
    impressions: &[LoggedImpression],
    table: &PropensityTable,
    reward: RewardKind,
    estimator: Estimator,
    replicates: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let weights = table.weights(impressions)?;
    let rewards: Vec<f64> = impressions.iter().map(|i| reward.of(i)).collect();
    let n = impressions.len();
    let mut rs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    (0..replicates)
        .map(|_| {
            for j in 0..n {
                let i = rng.gen_range(0..n);
                rs[j] = rewards[i];
                ws[j] = weights[i];
            }
            match estimator {
                Estimator::Ips => ips_weighted(&rs, &ws, table.epsilon_min),
                Estimator::Snips => snips_weighted(&rs, &ws, table.epsilon_min),
            }
            .map(|e| e.value)
        })
        .collect()
}
