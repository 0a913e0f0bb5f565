//! Ranking, calibration and counterfactual evaluation metrics.

use serde::{Deserialize, Serialize};

use crate::counterfactual::{slate_ranges, snips_weighted, PropensityTable, RewardKind, UtilityEstimate};
use crate::error::{Error, Result};
use crate::model::rank_order;
use crate::simulator::LoggedImpression;

/// Rank-based (Mann-Whitney) AUC; tied scores receive half credit.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "auc scores vs labels",
            left: scores.len(),
            right: labels.len(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (1-based, tie-averaged) ranks of positives, kept doubled so that
    // half ranks stay integral.
    let mut twice_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let twice_avg_rank = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&o| labels[o]).count() as u128;
        twice_rank_sum += twice_avg_rank * pos_in_group;
        i = j + 1;
    }
    let p = positives as u128;
    let twice_u = twice_rank_sum - p * (p + 1);
    Ok(twice_u as f64 / (2.0 * positives as f64 * negatives as f64))
}

fn dcg(rels: &[f64], k: usize) -> f64 {
    rels.iter()
        .take(k)
        .enumerate()
        .map(|(i, r)| r / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG@k with linear gain; an all-zero list scores 0.
pub fn ndcg_at_k(ranked_relevances: &[f64], k: usize) -> f64 {
    let mut ideal = ranked_relevances.to_vec();
    ideal.sort_by(|a, b| b.total_cmp(a));
    let idcg = dcg(&ideal, k);
    if idcg <= 0.0 {
        return 0.0;
    }
    dcg(ranked_relevances, k) / idcg
}

/// Mean NDCG@k over slates, ranking each slate's impressions by `scores`.
/// Slates without any relevant item are left out of the mean.
pub fn mean_ndcg_at_k(scores: &[f64], impressions: &[LoggedImpression], relevance: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    let mut counted = 0usize;
    for r in slate_ranges(impressions) {
        let rel = &relevance[r.clone()];
        if rel.iter().all(|&x| x <= 0.0) {
            continue;
        }
        let ids: Vec<u64> = impressions[r.clone()].iter().map(|i| i.example_id).collect();
        let order = rank_order(&scores[r.clone()], &ids);
        let ranked: Vec<f64> = order.iter().map(|&o| rel[o]).collect();
        total += ndcg_at_k(&ranked, k);
        counted += 1;
    }
    if counted == 0 {
        0.0
    } else {
        total / counted as f64
    }
}

/// SNIPS utility of the impressions each slate's model ranking places in its
/// hard top `k`.
pub fn utility_at_k(
    scores: &[f64],
    impressions: &[LoggedImpression],
    table: &PropensityTable,
    k: usize,
    reward: RewardKind,
) -> Result<UtilityEstimate> {
    if scores.len() != impressions.len() {
        return Err(Error::LengthMismatch {
            what: "scores vs impressions",
            left: scores.len(),
            right: impressions.len(),
        });
    }
    let mut rewards = Vec::new();
    let mut weights = Vec::new();
    for r in slate_ranges(impressions) {
        let slate = &impressions[r.clone()];
        let ids: Vec<u64> = slate.iter().map(|i| i.example_id).collect();
        for &o in rank_order(&scores[r.clone()], &ids).iter().take(k) {
            rewards.push(reward.of(&slate[o]));
            weights.push(1.0 / table.propensity(slate[o].position)?);
        }
    }
    if rewards.is_empty() {
        return Err(Error::EmptyTopK(k));
    }
    snips_weighted(&rewards, &weights, table.epsilon_min)
}

/// Per-task values; `None` where a metric is undefined (e.g. single class).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerTask {
    pub rel: Option<f64>,
    pub rev: Option<f64>,
    pub risk: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: PerTask,
    pub ndcg_at_k: f64,
    pub ece: PerTask,
    pub utility_at_k: UtilityEstimate,
    pub k: usize,
    pub ece_bins: usize,
    pub ndcg_gain: String,
    pub ndcg_relevance: String,
    pub config_fingerprint: String,
    pub seed: u64,
    pub n_impressions: usize,
}

impl EvalReport {
    /// Headline CTR-task values in table order: AUC, NDCG@k, ECE, Utility@k.
    pub fn headline(&self) -> [f64; 4] {
        [
            self.auc.rel.unwrap_or(f64::NAN),
            self.ndcg_at_k,
            self.ece.rel.unwrap_or(f64::NAN),
            self.utility_at_k.value,
        ]
    }
}
