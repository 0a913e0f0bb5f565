//! Training-time scale calibration.
//!
//! Examples are partitioned into `K` context buckets (segment id crossed with
//! within-segment quantiles of a dense feature). The calibration loss is the
//! sum over tasks and non-empty buckets of `|mean prediction - empirical rate|`,
//! which is differentiable almost everywhere and pulls every bucket's average
//! score onto its observed rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simulator::Example;

/// Which context features define the buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BucketKey {
    /// Segment id crossed with quantiles of dense feature `feature`.
    SegmentQuantile { feature: usize },
    Segment,
}

impl Default for BucketKey {
    fn default() -> Self {
        BucketKey::SegmentQuantile { feature: 0 }
    }
}

impl BucketKey {
    pub fn describe(&self) -> String {
        match self {
            BucketKey::SegmentQuantile { feature } => {
                format!("segment x quantile(dense[{feature}])")
            }
            BucketKey::Segment => "segment".into(),
        }
    }
}

/// A bucket key with quantile boundaries frozen from a reference set, so the
/// same partition applies to training, validation and evaluation rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedBucketKey {
    pub key: BucketKey,
    pub k: usize,
    pub per_segment: usize,
    /// `boundaries[segment]`: ascending cut points for that segment.
    pub boundaries: Vec<Vec<f64>>,
}

impl FittedBucketKey {
    pub fn fit(examples: &[Example], k: usize, key: BucketKey) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("k_buckets", "must be at least 1"));
        }
        let n_segments = examples.iter().map(|e| e.segment + 1).max().unwrap_or(1);
        let per_segment = match key {
            BucketKey::Segment => 1,
            BucketKey::SegmentQuantile { .. } => (k / n_segments).max(1),
        };
        let mut boundaries = vec![Vec::new(); n_segments];
        if let BucketKey::SegmentQuantile { feature } = key {
            let mut values: Vec<Vec<f64>> = vec![Vec::new(); n_segments];
            for e in examples {
                let x = *e.dense.get(feature).ok_or_else(|| {
                    Error::config("bucket_key.feature", format!("dense feature {feature} does not exist"))
                })?;
                values[e.segment].push(x);
            }
            for (seg, mut v) in values.into_iter().enumerate() {
                if v.is_empty() {
                    continue;
                }
                v.sort_by(f64::total_cmp);
                boundaries[seg] = (1..per_segment).map(|j| v[j * v.len() / per_segment]).collect();
            }
        }
        Ok(FittedBucketKey {
            key,
            k,
            per_segment,
            boundaries,
        })
    }

    pub fn bucket_of(&self, example: &Example) -> usize {
        let qbin = match (self.key, self.boundaries.get(example.segment)) {
            (BucketKey::SegmentQuantile { feature }, Some(cuts)) => {
                let x = example.dense.get(feature).copied().unwrap_or(0.0);
                cuts.partition_point(|&c| c <= x)
            }
            _ => 0,
        };
        (example.segment * self.per_segment + qbin) % self.k
    }

    pub fn assign(&self, examples: &[Example]) -> BucketAssignment {
        BucketAssignment::new(
            self.k,
            examples.iter().map(|e| self.bucket_of(e)).collect(),
            self.key.describe(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketAssignment {
    pub k: usize,
    pub buckets: Vec<usize>,
    pub key_description: String,
}

impl BucketAssignment {
    pub fn new(k: usize, buckets: Vec<usize>, key_description: String) -> Self {
        debug_assert!(buckets.iter().all(|&b| b < k));
        BucketAssignment {
            k,
            buckets,
            key_description,
        }
    }

    pub fn len(&self) -> usize {
        self.buckets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.k];
        for &b in &self.buckets {
            c[b] += 1;
        }
        c
    }

    /// Bucket ids with no members.
    pub fn empty_buckets(&self) -> Vec<usize> {
        self.counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(b, _)| b)
            .collect()
    }
}

/// Fit the key on `examples` and assign each of them to a bucket.
pub fn assign_buckets(examples: &[Example], k: usize, key: BucketKey) -> Result<BucketAssignment> {
    Ok(FittedBucketKey::fit(examples, k, key)?.assign(examples))
}

/// Per-bucket mean of `values`; `None` for buckets without members.
pub fn bucket_means(values: &[f64], buckets: &[usize], k: usize) -> Vec<Option<f64>> {
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&v, &b) in values.iter().zip(buckets) {
        sums[b] += v;
        counts[b] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
        .collect()
}

/// Loss and gradient of one task's bucket L1 term.
#[derive(Debug, Clone, PartialEq)]
pub struct BucketL1 {
    pub loss: f64,
    /// d loss / d prediction, aligned with the input predictions.
    pub grad: Vec<f64>,
    /// Buckets that had members but no target, or no members at all.
    pub skipped: Vec<usize>,
}

/// `sum_k |mean(preds in k) - target_k|` over buckets with members and a target.
///
/// The subgradient at a zero gap is taken as 0.
pub fn bucket_l1(preds: &[f64], buckets: &[usize], targets: &[Option<f64>]) -> Result<BucketL1> {
    if preds.len() != buckets.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs bucket ids",
            left: preds.len(),
            right: buckets.len(),
        });
    }
    let k = targets.len();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&p, &b) in preds.iter().zip(buckets) {
        if b >= k {
            return Err(Error::config("bucket", format!("bucket id {b} outside [0, {k})")));
        }
        sums[b] += p;
        counts[b] += 1;
    }
    let mut loss = 0.0;
    let mut slope = vec![0.0; k];
    let mut skipped = Vec::new();
    for b in 0..k {
        match (counts[b], targets[b]) {
            (0, _) | (_, None) => skipped.push(b),
            (c, Some(t)) => {
                let gap = sums[b] / c as f64 - t;
                loss += gap.abs();
                let sign = if gap > 0.0 {
                    1.0
                } else if gap < 0.0 {
                    -1.0
                } else {
                    0.0
                };
                slope[b] = sign / c as f64;
            }
        }
    }
    let grad = buckets.iter().map(|&b| slope[b]).collect();
    Ok(BucketL1 {
        loss,
        grad,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationLoss {
    pub loss: f64,
    /// `grads[t][i]`: derivative w.r.t. prediction `i` of task `t`.
    pub grads: Vec<Vec<f64>>,
    pub skipped_buckets: Vec<usize>,
}

/// Bucket calibration loss summed over tasks, with empirical rates taken from
/// `labels` under the shared `assignment`.
pub fn calibration_loss(
    preds: &[&[f64]],
    labels: &[&[f64]],
    assignment: &BucketAssignment,
) -> Result<CalibrationLoss> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "tasks in predictions vs labels",
            left: preds.len(),
            right: labels.len(),
        });
    }
    let mut out = CalibrationLoss {
        loss: 0.0,
        grads: Vec::with_capacity(preds.len()),
        skipped_buckets: assignment.empty_buckets(),
    };
    for (p, y) in preds.iter().zip(labels) {
        if p.len() != assignment.len() || y.len() != assignment.len() {
            return Err(Error::LengthMismatch {
                what: "predictions/labels vs bucket assignment",
                left: p.len().max(y.len()),
                right: assignment.len(),
            });
        }
        let targets = bucket_means(y, &assignment.buckets, assignment.k);
        let term = bucket_l1(p, &assignment.buckets, &targets)?;
        out.loss += term.loss;
        out.grads.push(term.grad);
    }
    Ok(out)
}

/// One row of the bucket report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub task: String,
    pub bucket: usize,
    pub count: usize,
    pub mean_pred: f64,
    pub empirical_rate: f64,
    pub abs_gap: f64,
}

/// Per-(task, bucket) statistics; empty buckets are reported with zero count.
pub fn bucket_stats(
    task: &str,
    preds: &[f64],
    labels: &[f64],
    buckets: &[usize],
    k: usize,
) -> Vec<BucketStat> {
    let means = bucket_means(preds, buckets, k);
    let rates = bucket_means(labels, buckets, k);
    let mut counts = vec![0usize; k];
    for &b in buckets {
        counts[b] += 1;
    }
    (0..k)
        .map(|b| {
            let m = means[b].unwrap_or(0.0);
            let r = rates[b].unwrap_or(0.0);
            BucketStat {
                task: task.to_string(),
                bucket: b,
                count: counts[b],
                mean_pred: m,
                empirical_rate: r,
                abs_gap: (m - r).abs(),
            }
        })
        .collect()
}

/// Index of the equal-width bin holding `p`, with right-closed edges
/// `(b/B, (b+1)/B]`; 0 goes to the first bin and 1 to the last.
pub fn ece_bin(p: f64, n_bins: usize) -> usize {
    let nb = n_bins as f64;
    let mut idx = ((p * nb).ceil() as isize - 1).clamp(0, n_bins as isize - 1) as usize;
    while idx > 0 && p <= idx as f64 / nb {
        idx -= 1;
    }
    while idx + 1 < n_bins && p > (idx + 1) as f64 / nb {
        idx += 1;
    }
    idx
}

/// Expected calibration error over equal-width bins.
pub fn ece(preds: &[f64], labels: &[f64], n_bins: usize) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("ece predictions"));
    }
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "ece predictions vs labels",
            left: preds.len(),
            right: labels.len(),
        });
    }
    if n_bins == 0 {
        return Err(Error::config("ece_bins", "must be at least 1"));
    }
    if let Some(p) = preds.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::config("predictions", format!("{p} is outside [0, 1]")));
    }
    let mut conf = vec![0.0; n_bins];
    let mut acc = vec![0.0; n_bins];
    let mut count = vec![0usize; n_bins];
    for (&p, &y) in preds.iter().zip(labels) {
        let b = ece_bin(p, n_bins);
        conf[b] += p;
        acc[b] += y;
        count[b] += 1;
    }
    let n = preds.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let c = count[b] as f64;
            (c / n) * (acc[b] / c - conf[b] / c).abs()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::generate_examples;

    #[test]
    fn single_bucket() {
        let ex = generate_examples(50, 1, 3).unwrap();
        let a = assign_buckets(&ex, 1, BucketKey::default()).unwrap();
        assert!(a.buckets.iter().all(|&b| b == 0));
    }

    #[test]
    fn identical_context_same_bucket() {
        let ex = generate_examples(40, 2, 4).unwrap();
        let key = FittedBucketKey::fit(&ex, 20, BucketKey::default()).unwrap();
        let mut twin = ex[5].clone();
        twin.id = 999;
        twin.cats = vec![0; 6];
        assert_eq!(key.bucket_of(&ex[5]), key.bucket_of(&twin));
    }

    #[test]
    fn exact_match_gives_zero_loss() {
        let preds = [0.25, 0.75, 0.5, 0.25];
        let labels = [0.0, 1.0, 0.125, 0.625];
        let a = BucketAssignment::new(2, vec![0, 0, 1, 1], "test".into());
        let l = calibration_loss(&[&preds], &[&labels], &a).unwrap();
        assert!(l.loss.abs() < 1e-15);
        assert!(l.grads[0].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn hand_evaluated_bucket() {
        // one bucket of four, mean prediction 0.6 vs rate 0.5
        let preds = [0.5, 0.7, 0.6, 0.6];
        let labels = [1.0, 0.0, 1.0, 0.0];
        let a = BucketAssignment::new(1, vec![0; 4], "test".into());
        let l = calibration_loss(&[&preds], &[&labels], &a).unwrap();
        assert!((l.loss - 0.1).abs() < 1e-12);
        assert!(l.grads[0].iter().all(|&g| g == 0.25));
    }

    #[test]
    fn length_mismatch() {
        let a = BucketAssignment::new(1, vec![0; 3], "test".into());
        assert!(calibration_loss(&[&[0.1, 0.2]], &[&[0.0, 1.0]], &a).is_err());
    }

    #[test]
    fn empty_buckets_are_flagged() {
        let a = BucketAssignment::new(3, vec![0, 0, 2], "test".into());
        let l = calibration_loss(&[&[0.1, 0.2, 0.3]], &[&[0.0, 1.0, 1.0]], &a).unwrap();
        assert_eq!(l.skipped_buckets, vec![1]);
    }

    #[test]
    fn ece_edge_cases() {
        assert!((ece(&[0.9; 5], &[0.0; 5], 10).unwrap() - 0.9).abs() < 1e-15);
        // rate in bin (0.2, 0.3] is 1/4 and in (0.7, 0.8] is 3/4
        let preds = [0.25, 0.25, 0.25, 0.25, 0.75, 0.75, 0.75, 0.75];
        let labels = [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert!(ece(&preds, &labels, 10).unwrap().abs() < 1e-15);
        assert!(ece(&[], &[], 10).is_err());
    }

    #[test]
    fn bins_are_right_closed() {
        assert_eq!(ece_bin(0.0, 10), 0);
        assert_eq!(ece_bin(0.1, 10), 0);
        assert_eq!(ece_bin(0.3, 10), 2);
        assert_eq!(ece_bin(0.30000001, 10), 3);
        assert_eq!(ece_bin(1.0, 10), 9);
        assert_eq!(ece_bin(0.7, 1), 0);
    }
}
