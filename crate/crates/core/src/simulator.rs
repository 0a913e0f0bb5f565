//! Synthetic ad-log simulator with a known ground-truth behavioral model.
//!
//! Users/ads are feature vectors (dense reals in `[0,1]` plus categorical ids).
//! A hidden logistic model defines each example's click probability, a second
//! hidden direction defines post-click conversion, and a third defines the
//! low-engagement risk. Logged traffic is produced by a logging policy under an
//! examination model: a click requires the position to be examined first, with
//! examination probability `e*(pos) = pos^(-eta)`.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// One user-ad pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub id: u64,
    pub dense: Vec<f64>,
    pub cats: Vec<u32>,
    pub true_ctr: f64,
    pub true_cvr: f64,
    /// Revenue realized if the example converts.
    pub true_revenue: f64,
    /// Probability of a low-engagement outcome.
    pub true_risk: f64,
    pub segment: usize,
}

impl Example {
    /// Expected reward of a full-examination impression: `ctr * cvr * revenue`.
    pub fn true_utility(&self) -> f64 {
        self.true_ctr * self.true_cvr * self.true_revenue
    }
}

/// A serving-time record of one displayed ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedImpression {
    /// Index of the slate this impression belongs to (not exported; slates are
    /// recovered from position resets on import).
    pub slate: usize,
    pub example_id: u64,
    /// 1-based display position.
    pub position: usize,
    /// Simulator-private ground truth; on import this is set equal to `clicked`.
    pub examined: bool,
    pub clicked: bool,
    pub converted: bool,
    pub bid: f64,
    pub randomized: bool,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BidParams {
    pub mu: f64,
    pub sigma: f64,
}

impl BidParams {
    /// Closed-form mean of the log-normal bid distribution.
    pub fn mean(&self) -> f64 {
        (self.mu + 0.5 * self.sigma * self.sigma).exp()
    }
}

/// How the logging policy scores candidates.
///
/// The score is `quality * logit(true_ctr) + (1 - quality) * legacy(x) + noise * N(0,1)`
/// where `legacy` is a fixed linear function of the dense features that is
/// unrelated to click propensity. Low quality means strong confounding between
/// display position and features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoggingPolicy {
    pub quality: f64,
    pub noise: f64,
}

impl Default for LoggingPolicy {
    fn default() -> Self {
        LoggingPolicy {
            quality: 0.3,
            noise: 0.5,
        }
    }
}

/// Simulator configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Number of examples.
    pub n: usize,
    pub seed: u64,
    pub clusters: usize,
    /// Examination decay exponent: `e*(pos) = pos^(-eta)`.
    pub eta: f64,
    pub randomized_fraction: f64,
    pub slate_size: usize,
    pub candidates_per_slate: usize,
    pub n_slates: usize,
    /// Per-cluster log-normal bid parameters; drawn from the seed when absent.
    pub bid_params: Option<Vec<BidParams>>,
    pub n_dense: usize,
    pub n_cats: usize,
    pub vocab: usize,
    pub base_cvr: f64,
    pub revenue_sigma: f64,
    pub logging_policy: LoggingPolicy,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 20_000,
            seed: 0,
            clusters: 10,
            eta: 1.0,
            randomized_fraction: 0.01,
            slate_size: 20,
            candidates_per_slate: 30,
            n_slates: 2_000,
            bid_params: None,
            n_dense: 8,
            n_cats: 6,
            vocab: 100,
            base_cvr: 0.10,
            revenue_sigma: 0.3,
            logging_policy: LoggingPolicy::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if self.clusters < 2 {
            return Err(Error::config("clusters", "must be at least 2"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(Error::config("eta", "must be finite and nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.randomized_fraction) {
            return Err(Error::config("randomized_fraction", "must lie in [0, 1]"));
        }
        if self.slate_size == 0 {
            return Err(Error::config("slate_size", "must be at least 1"));
        }
        if self.slate_size > self.candidates_per_slate {
            return Err(Error::config(
                "slate_size",
                format!(
                    "{} exceeds candidates_per_slate {}",
                    self.slate_size, self.candidates_per_slate
                ),
            ));
        }
        if self.candidates_per_slate > self.n {
            return Err(Error::config(
                "candidates_per_slate",
                format!("{} exceeds n {}", self.candidates_per_slate, self.n),
            ));
        }
        if self.n_dense == 0 {
            return Err(Error::config("n_dense", "must be at least 1"));
        }
        if self.vocab == 0 {
            return Err(Error::config("vocab", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.base_cvr) {
            return Err(Error::config("base_cvr", "must lie in [0, 1]"));
        }
        if !(self.revenue_sigma >= 0.0) {
            return Err(Error::config("revenue_sigma", "must be nonnegative"));
        }
        if let Some(bids) = &self.bid_params {
            if bids.len() != self.clusters {
                return Err(Error::config(
                    "bid_params",
                    format!("expected {} entries, got {}", self.clusters, bids.len()),
                ));
            }
            if bids.iter().any(|b| !b.mu.is_finite() || !(b.sigma >= 0.0)) {
                return Err(Error::config("bid_params", "mu must be finite and sigma >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.logging_policy.quality) {
            return Err(Error::config("logging_policy.quality", "must lie in [0, 1]"));
        }
        if !(self.logging_policy.noise >= 0.0) {
            return Err(Error::config("logging_policy.noise", "must be nonnegative"));
        }
        Ok(())
    }
}

/// Hidden parameters of the behavioral model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub eta: f64,
    /// `e*(pos)` for positions `1..=slate_size`.
    pub examination: Vec<f64>,
    pub bid_params: Vec<BidParams>,
    pub base_cvr: f64,
    pub ctr_bias: f64,
    pub dense_weights: Vec<f64>,
    /// `cat_effects[slot][id]`: hidden per-category logit contribution.
    pub cat_effects: Vec<Vec<f64>>,
    pub cvr_weights: Vec<f64>,
    pub risk_weights: Vec<f64>,
    pub legacy_weights: Vec<f64>,
    pub centers: Vec<Vec<f64>>,
    pub revenue_sigma: f64,
}

impl GroundTruth {
    pub fn examination_at(&self, position: usize) -> f64 {
        examination(self.eta, position)
    }

    pub fn ctr_logit(&self, dense: &[f64], cats: &[u32]) -> f64 {
        let mut z = self.ctr_bias;
        for (w, x) in self.dense_weights.iter().zip(dense) {
            z += w * (x - 0.5);
        }
        for (slot, &id) in cats.iter().enumerate() {
            z += self.cat_effects[slot][id as usize];
        }
        z
    }

    /// Hidden feature representation feeding the conversion and risk models.
    pub fn embed(&self, dense: &[f64], cats: &[u32]) -> Vec<f64> {
        dense
            .iter()
            .map(|x| x - 0.5)
            .chain(
                cats.iter()
                    .enumerate()
                    .map(|(slot, &id)| self.cat_effects[slot][id as usize]),
            )
            .collect()
    }

    /// `base_cvr * 2 sigma(w . emb)`, clipped to `[0, 1]`.
    pub fn cvr_prob(&self, emb: &[f64]) -> f64 {
        let score: f64 = self.cvr_weights.iter().zip(emb).map(|(w, e)| w * e).sum();
        (self.base_cvr * 2.0 * sigmoid(score)).clamp(0.0, 1.0)
    }

    pub fn risk_prob(&self, emb: &[f64]) -> f64 {
        let score: f64 = self.risk_weights.iter().zip(emb).map(|(w, e)| w * e).sum();
        sigmoid(score)
    }

    fn nearest_center(&self, dense: &[f64]) -> usize {
        nearest(&self.centers, dense)
    }
}

/// `pos^(-eta)`; equals 1 at the top position and is nonincreasing.
pub fn examination(eta: f64, position: usize) -> f64 {
    (position.max(1) as f64).powf(-eta)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centers: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(center, x);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Lloyd iterations on a reference sample; centers are returned sorted by
/// their first coordinate so cluster ids are canonical.
fn kmeans(points: &[Vec<f64>], k: usize, iters: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut centers: Vec<Vec<f64>> = points.iter().take(k).cloned().collect();
    for _ in 0..iters {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let c = nearest(&centers, p);
            counts[c] += 1;
            for (s, x) in sums[c].iter_mut().zip(p) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                for (cc, s) in centers[c].iter_mut().zip(&sums[c]) {
                    *cc = s / counts[c] as f64;
                }
            }
        }
    }
    centers.sort_by(|a, b| a[0].total_cmp(&b[0]).then_with(|| a[1..].partial_cmp(&b[1..]).unwrap()));
    centers
}

/// Capacity-constrained nearest-center assignment: pairs are taken in order of
/// increasing distance, each cluster holding at most `ceil(n / k)` points.
fn balanced_assignment(centers: &[Vec<f64>], points: &[Vec<f64>]) -> Vec<usize> {
    let k = centers.len();
    let n = points.len();
    let capacity = n.div_ceil(k);
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * k);
    for (i, p) in points.iter().enumerate() {
        for (c, center) in centers.iter().enumerate() {
            pairs.push((sq_dist(center, p), i, c));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![usize::MAX; n];
    let mut load = vec![0usize; k];
    let mut remaining = n;
    for (_, i, c) in pairs {
        if remaining == 0 {
            break;
        }
        if assigned[i] == usize::MAX && load[c] < capacity {
            assigned[i] = c;
            load[c] += 1;
            remaining -= 1;
        }
    }
    assigned
}

/// Slate-level logging parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlateSpec {
    pub n_slates: usize,
    pub slate_size: usize,
    pub candidates: usize,
    pub randomized_fraction: f64,
}

impl From<&SimConfig> for SlateSpec {
    fn from(c: &SimConfig) -> Self {
        SlateSpec {
            n_slates: c.n_slates,
            slate_size: c.slate_size,
            candidates: c.candidates_per_slate,
            randomized_fraction: c.randomized_fraction,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    truth: GroundTruth,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = rng::stream(config.seed, "ground-truth");
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let gauss = |rng: &mut StreamRng, scale: f64| scale * std_normal.sample(rng);

        let dense_weights: Vec<f64> = (0..config.n_dense).map(|_| gauss(&mut rng, 1.5)).collect();
        let cat_effects: Vec<Vec<f64>> = (0..config.n_cats)
            .map(|_| (0..config.vocab).map(|_| gauss(&mut rng, 0.5)).collect())
            .collect();
        let emb_dim = config.n_dense + config.n_cats;
        let cvr_weights: Vec<f64> = (0..emb_dim).map(|_| gauss(&mut rng, 1.0)).collect();
        let risk_weights: Vec<f64> = (0..emb_dim).map(|_| gauss(&mut rng, 1.0)).collect();
        let legacy_weights: Vec<f64> = (0..config.n_dense).map(|_| gauss(&mut rng, 1.5)).collect();

        let bid_params = match &config.bid_params {
            Some(b) => b.clone(),
            None => (0..config.clusters)
                .map(|_| BidParams {
                    mu: rng.gen_range(-0.5..0.5),
                    sigma: 0.4,
                })
                .collect(),
        };

        let reference: Vec<Vec<f64>> = (0..4096)
            .map(|_| (0..config.n_dense).map(|_| rng.gen::<f64>()).collect())
            .collect();
        let centers = kmeans(&reference, config.clusters, 25);

        let truth = GroundTruth {
            eta: config.eta,
            examination: (1..=config.slate_size).map(|p| examination(config.eta, p)).collect(),
            bid_params,
            base_cvr: config.base_cvr,
            ctr_bias: -1.8,
            dense_weights,
            cat_effects,
            cvr_weights,
            risk_weights,
            legacy_weights,
            centers,
            revenue_sigma: config.revenue_sigma,
        };
        Ok(Simulator { config, truth })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Overrides the examination exponent (and the stored curve).
    pub fn with_eta(mut self, eta: f64) -> Self {
        self.config.eta = eta;
        self.truth.eta = eta;
        self.truth.examination = (1..=self.config.slate_size).map(|p| examination(eta, p)).collect();
        self
    }

    /// Draws dense features uniformly and category ids uniformly; latent
    /// rates follow from the hidden model.
    pub fn sample_features(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<u32>) {
        let dense = (0..self.config.n_dense).map(|_| rng.gen::<f64>()).collect();
        let cats = (0..self.config.n_cats)
            .map(|_| rng.gen_range(0..self.config.vocab as u32))
            .collect();
        (dense, cats)
    }

    pub fn generate_examples(&self, n: usize, seed: u64) -> Vec<Example> {
        let mut rng = rng::stream(seed, "examples");
        let revenue = LogNormal::new(0.0, self.config.revenue_sigma).expect("valid log-normal");
        let mut out = Vec::with_capacity(n);
        for id in 0..n {
            let (dense, cats) = self.sample_features(&mut rng);
            let emb = self.truth.embed(&dense, &cats);
            let true_revenue = if self.config.revenue_sigma == 0.0 {
                1.0
            } else {
                revenue.sample(&mut rng)
            };
            out.push(Example {
                id: id as u64,
                true_ctr: sigmoid(self.truth.ctr_logit(&dense, &cats)),
                true_cvr: self.truth.cvr_prob(&emb),
                true_revenue,
                true_risk: self.truth.risk_prob(&emb),
                segment: 0,
                dense,
                cats,
            });
        }
        let points: Vec<Vec<f64>> = out.iter().map(|e| e.dense.clone()).collect();
        let segments = if n >= self.config.clusters {
            balanced_assignment(&self.truth.centers, &points)
        } else {
            points.iter().map(|p| self.truth.nearest_center(p)).collect()
        };
        for (e, s) in out.iter_mut().zip(segments) {
            e.segment = s;
        }
        out
    }

    /// Conversion happens only on clicks, with the example's latent rate.
    pub fn synthesize_cvr(&self, example: &Example, clicked: bool, rng: &mut impl Rng) -> bool {
        if !clicked {
            return false;
        }
        rng.gen::<f64>() < example.true_cvr
    }

    pub fn assign_bid(&self, example: &Example, rng: &mut impl Rng) -> f64 {
        let p = self.truth.bid_params[example.segment];
        if p.sigma == 0.0 {
            return p.mu.exp();
        }
        LogNormal::new(p.mu, p.sigma)
            .expect("validated bid params")
            .sample(rng)
    }

    /// Scores of the logging (production) policy for each example.
    pub fn logging_scores(&self, examples: &[Example], seed: u64) -> Vec<f64> {
        let mut rng = rng::stream(seed, "logging-policy");
        let lp = self.config.logging_policy;
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        examples
            .iter()
            .map(|e| {
                let legacy: f64 = self
                    .truth
                    .legacy_weights
                    .iter()
                    .zip(&e.dense)
                    .map(|(w, x)| w * (x - 0.5))
                    .sum();
                lp.quality * logit(e.true_ctr)
                    + (1.0 - lp.quality) * legacy
                    + lp.noise * std_normal.sample(&mut rng)
            })
            .collect()
    }

    /// Serves `n_slates` slates and records the resulting impressions.
    ///
    /// Each slate draws `candidates` examples without replacement; with
    /// probability `randomized_fraction` they are shuffled uniformly,
    /// otherwise ordered by `policy_scores` (ties by ascending id). The top
    /// `slate_size` are displayed. A click needs examination
    /// (`Bernoulli(e*(pos))`) and then `Bernoulli(true_ctr)`.
    pub fn simulate_slate_log(
        &self,
        examples: &[Example],
        policy_scores: &[f64],
        spec: &SlateSpec,
        rng: &mut impl Rng,
    ) -> Result<Vec<LoggedImpression>> {
        if spec.slate_size > spec.candidates || spec.candidates > examples.len() {
            return Err(Error::SlateTooLarge {
                slate_size: spec.slate_size,
                candidates: spec.candidates.min(examples.len()),
            });
        }
        if !(0.0..=1.0).contains(&spec.randomized_fraction) {
            return Err(Error::config("randomized_fraction", "must lie in [0, 1]"));
        }
        if policy_scores.len() != examples.len() {
            return Err(Error::LengthMismatch {
                what: "policy scores vs examples",
                left: policy_scores.len(),
                right: examples.len(),
            });
        }
        let mut log = Vec::with_capacity(spec.n_slates * spec.slate_size);
        for slate in 0..spec.n_slates {
            let mut cand = rand::seq::index::sample(rng, examples.len(), spec.candidates).into_vec();
            let randomized = rng.gen::<f64>() < spec.randomized_fraction;
            if randomized {
                cand.shuffle(rng);
            } else {
                cand.sort_by(|&a, &b| {
                    policy_scores[b]
                        .total_cmp(&policy_scores[a])
                        .then(examples[a].id.cmp(&examples[b].id))
                });
            }
            for (i, &idx) in cand.iter().take(spec.slate_size).enumerate() {
                let ex = &examples[idx];
                let position = i + 1;
                let examined = rng.gen::<f64>() < self.truth.examination_at(position);
                let clicked = examined && rng.gen::<f64>() < ex.true_ctr;
                let converted = self.synthesize_cvr(ex, clicked, rng);
                let bid = self.assign_bid(ex, rng);
                log.push(LoggedImpression {
                    slate,
                    example_id: ex.id,
                    position,
                    examined,
                    clicked,
                    converted,
                    bid,
                    randomized,
                    reward: if converted { ex.true_revenue } else { 0.0 },
                });
            }
        }
        Ok(log)
    }
}

/// Convenience wrapper: default configuration with the given cluster count,
/// ground truth and features both derived from `seed`.
pub fn generate_examples(n: usize, seed: u64, n_clusters: usize) -> Result<Vec<Example>> {
    let sim = Simulator::new(SimConfig {
        n,
        seed,
        clusters: n_clusters,
        candidates_per_slate: SimConfig::default().candidates_per_slate.min(n),
        slate_size: SimConfig::default().slate_size.min(n),
        ..SimConfig::default()
    })?;
    Ok(sim.generate_examples(n, seed))
}

/// Partition examples by segment id into a train and an eval set.
pub fn cluster_split(
    examples: &[Example],
    train_clusters: &[usize],
    eval_clusters: &[usize],
) -> Result<(Vec<Example>, Vec<Example>)> {
    if train_clusters.is_empty() {
        return Err(Error::EmptyClusterSet("train"));
    }
    if eval_clusters.is_empty() {
        return Err(Error::EmptyClusterSet("eval"));
    }
    if let Some(&c) = train_clusters.iter().find(|c| eval_clusters.contains(c)) {
        return Err(Error::OverlappingClusters(c));
    }
    let train = examples
        .iter()
        .filter(|e| train_clusters.contains(&e.segment))
        .cloned()
        .collect();
    let eval = examples
        .iter()
        .filter(|e| eval_clusters.contains(&e.segment))
        .cloned()
        .collect();
    Ok((train, eval))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sim(clusters: usize) -> Simulator {
        Simulator::new(SimConfig {
            clusters,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn single_example_is_populated() {
        let ex = generate_examples(1, 0, 2).unwrap();
        assert_eq!(ex.len(), 1);
        let e = &ex[0];
        assert_eq!(e.dense.len(), 8);
        assert_eq!(e.cats.len(), 6);
        assert!(e.true_ctr > 0.0 && e.true_ctr < 1.0);
        assert!((0.0..=1.0).contains(&e.true_cvr));
        assert!(e.true_revenue >= 0.0);
        assert!(e.segment < 2);
        assert!(e.cats.iter().all(|&c| c < 100));
        assert!(e.dense.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn examination_curve_is_anchored_and_monotone() {
        let s = sim(4);
        let t = s.truth();
        assert_eq!(t.examination[0], 1.0);
        assert!(t.examination.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn clusters_are_balanced() {
        let s = sim(4);
        let ex = s.generate_examples(1001, 3);
        let mut counts = [0usize; 4];
        for e in &ex {
            counts[e.segment] += 1;
        }
        assert!(counts.iter().all(|&c| (240..=251).contains(&c)), "{counts:?}");
        assert_eq!(counts.iter().sum::<usize>(), 1001);
    }

    #[test]
    fn unclicked_never_converts() {
        let s = sim(2);
        let ex = s.generate_examples(10, 1);
        let mut rng = rng::stream(0, "t");
        for e in &ex {
            assert!(!s.synthesize_cvr(e, false, &mut rng));
        }
    }

    #[test]
    fn degenerate_bid_distribution() {
        let s = Simulator::new(SimConfig {
            clusters: 2,
            bid_params: Some(vec![BidParams { mu: 0.3, sigma: 0.0 }, BidParams { mu: -1.0, sigma: 0.0 }]),
            ..SimConfig::default()
        })
        .unwrap();
        let ex = s.generate_examples(20, 1);
        let mut rng = rng::stream(0, "bids");
        for e in &ex {
            let expect = s.truth().bid_params[e.segment].mu.exp();
            assert_eq!(s.assign_bid(e, &mut rng), expect);
        }
    }

    #[test]
    fn slate_too_large_is_rejected() {
        let s = sim(2);
        let ex = s.generate_examples(50, 1);
        let scores = vec![0.0; ex.len()];
        let spec = SlateSpec {
            n_slates: 1,
            slate_size: 11,
            candidates: 10,
            randomized_fraction: 0.0,
        };
        let err = s.simulate_slate_log(&ex, &scores, &spec, &mut rng::stream(0, "x"));
        assert!(matches!(err, Err(Error::SlateTooLarge { .. })));
    }

    #[test]
    fn overlapping_clusters_rejected() {
        let ex = generate_examples(100, 0, 4).unwrap();
        assert!(matches!(
            cluster_split(&ex, &[0, 1], &[1, 2]),
            Err(Error::OverlappingClusters(1))
        ));
        assert!(cluster_split(&ex, &[], &[1]).is_err());
    }

    #[test]
    fn config_validation() {
        let bad = SimConfig {
            clusters: 1,
            ..SimConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config { field, .. }) if field == "clusters"));
        let bad = SimConfig {
            randomized_fraction: 1.5,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
