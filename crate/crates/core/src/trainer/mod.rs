//! Composite-loss training loop.
//!
//! The objective on a batch of whole slates is
//! `L = L_point + w_cal * L_cal + L_con + w_cf * L_cf`:
//!
//! * `L_point`: binary cross-entropy of the relevance head against clicks, of
//!   the revenue head against conversions on clicked rows only, and of the
//!   risk head against the low-engagement rate;
//! * `L_cal`: bucket calibration against epoch-level empirical rates;
//! * `L_con`: multiplier-weighted CPC and risk hinges;
//! * `L_cf`: negative variance-regularized SNIPS utility of the soft top-k.
//!
//! Parameters are updated with Adam; multipliers by projected dual ascent once
//! per epoch on epoch-averaged constraint values.

mod experiment;

use std::cell::RefCell;
use std::ops::Range;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{bucket_l1, bucket_means, ece, BucketKey};
use crate::constraints::{batch_cpc, constraint_penalty, dual_update, fairness_penalty, DualState, FairnessConfig};
use crate::counterfactual::{cf_loss, CfBatch, CfConfig, PropensityConfig, RewardKind};
use crate::error::{Error, Result};
use crate::metrics::auc;
use crate::model::{backward, forward_batch, Combiner, Features, GradientBundle, HeadOutput, ModelParams, ModelShape, N_TASKS};
use crate::rng;
use crate::simulator::{sigmoid, Example};

pub use experiment::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DualMode {
    /// Multipliers start at their initial values and follow dual ascent.
    #[default]
    Ascent,
    /// Multipliers stay at their initial values.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DualConfig {
    #[serde(default = "half")]
    pub lambda_c_init: f64,
    #[serde(default = "half")]
    pub lambda_r_init: f64,
    pub c_max: f64,
    pub r_max: f64,
    #[serde(default = "default_eta_dual")]
    pub eta_dual: f64,
    #[serde(default)]
    pub mode: DualMode,
    #[serde(default)]
    pub fairness: FairnessConfig,
}

fn half() -> f64 {
    0.5
}

fn default_eta_dual() -> f64 {
    0.01
}

impl DualConfig {
    pub fn new(c_max: f64, r_max: f64) -> Self {
        DualConfig {
            lambda_c_init: 0.5,
            lambda_r_init: 0.5,
            c_max,
            r_max,
            eta_dual: 0.01,
            mode: DualMode::Ascent,
            fairness: FairnessConfig::default(),
        }
    }

    pub fn initial_state(&self) -> Result<DualState> {
        DualState::new(self.lambda_c_init, self.lambda_r_init, self.c_max, self.r_max, self.eta_dual)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ablation {
    pub no_calibration: bool,
    pub no_constraints: bool,
    pub no_counterfactual: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

fn default_lr() -> f64 {
    1e-3
}
fn default_batch_slates() -> usize {
    16
}
fn default_epochs() -> usize {
    20
}
fn default_patience() -> usize {
    5
}
fn default_min_epochs() -> usize {
    10
}
fn default_k_buckets() -> usize {
    20
}
fn one() -> f64 {
    1.0
}
fn default_embed_dim() -> usize {
    16
}
fn default_hidden() -> Vec<usize> {
    vec![32, 16]
}
fn default_ece_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Slates per mini-batch.
    #[serde(default = "default_batch_slates")]
    pub batch_slates: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Epochs without validation-AUC improvement before stopping; 0 disables.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Epochs always run before early stopping is considered.
    #[serde(default = "default_min_epochs")]
    pub min_epochs: usize,
    #[serde(default = "default_k_buckets")]
    pub k_buckets: usize,
    #[serde(default)]
    pub bucket_key: BucketKey,
    #[serde(default = "one")]
    pub w_cal: f64,
    #[serde(default = "one")]
    pub w_cf: f64,
    #[serde(default)]
    pub cf: CfConfig,
    #[serde(default)]
    pub combiner: Combiner,
    pub dual: DualConfig,
    #[serde(default)]
    pub ablation: Ablation,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub reward: RewardKind,
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default = "default_ece_bins")]
    pub ece_bins: usize,
    #[serde(default)]
    pub propensity: PropensityConfig,
}

impl TrainConfig {
    pub fn new(c_max: f64, r_max: f64) -> Self {
        TrainConfig {
            learning_rate: default_lr(),
            batch_slates: default_batch_slates(),
            epochs: default_epochs(),
            patience: default_patience(),
            min_epochs: default_min_epochs(),
            k_buckets: default_k_buckets(),
            bucket_key: BucketKey::default(),
            w_cal: 1.0,
            w_cf: 1.0,
            cf: CfConfig::default(),
            combiner: Combiner::default(),
            dual: DualConfig::new(c_max, r_max),
            ablation: Ablation::default(),
            seed: 0,
            reward: RewardKind::default(),
            embed_dim: default_embed_dim(),
            hidden: default_hidden(),
            adam: AdamConfig::default(),
            ece_bins: default_ece_bins(),
            propensity: PropensityConfig::default(),
        }
    }

    pub fn with_ablation(&self, ablation: Ablation) -> Self {
        TrainConfig {
            ablation,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if self.batch_slates == 0 {
            return Err(Error::config("train.batch_slates", "must be at least 1"));
        }
        if self.k_buckets == 0 {
            return Err(Error::config("train.k_buckets", "must be at least 1"));
        }
        if !(self.w_cal >= 0.0 && self.w_cf >= 0.0) {
            return Err(Error::config("train.w_cal/w_cf", "loss weights must be nonnegative"));
        }
        if !(self.cf.alpha >= 0.0) {
            return Err(Error::config("train.cf.alpha", "must be nonnegative"));
        }
        if !(self.cf.tau > 0.0) {
            return Err(Error::config("train.cf.tau", "must be positive"));
        }
        if self.cf.k == 0 {
            return Err(Error::config("train.cf.k", "must be at least 1"));
        }
        if self.ece_bins == 0 {
            return Err(Error::config("train.ece_bins", "must be at least 1"));
        }
        self.dual.initial_state()?;
        Ok(())
    }

    pub fn model_shape(&self, sample: &Example, vocab: usize) -> ModelShape {
        ModelShape {
            n_dense: sample.dense.len(),
            n_cats: sample.cats.len(),
            vocab,
            embed_dim: self.embed_dim,
            hidden: self.hidden.clone(),
        }
    }

    pub fn calibration_on(&self) -> bool {
        !self.ablation.no_calibration && self.w_cal > 0.0
    }

    pub fn constraints_on(&self) -> bool {
        !self.ablation.no_constraints
    }

    pub fn counterfactual_on(&self) -> bool {
        !self.ablation.no_counterfactual && self.w_cf > 0.0
    }
}

/// One training row: a logged impression joined with its example.
#[derive(Debug, Clone, Copy)]
pub struct Row<'a> {
    pub example: &'a Example,
    pub clicked: bool,
    pub converted: bool,
    pub bid: f64,
    pub reward: f64,
    /// Importance weight `1 / e(pos)`.
    pub weight: f64,
    pub bucket: usize,
}

impl<'a> Row<'a> {
    fn features(&self) -> Features<'a> {
        Features::from(self.example)
    }
}

/// Rows grouped into contiguous slates.
#[derive(Debug, Clone, Default)]
pub struct Batch<'a> {
    pub rows: Vec<Row<'a>>,
    pub slates: Vec<Range<usize>>,
}

impl<'a> Batch<'a> {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn features(&self) -> Vec<Features<'a>> {
        self.rows.iter().map(|r| r.features()).collect()
    }

    /// Concatenation of the given slates.
    pub fn gather(slates: &[&[Row<'a>]]) -> Self {
        let mut b = Batch::default();
        for s in slates {
            let start = b.rows.len();
            b.rows.extend_from_slice(s);
            b.slates.push(start..b.rows.len());
        }
        b
    }
}

/// Epoch-level empirical rates per bucket for each task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub rel: Vec<Option<f64>>,
    pub rev: Vec<Option<f64>>,
    pub risk: Vec<Option<f64>>,
}

impl CalibrationTargets {
    pub fn from_rows(rows: &[Row<'_>], k: usize) -> Self {
        let buckets: Vec<usize> = rows.iter().map(|r| r.bucket).collect();
        let clicks: Vec<f64> = rows.iter().map(|r| r.clicked as u8 as f64).collect();
        let risk: Vec<f64> = rows.iter().map(|r| r.example.true_risk).collect();
        let (conv, conv_buckets): (Vec<f64>, Vec<usize>) = rows
            .iter()
            .filter(|r| r.clicked)
            .map(|r| (r.converted as u8 as f64, r.bucket))
            .unzip();
        CalibrationTargets {
            rel: bucket_means(&clicks, &buckets, k),
            rev: bucket_means(&conv, &conv_buckets, k),
            risk: bucket_means(&risk, &buckets, k),
        }
    }
}

/// Loss value of each component on one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub point: f64,
    pub cal: f64,
    pub con: f64,
    pub cf: f64,
    pub total: f64,
    pub cpc: f64,
    pub mean_risk: f64,
    pub fairness_violation: f64,
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// `-y ln s - (1-y) ln(1-s)` evaluated from the logit.
fn bce_from_logit(z: f64, y: f64) -> f64 {
    softplus(z) - y * z
}

/// Values and logit gradients of every enabled loss component.
pub fn composite_terms(
    outputs: &[HeadOutput],
    batch: &Batch<'_>,
    duals: &DualState,
    targets: Option<&CalibrationTargets>,
    config: &TrainConfig,
) -> Result<(LossComponents, Vec<[f64; N_TASKS]>)> {
    let n = outputs.len();
    if n != batch.len() {
        return Err(Error::LengthMismatch {
            what: "outputs vs batch rows",
            left: n,
            right: batch.len(),
        });
    }
    if n == 0 {
        return Err(Error::EmptyInput("training batch"));
    }
    let nf = n as f64;
    let mut dz = vec![[0.0; N_TASKS]; n];
    // gradients w.r.t. scores, converted to logits at the end
    let mut ds = vec![[0.0; N_TASKS]; n];
    let mut c = LossComponents::default();

    // pointwise cross-entropy
    let n_clicked = batch.rows.iter().filter(|r| r.clicked).count();
    for (i, (o, r)) in outputs.iter().zip(&batch.rows).enumerate() {
        let y = r.clicked as u8 as f64;
        c.point += bce_from_logit(o.logits[0], y) / nf;
        dz[i][0] += (o.scores[0] - y) / nf;
        if r.clicked {
            let y = r.converted as u8 as f64;
            let m = n_clicked as f64;
            c.point += bce_from_logit(o.logits[1], y) / m;
            dz[i][1] += (o.scores[1] - y) / m;
        }
        let y = r.example.true_risk;
        c.point += bce_from_logit(o.logits[2], y) / nf;
        dz[i][2] += (o.scores[2] - y) / nf;
    }

    let buckets: Vec<usize> = batch.rows.iter().map(|r| r.bucket).collect();
    let col = |t: usize| -> Vec<f64> { outputs.iter().map(|o| o.scores[t]).collect() };

    if config.calibration_on() {
        let targets = targets.ok_or_else(|| Error::config("calibration", "targets are required"))?;
        let rel = bucket_l1(&col(0), &buckets, &targets.rel)?;
        let risk = bucket_l1(&col(2), &buckets, &targets.risk)?;
        let clicked: Vec<usize> = (0..n).filter(|&i| batch.rows[i].clicked).collect();
        let rev_scores: Vec<f64> = clicked.iter().map(|&i| outputs[i].scores[1]).collect();
        let rev_buckets: Vec<usize> = clicked.iter().map(|&i| buckets[i]).collect();
        let rev = bucket_l1(&rev_scores, &rev_buckets, &targets.rev)?;
        c.cal = rel.loss + rev.loss + risk.loss;
        for i in 0..n {
            ds[i][0] += config.w_cal * rel.grad[i];
            ds[i][2] += config.w_cal * risk.grad[i];
        }
        for (j, &i) in clicked.iter().enumerate() {
            ds[i][1] += config.w_cal * rev.grad[j];
        }
    }

    if config.constraints_on() {
        let bids: Vec<f64> = batch.rows.iter().map(|r| r.bid).collect();
        let s_rel = col(0);
        let (cpc, dcpc) = batch_cpc(&bids, &s_rel)?;
        let mean_risk = col(2).iter().sum::<f64>() / nf;
        let pen = constraint_penalty(cpc, mean_risk, duals);
        c.con = pen.penalty;
        c.cpc = cpc;
        c.mean_risk = mean_risk;
        for i in 0..n {
            ds[i][0] += pen.d_cpc * dcpc[i];
            ds[i][2] += pen.d_risk / nf;
        }
        if config.dual.fairness.enabled {
            let segments: Vec<usize> = batch.rows.iter().map(|r| r.example.segment).collect();
            let f = fairness_penalty(&s_rel, &segments, config.dual.fairness.lambda_init, config.dual.fairness.slack)?;
            c.con += f.penalty;
            c.fairness_violation = f.max_violation;
            for i in 0..n {
                ds[i][0] += f.grad[i];
            }
        }
    } else {
        let bids: Vec<f64> = batch.rows.iter().map(|r| r.bid).collect();
        c.cpc = batch_cpc(&bids, &col(0)).map(|(v, _)| v).unwrap_or(f64::NAN);
        c.mean_risk = col(2).iter().sum::<f64>() / nf;
    }

    if config.counterfactual_on() {
        let partials = config.combiner.partials();
        let scores: Vec<f64> = outputs
            .iter()
            .map(|o| (0..N_TASKS).map(|t| partials[t] * o.scores[t]).sum())
            .collect();
        let rewards: Vec<f64> = batch.rows.iter().map(|r| r.reward).collect();
        let weights: Vec<f64> = batch.rows.iter().map(|r| r.weight).collect();
        let out = cf_loss(
            CfBatch {
                scores: &scores,
                rewards: &rewards,
                weights: &weights,
                slates: &batch.slates,
            },
            &config.cf,
        )?;
        c.cf = out.loss;
        for i in 0..n {
            for t in 0..N_TASKS {
                ds[i][t] += config.w_cf * out.grad[i] * partials[t];
            }
        }
    }

    for i in 0..n {
        for t in 0..N_TASKS {
            let s = outputs[i].scores[t];
            dz[i][t] += ds[i][t] * s * (1.0 - s);
        }
    }
    c.total = c.point + config.w_cal * c.cal + c.con + config.w_cf * c.cf;
    for (name, v) in [
        ("pointwise", c.point),
        ("calibration", c.cal),
        ("constraint", c.con),
        ("counterfactual", c.cf),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss")));
        }
    }
    Ok((c, dz))
}

/// Composite loss and its gradient w.r.t. all parameters.
pub fn total_loss(
    batch: &Batch<'_>,
    params: &ModelParams,
    duals: &DualState,
    targets: Option<&CalibrationTargets>,
    config: &TrainConfig,
) -> Result<(LossComponents, GradientBundle)> {
    let record = RefCell::new(LossComponents::default());
    let loss = |outputs: &[HeadOutput]| {
        let (c, dz) = composite_terms(outputs, batch, duals, targets, config)?;
        *record.borrow_mut() = c;
        Ok((c.total, dz))
    };
    let (_, grad) = backward(params, &batch.features(), &loss)?;
    Ok((record.into_inner(), grad))
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64, config: AdamConfig) -> Self {
        Adam {
            config,
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_total: f64,
    pub loss_point: f64,
    pub loss_cal: f64,
    pub loss_con: f64,
    pub loss_cf: f64,
    pub cpc: f64,
    pub cpc_violation: f64,
    pub mean_risk: f64,
    pub risk_violation: f64,
    /// Multipliers in effect during the epoch.
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub val_auc: f64,
    pub val_ece: f64,
    /// Digest of the epoch's batch composition.
    pub batch_hash: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub stopped_early: bool,
}

/// Rows for training with their slate structure, plus a validation set.
#[derive(Debug, Clone)]
pub struct TrainData<'a> {
    /// Training rows grouped by slate.
    pub slates: Vec<Vec<Row<'a>>>,
    pub validation: Vec<Row<'a>>,
    pub vocab: usize,
}

impl<'a> TrainData<'a> {
    pub fn all_rows(&self) -> Vec<Row<'a>> {
        self.slates.iter().flatten().copied().collect()
    }

    fn sample(&self) -> Option<&'a Example> {
        self.slates.iter().flatten().next().map(|r| r.example)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: TrainHistory,
    pub duals: DualState,
}

fn batch_hash(order: &[usize]) -> String {
    let mut h = Sha256::new();
    for i in order {
        h.update((*i as u64).to_le_bytes());
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Slate indices of each mini-batch in `epoch`, identical for every
/// configuration sharing a seed.
pub fn epoch_batches(n_slates: usize, batch_slates: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n_slates).collect();
    order.shuffle(&mut rng::indexed_stream(seed, "shuffle", epoch as u64));
    order.chunks(batch_slates).map(|c| c.to_vec()).collect()
}

/// Relevance-head AUC and ECE on a set of rows.
pub fn validation_metrics(params: &ModelParams, rows: &[Row<'_>], ece_bins: usize) -> Result<(f64, f64)> {
    if rows.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let feats: Vec<Features<'_>> = rows.iter().map(|r| r.features()).collect();
    let out = forward_batch(params, &feats)?;
    let s: Vec<f64> = out.iter().map(|o| o.scores[0]).collect();
    let y: Vec<bool> = rows.iter().map(|r| r.clicked).collect();
    let yf: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    let a = auc(&s, &y).unwrap_or(f64::NAN);
    Ok((a, ece(&s, &yf, ece_bins)?))
}

/// Train from a seeded initialization.
pub fn train(data: &TrainData<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let sample = data.sample().ok_or(Error::EmptyInput("training rows"))?;
    let params = ModelParams::init(config.model_shape(sample, data.vocab), config.seed)?;
    train_from(params, data, config)
}

/// Train starting from `params`.
pub fn train_from(mut params: ModelParams, data: &TrainData<'_>, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let mut duals = config.dual.initial_state()?;
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            duals,
        });
    }
    let all_rows = data.all_rows();
    let targets = config
        .calibration_on()
        .then(|| CalibrationTargets::from_rows(&all_rows, config.k_buckets));
    let mut adam = Adam::new(params.len(), config.learning_rate, config.adam);
    let mut best_auc = f64::NEG_INFINITY;
    let mut since_best = 0usize;

    for epoch in 0..config.epochs {
        let batches = epoch_batches(data.slates.len(), config.batch_slates, config.seed, epoch);
        let hash = batch_hash(&batches.concat());
        let mut sums = LossComponents::default();
        let mut cpc_sum = 0.0;
        let mut cpc_batches = 0usize;
        for idx in &batches {
            let slates: Vec<&[Row<'_>]> = idx.iter().map(|&i| data.slates[i].as_slice()).collect();
            let batch = Batch::gather(&slates);
            if batch.is_empty() {
                continue;
            }
            let (c, grad) = match total_loss(&batch, &params, &duals, targets.as_ref(), config) {
                Ok(v) => v,
                // sigmoid scores only sum to ~0 once the relevance head has collapsed
                Err(e @ (Error::NonFinite(_) | Error::DegenerateBatch(_))) => {
                    return Err(Error::Diverged {
                        epoch,
                        reason: e.to_string(),
                        history: Box::new(history),
                    })
                }
                Err(e) => return Err(e),
            };
            adam.step(params.values_mut(), &grad.values);
            sums.point += c.point;
            sums.cal += c.cal;
            sums.con += c.con;
            sums.cf += c.cf;
            sums.total += c.total;
            sums.mean_risk += c.mean_risk;
            if c.cpc.is_finite() {
                cpc_sum += c.cpc;
                cpc_batches += 1;
            }
        }
        let nb = batches.len().max(1) as f64;
        let cpc = cpc_sum / cpc_batches.max(1) as f64;
        let mean_risk = sums.mean_risk / nb;
        let (val_auc, val_ece) = validation_metrics(&params, &data.validation, config.ece_bins)?;
        let record = EpochRecord {
            epoch,
            loss_total: sums.total / nb,
            loss_point: sums.point / nb,
            loss_cal: sums.cal / nb,
            loss_con: sums.con / nb,
            loss_cf: sums.cf / nb,
            cpc,
            cpc_violation: cpc - duals.c_max,
            mean_risk,
            risk_violation: mean_risk - duals.r_max,
            lambda_c: duals.lambda_c,
            lambda_r: duals.lambda_r,
            val_auc,
            val_ece,
            batch_hash: hash,
        };
        let diverged = !record.loss_total.is_finite() || record.loss_total > 1e6 || !params.is_finite();
        history.epochs.push(record);
        if diverged {
            return Err(Error::Diverged {
                epoch,
                reason: "loss exceeded 1e6 or became non-finite".into(),
                history: Box::new(history),
            });
        }
        if config.constraints_on() && config.dual.mode == DualMode::Ascent {
            duals = dual_update(&duals, cpc, mean_risk);
        }
        if config.patience > 0 && val_auc.is_finite() {
            if val_auc > best_auc {
                best_auc = val_auc;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= config.patience && epoch + 1 >= config.min_epochs {
                    history.stopped_early = true;
                    break;
                }
            }
        }
    }
    Ok(TrainOutcome {
        params,
        history,
        duals,
    })
}

/// Per-batch CPC of `params` over the training slates, using epoch 0's batch
/// partition.
pub fn batch_cpcs(params: &ModelParams, data: &TrainData<'_>, config: &TrainConfig) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for idx in epoch_batches(data.slates.len(), config.batch_slates, config.seed, 0) {
        let slates: Vec<&[Row<'_>]> = idx.iter().map(|&i| data.slates[i].as_slice()).collect();
        let batch = Batch::gather(&slates);
        let outputs = forward_batch(params, &batch.features())?;
        let bids: Vec<f64> = batch.rows.iter().map(|r| r.bid).collect();
        let s: Vec<f64> = outputs.iter().map(|o| o.scores[0]).collect();
        out.push(batch_cpc(&bids, &s)?.0);
    }
    Ok(out)
}

/// Row-level sigmoid of a logit; re-exported for examples that build rows by hand.
pub fn probability(logit: f64) -> f64 {
    sigmoid(logit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0) >= 0.0);
        assert!((bce_from_logit(0.0, 1.0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn adam_moves_against_gradient() {
        let mut p = vec![1.0, -1.0];
        let mut a = Adam::new(2, 0.1, AdamConfig::default());
        a.step(&mut p, &[2.0, -3.0]);
        assert!((p[0] - 0.9).abs() < 1e-6 && (p[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn config_json_requires_thresholds() {
        let err = serde_json::from_str::<TrainConfig>("{}");
        assert!(err.is_err());
        let ok: TrainConfig = serde_json::from_str(r#"{"dual": {"c_max": 1.2, "r_max": 0.3}}"#).unwrap();
        assert_eq!(ok.k_buckets, 20);
        assert_eq!(ok.cf.alpha, 0.1);
        assert_eq!(ok.dual.lambda_c_init, 0.5);
        let unknown = serde_json::from_str::<TrainConfig>(r#"{"dual": {"c_max": 1, "r_max": 0.3}, "bogus": 1}"#);
        assert!(unknown.is_err());
    }

    #[test]
    fn batches_cover_every_slate_once() {
        let b = epoch_batches(37, 8, 3, 2);
        let mut all = b.concat();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(b, epoch_batches(37, 8, 3, 2));
        assert_ne!(b, epoch_batches(37, 8, 3, 3));
    }
}
