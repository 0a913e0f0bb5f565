//! Experiment protocols: data preparation, evaluation, ablation and transfer.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{train, Row, TrainConfig, TrainData, TrainHistory};
use crate::calibration::{ece, FittedBucketKey};
use crate::counterfactual::{estimate_propensities, slate_ranges, PropensityTable};
use crate::error::{Error, Result};
use crate::metrics::{auc, mean_ndcg_at_k, utility_at_k, EvalReport, PerTask};
use crate::model::{final_ranking_score, forward_batch, Features, ModelParams};
use crate::rng;
use crate::simulator::{Example, LoggedImpression, SimConfig, SlateSpec, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    /// Fraction of slates used for training.
    pub train: f64,
    /// Fraction of slates used for early stopping; the rest is the test set.
    pub validation: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: 0.7,
            validation: 0.15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NdcgRelevance {
    #[default]
    Click,
    Reward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub k: usize,
    pub ndcg_relevance: NdcgRelevance,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            k: 10,
            ndcg_relevance: NdcgRelevance::Click,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransferConfig {
    pub seeds: Vec<u64>,
    /// Number of clusters drawn for training in each split.
    pub train_clusters: usize,
    pub variants: Vec<Variant>,
}

impl Default for TransferConfig {
    fn default() -> Self {
        TransferConfig {
            seeds: (0..5).collect(),
            train_clusters: 7,
            variants: vec![Variant::Full, Variant::NoCalibration],
        }
    }
}

/// A complete run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub simulator: SimConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    /// Seeds averaged over by the ablation protocol.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub transfer: TransferConfig,
    /// Previously exported data to train on instead of simulating.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataPaths>,
}

/// Example and impression CSV files, relative to the config file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    pub examples: PathBuf,
    pub impressions: PathBuf,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}

impl ExperimentConfig {
    /// The desk-scale benchmark used by the ablation and transfer protocols.
    pub fn benchmark() -> Self {
        let mut train = TrainConfig::new(1.2, 0.55);
        train.batch_slates = 8;
        train.epochs = 40;
        // one bucket-sum gradient per row, on the scale of the mean cross-entropy
        train.w_cal = 1.0 / train.k_buckets as f64;
        // the relaxed utility is O(1e-2), far below the cross-entropy scale
        train.w_cf = 300.0;
        ExperimentConfig {
            simulator: SimConfig {
                n_slates: 6_000,
                randomized_fraction: 0.05,
                ..SimConfig::default()
            },
            train,
            split: SplitConfig {
                train: 0.35,
                validation: 0.1,
            },
            eval: EvalConfig::default(),
            seeds: default_seeds(),
            transfer: TransferConfig::default(),
            data: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.simulator.validate()?;
        self.train.validate()?;
        let s = self.split;
        if !(s.train > 0.0 && s.validation >= 0.0 && s.train + s.validation < 1.0) {
            return Err(Error::config(
                "split",
                "need train > 0, validation >= 0 and train + validation < 1",
            ));
        }
        if self.eval.k == 0 {
            return Err(Error::config("eval.k", "must be at least 1"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        let t = &self.transfer;
        if t.train_clusters == 0 || t.train_clusters >= self.simulator.clusters {
            return Err(Error::config(
                "transfer.train_clusters",
                format!("must lie in 1..{}", self.simulator.clusters),
            ));
        }
        Ok(())
    }

    /// Short digest of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json)[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Copy with every seed-dependent stream rooted at `seed`.
    pub fn for_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.simulator.seed = seed;
        c.train.seed = rng::child_seed(seed, "train");
        c
    }
}

/// A generated or imported log split by slate into train, validation and test.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub examples: Vec<Example>,
    index: HashMap<u64, usize>,
    pub train: Vec<LoggedImpression>,
    pub validation: Vec<LoggedImpression>,
    pub test: Vec<LoggedImpression>,
    pub table: PropensityTable,
    pub vocab: usize,
}

/// Simulated examples and log for one configuration.
pub fn simulate(config: &SimConfig) -> Result<(Simulator, Vec<Example>, Vec<LoggedImpression>)> {
    let sim = Simulator::new(config.clone())?;
    let seed = config.seed;
    let examples = sim.generate_examples(config.n, rng::child_seed(seed, "examples"));
    let scores = sim.logging_scores(&examples, rng::child_seed(seed, "logging"));
    let log = sim.simulate_slate_log(
        &examples,
        &scores,
        &SlateSpec::from(config),
        &mut rng::stream(seed, "slate-log"),
    )?;
    Ok((sim, examples, log))
}

impl PreparedData {
    pub fn simulate(config: &ExperimentConfig) -> Result<Self> {
        let (_, examples, log) = simulate(&config.simulator)?;
        Self::from_log(examples, log, config)
    }

    /// Loads `config.data` (resolved against `base`) when set, otherwise simulates.
    pub fn load(config: &ExperimentConfig, base: &Path) -> Result<Self> {
        match &config.data {
            Some(d) => {
                let examples = crate::io::read_examples_csv(&base.join(&d.examples))?;
                let log = crate::io::read_impressions_csv(&base.join(&d.impressions))?;
                Self::from_log(examples, log, config)
            }
            None => Self::simulate(config),
        }
    }

    /// Splits `log` by slate and estimates propensities on the randomized
    /// training slates.
    pub fn from_log(examples: Vec<Example>, log: Vec<LoggedImpression>, config: &ExperimentConfig) -> Result<Self> {
        let index: HashMap<u64, usize> = examples.iter().enumerate().map(|(i, e)| (e.id, i)).collect();
        if let Some(imp) = log.iter().find(|i| !index.contains_key(&i.example_id)) {
            return Err(Error::Data {
                path: "impressions".into(),
                message: format!("example id {} is not in the example set", imp.example_id),
            });
        }
        let ranges = slate_ranges(&log);
        let mut order: Vec<usize> = (0..ranges.len()).collect();
        order.shuffle(&mut rng::stream(config.simulator.seed, "slate-split"));
        let n_train = (config.split.train * ranges.len() as f64).round() as usize;
        let n_val = (config.split.validation * ranges.len() as f64).round() as usize;
        let take = |ids: &[usize]| -> Vec<LoggedImpression> {
            let mut ids = ids.to_vec();
            ids.sort_unstable();
            ids.iter().flat_map(|&s| log[ranges[s].clone()].iter().cloned()).collect()
        };
        let train = take(&order[..n_train.min(order.len())]);
        let validation = take(&order[n_train.min(order.len())..(n_train + n_val).min(order.len())]);
        let test = take(&order[(n_train + n_val).min(order.len())..]);
        let table = propensities_from(&train, config)?;
        let vocab = examples
            .iter()
            .flat_map(|e| e.cats.iter())
            .map(|&c| c as usize + 1)
            .max()
            .unwrap_or(1)
            .max(config.simulator.vocab);
        Ok(PreparedData {
            examples,
            index,
            train,
            validation,
            test,
            table,
            vocab,
        })
    }

    pub fn example(&self, id: u64) -> &Example {
        &self.examples[self.index[&id]]
    }

    pub fn bucket_key(&self, config: &TrainConfig) -> Result<FittedBucketKey> {
        FittedBucketKey::fit(&self.examples, config.k_buckets, config.bucket_key)
    }

    /// Training rows for the impressions accepted by `keep`.
    pub fn train_data(
        &self,
        config: &TrainConfig,
        table: &PropensityTable,
        keep: impl Fn(&Example) -> bool,
    ) -> Result<TrainData<'_>> {
        let key = self.bucket_key(config)?;
        let to_rows = |imps: &[LoggedImpression]| -> Result<Vec<Vec<Row<'_>>>> {
            let mut out = Vec::new();
            for r in slate_ranges(imps) {
                let mut slate = Vec::new();
                for imp in &imps[r] {
                    let example = self.example(imp.example_id);
                    if !keep(example) {
                        continue;
                    }
                    slate.push(Row {
                        example,
                        clicked: imp.clicked,
                        converted: imp.converted,
                        bid: imp.bid,
                        reward: config.reward.of(imp),
                        weight: 1.0 / table.propensity(imp.position)?,
                        bucket: key.bucket_of(example),
                    });
                }
                if !slate.is_empty() {
                    out.push(slate);
                }
            }
            Ok(out)
        };
        Ok(TrainData {
            slates: to_rows(&self.train)?,
            validation: to_rows(&self.validation)?.concat(),
            vocab: self.vocab,
        })
    }
}

fn propensities_from(train: &[LoggedImpression], config: &ExperimentConfig) -> Result<PropensityTable> {
    let randomized: Vec<LoggedImpression> = train.iter().filter(|i| i.randomized).cloned().collect();
    // a constant reference model: the estimate is a ratio of click rates
    let reference = vec![1.0; randomized.len()];
    estimate_propensities(&randomized, &reference, &config.train.propensity)
}

/// Model outputs and final ranking scores for a list of impressions.
pub struct Predictions {
    pub scores: Vec<[f64; 3]>,
    pub ranking: Vec<f64>,
}

pub fn predict(params: &ModelParams, data: &PreparedData, imps: &[LoggedImpression], config: &TrainConfig) -> Result<Predictions> {
    let feats: Vec<Features<'_>> = imps.iter().map(|i| Features::from(data.example(i.example_id))).collect();
    let out = forward_batch(params, &feats)?;
    Ok(Predictions {
        ranking: out
            .iter()
            .map(|o| final_ranking_score(&o.task_scores(), &config.combiner))
            .collect(),
        scores: out.into_iter().map(|o| o.scores).collect(),
    })
}

/// Evaluates `params` on `imps` (whole slates) with utility weights from `table`.
pub fn evaluate(
    params: &ModelParams,
    data: &PreparedData,
    imps: &[LoggedImpression],
    table: &PropensityTable,
    config: &ExperimentConfig,
) -> Result<EvalReport> {
    if imps.is_empty() {
        return Err(Error::EmptyInput("evaluation impressions"));
    }
    let tc = &config.train;
    let pred = predict(params, data, imps, tc)?;
    let col = |t: usize| -> Vec<f64> { pred.scores.iter().map(|s| s[t]).collect() };
    let clicks: Vec<bool> = imps.iter().map(|i| i.clicked).collect();
    let clicks_f: Vec<f64> = clicks.iter().map(|&c| c as u8 as f64).collect();
    let clicked: Vec<usize> = (0..imps.len()).filter(|&i| imps[i].clicked).collect();
    let rev_pred: Vec<f64> = clicked.iter().map(|&i| pred.scores[i][1]).collect();
    let conv: Vec<bool> = clicked.iter().map(|&i| imps[i].converted).collect();
    let conv_f: Vec<f64> = conv.iter().map(|&c| c as u8 as f64).collect();
    let risk_label: Vec<f64> = imps.iter().map(|i| data.example(i.example_id).true_risk).collect();

    let relevance: Vec<f64> = match config.eval.ndcg_relevance {
        NdcgRelevance::Click => clicks_f.clone(),
        NdcgRelevance::Reward => imps.iter().map(|i| i.reward).collect(),
    };
    let utility = utility_at_k(&pred.ranking, imps, table, config.eval.k, tc.reward)?;
    Ok(EvalReport {
        auc: PerTask {
            rel: auc(&col(0), &clicks).ok(),
            rev: auc(&rev_pred, &conv).ok(),
            risk: None,
        },
        ndcg_at_k: mean_ndcg_at_k(&pred.ranking, imps, &relevance, config.eval.k),
        ece: PerTask {
            rel: Some(ece(&col(0), &clicks_f, tc.ece_bins)?),
            rev: if rev_pred.is_empty() {
                None
            } else {
                Some(ece(&rev_pred, &conv_f, tc.ece_bins)?)
            },
            risk: Some(ece(&col(2), &risk_label, tc.ece_bins)?),
        },
        utility_at_k: utility,
        k: config.eval.k,
        ece_bins: tc.ece_bins,
        ndcg_gain: "linear".into(),
        ndcg_relevance: match config.eval.ndcg_relevance {
            NdcgRelevance::Click => "click".into(),
            NdcgRelevance::Reward => "reward".into(),
        },
        config_fingerprint: config.fingerprint(),
        seed: config.simulator.seed,
        n_impressions: imps.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "full")]
    Full,
    #[serde(rename = "-cal")]
    NoCalibration,
    #[serde(rename = "-con")]
    NoConstraints,
    #[serde(rename = "-cf")]
    NoCounterfactual,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Full,
        Variant::NoCalibration,
        Variant::NoConstraints,
        Variant::NoCounterfactual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoCalibration => "-cal",
            Variant::NoConstraints => "-con",
            Variant::NoCounterfactual => "-cf",
        }
    }

    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut ab = base.ablation;
        match self {
            Variant::Full => {}
            Variant::NoCalibration => ab.no_calibration = true,
            Variant::NoConstraints => ab.no_constraints = true,
            Variant::NoCounterfactual => ab.no_counterfactual = true,
        }
        base.with_ablation(ab)
    }
}

/// Number of worker threads: `CALICAUSAL_THREADS` if set, else available cores.
pub fn thread_count() -> usize {
    std::env::var("CALICAUSAL_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Order-preserving parallel map over at most `threads` workers.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRun {
    pub variant: Variant,
    pub seed: u64,
    pub report: EvalReport,
    pub history: TrainHistory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub variant: Variant,
    /// AUC, NDCG@k, ECE, Utility@k averaged over seeds.
    pub mean: [f64; 4],
    pub std: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<VariantRun>,
    pub summary: Vec<VariantSummary>,
    /// Every variant saw the same batch sequence within each seed.
    pub identical_batches: bool,
}

impl AblationReport {
    pub fn summary_for(&self, v: Variant) -> Option<&VariantSummary> {
        self.summary.iter().find(|s| s.variant == v)
    }
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// One training run of `variant` on prepared data, evaluated on its test split.
pub fn train_and_evaluate(
    data: &PreparedData,
    config: &ExperimentConfig,
    variant: Variant,
) -> Result<(ModelParams, TrainHistory, EvalReport)> {
    let tc = variant.apply(&config.train);
    let td = data.train_data(&tc, &data.table, |_| true)?;
    let out = train(&td, &tc)?;
    let report = evaluate(&out.params, data, &data.test, &data.table, config)?;
    Ok((out.params, out.history, report))
}

/// Trains the full model and each single-component ablation on identical data
/// for every configured seed.
pub fn run_ablation(config: &ExperimentConfig, variants: &[Variant], threads: usize) -> Result<AblationReport> {
    config.validate()?;
    let mut runs = Vec::new();
    let mut identical = true;
    for &seed in &config.seeds {
        let cfg = config.for_seed(seed);
        let data = PreparedData::simulate(&cfg)?;
        let results = par_map(variants, threads, |&v| train_and_evaluate(&data, &cfg, v));
        let mut hashes: Option<Vec<String>> = None;
        for (v, r) in variants.iter().zip(results) {
            let (_, history, report) = r?;
            let h: Vec<String> = history.epochs.iter().map(|e| e.batch_hash.clone()).collect();
            if let Some(prev) = &hashes {
                let n = prev.len().min(h.len());
                identical &= prev[..n] == h[..n];
            } else {
                hashes = Some(h);
            }
            runs.push(VariantRun {
                variant: *v,
                seed,
                report,
                history,
            });
        }
    }
    let summary = variants
        .iter()
        .map(|&v| {
            let reports: Vec<[f64; 4]> = runs
                .iter()
                .filter(|r| r.variant == v)
                .map(|r| r.report.headline())
                .collect();
            let mut mean = [0.0; 4];
            let mut std = [0.0; 4];
            for j in 0..4 {
                let col: Vec<f64> = reports.iter().map(|r| r[j]).collect();
                (mean[j], std[j]) = mean_std(&col);
            }
            VariantSummary { variant: v, mean, std }
        })
        .collect();
    Ok(AblationReport {
        runs,
        summary,
        identical_batches: identical,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferRun {
    pub seed: u64,
    pub variant: Variant,
    pub train_clusters: Vec<usize>,
    pub eval_clusters: Vec<usize>,
    pub in_segment_auc: f64,
    pub cross_segment_auc: f64,
    pub retention: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetentionSummary {
    pub variant: Variant,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub runs: Vec<TransferRun>,
    pub summary: Vec<RetentionSummary>,
}

impl TransferReport {
    pub fn summary_for(&self, v: Variant) -> Option<&RetentionSummary> {
        self.summary.iter().find(|s| s.variant == v)
    }
}

/// Random split of `0..n_clusters` into `n_train` training clusters and the rest.
pub fn draw_cluster_split(n_clusters: usize, n_train: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut ids: Vec<usize> = (0..n_clusters).collect();
    ids.shuffle(&mut rng::stream(seed, "transfer-clusters"));
    let mut train = ids[..n_train].to_vec();
    let mut eval = ids[n_train..].to_vec();
    train.sort_unstable();
    eval.sort_unstable();
    (train, eval)
}

fn rel_auc(params: &ModelParams, data: &PreparedData, imps: &[LoggedImpression], config: &TrainConfig) -> Result<f64> {
    if imps.is_empty() {
        return Err(Error::EmptyInput("transfer evaluation impressions"));
    }
    let pred = predict(params, data, imps, config)?;
    let s: Vec<f64> = pred.scores.iter().map(|s| s[0]).collect();
    let y: Vec<bool> = imps.iter().map(|i| i.clicked).collect();
    auc(&s, &y)
}

/// Trains on impressions of `train_clusters` only and compares test-split AUC
/// on those clusters with AUC on `eval_clusters`.
pub fn transfer_once(
    data: &PreparedData,
    config: &ExperimentConfig,
    variant: Variant,
    train_clusters: &[usize],
    eval_clusters: &[usize],
) -> Result<TransferRun> {
    if train_clusters.is_empty() {
        return Err(Error::EmptyClusterSet("train"));
    }
    if eval_clusters.is_empty() {
        return Err(Error::EmptyClusterSet("eval"));
    }
    let same = {
        let (mut a, mut b) = (train_clusters.to_vec(), eval_clusters.to_vec());
        a.sort_unstable();
        b.sort_unstable();
        a == b
    };
    if !same {
        if let Some(&c) = train_clusters.iter().find(|c| eval_clusters.contains(c)) {
            return Err(Error::OverlappingClusters(c));
        }
    }
    let tc = variant.apply(&config.train);
    let in_train = |e: &Example| train_clusters.contains(&e.segment);
    let randomized: Vec<LoggedImpression> = data
        .train
        .iter()
        .filter(|i| in_train(data.example(i.example_id)))
        .cloned()
        .collect();
    let table = propensities_from(&randomized, config)?;
    let td = data.train_data(&tc, &table, in_train)?;
    let out = train(&td, &tc)?;
    let select = |set: &[usize]| -> Vec<LoggedImpression> {
        data.test
            .iter()
            .filter(|i| set.contains(&data.example(i.example_id).segment))
            .cloned()
            .collect()
    };
    let in_auc = rel_auc(&out.params, data, &select(train_clusters), &tc)?;
    let cross_auc = if same {
        in_auc
    } else {
        rel_auc(&out.params, data, &select(eval_clusters), &tc)?
    };
    Ok(TransferRun {
        seed: config.simulator.seed,
        variant,
        train_clusters: train_clusters.to_vec(),
        eval_clusters: eval_clusters.to_vec(),
        in_segment_auc: in_auc,
        cross_segment_auc: cross_auc,
        retention: cross_auc / in_auc,
    })
}

/// Cross-segment AUC retention over the configured seeds and variants.
pub fn run_transfer(config: &ExperimentConfig, threads: usize) -> Result<TransferReport> {
    config.validate()?;
    let t = &config.transfer;
    let jobs: Vec<(u64, Variant)> = t
        .seeds
        .iter()
        .flat_map(|&s| t.variants.iter().map(move |&v| (s, v)))
        .collect();
    let mut runs = Vec::new();
    for &seed in &t.seeds {
        let cfg = config.for_seed(seed);
        let data = PreparedData::simulate(&cfg)?;
        let (train_c, eval_c) = draw_cluster_split(cfg.simulator.clusters, t.train_clusters, seed);
        let mine: Vec<Variant> = jobs.iter().filter(|j| j.0 == seed).map(|j| j.1).collect();
        for r in par_map(&mine, threads, |&v| transfer_once(&data, &cfg, v, &train_c, &eval_c)) {
            runs.push(r?);
        }
    }
    let summary = t
        .variants
        .iter()
        .map(|&v| {
            let xs: Vec<f64> = runs.iter().filter(|r| r.variant == v).map(|r| r.retention).collect();
            let (mean, std) = mean_std(&xs);
            RetentionSummary { variant: v, mean, std }
        })
        .collect();
    Ok(TransferReport { runs, summary })
}
