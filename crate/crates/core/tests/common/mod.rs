//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use calicausal::constraints::DualState;
use calicausal::model::ModelParams;
use calicausal::simulator::{generate_examples, Example};
use calicausal::trainer::{total_loss, Ablation, Batch, CalibrationTargets, LossComponents, Row, TrainConfig};

/// AUC by counting every positive/negative pair, ties worth one half.
pub fn auc_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for i in 0..scores.len() {
        for j in 0..scores.len() {
            if labels[i] && !labels[j] {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    wins += 1.0;
                } else if scores[i] == scores[j] {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}

/// ECE by scanning each bin `(b/B, (b+1)/B]` for its members; the first bin
/// also takes 0.
pub fn ece_brute_force(preds: &[f64], labels: &[f64], bins: usize) -> f64 {
    let n = preds.len() as f64;
    let mut total = 0.0;
    for b in 0..bins {
        let lo = b as f64 / bins as f64;
        let hi = (b + 1) as f64 / bins as f64;
        let members: Vec<usize> = (0..preds.len())
            .filter(|&i| (preds[i] > lo || (b == 0 && preds[i] == 0.0)) && preds[i] <= hi)
            .collect();
        if members.is_empty() {
            continue;
        }
        let m = members.len() as f64;
        let conf: f64 = members.iter().map(|&i| preds[i]).sum::<f64>() / m;
        let acc: f64 = members.iter().map(|&i| labels[i]).sum::<f64>() / m;
        total += m / n * (conf - acc).abs();
    }
    total
}

/// Linear-interpolation percentile, `q` in [0, 1].
pub fn percentile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Largest coordinate-wise relative error; coordinates where both values are
/// below `1e-6` are compared against that floor. At h = 1e-5 the central
/// difference carries about 1e-11 of round-off, so smaller partials have no
/// meaningful relative error.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Pointwise,
    Calibration,
    Constraint,
    Counterfactual,
    Total,
}

impl Term {
    pub const ALL: [Term; 5] = [
        Term::Pointwise,
        Term::Calibration,
        Term::Constraint,
        Term::Counterfactual,
        Term::Total,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Pointwise => "bce",
            Term::Calibration => "cal",
            Term::Constraint => "con",
            Term::Counterfactual => "cf",
            Term::Total => "total",
        }
    }

    fn value(self, c: &LossComponents) -> f64 {
        match self {
            Term::Pointwise => c.point,
            Term::Calibration => c.cal,
            Term::Constraint => c.con,
            Term::Counterfactual => c.cf,
            Term::Total => c.total,
        }
    }

    fn ablation(self) -> Ablation {
        let off = Ablation {
            no_calibration: true,
            no_constraints: true,
            no_counterfactual: true,
        };
        match self {
            Term::Pointwise => off,
            Term::Calibration => Ablation { no_calibration: false, ..off },
            Term::Constraint => Ablation { no_constraints: false, ..off },
            Term::Counterfactual => Ablation { no_counterfactual: false, ..off },
            Term::Total => Ablation::default(),
        }
    }
}

/// Three rows from one slate: two clicked (one converted), rewards nonzero,
/// distinct positions and buckets.
pub fn three_rows(examples: &[Example]) -> Vec<Row<'_>> {
    let spec = [(true, true, 1.7, 1.0), (false, false, 0.9, 2.0), (true, false, 1.3, 3.0)];
    spec.iter()
        .enumerate()
        .map(|(i, &(clicked, converted, bid, weight))| Row {
            example: &examples[i],
            clicked,
            converted,
            bid,
            reward: if converted { 2.5 } else { 0.4 * i as f64 },
            weight,
            bucket: i % 2,
        })
        .collect()
}

pub fn gradient_config() -> TrainConfig {
    // thresholds low enough that both hinges are active
    let mut tc = TrainConfig::new(0.5, 0.05);
    tc.k_buckets = 2;
    tc.cf.k = 2;
    tc.cf.tau = 0.5;
    tc
}

/// Analytic gradient of one loss term and its central finite difference at
/// step `h`, on a 3-row batch with the default model widths.
pub fn gradient_case(term: Term, h: f64) -> (Vec<f64>, Vec<f64>) {
    let examples = generate_examples(50, 17, 10).unwrap();
    let rows = three_rows(&examples);
    let batch = Batch::gather(&[rows.as_slice()]);
    let targets = CalibrationTargets {
        rel: vec![Some(0.35), Some(0.8)],
        rev: vec![Some(0.05), Some(0.6)],
        risk: vec![Some(0.2), Some(0.9)],
    };
    let base = gradient_config();
    let on = base.with_ablation(term.ablation());
    let off = base.with_ablation(Term::Pointwise.ablation());
    let params = ModelParams::init(on.model_shape(&examples[0], 100), 5).unwrap();
    let duals = DualState::new(0.5, 0.7, on.dual.c_max, on.dual.r_max, 0.01).unwrap();

    let grad = |cfg: &TrainConfig| total_loss(&batch, &params, &duals, Some(&targets), cfg).unwrap().1.values;
    let analytic: Vec<f64> = match term {
        Term::Pointwise | Term::Total => grad(&on),
        _ => {
            let weight = match term {
                Term::Calibration => on.w_cal,
                Term::Counterfactual => on.w_cf,
                _ => 1.0,
            };
            grad(&on).iter().zip(grad(&off)).map(|(a, b)| (a - b) / weight).collect()
        }
    };
    let numeric: Vec<f64> = (0..params.len())
        .map(|i| {
            let at = |d: f64| {
                let mut p = params.clone();
                p.values_mut()[i] += d;
                term.value(&total_loss(&batch, &p, &duals, Some(&targets), &on).unwrap().0)
            };
            (at(h) - at(-h)) / (2.0 * h)
        })
        .collect();
    (analytic, numeric)
}

/// Fresh directory under cargo's per-target scratch space.
pub fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub const SMALL_CONFIG: &str = r#"{
  "simulator": { "n": 2000, "n_slates": 300, "randomized_fraction": 0.6, "seed": 4 },
  "train": {
    "epochs": 3,
    "min_epochs": 1,
    "batch_slates": 8,
    "embed_dim": 8,
    "hidden": [16, 8],
    "w_cal": 0.05,
    "w_cf": 300.0,
    "dual": { "c_max": 1.1, "r_max": 0.5 }
  },
  "split": { "train": 0.5, "validation": 0.1 },
  "seeds": [0, 1],
  "transfer": { "seeds": [0, 1], "train_clusters": 7 }
}
"#;

pub fn write_small_config(dir: &Path) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, SMALL_CONFIG).unwrap();
    path
}

fn s(p: &Path) -> String {
    p.to_str().unwrap().to_string()
}

/// Argument vectors for every subcommand, writing under `out`.
pub fn all_subcommands(config: &Path, out: &Path) -> Vec<Vec<String>> {
    let c = s(config);
    let o = |name: &str| s(&out.join(name));
    let args = |v: &[&str]| -> Vec<String> { std::iter::once("calicausal").chain(v.iter().copied()).map(String::from).collect() };
    vec![
        args(&["simulate", "--config", &c, "--out", &o("simulate")]),
        args(&["train", "--config", &c, "--out", &o("train")]),
        args(&[
            "evaluate",
            "--config",
            &c,
            "--checkpoint",
            &o("train/checkpoint.json"),
            "--out",
            &o("evaluate"),
        ]),
        args(&["ablate", "--config", &c, "--out", &o("ablate")]),
        args(&["transfer", "--config", &c, "--out", &o("transfer")]),
        args(&["report", &o("train"), &o("ablate"), "--out", &o("report")]),
    ]
}

/// Every file under `dir` except run manifests, keyed by relative path.
pub fn data_files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().unwrap() != "manifest.json" {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}
