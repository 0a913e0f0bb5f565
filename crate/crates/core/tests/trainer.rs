mod common;

use calicausal::model::{forward_batch, Features, ModelParams};
use calicausal::simulator::{generate_examples, Example};
use calicausal::trainer::{
    draw_cluster_split, run_ablation, total_loss, train, transfer_once, Ablation, Batch, DualMode, ExperimentConfig,
    PreparedData, Row, TrainConfig, TrainData, Variant,
};
use calicausal::Error;

fn small() -> ExperimentConfig {
    serde_json::from_str(common::SMALL_CONFIG).unwrap()
}

fn rows(examples: &[Example], label: impl Fn(&Example) -> bool) -> Vec<Row<'_>> {
    examples
        .iter()
        .map(|e| {
            let y = label(e);
            Row {
                example: e,
                clicked: y,
                converted: y && e.id % 2 == 0,
                bid: 1.0,
                reward: 0.0,
                weight: 1.0,
                bucket: 0,
            }
        })
        .collect()
}

#[test]
fn zero_epochs_returns_initial_params() {
    let examples = generate_examples(30, 1, 10).unwrap();
    let r = rows(&examples, |e| e.dense[0] > 0.5);
    let data = TrainData {
        slates: r.chunks(5).map(|c| c.to_vec()).collect(),
        validation: r.clone(),
        vocab: 100,
    };
    let mut tc = TrainConfig::new(2.0, 0.9);
    tc.epochs = 0;
    let out = train(&data, &tc).unwrap();
    let init = ModelParams::init(tc.model_shape(&examples[0], 100), tc.seed).unwrap();
    assert_eq!(out.params, init);
    assert!(out.history.epochs.is_empty());
}

#[test]
fn separable_micro_dataset_is_learned() {
    let examples = generate_examples(20, 2, 10).unwrap();
    let r = rows(&examples, |e| e.dense[0] > 0.5);
    assert!(r.iter().any(|x| x.clicked) && r.iter().any(|x| !x.clicked));
    let data = TrainData {
        slates: r.iter().map(|x| vec![*x]).collect(),
        validation: r.clone(),
        vocab: 100,
    };
    let mut tc = TrainConfig::new(2.0, 0.9).with_ablation(Ablation {
        no_calibration: true,
        no_constraints: true,
        no_counterfactual: true,
    });
    tc.epochs = 200;
    tc.patience = 0;
    tc.learning_rate = 1e-2;
    tc.batch_slates = 20;
    let out = train(&data, &tc).unwrap();
    let feats: Vec<Features<'_>> = examples.iter().map(Features::from).collect();
    let s = forward_batch(&out.params, &feats).unwrap();
    let ce: f64 = s
        .iter()
        .zip(&r)
        .map(|(o, x)| {
            let p = o.scores[0];
            if x.clicked {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / r.len() as f64;
    assert!(ce < 0.1, "cross-entropy {ce}");
}

#[test]
fn training_is_bit_reproducible() {
    let cfg = small().for_seed(0);
    let data = PreparedData::simulate(&cfg).unwrap();
    let td = data.train_data(&cfg.train, &data.table, |_| true).unwrap();
    let a = train(&td, &cfg.train).unwrap();
    let b = train(&td, &cfg.train).unwrap();
    assert_eq!(a.history, b.history);
    assert!(a.params.values().iter().zip(b.params.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn disabled_components_have_zero_traces() {
    let cfg = small().for_seed(1);
    let data = PreparedData::simulate(&cfg).unwrap();
    for v in [Variant::NoCalibration, Variant::NoConstraints, Variant::NoCounterfactual] {
        let tc = v.apply(&cfg.train);
        let td = data.train_data(&tc, &data.table, |_| true).unwrap();
        let h = train(&td, &tc).unwrap().history;
        assert!(!h.epochs.is_empty());
        for e in &h.epochs {
            match v {
                Variant::NoCalibration => assert_eq!(e.loss_cal, 0.0),
                Variant::NoConstraints => {
                    assert_eq!(e.loss_con, 0.0);
                    assert_eq!((e.lambda_c, e.lambda_r), (tc.dual.lambda_c_init, tc.dual.lambda_r_init));
                }
                Variant::NoCounterfactual => assert_eq!(e.loss_cf, 0.0),
                Variant::Full => unreachable!(),
            }
        }
    }
}

#[test]
fn all_components_off_leaves_the_pointwise_loss() {
    let examples = generate_examples(50, 17, 10).unwrap();
    let r = common::three_rows(&examples);
    let batch = Batch::gather(&[r.as_slice()]);
    let tc = common::gradient_config().with_ablation(Ablation {
        no_calibration: true,
        no_constraints: true,
        no_counterfactual: true,
    });
    let params = ModelParams::init(tc.model_shape(&examples[0], 100), 3).unwrap();
    let duals = tc.dual.initial_state().unwrap();
    let (c, _) = total_loss(&batch, &params, &duals, None, &tc).unwrap();
    assert_eq!(c.total, c.point);
    assert_eq!((c.cal, c.con, c.cf), (0.0, 0.0, 0.0));
}

#[test]
fn fixed_duals_do_not_move() {
    let mut cfg = small().for_seed(2);
    cfg.train.dual.mode = DualMode::Fixed;
    cfg.train.dual.c_max = 0.2;
    let data = PreparedData::simulate(&cfg).unwrap();
    let td = data.train_data(&cfg.train, &data.table, |_| true).unwrap();
    let out = train(&td, &cfg.train).unwrap();
    assert!(out.history.epochs.iter().all(|e| e.lambda_c == 0.5 && e.lambda_r == 0.5));

    cfg.train.dual.mode = DualMode::Ascent;
    cfg.train.dual.eta_dual = 0.5;
    let out = train(&td, &cfg.train).unwrap();
    let last = out.history.epochs.last().unwrap();
    assert!(last.lambda_c > 0.5, "CPC above a tight cap should raise λ_c");
}

#[test]
fn divergence_keeps_partial_history() {
    let cfg = small().for_seed(3);
    let data = PreparedData::simulate(&cfg).unwrap();
    let mut tc = cfg.train.clone();
    tc.learning_rate = 1e9;
    tc.w_cf = 1e12;
    let td = data.train_data(&tc, &data.table, |_| true).unwrap();
    match train(&td, &tc) {
        Err(Error::Diverged { epoch, history, .. }) => {
            assert!(history.epochs.len() == epoch || history.epochs.len() == epoch + 1);
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.history.epochs.len())),
    }
}

#[test]
fn loss_falls_over_the_first_ten_epochs() {
    let mut cfg = ExperimentConfig::benchmark().for_seed(0);
    cfg.train.epochs = 10;
    cfg.train.patience = 0;
    let data = PreparedData::simulate(&cfg).unwrap();
    let td = data.train_data(&cfg.train, &data.table, |_| true).unwrap();
    let h = train(&td, &cfg.train).unwrap().history;
    let y: Vec<f64> = h.epochs.iter().map(|e| e.loss_total).collect();
    assert_eq!(y.len(), 10);
    // three-epoch moving average is strictly decreasing
    let smooth: Vec<f64> = y.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    assert!(smooth.windows(2).all(|w| w[1] < w[0]), "{y:?}");
}

#[test]
fn variants_share_batches() {
    let mut cfg = small();
    cfg.seeds = vec![5];
    let report = run_ablation(&cfg, &Variant::ALL, 1).unwrap();
    assert!(report.identical_batches);
    assert_eq!(report.runs.len(), 4);
    let names: Vec<&str> = report.summary.iter().map(|s| s.variant.name()).collect();
    assert_eq!(names, ["full", "-cal", "-con", "-cf"]);
}

#[test]
fn transfer_to_the_training_clusters_retains_everything() {
    let cfg = small().for_seed(0);
    let data = PreparedData::simulate(&cfg).unwrap();
    let all: Vec<usize> = (0..cfg.simulator.clusters).collect();
    let run = transfer_once(&data, &cfg, Variant::Full, &all, &all).unwrap();
    assert_eq!(run.retention, 1.0);

    let (train_c, eval_c) = draw_cluster_split(10, 7, 0);
    assert_eq!((train_c.len(), eval_c.len()), (7, 3));
    assert!(train_c.iter().all(|c| !eval_c.contains(c)));
    let overlap = [train_c[0], eval_c[0]];
    assert!(matches!(
        transfer_once(&data, &cfg, Variant::Full, &train_c, &overlap),
        Err(Error::OverlappingClusters(_))
    ));
}
