//! Central finite differences against the analytic gradient of the composite
//! loss on a small batch.
//!
//!     cargo run --release --example gradient_check

use calicausal::model::{ModelParams, ModelShape};
use calicausal::trainer::{total_loss, Batch, CalibrationTargets, ExperimentConfig, PreparedData};

fn main() -> calicausal::Result<()> {
    let mut config = ExperimentConfig::benchmark();
    config.simulator.n = 2_000;
    config.simulator.n_slates = 200;
    config.simulator.randomized_fraction = 0.5;
    config.split.train = 0.5;
    let data = PreparedData::simulate(&config)?;
    let mut tc = config.train.clone();
    tc.embed_dim = 4;
    tc.hidden = vec![8, 4];
    let td = data.train_data(&tc, &data.table, |_| true)?;
    let slates: Vec<&[_]> = td.slates.iter().take(3).map(|s| s.as_slice()).collect();
    let batch = Batch::gather(&slates);
    let targets = CalibrationTargets::from_rows(&td.all_rows(), tc.k_buckets);
    let shape: ModelShape = tc.model_shape(batch.rows[0].example, td.vocab);
    let params = ModelParams::init(shape, 11)?;
    let duals = tc.dual.initial_state()?;

    let (parts, grad) = total_loss(&batch, &params, &duals, Some(&targets), &tc)?;
    println!("loss {:.6} (point {:.4}, cal {:.4}, con {:.4}, cf {:.6})", parts.total, parts.point, parts.cal, parts.con, parts.cf);
    let h = 1e-5;
    let mut worst = 0.0f64;
    let step = (params.len() / 40).max(1);
    for i in (0..params.len()).step_by(step) {
        let eval = |delta: f64| -> calicausal::Result<f64> {
            let mut p = params.clone();
            p.values_mut()[i] += delta;
            Ok(total_loss(&batch, &p, &duals, Some(&targets), &tc)?.0.total)
        };
        let fd = (eval(h)? - eval(-h)?) / (2.0 * h);
        let rel = (fd - grad.values[i]).abs() / fd.abs().max(grad.values[i].abs()).max(1e-6);
        worst = worst.max(rel);
    }
    println!("checked {} of {} parameters, max relative error {worst:.2e}", params.len().div_ceil(step), params.len());
    Ok(())
}
