//! Train with a cost-per-click cap and print the dual-ascent trace.
//!
//!     cargo run --release --example constrained_training

use calicausal::trainer::{evaluate, train, ExperimentConfig, PreparedData};

fn main() -> calicausal::Result<()> {
    let mut config = ExperimentConfig::benchmark();
    config.simulator.n_slates = 2_000;
    config.split.train = 0.6;
    config.split.validation = 0.1;
    config.train.epochs = 15;
    // tighter than the unconstrained model's CPC
    config.train.dual.c_max = 1.05;
    config.train.dual.eta_dual = 0.5;
    let data = PreparedData::simulate(&config)?;
    let td = data.train_data(&config.train, &data.table, |_| true)?;
    let outcome = train(&td, &config.train)?;

    println!("epoch  cpc     c_max  lambda_c  mean_risk  lambda_r  val_auc");
    for e in &outcome.history.epochs {
        println!(
            "{:>5}  {:.4}  {:.2}   {:.4}    {:.4}     {:.4}    {:.4}",
            e.epoch, e.cpc, config.train.dual.c_max, e.lambda_c, e.mean_risk, e.lambda_r, e.val_auc
        );
    }
    let report = evaluate(&outcome.params, &data, &data.test, &data.table, &config)?;
    println!("test headline (AUC, NDCG@10, ECE, Utility@10): {:?}", report.headline());
    Ok(())
}
