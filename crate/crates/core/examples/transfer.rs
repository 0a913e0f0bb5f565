//! Train on a subset of clusters and measure AUC retention on the rest.
//!
//!     cargo run --release --example transfer

use calicausal::report::transfer_table;
use calicausal::trainer::{run_transfer, thread_count, ExperimentConfig};

fn main() -> calicausal::Result<()> {
    let mut config = ExperimentConfig::benchmark();
    config.simulator.n_slates = 2_000;
    config.train.epochs = 15;
    config.transfer.seeds = vec![0, 1, 2];
    let report = run_transfer(&config, thread_count())?;
    for r in &report.runs {
        println!(
            "seed {} {:<5} train {:?} in {:.4} cross {:.4} retention {:.4}",
            r.seed,
            r.variant.name(),
            r.train_clusters,
            r.in_segment_auc,
            r.cross_segment_auc,
            r.retention
        );
    }
    print!("{}", transfer_table(&report));
    Ok(())
}
