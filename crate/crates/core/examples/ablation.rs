//! Full model against its single-component ablations on shared batches.
//!
//!     cargo run --release --example ablation [-- --benchmark]
//!
//! The default is a reduced two-seed run; `--benchmark` runs the full
//! three-seed configuration (a few minutes on one core).

use calicausal::report::{ablation_rows, svg_bar_chart, text_table};
use calicausal::trainer::{run_ablation, thread_count, ExperimentConfig, Variant};

fn main() -> calicausal::Result<()> {
    let mut config = ExperimentConfig::benchmark();
    if !std::env::args().any(|a| a == "--benchmark") {
        config.simulator.n_slates = 2_000;
        config.train.epochs = 15;
        config.seeds = vec![0, 1];
    }
    let report = run_ablation(&config, &Variant::ALL, thread_count())?;
    let rows = ablation_rows(&report);
    print!("{}", text_table(&rows));
    println!("identical batch partitions across variants: {}", report.identical_batches);
    let path = std::env::temp_dir().join("calicausal_ablation.svg");
    calicausal::io::write_text(&path, &svg_bar_chart(&rows))?;
    println!("chart: {}", path.display());
    Ok(())
}
