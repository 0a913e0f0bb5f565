//! Simulate an impression log and compare click rates by position with the
//! examination curve.
//!
//!     cargo run --release --example simulate_log

use calicausal::simulator::{examination, SimConfig};
use calicausal::trainer::simulate;

fn main() -> calicausal::Result<()> {
    let config = SimConfig {
        n: 10_000,
        n_slates: 4_000,
        randomized_fraction: 0.5,
        ..SimConfig::default()
    };
    let (sim, examples, log) = simulate(&config)?;
    println!("{} examples, {} impressions, {} clusters", examples.len(), log.len(), config.clusters);

    let by_id: std::collections::HashMap<u64, f64> = examples.iter().map(|e| (e.id, e.true_ctr)).collect();
    println!("pos  shown  ctr(randomized)  e*(pos)*mean_ctr");
    for pos in [1, 2, 3, 5, 10, 20] {
        let rows: Vec<_> = log.iter().filter(|i| i.randomized && i.position == pos).collect();
        let ctr = rows.iter().filter(|i| i.clicked).count() as f64 / rows.len() as f64;
        let base = rows.iter().map(|i| by_id[&i.example_id]).sum::<f64>() / rows.len() as f64;
        println!("{pos:>3}  {:>5}  {ctr:>15.4}  {:>16.4}", rows.len(), examination(sim.config().eta, pos) * base);
    }

    let conv = log.iter().filter(|i| i.converted).count();
    let revenue: f64 = log.iter().map(|i| i.reward).sum();
    println!("conversions {conv}, revenue {revenue:.2}");
    Ok(())
}
