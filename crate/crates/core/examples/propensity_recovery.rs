//! Estimate position propensities from the randomized slice and compare them
//! with the simulator's examination curve.
//!
//!     cargo run --release --example propensity_recovery

use calicausal::counterfactual::{estimate_propensities, PropensityConfig};
use calicausal::simulator::{examination, SimConfig};
use calicausal::trainer::simulate;

fn main() -> calicausal::Result<()> {
    for eta in [0.5, 1.0, 1.5] {
        let config = SimConfig {
            n: 20_000,
            n_slates: 4_000,
            randomized_fraction: 0.25,
            eta,
            ..SimConfig::default()
        };
        let (_, _, log) = simulate(&config)?;
        let randomized: Vec<_> = log.into_iter().filter(|i| i.randomized).collect();
        // Under a uniform shuffle the reference model only needs to be constant.
        let reference = vec![1.0; randomized.len()];
        let table = estimate_propensities(&randomized, &reference, &PropensityConfig::default())?;

        let mut worst = 0.0f64;
        for e in &table.entries {
            let truth = examination(eta, e.position);
            worst = worst.max((e.propensity - truth).abs() / truth);
        }
        println!("eta {eta}: {} randomized impressions, max relative error {:.3}", randomized.len(), worst);
        for e in table.entries.iter().filter(|e| [1, 2, 5, 10, 20].contains(&e.position)) {
            println!("  pos {:>2}  est {:.3}  true {:.3}", e.position, e.propensity, examination(eta, e.position));
        }
    }
    Ok(())
}
