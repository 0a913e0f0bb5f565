//! Naive average, IPS and SNIPS over bootstrap resamples of one simulated log
//! (top 10 positions, click reward, true propensities supplied).
//!
//! IPS targets the mean full-examination click rate `mean(ctr)`. SNIPS
//! normalizes by `sum(1/e)`, so its target is `sum(ctr) / sum(1/e)`.
//!
//!     cargo run --release --example snips_vs_ips

use std::collections::HashMap;

use calicausal::counterfactual::{bootstrap, Estimator, PropensityTable, RewardKind};
use calicausal::rng::stream;
use calicausal::simulator::{examination, SimConfig};
use calicausal::trainer::{mean_std, simulate};

fn main() -> calicausal::Result<()> {
    let config = SimConfig {
        n: 20_000,
        n_slates: 10_000,
        ..SimConfig::default()
    };
    let (sim, examples, log) = simulate(&config)?;
    let top: Vec<_> = log.into_iter().filter(|i| i.position <= 10).collect();
    let e: Vec<f64> = (1..=10).map(|p| examination(sim.config().eta, p)).collect();
    let table = PropensityTable::from_values(&e, 0.01);

    let ctr: HashMap<u64, f64> = examples.iter().map(|x| (x.id, x.true_ctr)).collect();
    let sum_ctr: f64 = top.iter().map(|i| ctr[&i.example_id]).sum();
    let ips_target = sum_ctr / top.len() as f64;
    let snips_target = sum_ctr / top.iter().map(|i| 1.0 / e[i.position - 1]).sum::<f64>();

    let reps = 200;
    // same resample indices for every estimator
    let ips = bootstrap(&top, &table, RewardKind::Click, Estimator::Ips, reps, &mut stream(1, "boot"))?;
    let snips = bootstrap(&top, &table, RewardKind::Click, Estimator::Snips, reps, &mut stream(1, "boot"))?;
    let flat = PropensityTable::from_values(&[1.0; 10], 0.01);
    let naive = bootstrap(&top, &flat, RewardKind::Click, Estimator::Ips, reps, &mut stream(1, "boot"))?;

    println!("{} impressions, {reps} resamples", top.len());
    println!("estimator  target    mean      std       rel.err");
    for (name, target, xs) in [("naive", snips_target, &naive), ("ips", ips_target, &ips), ("snips", snips_target, &snips)] {
        let (m, s) = mean_std(xs);
        println!("{name:<9}  {target:.5}  {m:.5}  {s:.6}  {:+.4}", m / target - 1.0);
    }
    Ok(())
}
