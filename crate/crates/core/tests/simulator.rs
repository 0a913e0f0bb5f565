use std::collections::HashMap;

use calicausal::rng::stream;
use calicausal::simulator::{examination, SimConfig, Simulator};
use calicausal::trainer::simulate;

fn config(seed: u64) -> SimConfig {
    SimConfig {
        n: 10_000,
        n_slates: 5_000,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn same_seed_same_world() {
    let (a_sim, a_ex, a_log) = simulate(&config(3)).unwrap();
    let (b_sim, b_ex, b_log) = simulate(&config(3)).unwrap();
    assert_eq!(a_sim.truth(), b_sim.truth());
    assert_eq!(a_ex, b_ex);
    assert_eq!(a_log, b_log);
    let (_, c_ex, _) = simulate(&config(4)).unwrap();
    assert_ne!(a_ex, c_ex);
}

#[test]
fn randomized_share_matches_config() {
    let (_, _, log) = simulate(&config(5)).unwrap();
    assert_eq!(log.len(), 100_000);
    let share = log.iter().filter(|i| i.randomized).count() as f64 / log.len() as f64;
    assert!((share - 0.01).abs() <= 0.002, "randomized share {share}");
}

/// Click counts per position on a shuffled log against the examination model's
/// expectation `sum(e(p) * ctr)`, within four binomial standard errors.
#[test]
fn clicks_follow_the_examination_model() {
    let cfg = SimConfig {
        randomized_fraction: 1.0,
        eta: 0.8,
        ..config(6)
    };
    let (_, examples, log) = simulate(&cfg).unwrap();
    let ctr: HashMap<u64, f64> = examples.iter().map(|e| (e.id, e.true_ctr)).collect();
    for pos in 1..=cfg.slate_size {
        let e = examination(cfg.eta, pos);
        let (mut clicks, mut mean, mut var) = (0.0, 0.0, 0.0);
        for imp in log.iter().filter(|i| i.position == pos) {
            let p = e * ctr[&imp.example_id];
            clicks += imp.clicked as u8 as f64;
            mean += p;
            var += p * (1.0 - p);
        }
        let z = (clicks - mean) / var.sqrt();
        assert!(z.abs() < 4.0, "position {pos}: clicks {clicks} expected {mean:.1} (z {z:.2})");
    }
}

#[test]
fn outcome_fields_are_consistent() {
    let (_, examples, log) = simulate(&config(7)).unwrap();
    let by_id: HashMap<u64, _> = examples.iter().map(|e| (e.id, e)).collect();
    for imp in &log {
        assert!(!imp.clicked || imp.examined);
        assert!(!imp.converted || imp.clicked);
        let ex = by_id[&imp.example_id];
        if imp.converted {
            assert_eq!(imp.reward, ex.true_revenue);
        } else {
            assert_eq!(imp.reward, 0.0);
        }
        assert!(imp.bid > 0.0);
        assert!((1..=20).contains(&imp.position));
    }
    // conversion frequency among clicks tracks the latent rate
    let clicked: Vec<_> = log.iter().filter(|i| i.clicked).collect();
    let conv = clicked.iter().filter(|i| i.converted).count() as f64;
    let expected: f64 = clicked.iter().map(|i| by_id[&i.example_id].true_cvr).sum();
    let sd: f64 = clicked
        .iter()
        .map(|i| {
            let p = by_id[&i.example_id].true_cvr;
            p * (1.0 - p)
        })
        .sum::<f64>()
        .sqrt();
    assert!((conv - expected).abs() < 4.0 * sd);
}

#[test]
fn bids_follow_cluster_lognormals() {
    let sim = Simulator::new(config(8)).unwrap();
    let examples = sim.generate_examples(2_000, 8);
    let mut rng = stream(8, "bids");
    let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
    for _ in 0..20 {
        for e in &examples {
            let b = sim.assign_bid(e, &mut rng);
            let s = sums.entry(e.segment).or_default();
            s.0 += b;
            s.1 += 1;
        }
    }
    for (seg, (sum, n)) in sums {
        let mean = sum / n as f64;
        let truth = sim.truth().bid_params[seg].mean();
        assert!((mean / truth - 1.0).abs() < 0.05, "segment {seg}: {mean} vs {truth}");
    }
}

#[test]
fn ground_truth_probabilities_are_in_range() {
    let (sim, examples, _) = simulate(&config(9)).unwrap();
    assert_eq!(sim.truth().examination.len(), 20);
    assert_eq!(sim.truth().examination[0], 1.0);
    for e in &examples {
        for p in [e.true_ctr, e.true_cvr, e.true_risk] {
            assert!(p > 0.0 && p < 1.0);
        }
        assert!(e.true_revenue > 0.0);
        assert!(e.segment < 10);
    }
}
