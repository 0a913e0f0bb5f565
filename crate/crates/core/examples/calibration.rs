//! Bucket calibration on a predictor with segment-dependent bias: descend the
//! bucket L1 loss in logit space and watch ECE fall.
//!
//!     cargo run --release --example calibration

use calicausal::calibration::{bucket_l1, bucket_means, ece, BucketKey, FittedBucketKey};
use calicausal::rng::stream;
use calicausal::simulator::{generate_examples, sigmoid};
use rand::Rng;

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn main() -> calicausal::Result<()> {
    let examples = generate_examples(20_000, 3, 10)?;
    let mut rng = stream(3, "labels");
    let labels: Vec<f64> = examples.iter().map(|e| rng.gen_bool(e.true_ctr) as u8 as f64).collect();

    let k = 20;
    let assignment = FittedBucketKey::fit(&examples, k, BucketKey::default())?.assign(&examples);
    let targets = bucket_means(&labels, &assignment.buckets, k);

    // true CTR shifted by a per-segment offset
    let mut z: Vec<f64> = examples
        .iter()
        .map(|e| logit(e.true_ctr) + 0.3 + 0.4 * (e.segment % 3) as f64)
        .collect();
    let lr = 200.0;
    for step in 0..=40 {
        let p: Vec<f64> = z.iter().map(|&v| sigmoid(v)).collect();
        let term = bucket_l1(&p, &assignment.buckets, &targets)?;
        if step % 10 == 0 {
            println!("step {step:>2}  bucket L1 {:.4}  ECE {:.4}", term.loss, ece(&p, &labels, 10)?);
        }
        for i in 0..z.len() {
            z[i] -= lr * term.grad[i] * p[i] * (1.0 - p[i]);
        }
    }
    let truth: Vec<f64> = examples.iter().map(|e| e.true_ctr).collect();
    println!("true CTR as predictor: ECE {:.4}", ece(&truth, &labels, 10)?);
    Ok(())
}
