//! Drive the command-line interface in-process: simulate, train on the
//! written files, then re-evaluate the checkpoint.
//!
//!     cargo run --release --example cli_pipeline

use calicausal::cli::run;

fn main() {
    let dir = std::env::temp_dir().join("calicausal_cli_pipeline");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config = dir.join("config.json");
    std::fs::write(
        &config,
        r#"{
  "simulator": { "n": 3000, "n_slates": 600, "randomized_fraction": 0.3 },
  "train": { "epochs": 12, "batch_slates": 8, "w_cal": 0.05, "w_cf": 300.0,
             "dual": { "c_max": 1.2, "r_max": 0.55 } },
  "split": { "train": 0.5, "validation": 0.1 },
  "data": { "examples": "sim/examples.csv", "impressions": "sim/impressions.csv" }
}
"#,
    )
    .unwrap();
    let cfg = config.to_str().unwrap();
    let out = |name: &str| dir.join(name).to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["simulate".into(), "--config".into(), cfg.into(), "--out".into(), out("sim")],
        vec!["train".into(), "--config".into(), cfg.into(), "--out".into(), out("train")],
        vec![
            "evaluate".into(),
            "--config".into(),
            cfg.into(),
            "--checkpoint".into(),
            out("train/checkpoint.json"),
            "--out".into(),
            out("eval"),
        ],
        vec!["report".into(), out("train"), out("eval"), "--out".into(), out("report")],
    ];
    for args in steps {
        println!("$ calicausal {}", args.join(" "));
        let code = run(std::iter::once("calicausal".to_string()).chain(args));
        assert_eq!(code, 0, "step failed");
    }
    println!("outputs under {}", dir.display());
}
