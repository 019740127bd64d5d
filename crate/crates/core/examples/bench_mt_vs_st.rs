//! Times one multi-task model against the two single-task models it replaces.
//!
//! cargo run --release --example bench_mt_vs_st -- [runs]

use satd_vuln::experiment::synthetic::separable_corpus;
use satd_vuln::experiment::{benchmark_mt_vs_st, Experiment};
use satd_vuln::model::{ModelConfig, TrainConfig};

fn main() -> satd_vuln::Result<()> {
    let runs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let model = ModelConfig {
        vocab_size: 300,
        hidden: 32,
        layers: 2,
        heads: 2,
        max_len: 128,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut exp = Experiment::new("bench", &separable_corpus(16, 9), model, tc)?;
    let report = benchmark_mt_vs_st(&mut exp, runs)?;
    println!("{report}");
    for (i, (tr, te)) in report.train_ratios.iter().zip(&report.test_ratios).enumerate() {
        println!("  run {}: training {tr:.3}, test {te:.3}", i + 1);
    }
    Ok(())
}
