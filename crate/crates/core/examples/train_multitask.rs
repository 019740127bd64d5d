//! Trains multi-task and single-task models on a synthetic corpus and scores them.
//!
//! cargo run --release --example train_multitask -- [epochs]

use satd_vuln::corpus::InputMode;
use satd_vuln::experiment::synthetic::separable_corpus;
use satd_vuln::experiment::{build_report, Experiment, LossMode};
use satd_vuln::model::{ModelConfig, TaskMode, TrainConfig};

fn main() -> satd_vuln::Result<()> {
    let epochs = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(12);
    let model = ModelConfig {
        vocab_size: 200,
        hidden: 32,
        layers: 2,
        heads: 2,
        max_len: 128,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let tc = TrainConfig {
        learning_rate: 3e-3,
        epochs,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut exp = Experiment::new("synthetic", &separable_corpus(24, 2), model, tc)?;
    println!("split {:?}", exp.split_sizes());

    let mut rows = Vec::new();
    for mode in [TaskMode::Multi, TaskMode::StSatd, TaskMode::StVuln] {
        let cell = exp.run_cell(mode, LossMode::Regular, InputMode::Out)?;
        println!(
            "{mode}: best epoch {}, {:.1} s",
            cell.history.best_epoch, cell.train_seconds
        );
        rows.extend(cell.rows());
    }
    print!("{}", build_report("synthetic", &rows)?.render());
    Ok(())
}
