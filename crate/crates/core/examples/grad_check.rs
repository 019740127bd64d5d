//! Compares backpropagated gradients with central differences.

use satd_vuln::model::{grad_check, ModelConfig, TaskMode};

fn main() -> satd_vuln::Result<()> {
    for mode in [TaskMode::StSatd, TaskMode::StVuln, TaskMode::Multi] {
        let cfg = ModelConfig {
            vocab_size: 24,
            hidden: 16,
            layers: 2,
            heads: 2,
            max_len: 12,
            dropout: 0.0,
            task_mode: mode,
            seed: 5,
        };
        let r = grad_check(&cfg, 1e-4)?;
        println!(
            "{mode}: {} entries, max relative error {:.2e}",
            r.entries_checked, r.max_relative_error
        );
        for (name, err) in r.per_tensor.iter().filter(|(_, e)| *e > 1e-6) {
            println!("  {name}: {err:.2e}");
        }
    }
    Ok(())
}
