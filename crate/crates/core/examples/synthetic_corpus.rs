//! Writes the separable synthetic corpus as a JSONL dataset.
//!
//! cargo run --example synthetic_corpus -- out.jsonl [per_combination] [seed]

use std::path::PathBuf;

use satd_vuln::corpus::{write_dataset, Demographics};
use satd_vuln::experiment::synthetic::separable_corpus;

fn main() -> satd_vuln::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic.jsonl".into()));
    let per: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);
    let seed: u64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(11);
    let records = separable_corpus(per, seed);
    write_dataset(&out, &records)?;
    println!("{}: {}", out.display(), Demographics::of(&records));
    println!("first record:\n// {}\n{}", records[0].leading_comment, records[0].code);
    Ok(())
}
