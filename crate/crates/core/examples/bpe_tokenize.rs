//! Trains a small BPE vocabulary and builds a truncated comment/code pair.

use satd_vuln::corpus::{prepare_input, InputMode};
use satd_vuln::experiment::synthetic::separable_corpus;
use satd_vuln::tokenizer::{build_model_input, train_bpe, truncate_head_only};

fn main() -> satd_vuln::Result<()> {
    let records = separable_corpus(4, 1);
    let prepared: Vec<_> = records
        .iter()
        .map(|r| prepare_input(r, InputMode::Out))
        .collect::<Result<_, _>>()?;
    let tok = train_bpe(&prepared, 200)?;
    println!("vocab {} tokens, {} merges", tok.vocab_size(), tok.merges().len());
    for (a, b) in tok.merges().iter().take(8) {
        println!("  {a:?} + {b:?}");
    }

    let pair = build_model_input(&tok, &prepared[0], 24);
    let pieces: Vec<&str> = pair.input_ids.iter().map(|&i| tok.token(i).unwrap_or("?")).collect();
    println!("segments {:?}: {}", pair.segment_lengths, pieces.join(" "));

    // Long inputs are cut from the tail; the shorter side keeps what fits in half.
    for (c, k) in [(300, 400), (100, 600), (700, 50)] {
        let (a, b) = truncate_head_only(&vec![0; c], &vec![1; k], 510);
        println!("({c}, {k}) -> ({}, {})", a.len(), b.len());
    }
    Ok(())
}
