//! Oracles shared by several test targets.

use std::collections::{BTreeMap, BTreeSet};

use satd_vuln::corpus::{InputMode, PreparedInput};

/// One comment-only prepared input per text.
pub fn corpus(texts: &[String]) -> Vec<PreparedInput> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| PreparedInput {
            id: i.to_string(),
            comment_text: t.clone(),
            code_text: String::new(),
            mode: InputMode::Out,
        })
        .collect()
}

/// Recounts every pair from scratch at each step and merges the most
/// frequent one; ties go to the lexicographically smallest (left, right).
pub fn reference_merges(pieces: &BTreeMap<String, u64>, vocab_size: usize) -> Vec<(String, String)> {
    let mut words: Vec<(Vec<String>, u64)> = pieces
        .iter()
        .map(|(p, &n)| (p.chars().map(|c| c.to_string()).collect(), n))
        .collect();
    let mut vocab: BTreeSet<String> = words.iter().flat_map(|(w, _)| w.iter().cloned()).collect();
    let mut merges = Vec::new();
    while 5 + vocab.len() < vocab_size {
        let mut counts: BTreeMap<(String, String), u64> = BTreeMap::new();
        for (w, n) in &words {
            for pair in w.windows(2) {
                *counts.entry((pair[0].clone(), pair[1].clone())).or_insert(0) += n;
            }
        }
        // BTreeMap iterates in ascending key order, so a strict `>` keeps
        // the smallest pair among equal counts.
        let mut best: Option<(&(String, String), u64)> = None;
        for (k, &c) in &counts {
            if best.is_none_or(|(_, bc)| c > bc) {
                best = Some((k, c));
            }
        }
        let Some(((a, b), count)) = best else { break };
        if count < 2 {
            break;
        }
        let (a, b) = (a.clone(), b.clone());
        let merged = format!("{a}{b}");
        for (w, _) in words.iter_mut() {
            let mut out = Vec::with_capacity(w.len());
            let mut i = 0;
            while i < w.len() {
                if i + 1 < w.len() && w[i] == a && w[i + 1] == b {
                    out.push(merged.clone());
                    i += 2;
                } else {
                    out.push(w[i].clone());
                    i += 1;
                }
            }
            *w = out;
        }
        vocab.insert(merged);
        merges.push((a, b));
    }
    merges
}
