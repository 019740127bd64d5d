//! Small labeled corpora whose labels are decidable from a single token:
//! SATD iff the leading comment says `FIXME`, vulnerable iff the body calls
//! `memcpy`. Used to check that training can fit separable data.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::FunctionRecord;

const SUBJECTS: [&str; 8] = [
    "buffer", "packet", "header", "frame", "entry", "record", "block", "segment",
];
const VERBS: [&str; 6] = ["copy", "fill", "parse", "load", "scan", "pack"];
const NOTES: [&str; 6] = ["Fast.", "Safe.", "In bytes.", "Internal.", "Pure.", "Linear."];
const FILLER: [&str; 4] = ["n += 1;", "n ^= 3;", "n = n * 2;", "if (n < 0) n = 0;"];

/// `counts[i]` records for each label combination, in the order
/// (clean, SATD only, vulnerable only, both).
pub fn synthetic_corpus(counts: [usize; 4], seed: u64) -> Vec<FunctionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let combos = [(false, false), (true, false), (false, true), (true, true)];
    let mut out = Vec::with_capacity(counts.iter().sum());
    for (&(satd, vuln), &count) in combos.iter().zip(&counts) {
        for _ in 0..count {
            let i = out.len();
            out.push(function(&mut rng, i, satd, vuln));
        }
    }
    out
}

/// The balanced 4 x `per_combination` separable corpus.
pub fn separable_corpus(per_combination: usize, seed: u64) -> Vec<FunctionRecord> {
    synthetic_corpus([per_combination; 4], seed)
}

fn function(rng: &mut ChaCha8Rng, i: usize, satd: bool, vuln: bool) -> FunctionRecord {
    let subject = *SUBJECTS.choose(rng).expect("non-empty");
    let verb = *VERBS.choose(rng).expect("non-empty");
    let name = format!("{verb}{i}");
    let mut comment = format!("{} the {subject}.", capitalise(verb));
    if satd {
        comment.push_str(" FIXME");
    } else {
        comment.push(' ');
        comment.push_str(NOTES.choose(rng).expect("non-empty"));
    }
    let mut body = vec![FILLER.choose(rng).expect("non-empty").to_string()];
    if rng.random_bool(0.5) {
        body.push(format!("/* {verb} */"));
    }
    body.push(if vuln { "memcpy(d, s, n);" } else { "copy_n(d, s, n);" }.to_string());
    let code = format!(
        "void {name}(char *d, char *s, int n)\n{{\n{}\n}}\n",
        body.iter().map(|l| format!("    {l}")).collect::<Vec<_>>().join("\n")
    );
    FunctionRecord {
        id: format!("{i}:{name}"),
        project: "synthetic".into(),
        dataset: "synthetic".into(),
        code,
        leading_comment: comment,
        satd_label: Some(satd),
        vuln_label: Some(vuln),
    }
}

fn capitalise(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
