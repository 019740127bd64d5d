//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so that every criterion reports even
//! when an earlier one fails. The process fails when a criterion outside
//! `KNOWN_UNATTAINABLE` fails.

mod support;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use satd_vuln::annotate::{annotate_mat, chi_square, label_dataset, Annotator, ContingencyTable};
use satd_vuln::corpus::{extract_functions, prepare_input, strip_internal_comments, InputMode};
use satd_vuln::experiment::synthetic::{separable_corpus, synthetic_corpus};
use satd_vuln::experiment::{
    benchmark_mt_vs_st, build_report, compute_metrics, f1_score, round3, Approach, DeltaKind, Experiment, LossMode,
    ReportRow,
};
use satd_vuln::model::{
    class_weights, grad_check, init_model, train, History, LabeledPair, ModelConfig, TaskLabels, TaskMode, TrainConfig,
};
use satd_vuln::tokenizer::{build_model_input, piece_counts, train_bpe, truncate_head_only};
use support::{corpus, reference_merges};

/// Criteria whose reference reference values contradict each other.
const KNOWN_UNATTAINABLE: &[u32] = &[3];

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// ---------------------------------------------------------------------------
// Reference numbers. Each row: approach, precision, recall, F1, printed delta
// against single-task (MT rows only) and, for the weighted table, the printed
// weighted-minus-regular delta. Printed deltas are (direction, magnitude);
// direction is +1 for an up marker, -1 for a down marker.

type Printed = Option<(i8, f64)>;

struct Reference {
    approach: Approach,
    p: f64,
    r: f64,
    f1: f64,
    delta: Printed,
    delta_prime: Printed,
}

const fn row(approach: Approach, p: f64, r: f64, f1: f64, delta: Printed, delta_prime: Printed) -> Reference {
    Reference {
        approach,
        p,
        r,
        f1,
        delta,
        delta_prime,
    }
}

const UP: i8 = 1;
const DOWN: i8 = -1;

const DATASETS: [&str; 3] = ["OSPR", "Devign", "Big-Vul"];

fn regular_table() -> [[Reference; 4]; 3] {
    use Approach::*;
    [
        [
            row(MtSatd, 0.924, 0.578, 0.711, Some((UP, 0.033)), None),
            row(MtVuln, 0.975, 0.958, 0.967, Some((DOWN, 0.001)), None),
            row(StSatd, 0.991, 0.515, 0.678, None, None),
            row(StVuln, 0.976, 0.960, 0.968, None, None),
        ],
        [
            row(MtSatd, 0.989, 0.985, 0.987, Some((UP, 0.011)), None),
            row(MtVuln, 0.601, 0.567, 0.584, Some((DOWN, 0.020)), None),
            row(StSatd, 0.977, 0.973, 0.976, None, None),
            row(StVuln, 0.584, 0.626, 0.604, None, None),
        ],
        [
            row(MtSatd, 0.970, 0.936, 0.953, Some((DOWN, 0.007)), None),
            row(MtVuln, 0.948, 0.880, 0.913, Some((UP, 0.002)), None),
            row(StSatd, 0.980, 0.941, 0.960, None, None),
            row(StVuln, 0.944, 0.880, 0.911, None, None),
        ],
    ]
}

fn weighted_table() -> [[Reference; 4]; 3] {
    use Approach::*;
    [
        [
            row(MtSatd, 0.975, 0.535, 0.690, Some((UP, 0.033)), Some((DOWN, 0.021))),
            row(MtVuln, 0.971, 0.966, 0.969, Some((DOWN, 0.001)), Some((UP, 0.002))),
            row(StSatd, 0.911, 0.585, 0.713, None, Some((UP, 0.035))),
            row(StVuln, 0.974, 0.960, 0.967, None, Some((DOWN, 0.001))),
        ],
        [
            row(MtSatd, 0.988, 0.944, 0.966, Some((UP, 0.011)), Some((DOWN, 0.021))),
            row(MtVuln, 0.598, 0.556, 0.576, Some((DOWN, 0.020)), Some((DOWN, 0.008))),
            row(StSatd, 0.985, 0.974, 0.979, None, Some((UP, 0.003))),
            row(StVuln, 0.583, 0.582, 0.583, None, Some((DOWN, 0.021))),
        ],
        [
            row(MtSatd, 0.965, 0.941, 0.953, Some((DOWN, 0.007)), Some((DOWN, 0.046))),
            row(MtVuln, 0.928, 0.888, 0.908, Some((DOWN, 0.002)), Some((DOWN, 0.005))),
            row(StSatd, 0.946, 0.941, 0.944, None, Some((DOWN, 0.016))),
            row(StVuln, 0.941, 0.895, 0.918, None, Some((UP, 0.007))),
        ],
    ]
}

// ---------------------------------------------------------------------------

fn c1_chi_square() -> Outcome {
    let start = Instant::now();
    let t = chi_square(&ContingencyTable::new(134_515, 7_791, 1_395, 657)).map_err(|e| e.to_string())?;
    within(start.elapsed(), 1.0)?;
    check((t.statistic - 2586.6).abs() <= 0.5, || {
        format!("statistic {:.3}", t.statistic)
    })?;
    check(t.p_value < 1e-10, || format!("p = {:e}", t.p_value))?;
    Ok(format!("chi2 = {:.2}, p = {:.1e}", t.statistic, t.p_value))
}

fn c2_f1_identity() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut n = 0;
    for table in [regular_table(), weighted_table()] {
        for (d, rows) in DATASETS.iter().zip(table.iter()) {
            for r in rows {
                let err = (f1_score(r.p, r.r) - r.f1).abs();
                check(err <= 0.0015, || {
                    format!("{d} {}: |F1 - 2PR/(P+R)| = {err:.4}", r.approach)
                })?;
                worst = worst.max(err);
                n += 1;
            }
        }
    }
    within(start.elapsed(), 1.0)?;
    Ok(format!("{n} triples, largest deviation {worst:.4}"))
}

fn c3_delta_bookkeeping() -> Outcome {
    let mut rows = vec![Vec::new(); 3];
    for (loss, table) in [
        (LossMode::Regular, regular_table()),
        (LossMode::Weighted, weighted_table()),
    ] {
        for (i, t) in table.iter().enumerate() {
            for r in t {
                rows[i].push(ReportRow::new(r.approach, loss, InputMode::Out, r.p, r.r, r.f1));
            }
        }
    }
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for (i, d) in DATASETS.iter().enumerate() {
        let report = build_report(d, &rows[i]).map_err(|e| e.to_string())?;
        for (loss, table) in [
            (LossMode::Regular, regular_table()),
            (LossMode::Weighted, weighted_table()),
        ] {
            for r in &table[i] {
                for (kind, printed) in [
                    (DeltaKind::MultiVsSingle, r.delta),
                    (DeltaKind::WeightedVsRegular, r.delta_prime),
                ] {
                    let Some((dir, mag)) = printed else { continue };
                    checked += 1;
                    let got = report
                        .delta(kind, r.approach, loss, InputMode::Out)
                        .map(|x| x.rounded())
                        .ok_or_else(|| format!("{d} {} {loss}: no {kind:?} delta", r.approach))?;
                    let same_direction = (got > 0.0 && dir > 0) || (got < 0.0 && dir < 0);
                    if !same_direction || round3(got.abs()) != mag {
                        let marker = if dir > 0 { "up" } else { "down" };
                        mismatches.push(format!(
                            "{d} {} {loss} {kind:?}: computed {got:+.3}, printed {marker} {mag:.3}",
                            r.approach
                        ));
                    }
                }
            }
        }
    }
    if mismatches.is_empty() {
        Ok(format!("{checked} printed deltas reproduced"))
    } else {
        Err(format!(
            "{} of {checked} printed deltas differ from the F1 columns:\n      {}",
            mismatches.len(),
            mismatches.join("\n      ")
        ))
    }
}

/// Closed-form head-only lengths: the shorter segment survives whole when it
/// fits in half the budget, otherwise both get half (comment takes the odd one).
fn expected_lengths(c: usize, k: usize, budget: usize) -> (usize, usize) {
    if c + k <= budget {
        (c, k)
    } else if 2 * c <= budget {
        (c, budget - c)
    } else if 2 * k <= budget {
        (budget - k, k)
    } else {
        (budget.div_ceil(2), budget / 2)
    }
}

fn c4_truncation() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10_000 {
        let c = rng.random_range(0..800usize);
        let k = rng.random_range(0..800usize);
        let budget = rng.random_range(0..1100usize);
        let comment: Vec<u32> = (0..c as u32).collect();
        let code: Vec<u32> = (10_000..10_000 + k as u32).collect();
        let (a, b) = truncate_head_only(&comment, &code, budget);
        check(a[..] == comment[..a.len()] && b[..] == code[..b.len()], || {
            format!("({c}, {k}, {budget}): head not kept")
        })?;
        check(a.len() + b.len() == (c + k).min(budget), || {
            format!("({c}, {k}, {budget}): wrong total")
        })?;
        let short_ok = (2 * c.min(k) > budget) || (if c <= k { a.len() == c } else { b.len() == k });
        check(short_ok, || format!("({c}, {k}, {budget}): short segment cut"))?;
        let want = expected_lengths(c, k, budget);
        check((a.len(), b.len()) == want, || {
            format!("({c}, {k}, {budget}): got {:?}, want {want:?}", (a.len(), b.len()))
        })?;
    }
    let (a, b) = truncate_head_only(&vec![0u8; 300], &vec![1u8; 400], 510);
    check((a.len(), b.len()) == (255, 255), || {
        format!("(300, 400, 510) gave ({}, {})", a.len(), b.len())
    })?;
    within(start.elapsed(), 5.0)?;
    Ok("10,000 random triples and (300, 400, 510) -> (255, 255)".into())
}

fn c5_bpe_oracle() -> Outcome {
    let start = Instant::now();
    let alphabet: Vec<char> = "abcd _(){};".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut merges = 0;
    for case in 0..50 {
        let docs = rng.random_range(1..8);
        let mut budget = rng.random_range(1..=200usize);
        let mut texts = Vec::new();
        for _ in 0..docs {
            let len = rng.random_range(0..=budget.min(40));
            budget -= len;
            texts.push(
                (0..len)
                    .map(|_| alphabet[rng.random_range(0..alphabet.len())])
                    .collect::<String>(),
            );
            if budget == 0 {
                break;
            }
        }
        let prepared = corpus(&texts);
        let pieces = piece_counts(&prepared);
        let vocab = rng.random_range(6..80);
        let tok = match train_bpe(&prepared, vocab) {
            Ok(t) => t,
            // Below the special-plus-alphabet floor there is nothing to compare.
            Err(_) => continue,
        };
        let want = reference_merges(&pieces, vocab);
        check(tok.merges() == want, || {
            format!("corpus {case}: merges differ from the exhaustive counter")
        })?;
        merges += want.len();
        for t in &texts {
            let back = tok.decode(&tok.encode(t)).map_err(|e| e.to_string())?;
            check(&back == t, || {
                format!("corpus {case}: round trip of {t:?} gave {back:?}")
            })?;
        }
    }
    within(start.elapsed(), 30.0)?;
    Ok(format!("50 corpora, {merges} merges matched, round trips exact"))
}

fn c6_grad_check() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    for mode in [TaskMode::StSatd, TaskMode::StVuln, TaskMode::Multi] {
        let cfg = ModelConfig {
            vocab_size: 24,
            hidden: 16,
            layers: 2,
            heads: 2,
            max_len: 12,
            dropout: 0.0,
            task_mode: mode,
            seed: 17,
        };
        let report = grad_check(&cfg, 1e-4).map_err(|e| e.to_string())?;
        check(report.passed && report.max_relative_error < 1e-4, || {
            format!("{mode}: max relative error {:e}", report.max_relative_error)
        })?;
        parts.push(format!("{mode} {:.1e}", report.max_relative_error));
    }
    within(start.elapsed(), 120.0)?;
    Ok(format!("max relative error: {}", parts.join(", ")))
}

fn encode_all(records: &[satd_vuln::corpus::FunctionRecord], vocab: usize, budget: usize) -> (Vec<LabeledPair>, usize) {
    let prepared: Vec<_> = records
        .iter()
        .map(|r| prepare_input(r, InputMode::Out).unwrap())
        .collect();
    let tok = train_bpe(&prepared, vocab).unwrap();
    let data = records
        .iter()
        .zip(&prepared)
        .map(|(r, p)| LabeledPair {
            pair: build_model_input(&tok, p, budget),
            labels: TaskLabels {
                satd: r.satd_label,
                vuln: r.vuln_label,
            },
        })
        .collect();
    (data, tok.vocab_size())
}

/// Best training-split score over the epochs, each task at the same epoch.
fn best_train_f1(h: &History, mode: TaskMode) -> f64 {
    h.split("train")
        .map(|r| {
            mode.tasks()
                .iter()
                .map(|&t| r.f1(t).unwrap_or(0.0))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

fn c7_overfit() -> Outcome {
    let start = Instant::now();
    let defaults = ModelConfig::default();
    let (data, vocab) = encode_all(&separable_corpus(16, 11), defaults.vocab_size, defaults.max_len - 3);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        epochs: 30,
        ..TrainConfig::default()
    };
    let mut parts = Vec::new();
    let mut multi = None;
    for mode in [TaskMode::Multi, TaskMode::StSatd, TaskMode::StVuln] {
        let cfg = ModelConfig {
            vocab_size: vocab,
            task_mode: mode,
            ..defaults.clone()
        };
        let (model, history) =
            train(init_model(&cfg).map_err(|e| e.to_string())?, &data, &data, &tc).map_err(|e| e.to_string())?;
        let f1 = best_train_f1(&history, mode);
        check(f1 >= 0.95, || format!("{mode}: best train F1 {f1:.3}"))?;
        parts.push(format!("{mode} {f1:.3}"));
        if mode == TaskMode::Multi {
            multi = Some((cfg, model, history));
        }
    }
    let (cfg, model, history) = multi.expect("multi ran");
    let (again, again_history) =
        train(init_model(&cfg).map_err(|e| e.to_string())?, &data, &data, &tc).map_err(|e| e.to_string())?;
    check(again_history == history && again.params == model.params, || {
        "re-run with the same seed differs".into()
    })?;
    within(start.elapsed(), 300.0)?;
    Ok(format!(
        "train F1 {}; multi re-run identical; {:.0} s",
        parts.join(", "),
        start.elapsed().as_secs_f64()
    ))
}

fn c8_weighted_reduction() -> Outcome {
    let (data, vocab) = encode_all(&separable_corpus(4, 8), 200, 93);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        epochs: 3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    for mode in [TaskMode::Multi, TaskMode::StSatd, TaskMode::StVuln] {
        let cfg = ModelConfig {
            vocab_size: vocab,
            hidden: 32,
            layers: 2,
            heads: 2,
            max_len: 96,
            task_mode: mode,
            ..ModelConfig::default()
        };
        let (_, regular) = train(init_model(&cfg).unwrap(), &data, &data, &tc).map_err(|e| e.to_string())?;
        let weighted_tc = TrainConfig {
            weighted_loss: true,
            ..tc.clone()
        };
        let (_, weighted) = train(init_model(&cfg).unwrap(), &data, &data, &weighted_tc).map_err(|e| e.to_string())?;
        check(regular.rows.len() == weighted.rows.len(), || {
            "history lengths differ".into()
        })?;
        for (r, w) in regular.rows.iter().zip(&weighted.rows) {
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-6,
                (None, None) => true,
                _ => false,
            };
            check(
                (r.loss - w.loss).abs() <= 1e-6
                    && close(r.satd_f1, w.satd_f1)
                    && close(r.vuln_f1, w.vuln_f1)
                    && close(r.satd_precision, w.satd_precision)
                    && close(r.vuln_recall, w.vuln_recall),
                || format!("{mode} epoch {} {}: histories differ", r.epoch, r.split),
            )?;
        }
    }
    let imbalanced: Vec<bool> = synthetic_corpus([90, 10, 0, 0], 1)
        .iter()
        .map(|r| r.satd_label.unwrap())
        .collect();
    let w = class_weights(&imbalanced).map_err(|e| e.to_string())?;
    check(
        (w.negative - 0.5556).abs() <= 1e-4 && (w.positive - 5.0).abs() <= 1e-4,
        || format!("90/10 weights ({:.4}, {:.4})", w.negative, w.positive),
    )?;
    Ok(format!(
        "balanced histories identical for 3 modes; 90/10 weights ({:.4}, {:.4})",
        w.negative, w.positive
    ))
}

fn c9_efficiency() -> Outcome {
    let start = Instant::now();
    let records = separable_corpus(16, 9);
    let tc = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        ..TrainConfig::default()
    };
    let mut exp = Experiment::new("bench", &records, ModelConfig::default(), tc).map_err(|e| e.to_string())?;
    let report = benchmark_mt_vs_st(&mut exp, 3).map_err(|e| e.to_string())?;
    check(report.train_ratio < 0.7 && report.test_ratio < 0.7, || {
        report.to_string()
    })?;
    within(start.elapsed(), 600.0)?;
    Ok(report.to_string())
}

const LISTING_ONE_PLAIN: [&str; 3] = [
    "OR the bit field longword -wise.",
    "XOR the bitfield longword -wise.",
    "Replace the whole sigmask.",
];

fn c10_fixtures_and_metrics() -> Outcome {
    let source = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/listings.c"))
        .map_err(|e| e.to_string())?;
    let functions = extract_functions(&source).map_err(|e| e.to_string())?;
    check(functions.len() == 4, || {
        format!("{} functions extracted from the fixtures", functions.len())
    })?;
    let labeled = label_dataset(&functions, &Annotator::Mat).map_err(|e| e.to_string())?;
    for r in &labeled {
        check(r.satd_label == Some(true), || format!("{} not labeled SATD", r.id))?;
    }
    let (_, internal) = strip_internal_comments(&functions[0].code).map_err(|e| e.to_string())?;
    for plain in LISTING_ONE_PLAIN {
        check(internal.iter().any(|c| c == plain), || {
            format!("comment {plain:?} not found")
        })?;
        check(!annotate_mat(plain), || format!("{plain:?} labeled SATD"))?;
    }

    // Every (prediction, label) pair of vectors up to length 12, recounted
    // with bit operations.
    let mut p = [false; 12];
    let mut l = [false; 12];
    let mut vectors = 0u64;
    check(compute_metrics(&[], &[]).is_err(), || "empty vectors accepted".into())?;
    for n in 1..=12usize {
        let full = (1u32 << n) - 1;
        for pm in 0..=full {
            for (i, x) in p.iter_mut().enumerate().take(n) {
                *x = pm >> i & 1 == 1;
            }
            for lm in 0..=full {
                for (i, x) in l.iter_mut().enumerate().take(n) {
                    *x = lm >> i & 1 == 1;
                }
                let m = compute_metrics(&p[..n], &l[..n]).map_err(|e| e.to_string())?;
                let tp = (pm & lm).count_ones() as u64;
                let fp = (pm & !lm & full).count_ones() as u64;
                let fn_ = (!pm & lm & full).count_ones() as u64;
                let tn = n as u64 - tp - fp - fn_;
                let precision = if tp + fp == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fp) as f64
                };
                let recall = if tp + fn_ == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fn_) as f64
                };
                let f1 = if tp == 0 {
                    0.0
                } else {
                    2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
                };
                if (m.tp, m.fp, m.fn_, m.tn) != (tp, fp, fn_, tn)
                    || (m.precision - precision).abs() > 1e-12
                    || (m.recall - recall).abs() > 1e-12
                    || (m.f1 - f1).abs() > 1e-12
                {
                    return Err(format!("n = {n}, predictions {pm:b}, labels {lm:b}: {m:?}"));
                }
                vectors += 1;
            }
        }
    }
    Ok(format!(
        "4 fixture functions SATD, 3 plain comments not; {vectors} metric vector pairs recounted"
    ))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 10] = [
        (1, "chi-square on the Big-Vul contingency counts", c1_chi_square),
        (
            2,
            "F1 equals the harmonic mean of P and R in the reference tables",
            c2_f1_identity,
        ),
        (
            3,
            "reference delta columns follow from the F1 columns",
            c3_delta_bookkeeping,
        ),
        (4, "head-only truncation suite", c4_truncation),
        (5, "BPE merges match an exhaustive pair counter", c5_bpe_oracle),
        (6, "analytic gradients match finite differences", c6_grad_check),
        (7, "desk-scale models fit the separable corpus", c7_overfit),
        (
            8,
            "weighted loss reduces to regular loss on balanced data",
            c8_weighted_reduction,
        ),
        (
            9,
            "multi-task run costs less than the two single-task runs",
            c9_efficiency,
        ),
        (
            10,
            "annotation fixtures and exhaustive metric recount",
            c10_fixtures_and_metrics,
        ),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut unexpected = Vec::new();
    let mut passed = 0;
    let mut ran = 0;
    for (id, name, run) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS  criterion {id:>2}: {name} ({secs:.1} s)\n      {detail}");
            }
            Err(detail) => {
                let known = KNOWN_UNATTAINABLE.contains(&id);
                let tag = if known {
                    " [known: reference values disagree]"
                } else {
                    ""
                };
                println!("FAIL  criterion {id:>2}: {name}{tag} ({secs:.1} s)\n      {detail}");
                if !known {
                    unexpected.push(id);
                }
            }
        }
    }
    println!("acceptance: {passed}/{ran} criteria passed");
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
