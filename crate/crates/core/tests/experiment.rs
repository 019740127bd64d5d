use std::collections::BTreeSet;

use proptest::prelude::*;
use satd_vuln::corpus::{prepare_input, InputMode};
use satd_vuln::experiment::synthetic::{separable_corpus, synthetic_corpus};
use satd_vuln::experiment::{
    build_report, compute_metrics, f1_score, split, stratified_split, Approach, DeltaKind, Experiment, LossMode,
    ReportRow,
};
use satd_vuln::model::{class_weights, init_model, train, LabeledPair, ModelConfig, TaskLabels, TaskMode, TrainConfig};
use satd_vuln::tokenizer::{build_model_input, train_bpe};
use satd_vuln::Error;

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn metrics_match_a_direct_count(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let m = compute_metrics(&p, &l).unwrap();
        let count = |pp: bool, ll: bool| pairs.iter().filter(|&&x| x == (pp, ll)).count() as u64;
        prop_assert_eq!((m.tp, m.fp, m.fn_, m.tn), (count(true, true), count(true, false), count(false, true), count(false, false)));
        prop_assert_eq!(m.total() as usize, pairs.len());
        prop_assert!((0.0..=1.0).contains(&m.f1));
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-15);
        prop_assert!(m.f1 >= m.precision.min(m.recall) - 1e-15 || m.f1 == 0.0);
    }

    // Swapping predictions and labels swaps precision and recall; F1 is symmetric.
    #[test]
    fn label_swap_symmetry(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..40)) {
        let (p, l): (Vec<bool>, Vec<bool>) = pairs.iter().copied().unzip();
        let a = compute_metrics(&p, &l).unwrap();
        let b = compute_metrics(&l, &p).unwrap();
        prop_assert_eq!(a.precision, b.recall);
        prop_assert_eq!(a.recall, b.precision);
        prop_assert!((a.f1 - b.f1).abs() < 1e-15);
    }

    #[test]
    fn deltas_are_differences_of_f1(f1s in prop::collection::vec(0.0f64..1.0, 16)) {
        let mut rows = Vec::new();
        let mut i = 0;
        for input in [InputMode::Out, InputMode::In] {
            for loss in [LossMode::Regular, LossMode::Weighted] {
                for a in Approach::ALL {
                    rows.push(ReportRow::new(a, loss, input, 0.5, 0.5, f1s[i]));
                    i += 1;
                }
            }
        }
        let report = build_report("d", &rows).unwrap();
        let f1 = |a, l, i| report.row(a, l, i).unwrap().f1;
        for input in [InputMode::Out, InputMode::In] {
            for loss in [LossMode::Regular, LossMode::Weighted] {
                for a in Approach::ALL {
                    let mt = report.delta(DeltaKind::MultiVsSingle, a, loss, input);
                    prop_assert_eq!(mt.is_some(), a.is_multi());
                    if let Some(d) = mt {
                        prop_assert_eq!(d.value, f1(a, loss, input) - f1(a.single(), loss, input));
                    }
                    let w = report.delta(DeltaKind::WeightedVsRegular, a, loss, input);
                    prop_assert_eq!(w.is_some(), loss == LossMode::Weighted);
                    if let Some(d) = w {
                        prop_assert_eq!(d.value, f1(a, loss, input) - f1(a, LossMode::Regular, input));
                    }
                    let o = report.delta(DeltaKind::OutVsIn, a, loss, input);
                    prop_assert_eq!(o.is_some(), input == InputMode::In);
                    if let Some(d) = o {
                        prop_assert_eq!(d.value, f1(a, loss, InputMode::Out) - f1(a, loss, input));
                    }
                }
            }
        }
        prop_assert_eq!(report.deltas.len(), 8 + 8 + 8);
    }

    #[test]
    fn split_is_a_partition(n in 10usize..200, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let (a, b, c) = split(&items, (0.8, 0.1, 0.1), seed).unwrap();
        prop_assert_eq!(a.len(), (n as f64 * 0.8).round() as usize);
        prop_assert_eq!(b.len(), (n as f64 * 0.1).round() as usize);
        let all: BTreeSet<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!((a.clone(), b.clone(), c.clone()), split(&items, (0.8, 0.1, 0.1), seed).unwrap());
    }

    #[test]
    fn stratified_split_keeps_every_stratum(n in 40usize..200, seed in any::<u64>()) {
        let items: Vec<usize> = (0..n).collect();
        let (a, b, c) = stratified_split(&items, (0.6, 0.2, 0.2), seed, |x| x % 4).unwrap();
        prop_assert_eq!(a.len() + b.len() + c.len(), n);
        for part in [&a, &b, &c] {
            let keys: BTreeSet<usize> = part.iter().map(|x| x % 4).collect();
            prop_assert_eq!(keys.len(), 4);
        }
    }
}

#[test]
fn f1_is_the_harmonic_mean() {
    assert_eq!(f1_score(0.0, 0.0), 0.0);
    assert!((f1_score(0.5, 1.0) - 2.0 / 3.0).abs() < 1e-15);
    let m = compute_metrics(&[false, false], &[false, false]).unwrap();
    assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
    assert!(matches!(
        compute_metrics(&[true], &[]),
        Err(Error::LengthMismatch { .. })
    ));
    assert!(compute_metrics(&[], &[]).is_err());
}

#[test]
fn report_needs_baselines() {
    let mt = ReportRow::new(Approach::MtSatd, LossMode::Regular, InputMode::Out, 0.9, 0.9, 0.9);
    assert!(matches!(build_report("d", &[mt.clone()]), Err(Error::MissingCell(_))));
    assert!(build_report("d", &[mt.clone(), mt]).is_err());
    let r = ReportRow::new(Approach::MtSatd, LossMode::Regular, InputMode::Out, 0.8, 0.8, 0.8);
    let s = ReportRow::new(Approach::StSatd, LossMode::Regular, InputMode::Out, 0.7, 0.7, 0.767);
    let report = build_report("d", &[r, s]).unwrap();
    let d = report
        .delta(
            DeltaKind::MultiVsSingle,
            Approach::MtSatd,
            LossMode::Regular,
            InputMode::Out,
        )
        .unwrap();
    assert_eq!(d.to_string(), "▲ 0.033");
    assert_eq!(report.records().len(), 2);
    assert!(report.render().contains("MT_SATD"));
}

#[test]
fn approach_names_round_trip() {
    for a in Approach::ALL {
        assert_eq!(a.to_string().parse::<Approach>().unwrap(), a);
    }
}

#[test]
fn ninety_ten_class_weights() {
    let labels: Vec<bool> = (0..1000).map(|i| i % 10 == 0).collect();
    let w = class_weights(&labels).unwrap();
    assert!((w.negative - 0.5556).abs() < 1e-4);
    assert!((w.positive - 5.0).abs() < 1e-4);
    let balanced = class_weights(&[true, false, false, true]).unwrap();
    assert_eq!((balanced.negative, balanced.positive), (1.0, 1.0));
    assert!(matches!(class_weights(&[true, true]), Err(Error::SingleClass(_))));
}

fn small_config() -> (ModelConfig, TrainConfig) {
    let model = ModelConfig {
        vocab_size: 160,
        hidden: 16,
        layers: 1,
        heads: 2,
        max_len: 96,
        dropout: 0.1,
        task_mode: TaskMode::Multi,
        seed: 3,
    };
    let tc = TrainConfig {
        learning_rate: 1e-3,
        epochs: 2,
        batch_size: 8,
        seed: 4,
        ..Default::default()
    };
    (model, tc)
}

#[test]
fn balanced_data_makes_weighting_a_no_op() {
    let records = separable_corpus(4, 8);
    let prepared: Vec<_> = records
        .iter()
        .map(|r| prepare_input(r, InputMode::Out).unwrap())
        .collect();
    let tok = train_bpe(&prepared, 160).unwrap();
    let data: Vec<LabeledPair> = records
        .iter()
        .zip(&prepared)
        .map(|(r, p)| LabeledPair {
            pair: build_model_input(&tok, p, 93),
            labels: TaskLabels {
                satd: r.satd_label,
                vuln: r.vuln_label,
            },
        })
        .collect();
    let (mut model, tc) = small_config();
    model.vocab_size = tok.vocab_size();
    for mode in [TaskMode::Multi, TaskMode::StSatd] {
        model.task_mode = mode;
        let regular = train(init_model(&model).unwrap(), &data, &data, &tc).unwrap();
        let weighted_tc = TrainConfig {
            weighted_loss: true,
            ..tc.clone()
        };
        let weighted = train(init_model(&model).unwrap(), &data, &data, &weighted_tc).unwrap();
        for (r, w) in regular.1.rows.iter().zip(&weighted.1.rows) {
            assert!((r.loss - w.loss).abs() < 1e-6);
            assert_eq!(r.satd_f1, w.satd_f1);
            assert_eq!(r.vuln_f1, w.vuln_f1);
        }
    }
}

#[test]
fn cells_share_one_split_and_repeat_exactly() {
    let records = synthetic_corpus([12, 4, 6, 2], 5);
    let (model, tc) = small_config();
    let mut exp = Experiment::new("syn", &records, model.clone(), tc.clone()).unwrap();
    assert_eq!(exp.split_sizes(), (19, 2, 3));
    let a = exp
        .run_cell(TaskMode::Multi, LossMode::Regular, InputMode::Out)
        .unwrap();
    let b = exp
        .run_cell(TaskMode::Multi, LossMode::Regular, InputMode::Out)
        .unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.rows().len(), 2);
    let st = exp
        .run_cell(TaskMode::StVuln, LossMode::Weighted, InputMode::In)
        .unwrap();
    assert_eq!(st.metrics.len(), 1);
    assert_eq!(st.metrics[0].0, Approach::StVuln);

    let mut unlabeled = records.clone();
    unlabeled[0].vuln_label = None;
    let exp2 = Experiment::new("syn", &unlabeled, model, tc).unwrap();
    assert_eq!(exp2.excluded_unlabeled, 1);
}
