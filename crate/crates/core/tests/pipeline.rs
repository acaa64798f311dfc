use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;

use chrono::{NaiveDate, TimeZone, Utc};
use proptest::prelude::*;
use pvseq::clickstream::{
    build_histories, parse_records, synthesize, ChoiceRule, HistoryWindow, PairHistory, SequenceDistribution,
    SynthConfig, TruthModel,
};
use pvseq::estimator::{empirical_rf_table, empirical_sequence_stats, fit_monotone, FitConfig};
use pvseq::evaluation::{chosen_items, evaluate_model, f1, top_n_select, Candidate, EvalConfig, SequenceModel};
use pvseq::io::write_histories_csv;
use pvseq::poset::construct_reduction;
use pvseq::sequence::{PvSequence, Relation, RfKey, SequenceSpace};

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

fn table_one() -> Vec<PairHistory> {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/table_one.csv");
    let parsed = parse_records(File::open(path).unwrap(), 0.0).unwrap();
    assert!(parsed.errors.is_empty());
    let window = HistoryWindow::new(date(2015, 4, 1), date(2015, 4, 3)).unwrap();
    assert_eq!(window.base_date(), date(2015, 4, 4));
    let space = SequenceSpace::new(3, 3).unwrap();
    build_histories(&parsed.records, &window, &space, &ChoiceRule::AnyEvent)
}

#[test]
fn table_one_sequences_and_recency_frequency() {
    let space = SequenceSpace::new(3, 3).unwrap();
    let histories = table_one();
    let expected = [
        ("u1", "i2", [1, 0, 1], (3, 2), false),
        ("u1", "i4", [0, 1, 0], (2, 1), true),
        ("u2", "i1", [0, 0, 3], (1, 3), false),
        ("u2", "i3", [3, 0, 0], (3, 3), true),
        ("u2", "i4", [1, 1, 1], (3, 3), false),
        ("u3", "i2", [1, 0, 2], (3, 3), false),
    ];
    assert_eq!(histories.len(), expected.len());
    for (h, (user, item, seq, (r, f), chosen)) in histories.iter().zip(expected) {
        assert_eq!((h.user_id.as_str(), h.item_id.as_str()), (user, item));
        assert_eq!(h.sequence, PvSequence::from(seq));
        assert_eq!(space.recency_frequency(&h.sequence).unwrap(), RfKey { r, f });
        assert_eq!(h.chosen, chosen);
    }
}

#[test]
fn table_one_empirical_probabilities() {
    let space = SequenceSpace::new(3, 3).unwrap();
    let histories = table_one();
    let grid = empirical_rf_table(histories.iter().map(|h| h.labeled()), space).unwrap();
    assert_eq!(grid.targets(), &[0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 3.0]);
    let stats = empirical_sequence_stats(histories.iter().map(|h| h.labeled()), space).unwrap();
    for h in &histories {
        let r = space.rank(&h.sequence).unwrap().get();
        assert_eq!(stats.targets()[r], if h.chosen { 1.0 } else { 0.0 });
        assert_eq!(stats.weights()[r], 1.0);
    }
    assert_eq!(stats.total_weight(), 6.0);
}

fn synth_config(truth: TruthModel, users: usize, seed: u64) -> SynthConfig {
    SynthConfig {
        truth,
        relation: Relation::UpMove,
        users,
        items_per_user: 10,
        distribution: SequenceDistribution::default(),
        base_date: date(2015, 8, 19),
        seed,
    }
}

#[test]
fn empirical_ratios_converge_to_the_truth() {
    let space = SequenceSpace::new(3, 2).unwrap();
    let synthetic = synthesize(&space, &synth_config(TruthModel::Linear, 100_000, 42)).unwrap();
    assert_eq!(synthetic.histories.len(), 1_000_000);
    let stats = empirical_sequence_stats(synthetic.histories.iter().map(|h| h.labeled()), space).unwrap();
    let sse: f64 = (0..space.cardinality())
        .map(|i| stats.weights()[i] * (stats.targets()[i] - synthetic.truth[i]).powi(2))
        .sum();
    let rmse = (sse / stats.total_weight()).sqrt();
    assert!(rmse < 0.02, "rmse {rmse}");
}

#[test]
fn generation_is_deterministic() {
    let space = SequenceSpace::new(4, 2).unwrap();
    let cfg = synth_config(TruthModel::Recency { cap: 0.4, rate: 0.5 }, 300, 8);
    let render = |h: &[PairHistory]| {
        let mut buf = Vec::new();
        write_histories_csv(h, 4, &mut buf).unwrap();
        buf
    };
    let a = synthesize(&space, &cfg).unwrap();
    let b = synthesize(&space, &cfg).unwrap();
    assert_eq!(render(&a.histories), render(&b.histories));
    assert_eq!(a.truth, b.truth);
}

#[test]
fn hand_scored_f1() {
    let set = |items: &[&str]| items.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let s = f1(&set(&["a", "b", "c"]), &set(&["a", "b", "x", "y", "z"])).unwrap();
    assert!((s.recall - 0.4).abs() < 1e-15);
    assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((s.f1 - 0.5).abs() < 1e-15);
    assert_eq!(f1(&set(&["a"]), &set(&["b"])).unwrap().f1, 0.0);
}

#[test]
fn fitted_and_empirical_agree_on_monotone_data() {
    let space = SequenceSpace::new(3, 2).unwrap();
    let g = construct_reduction(space, Relation::UpMove).unwrap();
    let truth: Vec<f64> = space.iter().map(|v| v.total() as f64 / 6.0).collect();
    let weights = vec![4.0; space.cardinality()];
    let choices: Vec<f64> = truth.iter().map(|t| (t * 4.0).round()).collect();
    let stats = pvseq::estimator::EmpiricalStats::from_counts(space, weights, choices).unwrap();
    let fit = fit_monotone(&g, &stats, &FitConfig::default()).unwrap();
    assert_eq!(fit.x, stats.targets());

    let histories = synthesize(&space, &synth_config(TruthModel::Linear, 200, 1))
        .unwrap()
        .histories;
    let viewed = chosen_items(&histories);
    let cfg = EvalConfig::default();
    let a = evaluate_model(&SequenceModel::new(space, fit.x).unwrap(), &histories, &viewed, &cfg).unwrap();
    let b = evaluate_model(
        &SequenceModel::new(space, stats.targets().to_vec()).unwrap(),
        &histories,
        &viewed,
        &cfg,
    )
    .unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_user_perfect_prediction() {
    let space = SequenceSpace::new(2, 1).unwrap();
    let t = Utc.with_ymd_and_hms(2015, 4, 3, 0, 0, 0).unwrap();
    let h = |item: &str, v: [u32; 2], chosen| PairHistory {
        user_id: "u".into(),
        item_id: item.into(),
        sequence: PvSequence::from(v),
        chosen,
        last_view: t,
    };
    let histories = vec![
        h("a", [1, 1], true),
        h("b", [0, 1], false),
        h("c", [1, 0], true),
        h("d", [0, 1], false),
    ];
    let model = SequenceModel::new(space, vec![0.0, 0.1, 0.5, 0.9]).unwrap();
    let cfg = EvalConfig {
        top_n: 2,
        ..EvalConfig::default()
    };
    let metrics = evaluate_model(&model, &histories, &chosen_items(&histories), &cfg).unwrap();
    assert_eq!((metrics.users_evaluated, metrics.mean_f1), (1, 1.0));

    let mut viewed = BTreeMap::new();
    viewed.insert("u".to_string(), ["a", "z"].iter().map(|s| s.to_string()).collect());
    let metrics = evaluate_model(&model, &histories, &viewed, &cfg).unwrap();
    assert_eq!(metrics.mean_recall, 0.5);
    assert_eq!(metrics.mean_precision, 0.5);
}

fn candidates() -> impl Strategy<Value = Vec<Candidate>> {
    prop::collection::vec((0u8..10, 0i64..5), 1..15).prop_map(|raw| {
        raw.into_iter()
            .enumerate()
            .map(|(i, (p, day))| Candidate {
                item_id: format!("i{i:02}"),
                probability: f64::from(p) / 10.0,
                last_view: Utc.with_ymd_and_hms(2015, 4, 1, 0, 0, 0).unwrap() + chrono::Duration::days(day),
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn selection_ignores_increasing_transforms(c in candidates(), n in 1usize..6) {
        let transformed: Vec<Candidate> = c
            .iter()
            .map(|x| Candidate { probability: (3.0 * x.probability).exp() - 7.0, ..x.clone() })
            .collect();
        prop_assert_eq!(top_n_select(&c, n).unwrap(), top_n_select(&transformed, n).unwrap());
        prop_assert_eq!(top_n_select(&c, n).unwrap().len(), n.min(c.len()));
    }

    #[test]
    fn f1_is_bounded_and_exact_only_on_equality(
        sel in prop::collection::btree_set(0u8..8, 0..6),
        view in prop::collection::btree_set(0u8..8, 1..6),
    ) {
        let to_set = |s: &BTreeSet<u8>| s.iter().map(|i| i.to_string()).collect::<BTreeSet<_>>();
        let score = f1(&to_set(&sel), &to_set(&view)).unwrap();
        prop_assert!((0.0..=1.0).contains(&score.f1));
        prop_assert_eq!(score.f1 == 1.0, sel == view);
    }
}
