use super::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels_from(rows: &[&[u8]]) -> Vec<MultiHotLabels> {
    rows.iter()
        .map(|r| MultiHotLabels {
            bits: r.iter().map(|b| *b == 1).collect(),
        })
        .collect()
}

fn matrix(rows: &[&[f64]]) -> ScoreMatrix {
    let n_classes = rows[0].len();
    let ids = (0..rows.len()).map(|i| format!("t{i}")).collect();
    ScoreMatrix::new(ids, n_classes, rows.concat()).unwrap()
}

// Exhaustive pair counting.
fn roc_oracle(s: &[f64], l: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..s.len() {
        for j in 0..s.len() {
            if l[i] && !l[j] {
                den += 1.0;
                if s[i] > s[j] {
                    num += 1.0;
                } else if s[i] == s[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / den
}

// Threshold at every distinct score, predicate `s >= t`.
fn ap_oracle(s: &[f64], l: &[bool]) -> f64 {
    let mut ts: Vec<f64> = s.to_vec();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let p = l.iter().filter(|x| **x).count() as f64;
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for t in ts {
        let tp = s.iter().zip(l).filter(|(v, y)| **v >= t && **y).count() as f64;
        let pred = s.iter().filter(|v| **v >= t).count() as f64;
        let r = tp / p;
        ap += (r - prev_r) * tp / pred;
        prev_r = r;
    }
    ap
}

fn f1_at(s: &[f64], l: &[bool], t: f64) -> f64 {
    let tp = s.iter().zip(l).filter(|(v, y)| **v >= t && **y).count();
    let fp = s.iter().zip(l).filter(|(v, y)| **v >= t && !**y).count();
    let fn_ = s.iter().zip(l).filter(|(v, y)| **v < t && **y).count();
    if tp == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn random_instance(rng: &mut ChaCha8Rng, n: usize, c: usize) -> (ScoreMatrix, Vec<MultiHotLabels>) {
    loop {
        // Coarse grid so ties occur.
        let scores: Vec<f64> = (0..n * c).map(|_| rng.random_range(0..8) as f64 / 8.0).collect();
        let labels: Vec<MultiHotLabels> = (0..n)
            .map(|_| MultiHotLabels {
                bits: (0..c).map(|_| rng.random_bool(0.4)).collect(),
            })
            .collect();
        let ok = (0..c).all(|k| {
            let pos = labels.iter().filter(|l| l.bits[k]).count();
            pos > 0 && pos < n
        });
        if ok {
            let ids = (0..n).map(|i| format!("t{i}")).collect();
            return (ScoreMatrix::new(ids, c, scores).unwrap(), labels);
        }
    }
}

#[test]
fn perfect_scores_give_one() {
    let l = labels_from(&[&[1, 0], &[0, 1], &[1, 1], &[0, 0]]);
    let s = matrix(&[&[1.0, 0.0], &[0.0, 1.0], &[1.0, 1.0], &[0.0, 0.0]]);
    for avg in [Averaging::Macro, Averaging::Micro] {
        assert_eq!(roc_auc(&s, &l, avg).unwrap().value, 1.0);
        assert_eq!(pr_auc(&s, &l, avg).unwrap().value, 1.0);
        assert_eq!(f1(&s, &l, &[0.5, 0.5], avg).unwrap().value, 1.0);
    }
    let r = metric_report(&s, &l, &[0.5, 0.5]).unwrap();
    assert_eq!(r.values(), [1.0; 6]);
}

#[test]
fn inverted_pair_gives_zero() {
    let s = matrix(&[&[0.9], &[0.1]]);
    let l = labels_from(&[&[0], &[1]]);
    assert_eq!(roc_auc(&s, &l, Averaging::Macro).unwrap().value, 0.0);
}

#[test]
fn random_instances_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let (s, l) = random_instance(&mut rng, 6, 3);
        let mut roc_sum = 0.0;
        let mut ap_sum = 0.0;
        for c in 0..3 {
            let lc: Vec<bool> = l.iter().map(|x| x.bits[c]).collect();
            roc_sum += roc_oracle(&s.column(c), &lc);
            ap_sum += ap_oracle(&s.column(c), &lc);
        }
        let roc = roc_auc(&s, &l, Averaging::Macro).unwrap().value;
        let ap = pr_auc(&s, &l, Averaging::Macro).unwrap().value;
        assert!((roc - roc_sum / 3.0).abs() < 1e-9);
        assert!((ap - ap_sum / 3.0).abs() < 1e-9);

        let flat: Vec<bool> = l.iter().flat_map(|x| x.bits.clone()).collect();
        let roc_mi = roc_auc(&s, &l, Averaging::Micro).unwrap().value;
        let ap_mi = pr_auc(&s, &l, Averaging::Micro).unwrap().value;
        assert!((roc_mi - roc_oracle(&s.scores, &flat)).abs() < 1e-9);
        assert!((ap_mi - ap_oracle(&s.scores, &flat)).abs() < 1e-9);
    }
}

#[test]
fn constant_scores_pr_equals_prevalence() {
    let s = matrix(&[&[0.4], &[0.4], &[0.4], &[0.4], &[0.4], &[0.4], &[0.4]]);
    let l = labels_from(&[&[1], &[0], &[0], &[1], &[0], &[1], &[0]]);
    let v = pr_auc(&s, &l, Averaging::Macro).unwrap().value;
    assert!((v - 3.0 / 7.0).abs() < 1e-12);
}

#[test]
fn degenerate_class_excluded_and_reported() {
    let s = matrix(&[&[0.9, 0.2], &[0.1, 0.3]]);
    let l = labels_from(&[&[1, 0], &[0, 0]]);
    let roc = roc_auc(&s, &l, Averaging::Macro).unwrap();
    assert_eq!(roc.value, 1.0);
    assert_eq!(roc.excluded_classes, vec![1]);
    let pr = pr_auc(&s, &l, Averaging::Macro).unwrap();
    assert_eq!(pr.excluded_classes, vec![1]);
    assert!(roc_auc(&s, &labels_from(&[&[0, 0], &[0, 0]]), Averaging::Micro).is_err());
    assert!(pr_auc(&s, &labels_from(&[&[0, 0], &[0, 0]]), Averaging::Micro).is_err());
}

#[test]
fn threshold_midpoint_and_fallback() {
    let s = matrix(&[&[0.9, 0.3], &[0.1, 0.7]]);
    let l = labels_from(&[&[1, 0], &[0, 0]]);
    let t = select_thresholds(&s, &l).unwrap();
    assert!((t.values[0] - 0.5).abs() < 1e-12);
    assert_eq!(t.values[1], 0.5);
    assert_eq!(t.fallback_classes, vec![1]);
    let empty = ScoreMatrix::new(vec![], 2, vec![]).unwrap();
    assert!(select_thresholds(&empty, &[]).is_err());
}

#[test]
fn thresholds_reach_exhaustive_best_f1() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let (s, l) = random_instance(&mut rng, 8, 2);
        let t = select_thresholds(&s, &l).unwrap();
        for c in 0..2 {
            let col = s.column(c);
            let lc: Vec<bool> = l.iter().map(|x| x.bits[c]).collect();
            let best = col
                .iter()
                .chain(std::iter::once(&2.0))
                .map(|th| f1_at(&col, &lc, *th))
                .fold(0.0, f64::max);
            assert!(f1_at(&col, &lc, t.values[c]) >= best - 1e-12);
        }
    }
}

#[test]
fn f1_hand_cases() {
    // Pooled TP=2, FP=1, FN=1.
    let s = matrix(&[&[0.9, 0.9], &[0.9, 0.1], &[0.1, 0.1], &[0.1, 0.1]]);
    let l = labels_from(&[&[1, 1], &[0, 0], &[0, 1], &[0, 0]]);
    let v = f1(&s, &l, &[0.5, 0.5], Averaging::Micro).unwrap().value;
    assert!((v - 2.0 / 3.0).abs() < 1e-12);

    let none = f1(&s, &l, &[1.0, 1.0], Averaging::Macro).unwrap();
    assert_eq!(none.value, 0.0);
    assert_eq!(f1(&s, &l, &[1.0, 1.0], Averaging::Micro).unwrap().value, 0.0);

    // Class 1 has neither predictions nor positives.
    let s2 = matrix(&[&[0.9, 0.1], &[0.1, 0.1]]);
    let l2 = labels_from(&[&[1, 0], &[0, 0]]);
    let d = f1(&s2, &l2, &[0.5, 0.5], Averaging::Macro).unwrap();
    assert_eq!(d.value, 0.5);
    assert_eq!(d.excluded_classes, vec![1]);
}

#[test]
fn report_round_trips_and_renders_table_row() {
    let r = MetricReport::from_values([0.064, 0.134, 0.125, 0.148, 0.745, 0.794], vec![0.5; 56], 4231);
    assert_eq!(r.csv_row("Mood/theme"), "Mood/theme,0.064,0.134,0.125,0.148,0.745,0.794");
    assert_eq!(
        MetricReport::csv_header(),
        "model,f1_macro,f1_micro,prauc_macro,prauc_micro,rocauc_macro,rocauc_micro"
    );
    let back = MetricReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
}

#[test]
fn confusion_cases() {
    let id = confusion(&[0, 1, 2, 3], &[0, 1, 2, 3], 4).unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert_eq!(id.normalized[i][j], if i == j { 1.0 } else { 0.0 });
        }
    }
    assert!(id.empty_rows.is_empty());

    let m = confusion(&[0, 0, 1, 2, 2, 2], &[0, 0, 0, 2, 2, 1], 4).unwrap();
    // Manual tally.
    assert_eq!(m.counts[0], vec![2, 1, 0, 0]);
    assert_eq!(m.counts[1], vec![0, 0, 1, 0]);
    assert_eq!(m.counts[2], vec![0, 0, 2, 0]);
    assert_eq!(m.empty_rows, vec![3]);
    assert_eq!(m.normalized[3], vec![0.0; 4]);
    assert!((m.normalized[0][0] - 2.0 / 3.0).abs() < 1e-12);
    assert!(confusion(&[4], &[0], 4).is_err());
}

#[test]
fn permuted_labels_average_half() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 40;
    let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let mut labels: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let mut sum = 0.0;
    for _ in 0..1000 {
        labels.shuffle(&mut rng);
        sum += binary_roc_auc(&scores, &labels).unwrap();
    }
    assert!((sum / 1000.0 - 0.5).abs() <= 0.05);
}

fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<bool>, usize)> {
    (4usize..12, 1usize..4).prop_flat_map(|(n, c)| {
        (
            prop::collection::vec(0u8..10, n * c).prop_map(|v| v.into_iter().map(|x| x as f64 / 10.0).collect()),
            prop::collection::vec(any::<bool>(), n * c),
            Just(c),
        )
    })
}

fn build(scores: Vec<f64>, bits: Vec<bool>, c: usize) -> (ScoreMatrix, Vec<MultiHotLabels>) {
    let n = scores.len() / c;
    let labels = bits.chunks(c).map(|b| MultiHotLabels { bits: b.to_vec() }).collect();
    (ScoreMatrix::new((0..n).map(|i| format!("t{i}")).collect(), c, scores).unwrap(), labels)
}

proptest! {
    #[test]
    fn monotone_transform_preserves_rankings((s, b, c) in instance()) {
        let (m, l) = build(s.clone(), b, c);
        let (m2, _) = build(s.iter().map(|x| x * x * 0.5 + 0.1).collect(), vec![false; s.len()], c);
        for avg in [Averaging::Macro, Averaging::Micro] {
            if let (Ok(a), Ok(b)) = (roc_auc(&m, &l, avg), roc_auc(&m2, &l, avg)) {
                prop_assert!((a.value - b.value).abs() < 1e-12);
            }
            if let (Ok(a), Ok(b)) = (pr_auc(&m, &l, avg), pr_auc(&m2, &l, avg)) {
                prop_assert!((a.value - b.value).abs() < 1e-12);
            }
        }
        let t1 = select_thresholds(&m, &l).unwrap();
        let t2 = select_thresholds(&m2, &l).unwrap();
        let f_a = f1(&m, &l, &t1.values, Averaging::Macro).unwrap().value;
        let f_b = f1(&m2, &l, &t2.values, Averaging::Macro).unwrap().value;
        prop_assert!((f_a - f_b).abs() < 1e-12);
    }

    #[test]
    fn values_in_unit_interval((s, b, c) in instance()) {
        let (m, l) = build(s, b, c);
        for avg in [Averaging::Macro, Averaging::Micro] {
            for v in [roc_auc(&m, &l, avg), pr_auc(&m, &l, avg)].into_iter().flatten() {
                prop_assert!((0.0..=1.0).contains(&v.value));
            }
            let v = f1(&m, &l, &vec![0.5; c], avg).unwrap().value;
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn macro_invariant_under_class_reorder((s, b, c) in instance()) {
        let (m, l) = build(s.clone(), b.clone(), c);
        let n = s.len() / c;
        let rev = |v: &Vec<f64>| -> Vec<f64> { (0..n).flat_map(|i| (0..c).rev().map(move |k| (i, k))).map(|(i, k)| v[i * c + k]).collect() };
        let rs = rev(&s);
        let rb: Vec<bool> = (0..n).flat_map(|i| (0..c).rev().map(move |k| (i, k))).map(|(i, k)| b[i * c + k]).collect();
        let (m2, l2) = build(rs, rb, c);
        if let (Ok(a), Ok(b)) = (roc_auc(&m, &l, Averaging::Macro), roc_auc(&m2, &l2, Averaging::Macro)) {
            prop_assert!((a.value - b.value).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (pr_auc(&m, &l, Averaging::Macro), pr_auc(&m2, &l2, Averaging::Macro)) {
            prop_assert!((a.value - b.value).abs() < 1e-12);
        }
    }

    #[test]
    fn micro_invariant_under_track_reorder((s, b, c) in instance()) {
        let (m, l) = build(s.clone(), b.clone(), c);
        let rs: Vec<f64> = s.chunks(c).rev().flatten().copied().collect();
        let rb: Vec<bool> = b.chunks(c).rev().flatten().copied().collect();
        let (m2, l2) = build(rs, rb, c);
        if let (Ok(a), Ok(b)) = (roc_auc(&m, &l, Averaging::Micro), roc_auc(&m2, &l2, Averaging::Micro)) {
            prop_assert!((a.value - b.value).abs() < 1e-12);
        }
        if let (Ok(a), Ok(b)) = (pr_auc(&m, &l, Averaging::Micro), pr_auc(&m2, &l2, Averaging::Micro)) {
            prop_assert!((a.value - b.value).abs() < 1e-12);
        }
        let fa = f1(&m, &l, &vec![0.5; c], Averaging::Micro).unwrap().value;
        let fb = f1(&m2, &l2, &vec![0.5; c], Averaging::Micro).unwrap().value;
        prop_assert!((fa - fb).abs() < 1e-12);
    }

    #[test]
    fn perfect_ranking_pr_at_least_prevalence(b in prop::collection::vec(any::<bool>(), 2..20)) {
        prop_assume!(b.iter().any(|x| *x));
        let s: Vec<f64> = b.iter().map(|x| if *x { 0.8 } else { 0.2 }).collect();
        let prev = b.iter().filter(|x| **x).count() as f64 / b.len() as f64;
        prop_assert!(average_precision(&s, &b).unwrap() >= prev);
    }
}
