use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

/// Wilson bounds as the roots of `(p̂ − p)² = z² p (1 − p) / n`.
fn wilson_by_quadratic(p_hat: f64, n: f64, z: f64) -> (f64, f64) {
    let a = 1.0 + z * z / n;
    let b = -(2.0 * p_hat + z * z / n);
    let c = p_hat * p_hat;
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    ((-b - disc) / (2.0 * a), (-b + disc) / (2.0 * a))
}

fn auc_by_pairs(scores: &[f64], labels: &[bool]) -> f64 {
    let mut credit = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                credit += 1.0;
            } else if scores[i] == scores[j] {
                credit += 0.5;
            }
        }
    }
    credit / pairs
}

#[test]
fn exact_precision_cases() {
    assert_eq!(exact_mechanism_precision(&[(1, 1), (2, 2)]).unwrap(), 1.0);
    assert_eq!(
        exact_mechanism_precision(&[(1, 1), (2, 2), (3, 0), (5, 5)]).unwrap(),
        0.75
    );
    assert!(matches!(exact_mechanism_precision(&[]), Err(Error::UndefinedMetric(_))));
}

#[test]
fn random_guessing_hits_one_over_r() {
    let mut rng = ChaCha8Rng::seed_from_u64(86);
    let n = 200_000;
    let pairs: Vec<(u32, u32)> = (0..n)
        .map(|_| (rng.random_range(0..86), rng.random_range(0..86)))
        .collect();
    let p = exact_mechanism_precision(&pairs).unwrap();
    let chance = 1.0 / 86.0;
    let sd = (chance * (1.0 - chance) / n as f64).sqrt();
    assert!((p - chance).abs() < 4.0 * sd, "{p}");
}

#[test]
fn binary_prf_cases() {
    let one = binary_prf(1, 0, 0).unwrap();
    assert_eq!((one.precision, one.recall, one.f1), (1.0, 1.0, 1.0));
    let half = binary_prf(1, 1, 1).unwrap();
    assert_eq!((half.precision, half.recall, half.f1), (0.5, 0.5, 0.5));
    let zero = binary_prf(0, 5, 5).unwrap();
    assert_eq!((zero.precision, zero.recall, zero.f1), (0.0, 0.0, 0.0));
    let lopsided = binary_prf(3, 1, 9).unwrap();
    assert!((lopsided.f1 - 2.0 * 0.75 * 0.25 / 1.0).abs() < 1e-15);
    assert!(binary_prf(0, 0, 0).is_err());
}

#[test]
fn wilson_reference_values() {
    let (lo, hi) = wilson_ci(0.5, 100, Z_95).unwrap();
    assert!((lo - 0.4038).abs() < 5e-5 && (hi - 0.5962).abs() < 5e-5, "{lo} {hi}");

    // single success: the score interval's lower bound is 1 / (1 + z²)
    let (lo, hi) = wilson_ci(1.0, 1, Z_95).unwrap();
    assert_eq!(hi, 1.0);
    assert!((lo - 1.0 / (1.0 + Z_95 * Z_95)).abs() < 1e-12, "{lo}");

    let (lo, hi) = wilson_ci(0.0, 10_000_000, Z_95).unwrap();
    assert_eq!(lo, 0.0);
    assert!(hi < 1e-6);
    assert!(wilson_ci(0.5, 0, Z_95).is_err());
    assert!(wilson_ci(1.2, 10, Z_95).is_err());
}

#[test]
fn wilson_matches_quadratic_roots() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..5000usize);
        let p = rng.random_range(0..=n) as f64 / n as f64;
        let (lo, hi) = wilson_ci(p, n, Z_95).unwrap();
        let (qlo, qhi) = wilson_by_quadratic(p, n as f64, Z_95);
        assert!((lo - qlo).abs() < 1e-10 && (hi - qhi).abs() < 1e-10, "p {p} n {n}");
    }
}

#[test]
fn bootstrap_basics() {
    let (lo, hi) = bootstrap_ci(&[0.7; 50], 200, 1).unwrap();
    assert_eq!(lo, hi);
    assert!((lo - 0.7).abs() < 1e-12);
    let vals: Vec<f64> = (0..40).map(|i| (i % 3) as f64).collect();
    assert_eq!(bootstrap_ci(&vals, 500, 9).unwrap(), bootstrap_ci(&vals, 500, 9).unwrap());
    assert!(bootstrap_ci(&[], 500, 9).is_err());
    assert!(bootstrap_ci(&vals, 50, 9).is_err());
}

#[test]
fn bootstrap_covers_true_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut covered = 0;
    for trial in 0..100 {
        let sample: Vec<f64> = (0..1000)
            .map(|_| if rng.random_bool(0.7) { 1.0 } else { 0.0 })
            .collect();
        let (lo, hi) = bootstrap_ci(&sample, 1000, trial).unwrap();
        if lo <= 0.7 && 0.7 <= hi {
            covered += 1;
        }
    }
    assert!(covered >= 93, "{covered}/100");
}

#[test]
fn roc_auc_cases() {
    assert_eq!(roc_auc(&[0.9, 0.8, 0.1, 0.2], &[true, true, false, false]).unwrap(), 1.0);
    assert_eq!(roc_auc(&[0.1, 0.2, 0.9], &[true, true, false]).unwrap(), 0.0);
    assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    let scores = [0.9, 0.7, 0.7, 0.4, 0.3, 0.1];
    let labels = [true, false, true, true, false, false];
    let auc = roc_auc(&scores, &labels).unwrap();
    assert!((auc - auc_by_pairs(&scores, &labels)).abs() < 1e-12);
    assert!((auc - 7.5 / 9.0).abs() < 1e-12);
    assert!(roc_auc(&[1.0, 2.0], &[true, true]).is_err());
}

#[test]
fn roc_auc_matches_enumeration_on_random_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let n = rng.random_range(2..=200usize);
        // coarse scores so ties occur
        let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..20) as f64 / 4.0).collect();
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        labels[0] = true;
        labels[1] = false;
        let auc = roc_auc(&scores, &labels).unwrap();
        assert!((auc - auc_by_pairs(&scores, &labels)).abs() < 1e-12);
    }
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let scores: Vec<f64> = (0..20_000).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..20_000).map(|_| rng.random_bool(0.3)).collect();
    assert!((roc_auc(&scores, &labels).unwrap() - 0.5).abs() < 0.02);
}

/// Ten hand-worked rankings, listed best score first.
#[test]
fn average_precision_hand_values() {
    let cases: [(&[bool], f64); 10] = [
        (&[true, true, false, false], 1.0),
        (&[false, true, false, false], 0.5),
        (&[false, false, false, true], 0.25),
        (&[true, false, true], (1.0 + 2.0 / 3.0) / 2.0),
        (&[false, true, false, true], (0.5 + 0.5) / 2.0),
        (&[true, false, false, true, true], (1.0 + 0.5 + 0.6) / 3.0),
        (&[false, false, true, true], (1.0 / 3.0 + 0.5) / 2.0),
        (&[true], 1.0),
        (&[true, false, true, false, true, false], (1.0 + 2.0 / 3.0 + 0.6) / 3.0),
        (&[false, true, true, true, false], (0.5 + 2.0 / 3.0 + 0.75) / 3.0),
    ];
    for (labels, expected) in cases {
        let scores: Vec<f64> = (0..labels.len()).rev().map(|i| i as f64).collect();
        let ap = average_precision_stepwise(&scores, labels).unwrap();
        assert!((ap - expected).abs() < 1e-12, "{labels:?}: {ap} vs {expected}");
    }
    assert!(average_precision_stepwise(&[0.1, 0.2], &[false, false]).is_err());
}

#[test]
fn tied_scores_form_a_single_threshold() {
    // positive and negative share the top score: precision 1/2 at recall 1
    let ap = average_precision_stepwise(&[0.9, 0.9, 0.1], &[true, false, false]).unwrap();
    assert!((ap - 0.5).abs() < 1e-15);
    let ap_rev = average_precision_stepwise(&[0.9, 0.9, 0.1], &[false, true, false]).unwrap();
    assert_eq!(ap, ap_rev);
}

#[test]
fn random_ranking_ap_tends_to_prevalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 100_000;
    let scores: Vec<f64> = (0..n).map(|_| rng.random()).collect();
    let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(1.0 / 11.0)).collect();
    let ap = average_precision_stepwise(&scores, &labels).unwrap();
    let prev = prevalence(&labels).unwrap();
    assert!((ap - prev).abs() < 0.02, "{ap} vs {prev}");
}

#[test]
fn fp_reduction_cases() {
    let r = relative_fp_reduction(0.9008, 0.8133).unwrap();
    let fp_f = 1.0 / 0.9008 - 1.0;
    let fp_b = 1.0 / 0.8133 - 1.0;
    assert!((r - (fp_b - fp_f) / fp_b).abs() < 1e-12);
    assert!((0.515..=0.525).contains(&r), "{r}");
    assert_eq!(relative_fp_reduction(0.6, 0.6).unwrap(), 0.0);
    assert_eq!(relative_fp_reduction(1.0, 0.6).unwrap(), 1.0);
    assert!(relative_fp_reduction(0.9, 1.0).is_err());
    assert!(relative_fp_reduction(0.0, 0.5).is_err());
}

#[test]
fn curves_start_and_end_at_the_corners() {
    let scores = [0.9, 0.7, 0.7, 0.4, 0.3];
    let labels = [true, false, true, false, true];
    let roc = roc_curve(&scores, &labels).unwrap();
    assert_eq!(roc.first(), Some(&(0.0, 0.0)));
    assert_eq!(roc.last(), Some(&(1.0, 1.0)));
    assert_eq!(roc.len(), 5);
    let pr = pr_curve(&scores, &labels).unwrap();
    assert_eq!(pr.last().unwrap().0, 1.0);
    assert!((pr.last().unwrap().1 - 0.6).abs() < 1e-15);
    let svg = roc_svg(&[("a<b", &roc)]);
    assert!(svg.starts_with("<svg") && svg.contains("a&lt;b") && svg.ends_with("</svg>\n"));
    assert!(pr_svg(&[("m", &pr)]).contains("polyline"));
}

#[test]
fn mean_std_uses_sample_deviation() {
    let ms = mean_std(&[1.0, 2.0, 3.0]).unwrap();
    assert_eq!(ms.mean, 2.0);
    assert!((ms.std - 1.0).abs() < 1e-15);
    assert_eq!(mean_std(&[4.0]).unwrap().std, 0.0);
}

fn sample_report(seed: u64, precision: f64) -> EvalReport {
    let (lo, hi) = wilson_ci(precision, 100, Z_95).unwrap();
    EvalReport {
        model: "student".into(),
        regime: crate::graph_store::Regime::NodeHoldout,
        seed,
        config_hash: "abc".into(),
        pool_checksums: [("test".to_string(), "ff".to_string())].into(),
        target_tpr: 0.9,
        threshold: 0.25,
        exact_precision: precision,
        exact_n: 100,
        wilson_ci: (lo, hi),
        bootstrap_ci: (lo, hi),
        detection_precision: 0.5,
        recall: 0.9,
        f1: 2.0 * 0.45 / 1.4,
        tp: 90,
        fp: 90,
        fn_: 10,
        roc_auc: 0.8,
        ap_stepwise: 0.4,
        ap_baseline: 1.0 / 11.0,
        n_candidates: 1100,
        n_positives: 100,
    }
}

#[test]
fn aggregate_reports_mean_and_spread() {
    let agg = AggregateReport::from_reports(vec![
        sample_report(0, 0.6),
        sample_report(1, 0.7),
        sample_report(2, 0.8),
    ])
    .unwrap();
    let p = agg.get("exact_precision").unwrap();
    assert!((p.mean - 0.7).abs() < 1e-12 && (p.std - 0.1).abs() < 1e-12);
    assert_eq!(agg.seeds, vec![0, 1, 2]);
    assert!(agg.to_text().contains("±"));
    assert!(agg.to_key_values().contains("exact_precision.std="));
    let mut other = sample_report(3, 0.5);
    other.model = "teacher".into();
    assert!(AggregateReport::from_reports(vec![sample_report(0, 0.5), other]).is_err());
}

#[test]
fn report_validation_and_serialisation() {
    let r = sample_report(4, 0.7);
    r.validate().unwrap();
    let kv = r.to_key_values();
    assert!(kv.contains("exact_precision=0.7\n") && kv.contains("pool.test=ff\n"));
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<EvalReport>(&json).unwrap(), r);
    let mut bad = r.clone();
    bad.roc_auc = 1.5;
    assert!(bad.validate().is_err());
}

proptest! {
    #[test]
    fn wilson_is_bounded_and_narrows_with_n(k in 0usize..50, n in 50usize..400) {
        let p = k as f64 / n as f64;
        let (lo, hi) = wilson_ci(p, n, Z_95).unwrap();
        prop_assert!(0.0 <= lo && lo <= p && p <= hi && hi <= 1.0);
        let (lo2, hi2) = wilson_ci(p, n * 4, Z_95).unwrap();
        prop_assert!(hi2 - lo2 < hi - lo);
    }

    #[test]
    fn auc_invariant_under_monotone_transform(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut labels: Vec<bool> = (0..60).map(|_| rng.random_bool(0.5)).collect();
        labels[0] = true;
        labels[1] = false;
        let moved: Vec<f64> = scores.iter().map(|s| (2.0 * s).exp() + 1.0).collect();
        prop_assert_eq!(roc_auc(&scores, &labels).unwrap(), roc_auc(&moved, &labels).unwrap());
    }

    #[test]
    fn f1_is_harmonic_mean(tp in 0usize..100, fp in 0usize..100, fn_ in 0usize..100) {
        prop_assume!(tp + fp + fn_ > 0);
        let m = binary_prf(tp, fp, fn_).unwrap();
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-15);
        prop_assert!(m.f1 <= (m.precision + m.recall) / 2.0 + 1e-15);
        if m.precision == m.recall {
            prop_assert!((m.f1 - m.precision).abs() < 1e-15);
        }
    }

    #[test]
    fn no_reduction_at_equal_precision(p in 0.01f64..0.999) {
        prop_assert!(relative_fp_reduction(p, p).unwrap().abs() < 1e-12);
    }
}
