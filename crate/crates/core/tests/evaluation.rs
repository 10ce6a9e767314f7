mod common;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use unikp::datapipe::RawSample;
use unikp::evaluation::{evaluate, f1_at_5, f1_at_m, macro_average};
use unikp::inference::{PredictionRecord, PresentOut};

#[test]
fn matches_brute_force_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let (preds, gold) = common::metric_instance(&mut rng);
        let want = common::reference_metrics(&preds, &gold);
        let got = f1_at_5(&preds, &gold).zip(f1_at_m(&preds, &gold));
        assert_eq!(got, want, "instance {i}: {preds:?} vs {gold:?}");
    }
}

#[test]
fn padded_example() {
    let gold = ["a", "b", "c", "d"];
    let preds = ["a", "b", "c"];
    let f = f1_at_5(&preds, &gold).unwrap();
    assert!((f - 2.0 / 3.0).abs() < 1e-9, "{f}");
    assert!((f1_at_m(&preds, &gold).unwrap() - 6.0 / 7.0).abs() < 1e-12);
}

#[test]
fn five_unique_predictions_make_both_metrics_equal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let pool = ["alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa"];
    for _ in 0..200 {
        let mut p = pool.to_vec();
        p.shuffle(&mut rng);
        let gold: Vec<&str> = p[2..6].to_vec();
        p.shuffle(&mut rng);
        let preds: Vec<&str> = p[..5].to_vec();
        assert_eq!(f1_at_5(&preds, &gold), f1_at_m(&preds, &gold));
    }
}

#[test]
fn permutation_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..300 {
        let (mut preds, mut gold) = common::metric_instance(&mut rng);
        let (a5, am) = (f1_at_5(&preds, &gold), f1_at_m(&preds, &gold));
        gold.shuffle(&mut rng);
        assert_eq!(f1_at_5(&preds, &gold), a5);
        preds.shuffle(&mut rng);
        assert_eq!(f1_at_m(&preds, &gold), am);
    }
}

#[test]
fn macro_average_skips_undefined() {
    assert_eq!(macro_average([Some(1.0), None, Some(0.5)]), 0.75);
    assert_eq!(macro_average([None, None]), 0.0);
}

#[test]
fn report_splits_gold_by_presence() {
    let gold = vec![RawSample {
        id: "d".into(),
        document: "graph neural networks for beam search".into(),
        keyphrases: vec!["graph neural networks".into(), "beam search".into(), "decoding".into()],
    }];
    let preds = vec![PredictionRecord {
        id: "d".into(),
        present: vec![
            PresentOut {
                phrase: "beam search".into(),
                score: 0.9,
            },
            PresentOut {
                phrase: "graph".into(),
                score: 0.8,
            },
        ],
        absent: vec!["decoding".into(), "parsing".into()],
    }];
    let r = evaluate(&gold, &preds).unwrap();
    assert_eq!(r.documents, 1);
    // present: 1 match of 2 gold, 2 predictions
    assert!((r.present_f1_at_m - 0.5).abs() < 1e-12);
    assert!((r.present_f1_at_5 - 2.0 * 0.2 * 0.5 / 0.7).abs() < 1e-12);
    // absent: 1 match of 1 gold, 2 predictions
    assert!((r.absent_f1_at_m - 2.0 * 0.5 / 1.5).abs() < 1e-12);
    assert!(evaluate(&gold, &[]).is_err());
}
