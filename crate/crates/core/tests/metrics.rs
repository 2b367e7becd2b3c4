mod common;

use common::{oracle_auc, oracle_f1, oracle_f1_best, oracle_ks, oracle_recall_at, random_scored};
use grande::metrics::{auc, default_precision_grid, evaluate, f1, f1_best, ks, pr_curve};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    any::<u64>().prop_map(|seed| random_scored(&mut ChaCha8Rng::seed_from_u64(seed), 14))
}

proptest! {
    #[test]
    fn metrics_match_exhaustive_sweeps((s, y) in scored(), pick in any::<prop::sample::Index>()) {
        prop_assert_eq!(auc(&s, &y).unwrap(), oracle_auc(&s, &y));
        prop_assert_eq!(ks(&s, &y).unwrap(), oracle_ks(&s, &y));
        let thr = s[pick.index(s.len())];
        prop_assert_eq!(f1(&s, &y, thr).unwrap(), oracle_f1(&s, &y, thr));
        let (best, at) = f1_best(&s, &y).unwrap();
        prop_assert_eq!(best, oracle_f1_best(&s, &y));
        if best > 0.0 {
            prop_assert_eq!(f1(&s, &y, at).unwrap(), best);
        }
        for p in pr_curve(&s, &y, &default_precision_grid()).unwrap() {
            prop_assert_eq!(p.recall, oracle_recall_at(&s, &y, p.precision));
        }
    }

    #[test]
    fn ks_is_the_largest_gap_between_class_cdfs((s, y) in scored()) {
        let pos: Vec<f64> = s.iter().zip(&y).filter(|p| *p.1).map(|p| *p.0).collect();
        let neg: Vec<f64> = s.iter().zip(&y).filter(|p| !*p.1).map(|p| *p.0).collect();
        let cdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
        let gap = s.iter().map(|&t| (cdf(&pos, t) - cdf(&neg, t)).abs()).fold(0.0, f64::max);
        prop_assert!((ks(&s, &y).unwrap() - gap).abs() < 1e-12);
    }

    #[test]
    fn reordering_samples_changes_nothing((s, y) in scored(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..s.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let s2: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
        let y2: Vec<bool> = idx.iter().map(|&i| y[i]).collect();
        prop_assert_eq!(evaluate(&s, &y).unwrap(), evaluate(&s2, &y2).unwrap());
    }

    #[test]
    fn ranking_metrics_ignore_monotone_transforms((s, y) in scored()) {
        let t: Vec<f64> = s.iter().map(|v| (3.0 * v - 1.0).exp()).collect();
        prop_assert_eq!(auc(&s, &y).unwrap(), auc(&t, &y).unwrap());
        prop_assert_eq!(ks(&s, &y).unwrap(), ks(&t, &y).unwrap());
        prop_assert_eq!(f1_best(&s, &y).unwrap().0, f1_best(&t, &y).unwrap().0);
    }

    #[test]
    fn flipping_scores_mirrors_auc((s, y) in scored()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((auc(&s, &y).unwrap() + auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn pr_curve_is_monotone_in_precision_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (s, y) = random_scored(&mut rng, 20);
        let pr = pr_curve(&s, &y, &default_precision_grid()).unwrap();
        // Stricter precision levels can only lower the reachable recall.
        assert!(pr.windows(2).all(|w| w[0].recall <= w[1].recall));
    }
}
