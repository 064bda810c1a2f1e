use pggp_core::metrics::{ece, evaluate, group_items, mean_average_precision, recall_at_k};
use pggp_core::ScoredItem;
use proptest::prelude::*;

fn items_from(groups: &[Vec<(f64, bool)>]) -> Vec<ScoredItem> {
    groups
        .iter()
        .enumerate()
        .flat_map(|(g, items)| {
            items
                .iter()
                .map(move |&(s, y)| ScoredItem::new(format!("g{g}"), s, u8::from(y)).unwrap())
        })
        .collect()
}

/// Groups with distinct scores and at least one positive each.
fn groups_strategy() -> impl Strategy<Value = Vec<Vec<(f64, bool)>>> {
    prop::collection::vec(
        prop::collection::btree_set(0u32..10_000, 2..8).prop_flat_map(|scores| {
            let n = scores.len();
            (Just(scores), prop::collection::vec(any::<bool>(), n), 0..n)
        }),
        1..6,
    )
    .prop_map(|groups| {
        groups
            .into_iter()
            .map(|(scores, mut labels, forced)| {
                labels[forced] = true;
                scores
                    .into_iter()
                    .map(|s| f64::from(s) / 10_000.0)
                    .zip(labels)
                    .collect()
            })
            .collect()
    })
}

#[test]
fn calibrated_scores_have_small_ece() {
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut uniform = || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let pairs: Vec<ScoredItem> = (0..100_000)
        .map(|_| {
            let s = uniform();
            ScoredItem::new("a", s, u8::from(uniform() < s)).unwrap()
        })
        .collect();
    let (summary, report) = evaluate(&pairs, 10, false).unwrap();
    assert!(summary.ece < 0.01, "{}", summary.ece);
    assert_eq!(report.n_items(), 100_000);
}

#[test]
fn rank1_restriction_uses_one_item_per_group() {
    let items = items_from(&[
        vec![(0.9, true), (0.2, false), (0.1, false)],
        vec![(0.3, false), (0.8, false), (0.4, true)],
    ]);
    let (all, _) = evaluate(&items, 10, false).unwrap();
    let (top, report) = evaluate(&items, 10, true).unwrap();
    assert_eq!(report.n_items(), 2);
    assert_eq!(all.r_at_1, top.r_at_1);
    assert_eq!(top.n_items, 6);
}

proptest! {
    #[test]
    fn metrics_ignore_item_order(groups in groups_strategy(), seed in any::<u64>()) {
        let items = items_from(&groups);
        let mut shuffled = items.clone();
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (s >> 33) as usize % (i + 1));
        }
        let (a, _) = evaluate(&items, 10, false).unwrap();
        let (b, _) = evaluate(&shuffled, 10, false).unwrap();
        prop_assert_eq!(a.r_at_1, b.r_at_1);
        prop_assert!((a.map - b.map).abs() < 1e-12);
        prop_assert!((a.ece - b.ece).abs() < 1e-12);
    }

    #[test]
    fn recall_is_monotone_in_k(groups in groups_strategy()) {
        let g = group_items(&items_from(&groups));
        let mut prev = 0.0;
        for k in 1..=8 {
            let r = recall_at_k(&g, k).unwrap();
            prop_assert!(r >= prev);
            prev = r;
        }
        prop_assert_eq!(prev, 1.0);
    }

    #[test]
    fn ranking_metrics_invariant_under_monotone_transform(groups in groups_strategy()) {
        let squashed: Vec<Vec<(f64, bool)>> = groups
            .iter()
            .map(|g| g.iter().map(|&(s, y)| (s.powi(3), y)).collect())
            .collect();
        let a = group_items(&items_from(&groups));
        let b = group_items(&items_from(&squashed));
        prop_assert_eq!(recall_at_k(&a, 1).unwrap(), recall_at_k(&b, 1).unwrap());
        prop_assert_eq!(mean_average_precision(&a).unwrap(), mean_average_precision(&b).unwrap());
    }

    #[test]
    fn ece_is_bounded(pairs in prop::collection::vec((0.5f64..=1.0, any::<bool>()), 1..200)) {
        let e = ece(&pairs, 10).unwrap().ece;
        prop_assert!((0.0..=1.0).contains(&e));
    }
}
