use proptest::prelude::*;

use gbtree::data::{DataMatrix, Entry};
use gbtree::libsvm::{parse_libsvm, write_libsvm, LibsvmOptions};
use gbtree::model_io::{format_hex, parse_hex};
use gbtree::objective::{gradients, leaf_weight, split_gain, structure_score, LossKind};
use gbtree::sketch::{WeightedPoint, WeightedQuantileSummary};

fn finite_difference(loss: LossKind, y: f64, f: f64) -> (f64, f64) {
    let d = 1e-4;
    let (lo, mid, hi) = (loss.loss(y, f - d), loss.loss(y, f), loss.loss(y, f + d));
    ((hi - lo) / (2.0 * d), (hi - 2.0 * mid + lo) / (d * d))
}

fn sparse_matrix() -> impl Strategy<Value = DataMatrix> {
    (1usize..6).prop_flat_map(|m| {
        let row = proptest::collection::btree_map(0..m as u32, any::<f64>().prop_filter("finite", |v| v.is_finite()), 0..=m);
        let rows = proptest::collection::vec((row, prop_oneof![Just(0.0), Just(1.0), -1e3..1e3f64]), 0..30);
        rows.prop_map(move |rows| {
            let labels = rows.iter().map(|r| r.1).collect();
            let rows = rows
                .into_iter()
                .map(|(r, _)| r.into_iter().map(|(i, v)| Entry::new(i, v)).collect())
                .collect();
            DataMatrix::from_rows(rows, labels, None, m).unwrap()
        })
    })
}

proptest! {
    #[test]
    fn gradients_match_finite_differences(y in 0u8..2, f in -8.0..8.0f64) {
        let y = f64::from(y);
        for loss in [LossKind::Logistic, LossKind::SquaredError] {
            let gp = gradients(loss, &[y], &[f], None).unwrap().as_slice()[0];
            let (g, h) = finite_difference(loss, y, f);
            prop_assert!((gp.g - g).abs() <= 1e-6, "{loss}: g {} vs {g}", gp.g);
            prop_assert!((gp.h - h).abs() <= 1e-4, "{loss}: h {} vs {h}", gp.h);
        }
    }

    #[test]
    fn weights_scale_gradients(y in 0u8..2, f in -8.0..8.0f64, w in 0.0..50.0f64) {
        let y = f64::from(y);
        let plain = gradients(LossKind::Logistic, &[y], &[f], None).unwrap().as_slice()[0];
        let weighted = gradients(LossKind::Logistic, &[y], &[f], Some(&[w])).unwrap().as_slice()[0];
        prop_assert_eq!(weighted.g, plain.g * w);
        prop_assert_eq!(weighted.h, plain.h * w);
    }

    #[test]
    fn leaf_weight_minimizes_the_quadratic(g in -100.0..100.0f64, h in 0.0..100.0f64, lambda in 0.01..10.0f64, step in -1.0..1.0f64) {
        let w = leaf_weight(g, h, lambda).unwrap();
        let q = |x: f64| g * x + 0.5 * (h + lambda) * x * x;
        prop_assert!(q(w) <= q(w + step) + 1e-9 * q(w).abs().max(1.0));
        let score = structure_score(&[(g, h)], lambda, 0.0);
        prop_assert!((score - q(w)).abs() <= 1e-9 * score.abs().max(1.0));
    }

    #[test]
    fn split_gain_is_score_reduction(gl in -50.0..50.0f64, hl in 0.0..50.0f64, gr in -50.0..50.0f64, hr in 0.0..50.0f64, lambda in 0.01..5.0f64, gamma in 0.0..2.0f64) {
        let parent = structure_score(&[(gl + gr, hl + hr)], lambda, gamma);
        let children = structure_score(&[(gl, hl), (gr, hr)], lambda, gamma);
        let gain = split_gain(gl, hl, gr, hr, lambda, gamma);
        prop_assert!((gain - (parent - children)).abs() <= 1e-9 * parent.abs().max(1.0));
    }

    #[test]
    fn hex_floats_round_trip(bits in any::<u64>()) {
        let x = f64::from_bits(bits);
        prop_assume!(!x.is_nan());
        prop_assert_eq!(parse_hex(&format_hex(x)).map(f64::to_bits), Some(bits));
    }

    #[test]
    fn libsvm_round_trips(m in sparse_matrix()) {
        let mut text = Vec::new();
        write_libsvm(&m, &mut text).unwrap();
        let opts = LibsvmOptions { n_features: Some(m.n_features()), ..Default::default() };
        let back = parse_libsvm(&text[..], &opts).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn summaries_stay_valid_under_merge_and_prune(
        a in proptest::collection::vec((-100i32..100, 0.001..100.0f64), 1..300),
        b in proptest::collection::vec((-100i32..100, 0.001..100.0f64), 1..300),
        budget in 1usize..40,
    ) {
        let pts = |v: &[(i32, f64)]| v.iter().map(|&(x, w)| WeightedPoint::new(f64::from(x), w)).collect::<Vec<_>>();
        let sa = WeightedQuantileSummary::from_points(&pts(&a)).unwrap();
        let sb = WeightedQuantileSummary::from_points(&pts(&b)).unwrap().prune(budget).unwrap();
        let merged = sa.merge(&sb);
        prop_assert!(merged.validate().is_ok());
        prop_assert!(merged.measured_eps() <= sa.measured_eps().max(sb.measured_eps()) + 1e-12);
        let pruned = merged.prune(budget).unwrap();
        prop_assert!(pruned.validate().is_ok());
        prop_assert!(pruned.len() <= budget + 1);
        prop_assert!(pruned.measured_eps() <= merged.measured_eps() + 1.0 / budget as f64 + 1e-12);
        prop_assert_eq!(pruned.min(), merged.min());
        prop_assert_eq!(pruned.max(), merged.max());
    }
}
