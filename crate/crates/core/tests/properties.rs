use proptest::prelude::*;

use spcascade::config::FoldPlan;
use spcascade::densemap::nearest_fill;
use spcascade::forest::{train_forest, FeatureMatrix, ForestConfig, ForestModel, MinLeaf};
use spcascade::postmetrics::compute_metrics;
use spcascade::volume::{
    load_mask, load_volume, save_mask, save_volume, SegmentationMask, Spacing, Volume3D,
};

fn dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..9, 1usize..9, 1usize..5).prop_map(|(x, y, z)| [x, y, z])
}

fn spacing() -> impl Strategy<Value = Spacing> {
    (0.1f64..5.0, 0.1f64..5.0, 0.1f64..8.0).prop_map(|(a, b, c)| Spacing([a, b, c]))
}

fn mask_pair() -> impl Strategy<Value = (SegmentationMask, SegmentationMask)> {
    dims().prop_flat_map(|d| {
        let n = d[0] * d[1] * d[2];
        (
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0u8..2, n),
        )
            .prop_map(move |(a, b)| {
                (
                    SegmentationMask::new(d, Spacing::default(), a).unwrap(),
                    SegmentationMask::new(d, Spacing::default(), b).unwrap(),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn volume_and_mask_files_round_trip(
        (d, values, bits) in dims().prop_flat_map(|d| {
            let n = d[0] * d[1] * d[2];
            (Just(d), proptest::collection::vec(0i16..=4095, n), proptest::collection::vec(0u8..2, n))
        }),
        sp in spacing(),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let v = Volume3D::new(d, sp, values).unwrap();
        save_volume(&v, &dir.path().join("v")).unwrap();
        prop_assert_eq!(load_volume(&dir.path().join("v")).unwrap(), v);
        let m = SegmentationMask::new(d, sp, bits).unwrap();
        save_mask(&m, &dir.path().join("m")).unwrap();
        prop_assert_eq!(load_mask(&dir.path().join("m")).unwrap(), m);
    }

    #[test]
    fn overlap_metric_identities((a, b) in mask_pair()) {
        let ab = compute_metrics(&a, &b).unwrap();
        let ba = compute_metrics(&b, &a).unwrap();
        for v in [ab.dice, ab.jaccard, ab.precision, ab.recall] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((ab.jaccard - ab.dice / (2.0 - ab.dice)).abs() < 1e-12);
        prop_assert!(ab.jaccard <= ab.dice + 1e-15);
        prop_assert_eq!(ab.dice, ba.dice);
        prop_assert_eq!(ab.jaccard, ba.jaccard);
        prop_assert_eq!(ab.precision, ba.recall);
        let self_m = compute_metrics(&a, &a).unwrap();
        prop_assert_eq!((self_m.dice, self_m.jaccard, self_m.precision, self_m.recall), (1.0, 1.0, 1.0, 1.0));
        if ab.precision + ab.recall > 0.0 && a.count() > 0 && b.count() > 0 {
            let f1 = 2.0 * ab.precision * ab.recall / (ab.precision + ab.recall);
            prop_assert!((f1 - ab.dice).abs() < 1e-12);
        }
    }

    #[test]
    fn fold_plan_partitions_ids(n in 2usize..40, k in 2usize..8, seed in any::<u64>()) {
        prop_assume!(k <= n);
        let ids: Vec<String> = (0..n).map(|i| format!("case_{i:03}")).collect();
        let plan = FoldPlan::new(&ids, k, seed).unwrap();
        prop_assert_eq!(plan.len(), k);
        let mut all: Vec<String> = plan.folds.iter().flatten().cloned().collect();
        all.sort();
        prop_assert_eq!(&all, &ids);
        let sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for f in 0..k {
            let train = plan.train_ids(f);
            prop_assert_eq!(train.len() + plan.test_ids(f).len(), n);
            prop_assert!(plan.test_ids(f).iter().all(|id| !train.contains(id)));
        }
        prop_assert_eq!(FoldPlan::new(&ids, k, seed).unwrap(), plan);
    }

    #[test]
    fn nearest_fill_matches_exhaustive_search(
        (d, region, points) in dims().prop_flat_map(|d| {
            let n = d[0] * d[1] * d[2];
            (
                Just(d),
                proptest::collection::vec(any::<bool>(), n),
                proptest::collection::btree_map(0..n, 0.0f32..1.0, 0..6),
            )
        }),
        planar in any::<bool>(),
    ) {
        let evaluated: Vec<(usize, f32)> = points.into_iter().collect();
        let got = nearest_fill(d, &region, &evaluated, planar);
        let [nx, ny, _] = d;
        let coord = |i: usize| ((i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64);
        for (i, &inside) in region.iter().enumerate() {
            let (x, y, z) = coord(i);
            let want = if !inside {
                0.0
            } else {
                evaluated
                    .iter()
                    .filter(|&&(j, _)| !planar || coord(j).2 == z)
                    .map(|&(j, v)| {
                        let (a, b, c) = coord(j);
                        ((a - x).pow(2) + (b - y).pow(2) + (c - z).pow(2), j, v)
                    })
                    .min_by_key(|&(d2, j, _)| (d2, j))
                    .map_or(0.0, |(_, _, v)| v)
            };
            prop_assert_eq!(got[i], want, "voxel {}", i);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn forest_bytes_round_trip_and_probabilities_are_bounded(
        rows in proptest::collection::vec((proptest::collection::vec(-10.0f32..10.0, 4), any::<bool>()), 8..60),
        probes in proptest::collection::vec(proptest::collection::vec(-12.0f32..12.0, 4), 20),
        seed in any::<u64>(),
    ) {
        let mut x = FeatureMatrix::empty(4);
        for (r, l) in &rows {
            x.push(r, *l);
        }
        let (neg, pos) = x.class_counts();
        prop_assume!(neg > 0 && pos > 0);
        let cfg = ForestConfig { trees: 5, min_leaf: MinLeaf::Fixed(1), seed, ..Default::default() };
        let model = train_forest(&x, &cfg).unwrap();
        let back = ForestModel::from_bytes(&model.to_bytes()).unwrap();
        prop_assert_eq!(back.to_bytes(), model.to_bytes());
        for p in &probes {
            let a = model.predict_proba(p).unwrap();
            prop_assert!((0.0..=1.0).contains(&a));
            prop_assert_eq!(a, back.predict_proba(p).unwrap());
        }
        prop_assert_eq!(train_forest(&x, &cfg).unwrap().to_bytes(), model.to_bytes());
    }
}
