use meandim_core::geometry::{
    covering_number_exact, covering_number_greedy, distance, interval_covering_number, packing_number, packing_set,
    within_scale, MetricKind, PointCloud,
};
use proptest::prelude::*;

fn metric() -> impl Strategy<Value = MetricKind> {
    prop_oneof![
        Just(MetricKind::LInfinity),
        (1.0f64..4.0).prop_map(|p| MetricKind::LpNormalized { p }),
        (0usize..4).prop_map(|radius| MetricKind::TauTruncated { radius }),
    ]
}

fn cloud() -> impl Strategy<Value = PointCloud> {
    (1usize..=4, 1usize..=20, metric()).prop_flat_map(|(n, size, metric)| {
        prop::collection::vec(prop::collection::vec(0.0f64..=1.0, n), size)
            .prop_map(move |rows| PointCloud::from_rows(rows, metric).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn covering_and_packing_inequalities(cloud in cloud(), eps in 0.01f64..1.0) {
        let n = cloud.len();
        let exact = covering_number_exact(&cloud, eps).unwrap();
        let greedy = covering_number_greedy(&cloud, eps).unwrap();
        let packing = packing_number(&cloud, eps).unwrap();
        let coarse = covering_number_exact(&cloud, 2.0 * eps).unwrap();

        prop_assert!(1 <= exact && exact <= n);
        prop_assert!(packing <= exact, "packing {packing} > cover {exact}");
        prop_assert!(coarse <= packing, "cover at 2eps {coarse} > packing {packing}");
        prop_assert!(exact <= greedy);
        prop_assert!(greedy as f64 <= exact as f64 * (1.0 + (n as f64).ln()));
        if within_scale(cloud.diameter(), eps) {
            prop_assert_eq!(exact, 1);
        }
    }

    #[test]
    fn packing_sets_are_separated_and_maximal(cloud in cloud(), eps in 0.01f64..1.0) {
        let chosen = packing_set(&cloud, eps).unwrap();
        let close = |i: usize, j: usize| {
            let d = distance(&cloud.points()[i], &cloud.points()[j], cloud.metric()).unwrap();
            within_scale(d, eps)
        };
        for (a, &i) in chosen.iter().enumerate() {
            for &j in &chosen[a + 1..] {
                prop_assert!(!close(i, j));
            }
        }
        for i in (0..cloud.len()).filter(|i| !chosen.contains(i)) {
            prop_assert!(chosen.iter().any(|&c| close(i, c)), "point {i} could be added");
        }
    }

    #[test]
    fn covering_is_monotone_in_scale(cloud in cloud(), a in 0.01f64..1.0, b in 0.01f64..1.0) {
        let (small, large) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(covering_number_exact(&cloud, small).unwrap() >= covering_number_exact(&cloud, large).unwrap());
    }

    #[test]
    fn one_dimensional_sweep_is_exact(values in prop::collection::vec(0.0f64..=1.0, 1..=20), eps in 0.01f64..1.0) {
        let cloud = PointCloud::from_rows(values.iter().map(|&v| vec![v]).collect(), MetricKind::LInfinity).unwrap();
        prop_assert_eq!(interval_covering_number(&values, eps), covering_number_exact(&cloud, eps).unwrap());
    }
}
