use meandim_core::ratedistortion::{mutual_information_table, rd_block, RdOptions};
use meandim_core::subshifts::{entropy, Alphabet, MeasureModel, SubshiftModel};
use proptest::prelude::*;

fn joint() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=5, 1usize..=5).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop::collection::vec(0.0f64..1.0, c), r).prop_filter_map("zero mass", |t| {
            let total: f64 = t.iter().flatten().sum();
            (total > 1e-6).then(|| t.into_iter().map(|row| row.into_iter().map(|v| v / total).collect()).collect())
        })
    })
}

fn binary_bernoulli(p: f64) -> MeasureModel {
    MeasureModel::bernoulli(SubshiftModel::full_shift(Alphabet::binary()), vec![1.0 - p, p]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mutual_information_is_bounded_by_marginal_entropies(t in joint()) {
        let px: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
        let py: Vec<f64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
        let mi = mutual_information_table(&t).unwrap();
        prop_assert!(mi >= 0.0);
        prop_assert!(mi <= entropy(&px).min(entropy(&py)) + 1e-12);
    }

    #[test]
    fn product_joints_carry_no_information(
        a in prop::collection::vec(0.01f64..1.0, 1..=5),
        b in prop::collection::vec(0.01f64..1.0, 1..=5),
    ) {
        let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let t: Vec<Vec<f64>> = a.iter().map(|x| b.iter().map(|y| x * y / (sa * sb)).collect()).collect();
        prop_assert!(mutual_information_table(&t).unwrap() < 1e-12);
    }

    #[test]
    fn block_rate_is_nonincreasing_in_distortion(p in 0.05f64..0.95, e1 in 0.0f64..0.5, e2 in 0.0f64..0.5) {
        let mu = binary_bernoulli(p);
        let opts = RdOptions::default();
        let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
        let r_lo = rd_block(&mu, 2, lo, &opts).unwrap();
        let r_hi = rd_block(&mu, 2, hi, &opts).unwrap();
        prop_assert!(r_hi.rate <= r_lo.rate + 1e-7, "R({hi})={} > R({lo})={}", r_hi.rate, r_lo.rate);
        prop_assert!(r_lo.distortion <= lo + 1e-12);
        prop_assert!(r_lo.monotone && r_hi.monotone);
        prop_assert!(r_lo.rate <= entropy(&[p, 1.0 - p]) + 1e-9);
    }

    #[test]
    fn block_rates_are_subadditive(stay in 0.55f64..0.95, eps in 0.02f64..0.3) {
        let mu = MeasureModel::markov_stationary(
            SubshiftModel::full_shift(Alphabet::binary()),
            vec![vec![stay, 1.0 - stay], vec![1.0 - stay, stay]],
        ).unwrap();
        let opts = RdOptions::default();
        let total: Vec<f64> = (1..=4).map(|n| n as f64 * rd_block(&mu, n, eps, &opts).unwrap().rate).collect();
        for n in 1..4 {
            for m in 1..=4 - n {
                prop_assert!(total[n + m - 1] <= total[n - 1] + total[m - 1] + 1e-6);
            }
        }
    }
}

#[test]
fn block_rate_curve_is_convex() {
    let mu = binary_bernoulli(0.3);
    let opts = RdOptions::default();
    let curve: Vec<(f64, f64)> = (0..=12)
        .map(|i| {
            let p = rd_block(&mu, 2, 0.025 * i as f64, &opts).unwrap();
            (p.distortion, p.rate)
        })
        .collect();
    for w in curve.windows(3) {
        let ((d0, r0), (d1, r1), (d2, r2)) = (w[0], w[1], w[2]);
        let chord = r0 + (r2 - r0) * (d1 - d0) / (d2 - d0);
        assert!(r1 <= chord + 1e-6, "point ({d1}, {r1}) above chord {chord}");
    }
}
