use meandim_core::codec::{apply_codec, digit_pack_codec, holder_pairs, CodecSource};
use meandim_core::subshifts::{window_law, Alphabet, MeasureModel, SubshiftModel};
use proptest::prelude::*;

fn alphabet() -> impl Strategy<Value = Alphabet> {
    prop::collection::btree_set(0u32..=1000, 1..=5)
        .prop_map(|s| Alphabet::new(s.into_iter().map(|v| v as f64 / 1000.0).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn digit_packing_is_lossless_and_certified(alphabet in alphabet(), n in 1usize..=4, k_frac in 0.0f64..1.0) {
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let codec = digit_pack_codec(&alphabet, n, k).unwrap();
        let holder = codec.holder.clone().unwrap();
        prop_assert!(holder.pass, "worst ratio {}", holder.worst_ratio);

        let mu = MeasureModel::uniform(SubshiftModel::full_shift(alphabet)).unwrap();
        let law = window_law(&mu, n).unwrap();
        let report = apply_codec(&codec, CodecSource::Law(&law), 0.1, f64::INFINITY).unwrap();
        prop_assert_eq!(report.error_prob_lossless, 0.0);
        prop_assert_eq!(report.mean_distortion, 0.0);
    }

    #[test]
    fn decoder_stays_in_the_cube(alphabet in alphabet(), seed in any::<u64>()) {
        let codec = digit_pack_codec(&alphabet, 3, 1).unwrap();
        for (a, b) in holder_pairs(1, 50, seed) {
            for y in [codec.decompressor.apply(&a), codec.decompressor.apply(&b)] {
                prop_assert!(y.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
