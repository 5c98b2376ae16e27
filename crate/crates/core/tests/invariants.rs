use proptest::prelude::*;
use sep_core::ops::{self, conv};
use sep_core::rng::seeded;
use sep_core::spectral;
use sep_core::{io, SamplingGrid, Tensor};

fn randn(shape: [usize; 4], seed: u64) -> Tensor {
    Tensor::randn(shape, 0.0, 1.0, &mut seeded(seed)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_is_linear(
        seed in any::<u64>(),
        c in 1usize..4,
        h in 1usize..8,
        w in 1usize..8,
        stride in 1usize..3,
        padding in 0usize..2,
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let x = randn([2, c, h, w], seed);
        let y = randn([2, c, h, w], seed ^ 1);
        let k = randn([3, c, 2 * padding + 1, 2 * padding + 1], seed ^ 2);
        let lhs = conv::conv2d(&x.scale(a).unwrap().add(&y.scale(b).unwrap()).unwrap(), &k, None, stride, padding);
        if let Ok(lhs) = lhs {
            let rhs = conv::conv2d(&x, &k, None, stride, padding).unwrap().scale(a).unwrap()
                .add(&conv::conv2d(&y, &k, None, stride, padding).unwrap().scale(b).unwrap()).unwrap();
            prop_assert!(lhs.max_abs_diff(&rhs).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn split_concat_round_trip(seed in any::<u64>(), sizes in prop::collection::vec(1usize..4, 1..5)) {
        let total: usize = sizes.iter().sum();
        let x = randn([2, total, 3, 2], seed);
        let parts = ops::split_channels(&x, &sizes).unwrap();
        let refs: Vec<&Tensor> = parts.iter().collect();
        prop_assert_eq!(ops::concat_channels(&refs).unwrap(), x);
    }

    #[test]
    fn bilinear_stays_within_channel_range(
        seed in any::<u64>(),
        coords in prop::collection::vec(-4.0f64..10.0, 5 * 5 * 2),
    ) {
        let x = randn([1, 2, 6, 6], seed);
        let grid = SamplingGrid::new([1, 1, 5, 5, 2], coords).unwrap();
        let y = ops::bilinear_sample(&x, &grid).unwrap();
        for c in 0..2 {
            let (lo, hi) = x.channel_range(c);
            let (ylo, yhi) = y.channel_range(c);
            prop_assert!(ylo >= lo && yhi <= hi);
        }
    }

    #[test]
    fn fft_round_trip(seed in any::<u64>(), h in 1usize..20, w in 1usize..20) {
        let x = randn([1, 2, h, w], seed);
        let y = spectral::ifft2(&spectral::fft2(&x).unwrap()).unwrap();
        prop_assert!(y.max_abs_diff(&x).unwrap() <= 1e-10);
    }

    #[test]
    fn tensor_files_round_trip(seed in any::<u64>(), n in 1usize..3, c in 1usize..4, h in 1usize..5) {
        let x = randn([n, c, h, h + 1], seed);
        let bytes = io::tensor_to_bytes(&x);
        prop_assert_eq!(io::tensor_from_bytes::<f64>(&bytes).unwrap(), x);
    }
}
