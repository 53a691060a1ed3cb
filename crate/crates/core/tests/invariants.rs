//! Property-based invariants over the signal-path primitives.

use proptest::prelude::*;

use padc_core::nets::NetSpec;
use padc_core::signal::{alias_frequency, deinterleave_seq, interleave_seqs, quantize};

proptest! {
    #[test]
    fn interleave_roundtrip(
        n in 1usize..6,
        len in 1usize..40,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let seqs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let merged = interleave_seqs(&seqs);
        prop_assert_eq!(merged.len(), n * len);
        let back = deinterleave_seq(&merged, n);
        prop_assert_eq!(back, seqs);
    }

    #[test]
    fn alias_lands_in_first_nyquist_zone(
        f in 0.0f64..1e12,
        fs in 1e6f64..1e11,
    ) {
        let a = alias_frequency(f, fs);
        prop_assert!(a >= 0.0 && a <= fs / 2.0 + 1e-9 * fs);
        // Aliasing is idempotent.
        prop_assert!((alias_frequency(a, fs) - a).abs() <= 1e-6 * fs);
    }

    #[test]
    fn quantizer_is_idempotent_and_bounded(
        bits in 1u32..14,
        full_scale in 0.01f64..10.0,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..64).map(|_| rng.gen_range(-2.0 * full_scale..2.0 * full_scale)).collect();
        let q = quantize(&x, bits, full_scale);
        let qq = quantize(&q, bits, full_scale);
        prop_assert_eq!(&q, &qq);
        let step = 2.0 * full_scale / (1u64 << bits) as f64;
        for (&v, &c) in x.iter().zip(&q) {
            prop_assert!(c >= -full_scale - step && c <= full_scale);
            // In-range inputs land within half a step of the input.
            if v.abs() < full_scale - step {
                prop_assert!((v - c).abs() <= step / 2.0 + 1e-12);
            }
        }
    }

    #[test]
    fn forward_is_length_agnostic(len in 4usize..64) {
        let spec = NetSpec {
            base_channels: 3,
            pyramid: vec![3, 4],
            ..NetSpec::linearization(7)
        };
        let net = spec.build().unwrap();
        let input: Vec<f64> = (0..len).map(|i| (0.3 * i as f64).sin()).collect();
        let y = net.forward(&[input]).unwrap();
        prop_assert_eq!(y.len(), len);
    }
}
