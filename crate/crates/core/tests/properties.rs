//! Property tests over the system's structural invariants.

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;
use vq_deepsc_core::channel::{apply_channel, equalize, sample_channel, ChannelKind};
use vq_deepsc_core::link::{
    bits_to_indices, indices_to_bits, peg_construct, Constellation, ConstellationKind, LdpcCode,
};
use vq_deepsc_core::nn::Tensor;
use vq_deepsc_core::rng::rng_from_seed;
use vq_deepsc_core::vq::{dequantize, quantize, EmbeddingSpace, IndexStream};

fn small_code() -> Arc<LdpcCode> {
    static CODE: std::sync::OnceLock<Arc<LdpcCode>> = std::sync::OnceLock::new();
    CODE.get_or_init(|| Arc::new(LdpcCode::from_h(peg_construct(20, 10, 3), 50).unwrap()))
        .clone()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // Argmin optimality: the chosen row is never farther than any other row.
    #[test]
    fn quantize_picks_a_global_minimizer(
        n in 1usize..32,
        k in 1usize..8,
        seed in 0u64..1_000_000,
    ) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let rows: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let space = EmbeddingSpace::new(1, Tensor::new(vec![n, k], rows.clone())).unwrap();
        let m = rng.random_range(1..16usize);
        let feats: Vec<f64> = (0..m * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let features = Tensor::new(vec![m, k], feats.clone());
        let stream = quantize(&features, &space).unwrap();
        for (mi, &chosen) in stream.indices.iter().enumerate() {
            let dist = |ni: usize| -> f64 {
                (0..k).map(|j| {
                    let d = feats[mi * k + j] - rows[ni * k + j];
                    d * d
                }).sum()
            };
            let d_chosen = dist(chosen as usize);
            for ni in 0..n {
                prop_assert!(d_chosen <= dist(ni) + 1e-12);
            }
            // Tie-break: no strictly-lower index achieves the same distance.
            for ni in 0..chosen as usize {
                prop_assert!(dist(ni) > d_chosen - 1e-12);
            }
        }
    }

    // Quantization is idempotent on codebook rows (distinct rows).
    #[test]
    fn quantize_of_dequantize_is_identity(
        n in 1usize..24,
        k in 1usize..6,
        seed in 0u64..1_000_000,
    ) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let rows: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let space = EmbeddingSpace::new(2, Tensor::new(vec![n, k], rows)).unwrap();
        let indices: Vec<u32> = (0..20).map(|_| rng.random_range(0..n as u32)).collect();
        let stream = IndexStream { level: 2, indices: indices.clone() };
        let f = dequantize(&stream, &space).unwrap();
        let back = quantize(&f, &space).unwrap();
        prop_assert_eq!(back.indices, indices);
    }

    // VQ loss terms are non-negative and vanish exactly on codebook rows.
    #[test]
    fn vq_loss_nonnegative(seed in 0u64..1_000_000, m in 1usize..12, k in 1usize..6) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let f: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let q: Vec<f64> = (0..m * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ft = Tensor::new(vec![m, k], f.clone());
        let qt = Tensor::new(vec![m, k], q);
        let (e, c) = vq_deepsc_core::vq::vq_loss_values(&ft, &qt).unwrap();
        prop_assert!(e >= 0.0 && c >= 0.0);
        let (e0, c0) = vq_deepsc_core::vq::vq_loss_values(&ft, &ft).unwrap();
        prop_assert_eq!((e0, c0), (0.0, 0.0));
    }

    // Index/bit serialization round-trips for any stream layout.
    #[test]
    fn bitstream_roundtrip(
        sizes in prop::collection::vec(1usize..100, 1..4),
        seed in 0u64..1_000_000,
    ) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let streams: Vec<IndexStream> = sizes.iter().enumerate().map(|(i, &n)| IndexStream {
            level: i + 1,
            indices: (0..rng.random_range(1..40)).map(|_| rng.random_range(0..n as u32)).collect(),
        }).collect();
        let bs = indices_to_bits(&streams, &sizes).unwrap();
        let decoded = bits_to_indices(&bs.bits, &bs.layout).unwrap();
        prop_assert_eq!(decoded.clamped, 0);
        prop_assert_eq!(decoded.streams, streams);
    }

    // Corrupted fixed-width fields always clamp into range.
    #[test]
    fn corrupted_bits_decode_into_range(
        n in 2usize..70,
        seed in 0u64..1_000_000,
    ) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        let stream = IndexStream {
            level: 1,
            indices: (0..32).map(|_| rng.random_range(0..n as u32)).collect(),
        };
        let mut bs = indices_to_bits(std::slice::from_ref(&stream), &[n]).unwrap();
        for b in bs.bits.iter_mut() {
            if rng.random_range(0.0..1.0) < 0.25 {
                *b ^= 1;
            }
        }
        let decoded = bits_to_indices(&bs.bits, &bs.layout).unwrap();
        prop_assert!(decoded.streams[0].indices.iter().all(|&ix| (ix as usize) < n));
    }

    // Unit mean symbol energy under uniform random bits, every constellation.
    #[test]
    fn empirical_symbol_energy_is_unity(seed in 0u64..1_000_000) {
        use rand::Rng;
        let mut rng = rng_from_seed(seed);
        for kind in [ConstellationKind::Bpsk, ConstellationKind::Qam16, ConstellationKind::Qam32] {
            let c = Constellation::new(kind);
            // Exhaustive over all labels: exact unit energy by construction.
            prop_assert!((c.mean_energy() - 1.0).abs() < 1e-6);
            // And hard demod inverts modulate for random payloads.
            let bits: Vec<u8> = (0..c.bits_per_symbol * 40)
                .map(|_| rng.random_range(0..2u8)).collect();
            let (symbols, pad) = c.modulate(&bits);
            prop_assert_eq!(pad, 0);
            prop_assert_eq!(c.demodulate_hard(&symbols), bits);
        }
    }

    // Zero-noise transparency through fading + perfect-CSI equalization.
    #[test]
    fn zero_noise_equalization_transparent(seed in 0u64..1_000_000) {
        let mut rng = rng_from_seed(seed);
        let x: Vec<Complex64> = (0..256)
            .map(|i| Complex64::new((i as f64 * 0.31).cos(), (i as f64 * 0.17).sin()))
            .collect();
        let h = sample_channel(ChannelKind::Rician, 1.0, 256, &mut rng).unwrap();
        let y = apply_channel(&x, &h, 0.0, &mut rng).unwrap();
        let eq = equalize(&y, &h).unwrap();
        for ((a, b), erased) in x.iter().zip(&eq.symbols).zip(&eq.erasures) {
            if !*erased && (a - b).norm() >= 1e-9 {
                prop_assert!(false, "error {}", (a - b).norm());
            }
        }
    }

    // Every LDPC codeword satisfies the parity checks; noiseless LLRs decode
    // back to the message.
    #[test]
    fn ldpc_codewords_valid_and_noiselessly_decodable(seed in 0u64..1_000_000) {
        use rand::Rng;
        let code = small_code();
        let mut rng = rng_from_seed(seed);
        let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        prop_assert!(code.h.syndrome_ok(&cw));
        let llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect();
        let (out, converged) = code.decode(&llrs);
        prop_assert!(converged);
        prop_assert_eq!(out, msg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    // MS-SSIM is symmetric, bounded, and exactly 1 on itself.
    #[test]
    fn ms_ssim_symmetry_and_bounds(seed in 0u64..1_000_000) {
        let a = vq_deepsc_core::io::synthetic_image(32, 32, seed);
        let b = vq_deepsc_core::io::synthetic_image(32, 32, seed.wrapping_add(1));
        let ab = vq_deepsc_core::eval::ms_ssim(&a, &b).unwrap();
        let ba = vq_deepsc_core::eval::ms_ssim(&b, &a).unwrap();
        prop_assert!((ab - ba).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(vq_deepsc_core::eval::ms_ssim(&a, &a).unwrap(), 1.0);
    }
}
