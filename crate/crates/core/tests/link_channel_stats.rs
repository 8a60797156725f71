//! Statistical link/channel properties: post-equalization noise whiteness,
//! BER monotonicity in SNR, and the blocklength ordering.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use vq_deepsc_core::channel::{apply_channel, equalize, snr_to_noise_variance, ChannelKind, FadingGranularity};
use vq_deepsc_core::link::{
    ira_construct, peg_construct, transmit_payload, AmcMode, Constellation, ConstellationKind,
    LdpcCode,
};
use vq_deepsc_core::rng::rng_from_seed;

#[test]
fn post_equalization_noise_variance_is_sigma2_over_h2() {
    // A few fixed coefficients, many noise draws each: the conditioned
    // empirical variance of x_hat - x must track sigma^2 / |h|^2.
    let mut rng = rng_from_seed(1);
    let sigma2 = 0.4;
    for h_val in [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.4, 0.6),
        Complex64::new(-1.2, 0.3),
    ] {
        let n = 200_000;
        let x = vec![Complex64::new(1.0, -0.5); n];
        let h = vec![h_val; n];
        let y = apply_channel(&x, &h, sigma2, &mut rng).unwrap();
        let eq = equalize(&y, &h).unwrap();
        let var = eq
            .symbols
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / n as f64;
        let expect = sigma2 / h_val.norm_sqr();
        assert!(
            (var - expect).abs() < 0.02 * expect,
            "h = {h_val}: measured {var:.5}, expected {expect:.5}"
        );
    }
}

fn ber_bpsk(code: Arc<LdpcCode>, snr_db: f64, info_bits: usize, seed: u64) -> f64 {
    let mode = AmcMode::new(
        "ber",
        code.clone(),
        Arc::new(Constellation::new(ConstellationKind::Bpsk)),
    );
    let nv = snr_to_noise_variance(snr_db, 1.0);
    let mut rng = rng_from_seed(seed);
    let padded = info_bits.div_ceil(code.k()) * code.k();
    let payload: Vec<u8> = (0..padded).map(|_| rng.random_range(0..2u8)).collect();
    let frame = transmit_payload(
        &payload,
        &mode,
        ChannelKind::Awgn,
        0.0,
        FadingGranularity::PerSymbol,
        nv,
        &mut rng,
    )
    .unwrap();
    frame
        .received_bits
        .iter()
        .zip(&payload)
        .filter(|(a, b)| a != b)
        .count() as f64
        / padded as f64
}

#[test]
fn post_decode_ber_is_monotone_in_snr() {
    // The short desk code has a wide measurable waterfall; BER over an
    // increasing symbol-SNR grid must never increase beyond 3 sigma.
    let code = Arc::new(LdpcCode::from_h(peg_construct(20, 10, 3), 50).unwrap());
    let n = 200_000usize;
    let bers: Vec<f64> = [-4.0, -2.0, 0.0, 2.0, 4.0]
        .iter()
        .enumerate()
        .map(|(i, &snr)| ber_bpsk(code.clone(), snr, n, 100 + i as u64))
        .collect();
    for w in bers.windows(2) {
        let sigma = ((w[0] * (1.0 - w[0]) + w[1] * (1.0 - w[1])) / n as f64).sqrt();
        assert!(
            w[1] <= w[0] + 3.0 * sigma,
            "BER increased along the sweep: {bers:?}"
        );
    }
    // And the sweep actually spans a decade.
    assert!(bers[0] > 10.0 * bers.last().unwrap().max(1e-6));
}

#[test]
fn blocklength_ordering_at_mid_snr() {
    // Per-information-bit SNR 2 dB (symbol SNR -1.01 dB for rate-1/2 BPSK):
    // the n=20 toy code sits far above its waterfall, n=648 in its
    // waterfall, and a 64800-class IRA construction decodes clean —
    // BER(20) >= BER(648) >= BER(64800-class).
    let snr_db = 2.0 + 10.0 * 0.5f64.log10();
    let n_bits = 200_000usize;
    let code20 = Arc::new(LdpcCode::from_h(peg_construct(20, 10, 3), 50).unwrap());
    let code648 = Arc::new(LdpcCode::from_h(peg_construct(648, 324, 3), 50).unwrap());
    let code_long = Arc::new(ira_construct(64_800, 1, 2, 42).unwrap());

    let p20 = ber_bpsk(code20, snr_db, n_bits, 7);
    let p648 = ber_bpsk(code648, snr_db, n_bits, 8);
    let p_long = ber_bpsk(code_long, snr_db, n_bits, 9);
    let sigma = |p: f64| (p.max(1e-9) * (1.0 - p) / n_bits as f64).sqrt();

    assert!(
        p648 + 3.0 * (sigma(p648).powi(2) + sigma(p20).powi(2)).sqrt() < p20,
        "BER(n=648) = {p648:.3e} not below BER(n=20) = {p20:.3e}"
    );
    assert!(
        p_long <= p648 + 3.0 * (sigma(p648).powi(2) + sigma(p_long).powi(2)).sqrt(),
        "BER(64800-class) = {p_long:.3e} above BER(n=648) = {p648:.3e}"
    );
    println!("BER @ Eb/N0 2 dB: n20 {p20:.3e}, n648 {p648:.3e}, n64800 {p_long:.3e}");
}
