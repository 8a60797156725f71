//! Stochastic physical channel and perfect-CSI equalization.
//!
//! The link model is `y = h ⊙ x + w` with i.i.d. complex Gaussian noise
//! `w ~ CN(0, σ_n²)` — σ_n² is the total complex noise power, split equally
//! between real and imaginary parts. Fading draws a fresh `h` per symbol
//! (or one per frame in block-fading mode); the AWGN channel fixes `h = 1`.

use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
    /// Rician with ratio `r` between line-of-sight and scattered power.
    Rician,
}

impl ChannelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Rician => "rician",
        }
    }
}

/// Per-symbol fading granularity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingGranularity {
    PerSymbol,
    /// One coefficient drawn per frame, repeated across its symbols.
    PerFrame,
}

fn complex_normal(rng: &mut ChaCha12Rng, mean: f64, variance: f64) -> Complex64 {
    // CN(mean, variance): each part N(mean_part, variance/2); the mean is
    // placed on the real axis.
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(mean + s * re, s * im)
}

/// Draws channel coefficients for `num_symbols` symbols.
///
/// * AWGN: `h = 1` exactly.
/// * Rayleigh: `h ~ CN(0, 1)`.
/// * Rician(r): `h ~ CN(μ, σ²)` with `μ = sqrt(r/(r+1))` (real-valued mean)
///   and `σ² = 1/(r+1)`; `r = 0` degenerates to Rayleigh.
pub fn sample_channel(
    kind: ChannelKind,
    rician_r: f64,
    num_symbols: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Complex64>> {
    match kind {
        ChannelKind::Awgn => Ok(vec![Complex64::new(1.0, 0.0); num_symbols]),
        ChannelKind::Rayleigh => Ok((0..num_symbols)
            .map(|_| complex_normal(rng, 0.0, 1.0))
            .collect()),
        ChannelKind::Rician => {
            if rician_r < 0.0 {
                return Err(Error::Config(format!(
                    "Rician ratio must be non-negative, got {rician_r}"
                )));
            }
            let mu = (rician_r / (rician_r + 1.0)).sqrt();
            let var = 1.0 / (rician_r + 1.0);
            Ok((0..num_symbols)
                .map(|_| complex_normal(rng, mu, var))
                .collect())
        }
    }
}

/// Block-fading variant: one draw repeated over the whole frame.
pub fn sample_channel_per_frame(
    kind: ChannelKind,
    rician_r: f64,
    num_symbols: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Complex64>> {
    let one = sample_channel(kind, rician_r, 1, rng)?;
    Ok(vec![one[0]; num_symbols])
}

/// `y_i = h_i · x_i + w_i`, `w ~ CN(0, σ_n²)` i.i.d. With `σ_n² = 0` the
/// output is exactly `h ⊙ x`.
pub fn apply_channel(
    x: &[Complex64],
    h: &[Complex64],
    noise_variance: f64,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<Complex64>> {
    if x.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "symbols {} vs coefficients {}",
            x.len(),
            h.len()
        )));
    }
    if noise_variance == 0.0 {
        return Ok(x.iter().zip(h).map(|(xi, hi)| hi * xi).collect());
    }
    Ok(x.iter()
        .zip(h)
        .map(|(xi, hi)| hi * xi + complex_normal(rng, 0.0, noise_variance))
        .collect())
}

/// Result of perfect-CSI equalization. Symbols with `|h| < 1e-12` are marked
/// as erasures (their value is zeroed; downstream soft demapping emits LLR 0).
#[derive(Debug, Clone)]
pub struct Equalized {
    pub symbols: Vec<Complex64>,
    pub erasures: Vec<bool>,
}

const ERASURE_THRESHOLD: f64 = 1e-12;

/// Perfect-CSI equalization: `x̂_i = h_i^H · y_i / |h_i|²`.
pub fn equalize(y: &[Complex64], h: &[Complex64]) -> Result<Equalized> {
    if y.len() != h.len() {
        return Err(Error::DimensionMismatch(format!(
            "received {} vs coefficients {}",
            y.len(),
            h.len()
        )));
    }
    let mut symbols = Vec::with_capacity(y.len());
    let mut erasures = vec![false; y.len()];
    for (i, (yi, hi)) in y.iter().zip(h).enumerate() {
        let mag2 = hi.norm_sqr();
        if mag2 < ERASURE_THRESHOLD {
            symbols.push(Complex64::new(0.0, 0.0));
            erasures[i] = true;
        } else {
            symbols.push(hi.conj() * yi / mag2);
        }
    }
    Ok(Equalized { symbols, erasures })
}

/// Post-equalization effective noise variance per symbol: `σ_n² / |h_i|²`
/// (erased symbols get `f64::INFINITY`).
pub fn post_equalization_noise(h: &[Complex64], noise_variance: f64) -> Vec<f64> {
    h.iter()
        .map(|hi| {
            let m = hi.norm_sqr();
            if m < ERASURE_THRESHOLD {
                f64::INFINITY
            } else {
                noise_variance / m
            }
        })
        .collect()
}

/// `σ_n² = signal_power / 10^(snr_db / 10)`.
pub fn snr_to_noise_variance(snr_db: f64, signal_power: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn snr_mapping_matches_hand_values() {
        assert!((snr_to_noise_variance(0.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((snr_to_noise_variance(10.0, 1.0) - 0.1).abs() < 1e-15);
        assert!((snr_to_noise_variance(20.0, 1.0) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn awgn_coefficients_are_unity() {
        let mut rng = rng_from_seed(1);
        let h = sample_channel(ChannelKind::Awgn, 0.0, 8, &mut rng).unwrap();
        assert!(h.iter().all(|c| *c == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn rician_parameters_from_ratio() {
        // r = 1 -> mu = sqrt(1/2), sigma^2 = 1/2; checked on sample stats.
        let mut rng = rng_from_seed(2);
        let n = 200_000;
        let h = sample_channel(ChannelKind::Rician, 1.0, n, &mut rng).unwrap();
        let mean_re = h.iter().map(|c| c.re).sum::<f64>() / n as f64;
        let mean_im = h.iter().map(|c| c.im).sum::<f64>() / n as f64;
        assert!((mean_re - (0.5f64).sqrt()).abs() < 5e-3);
        assert!(mean_im.abs() < 5e-3);
    }

    #[test]
    fn rician_r0_is_rayleigh() {
        let mut rng = rng_from_seed(3);
        let n = 200_000;
        let h = sample_channel(ChannelKind::Rician, 0.0, n, &mut rng).unwrap();
        let mean_re = h.iter().map(|c| c.re).sum::<f64>() / n as f64;
        let power = h.iter().map(|c| c.norm_sqr()).sum::<f64>() / n as f64;
        assert!(mean_re.abs() < 5e-3);
        assert!((power - 1.0).abs() < 1e-2);
    }

    #[test]
    fn negative_rician_ratio_rejected() {
        let mut rng = rng_from_seed(4);
        assert!(sample_channel(ChannelKind::Rician, -0.5, 1, &mut rng).is_err());
    }

    #[test]
    fn zero_noise_identity_channel() {
        let mut rng = rng_from_seed(5);
        let x: Vec<Complex64> = (0..64)
            .map(|i| Complex64::new((i as f64).cos(), (i as f64).sin()))
            .collect();
        let h = vec![Complex64::new(1.0, 0.0); 64];
        let y = apply_channel(&x, &h, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn equalize_hand_case() {
        // h = j, x = 1, w = 0: y = j, x_hat = (-j)(j)/1 = 1.
        let y = vec![Complex64::new(0.0, 1.0)];
        let h = vec![Complex64::new(0.0, 1.0)];
        let eq = equalize(&y, &h).unwrap();
        assert!((eq.symbols[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        assert!(!eq.erasures[0]);
    }

    #[test]
    fn equalize_awgn_is_identity() {
        let y = vec![Complex64::new(0.3, -0.7)];
        let h = vec![Complex64::new(1.0, 0.0)];
        let eq = equalize(&y, &h).unwrap();
        assert_eq!(eq.symbols[0], y[0]);
    }

    #[test]
    fn zero_noise_equalization_recovers_exactly() {
        let mut rng = rng_from_seed(6);
        let x: Vec<Complex64> = (0..1000)
            .map(|i| Complex64::new((i as f64 * 0.37).cos(), (i as f64 * 0.11).sin()))
            .collect();
        let h = sample_channel(ChannelKind::Rayleigh, 0.0, 1000, &mut rng).unwrap();
        let y = apply_channel(&x, &h, 0.0, &mut rng).unwrap();
        let eq = equalize(&y, &h).unwrap();
        let max_err = x
            .iter()
            .zip(&eq.symbols)
            .filter(|(_, s)| s.norm() > 0.0)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(max_err < 1e-9, "max error {max_err}");
    }

    #[test]
    fn tiny_coefficients_become_erasures() {
        let y = vec![Complex64::new(1.0, 0.0)];
        let h = vec![Complex64::new(1e-13, 0.0)];
        let eq = equalize(&y, &h).unwrap();
        assert!(eq.erasures[0]);
        assert_eq!(eq.symbols[0], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn seeded_streams_replay_bit_exactly() {
        let draw = || {
            let mut rng = rng_from_seed(42);
            let h = sample_channel(ChannelKind::Rician, 1.0, 32, &mut rng).unwrap();
            let x = vec![Complex64::new(1.0, 0.0); 32];
            let y = apply_channel(&x, &h, 0.25, &mut rng).unwrap();
            (h, y)
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn empirical_snr_close_to_configured() {
        let mut rng = rng_from_seed(7);
        let n = 100_000;
        let x = vec![Complex64::new(1.0, 0.0); n];
        let h = vec![Complex64::new(1.0, 0.0); n];
        for snr_db in [0.0, 10.0] {
            let nv = snr_to_noise_variance(snr_db, 1.0);
            let y = apply_channel(&x, &h, nv, &mut rng).unwrap();
            let noise_power = y
                .iter()
                .zip(&x)
                .map(|(yi, xi)| (yi - xi).norm_sqr())
                .sum::<f64>()
                / n as f64;
            let measured_db = 10.0 * (1.0 / noise_power).log10();
            assert!(
                (measured_db - snr_db).abs() < 0.1,
                "configured {snr_db} dB, measured {measured_db} dB"
            );
        }
    }

    #[test]
    fn per_frame_fading_repeats_one_draw() {
        let mut rng = rng_from_seed(8);
        let h = sample_channel_per_frame(ChannelKind::Rayleigh, 0.0, 16, &mut rng).unwrap();
        assert!(h.windows(2).all(|w| w[0] == w[1]));
    }
}
