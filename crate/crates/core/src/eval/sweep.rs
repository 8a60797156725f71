//! End-to-end SNR sweeps: encode → quantize → bits → LDPC → modulate →
//! channel → equalize → soft demap → LDPC decode → indices → dequantize →
//! decode, aggregated into MS-SSIM / index-error-rate / BER curve points.

use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{snr_to_noise_variance, ChannelKind, FadingGranularity};
use crate::eval::ms_ssim::ms_ssim;
use crate::exec;
use crate::link::{bits_to_indices, indices_to_bits, transmit_payload, AmcMode, AmcTable};
use crate::model::Model;
use crate::nn::Tensor;
use crate::rng::{derive_seed_indexed, rng_from_seed};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub snr_grid_db: Vec<f64>,
    pub channel: ChannelKind,
    #[serde(default = "default_rician_r")]
    pub rician_r: f64,
    #[serde(default = "default_granularity")]
    pub granularity: FadingGranularity,
    pub trials_per_point: usize,
    pub seed: u64,
}

fn default_rician_r() -> f64 {
    1.0
}

fn default_granularity() -> FadingGranularity {
    FadingGranularity::PerSymbol
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.snr_grid_db.is_empty() {
            return Err(Error::Config("SNR grid is empty".into()));
        }
        if !self.snr_grid_db.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("SNR grid must be strictly increasing".into()));
        }
        if self.trials_per_point == 0 {
            return Err(Error::Config("trials_per_point must be at least 1".into()));
        }
        Ok(())
    }
}

/// One aggregated point of a sweep curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub snr_db: f64,
    pub ms_ssim_mean: f64,
    pub ms_ssim_std: f64,
    /// Fraction of indices decoded differently from those sent.
    pub index_error_rate: f64,
    /// Post-LDPC-decode bit error rate over the index payload bits.
    pub post_decode_ber: f64,
    /// Complex symbols per image, including block and symbol padding.
    pub symbols_per_image: usize,
}

/// Outcome of pushing one image through the full digital pipeline.
#[derive(Debug, Clone)]
pub struct ImageTrial {
    pub reconstruction: Tensor,
    pub index_errors: usize,
    pub total_indices: usize,
    pub bit_errors: usize,
    pub total_bits: usize,
    pub symbols: usize,
}

/// Transmits a single `[1, 3, H, W]` image over one AMC mode and channel
/// realization at total noise variance `noise_variance`.
pub fn transmit_image(
    model: &Model,
    image: &Tensor,
    mode: &AmcMode,
    channel: ChannelKind,
    rician_r: f64,
    granularity: FadingGranularity,
    noise_variance: f64,
    rng: &mut ChaCha12Rng,
) -> Result<ImageTrial> {
    let (_, _, h, w) = image.dims4();
    let pyramid = model.encode(image)?;
    let sent = model.quantize_image(&pyramid, 0)?;
    let sizes = model.transmitted_codebook_sizes();
    let payload = indices_to_bits(&sent, &sizes)?;

    let frame = transmit_payload(
        &payload.bits,
        mode,
        channel,
        rician_r,
        granularity,
        noise_variance,
        rng,
    )?;
    let bit_errors = payload
        .bits
        .iter()
        .zip(&frame.received_bits)
        .filter(|(a, b)| a != b)
        .count();

    let decoded = bits_to_indices(&frame.received_bits, &payload.layout)?;
    let mut index_errors = 0;
    let mut total_indices = 0;
    for (tx, rx) in sent.iter().zip(&decoded.streams) {
        total_indices += tx.indices.len();
        index_errors += tx
            .indices
            .iter()
            .zip(&rx.indices)
            .filter(|(a, b)| a != b)
            .count();
    }
    let reconstruction = model.reconstruct_from_indices(&decoded.streams, h, w)?;
    Ok(ImageTrial {
        reconstruction,
        index_errors,
        total_indices,
        bit_errors,
        total_bits: payload.bits.len(),
        symbols: frame.num_symbols,
    })
}

/// Pure-reconstruction MS-SSIM of each image (the link bypassed entirely);
/// the plateau that a clean digital chain must reproduce exactly.
pub fn noiseless_reference(model: &Model, images: &[Tensor]) -> Result<Vec<f64>> {
    images
        .iter()
        .map(|img| {
            let recon = model.reconstruct_noiseless(img)?;
            ms_ssim(img, &recon)
        })
        .collect()
}

/// Runs the sweep: for every SNR point, `trials_per_point` independent
/// trials cycling over `images`, each with its own derived RNG stream.
/// Deterministic for a fixed spec seed.
pub fn run_sweep(
    model: &Model,
    spec: &SweepSpec,
    amc: &AmcTable,
    images: &[Tensor],
) -> Result<Vec<CurvePoint>> {
    spec.validate()?;
    if images.is_empty() {
        return Err(Error::Dataset("sweep needs at least one image".into()));
    }
    // Fail on AMC gaps up front so a long sweep cannot die halfway.
    for &snr in &spec.snr_grid_db {
        amc.lookup(snr)?;
    }

    let mut points = Vec::with_capacity(spec.snr_grid_db.len());
    for (si, &snr_db) in spec.snr_grid_db.iter().enumerate() {
        let mode = amc.lookup(snr_db)?;
        let noise_variance = snr_to_noise_variance(snr_db, 1.0);
        let trials: Vec<Result<(f64, ImageTrial)>> =
            exec::map_collect(spec.trials_per_point, |t| {
                let image = &images[t % images.len()];
                let mut rng = rng_from_seed(derive_seed_indexed(
                    spec.seed,
                    "sweep-trial",
                    (si * 1_000_003 + t) as u64,
                ));
                let trial = transmit_image(
                    model,
                    image,
                    mode,
                    spec.channel,
                    spec.rician_r,
                    spec.granularity,
                    noise_variance,
                    &mut rng,
                )?;
                let score = ms_ssim(image, &trial.reconstruction)?;
                Ok((score, trial))
            });

        let mut scores = Vec::with_capacity(trials.len());
        let mut index_errors = 0usize;
        let mut total_indices = 0usize;
        let mut bit_errors = 0usize;
        let mut total_bits = 0usize;
        let mut symbols = 0usize;
        for t in trials {
            let (score, trial) = t?;
            scores.push(score);
            index_errors += trial.index_errors;
            total_indices += trial.total_indices;
            bit_errors += trial.bit_errors;
            total_bits += trial.total_bits;
            symbols = trial.symbols;
        }
        let mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let std = if scores.len() > 1 {
            (scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>()
                / (scores.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        points.push(CurvePoint {
            snr_db,
            ms_ssim_mean: mean,
            ms_ssim_std: std,
            index_error_rate: index_errors as f64 / total_indices.max(1) as f64,
            post_decode_ber: bit_errors as f64 / total_bits.max(1) as f64,
            symbols_per_image: symbols,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::CodecConfig;
    use crate::link::{peg_construct, Constellation, ConstellationKind, LdpcCode};
    use crate::model::{LevelSpec, ModelSpec, OperatingMode};
    use rand::Rng;
    use std::sync::Arc;

    fn tiny_model() -> Model {
        Model::init(
            ModelSpec {
                codec: CodecConfig {
                    num_levels: 2,
                    base_channels: 4,
                    level_channels: vec![4, 6],
                    kernel_size: 3,
                    downsample_stride: 2,
                },
                levels: vec![
                    LevelSpec {
                        codebook_size: 4,
                        transmit: true,
                        bypass_channels: None,
                    },
                    LevelSpec {
                        codebook_size: 3,
                        transmit: true,
                        bypass_channels: None,
                    },
                ],
                mode: OperatingMode::Vq,
            },
            21,
        )
        .unwrap()
    }

    fn amc() -> AmcTable {
        let code = LdpcCode::from_h(peg_construct(20, 10, 3), 50).unwrap();
        AmcTable::single(AmcMode::new(
            "n20-bpsk",
            Arc::new(code),
            Arc::new(Constellation::new(ConstellationKind::Bpsk)),
        ))
    }

    fn images(count: usize, hw: usize) -> Vec<Tensor> {
        (0..count)
            .map(|i| {
                let mut rng = crate::rng::rng_from_seed(100 + i as u64);
                Tensor::new(
                    vec![1, 3, hw, hw],
                    (0..3 * hw * hw).map(|_| rng.random_range(0.0..1.0)).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn noiseless_point_equals_pure_reconstruction() {
        let model = tiny_model();
        let imgs = images(1, 16);
        let mut rng = crate::rng::rng_from_seed(1);
        let mode_table = amc();
        let mode = mode_table.lookup(0.0).unwrap();
        let trial = transmit_image(
            &model,
            &imgs[0],
            mode,
            ChannelKind::Awgn,
            0.0,
            FadingGranularity::PerSymbol,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(trial.index_errors, 0);
        assert_eq!(trial.bit_errors, 0);
        let direct = model.reconstruct_noiseless(&imgs[0]).unwrap();
        assert_eq!(trial.reconstruction.data(), direct.data());
    }

    #[test]
    fn sweep_is_deterministic_under_fixed_seed() {
        let model = tiny_model();
        let imgs = images(2, 16);
        let spec = SweepSpec {
            snr_grid_db: vec![0.0, 6.0],
            channel: ChannelKind::Awgn,
            rician_r: 1.0,
            granularity: FadingGranularity::PerSymbol,
            trials_per_point: 3,
            seed: 9,
        };
        let a = run_sweep(&model, &spec, &amc(), &imgs).unwrap();
        let b = run_sweep(&model, &spec, &amc(), &imgs).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_or_unsorted_grids_are_rejected() {
        let spec = SweepSpec {
            snr_grid_db: vec![],
            channel: ChannelKind::Awgn,
            rician_r: 1.0,
            granularity: FadingGranularity::PerSymbol,
            trials_per_point: 1,
            seed: 0,
        };
        assert!(spec.validate().is_err());
        let spec2 = SweepSpec {
            snr_grid_db: vec![5.0, 5.0],
            ..spec
        };
        assert!(spec2.validate().is_err());
    }

    #[test]
    fn sweep_runs_over_fading_channels() {
        let model = tiny_model();
        let imgs = images(1, 16);
        for (kind, r) in [(ChannelKind::Rayleigh, 0.0), (ChannelKind::Rician, 1.0)] {
            let spec = SweepSpec {
                snr_grid_db: vec![5.0, 25.0],
                channel: kind,
                rician_r: r,
                granularity: FadingGranularity::PerSymbol,
                trials_per_point: 2,
                seed: 31,
            };
            let pts = run_sweep(&model, &spec, &amc(), &imgs).unwrap();
            assert_eq!(pts.len(), 2);
            for p in &pts {
                assert!((0.0..=1.0).contains(&p.ms_ssim_mean), "{kind:?}");
                assert!((0.0..=1.0).contains(&p.index_error_rate));
                assert!((0.0..=1.0).contains(&p.post_decode_ber));
            }
            // Deep fades cost errors at low SNR; 25 dB should be cleaner.
            assert!(pts[1].post_decode_ber <= pts[0].post_decode_ber, "{kind:?}");
        }
    }

    #[test]
    fn trial_accounting_is_consistent() {
        let model = tiny_model();
        let imgs = images(1, 16);
        let mut rng = crate::rng::rng_from_seed(2);
        let table = amc();
        let mode = table.lookup(0.0).unwrap();
        let trial = transmit_image(
            &model,
            &imgs[0],
            mode,
            ChannelKind::Awgn,
            0.0,
            FadingGranularity::PerSymbol,
            0.3,
            &mut rng,
        )
        .unwrap();
        // 8x8 level (2 bits) + 4x4 level (2 bits) on a 16x16 image.
        assert_eq!(trial.total_bits, 64 * 2 + 16 * 2);
        assert_eq!(trial.total_indices, 64 + 16);
        // Info bits per the model spec agree.
        assert_eq!(trial.total_bits, model.spec.info_bits(16, 16));
        // Symbols: ceil(160/10)=16 blocks of n=20 -> 320 coded bits (BPSK).
        assert_eq!(trial.symbols, 320);
    }
}
