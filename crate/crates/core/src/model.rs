//! The transceiver model: codec parameters, per-level embedding spaces,
//! transmit masks, and the optional analog-bypass projections.

use serde::{Deserialize, Serialize};

use crate::codec::{self, CodecConfig, FeaturePyramid};
use crate::codec::register_codec_params;
use crate::nn::{codebook_init, ParamSet, Tensor};
use crate::rng::stream_rng;
use crate::vq::{self, EmbeddingSpace, IndexStream};
use crate::{Error, Result};

/// How features cross the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OperatingMode {
    /// Vector quantization + the digital chain (the main system).
    #[default]
    Vq,
    /// Analog feature transmission through per-level 1×1 projections
    /// (the UNet-DeepJSCC ablation).
    AnalogBypass,
}

/// Per-level quantizer/transport settings, parallel to
/// `CodecConfig::level_channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSpec {
    /// Codebook size N_l. Ignored (no codebook registered) when the level is
    /// not transmitted.
    pub codebook_size: usize,
    pub transmit: bool,
    /// Analog-bypass projection width; defaults to ceil(K_l / 8).
    pub bypass_channels: Option<usize>,
}

/// Everything needed to rebuild the parameter set deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub codec: CodecConfig,
    pub levels: Vec<LevelSpec>,
    #[serde(default)]
    pub mode: OperatingMode,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        if self.levels.len() != self.codec.num_levels {
            return Err(Error::Config(format!(
                "{} level specs for {} codec levels",
                self.levels.len(),
                self.codec.num_levels
            )));
        }
        for (i, l) in self.levels.iter().enumerate() {
            if l.transmit && l.codebook_size == 0 {
                return Err(Error::Config(format!(
                    "level {}: transmitted level needs a non-empty codebook",
                    i + 1
                )));
            }
        }
        if self.mode == OperatingMode::Vq && !self.levels.iter().any(|l| l.transmit) {
            return Err(Error::Config("no level is transmitted".into()));
        }
        Ok(())
    }

    pub fn transmitted_levels(&self) -> impl Iterator<Item = usize> + '_ {
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.transmit)
            .map(|(i, _)| i + 1)
    }

    pub fn bypass_width(&self, level: usize) -> usize {
        self.levels[level - 1]
            .bypass_channels
            .unwrap_or_else(|| self.codec.level_channels[level - 1].div_ceil(8))
    }

    /// Information bits one image contributes, pre channel coding:
    /// `Σ_l transmitted ⋅ M_l ⋅ ceil(log2 N_l)`.
    pub fn info_bits(&self, height: usize, width: usize) -> usize {
        self.transmitted_levels()
            .map(|l| {
                self.codec.level_positions(height, width, l)
                    * vq::bits_for(self.levels[l - 1].codebook_size)
            })
            .sum()
    }
}

/// A live model: the spec plus its parameter set (codec weights, codebooks,
/// batch-norm statistics, bypass projections).
#[derive(Debug, Clone)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
    /// Seed the parameters were initialized from (recorded in checkpoints).
    pub init_seed: u64,
}

impl Model {
    /// Deterministic initialization from a seed: codec weights, then one
    /// codebook per transmitted level (uniform on [-1/N, 1/N]), then bypass
    /// projections when in bypass mode.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut params = ParamSet::new();
        let mut rng = stream_rng(seed, "model-init");
        register_codec_params(&mut params, &spec.codec, &mut rng);
        for l in 1..=spec.codec.num_levels {
            if !spec.levels[l - 1].transmit {
                continue;
            }
            let n = spec.levels[l - 1].codebook_size;
            let k = spec.codec.level_channels[l - 1];
            params.insert(
                &EmbeddingSpace::param_name(l),
                codebook_init(n, k, &mut rng),
                true,
            );
        }
        if spec.mode == OperatingMode::AnalogBypass {
            for l in 1..=spec.codec.num_levels {
                let k = spec.codec.level_channels[l - 1];
                let c = spec.bypass_width(l);
                crate::nn::register_conv(&mut params, &format!("bypass.tx{l}"), k, c, 1, &mut rng);
                crate::nn::register_conv(&mut params, &format!("bypass.rx{l}"), c, k, 1, &mut rng);
            }
        }
        Ok(Self {
            spec,
            params,
            init_seed: seed,
        })
    }

    pub fn embedding_space(&self, level: usize) -> Result<EmbeddingSpace> {
        let name = EmbeddingSpace::param_name(level);
        if !self.params.contains(&name) {
            return Err(Error::Config(format!(
                "level {level} has no embedding space (untransmitted level)"
            )));
        }
        EmbeddingSpace::new(level, self.params.value(&name).clone())
    }

    /// Codebook sizes of transmitted levels, ascending by level.
    pub fn transmitted_codebook_sizes(&self) -> Vec<usize> {
        self.spec
            .transmitted_levels()
            .map(|l| self.spec.levels[l - 1].codebook_size)
            .collect()
    }

    pub fn encode(&self, batch: &Tensor) -> Result<FeaturePyramid> {
        codec::encode(&self.params, &self.spec.codec, batch)
    }

    pub fn decode(&self, pyramid: &FeaturePyramid) -> Result<Tensor> {
        codec::decode(&self.params, &self.spec.codec, pyramid)
    }

    /// Quantizes one image's transmitted levels, ascending by level.
    pub fn quantize_image(
        &self,
        pyramid: &FeaturePyramid,
        image_in_batch: usize,
    ) -> Result<Vec<IndexStream>> {
        let mut streams = Vec::new();
        for l in self.spec.transmitted_levels() {
            let rows = FeaturePyramid::spatial_to_rows(&pyramid.levels[l - 1], image_in_batch);
            let space = self.embedding_space(l)?;
            streams.push(vq::quantize(&rows, &space)?);
        }
        Ok(streams)
    }

    /// Rebuilds one image's received pyramid from decoded index streams
    /// (transmitted levels, ascending) and zero-fills untransmitted levels,
    /// then decodes to an image.
    pub fn reconstruct_from_indices(
        &self,
        streams: &[IndexStream],
        height: usize,
        width: usize,
    ) -> Result<Tensor> {
        let cfg = &self.spec.codec;
        let mut it = streams.iter();
        let mut levels = Vec::with_capacity(cfg.num_levels);
        for l in 1..=cfg.num_levels {
            let (lh, lw) = cfg.level_dims(height, width, l);
            let k = cfg.level_channels[l - 1];
            if self.spec.levels[l - 1].transmit {
                let stream = it.next().ok_or_else(|| {
                    Error::DimensionMismatch(format!("missing index stream for level {l}"))
                })?;
                if stream.indices.len() != lh * lw {
                    return Err(Error::DimensionMismatch(format!(
                        "level {l}: {} indices for {lh}x{lw} positions",
                        stream.indices.len()
                    )));
                }
                let rows = vq::dequantize(stream, &self.embedding_space(l)?)?;
                levels.push(FeaturePyramid::rows_to_spatial(&rows, lh, lw));
            } else {
                levels.push(Tensor::zeros(&[1, k, lh, lw]));
            }
        }
        self.decode(&FeaturePyramid { levels })
    }

    /// The full noiseless VQ round trip for one image batch entry:
    /// encode → quantize → dequantize → decode. What training optimizes.
    pub fn reconstruct_noiseless(&self, image: &Tensor) -> Result<Tensor> {
        let (n, _, h, w) = image.dims4();
        if n != 1 {
            return Err(Error::DimensionMismatch(
                "reconstruct_noiseless takes a single-image batch".into(),
            ));
        }
        let pyr = self.encode(image)?;
        let streams = self.quantize_image(&pyr, 0)?;
        self.reconstruct_from_indices(&streams, h, w)
    }
}
