//! The semantic encoder/decoder pair.
//!
//! The encoder is a stem convolution followed by `L` down-sample blocks
//! (residual block → strided conv → residual block → batch norm → PReLU →
//! conv); the output of every down-sample block is one pyramid level, so
//! level `l` lives at spatial size `(H/2^l, W/2^l)` with `K_l` channels —
//! `K_l` equals the paired codebook dimension so quantization acts directly
//! on per-position channel vectors.
//!
//! The decoder fuses the received pyramid top-down: a stem convolution on the
//! deepest level, then `L` up-sample blocks (residual block → nearest ×2
//! up-sample → conv → batch norm → PReLU), concatenating the running tensor
//! channel-wise with the received level at each shallower scale, and a final
//! transposed convolution back to `H×W×3` clamped to `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::nn::{
    register_bn, register_conv, register_conv_t, register_prelu, Forward, NodeId, ParamSet,
    Tensor,
};
use crate::{Error, Result};

/// Architecture of the codec. `level_channels[l-1]` is the channel width of
/// pyramid level `l` and must equal the dimension `K_l` of the paired
/// embedding space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodecConfig {
    pub num_levels: usize,
    pub base_channels: usize,
    pub level_channels: Vec<usize>,
    #[serde(default = "default_kernel")]
    pub kernel_size: usize,
    #[serde(default = "default_stride")]
    pub downsample_stride: usize,
}

fn default_kernel() -> usize {
    3
}

fn default_stride() -> usize {
    2
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels == 0 {
            return Err(Error::Config("num_levels must be at least 1".into()));
        }
        if self.level_channels.len() != self.num_levels {
            return Err(Error::Config(format!(
                "level_channels has {} entries, expected {}",
                self.level_channels.len(),
                self.num_levels
            )));
        }
        if self.level_channels.iter().any(|&c| c == 0) || self.base_channels == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.downsample_stride < 2 {
            return Err(Error::Config("downsample_stride must be at least 2".into()));
        }
        if self.kernel_size < self.downsample_stride || self.kernel_size % 2 == 0 {
            return Err(Error::Config(
                "kernel_size must be odd and at least the stride".into(),
            ));
        }
        Ok(())
    }

    /// Total spatial reduction factor at the deepest level.
    pub fn total_reduction(&self) -> usize {
        self.downsample_stride.pow(self.num_levels as u32)
    }

    /// Spatial size of level `l` (1-based) for an `(h, w)` input.
    pub fn level_dims(&self, h: usize, w: usize, level: usize) -> (usize, usize) {
        let f = self.downsample_stride.pow(level as u32);
        (h / f, w / f)
    }

    /// Positions (feature rows) of level `l` for an `(h, w)` input.
    pub fn level_positions(&self, h: usize, w: usize, level: usize) -> usize {
        let (lh, lw) = self.level_dims(h, w, level);
        lh * lw
    }

    fn check_input_dims(&self, h: usize, w: usize) -> Result<()> {
        let f = self.total_reduction();
        if h == 0 || w == 0 || h % f != 0 || w % f != 0 {
            return Err(Error::DimensionMismatch(format!(
                "image {h}x{w} not divisible by {f} (stride^levels)"
            )));
        }
        Ok(())
    }
}

/// Registers all encoder/decoder parameters for `cfg` on `ps`, in a fixed
/// deterministic order. Channel widths: the stem maps 3 -> base, down block
/// `l` maps K_{l-1} -> K_l (with K_0 = base).
pub fn register_codec_params(
    ps: &mut ParamSet,
    cfg: &CodecConfig,
    rng: &mut rand_chacha::ChaCha12Rng,
) {
    let k = cfg.kernel_size;
    let widths = level_widths(cfg);

    register_conv(ps, "enc.stem.conv", 3, cfg.base_channels, k, rng);
    register_prelu(ps, "enc.stem.prelu", cfg.base_channels);
    for l in 1..=cfg.num_levels {
        let (cin, cout) = (widths[l - 1], widths[l]);
        let p = format!("enc.down{l}");
        register_residual(ps, &format!("{p}.res1"), cin, k, rng);
        register_conv(ps, &format!("{p}.down"), cin, cout, k, rng);
        register_residual(ps, &format!("{p}.res2"), cout, k, rng);
        register_bn(ps, &format!("{p}.bn"), cout);
        register_prelu(ps, &format!("{p}.prelu"), cout);
        register_conv(ps, &format!("{p}.out"), cout, cout, k, rng);
    }

    let k_deep = widths[cfg.num_levels];
    register_conv(ps, "dec.stem.conv", k_deep, k_deep, k, rng);
    register_prelu(ps, "dec.stem.prelu", k_deep);
    for l in (1..=cfg.num_levels).rev() {
        let cin = if l == cfg.num_levels {
            widths[l]
        } else {
            2 * widths[l]
        };
        let cout = widths[l - 1];
        let p = format!("dec.up{l}");
        register_residual(ps, &format!("{p}.res"), cin, k, rng);
        register_conv(ps, &format!("{p}.conv"), cin, cout, k, rng);
        register_bn(ps, &format!("{p}.bn"), cout);
        register_prelu(ps, &format!("{p}.prelu"), cout);
    }
    // Output layer starts at mid-range so the [0,1] clamp passes gradients.
    register_conv_t(ps, "dec.out.convt", cfg.base_channels, 3, k, 0.5, rng);
}

fn register_residual(
    ps: &mut ParamSet,
    prefix: &str,
    channels: usize,
    k: usize,
    rng: &mut rand_chacha::ChaCha12Rng,
) {
    register_conv(ps, &format!("{prefix}.conv1"), channels, channels, k, rng);
    register_bn(ps, &format!("{prefix}.bn"), channels);
    register_prelu(ps, &format!("{prefix}.prelu"), channels);
    register_conv(ps, &format!("{prefix}.conv2"), channels, channels, k, rng);
}

/// `[K_0 = base, K_1, ..., K_L]`.
fn level_widths(cfg: &CodecConfig) -> Vec<usize> {
    let mut w = Vec::with_capacity(cfg.num_levels + 1);
    w.push(cfg.base_channels);
    w.extend_from_slice(&cfg.level_channels);
    w
}

/// `x + conv2(PReLU(BN(conv1(x))))`; preserves shape and channels.
pub fn residual_block(fwd: &mut Forward, x: NodeId, prefix: &str) -> NodeId {
    let pad = fwd.params.value(&format!("{prefix}.conv1.w")).shape()[2] / 2;
    let y = fwd.conv(x, &format!("{prefix}.conv1"), 1, pad);
    let y = fwd.batch_norm(y, &format!("{prefix}.bn"));
    let y = fwd.prelu(y, &format!("{prefix}.prelu"));
    let y = fwd.conv(y, &format!("{prefix}.conv2"), 1, pad);
    fwd.graph.add(x, y)
}

/// Encoder graph: image node `[N, 3, H, W]` -> `L` pyramid level nodes.
pub fn encoder_graph(fwd: &mut Forward, cfg: &CodecConfig, image: NodeId) -> Vec<NodeId> {
    let k = cfg.kernel_size;
    let pad = k / 2;
    let s = cfg.downsample_stride;

    let mut x = fwd.conv(image, "enc.stem.conv", 1, pad);
    x = fwd.prelu(x, "enc.stem.prelu");
    let mut levels = Vec::with_capacity(cfg.num_levels);
    for l in 1..=cfg.num_levels {
        let p = format!("enc.down{l}");
        x = residual_block(fwd, x, &format!("{p}.res1"));
        x = fwd.conv(x, &format!("{p}.down"), s, pad);
        x = residual_block(fwd, x, &format!("{p}.res2"));
        x = fwd.batch_norm(x, &format!("{p}.bn"));
        x = fwd.prelu(x, &format!("{p}.prelu"));
        x = fwd.conv(x, &format!("{p}.out"), 1, pad);
        levels.push(x);
    }
    levels
}

/// Decoder graph: `L` received pyramid level nodes -> image node
/// `[N, 3, H, W]` clamped to `[0, 1]`. Fusion is top-down: the running
/// tensor starts at the deepest level and is concatenated with the received
/// level at every shallower scale.
pub fn decoder_graph(fwd: &mut Forward, cfg: &CodecConfig, pyramid: &[NodeId]) -> NodeId {
    assert_eq!(pyramid.len(), cfg.num_levels, "pyramid level count");
    let k = cfg.kernel_size;
    let pad = k / 2;
    let s = cfg.downsample_stride;

    let mut x = fwd.conv(pyramid[cfg.num_levels - 1], "dec.stem.conv", 1, pad);
    x = fwd.prelu(x, "dec.stem.prelu");
    for l in (1..=cfg.num_levels).rev() {
        let p = format!("dec.up{l}");
        x = residual_block(fwd, x, &format!("{p}.res"));
        x = fwd.graph.upsample_nearest(x, s);
        x = fwd.conv(x, &format!("{p}.conv"), 1, pad);
        x = fwd.batch_norm(x, &format!("{p}.bn"));
        x = fwd.prelu(x, &format!("{p}.prelu"));
        if l > 1 {
            x = fwd.graph.concat_channels(&[x, pyramid[l - 2]]);
        }
    }
    let out = fwd.conv_t(x, "dec.out.convt", 1, pad);
    fwd.graph.clamp01(out)
}

/// Multi-scale features of a batch, one tensor per level, eager values.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    /// The `[M, K]` row-matrix view of one image's level: position `(y, x)`
    /// becomes row `y * w + x`, channels become the K columns. The reshape is
    /// lossless; [`rows_to_spatial`] inverts it exactly.
    pub fn spatial_to_rows(level: &Tensor, image_in_batch: usize) -> Tensor {
        let (n, c, h, w) = level.dims4();
        assert!(image_in_batch < n);
        let src = level.data();
        let mut out = vec![0.0; h * w * c];
        for ci in 0..c {
            let base = (image_in_batch * c + ci) * h * w;
            for pos in 0..h * w {
                out[pos * c + ci] = src[base + pos];
            }
        }
        Tensor::new(vec![h * w, c], out)
    }

    /// Inverse of [`spatial_to_rows`] for a single image: `[M, K]` back to
    /// `[1, K, h, w]`.
    pub fn rows_to_spatial(rows: &Tensor, h: usize, w: usize) -> Tensor {
        let (m, c) = rows.dims2();
        assert_eq!(m, h * w, "rows {m} vs {h}x{w}");
        let src = rows.data();
        let mut out = vec![0.0; c * h * w];
        for ci in 0..c {
            for pos in 0..h * w {
                out[ci * h * w + pos] = src[pos * c + ci];
            }
        }
        Tensor::new(vec![1, c, h, w], out)
    }
}

/// Eager (no-gradient) encode of an image batch `[N, 3, H, W]`.
pub fn encode(params: &ParamSet, cfg: &CodecConfig, batch: &Tensor) -> Result<FeaturePyramid> {
    let (_, c, h, w) = batch.dims4();
    if c != 3 {
        return Err(Error::DimensionMismatch(format!("expected 3 channels, got {c}")));
    }
    cfg.check_input_dims(h, w)?;
    let mut g = crate::nn::Graph::new();
    let mut fwd = Forward::new(&mut g, params, false);
    let img = fwd.graph.input(batch.clone());
    let ids = encoder_graph(&mut fwd, cfg, img);
    Ok(FeaturePyramid {
        levels: ids.iter().map(|&id| g.value(id).clone()).collect(),
    })
}

/// Eager (no-gradient) decode of a received pyramid back to an image batch.
pub fn decode(params: &ParamSet, cfg: &CodecConfig, pyramid: &FeaturePyramid) -> Result<Tensor> {
    if pyramid.levels.len() != cfg.num_levels {
        return Err(Error::DimensionMismatch(format!(
            "pyramid has {} levels, config expects {}",
            pyramid.levels.len(),
            cfg.num_levels
        )));
    }
    for (i, lv) in pyramid.levels.iter().enumerate() {
        let c = lv.dims4().1;
        if c != cfg.level_channels[i] {
            return Err(Error::DimensionMismatch(format!(
                "level {} has {c} channels, config expects {}",
                i + 1,
                cfg.level_channels[i]
            )));
        }
    }
    let mut g = crate::nn::Graph::new();
    let mut fwd = Forward::new(&mut g, params, false);
    let ids: Vec<NodeId> = pyramid
        .levels
        .iter()
        .map(|t| fwd.graph.input(t.clone()))
        .collect();
    let out = decoder_graph(&mut fwd, cfg, &ids);
    Ok(g.value(out).clone())
}
