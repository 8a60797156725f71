//! PatchGAN discriminator: five 4×4 convolutions, the first three with
//! stride 2, the last two with stride 1; batch norm on the middle stages,
//! LeakyReLU(0.2) activations, sigmoid patch-probability output. The output
//! is a 2-D grid of per-patch judgements, never a single scalar.

use serde::{Deserialize, Serialize};

use crate::nn::{register_bn, register_conv, Forward, NodeId, ParamSet, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    /// Output widths of the stem and the three middle stages.
    pub channels: Vec<usize>,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            channels: vec![64, 128, 256, 512],
        }
    }
}

const KERNEL: usize = 4;
const PAD: usize = 1;
const LEAKY_SLOPE: f64 = 0.2;
/// Strides of the five convolutions.
const STRIDES: [usize; 5] = [2, 2, 2, 1, 1];

impl DiscriminatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != 4 || self.channels.iter().any(|&c| c == 0) {
            return Err(Error::Config(
                "discriminator needs 4 positive channel widths".into(),
            ));
        }
        Ok(())
    }

    /// Patch-grid side length for an input of side `dim`, or an error when
    /// the image is smaller than the receptive field.
    pub fn grid_dim(&self, dim: usize) -> Result<usize> {
        let mut d = dim as i64;
        for s in STRIDES {
            d = (d + 2 * PAD as i64 - KERNEL as i64).div_euclid(s as i64) + 1;
            if d <= 0 {
                return Err(Error::DimensionMismatch(format!(
                    "image side {dim} is below the discriminator receptive field"
                )));
            }
        }
        Ok(d as usize)
    }
}

pub fn register_disc_params(
    ps: &mut ParamSet,
    cfg: &DiscriminatorConfig,
    rng: &mut rand_chacha::ChaCha12Rng,
) {
    let c = &cfg.channels;
    register_conv(ps, "disc.conv0", 3, c[0], KERNEL, rng);
    for i in 1..=3 {
        register_conv(ps, &format!("disc.conv{i}"), c[i - 1], c[i], KERNEL, rng);
        register_bn(ps, &format!("disc.bn{i}"), c[i]);
    }
    register_conv(ps, "disc.out", c[3], 1, KERNEL, rng);
}

/// Discriminator graph: image node `[N, 3, H, W]` → patch probability grid
/// `[N, 1, gh, gw]`, every value in (0, 1).
pub fn discriminator_graph(fwd: &mut Forward, x: NodeId) -> NodeId {
    let mut y = fwd.conv(x, "disc.conv0", STRIDES[0], PAD);
    y = fwd.graph.leaky_relu(y, LEAKY_SLOPE);
    for i in 1..=3 {
        y = fwd.conv(y, &format!("disc.conv{i}"), STRIDES[i], PAD);
        y = fwd.batch_norm(y, &format!("disc.bn{i}"));
        y = fwd.graph.leaky_relu(y, LEAKY_SLOPE);
    }
    y = fwd.conv(y, "disc.out", STRIDES[4], PAD);
    fwd.graph.sigmoid(y)
}

/// Eager patch judgement of an image batch (evaluation mode).
pub fn discriminate(
    params: &ParamSet,
    cfg: &DiscriminatorConfig,
    batch: &Tensor,
) -> Result<Tensor> {
    let (_, c, h, w) = batch.dims4();
    if c != 3 {
        return Err(Error::DimensionMismatch(format!("expected 3 channels, got {c}")));
    }
    cfg.grid_dim(h)?;
    cfg.grid_dim(w)?;
    let mut g = crate::nn::Graph::new();
    let mut fwd = Forward::new(&mut g, params, false);
    let x = fwd.graph.input(batch.clone());
    let out = discriminator_graph(&mut fwd, x);
    Ok(g.value(out).clone())
}
