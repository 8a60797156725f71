//! Vector-quantized semantic communication for images.
//!
//! The transmitter extracts a multi-scale feature pyramid from an image with a
//! U-Net style encoder, quantizes every feature vector against a per-scale
//! codebook shared with the receiver, and sends only the codebook indices over
//! a conventional digital chain (LDPC channel coding + constellation mapping).
//! The receiver decodes the indices, looks the vectors back up, and fuses the
//! recovered pyramid top-down into a reconstructed image. Training is
//! adversarial: the codec plus codebooks play against a PatchGAN discriminator
//! with a straight-through estimator carrying gradients across the
//! quantization step.
//!
//! Crate layout:
//!
//! * [`nn`] — minimal reverse-mode autodiff on dense `f64` tensors (conv,
//!   batch norm, PReLU, the straight-through bind) plus Adam.
//! * [`codec`] — the semantic encoder/decoder pair.
//! * [`model`] — the transceiver assembly (codec weights + codebooks +
//!   transmit masks).
//! * [`vq`] — embedding spaces, nearest-neighbor quantization, VQ losses.
//! * [`link`] — index/bit serialization, LDPC encode + belief propagation,
//!   constellations with exact soft demapping, AMC mode tables.
//! * [`channel`] — AWGN / Rayleigh / Rician simulation and perfect-CSI
//!   equalization.
//! * [`train`] — PatchGAN discriminator, loss assembly, the alternating
//!   training loop.
//! * [`eval`] — MS-SSIM, end-to-end SNR sweeps, compression accounting, the
//!   analog-bypass ablation.
//! * [`io`] — experiment config (TOML), named-array checkpoints, datasets,
//!   curve CSVs.
//!
//! Data-parallel inner loops (belief propagation over blocks, convolution
//! slabs, Monte Carlo trials) run on rayon when the default `parallel` feature
//! is enabled and fall back to plain loops otherwise; see [`exec`].

pub mod channel;
pub mod codec;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod link;
pub mod model;
pub mod nn;
pub mod rng;
pub mod train;
pub mod vq;

pub use error::{Error, Result};
