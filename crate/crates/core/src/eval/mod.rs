//! Evaluation: MS-SSIM, SNR sweeps, compression accounting, and the
//! analog-bypass ablation.

pub mod bypass;
pub mod ms_ssim;
pub mod sweep;

pub use bypass::{analog_bypass_eval, bypass_transmit_image, BypassTrial};
pub use ms_ssim::{ms_ssim, usable_scales};
pub use sweep::{noiseless_reference, run_sweep, transmit_image, CurvePoint, ImageTrial, SweepSpec};

use crate::model::ModelSpec;

/// Source bits over transmitted information bits:
/// `(H·W·3·8) / Σ_l M_l · ceil(log2 N_l)` over transmitted levels.
pub fn compression_ratio(spec: &ModelSpec, height: usize, width: usize) -> f64 {
    let source_bits = (height * width * 3 * 8) as f64;
    source_bits / spec.info_bits(height, width).max(1) as f64
}
