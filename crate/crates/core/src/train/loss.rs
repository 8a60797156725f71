//! Loss assembly: the adversarial term and the reconstruction + VQ total.

use crate::nn::{Graph, NodeId, Tensor};
use crate::{Error, Result};

/// Probabilities are kept this far from {0, 1} before the log.
pub const PROB_EPS: f64 = 1e-7;

/// Adversarial loss on patch grids:
/// `mean(log d_real) + mean(log(1 − d_fake))`.
/// The discriminator ascends it; the generator descends its fake half.
pub fn gan_loss_graph(g: &mut Graph, d_real: NodeId, d_fake: NodeId) -> NodeId {
    assert_eq!(
        g.value(d_real).shape(),
        g.value(d_fake).shape(),
        "patch grids must match"
    );
    let ln_real = g.ln_clamped(d_real, PROB_EPS);
    let one_minus_fake = g.affine(d_fake, -1.0, 1.0);
    let ln_fake = g.ln_clamped(one_minus_fake, PROB_EPS);
    let a = g.mean(ln_real);
    let b = g.mean(ln_fake);
    g.add(a, b)
}

/// Generator-side adversarial term to *minimize*: the literal
/// `mean(log(1 − D(fake)))`, or the non-saturating `−mean(log D(fake))`.
pub fn generator_gan_term(g: &mut Graph, d_fake: NodeId, non_saturating: bool) -> NodeId {
    if non_saturating {
        let ln = g.ln_clamped(d_fake, PROB_EPS);
        let m = g.mean(ln);
        g.scale(m, -1.0)
    } else {
        let one_minus = g.affine(d_fake, -1.0, 1.0);
        let ln = g.ln_clamped(one_minus, PROB_EPS);
        g.mean(ln)
    }
}

/// Reconstruction + VQ objective:
/// `mean|I − Î| + Σ_l (embedding_l + β_c · commitment_l)`.
pub fn total_loss_graph(
    g: &mut Graph,
    original: NodeId,
    reconstructed: NodeId,
    vq_terms: &[(NodeId, NodeId)],
    beta_c: f64,
) -> NodeId {
    let diff = g.sub(original, reconstructed);
    let absd = g.abs(diff);
    let mut total = g.mean(absd);
    for &(embedding, commitment) in vq_terms {
        let scaled_commit = g.scale(commitment, beta_c);
        let level = g.add(embedding, scaled_commit);
        total = g.add(total, level);
    }
    total
}

/// Value-level recomputation of the total loss for cross-checks.
pub fn total_loss_value(
    original: &Tensor,
    reconstructed: &Tensor,
    vq_terms: &[(f64, f64)],
    beta_c: f64,
) -> Result<f64> {
    if original.shape() != reconstructed.shape() {
        return Err(Error::DimensionMismatch(format!(
            "original {:?} vs reconstructed {:?}",
            original.shape(),
            reconstructed.shape()
        )));
    }
    let mae = original
        .data()
        .iter()
        .zip(reconstructed.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / original.numel() as f64;
    Ok(mae
        + vq_terms
            .iter()
            .map(|(e, c)| e + beta_c * c)
            .sum::<f64>())
}

/// Shannon entropy (bits) of a codebook usage histogram.
pub fn usage_entropy_bits(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.log2()
        })
        .sum()
}
