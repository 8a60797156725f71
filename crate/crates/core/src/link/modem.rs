//! Constellations, Gray labeling, and exact soft demapping.
//!
//! Bit groups map big-endian onto labels (first bit = MSB). All
//! constellations are normalized to unit mean symbol energy.
//!
//! * BPSK: bit 0 → +1, bit 1 → −1.
//! * 16-QAM: Gray per axis, first two bits on I, last two on Q; levels
//!   {−3,−1,+1,+3}/√10 in Gray order 00, 01, 11, 10.
//! * 32-QAM: the standard cross (6×6 grid minus corners). Labeling is
//!   quasi-Gray, built by folding the wings of a perfectly Gray-labeled 8×4
//!   rectangle onto the top/bottom arms: column bits g3(c) on x ∈
//!   {−7..+7}, row bits g2(r) on y ∈ {−3..+3}, then (±7, y) → (±|y|,
//!   5·sign(y)); scaled by 1/√20. Interior transitions stay Gray; only the
//!   fold seams cost extra bit flips (a perfect Gray map does not exist for
//!   cross constellations). The exact table is exported by
//!   [`Constellation::labels_csv`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::link::ldpc::LLR_CLIP;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Bpsk,
    Qam16,
    Qam32,
}

impl ConstellationKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstellationKind::Bpsk => "bpsk",
            ConstellationKind::Qam16 => "qam16",
            ConstellationKind::Qam32 => "qam32",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(ConstellationKind::Bpsk),
            "qam16" | "16qam" | "16-qam" => Ok(ConstellationKind::Qam16),
            "qam32" | "32qam" | "32-qam" => Ok(ConstellationKind::Qam32),
            other => Err(Error::Config(format!("unknown constellation {other:?}"))),
        }
    }
}

/// A labeled constellation with unit mean symbol energy.
#[derive(Debug, Clone)]
pub struct Constellation {
    pub kind: ConstellationKind,
    pub bits_per_symbol: usize,
    /// Point coordinates, indexed by label value.
    points: Vec<Complex64>,
}

impl Constellation {
    pub fn new(kind: ConstellationKind) -> Self {
        match kind {
            ConstellationKind::Bpsk => {
                let points = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
                Self {
                    kind,
                    bits_per_symbol: 1,
                    points,
                }
            }
            ConstellationKind::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                let mut points = vec![Complex64::new(0.0, 0.0); 16];
                for label in 0..16u32 {
                    let i_bits = (label >> 2) & 0b11;
                    let q_bits = label & 0b11;
                    points[label as usize] = Complex64::new(
                        gray2_level(i_bits) * scale,
                        gray2_level(q_bits) * scale,
                    );
                }
                Self {
                    kind,
                    bits_per_symbol: 4,
                    points,
                }
            }
            ConstellationKind::Qam32 => {
                let scale = 1.0 / 20f64.sqrt();
                let mut points = vec![Complex64::new(0.0, 0.0); 32];
                for c in 0..8usize {
                    let col_label = (c ^ (c >> 1)) as u32; // 3-bit Gray
                    let x = 2.0 * c as f64 - 7.0;
                    for r in 0..4usize {
                        let row_label = (r ^ (r >> 1)) as u32; // 2-bit Gray
                        let y = 2.0 * r as f64 - 3.0;
                        let label = (col_label << 2) | row_label;
                        let (px, py) = if x.abs() > 5.0 {
                            // Fold the wing onto the arm above/below.
                            (y.abs().copysign(x), 5.0f64.copysign(y))
                        } else {
                            (x, y)
                        };
                        points[label as usize] = Complex64::new(px * scale, py * scale);
                    }
                }
                Self {
                    kind,
                    bits_per_symbol: 5,
                    points,
                }
            }
        }
    }

    pub fn num_points(&self) -> usize {
        self.points.len()
    }

    pub fn point(&self, label: u32) -> Complex64 {
        self.points[label as usize]
    }

    pub fn mean_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Maps a bit sequence to symbols, zero-padding to a whole number of
    /// symbols. Returns the symbols and the number of pad bits appended.
    pub fn modulate(&self, bits: &[u8]) -> (Vec<Complex64>, usize) {
        let bps = self.bits_per_symbol;
        let num_symbols = bits.len().div_ceil(bps);
        let pad = num_symbols * bps - bits.len();
        let mut symbols = Vec::with_capacity(num_symbols);
        for s in 0..num_symbols {
            let mut label = 0u32;
            for b in 0..bps {
                let bit = bits.get(s * bps + b).copied().unwrap_or(0) & 1;
                label = (label << 1) | u32::from(bit);
            }
            symbols.push(self.points[label as usize]);
        }
        (symbols, pad)
    }

    /// Nearest-point hard decisions back to bits (no noise model).
    pub fn demodulate_hard(&self, symbols: &[Complex64]) -> Vec<u8> {
        let bps = self.bits_per_symbol;
        let mut bits = Vec::with_capacity(symbols.len() * bps);
        for y in symbols {
            let label = self.nearest_label(*y);
            for b in (0..bps).rev() {
                bits.push(((label >> b) & 1) as u8);
            }
        }
        bits
    }

    fn nearest_label(&self, y: Complex64) -> u32 {
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for (label, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = label as u32;
            }
        }
        best
    }

    /// Exact per-bit LLRs under complex Gaussian noise,
    /// `p(y|x) ∝ exp(−|y−x|²/σ²)` with `σ²` the total complex noise
    /// variance per symbol. Positive LLR ⇒ bit 0 more likely. A symbol with
    /// infinite noise variance (an erasure) contributes LLR 0 for all its
    /// bits. Output is clipped to ±30.
    pub fn demodulate_soft(
        &self,
        symbols: &[Complex64],
        noise_variance_per_symbol: &[f64],
    ) -> Result<Vec<f64>> {
        if symbols.len() != noise_variance_per_symbol.len() {
            return Err(Error::DimensionMismatch(format!(
                "symbols {} vs noise variances {}",
                symbols.len(),
                noise_variance_per_symbol.len()
            )));
        }
        let bps = self.bits_per_symbol;
        let mut llrs = Vec::with_capacity(symbols.len() * bps);
        for (y, &nv) in symbols.iter().zip(noise_variance_per_symbol) {
            if nv.is_infinite() {
                llrs.extend(std::iter::repeat_n(0.0, bps));
                continue;
            }
            if nv <= 0.0 {
                return Err(Error::Config(format!(
                    "noise variance must be positive, got {nv}"
                )));
            }
            // Metrics for all points, max-stabilized log-sum-exp per bit.
            let metrics: Vec<f64> = self
                .points
                .iter()
                .map(|p| -((y - p).norm_sqr()) / nv)
                .collect();
            for b in (0..bps).rev() {
                let mut max0 = f64::NEG_INFINITY;
                let mut max1 = f64::NEG_INFINITY;
                for (label, &m) in metrics.iter().enumerate() {
                    if (label >> b) & 1 == 0 {
                        max0 = max0.max(m);
                    } else {
                        max1 = max1.max(m);
                    }
                }
                let mut sum0 = 0.0;
                let mut sum1 = 0.0;
                for (label, &m) in metrics.iter().enumerate() {
                    if (label >> b) & 1 == 0 {
                        sum0 += (m - max0).exp();
                    } else {
                        sum1 += (m - max1).exp();
                    }
                }
                let llr = (max0 + sum0.ln()) - (max1 + sum1.ln());
                llrs.push(llr.clamp(-LLR_CLIP, LLR_CLIP));
            }
        }
        Ok(llrs)
    }

    /// Same but with one noise variance for all symbols.
    pub fn demodulate_soft_uniform(
        &self,
        symbols: &[Complex64],
        noise_variance: f64,
    ) -> Result<Vec<f64>> {
        self.demodulate_soft(symbols, &vec![noise_variance; symbols.len()])
    }

    /// Hard ±clip LLRs from nearest-point decisions (the zero-noise path).
    pub fn hard_llrs(&self, symbols: &[Complex64]) -> Vec<f64> {
        self.demodulate_hard(symbols)
            .iter()
            .map(|&b| if b == 0 { LLR_CLIP } else { -LLR_CLIP })
            .collect()
    }

    /// Audit table: `bits,label,i,q` per point.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("bits,label,i,q\n");
        for (label, p) in self.points.iter().enumerate() {
            let bits: String = (0..self.bits_per_symbol)
                .rev()
                .map(|b| char::from(b'0' + ((label >> b) & 1) as u8))
                .collect();
            out.push_str(&format!("{bits},{label},{:.12},{:.12}\n", p.re, p.im));
        }
        out
    }
}

fn gray2_level(bits: u32) -> f64 {
    // Gray order 00, 01, 11, 10 over levels -3, -1, +1, +3.
    match bits {
        0b00 => -3.0,
        0b01 => -1.0,
        0b11 => 1.0,
        0b10 => 3.0,
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn all_kinds() -> [Constellation; 3] {
        [
            Constellation::new(ConstellationKind::Bpsk),
            Constellation::new(ConstellationKind::Qam16),
            Constellation::new(ConstellationKind::Qam32),
        ]
    }

    #[test]
    fn bpsk_convention() {
        let c = Constellation::new(ConstellationKind::Bpsk);
        let (s, pad) = c.modulate(&[0, 1]);
        assert_eq!(pad, 0);
        assert_eq!(s[0], Complex64::new(1.0, 0.0));
        assert_eq!(s[1], Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn qam16_corner_is_3_3_over_sqrt10() {
        let c = Constellation::new(ConstellationKind::Qam16);
        // Gray level +3 has per-axis bits 10 -> label 1010.
        let (s, _) = c.modulate(&[1, 0, 1, 0]);
        let expect = Complex64::new(3.0, 3.0) / 10f64.sqrt();
        assert!((s[0] - expect).norm() < 1e-12);
    }

    #[test]
    fn unit_energy_for_all_constellations() {
        for c in all_kinds() {
            assert!(
                (c.mean_energy() - 1.0).abs() < 1e-12,
                "{:?} energy {}",
                c.kind,
                c.mean_energy()
            );
        }
    }

    #[test]
    fn labels_are_a_bijection() {
        for c in all_kinds() {
            assert_eq!(c.num_points(), 1 << c.bits_per_symbol);
            let mut pts: Vec<(i64, i64)> = (0..c.num_points())
                .map(|l| {
                    let p = c.point(l as u32);
                    ((p.re * 1e9).round() as i64, (p.im * 1e9).round() as i64)
                })
                .collect();
            pts.sort_unstable();
            pts.dedup();
            assert_eq!(pts.len(), c.num_points(), "{:?} has coincident points", c.kind);
        }
    }

    #[test]
    fn qam32_is_the_cross() {
        let c = Constellation::new(ConstellationKind::Qam32);
        let s = 20f64.sqrt();
        for l in 0..32 {
            let p = c.point(l) * s;
            let (x, y) = (p.re.round() as i64, p.im.round() as i64);
            assert!(x.abs() <= 5 && y.abs() <= 5 && x.abs() % 2 == 1 && y.abs() % 2 == 1);
            assert!(!(x.abs() == 5 && y.abs() == 5), "corner point {x},{y}");
        }
    }

    #[test]
    fn zero_noise_hard_decisions_invert_modulate() {
        let mut rng = crate::rng::rng_from_seed(1);
        for c in all_kinds() {
            let bits: Vec<u8> = (0..c.bits_per_symbol * 64)
                .map(|_| rng.random_range(0..2u8))
                .collect();
            let (symbols, pad) = c.modulate(&bits);
            assert_eq!(pad, 0);
            assert_eq!(c.demodulate_hard(&symbols), bits);
            // Soft decisions at tiny noise agree in sign.
            let llrs = c.demodulate_soft_uniform(&symbols, 1e-4).unwrap();
            let hard: Vec<u8> = llrs.iter().map(|&l| u8::from(l < 0.0)).collect();
            assert_eq!(hard, bits);
        }
    }

    #[test]
    fn bpsk_llr_matches_closed_form() {
        // Exact complex-Gaussian LLR for BPSK is 4 Re(y) / sigma^2; the
        // numeric log-sum must agree to machine precision (before clipping).
        let c = Constellation::new(ConstellationKind::Bpsk);
        let mut rng = crate::rng::rng_from_seed(2);
        for _ in 0..100 {
            let y = Complex64::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
            let nv = rng.random_range(0.3..2.0);
            let llr = c.demodulate_soft(&[y], &[nv]).unwrap()[0];
            let closed = (4.0 * y.re / nv).clamp(-LLR_CLIP, LLR_CLIP);
            assert!((llr - closed).abs() < 1e-10, "llr {llr} vs closed {closed}");
        }
    }

    #[test]
    fn midway_symbol_gives_zero_llr_for_the_differing_bit() {
        // BPSK at the origin: the only bit is exactly undecided.
        let b = Constellation::new(ConstellationKind::Bpsk);
        let llr = b
            .demodulate_soft(&[Complex64::new(0.0, 0.3)], &[0.5])
            .unwrap()[0];
        assert!(llr.abs() < 1e-12);

        // 16-QAM on the Q axis: midway between (-1,q)/s and (+1,q)/s, which
        // differ only in the first bit; x -> -x mirrors the constellation
        // with exactly that bit flipped, so its full log-sum LLR is 0.
        let c = Constellation::new(ConstellationKind::Qam16);
        let s = 10f64.sqrt();
        let y = Complex64::new(0.0, -3.0 / s);
        let llrs = c.demodulate_soft(&[y], &[0.5]).unwrap();
        assert!(llrs[0].abs() < 1e-12, "differing bit LLR {llrs:?}");
    }

    #[test]
    fn erasures_produce_zero_llrs() {
        let c = Constellation::new(ConstellationKind::Qam32);
        let llrs = c
            .demodulate_soft(&[Complex64::new(0.3, 0.1)], &[f64::INFINITY])
            .unwrap();
        assert_eq!(llrs, vec![0.0; 5]);
    }

    #[test]
    fn modulation_pads_partial_symbols_with_zeros() {
        let c = Constellation::new(ConstellationKind::Qam16);
        let (symbols, pad) = c.modulate(&[1, 0, 1]);
        assert_eq!((symbols.len(), pad), (1, 1));
        // 101 + pad 0 -> label 1010.
        assert_eq!(symbols[0], c.point(0b1010));
    }

    #[test]
    fn labels_csv_lists_every_point() {
        let c = Constellation::new(ConstellationKind::Qam32);
        let csv = c.labels_csv();
        assert_eq!(csv.lines().count(), 33);
        assert!(csv.starts_with("bits,label,i,q"));
    }
}
