//! The conventional digital chain: index/bit serialization, LDPC coding,
//! constellation mapping with exact soft demapping, and AMC mode tables.

pub mod alist;
pub mod bits;
pub mod ldpc;
pub mod modem;

pub use alist::{load_alist, parse_alist, to_alist};
pub use bits::{bits_to_indices, indices_to_bits, Bitstream, DecodedIndices, LevelLayout};
pub use ldpc::{ira_construct, peg_construct, LdpcCode, SparseH, LLR_CLIP};
pub use modem::{Constellation, ConstellationKind};

use std::sync::Arc;

use rand_chacha::ChaCha12Rng;

use crate::channel::{
    apply_channel, equalize, post_equalization_noise, sample_channel, sample_channel_per_frame,
    ChannelKind, FadingGranularity,
};
use crate::{Error, Result};

/// One adaptive-modulation-and-coding operating point.
#[derive(Clone)]
pub struct AmcMode {
    pub label: String,
    pub code: Arc<LdpcCode>,
    pub constellation: Arc<Constellation>,
}

impl AmcMode {
    pub fn new(label: impl Into<String>, code: Arc<LdpcCode>, constellation: Arc<Constellation>) -> Self {
        Self {
            label: label.into(),
            code,
            constellation,
        }
    }
}

/// Maps SNR intervals to AMC modes. Intervals are half-open `[min, max)`;
/// a lookup outside every interval is a configuration gap.
#[derive(Clone, Default)]
pub struct AmcTable {
    entries: Vec<(f64, f64, usize)>,
    modes: Vec<AmcMode>,
}

impl AmcTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// A table with a single mode covering all SNRs.
    pub fn single(mode: AmcMode) -> Self {
        let mut t = Self::new();
        let idx = t.add_mode(mode);
        t.add_interval(f64::NEG_INFINITY, f64::INFINITY, idx);
        t
    }

    pub fn add_mode(&mut self, mode: AmcMode) -> usize {
        assert!(
            !self.modes.iter().any(|m| m.label == mode.label),
            "duplicate AMC mode label {}",
            mode.label
        );
        self.modes.push(mode);
        self.modes.len() - 1
    }

    pub fn add_interval(&mut self, snr_min_db: f64, snr_max_db: f64, mode_idx: usize) {
        assert!(mode_idx < self.modes.len());
        self.entries.push((snr_min_db, snr_max_db, mode_idx));
    }

    pub fn mode_by_label(&self, label: &str) -> Option<&AmcMode> {
        self.modes.iter().find(|m| m.label == label)
    }

    pub fn lookup(&self, snr_db: f64) -> Result<&AmcMode> {
        self.entries
            .iter()
            .find(|(lo, hi, _)| snr_db >= *lo && snr_db < *hi)
            .map(|(_, _, idx)| &self.modes[*idx])
            .ok_or(Error::AmcGap { snr_db })
    }

    pub fn modes(&self) -> &[AmcMode] {
        &self.modes
    }
}

/// Outcome of pushing one payload through the full digital chain.
#[derive(Debug, Clone)]
pub struct LinkFrame {
    pub received_bits: Vec<u8>,
    /// Complex symbols actually transmitted (coded bits / bits-per-symbol,
    /// including both LDPC block padding and symbol padding).
    pub num_symbols: usize,
    pub blocks_total: usize,
    pub blocks_converged: usize,
}

/// Transmits `payload` over `mode` through the given channel at total
/// complex noise variance `noise_variance`. Zero noise takes the exact
/// hard-decision path (the demapper requires positive variance).
pub fn transmit_payload(
    payload: &[u8],
    mode: &AmcMode,
    channel: ChannelKind,
    rician_r: f64,
    granularity: FadingGranularity,
    noise_variance: f64,
    rng: &mut ChaCha12Rng,
) -> Result<LinkFrame> {
    let code = &mode.code;
    let constellation = &mode.constellation;

    let (blocks, _pad_bits) = code.encode_blocks(payload)?;
    let blocks_total = blocks.len();
    let coded: Vec<u8> = blocks.iter().flatten().copied().collect();
    let (tx_symbols, _sym_pad) = constellation.modulate(&coded);
    let num_symbols = tx_symbols.len();

    let h = match granularity {
        FadingGranularity::PerSymbol => sample_channel(channel, rician_r, num_symbols, rng)?,
        FadingGranularity::PerFrame => {
            sample_channel_per_frame(channel, rician_r, num_symbols, rng)?
        }
    };
    let y = apply_channel(&tx_symbols, &h, noise_variance, rng)?;
    let eq = equalize(&y, &h)?;

    let llrs = if noise_variance == 0.0 {
        let mut l = constellation.hard_llrs(&eq.symbols);
        for (i, erased) in eq.erasures.iter().enumerate() {
            if *erased {
                for b in 0..constellation.bits_per_symbol {
                    l[i * constellation.bits_per_symbol + b] = 0.0;
                }
            }
        }
        l
    } else {
        let nv = post_equalization_noise(&h, noise_variance);
        constellation.demodulate_soft(&eq.symbols, &nv)?
    };

    // Per-block LLR slices (drop symbol-padding LLRs beyond the coded bits).
    let n = code.n();
    let block_llrs: Vec<Vec<f64>> = (0..blocks_total)
        .map(|b| llrs[b * n..(b + 1) * n].to_vec())
        .collect();
    let (received_bits, blocks_converged) = code.decode_blocks(&block_llrs, payload.len());

    Ok(LinkFrame {
        received_bits,
        num_symbols,
        blocks_total,
        blocks_converged,
    })
}

/// Symbols needed to carry `payload_bits` through `mode`:
/// coded bits (with block padding) divided by bits per symbol, rounded up.
pub fn symbols_for_payload(payload_bits: usize, mode: &AmcMode) -> usize {
    let k = mode.code.k();
    let blocks = payload_bits.div_ceil(k).max(1);
    (blocks * mode.code.n()).div_ceil(mode.constellation.bits_per_symbol)
}
