//! Index-stream ⇄ bitstream serialization.
//!
//! Each index is a fixed-width big-endian field of `ceil(log2 N_l)` bits;
//! levels are concatenated in ascending `l` over transmitted levels,
//! row-major within a level. No in-band framing: both ends share the
//! configuration, so the layout is reconstructible from it alone.

use crate::vq::{bits_for, IndexStream};
use crate::{Error, Result};

/// Field layout of one transmitted level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelLayout {
    pub level: usize,
    /// Number of indices (feature positions) at this level.
    pub count: usize,
    /// Bits per index, `ceil(log2 N_l)`.
    pub width: usize,
    /// Codebook size, for the clamp rule on decode.
    pub num_vectors: usize,
}

/// A serialized index payload plus the provenance needed to invert it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bitstream {
    pub bits: Vec<u8>,
    pub layout: Vec<LevelLayout>,
}

impl Bitstream {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Serializes the transmitted levels' index streams.
///
/// `streams` must already be restricted to transmitted levels, ascending;
/// `num_vectors[i]` is the codebook size paired with `streams[i]`.
pub fn indices_to_bits(streams: &[IndexStream], num_vectors: &[usize]) -> Result<Bitstream> {
    if streams.len() != num_vectors.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} streams vs {} codebook sizes",
            streams.len(),
            num_vectors.len()
        )));
    }
    let mut bits = Vec::new();
    let mut layout = Vec::with_capacity(streams.len());
    for (s, &n) in streams.iter().zip(num_vectors) {
        let width = bits_for(n);
        for &ix in &s.indices {
            if (ix as usize) >= n {
                return Err(Error::IndexOutOfRange {
                    level: s.level,
                    index: ix,
                    num_vectors: n,
                });
            }
            for b in (0..width).rev() {
                bits.push(((ix >> b) & 1) as u8);
            }
        }
        layout.push(LevelLayout {
            level: s.level,
            count: s.indices.len(),
            width,
            num_vectors: n,
        });
    }
    Ok(Bitstream { bits, layout })
}

/// Result of deserializing received bits back into index streams.
#[derive(Debug, Clone)]
pub struct DecodedIndices {
    pub streams: Vec<IndexStream>,
    /// Decoded fields that exceeded their codebook and were clamped to
    /// `N_l - 1`; each counts as an index error.
    pub clamped: usize,
}

/// Inverse of [`indices_to_bits`] under a shared `layout`. A decoded field
/// `>= N_l` is clamped to `N_l − 1` and counted.
pub fn bits_to_indices(bits: &[u8], layout: &[LevelLayout]) -> Result<DecodedIndices> {
    let expected: usize = layout.iter().map(|l| l.count * l.width).sum();
    if bits.len() != expected {
        return Err(Error::BitstreamLength {
            expected,
            got: bits.len(),
        });
    }
    let mut pos = 0;
    let mut clamped = 0;
    let mut streams = Vec::with_capacity(layout.len());
    for l in layout {
        let mut indices = Vec::with_capacity(l.count);
        for _ in 0..l.count {
            let mut v = 0u32;
            for _ in 0..l.width {
                v = (v << 1) | u32::from(bits[pos] & 1);
                pos += 1;
            }
            if v as usize >= l.num_vectors {
                v = l.num_vectors as u32 - 1;
                clamped += 1;
            }
            indices.push(v);
        }
        streams.push(IndexStream {
            level: l.level,
            indices,
        });
    }
    Ok(DecodedIndices { streams, clamped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn stream(level: usize, indices: Vec<u32>) -> IndexStream {
        IndexStream { level, indices }
    }

    #[test]
    fn six_bit_field_big_endian() {
        let bs = indices_to_bits(&[stream(1, vec![5])], &[64]).unwrap();
        assert_eq!(bs.bits, vec![0, 0, 0, 1, 0, 1]);
    }

    #[test]
    fn two_vector_codebook_costs_one_bit() {
        let bs = indices_to_bits(&[stream(4, vec![1, 0, 1])], &[2]).unwrap();
        assert_eq!(bs.bits, vec![1, 0, 1]);
        assert_eq!(bs.layout[0].width, 1);
    }

    #[test]
    fn single_vector_codebook_costs_zero_bits() {
        let bs = indices_to_bits(&[stream(2, vec![0, 0])], &[1]).unwrap();
        assert!(bs.is_empty());
        let dec = bits_to_indices(&bs.bits, &bs.layout).unwrap();
        assert_eq!(dec.streams[0].indices, vec![0, 0]);
    }

    #[test]
    fn inverse_of_six_bit_example() {
        let layout = vec![LevelLayout {
            level: 1,
            count: 1,
            width: 6,
            num_vectors: 64,
        }];
        let dec = bits_to_indices(&[0, 0, 0, 1, 0, 1], &layout).unwrap();
        assert_eq!(dec.streams[0].indices, vec![5]);
        assert_eq!(dec.clamped, 0);
    }

    #[test]
    fn overflow_field_clamps_and_counts() {
        // N = 3, width 2: decoded 3 clamps to 2 and counts one error.
        let layout = vec![LevelLayout {
            level: 1,
            count: 1,
            width: 2,
            num_vectors: 3,
        }];
        let dec = bits_to_indices(&[1, 1], &layout).unwrap();
        assert_eq!(dec.streams[0].indices, vec![2]);
        assert_eq!(dec.clamped, 1);
    }

    #[test]
    fn all_zero_bits_decode_to_zero_indices() {
        let layout = vec![LevelLayout {
            level: 1,
            count: 4,
            width: 3,
            num_vectors: 8,
        }];
        let dec = bits_to_indices(&[0; 12], &layout).unwrap();
        assert_eq!(dec.streams[0].indices, vec![0; 4]);
    }

    #[test]
    fn roundtrip_random_multilevel() {
        let mut rng = crate::rng::rng_from_seed(3);
        for _ in 0..50 {
            let sizes = [8usize, 4, 2];
            let streams: Vec<IndexStream> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| {
                    stream(
                        i + 2,
                        (0..rng.random_range(1..30))
                            .map(|_| rng.random_range(0..n as u32))
                            .collect(),
                    )
                })
                .collect();
            let bs = indices_to_bits(&streams, &sizes).unwrap();
            let total: usize = streams
                .iter()
                .zip(&sizes)
                .map(|(s, &n)| s.indices.len() * crate::vq::bits_for(n))
                .sum();
            assert_eq!(bs.len(), total);
            let dec = bits_to_indices(&bs.bits, &bs.layout).unwrap();
            assert_eq!(dec.clamped, 0);
            assert_eq!(dec.streams, streams);
        }
    }

    #[test]
    fn length_mismatch_is_config_drift() {
        let layout = vec![LevelLayout {
            level: 1,
            count: 2,
            width: 3,
            num_vectors: 8,
        }];
        assert!(matches!(
            bits_to_indices(&[0; 5], &layout),
            Err(Error::BitstreamLength { .. })
        ));
    }

    #[test]
    fn out_of_range_index_rejected_on_encode() {
        assert!(indices_to_bits(&[stream(1, vec![4])], &[4]).is_err());
    }
}
