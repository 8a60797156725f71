//! LDPC codes: sparse parity-check matrices, systematic encoding via GF(2)
//! elimination (with accumulator fast-path for IRA constructions), and
//! sum-product belief-propagation decoding.

use crate::exec;
use crate::{Error, Result};

/// LLRs are clipped to this magnitude everywhere in the decoder.
pub const LLR_CLIP: f64 = 30.0;

/// Sparse binary parity-check matrix in adjacency form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseH {
    pub num_checks: usize,
    pub num_vars: usize,
    /// Variable indices per check row, ascending.
    pub rows: Vec<Vec<usize>>,
    /// Check indices per variable column, ascending.
    pub cols: Vec<Vec<usize>>,
}

impl SparseH {
    pub fn from_rows(num_checks: usize, num_vars: usize, rows: Vec<Vec<usize>>) -> Self {
        assert_eq!(rows.len(), num_checks);
        let mut cols = vec![Vec::new(); num_vars];
        for (c, row) in rows.iter().enumerate() {
            for &v in row {
                assert!(v < num_vars);
                cols[v].push(c);
            }
        }
        let mut rows = rows;
        for r in &mut rows {
            r.sort_unstable();
        }
        Self {
            num_checks,
            num_vars,
            rows,
            cols,
        }
    }

    /// `H · cᵀ == 0` over GF(2)?
    pub fn syndrome_ok(&self, codeword: &[u8]) -> bool {
        assert_eq!(codeword.len(), self.num_vars);
        self.rows
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &v| acc ^ codeword[v]) == 0)
    }
}

/// Dense GF(2) row as 64-bit words.
#[derive(Clone)]
struct BitRow {
    words: Vec<u64>,
}

impl BitRow {
    fn zeros(bits: usize) -> Self {
        Self {
            words: vec![0; bits.div_ceil(64)],
        }
    }
    fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }
    fn set(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }
    fn xor_assign(&mut self, other: &Self) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }
}

enum Encoder {
    /// Parity bits are dense XOR combinations of message bits
    /// (`parity_masks[i]` over message positions), from RREF of H.
    Dense { parity_masks: Vec<BitRow> },
    /// IRA accumulator: `s = H1 · msg`, `p_i = p_{i-1} ⊕ s_i`.
    Accumulator { h1_rows: Vec<Vec<usize>> },
}

/// A binary LDPC code with its decoder settings and systematic encoder.
pub struct LdpcCode {
    pub h: SparseH,
    pub max_bp_iterations: usize,
    /// Codeword positions carrying message bits, ascending.
    systematic_cols: Vec<usize>,
    /// Codeword positions carrying parity bits, ascending.
    parity_cols: Vec<usize>,
    encoder: Encoder,
}

impl LdpcCode {
    pub fn n(&self) -> usize {
        self.h.num_vars
    }

    pub fn k(&self) -> usize {
        self.systematic_cols.len()
    }

    pub fn rate(&self) -> f64 {
        self.k() as f64 / self.n() as f64
    }

    pub fn systematic_cols(&self) -> &[usize] {
        &self.systematic_cols
    }

    /// Builds a code from a parity-check matrix. Gaussian elimination over
    /// GF(2) picks `m` pivot columns to carry parity (column permutation is
    /// implicit in the pivot choice); if `H` is row-rank-deficient the code
    /// is rejected.
    pub fn from_h(h: SparseH, max_bp_iterations: usize) -> Result<Self> {
        let m = h.num_checks;
        let n = h.num_vars;
        if m == 0 || n == 0 || m >= n {
            return Err(Error::CodeConstruction(format!(
                "degenerate dimensions {m}x{n}"
            )));
        }
        // Dense copy for elimination.
        let mut rows: Vec<BitRow> = h
            .rows
            .iter()
            .map(|r| {
                let mut br = BitRow::zeros(n);
                for &v in r {
                    br.set(v);
                }
                br
            })
            .collect();

        let mut pivot_cols = Vec::with_capacity(m);
        let mut pivot_row_of_col = vec![usize::MAX; n];
        let mut next_row = 0usize;
        for col in 0..n {
            if next_row == m {
                break;
            }
            let Some(src) = (next_row..m).find(|&r| rows[r].get(col)) else {
                continue;
            };
            rows.swap(next_row, src);
            let pivot = rows[next_row].clone();
            for (r, row) in rows.iter_mut().enumerate() {
                if r != next_row && row.get(col) {
                    row.xor_assign(&pivot);
                }
            }
            pivot_row_of_col[col] = next_row;
            pivot_cols.push(col);
            next_row += 1;
        }
        if next_row < m {
            return Err(Error::CodeConstruction(format!(
                "H has rank {next_row} < {m}; no invertible parity submatrix"
            )));
        }

        let pivot_set: Vec<bool> = {
            let mut s = vec![false; n];
            for &c in &pivot_cols {
                s[c] = true;
            }
            s
        };
        let systematic_cols: Vec<usize> = (0..n).filter(|&c| !pivot_set[c]).collect();
        // After full reduction, row i reads: c[pivot_i] = sum of message bits
        // it touches; compress each row to a mask over systematic positions.
        let k = systematic_cols.len();
        let mut parity_masks = Vec::with_capacity(m);
        for &pc in &pivot_cols {
            let row = &rows[pivot_row_of_col[pc]];
            let mut mask = BitRow::zeros(k);
            for (j, &sc) in systematic_cols.iter().enumerate() {
                if row.get(sc) {
                    mask.set(j);
                }
            }
            parity_masks.push(mask);
        }
        Ok(Self {
            h,
            max_bp_iterations,
            systematic_cols,
            parity_cols: pivot_cols,
            encoder: Encoder::Dense { parity_masks },
        })
    }

    /// Systematic encode of exactly `k` message bits into an `n`-bit codeword
    /// with `H · cᵀ = 0`.
    pub fn encode(&self, message: &[u8]) -> Result<Vec<u8>> {
        if message.len() != self.k() {
            return Err(Error::DimensionMismatch(format!(
                "message length {} != k = {}",
                message.len(),
                self.k()
            )));
        }
        let mut cw = vec![0u8; self.n()];
        for (j, &sc) in self.systematic_cols.iter().enumerate() {
            cw[sc] = message[j] & 1;
        }
        match &self.encoder {
            Encoder::Dense { parity_masks } => {
                for (i, &pc) in self.parity_cols.iter().enumerate() {
                    let mask = &parity_masks[i];
                    let mut acc = 0u8;
                    for (j, &mj) in message.iter().enumerate() {
                        if mj & 1 == 1 && mask.get(j) {
                            acc ^= 1;
                        }
                    }
                    cw[pc] = acc;
                }
            }
            Encoder::Accumulator { h1_rows } => {
                let mut p = 0u8;
                for (i, row) in h1_rows.iter().enumerate() {
                    let s = row.iter().fold(0u8, |acc, &j| acc ^ (message[j] & 1));
                    p ^= s;
                    cw[self.parity_cols[i]] = p;
                }
            }
        }
        Ok(cw)
    }

    /// Splits `bits` into k-bit messages (zero-padding the last one) and
    /// encodes each. Returns the codewords and the number of pad bits.
    pub fn encode_blocks(&self, bits: &[u8]) -> Result<(Vec<Vec<u8>>, usize)> {
        let k = self.k();
        let num_blocks = bits.len().div_ceil(k).max(1);
        let pad = num_blocks * k - bits.len();
        let mut blocks = Vec::with_capacity(num_blocks);
        for b in 0..num_blocks {
            let mut msg = vec![0u8; k];
            let lo = b * k;
            let hi = ((b + 1) * k).min(bits.len());
            msg[..hi - lo].copy_from_slice(&bits[lo..hi]);
            blocks.push(self.encode(&msg)?);
        }
        Ok((blocks, pad))
    }

    /// Sum-product decode of one block of `n` channel LLRs (positive ⇒ bit 0
    /// more likely). Returns the `k` message bits and whether the syndrome
    /// reached zero within `max_bp_iterations`.
    ///
    /// An exactly-all-zero LLR vector carries no information; by contract it
    /// returns an all-zero message flagged non-converged.
    pub fn decode(&self, llrs: &[f64]) -> (Vec<u8>, bool) {
        assert_eq!(llrs.len(), self.n(), "LLR count");
        if llrs.iter().all(|&l| l == 0.0) {
            return (vec![0u8; self.k()], false);
        }
        let chan: Vec<f64> = llrs
            .iter()
            .map(|&l| l.clamp(-LLR_CLIP, LLR_CLIP))
            .collect();

        let h = &self.h;
        // Edge storage aligned with row adjacency.
        let row_offsets: Vec<usize> = {
            let mut o = Vec::with_capacity(h.num_checks + 1);
            let mut acc = 0;
            o.push(0);
            for r in &h.rows {
                acc += r.len();
                o.push(acc);
            }
            o
        };
        let num_edges = row_offsets[h.num_checks];
        let mut r_msgs = vec![0.0f64; num_edges];
        // Per-variable posterior total; q_vc = total_v - r_cv.
        let mut total: Vec<f64> = chan.clone();
        let mut hard = vec![0u8; h.num_vars];

        let mut converged = false;
        for _ in 0..self.max_bp_iterations {
            // Check-node update with prefix/suffix tanh products.
            for c in 0..h.num_checks {
                let lo = row_offsets[c];
                let deg = h.rows[c].len();
                let mut t = [0.0f64; 32];
                let ts = &mut t[..deg.min(32)];
                debug_assert!(deg <= 32, "check degree beyond buffer");
                for (e, &v) in h.rows[c].iter().enumerate() {
                    let q = (total[v] - r_msgs[lo + e]).clamp(-LLR_CLIP, LLR_CLIP);
                    ts[e] = (q / 2.0).tanh();
                }
                for e in 0..deg {
                    let mut prod = 1.0;
                    for (e2, &tv) in ts.iter().enumerate() {
                        if e2 != e {
                            prod *= tv;
                        }
                    }
                    let prod = prod.clamp(-(1.0 - 1e-15), 1.0 - 1e-15);
                    r_msgs[lo + e] = (2.0 * prod.atanh()).clamp(-LLR_CLIP, LLR_CLIP);
                }
            }
            // Variable-node totals.
            total.copy_from_slice(&chan);
            for c in 0..h.num_checks {
                let lo = row_offsets[c];
                for (e, &v) in h.rows[c].iter().enumerate() {
                    total[v] += r_msgs[lo + e];
                }
            }
            for (v, t) in total.iter().enumerate() {
                hard[v] = u8::from(*t < 0.0);
            }
            if h.syndrome_ok(&hard) {
                converged = true;
                break;
            }
        }
        if !converged {
            for (v, t) in total.iter().enumerate() {
                hard[v] = u8::from(*t < 0.0);
            }
        }
        let msg = self.systematic_cols.iter().map(|&c| hard[c]).collect();
        (msg, converged)
    }

    /// Decodes a batch of blocks (embarrassingly parallel), concatenates the
    /// messages, and truncates to `payload_bits`. Also reports how many
    /// blocks converged.
    pub fn decode_blocks(&self, block_llrs: &[Vec<f64>], payload_bits: usize) -> (Vec<u8>, usize) {
        let decoded = exec::map_collect(block_llrs.len(), |i| self.decode(&block_llrs[i]));
        let mut bits = Vec::with_capacity(block_llrs.len() * self.k());
        let mut converged = 0;
        for (msg, ok) in decoded {
            bits.extend_from_slice(&msg);
            converged += usize::from(ok);
        }
        bits.truncate(payload_bits);
        (bits, converged)
    }
}

/// Progressive-edge-growth construction of a (col_weight, row-balanced)
/// regular code: for each new edge the check is chosen farthest from the
/// variable in the current graph (unreachable first), minimum degree among
/// candidates, preferring rows still under the target degree. Deterministic.
pub fn peg_construct(num_vars: usize, num_checks: usize, col_weight: usize) -> SparseH {
    let target_row = (num_vars * col_weight).div_ceil(num_checks);
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); num_checks];
    let mut cols: Vec<Vec<usize>> = vec![Vec::new(); num_vars];

    for v in 0..num_vars {
        for _t in 0..col_weight {
            let candidates = peg_candidates(v, num_checks, &rows, &cols);
            let pick = candidates
                .iter()
                .copied()
                .filter(|&c| rows[c].len() < target_row && !cols[v].contains(&c))
                .min_by_key(|&c| (rows[c].len(), c))
                .or_else(|| {
                    candidates
                        .iter()
                        .copied()
                        .filter(|&c| !cols[v].contains(&c))
                        .min_by_key(|&c| (rows[c].len(), c))
                })
                .expect("PEG: no candidate check available");
            rows[pick].push(v);
            cols[v].push(pick);
        }
    }
    SparseH::from_rows(num_checks, num_vars, rows)
}

/// Checks to consider for the next edge of `v`: all checks unreachable from
/// `v` in the current graph, or, when every check is reachable, those at the
/// maximum BFS depth.
fn peg_candidates(
    v: usize,
    num_checks: usize,
    rows: &[Vec<usize>],
    cols: &[Vec<usize>],
) -> Vec<usize> {
    if cols[v].is_empty() {
        return (0..num_checks).collect();
    }
    let mut check_seen = vec![false; num_checks];
    let mut var_seen = vec![false; cols.len()];
    var_seen[v] = true;
    let mut frontier: Vec<usize> = cols[v].clone();
    for &c in &frontier {
        check_seen[c] = true;
    }
    let mut last_layer = frontier.clone();
    loop {
        // vars adjacent to current frontier checks
        let mut next_vars = Vec::new();
        for &c in &frontier {
            for &v2 in &rows[c] {
                if !var_seen[v2] {
                    var_seen[v2] = true;
                    next_vars.push(v2);
                }
            }
        }
        let mut next_checks = Vec::new();
        for &v2 in &next_vars {
            for &c2 in &cols[v2] {
                if !check_seen[c2] {
                    check_seen[c2] = true;
                    next_checks.push(c2);
                }
            }
        }
        if next_checks.is_empty() {
            break;
        }
        last_layer = next_checks.clone();
        frontier = next_checks;
    }
    let unreachable: Vec<usize> = (0..num_checks).filter(|&c| !check_seen[c]).collect();
    if !unreachable.is_empty() {
        unreachable
    } else {
        last_layer
    }
}

/// IRA-style construction (dual-diagonal accumulator parity, information
/// columns of weight 3) with linear-time encoding; used for long blocklengths
/// where a dense encoder would be impractical.
pub fn ira_construct(n: usize, rate_num: usize, rate_den: usize, seed: u64) -> Result<LdpcCode> {
    use rand::Rng;
    if rate_num == 0 || rate_num >= rate_den || n * rate_num % rate_den != 0 {
        return Err(Error::CodeConstruction(format!(
            "unusable rate {rate_num}/{rate_den} for n = {n}"
        )));
    }
    let k = n * rate_num / rate_den;
    let m = n - k;
    let mut rng = crate::rng::rng_from_seed(seed);
    let mut h1_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
    for j in 0..k {
        let mut picked = Vec::with_capacity(3);
        while picked.len() < 3 {
            let c = rng.random_range(0..m);
            if !picked.contains(&c) {
                picked.push(c);
            }
        }
        for c in picked {
            h1_rows[c].push(j);
        }
    }
    let mut rows = Vec::with_capacity(m);
    for (i, info) in h1_rows.iter().enumerate() {
        let mut row = info.clone();
        row.push(k + i);
        if i > 0 {
            row.push(k + i - 1);
        }
        rows.push(row);
    }
    let h = SparseH::from_rows(m, n, rows);
    Ok(LdpcCode {
        h,
        max_bp_iterations: 50,
        systematic_cols: (0..k).collect(),
        parity_cols: (k..n).collect(),
        encoder: Encoder::Accumulator { h1_rows },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_code() -> LdpcCode {
        let h = peg_construct(20, 10, 3);
        LdpcCode::from_h(h, 50).expect("n=20 PEG code should construct")
    }

    #[test]
    fn peg_is_regular_within_one() {
        let h = peg_construct(648, 324, 3);
        assert!(h.cols.iter().all(|c| c.len() == 3));
        let (lo, hi) = h
            .rows
            .iter()
            .fold((usize::MAX, 0), |(lo, hi), r| (lo.min(r.len()), hi.max(r.len())));
        assert!(lo >= 5 && hi <= 7, "row degrees {lo}..{hi}");
    }

    #[test]
    fn all_zero_message_encodes_to_all_zero_codeword() {
        let code = small_code();
        let cw = code.encode(&vec![0; code.k()]).unwrap();
        assert!(cw.iter().all(|&b| b == 0));
    }

    #[test]
    fn every_codeword_satisfies_the_syndrome() {
        let code = small_code();
        let mut rng = crate::rng::rng_from_seed(1);
        for _ in 0..200 {
            let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            assert!(code.h.syndrome_ok(&cw));
        }
    }

    #[test]
    fn encoder_is_linear() {
        let code = small_code();
        let mut rng = crate::rng::rng_from_seed(2);
        for _ in 0..50 {
            let a: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
            let b: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
            let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
            let ca = code.encode(&a).unwrap();
            let cb = code.encode(&b).unwrap();
            let cab = code.encode(&ab).unwrap();
            let xor: Vec<u8> = ca.iter().zip(&cb).map(|(x, y)| x ^ y).collect();
            assert_eq!(cab, xor);
        }
    }

    #[test]
    fn systematic_bits_sit_at_fixed_positions() {
        let code = small_code();
        let msg: Vec<u8> = (0..code.k()).map(|i| (i % 2) as u8).collect();
        let cw = code.encode(&msg).unwrap();
        for (j, &c) in code.systematic_cols().iter().enumerate() {
            assert_eq!(cw[c], msg[j]);
        }
    }

    #[test]
    fn noiseless_llrs_decode_exactly() {
        let code = small_code();
        let mut rng = crate::rng::rng_from_seed(3);
        for _ in 0..50 {
            let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
            let cw = code.encode(&msg).unwrap();
            let llrs: Vec<f64> = cw
                .iter()
                .map(|&b| if b == 0 { LLR_CLIP } else { -LLR_CLIP })
                .collect();
            let (out, converged) = code.decode(&llrs);
            assert!(converged);
            assert_eq!(out, msg);
        }
    }

    #[test]
    fn single_flip_corrected_at_high_llr() {
        let h = peg_construct(648, 324, 3);
        let code = LdpcCode::from_h(h, 50).unwrap();
        let mut rng = crate::rng::rng_from_seed(4);
        let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        for flip in [0usize, 100, 647] {
            let mut llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 8.0 } else { -8.0 }).collect();
            llrs[flip] = -llrs[flip];
            let (out, converged) = code.decode(&llrs);
            assert!(converged, "flip at {flip} not corrected");
            assert_eq!(out, msg);
        }
    }

    #[test]
    fn all_zero_llrs_flagged_non_converged() {
        let code = small_code();
        let (out, converged) = code.decode(&vec![0.0; code.n()]);
        assert!(!converged);
        assert_eq!(out, vec![0u8; code.k()]);
    }

    #[test]
    fn block_segmentation_pads_the_tail() {
        let code = small_code(); // k = 10
        let bits = vec![1u8; 25];
        let (blocks, pad) = code.encode_blocks(&bits).unwrap();
        assert_eq!(blocks.len(), 3);
        assert_eq!(pad, 5);
        // 150 bits -> 15 blocks, zero padding.
        let bits = vec![0u8; 150];
        let (blocks, pad) = code.encode_blocks(&bits).unwrap();
        assert_eq!((blocks.len(), pad), (15, 0));
    }

    #[test]
    fn ira_code_encodes_in_linear_time_and_validates() {
        let code = ira_construct(1200, 1, 2, 7).unwrap();
        assert_eq!((code.n(), code.k()), (1200, 600));
        let mut rng = crate::rng::rng_from_seed(5);
        let msg: Vec<u8> = (0..code.k()).map(|_| rng.random_range(0..2u8)).collect();
        let cw = code.encode(&msg).unwrap();
        assert!(code.h.syndrome_ok(&cw));
        let llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 9.0 } else { -9.0 }).collect();
        let (out, converged) = code.decode(&llrs);
        assert!(converged);
        assert_eq!(out, msg);
    }
}
