//! Per-scale embedding spaces and vector quantization.
//!
//! Each pyramid level `l` has its own codebook of `N_l` vectors of dimension
//! `K_l`, shared verbatim by transmitter and receiver. Quantization maps each
//! feature row to the index of its nearest codebook row (ties to the lowest
//! index); de-quantization is a plain row lookup.

use crate::exec;
use crate::nn::{Graph, NodeId, Tensor};
use crate::{Error, Result};

/// One codebook: `vectors` is `[N, K]`, row `n` is embedding vector `e_n`.
#[derive(Debug, Clone)]
pub struct EmbeddingSpace {
    pub level: usize,
    pub vectors: Tensor,
}

impl EmbeddingSpace {
    pub fn new(level: usize, vectors: Tensor) -> Result<Self> {
        let (n, _k) = vectors.dims2();
        if n == 0 {
            return Err(Error::EmptyCodebook(level));
        }
        if !vectors.is_finite() {
            return Err(Error::Config(format!(
                "codebook at level {level} contains non-finite entries"
            )));
        }
        Ok(Self { level, vectors })
    }

    pub fn num_vectors(&self) -> usize {
        self.vectors.dims2().0
    }

    pub fn dim(&self) -> usize {
        self.vectors.dims2().1
    }

    /// Bits needed per index: ceil(log2 N). A single-vector codebook costs
    /// zero bits (the index is always 0).
    pub fn bits_per_index(&self) -> usize {
        bits_for(self.num_vectors())
    }

    /// Parameter name of this codebook in checkpoints.
    pub fn param_name(level: usize) -> String {
        format!("embedding_space_{level}")
    }
}

pub fn bits_for(num_vectors: usize) -> usize {
    if num_vectors <= 1 {
        0
    } else {
        (usize::BITS - (num_vectors - 1).leading_zeros()) as usize
    }
}

/// Quantization indices for one pyramid level: `indices[m] ∈ [0, N_l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexStream {
    pub level: usize,
    pub indices: Vec<u32>,
}

/// Nearest-neighbor quantization of an `[M, K]` feature matrix.
///
/// Row `m` maps to `argmin_n ||f_m - e_n||_2`, ties broken by lowest index.
pub fn quantize(features: &Tensor, space: &EmbeddingSpace) -> Result<IndexStream> {
    let (m, k) = features.dims2();
    let (n, ek) = space.vectors.dims2();
    if n == 0 {
        return Err(Error::EmptyCodebook(space.level));
    }
    if k != ek {
        return Err(Error::DimensionMismatch(format!(
            "feature dim {k} vs codebook dim {ek} at level {}",
            space.level
        )));
    }
    let fd = features.data();
    let ed = space.vectors.data();
    let indices = exec::map_collect(m, |mi| {
        let row = &fd[mi * k..(mi + 1) * k];
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for ni in 0..n {
            let e = &ed[ni * k..(ni + 1) * k];
            let mut d = 0.0;
            for (a, b) in row.iter().zip(e) {
                let t = a - b;
                d += t * t;
            }
            if d < best_d {
                best_d = d;
                best = ni as u32;
            }
        }
        best
    });
    Ok(IndexStream {
        level: space.level,
        indices,
    })
}

/// Row lookup: output row `m` is an exact copy of `e_{s_m}`.
pub fn dequantize(indices: &IndexStream, space: &EmbeddingSpace) -> Result<Tensor> {
    let (n, k) = space.vectors.dims2();
    if n == 0 {
        return Err(Error::EmptyCodebook(space.level));
    }
    let ed = space.vectors.data();
    let mut out = Vec::with_capacity(indices.indices.len() * k);
    for &ix in &indices.indices {
        let i = ix as usize;
        if i >= n {
            return Err(Error::IndexOutOfRange {
                level: space.level,
                index: ix,
                num_vectors: n,
            });
        }
        out.extend_from_slice(&ed[i * k..(i + 1) * k]);
    }
    Ok(Tensor::new(vec![indices.indices.len(), k], out))
}

/// The two VQ loss values: `mean_m ||f_m - e_{s_m}||^2` for both terms (they
/// differ only in gradient routing, which lives in [`vq_loss_graph`]).
pub fn vq_loss_values(features: &Tensor, quantized: &Tensor) -> Result<(f64, f64)> {
    if features.shape() != quantized.shape() {
        return Err(Error::DimensionMismatch(format!(
            "features {:?} vs quantized {:?}",
            features.shape(),
            quantized.shape()
        )));
    }
    let (m, _k) = features.dims2();
    let sq: f64 = features
        .data()
        .iter()
        .zip(quantized.data())
        .map(|(f, q)| (f - q) * (f - q))
        .sum();
    let v = sq / m as f64;
    Ok((v, v))
}

/// Graph-side VQ loss terms for one level.
///
/// * embedding loss  = `mean_m ||sg[f_m] - e_{s_m}||^2` — gradient reaches the
///   codebook only;
/// * commitment loss = `mean_m ||sg[e_{s_m}] - f_m||^2` — gradient reaches the
///   features only.
///
/// `features` is an `[M, K]` node, `codebook` the `[N, K]` codebook node.
pub fn vq_loss_graph(
    g: &mut Graph,
    features: NodeId,
    codebook: NodeId,
    indices: &IndexStream,
) -> (NodeId, NodeId) {
    let (m, _k) = g.value(features).dims2();
    let rows = g.gather_rows(codebook, indices.indices.clone());

    let f_sg = g.detach(features);
    let d_embed = g.sub(f_sg, rows);
    let sq_embed = g.mul(d_embed, d_embed);
    let sum_embed = g.sum(sq_embed);
    let embedding = g.scale(sum_embed, 1.0 / m as f64);

    let rows_sg = g.detach(rows);
    let d_commit = g.sub(rows_sg, features);
    let sq_commit = g.mul(d_commit, d_commit);
    let sum_commit = g.sum(sq_commit);
    let commitment = g.scale(sum_commit, 1.0 / m as f64);

    (embedding, commitment)
}

/// Straight-through bind on the graph: forward value is the quantized rows,
/// backward passes the incoming gradient to `features` unchanged.
pub fn straight_through_graph(
    g: &mut Graph,
    features: NodeId,
    codebook: NodeId,
    indices: &IndexStream,
) -> NodeId {
    let rows = g.gather_rows(codebook, indices.indices.clone());
    g.straight_through(features, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn space(level: usize, rows: &[&[f64]]) -> EmbeddingSpace {
        let k = rows[0].len();
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        EmbeddingSpace::new(level, Tensor::new(vec![rows.len(), k], data)).unwrap()
    }

    #[test]
    fn nearest_neighbor_basic() {
        // d0^2 = 0.81 + 0.64 = 1.45, d1^2 = 0.01 + 0.04 = 0.05 -> index 1
        let e = space(1, &[&[0.0, 0.0], &[1.0, 1.0]]);
        let f = Tensor::new(vec![1, 2], vec![0.9, 0.8]);
        assert_eq!(quantize(&f, &e).unwrap().indices, vec![1]);
    }

    #[test]
    fn exact_row_maps_to_its_index() {
        let e = space(1, &[&[0.3, -0.7], &[1.0, 2.0], &[-0.5, 0.25]]);
        let f = Tensor::new(vec![1, 2], vec![1.0, 2.0]);
        assert_eq!(quantize(&f, &e).unwrap().indices, vec![1]);
    }

    #[test]
    fn equidistant_tie_breaks_to_lowest_index() {
        let e = space(1, &[&[0.0, 0.0], &[2.0, 0.0]]);
        let f = Tensor::new(vec![1, 2], vec![1.0, 0.0]);
        assert_eq!(quantize(&f, &e).unwrap().indices, vec![0]);
    }

    #[test]
    fn dequantize_is_row_lookup() {
        let e = space(2, &[&[0.0, 0.0], &[1.0, 1.0]]);
        let s = IndexStream {
            level: 2,
            indices: vec![1, 0],
        };
        let out = dequantize(&s, &e).unwrap();
        assert_eq!(out.data(), &[1.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn dequantize_rejects_out_of_range() {
        let e = space(1, &[&[0.0]]);
        let s = IndexStream {
            level: 1,
            indices: vec![1],
        };
        assert!(matches!(
            dequantize(&s, &e),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn single_vector_codebook_is_constant() {
        let e = space(4, &[&[0.5, -0.5, 0.25]]);
        let s = IndexStream {
            level: 4,
            indices: vec![0; 5],
        };
        let out = dequantize(&s, &e).unwrap();
        assert!(out
            .data()
            .chunks(3)
            .all(|r| r == [0.5, -0.5, 0.25]));
    }

    #[test]
    fn quantize_dequantize_idempotent_on_distinct_rows() {
        let mut rng = rng_from_seed(5);
        let n = 12;
        let k = 4;
        let data: Vec<f64> = (0..n * k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let e = EmbeddingSpace::new(1, Tensor::new(vec![n, k], data)).unwrap();
        let s = IndexStream {
            level: 1,
            indices: (0..n as u32).collect(),
        };
        let f = dequantize(&s, &e).unwrap();
        assert_eq!(quantize(&f, &e).unwrap().indices, s.indices);
    }

    #[test]
    fn loss_values_match_elementwise_recomputation() {
        let mut rng = rng_from_seed(9);
        let f = Tensor::new(
            vec![4, 2],
            (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let q = Tensor::new(
            vec![4, 2],
            (0..8).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let (emb, com) = vq_loss_values(&f, &q).unwrap();
        let mut expect = 0.0;
        for m in 0..4 {
            let mut d = 0.0;
            for j in 0..2 {
                let t = f.data()[m * 2 + j] - q.data()[m * 2 + j];
                d += t * t;
            }
            expect += d;
        }
        expect /= 4.0;
        assert!((emb - expect).abs() < 1e-12);
        assert!((com - expect).abs() < 1e-12);
    }

    #[test]
    fn loss_zero_iff_features_on_codebook_rows() {
        let f = Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]);
        let (e, c) = vq_loss_values(&f, &f).unwrap();
        assert_eq!((e, c), (0.0, 0.0));
    }

    #[test]
    fn stop_gradient_routing_is_exact() {
        // f = (1,0), e = (0,0): both terms 1.0; embedding term ignores f,
        // commitment term ignores e.
        let mut g = Graph::new();
        let f = g.param(Tensor::new(vec![1, 2], vec![1.0, 0.0]));
        let e = g.param(Tensor::new(vec![1, 2], vec![0.0, 0.0]));
        let s = IndexStream {
            level: 1,
            indices: vec![0],
        };
        let (emb, com) = vq_loss_graph(&mut g, f, e, &s);
        assert!((g.value(emb).item() - 1.0).abs() < 1e-12);
        assert!((g.value(com).item() - 1.0).abs() < 1e-12);

        let grads_emb = g.backward(emb);
        assert!(grads_emb.get(f).is_none(), "embedding loss must not reach f");
        assert_eq!(grads_emb.get(e).unwrap().data(), &[-2.0, 0.0]);

        let grads_com = g.backward(com);
        assert!(grads_com.get(e).is_none(), "commitment loss must not reach e");
        assert_eq!(grads_com.get(f).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn embedding_step_moves_codebook_toward_assigned_mean() {
        // One gradient step on the embedding loss alone pulls each used row
        // toward the mean of the features assigned to it.
        let mut rng = rng_from_seed(13);
        let features = Tensor::new(
            vec![6, 2],
            (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
        );
        let codebook = Tensor::new(vec![2, 2], vec![0.9, 0.9, -0.9, -0.9]);
        let e = EmbeddingSpace::new(1, codebook.clone()).unwrap();
        let s = quantize(&features, &e).unwrap();

        let mut g = Graph::new();
        let fid = g.input(features.clone());
        let eid = g.param(codebook.clone());
        let (emb, _) = vq_loss_graph(&mut g, fid, eid, &s);
        let grads = g.backward(emb);
        let ge = grads.get(eid).unwrap();

        let lr = 1e-3;
        for n in 0..2 {
            let assigned: Vec<usize> = s
                .indices
                .iter()
                .enumerate()
                .filter(|(_, &ix)| ix as usize == n)
                .map(|(m, _)| m)
                .collect();
            if assigned.is_empty() {
                continue;
            }
            let mean: Vec<f64> = (0..2)
                .map(|j| {
                    assigned.iter().map(|&m| features.data()[m * 2 + j]).sum::<f64>()
                        / assigned.len() as f64
                })
                .collect();
            let before: f64 = (0..2)
                .map(|j| (codebook.data()[n * 2 + j] - mean[j]).powi(2))
                .sum();
            let after: f64 = (0..2)
                .map(|j| {
                    (codebook.data()[n * 2 + j] - lr * ge.data()[n * 2 + j] - mean[j]).powi(2)
                })
                .sum();
            assert!(after < before, "row {n} did not move toward its mean");
        }
    }

    #[test]
    fn bits_for_powers_and_edges() {
        assert_eq!(bits_for(1), 0);
        assert_eq!(bits_for(2), 1);
        assert_eq!(bits_for(3), 2);
        assert_eq!(bits_for(64), 6);
        assert_eq!(bits_for(65), 7);
    }
}
