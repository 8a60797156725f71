//! The autodiff tape: forward ops and their backward rules.

use crate::exec;
use crate::nn::Tensor;

/// Handle to a node on the tape. Ids are topologically ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with batch statistics (training).
    Batch,
    /// Normalize with running statistics (evaluation).
    Running,
}

/// Batch statistics observed by a batch-norm node in `Batch` mode; the caller
/// folds them into the running estimates.
#[derive(Debug, Clone)]
pub struct BnUpdate {
    pub batch_mean: Vec<f64>,
    pub batch_var_unbiased: Vec<f64>,
}

enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    /// `a * x + b`
    Affine(NodeId, f64, f64),
    Abs(NodeId),
    Mean(NodeId),
    Sum(NodeId),
    Conv2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    },
    ConvT2d {
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    },
    BatchNorm {
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        x_hat: Tensor,
        inv_std: Vec<f64>,
        mode: BnMode,
    },
    PRelu {
        input: NodeId,
        slope: NodeId,
    },
    LeakyRelu {
        input: NodeId,
        alpha: f64,
    },
    Sigmoid(NodeId),
    LnClamped {
        input: NodeId,
        eps: f64,
    },
    Clamp01(NodeId),
    Detach,
    Gather {
        table: NodeId,
        indices: Vec<u32>,
    },
    StraightThrough {
        features: NodeId,
    },
    Upsample {
        input: NodeId,
        factor: usize,
    },
    ConcatC(Vec<NodeId>),
    Reshape(NodeId),
    ChannelsToRows(NodeId),
    RowsToChannels {
        input: NodeId,
        n: usize,
        h: usize,
        w: usize,
    },
    /// `x^p` elementwise (callers keep x > 0 for fractional p).
    PowScalar(NodeId, f64),
    /// tensor * broadcast scalar node
    MulBroadcast {
        tensor: NodeId,
        scalar: NodeId,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by node id.
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, id: NodeId) -> Option<Tensor> {
        self.grads.get_mut(id.0).and_then(|g| g.take())
    }
}

/// Define-by-run tape.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Leaf that does not require gradients (inputs, constants).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    /// Leaf that accumulates gradients (parameters).
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), needs)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x - y)
                .collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Sub(a, b), needs)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let v = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x * y)
                .collect(),
        );
        let needs = self.needs(a) || self.needs(b);
        self.push(v, Op::Mul(a, b), needs)
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: NodeId, scale: f64, shift: f64) -> NodeId {
        let v = self.value(x).map(|t| scale * t + shift);
        let needs = self.needs(x);
        self.push(v, Op::Affine(x, scale, shift), needs)
    }

    pub fn scale(&mut self, x: NodeId, scale: f64) -> NodeId {
        self.affine(x, scale, 0.0)
    }

    pub fn abs(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(f64::abs);
        let needs = self.needs(x);
        self.push(v, Op::Abs(x), needs)
    }

    pub fn mean(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).data().iter().sum::<f64>() / self.value(x).numel() as f64);
        let needs = self.needs(x);
        self.push(v, Op::Mean(x), needs)
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(x).data().iter().sum::<f64>());
        let needs = self.needs(x);
        self.push(v, Op::Sum(x), needs)
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|t| 1.0 / (1.0 + (-t).exp()));
        let needs = self.needs(x);
        self.push(v, Op::Sigmoid(x), needs)
    }

    /// `ln(max(x, eps))` — the soft-clamped log used by the GAN loss.
    pub fn ln_clamped(&mut self, x: NodeId, eps: f64) -> NodeId {
        let v = self.value(x).map(|t| t.max(eps).ln());
        let needs = self.needs(x);
        self.push(v, Op::LnClamped { input: x, eps }, needs)
    }

    pub fn clamp01(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|t| t.clamp(0.0, 1.0));
        let needs = self.needs(x);
        self.push(v, Op::Clamp01(x), needs)
    }

    /// Identity forward, zero gradient backward (the stop-gradient `sg[·]`).
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        self.push(v, Op::Detach, false)
    }

    pub fn leaky_relu(&mut self, x: NodeId, alpha: f64) -> NodeId {
        let v = self.value(x).map(|t| if t > 0.0 { t } else { alpha * t });
        let needs = self.needs(x);
        self.push(v, Op::LeakyRelu { input: x, alpha }, needs)
    }

    /// PReLU with one learnable slope per channel (`slope` has shape `[C]`,
    /// input is `[N, C, H, W]`).
    pub fn prelu(&mut self, x: NodeId, slope: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        assert_eq!(self.value(slope).shape(), &[c], "PReLU slope per channel");
        let xs = self.value(x).data();
        let a = self.value(slope).data();
        let mut out = vec![0.0; xs.len()];
        let plane = h * w;
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let ac = a[ci];
                for i in base..base + plane {
                    let t = xs[i];
                    out[i] = if t > 0.0 { t } else { ac * t };
                }
            }
        }
        let v = Tensor::new(self.value(x).shape().to_vec(), out);
        let needs = self.needs(x) || self.needs(slope);
        self.push(v, Op::PRelu { input: x, slope }, needs)
    }

    /// Rows of a `[N, K]` table selected by `indices` (length M) -> `[M, K]`.
    pub fn gather_rows(&mut self, table: NodeId, indices: Vec<u32>) -> NodeId {
        let (n, k) = self.value(table).dims2();
        let td = self.value(table).data();
        let mut out = Vec::with_capacity(indices.len() * k);
        for &ix in &indices {
            let ix = ix as usize;
            assert!(ix < n, "gather index {ix} out of range {n}");
            out.extend_from_slice(&td[ix * k..(ix + 1) * k]);
        }
        let v = Tensor::new(vec![indices.len(), k], out);
        let needs = self.needs(table);
        self.push(v, Op::Gather { table, indices }, needs)
    }

    /// Straight-through bind: forward takes the value of `quantized`, backward
    /// routes the incoming gradient untouched to `features` (identity
    /// Jacobian across the quantization step); `quantized` receives nothing.
    pub fn straight_through(&mut self, features: NodeId, quantized: NodeId) -> NodeId {
        assert_eq!(
            self.value(features).shape(),
            self.value(quantized).shape(),
            "straight-through operands must match"
        );
        let v = self.value(quantized).clone();
        let needs = self.needs(features);
        self.push(v, Op::StraightThrough { features }, needs)
    }

    /// Nearest-neighbor upsampling by an integer factor.
    pub fn upsample_nearest(&mut self, x: NodeId, factor: usize) -> NodeId {
        assert!(factor >= 1);
        let (n, c, h, w) = self.value(x).dims4();
        let (oh, ow) = (h * factor, w * factor);
        let xs = self.value(x).data();
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let src = &xs[nc * h * w..(nc + 1) * h * w];
            let dst = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
            for y in 0..oh {
                let sy = y / factor;
                for x2 in 0..ow {
                    dst[y * ow + x2] = src[sy * w + x2 / factor];
                }
            }
        }
        let v = Tensor::new(vec![n, c, oh, ow], out);
        let needs = self.needs(x);
        self.push(v, Op::Upsample { input: x, factor }, needs)
    }

    /// Channel-wise concatenation of `[N, C_i, H, W]` tensors.
    pub fn concat_channels(&mut self, xs: &[NodeId]) -> NodeId {
        assert!(!xs.is_empty());
        let (n, _, h, w) = self.value(xs[0]).dims4();
        let mut c_total = 0;
        for &x in xs {
            let (ni, ci, hi, wi) = self.value(x).dims4();
            assert!(
                ni == n && hi == h && wi == w,
                "concat shape mismatch: {:?} vs [n={n}, h={h}, w={w}]",
                self.value(x).shape()
            );
            c_total += ci;
        }
        let plane = h * w;
        let mut out = vec![0.0; n * c_total * plane];
        for ni in 0..n {
            let mut c_off = 0;
            for &x in xs {
                let ci = self.value(x).shape()[1];
                let src = self.value(x).data();
                let src_base = ni * ci * plane;
                let dst_base = (ni * c_total + c_off) * plane;
                out[dst_base..dst_base + ci * plane]
                    .copy_from_slice(&src[src_base..src_base + ci * plane]);
                c_off += ci;
            }
        }
        let v = Tensor::new(vec![n, c_total, h, w], out);
        let needs = xs.iter().any(|&x| self.needs(x));
        self.push(v, Op::ConcatC(xs.to_vec()), needs)
    }

    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> NodeId {
        let v = self.value(x).reshape(shape);
        let needs = self.needs(x);
        self.push(v, Op::Reshape(x), needs)
    }

    /// `[N, C, H, W]` to the `[N·H·W, C]` feature-row view: image `n`,
    /// position `(y, x)` becomes row `n·H·W + y·W + x`. Lossless and exactly
    /// inverted by [`Graph::rows_to_channels`].
    pub fn channels_to_rows(&mut self, x: NodeId) -> NodeId {
        let (n, c, h, w) = self.value(x).dims4();
        let plane = h * w;
        let xs = self.value(x).data();
        let mut out = vec![0.0; xs.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for pos in 0..plane {
                    out[(ni * plane + pos) * c + ci] = xs[base + pos];
                }
            }
        }
        let v = Tensor::new(vec![n * plane, c], out);
        let needs = self.needs(x);
        self.push(v, Op::ChannelsToRows(x), needs)
    }

    /// Inverse of [`Graph::channels_to_rows`]: `[N·H·W, C]` back to
    /// `[N, C, H, W]`.
    pub fn rows_to_channels(&mut self, x: NodeId, n: usize, h: usize, w: usize) -> NodeId {
        let (m, c) = self.value(x).dims2();
        assert_eq!(m, n * h * w, "row count {m} vs {n}x{h}x{w}");
        let plane = h * w;
        let xs = self.value(x).data();
        let mut out = vec![0.0; xs.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                for pos in 0..plane {
                    out[base + pos] = xs[(ni * plane + pos) * c + ci];
                }
            }
        }
        let v = Tensor::new(vec![n, c, h, w], out);
        let needs = self.needs(x);
        self.push(v, Op::RowsToChannels { input: x, n, h, w }, needs)
    }

    /// Elementwise `x^p`; callers must keep `x > 0` when `p` is fractional.
    pub fn pow_scalar(&mut self, x: NodeId, p: f64) -> NodeId {
        let v = self.value(x).map(|t| t.powf(p));
        let needs = self.needs(x);
        self.push(v, Op::PowScalar(x, p), needs)
    }

    /// Broadcast-multiplies a tensor by a one-element scalar node.
    pub fn mul_broadcast(&mut self, tensor: NodeId, scalar: NodeId) -> NodeId {
        assert_eq!(self.value(scalar).numel(), 1, "scalar operand");
        let s = self.value(scalar).data()[0];
        let v = self.value(tensor).map(|t| t * s);
        let needs = self.needs(tensor) || self.needs(scalar);
        self.push(v, Op::MulBroadcast { tensor, scalar }, needs)
    }

    /// 2-D convolution. `input` is `[N, Ci, H, W]`, `weight`
    /// `[Co, Ci, K, K]`, `bias` `[Co]`.
    pub fn conv2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let (n, ci, h, w) = self.value(input).dims4();
        let ws = self.value(weight).shape().to_vec();
        assert_eq!(ws.len(), 4, "conv weight must be rank 4");
        let (co, wci, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(ci, wci, "conv channel mismatch: input {ci}, weight {wci}");
        assert_eq!(self.value(bias).shape(), &[co]);
        let oh = conv_out_len(h, kh, stride, pad);
        let ow = conv_out_len(w, kw, stride, pad);
        assert!(oh > 0 && ow > 0, "conv output collapsed to zero");

        let xs = self.value(input).data();
        let wd = self.value(weight).data();
        let bd = self.value(bias).data();
        let mut out = vec![0.0; n * co * oh * ow];
        // One output plane per (n, co) pair; planes are disjoint.
        exec::for_each_chunk_mut(&mut out, oh * ow, |slab, plane_out| {
            let ni = slab / co;
            let coi = slab % co;
            plane_out.iter_mut().for_each(|v| *v = bd[coi]);
            for cii in 0..ci {
                let in_plane = &xs[(ni * ci + cii) * h * w..(ni * ci + cii + 1) * h * w];
                for khi in 0..kh {
                    let (oh_lo, oh_hi) = valid_out_range(h, oh, stride, pad, khi);
                    for kwi in 0..kw {
                        let (ow_lo, ow_hi) = valid_out_range(w, ow, stride, pad, kwi);
                        if ow_lo >= ow_hi {
                            continue;
                        }
                        let wv = wd[((coi * ci + cii) * kh + khi) * kw + kwi];
                        if wv == 0.0 {
                            continue;
                        }
                        for ohi in oh_lo..oh_hi {
                            let ih = ohi * stride + khi - pad;
                            let in_row = &in_plane[ih * w..(ih + 1) * w];
                            let out_row = &mut plane_out[ohi * ow..(ohi + 1) * ow];
                            if stride == 1 {
                                // Contiguous saxpy; vectorizes.
                                let src = &in_row[ow_lo + kwi - pad..ow_hi + kwi - pad];
                                for (o, x) in out_row[ow_lo..ow_hi].iter_mut().zip(src) {
                                    *o += wv * x;
                                }
                            } else {
                                for owi in ow_lo..ow_hi {
                                    out_row[owi] += wv * in_row[owi * stride + kwi - pad];
                                }
                            }
                        }
                    }
                }
            }
        });
        let v = Tensor::new(vec![n, co, oh, ow], out);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        self.push(
            v,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            needs,
        )
    }

    /// Transposed 2-D convolution. `input` is `[N, Ci, H, W]`, `weight`
    /// `[Ci, Co, K, K]`, `bias` `[Co]`. Output spatial size is
    /// `(H - 1) * stride - 2 * pad + K`.
    pub fn conv_transpose2d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
    ) -> NodeId {
        let (n, ci, h, w) = self.value(input).dims4();
        let ws = self.value(weight).shape().to_vec();
        assert_eq!(ws.len(), 4);
        let (wci, co, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        assert_eq!(ci, wci, "conv_transpose channel mismatch");
        assert_eq!(self.value(bias).shape(), &[co]);
        let oh = (h - 1) * stride + kh - 2 * pad;
        let ow = (w - 1) * stride + kw - 2 * pad;

        let xs = self.value(input).data();
        let wd = self.value(weight).data();
        let bd = self.value(bias).data();
        let mut out = vec![0.0; n * co * oh * ow];
        exec::for_each_chunk_mut(&mut out, oh * ow, |slab, plane_out| {
            let ni = slab / co;
            let coi = slab % co;
            plane_out.iter_mut().for_each(|v| *v = bd[coi]);
            for cii in 0..ci {
                let in_plane = &xs[(ni * ci + cii) * h * w..(ni * ci + cii + 1) * h * w];
                for khi in 0..kh {
                    for kwi in 0..kw {
                        let wv = wd[((cii * co + coi) * kh + khi) * kw + kwi];
                        if wv == 0.0 {
                            continue;
                        }
                        // out[ih*stride + khi - pad, iw*stride + kwi - pad] += x * wv
                        for ihi in 0..h {
                            let ohi = ihi as i64 * stride as i64 + khi as i64 - pad as i64;
                            if ohi < 0 || ohi >= oh as i64 {
                                continue;
                            }
                            let in_row = &in_plane[ihi * w..(ihi + 1) * w];
                            let out_row =
                                &mut plane_out[ohi as usize * ow..(ohi as usize + 1) * ow];
                            for iwi in 0..w {
                                let owi = iwi as i64 * stride as i64 + kwi as i64 - pad as i64;
                                if owi < 0 || owi >= ow as i64 {
                                    continue;
                                }
                                out_row[owi as usize] += wv * in_row[iwi];
                            }
                        }
                    }
                }
            }
        });
        let v = Tensor::new(vec![n, co, oh, ow], out);
        let needs = self.needs(input) || self.needs(weight) || self.needs(bias);
        self.push(
            v,
            Op::ConvT2d {
                input,
                weight,
                bias,
                stride,
                pad,
            },
            needs,
        )
    }

    /// Batch normalization over `[N, C, H, W]`. In `Batch` mode the node
    /// normalizes with batch statistics and returns them as a [`BnUpdate`]
    /// for the caller to fold into the running estimates; in `Running` mode
    /// it normalizes with the supplied running statistics.
    pub fn batch_norm(
        &mut self,
        input: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[f64],
        running_var: &[f64],
        eps: f64,
        mode: BnMode,
    ) -> (NodeId, Option<BnUpdate>) {
        let (n, c, h, w) = self.value(input).dims4();
        assert_eq!(self.value(gamma).shape(), &[c]);
        assert_eq!(self.value(beta).shape(), &[c]);
        let plane = h * w;
        let count = n * plane;
        let xs = self.value(input).data();

        let (mean, var, update) = match mode {
            BnMode::Batch => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ci in 0..c {
                    let mut s = 0.0;
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        s += xs[base..base + plane].iter().sum::<f64>();
                    }
                    let m = s / count as f64;
                    let mut v = 0.0;
                    for ni in 0..n {
                        let base = (ni * c + ci) * plane;
                        v += xs[base..base + plane]
                            .iter()
                            .map(|&x| (x - m) * (x - m))
                            .sum::<f64>();
                    }
                    mean[ci] = m;
                    var[ci] = v / count as f64;
                }
                let bessel = if count > 1 {
                    count as f64 / (count as f64 - 1.0)
                } else {
                    1.0
                };
                let update = BnUpdate {
                    batch_mean: mean.clone(),
                    batch_var_unbiased: var.iter().map(|&v| v * bessel).collect(),
                };
                (mean, var, Some(update))
            }
            BnMode::Running => {
                assert_eq!(running_mean.len(), c);
                assert_eq!(running_var.len(), c);
                (running_mean.to_vec(), running_var.to_vec(), None)
            }
        };

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut x_hat = vec![0.0; xs.len()];
        let mut out = vec![0.0; xs.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * plane;
                let (m, is, gc, bc) = (mean[ci], inv_std[ci], g[ci], b[ci]);
                for i in base..base + plane {
                    let xh = (xs[i] - m) * is;
                    x_hat[i] = xh;
                    out[i] = gc * xh + bc;
                }
            }
        }
        let v = Tensor::new(vec![n, c, h, w], out);
        let needs = self.needs(input) || self.needs(gamma) || self.needs(beta);
        let id = self.push(
            v,
            Op::BatchNorm {
                input,
                gamma,
                beta,
                x_hat: Tensor::new(vec![n, c, h, w], x_hat),
                inv_std,
                mode,
            },
            needs,
        );
        (id, update)
    }

    /// Reverse pass from a scalar `loss` node. Returns per-node gradients.
    pub fn backward(&self, loss: NodeId) -> Gradients {
        assert_eq!(self.value(loss).numel(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(
            self.value(loss).shape().to_vec(),
            vec![1.0],
        ));

        for id in (0..=loss.0).rev() {
            if !self.nodes[id].needs_grad {
                grads[id] = None;
                continue;
            }
            let Some(gout) = grads[id].take() else {
                continue;
            };
            self.backprop_node(id, &gout, &mut grads);
        }
        Gradients { grads }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], id: NodeId, delta: Tensor) {
        if !self.needs(id) {
            return;
        }
        match &mut grads[id.0] {
            Some(g) => g.add_assign(&delta),
            slot @ None => *slot = Some(delta),
        }
    }

    #[allow(clippy::too_many_lines)]
    fn backprop_node(&self, id: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {
                // Gradient stays on the leaf; put it back for the caller.
                grads[id] = Some(gout.clone());
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gout.clone());
                self.accumulate(grads, *b, gout.map(|g| -g));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let ga = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(bv.data())
                        .map(|(g, y)| g * y)
                        .collect(),
                );
                let gb = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(av.data())
                        .map(|(g, x)| g * x)
                        .collect(),
                );
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Affine(x, scale, _shift) => {
                self.accumulate(grads, *x, gout.map(|g| g * scale));
            }
            Op::Abs(x) => {
                let xv = self.value(*x);
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(g, x)| {
                            if *x > 0.0 {
                                *g
                            } else if *x < 0.0 {
                                -*g
                            } else {
                                0.0
                            }
                        })
                        .collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::Mean(x) => {
                let n = self.value(*x).numel() as f64;
                let g = gout.item() / n;
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), g));
            }
            Op::Sum(x) => {
                let g = gout.item();
                self.accumulate(grads, *x, Tensor::full(self.value(*x).shape(), g));
            }
            Op::Sigmoid(x) => {
                let yv = &self.nodes[id].value;
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(yv.data())
                        .map(|(g, y)| g * y * (1.0 - y))
                        .collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::LnClamped { input, eps } => {
                let xv = self.value(*input);
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(g, x)| if *x > *eps { g / x } else { 0.0 })
                        .collect(),
                );
                self.accumulate(grads, *input, gx);
            }
            Op::Clamp01(x) => {
                let xv = self.value(*x);
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(g, x)| if *x > 0.0 && *x < 1.0 { *g } else { 0.0 })
                        .collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::Detach => {}
            Op::LeakyRelu { input, alpha } => {
                let xv = self.value(*input);
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(g, x)| if *x > 0.0 { *g } else { g * alpha })
                        .collect(),
                );
                self.accumulate(grads, *input, gx);
            }
            Op::PRelu { input, slope } => {
                let (n, c, h, w) = self.value(*input).dims4();
                let plane = h * w;
                let xv = self.value(*input).data();
                let av = self.value(*slope).data();
                let mut gx = vec![0.0; xv.len()];
                let mut ga = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        let ac = av[ci];
                        for i in base..base + plane {
                            let (x, g) = (xv[i], gout.data()[i]);
                            if x > 0.0 {
                                gx[i] = g;
                            } else {
                                gx[i] = g * ac;
                                ga[ci] += g * x;
                            }
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(vec![n, c, h, w], gx));
                self.accumulate(grads, *slope, Tensor::new(vec![c], ga));
            }
            Op::Gather { table, indices } => {
                let (n, k) = self.value(*table).dims2();
                let mut gt = vec![0.0; n * k];
                for (m, &ix) in indices.iter().enumerate() {
                    let gi = &gout.data()[m * k..(m + 1) * k];
                    let row = &mut gt[ix as usize * k..(ix as usize + 1) * k];
                    for (r, g) in row.iter_mut().zip(gi) {
                        *r += g;
                    }
                }
                self.accumulate(grads, *table, Tensor::new(vec![n, k], gt));
            }
            Op::StraightThrough { features } => {
                self.accumulate(grads, *features, gout.clone());
            }
            Op::Upsample { input, factor } => {
                let (n, c, h, w) = self.value(*input).dims4();
                let f = *factor;
                let (oh, ow) = (h * f, w * f);
                let mut gx = vec![0.0; n * c * h * w];
                for nc in 0..n * c {
                    let src = &gout.data()[nc * oh * ow..(nc + 1) * oh * ow];
                    let dst = &mut gx[nc * h * w..(nc + 1) * h * w];
                    for y in 0..oh {
                        let row = &src[y * ow..(y + 1) * ow];
                        let dy = y / f;
                        for (x2, g) in row.iter().enumerate() {
                            dst[dy * w + x2 / f] += g;
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(vec![n, c, h, w], gx));
            }
            Op::ConcatC(xs) => {
                let (n, c_total, h, w) = self.nodes[id].value.dims4();
                let plane = h * w;
                let mut c_off = 0;
                for &x in xs {
                    let ci = self.value(x).shape()[1];
                    if self.needs(x) {
                        let mut gx = vec![0.0; n * ci * plane];
                        for ni in 0..n {
                            let src_base = (ni * c_total + c_off) * plane;
                            let dst_base = ni * ci * plane;
                            gx[dst_base..dst_base + ci * plane]
                                .copy_from_slice(&gout.data()[src_base..src_base + ci * plane]);
                        }
                        self.accumulate(grads, x, Tensor::new(vec![n, ci, h, w], gx));
                    }
                    c_off += ci;
                }
            }
            Op::Reshape(x) => {
                let gx = gout.reshape(self.value(*x).shape());
                self.accumulate(grads, *x, gx);
            }
            Op::ChannelsToRows(x) => {
                let (n, c, h, w) = self.value(*x).dims4();
                let plane = h * w;
                let mut gx = vec![0.0; n * c * plane];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        for pos in 0..plane {
                            gx[base + pos] = gout.data()[(ni * plane + pos) * c + ci];
                        }
                    }
                }
                self.accumulate(grads, *x, Tensor::new(vec![n, c, h, w], gx));
            }
            Op::RowsToChannels { input, n, h, w } => {
                let (m, c) = self.value(*input).dims2();
                let plane = h * w;
                let mut gx = vec![0.0; m * c];
                for ni in 0..*n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        for pos in 0..plane {
                            gx[(ni * plane + pos) * c + ci] = gout.data()[base + pos];
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(vec![m, c], gx));
            }
            Op::PowScalar(x, p) => {
                let xv = self.value(*x);
                let gx = Tensor::new(
                    gout.shape().to_vec(),
                    gout.data()
                        .iter()
                        .zip(xv.data())
                        .map(|(g, x)| g * p * x.powf(p - 1.0))
                        .collect(),
                );
                self.accumulate(grads, *x, gx);
            }
            Op::MulBroadcast { tensor, scalar } => {
                let s = self.value(*scalar).data()[0];
                let tv = self.value(*tensor);
                self.accumulate(grads, *tensor, gout.map(|g| g * s));
                let ds: f64 = gout
                    .data()
                    .iter()
                    .zip(tv.data())
                    .map(|(g, t)| g * t)
                    .sum();
                self.accumulate(
                    grads,
                    *scalar,
                    Tensor::new(self.value(*scalar).shape().to_vec(), vec![ds]),
                );
            }
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                self.conv2d_backward(*input, *weight, *bias, *stride, *pad, gout, grads);
            }
            Op::ConvT2d {
                input,
                weight,
                bias,
                stride,
                pad,
            } => {
                self.conv_t2d_backward(*input, *weight, *bias, *stride, *pad, gout, grads);
            }
            Op::BatchNorm {
                input,
                gamma,
                beta,
                x_hat,
                inv_std,
                mode,
            } => {
                let (n, c, h, w) = self.value(*input).dims4();
                let plane = h * w;
                let count = (n * plane) as f64;
                let g = self.value(*gamma).data();
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        for i in base..base + plane {
                            let dy = gout.data()[i];
                            sum_dy[ci] += dy;
                            sum_dy_xhat[ci] += dy * x_hat.data()[i];
                        }
                    }
                }
                for ci in 0..c {
                    dgamma[ci] = sum_dy_xhat[ci];
                    dbeta[ci] = sum_dy[ci];
                }
                let mut gx = vec![0.0; n * c * plane];
                for ni in 0..n {
                    for ci in 0..c {
                        let base = (ni * c + ci) * plane;
                        let k = g[ci] * inv_std[ci];
                        match mode {
                            BnMode::Batch => {
                                let m_dy = sum_dy[ci] / count;
                                let m_dyxh = sum_dy_xhat[ci] / count;
                                for i in base..base + plane {
                                    let dy = gout.data()[i];
                                    gx[i] = k * (dy - m_dy - x_hat.data()[i] * m_dyxh);
                                }
                            }
                            BnMode::Running => {
                                for i in base..base + plane {
                                    gx[i] = k * gout.data()[i];
                                }
                            }
                        }
                    }
                }
                self.accumulate(grads, *input, Tensor::new(vec![n, c, h, w], gx));
                self.accumulate(grads, *gamma, Tensor::new(vec![c], dgamma));
                self.accumulate(grads, *beta, Tensor::new(vec![c], dbeta));
            }
        }
    }

    fn conv2d_backward(
        &self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
        gout: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (n, ci, h, w) = self.value(input).dims4();
        let ws = self.value(weight).shape().to_vec();
        let (co, kh, kw) = (ws[0], ws[2], ws[3]);
        let (_, _, oh, ow) = gout.dims4();
        let xs = self.value(input).data();
        let wd = self.value(weight).data();
        let go = gout.data();

        if self.needs(bias) {
            let mut db = vec![0.0; co];
            for ni in 0..n {
                for coi in 0..co {
                    let base = (ni * co + coi) * oh * ow;
                    db[coi] += go[base..base + oh * ow].iter().sum::<f64>();
                }
            }
            self.accumulate(grads, bias, Tensor::new(vec![co], db));
        }

        if self.needs(weight) {
            let mut dw = vec![0.0; co * ci * kh * kw];
            // One weight slab per co; slabs are disjoint.
            exec::for_each_chunk_mut(&mut dw, ci * kh * kw, |coi, w_slab| {
                for ni in 0..n {
                    let go_plane = &go[(ni * co + coi) * oh * ow..(ni * co + coi + 1) * oh * ow];
                    for cii in 0..ci {
                        let in_plane = &xs[(ni * ci + cii) * h * w..(ni * ci + cii + 1) * h * w];
                        for khi in 0..kh {
                            let (oh_lo, oh_hi) = valid_out_range(h, oh, stride, pad, khi);
                            for kwi in 0..kw {
                                let (ow_lo, ow_hi) = valid_out_range(w, ow, stride, pad, kwi);
                                if ow_lo >= ow_hi {
                                    continue;
                                }
                                let mut acc = 0.0;
                                for ohi in oh_lo..oh_hi {
                                    let ih = ohi * stride + khi - pad;
                                    let in_row = &in_plane[ih * w..(ih + 1) * w];
                                    let go_row = &go_plane[ohi * ow..(ohi + 1) * ow];
                                    if stride == 1 {
                                        // Contiguous dot product; vectorizes.
                                        let src = &in_row[ow_lo + kwi - pad..ow_hi + kwi - pad];
                                        acc += go_row[ow_lo..ow_hi]
                                            .iter()
                                            .zip(src)
                                            .map(|(g, x)| g * x)
                                            .sum::<f64>();
                                    } else {
                                        for owi in ow_lo..ow_hi {
                                            acc += in_row[owi * stride + kwi - pad] * go_row[owi];
                                        }
                                    }
                                }
                                w_slab[(cii * kh + khi) * kw + kwi] += acc;
                            }
                        }
                    }
                }
            });
            self.accumulate(grads, weight, Tensor::new(vec![co, ci, kh, kw], dw));
        }

        if self.needs(input) {
            let mut dx = vec![0.0; n * ci * h * w];
            exec::for_each_chunk_mut(&mut dx, ci * h * w, |ni, dx_img| {
                for coi in 0..co {
                    let go_plane = &go[(ni * co + coi) * oh * ow..(ni * co + coi + 1) * oh * ow];
                    for cii in 0..ci {
                        let dx_plane = &mut dx_img[cii * h * w..(cii + 1) * h * w];
                        for khi in 0..kh {
                            let (oh_lo, oh_hi) = valid_out_range(h, oh, stride, pad, khi);
                            for kwi in 0..kw {
                                let (ow_lo, ow_hi) = valid_out_range(w, ow, stride, pad, kwi);
                                if ow_lo >= ow_hi {
                                    continue;
                                }
                                let wv = wd[((coi * ci + cii) * kh + khi) * kw + kwi];
                                if wv == 0.0 {
                                    continue;
                                }
                                for ohi in oh_lo..oh_hi {
                                    let ih = ohi * stride + khi - pad;
                                    let go_row = &go_plane[ohi * ow..(ohi + 1) * ow];
                                    let dx_row = &mut dx_plane[ih * w..(ih + 1) * w];
                                    if stride == 1 {
                                        let dst = &mut dx_row[ow_lo + kwi - pad..ow_hi + kwi - pad];
                                        for (d, g) in dst.iter_mut().zip(&go_row[ow_lo..ow_hi]) {
                                            *d += wv * g;
                                        }
                                    } else {
                                        for owi in ow_lo..ow_hi {
                                            dx_row[owi * stride + kwi - pad] += wv * go_row[owi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            });
            self.accumulate(grads, input, Tensor::new(vec![n, ci, h, w], dx));
        }
    }

    fn conv_t2d_backward(
        &self,
        input: NodeId,
        weight: NodeId,
        bias: NodeId,
        stride: usize,
        pad: usize,
        gout: &Tensor,
        grads: &mut [Option<Tensor>],
    ) {
        let (n, ci, h, w) = self.value(input).dims4();
        let ws = self.value(weight).shape().to_vec();
        let (co, kh, kw) = (ws[1], ws[2], ws[3]);
        let (_, _, oh, ow) = gout.dims4();
        let xs = self.value(input).data();
        let wd = self.value(weight).data();
        let go = gout.data();

        if self.needs(bias) {
            let mut db = vec![0.0; co];
            for ni in 0..n {
                for coi in 0..co {
                    let base = (ni * co + coi) * oh * ow;
                    db[coi] += go[base..base + oh * ow].iter().sum::<f64>();
                }
            }
            self.accumulate(grads, bias, Tensor::new(vec![co], db));
        }

        // out[ih*stride + khi - pad, iw*stride + kwi - pad] += x[ih, iw] * wv
        if self.needs(weight) {
            let mut dw = vec![0.0; ci * co * kh * kw];
            exec::for_each_chunk_mut(&mut dw, co * kh * kw, |cii, w_slab| {
                for ni in 0..n {
                    let in_plane = &xs[(ni * ci + cii) * h * w..(ni * ci + cii + 1) * h * w];
                    for coi in 0..co {
                        let go_plane =
                            &go[(ni * co + coi) * oh * ow..(ni * co + coi + 1) * oh * ow];
                        for khi in 0..kh {
                            for kwi in 0..kw {
                                let mut acc = 0.0;
                                for ihi in 0..h {
                                    let ohi =
                                        ihi as i64 * stride as i64 + khi as i64 - pad as i64;
                                    if ohi < 0 || ohi >= oh as i64 {
                                        continue;
                                    }
                                    let in_row = &in_plane[ihi * w..(ihi + 1) * w];
                                    let go_row = &go_plane
                                        [ohi as usize * ow..(ohi as usize + 1) * ow];
                                    for iwi in 0..w {
                                        let owi = iwi as i64 * stride as i64 + kwi as i64
                                            - pad as i64;
                                        if owi < 0 || owi >= ow as i64 {
                                            continue;
                                        }
                                        acc += in_row[iwi] * go_row[owi as usize];
                                    }
                                }
                                w_slab[(coi * kh + khi) * kw + kwi] += acc;
                            }
                        }
                    }
                }
            });
            self.accumulate(grads, weight, Tensor::new(vec![ci, co, kh, kw], dw));
        }

        if self.needs(input) {
            let mut dx = vec![0.0; n * ci * h * w];
            exec::for_each_chunk_mut(&mut dx, ci * h * w, |ni, dx_img| {
                for cii in 0..ci {
                    let dx_plane = &mut dx_img[cii * h * w..(cii + 1) * h * w];
                    for coi in 0..co {
                        let go_plane =
                            &go[(ni * co + coi) * oh * ow..(ni * co + coi + 1) * oh * ow];
                        for khi in 0..kh {
                            for kwi in 0..kw {
                                let wv = wd[((cii * co + coi) * kh + khi) * kw + kwi];
                                if wv == 0.0 {
                                    continue;
                                }
                                for ihi in 0..h {
                                    let ohi =
                                        ihi as i64 * stride as i64 + khi as i64 - pad as i64;
                                    if ohi < 0 || ohi >= oh as i64 {
                                        continue;
                                    }
                                    let go_row = &go_plane
                                        [ohi as usize * ow..(ohi as usize + 1) * ow];
                                    let dx_row = &mut dx_plane[ihi * w..(ihi + 1) * w];
                                    for iwi in 0..w {
                                        let owi = iwi as i64 * stride as i64 + kwi as i64
                                            - pad as i64;
                                        if owi < 0 || owi >= ow as i64 {
                                            continue;
                                        }
                                        dx_row[iwi] += wv * go_row[owi as usize];
                                    }
                                }
                            }
                        }
                    }
                }
            });
            self.accumulate(grads, input, Tensor::new(vec![n, ci, h, w], dx));
        }
    }
}

pub(crate) fn conv_out_len(in_len: usize, k: usize, stride: usize, pad: usize) -> usize {
    (in_len + 2 * pad).saturating_sub(k) / stride + 1
}

/// Output positions `o` with `0 <= o*stride + k_off - pad < in_len`.
fn valid_out_range(
    in_len: usize,
    out_len: usize,
    stride: usize,
    pad: usize,
    k_off: usize,
) -> (usize, usize) {
    let s = stride as i64;
    let shift = k_off as i64 - pad as i64;
    let lo = if shift >= 0 {
        0
    } else {
        ((-shift) + s - 1) / s
    };
    let max_num = in_len as i64 - 1 - shift;
    if max_num < 0 {
        return (0, 0);
    }
    let hi = (max_num / s + 1).min(out_len as i64);
    if lo >= hi {
        (0, 0)
    } else {
        (lo as usize, hi as usize)
    }
}
