//! Multi-scale structural similarity.
//!
//! Standard construction: 11×11 Gaussian window with σ = 1.5 (valid-mode
//! filtering), K1 = 0.01, K2 = 0.03 on the [0,1] dynamic range, scale
//! weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333), 2×2 average pooling
//! between scales (trailing odd row/column dropped). RGB inputs are scored
//! per channel and averaged.
//!
//! The number of scales is dimension-driven: a scale participates while the
//! 11-tap window still fits (min dimension ≥ 11 after the poolings), capped
//! at 5; the weights of the active scales are renormalized to sum 1. Five
//! scales therefore need a minimum dimension of 11·2⁴ = 176. Contrast and
//! luminance terms are clamped at 0 before the weighted geometric mean.

use crate::exec;
use crate::nn::Tensor;
use crate::{Error, Result};

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;
const WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW as f64 - 1.0) / 2.0;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SIGMA * SIGMA)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// One image plane.
struct Plane {
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Plane {
    /// Valid-mode separable Gaussian filter.
    fn gauss(&self) -> Plane {
        let k = gaussian_kernel();
        let (h, w) = (self.h, self.w);
        let ow = w - WINDOW + 1;
        let oh = h - WINDOW + 1;
        // Horizontal pass.
        let mut tmp = vec![0.0; h * ow];
        for y in 0..h {
            let row = &self.data[y * w..(y + 1) * w];
            let out = &mut tmp[y * ow..(y + 1) * ow];
            for (x, o) in out.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    acc += kv * row[x + t];
                }
                *o = acc;
            }
        }
        // Vertical pass.
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let mut acc = 0.0;
                for (t, kv) in k.iter().enumerate() {
                    acc += kv * tmp[(y + t) * ow + x];
                }
                out[y * ow + x] = acc;
            }
        }
        Plane {
            h: oh,
            w: ow,
            data: out,
        }
    }

    fn downsample2(&self) -> Plane {
        let (oh, ow) = (self.h / 2, self.w / 2);
        let mut out = vec![0.0; oh * ow];
        for y in 0..oh {
            for x in 0..ow {
                let base = 2 * y * self.w + 2 * x;
                out[y * ow + x] =
                    0.25 * (self.data[base]
                        + self.data[base + 1]
                        + self.data[base + self.w]
                        + self.data[base + self.w + 1]);
            }
        }
        Plane {
            h: oh,
            w: ow,
            data: out,
        }
    }

    fn zip(&self, other: &Plane, f: impl Fn(f64, f64) -> f64) -> Plane {
        Plane {
            h: self.h,
            w: self.w,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        }
    }

}

/// Per-scale mean contrast-structure and luminance terms of one plane pair.
fn scale_terms(a: &Plane, b: &Plane) -> (f64, f64) {
    let c1 = K1 * K1;
    let c2 = K2 * K2;
    let mu_a = a.gauss();
    let mu_b = b.gauss();
    let aa = a.zip(a, |x, y| x * y).gauss();
    let bb = b.zip(b, |x, y| x * y).gauss();
    let ab = a.zip(b, |x, y| x * y).gauss();

    let n = mu_a.data.len();
    let mut cs_sum = 0.0;
    let mut l_sum = 0.0;
    for i in 0..n {
        let (ma, mb) = (mu_a.data[i], mu_b.data[i]);
        let va = aa.data[i] - ma * ma;
        let vb = bb.data[i] - mb * mb;
        let cov = ab.data[i] - ma * mb;
        cs_sum += (2.0 * cov + c2) / (va + vb + c2);
        l_sum += (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
    }
    (cs_sum / n as f64, l_sum / n as f64)
}

/// Scales usable for a `(h, w)` image: window fits at every scale, cap 5.
pub fn usable_scales(h: usize, w: usize) -> usize {
    let mut scales = 0;
    let (mut ch, mut cw) = (h, w);
    while scales < WEIGHTS.len() && ch >= WINDOW && cw >= WINDOW {
        scales += 1;
        ch /= 2;
        cw /= 2;
    }
    scales
}

fn chw_planes(t: &Tensor) -> Result<Vec<Plane>> {
    let (c, h, w) = match t.shape() {
        [c, h, w] | [1, c, h, w] => (*c, *h, *w),
        other => {
            return Err(Error::DimensionMismatch(format!(
                "expected [C,H,W] or [1,C,H,W], got {other:?}"
            )))
        }
    };
    Ok((0..c)
        .map(|ci| Plane {
            h,
            w,
            data: t.data()[ci * h * w..(ci + 1) * h * w].to_vec(),
        })
        .collect())
}

/// MS-SSIM score in [0, 1] between two images of identical shape
/// (`[C,H,W]` or `[1,C,H,W]`, values in [0,1]).
pub fn ms_ssim(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "images differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let pa = chw_planes(a)?;
    let pb = chw_planes(b)?;
    let (h, w) = (pa[0].h, pa[0].w);
    let scales = usable_scales(h, w);
    if scales == 0 {
        return Err(Error::DimensionMismatch(format!(
            "image {h}x{w} smaller than the {WINDOW}-tap window"
        )));
    }
    let weight_sum: f64 = WEIGHTS[..scales].iter().sum();

    let channel_scores = exec::map_collect(pa.len(), |ci| {
        let mut x = Plane {
            h,
            w,
            data: pa[ci].data.clone(),
        };
        let mut y = Plane {
            h,
            w,
            data: pb[ci].data.clone(),
        };
        let mut score = 1.0;
        for s in 0..scales {
            let (cs, l) = scale_terms(&x, &y);
            let wn = WEIGHTS[s] / weight_sum;
            if s + 1 == scales {
                score *= l.max(0.0).powf(wn) * cs.max(0.0).powf(wn);
            } else {
                score *= cs.max(0.0).powf(wn);
                x = x.downsample2();
                y = y.downsample2();
            }
        }
        score
    });
    Ok(channel_scores.iter().sum::<f64>() / channel_scores.len() as f64)
}
