//! Weight initialization and layer registration helpers.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::nn::param::PRELU_SLOPE_INIT;
use crate::nn::{ParamSet, Tensor};

/// Kaiming-normal init with the gain for a PReLU/leaky nonlinearity of
/// negative slope `a`: std = sqrt(2 / ((1 + a^2) * fan_in)).
pub fn kaiming_normal(shape: &[usize], fan_in: usize, a: f64, rng: &mut ChaCha12Rng) -> Tensor {
    let std = (2.0 / ((1.0 + a * a) * fan_in as f64)).sqrt();
    let numel: usize = shape.iter().product();
    let data = (0..numel)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            z * std
        })
        .collect();
    Tensor::new(shape.to_vec(), data)
}

/// Codebook init: each component uniform on [-1/N, 1/N].
pub fn codebook_init(num_vectors: usize, dim: usize, rng: &mut ChaCha12Rng) -> Tensor {
    let bound = 1.0 / num_vectors as f64;
    let data = (0..num_vectors * dim)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(vec![num_vectors, dim], data)
}

/// Registers a conv layer (`name.w` `[co, ci, k, k]`, `name.b` `[co]`).
pub fn register_conv(
    ps: &mut ParamSet,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
    rng: &mut ChaCha12Rng,
) {
    let w = kaiming_normal(&[co, ci, k, k], ci * k * k, PRELU_SLOPE_INIT, rng);
    ps.insert(&format!("{name}.w"), w, true);
    ps.insert(&format!("{name}.b"), Tensor::zeros(&[co]), true);
}

/// Registers a transposed-conv layer (`name.w` `[ci, co, k, k]`); `bias_init`
/// lets the output layer start inside the valid image range.
pub fn register_conv_t(
    ps: &mut ParamSet,
    name: &str,
    ci: usize,
    co: usize,
    k: usize,
    bias_init: f64,
    rng: &mut ChaCha12Rng,
) {
    let w = kaiming_normal(&[ci, co, k, k], ci * k * k, PRELU_SLOPE_INIT, rng);
    ps.insert(&format!("{name}.w"), w, true);
    ps.insert(&format!("{name}.b"), Tensor::full(&[co], bias_init), true);
}

/// Registers a batch-norm layer: gamma/beta trainable, running stats not.
pub fn register_bn(ps: &mut ParamSet, name: &str, c: usize) {
    ps.insert(&format!("{name}.gamma"), Tensor::full(&[c], 1.0), true);
    ps.insert(&format!("{name}.beta"), Tensor::zeros(&[c]), true);
    ps.insert(&format!("{name}.running_mean"), Tensor::zeros(&[c]), false);
    ps.insert(&format!("{name}.running_var"), Tensor::full(&[c], 1.0), false);
}

/// Registers a per-channel PReLU slope.
pub fn register_prelu(ps: &mut ParamSet, name: &str, c: usize) {
    ps.insert(
        &format!("{name}.a"),
        Tensor::full(&[c], PRELU_SLOPE_INIT),
        true,
    );
}
