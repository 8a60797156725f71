//! The alternating min-max training loop of the codec + codebooks against
//! the PatchGAN discriminator.
//!
//! One step: (a) the discriminator ascends the adversarial loss on the real
//! batch and the detached reconstruction; (b) the generator (encoder α,
//! decoder γ, codebooks β) descends `λ·L_total + adversarial term` with the
//! channel and digital link bypassed — the reconstruction is
//! `decode(straight_through(quantize(encode(I))))` directly. Untransmitted
//! pyramid levels enter the decoder as zeros, exactly as at the receiver.

use num_complex::Complex64;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{sample_channel, ChannelKind};
use crate::codec::{decoder_graph, encoder_graph};
use crate::model::{Model, OperatingMode};
use crate::nn::{
    apply_bn_updates, Adam, Forward, Graph, NodeId, ParamSet, Tensor,
};
use crate::rng::{derive_seed, rng_from_seed};
use crate::train::discriminator::{
    discriminator_graph, register_disc_params, DiscriminatorConfig,
};
use crate::train::loss::{gan_loss_graph, generator_gan_term, total_loss_graph, usage_entropy_bits};
use crate::vq::{self, EmbeddingSpace, IndexStream};
use crate::{Error, Result};

/// Channel-in-the-loop training (off by default). For the analog bypass this
/// is the UNet-DeepJSCC training setup (channel + perfect-CSI equalization
/// inside the graph at a fixed SNR). For the VQ path the digital link is not
/// differentiable, so the same analog noise is applied to the quantized
/// feature values instead.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InLoopChannel {
    pub kind: ChannelKind,
    pub rician_r: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub beta_c: f64,
    pub lambda: f64,
    pub codec_lr: f64,
    pub codec_betas: (f64, f64),
    /// Step-decay schedule: multiply by `codec_lr_decay` every
    /// `codec_lr_step_epochs` epochs.
    pub codec_lr_step_epochs: usize,
    pub codec_lr_decay: f64,
    pub disc_lr: f64,
    pub disc_betas: (f64, f64),
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Replace the literal generator term `log(1−D(Î))` with the
    /// non-saturating `−log D(Î)`.
    #[serde(default)]
    pub non_saturating_gan: bool,
    #[serde(default)]
    pub channel_in_loop: Option<InLoopChannel>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            beta_c: 0.25,
            lambda: 0.1,
            codec_lr: 1.75e-4,
            codec_betas: (0.5, 0.999),
            codec_lr_step_epochs: 100,
            codec_lr_decay: 0.5,
            disc_lr: 1e-5,
            disc_betas: (0.5, 0.999),
            batch_size: 24,
            epochs: 400,
            seed: 0,
            non_saturating_gan: false,
            channel_in_loop: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta_c <= 0.0 || self.lambda <= 0.0 {
            return Err(Error::Config("beta_c and lambda must be positive".into()));
        }
        if self.codec_lr <= 0.0 || self.disc_lr <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be positive".into()));
        }
        Ok(())
    }
}

/// Everything observable about one training step.
#[derive(Debug, Clone)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: usize,
    pub lr_codec: f64,
    pub lr_disc: f64,
    /// What the generator minimizes: `λ·loss_total + gan_generator`.
    pub loss_generator: f64,
    /// `mae + Σ_l (embedding + β_c · commitment)`.
    pub loss_total: f64,
    pub loss_mae: f64,
    pub loss_embedding: f64,
    pub loss_commitment: f64,
    /// Adversarial loss value at the discriminator step (it ascends this).
    pub loss_gan_disc: f64,
    /// Generator-side adversarial term (it descends this).
    pub gan_generator: f64,
    /// `(level, entropy bits)` of codebook usage per transmitted level.
    pub usage_entropy: Vec<(usize, f64)>,
}

/// Handles into a generator forward pass, for optimization and inspection.
pub struct GeneratorPass {
    pub recon: NodeId,
    pub mae: NodeId,
    /// `(level, embedding node, commitment node)` per transmitted level.
    pub vq_terms: Vec<(usize, NodeId, NodeId)>,
    /// The Eq.-style total: `mae + Σ (emb + β_c·com)`.
    pub loss_total: NodeId,
    pub indices: Vec<IndexStream>,
    pub bindings: Vec<(usize, NodeId)>,
    pub bn_updates: Vec<(usize, usize, crate::nn::BnUpdate)>,
}

/// Builds the noiseless (or channel-in-loop) VQ training graph on `g`:
/// encode → quantize (straight-through) → decode, plus the VQ loss terms.
pub fn vq_generator_graph(
    g: &mut Graph,
    model: &Model,
    batch: &Tensor,
    beta_c: f64,
    training: bool,
    channel: Option<(&InLoopChannel, &mut ChaCha12Rng)>,
) -> Result<GeneratorPass> {
    let spec = &model.spec;
    let (n, _c, h, w) = batch.dims4();
    let mut fwd = Forward::new(g, &model.params, training);
    let img = fwd.graph.input(batch.clone());
    let pyramid = encoder_graph(&mut fwd, &spec.codec, img);

    let mut channel = channel;
    let mut dec_inputs = Vec::with_capacity(spec.codec.num_levels);
    let mut vq_terms = Vec::new();
    let mut all_indices = Vec::new();
    for l in 1..=spec.codec.num_levels {
        let (lh, lw) = spec.codec.level_dims(h, w, l);
        if !spec.levels[l - 1].transmit {
            let zeros = fwd.graph.input(Tensor::zeros(&[
                n,
                spec.codec.level_channels[l - 1],
                lh,
                lw,
            ]));
            dec_inputs.push(zeros);
            continue;
        }
        let rows = fwd.graph.channels_to_rows(pyramid[l - 1]);
        let space = EmbeddingSpace::new(l, model.params.value(&EmbeddingSpace::param_name(l)).clone())?;
        let indices = vq::quantize(fwd.graph.value(rows), &space)?;
        let codebook = fwd.p(&EmbeddingSpace::param_name(l));
        let (emb, com) = vq::vq_loss_graph(fwd.graph, rows, codebook, &indices);
        vq_terms.push((l, emb, com));
        let mut st = vq::straight_through_graph(fwd.graph, rows, codebook, &indices);
        if let Some((ch, rng)) = channel.as_mut() {
            st = add_analog_noise(fwd.graph, st, ch, rng)?;
        }
        let spatial = fwd.graph.rows_to_channels(st, n, lh, lw);
        dec_inputs.push(spatial);
        all_indices.push(indices);
    }
    let recon = decoder_graph(&mut fwd, &spec.codec, &dec_inputs);
    let pairs: Vec<(NodeId, NodeId)> = vq_terms.iter().map(|&(_, e, c)| (e, c)).collect();
    let loss_total = total_loss_graph(fwd.graph, img, recon, &pairs, beta_c);
    let mae = {
        let d = fwd.graph.sub(img, recon);
        let a = fwd.graph.abs(d);
        fwd.graph.mean(a)
    };
    Ok(GeneratorPass {
        recon,
        mae,
        vq_terms,
        loss_total,
        indices: all_indices,
        bindings: fwd.bindings,
        bn_updates: fwd.bn_updates,
    })
}

/// Analog-bypass training graph: encode → per-level 1×1 tx projections →
/// batch power normalization → (optional channel) → denormalization →
/// per-level 1×1 rx projections → decode. Returns the reconstruction.
pub fn bypass_generator_graph(
    g: &mut Graph,
    model: &Model,
    batch: &Tensor,
    training: bool,
    mut channel: Option<(&InLoopChannel, &mut ChaCha12Rng)>,
) -> Result<(NodeId, NodeId, Vec<(usize, NodeId)>, Vec<(usize, usize, crate::nn::BnUpdate)>)>
{
    let spec = &model.spec;
    if spec.mode != OperatingMode::AnalogBypass {
        return Err(Error::Config("model is not in analog-bypass mode".into()));
    }
    let (_n, _c, h, w) = batch.dims4();
    let mut fwd = Forward::new(g, &model.params, training);
    let img = fwd.graph.input(batch.clone());
    let pyramid = encoder_graph(&mut fwd, &spec.codec, img);

    // Project each level down, then normalize the whole batch to unit mean
    // symbol energy (a symbol is a pair of reals).
    let tx: Vec<NodeId> = (1..=spec.codec.num_levels)
        .map(|l| fwd.conv(pyramid[l - 1], &format!("bypass.tx{l}"), 1, 0))
        .collect();
    let total_reals: usize = tx.iter().map(|&t| fwd.graph.value(t).numel()).sum();
    let mut sum_sq: Option<NodeId> = None;
    for &t in &tx {
        let sq = fwd.graph.mul(t, t);
        let s = fwd.graph.sum(sq);
        sum_sq = Some(match sum_sq {
            Some(acc) => fwd.graph.add(acc, s),
            None => s,
        });
    }
    let sum_sq = sum_sq.expect("at least one level");
    // mean symbol energy = 2 * sum(r^2) / reals
    let mean_energy = fwd.graph.scale(sum_sq, 2.0 / total_reals as f64);
    let inv_norm = fwd.graph.pow_scalar(mean_energy, -0.5);
    let norm = fwd.graph.pow_scalar(mean_energy, 0.5);

    let mut dec_inputs = Vec::with_capacity(spec.codec.num_levels);
    for (i, &t) in tx.iter().enumerate() {
        let l = i + 1;
        let (lh, lw) = spec.codec.level_dims(h, w, l);
        let mut y = fwd.graph.mul_broadcast(t, inv_norm);
        if let Some((ch, rng)) = channel.as_mut() {
            y = add_analog_noise(fwd.graph, y, ch, rng)?;
        }
        y = fwd.graph.mul_broadcast(y, norm);
        let rx = fwd.conv(y, &format!("bypass.rx{l}"), 1, 0);
        debug_assert_eq!(fwd.graph.value(rx).dims4().2, lh);
        debug_assert_eq!(fwd.graph.value(rx).dims4().3, lw);
        dec_inputs.push(rx);
    }
    let recon = decoder_graph(&mut fwd, &spec.codec, &dec_inputs);
    Ok((recon, img, fwd.bindings, fwd.bn_updates))
}

/// Adds post-equalization analog noise to a node whose values are treated as
/// unit-power transmitted reals: pairs of consecutive reals form one complex
/// symbol; each symbol draws `h` and `w ~ CN(0, σ²)`, and receives
/// `Re/Im[h^H w / |h|²]`. Signal power is measured from the node itself.
fn add_analog_noise(
    g: &mut Graph,
    x: NodeId,
    ch: &InLoopChannel,
    rng: &mut ChaCha12Rng,
) -> Result<NodeId> {
    let value = g.value(x);
    let reals = value.numel();
    let power = 2.0 * value.data().iter().map(|v| v * v).sum::<f64>() / reals as f64;
    let sigma2 = crate::channel::snr_to_noise_variance(ch.snr_db, power.max(1e-12));
    let num_symbols = reals.div_ceil(2);
    let h = sample_channel(ch.kind, ch.rician_r, num_symbols, rng)?;
    let w: Vec<Complex64> = {
        let zeros = vec![Complex64::new(0.0, 0.0); num_symbols];
        crate::channel::apply_channel(&zeros, &h, sigma2, rng)?
    };
    let mut noise = vec![0.0; reals];
    for (s, (hi, wi)) in h.iter().zip(&w).enumerate() {
        let m = hi.norm_sqr();
        let eff = if m < 1e-12 {
            Complex64::new(0.0, 0.0)
        } else {
            hi.conj() * wi / m
        };
        noise[2 * s] = eff.re;
        if 2 * s + 1 < reals {
            noise[2 * s + 1] = eff.im;
        }
    }
    let noise_node = g.input(Tensor::new(value.shape().to_vec(), noise));
    Ok(g.add(x, noise_node))
}

/// Trainer state: model + discriminator + optimizers.
pub struct Trainer {
    pub model: Model,
    pub disc_params: ParamSet,
    pub disc_cfg: DiscriminatorConfig,
    pub cfg: TrainConfig,
    pub opt_gen: Adam,
    pub opt_disc: Adam,
    pub global_step: u64,
    rng: ChaCha12Rng,
}

impl Trainer {
    pub fn new(model: Model, disc_cfg: DiscriminatorConfig, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        disc_cfg.validate()?;
        let mut disc_params = ParamSet::new();
        let mut rng = rng_from_seed(derive_seed(cfg.seed, "disc-init"));
        register_disc_params(&mut disc_params, &disc_cfg, &mut rng);
        let opt_gen = Adam::new(cfg.codec_lr, cfg.codec_betas.0, cfg.codec_betas.1);
        let opt_disc = Adam::new(cfg.disc_lr, cfg.disc_betas.0, cfg.disc_betas.1);
        let rng = rng_from_seed(derive_seed(cfg.seed, "train"));
        Ok(Self {
            model,
            disc_params,
            disc_cfg,
            cfg,
            opt_gen,
            opt_disc,
            global_step: 0,
            rng,
        })
    }

    /// Learning-rate scale factors at an epoch: step decay for the codec,
    /// linear decay to zero over the configured epochs for the discriminator.
    pub fn lr_scales(&self, epoch: usize) -> (f64, f64) {
        let codec = self
            .cfg
            .codec_lr_decay
            .powi((epoch / self.cfg.codec_lr_step_epochs.max(1)) as i32);
        let disc = (1.0 - epoch as f64 / self.cfg.epochs as f64).max(0.0);
        (codec, disc)
    }

    /// One alternating update on a batch `[N, 3, H, W]`.
    pub fn train_step(&mut self, batch: &Tensor, epoch: usize) -> Result<StepMetrics> {
        self.global_step += 1;
        let step = self.global_step;
        let (codec_scale, disc_scale) = self.lr_scales(epoch);

        // ---- Generator forward (also produces the fake for the critic).
        let mut g = Graph::new();
        let pass = match self.model.spec.mode {
            OperatingMode::Vq => {
                let channel = self.cfg.channel_in_loop;
                vq_generator_graph(
                    &mut g,
                    &self.model,
                    batch,
                    self.cfg.beta_c,
                    true,
                    channel.as_ref().map(|c| (c, &mut self.rng)),
                )?
            }
            OperatingMode::AnalogBypass => {
                let channel = self.cfg.channel_in_loop;
                let (recon, img, bindings, bn_updates) = bypass_generator_graph(
                    &mut g,
                    &self.model,
                    batch,
                    true,
                    channel.as_ref().map(|c| (c, &mut self.rng)),
                )?;
                let loss_total = {
                    let d = g.sub(img, recon);
                    let a = g.abs(d);
                    g.mean(a)
                };
                GeneratorPass {
                    recon,
                    mae: loss_total,
                    vq_terms: Vec::new(),
                    loss_total,
                    indices: Vec::new(),
                    bindings,
                    bn_updates,
                }
            }
        };
        let recon_value = g.value(pass.recon).clone();

        // ---- (a) Discriminator ascends L_GAN on (real, detached fake).
        let loss_gan_disc = {
            let mut gd = Graph::new();
            let mut fwd = Forward::new(&mut gd, &self.disc_params, true);
            let real = fwd.graph.input(batch.clone());
            let fake = fwd.graph.input(recon_value.clone());
            let d_real = discriminator_graph(&mut fwd, real);
            let d_fake = discriminator_graph(&mut fwd, fake);
            let l_gan = gan_loss_graph(fwd.graph, d_real, d_fake);
            let objective = fwd.graph.scale(l_gan, -1.0);
            let bindings = fwd.bindings.clone();
            let bn_updates = std::mem::take(&mut fwd.bn_updates);
            let value = gd.value(l_gan).item();
            let mut grads = gd.backward(objective);
            let grad_list: Vec<(usize, Tensor)> = bindings
                .iter()
                .filter_map(|(idx, nid)| grads.take(*nid).map(|t| (*idx, t)))
                .collect();
            self.opt_disc
                .step(&mut self.disc_params, &grad_list, disc_scale);
            apply_bn_updates(&mut self.disc_params, &bn_updates);
            value
        };

        // ---- (b) Generator descends λ·loss_total + adversarial term,
        // judged by the just-updated discriminator.
        let mut fwd_d = Forward::new(&mut g, &self.disc_params, true);
        let d_fake = discriminator_graph(&mut fwd_d, pass.recon);
        let gen_term = generator_gan_term(fwd_d.graph, d_fake, self.cfg.non_saturating_gan);
        drop(fwd_d); // critic params in this pass receive no update
        let scaled_vq = g.scale(pass.loss_total, self.cfg.lambda);
        let gen_objective = g.add(scaled_vq, gen_term);

        let loss_generator = g.value(gen_objective).item();
        let loss_total = g.value(pass.loss_total).item();
        let loss_mae = g.value(pass.mae).item();
        let gan_generator = g.value(gen_term).item();
        let loss_embedding: f64 = pass
            .vq_terms
            .iter()
            .map(|&(_, e, _)| g.value(e).item())
            .sum();
        let loss_commitment: f64 = pass
            .vq_terms
            .iter()
            .map(|&(_, _, c)| g.value(c).item())
            .sum();

        if !loss_generator.is_finite() || !loss_gan_disc.is_finite() {
            return Err(Error::NonFiniteLoss {
                step,
                detail: format!(
                    "generator={loss_generator} total={loss_total} mae={loss_mae} \
                     embed={loss_embedding} commit={loss_commitment} gan_d={loss_gan_disc}"
                ),
            });
        }

        let mut grads = g.backward(gen_objective);
        let grad_list: Vec<(usize, Tensor)> = pass
            .bindings
            .iter()
            .filter_map(|(idx, nid)| grads.take(*nid).map(|t| (*idx, t)))
            .collect();
        self.opt_gen
            .step(&mut self.model.params, &grad_list, codec_scale);
        apply_bn_updates(&mut self.model.params, &pass.bn_updates);

        let usage_entropy = pass
            .indices
            .iter()
            .map(|s| {
                let n = self.model.spec.levels[s.level - 1].codebook_size;
                let mut counts = vec![0usize; n];
                for &ix in &s.indices {
                    counts[ix as usize] += 1;
                }
                (s.level, usage_entropy_bits(&counts))
            })
            .collect();

        Ok(StepMetrics {
            step,
            epoch,
            lr_codec: self.cfg.codec_lr * codec_scale,
            lr_disc: self.cfg.disc_lr * disc_scale,
            loss_generator,
            loss_total,
            loss_mae,
            loss_embedding,
            loss_commitment,
            loss_gan_disc,
            gan_generator,
            usage_entropy,
        })
    }
}
