//! Adversarial training: the PatchGAN critic, loss assembly, and the
//! alternating update loop.

pub mod discriminator;
pub mod fit;
pub mod loss;
pub mod trainer;

pub use discriminator::{discriminate, discriminator_graph, register_disc_params, DiscriminatorConfig};
pub use loss::{gan_loss_graph, generator_gan_term, total_loss_graph, total_loss_value, usage_entropy_bits};
pub use fit::{check_dataset_dir, fit, validation_ms_ssim, FitOptions, FitReport};
pub use trainer::{
    bypass_generator_graph, vq_generator_graph, GeneratorPass, InLoopChannel, StepMetrics,
    TrainConfig, Trainer,
};
