use std::path::PathBuf;

use clap::Args;
use vq_deepsc_core::io::{self, ExperimentConfig};
use vq_deepsc_core::model::Model;
use vq_deepsc_core::train::{check_dataset_dir, fit, FitOptions, Trainer};
use vq_deepsc_core::{Error, Result};

#[derive(Args)]
pub struct TrainArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Resume from a training checkpoint (overrides paths.checkpoint).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Override the config's top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.paths.out_dir = out;
    }

    // Validate the dataset before creating any outputs.
    let dataset_dir = cfg
        .paths
        .dataset
        .clone()
        .ok_or_else(|| Error::Dataset("config has no paths.dataset".into()))?;
    check_dataset_dir(&dataset_dir)?;
    let image_size = cfg.train_extras.image_size;
    let reduction = cfg.codec.total_reduction();
    if image_size % reduction != 0 {
        return Err(Error::Config(format!(
            "image_size {image_size} not divisible by {reduction} (stride^levels)"
        )));
    }
    let train_images = io::load_dir(&dataset_dir, Some(image_size))?;
    let val_images = match &cfg.paths.val_dataset {
        Some(dir) => {
            check_dataset_dir(dir)?;
            io::load_dir(dir, Some(image_size))?
        }
        None => train_images.clone(),
    };

    let resume = args.checkpoint.clone().or(cfg.paths.checkpoint.clone());
    let (mut trainer, start_epoch) = match resume {
        Some(path) => {
            let (mut trainer, meta) = io::load_training(&path)?;
            // The config file governs the continued run (epochs, rates,
            // schedules); the checkpoint supplies model/optimizer state.
            let new_cfg = cfg.train_config();
            new_cfg.validate()?;
            trainer.opt_gen.lr = new_cfg.codec_lr;
            trainer.opt_disc.lr = new_cfg.disc_lr;
            trainer.cfg = new_cfg;
            println!(
                "resumed from {} (epoch {}, step {})",
                path.display(),
                meta.epoch,
                meta.global_step
            );
            (trainer, meta.epoch)
        }
        None => {
            let model = Model::init(cfg.model_spec(), cfg.seed)?;
            (
                Trainer::new(model, cfg.discriminator_config(), cfg.train_config())?,
                0,
            )
        }
    };

    let opts = FitOptions {
        out_dir: cfg.paths.out_dir.clone(),
        checkpoint_every_epochs: cfg.train_extras.checkpoint_every_epochs,
        validate_every_epochs: cfg.train_extras.validate_every_epochs,
        start_epoch,
    };
    println!(
        "training: {} images at {image_size}px, batch {}, epochs {}..{}, out {}",
        train_images.len(),
        trainer.cfg.batch_size,
        start_epoch,
        trainer.cfg.epochs,
        opts.out_dir.display()
    );
    let report = fit(&mut trainer, &train_images, &val_images, &opts)?;
    println!(
        "done: {} steps, best validation MS-SSIM {:.4}",
        report.steps, report.best_val_ms_ssim
    );
    println!("best checkpoint: {}", report.best_checkpoint.display());
    println!("last checkpoint: {}", report.last_checkpoint.display());
    println!("training log:    {}", report.log_path.display());
    Ok(())
}
