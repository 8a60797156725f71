use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use vq_deepsc_core::eval::{analog_bypass_eval, run_sweep};
use vq_deepsc_core::io::{self, ExperimentConfig};
use vq_deepsc_core::model::OperatingMode;
use vq_deepsc_core::train::check_dataset_dir;
use vq_deepsc_core::{Error, Result};

#[derive(Args)]
pub struct SweepArgs {
    /// Experiment config (TOML): SNR grid, channel, AMC table, dataset.
    #[arg(long)]
    pub config: PathBuf,
    /// Model checkpoint to evaluate.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Override the config's top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path (default: <out_dir>/curves_<channel>.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Legend label recorded in the CSV metadata.
    #[arg(long)]
    pub label: Option<String>,
}

pub fn run(args: SweepArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (model, _meta) = io::load_model(&args.checkpoint)?;
    let config_spec = cfg.model_spec();
    if model.spec.codec != config_spec.codec || model.spec.levels != config_spec.levels {
        return Err(Error::DimensionMismatch(format!(
            "checkpoint model shape disagrees with the config: {:?} vs {:?}",
            model.spec, config_spec
        )));
    }

    let dataset_dir = cfg
        .paths
        .dataset
        .clone()
        .ok_or_else(|| Error::Dataset("config has no paths.dataset".into()))?;
    check_dataset_dir(&dataset_dir)?;
    let images = io::load_dir(&dataset_dir, Some(cfg.train_extras.image_size))?;

    let spec = cfg.sweep_spec();
    let points = match model.spec.mode {
        OperatingMode::Vq => {
            let amc = cfg.amc_table()?;
            run_sweep(&model, &spec, &amc, &images)?
        }
        OperatingMode::AnalogBypass => analog_bypass_eval(&model, &spec, &images)?,
    };

    let label = args.label.unwrap_or_else(|| {
        args.checkpoint
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into())
    });
    let mut meta = BTreeMap::new();
    meta.insert("channel".to_string(), spec.channel.as_str().to_string());
    meta.insert("label".to_string(), label);
    meta.insert("seed".to_string(), cfg.seed.to_string());

    let out = args.out.unwrap_or_else(|| {
        cfg.paths
            .out_dir
            .join(format!("curves_{}.csv", spec.channel.as_str()))
    });
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    io::write_curves(&out, &points, &meta)?;
    for p in &points {
        println!(
            "snr {:>5.1} dB  ms-ssim {:.4} ± {:.4}  ier {:.2e}  ber {:.2e}  symbols {}",
            p.snr_db,
            p.ms_ssim_mean,
            p.ms_ssim_std,
            p.index_error_rate,
            p.post_decode_ber,
            p.symbols_per_image
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
