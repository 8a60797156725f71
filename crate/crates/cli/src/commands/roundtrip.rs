use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use vq_deepsc_core::channel::{snr_to_noise_variance, ChannelKind};
use vq_deepsc_core::eval::{compression_ratio, ms_ssim, transmit_image};
use vq_deepsc_core::io::{self, ExperimentConfig};
use vq_deepsc_core::rng::{derive_seed, rng_from_seed};
use vq_deepsc_core::{Error, Result};

#[derive(Args)]
pub struct RoundtripArgs {
    /// Experiment config (TOML): AMC table and channel defaults.
    #[arg(long)]
    pub config: PathBuf,
    /// Model checkpoint.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Input image file.
    #[arg(long)]
    pub image: PathBuf,
    /// Operating SNR in dB.
    #[arg(long, allow_negative_numbers = true)]
    pub snr: f64,
    /// Channel kind override: awgn | rayleigh | rician.
    #[arg(long)]
    pub channel: Option<String>,
    /// Rician ratio override.
    #[arg(long, allow_negative_numbers = true)]
    pub rician_r: Option<f64>,
    /// Resize the input to a square side before transmission.
    #[arg(long)]
    pub resize: Option<usize>,
    /// Override the config's top-level seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (default: config out_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_channel(s: &str) -> Result<ChannelKind> {
    match s.to_ascii_lowercase().as_str() {
        "awgn" => Ok(ChannelKind::Awgn),
        "rayleigh" => Ok(ChannelKind::Rayleigh),
        "rician" => Ok(ChannelKind::Rician),
        other => Err(Error::Config(format!("unknown channel {other:?}"))),
    }
}

pub fn run(args: RoundtripArgs) -> Result<()> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let (model, _meta) = io::load_model(&args.checkpoint)?;
    let image = io::load_image(&args.image, args.resize)?;
    let (_, _, h, w) = image.dims4();

    let channel = match &args.channel {
        Some(s) => parse_channel(s)?,
        None => cfg.channel.kind,
    };
    let rician_r = args.rician_r.unwrap_or(cfg.channel.rician_r);
    let amc = cfg.amc_table()?;
    let mode = amc.lookup(args.snr)?;
    let noise_variance = snr_to_noise_variance(args.snr, 1.0);

    let mut rng = rng_from_seed(derive_seed(cfg.seed, "roundtrip"));
    let trial = transmit_image(
        &model,
        &image,
        mode,
        channel,
        rician_r,
        cfg.channel.granularity,
        noise_variance,
        &mut rng,
    )?;
    let score = ms_ssim(&image, &trial.reconstruction)?;

    let out_dir = args.out.unwrap_or_else(|| cfg.paths.out_dir.clone());
    std::fs::create_dir_all(&out_dir)?;
    let recon_path = out_dir.join("reconstruction.png");
    io::save_image(&recon_path, &trial.reconstruction)?;

    let indices_per_level: Vec<usize> = model
        .spec
        .transmitted_levels()
        .map(|l| model.spec.codec.level_positions(h, w, l))
        .collect();
    let report = json!({
        "image": args.image.display().to_string(),
        "height": h,
        "width": w,
        "snr_db": args.snr,
        "channel": channel.as_str(),
        "rician_r": rician_r,
        "amc_mode": mode.label,
        "seed": cfg.seed,
        "indices_per_level": indices_per_level,
        "indices_total": trial.total_indices,
        "info_bits": trial.total_bits,
        "info_bits_by_accounting": model.spec.info_bits(h, w),
        "compression_ratio": compression_ratio(&model.spec, h, w),
        "symbols": trial.symbols,
        "index_errors": trial.index_errors,
        "index_error_rate": trial.index_errors as f64 / trial.total_indices.max(1) as f64,
        "bit_errors": trial.bit_errors,
        "post_decode_ber": trial.bit_errors as f64 / trial.total_bits.max(1) as f64,
        "ms_ssim": score,
        "reconstruction": recon_path.display().to_string(),
    });
    let report_path = out_dir.join("report.json");
    std::fs::write(&report_path, serde_json::to_vec_pretty(&report)?)?;

    println!(
        "snr {:.1} dB over {}: ms-ssim {:.4}, ier {:.3e}, ber {:.3e}, {} symbols",
        args.snr,
        channel.as_str(),
        score,
        report["index_error_rate"].as_f64().unwrap(),
        report["post_decode_ber"].as_f64().unwrap(),
        trial.symbols
    );
    println!("wrote {} and {}", recon_path.display(), report_path.display());
    Ok(())
}
