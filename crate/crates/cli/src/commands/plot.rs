use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use vq_deepsc_core::io::{read_curves, CurveFile};
use vq_deepsc_core::Result;

use crate::plot_svg;

#[derive(Args)]
pub struct PlotArgs {
    /// Curve CSVs produced by `sweep` (repeatable).
    #[arg(long = "curves", required = true, num_args = 1..)]
    pub curves: Vec<PathBuf>,
    /// Baseline CSVs to overlay (e.g. ingested external codec curves).
    #[arg(long = "baselines", num_args = 0..)]
    pub baselines: Vec<PathBuf>,
    /// Output directory for the figures.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

pub fn run(args: PlotArgs) -> Result<()> {
    let mut by_channel: BTreeMap<String, Vec<(String, CurveFile)>> = BTreeMap::new();
    for path in args.curves.iter().chain(args.baselines.iter()) {
        let file = read_curves(path)?;
        let channel = file
            .meta
            .get("channel")
            .cloned()
            .unwrap_or_else(|| "unspecified".to_string());
        let label = file.meta.get("label").cloned().unwrap_or_else(|| {
            path.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "curve".into())
        });
        by_channel.entry(channel).or_default().push((label, file));
    }

    std::fs::create_dir_all(&args.out)?;
    for (channel, curves) in &by_channel {
        let svg = plot_svg::render(
            &format!("MS-SSIM vs SNR ({channel})"),
            "SNR (dB)",
            "MS-SSIM",
            curves,
        );
        let path = args.out.join(format!("ms_ssim_{channel}.svg"));
        std::fs::write(&path, svg)?;
        println!("wrote {} ({} curves)", path.display(), curves.len());
    }
    Ok(())
}
