//! Command-line surface: `train`, `sweep`, `roundtrip`, `plot`.
//!
//! Exit codes: 2 invalid config or usage, 3 unreadable dataset, 4 non-finite
//! training loss (with a diagnostic dump), 5 shape mismatch / AMC gap /
//! checkpoint inconsistency, 6 curve-CSV schema violation, 1 other I/O
//! failures.

mod commands;
mod plot_svg;

use clap::{Parser, Subcommand};
use vq_deepsc_core::Error;

#[derive(Parser)]
#[command(
    name = "vq-deepsc",
    version,
    about = "Vector-quantized semantic image transmission over a simulated digital link"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the codec + codebooks adversarially (noiseless by default).
    Train(commands::train::TrainArgs),
    /// Run an SNR sweep over the full pipeline and write a curve CSV.
    Sweep(commands::sweep::SweepArgs),
    /// Transmit one image end to end and write the reconstruction + report.
    Roundtrip(commands::roundtrip::RoundtripArgs),
    /// Render MS-SSIM vs SNR figures from curve CSVs.
    Plot(commands::plot::PlotArgs),
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::AlistParse(_) => 2,
        Error::Dataset(_) => 3,
        Error::NonFiniteLoss { .. } => 4,
        Error::DimensionMismatch(_)
        | Error::AmcGap { .. }
        | Error::Checkpoint(_)
        | Error::IndexOutOfRange { .. }
        | Error::EmptyCodebook(_)
        | Error::CodeConstruction(_)
        | Error::BitstreamLength { .. } => 5,
        Error::CsvSchema(_) => 6,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Roundtrip(args) => commands::roundtrip::run(args),
        Command::Plot(args) => commands::plot::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(exit_code(&e));
    }
}
