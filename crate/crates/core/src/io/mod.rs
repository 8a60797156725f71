//! Configuration, checkpoints, datasets, and curve/log CSV files.

pub mod checkpoint;
pub mod config;
pub mod curves;
pub mod dataset;
pub mod trace;

pub use checkpoint::{
    load_model, load_training, read_archive, save_model, save_training, write_archive,
    CheckpointMeta,
};
pub use config::{preset, AmcConfig, ChannelConfig, ExperimentConfig, PathsConfig, TrainExtras};
pub use curves::{curves_to_csv, parse_curves, read_curves, write_curves, CurveFile, TrainLog};
pub use trace::{read_channel_trace, write_channel_trace, write_frame_trace};
pub use dataset::{
    load_dir, load_image, save_image, stack_images, synthetic_dataset, synthetic_image,
};
