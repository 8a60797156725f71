//! Experiment configuration: one TOML file describing the codec, the
//! per-level embedding spaces and transmit flags, training hyperparameters,
//! the AMC mode table, the channel, the sweep, and file paths.
//!
//! Relative paths inside the file (alist matrices, dataset, output
//! directory) resolve against the directory containing the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelKind, FadingGranularity};
use crate::codec::CodecConfig;
use crate::eval::SweepSpec;
use crate::link::{load_alist, AmcMode, AmcTable, Constellation, ConstellationKind, LdpcCode};
use crate::model::{LevelSpec, ModelSpec, OperatingMode};
use crate::train::{DiscriminatorConfig, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcModeConfig {
    pub label: String,
    /// Path to the parity-check matrix in alist format.
    pub alist: PathBuf,
    pub constellation: String,
    #[serde(default = "default_bp_iterations")]
    pub max_bp_iterations: usize,
}

fn default_bp_iterations() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcIntervalConfig {
    pub snr_min_db: f64,
    pub snr_max_db: f64,
    pub mode: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmcConfig {
    #[serde(default)]
    pub modes: Vec<AmcModeConfig>,
    #[serde(default)]
    pub table: Vec<AmcIntervalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    #[serde(default = "default_rician_r")]
    pub rician_r: f64,
    #[serde(default = "default_granularity")]
    pub granularity: FadingGranularity,
}

fn default_rician_r() -> f64 {
    1.0
}

fn default_granularity() -> FadingGranularity {
    FadingGranularity::PerSymbol
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub snr_grid_db: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials_per_point: usize,
}

fn default_trials() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathsConfig {
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub val_dataset: Option<PathBuf>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            val_dataset: None,
            out_dir: default_out_dir(),
            checkpoint: None,
        }
    }
}

/// Extra training knobs that sit outside the core hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainExtras {
    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default)]
    pub disc_channels: Option<Vec<usize>>,
    #[serde(default = "default_ckpt_every")]
    pub checkpoint_every_epochs: usize,
    #[serde(default = "default_validate_every")]
    pub validate_every_epochs: usize,
}

impl Default for TrainExtras {
    fn default() -> Self {
        Self {
            image_size: default_image_size(),
            disc_channels: None,
            checkpoint_every_epochs: default_ckpt_every(),
            validate_every_epochs: default_validate_every(),
        }
    }
}

fn default_image_size() -> usize {
    256
}

fn default_ckpt_every() -> usize {
    50
}

fn default_validate_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default)]
    pub mode: OperatingMode,
    pub codec: CodecConfig,
    pub levels: Vec<LevelSpec>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub train_extras: TrainExtras,
    pub channel: ChannelConfig,
    pub sweep: SweepConfig,
    pub amc: AmcConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

impl ExperimentConfig {
    /// Parses and structurally validates a config file. Referenced alist
    /// files must exist (dataset existence is checked by the commands that
    /// read it, with its own exit code).
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        for m in &mut self.amc.modes {
            resolve(&mut m.alist);
        }
        if let Some(d) = &mut self.paths.dataset {
            resolve(d);
        }
        if let Some(d) = &mut self.paths.val_dataset {
            resolve(d);
        }
        if let Some(c) = &mut self.paths.checkpoint {
            resolve(c);
        }
        resolve(&mut self.paths.out_dir);
    }

    pub fn validate(&self) -> Result<()> {
        self.model_spec().validate()?;
        if let Some(t) = &self.train {
            t.validate()?;
        }
        if self.amc.modes.is_empty() {
            return Err(Error::Config("no AMC modes defined".into()));
        }
        for m in &self.amc.modes {
            ConstellationKind::parse(&m.constellation)?;
            if !m.alist.exists() {
                return Err(Error::Config(format!(
                    "alist file {} does not exist",
                    m.alist.display()
                )));
            }
        }
        for e in &self.amc.table {
            if !self.amc.modes.iter().any(|m| m.label == e.mode) {
                return Err(Error::Config(format!("AMC interval references unknown mode {}", e.mode)));
            }
            if !(e.snr_min_db < e.snr_max_db) {
                return Err(Error::Config(format!(
                    "empty AMC interval [{}, {})",
                    e.snr_min_db, e.snr_max_db
                )));
            }
        }
        if self.channel.rician_r < 0.0 {
            return Err(Error::Config("rician_r must be non-negative".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            codec: self.codec.clone(),
            levels: self.levels.clone(),
            mode: self.mode,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut t = self.train.clone().unwrap_or_default();
        t.seed = self.seed;
        t
    }

    pub fn discriminator_config(&self) -> DiscriminatorConfig {
        match &self.train_extras.disc_channels {
            Some(c) => DiscriminatorConfig { channels: c.clone() },
            None => DiscriminatorConfig::default(),
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        SweepSpec {
            snr_grid_db: self.sweep.snr_grid_db.clone(),
            channel: self.channel.kind,
            rician_r: self.channel.rician_r,
            granularity: self.channel.granularity,
            trials_per_point: self.sweep.trials_per_point,
            seed: self.seed,
        }
    }

    /// Builds the AMC table, loading parity-check matrices from disk.
    pub fn amc_table(&self) -> Result<AmcTable> {
        let mut table = AmcTable::new();
        for m in &self.amc.modes {
            let h = load_alist(&m.alist)?;
            let code = LdpcCode::from_h(h, m.max_bp_iterations)?;
            let constellation = Constellation::new(ConstellationKind::parse(&m.constellation)?);
            table.add_mode(AmcMode::new(
                m.label.clone(),
                Arc::new(code),
                Arc::new(constellation),
            ));
        }
        for e in &self.amc.table {
            let idx = table
                .modes()
                .iter()
                .position(|m| m.label == e.mode)
                .expect("validated above");
            table.add_interval(e.snr_min_db, e.snr_max_db, idx);
        }
        Ok(table)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// The four published operating points (full-scale: 256×256 inputs, level
/// widths 128/256/512/1024). `alist_dir` is where the shipped parity-check
/// matrices live, relative to the written config's directory.
pub fn preset(name: &str, alist_dir: &Path) -> Result<ExperimentConfig> {
    // (codebook sizes per level 1..4; level-1 transmitted?)
    let (sizes, transmit1): ([usize; 4], bool) = match name {
        "vq-deepsc1" => ([0, 8, 4, 2], false),
        "vq-deepsc2" => ([0, 64, 16, 4], false),
        "vq-deepsc3" => ([2, 64, 4, 4], true),
        "vq-deepsc4" => ([8, 4, 2, 2], true),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?} (expected vq-deepsc1..4)"
            )))
        }
    };
    let levels = (0..4)
        .map(|i| LevelSpec {
            codebook_size: if i == 0 && !transmit1 { 1 } else { sizes[i] },
            transmit: i != 0 || transmit1,
            bypass_channels: None,
        })
        .collect();
    Ok(ExperimentConfig {
        seed: 7,
        mode: OperatingMode::Vq,
        codec: CodecConfig {
            num_levels: 4,
            base_channels: 64,
            level_channels: vec![128, 256, 512, 1024],
            kernel_size: 3,
            downsample_stride: 2,
        },
        levels,
        train: Some(TrainConfig::default()),
        train_extras: TrainExtras::default(),
        channel: ChannelConfig {
            kind: ChannelKind::Awgn,
            rician_r: 1.0,
            granularity: FadingGranularity::PerSymbol,
        },
        sweep: SweepConfig {
            snr_grid_db: (0..=10).map(|i| 2.0 * i as f64).collect(),
            trials_per_point: 20,
        },
        amc: AmcConfig {
            modes: vec![AmcModeConfig {
                label: "ldpc648-r12-bpsk".into(),
                alist: alist_dir.join("ldpc_n648_r12.alist"),
                constellation: "bpsk".into(),
                max_bp_iterations: 50,
            }],
            table: vec![AmcIntervalConfig {
                snr_min_db: f64::NEG_INFINITY,
                snr_max_db: f64::INFINITY,
                mode: "ldpc648-r12-bpsk".into(),
            }],
        },
        paths: PathsConfig::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_alists(dir: &Path) {
        let h = crate::link::peg_construct(20, 10, 3);
        std::fs::write(dir.join("ldpc_n648_r12.alist"), crate::link::to_alist(&h)).unwrap();
    }

    #[test]
    fn presets_expand_to_the_published_codebook_sizes() {
        let dir = tempfile::tempdir().unwrap();
        write_alists(dir.path());
        let p1 = preset("vq-deepsc1", dir.path()).unwrap();
        assert!(!p1.levels[0].transmit);
        assert_eq!(
            p1.levels[1..].iter().map(|l| l.codebook_size).collect::<Vec<_>>(),
            vec![8, 4, 2]
        );
        let p3 = preset("vq-deepsc3", dir.path()).unwrap();
        assert!(p3.levels.iter().all(|l| l.transmit));
        assert_eq!(
            p3.levels.iter().map(|l| l.codebook_size).collect::<Vec<_>>(),
            vec![2, 64, 4, 4]
        );
        assert_eq!(p3.codec.level_channels, vec![128, 256, 512, 1024]);
        assert!(preset("vq-deepsc9", dir.path()).is_err());
    }

    #[test]
    fn config_roundtrips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        write_alists(dir.path());
        let mut cfg = preset("vq-deepsc4", dir.path()).unwrap();
        // Absolute paths so load-time resolution is the identity.
        cfg.paths.out_dir = dir.path().join("out");
        let text = cfg.to_toml();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, &text).unwrap();
        let loaded = ExperimentConfig::load(&path).unwrap();
        assert_eq!(loaded, cfg);
    }

    #[test]
    fn missing_alist_is_an_invalid_config() {
        let dir = tempfile::tempdir().unwrap();
        write_alists(dir.path());
        let mut cfg = preset("vq-deepsc4", dir.path()).unwrap();
        cfg.amc.modes[0].alist = dir.path().join("nope.alist");
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn amc_table_builds_from_config() {
        let dir = tempfile::tempdir().unwrap();
        write_alists(dir.path());
        let cfg = preset("vq-deepsc3", dir.path()).unwrap();
        let table = cfg.amc_table().unwrap();
        assert!(table.lookup(5.0).is_ok());
        assert_eq!(table.modes().len(), 1);
    }

    #[test]
    fn unknown_mode_reference_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_alists(dir.path());
        let mut cfg = preset("vq-deepsc3", dir.path()).unwrap();
        cfg.amc.table[0].mode = "ghost".into();
        assert!(cfg.validate().is_err());
    }
}
