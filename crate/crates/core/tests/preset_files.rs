//! The shipped config files must stay in lockstep with the preset
//! constructors and with the model they describe.

use std::path::{Path, PathBuf};

use vq_deepsc_core::io::config::{preset, ExperimentConfig};
use vq_deepsc_core::model::Model;

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

#[test]
fn shipped_presets_match_their_constructors() {
    let root = repo_root();
    for name in ["vq-deepsc1", "vq-deepsc2", "vq-deepsc3", "vq-deepsc4"] {
        let loaded = ExperimentConfig::load(&root.join(format!("configs/{name}.toml")))
            .unwrap_or_else(|e| panic!("{name}: {e}"));
        let built = preset(name, &root.join("crates/core/data")).unwrap();
        assert_eq!(loaded.model_spec(), built.model_spec(), "{name} model spec");
        assert_eq!(loaded.train_config(), built.train_config(), "{name} train");
        assert_eq!(loaded.sweep, built.sweep, "{name} sweep");
        assert_eq!(loaded.channel, built.channel, "{name} channel");
    }
}

#[test]
fn preset1_expands_to_published_sizes() {
    let root = repo_root();
    let cfg = ExperimentConfig::load(&root.join("configs/vq-deepsc1.toml")).unwrap();
    let spec = cfg.model_spec();
    assert!(!spec.levels[0].transmit, "level 1 is untransmitted");
    assert_eq!(
        spec.levels[1..]
            .iter()
            .map(|l| l.codebook_size)
            .collect::<Vec<_>>(),
        vec![8, 4, 2]
    );
    assert_eq!(spec.codec.level_channels, vec![128, 256, 512, 1024]);
}

#[test]
fn preset3_expands_to_published_sizes() {
    let root = repo_root();
    let cfg = ExperimentConfig::load(&root.join("configs/vq-deepsc3.toml")).unwrap();
    let spec = cfg.model_spec();
    assert!(spec.levels.iter().all(|l| l.transmit));
    assert_eq!(
        spec.levels.iter().map(|l| l.codebook_size).collect::<Vec<_>>(),
        vec![2, 64, 4, 4]
    );
}

#[test]
fn desk_config_parses_and_model_initializes() {
    let root = repo_root();
    let cfg = ExperimentConfig::load(&root.join("configs/desk-vq-deepsc3.toml")).unwrap();
    assert_eq!(cfg.train_extras.image_size, 64);
    let model = Model::init(cfg.model_spec(), cfg.seed).unwrap();
    assert_eq!(model.transmitted_codebook_sizes(), vec![2, 64, 4, 4]);
    // The AMC table builds from the shipped alist.
    let table = cfg.amc_table().unwrap();
    let mode = table.lookup(10.0).unwrap();
    assert_eq!(mode.code.n(), 648);
    assert_eq!(mode.code.k(), 324);
}
