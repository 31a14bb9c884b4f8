#![allow(dead_code)]

use std::path::{Path, PathBuf};

use easel_service::Config;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures")
}

/// Config text over the 18-painting fixture with the store under `dir`.
pub fn config_text(dir: &Path) -> String {
    let f = fixtures();
    format!(
        "catalog = {:?}\nstore_dir = {:?}\nr_default = 200\nbind = \"127.0.0.1:0\"\n\n[[spaces]]\npath = {:?}\n",
        f.join("elicitation_18.jsonl"),
        dir.join("store"),
        f.join("elicitation_18.visual.jsonl"),
    )
}

pub fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("easel.toml");
    std::fs::write(&path, config_text(dir)).unwrap();
    path
}

pub fn config(dir: &Path) -> Config {
    Config::load(write_config(dir)).unwrap()
}
