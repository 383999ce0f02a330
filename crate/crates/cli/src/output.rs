//! Output directory handling and the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nelson_lab::config::{LabConfig, SCHEMA_VERSION};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::plot::Plot;
use crate::CliError;

/// Canonical JSON form of a config: serde_json objects keep keys sorted.
pub fn canonical_json(cfg: &LabConfig) -> String {
    let value = serde_json::to_value(cfg).expect("config serializes");
    serde_json::to_string(&value).expect("value serializes")
}

pub fn config_hash(cfg: &LabConfig) -> String {
    hex::encode(Sha256::digest(canonical_json(cfg).as_bytes()))
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub version: String,
    pub subcommand: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
    pub timings: Vec<StageTiming>,
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

pub struct Emitter {
    dir: PathBuf,
    outputs: Vec<String>,
    timings: Vec<StageTiming>,
    seeds: BTreeMap<String, u64>,
}

/// Report envelope: every JSON report carries the schema version and the
/// config hash.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    config_hash: &'a str,
    report: &'a T,
}

impl Emitter {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            outputs: Vec::new(),
            timings: Vec::new(),
            seeds: BTreeMap::new(),
        })
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.into(), value);
    }

    fn write(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.outputs.push(name.into());
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, cfg: &LabConfig, value: &T) -> Result<(), CliError> {
        let hash = config_hash(cfg);
        let report = Report {
            schema_version: SCHEMA_VERSION,
            config_hash: &hash,
            report: value,
        };
        let mut text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, &text)
    }

    pub fn csv(&mut self, name: &str, content: &str) -> Result<(), CliError> {
        self.write(name, content)
    }

    /// Writes `stem.svg` and its twin `stem.csv`.
    pub fn plot(&mut self, stem: &str, plot: &Plot) -> Result<(), CliError> {
        self.write(&format!("{stem}.svg"), &plot.to_svg())?;
        self.write(&format!("{stem}.csv"), &plot.to_csv())
    }

    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(StageTiming {
            stage: name.into(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    /// Writes `config.json` and `manifest.json`; returns the manifest.
    pub fn finish(mut self, subcommand: &str, cfg: &LabConfig) -> Result<RunManifest, CliError> {
        let mut canonical = serde_json::to_string_pretty(&serde_json::to_value(cfg).expect("config serializes"))
            .map_err(|e| CliError::Io(e.to_string()))?;
        canonical.push('\n');
        self.write("config.json", &canonical)?;
        self.outputs.push("manifest.json".into());
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_hash: config_hash(cfg),
            seeds: self.seeds,
            outputs: self.outputs,
            timings: self.timings,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: LabConfig = toml::from_str("seed = 7\n[grid]\nn = 64\nlength = 30.0\n").unwrap();
        let b: LabConfig = toml::from_str("[grid]\nlength = 30.0\nn = 64\n\n").map(|mut c: LabConfig| {
            c.seed = 7;
            c
        })
        .unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&LabConfig::default()));
    }
}
