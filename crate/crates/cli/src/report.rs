//! Deterministic JSON and CSV artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use spde_lab::lattice::LatticeSpec;
use spde_lab::simulate::RNG_ID;
use spde_lab::SpectralMeasure;

use crate::config::ExperimentConfig;
use crate::error::CliError;

pub const BUILD_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Header shared by every report.
#[derive(Debug, Clone, Serialize)]
pub struct Envelope<T: Serialize> {
    pub command: &'static str,
    pub build_version: &'static str,
    pub config_hash: String,
    pub rng_id: &'static str,
    pub seed: u64,
    pub measure: SpectralMeasure,
    pub lattice: LatticeSpec,
    /// Frequency-truncation tail beyond the Nyquist radius; absent when infinite.
    pub tail_estimate: Option<f64>,
    pub results: T,
}

impl<T: Serialize> Envelope<T> {
    pub fn new(command: &'static str, config: &ExperimentConfig, results: T) -> Self {
        let tail = config.measure.tail_estimate(config.lattice.nyquist_radius());
        Self {
            command,
            build_version: BUILD_VERSION,
            config_hash: config.hash(),
            rng_id: RNG_ID,
            seed: config.seed,
            measure: config.measure.clone(),
            lattice: config.lattice.spec(),
            tail_estimate: tail.is_finite().then_some(tail),
            results,
        }
    }
}

/// Writes artifacts of one command under `<out>/<command>/`.
pub struct ArtifactWriter {
    dir: PathBuf,
    config_hash: String,
    written: Vec<PathBuf>,
}

impl ArtifactWriter {
    pub fn new(out: &Path, command: &str, config: &ExperimentConfig) -> Result<Self, CliError> {
        let dir = out.join(command);
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            config_hash: config.hash(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// CSV with a leading `# config_hash=...` comment line.
    pub fn csv<R: Serialize>(&mut self, name: &str, rows: &[R]) -> Result<(), CliError> {
        let mut buf = format!("# config_hash={}\n", self.config_hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in rows {
                w.serialize(r).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush()?;
        }
        self.write(name, &buf)
    }

    pub fn record(&mut self, path: PathBuf) {
        self.written.push(path);
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes)?;
        self.written.push(path);
        Ok(())
    }

    pub fn into_written(self) -> Vec<PathBuf> {
        self.written
    }
}
