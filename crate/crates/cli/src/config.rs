//! Experiment configuration (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spde_lab::markov::Region;
use spde_lab::{SpaceTimeLattice, SpectralMeasure};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub measure: SpectralMeasure,
    pub lattice: SpaceTimeLattice,
    #[serde(default)]
    pub sample: SampleParams,
    #[serde(default)]
    pub covariance: CovarianceParams,
    #[serde(default)]
    pub rkhs: RkhsParams,
    #[serde(default)]
    pub markov: MarkovParams,
    #[serde(default)]
    pub riemann: RiemannParams,
}

fn default_out() -> PathBuf {
    PathBuf::from("spde-lab-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleParams {
    pub count: usize,
}

impl Default for SampleParams {
    fn default() -> Self {
        Self { count: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovarianceParams {
    /// Random point pairs compared against the ensemble.
    pub pairs: usize,
    pub paths: usize,
    /// Largest accepted studentized deviation.
    pub max_z: f64,
}

impl Default for CovarianceParams {
    fn default() -> Self {
        Self {
            pairs: 50,
            paths: 10_000,
            max_z: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RkhsParams {
    /// Number of random band-limited integrands.
    pub functions: usize,
    /// Fraction of the Nyquist band that carries energy.
    pub band: f64,
    pub probes: usize,
    /// Largest accepted relative deviation between solver and direct quadrature.
    pub max_probe_deviation: f64,
    /// Largest accepted duality gap.
    pub max_duality_gap: f64,
    /// Paths for the Monte-Carlo representer check on the first integrand; 0 skips it.
    pub mc_paths: usize,
    pub max_z: f64,
}

impl Default for RkhsParams {
    fn default() -> Self {
        Self {
            functions: 8,
            band: 0.25,
            probes: 8,
            max_probe_deviation: 1e-8,
            max_duality_gap: 1e-8,
            mc_paths: 0,
            max_z: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkovParams {
    /// Band half-widths in lattice cells.
    pub band_widths: Vec<f64>,
    /// Screened region; the central half of time and of every axis when absent.
    pub region: Option<Region>,
    pub kunsch: Option<KunschParams>,
}

impl Default for MarkovParams {
    fn default() -> Self {
        Self {
            band_widths: vec![1.0, 2.0, 3.0, 4.0],
            region: None,
            kunsch: None,
        }
    }
}

/// Two space-time bumps separated along the first axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KunschParams {
    /// Spatial resolutions to run, each replacing every `n_space` entry.
    pub levels: Vec<usize>,
    pub time_center: f64,
    pub time_radius: f64,
    pub space_radius: f64,
    /// Distance between the bump centers.
    pub separation: f64,
    /// Largest accepted normalized inner product when the measure is germ Markov.
    pub max_inner: f64,
}

impl Default for KunschParams {
    fn default() -> Self {
        Self {
            levels: vec![256, 512],
            time_center: 0.5,
            time_radius: 0.3,
            space_radius: 2.0,
            separation: 5.0,
            max_inner: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiemannParams {
    pub levels: Vec<usize>,
    pub time_center: f64,
    pub time_radius: f64,
    /// Bump center; the middle of the domain when absent.
    pub space_center: Option<Vec<f64>>,
    pub space_radius: f64,
}

impl Default for RiemannParams {
    fn default() -> Self {
        Self {
            levels: vec![16, 32, 64, 128],
            time_center: 0.5,
            time_radius: 0.3,
            space_center: None,
            space_radius: 2.0,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            measure: SpectralMeasure::bessel(2.0, 1).expect("valid measure"),
            lattice: SpaceTimeLattice::new_1d(16.0, 32, 1.0, 64).expect("valid lattice"),
            sample: SampleParams::default(),
            covariance: CovarianceParams::default(),
            rkhs: RkhsParams::default(),
            markov: MarkovParams::default(),
            riemann: RiemannParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form, so formatting of the source file does not
    /// matter. The output directory is not an experimental parameter and is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let canonical = serde_json::to_vec(&c).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// The screened region, defaulting to the central half of every coordinate.
    pub fn screening_region(&self) -> Region {
        self.markov.region.clone().unwrap_or_else(|| {
            let t = self.lattice.t_max();
            Region {
                t0: 0.25 * t,
                t1: 0.75 * t,
                x0: self.lattice.extent().iter().map(|l| 0.25 * l).collect(),
                x1: self.lattice.extent().iter().map(|l| 0.75 * l).collect(),
            }
        })
    }
}
