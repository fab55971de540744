//! Resolved settings for each subcommand. Defaults follow the experiment
//! settings of the method's reference runs; a TOML file (or an earlier JSON
//! manifest) supplies the base and command-line flags override it.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinSettings {
    /// `None` uses `5·10⁻³ / β`.
    pub step: Option<f64>,
    pub burn_in: usize,
    pub thinning: usize,
    pub chains: usize,
}

impl Default for LangevinSettings {
    fn default() -> Self {
        Self {
            step: None,
            burn_in: 10_000,
            thinning: 10,
            chains: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    /// `gm`, `gl1d` or `gl2d` (`d` must then be a square).
    pub model: String,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    pub langevin: LangevinSettings,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            model: "gm".into(),
            d: 10,
            n: 10_000,
            seed: 0,
            langevin: LangevinSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub algo: String,
    pub rank: usize,
    pub nbasis: usize,
    pub alpha: f64,
    /// `None` takes the algorithm's default sketch size.
    pub rtilde: Option<usize>,
    pub cluster_order: usize,
    pub seed: u64,
    /// Shared box `[-L, L]`; `None` uses the padded bounding box of the data.
    pub half_width: Option<f64>,
    pub mesh: f64,
    pub pad: f64,
    /// Latent dimension after PCA, with KDE mean-field marginals; `None`
    /// fits in the original coordinates under uniform mean-fields.
    pub pca: Option<usize>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            algo: "kn".into(),
            rank: 3,
            nbasis: 17,
            alpha: 0.01,
            rtilde: None,
            cluster_order: 1,
            seed: 0,
            half_width: None,
            mesh: 0.1,
            pad: 0.1,
            pca: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub count: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: 10_000, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// `rel-l2` or `second-moment`.
    pub metric: String,
    /// `gm` or `gl1d` for `rel-l2` against an exact truth.
    pub truth: Option<String>,
    /// Samples drawn from the model for `second-moment`.
    pub count: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: "rel-l2".into(),
            truth: None,
            count: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// `n` or `d`.
    pub sweep: String,
    pub values: Vec<usize>,
    pub algos: Vec<String>,
    /// Held fixed while sweeping the other parameter.
    pub d: usize,
    pub n: usize,
    pub rank: usize,
    pub nbasis: usize,
    pub alpha: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sweep: "n".into(),
            values: vec![1024, 2048, 4096, 8192, 16384],
            algos: vec!["kn".into(), "rsvd".into()],
            d: 5,
            n: 10_000,
            rank: 3,
            nbasis: 17,
            alpha: 0.01,
            reps: 3,
            seed: 0,
        }
    }
}

/// Sidecar written next to every output: the resolved settings, their hash
/// and the seed.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<C> {
    pub command: String,
    pub config: C,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

/// Reads the base settings for `command` from a TOML file (table named after
/// the command) or from a JSON manifest of an earlier run.
pub fn load<C: DeserializeOwned + Default>(path: Option<&Path>, command: &str) -> Result<C, CliError> {
    let Some(path) = path else {
        return Ok(C::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    if path.extension().is_some_and(|e| e == "json") {
        let m: Manifest<C> = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if m.command != command {
            return Err(CliError::Config(format!(
                "manifest is for `{}`, not `{command}`",
                m.command
            )));
        }
        return Ok(m.config);
    }
    let mut table: toml::Table =
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    match table.remove(command) {
        Some(v) => v
            .try_into()
            .map_err(|e| CliError::Config(format!("{} [{command}]: {e}", path.display()))),
        None => Ok(C::default()),
    }
}

/// Hex SHA-256 of the command name and its canonical JSON settings.
pub fn config_hash<C: Serialize>(command: &str, c: &C) -> String {
    let json = serde_json::to_string(c).expect("settings serialize");
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update([0]);
    h.update(json.as_bytes());
    format!("{:x}", h.finalize())
}

pub fn manifest<C: Serialize + Clone>(command: &str, c: &C, seed: u64) -> Manifest<C> {
    Manifest {
        command: command.into(),
        config: c.clone(),
        config_hash: config_hash(command, c),
        seed,
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

pub fn write_manifest<C: Serialize>(out: &Path, m: &Manifest<C>) -> Result<(), CliError> {
    let mut path = out.as_os_str().to_owned();
    path.push(".manifest.json");
    let text = serde_json::to_string_pretty(m).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| CliError::Io(e.to_string()))
}
