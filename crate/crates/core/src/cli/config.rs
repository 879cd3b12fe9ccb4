use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::inference::SamplerConfig;
use crate::model::{GpApprox, Hyperparameters, ModelSpec, SpatialMode};
use crate::spatial::HsgpConfig;

pub const DEFAULT_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n: usize,
    #[serde(default = "default_censoring")]
    pub censoring: f64,
}

fn default_censoring() -> f64 {
    0.4
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApproxKind {
    Hsgp,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub spatial: SpatialMode,
    pub intervals: usize,
    pub approx: ApproxKind,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { spatial: SpatialMode::InterceptSlope, intervals: 10, approx: ApproxKind::Hsgp }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerSection {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub thin: usize,
    pub target_accept: f64,
    pub max_tree_depth: usize,
}

impl Default for SamplerSection {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerSection {
            chains: d.chains,
            warmup: d.warmup,
            iterations: d.iterations,
            thin: d.thin,
            target_accept: d.target_accept,
            max_tree_depth: d.max_tree_depth,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KrigingSection {
    /// Grid points along x and y, spanning the bounding box of the data.
    pub grid: [usize; 2],
    /// CSV of prediction coordinates (`x,y`) used instead of the grid.
    pub coords: Option<PathBuf>,
    /// GeoJSON polygon(s); grid points outside are dropped.
    pub mask: Option<PathBuf>,
    pub geojson: bool,
}

impl Default for KrigingSection {
    fn default() -> Self {
        KrigingSection { grid: [21, 21], coords: None, mask: None, geojson: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusteringSection {
    pub k: usize,
    pub restarts: usize,
}

impl Default for ClusteringSection {
    fn default() -> Self {
        ClusteringSection { k: 3, restarts: 50 }
    }
}

/// Everything a pipeline run can be configured with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub simulation: Option<SimulationSection>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub hsgp: HsgpConfig,
    #[serde(default)]
    pub hyper: Hyperparameters,
    #[serde(default)]
    pub sampler: SamplerSection,
    #[serde(default)]
    pub kriging: KrigingSection,
    #[serde(default)]
    pub clustering: ClusteringSection,
}

/// A parsed configuration plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    /// Short SHA-256 of the config file bytes, or `"none"`.
    pub hash: String,
    pub dir: PathBuf,
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        LoadedConfig { config: RunConfig::default(), hash: "none".into(), dir: PathBuf::from(".") }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let config = parse(text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedConfig { config, hash: short_hash(&bytes), dir })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::defaults()), Self::from_path)
    }

    /// Resolves a path from the config relative to the config file.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn seed(&self, cli: Option<u64>) -> u64 {
        cli.or(self.config.seed).unwrap_or(DEFAULT_SEED)
    }
}

/// Parses and validates a TOML configuration.
pub fn parse(text: &str) -> Result<RunConfig> {
    let config: RunConfig = toml::from_str(text).map_err(config_err)?;
    config.validate()?;
    Ok(config)
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate().map_err(config_err)?;
        self.hsgp.validate().map_err(config_err)?;
        self.sampler_config(0).validate().map_err(config_err)?;
        ModelSpec::new(self.model.spatial, self.model.intervals, GpApprox::Exact).map_err(config_err)?;
        if let Some(sim) = &self.simulation {
            if sim.n < 2 {
                return Err(Error::Config("simulation.n must be at least 2".into()));
            }
            if !(sim.censoring > 0.0 && sim.censoring < 1.0) {
                return Err(Error::Config("simulation.censoring must lie in (0, 1)".into()));
            }
        }
        if self.kriging.grid.iter().any(|&g| g < 2) {
            return Err(Error::Config("kriging.grid needs at least 2 points per axis".into()));
        }
        if self.clustering.k == 0 || self.clustering.restarts == 0 {
            return Err(Error::Config("clustering.k and clustering.restarts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_spec(&self) -> ModelSpec {
        let gp = match self.model.approx {
            ApproxKind::Hsgp => GpApprox::Hsgp(self.hsgp),
            ApproxKind::Exact => GpApprox::Exact,
        };
        ModelSpec { spatial: self.model.spatial, intervals: self.model.intervals, gp }
    }

    pub fn sampler_config(&self, seed: u64) -> SamplerConfig {
        let s = &self.sampler;
        SamplerConfig {
            chains: s.chains,
            warmup: s.warmup,
            iterations: s.iterations,
            thin: s.thin,
            seed,
            target_accept: s.target_accept,
            max_tree_depth: s.max_tree_depth,
        }
    }
}
