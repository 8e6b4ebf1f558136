//! TOML configuration shared by the command-line tool and tests.
//!
//! Every section is optional; missing keys fall back to the built-in
//! defaults.
//!
//! ```toml
//! [gate]
//! ad_libraries = ["com.ads.sdk"]
//!
//! [catalog]
//! file = "apis.txt"
//!
//! [slicer]
//! max_depth = 10
//!
//! [training]
//! epochs = 200
//! seed = 7
//!
//! [scan]
//! timeout_ms = 300000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::VaeConfig;
use crate::gate::GateConfig;
use crate::ir::{ApiCatalog, CatalogError};
use crate::pipeline::AnalysisConfig;
use crate::slicer::SliceLimits;

/// Names a config file to use when no path is given explicitly.
pub const CONFIG_ENV: &str = "CLICKSLICE_CONFIG";

pub const DEFAULT_TIMEOUT_MS: u64 = 300_000;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid API catalog {path}: {source}")]
    Catalog {
        path: PathBuf,
        #[source]
        source: CatalogError,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    /// Replacement catalog; relative paths resolve against the config file.
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub timeout_ms: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            timeout_ms: DEFAULT_TIMEOUT_MS,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub gate: GateConfig,
    pub catalog: CatalogSection,
    pub slicer: SliceLimits,
    pub training: VaeConfig,
    pub scan: ScanSection,
}

impl Config {
    /// Parses config text; `base` anchors a relative catalog path.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: Config = toml::from_str(text)?;
        if let Some(f) = &cfg.catalog.file {
            if f.is_relative() {
                cfg.catalog.file = Some(base.join(f));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|source| ConfigError::Toml {
            path: path.to_path_buf(),
            source,
        })
    }

    /// An explicit path wins, then the environment variable, then defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, ConfigError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn analysis(&self) -> Result<AnalysisConfig, ConfigError> {
        let catalog = match &self.catalog.file {
            None => ApiCatalog::default(),
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                ApiCatalog::parse(&text).map_err(|source| ConfigError::Catalog {
                    path: path.clone(),
                    source,
                })?
            }
        };
        Ok(AnalysisConfig {
            gate: self.gate.clone(),
            catalog,
            limits: self.slicer,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        let c = Config::from_toml("", Path::new(".")).unwrap();
        assert_eq!(c, Config::default());
        assert_eq!(c.scan.timeout_ms, 300_000);
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let c = Config::from_toml("[slicer]\nmax_depth = 4\n[training]\nseed = 99\n", Path::new(".")).unwrap();
        assert_eq!(c.slicer.max_depth, 4);
        assert_eq!(c.slicer.max_nodes, SliceLimits::default().max_nodes);
        assert_eq!(c.training.seed, 99);
        assert_eq!(c.training.epochs, VaeConfig::default().epochs);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[slicer]\nmax_dept = 4\n", Path::new(".")).is_err());
        assert!(Config::from_toml("[nonsense]\n", Path::new(".")).is_err());
    }

    #[test]
    fn catalog_file_resolves_against_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("apis.txt"), ApiCatalog::default().to_text()).unwrap();
        let cfg_path = dir.path().join("c.toml");
        std::fs::write(&cfg_path, "[catalog]\nfile = \"apis.txt\"\n").unwrap();
        let c = Config::load(&cfg_path).unwrap();
        assert_eq!(c.catalog.file.as_deref(), Some(dir.path().join("apis.txt").as_path()));
        assert_eq!(c.analysis().unwrap().catalog, ApiCatalog::default());
    }

    #[test]
    fn missing_catalog_file_is_an_io_error() {
        let c = Config::from_toml("[catalog]\nfile = \"/nonexistent/apis.txt\"\n", Path::new(".")).unwrap();
        assert!(matches!(c.analysis(), Err(ConfigError::Io { .. })));
    }
}
