//! Run settings: flags override an optional JSON config file, which
//! overrides the defaults.

use std::path::Path;

use clap::ValueEnum;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::io::read_text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Json,
    Csv,
}

/// The config file; every field is optional.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub net_eps: Option<f64>,
    pub k_list: Option<Vec<usize>>,
    pub tol: Option<f64>,
    pub threads: Option<usize>,
    pub output_format: Option<OutputFormat>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::bad(format!("{}: {e}", path.display())))
    }

    /// Fields set in `over` win.
    pub fn merged(self, over: ConfigFile) -> ConfigFile {
        ConfigFile {
            seed: over.seed.or(self.seed),
            samples: over.samples.or(self.samples),
            net_eps: over.net_eps.or(self.net_eps),
            k_list: over.k_list.or(self.k_list),
            tol: over.tol.or(self.tol),
            threads: over.threads.or(self.threads),
            output_format: over.output_format.or(self.output_format),
        }
    }
}

/// Resolved settings. `k_list` stays optional because each command has its
/// own default.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub samples: usize,
    pub net_eps: Option<f64>,
    pub k_list: Option<Vec<usize>>,
    pub tol: f64,
    /// 0 picks the number of cores.
    pub threads: usize,
    pub output_format: OutputFormat,
}

impl RunConfig {
    pub fn resolve(file: ConfigFile) -> CliResult<Self> {
        let cfg = RunConfig {
            seed: file.seed.unwrap_or(0),
            samples: file.samples.unwrap_or(5000),
            net_eps: file.net_eps,
            k_list: file.k_list,
            tol: file.tol.unwrap_or(0.05),
            threads: file.threads.unwrap_or(0),
            output_format: file.output_format.unwrap_or(OutputFormat::Json),
        };
        if cfg.samples == 0 {
            return Err(CliError::bad("samples must be at least 1"));
        }
        if !(cfg.tol > 0.0) {
            return Err(CliError::bad("tol must be positive"));
        }
        if let Some(eps) = cfg.net_eps {
            if !(eps > 0.0) {
                return Err(CliError::bad("net_eps must be positive"));
            }
        }
        if let Some(ks) = &cfg.k_list {
            if ks.is_empty() || ks.contains(&0) || ks.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CliError::bad("k_list must be nonempty, positive and strictly ascending"));
            }
        }
        Ok(cfg)
    }

    pub fn ks_or(&self, default: &[usize]) -> Vec<usize> {
        self.k_list.clone().unwrap_or_else(|| default.to_vec())
    }
}
