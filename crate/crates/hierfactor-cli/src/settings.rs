use std::path::{Path, PathBuf};

use crate::exit::{CliError, Result};
use crate::report::Format;

/// Flat key-value config file. Every command-line flag has a counterpart
/// key; flags win when both are present.
#[derive(Debug, Default, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub dmax: Option<usize>,
    pub omega: Option<f64>,
    pub block_length: Option<usize>,
    pub bootstrap_reps: Option<usize>,
    pub level: Option<f64>,
    pub format: Option<String>,
    pub l: Option<AxisValues>,
    pub t: Option<AxisValues>,
    pub mode: Option<String>,
    pub csv: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub noise_scale: Option<f64>,
}

/// A grid axis in the config file: a single size or a list.
#[derive(Debug, Clone, serde::Deserialize)]
#[serde(untagged)]
pub enum AxisValues {
    One(usize),
    Many(Vec<usize>),
}

impl AxisValues {
    pub fn to_vec(&self) -> Vec<usize> {
        match self {
            AxisValues::One(v) => vec![*v],
            AxisValues::Many(vs) => vs.clone(),
        }
    }
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(&format!("reading {}", path.display()), e))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))
    }

    pub fn format(&self) -> Result<Option<Format>> {
        self.format
            .as_deref()
            .map(|name| {
                <Format as clap::ValueEnum>::from_str(name, true)
                    .map_err(|_| CliError::Validation(format!("unknown format {name:?}")))
            })
            .transpose()
    }
}

/// Fitting mode shared by `fit` and `bootstrap-ci`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Homogeneous,
    Heterogeneous,
}

pub fn parse_mode(name: &str) -> Result<Mode> {
    <Mode as clap::ValueEnum>::from_str(name, true)
        .map_err(|_| CliError::Validation(format!("unknown mode {name:?}")))
}

/// Builds the estimator configuration from resolved knobs.
pub fn model_config(
    seed: u64,
    dmax: Option<usize>,
    omega: Option<f64>,
) -> hierfactor::panel::ModelConfig {
    let mut config = hierfactor::panel::ModelConfig::default().with_seed(seed);
    if let Some(dmax) = dmax {
        config = config.with_max_factors(dmax);
    }
    if let Some(omega) = omega {
        config = config.with_threshold_override(omega);
    }
    config
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_parses_scalars_and_lists() {
        let parsed: FileConfig = toml::from_str(
            "seed = 9\nreps = 50\nl = [20, 40]\nt = 20\nformat = \"json-report\"\n",
        )
        .unwrap();
        assert_eq!(parsed.seed, Some(9));
        assert_eq!(parsed.l.as_ref().unwrap().to_vec(), vec![20, 40]);
        assert_eq!(parsed.t.as_ref().unwrap().to_vec(), vec![20]);
        assert!(matches!(parsed.format().unwrap(), Some(Format::JsonReport)));
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = toml::from_str::<FileConfig>("sed = 9\n").unwrap_err();
        assert!(err.to_string().contains("sed"));
    }

    #[test]
    fn model_config_carries_overrides() {
        let config = model_config(4, Some(6), Some(0.25));
        assert_eq!(config.seed, 4);
        assert_eq!(config.max_factors, 6);
        assert_eq!(config.threshold_override, Some(0.25));
        let plain = model_config(0, None, None);
        assert_eq!(plain.max_factors, 20);
        assert_eq!(plain.threshold_override, None);
    }
}
