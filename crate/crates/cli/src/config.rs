//! Optional TOML configuration. Command-line flags override file values,
//! which override the `INARMIX_SEED` environment variable (seed only),
//! which overrides built-in defaults.

use std::path::Path;

use inarmix::mixture::StoppingRule;
use serde::Deserialize;

use crate::error::{CliError, CliResult};

pub const SEED_ENV: &str = "INARMIX_SEED";
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub em: EmSection,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub diagnose: DiagnoseSection,
    #[serde(default)]
    pub init: InitSection,
    #[serde(default)]
    pub baseline: BaselineSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmSection {
    pub epsilon: Option<f64>,
    pub max_iters: Option<usize>,
    pub rule: Option<StoppingRule>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub lags: Option<(usize, usize)>,
    pub g_range: Option<(usize, usize)>,
    pub h_rule: Option<String>,
    pub family: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseSection {
    pub max_lag: Option<usize>,
    pub dispersion_threshold: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub alpha_grid: Option<Vec<f64>>,
    pub phi_grid: Option<Vec<f64>>,
    pub match_replicates: Option<usize>,
    pub new_component_weight: Option<f64>,
    pub kmeans_restarts: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub g_range: Option<(usize, usize)>,
    pub starts: Option<usize>,
    pub fuzziness: Option<f64>,
    pub tolerance: Option<f64>,
    pub max_iters: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map_or(0, |span| text[..span.start.min(text.len())].lines().count().max(1));
            CliError::parse(path, line, e.message().to_string())
        })
    }

    /// Flag, then config file, then environment, then the default seed.
    pub fn resolve_seed(&self, flag: Option<u64>) -> CliResult<u64> {
        Ok(self.explicit_seed(flag)?.unwrap_or(DEFAULT_SEED))
    }

    /// Like [`FileConfig::resolve_seed`] but `None` when no source sets a seed.
    pub fn explicit_seed(&self, flag: Option<u64>) -> CliResult<Option<u64>> {
        if let Some(s) = flag.or(self.seed) {
            return Ok(Some(s));
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map(Some)
                .map_err(|_| CliError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(None),
        }
    }

    pub fn init_config(&self) -> inarmix::init::InitConfig {
        let mut cfg = inarmix::init::InitConfig::default();
        let s = &self.init;
        if let Some(v) = &s.alpha_grid {
            cfg.alpha_grid = v.clone();
        }
        if let Some(v) = &s.phi_grid {
            cfg.phi_grid = v.clone();
        }
        if let Some(v) = s.match_replicates {
            cfg.match_replicates = v;
        }
        if let Some(v) = s.new_component_weight {
            cfg.new_component_weight = v;
        }
        if let Some(v) = s.kmeans_restarts {
            cfg.kmeans_restarts = v;
        }
        cfg
    }
}

/// Parses `a,b` into an ordered pair.
pub fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected two comma-separated integers, got `{s}`"))?;
    let a: usize = a.trim().parse().map_err(|_| format!("`{a}` is not an integer"))?;
    let b: usize = b.trim().parse().map_err(|_| format!("`{b}` is not an integer"))?;
    Ok((a, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let cfg: FileConfig = toml::from_str(
            r#"
            seed = 7
            [em]
            epsilon = 0.5
            rule = "lindsay"
            [search]
            lags = [2, 4]
            g_range = [2, 5]
            [init]
            new_component_weight = 0.1
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.em.rule, Some(StoppingRule::Lindsay));
        assert_eq!(cfg.search.lags, Some((2, 4)));
        assert_eq!(cfg.init_config().new_component_weight, 0.1);
        assert_eq!(cfg.resolve_seed(Some(3)).unwrap(), 3);
        assert_eq!(cfg.resolve_seed(None).unwrap(), 7);
    }

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("2, 4"), Ok((2, 4)));
        assert!(parse_pair("2").is_err());
        assert!(parse_pair("a,1").is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("sed = 1").is_err());
    }
}
