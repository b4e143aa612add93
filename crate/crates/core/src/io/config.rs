//! Run configuration read from TOML.

use crate::error::{Error, Result};
use crate::learner::LearnerConfig;
use crate::model::ModelConfig;
use crate::spectral::SpectralConfig;
use crate::topology::TopologyParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Moments are the exact law of a given model.
    ExactOracle,
    /// Moments are counted from a sample file.
    #[default]
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Strict,
    #[default]
    Lenient,
}

/// Every tolerance of a run; missing keys take their defaults.
///
/// ```
/// let cfg = treespec::io::RunConfig::from_toml("seed = 7\nmode = \"exact-oracle\"\n[topology]\ndelta_cap = 3.0\n").unwrap();
/// assert_eq!(cfg.seed, 7);
/// assert_eq!(cfg.topology.delta_cap, 3.0);
/// ```
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub m: usize,
    pub mode: Mode,
    pub strictness: Strictness,
    pub model: ModelConfig,
    /// Unset: exact defaults in exact-oracle mode, sample-scaled ones otherwise.
    pub spectral: Option<SpectralConfig>,
    pub topology: TopologyParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            m: 100_000,
            mode: Mode::default(),
            strictness: Strictness::default(),
            model: ModelConfig::default(),
            spectral: None,
            topology: TopologyParams::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = e
                .span()
                .map(|s| {
                    let before = &text[..s.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
                    (line, column)
                })
                .unwrap_or((1, 1));
            Error::Format {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        cfg.topology.validate()?;
        if let Some(s) = &cfg.spectral {
            s.validate()?;
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Learner settings for `k` states and `m` samples (`None` for exact moments).
    pub fn learner(&self, k: usize, m: Option<usize>) -> LearnerConfig {
        let spectral = self.spectral.unwrap_or_else(|| match m {
            Some(m) => SpectralConfig::sampled(k, m),
            None => SpectralConfig::default(),
        });
        LearnerConfig {
            spectral,
            sigma: self.model.sigma,
            strict: self.strictness == Strictness::Strict,
            probe_seed: self.seed,
            depth_override: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
        assert_eq!(RunConfig::from_toml("").unwrap(), cfg);
    }

    #[test]
    fn sections_and_errors() {
        let text = "mode = \"sampled\"\nstrictness = \"strict\"\n[spectral]\nsep_tol = 1e-4\n";
        let cfg = RunConfig::from_toml(text).unwrap();
        assert_eq!(cfg.strictness, Strictness::Strict);
        assert_eq!(cfg.spectral.unwrap().sep_tol, 1e-4);
        assert_eq!(cfg.spectral.unwrap().max_probe_retries, 8);
        assert!(cfg.learner(2, Some(100)).strict);
        match RunConfig::from_toml("seed = 1\nbogus = 2\n") {
            Err(Error::Format { line: 2, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::from_toml("[topology]\ndelta_cap = -1.0\n").is_err());
    }
}
