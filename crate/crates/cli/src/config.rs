//! Run configuration: an optional TOML file, then command-line flags on top.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

use assistkit::edit_codec::EditFormat;
use assistkit::llm_client::CassetteMode;

/// Mirrors the TOML file. Every field is optional so flags can fill gaps.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub format: Option<EditFormat>,
    pub window: Option<usize>,
    pub templates: Option<PathBuf>,
    pub backend: BackendSettings,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSettings {
    /// An HTTP base URL, or `mock` for the offline stand-in.
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable that holds the API key.
    pub api_key_env: Option<String>,
    pub timeout_s: Option<f64>,
    pub max_retries: Option<u32>,
    pub backoff_base_s: Option<f64>,
    pub max_in_flight: Option<usize>,
    pub temperature: Option<f64>,
    pub max_tokens: Option<u32>,
    pub cassette: Option<PathBuf>,
    pub cassette_mode: Option<CassetteMode>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn workers(&self) -> usize {
        self.workers.unwrap_or(1).max(1)
    }

    pub fn format(&self) -> EditFormat {
        self.format.unwrap_or(EditFormat::Wf)
    }
}

/// Overwrites `slot` when the flag was given.
pub fn overlay<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_file() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            workers = 4
            format = "sr"
            window = 3
            [backend]
            endpoint = "http://localhost:8000/v1"
            api_key_env = "MY_KEY"
            cassette = "calls.jsonl"
            cassette_mode = "replay"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed(), 7);
        assert_eq!(cfg.workers(), 4);
        assert_eq!(cfg.format(), EditFormat::Sr);
        assert_eq!(cfg.backend.cassette_mode, Some(CassetteMode::Replay));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sede = 1").is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let mut seed = Some(1);
        overlay(&mut seed, None);
        assert_eq!(seed, Some(1));
        overlay(&mut seed, Some(9));
        assert_eq!(seed, Some(9));
    }
}
