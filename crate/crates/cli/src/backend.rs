//! Builds the chat backend named by the configuration.

use anyhow::{bail, Context, Result};

use assistkit::llm_client::mock::OfflineBackend;
use assistkit::llm_client::{BackendConfig, Cassette, CassetteMode, ChatBackend, HttpBackend};

use crate::config::BackendSettings;

pub const MOCK_ENDPOINT: &str = "mock";

fn http_config(settings: &BackendSettings, url: &str) -> BackendConfig {
    let defaults = BackendConfig::default();
    BackendConfig {
        base_url: url.to_owned(),
        api_key_env: settings.api_key_env.clone(),
        timeout_s: settings.timeout_s.unwrap_or(defaults.timeout_s),
        max_retries: settings.max_retries.unwrap_or(defaults.max_retries),
        backoff_base_s: settings.backoff_base_s.unwrap_or(defaults.backoff_base_s),
        max_in_flight: settings.max_in_flight.unwrap_or(defaults.max_in_flight),
    }
}

fn live(settings: &BackendSettings) -> Result<Box<dyn ChatBackend>> {
    match settings.endpoint.as_deref() {
        Some(MOCK_ENDPOINT) => Ok(Box::new(OfflineBackend)),
        Some(url) if url.starts_with("http://") || url.starts_with("https://") => {
            if let Some(var) = &settings.api_key_env {
                if std::env::var_os(var).is_none() {
                    bail!("environment variable {var} (named by --api-key-env) is not set");
                }
            }
            Ok(Box::new(HttpBackend::new(http_config(settings, url))?))
        }
        Some(other) => {
            bail!("unsupported endpoint `{other}` (expected an http(s) URL or `{MOCK_ENDPOINT}`)")
        }
        None => bail!("no endpoint configured (pass --endpoint URL or --endpoint {MOCK_ENDPOINT})"),
    }
}

/// The configured backend, wrapped in a cassette when one is named.
pub fn build(settings: &BackendSettings) -> Result<Box<dyn ChatBackend>> {
    let Some(path) = &settings.cassette else {
        return live(settings);
    };
    match settings.cassette_mode.unwrap_or(CassetteMode::Record) {
        CassetteMode::Replay => {
            Ok(Box::new(Cassette::replay(path).with_context(|| {
                format!("opening cassette {}", path.display())
            })?))
        }
        CassetteMode::Record => Ok(Box::new(Cassette::record(path, live(settings)?)?)),
    }
}
