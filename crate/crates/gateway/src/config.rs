use std::path::{Path, PathBuf};

use dyad_core::interpreter::ProviderConfig;
use dyad_core::recommend::Weights;
use serde::{Deserialize, Serialize};

use crate::GatewayError;

/// Server settings. Loaded from TOML, then overridden by `DYAD_*` variables.
///
/// ```toml
/// listen = "127.0.0.1:7878"
/// data_dir = "/var/lib/dyad"
/// ephemeral_ttl_secs = 60
///
/// [weights]
/// w_text = 1.0
/// w_ctx = 1.0
/// w_pref = 0.5
/// noise_amplitude = 0.05
///
/// [provider]
/// provider_kind = "offline"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    /// Without a data directory everything lives in memory.
    pub data_dir: Option<PathBuf>,
    pub ephemeral_ttl_secs: u64,
    /// A conversation whose latest move is older than this is idle.
    pub idle_after_secs: u64,
    pub weights: Weights,
    pub provider: ProviderConfig,
    pub library_path: Option<PathBuf>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:7878".into(),
            data_dir: None,
            ephemeral_ttl_secs: 60,
            idle_after_secs: 600,
            weights: Weights::default(),
            provider: ProviderConfig::offline(),
            library_path: None,
        }
    }
}

fn env_number<T: std::str::FromStr>(name: &str) -> Result<Option<T>, GatewayError> {
    match std::env::var(name) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| GatewayError::Config(format!("{name}={v:?} is not a valid number"))),
        Err(_) => Ok(None),
    }
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, GatewayError> {
        toml::from_str(text).map_err(|e| GatewayError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies `DYAD_LISTEN`, `DYAD_DATA_DIR`, `DYAD_EPHEMERAL_TTL_SECS`,
    /// `DYAD_IDLE_AFTER_SECS`, `DYAD_W_TEXT`, `DYAD_W_CTX`, `DYAD_W_PREF`,
    /// `DYAD_NOISE_AMPLITUDE`, `DYAD_LIBRARY` and the provider variables.
    pub fn with_env_overrides(mut self) -> Result<Self, GatewayError> {
        if let Ok(v) = std::env::var("DYAD_LISTEN") {
            self.listen = v;
        }
        if let Ok(v) = std::env::var("DYAD_DATA_DIR") {
            self.data_dir = Some(v.into());
        }
        if let Ok(v) = std::env::var("DYAD_LIBRARY") {
            self.library_path = Some(v.into());
        }
        if let Some(v) = env_number("DYAD_EPHEMERAL_TTL_SECS")? {
            self.ephemeral_ttl_secs = v;
        }
        if let Some(v) = env_number("DYAD_IDLE_AFTER_SECS")? {
            self.idle_after_secs = v;
        }
        if let Some(v) = env_number("DYAD_W_TEXT")? {
            self.weights.w_text = v;
        }
        if let Some(v) = env_number("DYAD_W_CTX")? {
            self.weights.w_ctx = v;
        }
        if let Some(v) = env_number("DYAD_W_PREF")? {
            self.weights.w_pref = v;
        }
        if let Some(v) = env_number("DYAD_NOISE_AMPLITUDE")? {
            self.weights.noise_amplitude = v;
        }
        self.provider = self.provider.with_env_overrides()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        self.weights
            .validate()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        if self.ephemeral_ttl_secs == 0 {
            return Err(GatewayError::Config("ephemeral_ttl_secs must be positive".into()));
        }
        Ok(())
    }
}
