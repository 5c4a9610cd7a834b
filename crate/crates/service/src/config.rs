use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use jam_core::gateway::ProviderProfile;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid service config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid service config: {0}")]
    Invalid(String),
}

/// Settings for an OpenAI-compatible provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderSettings {
    /// Off by default: the service runs on the offline backend.
    pub enabled: bool,
    pub base_url: String,
    pub chat_model: String,
    pub transcribe_model: String,
    pub speech_model: String,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub session_call_budget: Option<u64>,
    pub max_in_flight: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        let p = ProviderProfile::default();
        ProviderSettings {
            enabled: false,
            base_url: "https://api.openai.com/v1".to_string(),
            chat_model: "gpt-4o-mini".to_string(),
            transcribe_model: "whisper-1".to_string(),
            speech_model: "tts-1".to_string(),
            timeout_ms: p.timeout_ms,
            max_retries: p.max_retries,
            backoff_base_ms: p.backoff_base_ms,
            session_call_budget: p.session_call_budget,
            max_in_flight: p.max_in_flight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    /// Session logs, the index and the stats cache live here.
    pub data_dir: PathBuf,
    /// Idle sessions are abandoned after this long without a command.
    pub session_idle_minutes: f64,
    /// Name of the environment variable holding the provider API key.
    pub credentials_env: String,
    /// Difficulty preset for sessions whose config does not name one.
    pub difficulty: String,
    /// Interval at which opponents' speech moves forward.
    pub tick_ms: u64,
    /// Transcript fixtures served by the offline backend, keyed by file stem.
    pub fixtures_dir: Option<PathBuf>,
    pub provider: ProviderSettings,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".to_string(),
            data_dir: PathBuf::from("jam-data"),
            session_idle_minutes: 60.0,
            credentials_env: "OPENAI_API_KEY".to_string(),
            difficulty: "standard".to_string(),
            tick_ms: 250,
            fixtures_dir: None,
            provider: ProviderSettings::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ServiceConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.session_idle_minutes.is_finite() && self.session_idle_minutes > 0.0) {
            return Err(ConfigError::Invalid("session_idle_minutes must be positive".into()));
        }
        if jam_core::personas::Difficulty::preset(&self.difficulty).is_none() {
            return Err(ConfigError::Invalid(format!("unknown difficulty preset `{}`", self.difficulty)));
        }
        Ok(())
    }

    pub fn provider_profile(&self) -> ProviderProfile {
        let p = &self.provider;
        ProviderProfile {
            timeout_ms: p.timeout_ms,
            max_retries: p.max_retries,
            backoff_base_ms: p.backoff_base_ms,
            session_call_budget: p.session_call_budget,
            max_in_flight: p.max_in_flight,
            credentials_env: Some(self.credentials_env.clone()),
        }
    }

    pub fn idle_limit(&self) -> std::time::Duration {
        std::time::Duration::from_secs_f64(self.session_idle_minutes * 60.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_keys_and_defaults() {
        let cfg = ServiceConfig::from_toml(
            "data_dir = \"/tmp/jam\"\nsession_idle_minutes = 5\ncredentials_env = \"MY_KEY\"\ndifficulty = \"relaxed\"\n",
        )
        .unwrap();
        assert_eq!(cfg.data_dir, PathBuf::from("/tmp/jam"));
        assert_eq!(cfg.session_idle_minutes, 5.0);
        assert_eq!(cfg.provider_profile().credentials_env.as_deref(), Some("MY_KEY"));
        assert_eq!(ServiceConfig::from_toml("").unwrap().session_idle_minutes, 60.0);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ServiceConfig::from_toml("difficulty = \"brutal\"").is_err());
        assert!(ServiceConfig::from_toml("session_idle_minutes = 0").is_err());
        assert!(ServiceConfig::from_toml("colour = \"red\"").is_err());
    }
}
