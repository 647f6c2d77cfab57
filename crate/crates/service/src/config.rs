use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use serde::{Deserialize, Serialize};
use splatcap_core::optim::TrainConfig;
use thiserror::Error;

/// Prefix of environment overrides; nested fields are separated by `__`,
/// e.g. `SPLATCAP_TRAIN__ITERATIONS=500`.
pub const ENV_PREFIX: &str = "SPLATCAP_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} does not exist")]
    MissingFile(PathBuf),
    #[error("invalid configuration: {0}")]
    Extract(#[from] Box<figment::Error>),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
    #[error("train: {0}")]
    Train(#[from] splatcap_core::optim::ConfigError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub data_root: PathBuf,
    pub workers: usize,
    /// Frame extractor command; `{input}` is the uploaded video, `{output}`
    /// the frames directory, `{fps}` the sampling rate.
    pub extractor_command: String,
    /// SfM command; `{input}` is the frames directory, `{output}` the
    /// directory the sparse model is expected under.
    pub sfm_command: String,
    pub fps: f64,
    pub max_upload_bytes: u64,
    /// Wall-clock limit for each stage.
    pub stage_timeout_secs: u64,
    pub train: TrainConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: SocketAddr::from(([127, 0, 0, 1], 8080)),
            data_root: PathBuf::from("splatcap-data"),
            workers: 1,
            extractor_command:
                "ffmpeg -nostdin -loglevel error -i {input} -vf fps={fps} {output}/frame_%05d.png".into(),
            sfm_command: "colmap automatic_reconstructor --image_path {input} --workspace_path {output} --dense 0"
                .into(),
            fps: 2.0,
            max_upload_bytes: 512 * 1024 * 1024,
            stage_timeout_secs: 30 * 60,
            train: TrainConfig::default(),
        }
    }
}

impl ServiceConfig {
    /// Defaults, then the TOML file (if any), then environment overrides.
    pub fn figment(path: Option<&Path>) -> Result<Figment, ConfigError> {
        let mut figment = Figment::from(Serialized::defaults(ServiceConfig::default()));
        if let Some(path) = path {
            if !path.is_file() {
                return Err(ConfigError::MissingFile(path.to_path_buf()));
            }
            figment = figment.merge(Toml::file_exact(path));
        }
        Ok(figment.merge(Env::prefixed(ENV_PREFIX).split("__")))
    }

    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let config: ServiceConfig = Self::figment(path)?.extract().map_err(Box::new)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, message: &str| ConfigError::Invalid {
            field,
            message: message.to_string(),
        };
        for (field, template) in [
            ("extractor_command", &self.extractor_command),
            ("sfm_command", &self.sfm_command),
        ] {
            let words = shell_words::split(template).map_err(|e| invalid(field, &e.to_string()))?;
            if words.is_empty() {
                return Err(invalid(field, "command is empty"));
            }
            for placeholder in ["{input}", "{output}"] {
                if !template.contains(placeholder) {
                    return Err(invalid(field, &format!("missing placeholder {placeholder}")));
                }
            }
        }
        if self.workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(invalid("fps", "must be positive"));
        }
        if self.max_upload_bytes == 0 {
            return Err(invalid("max_upload_bytes", "must be positive"));
        }
        if self.stage_timeout_secs == 0 {
            return Err(invalid("stage_timeout_secs", "must be positive"));
        }
        self.train.validate()?;
        Ok(())
    }

    pub fn stage_timeout(&self) -> Duration {
        Duration::from_secs(self.stage_timeout_secs)
    }
}
