use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("config is missing `{0}`")]
    Missing(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub local_policy_path: PathBuf,
    pub vo_policy_path: PathBuf,
    pub gridmap_path: PathBuf,
    pub callout_config_path: PathBuf,
    pub slots: usize,
    pub self_management: bool,
    pub audit_log_path: Option<PathBuf>,
    pub event_log_path: Option<PathBuf>,
    pub listen_endpoint: String,
}

pub const DEFAULT_LISTEN: &str = "127.0.0.1:7512";

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses `key = value` lines; relative paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut local = None;
        let mut vo = None;
        let mut gridmap = None;
        let mut callouts = None;
        let mut slots = 1usize;
        let mut self_management = true;
        let mut audit = None;
        let mut events = None;
        let mut listen = DEFAULT_LISTEN.to_string();

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                line: idx + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected `key = value`".into()))?;
            let (key, value) = (key.trim(), value.trim());
            let path = || base.join(value);
            match key {
                "local_policy" => local = Some(path()),
                "vo_policy" => vo = Some(path()),
                "gridmap" => gridmap = Some(path()),
                "callout_config" => callouts = Some(path()),
                "audit_log" => audit = Some(path()),
                "event_log" => events = Some(path()),
                "listen" => listen = value.to_string(),
                "slots" => {
                    slots = value
                        .parse()
                        .ok()
                        .filter(|n| *n >= 1)
                        .ok_or_else(|| syntax(format!("slots must be a positive integer, got `{value}`")))?
                }
                "self_management" => {
                    self_management = match value.to_ascii_lowercase().as_str() {
                        "on" | "true" | "yes" => true,
                        "off" | "false" | "no" => false,
                        _ => return Err(syntax(format!("self_management must be on/off, got `{value}`"))),
                    }
                }
                other => return Err(syntax(format!("unknown key `{other}`"))),
            }
        }

        Ok(ServiceConfig {
            local_policy_path: local.ok_or(ConfigError::Missing("local_policy"))?,
            vo_policy_path: vo.ok_or(ConfigError::Missing("vo_policy"))?,
            gridmap_path: gridmap.ok_or(ConfigError::Missing("gridmap"))?,
            callout_config_path: callouts.ok_or(ConfigError::Missing("callout_config"))?,
            slots,
            self_management,
            audit_log_path: audit,
            event_log_path: events,
            listen_endpoint: listen,
        })
    }
}
