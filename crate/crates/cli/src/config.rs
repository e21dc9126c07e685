//! Settings file and environment overrides.
//!
//! Lookup order for every setting: command-line flag, then a
//! `KINETRAIN_`-prefixed environment variable (nested keys joined with
//! `__`, e.g. `KINETRAIN_GATEWAY__PORT`), then the config file, then the
//! built-in default. The file is `--config`, else `$KINETRAIN_CONFIG`, else
//! `./kinetrain.toml` when present.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use figment::providers::{Env, Format, Serialized, Toml};
use figment::Figment;
use kinetrain_core::session::BackendChoice;
use kinetrain_core::TaskId;
use serde::{Deserialize, Serialize};

pub const ENV_PREFIX: &str = "KINETRAIN_";
pub const DEFAULT_FILE: &str = "kinetrain.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Oracle,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendSection {
    pub kind: BackendKind,
    /// Artificial oracle latency.
    pub delay_ms: u64,
    /// OpenAI-compatible endpoint, e.g. `http://localhost:8000/v1`.
    pub base_url: Option<String>,
    pub model: Option<String>,
    /// Name of the variable holding the API key.
    pub api_key_env: Option<String>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection { kind: BackendKind::Oracle, delay_ms: 0, base_url: None, model: None, api_key_env: None }
    }
}

impl BackendSection {
    pub fn choice(&self) -> anyhow::Result<BackendChoice> {
        Ok(match self.kind {
            BackendKind::Oracle => BackendChoice::Oracle { delay_ms: self.delay_ms },
            BackendKind::Remote => BackendChoice::Remote {
                base_url: self.base_url.clone().context("backend.base_url is required for the remote backend")?,
                model: self.model.clone().context("backend.model is required for the remote backend")?,
                api_key_env: self.api_key_env.clone(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewaySection {
    pub bind: String,
    pub port: u16,
    /// Built trainer UI to serve at `/`.
    pub static_dir: Option<PathBuf>,
    pub log_dir: Option<PathBuf>,
    pub tick_ms: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection { bind: "127.0.0.1".into(), port: 8080, static_dir: None, log_dir: None, tick_ms: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub backend: BackendSection,
    /// Stimulator socket; an in-process simulated device when unset.
    pub device_addr: Option<String>,
    pub deadline_ms: u64,
    /// Calibration profile JSON.
    pub profile: Option<PathBuf>,
    /// Index written by `kb build`.
    pub kb_index: Option<PathBuf>,
    /// Directory of `<task>.json` specs replacing the built-in envelopes.
    pub task_spec_dir: Option<PathBuf>,
    pub gateway: GatewaySection,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            backend: BackendSection::default(),
            device_addr: None,
            deadline_ms: 800,
            profile: None,
            kb_index: None,
            task_spec_dir: None,
            gateway: GatewaySection::default(),
        }
    }
}

impl FileConfig {
    /// Task spec override for `task`, when the directory has one.
    pub fn task_spec_path(&self, task: TaskId) -> Option<PathBuf> {
        let p = self.task_spec_dir.as_ref()?.join(format!("{}.json", task.as_str()));
        p.exists().then_some(p)
    }
}

fn file_path(explicit: Option<&Path>) -> anyhow::Result<Option<PathBuf>> {
    if let Some(p) = explicit {
        if !p.exists() {
            bail!("config file {} not found", p.display());
        }
        return Ok(Some(p.to_path_buf()));
    }
    if let Ok(p) = std::env::var(format!("{ENV_PREFIX}CONFIG")) {
        let p = PathBuf::from(p);
        if !p.exists() {
            bail!("config file {} not found", p.display());
        }
        return Ok(Some(p));
    }
    let p = PathBuf::from(DEFAULT_FILE);
    Ok(p.exists().then_some(p))
}

/// Defaults, then the file, then the environment. Flags are applied by
/// each subcommand on top.
pub fn load(explicit: Option<&Path>) -> anyhow::Result<FileConfig> {
    let mut fig = Figment::from(Serialized::defaults(FileConfig::default()));
    if let Some(p) = file_path(explicit)? {
        fig = fig.merge(Toml::file(p));
    }
    fig = fig.merge(Env::prefixed(ENV_PREFIX).ignore(&["config"]).split("__"));
    fig.extract().context("reading configuration")
}

#[cfg(test)]
#[allow(clippy::result_large_err)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env() {
        figment::Jail::expect_with(|jail| {
            jail.create_file(
                "k.toml",
                r#"
                deadline_ms = 600
                device_addr = "127.0.0.1:9100"
                [backend]
                kind = "remote"
                base_url = "http://localhost:8000/v1"
                model = "m"
                [gateway]
                port = 9000
                "#,
            )?;
            let c = load(Some(Path::new("k.toml"))).unwrap();
            assert_eq!(c.deadline_ms, 600);
            assert_eq!(c.gateway.port, 9000);
            assert_eq!(c.gateway.bind, "127.0.0.1");
            assert_eq!(c.backend.kind, BackendKind::Remote);

            jail.set_env("KINETRAIN_GATEWAY__PORT", "9100");
            jail.set_env("KINETRAIN_DEADLINE_MS", "500");
            let c = load(Some(Path::new("k.toml"))).unwrap();
            assert_eq!(c.gateway.port, 9100);
            assert_eq!(c.deadline_ms, 500);
            assert!(matches!(c.backend.choice().unwrap(), BackendChoice::Remote { .. }));
            Ok(())
        });
    }

    #[test]
    fn defaults_without_a_file() {
        figment::Jail::expect_with(|_| {
            let c = load(None).unwrap();
            assert_eq!(c, FileConfig::default());
            assert_eq!(c.backend.choice().unwrap(), BackendChoice::Oracle { delay_ms: 0 });
            Ok(())
        });
    }

    #[test]
    fn remote_needs_endpoint() {
        let b = BackendSection { kind: BackendKind::Remote, ..BackendSection::default() };
        assert!(b.choice().is_err());
    }

    #[test]
    fn missing_explicit_file_is_an_error() {
        assert!(load(Some(Path::new("/nonexistent/k.toml"))).is_err());
    }
}
