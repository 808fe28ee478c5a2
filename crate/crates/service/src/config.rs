//! Service configuration file.
//!
//! ```toml
//! host = "127.0.0.1"
//! port = 8080
//! index = "corpus.daridx"     # relative paths resolve against this file
//! static_dir = "ui/dist"
//! snapshot_dir = "sessions"
//! demo_mode = false
//!
//! [session]
//! images_per_turn = 3
//!
//! [backends]
//! dim = 512
//! ```
//!
//! `DAR_PORT` and `DAR_INDEX` override `port` and `index`.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use dar::DarConfig;
use serde::{Deserialize, Serialize};

pub const ENV_PORT: &str = "DAR_PORT";
pub const ENV_INDEX: &str = "DAR_INDEX";
pub const ENV_CONFIG: &str = "DAR_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: IpAddr,
    pub port: u16,
    pub index: Option<PathBuf>,
    /// Directory holding the UI bundle, served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Base directory for relative corpus image URIs; defaults to the
    /// directory of the index file.
    pub assets_dir: Option<PathBuf>,
    /// Session transcripts are written here after every change and
    /// reloaded at startup.
    pub snapshot_dir: Option<PathBuf>,
    /// Allows sessions with a known target and reports hits.
    pub demo_mode: bool,
    #[serde(flatten)]
    pub dar: DarConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: 8080,
            index: None,
            static_dir: None,
            assets_dir: None,
            snapshot_dir: None,
            demo_mode: false,
            dar: DarConfig::default(),
        }
    }
}

impl ServiceConfig {
    pub fn from_toml(src: &str) -> dar::Result<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| dar::Error::Config(e.to_string()))?;
        cfg.dar.session.validate()?;
        Ok(cfg)
    }

    /// Loads `path` and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> dar::Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.index,
            &mut cfg.static_dir,
            &mut cfg.assets_dir,
            &mut cfg.snapshot_dir,
            &mut cfg.dar.templates_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `DAR_PORT` and `DAR_INDEX`.
    pub fn apply_env(&mut self) -> dar::Result<()> {
        self.apply_overrides(std::env::var(ENV_PORT).ok(), std::env::var(ENV_INDEX).ok())
    }

    pub fn apply_overrides(&mut self, port: Option<String>, index: Option<String>) -> dar::Result<()> {
        if let Some(p) = port {
            self.port = p
                .parse()
                .map_err(|_| dar::Error::Config(format!("{ENV_PORT}={p:?} is not a port")))?;
        }
        if let Some(i) = index {
            self.index = Some(PathBuf::from(i));
        }
        Ok(())
    }

    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.host, self.port)
    }
}
