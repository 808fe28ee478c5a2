//! TOML configuration shared by the CLI, the service and the examples.
//!
//! ```toml
//! templates_dir = "prompts"        # optional overrides
//!
//! [session]
//! images_per_turn = 3
//! hit_k = 10
//!
//! [backends]
//! dim = 512
//! [backends.llm]
//! kind = "http"
//! endpoint = "http://127.0.0.1:8081"
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::backends::{Backends, BackendsConfig};
use crate::error::{Error, Result};
use crate::index::EmbeddingIndex;
use crate::reformulate::PromptTemplates;
use crate::session::{DarEngine, SessionConfig};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DarConfig {
    pub session: SessionConfig,
    pub backends: BackendsConfig,
    pub templates_dir: Option<PathBuf>,
}

impl DarConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(src).map_err(|e| Error::Config(e.to_string()))?;
        cfg.session.validate()?;
        Ok(cfg)
    }

    /// Loads `path`; a relative `templates_dir` is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(dir), Some(parent)) = (cfg.templates_dir.as_mut(), path.parent()) {
            if dir.is_relative() {
                *dir = parent.join(&*dir);
            }
        }
        Ok(cfg)
    }

    pub fn templates(&self) -> Result<PromptTemplates> {
        match &self.templates_dir {
            Some(dir) => PromptTemplates::load_dir(dir),
            None => Ok(PromptTemplates::default()),
        }
    }

    pub fn engine(&self, index: Arc<EmbeddingIndex>) -> Result<DarEngine> {
        let backends = Backends::from_config(&self.backends)?;
        DarEngine::with_templates(index, backends, Arc::new(self.templates()?))
    }
}
