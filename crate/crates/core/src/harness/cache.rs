use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::synthesis::{build_ic_design, AxisDesignConfig, IcDesign};

/// Bumped whenever the synthesis output for a given input may change.
const FORMAT: &str = "ictrack-design-v1";

/// Directory of synthesized designs, one JSON file per input hash.
#[derive(Debug, Clone)]
pub struct DesignCache {
    dir: PathBuf,
}

impl DesignCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DesignCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// SHA-256 of the serialized synthesis inputs.
    pub fn key(cfg: &AxisDesignConfig) -> Result<String> {
        let body = serde_json::to_vec(cfg).map_err(|e| Error::Parse(e.to_string()))?;
        let mut h = Sha256::new();
        h.update(FORMAT.as_bytes());
        h.update(&body);
        Ok(hex::encode(h.finalize()))
    }

    pub fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("design-{key}.json"))
    }

    /// Cached design for `cfg`, if a readable one exists.
    pub fn load(&self, cfg: &AxisDesignConfig) -> Result<Option<IcDesign>> {
        let path = self.path_for(&Self::key(cfg)?);
        match std::fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice(&bytes) {
                Ok(d) => Ok(Some(d)),
                Err(e) => {
                    log::warn!("ignoring unreadable design cache {}: {e}", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(&path, e)),
        }
    }

    pub fn store(&self, cfg: &AxisDesignConfig, design: &IcDesign) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(&Self::key(cfg)?);
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let bytes = serde_json::to_vec(design).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Returns the cached design or synthesizes and stores it; the flag is
    /// true on a cache hit.
    pub fn load_or_build(&self, cfg: &AxisDesignConfig) -> Result<(IcDesign, bool)> {
        if let Some(d) = self.load(cfg)? {
            return Ok((d, true));
        }
        let d = build_ic_design(cfg)?;
        self.store(cfg, &d)?;
        Ok((d, false))
    }
}
