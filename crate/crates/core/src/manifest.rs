//! Run manifest: what produced a mesh, for reproducing it later.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{BackendIdentities, BackendSet};
use crate::config::PipelineConfig;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub seed: u64,
    /// SHA-256 of the config serialized as TOML.
    pub config_sha256: String,
    pub backends: BackendIdentities,
    pub inputs: Vec<String>,
    pub output: String,
    pub vertex_count: usize,
    pub face_count: usize,
    pub step_count: usize,
    pub intermediate_submeshes: usize,
}

pub fn config_hash(config: &PipelineConfig) -> Result<String> {
    let digest = Sha256::digest(config.to_toml_string()?.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

impl RunManifest {
    pub fn new(config: &PipelineConfig, backends: &BackendSet, output: &crate::blend::PipelineOutput) -> Result<Self> {
        Ok(RunManifest {
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config_sha256: config_hash(config)?,
            backends: backends.identities(),
            inputs: config.input_paths.iter().map(|p| p.display().to_string()).collect(),
            output: config.output_path.display().to_string(),
            vertex_count: output.mesh.vertex_count(),
            face_count: output.mesh.face_count(),
            step_count: output.plan.steps.len(),
            intermediate_submeshes: output.intermediate_count,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_tracks_config() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { seed: 1, ..Default::default() };
        assert_eq!(config_hash(&a).unwrap(), config_hash(&a.clone()).unwrap());
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }
}
