//! Pipeline configuration, loadable from TOML.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backends::remote::{RemoteConfig, RemoteInpainter};
use crate::backends::BackendSet;
use crate::error::{Error, Result};
use crate::geometry::Label;
use crate::layout::DEFAULT_DIAMETER_M;
use crate::palette::FLOOR_LIKE;

/// ControlNet weights of the layout, depth and semantic channels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConditioningWeights {
    pub layout: f64,
    pub depth: f64,
    pub semantic: f64,
}

impl Default for ConditioningWeights {
    fn default() -> Self {
        ConditioningWeights {
            layout: 0.6,
            depth: 0.3,
            semantic: 0.0,
        }
    }
}

impl ConditioningWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("layout", self.layout), ("depth", self.depth), ("semantic", self.semantic)] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("{name} weight {w} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Parses `L,D,S`, e.g. `0.6,0.3,0`.
impl FromStr for ConditioningWeights {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let [l, d, sem] = parts.as_slice() else {
            return Err(Error::invalid(format!("weights {s:?} should be three comma-separated numbers")));
        };
        let num = |t: &str| {
            t.parse::<f64>()
                .map_err(|_| Error::invalid(format!("weight {t:?} is not a number")))
        };
        let w = ConditioningWeights {
            layout: num(l)?,
            depth: num(d)?,
            semantic: num(sem)?,
        };
        w.validate()?;
        Ok(w)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendMode {
    #[default]
    Synthetic,
    /// Synthetic depth, segmentation, captions and LLM; inpainting over HTTP.
    Remote,
}

impl FromStr for BackendMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "synthetic" => Ok(BackendMode::Synthetic),
            "remote" => Ok(BackendMode::Remote),
            _ => Err(Error::invalid(format!("unknown backend {s:?}; expected synthetic or remote"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Obj,
    #[default]
    Ply,
    Gltf,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        path.extension()?.to_str()?.to_ascii_lowercase().parse().ok()
    }

    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Obj => "obj",
            ExportFormat::Ply => "ply",
            ExportFormat::Gltf => "gltf",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obj" => Ok(ExportFormat::Obj),
            "ply" => Ok(ExportFormat::Ply),
            "gltf" => Ok(ExportFormat::Gltf),
            _ => Err(Error::invalid(format!("unknown format {s:?}; expected obj, ply or gltf"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input_paths: Vec<PathBuf>,
    pub diameter_m: f64,
    pub seed: u64,
    pub weights: ConditioningWeights,
    pub backend: BackendMode,
    /// Inpainting server URL, required in remote mode.
    pub endpoint: Option<String>,
    /// Request details for the remote inpainter. Its `endpoint` is filled
    /// from the top-level key.
    pub remote: RemoteConfig,
    pub theme: String,
    pub output_path: PathBuf,
    pub export_format: ExportFormat,
    /// Per-iteration images are written here when set.
    pub debug_dir: Option<PathBuf>,
    /// Label ids whose vertices count as floor when searching for it.
    pub floor_labels: Vec<Label>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input_paths: Vec::new(),
            diameter_m: DEFAULT_DIAMETER_M,
            seed: 0,
            weights: ConditioningWeights::default(),
            backend: BackendMode::Synthetic,
            endpoint: None,
            remote: RemoteConfig::default(),
            theme: String::new(),
            output_path: PathBuf::from("scene.ply"),
            export_format: ExportFormat::Ply,
            debug_dir: None,
            floor_labels: FLOOR_LIKE.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    /// Read a TOML file. Relative input and output paths are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        cfg.input_paths = cfg.input_paths.iter().map(resolve).collect();
        cfg.output_path = resolve(&cfg.output_path);
        cfg.debug_dir = cfg.debug_dir.as_ref().map(resolve);
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::invalid(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_paths.is_empty() {
            return Err(Error::invalid("at least one input image is required"));
        }
        if !(self.diameter_m > 0.0 && self.diameter_m.is_finite()) {
            return Err(Error::invalid(format!("diameter {} must be positive", self.diameter_m)));
        }
        self.weights.validate()?;
        if self.floor_labels.is_empty() {
            return Err(Error::invalid("floor_labels must name at least one label"));
        }
        if self.backend == BackendMode::Remote && self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) {
            return Err(Error::invalid("remote backend needs an endpoint"));
        }
        Ok(())
    }

    pub fn backends(&self) -> Result<BackendSet> {
        let mut set = BackendSet::synthetic();
        if self.backend == BackendMode::Remote {
            let remote = RemoteConfig {
                endpoint: self.endpoint.clone().unwrap_or_default(),
                ..self.remote.clone()
            };
            set.inpaint = Box::new(RemoteInpainter::new(remote)?);
        }
        Ok(set)
    }
}
