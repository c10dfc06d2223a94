//! Model backend contracts and their implementations.
//!
//! The pipeline talks to five kinds of model through narrow traits: depth
//! estimation (with completion from known depth), inpainting, semantic
//! segmentation, image captioning and a function-calling LLM. [`synthetic`]
//! provides deterministic stand-ins that make every stage testable offline;
//! [`remote`] talks to an inpainting web server over HTTP.

pub mod remote;
pub mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::grid::{ColorImage, DepthImage, Grid, LabelImage, MaskImage};

/// Known depth that a completion request must respect.
#[derive(Clone, Copy, Debug)]
pub struct KnownDepth<'a> {
    pub depth: &'a DepthImage,
    /// `true` where `depth` holds a trusted value.
    pub mask: &'a MaskImage,
}

pub trait DepthBackend: Send + Sync {
    fn identity(&self) -> String;

    /// Metric depth for every pixel of `image`. When `known` is given, the
    /// masked pixels must come back unchanged and the rest must be consistent
    /// with them.
    fn estimate(&self, image: &ColorImage, known: Option<KnownDepth<'_>>) -> Result<DepthImage>;
}

pub trait SegmentationBackend: Send + Sync {
    fn identity(&self) -> String;
    /// Per-pixel ADE20K class ids.
    fn segment(&self, image: &ColorImage) -> Result<LabelImage>;
}

pub trait CaptionBackend: Send + Sync {
    fn identity(&self) -> String;
    fn caption(&self, image: &ColorImage) -> Result<String>;
}

pub trait LlmBackend: Send + Sync {
    fn identity(&self) -> String;
    fn complete(&self, request: &LlmRequest) -> Result<LlmReply>;
}

pub trait InpaintBackend: Send + Sync {
    fn identity(&self) -> String;
    /// Regenerate the masked pixels of `request.image`.
    fn inpaint(&self, request: &InpaintRequest) -> Result<ColorImage>;
}

/// The five model handles one pipeline run uses.
pub struct BackendSet {
    pub depth: Box<dyn DepthBackend>,
    pub inpaint: Box<dyn InpaintBackend>,
    pub seg: Box<dyn SegmentationBackend>,
    pub vlm: Box<dyn CaptionBackend>,
    pub llm: Box<dyn LlmBackend>,
}

impl BackendSet {
    /// Deterministic offline backends.
    pub fn synthetic() -> Self {
        BackendSet {
            depth: Box::new(synthetic::SyntheticDepth::default()),
            inpaint: Box::new(synthetic::SyntheticInpainter),
            seg: Box::new(synthetic::SyntheticSegmenter::default()),
            vlm: Box::new(synthetic::SyntheticCaptioner::default()),
            llm: Box::new(synthetic::SyntheticLlm),
        }
    }

    /// Identity strings, recorded in run manifests.
    pub fn identities(&self) -> BackendIdentities {
        BackendIdentities {
            depth: self.depth.identity(),
            inpaint: self.inpaint.identity(),
            segmentation: self.seg.identity(),
            caption: self.vlm.identity(),
            llm: self.llm.identity(),
        }
    }

    /// Depth with the contract checked: right shape, positive and finite.
    pub fn checked_depth(&self, image: &ColorImage, known: Option<KnownDepth<'_>>) -> Result<DepthImage> {
        let depth = self.depth.estimate(image, known)?;
        if !depth.same_shape(image) {
            return Err(Error::backend("depth", "output size differs from input"));
        }
        if let Some(bad) = depth.pixels().iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::backend(
                "depth",
                format!("non-positive or non-finite depth {bad}"),
            ));
        }
        Ok(depth)
    }

    pub fn checked_segment(&self, image: &ColorImage) -> Result<LabelImage> {
        let labels = self.seg.segment(image)?;
        if !labels.same_shape(image) {
            return Err(Error::backend("segmentation", "output size differs from input"));
        }
        Ok(labels)
    }

    /// Inpaint, then restore every unmasked pixel from the request.
    pub fn checked_inpaint(&self, request: &InpaintRequest) -> Result<ColorImage> {
        let out = self.inpaint.inpaint(request)?;
        restore_unmasked(request, out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendIdentities {
    pub depth: String,
    pub inpaint: String,
    pub segmentation: String,
    pub caption: String,
    pub llm: String,
}

/// Which prior image a conditioning channel carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningKind {
    Layout,
    Depth,
    Semantic,
}

/// One ControlNet-style conditioning channel.
#[derive(Clone, Debug, PartialEq)]
pub struct Conditioning {
    pub kind: ConditioningKind,
    /// Layout: white lines on black. Depth: grayscale, near = bright.
    /// Semantic: palette colors.
    pub image: ColorImage,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InpaintRequest {
    pub image: ColorImage,
    /// `true` where pixels should be regenerated.
    pub mask: MaskImage,
    pub prompt: String,
    pub negative_prompt: String,
    pub conditioning: Vec<Conditioning>,
    pub seed: u64,
    /// Camera the masked view was rendered from. Informational; remote
    /// servers never see it.
    pub view: Option<CameraView>,
}

impl InpaintRequest {
    pub fn new(image: ColorImage, mask: MaskImage, prompt: impl Into<String>, seed: u64) -> Self {
        InpaintRequest {
            image,
            mask,
            prompt: prompt.into(),
            negative_prompt: String::new(),
            conditioning: Vec::new(),
            seed,
            view: None,
        }
    }

    pub fn channel(&self, kind: ConditioningKind) -> Option<&Conditioning> {
        self.conditioning.iter().find(|c| c.kind == kind)
    }
}

/// Copy unmasked pixels from the request into `out`, checking its size.
pub fn restore_unmasked(request: &InpaintRequest, mut out: ColorImage) -> Result<ColorImage> {
    if !out.same_shape(&request.image) {
        return Err(Error::backend(
            "inpaint",
            format!(
                "returned {}×{} for a {}×{} request",
                out.width(),
                out.height(),
                request.image.width(),
                request.image.height()
            ),
        ));
    }
    let mask = request.mask.pixels();
    for (i, px) in out.pixels_mut().iter_mut().enumerate() {
        if !mask[i] {
            *px = request.image.pixels()[i];
        }
    }
    Ok(out)
}

/// A chat request with an optional single callable function.
#[derive(Clone, Debug, PartialEq)]
pub struct LlmRequest {
    pub system: String,
    pub user: String,
    pub function: Option<FunctionSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionSpec {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LlmReply {
    pub content: Option<String>,
    pub function_call: Option<FunctionCall>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionCall {
    pub name: String,
    /// Arguments as JSON. Providers send them either as an object or as a
    /// JSON-encoded string; both are accepted on decode.
    pub arguments: serde_json::Value,
}

impl LlmRequest {
    /// Chat-completions style JSON body.
    pub fn to_wire_json(&self) -> serde_json::Value {
        let mut body = serde_json::json!({
            "messages": [
                {"role": "system", "content": self.system},
                {"role": "user", "content": self.user},
            ],
        });
        if let Some(f) = &self.function {
            body["functions"] = serde_json::json!([f]);
            body["function_call"] = serde_json::json!({"name": f.name});
        }
        body
    }
}

impl LlmReply {
    /// Parse one chat-completions style message object.
    pub fn from_wire_json(message: &serde_json::Value) -> Result<LlmReply> {
        let content = message
            .get("content")
            .and_then(|c| c.as_str())
            .map(str::to_string);
        let function_call = match message.get("function_call") {
            Some(fc) if !fc.is_null() => {
                let name = fc
                    .get("name")
                    .and_then(|n| n.as_str())
                    .ok_or_else(|| Error::backend("llm", "function_call without name"))?
                    .to_string();
                let arguments = match fc.get("arguments") {
                    Some(serde_json::Value::String(s)) => serde_json::from_str(s)?,
                    Some(v) => v.clone(),
                    None => serde_json::Value::Null,
                };
                Some(FunctionCall { name, arguments })
            }
            _ => None,
        };
        Ok(LlmReply {
            content,
            function_call,
        })
    }

    pub fn to_wire_json(&self) -> serde_json::Value {
        serde_json::json!({
            "role": "assistant",
            "content": self.content,
            "function_call": self.function_call,
        })
    }
}

/// Pixel mask of `labels` equal to any of `classes`.
pub fn label_mask(labels: &LabelImage, classes: &[u16]) -> MaskImage {
    labels.map(|l| classes.contains(l))
}

/// All-`false` mask the size of `image`.
pub fn empty_mask<T>(image: &Grid<T>) -> MaskImage {
    Grid::filled(image.width(), image.height(), false)
}
