//! HTTP inpainting client for an A1111-style web UI server.
//!
//! All knowledge of the server's field names lives in [`a1111_payload`] and
//! [`decode_reply`]. They follow the `/sdapi/v1/img2img` route of the
//! AUTOMATIC1111 web UI (1.x) with the ControlNet extension's
//! `alwayson_scripts.controlnet.args` array.

use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{restore_unmasked, ConditioningKind, InpaintBackend, InpaintRequest};
use crate::error::{Error, Result};
use crate::grid::ColorImage;

/// Connection and request settings for [`RemoteInpainter`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    /// Server base URL, e.g. `http://127.0.0.1:7860`.
    pub endpoint: String,
    pub route: String,
    pub sampler: String,
    pub steps: u32,
    pub layout_model: String,
    pub depth_model: String,
    pub semantic_model: String,
    /// Retries after the first failed attempt.
    pub retries: u32,
    /// Delay before the first retry; doubled for each further retry.
    pub backoff_ms: u64,
    pub timeout_s: u64,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            endpoint: String::new(),
            route: "/sdapi/v1/img2img".into(),
            sampler: "DPM++ 2M Karras".into(),
            steps: 30,
            layout_model: "control_layout".into(),
            depth_model: "control_v11f1p_sd15_depth".into(),
            semantic_model: "control_v11p_sd15_seg".into(),
            retries: 3,
            backoff_ms: 2000,
            timeout_s: 600,
        }
    }
}

impl RemoteConfig {
    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.endpoint.trim_end_matches('/'),
            self.route.trim_start_matches('/')
        )
    }

    fn model_for(&self, kind: ConditioningKind) -> &str {
        match kind {
            ConditioningKind::Layout => &self.layout_model,
            ConditioningKind::Depth => &self.depth_model,
            ConditioningKind::Semantic => &self.semantic_model,
        }
    }
}

fn b64_png(image: &ColorImage) -> Result<String> {
    Ok(B64.encode(image.encode_png()?))
}

/// JSON body for one inpainting request. Zero-weight conditioning channels
/// are left out so the server does not load their models.
pub fn a1111_payload(req: &InpaintRequest, cfg: &RemoteConfig) -> Result<serde_json::Value> {
    let controlnet: Vec<serde_json::Value> = req
        .conditioning
        .iter()
        .filter(|c| c.weight > 0.0)
        .map(|c| {
            Ok(serde_json::json!({
                "input_image": b64_png(&c.image)?,
                "model": cfg.model_for(c.kind),
                "weight": c.weight,
            }))
        })
        .collect::<Result<_>>()?;
    Ok(serde_json::json!({
        "init_images": [b64_png(&req.image)?],
        "mask": b64_png(&req.mask.to_color())?,
        "prompt": req.prompt,
        "negative_prompt": req.negative_prompt,
        "seed": req.seed,
        "steps": cfg.steps,
        "sampler_name": cfg.sampler,
        "width": req.image.width(),
        "height": req.image.height(),
        "denoising_strength": 1.0,
        "inpainting_fill": 1,
        "inpaint_full_res": false,
        "alwayson_scripts": { "controlnet": { "args": controlnet } },
    }))
}

/// First image of a server reply.
pub fn decode_reply(body: &serde_json::Value) -> Result<ColorImage> {
    let encoded = body
        .get("images")
        .and_then(|v| v.get(0))
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::backend("inpaint", "reply has no images[0]"))?;
    // Some servers prefix a data URL header.
    let encoded = encoded.rsplit(',').next().unwrap_or(encoded);
    let bytes = B64
        .decode(encoded)
        .map_err(|e| Error::backend("inpaint", format!("bad base64 image: {e}")))?;
    ColorImage::decode_png(&bytes)
}

/// Inpainting over HTTP with retries and client-side restoration of unmasked
/// pixels.
pub struct RemoteInpainter {
    cfg: RemoteConfig,
    agent: ureq::Agent,
}

impl RemoteInpainter {
    pub fn new(cfg: RemoteConfig) -> Result<Self> {
        if cfg.endpoint.is_empty() {
            return Err(Error::invalid("remote inpainting needs an endpoint"));
        }
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .build()
            .into();
        Ok(RemoteInpainter { cfg, agent })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    fn attempt(&self, url: &str, body: &str) -> std::result::Result<serde_json::Value, String> {
        let mut response = self
            .agent
            .post(url)
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let text = response
            .body_mut()
            .with_config()
            .limit(256 * 1024 * 1024)
            .read_to_string()
            .map_err(|e| e.to_string())?;
        serde_json::from_str(&text).map_err(|e| format!("reply is not JSON: {e}"))
    }
}

impl InpaintBackend for RemoteInpainter {
    fn identity(&self) -> String {
        format!(
            "remote-a1111/{}/{}/{}steps",
            self.cfg.url(),
            self.cfg.sampler,
            self.cfg.steps
        )
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<ColorImage> {
        let url = self.cfg.url();
        let body = serde_json::to_string(&a1111_payload(req, &self.cfg)?)?;
        let attempts = self.cfg.retries + 1;
        let mut delay = Duration::from_millis(self.cfg.backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&url, &body).and_then(|reply| {
                decode_reply(&reply).map_err(|e| e.to_string())
            }) {
                Ok(image) => return restore_unmasked(req, image),
                Err(message) => {
                    log::warn!("inpaint attempt {attempt}/{attempts} to {url} failed: {message}");
                    last = message;
                }
            }
            if attempt < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(Error::Http {
            url,
            attempts,
            message: last,
        })
    }
}
