//! Captions, region prompts and floor descriptions.
//!
//! Region prompts come from an LLM that is told it is an interior architect
//! and answers through a `set_description` function call. The system prompt
//! ships verbatim in `data/system_prompt.txt`.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::backends::{CaptionBackend, FunctionSpec, LlmBackend, LlmReply, LlmRequest};
use crate::error::{Error, Result};
use crate::geometry::{circular_distance_deg, normalize_deg, CameraView};
use crate::grid::ColorImage;

/// System prompt for region descriptions, sent unmodified.
pub const SYSTEM_PROMPT: &str = include_str!("../data/system_prompt.txt");

pub const FUNCTION_NAME: &str = "set_description";
pub const MAX_WORDS: usize = 20;
/// Retries after the first reply.
pub const PROMPT_RETRIES: usize = 3;

const FLOOR_SYSTEM_PROMPT: &str = "You are a helpful assistant that acts like a highly creative interior architect. \
Given the description of a room, describe only the floor you expect in it. \
Answer with one short line that starts with '... space with' where '...' is the type of the room, \
and name the floor material. Do not add any explanation.";

/// Floor-material words a floor description must mention.
pub const FLOOR_MATERIALS: [&str; 16] = [
    "floor", "flooring", "wood", "wooden", "hardwood", "parquet", "carpet", "carpeted", "tile", "tiles",
    "tiled", "marble", "concrete", "laminate", "vinyl", "stone",
];

fn prefix_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\S.*\bspace with\b").expect("regex"))
}

/// Why a description is not an acceptable region prompt, if it is not.
pub fn description_problem(text: &str) -> Option<String> {
    let words = text.split_whitespace().count();
    if words == 0 {
        return Some("empty description".into());
    }
    if words > MAX_WORDS {
        return Some(format!("{words} words (at most {MAX_WORDS})"));
    }
    if text.contains('\n') {
        return Some("description spans several lines".into());
    }
    if !prefix_regex().is_match(text) {
        return Some("does not start with '<room type> space with'".into());
    }
    None
}

/// A validated description for the view at one yaw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionPrompt {
    pub yaw_deg: f64,
    pub description: String,
}

impl RegionPrompt {
    pub fn new(yaw_deg: f64, description: impl Into<String>) -> Result<Self> {
        let description = description.into();
        if let Some(problem) = description_problem(&description) {
            return Err(Error::PromptValidation {
                yaws: vec![yaw_deg],
                reason: problem,
            });
        }
        Ok(RegionPrompt {
            yaw_deg: normalize_deg(yaw_deg),
            description,
        })
    }
}

/// Caption an image as one nonempty line.
pub fn caption_image(img: &ColorImage, vlm: &dyn CaptionBackend) -> Result<String> {
    let text = vlm.caption(img)?;
    let line = text.split_whitespace().collect::<Vec<_>>().join(" ");
    if line.is_empty() {
        return Err(Error::backend("caption", "empty caption"));
    }
    Ok(line)
}

/// Yaw as it appears in prompts: integral yaws without decimals.
pub fn format_yaw(yaw: f64) -> String {
    let y = normalize_deg(yaw);
    if (y - y.round()).abs() < 1e-9 {
        format!("{}", y.round() as i64)
    } else {
        format!("{y:.1}")
    }
}

/// Room dimensions `(W, H, L)` in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoomSize {
    pub width: f64,
    pub height: f64,
    pub length: f64,
}

impl RoomSize {
    /// `WxHxL` with one decimal.
    pub fn space_size_str(&self) -> String {
        format!("{:.1}x{:.1}x{:.1}", self.width, self.height, self.length)
    }
}

/// User message for one region-prompt request.
pub fn region_user_prompt(known: &[(f64, String)], unknown_yaws: &[f64], size: &RoomSize, theme: &str) -> String {
    // Written by hand so keys keep the caller's order.
    let known_json = format!(
        "{{{}}}",
        known
            .iter()
            .map(|(y, d)| format!("{}: {}", serde_json::to_string(&format_yaw(*y)).unwrap(), serde_json::to_string(d).unwrap()))
            .collect::<Vec<_>>()
            .join(", ")
    );
    let unknown_json = format!(
        "[{}]",
        unknown_yaws.iter().map(|y| format_yaw(*y)).collect::<Vec<_>>().join(", ")
    );
    format!(
        "The size of the room is {} meters and the camera is positioned in the middle. \
These are the Y rotation values and descriptions of the images that were already taken: {known_json}. \
What do you expect for the following Y rotation values: {unknown_json}? \
Consider the theme of \"{theme}\" when coming up with the descriptions",
        size.space_size_str()
    )
}

/// The `set_description` function offered to the LLM.
pub fn set_description_spec() -> FunctionSpec {
    FunctionSpec {
        name: FUNCTION_NAME.into(),
        description: "Set the descriptions of the images at the given Y rotation values.".into(),
        parameters: serde_json::json!({
            "type": "object",
            "properties": {
                "descriptions": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "properties": {
                            "y_rotation": {"type": "number"},
                            "description": {"type": "string"}
                        },
                        "required": ["y_rotation", "description"]
                    }
                }
            },
            "required": ["descriptions"]
        }),
    }
}

/// `(yaw, description)` pairs from a `set_description` call. Accepts the
/// declared array form and a plain `{"yaw": "description"}` object.
fn parse_descriptions(reply: &LlmReply) -> std::result::Result<Vec<(f64, String)>, String> {
    let call = reply
        .function_call
        .as_ref()
        .ok_or("reply did not call set_description")?;
    if call.name != FUNCTION_NAME {
        return Err(format!("reply called {} instead of {FUNCTION_NAME}", call.name));
    }
    let args = &call.arguments;
    if let Some(items) = args.get("descriptions").and_then(|d| d.as_array()) {
        items
            .iter()
            .map(|item| {
                let yaw = match item.get("y_rotation") {
                    Some(serde_json::Value::Number(n)) => n.as_f64(),
                    Some(serde_json::Value::String(s)) => s.trim().parse().ok(),
                    _ => None,
                }
                .ok_or("description without a numeric y_rotation")?;
                let text = item
                    .get("description")
                    .and_then(|d| d.as_str())
                    .ok_or("description entry without text")?;
                Ok((yaw, text.trim().to_string()))
            })
            .collect()
    } else if let Some(map) = args.as_object() {
        map.iter()
            .map(|(k, v)| {
                let yaw: f64 = k.trim().parse().map_err(|_| format!("key {k:?} is not a yaw"))?;
                let text = v.as_str().ok_or("description is not a string")?;
                Ok((yaw, text.trim().to_string()))
            })
            .collect()
    } else {
        Err("set_description arguments are not an object".into())
    }
}

/// Ask the LLM for one description per unknown yaw.
///
/// Replies are validated; yaws whose description is missing or invalid are
/// asked for again, with the rejection reasons appended to the message, up to
/// three times.
pub fn infer_region_prompts(
    known: &[(f64, String)],
    unknown_yaws: &[f64],
    room_size: &RoomSize,
    theme: &str,
    llm: &dyn LlmBackend,
) -> Result<Vec<RegionPrompt>> {
    if unknown_yaws.is_empty() {
        return Err(Error::invalid("no yaws to describe"));
    }
    let wanted: Vec<f64> = unknown_yaws.iter().map(|y| normalize_deg(*y)).collect();
    let mut accepted: BTreeMap<usize, RegionPrompt> = BTreeMap::new();
    let mut feedback = String::new();
    for attempt in 0..=PROMPT_RETRIES {
        let pending: Vec<usize> = (0..wanted.len()).filter(|i| !accepted.contains_key(i)).collect();
        let pending_yaws: Vec<f64> = pending.iter().map(|&i| wanted[i]).collect();
        let mut context: Vec<(f64, String)> = known.to_vec();
        context.extend(accepted.values().map(|p| (p.yaw_deg, p.description.clone())));
        let mut user = region_user_prompt(&context, &pending_yaws, room_size, theme);
        if !feedback.is_empty() {
            user.push_str("\n\n");
            user.push_str(&feedback);
        }
        let request = LlmRequest {
            system: SYSTEM_PROMPT.trim_end().to_string(),
            user,
            function: Some(set_description_spec()),
        };
        let reply = llm.complete(&request)?;
        let mut problems: Vec<String> = Vec::new();
        match parse_descriptions(&reply) {
            Err(e) => problems.push(e),
            Ok(items) => {
                for &i in &pending {
                    let hit = items.iter().find(|(y, _)| circular_distance_deg(*y, wanted[i]) < 1e-6);
                    match hit {
                        None => problems.push(format!("no description for {}", format_yaw(wanted[i]))),
                        Some((_, text)) => match description_problem(text) {
                            Some(p) => problems.push(format!("description for {} rejected: {p}", format_yaw(wanted[i]))),
                            None => {
                                accepted.insert(i, RegionPrompt { yaw_deg: wanted[i], description: text.clone() });
                            }
                        },
                    }
                }
            }
        }
        if accepted.len() == wanted.len() {
            return Ok((0..wanted.len()).map(|i| accepted.remove(&i).unwrap()).collect());
        }
        log::warn!("region prompt attempt {} rejected: {}", attempt + 1, problems.join("; "));
        feedback = format!(
            "Your previous answer was rejected: {}. Call set_description again with one description \
per requested Y rotation value, each starting with '... space with' and at most {MAX_WORDS} words.",
            problems.join("; ")
        );
    }
    let missing: BTreeSet<usize> = (0..wanted.len()).filter(|i| !accepted.contains_key(i)).collect();
    Err(Error::PromptValidation {
        yaws: missing.iter().map(|&i| wanted[i]).collect(),
        reason: format!("still invalid after {PROMPT_RETRIES} retries: {feedback}"),
    })
}

/// Description whose yaw is circularly closest to the camera's heading; ties
/// go to the smaller yaw.
pub fn select_prompt_for_view<'a>(cam: &CameraView, prompts: &'a [RegionPrompt]) -> Option<&'a str> {
    select_prompt_for_yaw(cam.yaw_deg(), prompts)
}

pub fn select_prompt_for_yaw(yaw: f64, prompts: &[RegionPrompt]) -> Option<&str> {
    prompts
        .iter()
        .min_by(|a, b| {
            let da = circular_distance_deg(a.yaw_deg, yaw);
            let db = circular_distance_deg(b.yaw_deg, yaw);
            if (da - db).abs() <= 1e-9 {
                normalize_deg(a.yaw_deg).total_cmp(&normalize_deg(b.yaw_deg))
            } else {
                da.total_cmp(&db)
            }
        })
        .map(|p| p.description.as_str())
}

/// Ask the LLM for a floor description matching a caption.
pub fn infer_floor_prompt(caption: &str, llm: &dyn LlmBackend) -> Result<String> {
    infer_floor_prompt_with(caption, llm, &FLOOR_MATERIALS)
}

/// [`infer_floor_prompt`] with a custom floor-material allowlist.
pub fn infer_floor_prompt_with(caption: &str, llm: &dyn LlmBackend, materials: &[&str]) -> Result<String> {
    if caption.trim().is_empty() {
        return Err(Error::invalid("floor prompt needs a caption"));
    }
    let mut last = String::new();
    for _ in 0..=PROMPT_RETRIES {
        let mut user = format!("Describe the floor of the space described as \"{}\".", caption.trim());
        if !last.is_empty() {
            user.push_str(&format!(" Your previous answer {last:?} did not name a floor material."));
        }
        let reply = llm.complete(&LlmRequest {
            system: FLOOR_SYSTEM_PROMPT.into(),
            user,
            function: None,
        })?;
        let line = reply
            .content
            .as_deref()
            .and_then(|c| c.lines().map(str::trim).find(|l| !l.is_empty()))
            .unwrap_or("")
            .to_string();
        let mentions = line
            .to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .any(|w| materials.contains(&w));
        if mentions {
            return Ok(line);
        }
        last = line;
    }
    Err(Error::PromptValidation {
        yaws: vec![],
        reason: format!("floor description {last:?} names no floor material"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::synthetic::SyntheticLlm;

    fn p(yaw: f64, d: &str) -> RegionPrompt {
        RegionPrompt::new(yaw, d).unwrap()
    }

    #[test]
    fn validation_rules() {
        assert!(description_problem("office space with desk").is_none());
        assert!(description_problem("space with desk").is_some());
        assert!(description_problem("A cozy office with desk").is_some());
        let long = format!("office space with {}", vec!["chair"; 18].join(" "));
        assert!(description_problem(&long).is_some());
    }

    #[test]
    fn selection_rules() {
        let two = [p(45.0, "a space with x"), p(315.0, "b space with y")];
        assert_eq!(select_prompt_for_yaw(0.0, &two), Some("a space with x"));
        let opposite = [p(90.0, "a space with x"), p(270.0, "b space with y")];
        assert_eq!(select_prompt_for_yaw(100.0, &opposite), Some("a space with x"));
        let wrap = [p(10.0, "a space with x"), p(180.0, "b space with y")];
        assert_eq!(select_prompt_for_yaw(350.0, &wrap), Some("a space with x"));
        assert_eq!(select_prompt_for_yaw(350.0 + 360.0, &wrap), Some("a space with x"));
    }

    #[test]
    fn user_prompt_layout() {
        let size = RoomSize { width: 6.5, height: 2.5, length: 7.0 };
        let text = region_user_prompt(&[(0.0, "office space with desk".into())], &[90.0, 270.0], &size, "");
        assert_eq!(
            text,
            "The size of the room is 6.5x2.5x7.0 meters and the camera is positioned in the middle. \
These are the Y rotation values and descriptions of the images that were already taken: \
{\"0\": \"office space with desk\"}. What do you expect for the following Y rotation values: [90, 270]? \
Consider the theme of \"\" when coming up with the descriptions"
        );
    }

    #[test]
    fn synthetic_llm_round_trip() {
        let size = RoomSize { width: 6.0, height: 2.5, length: 6.0 };
        let got = infer_region_prompts(
            &[(0.0, "office space with a purple cabinet".into())],
            &[90.0, 270.0],
            &size,
            "",
            &SyntheticLlm,
        )
        .unwrap();
        assert_eq!(got.len(), 2);
        assert!(got.iter().all(|r| r.description.starts_with("office space with")));
        let floor = infer_floor_prompt("office space with desk", &SyntheticLlm).unwrap();
        assert_eq!(floor, "office space with wooden floor");
        assert!(infer_floor_prompt(" ", &SyntheticLlm).is_err());
    }

    #[test]
    fn system_prompt_is_verbatim() {
        assert!(SYSTEM_PROMPT.starts_with("You are a helpful assistant that acts like highly creative interior architect"));
        assert!(SYSTEM_PROMPT.contains("Only return the descriptions with the set_description function"));
        assert!(SYSTEM_PROMPT.trim_end().ends_with("with 20 words or less for each description."));
    }
}
