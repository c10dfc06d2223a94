//! Input normalization and person removal.

use std::sync::OnceLock;

use image::imageops::{self, FilterType};
use regex::Regex;

use crate::backends::{CaptionBackend, InpaintBackend, InpaintRequest, SegmentationBackend};
use crate::backends::{label_mask, restore_unmasked};
use crate::error::{Error, Result};
use crate::geometry::CameraView;
use crate::grid::ColorImage;
use crate::palette::PERSON;

/// Side length of every prepared image.
pub const PREPARED_SIZE: usize = 512;
/// Smallest accepted input side.
pub const MIN_INPUT_SIZE: usize = 64;
/// Person masks grow by this many pixels before inpainting.
pub const PERSON_DILATION_PX: usize = 8;

/// Camera every prepared image is lifted with: at the origin, looking down
/// −Z, 55° vertical field of view.
pub fn input_camera() -> CameraView {
    CameraView::looking(nalgebra::Point3::origin(), 180.0, 0.0, PREPARED_SIZE, PREPARED_SIZE)
}

/// A square, fixed-size input photograph.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedImage {
    color: ColorImage,
    pub source_id: String,
    pub caption: Option<String>,
}

impl PreparedImage {
    /// Wrap an image that is already 512×512.
    pub fn new(color: ColorImage, source_id: impl Into<String>) -> Result<Self> {
        if color.width() != PREPARED_SIZE || color.height() != PREPARED_SIZE {
            return Err(Error::invalid(format!(
                "prepared images are {PREPARED_SIZE}×{PREPARED_SIZE}, got {}×{}",
                color.width(),
                color.height()
            )));
        }
        Ok(PreparedImage {
            color,
            source_id: source_id.into(),
            caption: None,
        })
    }

    pub fn color(&self) -> &ColorImage {
        &self.color
    }
}

/// Pixel offsets of the central square crop of a `width × height` image.
pub fn center_crop_offsets(width: usize, height: usize) -> (usize, usize, usize) {
    let side = width.min(height);
    ((width - side) / 2, (height - side) / 2, side)
}

/// Center-crop to a square and resample to 512×512.
pub fn preprocess_input(raw: &ColorImage, source_id: impl Into<String>) -> Result<PreparedImage> {
    if raw.width() < MIN_INPUT_SIZE || raw.height() < MIN_INPUT_SIZE {
        return Err(Error::invalid(format!(
            "input is {}×{}; each side needs at least {MIN_INPUT_SIZE} px",
            raw.width(),
            raw.height()
        )));
    }
    let (x0, y0, side) = center_crop_offsets(raw.width(), raw.height());
    let cropped = if side == raw.width() && side == raw.height() {
        raw.clone()
    } else {
        ColorImage::from_fn(side, side, |x, y| *raw.get(x + x0, y + y0))
    };
    let color = if side == PREPARED_SIZE {
        cropped
    } else {
        let resized = imageops::resize(
            &cropped.to_rgb32f(),
            PREPARED_SIZE as u32,
            PREPARED_SIZE as u32,
            FilterType::Triangle,
        );
        ColorImage::from_rgb32f(&resized)?
    };
    PreparedImage::new(color, source_id)
}

/// Remove words that refer to people from a caption.
pub fn strip_person_terms(caption: &str) -> String {
    static PEOPLE: OnceLock<Regex> = OnceLock::new();
    static SPACES: OnceLock<Regex> = OnceLock::new();
    let people = PEOPLE.get_or_init(|| {
        Regex::new(
            r"(?i)(\s*,)?\s*\b(and|with)?\s*\b(a|an|the|one|two|three|some|several)?\s*\b(person|persons|people|man|men|woman|women|child|children|kid|kids|boy|boys|girl|girls)\b",
        )
        .expect("regex")
    });
    let spaces = SPACES.get_or_init(|| Regex::new(r"\s+").expect("regex"));
    let stripped = people.replace_all(caption, "");
    spaces.replace_all(stripped.trim(), " ").into_owned()
}

/// Replace people with inpainted background.
pub fn remove_people(
    img: &PreparedImage,
    seg: &dyn SegmentationBackend,
    inpaint: &dyn InpaintBackend,
    vlm: &dyn CaptionBackend,
    seed: u64,
) -> Result<PreparedImage> {
    let labels = seg.segment(img.color())?;
    if !labels.same_shape(img.color()) {
        return Err(Error::backend("segmentation", "output size differs from input"));
    }
    let person = label_mask(&labels, &[PERSON]);
    if person.count() == 0 {
        return Ok(img.clone());
    }
    let mask = person.dilate(PERSON_DILATION_PX);
    if mask.count() == mask.len() {
        return Err(Error::Degenerate(
            "person mask covers the whole image; nothing left to preserve".into(),
        ));
    }
    let caption = vlm.caption(img.color())?;
    let prompt = strip_person_terms(&caption);
    log::debug!("removing {} person pixels from {} with prompt {prompt:?}", mask.count(), img.source_id);
    let mut request = InpaintRequest::new(img.color().clone(), mask, prompt, seed);
    request.negative_prompt = "person, people, human".into();
    let out = restore_unmasked(&request, inpaint.inpaint(&request)?)?;
    Ok(PreparedImage {
        color: out,
        source_id: img.source_id.clone(),
        caption: img.caption.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_offsets() {
        assert_eq!(center_crop_offsets(1920, 1080), (420, 0, 1080));
        assert_eq!(center_crop_offsets(600, 800), (0, 100, 600));
    }

    #[test]
    fn strips_people() {
        assert_eq!(
            strip_person_terms("living room space with a blue sofa and a person"),
            "living room space with a blue sofa"
        );
        assert_eq!(
            strip_person_terms("Office space with two women, desk"),
            "Office space, desk"
        );
        assert_eq!(strip_person_terms("kitchen space with oven"), "kitchen space with oven");
    }

    #[test]
    fn too_small_is_rejected() {
        let raw = ColorImage::filled(63, 200, [0.0; 3]);
        assert!(preprocess_input(&raw, "x").is_err());
    }
}
