//! Deterministic offline backends and the analytic scene oracle behind them.
//!
//! Synthetic images carry their own ground truth. Every surface is painted
//! with its ADE20K palette color multiplied by a shading factor that falls
//! off with depth, `shade(d) = 1 / (1 + d / 4)`. The segmenter reads the class
//! back from chromaticity and the depth backend inverts the shading, so a
//! picture rendered by [`synthetic_scene_oracle`] round-trips into exact
//! labels and metric depth.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use nalgebra::{Point3, Rotation3, Vector3};
use regex::Regex;

use super::{
    CaptionBackend, ConditioningKind, DepthBackend, FunctionCall, InpaintBackend, InpaintRequest,
    KnownDepth, LlmBackend, LlmReply, LlmRequest, SegmentationBackend,
};
use crate::error::{Error, Result};
use crate::geometry::{CameraView, Label, RigidTransform, Rgb};
use crate::grid::{ColorImage, DepthImage, Grid, LabelImage};
use crate::palette::{self, CABINET, CEILING, FLOOR, PERSON, RUG, SOFA, WALL};

/// Depth at which synthetic shading halves, meters.
pub const SHADE_SCALE_M: f64 = 4.0;

/// Smallest depth the synthetic depth backend will report.
const MIN_DEPTH: f64 = 0.05;

/// Channels darker than this carry no usable chromaticity.
const DARK: f32 = 0.02;

pub fn shade(depth: f64) -> f64 {
    1.0 / (1.0 + depth / SHADE_SCALE_M)
}

pub fn unshade(s: f64) -> f64 {
    SHADE_SCALE_M * (1.0 / s - 1.0)
}

/// Palette color of `label` darkened for a surface at `depth`.
pub fn shaded_color(label: Label, depth: f64) -> Rgb {
    let s = shade(depth) as f32;
    let c = palette::color(label);
    [c[0] * s, c[1] * s, c[2] * s]
}

/// Classes synthetic scenes are painted with.
pub const SCENE_CLASSES: [Label; 7] = [WALL, FLOOR, CEILING, CABINET, PERSON, SOFA, RUG];

// ---------------------------------------------------------------------------
// Scenes

/// Planar rectangle `center ± s·u ± t·v`, `|s|, |t| ≤ 1`.
#[derive(Clone, Copy, Debug)]
struct Rect {
    center: Point3<f64>,
    u: Vector3<f64>,
    v: Vector3<f64>,
    label: Label,
    /// Wins depth ties against coplanar surfaces (rugs lying on floors).
    overlay: bool,
}

impl Rect {
    fn transformed(&self, t: &RigidTransform) -> Rect {
        Rect {
            center: t.apply_point(&self.center),
            u: t.apply_vector(&self.u),
            v: t.apply_vector(&self.v),
            ..*self
        }
    }

    /// Ray parameter of the hit, for `origin + t·dir`.
    fn hit(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        let n = self.u.cross(&self.v);
        let denom = n.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = n.dot(&(self.center - origin)) / denom;
        if t <= 0.0 {
            return None;
        }
        let rel = origin + dir * t - self.center;
        let s = rel.dot(&self.u) / self.u.norm_squared();
        let r = rel.dot(&self.v) / self.v.norm_squared();
        (s.abs() <= 1.0 + 1e-12 && r.abs() <= 1.0 + 1e-12).then_some(t)
    }
}

/// A parametric scene made of labelled rectangles.
#[derive(Clone, Debug)]
pub struct SyntheticScene {
    id: String,
    rects: Vec<Rect>,
    /// Room-to-world transform already baked into `rects`.
    transform: RigidTransform,
    camera_position: Point3<f64>,
    camera_yaw_deg: f64,
    camera_pitch_deg: f64,
}

/// Ids accepted by [`SyntheticScene::by_id`].
pub const SCENE_IDS: [&str; 6] = [
    "box-room",
    "two-plane",
    "tilted-floor-room",
    "furnished-room",
    "lounge-room",
    "study-room",
];

fn rect(center: [f64; 3], u: [f64; 3], v: [f64; 3], label: Label) -> Rect {
    Rect {
        center: Point3::from(center),
        u: Vector3::from(u),
        v: Vector3::from(v),
        label,
        overlay: false,
    }
}

/// Floor, ceiling and four walls of an axis-aligned room centered on the
/// origin in X and Z with its floor at `y = 0`.
fn room(width: f64, height: f64, length: f64) -> Vec<Rect> {
    let (hx, hy, hz) = (width / 2.0, height / 2.0, length / 2.0);
    vec![
        rect([0.0, 0.0, 0.0], [hx, 0.0, 0.0], [0.0, 0.0, hz], FLOOR),
        rect([0.0, height, 0.0], [hx, 0.0, 0.0], [0.0, 0.0, hz], CEILING),
        rect([0.0, hy, -hz], [hx, 0.0, 0.0], [0.0, hy, 0.0], WALL),
        rect([0.0, hy, hz], [hx, 0.0, 0.0], [0.0, hy, 0.0], WALL),
        rect([-hx, hy, 0.0], [0.0, 0.0, hz], [0.0, hy, 0.0], WALL),
        rect([hx, hy, 0.0], [0.0, 0.0, hz], [0.0, hy, 0.0], WALL),
    ]
}

/// Six faces of an axis-aligned box.
fn solid(min: [f64; 3], max: [f64; 3], label: Label) -> Vec<Rect> {
    let c = [
        (min[0] + max[0]) / 2.0,
        (min[1] + max[1]) / 2.0,
        (min[2] + max[2]) / 2.0,
    ];
    let h = [
        (max[0] - min[0]) / 2.0,
        (max[1] - min[1]) / 2.0,
        (max[2] - min[2]) / 2.0,
    ];
    vec![
        rect([c[0], max[1], c[2]], [h[0], 0.0, 0.0], [0.0, 0.0, h[2]], label),
        rect([c[0], min[1], c[2]], [h[0], 0.0, 0.0], [0.0, 0.0, h[2]], label),
        rect([c[0], c[1], max[2]], [h[0], 0.0, 0.0], [0.0, h[1], 0.0], label),
        rect([c[0], c[1], min[2]], [h[0], 0.0, 0.0], [0.0, h[1], 0.0], label),
        rect([max[0], c[1], c[2]], [0.0, 0.0, h[2]], [0.0, h[1], 0.0], label),
        rect([min[0], c[1], c[2]], [0.0, 0.0, h[2]], [0.0, h[1], 0.0], label),
    ]
}

fn rug(x: [f64; 2], z: [f64; 2]) -> Rect {
    Rect {
        overlay: true,
        ..rect(
            [(x[0] + x[1]) / 2.0, 0.0, (z[0] + z[1]) / 2.0],
            [(x[1] - x[0]) / 2.0, 0.0, 0.0],
            [0.0, 0.0, (z[1] - z[0]) / 2.0],
            RUG,
        )
    }
}

impl SyntheticScene {
    fn new(id: &str, rects: Vec<Rect>, length: f64) -> Self {
        SyntheticScene {
            id: id.to_string(),
            rects,
            transform: RigidTransform::identity(),
            camera_position: Point3::new(0.0, 1.5, length / 2.0 - 0.5),
            camera_yaw_deg: 180.0,
            camera_pitch_deg: -10.0,
        }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        let scene = match id {
            "box-room" => SyntheticScene::new(id, room(4.0, 2.5, 4.0), 4.0),
            "two-plane" => {
                let rects = vec![
                    rect([-50.0, 0.0, -1.0], [50.0, 0.0, 0.0], [0.0, 50.0, 0.0], WALL),
                    rect([50.0, 0.0, -3.0], [50.0, 0.0, 0.0], [0.0, 50.0, 0.0], WALL),
                ];
                SyntheticScene {
                    camera_position: Point3::origin(),
                    camera_pitch_deg: 0.0,
                    ..SyntheticScene::new(id, rects, 0.0)
                }
            }
            "tilted-floor-room" => SyntheticScene::tilted_room(20.0, 0.0, 0.0),
            "furnished-room" => {
                let mut rects = room(5.0, 2.6, 5.0);
                rects.extend(solid([-2.4, 0.0, -2.5], [-0.6, 0.8, -1.6], SOFA));
                rects.extend(solid([1.5, 0.0, -2.5], [2.4, 1.8, -1.9], CABINET));
                rects.push(rug([-1.6, 0.4], [-1.4, 0.2]));
                rects.extend(solid([0.6, 0.0, -0.9], [1.0, 1.75, -0.6], PERSON));
                SyntheticScene::new(id, rects, 5.0)
            }
            "lounge-room" => {
                let mut rects = room(4.5, 2.6, 4.5);
                rects.extend(solid([-1.2, 0.0, -2.25], [1.2, 0.8, -1.4], SOFA));
                rects.push(rug([-1.0, 1.0], [-1.2, 0.2]));
                SyntheticScene::new(id, rects, 4.5)
            }
            "study-room" => {
                let mut rects = room(4.0, 2.6, 4.5);
                rects.extend(solid([-1.9, 0.0, -2.25], [-0.9, 1.9, -1.7], CABINET));
                rects.extend(solid([0.9, 0.0, -2.25], [1.9, 1.9, -1.7], CABINET));
                SyntheticScene::new(id, rects, 4.5)
            }
            other => return Err(Error::invalid(format!("unknown synthetic scene '{other}'"))),
        };
        Ok(scene)
    }

    /// The 4×2.5×4 m box room tilted by `tilt_deg` about the X axis, turned
    /// by `roll_deg` about Z, and lifted by `lift_m`, all about the floor
    /// center. The capture camera stays level.
    pub fn tilted_room(tilt_deg: f64, roll_deg: f64, lift_m: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Vector3::z_axis(), roll_deg.to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), tilt_deg.to_radians());
        let transform = RigidTransform::from_parts(rotation, Vector3::new(0.0, lift_m, 0.0));
        let mut scene = SyntheticScene::new("tilted-floor-room", room(4.0, 2.5, 4.0), 4.0);
        scene.rects = scene.rects.iter().map(|r| r.transformed(&transform)).collect();
        scene.transform = transform;
        scene.camera_position.y += lift_m;
        scene
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Room-to-world transform. The room's own floor is the `y = 0` plane.
    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    /// World-frame floor normal.
    pub fn floor_normal(&self) -> Vector3<f64> {
        self.transform.apply_vector(&Vector3::y())
    }

    /// Camera the scene's reference photograph is taken from.
    pub fn capture_camera(&self, width: usize, height: usize) -> CameraView {
        CameraView::looking(
            self.camera_position,
            self.camera_yaw_deg,
            self.camera_pitch_deg,
            width,
            height,
        )
    }

    /// Ray-cast every pixel. Pixels that see nothing get the missing
    /// sentinel, black and the wall label.
    pub fn render(&self, cam: &CameraView) -> SceneRender {
        let origin = cam.position();
        let mut color = Grid::filled(cam.width_px, cam.height_px, [0.0; 3]);
        let mut depth = Grid::filled(cam.width_px, cam.height_px, crate::grid::MISSING_DEPTH);
        let mut labels = Grid::filled(cam.width_px, cam.height_px, WALL);
        for y in 0..cam.height_px {
            for x in 0..cam.width_px {
                // Camera-space ray has z = -1, so the ray parameter is the depth.
                let dir = cam.pose.apply_vector(&cam.pixel_ray_camera(x, y));
                let mut best: Option<(f64, Label)> = None;
                for r in &self.rects {
                    if let Some(t) = r.hit(&origin, &dir) {
                        let take = match best {
                            None => true,
                            Some((bt, _)) => t < bt - 1e-9 || (r.overlay && t <= bt + 1e-9),
                        };
                        if take {
                            best = Some((t, r.label));
                        }
                    }
                }
                if let Some((t, label)) = best {
                    depth.set(x, y, t);
                    labels.set(x, y, label);
                    color.set(x, y, shaded_color(label, t));
                }
            }
        }
        SceneRender {
            color,
            depth,
            labels,
        }
    }
}

/// Exact color, depth and labels of an analytic scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneRender {
    pub color: ColorImage,
    pub depth: DepthImage,
    pub labels: LabelImage,
}

/// Render built-in scene `scene_id` from `cam`.
pub fn synthetic_scene_oracle(scene_id: &str, cam: &CameraView) -> Result<SceneRender> {
    Ok(SyntheticScene::by_id(scene_id)?.render(cam))
}

// ---------------------------------------------------------------------------
// Decoding helpers

fn chromaticity(c: &[f32; 3]) -> [f32; 3] {
    let sum = c[0] + c[1] + c[2];
    [c[0] / sum, c[1] / sum, c[2] / sum]
}

fn class_chromaticities(classes: &[Label]) -> Vec<(Label, [f32; 3], Rgb)> {
    classes
        .iter()
        .map(|&l| {
            let c = palette::color(l);
            (l, chromaticity(&c), c)
        })
        .collect()
}

fn classify(c: &Rgb, table: &[(Label, [f32; 3], Rgb)]) -> (Label, Rgb) {
    if c.iter().all(|&v| v < DARK) {
        let wall = table.iter().find(|e| e.0 == WALL).unwrap_or(&table[0]);
        return (wall.0, wall.2);
    }
    let ch = chromaticity(c);
    let mut best = (f32::INFINITY, table[0].0, table[0].2);
    for (label, k, rgb) in table {
        let d = (ch[0] - k[0]).powi(2) + (ch[1] - k[1]).powi(2) + (ch[2] - k[2]).powi(2);
        if d < best.0 {
            best = (d, *label, *rgb);
        }
    }
    (best.1, best.2)
}

/// Depth implied by the shading of one pixel painted in `base`.
fn decode_depth(c: &Rgb, base: &Rgb) -> f64 {
    let num: f64 = (0..3).map(|i| c[i] as f64 * base[i] as f64).sum();
    let den: f64 = (0..3).map(|i| (base[i] as f64).powi(2)).sum();
    let s = num / den;
    if s <= 0.0 {
        return 1e3;
    }
    unshade(s.min(1.0)).max(MIN_DEPTH)
}

// ---------------------------------------------------------------------------
// Backends

/// Labels pixels by nearest palette chromaticity among a fixed class set.
#[derive(Clone, Debug)]
pub struct SyntheticSegmenter {
    pub classes: Vec<Label>,
}

impl Default for SyntheticSegmenter {
    fn default() -> Self {
        SyntheticSegmenter {
            classes: SCENE_CLASSES.to_vec(),
        }
    }
}

impl SegmentationBackend for SyntheticSegmenter {
    fn identity(&self) -> String {
        format!("synthetic-segmenter/chromaticity/{:?}", self.classes)
    }

    fn segment(&self, image: &ColorImage) -> Result<LabelImage> {
        if self.classes.is_empty() {
            return Err(Error::backend("segmentation", "empty class set"));
        }
        let table = class_chromaticities(&self.classes);
        Ok(image.map(|c| classify(c, &table).0))
    }
}

/// Inverts the synthetic shading. Known depth, when given, is passed through
/// verbatim; every other pixel gets its shading-implied depth, which is
/// already metric for images painted by the synthetic scenes.
#[derive(Clone, Debug)]
pub struct SyntheticDepth {
    pub classes: Vec<Label>,
}

impl Default for SyntheticDepth {
    fn default() -> Self {
        SyntheticDepth {
            classes: SCENE_CLASSES.to_vec(),
        }
    }
}

impl SyntheticDepth {
    /// Shading-implied depth for every pixel.
    pub fn decode(&self, image: &ColorImage) -> DepthImage {
        let table = class_chromaticities(&self.classes);
        image.map(|c| {
            let (_, base) = classify(c, &table);
            decode_depth(c, &base)
        })
    }
}

impl DepthBackend for SyntheticDepth {
    fn identity(&self) -> String {
        format!("synthetic-depth/shade{SHADE_SCALE_M}")
    }

    fn estimate(&self, image: &ColorImage, known: Option<KnownDepth<'_>>) -> Result<DepthImage> {
        let mut out = self.decode(image);
        if let Some(known) = known {
            if !known.depth.same_shape(image) || !known.mask.same_shape(image) {
                return Err(Error::backend("depth", "known depth size differs from image"));
            }
            for (i, px) in out.pixels_mut().iter_mut().enumerate() {
                if known.mask.pixels()[i] {
                    *px = known.depth.pixels()[i];
                }
            }
        }
        Ok(out)
    }
}

/// Scene picked for unconditioned full-frame generation, by prompt keyword.
fn generated_scene_for(prompt: &str) -> &'static str {
    let p = prompt.to_lowercase();
    if ["office", "study", "cabinet", "desk"].iter().any(|k| p.contains(k)) {
        "study-room"
    } else {
        "lounge-room"
    }
}

/// Deterministic inpainter.
///
/// * With a semantic or depth conditioning image it paints each masked pixel
///   in the palette color of the structural role the semantic image shows,
///   shaded by the relative depth the depth image encodes (near = bright).
/// * With a full mask and no conditioning it renders a synthetic room from
///   that room's capture camera, which is how intermediate views are
///   generated offline.
/// * Otherwise each masked pixel copies the nearest unmasked pixel in its row
///   (or column, when the row has none).
#[derive(Clone, Debug, Default)]
pub struct SyntheticInpainter;

impl SyntheticInpainter {
    fn from_conditioning(req: &InpaintRequest) -> ColorImage {
        let roles = class_chromaticities(&[WALL, FLOOR, CEILING]);
        let semantic = req.channel(ConditioningKind::Semantic).map(|c| &c.image);
        let depth = req.channel(ConditioningKind::Depth).map(|c| &c.image);
        let mut out = req.image.clone();
        for y in 0..out.height() {
            for x in 0..out.width() {
                if !*req.mask.get(x, y) {
                    continue;
                }
                let role = semantic.map_or(WALL, |s| classify(s.get(x, y), &roles).0);
                let rel = depth.map_or(0.5, |d| 1.0 - d.get(x, y)[0] as f64);
                out.set(x, y, shaded_color(role, SHADE_SCALE_M * rel.clamp(0.0, 1.0)));
            }
        }
        out
    }

    fn generate(req: &InpaintRequest) -> Result<ColorImage> {
        let scene = SyntheticScene::by_id(generated_scene_for(&req.prompt))?;
        let cam = scene.capture_camera(req.image.width(), req.image.height());
        Ok(scene.render(&cam).color)
    }

    fn nearest_fill(req: &InpaintRequest) -> ColorImage {
        let (w, h) = (req.image.width(), req.image.height());
        let mut out = req.image.clone();
        let nearest = |coords: &mut dyn Iterator<Item = (usize, usize)>| -> Vec<(usize, Rgb)> {
            coords
                .filter(|&(x, y)| !*req.mask.get(x, y))
                .map(|(x, y)| (x + y * w, *req.image.get(x, y)))
                .collect()
        };
        for y in 0..h {
            let known = nearest(&mut (0..w).map(|x| (x, y)));
            for x in 0..w {
                if !*req.mask.get(x, y) {
                    continue;
                }
                let pick = known
                    .iter()
                    .min_by_key(|(i, _)| (i % w).abs_diff(x))
                    .map(|(_, c)| *c)
                    .or_else(|| {
                        let col = nearest(&mut (0..h).map(|yy| (x, yy)));
                        col.iter().min_by_key(|(i, _)| (i / w).abs_diff(y)).map(|(_, c)| *c)
                    })
                    .unwrap_or([0.5; 3]);
                out.set(x, y, pick);
            }
        }
        out
    }
}

impl InpaintBackend for SyntheticInpainter {
    fn identity(&self) -> String {
        "synthetic-inpainter/v1".into()
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<ColorImage> {
        if !req.mask.same_shape(&req.image) {
            return Err(Error::backend("inpaint", "mask size differs from image"));
        }
        let conditioned = req
            .conditioning
            .iter()
            .any(|c| matches!(c.kind, ConditioningKind::Semantic | ConditioningKind::Depth));
        if conditioned {
            Ok(Self::from_conditioning(req))
        } else if req.mask.count() == req.mask.len() {
            Self::generate(req)
        } else {
            Ok(Self::nearest_fill(req))
        }
    }
}

/// Fills every masked pixel with the mean color of the unmasked pixels in a
/// square window around it, falling back to the mean of the whole unmasked
/// image.
#[derive(Clone, Debug)]
pub struct NeighborhoodMeanInpainter {
    pub radius: usize,
}

impl Default for NeighborhoodMeanInpainter {
    fn default() -> Self {
        NeighborhoodMeanInpainter { radius: 16 }
    }
}

impl InpaintBackend for NeighborhoodMeanInpainter {
    fn identity(&self) -> String {
        format!("neighborhood-mean-inpainter/r{}", self.radius)
    }

    fn inpaint(&self, req: &InpaintRequest) -> Result<ColorImage> {
        let (w, h) = (req.image.width(), req.image.height());
        let mean = |xs: std::ops::Range<usize>, ys: std::ops::Range<usize>| -> Option<Rgb> {
            let mut acc = [0.0f64; 3];
            let mut n = 0usize;
            for y in ys {
                for x in xs.clone() {
                    if !*req.mask.get(x, y) {
                        let c = req.image.get(x, y);
                        (0..3).for_each(|i| acc[i] += c[i] as f64);
                        n += 1;
                    }
                }
            }
            (n > 0).then(|| acc.map(|v| (v / n as f64) as f32))
        };
        let global = mean(0..w, 0..h).unwrap_or([0.5; 3]);
        let r = self.radius;
        Ok(Grid::from_fn(w, h, |x, y| {
            if !*req.mask.get(x, y) {
                return *req.image.get(x, y);
            }
            mean(
                x.saturating_sub(r)..(x + r + 1).min(w),
                y.saturating_sub(r)..(y + r + 1).min(h),
            )
            .unwrap_or(global)
        }))
    }
}

/// Canned captions keyed by the dominant furniture class in view.
#[derive(Clone, Debug, Default)]
pub struct SyntheticCaptioner {
    segmenter: SyntheticSegmenter,
}

/// Caption for a view whose most frequent furniture class is `dominant`.
pub fn canned_caption(dominant: Option<Label>, with_person: bool) -> String {
    let base = match dominant {
        Some(SOFA) => "living room space with a blue sofa",
        Some(CABINET) => "office space with a purple cabinet",
        Some(RUG) => "lounge space with a red rug",
        _ => "empty room space with gray walls",
    };
    if with_person {
        format!("{base} and a person")
    } else {
        base.to_string()
    }
}

impl CaptionBackend for SyntheticCaptioner {
    fn identity(&self) -> String {
        "synthetic-captioner/v1".into()
    }

    fn caption(&self, image: &ColorImage) -> Result<String> {
        let labels = self.segmenter.segment(image)?;
        let mut counts: BTreeMap<Label, usize> = BTreeMap::new();
        for &l in labels.pixels() {
            *counts.entry(l).or_default() += 1;
        }
        let dominant = counts
            .iter()
            .filter(|(l, _)| ![WALL, FLOOR, CEILING, PERSON].contains(l))
            .max_by_key(|(l, n)| (**n, std::cmp::Reverse(**l)))
            .map(|(l, _)| *l);
        Ok(canned_caption(dominant, counts.contains_key(&PERSON)))
    }
}

const FURNISHINGS: [&str; 8] = [
    "tall bookshelf",
    "potted plant",
    "floor lamp",
    "leather armchair",
    "wooden desk",
    "framed painting",
    "side table",
    "window with curtains",
];

fn room_type(description: &str) -> &str {
    description
        .find(" space with")
        .map(|i| &description[..i])
        .filter(|s| !s.is_empty())
        .unwrap_or("room")
}

fn after<'a>(text: &'a str, marker: &str) -> Option<&'a str> {
    text.find(marker).map(|i| &text[i + marker.len()..])
}

/// Offline stand-in for the prompt LLM. It understands the region-prompt
/// user message and the floor-description request, and answers both with
/// short, well-formed descriptions.
#[derive(Clone, Copy, Debug, Default)]
pub struct SyntheticLlm;

impl SyntheticLlm {
    fn regions(&self, user: &str) -> Result<serde_json::Value> {
        let bad = || Error::backend("llm", "unrecognized region request");
        let known_text = after(user, "already taken: ").ok_or_else(bad)?;
        let known_text = &known_text[..known_text.find(". What do you expect").ok_or_else(bad)?];
        let known: BTreeMap<String, String> = serde_json::from_str(known_text)?;
        let wanted = after(user, "following Y rotation values: ").ok_or_else(bad)?;
        let wanted: Vec<f64> = serde_json::from_str(&wanted[..wanted.find('?').ok_or_else(bad)?])?;

        let known: Vec<(f64, &str)> = known
            .iter()
            .filter_map(|(k, v)| k.parse::<f64>().ok().map(|y| (y, v.as_str())))
            .collect();
        let descriptions: Vec<serde_json::Value> = wanted
            .iter()
            .map(|&yaw| {
                let nearest = known
                    .iter()
                    .min_by(|a, b| {
                        crate::geometry::circular_distance_deg(a.0, yaw)
                            .total_cmp(&crate::geometry::circular_distance_deg(b.0, yaw))
                    })
                    .map_or("room", |(_, d)| room_type(d));
                let k = (yaw.round() as i64).rem_euclid(360) as usize;
                let text = format!(
                    "{nearest} space with {}, {}",
                    FURNISHINGS[k % FURNISHINGS.len()],
                    FURNISHINGS[(k / 8 + 3) % FURNISHINGS.len()]
                );
                serde_json::json!({"y_rotation": yaw, "description": text})
            })
            .collect();
        Ok(serde_json::json!({ "descriptions": descriptions }))
    }
}

impl LlmBackend for SyntheticLlm {
    fn identity(&self) -> String {
        "synthetic-llm/v1".into()
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmReply> {
        match &request.function {
            Some(f) => Ok(LlmReply {
                content: None,
                function_call: Some(FunctionCall {
                    name: f.name.clone(),
                    arguments: self.regions(&request.user)?,
                }),
            }),
            None => {
                static CAPTION: OnceLock<Regex> = OnceLock::new();
                let re = CAPTION.get_or_init(|| Regex::new(r#""([^"]+)""#).expect("regex"));
                let caption = re
                    .captures(&request.user)
                    .map(|c| c[1].to_string())
                    .unwrap_or_default();
                Ok(LlmReply {
                    content: Some(format!("{} space with wooden floor", room_type(&caption))),
                    function_call: None,
                })
            }
        }
    }
}
