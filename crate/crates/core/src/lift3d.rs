//! From images to meshes: backprojection, depth alignment and view fusion.

use nalgebra::Vector3;

use crate::backends::{DepthBackend, SegmentationBackend};
use crate::error::{Error, Result, StageContext};
use crate::geometry::{CameraView, Label, TriangleMesh};
use crate::grid::{ColorImage, DepthImage, Grid, LabelImage, MaskImage};
use crate::ingest::PreparedImage;
use crate::render::render_view;

/// Faces whose corner depths differ by more than this fraction of the
/// nearest corner are treated as spanning a discontinuity and dropped.
pub const MAX_RELATIVE_DEPTH_JUMP: f64 = 0.10;

/// Fewest known pixels [`align_depth`] will fit against.
pub const MIN_ALIGNMENT_PIXELS: usize = 16;

/// Mesh lifted from one photograph, with its capture camera.
#[derive(Clone, Debug)]
pub struct Submesh {
    pub mesh: TriangleMesh,
    pub capture_camera: CameraView,
    pub aligned: bool,
    pub floor_found: bool,
    /// Unit direction the submesh's front side faces, i.e. from the scene
    /// back toward the camera that captured it.
    pub front_direction: Vector3<f64>,
    pub source_id: String,
    pub caption: Option<String>,
}

impl Submesh {
    /// Apply `t` to the mesh, the capture camera and the front direction.
    pub fn transformed(&self, t: &crate::geometry::RigidTransform) -> Submesh {
        Submesh {
            mesh: crate::geometry::apply_rigid_transform(&self.mesh, t),
            capture_camera: CameraView {
                pose: t.compose(&self.capture_camera.pose),
                ..self.capture_camera
            },
            front_direction: t.apply_vector(&self.front_direction),
            ..self.clone()
        }
    }
}

fn continuous(a: f64, b: f64, c: f64) -> bool {
    let lo = a.min(b).min(c);
    let hi = a.max(b).max(c);
    hi - lo <= MAX_RELATIVE_DEPTH_JUMP * lo
}

/// One vertex per pixel, two triangles per pixel quad, faces across depth
/// discontinuities dropped.
pub fn backproject(
    color: &ColorImage,
    depth: &DepthImage,
    labels: Option<&LabelImage>,
    cam: &CameraView,
) -> Result<TriangleMesh> {
    let full = Grid::filled(color.width(), color.height(), true);
    let mut mesh = TriangleMesh {
        labels: labels.map(|_| Vec::new()),
        ..Default::default()
    };
    let input = FuseInput {
        color,
        depth,
        mask: &full,
        labels,
        rendered_depth: None,
    };
    if color.width() < 2 || color.height() < 2 {
        return Err(Error::Degenerate(format!(
            "cannot triangulate a {}×{} image",
            color.width(),
            color.height()
        )));
    }
    fuse_into(&mut mesh, cam, &input)?;
    Ok(mesh)
}

/// Predict depth and labels for `img` and lift it into a submesh.
pub fn estimate_and_backproject(
    img: &PreparedImage,
    cam: &CameraView,
    depth: &dyn DepthBackend,
    seg: &dyn SegmentationBackend,
) -> Result<Submesh> {
    let color = img.color();
    if cam.width_px != color.width() || cam.height_px != color.height() {
        return Err(Error::invalid("camera resolution differs from image size"));
    }
    let predicted = depth.estimate(color, None).stage("lift3d: depth")?;
    check_depth(&predicted, color).stage("lift3d: depth")?;
    let labels = seg.segment(color).stage("lift3d: segmentation")?;
    if !labels.same_shape(color) {
        return Err(Error::backend("segmentation", "output size differs from input"));
    }
    let mesh = backproject(color, &predicted, Some(&labels), cam).stage("lift3d")?;
    Ok(Submesh {
        mesh,
        capture_camera: *cam,
        aligned: false,
        floor_found: false,
        front_direction: -cam.forward(),
        source_id: img.source_id.clone(),
        caption: img.caption.clone(),
    })
}

fn check_depth(depth: &DepthImage, image: &ColorImage) -> Result<()> {
    if !depth.same_shape(image) {
        return Err(Error::backend("depth", "output size differs from input"));
    }
    if let Some(bad) = depth.pixels().iter().find(|d| !(d.is_finite() && **d > 0.0)) {
        return Err(Error::backend(
            "depth",
            format!("non-positive or non-finite depth {bad}"),
        ));
    }
    Ok(())
}

/// Result of [`align_depth`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedDepth {
    pub depth: DepthImage,
    pub scale: f64,
    pub offset: f64,
    /// `false` when there were too few known pixels and `depth` is the
    /// prediction unchanged.
    pub aligned: bool,
}

fn least_squares(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let s = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    if s > 0.0 {
        (s, my - s * mx)
    } else {
        // A non-positive scale would flip the scene; fall back to a shift.
        (1.0, my - mx)
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fit `s·predicted + b` (with `s > 0`) to `known` on `known_mask`, then refit
/// once without residuals beyond three robust standard deviations.
pub fn align_depth(predicted: &DepthImage, known: &DepthImage, known_mask: &MaskImage) -> Result<AlignedDepth> {
    if !predicted.same_shape(known) || !predicted.same_shape(known_mask) {
        return Err(Error::invalid("align_depth inputs differ in size"));
    }
    let pairs: Vec<(f64, f64)> = known_mask
        .pixels()
        .iter()
        .zip(predicted.pixels().iter().zip(known.pixels()))
        .filter(|(m, (p, k))| **m && p.is_finite() && k.is_finite())
        .map(|(_, (&p, &k))| (p, k))
        .collect();
    if pairs.len() < MIN_ALIGNMENT_PIXELS {
        return Ok(AlignedDepth {
            depth: predicted.clone(),
            scale: 1.0,
            offset: 0.0,
            aligned: false,
        });
    }
    let (mut s, mut b) = least_squares(&pairs);
    let residuals: Vec<f64> = pairs.iter().map(|(p, k)| k - (s * p + b)).collect();
    let mut scratch = residuals.clone();
    let center = median(&mut scratch);
    let mut deviations: Vec<f64> = residuals.iter().map(|r| (r - center).abs()).collect();
    let sigma = 1.4826 * median(&mut deviations);
    let kept: Vec<(f64, f64)> = pairs
        .iter()
        .zip(&residuals)
        .filter(|(_, r)| (*r - center).abs() <= 3.0 * sigma)
        .map(|(p, _)| *p)
        .collect();
    if kept.len() >= MIN_ALIGNMENT_PIXELS && kept.len() < pairs.len() {
        (s, b) = least_squares(&kept);
    }
    Ok(AlignedDepth {
        depth: predicted.map(|&p| s * p + b),
        scale: s,
        offset: b,
        aligned: true,
    })
}

/// Images describing one view to fuse.
#[derive(Clone, Copy, Debug)]
pub struct FuseInput<'a> {
    pub color: &'a ColorImage,
    /// Depth for the pixels in `mask`; other pixels are ignored.
    pub depth: &'a DepthImage,
    /// Pixels to turn into new geometry.
    pub mask: &'a MaskImage,
    pub labels: Option<&'a LabelImage>,
    /// Depth of the existing mesh seen from the same camera. Unmasked pixels
    /// next to the mask with finite rendered depth become stitching vertices
    /// that sit exactly on the existing surface.
    pub rendered_depth: Option<&'a DepthImage>,
}

/// Append new geometry for the masked pixels of one view to `mesh`, in place.
/// Existing vertices and faces are never touched. Returns the number of
/// vertices added.
pub fn fuse_into(mesh: &mut TriangleMesh, cam: &CameraView, input: &FuseInput<'_>) -> Result<usize> {
    let (w, h) = (input.color.width(), input.color.height());
    let same = input.depth.same_shape(input.color)
        && input.mask.same_shape(input.color)
        && input.labels.is_none_or(|l| l.same_shape(input.color))
        && input.rendered_depth.is_none_or(|d| d.same_shape(input.color));
    if !same {
        return Err(Error::invalid("fuse inputs differ in size"));
    }
    if cam.width_px != w || cam.height_px != h {
        return Err(Error::invalid("camera resolution differs from image size"));
    }
    if input.mask.count() == 0 {
        return Ok(0);
    }
    if mesh.labels.is_some() != input.labels.is_some() && !mesh.is_empty() {
        return Err(Error::invalid("label presence differs between mesh and view"));
    }
    if mesh.is_empty() {
        mesh.labels = input.labels.map(|_| Vec::new());
    }

    // Per-pixel vertex index and depth, for mask pixels and the stitching ring.
    const NONE: u32 = u32::MAX;
    let mut index = vec![NONE; w * h];
    let mut vdepth = vec![0.0; w * h];
    let mut is_new = vec![false; w * h];
    let start = mesh.vertex_count();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let d = if input.mask.pixels()[i] {
                let d = input.depth.pixels()[i];
                if !(d.is_finite() && d > 0.0) {
                    return Err(Error::invalid(format!("depth {d} at masked pixel ({x}, {y})")));
                }
                is_new[i] = true;
                d
            } else {
                let Some(rendered) = input.rendered_depth else {
                    continue;
                };
                let d = rendered.pixels()[i];
                if !d.is_finite() || !touches_mask(input.mask, x, y) {
                    continue;
                }
                d
            };
            vdepth[i] = d;
            let label: Option<Label> = input.labels.map(|l| l.pixels()[i]);
            index[i] = mesh.push_vertex(cam.unproject(x, y, d), input.color.pixels()[i], label);
        }
    }

    for y in 0..h - 1 {
        for x in 0..w - 1 {
            let q = [y * w + x, y * w + x + 1, (y + 1) * w + x, (y + 1) * w + x + 1];
            for tri in [[q[0], q[2], q[1]], [q[1], q[2], q[3]]] {
                if tri.iter().any(|&i| index[i] == NONE) || !tri.iter().any(|&i| is_new[i]) {
                    continue;
                }
                if !continuous(vdepth[tri[0]], vdepth[tri[1]], vdepth[tri[2]]) {
                    continue;
                }
                mesh.faces.push([index[tri[0]], index[tri[1]], index[tri[2]]]);
            }
        }
    }
    Ok(mesh.vertex_count() - start)
}

fn touches_mask(mask: &MaskImage, x: usize, y: usize) -> bool {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    for dy in -1..=1isize {
        for dx in -1..=1isize {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            if (dx, dy) != (0, 0) && nx >= 0 && ny >= 0 && nx < w && ny < h && *mask.get(nx as usize, ny as usize) {
                return true;
            }
        }
    }
    false
}

/// Fuse one view into a copy of `mesh`, rendering the existing mesh to find
/// the stitching depth.
pub fn fuse_view(
    mesh: &TriangleMesh,
    cam: &CameraView,
    color: &ColorImage,
    depth: &DepthImage,
    inpaint_mask: &MaskImage,
    labels: Option<&LabelImage>,
) -> Result<TriangleMesh> {
    let mut out = mesh.clone();
    if inpaint_mask.count() == 0 {
        return Ok(out);
    }
    let rendered = render_view(mesh, cam);
    fuse_into(
        &mut out,
        cam,
        &FuseInput {
            color,
            depth,
            mask: inpaint_mask,
            labels,
            rendered_depth: Some(&rendered.depth),
        },
    )?;
    Ok(out)
}
