//! Shared geometric value types: triangle meshes, rigid transforms and
//! pinhole cameras.
//!
//! World frame is right-handed with +Y up and the floor at `y = 0` once a
//! submesh has been aligned. Cameras look down their local −Z axis with +X to
//! the right and +Y up; depth is the distance along that viewing axis (not
//! the ray length).

use nalgebra::{Matrix3, Point3, Rotation3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ADE20K class id (zero-based, 150 classes).
pub type Label = u16;
/// RGB in `[0, 1]`.
pub type Rgb = [f32; 3];

const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Vertex-colored triangle mesh with optional per-vertex semantic labels.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub(crate) vertices: Vec<Point3<f64>>,
    pub(crate) faces: Vec<[u32; 3]>,
    pub(crate) colors: Vec<Rgb>,
    pub(crate) labels: Option<Vec<Label>>,
}

impl TriangleMesh {
    /// Build a mesh, checking every structural invariant.
    pub fn new(
        vertices: Vec<Point3<f64>>,
        faces: Vec<[u32; 3]>,
        colors: Vec<Rgb>,
        labels: Option<Vec<Label>>,
    ) -> Result<Self> {
        let mesh = TriangleMesh {
            vertices,
            faces,
            colors,
            labels,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// An empty mesh that carries (empty) label storage, so it can absorb
    /// labelled geometry through [`append_mesh`].
    pub fn empty_labelled() -> Self {
        TriangleMesh {
            labels: Some(Vec::new()),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if self.colors.len() != n {
            return Err(Error::invalid(format!(
                "{} colors for {} vertices",
                self.colors.len(),
                n
            )));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != n {
                return Err(Error::invalid(format!(
                    "{} labels for {} vertices",
                    labels.len(),
                    n
                )));
            }
        }
        for (i, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&v| v as usize >= n) {
                return Err(Error::invalid(format!("face {i} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::invalid(format!("face {i} is degenerate: {f:?}")));
            }
        }
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.coords.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid(format!("vertex {i} is not finite")));
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> &[Rgb] {
        &self.colors
    }

    pub fn labels(&self) -> Option<&[Label]> {
        self.labels.as_deref()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Highest vertex Y, or `None` for an empty mesh.
    pub fn max_y(&self) -> Option<f64> {
        self.vertices.iter().map(|v| v.y).reduce(f64::max)
    }

    pub(crate) fn push_vertex(&mut self, p: Point3<f64>, color: Rgb, label: Option<Label>) -> u32 {
        let index = self.vertices.len() as u32;
        self.vertices.push(p);
        self.colors.push(color);
        if let Some(labels) = self.labels.as_mut() {
            labels.push(label.unwrap_or(0));
        }
        index
    }

    /// In-place variant of [`append_mesh`].
    pub(crate) fn append_in_place(&mut self, src: &TriangleMesh) -> Result<()> {
        if src.is_empty() {
            return Ok(());
        }
        if self.labels.is_some() != src.labels.is_some() {
            if !self.is_empty() {
                return Err(Error::invalid(
                    "cannot append meshes with mismatched label presence",
                ));
            }
            self.labels = src.labels.as_ref().map(|_| Vec::new());
        }
        let offset = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&src.vertices);
        self.colors.extend_from_slice(&src.colors);
        if let (Some(dst), Some(s)) = (self.labels.as_mut(), src.labels.as_ref()) {
            dst.extend_from_slice(s);
        }
        self.faces
            .extend(src.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        Ok(())
    }
}

/// Map every vertex through `t`; faces, colors and labels are untouched.
pub fn apply_rigid_transform(mesh: &TriangleMesh, t: &RigidTransform) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| t.apply_point(v)).collect(),
        faces: mesh.faces.clone(),
        colors: mesh.colors.clone(),
        labels: mesh.labels.clone(),
    }
}

/// Concatenate `src` after `dst`, offsetting its face indices.
///
/// Fails when one mesh carries labels and the other does not, unless the
/// unlabelled side is completely empty.
pub fn append_mesh(dst: &TriangleMesh, src: &TriangleMesh) -> Result<TriangleMesh> {
    let mut out = dst.clone();
    out.append_in_place(src)?;
    Ok(out)
}

/// Proper rigid motion `x ↦ R·x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TransformRepr", into = "TransformRepr")]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct TransformRepr {
    /// Row-major.
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<RigidTransform> for TransformRepr {
    fn from(t: RigidTransform) -> Self {
        let r = t.rotation;
        TransformRepr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<TransformRepr> for RigidTransform {
    type Error = Error;

    fn try_from(r: TransformRepr) -> Result<Self> {
        let m = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        RigidTransform::new(m, Vector3::from(r.translation))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.amax() > ORTHONORMAL_TOLERANCE
            || (rotation.determinant() - 1.0).abs() > ORTHONORMAL_TOLERANCE
        {
            return Err(Error::invalid("rotation is not orthonormal with det +1"));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("translation is not finite"));
        }
        Ok(RigidTransform {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_rotation(rotation: Rotation3<f64>) -> Self {
        RigidTransform {
            rotation: *rotation.matrix(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_parts(rotation: Rotation3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation: *rotation.matrix(),
            translation,
        }
    }

    /// Rotation about +Y; positive angles turn +Z toward +X.
    pub fn yaw_deg(angle_deg: f64) -> Self {
        Self::from_rotation(Rotation3::from_axis_angle(
            &Vector3::y_axis(),
            angle_deg.to_radians(),
        ))
    }

    /// Smallest rotation taking unit direction `from` onto `to`.
    pub fn rotation_between(from: &Vector3<f64>, to: &Vector3<f64>) -> Self {
        let rotation = Rotation3::rotation_between(from, to).unwrap_or_else(|| {
            // Antiparallel: half turn about any axis perpendicular to `from`.
            let helper = if from.x.abs() < 0.9 {
                Vector3::x()
            } else {
                Vector3::z()
            };
            let axis = Unit::new_normalize(from.cross(&helper));
            Rotation3::from_axis_angle(&axis, std::f64::consts::PI)
        });
        Self::from_rotation(rotation)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * first.rotation,
            translation: self.rotation * first.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }
}

/// Default vertical field of view, degrees.
pub const DEFAULT_FOV_DEG: f64 = 55.0;

/// Pinhole camera: camera-to-world pose plus intrinsics derived from a
/// vertical field of view and the pixel grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraView {
    pub pose: RigidTransform,
    pub fov_vertical_deg: f64,
    pub width_px: usize,
    pub height_px: usize,
}

impl CameraView {
    pub fn new(
        pose: RigidTransform,
        fov_vertical_deg: f64,
        width_px: usize,
        height_px: usize,
    ) -> Result<Self> {
        if !(fov_vertical_deg > 0.0 && fov_vertical_deg < 180.0) {
            return Err(Error::invalid(format!(
                "field of view {fov_vertical_deg}° outside (0, 180)"
            )));
        }
        if width_px == 0 || height_px == 0 {
            return Err(Error::invalid("camera resolution must be positive"));
        }
        Ok(CameraView {
            pose,
            fov_vertical_deg,
            width_px,
            height_px,
        })
    }

    /// Camera at `position` turned to `yaw_deg` (0 looks along +Z, 90 along +X)
    /// and tilted by `pitch_deg` (positive looks up), with the default FOV.
    pub fn looking(position: Point3<f64>, yaw_deg: f64, pitch_deg: f64, width: usize, height: usize) -> Self {
        let rotation = Rotation3::from_axis_angle(&Vector3::y_axis(), (yaw_deg + 180.0).to_radians())
            * Rotation3::from_axis_angle(&Vector3::x_axis(), pitch_deg.to_radians());
        CameraView {
            pose: RigidTransform::from_parts(rotation, position.coords),
            fov_vertical_deg: DEFAULT_FOV_DEG,
            width_px: width,
            height_px: height,
        }
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        0.5 * self.height_px as f64 / (0.5 * self.fov_vertical_deg.to_radians()).tan()
    }

    pub fn position(&self) -> Point3<f64> {
        Point3::from(self.pose.translation)
    }

    pub fn forward(&self) -> Vector3<f64> {
        self.pose.rotation * -Vector3::z()
    }

    pub fn up(&self) -> Vector3<f64> {
        self.pose.rotation * Vector3::y()
    }

    /// Heading of the viewing direction seen from above, in `[0, 360)`.
    pub fn yaw_deg(&self) -> f64 {
        let f = self.forward();
        normalize_deg(f.x.atan2(f.z).to_degrees())
    }

    pub fn pitch_deg(&self) -> f64 {
        let f = self.forward();
        f.y.clamp(-1.0, 1.0).asin().to_degrees()
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px * self.height_px
    }

    /// Direction through the center of pixel `(x, y)` in camera coordinates,
    /// scaled so that its z component is −1.
    pub fn pixel_ray_camera(&self, x: usize, y: usize) -> Vector3<f64> {
        let f = self.focal_px();
        Vector3::new(
            (x as f64 + 0.5 - 0.5 * self.width_px as f64) / f,
            -(y as f64 + 0.5 - 0.5 * self.height_px as f64) / f,
            -1.0,
        )
    }

    /// World point seen at pixel `(x, y)` with the given depth.
    pub fn unproject(&self, x: usize, y: usize, depth: f64) -> Point3<f64> {
        self.pose
            .apply_point(&Point3::from(self.pixel_ray_camera(x, y) * depth))
    }

    pub fn world_to_camera(&self, p: &Point3<f64>) -> Point3<f64> {
        let local = self.pose.rotation.transpose() * (p.coords - self.pose.translation);
        Point3::from(local)
    }

    /// Continuous pixel coordinates and depth of a world point; `None` when the
    /// point is not in front of the camera.
    pub fn project(&self, p: &Point3<f64>) -> Option<(f64, f64, f64)> {
        let c = self.world_to_camera(p);
        let depth = -c.z;
        if depth <= 0.0 {
            return None;
        }
        let f = self.focal_px();
        Some((
            0.5 * self.width_px as f64 + f * c.x / depth,
            0.5 * self.height_px as f64 - f * c.y / depth,
            depth,
        ))
    }

    pub fn with_resolution(&self, width: usize, height: usize) -> Self {
        CameraView {
            width_px: width,
            height_px: height,
            ..*self
        }
    }
}

/// Wrap an angle into `[0, 360)`.
pub fn normalize_deg(angle: f64) -> f64 {
    let a = angle.rem_euclid(360.0);
    if a >= 360.0 {
        0.0
    } else {
        a
    }
}

/// Absolute circular difference between two headings, in `[0, 180]`.
pub fn circular_distance_deg(a: f64, b: f64) -> f64 {
    let d = normalize_deg(a - b);
    d.min(360.0 - d)
}

/// Signed shortest turn from `from` to `to`, in `(-180, 180]`.
pub fn signed_turn_deg(from: f64, to: f64) -> f64 {
    let d = normalize_deg(to - from);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Heading of a horizontal direction (0 = +Z, 90 = +X).
pub fn heading_deg(v: &Vector3<f64>) -> f64 {
    normalize_deg(v.x.atan2(v.z).to_degrees())
}

/// Unit horizontal direction for a heading.
pub fn heading_vector(yaw_deg: f64) -> Vector3<f64> {
    let r = yaw_deg.to_radians();
    Vector3::new(r.sin(), 0.0, r.cos())
}
