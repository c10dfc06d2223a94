//! Deterministic z-buffered rasterizer.
//!
//! Produces the color/depth/missing triplet every inpainting iteration starts
//! from. There is no antialiasing: a pixel is either covered by the nearest
//! surface through its center or marked missing. Triangles are two-sided.

use nalgebra::Point3;

use crate::geometry::{CameraView, Label, Rgb, TriangleMesh};
use crate::grid::{ColorImage, DepthImage, Grid, LabelImage, MaskImage, MISSING_DEPTH};

/// Surfaces closer than this to the camera plane are clipped away.
pub const NEAR_PLANE: f64 = 1e-3;

/// Barycentric slack when testing pixel centers. Keeps pixels that sit
/// exactly on a shared vertex or edge from falling through both triangles.
const INSIDE_EPS: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub color: ColorImage,
    pub depth: DepthImage,
    /// `true` where no geometry covers the pixel center.
    pub missing: MaskImage,
    /// Label of the nearest corner of the visible triangle, when the mesh is
    /// labelled.
    pub labels: Option<LabelImage>,
}

impl RenderedView {
    pub fn missing_fraction(&self) -> f64 {
        self.missing.fraction()
    }
}

#[derive(Clone, Copy)]
struct Corner {
    /// Camera-space position.
    cam: [f64; 3],
    color: Rgb,
    label: Label,
}

struct Target {
    width: usize,
    height: usize,
    focal: f64,
    cx: f64,
    cy: f64,
    zbuf: Vec<f64>,
    color: Vec<Rgb>,
    labels: Vec<Label>,
}

impl Target {
    fn project(&self, c: &[f64; 3]) -> [f64; 3] {
        let depth = -c[2];
        [
            self.cx + self.focal * c[0] / depth,
            self.cy - self.focal * c[1] / depth,
            1.0 / depth,
        ]
    }

    /// Edge function that flips sign exactly when `a` and `b` are swapped.
    #[inline]
    fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
        (a[0] - p[0]) * (b[1] - p[1]) - (a[1] - p[1]) * (b[0] - p[0])
    }

    fn raster(&mut self, s: [[f64; 3]; 3], corners: [&Corner; 3]) {
        let area = Self::edge([s[0][0], s[0][1]], [s[1][0], s[1][1]], [s[2][0], s[2][1]]);
        if !area.is_finite() || area.abs() < 1e-14 {
            return;
        }
        let min_x = s[0][0].min(s[1][0]).min(s[2][0]);
        let max_x = s[0][0].max(s[1][0]).max(s[2][0]);
        let min_y = s[0][1].min(s[1][1]).min(s[2][1]);
        let max_y = s[0][1].max(s[1][1]).max(s[2][1]);
        // Pixel centers sit at integer + 0.5.
        let pad = 1e-6;
        let x0 = ((min_x - 0.5 - pad).ceil().max(0.0)) as i64;
        let x1 = ((max_x - 0.5 + pad).floor()).min(self.width as f64 - 1.0) as i64;
        let y0 = ((min_y - 0.5 - pad).ceil().max(0.0)) as i64;
        let y1 = ((max_y - 0.5 + pad).floor()).min(self.height as f64 - 1.0) as i64;
        if x0 > x1 || y0 > y1 {
            return;
        }
        let inv_area = 1.0 / area;
        let (a, b, c) = ([s[0][0], s[0][1]], [s[1][0], s[1][1]], [s[2][0], s[2][1]]);
        for py in y0..=y1 {
            let fy = py as f64 + 0.5;
            let row = py as usize * self.width;
            for px in x0..=x1 {
                let p = [px as f64 + 0.5, fy];
                let b0 = Self::edge(b, c, p) * inv_area;
                let b1 = Self::edge(c, a, p) * inv_area;
                let b2 = Self::edge(a, b, p) * inv_area;
                if b0 < -INSIDE_EPS || b1 < -INSIDE_EPS || b2 < -INSIDE_EPS {
                    continue;
                }
                let w = [b0 * s[0][2], b1 * s[1][2], b2 * s[2][2]];
                let inv_depth = w[0] + w[1] + w[2];
                if inv_depth <= 0.0 {
                    continue;
                }
                let depth = 1.0 / inv_depth;
                let i = row + px as usize;
                if depth < NEAR_PLANE || depth >= self.zbuf[i] {
                    continue;
                }
                self.zbuf[i] = depth;
                let mut rgb = [0f32; 3];
                for (k, ch) in rgb.iter_mut().enumerate() {
                    let v = w[0] * corners[0].color[k] as f64
                        + w[1] * corners[1].color[k] as f64
                        + w[2] * corners[2].color[k] as f64;
                    *ch = (v * depth) as f32;
                }
                self.color[i] = rgb;
                let nearest = if w[0] >= w[1] && w[0] >= w[2] {
                    0
                } else if w[1] >= w[2] {
                    1
                } else {
                    2
                };
                self.labels[i] = corners[nearest].label;
            }
        }
    }

    fn triangle(&mut self, corners: [&Corner; 3], projected: [Option<[f64; 3]>; 3]) {
        if let [Some(a), Some(b), Some(c)] = projected {
            self.raster([a, b, c], corners);
            return;
        }
        if corners.iter().all(|c| -c.cam[2] < NEAR_PLANE) {
            return;
        }
        let clipped = clip_near(corners);
        for k in 1..clipped.len().saturating_sub(1) {
            let tri = [&clipped[0], &clipped[k], &clipped[k + 1]];
            let s = [
                self.project(&tri[0].cam),
                self.project(&tri[1].cam),
                self.project(&tri[2].cam),
            ];
            self.raster(s, tri);
        }
    }
}

/// Sutherland–Hodgman against the plane `depth = NEAR_PLANE`.
fn clip_near(corners: [&Corner; 3]) -> Vec<Corner> {
    let inside = |c: &Corner| -c.cam[2] >= NEAR_PLANE;
    let mut out = Vec::with_capacity(4);
    for i in 0..3 {
        let cur = corners[i];
        let next = corners[(i + 1) % 3];
        if inside(cur) {
            out.push(*cur);
        }
        if inside(cur) != inside(next) {
            let dc = -cur.cam[2] - NEAR_PLANE;
            let dn = -next.cam[2] - NEAR_PLANE;
            let t = dc / (dc - dn);
            let lerp = |a: f64, b: f64| a + (b - a) * t;
            let color: Rgb = std::array::from_fn(|k| lerp(cur.color[k] as f64, next.color[k] as f64) as f32);
            out.push(Corner {
                cam: [
                    lerp(cur.cam[0], next.cam[0]),
                    lerp(cur.cam[1], next.cam[1]),
                    -NEAR_PLANE,
                ],
                color,
                label: if t < 0.5 { cur.label } else { next.label },
            });
        }
    }
    out
}

/// Rasterize `mesh` from `cam`.
pub fn render_view(mesh: &TriangleMesh, cam: &CameraView) -> RenderedView {
    let (width, height) = (cam.width_px, cam.height_px);
    let mut target = Target {
        width,
        height,
        focal: cam.focal_px(),
        cx: 0.5 * width as f64,
        cy: 0.5 * height as f64,
        zbuf: vec![MISSING_DEPTH; width * height],
        color: vec![[0.0; 3]; width * height],
        labels: vec![0; width * height],
    };

    let rt = cam.pose.rotation().transpose();
    let t = *cam.pose.translation();
    let labels = mesh.labels();
    let corners: Vec<Corner> = mesh
        .vertices()
        .iter()
        .enumerate()
        .map(|(i, v): (usize, &Point3<f64>)| {
            let c = rt * (v.coords - t);
            Corner {
                cam: [c.x, c.y, c.z],
                color: mesh.colors()[i],
                label: labels.map_or(0, |l| l[i]),
            }
        })
        .collect();
    let projected: Vec<Option<[f64; 3]>> = corners
        .iter()
        .map(|c| (-c.cam[2] >= NEAR_PLANE).then(|| target.project(&c.cam)))
        .collect();

    for f in mesh.faces() {
        let (i0, i1, i2) = (f[0] as usize, f[1] as usize, f[2] as usize);
        let p = [projected[i0], projected[i1], projected[i2]];
        // Cheap rejection when every corner is in front and off one side.
        if let [Some(a), Some(b), Some(c)] = p {
            let w = width as f64;
            let h = height as f64;
            if (a[0] < 0.0 && b[0] < 0.0 && c[0] < 0.0)
                || (a[0] > w && b[0] > w && c[0] > w)
                || (a[1] < 0.0 && b[1] < 0.0 && c[1] < 0.0)
                || (a[1] > h && b[1] > h && c[1] > h)
            {
                continue;
            }
        }
        target.triangle([&corners[i0], &corners[i1], &corners[i2]], p);
    }

    let depth = Grid::from_vec(width, height, target.zbuf).expect("shape");
    let missing = depth.missing_mask();
    RenderedView {
        color: Grid::from_vec(width, height, target.color).expect("shape"),
        depth,
        missing,
        labels: labels.map(|_| Grid::from_vec(width, height, target.labels).expect("shape")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use nalgebra::Vector3;

    fn cam(w: usize, h: usize) -> CameraView {
        CameraView::new(RigidTransform::identity(), 55.0, w, h).unwrap()
    }

    fn quad(z: f64, half: f64, color: Rgb) -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(-half, -half, z),
                Point3::new(half, -half, z),
                Point3::new(half, half, z),
                Point3::new(-half, half, z),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![color; 4],
            None,
        )
        .unwrap()
    }

    #[test]
    fn empty_mesh_is_all_missing() {
        let r = render_view(&TriangleMesh::default(), &cam(32, 24));
        assert!(r.missing.pixels().iter().all(|&m| m));
        assert!(r.labels.is_none());
    }

    #[test]
    fn frontal_quad_depth_is_exact() {
        let c = cam(64, 64);
        let r = render_view(&quad(-2.0, 0.5, [0.2, 0.4, 0.6]), &c);
        // Analytic footprint: |x_px - 32| < f * 0.5 / 2.
        let half_px = c.focal_px() * 0.25;
        let mut covered = 0;
        for y in 0..64 {
            for x in 0..64 {
                let (dx, dy) = (x as f64 + 0.5 - 32.0, y as f64 + 0.5 - 32.0);
                let inside = dx.abs() < half_px - 1e-6 && dy.abs() < half_px - 1e-6;
                let outside = dx.abs() > half_px + 1e-6 || dy.abs() > half_px + 1e-6;
                if inside {
                    covered += 1;
                    assert!((r.depth.get(x, y) - 2.0).abs() <= 1e-6);
                    assert_eq!(*r.color.get(x, y), [0.2, 0.4, 0.6]);
                }
                if outside {
                    assert!(*r.missing.get(x, y));
                }
            }
        }
        assert!(covered > 100);
    }

    #[test]
    fn nearer_quad_wins_regardless_of_order() {
        let c = cam(16, 16);
        let near = quad(-1.0, 0.2, [1.0, 0.0, 0.0]);
        let far = quad(-3.0, 3.0, [0.0, 0.0, 1.0]);
        let a = render_view(&crate::geometry::append_mesh(&near, &far).unwrap(), &c);
        let b = render_view(&crate::geometry::append_mesh(&far, &near).unwrap(), &c);
        assert_eq!(a, b);
        for i in 0..a.depth.len() {
            let d = a.depth.pixels()[i];
            assert!(!is_nan(d));
            if (d - 1.0).abs() < 1e-9 {
                assert_eq!(a.color.pixels()[i], [1.0, 0.0, 0.0]);
            } else {
                assert!((d - 3.0).abs() < 1e-9);
            }
        }
    }

    fn is_nan(d: f64) -> bool {
        d.is_nan()
    }

    #[test]
    fn exhaustive_overlap_depth_test() {
        // Two tilted quads crossing each other; every covered pixel must hold
        // the smaller of the two analytic depths.
        let c = cam(12, 12);
        let tilted = |z0: f64, slope: f64| {
            TriangleMesh::new(
                vec![
                    Point3::new(-2.0, -2.0, z0 - 2.0 * slope),
                    Point3::new(2.0, -2.0, z0 + 2.0 * slope),
                    Point3::new(2.0, 2.0, z0 + 2.0 * slope),
                    Point3::new(-2.0, 2.0, z0 - 2.0 * slope),
                ],
                vec![[0, 1, 2], [0, 2, 3]],
                vec![[0.5; 3]; 4],
                None,
            )
            .unwrap()
        };
        let a = tilted(-3.0, 0.3);
        let b = tilted(-3.0, -0.3);
        let r = render_view(&crate::geometry::append_mesh(&a, &b).unwrap(), &c);
        let ra = render_view(&a, &c);
        let rb = render_view(&b, &c);
        for i in 0..r.depth.len() {
            let expect = ra.depth.pixels()[i].min(rb.depth.pixels()[i]);
            assert_eq!(r.depth.pixels()[i], expect);
        }
    }

    #[test]
    fn clipping_behind_camera() {
        // A floor strip running from behind the camera to far in front.
        let floor = TriangleMesh::new(
            vec![
                Point3::new(-1.0, -1.0, 2.0),
                Point3::new(1.0, -1.0, 2.0),
                Point3::new(1.0, -1.0, -10.0),
                Point3::new(-1.0, -1.0, -10.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
            vec![[0.3; 3]; 4],
            None,
        )
        .unwrap();
        let c = cam(32, 32);
        let r = render_view(&floor, &c);
        // Bottom-center pixel sees the floor at depth = 1 / tan(angle below axis).
        let (x, y) = (16, 31);
        let ray = c.pixel_ray_camera(x, y);
        let expected = 1.0 / -ray.y;
        assert!((r.depth.get(x, y) - expected).abs() < 1e-9);
        // The top half looks above the horizon.
        assert!(*r.missing.get(16, 2));
    }

    #[test]
    fn rendering_is_deterministic() {
        let c = CameraView::looking(Point3::new(0.1, 0.2, 1.0), 190.0, 5.0, 40, 30);
        let m = quad(-2.0, 1.0, [0.1, 0.9, 0.4]);
        let moved = crate::geometry::apply_rigid_transform(
            &m,
            &RigidTransform::from_translation(Vector3::new(0.0, 0.0, 0.3)),
        );
        assert_eq!(render_view(&moved, &c), render_view(&moved, &c));
    }
}
