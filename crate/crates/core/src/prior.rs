//! Convex-hull room shell and the conditioning images rendered from it.

use nalgebra::{Point2, Point3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, Label, TriangleMesh};
use crate::grid::{ColorImage, DepthImage, Grid, LabelImage, MaskImage};
use crate::layout::PlacedLayout;
use crate::lift3d::Submesh;
use crate::palette::{self, CEILING, FLOOR, WALL};
use crate::prompts::RoomSize;
use crate::render::render_view;

pub mod edges;

/// Prior height when no submesh is taller, meters.
pub const MIN_PRIOR_HEIGHT_M: f64 = 2.5;
/// Relative depth is depth divided by this percentile of the frame.
pub const DEPTH_PERCENTILE: f64 = 0.99;
/// Containment slack for points on the hull boundary, meters.
pub const HULL_TOLERANCE_M: f64 = 1e-6;

/// Room shell: walls on the hull edges, floor at `y = 0`, ceiling on top.
/// Vertex labels carry each face's role.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorMesh {
    pub mesh: TriangleMesh,
    pub height_m: f64,
    /// Counter-clockwise in the (x, z) plane, no collinear vertices.
    pub hull_polygon: Vec<Point2<f64>>,
}

fn cross(o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Monotone-chain convex hull, counter-clockwise, dropping points that lie
/// on an edge. `tolerance` is the area slack (in m²) below which three points
/// count as collinear.
pub fn convex_hull(points: &[Point2<f64>], tolerance: f64) -> Vec<Point2<f64>> {
    let mut pts: Vec<Point2<f64>> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2<f64>> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2<f64>>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= tolerance {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    // The chains never test their shared start point, which rounding can
    // place in the middle of an edge.
    let mut i = 0;
    while hull.len() > 3 && i < hull.len() {
        let n = hull.len();
        if cross(&hull[(i + n - 1) % n], &hull[i], &hull[(i + 1) % n]) <= tolerance {
            hull.remove(i);
            i = i.saturating_sub(1);
        } else {
            i += 1;
        }
    }
    hull
}

/// Signed area in the (x, z) plane; positive for counter-clockwise.
pub fn polygon_area(poly: &[Point2<f64>]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum::<f64>()
        / 2.0
}

/// Signed distance from `p` to the boundary of a convex CCW polygon;
/// positive inside.
pub fn inside_distance(poly: &[Point2<f64>], p: &Point2<f64>) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            cross(&a, &b, p) / (b - a).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

impl PriorMesh {
    pub fn contains_xz(&self, x: f64, z: f64) -> bool {
        inside_distance(&self.hull_polygon, &Point2::new(x, z)) >= -HULL_TOLERANCE_M
    }

    /// Distance from `(x, z)` to the nearest wall; negative outside.
    pub fn wall_clearance(&self, x: f64, z: f64) -> f64 {
        inside_distance(&self.hull_polygon, &Point2::new(x, z))
    }

    /// Axis-aligned footprint size and height, for prompts.
    pub fn room_size(&self) -> RoomSize {
        let (mut x0, mut x1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &self.hull_polygon {
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            z0 = z0.min(p.y);
            z1 = z1.max(p.y);
        }
        RoomSize {
            width: x1 - x0,
            height: self.height_m,
            length: z1 - z0,
        }
    }
}

/// Shell over the XZ hull of `points`, as tall as the tallest point but at
/// least 2.5 m.
pub fn build_prior_from_points(points: impl IntoIterator<Item = Point3<f64>>) -> Result<PriorMesh> {
    let mut footprint = Vec::new();
    let mut top = f64::NEG_INFINITY;
    for p in points {
        footprint.push(Point2::new(p.x, p.z));
        top = top.max(p.y);
    }
    let hull = convex_hull(&footprint, 1e-12);
    if hull.len() < 3 || polygon_area(&hull) < 1e-9 {
        return Err(Error::Degenerate(format!(
            "footprint of {} points has no area; cannot build a room shell",
            footprint.len()
        )));
    }
    let height = top.max(MIN_PRIOR_HEIGHT_M);
    Ok(PriorMesh {
        mesh: shell_mesh(&hull, height),
        height_m: height,
        hull_polygon: hull,
    })
}

/// Prior over the placed submeshes of a layout.
pub fn build_geometric_prior(layout: &PlacedLayout, subs: &[Submesh]) -> Result<PriorMesh> {
    if layout.placements.is_empty() {
        return Err(Error::invalid("prior needs a nonempty layout"));
    }
    build_prior_from_points(layout.placements.iter().flat_map(|p| {
        let t = p.transform;
        subs[p.submesh].mesh.vertices().iter().map(move |v| t.apply_point(v))
    }))
}

fn shell_mesh(hull: &[Point2<f64>], height: f64) -> TriangleMesh {
    let mut mesh = TriangleMesh::empty_labelled();
    let mut add = |corners: &[Point3<f64>], label: Label| {
        let color = palette::color(label);
        let base = corners
            .iter()
            .map(|c| mesh.push_vertex(*c, color, Some(label)))
            .collect::<Vec<_>>();
        for k in 1..base.len() - 1 {
            mesh.faces.push([base[0], base[k], base[k + 1]]);
        }
    };
    let n = hull.len();
    for i in 0..n {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        add(
            &[
                Point3::new(a.x, 0.0, a.y),
                Point3::new(b.x, 0.0, b.y),
                Point3::new(b.x, height, b.y),
                Point3::new(a.x, height, a.y),
            ],
            WALL,
        );
    }
    let floor: Vec<Point3<f64>> = hull.iter().map(|p| Point3::new(p.x, 0.0, p.y)).collect();
    add(&floor, FLOOR);
    let ceiling: Vec<Point3<f64>> = hull.iter().map(|p| Point3::new(p.x, height, p.y)).collect();
    add(&ceiling, CEILING);
    mesh
}

/// The three conditioning images plus the metric depth they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorImageSet {
    /// Relative depth in `[0, 1]`.
    pub depth: DepthImage,
    /// Metric depth of the shell, used for structural depth copying.
    pub metric_depth: DepthImage,
    pub layout_edges: MaskImage,
    /// Palette colors of the shell roles.
    pub semantic: ColorImage,
    pub labels: LabelImage,
}

impl PriorImageSet {
    /// Grayscale depth conditioning, near = bright.
    pub fn depth_conditioning(&self) -> ColorImage {
        self.depth.map(|&d| {
            let g = (1.0 - d.clamp(0.0, 1.0)) as f32;
            [g; 3]
        })
    }

    /// White junction lines on black.
    pub fn layout_conditioning(&self) -> ColorImage {
        self.layout_edges.to_color()
    }
}

/// Depth divided by its 99th percentile and clipped to `[0, 1]`; missing
/// pixels map to 1.
pub fn relative_depth(depth: &DepthImage) -> DepthImage {
    let mut finite: Vec<f64> = depth.pixels().iter().copied().filter(|d| d.is_finite()).collect();
    if finite.is_empty() {
        return depth.map(|_| 1.0);
    }
    let k = (((finite.len() - 1) as f64) * DEPTH_PERCENTILE).round() as usize;
    let (_, &mut p, _) = finite.select_nth_unstable_by(k, f64::total_cmp);
    depth.map(|&d| if d.is_finite() && p > 0.0 { (d / p).min(1.0) } else { 1.0 })
}

/// Render depth, layout edges and semantic colors of the prior from `cam`.
pub fn render_prior_images(prior: &PriorMesh, cam: &CameraView) -> Result<PriorImageSet> {
    let eye = cam.position();
    if !prior.contains_xz(eye.x, eye.z) {
        return Err(Error::CameraOutsideHull { x: eye.x, z: eye.z });
    }
    let view = render_view(&prior.mesh, cam);
    let labels = view.labels.expect("prior mesh is labelled");
    let depth = relative_depth(&view.depth);
    // Edges come from the unclipped depth; clipping would flatten the far
    // corners into a false plane.
    let layout_edges = edges::layout_edges(&view.depth, cam);
    let semantic = labels.map(|&l| palette::color(l));
    Ok(PriorImageSet {
        depth,
        metric_depth: view.depth,
        layout_edges,
        semantic,
        labels,
    })
}

/// Unit camera-space normals from a depth image, via 3×3 Sobel derivatives
/// of the backprojected point map.
pub fn normals_from_depth(depth: &DepthImage, cam: &CameraView) -> Grid<Vector3<f64>> {
    edges::normal_map(depth, cam)
}
