//! Floor detection and alignment, with floor synthesis for submeshes that
//! show none.

use nalgebra::{Matrix3, Point3, Rotation3, SymmetricEigen, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::backends::{label_mask, BackendSet, InpaintRequest, KnownDepth};
use crate::error::{Result, StageContext};
use crate::geometry::{CameraView, Label, RigidTransform};
use crate::lift3d::{fuse_into, FuseInput, Submesh};
use crate::palette::FLOOR_LIKE;
use crate::prompts::infer_floor_prompt;
use crate::render::render_view;

/// Floor-like vertices farther than this from their median height are
/// ignored.
pub const MEDIAN_BAND_M: f64 = 0.3;
pub const RANSAC_ITERATIONS: usize = 1000;
pub const INLIER_DISTANCE_M: f64 = 0.02;
/// Largest admissible angle between a floor normal and +Y.
pub const MAX_TILT_DEG: f64 = 45.0;
/// Smallest admissible inlier extent along X and along Z.
pub const MIN_EXTENT_M: f64 = 0.5;
/// Floor generation gives up after this many attempts.
pub const FLOOR_ATTEMPTS: usize = 10;
pub const FLOOR_STEPS: usize = 5;

/// Plane `normal · x = offset`, oriented toward the viewpoint it was seen from.
#[derive(Clone, Debug, PartialEq)]
pub struct FloorPlane {
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Indices into the point set the plane was fitted to.
    pub inlier_indices: Vec<u32>,
    /// Axis-aligned inlier extent along X and Z, meters.
    pub inlier_extent_xz: (f64, f64),
    pub centroid: Point3<f64>,
}

/// Floor candidates of a submesh.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FloorPoints {
    /// Vertex indices into the submesh mesh.
    pub vertex_indices: Vec<u32>,
    pub points: Vec<Point3<f64>>,
}

impl FloorPoints {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}

/// Vertices labelled floor-like that lie within 0.3 m of the median height of
/// all floor-like vertices.
pub fn extract_floor_vertices(sub: &Submesh, floor_like: &[Label]) -> FloorPoints {
    let Some(labels) = sub.mesh.labels() else {
        return FloorPoints::default();
    };
    let candidates: Vec<u32> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| floor_like.contains(l))
        .map(|(i, _)| i as u32)
        .collect();
    if candidates.is_empty() {
        return FloorPoints::default();
    }
    let vertices = sub.mesh.vertices();
    let mut ys: Vec<f64> = candidates.iter().map(|&i| vertices[i as usize].y).collect();
    let mid = ys.len() / 2;
    let (_, &mut median, _) = ys.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if candidates.len().is_multiple_of(2) {
        let lower = ys[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + median)
    } else {
        median
    };
    let mut out = FloorPoints::default();
    for i in candidates {
        let p = vertices[i as usize];
        if (p.y - median).abs() <= MEDIAN_BAND_M {
            out.vertex_indices.push(i);
            out.points.push(p);
        }
    }
    out
}

struct Score {
    count: usize,
    extent: (f64, f64),
}

fn score(points: &[Point3<f64>], normal: &Vector3<f64>, offset: f64) -> Score {
    let mut count = 0;
    let (mut x0, mut x1, mut z0, mut z1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for p in points {
        if (normal.dot(&p.coords) - offset).abs() <= INLIER_DISTANCE_M {
            count += 1;
            x0 = x0.min(p.x);
            x1 = x1.max(p.x);
            z0 = z0.min(p.z);
            z1 = z1.max(p.z);
        }
    }
    let extent = if count == 0 { (0.0, 0.0) } else { (x1 - x0, z1 - z0) };
    Score { count, extent }
}

/// Whether an oriented unit normal passes the tilt and upward tests.
pub fn normal_admissible(normal: &Vector3<f64>) -> bool {
    normal.y > 0.0 && normal.y >= MAX_TILT_DEG.to_radians().cos()
}

fn extent_admissible(extent: (f64, f64)) -> bool {
    extent.0 >= MIN_EXTENT_M && extent.1 >= MIN_EXTENT_M
}

/// Unit normal through three points, oriented so `viewpoint` is on its
/// positive side.
fn oriented_plane(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, viewpoint: &Point3<f64>) -> Option<(Vector3<f64>, f64)> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len < 1e-12 {
        return None;
    }
    let mut n = n / len;
    if n.dot(&(viewpoint - a)) < 0.0 {
        n = -n;
    }
    Some((n, n.dot(&a.coords)))
}

fn plane_from(points: &[Point3<f64>], normal: Vector3<f64>, offset: f64) -> FloorPlane {
    let inliers: Vec<u32> = points
        .iter()
        .enumerate()
        .filter(|(_, p)| (normal.dot(&p.coords) - offset).abs() <= INLIER_DISTANCE_M)
        .map(|(i, _)| i as u32)
        .collect();
    let centroid = inliers
        .iter()
        .fold(Vector3::zeros(), |acc, &i| acc + points[i as usize].coords)
        / inliers.len().max(1) as f64;
    FloorPlane {
        normal,
        offset,
        inlier_extent_xz: score(points, &normal, offset).extent,
        inlier_indices: inliers,
        centroid: Point3::from(centroid),
    }
}

/// Evaluate the plane through three points as a floor hypothesis. Returns it
/// only if it passes all three admissibility tests.
pub fn evaluate_hypothesis(points: &[Point3<f64>], sample: [usize; 3], viewpoint: &Point3<f64>) -> Option<FloorPlane> {
    let (n, d) = oriented_plane(&points[sample[0]], &points[sample[1]], &points[sample[2]], viewpoint)?;
    if !normal_admissible(&n) || !extent_admissible(score(points, &n, d).extent) {
        return None;
    }
    Some(plane_from(points, n, d))
}

/// Least-squares plane through the inliers, oriented toward `viewpoint`.
fn refine(points: &[Point3<f64>], inliers: &[u32], viewpoint: &Point3<f64>) -> Option<(Vector3<f64>, f64)> {
    if inliers.len() < 3 {
        return None;
    }
    let n = inliers.len() as f64;
    let c = inliers.iter().fold(Vector3::zeros(), |a, &i| a + points[i as usize].coords) / n;
    let mut cov = Matrix3::zeros();
    for &i in inliers {
        let d = points[i as usize].coords - c;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let k = eig.eigenvalues.imin();
    let mut normal: Vector3<f64> = eig.eigenvectors.column(k).into_owned().normalize();
    if normal.dot(&(viewpoint.coords - c)) < 0.0 {
        normal = -normal;
    }
    Some((normal, normal.dot(&c)))
}

/// RANSAC floor fit, with normals oriented toward the origin.
pub fn fit_floor_plane(points: &[Point3<f64>], rng_seed: u64) -> Option<FloorPlane> {
    fit_floor_plane_from(points, rng_seed, &Point3::origin())
}

/// RANSAC floor fit. Hypothesis normals are oriented toward `viewpoint`
/// (usually the capture camera), which is what gives the upward-normal test
/// its meaning: a ceiling seen from below faces down.
pub fn fit_floor_plane_from(points: &[Point3<f64>], rng_seed: u64, viewpoint: &Point3<f64>) -> Option<FloorPlane> {
    if points.len() < 3 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let n = points.len();
    let samples: Vec<[usize; 3]> = (0..RANSAC_ITERATIONS)
        .map(|_| {
            let a = rng.gen_range(0..n);
            let mut b = rng.gen_range(0..n - 1);
            if b >= a {
                b += 1;
            }
            let mut c = rng.gen_range(0..n - 2);
            for m in [a.min(b), a.max(b)] {
                if c >= m {
                    c += 1;
                }
            }
            [a, b, c]
        })
        .collect();

    // Hypotheses are scored in parallel; the winner is the one with the most
    // inliers, ties going to the earliest sample, so the result does not
    // depend on scheduling.
    let best = samples
        .par_iter()
        .enumerate()
        .filter_map(|(k, s)| {
            let (normal, offset) = oriented_plane(&points[s[0]], &points[s[1]], &points[s[2]], viewpoint)?;
            if !normal_admissible(&normal) {
                return None;
            }
            let sc = score(points, &normal, offset);
            extent_admissible(sc.extent).then_some((sc.count, k, normal, offset))
        })
        .reduce_with(|a, b| if (b.0, std::cmp::Reverse(b.1)) > (a.0, std::cmp::Reverse(a.1)) { b } else { a })?;

    let (_, _, normal, offset) = best;
    let hypothesis = plane_from(points, normal, offset);
    if let Some((rn, ro)) = refine(points, &hypothesis.inlier_indices, viewpoint) {
        let refined = plane_from(points, rn, ro);
        if normal_admissible(&rn)
            && extent_admissible(refined.inlier_extent_xz)
            && refined.inlier_indices.len() >= hypothesis.inlier_indices.len() / 2
        {
            return Some(refined);
        }
    }
    Some(hypothesis)
}

/// Extract floor candidates and fit a plane seen from the capture camera.
pub fn find_floor(sub: &Submesh, rng_seed: u64, floor_like: &[Label]) -> Option<FloorPlane> {
    let pts = extract_floor_vertices(sub, floor_like);
    fit_floor_plane_from(&pts.points, rng_seed, &sub.capture_camera.position())
}

/// Rotate the plane normal onto +Y, move the inlier centroid to `y = 0` and
/// the smallest vertex Z to `z = 0`.
pub fn align_submesh_to_floor(sub: &Submesh, plane: &FloorPlane) -> (Submesh, RigidTransform) {
    let rotation = RigidTransform::rotation_between(&plane.normal, &Vector3::y());
    let c = rotation.apply_point(&plane.centroid);
    let min_z = sub
        .mesh
        .vertices()
        .iter()
        .map(|v| rotation.apply_point(v).z)
        .fold(f64::INFINITY, f64::min);
    let min_z = if min_z.is_finite() { min_z } else { 0.0 };
    let t = RigidTransform::from_translation(Vector3::new(0.0, -c.y, -min_z)).compose(&rotation);
    let mut out = sub.transformed(&t);
    out.aligned = true;
    out.floor_found = true;
    (out, t)
}

/// Camera for step `k` of the floor-generation trajectory: pitched down,
/// pulled back and raised relative to the capture camera.
pub fn floor_generation_camera(capture: &CameraView, k: usize) -> CameraView {
    let (pitch, back, up) = floor_step_parameters(k);
    let local = RigidTransform::from_parts(
        Rotation3::from_axis_angle(&Vector3::x_axis(), pitch.to_radians()),
        Vector3::new(0.0, up, back),
    );
    CameraView {
        pose: capture.pose.compose(&local),
        ..*capture
    }
    .with_resolution(crate::ingest::PREPARED_SIZE, crate::ingest::PREPARED_SIZE)
}

/// `(pitch_deg, backward_m, upward_m)` for step `k` of five.
pub fn floor_step_parameters(k: usize) -> (f64, f64, f64) {
    let t = k as f64 / (FLOOR_STEPS - 1) as f64;
    (-5.0 - 25.0 * t, 1.0 + 0.5 * t, 0.3 + 0.7 * t)
}

/// Inpaint a floor under a submesh that shows none, then align to it.
///
/// Each attempt renders the submesh from the next floor-generation camera,
/// inpaints the missing pixels with an LLM floor description, labels and
/// completes the depth of the new pixels, fuses them and retries the floor
/// fit. After ten failures the submesh comes back unaligned (but with the
/// generated geometry kept).
pub fn generate_floor(sub: &Submesh, backends: &BackendSet, rng_seed: u64, floor_like: &[Label]) -> Result<Submesh> {
    let caption = sub.caption.clone().unwrap_or_else(|| "indoor room space".into());
    let prompt = infer_floor_prompt(&caption, backends.llm.as_ref()).stage("floor generation: prompt")?;
    let mut work = sub.clone();
    if work.mesh.labels.is_none() {
        work.mesh.labels = Some(vec![0; work.mesh.vertex_count()]);
    }
    for attempt in 0..FLOOR_ATTEMPTS {
        let cam = floor_generation_camera(&sub.capture_camera, attempt % FLOOR_STEPS);
        let view = render_view(&work.mesh, &cam);
        if view.missing.count() > 0 {
            let stage = format!("floor generation attempt {}", attempt + 1);
            let mut req = InpaintRequest::new(view.color.clone(), view.missing.clone(), prompt.clone(), rng_seed + attempt as u64);
            req.view = Some(cam);
            let painted = backends.checked_inpaint(&req).stage(&stage)?;
            let labels = backends.checked_segment(&painted).stage(&stage)?;
            let known = view.missing.map(|m| !m);
            let depth = backends
                .checked_depth(&painted, Some(KnownDepth { depth: &view.depth, mask: &known }))
                .stage(&stage)?;
            fuse_into(
                &mut work.mesh,
                &cam,
                &FuseInput {
                    color: &painted,
                    depth: &depth,
                    mask: &view.missing,
                    labels: Some(&labels),
                    rendered_depth: Some(&view.depth),
                },
            )
            .stage(&stage)?;
            log::debug!(
                "{stage}: {} new floor-like pixels",
                label_mask(&labels, floor_like).pixels().iter().zip(view.missing.pixels()).filter(|(a, b)| **a && **b).count()
            );
        }
        if let Some(plane) = find_floor(&work, rng_seed, floor_like) {
            log::info!("floor found for {} on attempt {}", sub.source_id, attempt + 1);
            return Ok(align_submesh_to_floor(&work, &plane).0);
        }
    }
    log::warn!("no floor for {} after {FLOOR_ATTEMPTS} attempts; leaving it unaligned", sub.source_id);
    work.aligned = false;
    work.floor_found = false;
    Ok(work)
}

/// Align a submesh to its floor, generating one if none is visible. The
/// floor-like label set defaults to floor and rug.
pub fn align_or_generate(sub: &Submesh, backends: &BackendSet, rng_seed: u64, floor_like: Option<&[Label]>) -> Result<Submesh> {
    let floor_like = floor_like.unwrap_or(&FLOOR_LIKE);
    if let Some(plane) = find_floor(sub, rng_seed, floor_like) {
        return Ok(align_submesh_to_floor(sub, &plane).0);
    }
    generate_floor(sub, backends, rng_seed, floor_like)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::TriangleMesh;
    use crate::palette::{FLOOR, WALL};

    fn grid(nx: usize, nz: usize, size: (f64, f64), y: impl Fn(f64, f64) -> f64) -> Vec<Point3<f64>> {
        let mut pts = Vec::new();
        for i in 0..nx {
            for j in 0..nz {
                let x = size.0 * (i as f64 / (nx - 1) as f64 - 0.5);
                let z = size.1 * (j as f64 / (nz - 1) as f64 - 0.5);
                pts.push(Point3::new(x, y(x, z), z));
            }
        }
        pts
    }

    fn submesh(points: Vec<Point3<f64>>, labels: Vec<Label>) -> Submesh {
        let n = points.len();
        Submesh {
            mesh: TriangleMesh::new(points, vec![], vec![[0.5; 3]; n], Some(labels)).unwrap(),
            capture_camera: CameraView::looking(Point3::new(0.0, 1.5, 2.0), 180.0, -10.0, 64, 64),
            aligned: false,
            floor_found: false,
            front_direction: Vector3::z(),
            source_id: "t".into(),
            caption: None,
        }
    }

    #[test]
    fn median_band_drops_far_clusters() {
        let mut pts = grid(10, 10, (2.0, 2.0), |_, _| 0.0);
        let floor = pts.len();
        pts.extend(grid(3, 3, (0.5, 0.5), |_, _| 1.0));
        let n = pts.len();
        let sub = submesh(pts, vec![FLOOR; n]);
        let got = extract_floor_vertices(&sub, &FLOOR_LIKE);
        assert_eq!(got.len(), floor);
        assert!(got.points.iter().all(|p| p.y == 0.0));

        let raised = submesh(grid(5, 5, (1.0, 1.0), |_, _| 0.4), vec![FLOOR; 25]);
        assert_eq!(extract_floor_vertices(&raised, &FLOOR_LIKE).len(), 25);
        let walls = submesh(grid(5, 5, (1.0, 1.0), |_, _| 0.4), vec![WALL; 25]);
        assert!(extract_floor_vertices(&walls, &FLOOR_LIKE).is_empty());
    }

    #[test]
    fn steep_and_small_planes_are_rejected() {
        let steep = grid(20, 20, (2.0, 2.0), |_, z| z * 50f64.to_radians().tan());
        assert!(fit_floor_plane(&steep, 1).is_none());
        let small = grid(10, 10, (0.3, 0.3), |_, _| -1.0);
        assert!(fit_floor_plane(&small, 1).is_none());
        assert!(fit_floor_plane(&steep[..2], 1).is_none());
    }

    #[test]
    fn fit_is_deterministic() {
        let pts = grid(20, 20, (2.0, 2.0), |x, _| -1.0 + 0.1 * x);
        assert_eq!(fit_floor_plane(&pts, 5), fit_floor_plane(&pts, 5));
    }

    #[test]
    fn aligned_floor_needs_no_transform() {
        let pts = grid(10, 10, (2.0, 2.0), |_, _| 0.0)
            .into_iter()
            .map(|p| Point3::new(p.x, p.y, p.z + 1.0))
            .collect();
        let sub = submesh(pts, vec![FLOOR; 100]);
        let plane = find_floor(&sub, 0, &FLOOR_LIKE).unwrap();
        let (_, t) = align_submesh_to_floor(&sub, &plane);
        assert!((t.rotation() - Matrix3::identity()).norm() < 1e-12);
        assert!(t.translation().norm() < 1e-12);
    }

    #[test]
    fn raised_floor_is_translated_down() {
        let sub = submesh(grid(10, 10, (2.0, 2.0), |_, _| 0.5), vec![FLOOR; 100]);
        let plane = find_floor(&sub, 0, &FLOOR_LIKE).unwrap();
        let (out, t) = align_submesh_to_floor(&sub, &plane);
        assert!((t.rotation() - Matrix3::identity()).norm() < 1e-9);
        assert!((t.translation() - Vector3::new(0.0, -0.5, 1.0)).norm() < 1e-9);
        assert!(out.aligned && out.floor_found);
        assert!(out.mesh.vertices().iter().all(|v| v.y.abs() < 1e-9));
    }

    #[test]
    fn floor_steps_interpolate_quoted_ranges() {
        for k in 0..5 {
            let (p, b, u) = floor_step_parameters(k);
            assert!((p - (-5.0 + k as f64 * (-25.0 / 4.0))).abs() < 1e-12);
            assert!((b - (1.0 + k as f64 * (0.5 / 4.0))).abs() < 1e-12);
            assert!((u - (0.3 + k as f64 * (0.7 / 4.0))).abs() < 1e-12);
        }
    }
}
