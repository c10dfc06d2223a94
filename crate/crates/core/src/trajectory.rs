//! Camera sequences for blending and mesh completion.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{heading_deg, normalize_deg, signed_turn_deg, CameraView, RigidTransform};
use crate::layout::PlacedLayout;
use crate::prior::PriorMesh;

pub const EYE_HEIGHT_M: f64 = 1.5;
pub const WIDE_WIDTH: usize = 1280;
pub const FRAME_SIZE: usize = 512;
/// Pitch sweep of the floor pass; the ceiling pass mirrors it.
pub const FLOOR_PITCH_RANGE_DEG: (f64, f64) = (-20.0, -75.0);
pub const SWEEP_STEPS: usize = 6;
pub const SWEEP_YAWS: usize = 8;
pub const PATH_STEPS: usize = 5;
pub const LOOK_AROUND_YAWS: usize = 8;
pub const YAW_JITTER_DEG: f64 = 10.0;
pub const PITCH_JITTER_DEG: f64 = 5.0;
/// Minimum distance between any planned camera and the prior's walls.
pub const HULL_MARGIN_M: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepPurpose {
    Blend,
    Floor,
    Ceiling,
    SubmeshPath,
    LookAround,
    FloorGeneration,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub cam: CameraView,
    pub purpose: StepPurpose,
    /// Yaw whose region prompt this step should use.
    pub prompt_hint: Option<f64>,
}

impl TrajectoryStep {
    fn new(position: Point3<f64>, yaw: f64, pitch: f64, purpose: StepPurpose) -> Self {
        let width = if purpose == StepPurpose::Blend { WIDE_WIDTH } else { FRAME_SIZE };
        TrajectoryStep {
            cam: CameraView::looking(position, normalize_deg(yaw), pitch, width, FRAME_SIZE),
            purpose,
            prompt_hint: None,
        }
    }
}

fn center_eye() -> Point3<f64> {
    Point3::new(0.0, EYE_HEIGHT_M, 0.0)
}

/// One wide frame per pair of neighboring occupied yaws, looking from the
/// circle center at the pair's midpoint.
pub fn blending_viewpoints(layout: &PlacedLayout) -> Result<Vec<TrajectoryStep>> {
    let yaws = layout.occupied_yaws();
    if yaws.len() < 2 {
        return Err(Error::invalid(format!(
            "blending needs two occupied yaws, layout has {}",
            yaws.len()
        )));
    }
    let mut mids: Vec<f64> = (0..yaws.len())
        .map(|i| {
            let a = yaws[i];
            let b = yaws[(i + 1) % yaws.len()];
            normalize_deg(a + normalize_deg(b - a) / 2.0)
        })
        .collect();
    mids.sort_by(f64::total_cmp);
    Ok(mids
        .into_iter()
        .map(|yaw| TrajectoryStep {
            prompt_hint: Some(yaw),
            ..TrajectoryStep::new(center_eye(), yaw, 0.0, StepPurpose::Blend)
        })
        .collect())
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Floor and ceiling sweeps, per-submesh paths and the look-around pass, in
/// that order.
pub fn completion_trajectories(layout: &PlacedLayout, seed: u64) -> Vec<TrajectoryStep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut steps = Vec::new();

    for (purpose, sign) in [(StepPurpose::Floor, 1.0), (StepPurpose::Ceiling, -1.0)] {
        for k in 0..SWEEP_YAWS {
            let yaw = 360.0 * k as f64 / SWEEP_YAWS as f64;
            for s in 0..SWEEP_STEPS {
                let t = s as f64 / (SWEEP_STEPS - 1) as f64;
                let pitch = sign * lerp(FLOOR_PITCH_RANGE_DEG.0, FLOOR_PITCH_RANGE_DEG.1, t);
                steps.push(TrajectoryStep::new(center_eye(), yaw, pitch, purpose));
            }
        }
    }

    let yaws = layout.occupied_yaws();
    let centers: Vec<Point3<f64>> = yaws
        .iter()
        .map(|&y| {
            let p = layout.circle_point(y);
            Point3::new(p.x, EYE_HEIGHT_M, p.z)
        })
        .collect();
    let n = yaws.len();
    for i in 0..n {
        let start_yaw = yaws[i];
        let end_yaw = if n < 2 {
            start_yaw + if rng.gen_bool(0.5) { 90.0 } else { -90.0 }
        } else {
            let j = if rng.gen_bool(0.5) { (i + 1) % n } else { (i + n - 1) % n };
            heading_deg(&(centers[j] - centers[i]))
        };
        let turn = signed_turn_deg(start_yaw, end_yaw);
        for s in 0..PATH_STEPS {
            let t = s as f64 / (PATH_STEPS - 1) as f64;
            let pos = center_eye() + (centers[i] - center_eye()) * t;
            steps.push(TrajectoryStep::new(pos, start_yaw + turn * t, 0.0, StepPurpose::SubmeshPath));
        }
    }

    for center in &centers {
        for k in 0..LOOK_AROUND_YAWS {
            let nominal = 360.0 * k as f64 / LOOK_AROUND_YAWS as f64;
            let yaw = nominal + rng.gen_range(-YAW_JITTER_DEG..=YAW_JITTER_DEG);
            let pitch = rng.gen_range(-PITCH_JITTER_DEG..=PITCH_JITTER_DEG);
            steps.push(TrajectoryStep::new(*center, yaw, pitch, StepPurpose::LookAround));
        }
    }
    steps
}

/// Pull every camera toward the circle center until it is at least
/// `margin` inside the prior's hull. Cameras that cannot be brought inside
/// are left at the center.
pub fn constrain_to_hull(steps: &mut [TrajectoryStep], prior: &PriorMesh, margin: f64) {
    for step in steps {
        let p = step.cam.position();
        if prior.wall_clearance(p.x, p.z) >= margin {
            continue;
        }
        // Clearance is concave along the segment, so bisect for the largest
        // admissible fraction of the way out.
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..50 {
            let mid = (lo + hi) / 2.0;
            if prior.wall_clearance(p.x * mid, p.z * mid) >= margin {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let moved = Point3::new(p.x * lo, p.y, p.z * lo);
        step.cam.pose = RigidTransform::new(*step.cam.pose.rotation(), moved.coords)
            .expect("rotation taken from a valid pose");
    }
}

/// Steps as pretty JSON: pose, resolution and purpose in order.
pub fn trajectory_to_json(steps: &[TrajectoryStep]) -> Result<String> {
    Ok(serde_json::to_string_pretty(steps)?)
}

pub fn trajectory_from_json(text: &str) -> Result<Vec<TrajectoryStep>> {
    Ok(serde_json::from_str(text)?)
}
