use nalgebra::{Point2, Point3};
use spaceblender::backends::synthetic::SyntheticScene;
use spaceblender::layout::{layout_submeshes, PlacedLayout};
use spaceblender::lift3d::{backproject, Submesh};
use spaceblender::prior::{build_geometric_prior, PriorMesh};
use spaceblender::trajectory::{
    blending_viewpoints, completion_trajectories, constrain_to_hull, StepPurpose, TrajectoryStep, HULL_MARGIN_M,
    LOOK_AROUND_YAWS, PITCH_JITTER_DEG,
};

fn scene_submesh(id: &str) -> Submesh {
    let scene = SyntheticScene::by_id(id).unwrap();
    let cam = scene.capture_camera(64, 64);
    let r = scene.render(&cam);
    Submesh {
        mesh: backproject(&r.color, &r.depth, Some(&r.labels), &cam).unwrap(),
        capture_camera: cam,
        aligned: true,
        floor_found: true,
        front_direction: -cam.forward(),
        source_id: id.into(),
        caption: None,
    }
}

fn four_rooms(d: f64) -> (PlacedLayout, PriorMesh) {
    let subs: Vec<Submesh> = ["furnished-room", "lounge-room", "study-room", "box-room"]
        .iter()
        .map(|id| scene_submesh(id))
        .collect();
    let layout = layout_submeshes(&subs, d).unwrap();
    let prior = build_geometric_prior(&layout, &subs).unwrap();
    (layout, prior)
}

fn planned_steps(layout: &PlacedLayout, prior: &PriorMesh, seed: u64) -> Vec<TrajectoryStep> {
    let mut steps = blending_viewpoints(layout).unwrap();
    steps.extend(completion_trajectories(layout, seed));
    constrain_to_hull(&mut steps, prior, HULL_MARGIN_M);
    steps
}

#[test]
fn every_camera_keeps_the_hull_margin() {
    for d in [3.0, 6.0, 10.0] {
        let (layout, prior) = four_rooms(d);
        for seed in 0..5 {
            for step in planned_steps(&layout, &prior, seed) {
                let p = step.cam.position();
                let clearance = prior.wall_clearance(p.x, p.z);
                assert!(clearance >= HULL_MARGIN_M - 1e-9, "d={d} seed={seed}: clearance {clearance} at {p:?}");
            }
        }
    }
}

#[test]
fn look_around_pitch_stays_within_jitter() {
    let (layout, _) = four_rooms(6.0);
    let mut worst = 0.0f64;
    for seed in 0..10_000 {
        for step in completion_trajectories(&layout, seed) {
            if step.purpose == StepPurpose::LookAround {
                worst = worst.max(step.cam.pitch_deg().abs());
            }
        }
    }
    assert!(worst <= PITCH_JITTER_DEG + 1e-9, "pitch reached {worst}°");
    assert!(worst > PITCH_JITTER_DEG * 0.9, "jitter never came near its bound: {worst}°");
}

/// Points on the prior's walls between 0.5 m and 2 m, every 5 cm.
fn wall_band(prior: &PriorMesh) -> Vec<Point3<f64>> {
    let hull: &[Point2<f64>] = &prior.hull_polygon;
    let mut points = Vec::new();
    for (i, a) in hull.iter().enumerate() {
        let b = hull[(i + 1) % hull.len()];
        let steps = ((b - a).norm() / 0.05).ceil() as usize;
        for s in 0..steps {
            let p = a + (b - a) * (s as f64 / steps as f64);
            for h in 0..=30 {
                points.push(Point3::new(p.x, 0.5 + 0.05 * h as f64, p.y));
            }
        }
    }
    points
}

#[test]
fn look_around_covers_the_wall_band() {
    for d in [3.0, 6.0, 10.0] {
        let (layout, prior) = four_rooms(d);
        let cams: Vec<_> = planned_steps(&layout, &prior, 3)
            .into_iter()
            .filter(|s| s.purpose == StepPurpose::LookAround)
            .map(|s| s.cam)
            .collect();
        assert_eq!(cams.len(), 4 * LOOK_AROUND_YAWS);
        let band = wall_band(&prior);
        // The prior is convex and the cameras are inside it, so nothing
        // occludes a wall point that projects into a frame.
        let seen = band
            .iter()
            .filter(|p| {
                cams.iter().any(|c| {
                    c.project(p).is_some_and(|(x, y, _)| {
                        (0.0..c.width_px as f64).contains(&x) && (0.0..c.height_px as f64).contains(&y)
                    })
                })
            })
            .count();
        let coverage = seen as f64 / band.len() as f64;
        assert!(coverage >= 0.95, "d={d}: wall band coverage {coverage:.3}");
    }
}

#[test]
fn trajectories_depend_only_on_the_seed() {
    let (layout, _) = four_rooms(6.0);
    assert_eq!(completion_trajectories(&layout, 11), completion_trajectories(&layout, 11));
    assert_ne!(completion_trajectories(&layout, 11), completion_trajectories(&layout, 12));
}
