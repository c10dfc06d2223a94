use spaceblender::backends::synthetic::SyntheticScene;
use spaceblender::backends::BackendSet;
use spaceblender::blend::{
    blend_iteration, generate_intermediate_submesh, run_pipeline_on_images, BlendOptions, BlendState,
    IterationRecord,
};
use spaceblender::export::{read_ply, write_ply};
use spaceblender::layout::plan_intermediate_slots;
use spaceblender::palette::{CEILING, FLOOR, FLOOR_LIKE, STRUCTURAL, WALL};
use spaceblender::prior::render_prior_images;
use spaceblender::prompts::RegionPrompt;
use spaceblender::render::render_view;
use spaceblender::trajectory::{StepPurpose, TrajectoryStep};

fn input(id: &str) -> (String, spaceblender::grid::ColorImage) {
    let scene = SyntheticScene::by_id(id).unwrap();
    (id.to_string(), scene.render(&scene.capture_camera(512, 512)).color)
}

#[test]
fn single_image_run_fills_the_room() {
    let backends = BackendSet::synthetic();
    let mut records: Vec<(TrajectoryStep, IterationRecord)> = Vec::new();
    let mut observe = |s: &TrajectoryStep, r: &IterationRecord| records.push((s.clone(), r.clone()));
    let out = run_pipeline_on_images(
        &[input("furnished-room")],
        &BlendOptions { seed: 3, ..Default::default() },
        &backends,
        Some(&mut observe),
    )
    .unwrap();

    assert_eq!(out.intermediate_count, 3);
    assert_eq!(out.plan.layout.placements.len(), 4);
    assert!(out.plan.layout.intermediate_slots.is_empty());
    out.mesh.validate().unwrap();

    // The floor of every placed piece sits at y = 0.
    let labels = out.mesh.labels().unwrap();
    let floor_y: Vec<f64> = out
        .mesh
        .vertices()
        .iter()
        .zip(labels)
        .filter(|(_, &l)| l == FLOOR)
        .map(|(v, _)| v.y)
        .collect();
    let in_band = floor_y.iter().filter(|y| y.abs() <= 0.05).count() as f64 / floor_y.len() as f64;
    assert!(in_band >= 0.95, "floor band {in_band:.4}");

    // Structural pixels take the prior depth verbatim.
    assert!(!records.is_empty());
    for (_, r) in &records {
        for (i, &s) in r.structural.pixels().iter().enumerate() {
            if s {
                assert_eq!(r.fused_depth.pixels()[i], r.prior_images.metric_depth.pixels()[i]);
                assert!([WALL, FLOOR, CEILING].contains(&r.labels.pixels()[i]));
            }
        }
    }
    assert!(records.iter().any(|(s, _)| s.purpose == StepPurpose::Blend));

    // Seen from the completion cameras, the finished room's shell agrees
    // with the prior.
    let mut worst = 1.0f64;
    for step in out.plan.steps.iter().filter(|s| s.purpose != StepPurpose::Blend) {
        let cam = step.cam.with_resolution(128, 128);
        let view = render_view(&out.mesh, &cam);
        let prior = render_prior_images(&out.prior, &cam).unwrap();
        let labels = view.labels.unwrap();
        let (mut total, mut close) = (0usize, 0usize);
        for i in 0..labels.len() {
            if !view.missing.pixels()[i] && STRUCTURAL.contains(&labels.pixels()[i]) {
                total += 1;
                close += usize::from((view.depth.pixels()[i] - prior.metric_depth.pixels()[i]).abs() <= 0.05);
            }
        }
        if total > 0 {
            worst = worst.min(close as f64 / total as f64);
        }
    }
    assert!(worst >= 0.95, "worst structural agreement {worst:.3}");

    let mut bytes = Vec::new();
    write_ply(&out.mesh, &mut bytes).unwrap();
    let back = read_ply(bytes.as_slice()).unwrap();
    assert_eq!(back.vertices(), out.mesh.vertices());
    assert_eq!(back.faces(), out.mesh.faces());
    assert_eq!(back.labels(), out.mesh.labels());
}

#[test]
fn covered_view_is_a_no_op() {
    let backends = BackendSet::synthetic();
    let scene = SyntheticScene::by_id("box-room").unwrap();
    let cam = scene.capture_camera(64, 64);
    let r = scene.render(&cam);
    let mesh = spaceblender::lift3d::backproject(&r.color, &r.depth, Some(&r.labels), &cam).unwrap();
    let prior = spaceblender::prior::build_prior_from_points(mesh.vertices().iter().copied()).unwrap();
    let mut state = BlendState {
        mesh: mesh.clone(),
        prior,
        plan: spaceblender::blend::BlendPlan {
            layout: spaceblender::layout::PlacedLayout {
                placements: vec![],
                diameter_m: 6.0,
                intermediate_slots: vec![],
            },
            region_prompts: vec![RegionPrompt::new(0.0, "storage space with bare walls").unwrap()],
            steps: vec![],
        },
        iteration: 0,
        weights: Default::default(),
        seed: 0,
        debug_dir: None,
    };
    let step = TrajectoryStep { cam, purpose: StepPurpose::LookAround, prompt_hint: None };
    let before = state.mesh.vertex_count();
    assert!(blend_iteration(&mut state, &step, &backends).unwrap().is_none());
    assert_eq!(state.mesh.vertex_count(), before);
    assert_eq!(&state.mesh.vertices()[..before], mesh.vertices());
}

#[test]
fn intermediate_submesh_lands_on_the_floor() {
    let backends = BackendSet::synthetic();
    let prompts = vec![RegionPrompt::new(90.0, "study space with a bookshelf").unwrap()];
    for slot in plan_intermediate_slots(1, 6.0) {
        let sub = generate_intermediate_submesh(&slot, &prompts, &backends, 17, &FLOOR_LIKE).unwrap();
        assert!(sub.aligned);
        let labels = sub.mesh.labels().unwrap();
        let floor: Vec<f64> = sub
            .mesh
            .vertices()
            .iter()
            .zip(labels)
            .filter(|(_, &l)| l == FLOOR)
            .map(|(v, _)| v.y)
            .collect();
        assert!(!floor.is_empty());
        let near = floor.iter().filter(|y| y.abs() <= 0.02).count() as f64 / floor.len() as f64;
        assert!(near >= 0.95, "slot {}°: {near:.3} of floor within 2 cm", slot.yaw_deg);
    }
}
