//! Stage 2: grow one mesh by inpainting along camera trajectories, plus the
//! driver that runs both stages end to end.

use std::path::{Path, PathBuf};

use crate::backends::{BackendSet, Conditioning, ConditioningKind, InpaintRequest, KnownDepth};
use crate::config::{ConditioningWeights, PipelineConfig};
use crate::error::{Error, Result, StageContext};
use crate::floor_align::align_or_generate;
use crate::geometry::{circular_distance_deg, Label, RigidTransform, TriangleMesh};
use crate::grid::{ColorImage, DepthImage, LabelImage, MaskImage};
use crate::ingest::{input_camera, preprocess_input, remove_people, PreparedImage};
use crate::layout::{canonical_transform, layout_submeshes, place_submeshes, Placement, PlacedLayout, Slot};
use crate::lift3d::{align_depth, estimate_and_backproject, fuse_into, FuseInput, Submesh};
use crate::palette;
use crate::prior::{build_geometric_prior, render_prior_images, PriorImageSet, PriorMesh};
use crate::prompts::{caption_image, format_yaw, infer_region_prompts, select_prompt_for_view, select_prompt_for_yaw, RegionPrompt};
use crate::render::render_view;
use crate::trajectory::{blending_viewpoints, completion_trajectories, constrain_to_hull, TrajectoryStep, HULL_MARGIN_M};

/// Stage-1 results Stage 2 runs on.
#[derive(Clone, Debug)]
pub struct BlendPlan {
    pub layout: PlacedLayout,
    pub region_prompts: Vec<RegionPrompt>,
    pub steps: Vec<TrajectoryStep>,
}

/// The growing mesh and everything an iteration needs besides the backends.
#[derive(Clone, Debug)]
pub struct BlendState {
    pub mesh: TriangleMesh,
    pub prior: PriorMesh,
    pub plan: BlendPlan,
    pub iteration: usize,
    pub weights: ConditioningWeights,
    pub seed: u64,
    pub debug_dir: Option<PathBuf>,
}

/// What one iteration did, for inspection.
#[derive(Clone, Debug)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Pixels the mesh did not cover before the iteration.
    pub missing: MaskImage,
    /// Missing pixels segmented as wall, floor or ceiling.
    pub structural: MaskImage,
    pub prior_images: PriorImageSet,
    pub inpainted: ColorImage,
    pub labels: LabelImage,
    /// Depth handed to fusion; only missing pixels are new.
    pub fused_depth: DepthImage,
    pub vertices_added: usize,
}

fn step_seed(seed: u64, iteration: usize) -> u64 {
    seed.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(iteration as u64 + 1))
}

/// Run one inpainting step and fuse the result into `state.mesh`.
///
/// Returns `None` when the view has no missing pixels. On error the mesh is
/// left as it was.
pub fn blend_iteration(
    state: &mut BlendState,
    step: &TrajectoryStep,
    backends: &BackendSet,
) -> Result<Option<IterationRecord>> {
    let iteration = state.iteration;
    state.iteration += 1;
    let stage = format!("blend step {iteration} ({:?})", step.purpose);
    let cam = &step.cam;

    let view = render_view(&state.mesh, cam);
    let missing = view.missing.clone();
    if missing.count() == 0 {
        return Ok(None);
    }
    let prior_images = render_prior_images(&state.prior, cam).stage(&stage)?;
    let prompt = match step.prompt_hint {
        Some(yaw) => select_prompt_for_yaw(yaw, &state.plan.region_prompts),
        None => select_prompt_for_view(cam, &state.plan.region_prompts),
    }
    .unwrap_or_default()
    .to_string();

    let w = state.weights;
    let mut request = InpaintRequest::new(view.color.clone(), missing.clone(), prompt, step_seed(state.seed, iteration));
    request.conditioning = vec![
        Conditioning {
            kind: ConditioningKind::Layout,
            image: prior_images.layout_conditioning(),
            weight: w.layout,
        },
        Conditioning {
            kind: ConditioningKind::Depth,
            image: prior_images.depth_conditioning(),
            weight: w.depth,
        },
        Conditioning {
            kind: ConditioningKind::Semantic,
            image: prior_images.semantic.clone(),
            weight: w.semantic,
        },
    ];
    request.view = Some(*cam);
    let inpainted = backends.checked_inpaint(&request).stage(&stage)?;
    let labels = backends.checked_segment(&inpainted).stage(&stage)?;

    // Structural pixels copy the prior's depth verbatim.
    let prior_depth = &prior_images.metric_depth;
    let structural = MaskImage::from_fn(missing.width(), missing.height(), |x, y| {
        *missing.get(x, y) && palette::is_structural(*labels.get(x, y)) && prior_depth.get(x, y).is_finite()
    });
    let mut fused_depth = DepthImage::from_fn(missing.width(), missing.height(), |x, y| {
        if *structural.get(x, y) {
            *prior_depth.get(x, y)
        } else {
            *view.depth.get(x, y)
        }
    });

    // Everything else is completed by the depth backend, conditioned on the
    // rendered and copied depths, then aligned to the rendered depth.
    let rest = MaskImage::from_fn(missing.width(), missing.height(), |x, y| {
        *missing.get(x, y) && !*structural.get(x, y)
    });
    if rest.count() > 0 {
        let known = rest.map(|r| !r);
        let predicted = backends
            .checked_depth(&inpainted, Some(KnownDepth { depth: &fused_depth, mask: &known }))
            .stage(&stage)?;
        let rendered_known = missing.map(|m| !m);
        let aligned = align_depth(&predicted, &view.depth, &rendered_known).stage(&stage)?;
        for (i, d) in fused_depth.pixels_mut().iter_mut().enumerate() {
            if rest.pixels()[i] {
                *d = aligned.depth.pixels()[i].max(crate::render::NEAR_PLANE * 2.0);
            }
        }
    }

    if let Some(dir) = &state.debug_dir {
        dump_iteration(dir, iteration, &view.color, &missing, &prior_images, &inpainted, &fused_depth)
            .stage(&stage)?;
    }

    let vertices_added = fuse_into(
        &mut state.mesh,
        cam,
        &FuseInput {
            color: &inpainted,
            depth: &fused_depth,
            mask: &missing,
            labels: Some(&labels),
            rendered_depth: Some(&view.depth),
        },
    )
    .stage(&stage)?;
    log::debug!("{stage}: {} missing, {} structural, {vertices_added} vertices", missing.count(), structural.count());
    Ok(Some(IterationRecord {
        iteration,
        missing,
        structural,
        prior_images,
        inpainted,
        labels,
        fused_depth,
        vertices_added,
    }))
}

fn dump_iteration(
    dir: &Path,
    iteration: usize,
    view: &ColorImage,
    missing: &MaskImage,
    prior: &PriorImageSet,
    inpainted: &ColorImage,
    fused_depth: &DepthImage,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(format!("{iteration:04}_{name}"));
    view.save_png(path("view.png"))?;
    missing.save_png(path("mask.png"))?;
    prior.layout_edges.save_png(path("prior_layout.png"))?;
    prior.depth_conditioning().save_png(path("prior_depth.png"))?;
    prior.semantic.save_png(path("prior_semantic.png"))?;
    inpainted.save_png(path("inpainted.png"))?;
    fused_depth.save_raw(path("fused_depth.f32"))?;
    Ok(())
}

/// Generate, lift and floor-align a room for an empty slot. Returns the
/// submesh in its own frame and the transform placing it in the slot.
fn intermediate_submesh_unplaced(
    slot: &Slot,
    prompts: &[RegionPrompt],
    backends: &BackendSet,
    seed: u64,
    floor_labels: &[Label],
) -> Result<(Submesh, RigidTransform)> {
    let prompt = select_prompt_for_yaw(slot.yaw_deg, prompts)
        .ok_or_else(|| Error::invalid("no region prompts for intermediate submesh"))?
        .to_string();
    let cam = input_camera();
    let blank = ColorImage::filled(cam.width_px, cam.height_px, [0.5; 3]);
    let full = MaskImage::filled(cam.width_px, cam.height_px, true);
    let request = InpaintRequest::new(blank, full, prompt.clone(), seed);
    let image = backends.checked_inpaint(&request)?;
    let mut prepared = PreparedImage::new(image, format!("slot-{}", format_yaw(slot.yaw_deg)))?;
    prepared.caption = Some(prompt);
    let lifted = estimate_and_backproject(&prepared, &cam, backends.depth.as_ref(), backends.seg.as_ref())?;
    let aligned = align_or_generate(&lifted, backends, seed, Some(floor_labels))?;
    if !aligned.aligned {
        log::warn!("intermediate submesh at {}° has no floor; placing it unaligned", slot.yaw_deg);
    }
    let t = slot.transform.compose(&canonical_transform(&aligned)?);
    Ok((aligned, t))
}

/// Synthesize a room for `slot` from the region prompt nearest its yaw and
/// place it there.
pub fn generate_intermediate_submesh(
    slot: &Slot,
    prompts: &[RegionPrompt],
    backends: &BackendSet,
    seed: u64,
    floor_labels: &[Label],
) -> Result<Submesh> {
    let (sub, t) = intermediate_submesh_unplaced(slot, prompts, backends, seed, floor_labels)?;
    Ok(sub.transformed(&t))
}

/// Knobs of a pipeline run that do not concern I/O.
#[derive(Clone, Debug, PartialEq)]
pub struct BlendOptions {
    pub diameter_m: f64,
    pub seed: u64,
    pub weights: ConditioningWeights,
    pub theme: String,
    pub debug_dir: Option<PathBuf>,
    pub floor_labels: Vec<Label>,
}

impl Default for BlendOptions {
    fn default() -> Self {
        let cfg = PipelineConfig::default();
        BlendOptions {
            diameter_m: cfg.diameter_m,
            seed: cfg.seed,
            weights: cfg.weights,
            theme: cfg.theme,
            debug_dir: None,
            floor_labels: cfg.floor_labels,
        }
    }
}

impl From<&PipelineConfig> for BlendOptions {
    fn from(cfg: &PipelineConfig) -> Self {
        BlendOptions {
            diameter_m: cfg.diameter_m,
            seed: cfg.seed,
            weights: cfg.weights,
            theme: cfg.theme.clone(),
            debug_dir: cfg.debug_dir.clone(),
            floor_labels: cfg.floor_labels.clone(),
        }
    }
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub mesh: TriangleMesh,
    pub plan: BlendPlan,
    pub prior: PriorMesh,
    /// Floor-aligned submeshes in their own frames; `plan.layout` places them.
    pub submeshes: Vec<Submesh>,
    /// Number of intermediate submeshes generated.
    pub intermediate_count: usize,
}

/// Stage 1 for one photograph: crop, remove people, caption, lift, align.
pub fn prepare_submesh(
    source_id: &str,
    raw: &ColorImage,
    backends: &BackendSet,
    seed: u64,
    floor_labels: &[Label],
) -> Result<Submesh> {
    let prepared = preprocess_input(raw, source_id).stage("ingest")?;
    let mut clean = remove_people(&prepared, backends.seg.as_ref(), backends.inpaint.as_ref(), backends.vlm.as_ref(), seed)
        .stage("ingest: person removal")?;
    clean.caption = Some(caption_image(clean.color(), backends.vlm.as_ref()).stage("caption")?);
    let lifted = estimate_and_backproject(&clean, &input_camera(), backends.depth.as_ref(), backends.seg.as_ref())?;
    align_or_generate(&lifted, backends, seed, Some(floor_labels)).stage("floor alignment")
}

/// Yaws whose prompts the LLM must invent: empty slots and blend
/// midpoints, minus yaws an input already covers.
fn unknown_yaws(layout: &PlacedLayout) -> Result<Vec<f64>> {
    let mut yaws: Vec<f64> = layout.intermediate_slots.iter().map(|s| s.yaw_deg).collect();
    yaws.extend(blending_viewpoints(layout)?.iter().filter_map(|s| s.prompt_hint));
    yaws.retain(|y| layout.placements.iter().all(|p| circular_distance_deg(p.yaw_deg, *y) > 1e-6));
    yaws.sort_by(f64::total_cmp);
    yaws.dedup_by(|a, b| circular_distance_deg(*a, *b) <= 1e-6);
    Ok(yaws)
}

/// Callback that sees each step together with what its iteration did.
pub type IterationObserver<'a> = dyn FnMut(&TrajectoryStep, &IterationRecord) + 'a;

/// Run both stages on in-memory photographs. `observer` sees every
/// iteration that changed the mesh.
pub fn run_pipeline_on_images(
    images: &[(String, ColorImage)],
    options: &BlendOptions,
    backends: &BackendSet,
    mut observer: Option<&mut IterationObserver<'_>>,
) -> Result<PipelineOutput> {
    if images.is_empty() {
        return Err(Error::invalid("the pipeline needs at least one input image"));
    }
    let seed = options.seed;

    // Stage 1.
    let mut submeshes = Vec::with_capacity(images.len());
    for (i, (id, raw)) in images.iter().enumerate() {
        let sub = prepare_submesh(id, raw, backends, seed.wrapping_add(i as u64), &options.floor_labels).stage(format!("input {id}"))?;
        log::info!("input {id}: {} vertices, floor found: {}", sub.mesh.vertex_count(), sub.floor_found);
        submeshes.push(sub);
    }
    let mut layout = layout_submeshes(&submeshes, options.diameter_m).stage("layout")?;
    let prior = build_geometric_prior(&layout, &submeshes).stage("prior")?;

    let known: Vec<(f64, String)> = layout
        .placements
        .iter()
        .filter_map(|p| submeshes[p.submesh].caption.clone().map(|c| (p.yaw_deg, c)))
        .collect();
    let unknown = unknown_yaws(&layout).stage("prompts")?;
    let mut region_prompts: Vec<RegionPrompt> = known
        .iter()
        .filter_map(|(yaw, c)| RegionPrompt::new(*yaw, c.clone()).ok())
        .collect();
    if !unknown.is_empty() {
        region_prompts.extend(
            infer_region_prompts(&known, &unknown, &prior.room_size(), &options.theme, backends.llm.as_ref())
                .stage("prompts")?,
        );
    }

    // Stage 2: fill empty slots, rebuild the prior around them.
    let slots = std::mem::take(&mut layout.intermediate_slots);
    let intermediate_count = slots.len();
    for (k, slot) in slots.iter().enumerate() {
        let slot_seed = seed.wrapping_add(1_000 + k as u64);
        let (sub, transform) = intermediate_submesh_unplaced(slot, &region_prompts, backends, slot_seed, &options.floor_labels)
            .stage(format!("intermediate submesh at {}°", format_yaw(slot.yaw_deg)))?;
        layout.placements.push(Placement {
            submesh: submeshes.len(),
            source_id: sub.source_id.clone(),
            transform,
            yaw_deg: slot.yaw_deg,
            unaligned: !sub.aligned,
        });
        submeshes.push(sub);
    }
    let prior = if intermediate_count > 0 {
        build_geometric_prior(&layout, &submeshes).stage("prior")?
    } else {
        prior
    };

    let mut mesh = TriangleMesh::empty_labelled();
    for placed in place_submeshes(&layout, &submeshes) {
        mesh.append_in_place(&placed.mesh).stage("merge submeshes")?;
    }

    let mut steps = blending_viewpoints(&layout).stage("trajectory")?;
    steps.extend(completion_trajectories(&layout, seed));
    constrain_to_hull(&mut steps, &prior, HULL_MARGIN_M);

    let mut state = BlendState {
        mesh,
        prior,
        plan: BlendPlan {
            layout,
            region_prompts,
            steps,
        },
        iteration: 0,
        weights: options.weights,
        seed,
        debug_dir: options.debug_dir.clone(),
    };
    let steps = state.plan.steps.clone();
    for step in &steps {
        if let Some(record) = blend_iteration(&mut state, step, backends)? {
            if let Some(obs) = observer.as_mut() {
                obs(step, &record);
            }
        }
    }
    log::info!(
        "blended {} steps into {} vertices, {} faces",
        steps.len(),
        state.mesh.vertex_count(),
        state.mesh.face_count()
    );
    Ok(PipelineOutput {
        mesh: state.mesh,
        plan: state.plan,
        prior: state.prior,
        submeshes,
        intermediate_count,
    })
}

/// Load the configured images and run both stages.
pub fn run_pipeline(config: &PipelineConfig, backends: &BackendSet) -> Result<PipelineOutput> {
    config.validate()?;
    let images = config
        .input_paths
        .iter()
        .map(|p| {
            let id = p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string());
            ColorImage::load(p).stage(format!("load {}", p.display())).map(|img| (id, img))
        })
        .collect::<Result<Vec<_>>>()?;
    run_pipeline_on_images(&images, &BlendOptions::from(config), backends, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::plan_intermediate_slots;

    #[test]
    fn nearest_prompt_for_slot() {
        let prompts = vec![
            RegionPrompt::new(80.0, "office space with a desk").unwrap(),
            RegionPrompt::new(200.0, "lounge space with a sofa").unwrap(),
        ];
        assert_eq!(select_prompt_for_yaw(90.0, &prompts), Some("office space with a desk"));
    }

    #[test]
    fn unknown_yaws_cover_slots_and_midpoints() {
        let mut layout = PlacedLayout {
            placements: vec![Placement {
                submesh: 0,
                source_id: "a".into(),
                transform: RigidTransform::identity(),
                yaw_deg: 0.0,
                unaligned: false,
            }],
            diameter_m: 6.0,
            intermediate_slots: plan_intermediate_slots(1, 6.0),
        };
        assert_eq!(unknown_yaws(&layout).unwrap(), vec![45.0, 90.0, 135.0, 180.0, 225.0, 270.0, 315.0]);
        layout.intermediate_slots.clear();
        assert!(unknown_yaws(&layout).is_err());
    }

    #[test]
    fn zero_inputs_rejected() {
        let err = run_pipeline_on_images(&[], &BlendOptions::default(), &BackendSet::synthetic(), None).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
