//! Circular arrangement of submeshes and the slots reserved for generated
//! ones.
//!
//! Submesh `k` of `n` goes to yaw `360·k/n`. Its front center lands on the
//! circle of diameter `d` at `(r·sin θ, 0, r·cos θ)` and its front direction
//! points back at the origin, so every captured room opens toward the middle
//! of the shared space.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{heading_deg, heading_vector, normalize_deg, RigidTransform};
use crate::lift3d::Submesh;

/// Default circle diameter, meters.
pub const DEFAULT_DIAMETER_M: f64 = 6.0;
/// Largest angular gap the blending frames are expected to bridge.
pub const MAX_GAP_DEG: f64 = 120.0;
/// Slots are only planned for this many inputs or fewer.
pub const MAX_INPUTS_WITH_SLOTS: usize = 3;
/// Fraction of vertices nearest the capture camera that define the front.
pub const FRONT_FRACTION: f64 = 0.10;
/// Relative slack under which squared distances count as tied.
const FRONT_TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    /// Index into the submesh list the layout was built from.
    pub submesh: usize,
    pub source_id: String,
    pub transform: RigidTransform,
    pub yaw_deg: f64,
    /// Set for submeshes placed without a found floor.
    pub unaligned: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub yaw_deg: f64,
    /// Takes a submesh's canonical frame (front center at the origin, front
    /// facing +Z) onto the circle.
    pub transform: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedLayout {
    pub placements: Vec<Placement>,
    pub diameter_m: f64,
    pub intermediate_slots: Vec<Slot>,
}

impl PlacedLayout {
    pub fn radius(&self) -> f64 {
        self.diameter_m / 2.0
    }

    /// Yaws of placements and slots together, ascending.
    pub fn occupied_yaws(&self) -> Vec<f64> {
        let mut yaws: Vec<f64> = self
            .placements
            .iter()
            .map(|p| p.yaw_deg)
            .chain(self.intermediate_slots.iter().map(|s| s.yaw_deg))
            .collect();
        yaws.sort_by(f64::total_cmp);
        yaws
    }

    /// Point on the circle at `yaw_deg`, at floor level.
    pub fn circle_point(&self, yaw_deg: f64) -> Point3<f64> {
        circle_point(self.diameter_m, yaw_deg)
    }
}

pub fn circle_point(diameter: f64, yaw_deg: f64) -> Point3<f64> {
    Point3::from(heading_vector(yaw_deg) * (diameter / 2.0))
}

/// Centroid of the 10% of vertices nearest the capture camera (plus any tied
/// with the last of them), dropped to the floor plane.
pub fn front_center(sub: &Submesh) -> Result<Point3<f64>> {
    let vertices = sub.mesh.vertices();
    if vertices.is_empty() {
        return Err(Error::invalid(format!("submesh {} has no vertices", sub.source_id)));
    }
    let eye = sub.capture_camera.position();
    let mut by_distance: Vec<(f64, usize)> = vertices
        .iter()
        .enumerate()
        .map(|(i, v)| ((v - eye).norm_squared(), i))
        .collect();
    let k = ((vertices.len() as f64 * FRONT_FRACTION).ceil() as usize).clamp(1, vertices.len());
    by_distance.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    // Vertices tied with the k-th distance are all kept, so the selection
    // does not depend on rounding after a rigid transform.
    let cutoff = by_distance[k - 1].0 * (1.0 + FRONT_TIE_TOLERANCE) + f64::MIN_POSITIVE;
    let (sum, count) = by_distance
        .iter()
        .filter(|(d, _)| *d <= cutoff)
        .fold((Vector3::zeros(), 0usize), |(acc, n), &(_, i)| (acc + vertices[i].coords, n + 1));
    let c = sum / count as f64;
    Ok(Point3::new(c.x, 0.0, c.z))
}

/// Transform taking a submesh's own frame to its canonical frame: front
/// center at the origin, front direction along +Z.
pub fn canonical_transform(sub: &Submesh) -> Result<RigidTransform> {
    let center = front_center(sub)?;
    let f = sub.front_direction;
    let heading = if f.x.hypot(f.z) > 1e-9 { heading_deg(&f) } else { 0.0 };
    let turn = RigidTransform::yaw_deg(-heading);
    let c = turn.apply_point(&center);
    Ok(RigidTransform::from_translation(Vector3::new(-c.x, 0.0, -c.z)).compose(&turn))
}

/// Transform taking a canonical frame to the circle at `yaw_deg`, facing
/// the center.
pub fn slot_transform(yaw_deg: f64, diameter: f64) -> RigidTransform {
    let p = circle_point(diameter, yaw_deg);
    RigidTransform::from_translation(p.coords).compose(&RigidTransform::yaw_deg(yaw_deg + 180.0))
}

/// Place `n` submeshes at equally spaced yaws around a circle of diameter `d`.
pub fn layout_submeshes(subs: &[Submesh], d: f64) -> Result<PlacedLayout> {
    if subs.is_empty() {
        return Err(Error::invalid("layout needs at least one submesh"));
    }
    if !(d > 0.0 && d.is_finite()) {
        return Err(Error::invalid(format!("diameter {d} must be positive")));
    }
    let n = subs.len();
    let placements = subs
        .iter()
        .enumerate()
        .map(|(k, sub)| {
            let yaw = 360.0 * k as f64 / n as f64;
            if !sub.aligned {
                log::warn!("placing unaligned submesh {} at {yaw}°", sub.source_id);
            }
            Ok(Placement {
                submesh: k,
                source_id: sub.source_id.clone(),
                transform: slot_transform(yaw, d).compose(&canonical_transform(sub)?),
                yaw_deg: yaw,
                unaligned: !sub.aligned,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PlacedLayout {
        placements,
        diameter_m: d,
        intermediate_slots: plan_intermediate_slots(n, d),
    })
}

/// Slot yaws for `n` equally spaced inputs.
///
/// Each gap of `360/n` degrees is bisected at least once, and again until
/// every sub-gap is at most 120°. With four or more inputs there are no slots.
pub fn intermediate_slot_yaws(n: usize) -> Vec<f64> {
    if n == 0 || n > MAX_INPUTS_WITH_SLOTS {
        return Vec::new();
    }
    let gap = 360.0 / n as f64;
    let mut levels = 1u32;
    while gap / f64::from(1u32 << levels) > MAX_GAP_DEG {
        levels += 1;
    }
    let parts = 1usize << levels;
    let mut yaws = Vec::new();
    for k in 0..n {
        for j in 1..parts {
            yaws.push(normalize_deg(gap * k as f64 + gap * j as f64 / parts as f64));
        }
    }
    yaws.sort_by(f64::total_cmp);
    yaws
}

pub fn plan_intermediate_slots(n: usize, d: f64) -> Vec<Slot> {
    intermediate_slot_yaws(n)
        .into_iter()
        .map(|yaw| Slot {
            yaw_deg: yaw,
            transform: slot_transform(yaw, d),
        })
        .collect()
}

/// Apply each placement's transform to its submesh.
pub fn place_submeshes(layout: &PlacedLayout, subs: &[Submesh]) -> Vec<Submesh> {
    layout
        .placements
        .iter()
        .map(|p| subs[p.submesh].transformed(&p.transform))
        .collect()
}

/// Largest gap between consecutive yaws around the circle.
pub fn max_gap_deg(yaws: &[f64]) -> f64 {
    if yaws.len() < 2 {
        return 360.0;
    }
    let mut sorted: Vec<f64> = yaws.iter().map(|y| normalize_deg(*y)).collect();
    sorted.sort_by(f64::total_cmp);
    let wrap = 360.0 - sorted[sorted.len() - 1] + sorted[0];
    sorted.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::max)
}
