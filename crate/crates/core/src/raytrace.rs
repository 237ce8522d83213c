//! Per-satellite reception classification: direct line of sight, a single
//! specular reflection found with the mirror-image construction, or nothing.

use nalgebra::Vector3;

use crate::ephemeris::look_angles;
use crate::geo::{mirror_across_plane, ray_intersect_polygon, EnuPoint, SurfacePolygon, MIN_HIT_DISTANCE};
use crate::scene::Scene;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PathKind {
    Los,
    Nlos,
}

impl PathKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PathKind::Los => "LOS",
            PathKind::Nlos => "NLOS",
        }
    }
}

/// How one satellite's signal reaches the receiver.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReceptionPath {
    pub kind: PathKind,
    /// Straight-line receiver↔satellite distance (m).
    pub range: f64,
    /// Extra travel distance of the reflected signal (m); zero for LOS.
    pub extra_delay: f64,
    pub surface_id: Option<u32>,
    pub reflection_point: Option<EnuPoint>,
}

impl ReceptionPath {
    pub fn los(range: f64) -> Self {
        ReceptionPath {
            kind: PathKind::Los,
            range,
            extra_delay: 0.0,
            surface_id: None,
            reflection_point: None,
        }
    }
}

/// Whether any scene surface other than `skip` blocks the open segment
/// `from → to`.
fn segment_blocked(scene: &Scene, from: &EnuPoint, to: &EnuPoint, skip: Option<u32>) -> bool {
    let a = from.vector();
    let b = to.vector();
    let delta = b - a;
    let length = delta.norm();
    if !(length > MIN_HIT_DISTANCE) {
        return false;
    }
    let top = scene.max_building_top();
    if a.z > top && b.z > top {
        return false;
    }
    // Nothing is above the highest roof, so only the part of the segment
    // below it needs the bounding-box test.
    let mut lo = a;
    let mut hi = b;
    if delta.z.abs() > 0.0 {
        let clip = |p: Vector3<f64>, q: Vector3<f64>| {
            if q.z > top + 1.0 && p.z <= top + 1.0 {
                let t = (top + 1.0 - p.z) / (q.z - p.z);
                p + (q - p) * t
            } else {
                q
            }
        };
        hi = clip(a, b);
        lo = clip(b, a);
    }
    let dir = delta / length;
    scene.surfaces().iter().any(|s| {
        Some(s.id()) != skip
            && s.segment_may_hit(&lo, &hi)
            && ray_intersect_polygon(from, &dir, s).is_some_and(|h| h.distance < length - MIN_HIT_DISTANCE)
    })
}

/// True iff the receiver→satellite segment crosses no wall or roof.
pub fn classify_los(receiver: &EnuPoint, sat: &EnuPoint, scene: &Scene) -> bool {
    !segment_blocked(scene, receiver, sat, None)
}

/// `|sat − mirror| − |sat − receiver|`, evaluated as a difference of squares
/// so the ~2e7 m ranges do not cancel catastrophically.
fn mirror_extra_delay(sat: &Vector3<f64>, mirror: &Vector3<f64>, receiver: &Vector3<f64>) -> f64 {
    let via_mirror = (sat - mirror).norm();
    let direct = (sat - receiver).norm();
    (receiver - mirror).dot(&(2.0 * sat - mirror - receiver)) / (via_mirror + direct)
}

fn reflect_off(surface: &SurfacePolygon, receiver: &EnuPoint, sat: &EnuPoint, scene: &Scene) -> Option<ReceptionPath> {
    if surface.signed_distance(receiver) <= 0.0 {
        return None;
    }
    let mirror = mirror_across_plane(receiver, surface);
    let to_sat = *sat - mirror;
    let span = to_sat.norm();
    let hit = ray_intersect_polygon(&mirror, &(to_sat / span), surface)?;
    if hit.distance > span {
        // satellite is behind the surface
        return None;
    }
    // Project back onto the plane to remove rounding drift.
    let drift = surface.signed_distance(&hit.point);
    let reflection = hit.point + surface.normal() * (-drift);
    // The reflecting surface cannot block legs that leave its front face,
    // so it is skipped; a grazing leg would otherwise re-hit it at ~1e-9 m.
    let skip = Some(surface.id());
    if segment_blocked(scene, &reflection, sat, skip) || segment_blocked(scene, &reflection, receiver, skip) {
        return None;
    }
    Some(ReceptionPath {
        kind: PathKind::Nlos,
        range: receiver.distance(sat),
        extra_delay: mirror_extra_delay(&sat.vector(), &mirror.vector(), &receiver.vector()),
        surface_id: Some(surface.id()),
        reflection_point: Some(reflection),
    })
}

/// Every valid single-bounce path, sorted by extra delay then surface id.
pub fn trace_single_reflection(receiver: &EnuPoint, sat: &EnuPoint, scene: &Scene) -> Vec<ReceptionPath> {
    let mut paths: Vec<ReceptionPath> = scene
        .surfaces()
        .iter()
        .filter_map(|s| reflect_off(s, receiver, sat, scene))
        .collect();
    paths.sort_by(|a, b| {
        a.extra_delay
            .total_cmp(&b.extra_delay)
            .then_with(|| a.surface_id.cmp(&b.surface_id))
    });
    paths
}

/// LOS when unobstructed, otherwise the shortest-delay reflection, otherwise
/// `None`. Satellites at or below the receiver's horizon are never received.
pub fn simulate_reception(receiver: &EnuPoint, sat: &EnuPoint, scene: &Scene) -> Option<ReceptionPath> {
    let (elevation, _) = look_angles(sat, receiver);
    if elevation <= 0.0 {
        return None;
    }
    if classify_los(receiver, sat, scene) {
        return Some(ReceptionPath::los(receiver.distance(sat)));
    }
    trace_single_reflection(receiver, sat, scene).into_iter().next()
}
