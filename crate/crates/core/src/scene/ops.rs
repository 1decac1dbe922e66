use rand::Rng;
use thiserror::Error;

use super::{validate, Beam, Scenario, Violation};
use crate::geom::Vec2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneError {
    #[error("unknown sphere {0}")]
    UnknownSphere(String),
    #[error("unknown beam {0}")]
    UnknownBeam(String),
    #[error("scenario is invalid: {} violation(s)", .0.len())]
    Invalid(Vec<Violation>),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Fresh 128-bit random id as 32 lowercase hex digits.
pub fn new_id() -> String {
    format!("{:032x}", rand::thread_rng().gen::<u128>())
}

/// Current time as ISO-8601 UTC with microseconds.
pub fn now_timestamp() -> String {
    chrono::Utc::now()
        .format("%Y-%m-%dT%H:%M:%S%.6fZ")
        .to_string()
}

/// Forks `parent`: returns a deep copy with a fresh id whose `parent` points
/// back, and records the child link on `parent`.
pub fn fork(parent: &mut Scenario) -> Result<Scenario, SceneError> {
    let violations = validate(parent);
    if !violations.is_empty() {
        return Err(SceneError::Invalid(violations));
    }
    let mut child = parent.clone();
    child.id = new_id();
    child.parent = Some(parent.id.clone());
    child.children.clear();
    child.created_at = now_timestamp();
    parent.children.push(child.id.clone());
    Ok(child)
}

/// A view of `s` re-centered on `sphere_id`.
///
/// Every coordinate is translated so the focal sphere sits at the origin and
/// the sphere list is rotated to start with it. `s` itself is not modified.
pub fn perspective(s: &Scenario, sphere_id: &str) -> Result<Scenario, SceneError> {
    let idx = s
        .spheres
        .iter()
        .position(|x| x.id == sphere_id)
        .ok_or_else(|| SceneError::UnknownSphere(sphere_id.to_string()))?;
    let offset = s.spheres[idx].center;
    let shift = |p: Vec2| p - offset;

    let mut view = s.clone();
    for sphere in &mut view.spheres {
        sphere.center = shift(sphere.center);
        for f in &mut sphere.fractures {
            f.a = shift(f.a);
            f.b = shift(f.b);
        }
        for b in &mut sphere.bubbles {
            b.center = shift(b.center);
        }
    }
    for beam in &mut view.beams {
        if let Some(o) = beam.origin {
            beam.origin = Some(shift(o));
        }
    }
    view.spheres.rotate_left(idx);
    view.perspective = Some(sphere_id.to_string());
    Ok(view)
}

/// Moves a beam's origin toward the sphere center by `delta`, clamped at 0.
pub fn deepen(s: &mut Scenario, beam_id: &str, delta: f64) -> Result<Beam, SceneError> {
    if !(delta >= 0.0) {
        return Err(SceneError::InvalidArgument(format!("delta {delta} must be >= 0")));
    }
    let beam = s
        .beam_mut(beam_id)
        .ok_or_else(|| SceneError::UnknownBeam(beam_id.to_string()))?;
    beam.origin_depth = (beam.origin_depth - delta).max(0.0);
    Ok(beam.clone())
}

/// Sets the render-only cross-section flag of a sphere.
pub fn reveal(s: &mut Scenario, sphere_id: &str, on: bool) -> Result<bool, SceneError> {
    let sphere = s
        .sphere_mut(sphere_id)
        .ok_or_else(|| SceneError::UnknownSphere(sphere_id.to_string()))?;
    sphere.revealed = on;
    Ok(on)
}
