//! Deterministic 2D geometric optics.
//!
//! Rays are traced through a prepared [`OpticalScene`]. At every interface the
//! ray splits into a refracted and a reflected child weighted by the
//! unpolarized Fresnel reflectance; both children are followed depth-first
//! (refracted first) until their intensity falls under the floor or the event
//! budget runs out. Media attenuate per channel with Beer-Lambert absorption
//! and a per-unit-length tint.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{rgb_max, rgb_scale, Point, Rgb, Vec2};
use crate::scene::{validate, Beam, Scenario, Violation};

/// Intersections closer than this are ignored so a ray never re-hits the
/// surface it starts on.
pub const SELF_HIT_EPSILON: f64 = 1e-9;

/// Hits with `|cos θ|` under this are tangential and count as misses.
pub const GRAZING_EPSILON: f64 = 1e-9;

const UNIT_TOLERANCE: f64 = 1e-9;
const MIN_INDEX: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("invalid scene: {} violation(s)", .0.len())]
    InvalidScene(Vec<Violation>),
    #[error("non-finite geometry: {0}")]
    NonFinite(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("index {index} out of range for path with {len} segment(s)")]
    IndexOutOfRange { index: usize, len: usize },
}

/// An optical medium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Medium {
    pub refractive_index: f64,
    /// Beer-Lambert coefficient per scene unit.
    #[serde(default)]
    pub absorption: f64,
    /// Per-channel transmission multiplier per unit length.
    #[serde(default = "white")]
    pub tint: Rgb,
}

fn white() -> Rgb {
    [1.0; 3]
}

impl Default for Medium {
    fn default() -> Self {
        Medium::AIR
    }
}

impl Medium {
    pub const AIR: Medium = Medium {
        refractive_index: 1.0,
        absorption: 0.0,
        tint: [1.0; 3],
    };

    pub fn glass(refractive_index: f64) -> Self {
        Medium {
            refractive_index,
            ..Medium::AIR
        }
    }

    /// Per-channel extinction coefficient, `absorption - ln(tint)`.
    pub fn extinction(&self) -> Rgb {
        let k = |t: f64| self.absorption - t.ln();
        [k(self.tint[0]), k(self.tint[1]), k(self.tint[2])]
    }

    /// Per-channel transmission factor over `length` scene units.
    pub fn transmission(&self, length: f64) -> Rgb {
        extinction_transmission(&self.extinction(), length)
    }
}

pub(crate) fn extinction_transmission(k: &Rgb, length: f64) -> Rgb {
    let f = |k: f64| if k == 0.0 { 1.0 } else { (-k * length).exp() };
    [f(k[0]), f(k[1]), f(k[2])]
}

/// A ray with per-channel intensity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ray {
    pub origin: Point,
    pub direction: Vec2,
    pub intensity: Rgb,
    #[serde(default)]
    pub path_length: f64,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Point, direction: Vec2, intensity: Rgb) -> Self {
        Ray {
            origin,
            direction: direction.normalized(),
            intensity,
            path_length: 0.0,
        }
    }

    pub fn at(&self, t: f64) -> Point {
        self.origin + self.direction * t
    }
}

/// Where a ray meets a bare geometric primitive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub point: Point,
    /// Unit normal oriented against the incident ray.
    pub normal: Vec2,
    pub distance: f64,
}

/// Outcome of [`refract_direction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refraction {
    Transmitted(Vec2),
    TotalInternalReflection,
}

fn check_unit(v: Vec2, what: &str) -> Result<(), OpticsError> {
    if !v.is_finite() {
        return Err(OpticsError::NonFinite(format!("{what} is not finite")));
    }
    if (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(OpticsError::ContractViolation(format!(
            "{what} must be a unit vector (|v| = {})",
            v.norm()
        )));
    }
    Ok(())
}

fn check_index(n: f64, what: &str) -> Result<(), OpticsError> {
    if !(n >= MIN_INDEX) || !n.is_finite() {
        return Err(OpticsError::ContractViolation(format!(
            "{what} = {n} must be a finite index >= {MIN_INDEX}"
        )));
    }
    Ok(())
}

/// Direction of the transmitted ray by Snell's law, or TIR.
///
/// `normal` must face the incident side (`incident · normal <= 0`).
pub fn refract_direction(
    incident: Vec2,
    normal: Vec2,
    n1: f64,
    n2: f64,
) -> Result<Refraction, OpticsError> {
    check_unit(incident, "incident")?;
    check_unit(normal, "normal")?;
    check_index(n1, "n1")?;
    check_index(n2, "n2")?;
    let cos_i = -incident.dot(normal);
    if cos_i < -UNIT_TOLERANCE {
        return Err(OpticsError::ContractViolation(
            "normal must be oriented against the incident direction".into(),
        ));
    }
    Ok(refract_unchecked(incident, normal, n1, n2))
}

fn refract_unchecked(incident: Vec2, normal: Vec2, n1: f64, n2: f64) -> Refraction {
    let cos_i = (-incident.dot(normal)).clamp(0.0, 1.0);
    let eta = n1 / n2;
    let sin2_t = eta * eta * (1.0 - cos_i * cos_i);
    if sin2_t > 1.0 {
        return Refraction::TotalInternalReflection;
    }
    let cos_t = (1.0 - sin2_t).sqrt();
    let t = incident * eta + normal * (eta * cos_i - cos_t);
    Refraction::Transmitted(t.normalized())
}

/// Mirror reflection of `incident` about `normal`.
pub fn reflect(incident: Vec2, normal: Vec2) -> Vec2 {
    (incident - normal * (2.0 * incident.dot(normal))).normalized()
}

/// Unpolarized Fresnel reflectance and transmittance `(R, T)` for incidence
/// angle `theta1` going from index `n1` into `n2`.
pub fn fresnel_split(theta1: f64, n1: f64, n2: f64) -> Result<(f64, f64), OpticsError> {
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta1) {
        return Err(OpticsError::ContractViolation(format!(
            "incidence angle {theta1} outside [0, π/2)"
        )));
    }
    check_index(n1, "n1")?;
    check_index(n2, "n2")?;
    let r = fresnel_reflectance(theta1.cos(), n1, n2);
    Ok((r, 1.0 - r))
}

fn fresnel_reflectance(cos_i: f64, n1: f64, n2: f64) -> f64 {
    if n1 == n2 {
        return 0.0;
    }
    let cos_i = cos_i.clamp(0.0, 1.0);
    let sin_t = n1 / n2 * (1.0 - cos_i * cos_i).sqrt();
    if sin_t >= 1.0 {
        return 1.0;
    }
    let cos_t = (1.0 - sin_t * sin_t).sqrt();
    let rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t);
    let rp = (n1 * cos_t - n2 * cos_i) / (n1 * cos_t + n2 * cos_i);
    (0.5 * (rs * rs + rp * rp)).clamp(0.0, 1.0)
}

fn oriented_hit(ray: &Ray, point: Point, outward: Vec2, distance: f64) -> Option<Intersection> {
    let mut normal = outward;
    let cos = ray.direction.dot(normal);
    if cos.abs() < GRAZING_EPSILON {
        return None;
    }
    if cos > 0.0 {
        normal = -normal;
    }
    Some(Intersection {
        point,
        normal,
        distance,
    })
}

/// Nearest forward intersection of `ray` with a circle.
pub fn intersect_circle(ray: &Ray, center: Point, radius: f64) -> Option<Intersection> {
    let oc = ray.origin - center;
    let b = oc.dot(ray.direction);
    let c = oc.norm_sq() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 || radius <= 0.0 {
        return None;
    }
    let s = disc.sqrt();
    // Stable root pair: avoid cancellation in -b ± s.
    let (t0, t1) = if b > 0.0 {
        let q = -b - s;
        (q, if q != 0.0 { c / q } else { 0.0 })
    } else {
        let q = -b + s;
        (if q != 0.0 { c / q } else { 0.0 }, q)
    };
    let (near, far) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    for t in [near, far] {
        if t > SELF_HIT_EPSILON {
            let p = ray.at(t);
            let outward = (p - center) / radius;
            if let Some(hit) = oriented_hit(ray, p, outward, t) {
                return Some(hit);
            }
        }
    }
    None
}

/// Nearest forward intersection of `ray` with the segment `a`–`b`.
pub fn intersect_segment(ray: &Ray, a: Point, b: Point) -> Result<Option<Intersection>, OpticsError> {
    let edge = b - a;
    if edge.norm_sq() == 0.0 {
        return Err(OpticsError::Validation("degenerate segment: a == b".into()));
    }
    Ok(intersect_segment_unchecked(ray, a, edge))
}

fn intersect_segment_unchecked(ray: &Ray, a: Point, edge: Vec2) -> Option<Intersection> {
    let denom = ray.direction.cross(edge);
    if denom.abs() < 1e-15 * edge.norm() {
        return None;
    }
    let ao = a - ray.origin;
    let t = ao.cross(edge) / denom;
    let u = ao.cross(ray.direction) / denom;
    if t <= SELF_HIT_EPSILON || !(0.0..=1.0).contains(&u) {
        return None;
    }
    let outward = edge.perp().normalized();
    oriented_hit(ray, ray.at(t), outward, t)
}

/// Identifies the surface a ray interacted with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SurfaceId {
    /// Outer wall of the sphere at this index.
    Wall(usize),
    /// Inner face of the sphere's shell.
    ShellInner(usize),
    Bubble { sphere: usize, bubble: usize },
    Fracture { sphere: usize, fracture: usize },
}

impl SurfaceId {
    pub fn sphere_index(self) -> usize {
        match self {
            SurfaceId::Wall(s) | SurfaceId::ShellInner(s) => s,
            SurfaceId::Bubble { sphere, .. } | SurfaceId::Fracture { sphere, .. } => sphere,
        }
    }
}

/// A hit on a scene surface, with the media on both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceHit {
    pub point: Point,
    pub normal: Vec2,
    pub distance: f64,
    /// `(incident side, far side)` media. For fractures the far side is the
    /// fracture's own medium.
    pub media: (Medium, Medium),
    pub surface: SurfaceId,
}

#[derive(Debug, Clone)]
struct FractureGeom {
    a: Point,
    edge: Vec2,
    width: f64,
    medium: Medium,
}

#[derive(Debug, Clone)]
struct BubbleGeom {
    center: Point,
    radius: f64,
    medium: Medium,
}

#[derive(Debug, Clone)]
struct SphereGeom {
    id: String,
    center: Point,
    radius: f64,
    interior: Medium,
    shell: Option<(f64, Medium)>,
    bubbles: Vec<BubbleGeom>,
    fractures: Vec<FractureGeom>,
}

/// A validated scenario prepared for tracing.
#[derive(Debug, Clone)]
pub struct OpticalScene {
    spheres: Vec<SphereGeom>,
    ambient: Medium,
    bounds: (Point, f64),
    probe: f64,
}

impl OpticalScene {
    /// Validates `scenario` and extracts its optical geometry.
    pub fn new(scenario: &Scenario) -> Result<Self, OpticsError> {
        let violations = validate(scenario);
        if !violations.is_empty() {
            return Err(OpticsError::InvalidScene(violations));
        }
        let spheres: Vec<SphereGeom> = scenario
            .spheres
            .iter()
            .map(|s| SphereGeom {
                id: s.id.clone(),
                center: s.center,
                radius: s.radius,
                interior: s.interior.clone(),
                shell: s
                    .shell
                    .as_ref()
                    .map(|sh| (s.radius * (1.0 - sh.thickness), sh.effective_medium())),
                bubbles: s
                    .bubbles
                    .iter()
                    .map(|b| BubbleGeom {
                        center: b.center,
                        radius: b.radius,
                        medium: b.medium.clone(),
                    })
                    .collect(),
                fractures: s
                    .fractures
                    .iter()
                    .map(|f| FractureGeom {
                        a: f.a,
                        edge: f.b - f.a,
                        width: f.width,
                        medium: f.medium.clone(),
                    })
                    .collect(),
            })
            .collect();
        let bounds = scenario.bounds().unwrap_or((Point::ZERO, 1.0));
        let scale = bounds.1.max(bounds.0.norm()).max(1.0);
        Ok(OpticalScene {
            spheres,
            ambient: Medium::AIR,
            bounds,
            probe: 1e-7 * scale,
        })
    }

    pub fn sphere_index(&self, id: &str) -> Option<usize> {
        self.spheres.iter().position(|s| s.id == id)
    }

    pub fn sphere_center(&self, index: usize) -> Point {
        self.spheres[index].center
    }

    pub fn interior_medium(&self, index: usize) -> &Medium {
        &self.spheres[index].interior
    }

    pub fn sphere_radius(&self, index: usize) -> f64 {
        self.spheres[index].radius
    }

    /// Index of the innermost sphere containing `p`.
    pub fn innermost_sphere(&self, p: Point) -> Option<usize> {
        self.spheres
            .iter()
            .enumerate()
            .filter(|(_, s)| p.distance(s.center) < s.radius)
            .min_by(|a, b| a.1.radius.total_cmp(&b.1.radius))
            .map(|(i, _)| i)
    }

    /// Medium at `p`; the innermost containing sphere wins.
    pub fn medium_at(&self, p: Point) -> &Medium {
        let Some(i) = self.innermost_sphere(p) else {
            return &self.ambient;
        };
        let s = &self.spheres[i];
        if let Some(b) = s.bubbles.iter().find(|b| p.distance(b.center) < b.radius) {
            return &b.medium;
        }
        if let Some((inner, medium)) = &s.shell {
            if p.distance(s.center) > *inner {
                return medium;
            }
        }
        &s.interior
    }

    /// Nearest surface hit along `ray`, with media resolved on both sides.
    pub fn nearest_hit(&self, ray: &Ray) -> Option<SurfaceHit> {
        let mut best: Option<(Intersection, SurfaceId)> = None;
        let mut consider = |hit: Option<Intersection>, id: SurfaceId| {
            if let Some(h) = hit {
                if best.as_ref().is_none_or(|(b, _)| h.distance < b.distance) {
                    best = Some((h, id));
                }
            }
        };
        for (si, s) in self.spheres.iter().enumerate() {
            consider(intersect_circle(ray, s.center, s.radius), SurfaceId::Wall(si));
            if let Some((inner, _)) = &s.shell {
                consider(intersect_circle(ray, s.center, *inner), SurfaceId::ShellInner(si));
            }
            for (bi, b) in s.bubbles.iter().enumerate() {
                consider(
                    intersect_circle(ray, b.center, b.radius),
                    SurfaceId::Bubble { sphere: si, bubble: bi },
                );
            }
            for (fi, f) in s.fractures.iter().enumerate() {
                consider(
                    intersect_segment_unchecked(ray, f.a, f.edge),
                    SurfaceId::Fracture { sphere: si, fracture: fi },
                );
            }
        }
        let (hit, surface) = best?;
        let near = self.medium_at(hit.point + hit.normal * self.probe).clone();
        let (near, far) = match surface {
            SurfaceId::Fracture { sphere, fracture } => {
                // A fracture is a one-event refracting sheet. Crossing from its
                // left side (looking from `a` to `b`) bends as if entering the
                // fracture medium; crossing back applies the inverse bend, so
                // paths through fractures retrace exactly.
                let f = &self.spheres[sphere].fractures[fracture];
                if f.edge.cross(hit.normal) >= 0.0 {
                    (near, f.medium.clone())
                } else {
                    (f.medium.clone(), near)
                }
            }
            _ => {
                let far = self.medium_at(hit.point - hit.normal * self.probe).clone();
                (near, far)
            }
        };
        Some(SurfaceHit {
            point: hit.point,
            normal: hit.normal,
            distance: hit.distance,
            media: (near, far),
            surface,
        })
    }

    /// Extra per-channel transmission factor applied when crossing a fracture.
    pub fn fracture_transmission(&self, surface: SurfaceId) -> Rgb {
        match surface {
            SurfaceId::Fracture { sphere, fracture } => {
                let f = &self.spheres[sphere].fractures[fracture];
                f.medium.transmission(f.width)
            }
            _ => [1.0; 3],
        }
    }

    /// Distance along `ray` to the scene's escape circle.
    pub fn escape_distance(&self, ray: &Ray) -> f64 {
        let (center, radius) = self.bounds;
        let escape_radius = 2.0 * radius + 1.0 + ray.origin.distance(center);
        intersect_circle(ray, center, escape_radius)
            .map(|h| h.distance)
            .unwrap_or(1.0)
    }

    /// Label used for a surface in serialized paths.
    pub fn surface_label(&self, surface: SurfaceId) -> String {
        let id = &self.spheres[surface.sphere_index()].id;
        match surface {
            SurfaceId::Wall(_) => format!("wall:{id}"),
            SurfaceId::ShellInner(_) => format!("shell:{id}"),
            SurfaceId::Bubble { bubble, .. } => format!("bubble:{id}:{bubble}"),
            SurfaceId::Fracture { fracture, .. } => format!("fracture:{id}:{fracture}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Refract,
    Reflect,
    Tir,
    Absorbed,
    Escaped,
    MaxDepth,
}

impl EventKind {
    pub fn is_interface(self) -> bool {
        matches!(self, EventKind::Refract | EventKind::Reflect | EventKind::Tir)
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EventKind::Refract => "REFRACT",
            EventKind::Reflect => "REFLECT",
            EventKind::Tir => "TIR",
            EventKind::Absorbed => "ABSORBED",
            EventKind::Escaped => "ESCAPED",
            EventKind::MaxDepth => "MAX_DEPTH",
        };
        f.write_str(s)
    }
}

/// Interface data for REFRACT/REFLECT/TIR events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interface {
    pub surface: String,
    pub n1: f64,
    pub n2: f64,
    /// Angle between the incident ray and the surface normal.
    pub incidence: f64,
    /// Angle between the outgoing ray and the normal on its side.
    pub outgoing: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEvent {
    pub kind: EventKind,
    pub point: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface: Option<Interface>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: Point,
    pub end: Point,
    /// Intensity at `start`.
    pub intensity: Rgb,
    /// Per-channel extinction coefficient of the medium traversed.
    pub extinction: Rgb,
}

impl Segment {
    pub fn length(&self) -> f64 {
        self.start.distance(self.end)
    }

    pub fn direction(&self) -> Vec2 {
        (self.end - self.start).normalized()
    }

    /// Intensity at `end`.
    pub fn end_intensity(&self) -> Rgb {
        let t = extinction_transmission(&self.extinction, self.length());
        [
            self.intensity[0] * t[0],
            self.intensity[1] * t[1],
            self.intensity[2] * t[2],
        ]
    }
}

/// One traced branch: a polyline from the emission point to a terminal event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayPath {
    /// Emission index within a beam.
    pub ray_index: usize,
    pub segments: Vec<Segment>,
    pub events: Vec<PathEvent>,
    pub total_deflection: f64,
}

impl RayPath {
    pub fn vertices(&self) -> Vec<Point> {
        let mut v: Vec<Point> = self.segments.iter().map(|s| s.start).collect();
        if let Some(last) = self.segments.last() {
            v.push(last.end);
        }
        v
    }

    pub fn event_kinds(&self) -> Vec<EventKind> {
        self.events.iter().map(|e| e.kind).collect()
    }

    pub fn count(&self, kind: EventKind) -> usize {
        self.events.iter().filter(|e| e.kind == kind).count()
    }

    /// The branch that refracted at every interface.
    pub fn is_primary(&self) -> bool {
        self.events
            .iter()
            .all(|e| !matches!(e.kind, EventKind::Reflect | EventKind::Tir))
    }

    pub fn arclength(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    pub fn terminal(&self) -> Option<EventKind> {
        self.events.last().map(|e| e.kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceLimits {
    pub max_events: u32,
    pub min_intensity: f64,
}

impl Default for TraceLimits {
    fn default() -> Self {
        TraceLimits {
            max_events: 32,
            min_intensity: 1e-3,
        }
    }
}

struct Branch {
    ray: Ray,
    segments: Vec<Segment>,
    events: Vec<PathEvent>,
    interface_events: u32,
    deflection: f64,
}

/// Traces `ray` through `scene`, following both Fresnel branches.
///
/// Paths are returned in depth-first order with the refracted child explored
/// before the reflected one.
pub fn trace_ray(
    scene: &OpticalScene,
    ray: &Ray,
    limits: &TraceLimits,
) -> Result<Vec<RayPath>, OpticsError> {
    trace_indexed(scene, ray, limits, 0)
}

fn trace_indexed(
    scene: &OpticalScene,
    ray: &Ray,
    limits: &TraceLimits,
    ray_index: usize,
) -> Result<Vec<RayPath>, OpticsError> {
    if limits.max_events < 1 {
        return Err(OpticsError::ContractViolation("max_events must be >= 1".into()));
    }
    if !(limits.min_intensity > 0.0) {
        return Err(OpticsError::ContractViolation("min_intensity must be > 0".into()));
    }
    if !ray.origin.is_finite() || !ray.direction.is_finite() {
        return Err(OpticsError::NonFinite("ray origin or direction".into()));
    }
    check_unit(ray.direction, "ray direction")?;
    if ray.intensity.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
        return Err(OpticsError::ContractViolation(
            "ray intensity channels must be finite and >= 0".into(),
        ));
    }

    let mut out = Vec::new();
    let mut stack = vec![Branch {
        ray: ray.clone(),
        segments: Vec::new(),
        events: Vec::new(),
        interface_events: 0,
        deflection: 0.0,
    }];

    let finish = |b: Branch, kind: EventKind, point: Point, out: &mut Vec<RayPath>| {
        let mut events = b.events;
        events.push(PathEvent {
            kind,
            point,
            interface: None,
        });
        out.push(RayPath {
            ray_index,
            segments: b.segments,
            events,
            total_deflection: b.deflection,
        });
    };

    while let Some(mut branch) = stack.pop() {
        let r = &branch.ray;
        if rgb_max(&r.intensity) < limits.min_intensity {
            let p = r.origin;
            finish(branch, EventKind::Absorbed, p, &mut out);
            continue;
        }
        let Some(hit) = scene.nearest_hit(r) else {
            let length = scene.escape_distance(r);
            let end = r.at(length);
            let medium = scene.medium_at(r.at(0.5 * length));
            branch.segments.push(Segment {
                start: r.origin,
                end,
                intensity: r.intensity,
                extinction: medium.extinction(),
            });
            finish(branch, EventKind::Escaped, end, &mut out);
            continue;
        };

        let medium = scene.medium_at(r.at(0.5 * hit.distance)).clone();
        let extinction = medium.extinction();
        let t = extinction_transmission(&extinction, hit.distance);
        let arriving = [
            r.intensity[0] * t[0],
            r.intensity[1] * t[1],
            r.intensity[2] * t[2],
        ];
        branch.segments.push(Segment {
            start: r.origin,
            end: hit.point,
            intensity: r.intensity,
            extinction,
        });
        let incident = r.direction;
        let path_length = r.path_length + hit.distance;

        if rgb_max(&arriving) < limits.min_intensity {
            finish(branch, EventKind::Absorbed, hit.point, &mut out);
            continue;
        }
        if branch.interface_events >= limits.max_events {
            finish(branch, EventKind::MaxDepth, hit.point, &mut out);
            continue;
        }

        let n1 = hit.media.0.refractive_index;
        let n2 = hit.media.1.refractive_index;
        let cos_i = (-incident.dot(hit.normal)).clamp(0.0, 1.0);
        let incidence = cos_i.acos();
        let reflectance = fresnel_reflectance(cos_i, n1, n2);
        let reflected_dir = reflect(incident, hit.normal);
        let label = scene.surface_label(hit.surface);

        match refract_unchecked(incident, hit.normal, n1, n2) {
            Refraction::TotalInternalReflection => {
                branch.events.push(PathEvent {
                    kind: EventKind::Tir,
                    point: hit.point,
                    interface: Some(Interface {
                        surface: label,
                        n1,
                        n2,
                        incidence,
                        outgoing: incidence,
                    }),
                });
                branch.interface_events += 1;
                branch.deflection += incident.angle_to(reflected_dir);
                branch.ray = Ray {
                    origin: hit.point,
                    direction: reflected_dir,
                    intensity: arriving,
                    path_length,
                };
                stack.push(branch);
            }
            Refraction::Transmitted(refracted_dir) => {
                let slab = scene.fracture_transmission(hit.surface);
                let transmitted = rgb_scale(&arriving, 1.0 - reflectance);
                let transmitted = [
                    transmitted[0] * slab[0],
                    transmitted[1] * slab[1],
                    transmitted[2] * slab[2],
                ];
                let reflected = rgb_scale(&arriving, reflectance);
                let outgoing = (-hit.normal).angle_to(refracted_dir);

                if rgb_max(&reflected) >= limits.min_intensity {
                    let mut events = branch.events.clone();
                    events.push(PathEvent {
                        kind: EventKind::Reflect,
                        point: hit.point,
                        interface: Some(Interface {
                            surface: label.clone(),
                            n1,
                            n2,
                            incidence,
                            outgoing: incidence,
                        }),
                    });
                    stack.push(Branch {
                        ray: Ray {
                            origin: hit.point,
                            direction: reflected_dir,
                            intensity: reflected,
                            path_length,
                        },
                        segments: branch.segments.clone(),
                        events,
                        interface_events: branch.interface_events + 1,
                        deflection: branch.deflection + incident.angle_to(reflected_dir),
                    });
                }
                if rgb_max(&transmitted) >= limits.min_intensity {
                    branch.events.push(PathEvent {
                        kind: EventKind::Refract,
                        point: hit.point,
                        interface: Some(Interface {
                            surface: label,
                            n1,
                            n2,
                            incidence,
                            outgoing,
                        }),
                    });
                    branch.interface_events += 1;
                    branch.deflection += incident.angle_to(refracted_dir);
                    branch.ray = Ray {
                        origin: hit.point,
                        direction: refracted_dir,
                        intensity: transmitted,
                        path_length,
                    };
                    stack.push(branch);
                } else if rgb_max(&reflected) < limits.min_intensity {
                    finish(branch, EventKind::Absorbed, hit.point, &mut out);
                }
            }
        }
    }
    Ok(out)
}

/// World-space origin of a beam.
pub fn beam_origin(scenario: &Scenario, beam: &Beam) -> Result<Point, OpticsError> {
    match (&beam.source_sphere, beam.origin) {
        (Some(id), _) => scenario
            .sphere(id)
            .map(|s| s.point_at_depth(beam.origin_depth, beam.origin_angle))
            .ok_or_else(|| OpticsError::Validation(format!("unknown source sphere {id}"))),
        (None, Some(p)) => Ok(p),
        (None, None) => Err(OpticsError::Validation(format!(
            "beam {} has neither a source sphere nor an origin",
            beam.id
        ))),
    }
}

/// Emission directions of a beam, evenly spaced across its spread.
pub fn beam_directions(beam: &Beam) -> Result<Vec<f64>, OpticsError> {
    if beam.ray_count < 1 {
        return Err(OpticsError::Validation("ray_count must be >= 1".into()));
    }
    if !(beam.spread >= 0.0) {
        return Err(OpticsError::Validation("spread must be >= 0".into()));
    }
    let n = beam.ray_count as usize;
    if n == 1 {
        return Ok(vec![beam.direction]);
    }
    let lo = beam.direction - 0.5 * beam.spread;
    let step = beam.spread / (n - 1) as f64;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

/// Rays emitted by a beam, in emission order.
pub fn beam_rays(scenario: &Scenario, beam: &Beam) -> Result<Vec<Ray>, OpticsError> {
    let origin = beam_origin(scenario, beam)?;
    let dirs = beam_directions(beam)?;
    let share = rgb_scale(&beam.intensity, 1.0 / dirs.len() as f64);
    Ok(dirs
        .into_iter()
        .map(|a| Ray::new(origin, Vec2::from_angle(a), share))
        .collect())
}

/// Traces every ray of `beam`; results are concatenated in emission order.
pub fn trace_beam(
    scene: &OpticalScene,
    scenario: &Scenario,
    beam: &Beam,
    limits: &TraceLimits,
) -> Result<Vec<RayPath>, OpticsError> {
    let mut out = Vec::new();
    for (i, ray) in beam_rays(scenario, beam)?.iter().enumerate() {
        out.extend(trace_indexed(scene, ray, limits, i)?);
    }
    Ok(out)
}

/// Largest pairwise angle between the directions of segment `index` across
/// `paths`.
pub fn fan_spread(paths: &[RayPath], index: usize) -> Result<f64, OpticsError> {
    let mut dirs = Vec::with_capacity(paths.len());
    for p in paths {
        let seg = p.segments.get(index).ok_or(OpticsError::IndexOutOfRange {
            index,
            len: p.segments.len(),
        })?;
        dirs.push(seg.direction());
    }
    let mut spread = 0.0f64;
    for (i, a) in dirs.iter().enumerate() {
        for b in &dirs[i + 1..] {
            spread = spread.max(a.angle_to(*b));
        }
    }
    Ok(spread)
}
