//! Scene vocabulary: psyche spheres, beams, sparks and scenarios.
//!
//! A [`Scenario`] is a full scene snapshot. Scenarios form a fork tree; once a
//! scenario has been forked its content is frozen and further edits happen on
//! its children.

mod canonical;
mod ops;
mod validate;

use serde::{Deserialize, Serialize};

use crate::geom::{Point, Rgb, Vec2};
use crate::optics::Medium;
use crate::waves::Waveform;

pub use canonical::{
    content_digest, deserialize, serialize, serialize_content, DocumentError, DocumentErrorCode,
    to_canonical_json, SCHEMA_VERSION,
};
pub use ops::{deepen, fork, new_id, now_timestamp, perspective, reveal, SceneError};
pub use validate::{validate, Violation};

/// Absorption per unit length contributed by a fully opaque shell.
pub const SHELL_OPACITY_ABSORPTION: f64 = 10.0;

/// Default absorption of an opaque bubble.
pub const BUBBLE_DEFAULT_ABSORPTION: f64 = 10.0;

/// Depth at or below which a beam is labelled a deep thought.
pub const DEEP_THOUGHT_DEPTH: f64 = 0.2;
/// Depth at or above which a beam is labelled superficial.
pub const SUPERFICIAL_THOUGHT_DEPTH: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShellSector {
    pub start: f64,
    pub end: f64,
    pub color: Rgb,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shell {
    /// Fraction of the sphere radius, in `(0, 1)`.
    pub thickness: f64,
    pub medium: Medium,
    /// `0` is clear, `1` is opaque.
    pub opacity: f64,
    #[serde(default)]
    pub sectors: Vec<ShellSector>,
}

impl Shell {
    /// The shell medium with opacity folded into its absorption.
    pub fn effective_medium(&self) -> Medium {
        Medium {
            absorption: self.medium.absorption + SHELL_OPACITY_ABSORPTION * self.opacity,
            ..self.medium.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fracture {
    pub a: Point,
    pub b: Point,
    pub width: f64,
    pub medium: Medium,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub center: Point,
    pub radius: f64,
    pub medium: Medium,
}

impl Bubble {
    pub fn opaque(center: Point, radius: f64) -> Self {
        Bubble {
            center,
            radius,
            medium: Medium {
                absorption: BUBBLE_DEFAULT_ABSORPTION,
                ..Medium::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsycheSphere {
    pub id: String,
    #[serde(default)]
    pub label: String,
    pub center: Point,
    pub radius: f64,
    pub interior: Medium,
    #[serde(default)]
    pub light_level: f64,
    #[serde(default)]
    pub shell: Option<Shell>,
    #[serde(default)]
    pub fractures: Vec<Fracture>,
    #[serde(default)]
    pub bubbles: Vec<Bubble>,
    /// Ids of spheres nested strictly inside this one.
    #[serde(default)]
    pub children: Vec<String>,
    #[serde(default)]
    pub border_blur: f64,
    /// Render-only cross-section flag.
    #[serde(default)]
    pub revealed: bool,
}

impl PsycheSphere {
    /// A clear crystal sphere (n = 1.5) with no shell or inclusions.
    pub fn crystal(id: impl Into<String>, center: Point, radius: f64) -> Self {
        let id = id.into();
        PsycheSphere {
            label: id.clone(),
            id,
            center,
            radius,
            interior: Medium::glass(1.5),
            light_level: 0.0,
            shell: None,
            fractures: Vec::new(),
            bubbles: Vec::new(),
            children: Vec::new(),
            border_blur: 0.0,
            revealed: false,
        }
    }

    /// World-space point at fractional `depth` from the center along `angle`.
    pub fn point_at_depth(&self, depth: f64, angle: f64) -> Point {
        self.center + Vec2::from_angle(angle) * (depth * self.radius)
    }

    pub fn contains(&self, p: Point) -> bool {
        p.distance(self.center) < self.radius
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub id: String,
    #[serde(default)]
    pub source_sphere: Option<String>,
    /// World-space origin for beams not anchored to a sphere.
    #[serde(default)]
    pub origin: Option<Point>,
    /// `0` at the sphere center, `1` at its surface.
    #[serde(default)]
    pub origin_depth: f64,
    #[serde(default)]
    pub origin_angle: f64,
    pub direction: f64,
    #[serde(default)]
    pub spread: f64,
    pub ray_count: u32,
    pub intensity: Rgb,
    #[serde(default)]
    pub waveform: Option<Waveform>,
}

impl Beam {
    pub fn is_deep(&self) -> bool {
        self.origin_depth <= DEEP_THOUGHT_DEPTH
    }

    pub fn is_superficial(&self) -> bool {
        self.origin_depth >= SUPERFICIAL_THOUGHT_DEPTH
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spark {
    pub sphere_pair: [String; 2],
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub spheres: Vec<PsycheSphere>,
    #[serde(default)]
    pub beams: Vec<Beam>,
    #[serde(default)]
    pub sparks: Vec<Spark>,
    #[serde(default)]
    pub notes: String,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub children: Vec<String>,
    pub created_at: String,
    /// Sphere the view is centered on, set by [`perspective`].
    #[serde(default)]
    pub perspective: Option<String>,
}

impl Scenario {
    pub fn new(title: impl Into<String>) -> Self {
        Scenario {
            id: new_id(),
            title: title.into(),
            spheres: Vec::new(),
            beams: Vec::new(),
            sparks: Vec::new(),
            notes: String::new(),
            parent: None,
            children: Vec::new(),
            created_at: now_timestamp(),
            perspective: None,
        }
    }

    pub fn sphere(&self, id: &str) -> Option<&PsycheSphere> {
        self.spheres.iter().find(|s| s.id == id)
    }

    pub fn sphere_mut(&mut self, id: &str) -> Option<&mut PsycheSphere> {
        self.spheres.iter_mut().find(|s| s.id == id)
    }

    pub fn beam(&self, id: &str) -> Option<&Beam> {
        self.beams.iter().find(|b| b.id == id)
    }

    pub fn beam_mut(&mut self, id: &str) -> Option<&mut Beam> {
        self.beams.iter_mut().find(|b| b.id == id)
    }

    /// Forked scenarios are frozen.
    pub fn is_forked(&self) -> bool {
        !self.children.is_empty()
    }

    /// Smallest circle enclosing every sphere, as `(center, radius)`.
    pub fn bounds(&self) -> Option<(Point, f64)> {
        let first = self.spheres.first()?;
        let (mut lo, mut hi) = (first.center, first.center);
        for s in &self.spheres {
            lo.x = lo.x.min(s.center.x - s.radius);
            lo.y = lo.y.min(s.center.y - s.radius);
            hi.x = hi.x.max(s.center.x + s.radius);
            hi.y = hi.y.max(s.center.y + s.radius);
        }
        let center = (lo + hi) * 0.5;
        let radius = self
            .spheres
            .iter()
            .map(|s| s.center.distance(center) + s.radius)
            .fold(0.0, f64::max);
        Some((center, radius))
    }
}
