use std::collections::HashSet;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{Beam, PsycheSphere, Scenario};
use crate::geom::Point;
use crate::optics::Medium;

/// A broken scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    /// Id of the offending sphere, beam, spark or scenario.
    pub id: String,
    pub rule: String,
    pub message: String,
}

struct Checker {
    out: Vec<Violation>,
}

impl Checker {
    fn fail(&mut self, id: &str, rule: &str, message: impl Into<String>) {
        self.out.push(Violation {
            id: id.to_string(),
            rule: rule.to_string(),
            message: message.into(),
        });
    }

    fn finite(&mut self, id: &str, what: &str, v: f64) -> bool {
        if v.is_finite() {
            true
        } else {
            self.fail(id, "non-finite", format!("{what} is not finite"));
            false
        }
    }

    fn point(&mut self, id: &str, what: &str, p: Point) -> bool {
        let x = self.finite(id, what, p.x);
        let y = self.finite(id, what, p.y);
        x && y
    }

    fn medium(&mut self, id: &str, what: &str, m: &Medium) {
        if !(m.refractive_index >= 0.1) || !m.refractive_index.is_finite() {
            self.fail(
                id,
                "medium-index",
                format!("{what} refractive index {} < 0.1", m.refractive_index),
            );
        }
        if !(m.absorption >= 0.0) || !m.absorption.is_finite() {
            self.fail(id, "medium-absorption", format!("{what} absorption {} < 0", m.absorption));
        }
        if m.tint.iter().any(|c| !(0.0..=1.0).contains(c)) {
            self.fail(id, "medium-tint", format!("{what} tint channels must lie in [0, 1]"));
        }
    }

    fn sphere(&mut self, s: &PsycheSphere) {
        let id = s.id.as_str();
        let center_ok = self.point(id, "center", s.center);
        if !(s.radius > 0.0) || !s.radius.is_finite() {
            self.fail(id, "radius-positive", format!("radius {} must be > 0", s.radius));
        }
        self.medium(id, "interior", &s.interior);
        if !(s.light_level >= 0.0) || !s.light_level.is_finite() {
            self.fail(id, "light-level", format!("light_level {} must be >= 0", s.light_level));
        }
        if !(s.border_blur >= 0.0) || !s.border_blur.is_finite() {
            self.fail(id, "border-blur", format!("border_blur {} must be >= 0", s.border_blur));
        }
        if let Some(shell) = &s.shell {
            if !(shell.thickness > 0.0 && shell.thickness < 1.0) {
                self.fail(
                    id,
                    "shell-thickness",
                    format!("shell thickness {} outside (0, 1)", shell.thickness),
                );
            }
            if !(0.0..=1.0).contains(&shell.opacity) {
                self.fail(id, "shell-opacity", format!("shell opacity {} outside [0, 1]", shell.opacity));
            }
            self.medium(id, "shell", &shell.medium);
            for sector in &shell.sectors {
                let ok = [sector.start, sector.end].iter().all(|a| a.is_finite())
                    && sector.color.iter().all(|c| (0.0..=1.0).contains(c));
                if !ok {
                    self.fail(id, "shell-sector", "sector angles must be finite and colors in [0, 1]");
                }
            }
        }
        if !center_ok || !(s.radius > 0.0) {
            return;
        }
        let interior_radius = s
            .shell
            .as_ref()
            .map_or(s.radius, |sh| s.radius * (1.0 - sh.thickness.clamp(0.0, 1.0)));
        for (i, f) in s.fractures.iter().enumerate() {
            let a_ok = self.point(id, "fracture endpoint", f.a);
            let b_ok = self.point(id, "fracture endpoint", f.b);
            if a_ok && b_ok && f.a == f.b {
                self.fail(id, "fracture-degenerate", format!("fracture {i} has coincident endpoints"));
            }
            if !(f.width > 0.0) || !f.width.is_finite() {
                self.fail(id, "fracture-width", format!("fracture {i} width {} must be > 0", f.width));
            }
            if a_ok
                && b_ok
                && (f.a.distance(s.center) >= interior_radius
                    || f.b.distance(s.center) >= interior_radius)
            {
                self.fail(
                    id,
                    "fracture-containment",
                    format!("fracture {i} leaves the interior of sphere {id}"),
                );
            }
            self.medium(id, "fracture", &f.medium);
        }
        for (i, b) in s.bubbles.iter().enumerate() {
            let c_ok = self.point(id, "bubble center", b.center);
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                self.fail(id, "bubble-radius", format!("bubble {i} radius {} must be > 0", b.radius));
            } else if c_ok && b.center.distance(s.center) + b.radius >= interior_radius {
                self.fail(
                    id,
                    "bubble-containment",
                    format!("bubble {i} is not wholly inside sphere {id}"),
                );
            }
            self.medium(id, "bubble", &b.medium);
        }
    }

    fn beam(&mut self, b: &Beam, spheres: &HashSet<&str>) {
        let id = b.id.as_str();
        if !(0.0..=1.0).contains(&b.origin_depth) {
            self.fail(id, "beam-depth", format!("origin_depth {} outside [0, 1]", b.origin_depth));
        }
        if b.ray_count < 1 {
            self.fail(id, "beam-ray-count", "ray_count must be >= 1");
        }
        if !(b.spread >= 0.0) || !b.spread.is_finite() {
            self.fail(id, "beam-spread", format!("spread {} must be >= 0", b.spread));
        }
        self.finite(id, "direction", b.direction);
        self.finite(id, "origin_angle", b.origin_angle);
        if b.intensity.iter().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            self.fail(id, "beam-intensity", "intensity channels must be finite and >= 0");
        }
        match (&b.source_sphere, b.origin) {
            (Some(s), _) if !spheres.contains(s.as_str()) => {
                self.fail(id, "beam-source", format!("unknown source sphere {s}"));
            }
            (None, None) => self.fail(id, "beam-source", "beam needs a source sphere or an origin"),
            (None, Some(p)) => {
                self.point(id, "origin", p);
            }
            _ => {}
        }
        if let Some(w) = &b.waveform {
            for (i, c) in w.components.iter().enumerate() {
                if !(c.frequency > 0.0) || !c.frequency.is_finite() {
                    self.fail(id, "wave-frequency", format!("component {i} frequency must be > 0"));
                }
                if !(c.amplitude >= 0.0) || !c.amplitude.is_finite() {
                    self.fail(id, "wave-amplitude", format!("component {i} amplitude must be >= 0"));
                }
                if !(0.0..TAU).contains(&c.phase) {
                    self.fail(id, "wave-phase", format!("component {i} phase outside [0, 2π)"));
                }
            }
        }
    }
}

/// Checks every scenario invariant. An empty list means the scenario is valid.
pub fn validate(s: &Scenario) -> Vec<Violation> {
    let mut c = Checker { out: Vec::new() };

    let mut seen = HashSet::new();
    for id in s.spheres.iter().map(|x| &x.id).chain(s.beams.iter().map(|b| &b.id)) {
        if !seen.insert(id.as_str()) {
            c.fail(id, "duplicate-id", format!("id {id} is used more than once"));
        }
    }
    let sphere_ids: HashSet<&str> = s.spheres.iter().map(|x| x.id.as_str()).collect();

    for sphere in &s.spheres {
        c.sphere(sphere);
    }

    // Nesting: declared children must resolve and sit strictly inside.
    for parent in &s.spheres {
        for child_id in &parent.children {
            match s.sphere(child_id) {
                None => c.fail(&parent.id, "child-ref", format!("unknown child sphere {child_id}")),
                Some(child) if child.id == parent.id => {
                    c.fail(&parent.id, "child-ref", "sphere lists itself as a child")
                }
                Some(child) => {
                    if !(child.center.distance(parent.center) + child.radius < parent.radius) {
                        c.fail(
                            &child.id,
                            "child-containment",
                            format!("child {} is not wholly inside {}", child.id, parent.id),
                        );
                    }
                }
            }
        }
    }

    // Overlap is allowed only along declared nesting (transitively).
    let nested = |outer: &str, inner: &str| -> bool {
        let mut stack = vec![outer];
        let mut visited = HashSet::new();
        while let Some(cur) = stack.pop() {
            if !visited.insert(cur) {
                continue;
            }
            if let Some(sp) = s.sphere(cur) {
                for ch in &sp.children {
                    if ch == inner {
                        return true;
                    }
                    stack.push(ch.as_str());
                }
            }
        }
        false
    };
    for (i, a) in s.spheres.iter().enumerate() {
        for b in &s.spheres[i + 1..] {
            let d = a.center.distance(b.center);
            if d < a.radius + b.radius && !nested(&a.id, &b.id) && !nested(&b.id, &a.id) {
                c.fail(
                    &b.id,
                    "sphere-overlap",
                    format!("spheres {} and {} overlap without nesting", a.id, b.id),
                );
            }
        }
    }

    for beam in &s.beams {
        c.beam(beam, &sphere_ids);
    }

    for spark in &s.sparks {
        let [a, b] = &spark.sphere_pair;
        let label = format!("{a}~{b}");
        if a == b {
            c.fail(&label, "spark-distinct", "spark must connect two distinct spheres");
        }
        for end in [a, b] {
            if !sphere_ids.contains(end.as_str()) {
                c.fail(&label, "spark-ref", format!("unknown sphere {end}"));
            }
        }
        if !(spark.intensity >= 0.0) || !spark.intensity.is_finite() {
            c.fail(&label, "spark-intensity", "spark intensity must be >= 0");
        }
    }

    if s.parent.as_deref() == Some(s.id.as_str()) || s.children.iter().any(|ch| *ch == s.id) {
        c.fail(&s.id, "fork-cycle", "scenario cannot be its own parent or child");
    }
    if let Some(p) = &s.parent {
        if s.children.contains(p) {
            c.fail(&s.id, "fork-cycle", "parent also listed as a child");
        }
    }

    c.out
}
