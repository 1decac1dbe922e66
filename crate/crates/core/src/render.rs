//! SVG rendering of scenarios.
//!
//! Layers are emitted in a fixed order (background, spheres, interiors,
//! shells, shadows, sparks, rays) and every number is printed with four
//! decimals, so identical inputs always produce identical bytes.

use std::collections::HashSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::geom::{rgb_max, Point, Rgb};
use crate::optics::{trace_beam, OpticalScene, OpticsError, RayPath, TraceLimits};
use crate::radiance::{EquilibriumReport, RadianceGrid};
use crate::scene::{perspective, PsycheSphere, SceneError, Scenario};

pub const CANVAS_PX: u32 = 800;
const PANEL_PX: f64 = 300.0;
const PANEL_GAP: f64 = 40.0;
const BACKGROUND: &str = "#0b0b14";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RenderError {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

/// What to draw in a single-scenario render.
#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Trace and draw the scenario's beams.
    pub traces: bool,
    pub limits: TraceLimits,
    /// Fraction of each ray path's arclength to draw, for slow-motion frames.
    pub fraction: f64,
    /// Equilibrium results to overlay (shadow regions and brightness).
    pub radiance: Vec<(RadianceGrid, EquilibriumReport)>,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            traces: true,
            limits: TraceLimits::default(),
            fraction: 1.0,
            radiance: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderMode {
    View,
    Overview,
    Perspective,
}

impl std::str::FromStr for RenderMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "view" => Ok(RenderMode::View),
            "overview" => Ok(RenderMode::Overview),
            "perspective" => Ok(RenderMode::Perspective),
            other => Err(format!("unknown render mode {other:?}")),
        }
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".to_string()
    } else {
        s
    }
}

fn color(c: &Rgb) -> String {
    let ch = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(c[0]), ch(c[1]), ch(c[2]))
}

fn normalized_color(c: &Rgb) -> Rgb {
    let m = rgb_max(c);
    if m > 0.0 {
        [c[0] / m, c[1] / m, c[2] / m]
    } else {
        [1.0; 3]
    }
}

pub(crate) fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// SVG point with y flipped to screen orientation.
fn xy(p: Point) -> (String, String) {
    (num(p.x), num(-p.y))
}

/// Truncates a path to `fraction` of its arclength.
pub fn truncate_path(path: &RayPath, fraction: f64) -> RayPath {
    if fraction >= 1.0 {
        return path.clone();
    }
    let budget = path.arclength() * fraction.max(0.0);
    let mut out = RayPath {
        segments: Vec::new(),
        events: Vec::new(),
        ..path.clone()
    };
    let mut used = 0.0;
    for seg in &path.segments {
        let len = seg.length();
        if used + len <= budget {
            out.segments.push(seg.clone());
            used += len;
        } else {
            let remain = budget - used;
            if remain > 0.0 {
                let mut part = seg.clone();
                part.end = seg.start + seg.direction() * remain;
                out.segments.push(part);
            }
            break;
        }
    }
    out
}

struct Body {
    defs: String,
    layers: String,
    view_box: (f64, f64, f64, f64),
}

fn view_box(s: &Scenario) -> (f64, f64, f64, f64) {
    match s.bounds() {
        Some((c, r)) => {
            let half = 1.5 * r.max(1e-6);
            (c.x - half, -c.y - half, 2.0 * half, 2.0 * half)
        }
        None => (-1.0, -1.0, 2.0, 2.0),
    }
}

fn sphere_defs(out: &mut String, ns: &str, i: usize, s: &PsycheSphere, boost: f64) {
    let b = (s.light_level / (1.0 + s.light_level)) * boost;
    let tint = color(&s.interior.tint);
    let _ = write!(
        out,
        r#"<radialGradient id="{ns}glow-{i}"><stop offset="0" stop-color="{tint}" stop-opacity="{}"/><stop offset="1" stop-color="{tint}" stop-opacity="{}"/></radialGradient>"#,
        num(b.clamp(0.0, 1.0)),
        num((0.3 * b).clamp(0.0, 1.0)),
    );
    if s.border_blur > 0.0 {
        let _ = write!(
            out,
            r#"<filter id="{ns}blur-{i}" x="-50%" y="-50%" width="200%" height="200%"><feGaussianBlur stdDeviation="{}"/></filter>"#,
            num(s.border_blur)
        );
    }
}

fn arc_path(center: Point, radius: f64, start: f64, end: f64) -> String {
    let p0 = center + crate::geom::Vec2::from_angle(start) * radius;
    let p1 = center + crate::geom::Vec2::from_angle(end) * radius;
    let sweep = (end - start).rem_euclid(std::f64::consts::TAU);
    let large = if sweep > std::f64::consts::PI { 1 } else { 0 };
    let (x0, y0) = xy(p0);
    let (x1, y1) = xy(p1);
    // Screen y is flipped, so counter-clockwise in scene space is sweep-flag 0.
    format!("M {x0} {y0} A {r} {r} 0 {large} 0 {x1} {y1}", r = num(radius))
}

fn scene_body(s: &Scenario, opts: &RenderOptions, ns: &str) -> Result<Body, RenderError> {
    let mut defs = String::new();
    let mut layers = String::new();
    let vb = view_box(s);
    let _ = write!(
        layers,
        r#"<g id="{ns}background"><rect x="{}" y="{}" width="{}" height="{}" fill="{BACKGROUND}"/></g>"#,
        num(vb.0),
        num(vb.1),
        num(vb.2),
        num(vb.3)
    );
    if s.spheres.is_empty() && s.beams.is_empty() {
        return Ok(Body { defs, layers, view_box: vb });
    }

    let overlay = |id: &str| opts.radiance.iter().find(|(g, _)| g.sphere_id == id);

    // Spheres.
    layers.push_str(&format!(r#"<g id="{ns}spheres">"#));
    for (i, sp) in s.spheres.iter().enumerate() {
        let boost = overlay(&sp.id).map_or(1.0, |(_, rep)| 0.5 + 0.5 * rep.uniformity);
        sphere_defs(&mut defs, ns, i, sp, boost);
        let (cx, cy) = xy(sp.center);
        let filter = if sp.border_blur > 0.0 {
            format!(r#" filter="url(#{ns}blur-{i})""#)
        } else {
            String::new()
        };
        let _ = write!(
            layers,
            r##"<circle class="sphere" data-id="{}" cx="{cx}" cy="{cy}" r="{}" fill="url(#{ns}glow-{i})" stroke="#9aa4c8" stroke-width="{}"{filter}/>"##,
            escape_xml(&sp.id),
            num(sp.radius),
            num(0.01 * sp.radius),
        );
        if !sp.label.is_empty() {
            let (tx, ty) = xy(sp.center + crate::geom::Vec2::new(0.0, -1.15 * sp.radius));
            let _ = write!(
                layers,
                r##"<text x="{tx}" y="{ty}" font-size="{}" text-anchor="middle" fill="#c8cde0">{}</text>"##,
                num(0.12 * sp.radius),
                escape_xml(&sp.label)
            );
        }
    }
    layers.push_str("</g>");

    // Interiors: fractures and bubbles.
    layers.push_str(&format!(r#"<g id="{ns}interiors">"#));
    for sp in &s.spheres {
        for f in &sp.fractures {
            let (x1, y1) = xy(f.a);
            let (x2, y2) = xy(f.b);
            let _ = write!(
                layers,
                r##"<line class="fracture" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="#e8f0ff" stroke-opacity="0.8" stroke-width="{}"/>"##,
                num(f.width.max(0.005 * sp.radius))
            );
        }
        for b in &sp.bubbles {
            let (cx, cy) = xy(b.center);
            let opacity = 1.0 - (-b.medium.absorption * b.radius).exp();
            let _ = write!(
                layers,
                r##"<circle class="bubble" cx="{cx}" cy="{cy}" r="{}" fill="#050508" fill-opacity="{}"/>"##,
                num(b.radius),
                num(opacity)
            );
        }
    }
    layers.push_str("</g>");

    // Shells, and occluders hiding the interior of unrevealed shelled spheres.
    layers.push_str(&format!(r#"<g id="{ns}shells">"#));
    for sp in &s.spheres {
        let Some(shell) = &sp.shell else { continue };
        let (cx, cy) = xy(sp.center);
        let thick = shell.thickness * sp.radius;
        let mid = sp.radius - 0.5 * thick;
        let tint = color(&shell.medium.tint);
        if sp.revealed {
            let _ = write!(
                layers,
                r#"<circle class="shell cross-section" cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="{tint}" stroke-opacity="0.25" stroke-dasharray="{}" stroke-width="{}"/>"#,
                num(mid),
                num(0.05 * sp.radius),
                num(thick)
            );
        } else {
            if shell.opacity > 0.0 {
                let _ = write!(
                    layers,
                    r##"<circle class="occluder" cx="{cx}" cy="{cy}" r="{}" fill="#111118" fill-opacity="{}"/>"##,
                    num(sp.radius - thick),
                    num(shell.opacity)
                );
            }
            let _ = write!(
                layers,
                r#"<circle class="shell" cx="{cx}" cy="{cy}" r="{}" fill="none" stroke="{tint}" stroke-opacity="{}" stroke-width="{}"/>"#,
                num(mid),
                num(shell.opacity.max(0.15)),
                num(thick)
            );
        }
        for sector in &shell.sectors {
            let _ = write!(
                layers,
                r#"<path class="sector" d="{}" fill="none" stroke="{}" stroke-opacity="{}" stroke-width="{}"/>"#,
                arc_path(sp.center, mid, sector.start, sector.end),
                color(&sector.color),
                num(if sp.revealed { 0.25 } else { shell.opacity.max(0.15) }),
                num(thick)
            );
        }
    }
    layers.push_str("</g>");

    // Shadow overlays from equilibrium runs.
    layers.push_str(&format!(r#"<g id="{ns}shadows">"#));
    for (grid, report) in &opts.radiance {
        for region in &report.shadow_regions {
            for &(c, r) in region {
                let center = grid.cell_center(c, r);
                let h = 0.5 * grid.cell_size;
                let _ = write!(
                    layers,
                    r##"<rect class="shadow" x="{}" y="{}" width="{}" height="{}" fill="#000000" fill-opacity="0.55"/>"##,
                    num(center.x - h),
                    num(-(center.y + h)),
                    num(grid.cell_size),
                    num(grid.cell_size)
                );
            }
        }
    }
    layers.push_str("</g>");

    // Sparks as dashed arcs between sphere rims.
    layers.push_str(&format!(r#"<g id="{ns}sparks">"#));
    for spark in &s.sparks {
        let (Some(a), Some(b)) = (s.sphere(&spark.sphere_pair[0]), s.sphere(&spark.sphere_pair[1])) else {
            continue;
        };
        let d = (b.center - a.center).normalized();
        let p0 = a.center + d * a.radius;
        let p1 = b.center - d * b.radius;
        let mid = (p0 + p1) * 0.5 + d.perp() * (0.25 * p0.distance(p1));
        let ((x0, y0), (qx, qy), (x1, y1)) = (xy(p0), xy(mid), xy(p1));
        let w = 0.02 * a.radius.min(b.radius);
        let _ = write!(
            layers,
            r##"<path class="spark" d="M {x0} {y0} Q {qx} {qy} {x1} {y1}" fill="none" stroke="#ffd27a" stroke-opacity="{}" stroke-width="{}" stroke-dasharray="{} {}"/>"##,
            num(spark.intensity.clamp(0.0, 1.0)),
            num(w),
            num(3.0 * w),
            num(2.0 * w)
        );
    }
    layers.push_str("</g>");

    // Ray paths.
    layers.push_str(&format!(r#"<g id="{ns}rays">"#));
    if opts.traces && !s.beams.is_empty() {
        let scene = OpticalScene::new(s)?;
        let width = s.bounds().map_or(0.01, |(_, r)| 0.006 * r);
        for beam in &s.beams {
            let paths = trace_beam(&scene, s, beam, &opts.limits)?;
            let per_ray = rgb_max(&beam.intensity) / beam.ray_count.max(1) as f64;
            let stroke = color(&normalized_color(&beam.intensity));
            let mut seen = HashSet::new();
            for path in &paths {
                let path = truncate_path(path, opts.fraction);
                for seg in &path.segments {
                    let (x1, y1) = xy(seg.start);
                    let (x2, y2) = xy(seg.end);
                    let opacity = if per_ray > 0.0 {
                        (rgb_max(&seg.intensity) / per_ray).clamp(0.0, 1.0)
                    } else {
                        0.0
                    };
                    let line = format!(
                        r#"<line class="ray" data-beam="{}" x1="{x1}" y1="{y1}" x2="{x2}" y2="{y2}" stroke="{stroke}" stroke-opacity="{}" stroke-width="{}"/>"#,
                        escape_xml(&beam.id),
                        num(opacity),
                        num(width)
                    );
                    if seen.insert(line.clone()) {
                        layers.push_str(&line);
                    }
                }
            }
        }
    }
    layers.push_str("</g>");

    Ok(Body { defs, layers, view_box: vb })
}

fn document(width: f64, height: f64, vb: (f64, f64, f64, f64), defs: &str, body: &str) -> String {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="{} {} {} {}">"#,
        width.round() as u64,
        height.round() as u64,
        num(vb.0),
        num(vb.1),
        num(vb.2),
        num(vb.3)
    );
    if !defs.is_empty() {
        let _ = write!(out, "<defs>{defs}</defs>");
    }
    out.push_str(body);
    out.push_str("</svg>\n");
    out
}

/// Renders one scenario.
pub fn render_view(s: &Scenario, opts: &RenderOptions) -> Result<String, RenderError> {
    let body = scene_body(s, opts, "")?;
    let px = CANVAS_PX as f64;
    Ok(document(px, px, body.view_box, &body.defs, &body.layers))
}

/// Renders `s` as seen from the sphere `focus`.
pub fn render_perspective(s: &Scenario, focus: &str, opts: &RenderOptions) -> Result<String, RenderError> {
    render_view(&perspective(s, focus)?, opts)
}

/// Timeline overview: ancestors (oldest first) to the left of the focal
/// scenario, descendants to the right, each as a miniature.
pub fn render_overview(
    focal: &Scenario,
    ancestors: &[Scenario],
    descendants: &[Scenario],
    opts: &RenderOptions,
) -> Result<String, RenderError> {
    let panels: Vec<(&Scenario, bool)> = ancestors
        .iter()
        .map(|s| (s, false))
        .chain(std::iter::once((focal, true)))
        .chain(descendants.iter().map(|s| (s, false)))
        .collect();
    let n = panels.len() as f64;
    let width = n * PANEL_PX + (n + 1.0) * PANEL_GAP;
    let height = PANEL_PX + 2.5 * PANEL_GAP;

    let mut defs = String::new();
    let mut body = String::new();
    let _ = write!(
        body,
        r#"<g id="background"><rect x="0" y="0" width="{}" height="{}" fill="{BACKGROUND}"/></g><g id="timeline">"#,
        num(width),
        num(height)
    );
    for (k, (s, is_focal)) in panels.iter().enumerate() {
        let ns = format!("p{k}-");
        let panel = scene_body(s, opts, &ns)?;
        defs.push_str(&panel.defs);
        let x = PANEL_GAP + k as f64 * (PANEL_PX + PANEL_GAP);
        let y = PANEL_GAP;
        let role = if *is_focal {
            "focal"
        } else if k < ancestors.len() {
            "ancestor"
        } else {
            "descendant"
        };
        let vb = panel.view_box;
        let _ = write!(
            body,
            r#"<g class="panel {role}" data-id="{}"><svg x="{}" y="{}" width="{}" height="{}" viewBox="{} {} {} {}">{}</svg>"#,
            escape_xml(&s.id),
            num(x),
            num(y),
            num(PANEL_PX),
            num(PANEL_PX),
            num(vb.0),
            num(vb.1),
            num(vb.2),
            num(vb.3),
            panel.layers
        );
        if *is_focal {
            let _ = write!(
                body,
                r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#ffd27a" stroke-width="3"/>"##,
                num(x - 4.0),
                num(y - 4.0),
                num(PANEL_PX + 8.0),
                num(PANEL_PX + 8.0)
            );
        }
        let _ = write!(
            body,
            r##"<text x="{}" y="{}" font-size="14" text-anchor="middle" fill="#c8cde0">{}</text></g>"##,
            num(x + 0.5 * PANEL_PX),
            num(y + PANEL_PX + 24.0),
            escape_xml(&s.title)
        );
    }
    body.push_str("</g>");
    Ok(document(width, height, (0.0, 0.0, width, height), &defs, &body))
}

/// `steps` frames; frame `k` (1-based) draws each path up to `k/steps` of its
/// arclength, so the last frame equals [`render_view`].
pub fn render_frames(s: &Scenario, steps: usize, opts: &RenderOptions) -> Result<Vec<String>, RenderError> {
    (1..=steps)
        .map(|k| {
            let o = RenderOptions {
                fraction: if k == steps { 1.0 } else { k as f64 / steps as f64 },
                ..opts.clone()
            };
            render_view(s, &o)
        })
        .collect()
}
