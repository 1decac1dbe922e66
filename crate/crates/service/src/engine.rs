//! Request-shaped wrappers over the engine, shared by the HTTP routes and the
//! command-line tool so both produce identical output.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use liveia_core::optics::{trace_beam, OpticalScene, RayPath, TraceLimits};
use liveia_core::radiance::{compute_equilibrium, enlightenment_score, EquilibriumReport, RadianceGrid, RadianceParams};
use liveia_core::render::{render_frames, render_overview, render_perspective, render_view, RenderMode, RenderOptions};
use liveia_core::scene::{validate, Beam, Scenario};
use liveia_core::waves::{decompose, sample, superpose, SampledSignal, WaveComponent, Waveform};

use crate::error::ApiError;

/// Upper bound on `frames?steps=`.
pub const MAX_FRAMES: usize = 240;
pub const DEFAULT_MAX_COMPONENTS: usize = 16;
pub const DEFAULT_FLOOR: f64 = 0.01;

/// A beam reference in a trace request: an id in the scenario, or a beam
/// given inline.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum BeamRef {
    Id(String),
    Inline(Box<Beam>),
}

#[derive(Debug, Clone, Deserialize)]
pub struct TraceRequest {
    pub beam: BeamRef,
    #[serde(default)]
    pub limits: Option<TraceLimits>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceResponse {
    pub beam: String,
    pub limits: TraceLimits,
    pub paths: Vec<RayPath>,
}

pub fn trace(s: &Scenario, req: &TraceRequest) -> Result<TraceResponse, ApiError> {
    let limits = req.limits.unwrap_or_default();
    let (scenario, beam) = match &req.beam {
        BeamRef::Id(id) => {
            let beam = s.beam(id).ok_or_else(|| ApiError::not_found(format!("unknown beam {id}")))?;
            (s.clone(), beam.clone())
        }
        BeamRef::Inline(b) => {
            let mut with = s.clone();
            with.beams.retain(|x| x.id != b.id);
            with.beams.push((**b).clone());
            let violations = validate(&with);
            if !violations.is_empty() {
                return Err(ApiError::validation("inline beam is invalid").with_detail(json!({ "violations": violations })));
            }
            (with, (**b).clone())
        }
    };
    let scene = OpticalScene::new(&scenario)?;
    let paths = trace_beam(&scene, &scenario, &beam, &limits)?;
    Ok(TraceResponse { beam: beam.id, limits, paths })
}

/// Beams that inject light into `sphere_id` during equilibrium runs.
pub fn injections(s: &Scenario, sphere_id: &str) -> Vec<Beam> {
    s.beams.iter().filter(|b| b.source_sphere.as_deref() == Some(sphere_id)).cloned().collect()
}

pub fn equilibrium(
    s: &Scenario,
    sphere_id: &str,
    params: &RadianceParams,
) -> Result<(RadianceGrid, EquilibriumReport), ApiError> {
    Ok(compute_equilibrium(s, sphere_id, &injections(s, sphere_id), params)?)
}

/// Scalar metrics for one sphere, as printed by `metrics` and served under
/// `radiance`.
pub fn metrics(s: &Scenario, sphere_id: &str, report: &EquilibriumReport, grid: &RadianceGrid) -> Value {
    let sphere = s.sphere(sphere_id).expect("equilibrium succeeded for this sphere");
    json!({
        "sphere": sphere_id,
        "iterations": report.iterations,
        "converged": report.converged,
        "uniformity": report.uniformity,
        "shadow_fraction": report.shadow_fraction,
        "enlightenment_score": enlightenment_score(grid, report, sphere),
    })
}

pub fn radiance_document(s: &Scenario, sphere_id: &str, params: &RadianceParams) -> Result<Value, ApiError> {
    let (grid, report) = equilibrium(s, sphere_id, params)?;
    let luminance: Vec<Vec<f64>> = (0..grid.height)
        .map(|r| (0..grid.width).map(|c| grid.luminance(c, r)).collect())
        .collect();
    Ok(json!({
        "sphere": sphere_id,
        "params": params,
        "metrics": metrics(s, sphere_id, &report, &grid),
        "report": report,
        "grid": {
            "width": grid.width,
            "height": grid.height,
            "origin": grid.origin,
            "cell_size": grid.cell_size,
            "luminance": luminance,
            "cells": grid.cells,
            "interior_mask": grid.interior_mask,
        },
    }))
}

/// Radiance heatmap of one sphere as binary PPM.
pub fn radiance_ppm(s: &Scenario, sphere_id: &str, params: &RadianceParams) -> Result<Vec<u8>, ApiError> {
    Ok(equilibrium(s, sphere_id, params)?.0.to_ppm())
}

pub fn parse_mode(mode: Option<&str>) -> Result<RenderMode, ApiError> {
    mode.unwrap_or("view").parse().map_err(ApiError::validation)
}

/// Renders `s` to SVG. Overview mode draws `ancestors` (oldest first) and
/// `descendants` around it.
pub fn render_svg(
    s: &Scenario,
    mode: RenderMode,
    focus: Option<&str>,
    ancestors: &[Scenario],
    descendants: &[Scenario],
) -> Result<String, ApiError> {
    let opts = RenderOptions::default();
    Ok(match mode {
        RenderMode::View => render_view(s, &opts)?,
        RenderMode::Perspective => {
            let focus = focus.ok_or_else(|| ApiError::validation("perspective mode needs focus"))?;
            render_perspective(s, focus, &opts)?
        }
        RenderMode::Overview => render_overview(s, ancestors, descendants, &opts)?,
    })
}

pub fn frames(s: &Scenario, steps: usize) -> Result<Vec<String>, ApiError> {
    if !(1..=MAX_FRAMES).contains(&steps) {
        return Err(ApiError::validation(format!("steps must be in 1..={MAX_FRAMES}")));
    }
    Ok(render_frames(s, steps, &RenderOptions::default())?)
}

/// Body of `POST /waves/superpose`. With `duration` and `rate` the result is
/// also sampled.
#[derive(Debug, Clone, Deserialize)]
pub struct SuperposeRequest {
    pub a: Waveform,
    pub b: Waveform,
    #[serde(default)]
    pub duration: Option<f64>,
    #[serde(default)]
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuperposeResponse {
    pub waveform: Waveform,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signal: Option<SampledSignal>,
}

pub fn superpose_request(req: &SuperposeRequest) -> Result<SuperposeResponse, ApiError> {
    let waveform = superpose(&req.a, &req.b);
    let signal = match (req.duration, req.rate) {
        (Some(d), Some(r)) => Some(sample(&waveform, d, r)?),
        (None, None) => None,
        _ => return Err(ApiError::validation("duration and rate go together")),
    };
    Ok(SuperposeResponse { waveform, signal })
}

#[derive(Debug, Clone, Deserialize)]
pub struct DecomposeRequest {
    #[serde(flatten)]
    pub signal: SampledSignal,
    #[serde(default)]
    pub max_components: Option<usize>,
    #[serde(default)]
    pub floor: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecomposeResponse {
    pub components: Vec<WaveComponent>,
}

pub fn decompose_request(req: &DecomposeRequest) -> Result<DecomposeResponse, ApiError> {
    let signal = SampledSignal::new(req.signal.samples.clone(), req.signal.sample_rate)?;
    let components = decompose(
        &signal,
        req.max_components.unwrap_or(DEFAULT_MAX_COMPONENTS),
        req.floor.unwrap_or(DEFAULT_FLOOR),
    )?;
    Ok(DecomposeResponse { components })
}
