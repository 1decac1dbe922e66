//! Steady-state interior illumination of a sphere.
//!
//! Each iteration traces a batch of Monte-Carlo rays (jittered beam
//! injections plus the sphere's own ambient emission) and deposits
//! energy·length into the cells the rays cross. The per-cell running mean is
//! the radiance estimate; the run has reached equilibrium when no interior
//! cell's running mean moves by more than `tol` (relative) in an iteration.
//!
//! Interfaces pick the reflected or transmitted branch with probability given
//! by the Fresnel reflectance. Light reflected back into the sphere off its
//! own wall (or shell) is re-emitted diffusely, which is what lets trapped
//! light fill the interior instead of circulating near the rim forever.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{rgb_max, rgb_mean, Point, Rgb, Vec2};
use crate::optics::{
    beam_origin, reflect, OpticalScene, OpticsError, Ray, SurfaceId, TraceLimits,
};
use crate::scene::{Beam, PsycheSphere, Scenario};

pub const DEFAULT_RESOLUTION: usize = 64;
pub const DEFAULT_SHADOW_TAU: f64 = 0.25;
/// Cells whose running mean is below this are skipped by the convergence test.
pub const CONVERGENCE_FLOOR: f64 = 1e-12;
/// Score multiplier per class of obstruction (fractures, bubbles) present.
pub const OBSTRUCTION_PENALTY: f64 = 0.5;

const RAYS_PER_TASK: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RadianceError {
    #[error("unknown sphere {0}")]
    UnknownSphere(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("grid has no interior cells")]
    EmptyInterior,
    #[error(transparent)]
    Optics(#[from] OpticsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadianceParams {
    pub rays_per_iter: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Cells per side of the grid.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    /// Interface budget per ray; the intensity floor is relative to the ray's
    /// starting weight.
    #[serde(default)]
    pub limits: TraceLimits,
}

fn default_resolution() -> usize {
    DEFAULT_RESOLUTION
}

impl Default for RadianceParams {
    fn default() -> Self {
        RadianceParams {
            rays_per_iter: 2048,
            max_iter: 2000,
            tol: 1e-3,
            seed: 0,
            resolution: DEFAULT_RESOLUTION,
            limits: TraceLimits::default(),
        }
    }
}

impl RadianceParams {
    pub fn with_seed(seed: u64) -> Self {
        RadianceParams {
            seed,
            ..Default::default()
        }
    }

    fn check(&self) -> Result<(), RadianceError> {
        let bad = |m: &str| Err(RadianceError::InvalidParams(m.to_string()));
        if self.rays_per_iter == 0 {
            return bad("rays_per_iter must be > 0");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be > 0");
        }
        if !(self.tol > 0.0) {
            return bad("tol must be > 0");
        }
        if self.resolution == 0 {
            return bad("resolution must be > 0");
        }
        if self.limits.max_events < 1 || !(self.limits.min_intensity > 0.0) {
            return bad("limits must have max_events >= 1 and min_intensity > 0");
        }
        Ok(())
    }
}

/// Interior radiance field over a sphere's bounding square.
///
/// Row 0 is the top (largest y) of the square.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadianceGrid {
    pub sphere_id: String,
    /// Top-left corner of the grid.
    pub origin: Point,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    /// `cells[row][col]`, per-channel radiance.
    pub cells: Vec<Vec<Rgb>>,
    /// Cells whose center lies inside the sphere.
    pub interior_mask: Vec<Vec<bool>>,
}

impl RadianceGrid {
    /// Zeroed grid covering `sphere`.
    pub fn for_sphere(sphere: &PsycheSphere, resolution: usize) -> Self {
        let cell_size = 2.0 * sphere.radius / resolution as f64;
        let origin = Point::new(sphere.center.x - sphere.radius, sphere.center.y + sphere.radius);
        let mut grid = RadianceGrid {
            sphere_id: sphere.id.clone(),
            origin,
            cell_size,
            width: resolution,
            height: resolution,
            cells: vec![vec![[0.0; 3]; resolution]; resolution],
            interior_mask: vec![vec![false; resolution]; resolution],
        };
        for row in 0..resolution {
            for col in 0..resolution {
                grid.interior_mask[row][col] =
                    grid.cell_center(col, row).distance(sphere.center) < sphere.radius;
            }
        }
        grid
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.cell_size,
            self.origin.y - (row as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn luminance(&self, col: usize, row: usize) -> f64 {
        rgb_mean(&self.cells[row][col])
    }

    /// `(col, row)` of every interior cell.
    pub fn interior_cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.height).flat_map(move |row| {
            (0..self.width).filter_map(move |col| self.interior_mask[row][col].then_some((col, row)))
        })
    }

    pub fn interior_count(&self) -> usize {
        self.interior_cells().count()
    }

    /// Mean per-channel radiance over interior cells.
    pub fn mean_radiance(&self) -> Rgb {
        let mut sum = [0.0; 3];
        let mut n = 0usize;
        for (c, r) in self.interior_cells() {
            for (k, s) in sum.iter_mut().enumerate() {
                *s += self.cells[r][c][k];
            }
            n += 1;
        }
        if n == 0 {
            return sum;
        }
        [sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64]
    }

    pub fn mean_luminance(&self) -> f64 {
        rgb_mean(&self.mean_radiance())
    }

    /// Mean luminance over interior cells lying wholly inside a circle.
    pub fn region_mean(&self, center: Point, radius: f64) -> Option<f64> {
        let h = 0.5 * self.cell_size;
        let inside = |p: Point| p.distance(center) <= radius;
        let vals: Vec<f64> = self
            .interior_cells()
            .filter(|&(c, r)| {
                let m = self.cell_center(c, r);
                [(-h, -h), (-h, h), (h, -h), (h, h)]
                    .iter()
                    .all(|&(dx, dy)| inside(m + Vec2::new(dx, dy)))
            })
            .map(|(c, r)| self.luminance(c, r))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Binary PPM (P6) heatmap of luminance; cells outside the sphere are black.
    pub fn to_ppm(&self) -> Vec<u8> {
        let max = self
            .interior_cells()
            .map(|(c, r)| self.luminance(c, r))
            .fold(0.0, f64::max);
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for row in 0..self.height {
            for col in 0..self.width {
                let rgb = if self.interior_mask[row][col] && max > 0.0 {
                    heat(self.luminance(col, row) / max)
                } else {
                    [0, 0, 0]
                };
                out.extend_from_slice(&rgb);
            }
        }
        out
    }
}

/// Black → red → yellow → white ramp.
fn heat(v: f64) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0) * 3.0;
    let ch = |x: f64| (x.clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(v), ch(v - 1.0), ch(v - 2.0)]
}

/// A connected set of shadow cells, as `(col, row)` pairs.
pub type ShadowRegion = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub iterations: usize,
    pub converged: bool,
    pub uniformity: f64,
    pub shadow_fraction: f64,
    pub shadow_regions: Vec<ShadowRegion>,
    pub mean_radiance: Rgb,
    /// Largest relative change of a cell mean in the final iteration.
    pub final_change: f64,
    /// Luminance emitted per iteration.
    pub emitted_energy: f64,
    /// Luminance absorbed by media, per iteration (mean over iterations).
    pub absorbed_energy: f64,
}

/// `1 - std/mean` of interior luminance, clamped to `[0, 1]`; 0 for a dark grid.
pub fn uniformity(grid: &RadianceGrid) -> Result<f64, RadianceError> {
    let vals: Vec<f64> = grid.interior_cells().map(|(c, r)| grid.luminance(c, r)).collect();
    if vals.is_empty() {
        return Err(RadianceError::EmptyInterior);
    }
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Ok(0.0);
    }
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((1.0 - var.sqrt() / mean).clamp(0.0, 1.0))
}

fn shadow_mask(grid: &RadianceGrid, tau: f64) -> Vec<Vec<bool>> {
    let mean = grid.mean_luminance();
    let mut mask = vec![vec![false; grid.width]; grid.height];
    for (c, r) in grid.interior_cells() {
        mask[r][c] = mean <= 0.0 || grid.luminance(c, r) < tau * mean;
    }
    mask
}

/// 4-connected components of interior cells darker than `tau · mean`,
/// largest first.
pub fn shadow_regions(grid: &RadianceGrid, tau: f64) -> Vec<ShadowRegion> {
    let mut mask = shadow_mask(grid, tau);
    let mut regions = Vec::new();
    for row in 0..grid.height {
        for col in 0..grid.width {
            if !mask[row][col] {
                continue;
            }
            mask[row][col] = false;
            let mut region = Vec::new();
            let mut queue = VecDeque::from([(col, row)]);
            while let Some((c, r)) = queue.pop_front() {
                region.push((c, r));
                let mut visit = |c: usize, r: usize| {
                    if mask[r][c] {
                        mask[r][c] = false;
                        queue.push_back((c, r));
                    }
                };
                if c > 0 {
                    visit(c - 1, r);
                }
                if c + 1 < grid.width {
                    visit(c + 1, r);
                }
                if r > 0 {
                    visit(c, r - 1);
                }
                if r + 1 < grid.height {
                    visit(c, r + 1);
                }
            }
            region.sort_by_key(|&(c, r)| (r, c));
            regions.push(region);
        }
    }
    // Stable sort keeps scan order among equal sizes.
    regions.sort_by(|a, b| b.len().cmp(&a.len()));
    regions
}

/// Heuristic index of how unobstructed and evenly lit a sphere is.
///
/// `uniformity · (1 - shadow_fraction)`, halved once if the sphere has
/// fractures and once more if it has bubbles.
pub fn enlightenment_score(
    _grid: &RadianceGrid,
    report: &EquilibriumReport,
    sphere: &PsycheSphere,
) -> f64 {
    let classes = [!sphere.fractures.is_empty(), !sphere.bubbles.is_empty()]
        .iter()
        .filter(|&&x| x)
        .count();
    let penalty = OBSTRUCTION_PENALTY.powi(classes as i32);
    (report.uniformity * (1.0 - report.shadow_fraction) * penalty).clamp(0.0, 1.0)
}

/// Summarizes a grid into a report.
pub fn summarize(grid: &RadianceGrid, iterations: usize, converged: bool) -> Result<EquilibriumReport, RadianceError> {
    let uni = uniformity(grid)?;
    let regions = shadow_regions(grid, DEFAULT_SHADOW_TAU);
    let shadow_cells: usize = regions.iter().map(Vec::len).sum();
    Ok(EquilibriumReport {
        iterations,
        converged,
        uniformity: uni,
        shadow_fraction: shadow_cells as f64 / grid.interior_count() as f64,
        shadow_regions: regions,
        mean_radiance: grid.mean_radiance(),
        final_change: 0.0,
        emitted_energy: 0.0,
        absorbed_energy: 0.0,
    })
}

enum Source {
    Beam { origin: Point, direction: f64, spread: f64, color: Rgb },
    Ambient,
}

struct Transport<'a> {
    scene: &'a OpticalScene,
    sphere: usize,
    center: Point,
    radius: f64,
    sources: Vec<(f64, Source)>,
    total_power: f64,
    grid_origin: Point,
    cell_size: f64,
    res: usize,
    limits: TraceLimits,
}

struct Tally {
    cells: Vec<Rgb>,
    absorbed: f64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Transport<'_> {
    fn emit(&self, rng: &mut ChaCha8Rng, weight: f64) -> Option<Ray> {
        let mut pick = rng.gen::<f64>() * self.total_power;
        let mut chosen = &self.sources.last()?.1;
        for (p, src) in &self.sources {
            if pick < *p {
                chosen = src;
                break;
            }
            pick -= p;
        }
        match chosen {
            Source::Beam { origin, direction, spread, color } => {
                let jitter = if *spread > 0.0 { (rng.gen::<f64>() - 0.5) * spread } else { 0.0 };
                let lum = rgb_mean(color);
                let w = weight / lum;
                Some(Ray::new(
                    *origin,
                    Vec2::from_angle(direction + jitter),
                    [color[0] * w, color[1] * w, color[2] * w],
                ))
            }
            Source::Ambient => {
                // Uniform point in the sphere's own interior medium.
                for _ in 0..64 {
                    let p = self.center
                        + Vec2::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0)
                            * self.radius;
                    if p.distance(self.center) >= self.radius {
                        continue;
                    }
                    if self.scene.innermost_sphere(p) != Some(self.sphere) {
                        continue;
                    }
                    if self.scene.medium_at(p) != self.scene.interior_medium(self.sphere) {
                        continue;
                    }
                    let dir = Vec2::from_angle(rng.gen::<f64>() * std::f64::consts::TAU);
                    return Some(Ray::new(p, dir, [weight; 3]));
                }
                None
            }
        }
    }

    /// Adds `∫ w·e^{-k s} ds` over each cell the segment crosses.
    fn deposit(&self, tally: &mut Tally, start: Point, end: Point, w: &Rgb, k: &Rgb) {
        let len = start.distance(end);
        if len <= 0.0 {
            return;
        }
        let n = self.res as f64;
        let gx = |p: Point| (p.x - self.grid_origin.x) / self.cell_size;
        let gy = |p: Point| (self.grid_origin.y - p.y) / self.cell_size;
        let (x0, y0) = (gx(start), gy(start));
        let (dx, dy) = (gx(end) - x0, gy(end) - y0);

        // Clip the parameter range to the grid square.
        let (mut ta, mut tb) = (0.0f64, 1.0f64);
        for (p, d) in [(x0, dx), (y0, dy)] {
            if d == 0.0 {
                if p < 0.0 || p > n {
                    return;
                }
            } else {
                let (t0, t1) = ((0.0 - p) / d, (n - p) / d);
                let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
                ta = ta.max(lo);
                tb = tb.min(hi);
            }
        }
        if ta >= tb {
            return;
        }

        let last = self.res as i64 - 1;
        let tm = ta + (0.5 * (tb - ta)).min(1e-9);
        let mut ix = ((x0 + dx * tm).floor() as i64).clamp(0, last);
        let mut iy = ((y0 + dy * tm).floor() as i64).clamp(0, last);
        let axis = |p: f64, d: f64, i: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (i as f64 + 1.0 - p) / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, (i as f64 - p) / d, -1.0 / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (sx, mut tx, ddx) = axis(x0, dx, ix);
        let (sy, mut ty, ddy) = axis(y0, dy, iy);

        let mut t = ta;
        loop {
            let t_next = tx.min(ty).min(tb);
            if t_next > t {
                let (s0, s1) = (t * len, t_next * len);
                let cell = &mut tally.cells[iy as usize * self.res + ix as usize];
                for c in 0..3 {
                    cell[c] += w[c] * segment_integral(k[c], s0, s1);
                }
            }
            if t_next >= tb {
                break;
            }
            if tx <= ty {
                ix += sx;
                tx += ddx;
            } else {
                iy += sy;
                ty += ddy;
            }
            if ix < 0 || iy < 0 || ix > last || iy > last {
                break;
            }
            t = t_next;
        }
    }

    fn is_own_boundary(&self, surface: SurfaceId) -> bool {
        matches!(surface, SurfaceId::Wall(s) | SurfaceId::ShellInner(s) if s == self.sphere)
    }

    fn trace(&self, mut ray: Ray, rng: &mut ChaCha8Rng, tally: &mut Tally) {
        let floor = rgb_max(&ray.intensity) * self.limits.min_intensity;
        for _ in 0..=self.limits.max_events {
            let Some(hit) = self.scene.nearest_hit(&ray) else {
                let end = ray.at(self.scene.escape_distance(&ray));
                let k = self.scene.medium_at(ray.at(1e-6)).extinction();
                self.deposit(tally, ray.origin, end, &ray.intensity, &k);
                return;
            };
            let k = self.scene.medium_at(ray.at(0.5 * hit.distance)).extinction();
            self.deposit(tally, ray.origin, hit.point, &ray.intensity, &k);
            let before = ray.intensity;
            for c in 0..3 {
                ray.intensity[c] *= if k[c] == 0.0 { 1.0 } else { (-k[c] * hit.distance).exp() };
            }
            tally.absorbed += rgb_mean(&before) - rgb_mean(&ray.intensity);
            if rgb_max(&ray.intensity) < floor {
                return;
            }

            let n1 = hit.media.0.refractive_index;
            let n2 = hit.media.1.refractive_index;
            let cos_i = (-ray.direction.dot(hit.normal)).clamp(0.0, 1.0);
            let reflectance = crate::optics::fresnel_split(cos_i.acos().min(std::f64::consts::FRAC_PI_2 - 1e-15), n1, n2)
                .map(|(r, _)| r)
                .unwrap_or(1.0);
            let inside_own = self.is_own_boundary(hit.surface)
                && (hit.point + hit.normal * (1e-7 * self.radius)).distance(self.center) < self.radius;

            if rng.gen::<f64>() < reflectance {
                let dir = if inside_own {
                    // Lambertian re-emission about the inward normal.
                    let s = rng.gen::<f64>() * 2.0 - 1.0;
                    hit.normal * (1.0 - s * s).sqrt() + hit.normal.perp() * s
                } else {
                    reflect(ray.direction, hit.normal)
                };
                ray = Ray { origin: hit.point, direction: dir.normalized(), intensity: ray.intensity, path_length: 0.0 };
            } else {
                if matches!(hit.surface, SurfaceId::Wall(s) if s == self.sphere) && inside_own {
                    // Left the sphere.
                    return;
                }
                let dir = match crate::optics::refract_direction(ray.direction, hit.normal, n1, n2) {
                    Ok(crate::optics::Refraction::Transmitted(d)) => d,
                    _ => reflect(ray.direction, hit.normal),
                };
                let before = ray.intensity;
                let slab = self.scene.fracture_transmission(hit.surface);
                for c in 0..3 {
                    ray.intensity[c] *= slab[c];
                }
                tally.absorbed += rgb_mean(&before) - rgb_mean(&ray.intensity);
                if rgb_max(&ray.intensity) < floor {
                    return;
                }
                ray = Ray { origin: hit.point, direction: dir, intensity: ray.intensity, path_length: 0.0 };
            }
        }
    }
}

fn segment_integral(k: f64, s0: f64, s1: f64) -> f64 {
    if k == 0.0 {
        s1 - s0
    } else if k.is_infinite() {
        0.0
    } else {
        ((-k * s0).exp() - (-k * s1).exp()) / k
    }
}

/// Fraction of each cell's area inside the sphere, by 8×8 supersampling.
fn coverage(grid: &RadianceGrid, center: Point, radius: f64) -> Vec<f64> {
    const SUB: usize = 8;
    let mut out = vec![0.0; grid.width * grid.height];
    for row in 0..grid.height {
        for col in 0..grid.width {
            let mut inside = 0;
            for i in 0..SUB {
                for j in 0..SUB {
                    let p = Point::new(
                        grid.origin.x + (col as f64 + (i as f64 + 0.5) / SUB as f64) * grid.cell_size,
                        grid.origin.y - (row as f64 + (j as f64 + 0.5) / SUB as f64) * grid.cell_size,
                    );
                    if p.distance(center) < radius {
                        inside += 1;
                    }
                }
            }
            out[row * grid.width + col] = inside as f64 / (SUB * SUB) as f64;
        }
    }
    out
}

/// Runs Monte-Carlo transport for one sphere until its radiance field settles.
///
/// Results are a pure function of the inputs: rays are drawn from per-task
/// generators derived from `params.seed`, and partial tallies are reduced in
/// task order.
pub fn compute_equilibrium(
    scenario: &Scenario,
    sphere_id: &str,
    injections: &[Beam],
    params: &RadianceParams,
) -> Result<(RadianceGrid, EquilibriumReport), RadianceError> {
    params.check()?;
    let sphere = scenario
        .sphere(sphere_id)
        .ok_or_else(|| RadianceError::UnknownSphere(sphere_id.to_string()))?;
    let scene = OpticalScene::new(scenario)?;
    let sphere_idx = scene
        .sphere_index(sphere_id)
        .ok_or_else(|| RadianceError::UnknownSphere(sphere_id.to_string()))?;

    let mut grid = RadianceGrid::for_sphere(sphere, params.resolution);
    let res = params.resolution;

    let mut sources = Vec::new();
    for beam in injections {
        let lum = rgb_mean(&beam.intensity);
        if lum > 0.0 {
            sources.push((
                lum,
                Source::Beam {
                    origin: beam_origin(scenario, beam)?,
                    direction: beam.direction,
                    spread: beam.spread,
                    color: beam.intensity,
                },
            ));
        }
    }
    if sphere.light_level > 0.0 {
        sources.push((sphere.light_level, Source::Ambient));
    }
    let total_power: f64 = sources.iter().map(|(p, _)| p).sum();

    if sources.is_empty() {
        let mut report = summarize(&grid, 1, true)?;
        report.final_change = 0.0;
        return Ok((grid, report));
    }

    let transport = Transport {
        scene: &scene,
        sphere: sphere_idx,
        center: sphere.center,
        radius: sphere.radius,
        sources,
        total_power,
        grid_origin: grid.origin,
        cell_size: grid.cell_size,
        res,
        limits: params.limits,
    };
    let cover = coverage(&grid, sphere.center, sphere.radius);
    let cell_area = grid.cell_size * grid.cell_size;
    let interior: Vec<usize> = grid.interior_cells().map(|(c, r)| r * res + c).collect();

    let weight = total_power / params.rays_per_iter as f64;
    let tasks = params.rays_per_iter.div_ceil(RAYS_PER_TASK);
    let mut mean = vec![[0.0f64; 3]; res * res];
    let mut absorbed_total = 0.0;
    let mut iterations = 0;
    let mut converged = false;
    let mut final_change = f64::INFINITY;

    for iter in 0..params.max_iter {
        let tallies: Vec<Tally> = (0..tasks)
            .into_par_iter()
            .map(|task| {
                let seed = mix(mix(mix(params.seed) ^ iter as u64) ^ task as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut tally = Tally { cells: vec![[0.0; 3]; res * res], absorbed: 0.0 };
                let n = RAYS_PER_TASK.min(params.rays_per_iter - task * RAYS_PER_TASK);
                for _ in 0..n {
                    if let Some(ray) = transport.emit(&mut rng, weight) {
                        transport.trace(ray, &mut rng, &mut tally);
                    }
                }
                tally
            })
            .collect();

        let mut sample = vec![[0.0f64; 3]; res * res];
        for t in &tallies {
            absorbed_total += t.absorbed;
            for (dst, src) in sample.iter_mut().zip(&t.cells) {
                for c in 0..3 {
                    dst[c] += src[c];
                }
            }
        }

        iterations = iter + 1;
        let n = iterations as f64;
        let mut max_change = 0.0f64;
        for &i in &interior {
            let area = cell_area * cover[i];
            let old = rgb_mean(&mean[i]);
            for c in 0..3 {
                let x = if area > 0.0 { sample[i][c] / area } else { 0.0 };
                mean[i][c] += (x - mean[i][c]) / n;
            }
            let new = rgb_mean(&mean[i]);
            if iterations > 1 && new > CONVERGENCE_FLOOR {
                max_change = max_change.max((new - old).abs() / new);
            }
        }
        if iterations > 1 {
            final_change = max_change;
            if max_change < params.tol {
                converged = true;
                break;
            }
        }
    }

    for row in 0..res {
        for col in 0..res {
            let i = row * res + col;
            grid.cells[row][col] = if grid.interior_mask[row][col] { mean[i] } else { [0.0; 3] };
        }
    }
    let mut report = summarize(&grid, iterations, converged)?;
    report.final_change = if final_change.is_finite() { final_change } else { 0.0 };
    report.emitted_energy = total_power;
    report.absorbed_energy = absorbed_total / iterations as f64;
    Ok((grid, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_with(values: &[f64], res: usize) -> RadianceGrid {
        let sphere = PsycheSphere::crystal("g", Point::ZERO, 1.0);
        let mut g = RadianceGrid::for_sphere(&sphere, res);
        let mut it = values.iter().cycle();
        for row in 0..res {
            for col in 0..res {
                let v = *it.next().unwrap();
                g.cells[row][col] = [v; 3];
            }
        }
        g
    }

    #[test]
    fn constant_grid_is_uniform() {
        let g = grid_with(&[2.5], 16);
        assert_eq!(uniformity(&g).unwrap(), 1.0);
        assert!(shadow_regions(&g, 0.25).is_empty());
    }

    #[test]
    fn dark_grid_has_zero_uniformity() {
        let g = grid_with(&[0.0], 16);
        assert_eq!(uniformity(&g).unwrap(), 0.0);
        let regions = shadow_regions(&g, 0.25);
        let cells: usize = regions.iter().map(Vec::len).sum();
        assert_eq!(cells, g.interior_count());
    }

    #[test]
    fn half_zero_half_two_has_zero_uniformity() {
        // Alternating columns: even count per row keeps the split exact.
        let mut g = grid_with(&[0.0, 2.0], 16);
        // Force an exact 50/50 split over interior cells.
        let cells: Vec<_> = g.interior_cells().collect();
        for (i, &(c, r)) in cells.iter().enumerate() {
            g.cells[r][c] = [if i % 2 == 0 { 0.0 } else { 2.0 }; 3];
        }
        assert_eq!(cells.len() % 2, 0);
        assert!(uniformity(&g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn empty_interior_is_an_error() {
        let mut g = grid_with(&[1.0], 4);
        for row in &mut g.interior_mask {
            row.fill(false);
        }
        assert_eq!(uniformity(&g), Err(RadianceError::EmptyInterior));
    }

    #[test]
    fn zeroed_quadrant_is_one_region() {
        let res = 32;
        let mut g = grid_with(&[1.0], res);
        for row in 0..res / 2 {
            for col in res / 2..res {
                g.cells[row][col] = [0.0; 3];
            }
        }
        let regions = shadow_regions(&g, 0.25);
        assert_eq!(regions.len(), 1);
        let quarter = g.interior_count() as f64 / 4.0;
        assert!((regions[0].len() as f64 - quarter).abs() <= 1.0);
    }

    #[test]
    fn segment_integral_limits() {
        assert_eq!(segment_integral(0.0, 1.0, 3.0), 2.0);
        assert_eq!(segment_integral(f64::INFINITY, 0.0, 1.0), 0.0);
        let v = segment_integral(2.0, 0.0, 1.0);
        assert!((v - (1.0 - (-2.0f64).exp()) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn ppm_header_and_size() {
        let g = grid_with(&[1.0, 0.5], 8);
        let ppm = g.to_ppm();
        let header = b"P6\n8 8\n255\n";
        assert_eq!(&ppm[..header.len()], header);
        assert_eq!(ppm.len(), header.len() + 8 * 8 * 3);
    }

    #[test]
    fn score_penalizes_obstructions() {
        let g = grid_with(&[1.0], 8);
        let report = summarize(&g, 1, true).unwrap();
        let clear = PsycheSphere::crystal("c", Point::ZERO, 1.0);
        let mut fractured = clear.clone();
        fractured.fractures.push(crate::scene::Fracture {
            a: Point::new(-0.5, 0.0),
            b: Point::new(0.5, 0.0),
            width: 0.01,
            medium: crate::optics::Medium::glass(2.0),
        });
        let a = enlightenment_score(&g, &report, &clear);
        let b = enlightenment_score(&g, &report, &fractured);
        assert_eq!(a, 1.0);
        assert!(b < a);
        let mut dark = report.clone();
        dark.shadow_fraction = 1.0;
        assert_eq!(enlightenment_score(&g, &dark, &clear), 0.0);
    }

    #[test]
    fn bad_params_rejected() {
        let mut s = Scenario::new("p");
        s.spheres.push(PsycheSphere::crystal("a", Point::ZERO, 1.0));
        let p = RadianceParams { tol: 0.0, ..Default::default() };
        assert!(matches!(compute_equilibrium(&s, "a", &[], &p), Err(RadianceError::InvalidParams(_))));
        assert!(matches!(
            compute_equilibrium(&s, "zz", &[], &RadianceParams::default()),
            Err(RadianceError::UnknownSphere(_))
        ));
    }
}
