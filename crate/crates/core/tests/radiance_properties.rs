use liveia_core::optics::Medium;
use liveia_core::radiance::{
    compute_equilibrium, enlightenment_score, shadow_regions, uniformity, RadianceError,
    RadianceParams,
};
use liveia_core::scene::{Beam, Bubble, Fracture, PsycheSphere, Scenario};
use liveia_core::Vec2;

fn quick(seed: u64) -> RadianceParams {
    RadianceParams { rays_per_iter: 512, resolution: 32, tol: 3e-3, ..RadianceParams::with_seed(seed) }
}

fn bright(light: f64) -> Scenario {
    let mut s = Scenario::new("r");
    let mut sp = PsycheSphere::crystal("s", Vec2::ZERO, 1.0);
    sp.light_level = light;
    s.spheres.push(sp);
    s
}

fn wall_beam(spread: f64) -> Beam {
    Beam {
        id: "in".into(),
        source_sphere: Some("s".into()),
        origin: None,
        origin_depth: 0.95,
        origin_angle: std::f64::consts::PI,
        direction: 0.0,
        spread,
        ray_count: 1,
        intensity: [1.0; 3],
        waveform: None,
    }
}

#[test]
fn dark_sphere_is_all_shadow() {
    let (grid, report) = compute_equilibrium(&bright(0.0), "s", &[], &quick(1)).unwrap();
    assert!(grid.interior_cells().all(|(c, r)| grid.luminance(c, r) == 0.0));
    assert_eq!(report.uniformity, 0.0);
    assert_eq!(report.shadow_fraction, 1.0);
    assert_eq!(report.iterations, 1);
}

#[test]
fn fixed_seed_is_bit_identical() {
    let s = bright(1.0);
    let a = compute_equilibrium(&s, "s", &[wall_beam(0.3)], &quick(7)).unwrap();
    let b = compute_equilibrium(&s, "s", &[wall_beam(0.3)], &quick(7)).unwrap();
    assert_eq!(a, b);
    let c = compute_equilibrium(&s, "s", &[wall_beam(0.3)], &quick(8)).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn clear_sphere_is_uniform_and_enlightened() {
    let s = bright(2.0);
    let (grid, report) = compute_equilibrium(&s, "s", &[], &quick(3)).unwrap();
    assert!(report.converged);
    assert!(report.uniformity >= 0.9, "uniformity {}", report.uniformity);
    assert_eq!(report.shadow_fraction, 0.0);
    assert!(grid.interior_cells().all(|(c, r)| grid.luminance(c, r) >= 0.0));
    assert!(enlightenment_score(&grid, &report, &s.spheres[0]) >= 0.9);
}

#[test]
fn absorbed_energy_never_exceeds_emitted() {
    let mut s = bright(1.5);
    s.spheres[0].interior.absorption = 2.0;
    s.spheres[0].bubbles.push(Bubble::opaque(Vec2::new(0.3, 0.2), 0.3));
    let (_, report) = compute_equilibrium(&s, "s", &[wall_beam(0.5)], &quick(2)).unwrap();
    assert!(report.absorbed_energy > 0.0);
    assert!(report.absorbed_energy <= report.emitted_energy + 1e-12);
    assert!((report.emitted_energy - 2.5).abs() < 1e-12);
}

#[test]
fn opaque_bubble_interior_stays_dark() {
    let mut s = Scenario::new("b");
    let mut sp = PsycheSphere::crystal("s", Vec2::ZERO, 10.0);
    sp.light_level = 1.0;
    sp.bubbles.push(Bubble::opaque(Vec2::new(3.0, 0.0), 3.0));
    s.spheres.push(sp);
    let (grid, _) = compute_equilibrium(&s, "s", &[], &quick(5)).unwrap();
    let inside = grid.region_mean(Vec2::new(3.0, 0.0), 3.0).unwrap();
    assert!(inside < 0.05 * grid.mean_luminance(), "ratio {}", inside / grid.mean_luminance());
}

#[test]
fn fracture_pocket_casts_a_shadow() {
    // A closed pocket of strongly absorbing fractures, lit only by light
    // scattered off the wall.
    let mut s = bright(0.0);
    let vein = Medium { refractive_index: 2.4, absorption: 400.0, tint: [1.0; 3] };
    let corners = [
        Vec2::new(0.2, -0.35),
        Vec2::new(0.7, -0.35),
        Vec2::new(0.7, 0.35),
        Vec2::new(0.2, 0.35),
    ];
    for i in 0..4 {
        s.spheres[0].fractures.push(Fracture {
            a: corners[i],
            b: corners[(i + 1) % 4],
            width: 0.02,
            medium: vein.clone(),
        });
    }
    s.spheres[0].fractures.push(Fracture { a: corners[0], b: corners[2], width: 0.02, medium: vein.clone() });
    s.spheres[0].fractures.push(Fracture { a: corners[1], b: corners[3], width: 0.02, medium: vein });
    // Aimed along the wall, away from the pocket.
    let inject = Beam { direction: std::f64::consts::FRAC_PI_2, ..wall_beam(1.0) };
    let (grid, report) = compute_equilibrium(&s, "s", &[inject], &quick(4)).unwrap();
    let largest = report.shadow_regions.first().expect("a shadow region");
    let n = largest.len() as f64;
    let centroid = largest
        .iter()
        .fold(Vec2::ZERO, |acc, &(c, r)| acc + grid.cell_center(c, r) * (1.0 / n));
    assert!(
        (0.2..0.7).contains(&centroid.x) && (-0.35..0.35).contains(&centroid.y),
        "largest shadow centered at {centroid:?}, outside the pocket"
    );
    assert!(enlightenment_score(&grid, &report, &s.spheres[0]) < 0.5);
}

#[test]
fn fractured_score_is_below_clear_score_for_same_grid() {
    let clear = bright(1.0);
    let (grid, report) = compute_equilibrium(&clear, "s", &[], &quick(6)).unwrap();
    let mut fractured = clear.spheres[0].clone();
    fractured.fractures.push(Fracture {
        a: Vec2::new(-0.2, 0.0),
        b: Vec2::new(0.2, 0.1),
        width: 0.01,
        medium: Medium::glass(2.0),
    });
    assert!(
        enlightenment_score(&grid, &report, &fractured)
            < enlightenment_score(&grid, &report, &clear.spheres[0])
    );
}

#[test]
fn statistics_agree_with_report() {
    let (grid, report) = compute_equilibrium(&bright(1.0), "s", &[wall_beam(0.1)], &quick(9)).unwrap();
    assert_eq!(uniformity(&grid).unwrap(), report.uniformity);
    assert_eq!(shadow_regions(&grid, 0.25), report.shadow_regions);
    let cells: usize = report.shadow_regions.iter().map(Vec::len).sum();
    assert_eq!(report.shadow_fraction, cells as f64 / grid.interior_count() as f64);
}

#[test]
fn unknown_sphere_and_bad_params_are_errors() {
    let s = bright(1.0);
    assert!(matches!(
        compute_equilibrium(&s, "nope", &[], &quick(0)),
        Err(RadianceError::UnknownSphere(_))
    ));
    let bad = RadianceParams { tol: 0.0, ..quick(0) };
    assert!(matches!(compute_equilibrium(&s, "s", &[], &bad), Err(RadianceError::InvalidParams(_))));
}

#[test]
fn max_iter_exhaustion_reports_partial_result() {
    let p = RadianceParams { max_iter: 3, ..quick(1) };
    let (grid, report) = compute_equilibrium(&bright(1.0), "s", &[], &p).unwrap();
    assert_eq!(report.iterations, 3);
    assert!(!report.converged);
    assert!(grid.mean_luminance() > 0.0);
}
