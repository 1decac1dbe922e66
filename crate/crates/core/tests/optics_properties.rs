use std::f64::consts::{FRAC_PI_2, TAU};

use proptest::prelude::*;

use liveia_core::optics::{
    fresnel_split, trace_ray, EventKind, Medium, OpticalScene, Ray, RayPath, TraceLimits,
};
use liveia_core::scene::{Bubble, Fracture, PsycheSphere, Scenario};
use liveia_core::Vec2;

/// A sphere with one lossless fracture, one clear bubble and a nested child.
fn scene_with(n: f64, fracture_n: f64, absorption: f64, angle: f64) -> Scenario {
    let mut s = Scenario::new("prop");
    let mut outer = PsycheSphere::crystal("outer", Vec2::ZERO, 2.0);
    outer.interior = Medium { refractive_index: n, absorption, tint: [1.0, 0.9, 0.8] };
    let d = Vec2::from_angle(angle);
    outer.fractures.push(Fracture {
        a: d * -1.2 + Vec2::new(0.0, -0.6),
        b: d * 1.2 + Vec2::new(0.0, -0.6),
        width: 0.02,
        medium: Medium::glass(fracture_n),
    });
    outer.bubbles.push(Bubble { center: Vec2::new(-0.9, 0.7), radius: 0.3, medium: Medium::glass(1.0) });
    outer.children.push("inner".into());
    let mut inner = PsycheSphere::crystal("inner", Vec2::new(0.8, 0.8), 0.5);
    inner.interior = Medium::glass(1.9);
    s.spheres.push(outer);
    s.spheres.push(inner);
    s
}

fn limits() -> TraceLimits {
    TraceLimits { max_events: 12, min_intensity: 1e-3 }
}

fn arb_ray() -> impl Strategy<Value = (Vec2, f64)> {
    (0.0..TAU, 2.5..4.0f64, -0.6..0.6f64).prop_map(|(a, r, off)| {
        let origin = Vec2::from_angle(a) * r;
        (origin, a + std::f64::consts::PI + off)
    })
}

fn traces(s: &Scenario, origin: Vec2, dir: f64) -> Vec<RayPath> {
    let scene = OpticalScene::new(s).unwrap();
    trace_ray(&scene, &Ray::new(origin, Vec2::from_angle(dir), [1.0; 3]), &limits()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn fresnel_terms_sum_to_one(theta in 0.0..FRAC_PI_2, n1 in 0.1..4.0f64, n2 in 0.1..4.0f64) {
        let (r, t) = fresnel_split(theta, n1, n2).unwrap();
        prop_assert!((0.0..=1.0).contains(&r) && (0.0..=1.0).contains(&t));
        prop_assert!((r + t - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snell_holds_at_every_refraction(
        (origin, dir) in arb_ray(), n in 1.1..2.5f64, nf in 1.0..3.0f64, ang in 0.0..3.1f64,
    ) {
        let s = scene_with(n, nf, 0.0, ang);
        for p in traces(&s, origin, dir) {
            for e in p.events.iter().filter(|e| e.kind == EventKind::Refract) {
                let i = e.interface.as_ref().unwrap();
                let residual = i.n1 * i.incidence.sin() - i.n2 * i.outgoing.sin();
                prop_assert!(residual.abs() < 1e-9, "residual {residual}");
            }
        }
    }

    #[test]
    fn interfaces_split_energy_losslessly(
        (origin, dir) in arb_ray(), n in 1.1..2.5f64, nf in 1.0..3.0f64, ang in 0.0..3.1f64,
        alpha in 0.0..0.5f64,
    ) {
        let s = scene_with(n, nf, alpha, ang);
        for p in traces(&s, origin, dir) {
            for (k, e) in p.events.iter().enumerate() {
                let Some(i) = &e.interface else { continue };
                let Some(next) = p.segments.get(k + 1) else { continue };
                let arriving = p.segments[k].end_intensity();
                let factor = match e.kind {
                    EventKind::Tir => 1.0,
                    _ => {
                        let (r, t) = fresnel_split(i.incidence.min(FRAC_PI_2 - 1e-15), i.n1, i.n2).unwrap();
                        if e.kind == EventKind::Reflect { r } else { t }
                    }
                };
                for c in 0..3 {
                    prop_assert!((next.intensity[c] - arriving[c] * factor).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn intensity_never_increases(
        (origin, dir) in arb_ray(), n in 1.1..2.5f64, nf in 1.0..3.0f64, ang in 0.0..3.1f64,
        alpha in 0.0..1.0f64,
    ) {
        let s = scene_with(n, nf, alpha, ang);
        for p in traces(&s, origin, dir) {
            for w in p.segments.windows(2) {
                prop_assert!((w[1].start - w[0].end).norm() < 1e-12, "segments not contiguous");
            }
            let mut prev = [f64::INFINITY; 3];
            for seg in &p.segments {
                for c in 0..3 {
                    prop_assert!(seg.intensity[c] <= prev[c] + 1e-15);
                    prop_assert!(seg.end_intensity()[c] <= seg.intensity[c] + 1e-15);
                }
                prev = seg.end_intensity();
            }
        }
    }

    #[test]
    fn tir_free_paths_are_reversible(
        (origin, dir) in arb_ray(), n in 1.1..2.0f64, nf in 1.0..2.0f64, ang in 0.0..3.1f64,
    ) {
        let s = scene_with(n, nf, 0.0, ang);
        let forward = traces(&s, origin, dir);
        let p = &forward[0];
        prop_assume!(p.is_primary() && p.terminal() == Some(EventKind::Escaped));
        let verts = p.vertices();
        let last = p.segments.last().unwrap();
        let back = traces(&s, last.end, last.direction().angle() + std::f64::consts::PI);
        let q = &back[0];
        prop_assert!(q.is_primary());
        let rv = q.vertices();
        // Interface vertices come back in reverse order.
        let interior = &verts[1..verts.len() - 1];
        prop_assert!(rv.len() >= interior.len() + 1);
        for (k, v) in interior.iter().rev().enumerate() {
            prop_assert!((rv[k + 1] - *v).norm() < 1e-6, "vertex {k}: {:?} vs {:?}", rv[k + 1], v);
        }
        // And the next reversed segment heads back through the original origin.
        let seg = &q.segments[interior.len()];
        let to_origin = (origin - seg.start).normalized();
        prop_assert!(seg.direction().angle_to(to_origin) < 1e-6);
    }
}

#[test]
fn max_depth_caps_trapped_rays() {
    let s = scene_with(1.5, 1.5, 0.0, 0.0);
    let scene = OpticalScene::new(&s).unwrap();
    let lim = TraceLimits { max_events: 5, min_intensity: 1e-6 };
    for p in trace_ray(&scene, &Ray::new(Vec2::new(0.0, -3.0), Vec2::new(0.05, 1.0), [1.0; 3]), &lim).unwrap() {
        let interfaces = p.events.iter().filter(|e| e.kind.is_interface()).count();
        assert!(interfaces <= 5);
        if p.terminal() == Some(EventKind::MaxDepth) {
            assert_eq!(interfaces, 5);
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let s = scene_with(1.7, 2.2, 0.1, 0.4);
    let a = traces(&s, Vec2::new(-3.0, 0.3), 0.1);
    let b = traces(&s, Vec2::new(-3.0, 0.3), 0.1);
    assert_eq!(a, b);
}
