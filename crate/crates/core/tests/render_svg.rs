use liveia_core::optics::Medium;
use liveia_core::render::{render_frames, render_overview, render_perspective, render_view, RenderOptions};
use liveia_core::scene::{fork, perspective, Beam, Fracture, PsycheSphere, Scenario, Shell, Spark};
use liveia_core::Vec2;

fn parse(svg: &str) -> roxmltree::Document<'_> {
    roxmltree::Document::parse(svg).expect("well-formed SVG")
}

fn layer_ids(svg: &str) -> Vec<String> {
    let doc = parse(svg);
    doc.root_element()
        .children()
        .filter(|n| n.has_tag_name("g"))
        .filter_map(|n| n.attribute("id").map(str::to_string))
        .collect()
}

fn guarded() -> Scenario {
    let mut s = Scenario::new("guarded <self>");
    let mut a = PsycheSphere::crystal("a", Vec2::ZERO, 1.0);
    a.light_level = 2.0;
    a.label = "inner <light> & shell".into();
    a.border_blur = 0.05;
    a.shell = Some(Shell { thickness: 0.2, medium: Medium::glass(1.5), opacity: 0.8, sectors: vec![] });
    a.fractures.push(Fracture { a: Vec2::new(-0.3, 0.0), b: Vec2::new(0.3, 0.2), width: 0.01, medium: Medium::glass(2.0) });
    s.spheres.push(a);
    s.spheres.push(PsycheSphere::crystal("b", Vec2::new(3.0, 0.0), 0.8));
    s.sparks.push(Spark { sphere_pair: ["a".into(), "b".into()], intensity: 0.7 });
    s.beams.push(Beam {
        id: "t".into(),
        source_sphere: Some("a".into()),
        origin: None,
        origin_depth: 0.5,
        origin_angle: 0.0,
        direction: 0.4,
        spread: 0.3,
        ray_count: 5,
        intensity: [1.0, 0.8, 0.2],
        waveform: None,
    });
    s
}

#[test]
fn empty_scenario_is_background_only() {
    let svg = render_view(&Scenario::new("empty"), &RenderOptions::default()).unwrap();
    assert_eq!(layer_ids(&svg), vec!["background"]);
    assert_eq!(parse(&svg).root_element().tag_name().name(), "svg");
}

#[test]
fn full_scene_has_every_layer() {
    let svg = render_view(&guarded(), &RenderOptions::default()).unwrap();
    assert_eq!(
        layer_ids(&svg),
        vec!["background", "spheres", "interiors", "shells", "shadows", "sparks", "rays"]
    );
    assert!(svg.contains("feGaussianBlur"));
    assert!(svg.contains("radialGradient"));
    assert!(svg.contains("class=\"spark\""));
    assert!(svg.contains("class=\"ray\""));
    assert!(svg.contains(">inner &lt;light&gt; &amp; shell</text>"));
}

#[test]
fn reveal_swaps_occluder_for_cross_section() {
    let mut s = guarded();
    let hidden = render_view(&s, &RenderOptions::default()).unwrap();
    assert!(hidden.contains("class=\"occluder\""));
    assert!(hidden.contains("fill-opacity=\"0.8000\""));
    s.spheres[0].revealed = true;
    let shown = render_view(&s, &RenderOptions::default()).unwrap();
    assert!(!shown.contains("class=\"occluder\""));
    assert!(shown.contains("cross-section"));
    assert!(shown.contains("class=\"fracture\""));
    // Physics is unaffected: the same rays are drawn.
    let rays = |svg: &str| svg.matches("class=\"ray\"").count();
    assert_eq!(rays(&hidden), rays(&shown));
}

#[test]
fn final_frame_equals_full_render() {
    let s = guarded();
    let opts = RenderOptions::default();
    let frames = render_frames(&s, 4, &opts).unwrap();
    assert_eq!(frames.len(), 4);
    assert_eq!(frames[3], render_view(&s, &opts).unwrap());
    let drawn: Vec<usize> = frames.iter().map(|f| f.matches("class=\"ray\"").count()).collect();
    assert!(drawn.windows(2).all(|w| w[0] <= w[1]), "{drawn:?}");
    assert!(frames[0] != frames[3]);
    for f in &frames {
        parse(f);
    }
}

#[test]
fn overview_places_past_left_and_futures_right() {
    let mut root = guarded();
    let mut mid = fork(&mut root).unwrap();
    mid.title = "middle".into();
    let mut leaf = fork(&mut mid).unwrap();
    leaf.title = "leaf".into();
    let svg = render_overview(&mid, &[root.clone()], &[leaf.clone()], &RenderOptions::default()).unwrap();
    let doc = parse(&svg);
    let panels: Vec<(String, f64)> = doc
        .descendants()
        .filter(|n| n.attribute("class").is_some_and(|c| c.starts_with("panel")))
        .map(|n| {
            let inner = n.children().find(|c| c.has_tag_name("svg")).unwrap();
            (n.attribute("class").unwrap().to_string(), inner.attribute("x").unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(panels.len(), 3);
    assert_eq!(panels[0].0, "panel ancestor");
    assert_eq!(panels[1].0, "panel focal");
    assert_eq!(panels[2].0, "panel descendant");
    assert!(panels[0].1 < panels[1].1 && panels[1].1 < panels[2].1);
}

#[test]
fn perspective_render_recenters() {
    let s = guarded();
    let svg = render_perspective(&s, "b", &RenderOptions::default()).unwrap();
    assert_eq!(svg, render_view(&perspective(&s, "b").unwrap(), &RenderOptions::default()).unwrap());
    assert!(render_perspective(&s, "zz", &RenderOptions::default()).is_err());
}

#[test]
fn rendering_is_deterministic() {
    let s = guarded();
    assert_eq!(
        render_view(&s, &RenderOptions::default()).unwrap(),
        render_view(&s, &RenderOptions::default()).unwrap()
    );
}
