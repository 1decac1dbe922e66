use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use liveia_core::render::{render_view, RenderOptions};
use liveia_core::scene::{deserialize, serialize, Beam, PsycheSphere, Scenario};
use liveia_core::Vec2;

fn liveia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_liveia")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn bright_sphere() -> Scenario {
    let mut s = Scenario::new("bright");
    let mut p = PsycheSphere::crystal("s", Vec2::ZERO, 1.0);
    p.light_level = 1.0;
    s.spheres.push(p);
    s.beams.push(Beam {
        id: "b".into(),
        source_sphere: Some("s".into()),
        origin: None,
        origin_depth: 0.9,
        origin_angle: 0.0,
        direction: 0.4,
        spread: 0.1,
        ray_count: 3,
        intensity: [1.0; 3],
        waveform: None,
    });
    s
}

fn write_doc(dir: &Path, name: &str, s: &Scenario) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serialize(s).unwrap()).unwrap();
    p
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = write_doc(dir.path(), "good.json", &bright_sphere());
    let o = liveia(&["validate", arg(&good)]);
    assert!(o.status.success(), "{}", stderr(&o));

    let text = fs::read_to_string(&good).unwrap();
    let truncated = dir.path().join("trunc.json");
    fs::write(&truncated, &text[..text.len() / 2]).unwrap();
    assert_eq!(liveia(&["validate", arg(&truncated)]).status.code(), Some(1));

    assert_eq!(liveia(&["validate", arg(&dir.path().join("missing.json"))]).status.code(), Some(1));

    let mut doc: Value = serde_json::from_str(&text).unwrap();
    doc["scenario"]["spheres"][0]["radius"] = json!(-1.0);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, doc.to_string()).unwrap();
    let o = liveia(&["validate", arg(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("s ["), "violation listing expected: {}", stderr(&o));
}

#[test]
fn render_matches_the_shared_renderer() {
    let dir = tempfile::tempdir().unwrap();
    let s = bright_sphere();
    let file = write_doc(dir.path(), "s.json", &s);
    let out = dir.path().join("out.svg");
    let o = liveia(&["render", arg(&file), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(&out).unwrap();
    assert_eq!(svg, render_view(&s, &RenderOptions::default()).unwrap());

    let o = liveia(&["render", arg(&file), "--mode", "perspective", "--focus", "s"]);
    assert!(o.status.success());
    roxmltree::Document::parse(&stdout(&o)).unwrap();
    let o = liveia(&["render", arg(&file), "--mode", "perspective", "--focus", "nope"]);
    assert_eq!(o.status.code(), Some(2));

    let o = liveia(&["render", arg(&file), "--format", "ppm", "--rays", "128", "--resolution", "8", "--tol", "0.05"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(o.stdout.starts_with(b"P6\n8 8\n255\n"));
}

#[test]
fn render_empty_scenario_is_parseable() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_doc(dir.path(), "e.json", &Scenario::new("empty"));
    let o = liveia(&["render", arg(&file)]);
    assert!(o.status.success());
    let svg = stdout(&o);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let groups: Vec<_> = doc.descendants().filter_map(|n| n.attribute("id")).collect();
    assert_eq!(groups, vec!["background"]);
}

#[test]
fn trace_outputs_paths() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_doc(dir.path(), "s.json", &bright_sphere());
    let o = liveia(&["trace", arg(&file), "--beam", "b"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let paths = doc["paths"].as_array().unwrap();
    assert!(paths.len() >= 3);
    assert!(paths[0]["events"].as_array().is_some());

    let out = dir.path().join("paths.json");
    let o = liveia(&["trace", arg(&file), "--beam", "b", "--json", arg(&out)]);
    assert!(o.status.success());
    let written: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(written, doc);

    assert_eq!(liveia(&["trace", arg(&file), "--beam", "zz"]).status.code(), Some(2));
}

#[test]
fn metrics_reports_uniformity_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = bright_sphere();
    s.beams.clear();
    let file = write_doc(dir.path(), "s.json", &s);
    let args = [
        "metrics", arg(&file), "--sphere", "s", "--seed", "7", "--rays", "512", "--resolution", "32", "--tol", "0.003",
    ];
    let a = liveia(&args);
    assert!(a.status.success(), "{}", stderr(&a));
    let doc: Value = serde_json::from_str(&stdout(&a)).unwrap();
    for key in ["uniformity", "shadow_fraction", "iterations", "enlightenment_score"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert!(doc["uniformity"].as_f64().unwrap() >= 0.9, "{doc}");
    assert_eq!(stdout(&liveia(&args)), stdout(&a));

    let o = liveia(&["metrics", arg(&file), "--sphere", "s", "--rays", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn fork_writes_a_linked_child() {
    let dir = tempfile::tempdir().unwrap();
    let s = bright_sphere();
    let file = write_doc(dir.path(), "s.json", &s);
    let out = dir.path().join("child.json");
    let o = liveia(&["fork", arg(&file), "-o", arg(&out)]);
    assert!(o.status.success());
    let child = deserialize(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(child.parent.as_deref(), Some(s.id.as_str()));
    assert_ne!(child.id, s.id);
    assert_eq!(stdout(&o).trim(), child.id);
    assert_eq!(child.spheres, s.spheres);
}

#[test]
fn wave_tools() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    fs::write(&a, json!({ "label": "a", "components": [{ "frequency": 4.0, "amplitude": 1.0, "phase": 0.0 }] }).to_string()).unwrap();
    fs::write(&b, json!({ "label": "b", "components": [{ "frequency": 9.0, "amplitude": 0.25, "phase": 0.5 }] }).to_string()).unwrap();
    let o = liveia(&["wave", "superpose", arg(&a), arg(&b), "--duration", "1", "--rate", "128"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(doc["waveform"]["components"].as_array().unwrap().len(), 2);

    let sig = dir.path().join("sig.json");
    fs::write(&sig, doc["signal"].to_string()).unwrap();
    let o = liveia(&["wave", "decompose", arg(&sig)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let comps: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let comps = comps["components"].as_array().unwrap();
    assert_eq!(comps.len(), 2);
    assert!((comps[1]["frequency"].as_f64().unwrap() - 9.0).abs() < 1e-9);
    assert!((comps[1]["amplitude"].as_f64().unwrap() - 0.25).abs() < 0.0025);

    fs::write(&sig, "{\"samples\": [1.0, 2.0], \"sample_rate\": 4}").unwrap();
    assert_eq!(liveia(&["wave", "decompose", arg(&sig)]).status.code(), Some(2));
}
