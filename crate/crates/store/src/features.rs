use liveia_core::scene::Scenario;

pub const FEATURE_DIM: usize = 12;

/// Names of the feature vector entries, in order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "sphere_count",
    "mean_radius",
    "mean_light_level",
    "mean_shell_thickness",
    "mean_shell_opacity",
    "fractures_per_sphere",
    "bubbles_per_sphere",
    "mean_border_blur",
    "beam_count",
    "mean_beam_spread",
    "mean_origin_depth",
    "spark_count",
];

pub type FeatureVector = [f64; FEATURE_DIM];

fn mean(it: impl Iterator<Item = f64>, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        it.sum::<f64>() / n as f64
    }
}

/// Summary features of a scenario. Spheres without a shell count as zero
/// thickness and opacity.
pub fn feature_vector(s: &Scenario) -> FeatureVector {
    let ns = s.spheres.len();
    let nb = s.beams.len();
    let sp = &s.spheres;
    [
        ns as f64,
        mean(sp.iter().map(|x| x.radius), ns),
        mean(sp.iter().map(|x| x.light_level), ns),
        mean(sp.iter().map(|x| x.shell.as_ref().map_or(0.0, |h| h.thickness)), ns),
        mean(sp.iter().map(|x| x.shell.as_ref().map_or(0.0, |h| h.opacity)), ns),
        mean(sp.iter().map(|x| x.fractures.len() as f64), ns),
        mean(sp.iter().map(|x| x.bubbles.len() as f64), ns),
        mean(sp.iter().map(|x| x.border_blur), ns),
        nb as f64,
        mean(s.beams.iter().map(|b| b.spread), nb),
        mean(s.beams.iter().map(|b| b.origin_depth), nb),
        s.sparks.len() as f64,
    ]
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}
