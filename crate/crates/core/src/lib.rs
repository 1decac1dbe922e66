//! Optical simulation engine for light-metaphor scenes.
//!
//! Psyches are refracting spheres, thoughts are beams carrying waveforms, and
//! situations are versioned scenarios. The modules here compute what the light
//! actually does: ray paths ([`optics`]), equilibrium illumination
//! ([`radiance`]), waveform algebra ([`waves`]), and the scene vocabulary with
//! its canonical document format ([`scene`]). [`render`] turns scenes into SVG.

pub mod geom;
pub mod optics;
pub mod radiance;
pub mod render;
pub mod scene;
pub mod waves;

pub use geom::{Point, Rgb, Vec2};
