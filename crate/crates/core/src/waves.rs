//! Waveform algebra for thought patterns.
//!
//! A [`Waveform`] is a sum of sines `A·sin(2π f t + φ)`. Superposition
//! concatenates components, sampling evaluates the sum on a uniform grid, and
//! decomposition recovers on-bin components from a sampled signal with a DFT.

use std::f64::consts::TAU;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum signal length accepted by [`decompose`].
pub const MIN_DECOMPOSE_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WaveError {
    #[error("component {index} (f = {frequency}) violates Nyquist at rate {rate}")]
    Nyquist {
        index: usize,
        frequency: f64,
        rate: f64,
    },
    #[error("signal has {len} samples; at least {min} required")]
    TooShort { len: usize, min: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveComponent {
    /// Cycles per unit time, `> 0`.
    pub frequency: f64,
    pub amplitude: f64,
    /// Radians in `[0, 2π)`.
    pub phase: f64,
}

impl WaveComponent {
    /// Component with `phase` wrapped into `[0, 2π)`.
    pub fn new(frequency: f64, amplitude: f64, phase: f64) -> Self {
        WaveComponent {
            frequency,
            amplitude,
            phase: wrap_phase(phase),
        }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.amplitude * (TAU * self.frequency * t + self.phase).sin()
    }
}

fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Waveform {
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub components: Vec<WaveComponent>,
}

impl Waveform {
    pub fn new(label: impl Into<String>, components: Vec<WaveComponent>) -> Self {
        Waveform {
            label: label.into(),
            components,
        }
    }

    /// The waveform with no components.
    pub fn null() -> Self {
        Waveform::default()
    }

    pub fn is_null(&self) -> bool {
        self.components.is_empty()
    }

    pub fn value_at(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.value_at(t)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledSignal {
    pub samples: Vec<f64>,
    pub sample_rate: f64,
}

impl SampledSignal {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self, WaveError> {
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(WaveError::InvalidArgument(format!(
                "sample_rate {sample_rate} must be > 0"
            )));
        }
        if samples.len() < 2 {
            return Err(WaveError::TooShort {
                len: samples.len(),
                min: 2,
            });
        }
        Ok(SampledSignal {
            samples,
            sample_rate,
        })
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }
}

/// Sum of two waveforms.
pub fn superpose(a: &Waveform, b: &Waveform) -> Waveform {
    let label = match (a.label.is_empty(), b.label.is_empty()) {
        (true, _) => b.label.clone(),
        (_, true) => a.label.clone(),
        _ => format!("{} + {}", a.label, b.label),
    };
    let mut components = a.components.clone();
    components.extend_from_slice(&b.components);
    Waveform { label, components }
}

/// Samples `w` at `rate` for `duration`, giving `floor(duration·rate)` points.
pub fn sample(w: &Waveform, duration: f64, rate: f64) -> Result<SampledSignal, WaveError> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(WaveError::InvalidArgument(format!("duration {duration} must be > 0")));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(WaveError::InvalidArgument(format!("rate {rate} must be > 0")));
    }
    for (index, c) in w.components.iter().enumerate() {
        if !(rate > 2.0 * c.frequency) {
            return Err(WaveError::Nyquist {
                index,
                frequency: c.frequency,
                rate,
            });
        }
    }
    let n = (duration * rate).floor() as usize;
    let samples = (0..n).map(|k| w.value_at(k as f64 / rate)).collect();
    SampledSignal::new(samples, rate)
}

/// Recovers sinusoidal components from a sampled signal.
///
/// Signals whose length is not a power of two are zero-padded. Only spectral
/// peaks at or above `floor · max magnitude` are reported, at most
/// `max_components` of them, sorted by amplitude descending. Components that
/// fall between DFT bins leak and are not recovered exactly.
pub fn decompose(
    s: &SampledSignal,
    max_components: usize,
    floor: f64,
) -> Result<Vec<WaveComponent>, WaveError> {
    if s.samples.len() < MIN_DECOMPOSE_LEN {
        return Err(WaveError::TooShort {
            len: s.samples.len(),
            min: MIN_DECOMPOSE_LEN,
        });
    }
    if !(floor > 0.0) {
        return Err(WaveError::InvalidArgument(format!("floor {floor} must be > 0")));
    }
    let n = s.samples.len().next_power_of_two();
    let mut buf: Vec<Complex<f64>> = s
        .samples
        .iter()
        .map(|&x| Complex::new(x, 0.0))
        .chain(std::iter::repeat(Complex::new(0.0, 0.0)))
        .take(n)
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let half = n / 2;
    // Single-sided amplitude spectrum, DC excluded.
    let amp = |k: usize| {
        let scale = if k == half { 1.0 } else { 2.0 };
        scale * buf[k].norm() / n as f64
    };
    let mags: Vec<f64> = (0..=half).map(|k| if k == 0 { 0.0 } else { amp(k) }).collect();
    let max = mags.iter().cloned().fold(0.0, f64::max);
    let peak = s.peak();
    if max <= 1e-12 * peak.max(f64::MIN_POSITIVE) || max == 0.0 {
        return Ok(Vec::new());
    }
    let threshold = floor * max;

    let mut found: Vec<WaveComponent> = (1..=half)
        .filter(|&k| {
            let m = mags[k];
            m >= threshold && m >= mags[k - 1] && (k == half || m >= mags[k + 1])
        })
        .map(|k| {
            let x = buf[k];
            WaveComponent::new(
                k as f64 * s.sample_rate / n as f64,
                mags[k],
                // X_k ∝ e^{i(φ - π/2)} for a sine of phase φ.
                x.im.atan2(x.re) + std::f64::consts::FRAC_PI_2,
            )
        })
        .collect();
    found.sort_by(|a, b| {
        b.amplitude
            .total_cmp(&a.amplitude)
            .then(a.frequency.total_cmp(&b.frequency))
    });
    found.truncate(max_components);
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sample_quarter_period_is_peak() {
        let w = Waveform::new("a", vec![WaveComponent::new(1.0, 1.0, 0.0)]);
        let s = sample(&w, 1.0, 8.0).unwrap();
        assert_eq!(s.samples.len(), 8);
        assert_eq!(s.samples[2], 1.0);
    }

    #[test]
    fn zero_amplitude_is_silent() {
        let w = Waveform::new("z", vec![WaveComponent::new(3.0, 0.0, 1.0)]);
        let s = sample(&w, 2.0, 16.0).unwrap();
        assert!(s.samples.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nyquist_violation_names_component() {
        let w = Waveform::new(
            "n",
            vec![WaveComponent::new(1.0, 1.0, 0.0), WaveComponent::new(5.0, 1.0, 0.0)],
        );
        match sample(&w, 1.0, 10.0) {
            Err(WaveError::Nyquist { index, frequency, .. }) => {
                assert_eq!(index, 1);
                assert_eq!(frequency, 5.0);
            }
            other => panic!("expected Nyquist error, got {other:?}"),
        }
    }

    #[test]
    fn superpose_with_null_is_identity() {
        let a = Waveform::new("a", vec![WaveComponent::new(2.0, 0.5, 1.0)]);
        assert_eq!(superpose(&a, &Waveform::null()), a);
        assert_eq!(superpose(&Waveform::null(), &a), a);
    }

    #[test]
    fn phase_wraps() {
        assert_eq!(WaveComponent::new(1.0, 1.0, TAU).phase, 0.0);
        assert!((WaveComponent::new(1.0, 1.0, -PI).phase - PI).abs() < 1e-15);
    }

    #[test]
    fn short_signal_is_rejected() {
        let s = SampledSignal::new(vec![0.0; 32], 8.0).unwrap();
        assert!(matches!(decompose(&s, 4, 0.01), Err(WaveError::TooShort { .. })));
    }

    #[test]
    fn silent_signal_decomposes_to_nothing() {
        let s = SampledSignal::new(vec![0.0; 128], 8.0).unwrap();
        assert!(decompose(&s, 4, 0.01).unwrap().is_empty());
    }
}
