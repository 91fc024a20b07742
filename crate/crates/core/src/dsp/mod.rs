//! Audio front end: framing, log mel filterbank energies, MFCC with deltas,
//! and context stacking for the acoustic model.
//!
//! All frame indices are 0-based. Frame `k` starts at sample `k * hop` and
//! its timestamp is the start time of that sample.

mod fft;
mod mel;
pub mod wav;

pub use fft::Fft;
pub use mel::{hz_to_mel, mel_to_hz, Dct, MelFilterbank};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// The only sample rate the pipeline accepts.
pub const SAMPLE_RATE: u32 = 16_000;

/// Energies are clamped to this value before taking the log.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// Regression half-width for delta features.
pub const DELTA_WINDOW: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::invalid(format!("sample {i} is not finite")));
        }
        Ok(AudioBuffer {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean power over the whole buffer.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples.iter().map(|s| s * s).sum::<f64>() / self.samples.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Vec<f64>>,
    frame_len_ms: f64,
    hop_ms: f64,
    sample_rate: u32,
}

impl FrameSequence {
    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_len_ms(&self) -> f64 {
        self.frame_len_ms
    }

    pub fn hop_ms(&self) -> f64 {
        self.hop_ms
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn timestamp(&self, index: usize) -> f64 {
        index as f64 * self.hop_ms / 1000.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub frame_index: usize,
    pub timestamp: f64,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StackedInput {
    pub values: Vec<f64>,
    pub center_frame_index: usize,
}

fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

/// Cuts `audio` into overlapping frames. Audio shorter than one frame
/// yields an empty sequence.
pub fn frame_signal(audio: &AudioBuffer, frame_len_ms: f64, hop_ms: f64) -> Result<FrameSequence> {
    if !(hop_ms > 0.0) {
        return Err(Error::invalid(format!(
            "hop must be positive, got {hop_ms} ms"
        )));
    }
    if frame_len_ms < hop_ms {
        return Err(Error::invalid(format!(
            "frame length {frame_len_ms} ms is shorter than hop {hop_ms} ms"
        )));
    }
    let sr = audio.sample_rate();
    let frame_len = ms_to_samples(frame_len_ms, sr);
    let hop = ms_to_samples(hop_ms, sr);
    if hop == 0 || frame_len == 0 {
        return Err(Error::invalid("frame or hop shorter than one sample"));
    }
    let samples = audio.samples();
    let frames = if samples.len() < frame_len {
        Vec::new()
    } else {
        let count = (samples.len() - frame_len) / hop + 1;
        (0..count)
            .map(|k| samples[k * hop..k * hop + frame_len].to_vec())
            .collect()
    };
    Ok(FrameSequence {
        frames,
        frame_len_ms,
        hop_ms,
        sample_rate: sr,
    })
}

/// `y[n] = x[n] - coeff * x[n-1]`, with `y[0] = x[0]`.
pub fn pre_emphasis(samples: &[f64], coeff: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut prev = 0.0;
    for &s in samples {
        out.push(s - coeff * prev);
        prev = s;
    }
    out
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub frame_len_ms: f64,
    pub hop_ms: f64,
    pub n_filters: usize,
    pub n_cepstra: usize,
    pub low_hz: f64,
    pub high_hz: f64,
    /// `None` disables pre-emphasis.
    pub pre_emphasis: Option<f64>,
    pub context_past: usize,
    pub context_future: usize,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            sample_rate: SAMPLE_RATE,
            frame_len_ms: 30.0,
            hop_ms: 10.0,
            n_filters: 40,
            n_cepstra: 13,
            low_hz: 20.0,
            high_hz: 8000.0,
            pre_emphasis: Some(0.97),
            context_past: 30,
            context_future: 10,
        }
    }
}

impl FrontendConfig {
    pub fn stacked_dim(&self) -> usize {
        (self.context_past + 1 + self.context_future) * self.n_filters
    }

    /// Look-ahead a frame decision has to wait for.
    pub fn algorithmic_latency_ms(&self) -> f64 {
        self.context_future as f64 * self.hop_ms
    }
}

/// Per-frame features of one utterance.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Log mel filterbank energies, `n_filters` wide.
    pub fbank: Vec<FeatureVector>,
    /// Cepstra followed by their deltas, `2 * n_cepstra` wide.
    pub mfcc: Vec<FeatureVector>,
}

/// Reusable feature extractor with precomputed window, FFT plan,
/// filterbank and DCT.
#[derive(Debug, Clone)]
pub struct Frontend {
    config: FrontendConfig,
    window: Vec<f64>,
    fft: Fft,
    filterbank: MelFilterbank,
    dct: Dct,
}

impl Frontend {
    pub fn new(config: FrontendConfig) -> Result<Self> {
        if config.sample_rate == 0 || config.n_filters == 0 || config.n_cepstra == 0 {
            return Err(Error::invalid("frontend sizes must be positive"));
        }
        if config.n_cepstra > config.n_filters {
            return Err(Error::invalid("more cepstra than filterbank channels"));
        }
        if !(config.low_hz >= 0.0 && config.low_hz < config.high_hz)
            || config.high_hz > config.sample_rate as f64 / 2.0
        {
            return Err(Error::invalid(
                "filterbank range must lie within 0..nyquist",
            ));
        }
        let frame_len = ms_to_samples(config.frame_len_ms, config.sample_rate);
        if frame_len < 2 {
            return Err(Error::invalid("frame must span at least two samples"));
        }
        let fft = Fft::new(frame_len.next_power_of_two());
        let filterbank = MelFilterbank::new(
            config.n_filters,
            fft.len(),
            config.sample_rate,
            config.low_hz,
            config.high_hz,
        );
        Ok(Frontend {
            window: hamming(frame_len),
            dct: Dct::new(config.n_filters, config.n_cepstra),
            fft,
            filterbank,
            config,
        })
    }

    pub fn config(&self) -> &FrontendConfig {
        &self.config
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.filterbank
    }

    /// Log mel energies of one frame. The frame may be shorter than the
    /// configured length; it is zero-padded up to the FFT size.
    pub fn log_filterbank(&self, frame: &[f64]) -> Vec<f64> {
        let windowed: Vec<f64> = if frame.len() == self.window.len() {
            frame.iter().zip(&self.window).map(|(s, w)| s * w).collect()
        } else {
            frame
                .iter()
                .zip(hamming(frame.len()))
                .map(|(s, w)| s * w)
                .collect()
        };
        let power = self.fft.power_spectrum(&windowed);
        self.filterbank
            .apply(&power)
            .into_iter()
            .map(|e| e.max(ENERGY_FLOOR).ln())
            .collect()
    }

    pub fn frames(&self, audio: &AudioBuffer) -> Result<FrameSequence> {
        if audio.sample_rate() != self.config.sample_rate {
            return Err(Error::invalid(format!(
                "expected {} Hz audio, got {} Hz",
                self.config.sample_rate,
                audio.sample_rate()
            )));
        }
        let emphasized = match self.config.pre_emphasis {
            Some(coeff) => {
                AudioBuffer::new(pre_emphasis(audio.samples(), coeff), audio.sample_rate())?
            }
            None => audio.clone(),
        };
        frame_signal(&emphasized, self.config.frame_len_ms, self.config.hop_ms)
    }

    pub fn analyze(&self, audio: &AudioBuffer) -> Result<Analysis> {
        let frames = self.frames(audio)?;
        Ok(self.analyze_frames(&frames))
    }

    pub fn analyze_frames(&self, frames: &FrameSequence) -> Analysis {
        let fbank: Vec<FeatureVector> = frames
            .frames()
            .iter()
            .enumerate()
            .map(|(k, f)| FeatureVector {
                values: self.log_filterbank(f),
                frame_index: k,
                timestamp: frames.timestamp(k),
            })
            .collect();
        let cepstra: Vec<Vec<f64>> = fbank.iter().map(|f| self.dct.apply(&f.values)).collect();
        let deltas = delta_features(&cepstra);
        let mfcc = cepstra
            .into_iter()
            .zip(deltas)
            .enumerate()
            .map(|(k, (mut c, d))| {
                c.extend(d);
                FeatureVector {
                    values: c,
                    frame_index: k,
                    timestamp: frames.timestamp(k),
                }
            })
            .collect();
        Analysis { fbank, mfcc }
    }
}

/// Log mel filterbank energies of a single frame with the default
/// filterbank range and a filter count of `n_filters`.
pub fn log_filterbank(frame: &[f64], sample_rate: u32, n_filters: usize) -> Result<Vec<f64>> {
    if frame.len() < 2 {
        return Err(Error::invalid("frame must hold at least two samples"));
    }
    if n_filters == 0 {
        return Err(Error::invalid("need at least one filter"));
    }
    let frame_len_ms = frame.len() as f64 * 1000.0 / sample_rate as f64;
    let frontend = Frontend::new(FrontendConfig {
        sample_rate,
        frame_len_ms,
        n_filters,
        n_cepstra: 1,
        high_hz: FrontendConfig::default()
            .high_hz
            .min(sample_rate as f64 / 2.0),
        ..FrontendConfig::default()
    })?;
    Ok(frontend.log_filterbank(frame))
}

/// 13 cepstra plus their deltas for every frame.
pub fn mfcc_with_deltas(frames: &FrameSequence) -> Result<Vec<FeatureVector>> {
    if frames.is_empty() {
        return Err(Error::invalid("need at least one frame"));
    }
    let frontend = Frontend::new(FrontendConfig {
        sample_rate: frames.sample_rate(),
        frame_len_ms: frames.frame_len_ms(),
        hop_ms: frames.hop_ms(),
        high_hz: FrontendConfig::default()
            .high_hz
            .min(frames.sample_rate() as f64 / 2.0),
        ..FrontendConfig::default()
    })?;
    Ok(frontend.analyze_frames(frames).mfcc)
}

/// Regression deltas with half-width [`DELTA_WINDOW`], replicating the
/// first and last frames past the edges.
pub fn delta_features(frames: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let len = frames.len() as isize;
    let denom = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let at = |t: isize| &frames[t.clamp(0, len - 1) as usize];
    (0..len)
        .map(|t| {
            let dim = frames[t as usize].len();
            (0..dim)
                .map(|d| {
                    (1..=DELTA_WINDOW as isize)
                        .map(|n| n as f64 * (at(t + n)[d] - at(t - n)[d]))
                        .sum::<f64>()
                        / denom
                })
                .collect()
        })
        .collect()
}

/// Concatenates `past` frames before `center`, the center frame and
/// `future` frames after it, oldest first. Indices outside the sequence
/// are clamped to the nearest edge frame.
pub fn stack_context(
    features: &[FeatureVector],
    center: usize,
    past: usize,
    future: usize,
) -> Result<StackedInput> {
    if features.is_empty() {
        return Err(Error::invalid("no features to stack"));
    }
    if center >= features.len() {
        return Err(Error::invalid(format!(
            "center frame {center} out of range for {} frames",
            features.len()
        )));
    }
    let dim = features[0].dim();
    let last = features.len() as isize - 1;
    let mut values = Vec::with_capacity((past + 1 + future) * dim);
    for offset in -(past as isize)..=(future as isize) {
        let idx = (center as isize + offset).clamp(0, last) as usize;
        values.extend_from_slice(&features[idx].values);
    }
    Ok(StackedInput {
        values,
        center_frame_index: center,
    })
}
