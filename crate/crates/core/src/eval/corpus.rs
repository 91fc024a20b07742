//! Synthetic keyword corpus. Each sub-word is a short multi-tone chord;
//! the keyword is two distinct chords in sequence, and negatives are the
//! usual confusions: a truncated second sub-word, a different first
//! sub-word, or unrelated sounds.

use crate::dsp::{AudioBuffer, SAMPLE_RATE};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const KEYWORD_TEMPLATE: &str = "hey_atom";

/// Nominal length of one sub-word.
pub const SUBWORD_S: f64 = 0.3;

const TONE_AMPLITUDES: [f64; 3] = [1.0, 0.6, 0.4];
const FIRST: [f64; 3] = [520.0, 1450.0, 2950.0];
const SECOND: [f64; 3] = [780.0, 2100.0, 3900.0];
const ALTERED_FIRST: [f64; 3] = [620.0, 1250.0, 3300.0];
const FILLERS: [[f64; 3]; 4] = [
    [330.0, 1100.0, 2400.0],
    [900.0, 1600.0, 4600.0],
    [420.0, 2600.0, 5200.0],
    [1000.0, 3000.0, 6000.0],
];
const RAMP_S: f64 = 0.015;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtteranceLabel {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Both sub-words.
    Keyword,
    /// First sub-word and only the start of the second.
    MissingEnd,
    /// First sub-word and only the end of the second.
    MissingStart,
    /// A different first sub-word followed by the second.
    AlteredFirst,
    /// Unrelated chords.
    Filler,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "keyword" => Ok(Variant::Keyword),
            "missing_end" => Ok(Variant::MissingEnd),
            "missing_start" => Ok(Variant::MissingStart),
            "altered_first" => Ok(Variant::AlteredFirst),
            "filler" => Ok(Variant::Filler),
            other => Err(Error::invalid(format!("unknown variant {other:?}"))),
        }
    }
}

/// A sounding stretch of an utterance and its network label (0 filler,
/// 1 first sub-word, 2 second sub-word).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub label: usize,
    pub start_s: f64,
    pub end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_positive: usize,
    pub n_negative: usize,
    pub snr_range_db: [f64; 2],
    pub keyword_template_id: String,
    /// Negatives cycle through these in order.
    pub negative_variant_ids: Vec<Variant>,
    pub seed: u64,
    /// Range of the duration scale applied per utterance.
    pub stretch_range: [f64; 2],
    /// Maximum relative frequency shift per utterance.
    pub pitch_shift: f64,
    /// Fraction of the second sub-word kept by truncated negatives.
    pub partial_range: [f64; 2],
    /// Range of the silence before and after the sound.
    pub silence_range_s: [f64; 2],
    /// Range of the pause between sub-words.
    pub gap_range_s: [f64; 2],
    /// Range of the overall amplitude.
    pub gain_range: [f64; 2],
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_positive: 50,
            n_negative: 50,
            snr_range_db: [5.0, 10.0],
            keyword_template_id: KEYWORD_TEMPLATE.into(),
            negative_variant_ids: vec![
                Variant::MissingEnd,
                Variant::MissingStart,
                Variant::AlteredFirst,
                Variant::Filler,
            ],
            seed: 0,
            stretch_range: [0.3, 1.2],
            pitch_shift: 0.05,
            partial_range: [0.05, 0.15],
            silence_range_s: [0.2, 0.4],
            gap_range_s: [0.0, 0.06],
            gain_range: [0.15, 0.3],
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.keyword_template_id != KEYWORD_TEMPLATE {
            return Err(Error::invalid(format!(
                "unknown keyword template {:?}",
                self.keyword_template_id
            )));
        }
        if self.n_negative > 0 && self.negative_variant_ids.is_empty() {
            return Err(Error::invalid("negatives requested but no variants given"));
        }
        if self.negative_variant_ids.contains(&Variant::Keyword) {
            return Err(Error::invalid("the keyword cannot be a negative variant"));
        }
        let ranges = [
            ("snr_range_db", self.snr_range_db, f64::NEG_INFINITY),
            ("stretch_range", self.stretch_range, 0.0),
            ("partial_range", self.partial_range, 0.0),
            ("silence_range_s", self.silence_range_s, 0.0),
            ("gap_range_s", self.gap_range_s, 0.0),
            ("gain_range", self.gain_range, 0.0),
        ];
        for (name, [lo, hi], min) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi && lo >= min) {
                return Err(Error::invalid(format!(
                    "{name} must be an ordered finite range"
                )));
            }
        }
        if self.stretch_range[0] == 0.0 || self.partial_range[1] > 1.0 {
            return Err(Error::invalid(
                "stretch must be positive and partial fractions at most 1",
            ));
        }
        if !(0.0..0.5).contains(&self.pitch_shift) {
            return Err(Error::invalid("pitch shift must lie in [0, 0.5)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio: AudioBuffer,
    pub label: UtteranceLabel,
    pub variant: Variant,
    pub snr_db: f64,
    pub segments: Vec<Segment>,
    pub clipped_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCorpus {
    pub utterances: Vec<Utterance>,
}

impl TestCorpus {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn count(&self, label: UtteranceLabel) -> usize {
        self.utterances.iter().filter(|u| u.label == label).count()
    }
}

fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Appends a chord of `duration_s` with raised-cosine edges.
fn render_chord(
    out: &mut Vec<f64>,
    freqs: &[f64; 3],
    duration_s: f64,
    gain: f64,
    rng: &mut ChaCha8Rng,
) {
    let n = (duration_s * SAMPLE_RATE as f64).round() as usize;
    let ramp = ((RAMP_S * SAMPLE_RATE as f64) as usize).min(n / 4).max(1);
    let phases: Vec<f64> = (0..freqs.len())
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let norm: f64 = TONE_AMPLITUDES.iter().sum();
    for i in 0..n {
        let t = i as f64 / SAMPLE_RATE as f64;
        let env = if i < ramp {
            0.5 - 0.5 * (std::f64::consts::PI * i as f64 / ramp as f64).cos()
        } else if i >= n - ramp {
            0.5 - 0.5 * (std::f64::consts::PI * (n - 1 - i) as f64 / ramp as f64).cos()
        } else {
            1.0
        };
        let s: f64 = freqs
            .iter()
            .zip(TONE_AMPLITUDES)
            .zip(&phases)
            .map(|((f, a), p)| a * (std::f64::consts::TAU * f * t + p).sin())
            .sum();
        out.push(gain * env * s / norm);
    }
}

fn render_silence(out: &mut Vec<f64>, duration_s: f64) {
    let n = (duration_s * SAMPLE_RATE as f64).round() as usize;
    out.resize(out.len() + n, 0.0);
}

fn shifted(freqs: &[f64; 3], factor: f64) -> [f64; 3] {
    freqs.map(|f| f * factor)
}

struct Builder<'a> {
    samples: Vec<f64>,
    segments: Vec<Segment>,
    gain: f64,
    pitch: f64,
    rng: &'a mut ChaCha8Rng,
}

impl Builder<'_> {
    fn now(&self) -> f64 {
        self.samples.len() as f64 / SAMPLE_RATE as f64
    }

    fn chord(&mut self, freqs: &[f64; 3], duration_s: f64, label: usize) {
        let start = self.now();
        let f = shifted(freqs, self.pitch);
        render_chord(&mut self.samples, &f, duration_s, self.gain, self.rng);
        self.segments.push(Segment {
            label,
            start_s: start,
            end_s: self.now(),
        });
    }

    fn silence(&mut self, duration_s: f64) {
        render_silence(&mut self.samples, duration_s);
    }
}

/// Clean signal and segments for one utterance.
fn render(spec: &CorpusSpec, variant: Variant, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<Segment>) {
    let stretch = uniform(rng, spec.stretch_range);
    let pitch = 1.0 + uniform(rng, [-spec.pitch_shift, spec.pitch_shift]);
    let gain = uniform(rng, spec.gain_range);
    let lead = uniform(rng, spec.silence_range_s);
    let trail = uniform(rng, spec.silence_range_s);
    let gap = uniform(rng, spec.gap_range_s);
    let partial = uniform(rng, spec.partial_range);
    let filler_a = rng.random_range(0..FILLERS.len());
    let filler_b = (filler_a + rng.random_range(1..FILLERS.len())) % FILLERS.len();
    let word = SUBWORD_S * stretch;

    let mut b = Builder {
        samples: Vec::new(),
        segments: Vec::new(),
        gain,
        pitch,
        rng,
    };
    b.silence(lead);
    match variant {
        Variant::Keyword => {
            b.chord(&FIRST, word, 1);
            b.silence(gap);
            b.chord(&SECOND, word, 2);
        }
        Variant::MissingEnd | Variant::MissingStart => {
            // A stationary chord has no internal order, so the two
            // truncations differ only in where the cut falls: straight
            // after the pause or later, as if the onset were swallowed.
            b.chord(&FIRST, word, 1);
            let pause = if variant == Variant::MissingStart {
                gap + word * (1.0 - partial)
            } else {
                gap
            };
            b.silence(pause);
            b.chord(&SECOND, word * partial, 2);
        }
        Variant::AlteredFirst => {
            b.chord(&ALTERED_FIRST, word, 0);
            b.silence(gap);
            b.chord(&SECOND, word, 2);
        }
        Variant::Filler => {
            b.chord(&FILLERS[filler_a], word, 0);
            b.silence(gap);
            b.chord(&FILLERS[filler_b], word, 0);
        }
    }
    b.silence(trail);
    (b.samples, b.segments)
}

/// Noisy audio and the share of samples clipped to `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyAudio {
    pub audio: AudioBuffer,
    pub clipped_fraction: f64,
}

/// Adds white Gaussian noise whose power over the whole utterance sits
/// exactly `snr_db` below the signal power, then clips.
pub fn add_noise(signal: &AudioBuffer, snr_db: f64, seed: u64) -> Result<NoisyAudio> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    add_noise_with(signal, snr_db, &mut rng)
}

fn add_noise_with(signal: &AudioBuffer, snr_db: f64, rng: &mut ChaCha8Rng) -> Result<NoisyAudio> {
    let p_signal = signal.power();
    if !(p_signal > 0.0) {
        return Err(Error::invalid("cannot set an SNR on a silent signal"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("SNR must be finite"));
    }
    let noise: Vec<f64> = (0..signal.len())
        .map(|_| StandardNormal.sample(rng))
        .collect();
    let p_noise = noise.iter().map(|n| n * n).sum::<f64>() / noise.len() as f64;
    let scale = (p_signal / 10f64.powf(snr_db / 10.0) / p_noise).sqrt();
    let mut clipped = 0usize;
    let samples: Vec<f64> = signal
        .samples()
        .iter()
        .zip(&noise)
        .map(|(s, n)| {
            let v = s + scale * n;
            if v.abs() > 1.0 {
                clipped += 1;
            }
            v.clamp(-1.0, 1.0)
        })
        .collect();
    Ok(NoisyAudio {
        audio: AudioBuffer::new(samples, signal.sample_rate())?,
        clipped_fraction: clipped as f64 / signal.len() as f64,
    })
}

/// `10 log10(P_signal / P_noise)` with the noise taken as `noisy - clean`.
pub fn measured_snr_db(clean: &AudioBuffer, noisy: &AudioBuffer) -> f64 {
    let p_noise = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, n)| (n - c).powi(2))
        .sum::<f64>()
        / clean.len() as f64;
    10.0 * (clean.power() / p_noise).log10()
}

fn utterance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Positives first, then negatives. Every utterance draws from its own
/// stream of the seeded generator, so the result does not depend on
/// evaluation order.
pub fn synthesize_corpus(spec: &CorpusSpec) -> Result<TestCorpus> {
    spec.validate()?;
    let total = spec.n_positive + spec.n_negative;
    let utterances = (0..total)
        .into_par_iter()
        .map(|i| {
            let (label, variant, id) = if i < spec.n_positive {
                (
                    UtteranceLabel::Positive,
                    Variant::Keyword,
                    format!("pos_{i:04}"),
                )
            } else {
                let j = i - spec.n_positive;
                let v = spec.negative_variant_ids[j % spec.negative_variant_ids.len()];
                (UtteranceLabel::Negative, v, format!("neg_{j:04}"))
            };
            let mut rng = utterance_rng(spec.seed, i);
            let snr_db = uniform(&mut rng, spec.snr_range_db);
            let (clean, segments) = render(spec, variant, &mut rng);
            let clean = AudioBuffer::new(clean, SAMPLE_RATE)?;
            let noisy = add_noise_with(&clean, snr_db, &mut rng)?;
            Ok(Utterance {
                id,
                audio: noisy.audio,
                label,
                variant,
                snr_db,
                segments,
                clipped_fraction: noisy.clipped_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TestCorpus { utterances })
}

/// Network label of the frame centered at `center_s`.
pub fn label_at(segments: &[Segment], center_s: f64) -> usize {
    segments
        .iter()
        .find(|s| s.start_s <= center_s && center_s < s.end_s)
        .map_or(0, |s| s.label)
}

pub fn is_sounding(segments: &[Segment], center_s: f64) -> bool {
    segments
        .iter()
        .any(|s| s.start_s <= center_s && center_s < s.end_s)
}
