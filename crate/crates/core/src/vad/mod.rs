//! Voice activity detection: per-frame speech posteriors from a pair of
//! class-conditional mixtures, then a majority-vote state machine that
//! groups frames into speech regions.

mod gmm;

pub use gmm::{
    fit_gmm_em, gmm_log_likelihood, log_sum_exp, speech_posterior, GmmComponent, GmmFit, GmmModel,
    EM_MONOTONE_TOLERANCE, VARIANCE_FLOOR,
};

use crate::dsp::FeatureVector;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VadConfig {
    pub posterior_threshold: f64,
    pub window_frames: usize,
    pub majority_fraction: f64,
    pub hangover_frames: usize,
    pub prior_speech: f64,
}

impl Default for VadConfig {
    fn default() -> Self {
        VadConfig {
            posterior_threshold: 0.5,
            window_frames: 10,
            majority_fraction: 0.6,
            hangover_frames: 5,
            prior_speech: 0.5,
        }
    }
}

impl VadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.posterior_threshold > 0.0 && self.posterior_threshold < 1.0) {
            return Err(Error::invalid("posterior threshold must lie in (0, 1)"));
        }
        if self.window_frames == 0 {
            return Err(Error::invalid("window must hold at least one frame"));
        }
        if !(self.majority_fraction > 0.0 && self.majority_fraction <= 1.0) {
            return Err(Error::invalid("majority fraction must lie in (0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.prior_speech) {
            return Err(Error::invalid("speech prior must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Inclusive frame range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpeechRegion {
    pub start_frame: usize,
    pub end_frame: usize,
}

impl SpeechRegion {
    pub fn contains(&self, frame: usize) -> bool {
        self.start_frame <= frame && frame <= self.end_frame
    }
}

/// Every window of `window_frames` consecutive posteriors in which at
/// least `majority_fraction` of the values exceed the threshold marks all
/// of its frames as speech. Each resulting run is then held open for
/// `hangover_frames` more frames. A sequence shorter than the window is
/// judged as a single truncated window.
pub fn detect_speech_regions(posteriors: &[f64], config: &VadConfig) -> Vec<SpeechRegion> {
    let len = posteriors.len();
    if len == 0 {
        return Vec::new();
    }
    let window = config.window_frames.clamp(1, len);
    let above: Vec<usize> = posteriors
        .iter()
        .map(|&p| usize::from(p > config.posterior_threshold))
        .collect();
    let needed = config.majority_fraction * window as f64;
    let mut speech = vec![false; len];
    let mut count: usize = above[..window].iter().sum();
    for end in window - 1..len {
        if end >= window {
            count = count + above[end] - above[end - window];
        }
        if count as f64 >= needed {
            for s in &mut speech[end + 1 - window..=end] {
                *s = true;
            }
        }
    }

    let mut regions: Vec<SpeechRegion> = Vec::new();
    let mut k = 0;
    while k < len {
        if !speech[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < len && speech[k] {
            k += 1;
        }
        let end = (k - 1 + config.hangover_frames).min(len - 1);
        match regions.last_mut() {
            Some(prev) if start <= prev.end_frame + 1 => prev.end_frame = prev.end_frame.max(end),
            _ => regions.push(SpeechRegion {
                start_frame: start,
                end_frame: end,
            }),
        }
    }
    regions
}

/// Per-frame speech mask over `len` frames.
pub fn region_mask(regions: &[SpeechRegion], len: usize) -> Vec<bool> {
    let mut mask = vec![false; len];
    for r in regions {
        for m in mask.iter_mut().take(r.end_frame + 1).skip(r.start_frame) {
            *m = true;
        }
    }
    mask
}

/// Speech and non-speech mixtures plus the decision settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Vad {
    pub speech: GmmModel,
    pub nonspeech: GmmModel,
    pub config: VadConfig,
}

impl Vad {
    pub fn new(speech: GmmModel, nonspeech: GmmModel, config: VadConfig) -> Result<Self> {
        config.validate()?;
        if speech.dim() != nonspeech.dim() {
            return Err(Error::invalid(
                "speech and non-speech mixtures differ in dimension",
            ));
        }
        Ok(Vad {
            speech,
            nonspeech,
            config,
        })
    }

    pub fn posteriors(&self, features: &[FeatureVector]) -> Result<Vec<f64>> {
        features
            .iter()
            .map(|f| {
                speech_posterior(
                    &self.speech,
                    &self.nonspeech,
                    &f.values,
                    self.config.prior_speech,
                )
            })
            .collect()
    }

    pub fn regions(&self, features: &[FeatureVector]) -> Result<Vec<SpeechRegion>> {
        Ok(detect_speech_regions(
            &self.posteriors(features)?,
            &self.config,
        ))
    }

    /// Fits both mixtures from labelled frames.
    pub fn fit(
        speech_frames: &[Vec<f64>],
        nonspeech_frames: &[Vec<f64>],
        n_components: usize,
        max_iters: usize,
        seed: u64,
        config: VadConfig,
    ) -> Result<(Self, GmmFit, GmmFit)> {
        let s = fit_gmm_em(speech_frames, n_components, max_iters, seed)?;
        let n = fit_gmm_em(
            nonspeech_frames,
            n_components,
            max_iters,
            seed.wrapping_add(1),
        )?;
        let vad = Vad::new(s.model.clone(), n.model.clone(), config)?;
        Ok((vad, s, n))
    }
}

/// Writes one `{start_frame, end_frame}` JSON object per line.
pub fn write_regions_jsonl<W: std::io::Write>(mut out: W, regions: &[SpeechRegion]) -> Result<()> {
    for r in regions {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(threshold: f64, window: usize, majority: f64, hangover: usize) -> VadConfig {
        VadConfig {
            posterior_threshold: threshold,
            window_frames: window,
            majority_fraction: majority,
            hangover_frames: hangover,
            prior_speech: 0.5,
        }
    }

    #[test]
    fn majority_window() {
        let r = detect_speech_regions(&[0.9, 0.8, 0.2], &cfg(0.5, 3, 0.5, 0));
        assert_eq!(
            r,
            vec![SpeechRegion {
                start_frame: 0,
                end_frame: 2
            }]
        );
    }

    #[test]
    fn silence_and_full_speech() {
        assert!(detect_speech_regions(&[0.0; 40], &VadConfig::default()).is_empty());
        let r = detect_speech_regions(&[1.0; 50], &VadConfig::default());
        assert_eq!(
            r,
            vec![SpeechRegion {
                start_frame: 0,
                end_frame: 49
            }]
        );
    }

    #[test]
    fn hangover_extends_and_merges() {
        let mut p = vec![0.0; 40];
        for v in &mut p[5..10] {
            *v = 1.0;
        }
        for v in &mut p[16..20] {
            *v = 1.0;
        }
        let r = detect_speech_regions(&p, &cfg(0.5, 2, 1.0, 0));
        assert_eq!(
            r,
            vec![
                SpeechRegion {
                    start_frame: 5,
                    end_frame: 9
                },
                SpeechRegion {
                    start_frame: 16,
                    end_frame: 19
                }
            ]
        );
        let r = detect_speech_regions(&p, &cfg(0.5, 2, 1.0, 6));
        assert_eq!(
            r,
            vec![SpeechRegion {
                start_frame: 5,
                end_frame: 25
            }]
        );
    }

    #[test]
    fn truncated_window_for_short_input() {
        let r = detect_speech_regions(&[0.9, 0.1], &cfg(0.5, 10, 0.5, 0));
        assert_eq!(
            r,
            vec![SpeechRegion {
                start_frame: 0,
                end_frame: 1
            }]
        );
        assert!(detect_speech_regions(&[], &VadConfig::default()).is_empty());
    }

    #[test]
    fn config_validation() {
        assert!(VadConfig::default().validate().is_ok());
        assert!(cfg(1.0, 3, 0.5, 0).validate().is_err());
        assert!(cfg(0.5, 0, 0.5, 0).validate().is_err());
        assert!(cfg(0.5, 3, 0.0, 0).validate().is_err());
    }

    #[test]
    fn regions_jsonl() {
        let mut out = Vec::new();
        write_regions_jsonl(
            &mut out,
            &[SpeechRegion {
                start_frame: 1,
                end_frame: 4,
            }],
        )
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"start_frame\":1,\"end_frame\":4}\n"
        );
    }
}
