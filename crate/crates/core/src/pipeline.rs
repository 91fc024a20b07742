//! End-to-end single-utterance processing: framing, VAD gating, stacked
//! filterbank features, DNN posteriors and confidence scores.

use crate::dnn::{load_params, save_params, NetworkParams, PosteriorFrame};
use crate::dsp::{stack_context, AudioBuffer, Frontend, FrontendConfig};
use crate::error::{Error, Result};
use crate::scorer::{
    gated_scores, DetectionEvent, FrameContext, ManeuverKind, ScoringConfig, Sensitivity,
    SmoothingConfig, StreamingScorer,
};
use crate::vad::{region_mask, GmmModel, Vad, VadConfig};
use std::path::Path;
use std::time::Instant;

pub const DNN_FILE: &str = "dnn.json";
pub const VAD_SPEECH_FILE: &str = "vad_speech.json";
pub const VAD_NONSPEECH_FILE: &str = "vad_nonspeech.json";

/// Trained network and voice activity detector.
#[derive(Debug, Clone)]
pub struct KwsModels {
    pub dnn: NetworkParams,
    pub vad: Vad,
}

impl KwsModels {
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(DNN_FILE), save_params(&self.dnn))?;
        std::fs::write(dir.join(VAD_SPEECH_FILE), self.vad.speech.to_json()?)?;
        std::fs::write(dir.join(VAD_NONSPEECH_FILE), self.vad.nonspeech.to_json()?)?;
        Ok(())
    }

    pub fn load(dir: &Path, vad_config: VadConfig) -> Result<Self> {
        let dnn = load_params(&std::fs::read(dir.join(DNN_FILE))?)?;
        let speech = GmmModel::from_json(&std::fs::read_to_string(dir.join(VAD_SPEECH_FILE))?)?;
        let nonspeech =
            GmmModel::from_json(&std::fs::read_to_string(dir.join(VAD_NONSPEECH_FILE))?)?;
        Ok(KwsModels {
            dnn,
            vad: Vad::new(speech, nonspeech, vad_config)?,
        })
    }
}

/// Per-frame results for one utterance, before any threshold is applied.
#[derive(Debug, Clone)]
pub struct UtteranceFrames {
    /// Frame start times relative to the start of the audio.
    pub timestamps: Vec<f64>,
    pub in_speech: Vec<bool>,
    pub posteriors: Vec<PosteriorFrame>,
}

impl UtteranceFrames {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Gated confidence score per frame.
    pub fn scores(&self, smoothing: SmoothingConfig, scoring: ScoringConfig) -> Result<Vec<f64>> {
        let placeholder = Sensitivity::new(0.0)?;
        let contexts: Vec<FrameContext> = self
            .timestamps
            .iter()
            .zip(&self.in_speech)
            .map(|(&t, &s)| FrameContext {
                timestamp_s: t,
                in_speech: s,
                sensitivity: placeholder,
                maneuver_state: ManeuverKind::Normal,
            })
            .collect();
        gated_scores(&self.posteriors, &contexts, smoothing, scoring)
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    frontend: Frontend,
    models: KwsModels,
}

impl Pipeline {
    pub fn new(config: FrontendConfig, models: KwsModels) -> Result<Self> {
        let frontend = Frontend::new(config)?;
        let cfg = frontend.config();
        if models.dnn.topology().input_dim != cfg.stacked_dim() {
            return Err(Error::invalid(format!(
                "network expects {} inputs but the frontend stacks {}",
                models.dnn.topology().input_dim,
                cfg.stacked_dim()
            )));
        }
        if models.vad.speech.dim() != 2 * cfg.n_cepstra {
            return Err(Error::invalid(
                "VAD dimension does not match the cepstral features",
            ));
        }
        Ok(Pipeline { frontend, models })
    }

    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn models(&self) -> &KwsModels {
        &self.models
    }

    pub fn n_labels(&self) -> usize {
        self.models.dnn.topology().n_labels
    }

    /// Look-ahead of a frame decision in milliseconds: the future context
    /// of the stacked network input.
    pub fn algorithmic_latency_ms(&self) -> f64 {
        self.frontend.config().algorithmic_latency_ms()
    }

    pub fn analyze(&self, audio: &AudioBuffer) -> Result<UtteranceFrames> {
        let analysis = self.frontend.analyze(audio)?;
        let n = analysis.fbank.len();
        let in_speech = region_mask(&self.models.vad.regions(&analysis.mfcc)?, n);
        let cfg = self.frontend.config();
        let mut posteriors = Vec::with_capacity(n);
        for k in 0..n {
            let stacked = stack_context(&analysis.fbank, k, cfg.context_past, cfg.context_future)?;
            posteriors.push(self.models.dnn.posterior(&stacked)?);
        }
        Ok(UtteranceFrames {
            timestamps: analysis.fbank.iter().map(|f| f.timestamp).collect(),
            in_speech,
            posteriors,
        })
    }

    /// Feeds the frames through a [`StreamingScorer`]. `sensitivity_at`
    /// supplies each frame's sensitivity and maneuver state from its index
    /// and timestamp.
    pub fn detect_with<F>(
        &self,
        frames: &UtteranceFrames,
        smoothing: SmoothingConfig,
        scoring: ScoringConfig,
        refractory: usize,
        mut sensitivity_at: F,
    ) -> Result<Vec<DetectionEvent>>
    where
        F: FnMut(usize, f64) -> (Sensitivity, ManeuverKind),
    {
        let mut scorer = StreamingScorer::new(self.n_labels(), smoothing, scoring, refractory)?;
        let mut events = Vec::new();
        for (k, p) in frames.posteriors.iter().enumerate() {
            let (sensitivity, maneuver_state) = sensitivity_at(k, frames.timestamps[k]);
            let ctx = FrameContext {
                timestamp_s: frames.timestamps[k],
                in_speech: frames.in_speech[k],
                sensitivity,
                maneuver_state,
            };
            if let (_, Some(e)) = scorer.push(p, &ctx)? {
                events.push(e);
            }
        }
        Ok(events)
    }

    /// Single-sensitivity detection over a whole utterance.
    pub fn detect(
        &self,
        audio: &AudioBuffer,
        sensitivity: Sensitivity,
        smoothing: SmoothingConfig,
        scoring: ScoringConfig,
        refractory: usize,
    ) -> Result<Vec<DetectionEvent>> {
        let frames = self.analyze(audio)?;
        self.detect_with(&frames, smoothing, scoring, refractory, |_, _| {
            (sensitivity, ManeuverKind::Normal)
        })
    }

    /// Wall-clock processing time of [`Pipeline::detect`] divided by the
    /// audio duration.
    pub fn real_time_factor(&self, audio: &AudioBuffer, sensitivity: Sensitivity) -> Result<f64> {
        if audio.is_empty() {
            return Err(Error::invalid("empty audio"));
        }
        let start = Instant::now();
        self.detect(
            audio,
            sensitivity,
            SmoothingConfig::default(),
            ScoringConfig::default(),
            crate::scorer::DEFAULT_REFRACTORY_FRAMES,
        )?;
        Ok(start.elapsed().as_secs_f64() / audio.duration_s())
    }
}
