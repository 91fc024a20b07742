//! Builds network and VAD training data from a labelled corpus and fits
//! both models.

use super::corpus::{is_sounding, label_at, TestCorpus};
use crate::dnn::{
    accuracy, train_sgd, NetworkParams, Topology, TrainOptions, TrainReport, TrainingSet,
};
use crate::dsp::{stack_context, Frontend, FrontendConfig};
use crate::error::{Error, Result};
use crate::pipeline::KwsModels;
use crate::vad::{GmmFit, Vad, VadConfig};
use serde::{Deserialize, Serialize};

pub const N_LABELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub frontend: FrontendConfig,
    pub hidden_layers: usize,
    pub hidden_nodes: usize,
    pub train: TrainOptions,
    /// Keep one in this many filler frames; keyword frames are all kept.
    pub filler_keep_every: usize,
    pub vad_components: usize,
    pub vad_max_iters: usize,
    pub vad: VadConfig,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = Topology::default();
        TrainingConfig {
            frontend: FrontendConfig::default(),
            hidden_layers: t.hidden_layers,
            hidden_nodes: t.hidden_nodes,
            train: TrainOptions::default(),
            filler_keep_every: 4,
            vad_components: 30,
            vad_max_iters: 50,
            vad: VadConfig::default(),
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn topology(&self) -> Topology {
        Topology {
            input_dim: self.frontend.stacked_dim(),
            hidden_layers: self.hidden_layers,
            hidden_nodes: self.hidden_nodes,
            n_labels: N_LABELS,
        }
    }
}

/// Time of the centre of frame `k`.
pub fn frame_center_s(config: &FrontendConfig, k: usize) -> f64 {
    (k as f64 * config.hop_ms + config.frame_len_ms / 2.0) / 1000.0
}

/// Stacked filterbank inputs with frame labels. Filler frames are thinned
/// to every `filler_keep_every`-th one, counted across the whole corpus.
pub fn build_training_set(
    frontend: &Frontend,
    corpus: &TestCorpus,
    filler_keep_every: usize,
) -> Result<TrainingSet> {
    let cfg = frontend.config();
    let keep = filler_keep_every.max(1);
    let mut data = TrainingSet::new(cfg.stacked_dim());
    let mut filler_seen = 0usize;
    for u in &corpus.utterances {
        let analysis = frontend.analyze(&u.audio)?;
        for k in 0..analysis.fbank.len() {
            let label = label_at(&u.segments, frame_center_s(cfg, k));
            if label == 0 {
                filler_seen += 1;
                if !(filler_seen - 1).is_multiple_of(keep) {
                    continue;
                }
            }
            let x = stack_context(&analysis.fbank, k, cfg.context_past, cfg.context_future)?;
            data.push(&x.values, label)?;
        }
    }
    Ok(data)
}

type Frames = Vec<Vec<f64>>;

/// Cepstral frames split by whether any sound is playing at their centre.
pub fn vad_training_frames(frontend: &Frontend, corpus: &TestCorpus) -> Result<(Frames, Frames)> {
    let cfg = frontend.config();
    let (mut speech, mut nonspeech) = (Vec::new(), Vec::new());
    for u in &corpus.utterances {
        for (k, f) in frontend.analyze(&u.audio)?.mfcc.into_iter().enumerate() {
            if is_sounding(&u.segments, frame_center_s(cfg, k)) {
                speech.push(f.values);
            } else {
                nonspeech.push(f.values);
            }
        }
    }
    Ok((speech, nonspeech))
}

#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub models: KwsModels,
    pub dnn_report: TrainReport,
    pub speech_fit: GmmFit,
    pub nonspeech_fit: GmmFit,
    /// Frame accuracy of the network on its own training set.
    pub frame_accuracy: f64,
}

pub fn train_models(corpus: &TestCorpus, config: &TrainingConfig) -> Result<TrainedModels> {
    let frontend = Frontend::new(config.frontend.clone())?;
    let (speech, nonspeech) = vad_training_frames(&frontend, corpus)?;
    if speech.is_empty() || nonspeech.is_empty() {
        return Err(Error::invalid("corpus lacks speech or non-speech frames"));
    }
    let (vad, speech_fit, nonspeech_fit) = Vad::fit(
        &speech,
        &nonspeech,
        config.vad_components,
        config.vad_max_iters,
        config.seed,
        config.vad.clone(),
    )?;

    let data = build_training_set(&frontend, corpus, config.filler_keep_every)?;
    if data.is_empty() {
        return Err(Error::invalid("corpus yields no training frames"));
    }
    let options = TrainOptions {
        seed: config.seed,
        ..config.train
    };
    let dnn_report = train_sgd(config.topology(), &data, &options)?;
    let frame_accuracy = accuracy(&dnn_report.params, &data)?;
    Ok(TrainedModels {
        models: KwsModels {
            dnn: dnn_report.params.clone(),
            vad,
        },
        dnn_report,
        speech_fit,
        nonspeech_fit,
        frame_accuracy,
    })
}

/// Untrained network with the configured topology.
pub fn initial_network(config: &TrainingConfig) -> Result<NetworkParams> {
    NetworkParams::init(config.topology(), config.seed)
}
