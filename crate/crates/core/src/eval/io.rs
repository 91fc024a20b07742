//! Corpus on disk: one WAV per utterance plus a JSON manifest.

use super::corpus::{Segment, TestCorpus, Utterance, UtteranceLabel, Variant};
use crate::dsp::wav::{read_wav, write_wav};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Relative to the manifest's directory.
    pub wav: PathBuf,
    pub label: UtteranceLabel,
    pub variant: Variant,
    pub snr_db: f64,
    /// Drive time at which the utterance starts.
    pub timestamp_s: f64,
    pub clipped_fraction: f64,
    pub segments: Vec<Segment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub utterances: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn timestamps(&self) -> Vec<f64> {
        self.utterances.iter().map(|u| u.timestamp_s).collect()
    }
}

/// Writes `wav/<id>.wav` files and `manifest.json` under `dir`.
pub fn write_corpus(
    dir: &Path,
    corpus: &TestCorpus,
    start_times: Option<&[f64]>,
) -> Result<Manifest> {
    if let Some(t) = start_times {
        if t.len() != corpus.len() {
            return Err(Error::invalid("one start time per utterance is required"));
        }
    }
    std::fs::create_dir_all(dir.join("wav"))?;
    let mut utterances = Vec::with_capacity(corpus.len());
    for (i, u) in corpus.utterances.iter().enumerate() {
        let rel = PathBuf::from("wav").join(format!("{}.wav", u.id));
        write_wav(dir.join(&rel), &u.audio)?;
        utterances.push(ManifestEntry {
            id: u.id.clone(),
            wav: rel,
            label: u.label,
            variant: u.variant,
            snr_db: u.snr_db,
            timestamp_s: start_times.map_or(0.0, |t| t[i]),
            clipped_fraction: u.clipped_fraction,
            segments: u.segments.clone(),
        });
    }
    let manifest = Manifest { utterances };
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Loads the manifest at `path` and every WAV it references.
pub fn load_corpus(path: &Path) -> Result<(Manifest, TestCorpus)> {
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let utterances = manifest
        .utterances
        .iter()
        .map(|e| {
            Ok(Utterance {
                id: e.id.clone(),
                audio: read_wav(base.join(&e.wav))?,
                label: e.label,
                variant: e.variant,
                snr_db: e.snr_db,
                segments: e.segments.clone(),
                clipped_fraction: e.clipped_fraction,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, TestCorpus { utterances }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::corpus::{synthesize_corpus, CorpusSpec};

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = synthesize_corpus(&CorpusSpec {
            n_positive: 2,
            n_negative: 2,
            ..Default::default()
        })
        .unwrap();
        let times = [1.0, 2.0, 3.0, 4.0];
        let written = write_corpus(dir.path(), &corpus, Some(&times)).unwrap();
        let (manifest, back) = load_corpus(&dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(manifest, written);
        assert_eq!(manifest.timestamps(), times);
        for (a, b) in corpus.utterances.iter().zip(&back.utterances) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.segments, b.segments);
            assert_eq!(a.audio.len(), b.audio.len());
            let err = a
                .audio
                .samples()
                .iter()
                .zip(b.audio.samples())
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(err <= 1.0 / 32768.0, "{err}");
        }
    }
}
