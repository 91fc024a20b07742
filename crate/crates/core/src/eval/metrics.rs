//! Utterance-level precision/recall and sensitivity sweeps.

use super::corpus::{TestCorpus, Utterance, UtteranceLabel};
use crate::error::{Error, Result};
use crate::fusion::{align_telemetry, select_sensitivity, SensitivityPair};
use crate::pipeline::Pipeline;
use crate::scorer::{detect, DetectionEvent, ScoringConfig, Sensitivity, SmoothingConfig};
use crate::telemetry::ManeuverState;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
}

impl Metrics {
    /// Precision is 1 when nothing fires; recall is 1 when there is
    /// nothing to find.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
        }
    }

    /// Counts `(label, fired)` outcomes.
    pub fn from_outcomes(outcomes: impl IntoIterator<Item = (UtteranceLabel, bool)>) -> Self {
        let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
        for (label, fired) in outcomes {
            match (label, fired) {
                (UtteranceLabel::Positive, true) => tp += 1,
                (UtteranceLabel::Negative, true) => fp += 1,
                (UtteranceLabel::Positive, false) => fn_ += 1,
                (UtteranceLabel::Negative, false) => tn += 1,
            }
        }
        Metrics::from_counts(tp, fp, fn_, tn)
    }
}

/// Runs `runner` on every utterance in parallel; an utterance counts as
/// activated when it yields at least one event.
pub fn evaluate<F>(corpus: &TestCorpus, runner: F) -> Result<Metrics>
where
    F: Fn(&Utterance) -> Result<Vec<DetectionEvent>> + Sync,
{
    let outcomes = corpus
        .utterances
        .par_iter()
        .map(|u| Ok((u.label, !runner(u)?.is_empty())))
        .collect::<Result<Vec<_>>>()?;
    Ok(Metrics::from_outcomes(outcomes))
}

/// Gated per-frame scores of one utterance, placed on the drive clock.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredUtterance {
    pub id: String,
    pub label: UtteranceLabel,
    /// Drive time of the first audio sample.
    pub start_s: f64,
    /// Frame start times relative to the audio.
    pub frame_times: Vec<f64>,
    pub scores: Vec<f64>,
}

impl ScoredUtterance {
    pub fn fires_at(&self, sensitivity: Sensitivity) -> bool {
        self.scores.iter().any(|&s| detect(s, sensitivity))
    }

    /// Whether any frame reaches the threshold of the sensitivity its
    /// aligned maneuver state selects.
    pub fn fires_fused(
        &self,
        pair: &SensitivityPair,
        states: &[ManeuverState],
        staleness_limit_s: f64,
    ) -> bool {
        let times: Vec<f64> = self.frame_times.iter().map(|t| self.start_s + t).collect();
        align_telemetry(&times, states, staleness_limit_s)
            .iter()
            .zip(&self.scores)
            .any(|(a, &s)| detect(s, select_sensitivity(a.maneuver_state, pair)))
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }
}

/// Analyzes every utterance once. `start_times` places utterances on the
/// drive clock; all start at 0 when it is `None`.
pub fn score_corpus(
    pipeline: &Pipeline,
    corpus: &TestCorpus,
    start_times: Option<&[f64]>,
    smoothing: SmoothingConfig,
    scoring: ScoringConfig,
) -> Result<Vec<ScoredUtterance>> {
    if let Some(t) = start_times {
        if t.len() != corpus.len() {
            return Err(Error::invalid("one start time per utterance is required"));
        }
    }
    corpus
        .utterances
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let frames = pipeline.analyze(&u.audio)?;
            Ok(ScoredUtterance {
                id: u.id.clone(),
                label: u.label,
                start_s: start_times.map_or(0.0, |t| t[i]),
                scores: frames.scores(smoothing, scoring)?,
                frame_times: frames.timestamps,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceKind {
    /// Divide by N.
    #[default]
    Population,
    /// Divide by N - 1.
    Sample,
}

/// Arithmetic mean and mean squared deviation.
pub fn summarize(values: &[f64], kind: VarianceKind) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("nothing to summarize"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    let mse = match kind {
        VarianceKind::Population => ss / n,
        VarianceKind::Sample if values.len() > 1 => ss / (n - 1.0),
        VarianceKind::Sample => 0.0,
    };
    Ok((mean, mse))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    /// 1-based.
    pub config_id: usize,
    pub sen_1: f64,
    pub sen_2: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub rows: Vec<SweepRow>,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub mse_precision: f64,
    pub mse_recall: f64,
}

impl SweepSummary {
    pub fn from_rows(rows: Vec<SweepRow>, kind: VarianceKind) -> Result<Self> {
        let p: Vec<f64> = rows.iter().map(|r| r.metrics.precision).collect();
        let r: Vec<f64> = rows.iter().map(|r| r.metrics.recall).collect();
        let (mean_precision, mse_precision) = summarize(&p, kind)?;
        let (mean_recall, mse_recall) = summarize(&r, kind)?;
        Ok(SweepSummary {
            rows,
            mean_precision,
            mean_recall,
            mse_precision,
            mse_recall,
        })
    }
}

/// Single-source sweep over precomputed scores.
pub fn sweep_single(
    sensitivities: &[Sensitivity],
    scored: &[ScoredUtterance],
) -> Result<SweepSummary> {
    if sensitivities.is_empty() {
        return Err(Error::invalid("empty sensitivity grid"));
    }
    let rows = sensitivities
        .iter()
        .enumerate()
        .map(|(i, &s)| SweepRow {
            config_id: i + 1,
            sen_1: s.value(),
            sen_2: s.value(),
            metrics: Metrics::from_outcomes(scored.iter().map(|u| (u.label, u.fires_at(s)))),
        })
        .collect();
    SweepSummary::from_rows(rows, VarianceKind::Population)
}

/// Fused sweep over precomputed scores with one shared drive.
pub fn sweep_double(
    pairs: &[SensitivityPair],
    scored: &[ScoredUtterance],
    states: &[ManeuverState],
    staleness_limit_s: f64,
) -> Result<SweepSummary> {
    if pairs.is_empty() {
        return Err(Error::invalid("empty sensitivity grid"));
    }
    if let Some(p) = pairs.iter().find(|p| p.sen_1 >= p.sen_2) {
        return Err(Error::invalid(format!(
            "sensitivity pair needs sen_1 < sen_2, got ({}, {})",
            p.sen_1.value(),
            p.sen_2.value()
        )));
    }
    let rows = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| SweepRow {
            config_id: i + 1,
            sen_1: p.sen_1.value(),
            sen_2: p.sen_2.value(),
            metrics: Metrics::from_outcomes(
                scored
                    .iter()
                    .map(|u| (u.label, u.fires_fused(p, states, staleness_limit_s))),
            ),
        })
        .collect();
    SweepSummary::from_rows(rows, VarianceKind::Population)
}

/// Sensitivities evaluated one at a time.
pub const SINGLE_GRID: [f64; 6] = [0.495, 0.50, 0.52, 0.55, 0.57, 0.58];

pub fn single_grid() -> Vec<Sensitivity> {
    SINGLE_GRID
        .iter()
        .map(|&v| Sensitivity::new(v).expect("grid values lie in [0, 1]"))
        .collect()
}

/// Every increasing pair drawn from [`SINGLE_GRID`], in grid order.
pub fn double_grid() -> Vec<SensitivityPair> {
    let mut pairs = Vec::new();
    for (i, &a) in SINGLE_GRID.iter().enumerate() {
        for &b in &SINGLE_GRID[i + 1..] {
            pairs.push(SensitivityPair::new(a, b).expect("grid is strictly increasing"));
        }
    }
    pairs
}

pub fn write_sweep_csv<W: std::io::Write>(out: W, summary: &SweepSummary) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "config_id",
        "sen_1",
        "sen_2",
        "tp",
        "fp",
        "fn",
        "tn",
        "precision",
        "recall",
    ])
    .map_err(crate::dsp::wav::csv_err)?;
    for r in &summary.rows {
        let m = &r.metrics;
        w.serialize((
            r.config_id,
            r.sen_1,
            r.sen_2,
            m.tp,
            m.fp,
            m.fn_,
            m.tn,
            m.precision,
            m.recall,
        ))
        .map_err(crate::dsp::wav::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// One line per system with the mean and mean squared deviation of
/// precision and recall.
pub fn write_summary_csv<W: std::io::Write>(
    out: W,
    systems: &[(&str, &SweepSummary)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "system",
        "mean_precision",
        "mse_precision",
        "mean_recall",
        "mse_recall",
    ])
    .map_err(crate::dsp::wav::csv_err)?;
    for (name, s) in systems {
        w.serialize((
            name,
            s.mean_precision,
            s.mse_precision,
            s.mean_recall,
            s.mse_recall,
        ))
        .map_err(crate::dsp::wav::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::ManeuverKind;

    #[test]
    fn metric_definitions() {
        let m = Metrics::from_counts(45, 5, 5, 45);
        assert!((m.precision - 0.9).abs() < 1e-15 && (m.recall - 0.9).abs() < 1e-15);
        let m = Metrics::from_counts(0, 0, 50, 50);
        assert_eq!((m.precision, m.recall), (1.0, 0.0));
        let m = Metrics::from_counts(50, 50, 0, 0);
        assert_eq!(m.recall, 1.0);
    }

    #[test]
    fn summarize_examples() {
        let (m, v) = summarize(&[0.9, 0.9, 0.9], VarianceKind::Population).unwrap();
        assert!((m - 0.9).abs() < 1e-15 && v.abs() < 1e-30);
        let (m, v) = summarize(&[0.8, 1.0], VarianceKind::Population).unwrap();
        assert!((m - 0.9).abs() < 1e-15 && (v - 0.01).abs() < 1e-15);
        let (_, v) = summarize(&[0.8, 1.0], VarianceKind::Sample).unwrap();
        assert!((v - 0.02).abs() < 1e-15);
        assert_eq!(summarize(&[0.3], VarianceKind::Population).unwrap().1, 0.0);
        assert!(summarize(&[], VarianceKind::Population).is_err());
    }

    #[test]
    fn grids() {
        assert_eq!(single_grid().len(), 6);
        let pairs = double_grid();
        assert_eq!(pairs.len(), 15);
        assert_eq!(
            (pairs[0].sen_1.value(), pairs[0].sen_2.value()),
            (0.495, 0.50)
        );
        assert_eq!(
            (pairs[14].sen_1.value(), pairs[14].sen_2.value()),
            (0.57, 0.58)
        );
    }

    fn scored(label: UtteranceLabel, scores: Vec<f64>) -> ScoredUtterance {
        let frame_times = (0..scores.len()).map(|k| k as f64 * 0.01).collect();
        ScoredUtterance {
            id: String::new(),
            label,
            start_s: 0.0,
            frame_times,
            scores,
        }
    }

    #[test]
    fn double_sweep_rejects_flat_pair() {
        let s = Sensitivity::new(0.5).unwrap();
        let err = sweep_double(&[SensitivityPair::constant(s)], &[], &[], 5.0);
        assert!(err.is_err());
    }

    #[test]
    fn all_normal_drive_matches_single() {
        let corpus = vec![
            scored(UtteranceLabel::Positive, vec![0.0, 0.47, 0.1]),
            scored(UtteranceLabel::Positive, vec![0.0, 0.6]),
            scored(UtteranceLabel::Negative, vec![0.44, 0.0]),
        ];
        let states = vec![ManeuverState {
            timestamp_s: 0.0,
            state: ManeuverKind::Normal,
            delta_s: 0.0,
            delta_d: 0.0,
        }];
        let pairs = double_grid();
        let fused = sweep_double(&pairs, &corpus, &states, 5.0).unwrap();
        for (row, pair) in fused.rows.iter().zip(&pairs) {
            let single = sweep_single(&[pair.sen_1], &corpus).unwrap();
            assert_eq!(row.metrics, single.rows[0].metrics);
        }
    }

    #[test]
    fn results_csv_header() {
        let corpus = vec![scored(UtteranceLabel::Positive, vec![0.6])];
        let summary = sweep_single(&single_grid(), &corpus).unwrap();
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &summary).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("config_id,sen_1,sen_2,tp,fp,fn,tn,precision,recall\n"));
        assert_eq!(text.lines().count(), 7);
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[("single", &summary)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 2);
    }
}
