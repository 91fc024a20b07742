//! Posterior smoothing, windowed confidence scores and thresholded
//! detection.
//!
//! Frames are stored 0-based. The trailing windows are the ones of the
//! 1-based formulation: for 0-based frame `t` the smoothing window covers
//! frames `max(0, t + 1 - w_s) ..= t`, and likewise for the score window
//! with `w_max`.

use crate::dnn::PosteriorFrame;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub w_s: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig { w_s: 30 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub w_max: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig { w_max: 100 }
    }
}

/// Frames that must pass after an event before the next one may fire.
pub const DEFAULT_REFRACTORY_FRAMES: usize = 100;

/// How eagerly the detector fires, in `[0, 1]`. A frame is detected when
/// its score reaches `1 - value`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Sensitivity(f64);

impl Sensitivity {
    pub fn new(value: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(format!(
                "sensitivity {value} outside [0, 1]"
            )));
        }
        Ok(Sensitivity(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn threshold(self) -> f64 {
        1.0 - self.0
    }
}

impl TryFrom<f64> for Sensitivity {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Sensitivity::new(v)
    }
}

impl From<Sensitivity> for f64 {
    fn from(s: Sensitivity) -> f64 {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ManeuverKind {
    #[default]
    Normal,
    Sensitive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub frame_index: usize,
    pub timestamp_s: f64,
    pub score: f64,
    pub sensitivity: Sensitivity,
    pub maneuver_state: ManeuverKind,
}

/// Per-frame inputs to the detector besides the posteriors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameContext {
    pub timestamp_s: f64,
    /// Frames outside speech regions score 0.
    pub in_speech: bool,
    pub sensitivity: Sensitivity,
    pub maneuver_state: ManeuverKind,
}

/// True iff `score >= 1 - sensitivity`.
pub fn detect(score: f64, sensitivity: Sensitivity) -> bool {
    score >= sensitivity.threshold()
}

fn check_labels(n_labels: usize) -> Result<()> {
    if n_labels < 2 {
        return Err(Error::invalid(
            "scoring needs at least one keyword label besides filler",
        ));
    }
    Ok(())
}

/// Mean of the frames in the window, summed oldest first.
fn window_mean<'a>(window: impl Iterator<Item = &'a [f64]>, n_labels: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_labels];
    let mut count = 0usize;
    for probs in window {
        for (s, p) in sum.iter_mut().zip(probs) {
            *s += p;
        }
        count += 1;
    }
    sum.into_iter().map(|s| s / count as f64).collect()
}

/// Geometric mean over keyword labels `1..n` of the windowed maxima.
fn window_score<'a>(window: impl Iterator<Item = &'a [f64]>, n_labels: usize) -> f64 {
    let mut maxes = vec![f64::NEG_INFINITY; n_labels];
    for probs in window {
        for (m, p) in maxes.iter_mut().zip(probs) {
            if *p > *m {
                *m = *p;
            }
        }
    }
    let product: f64 = maxes[1..].iter().product();
    product.powf(1.0 / (n_labels - 1) as f64)
}

pub fn smooth_posteriors(
    posteriors: &[PosteriorFrame],
    config: SmoothingConfig,
) -> Result<Vec<PosteriorFrame>> {
    if posteriors.is_empty() {
        return Err(Error::invalid("no posteriors to smooth"));
    }
    if config.w_s == 0 {
        return Err(Error::invalid("smoothing window must be at least 1"));
    }
    let n_labels = posteriors[0].n_labels();
    if posteriors.iter().any(|p| p.n_labels() != n_labels) {
        return Err(Error::invalid("posterior frames differ in label count"));
    }
    Ok((0..posteriors.len())
        .map(|t| {
            let start = (t + 1).saturating_sub(config.w_s);
            PosteriorFrame {
                probs: window_mean(
                    posteriors[start..=t].iter().map(|p| p.probs.as_slice()),
                    n_labels,
                ),
                frame_index: posteriors[t].frame_index,
            }
        })
        .collect())
}

/// Score of frame `j`, counted 1-based as in the windowed-max formulation.
pub fn confidence_score(
    smoothed: &[PosteriorFrame],
    config: ScoringConfig,
    j: usize,
) -> Result<f64> {
    if j == 0 || j > smoothed.len() {
        return Err(Error::invalid(format!(
            "frame {j} outside 1..={}",
            smoothed.len()
        )));
    }
    if config.w_max == 0 {
        return Err(Error::invalid("scoring window must be at least 1"));
    }
    let n_labels = smoothed[0].n_labels();
    check_labels(n_labels)?;
    let h_max = j.saturating_sub(config.w_max) + 1;
    Ok(window_score(
        smoothed[h_max - 1..j].iter().map(|p| p.probs.as_slice()),
        n_labels,
    ))
}

/// Scores of every frame, 0-based.
pub fn confidence_scores(smoothed: &[PosteriorFrame], config: ScoringConfig) -> Result<Vec<f64>> {
    (1..=smoothed.len())
        .map(|j| confidence_score(smoothed, config, j))
        .collect()
}

/// Frames whose score passes their own sensitivity, before refractory
/// suppression.
pub fn detected_frames(scores: &[f64], sensitivities: &[Sensitivity]) -> Vec<usize> {
    scores
        .iter()
        .zip(sensitivities)
        .enumerate()
        .filter(|(_, (s, sen))| detect(**s, **sen))
        .map(|(i, _)| i)
        .collect()
}

/// Keeps a detected frame only when `refractory` frames have passed since
/// the last kept one.
pub fn apply_refractory(frames: &[usize], refractory: usize) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &f in frames {
        if kept.last().is_none_or(|&last| f - last >= refractory) {
            kept.push(f);
        }
    }
    kept
}

/// Scores after speech gating: frames outside speech regions score 0.
pub fn gated_scores(
    posteriors: &[PosteriorFrame],
    contexts: &[FrameContext],
    smoothing: SmoothingConfig,
    scoring: ScoringConfig,
) -> Result<Vec<f64>> {
    if posteriors.len() != contexts.len() {
        return Err(Error::invalid(
            "one context per posterior frame is required",
        ));
    }
    if posteriors.is_empty() {
        return Ok(Vec::new());
    }
    let smoothed = smooth_posteriors(posteriors, smoothing)?;
    let scores = confidence_scores(&smoothed, scoring)?;
    Ok(scores
        .into_iter()
        .zip(contexts)
        .map(|(s, c)| if c.in_speech { s } else { 0.0 })
        .collect())
}

/// Turns gated scores into events using each frame's own sensitivity.
pub fn events_from_scores(
    scores: &[f64],
    contexts: &[FrameContext],
    refractory: usize,
) -> Vec<DetectionEvent> {
    let sens: Vec<Sensitivity> = contexts.iter().map(|c| c.sensitivity).collect();
    apply_refractory(&detected_frames(scores, &sens), refractory)
        .into_iter()
        .map(|f| DetectionEvent {
            frame_index: f,
            timestamp_s: contexts[f].timestamp_s,
            score: scores[f],
            sensitivity: contexts[f].sensitivity,
            maneuver_state: contexts[f].maneuver_state,
        })
        .collect()
}

/// Batch counterpart of [`StreamingScorer`]; both produce identical events.
pub fn score_batch(
    posteriors: &[PosteriorFrame],
    contexts: &[FrameContext],
    smoothing: SmoothingConfig,
    scoring: ScoringConfig,
    refractory: usize,
) -> Result<Vec<DetectionEvent>> {
    let scores = gated_scores(posteriors, contexts, smoothing, scoring)?;
    Ok(events_from_scores(&scores, contexts, refractory))
}

/// Incremental scorer for one stream. Keeps the last `w_s` posteriors and
/// the last `w_max` smoothed frames.
#[derive(Debug, Clone)]
pub struct StreamingScorer {
    smoothing: SmoothingConfig,
    scoring: ScoringConfig,
    refractory: usize,
    n_labels: usize,
    raw: VecDeque<Vec<f64>>,
    smoothed: VecDeque<Vec<f64>>,
    next_frame: usize,
    last_event: Option<usize>,
}

impl StreamingScorer {
    pub fn new(
        n_labels: usize,
        smoothing: SmoothingConfig,
        scoring: ScoringConfig,
        refractory: usize,
    ) -> Result<Self> {
        check_labels(n_labels)?;
        if smoothing.w_s == 0 || scoring.w_max == 0 {
            return Err(Error::invalid("windows must be at least 1 frame"));
        }
        Ok(StreamingScorer {
            smoothing,
            scoring,
            refractory,
            n_labels,
            raw: VecDeque::with_capacity(smoothing.w_s),
            smoothed: VecDeque::with_capacity(scoring.w_max),
            next_frame: 0,
            last_event: None,
        })
    }

    /// Consumes the next frame and returns its gated score together with
    /// the event it triggers, if any.
    pub fn push(
        &mut self,
        posterior: &PosteriorFrame,
        ctx: &FrameContext,
    ) -> Result<(f64, Option<DetectionEvent>)> {
        if posterior.n_labels() != self.n_labels {
            return Err(Error::invalid("posterior frame has the wrong label count"));
        }
        let frame = self.next_frame;
        self.next_frame += 1;

        if self.raw.len() == self.smoothing.w_s {
            self.raw.pop_front();
        }
        self.raw.push_back(posterior.probs.clone());
        let smoothed = window_mean(self.raw.iter().map(Vec::as_slice), self.n_labels);
        if self.smoothed.len() == self.scoring.w_max {
            self.smoothed.pop_front();
        }
        self.smoothed.push_back(smoothed);

        let score = if ctx.in_speech {
            window_score(self.smoothed.iter().map(Vec::as_slice), self.n_labels)
        } else {
            0.0
        };
        let fires = detect(score, ctx.sensitivity)
            && self
                .last_event
                .is_none_or(|last| frame - last >= self.refractory);
        let event = fires.then(|| {
            self.last_event = Some(frame);
            DetectionEvent {
                frame_index: frame,
                timestamp_s: ctx.timestamp_s,
                score,
                sensitivity: ctx.sensitivity,
                maneuver_state: ctx.maneuver_state,
            }
        });
        Ok((score, event))
    }
}

/// Runs a whole stream through a fresh [`StreamingScorer`].
pub fn score_stream<'a, I>(
    frames: I,
    smoothing: SmoothingConfig,
    scoring: ScoringConfig,
    refractory: usize,
) -> Result<Vec<DetectionEvent>>
where
    I: IntoIterator<Item = (&'a PosteriorFrame, FrameContext)>,
{
    let mut iter = frames.into_iter().peekable();
    let Some((first, _)) = iter.peek() else {
        return Ok(Vec::new());
    };
    let mut scorer = StreamingScorer::new(first.n_labels(), smoothing, scoring, refractory)?;
    let mut events = Vec::new();
    for (p, ctx) in iter {
        if let (_, Some(e)) = scorer.push(p, &ctx)? {
            events.push(e);
        }
    }
    Ok(events)
}

/// Writes one event per line as JSON.
pub fn write_events_jsonl<W: std::io::Write>(mut out: W, events: &[DetectionEvent]) -> Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
