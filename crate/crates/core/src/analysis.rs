//! Closed-form recall of single-source and fused detection, with a Monte
//! Carlo simulation of the same model.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// `p1`/`p2`: recall in the normal/sensitive mode. `p3`: probability the
/// telemetry reports the true state. `k`: fraction of time spent in the
/// sensitive state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallModelParams {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub k: f64,
}

impl RecallModelParams {
    pub fn new(p1: f64, p2: f64, p3: f64, k: f64) -> Result<Self> {
        let p = RecallModelParams { p1, p2, p3, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("p1", self.p1),
            ("p2", self.p2),
            ("p3", self.p3),
            ("k", self.k),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} = {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// The model assumes the sensitive mode recalls more; `p2 <= p1` is
    /// allowed but worth flagging.
    pub fn warning(&self) -> Option<String> {
        (self.p2 <= self.p1).then(|| format!("p2 ({}) does not exceed p1 ({})", self.p2, self.p1))
    }
}

pub fn recall_single(params: &RecallModelParams) -> f64 {
    params.p1
}

pub fn recall_fused(params: &RecallModelParams) -> f64 {
    let RecallModelParams { p1, p2, p3, k } = *params;
    p1 * ((1.0 - k) * p3 + k * (1.0 - p3)) + p2 * (k * p3 + (1.0 - k) * (1.0 - p3))
}

/// Fraction of utterances handled in the sensitive mode.
pub fn sensitive_mode_fraction(params: &RecallModelParams) -> f64 {
    let RecallModelParams { p3, k, .. } = *params;
    (1.0 - k) * (1.0 - p3) + k * p3
}

pub fn recall_gain(params: &RecallModelParams) -> f64 {
    (params.p2 - params.p1) * sensitive_mode_fraction(params)
}

/// Simulates `trials` utterances. The true state is sensitive with
/// probability `k`; the reported state matches it with probability `p3`
/// and is flipped otherwise; detection succeeds with the recall of the
/// reported mode.
pub fn monte_carlo_recall(params: &RecallModelParams, trials: u64, seed: u64) -> Result<f64> {
    params.validate()?;
    if trials == 0 {
        return Err(Error::invalid("at least one trial is required"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0u64;
    for _ in 0..trials {
        let sensitive = rng.random::<f64>() < params.k;
        let correct = rng.random::<f64>() < params.p3;
        let mode_sensitive = sensitive == correct;
        let p = if mode_sensitive { params.p2 } else { params.p1 };
        if rng.random::<f64>() < p {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// Standard deviation of a binomial proportion.
pub fn binomial_sigma(p: f64, trials: u64) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallRow {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub k: f64,
    pub single: f64,
    pub fused: f64,
    pub gain: f64,
    pub monte_carlo: Option<f64>,
}

pub fn recall_row(params: &RecallModelParams, trials: u64, seed: u64) -> Result<RecallRow> {
    params.validate()?;
    let monte_carlo = if trials > 0 {
        Some(monte_carlo_recall(params, trials, seed)?)
    } else {
        None
    };
    Ok(RecallRow {
        p1: params.p1,
        p2: params.p2,
        p3: params.p3,
        k: params.k,
        single: recall_single(params),
        fused: recall_fused(params),
        gain: recall_gain(params),
        monte_carlo,
    })
}

pub fn write_recall_csv<W: std::io::Write>(out: W, rows: &[RecallRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r).map_err(crate::dsp::wav::csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(p1: f64, p2: f64, p3: f64, k: f64) -> RecallModelParams {
        RecallModelParams::new(p1, p2, p3, k).unwrap()
    }

    #[test]
    fn single_is_p1() {
        for v in [0.4733, 0.0, 1.0] {
            assert_eq!(recall_single(&p(v, 0.6, 0.9, 0.3)), v);
        }
    }

    #[test]
    fn fused_worked_example() {
        // 0.4733 * (0.7 * 0.9 + 0.3 * 0.1) + 0.6 * (0.3 * 0.9 + 0.7 * 0.1)
        let expected = 0.4733 * 0.66 + 0.6 * 0.34;
        assert!((recall_fused(&p(0.4733, 0.6, 0.9, 0.3)) - expected).abs() < 1e-15);
        assert!((expected - 0.51638).abs() < 1e-5);
    }

    #[test]
    fn fused_collapses_at_extremes() {
        assert_eq!(recall_fused(&p(0.3, 0.8, 1.0, 0.0)), 0.3);
        assert_eq!(recall_fused(&p(0.3, 0.8, 1.0, 1.0)), 0.8);
    }

    #[test]
    fn gain_cases() {
        assert_eq!(recall_gain(&p(0.5, 0.5, 0.3, 0.7)), 0.0);
        for p3 in [0.0, 0.2, 0.5, 1.0] {
            let g = recall_gain(&p(0.4, 0.7, p3, 0.5));
            assert!((g - 0.15).abs() < 1e-15, "{g}");
        }
        assert_eq!(recall_gain(&p(0.4, 0.7, 1.0, 0.0)), 0.0);
    }

    #[test]
    fn monte_carlo_is_reproducible() {
        let params = p(0.4, 0.9, 0.8, 0.3);
        let a = monte_carlo_recall(&params, 1, 7).unwrap();
        assert!(a == 0.0 || a == 1.0);
        assert_eq!(a, monte_carlo_recall(&params, 1, 7).unwrap());
        assert!(monte_carlo_recall(&params, 0, 7).is_err());
    }

    #[test]
    fn monte_carlo_matches_example() {
        let est = monte_carlo_recall(&p(0.4733, 0.6, 0.9, 0.3), 1_000_000, 1).unwrap();
        assert!((est - 0.51638).abs() < 0.002, "{est}");
        let est = monte_carlo_recall(&p(0.5, 0.5, 0.1, 0.9), 1_000_000, 2).unwrap();
        assert!((est - 0.5).abs() < 0.002, "{est}");
    }

    #[test]
    fn params_are_checked() {
        assert!(RecallModelParams::new(1.1, 0.5, 0.5, 0.5).is_err());
        assert!(p(0.6, 0.5, 0.5, 0.5).warning().is_some());
        assert!(p(0.4, 0.5, 0.5, 0.5).warning().is_none());
    }

    #[test]
    fn csv_row() {
        let row = recall_row(&p(0.4733, 0.6, 0.9, 0.3), 0, 0).unwrap();
        let mut buf = Vec::new();
        write_recall_csv(&mut buf, &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(
            text.starts_with("p1,p2,p3,k,single,fused,gain,monte_carlo\n"),
            "{text}"
        );
    }
}
