//! Triangular mel filterbank and DCT-II used for cepstra.

use std::f64::consts::PI;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Dense filterbank matrix over the one-sided spectrum of an `fft_size`
/// transform. Each row is one triangular filter, evaluated at the exact
/// bin frequencies rather than snapped to bin indices.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    rows: Vec<Vec<f64>>,
    edges_hz: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(
        n_filters: usize,
        fft_size: usize,
        sample_rate: u32,
        low_hz: f64,
        high_hz: f64,
    ) -> Self {
        let n_bins = fft_size / 2 + 1;
        let (lo, hi) = (hz_to_mel(low_hz), hz_to_mel(high_hz));
        let edges_hz: Vec<f64> = (0..n_filters + 2)
            .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (n_filters + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let rows = (0..n_filters)
            .map(|m| {
                let (left, center, right) = (edges_hz[m], edges_hz[m + 1], edges_hz[m + 2]);
                (0..n_bins)
                    .map(|k| {
                        let f = k as f64 * bin_hz;
                        if f > left && f <= center {
                            (f - left) / (center - left)
                        } else if f > center && f < right {
                            (right - f) / (right - center)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        MelFilterbank { rows, edges_hz }
    }

    pub fn n_filters(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Filter edge frequencies: `n_filters + 2` points, filter `m` spans
    /// `edges[m]..edges[m + 2]` and peaks at `edges[m + 1]`.
    pub fn edges_hz(&self) -> &[f64] {
        &self.edges_hz
    }

    pub fn apply(&self, power: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().zip(power).map(|(w, p)| w * p).sum())
            .collect()
    }
}

/// Orthonormal DCT-II, first `n_out` coefficients.
#[derive(Debug, Clone)]
pub struct Dct {
    basis: Vec<Vec<f64>>,
}

impl Dct {
    pub fn new(n_in: usize, n_out: usize) -> Self {
        let n = n_in as f64;
        let basis = (0..n_out)
            .map(|k| {
                let scale = if k == 0 {
                    (1.0 / n).sqrt()
                } else {
                    (2.0 / n).sqrt()
                };
                (0..n_in)
                    .map(|i| scale * (PI * k as f64 * (i as f64 + 0.5) / n).cos())
                    .collect()
            })
            .collect();
        Dct { basis }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.basis
            .iter()
            .map(|row| row.iter().zip(x).map(|(b, v)| b * v).sum())
            .collect()
    }
}
