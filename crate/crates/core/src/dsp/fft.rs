//! Iterative radix-2 Cooley-Tukey FFT.

use num_complex::Complex64;
use std::f64::consts::PI;

/// Precomputed plan for a power-of-two transform size.
#[derive(Debug, Clone)]
pub struct Fft {
    n: usize,
    twiddles: Vec<Complex64>,
    bitrev: Vec<usize>,
}

impl Fft {
    /// Panics if `n` is not a power of two.
    pub fn new(n: usize) -> Self {
        assert!(
            n.is_power_of_two(),
            "fft size must be a power of two, got {n}"
        );
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| {
                if bits == 0 {
                    0
                } else {
                    i.reverse_bits() >> (usize::BITS - bits)
                }
            })
            .collect();
        let twiddles = (0..n / 2)
            .map(|k| Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64))
            .collect();
        Fft {
            n,
            twiddles,
            bitrev,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Forward transform in place, unnormalized.
    pub fn process(&self, buf: &mut [Complex64]) {
        assert_eq!(buf.len(), self.n);
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut size = 2;
        while size <= self.n {
            let half = size / 2;
            let stride = self.n / size;
            for start in (0..self.n).step_by(size) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            size *= 2;
        }
    }

    /// One-sided power spectrum |X_k|^2 / n for k in 0..=n/2 of a real
    /// signal zero-padded to the plan size.
    pub fn power_spectrum(&self, signal: &[f64]) -> Vec<f64> {
        assert!(signal.len() <= self.n);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (b, &s) in buf.iter_mut().zip(signal) {
            b.re = s;
        }
        self.process(&mut buf);
        let scale = 1.0 / self.n as f64;
        buf[..=self.n / 2]
            .iter()
            .map(|c| c.norm_sqr() * scale)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_dft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|k| {
                x.iter()
                    .enumerate()
                    .map(|(t, v)| {
                        v * Complex64::from_polar(1.0, -2.0 * PI * (k * t) as f64 / n as f64)
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn matches_naive_dft() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &n in &[1usize, 2, 4, 8, 64, 512] {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let expected = naive_dft(&x);
            let mut got = x.clone();
            Fft::new(n).process(&mut got);
            for (a, b) in got.iter().zip(&expected) {
                assert!((a - b).norm() < 1e-9 * n as f64, "n={n}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn impulse_has_flat_spectrum() {
        let fft = Fft::new(16);
        let mut sig = vec![0.0; 16];
        sig[0] = 1.0;
        let p = fft.power_spectrum(&sig);
        assert_eq!(p.len(), 9);
        for v in p {
            assert!((v - 1.0 / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    #[should_panic]
    fn rejects_non_power_of_two() {
        Fft::new(480);
    }
}
