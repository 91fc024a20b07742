//! Diagonal-covariance Gaussian mixtures: evaluation and EM fitting.

use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const VARIANCE_FLOOR: f64 = 1e-6;

const WEIGHT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGmm")]
pub struct GmmModel {
    dim: usize,
    components: Vec<GmmComponent>,
}

#[derive(Deserialize)]
struct RawGmm {
    dim: usize,
    components: Vec<GmmComponent>,
}

impl TryFrom<RawGmm> for GmmModel {
    type Error = Error;

    fn try_from(raw: RawGmm) -> Result<Self> {
        GmmModel::new(raw.dim, raw.components)
    }
}

impl GmmModel {
    pub fn new(dim: usize, components: Vec<GmmComponent>) -> Result<Self> {
        if dim == 0 || components.is_empty() {
            return Err(Error::invalid(
                "mixture needs a positive dimension and at least one component",
            ));
        }
        for (i, c) in components.iter().enumerate() {
            if c.means.len() != dim || c.variances.len() != dim {
                return Err(Error::invalid(format!(
                    "component {i} does not have dimension {dim}"
                )));
            }
            if !(c.weight >= 0.0 && c.weight <= 1.0) {
                return Err(Error::invalid(format!(
                    "component {i} weight {} outside [0, 1]",
                    c.weight
                )));
            }
            if c.means.iter().any(|m| !m.is_finite()) {
                return Err(Error::invalid(format!(
                    "component {i} has a non-finite mean"
                )));
            }
            if c.variances
                .iter()
                .any(|v| !(*v >= VARIANCE_FLOOR) || !v.is_finite())
            {
                return Err(Error::invalid(format!(
                    "component {i} variance below floor {VARIANCE_FLOOR}"
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::invalid(format!("weights sum to {total}, not 1")));
        }
        Ok(GmmModel { dim, components })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[GmmComponent] {
        &self.components
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::invalid(format!(
                "feature has dimension {}, mixture expects {}",
                x.len(),
                self.dim
            )));
        }
        let terms: Vec<f64> = self
            .components
            .iter()
            .map(|c| component_log_density(c, x))
            .collect();
        Ok(log_sum_exp(&terms))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// `ln w + ln N(x; mu, diag var)`.
fn component_log_density(c: &GmmComponent, x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for ((xi, m), v) in x.iter().zip(&c.means).zip(&c.variances) {
        let d = xi - m;
        acc += d * d / v + v.ln();
    }
    c.weight.ln() - 0.5 * (acc + x.len() as f64 * (2.0 * PI).ln())
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// `log sum_c w_c N(x; mu_c, diag var_c)`.
pub fn gmm_log_likelihood(model: &GmmModel, x: &[f64]) -> Result<f64> {
    model.log_likelihood(x)
}

/// Bayes posterior of the speech class given two class-conditional
/// mixtures and a prior.
pub fn speech_posterior(
    speech: &GmmModel,
    nonspeech: &GmmModel,
    x: &[f64],
    prior_speech: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&prior_speech) {
        return Err(Error::invalid(format!(
            "prior {prior_speech} outside [0, 1]"
        )));
    }
    let ls = speech.log_likelihood(x)?;
    let ln = nonspeech.log_likelihood(x)?;
    if prior_speech == 1.0 {
        return Ok(1.0);
    }
    if prior_speech == 0.0 {
        return Ok(0.0);
    }
    let log_odds = (ls + prior_speech.ln()) - (ln + (1.0 - prior_speech).ln());
    Ok(logistic(log_odds))
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Mean per-point log-likelihood: entry 0 for the initial parameters,
    /// then one entry after each M-step.
    pub log_likelihood_history: Vec<f64>,
}

/// Tolerance on the per-iteration decrease of mean log-likelihood.
pub const EM_MONOTONE_TOLERANCE: f64 = 1e-8;

/// Fits a mixture by EM from a seeded k-means++ start. Stops after
/// `max_iters` M-steps or once the mean log-likelihood improves by less
/// than 1e-10.
pub fn fit_gmm_em(
    data: &[Vec<f64>],
    n_components: usize,
    max_iters: usize,
    seed: u64,
) -> Result<GmmFit> {
    if n_components == 0 {
        return Err(Error::invalid("need at least one component"));
    }
    if data.len() < n_components {
        return Err(Error::invalid(format!(
            "{} points cannot support {n_components} components",
            data.len()
        )));
    }
    let dim = data[0].len();
    if dim == 0 || data.iter().any(|x| x.len() != dim) {
        return Err(Error::invalid(
            "data points must share a positive dimension",
        ));
    }
    if data.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("data contains non-finite values"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len() as f64;

    let mut global_mean = vec![0.0; dim];
    for x in data {
        for (g, v) in global_mean.iter_mut().zip(x) {
            *g += v / n;
        }
    }
    let mut global_var = vec![0.0; dim];
    for x in data {
        for ((g, v), m) in global_var.iter_mut().zip(x).zip(&global_mean) {
            *g += (v - m) * (v - m) / n;
        }
    }
    for g in &mut global_var {
        *g = g.max(VARIANCE_FLOOR);
    }

    let centers = kmeans_plus_plus(data, n_components, &mut rng);
    let mut components: Vec<GmmComponent> = centers
        .into_iter()
        .map(|means| GmmComponent {
            weight: 1.0 / n_components as f64,
            means,
            variances: global_var.clone(),
        })
        .collect();

    let mut history = Vec::with_capacity(max_iters + 1);
    let mut resp = vec![0.0; data.len() * n_components];
    let mut terms = vec![0.0; n_components];
    for iter in 0..=max_iters {
        // E-step; also yields the log-likelihood of the current parameters.
        let mut total = 0.0;
        for (i, x) in data.iter().enumerate() {
            for (t, c) in terms.iter_mut().zip(&components) {
                *t = component_log_density(c, x);
            }
            let lse = log_sum_exp(&terms);
            total += lse;
            for (k, t) in terms.iter().enumerate() {
                resp[i * n_components + k] = (t - lse).exp();
            }
        }
        let mean_ll = total / n;
        if let Some(&prev) = history.last() {
            debug_assert!(
                mean_ll >= prev - EM_MONOTONE_TOLERANCE,
                "EM decreased log-likelihood: {prev} -> {mean_ll}"
            );
            history.push(mean_ll);
            if mean_ll - prev < 1e-10 || iter == max_iters {
                break;
            }
        } else {
            history.push(mean_ll);
            if max_iters == 0 {
                break;
            }
        }

        // M-step.
        for (k, c) in components.iter_mut().enumerate() {
            let nk: f64 = (0..data.len()).map(|i| resp[i * n_components + k]).sum();
            c.weight = nk / n;
            if nk < 1e-12 {
                continue;
            }
            let mut mean = vec![0.0; dim];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * n_components + k];
                for (m, v) in mean.iter_mut().zip(x) {
                    *m += r * v;
                }
            }
            for m in &mut mean {
                *m /= nk;
            }
            let mut var = vec![0.0; dim];
            for (i, x) in data.iter().enumerate() {
                let r = resp[i * n_components + k];
                for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
                    *s += r * (v - m) * (v - m);
                }
            }
            for s in &mut var {
                *s = (*s / nk).max(VARIANCE_FLOOR);
            }
            c.means = mean;
            c.variances = var;
        }
        let wsum: f64 = components.iter().map(|c| c.weight).sum();
        for c in &mut components {
            c.weight /= wsum;
        }
    }

    Ok(GmmFit {
        model: GmmModel::new(dim, components)?,
        log_likelihood_history: history,
    })
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: first center uniform, the rest drawn with
/// probability proportional to squared distance from the nearest chosen
/// center. Falls back to uniform draws once every point coincides with a
/// center.
fn kmeans_plus_plus(data: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centers = vec![data[rng.random_range(0..data.len())].clone()];
    let mut nearest: Vec<f64> = data.iter().map(|x| sq_dist(x, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random_range(0.0..total);
            let mut acc = 0.0;
            let mut chosen = data.len() - 1;
            for (i, d) in nearest.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..data.len())
        };
        let c = data[idx].clone();
        for (d, x) in nearest.iter_mut().zip(data) {
            *d = d.min(sq_dist(x, &c));
        }
        centers.push(c);
    }
    centers
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn single(mean: f64, var: f64) -> GmmModel {
        GmmModel::new(
            1,
            vec![GmmComponent {
                weight: 1.0,
                means: vec![mean],
                variances: vec![var],
            }],
        )
        .unwrap()
    }

    #[test]
    fn standard_normal_at_mean() {
        let ll = gmm_log_likelihood(&single(0.0, 1.0), &[0.0]).unwrap();
        assert!((ll - (-0.5 * (2.0 * PI).ln())).abs() < 1e-12);
        assert!((ll + 0.91894).abs() < 1e-5);
    }

    #[test]
    fn duplicate_components_collapse() {
        let c = GmmComponent {
            weight: 0.5,
            means: vec![1.0, -2.0],
            variances: vec![0.5, 2.0],
        };
        let two = GmmModel::new(2, vec![c.clone(), c.clone()]).unwrap();
        let one = GmmModel::new(2, vec![GmmComponent { weight: 1.0, ..c }]).unwrap();
        let x = [0.3, 0.7];
        assert!((two.log_likelihood(&x).unwrap() - one.log_likelihood(&x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_finite() {
        let ll = gmm_log_likelihood(&single(0.0, 1.0), &[100.0]).unwrap();
        assert!(ll.is_finite());
        assert!((ll - (-0.5 * (2.0 * PI).ln() - 5000.0)).abs() < 1e-9);
        let two = GmmModel::new(
            1,
            vec![
                GmmComponent {
                    weight: 0.5,
                    means: vec![0.0],
                    variances: vec![1.0],
                },
                GmmComponent {
                    weight: 0.5,
                    means: vec![1.0],
                    variances: vec![1.0],
                },
            ],
        )
        .unwrap();
        assert!(two.log_likelihood(&[1e4]).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch() {
        assert!(gmm_log_likelihood(&single(0.0, 1.0), &[0.0, 1.0]).is_err());
    }

    #[test]
    fn model_validation() {
        let bad_weight = GmmComponent {
            weight: 0.7,
            means: vec![0.0],
            variances: vec![1.0],
        };
        assert!(GmmModel::new(1, vec![bad_weight]).is_err());
        let bad_var = GmmComponent {
            weight: 1.0,
            means: vec![0.0],
            variances: vec![1e-9],
        };
        assert!(GmmModel::new(1, vec![bad_var]).is_err());
        assert!(GmmModel::from_json(
            r#"{"dim":1,"components":[{"weight":0.5,"means":[0],"variances":[1]}]}"#
        )
        .is_err());
    }

    #[test]
    fn posterior_symmetry_and_degenerate_priors() {
        let m = single(0.0, 1.0);
        assert_eq!(speech_posterior(&m, &m, &[3.0], 0.5).unwrap(), 0.5);
        let other = single(10.0, 1.0);
        assert_eq!(speech_posterior(&m, &other, &[10.0], 1.0).unwrap(), 1.0);
        assert_eq!(speech_posterior(&m, &other, &[0.0], 0.0).unwrap(), 0.0);
        assert!(speech_posterior(&m, &m, &[0.0], 1.5).is_err());
    }

    #[test]
    fn posterior_at_speech_mean_with_separated_models() {
        // Means 10 sigma apart: log-likelihood ratio at the speech mean is 50.
        let speech = single(0.0, 1.0);
        let nonspeech = single(10.0, 1.0);
        let p = speech_posterior(&speech, &nonspeech, &[0.0], 0.5).unwrap();
        let expected = 1.0 / (1.0 + (-50f64).exp());
        assert!((p - expected).abs() < 1e-15);
        assert!(p > 0.99);
    }

    #[test]
    fn recovers_two_separated_gaussians() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = Normal::new(-5.0, 1.0).unwrap();
        let b = Normal::new(5.0, 1.0).unwrap();
        let data: Vec<Vec<f64>> = (0..10_000)
            .map(|i| {
                vec![if i % 2 == 0 {
                    a.sample(&mut rng)
                } else {
                    b.sample(&mut rng)
                }]
            })
            .collect();
        let fit = fit_gmm_em(&data, 2, 200, 1).unwrap();
        let mut means: Vec<f64> = fit.model.components().iter().map(|c| c.means[0]).collect();
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.1, "{means:?}");
        assert!((means[1] - 5.0).abs() < 0.1, "{means:?}");
        for w in fit.log_likelihood_history.windows(2) {
            assert!(w[1] >= w[0] - EM_MONOTONE_TOLERANCE);
        }
    }

    #[test]
    fn identical_points_collapse_to_floor() {
        let data = vec![vec![2.0, -1.0]; 50];
        let fit = fit_gmm_em(&data, 3, 20, 9).unwrap();
        for c in fit.model.components() {
            assert_eq!(c.means, vec![2.0, -1.0]);
            assert!(c.variances.iter().all(|&v| v == VARIANCE_FLOOR));
        }
    }

    #[test]
    fn seeded_fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.random(), rng.random::<f64>() * 3.0])
            .collect();
        let a = fit_gmm_em(&data, 4, 30, 77).unwrap();
        let b = fit_gmm_em(&data, 4, 30, 77).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log_likelihood_history, b.log_likelihood_history);
    }

    #[test]
    fn too_few_points() {
        assert!(fit_gmm_em(&[vec![1.0]], 2, 10, 0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = GmmModel::new(
            2,
            vec![
                GmmComponent {
                    weight: 0.25,
                    means: vec![0.1, 0.2],
                    variances: vec![1.0, 2.0],
                },
                GmmComponent {
                    weight: 0.75,
                    means: vec![-1.0 / 3.0, 5.0],
                    variances: vec![0.3, 1e-6],
                },
            ],
        )
        .unwrap();
        let back = GmmModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
