//! Spherical Gaussian mixtures fitted by EM.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::confidence::squared_distance;
use crate::error::{Error, Result};

pub const VARIANCE_FLOOR: f64 = 1e-6;
pub const MAX_EM_ITERATIONS: usize = 100;
pub const RELATIVE_TOLERANCE: f64 = 1e-8;

/// Mixture summary of one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub means: Vec<Vec<f64>>,
    pub priors: Vec<f64>,
    /// Per-cluster isotropic variance.
    pub variances: Vec<f64>,
    /// `responsibilities[i][k]`: posterior probability that sample `i` came from cluster `k`.
    pub responsibilities: Vec<Vec<f64>>,
    /// Log-likelihood after each E-step, in order.
    pub log_likelihood_trace: Vec<f64>,
}

impl ClusterModel {
    pub fn num_clusters(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().unwrap_or(&f64::NEG_INFINITY)
    }
}

/// k-means++ seeding: first center uniform, later centers drawn with
/// probability proportional to squared distance to the nearest chosen center.
fn kmeans_pp_seeds(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points.iter().map(|p| squared_distance(p, &points[chosen[0]])).collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if target < *d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // guard against landing on an already-covered point through rounding
            if nearest[pick] <= 0.0 {
                nearest.iter().rposition(|d| *d > 0.0).unwrap()
            } else {
                pick
            }
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

struct Params {
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
    priors: Vec<f64>,
}

/// Returns the responsibilities and total log-likelihood.
fn e_step(points: &[Vec<f64>], p: &Params) -> (Vec<Vec<f64>>, f64) {
    let d = points[0].len() as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut ll = 0.0;
    let mut resp = Vec::with_capacity(points.len());
    let mut logs = vec![0.0; p.means.len()];
    for x in points {
        for (k, l) in logs.iter_mut().enumerate() {
            *l = if p.priors[k] > 0.0 {
                p.priors[k].ln()
                    - 0.5 * d * (two_pi * p.variances[k]).ln()
                    - squared_distance(x, &p.means[k]) / (2.0 * p.variances[k])
            } else {
                f64::NEG_INFINITY
            };
        }
        let norm = log_sum_exp(&logs);
        ll += norm;
        resp.push(logs.iter().map(|l| (l - norm).exp()).collect());
    }
    (resp, ll)
}

fn m_step(points: &[Vec<f64>], resp: &[Vec<f64>], previous: &Params) -> Params {
    let n = points.len();
    let dim = points[0].len();
    let k = previous.means.len();
    let mut means = previous.means.clone();
    let mut variances = previous.variances.clone();
    let mut priors = vec![0.0; k];
    for c in 0..k {
        let weight: f64 = resp.iter().map(|r| r[c]).sum();
        priors[c] = weight / n as f64;
        if weight <= f64::MIN_POSITIVE {
            continue;
        }
        let mut mean = vec![0.0; dim];
        for (x, r) in points.iter().zip(resp) {
            mean.iter_mut().zip(x).for_each(|(m, xi)| *m += r[c] * xi);
        }
        mean.iter_mut().for_each(|m| *m /= weight);
        let spread: f64 = points
            .iter()
            .zip(resp)
            .map(|(x, r)| r[c] * squared_distance(x, &mean))
            .sum();
        variances[c] = (spread / (weight * dim as f64)).max(VARIANCE_FLOOR);
        means[c] = mean;
    }
    Params {
        means,
        variances,
        priors,
    }
}

/// Fits a `k`-component spherical GMM.
///
/// Seeds with k-means++, starts every component at the mean nearest-seed
/// variance with uniform priors, then alternates E and M steps for at most
/// [`MAX_EM_ITERATIONS`] iterations or until the relative log-likelihood change
/// drops below [`RELATIVE_TOLERANCE`]. The returned responsibilities belong
/// to the returned parameters.
pub fn fit_gmm(points: &[Vec<f64>], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one cluster".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidConfig(format!(
            "cannot fit {k} clusters to {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 || points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape("points must share a nonzero dimension".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = kmeans_pp_seeds(points, k, &mut rng);
    let means: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].clone()).collect();
    let spread: f64 = points
        .iter()
        .map(|p| means.iter().map(|m| squared_distance(p, m)).fold(f64::INFINITY, f64::min))
        .sum::<f64>()
        / (points.len() * dim) as f64;
    let mut params = Params {
        means,
        variances: vec![spread.max(VARIANCE_FLOOR); k],
        priors: vec![1.0 / k as f64; k],
    };

    let mut trace = Vec::new();
    let responsibilities = loop {
        let (resp, ll) = e_step(points, &params);
        let converged = trace
            .last()
            .is_some_and(|prev: &f64| (ll - prev).abs() <= RELATIVE_TOLERANCE * prev.abs());
        trace.push(ll);
        if converged || trace.len() > MAX_EM_ITERATIONS {
            break resp;
        }
        params = m_step(points, &resp, &params);
    };

    Ok(ClusterModel {
        means: params.means,
        priors: params.priors,
        variances: params.variances,
        responsibilities,
        log_likelihood_trace: trace,
    })
}
