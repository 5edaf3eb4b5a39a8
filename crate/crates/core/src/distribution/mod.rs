//! Distribution-distance weights.
//!
//! Both domains are summarized by spherical Gaussian mixtures over the same
//! feature extractor. Cluster-to-cluster distances are squared distances of
//! cluster means (a linear-kernel MMD). Each cluster of the unlabeled domain
//! is then compared with the whole labeled domain by an earth mover's
//! distance between a unit mass at its mean and the prior-weighted clusters
//! of the labeled domain. A sample's distance is the responsibility-weighted
//! average of its clusters' distances, and its weight is `exp(-lambda * d)`.

mod gmm;
mod transport;

pub use gmm::{fit_gmm, ClusterModel, MAX_EM_ITERATIONS, RELATIVE_TOLERANCE, VARIANCE_FLOOR};
pub use transport::{solve_emd, TransportPlan, BALANCE_TOLERANCE};

use crate::confidence::squared_distance;
use crate::error::{Error, Result};

/// How a cluster of the unlabeled domain is compared with the labeled domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistanceKind {
    /// Transport cost to the prior-weighted clusters of the labeled domain.
    Emd,
    /// Squared distance to the labeled domain's global feature mean.
    Mmd,
}

impl DistanceKind {
    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Emd => "emd",
            DistanceKind::Mmd => "mmd",
        }
    }
}

impl std::str::FromStr for DistanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "emd" => Ok(DistanceKind::Emd),
            "mmd" => Ok(DistanceKind::Mmd),
            other => Err(Error::InvalidConfig(format!(
                "unknown distance '{other}' (expected emd or mmd)"
            ))),
        }
    }
}

/// Squared Euclidean distance between two cluster means.
pub fn mmd_cluster_distance(mean_b: &[f64], mean_a: &[f64]) -> Result<f64> {
    if mean_b.len() != mean_a.len() {
        return Err(Error::Shape(format!(
            "cluster means have dimensions {} and {}",
            mean_b.len(),
            mean_a.len()
        )));
    }
    Ok(squared_distance(mean_b, mean_a))
}

/// `d[k][j]` between cluster `k` of `model_b` and cluster `j` of `model_a`.
pub fn mmd_matrix(model_b: &ClusterModel, model_a: &ClusterModel) -> Result<Vec<Vec<f64>>> {
    model_b
        .means
        .iter()
        .map(|mb| model_a.means.iter().map(|ma| mmd_cluster_distance(mb, ma)).collect())
        .collect()
}

/// Per-cluster earth mover's distance from each cluster of `model_b` (as a
/// unit point mass) to the prior-weighted clusters of `model_a`.
pub fn cluster_to_domain_distance(model_b: &ClusterModel, model_a: &ClusterModel) -> Result<Vec<f64>> {
    let d = mmd_matrix(model_b, model_a)?;
    d.into_iter()
        .map(|row| Ok(solve_emd(&[1.0], &model_a.priors, &[row])?.total_cost))
        .collect()
}

/// Per-cluster squared distance from each cluster mean of `model_b` to the
/// global mean of `features_a`.
pub fn cluster_to_mean_distance(model_b: &ClusterModel, features_a: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mean = feature_mean(features_a)?;
    model_b.means.iter().map(|mb| mmd_cluster_distance(mb, &mean)).collect()
}

pub fn feature_mean(features: &[Vec<f64>]) -> Result<Vec<f64>> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidArgument("no features".into()))?;
    let mut mean = vec![0.0; first.len()];
    for f in features {
        if f.len() != mean.len() {
            return Err(Error::Shape("ragged feature matrix".into()));
        }
        mean.iter_mut().zip(f).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= features.len() as f64);
    Ok(mean)
}

/// Per-sample distance and weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionWeights {
    pub h_hat: Vec<f64>,
    pub w_g: Vec<f64>,
}

/// `h_i = sum_k d_k * gamma[i][k]`, `w_i = exp(-lambda * h_i)`.
pub fn distribution_weights(model_b: &ClusterModel, cluster_distances: &[f64], lambda: f64) -> Result<DistributionWeights> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    if cluster_distances.len() != model_b.num_clusters() {
        return Err(Error::Shape(format!(
            "{} cluster distances for {} clusters",
            cluster_distances.len(),
            model_b.num_clusters()
        )));
    }
    let h_hat: Vec<f64> = model_b
        .responsibilities
        .iter()
        .map(|gamma| gamma.iter().zip(cluster_distances).map(|(g, d)| g * d).sum())
        .collect();
    let w_g = h_hat.iter().map(|h| (-lambda * h).exp()).collect();
    Ok(DistributionWeights { h_hat, w_g })
}

/// Settings for [`domain_weights`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainWeightConfig {
    pub clusters_unlabeled: usize,
    pub clusters_labeled: usize,
    pub lambda: f64,
    pub kind: DistanceKind,
    pub seed: u64,
}

/// End to end: cluster both domains and weight every unlabeled sample by its
/// closeness to the labeled domain. Cluster counts are capped at the number
/// of samples.
pub fn domain_weights(
    unlabeled: &[Vec<f64>],
    labeled: &[Vec<f64>],
    config: &DomainWeightConfig,
) -> Result<DistributionWeights> {
    let k_u = config.clusters_unlabeled.min(unlabeled.len());
    let model_u = fit_gmm(unlabeled, k_u, config.seed)?;
    let distances = match config.kind {
        DistanceKind::Emd => {
            let k_l = config.clusters_labeled.min(labeled.len());
            let model_l = fit_gmm(labeled, k_l, config.seed.wrapping_add(1))?;
            cluster_to_domain_distance(&model_u, &model_l)?
        }
        DistanceKind::Mmd => cluster_to_mean_distance(&model_u, labeled)?,
    };
    distribution_weights(&model_u, &distances, config.lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(means: Vec<Vec<f64>>, priors: Vec<f64>, resp: Vec<Vec<f64>>) -> ClusterModel {
        let k = means.len();
        ClusterModel {
            means,
            priors,
            variances: vec![1.0; k],
            responsibilities: resp,
            log_likelihood_trace: vec![],
        }
    }

    #[test]
    fn mmd_examples() {
        assert_eq!(mmd_cluster_distance(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(mmd_cluster_distance(&[2.0, 2.0], &[2.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mmd_cluster_distance(&[3.0, 4.0], &[0.0, 0.0]).unwrap(), 25.0);
        assert!(matches!(mmd_cluster_distance(&[1.0], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn forced_flow_cluster_distance() {
        // squared distances 2 and 4 to the two clusters of domain A
        let a = model(vec![vec![2f64.sqrt(), 0.0], vec![0.0, 2.0]], vec![0.3, 0.7], vec![]);
        let b = model(vec![vec![0.0, 0.0]], vec![1.0], vec![vec![1.0]]);
        let d = mmd_matrix(&b, &a).unwrap();
        assert!((d[0][0] - 2.0).abs() < 1e-12 && (d[0][1] - 4.0).abs() < 1e-12);
        let de = cluster_to_domain_distance(&b, &a).unwrap();
        assert!((de[0] - 3.4).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_domain_degenerates_to_mmd() {
        let a = model(vec![vec![1.0, 1.0]], vec![1.0], vec![]);
        let b = model(vec![vec![0.0, 0.0], vec![4.0, 5.0]], vec![0.5, 0.5], vec![]);
        let de = cluster_to_domain_distance(&b, &a).unwrap();
        assert_eq!(de, vec![2.0, 25.0]);
    }

    #[test]
    fn weight_examples() {
        let b = model(
            vec![vec![0.0], vec![1.0]],
            vec![0.5, 0.5],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]],
        );
        let w = distribution_weights(&b, &[0.0, 10.0], 0.1).unwrap();
        assert_eq!(w.h_hat, vec![0.0, 10.0, 5.0]);
        assert_eq!(w.w_g[0], 1.0);
        assert!((w.w_g[1] - (-1f64).exp()).abs() < 1e-15);
        assert!((w.w_g[1] - 0.3679).abs() < 1e-4);
        assert!(w.w_g[2] > w.w_g[1] && w.w_g[2] < w.w_g[0]);
        assert!(matches!(distribution_weights(&b, &[0.0, 1.0], 0.0), Err(Error::Domain(_))));
        assert!(matches!(distribution_weights(&b, &[0.0], 0.1), Err(Error::Shape(_))));
    }
}
