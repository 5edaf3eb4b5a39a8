//! Pseudo-label confidence weights.
//!
//! Two signals say whether a pseudo label can be trusted: the largest entry
//! of the soft prediction (`w_c`), and how crowded the sample's neighbourhood
//! is among samples carrying the same pseudo label (`w_d`). Local density is
//! the density-peak count: the number of same-group samples whose squared
//! feature distance falls strictly below a cutoff, where the cutoff is the
//! `ceil(kappa * n^2)`-th smallest entry of the group's full distance matrix.
//! Densities are normalized by the group maximum. `w_s = w_c * w_d`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::labels::LabelVector;

/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SquareMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("matrix rows must all have length n".into()));
        }
        Ok(SquareMatrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn zeros(n: usize) -> Self {
        SquareMatrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[f64] {
        &self.data
    }
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Pairwise squared Euclidean distances.
pub fn distance_matrix(features: &[Vec<f64>]) -> Result<SquareMatrix> {
    let n = features.len();
    if n == 0 {
        return Err(Error::Shape("distance matrix needs at least one point".into()));
    }
    let d = features[0].len();
    if let Some(bad) = features.iter().position(|f| f.len() != d) {
        return Err(Error::Shape(format!(
            "feature {bad} has length {}, expected {d}",
            features[bad].len()
        )));
    }
    let mut m = SquareMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = squared_distance(&features[i], &features[j]);
            m.data[i * n + j] = v;
            m.data[j * n + i] = v;
        }
    }
    Ok(m)
}

/// The `ceil(kappa * n^2)`-th smallest entry (1-based) over all `n^2` entries.
pub fn density_cutoff(distances: &SquareMatrix, kappa: f64) -> Result<f64> {
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }
    let mut sorted = distances.entries().to_vec();
    if sorted.is_empty() {
        return Err(Error::Shape("empty distance matrix".into()));
    }
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    Ok(sorted[cutoff_rank(kappa, total) - 1])
}

/// `ceil(kappa * total)`, clamped to `1..=total`. A product within rounding
/// error of an integer counts as that integer, so `0.035 * 400` is 14, not 15.
pub fn cutoff_rank(kappa: f64, total: usize) -> usize {
    let raw = kappa * total as f64;
    let nearest = raw.round();
    let rank = if (raw - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest
    } else {
        raw.ceil()
    };
    (rank as usize).clamp(1, total)
}

/// `rho_i = #{ j : D[i][j] < cutoff }`, self included.
pub fn local_density(distances: &SquareMatrix, cutoff: f64) -> Vec<usize> {
    (0..distances.n())
        .map(|i| distances.row(i).iter().filter(|&&d| d < cutoff).count())
        .collect()
}

/// Divides by the maximum. A group without any density evidence (all
/// counts zero) gets weight 1 everywhere.
pub fn normalize_density(rho: &[usize]) -> Vec<f64> {
    let max = rho.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return vec![1.0; rho.len()];
    }
    rho.iter().map(|&r| r as f64 / max as f64).collect()
}

pub fn confidence_score(soft: &LabelVector) -> f64 {
    soft.max()
}

/// Per-sample confidence weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWeights {
    pub pseudo_class: Vec<usize>,
    pub w_c: Vec<f64>,
    pub w_d: Vec<f64>,
    pub w_s: Vec<f64>,
}

/// Groups samples by pseudo class and computes `w_c`, `w_d`, `w_s`.
///
/// `features[i]` must be the feature vector of the sample whose soft label is
/// `softs[i]`, taken from the extractor of the task being augmented.
pub fn confidence_weights(softs: &[LabelVector], features: &[Vec<f64>], kappa: f64) -> Result<ConfidenceWeights> {
    if softs.len() != features.len() {
        return Err(Error::Shape(format!(
            "{} soft labels but {} feature vectors",
            softs.len(),
            features.len()
        )));
    }
    if softs.is_empty() {
        return Err(Error::InvalidArgument("no samples to weight".into()));
    }
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Domain(format!("kappa must lie in (0, 1), got {kappa}")));
    }

    let n = softs.len();
    let pseudo_class: Vec<usize> = softs.iter().map(LabelVector::argmax).collect();
    let w_c: Vec<f64> = softs.iter().map(confidence_score).collect();

    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in pseudo_class.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }

    let mut w_d = vec![0.0; n];
    for members in groups.values() {
        let group_features: Vec<Vec<f64>> = members.iter().map(|&i| features[i].clone()).collect();
        let d = distance_matrix(&group_features)?;
        let cutoff = density_cutoff(&d, kappa)?;
        let rho = local_density(&d, cutoff);
        for (&i, w) in members.iter().zip(normalize_density(&rho)) {
            w_d[i] = w;
        }
    }

    let w_s = w_c.iter().zip(&w_d).map(|(c, d)| c * d).collect();
    Ok(ConfidenceWeights {
        pseudo_class,
        w_c,
        w_d,
        w_s,
    })
}
