//! Label-vector algebra.
//!
//! Every target the trainer sees is a point on the probability simplex: the
//! one-hot ground truth, the soft output of a frozen predictor, the one-hot
//! pseudo label taken from that output, and the per-sample interpolation of
//! the pseudo label with a temperature-flattened soft label.

use crate::error::{Error, Result};

/// Entries below this value are lifted to it before any power or log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on `sum == 1` when validating a label vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A probability vector over at least two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVector(Vec<f64>);

impl LabelVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(Error::Shape(format!(
                "label vector needs at least 2 classes, got {}",
                entries.len()
            )));
        }
        if entries.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Domain(format!(
                "label vector entries must be finite and nonnegative: {entries:?}"
            )));
        }
        let sum: f64 = entries.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("label vector sums to {sum}, expected 1")));
        }
        Ok(LabelVector(entries))
    }

    /// Wraps entries that are simplex-valued by construction.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.len() >= 2);
        LabelVector(entries)
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Result<Self> {
        if num_classes < 2 || class >= num_classes {
            return Err(Error::InvalidArgument(format!(
                "class {class} out of range for {num_classes} classes"
            )));
        }
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        Ok(LabelVector(v))
    }

    pub fn uniform(num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "uniform label needs at least 2 classes, got {num_classes}"
            )));
        }
        Ok(LabelVector(vec![1.0 / num_classes as f64; num_classes]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = k;
            }
        }
        best
    }

    pub fn max(&self) -> f64 {
        self.0[self.argmax()]
    }
}

impl std::ops::Index<usize> for LabelVector {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.0[k]
    }
}

/// One-hot vector at the argmax of `soft`.
pub fn to_pseudo(soft: &LabelVector) -> LabelVector {
    let mut v = vec![0.0; soft.len()];
    v[soft.argmax()] = 1.0;
    LabelVector(v)
}

/// Temperature sharpening: `p_k^(1/T) / sum_j p_j^(1/T)`.
///
/// `T > 1` flattens the distribution, `T < 1` sharpens it, `T = 1` returns
/// the input unchanged.
pub fn sharpen(soft: &LabelVector, temperature: f64) -> Result<LabelVector> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain(format!(
            "temperature must be positive and finite, got {temperature}"
        )));
    }
    if temperature == 1.0 {
        return Ok(soft.clone());
    }
    let inv_t = 1.0 / temperature;
    let powered: Vec<f64> = soft
        .0
        .iter()
        .map(|&p| p.max(PROB_FLOOR).powf(inv_t))
        .collect();
    let total: f64 = powered.iter().sum();
    Ok(LabelVector(powered.into_iter().map(|p| p / total).collect()))
}

/// Convex combination `w * pseudo + (1 - w) * soft`.
pub fn interpolate(pseudo: &LabelVector, soft: &LabelVector, w: f64) -> Result<LabelVector> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::Domain(format!("interpolation weight {w} outside [0, 1]")));
    }
    if pseudo.len() != soft.len() {
        return Err(Error::Shape(format!(
            "cannot interpolate label vectors of length {} and {}",
            pseudo.len(),
            soft.len()
        )));
    }
    let v = pseudo
        .0
        .iter()
        .zip(&soft.0)
        .map(|(&p, &s)| w * p + (1.0 - w) * s)
        .collect();
    Ok(LabelVector(v))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lv(v: &[f64]) -> LabelVector {
        LabelVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pseudo_label_takes_argmax() {
        assert_eq!(to_pseudo(&lv(&[0.2, 0.5, 0.3])).as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(to_pseudo(&lv(&[1.0, 0.0])).as_slice(), &[1.0, 0.0]);
        // ties go to the lowest index
        assert_eq!(to_pseudo(&lv(&[0.5, 0.5])).as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn sharpen_examples() {
        let v = lv(&[0.3, 0.7]);
        assert_eq!(sharpen(&v, 1.0).unwrap(), v);

        let s = sharpen(&lv(&[0.25, 0.75]), 2.0).unwrap();
        let denom = 0.5 + 0.75f64.sqrt();
        assert!((s[0] - 0.5 / denom).abs() < 1e-15);
        assert!((s[0] - 0.3660).abs() < 1e-4);
        assert!((s[1] - 0.6340).abs() < 1e-4);

        let flat = sharpen(&lv(&[0.9, 0.1]), 1e6).unwrap();
        assert!((flat[0] - 0.5).abs() < 1e-4 && (flat[1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn sharpen_rejects_nonpositive_temperature() {
        let v = lv(&[0.5, 0.5]);
        assert!(matches!(sharpen(&v, 0.0), Err(Error::Domain(_))));
        assert!(matches!(sharpen(&v, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn sharpen_handles_zero_entries() {
        let s = sharpen(&lv(&[1.0, 0.0]), 2.0).unwrap();
        assert!(s[1] > 0.0 && s[1] < 1e-5);
        assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolate_examples() {
        let pseudo = lv(&[0.0, 1.0]);
        let soft = lv(&[0.4, 0.6]);
        assert_eq!(interpolate(&pseudo, &soft, 1.0).unwrap().as_slice(), &[0.0, 1.0]);
        assert_eq!(interpolate(&pseudo, &soft, 0.0).unwrap().as_slice(), &[0.4, 0.6]);

        let mixed = interpolate(&lv(&[1.0, 0.0]), &lv(&[0.6, 0.4]), 0.5).unwrap();
        assert!((mixed[0] - 0.8).abs() < 1e-15 && (mixed[1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn interpolate_rejects_bad_weight_and_length() {
        let a = lv(&[0.5, 0.5]);
        assert!(matches!(interpolate(&a, &a, 1.5), Err(Error::Domain(_))));
        assert!(matches!(interpolate(&a, &a, -0.1), Err(Error::Domain(_))));
        let b = lv(&[0.2, 0.3, 0.5]);
        assert!(matches!(interpolate(&a, &b, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn constructor_validates() {
        assert!(LabelVector::new(vec![1.0]).is_err());
        assert!(LabelVector::new(vec![0.5, 0.6]).is_err());
        assert!(LabelVector::new(vec![-0.5, 1.5]).is_err());
        assert!(LabelVector::one_hot(2, 2).is_err());
    }
}
