//! Final per-sample interpolation weights.
//!
//! The full weight is `w_s * w_g` divided by its maximum over the dataset, so
//! the most trustworthy sample always gets weight 1. The remaining modes are
//! the ablations: a single component normalized the same way, or a constant.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textio::{fmt_f64, write_file_atomically};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightMode {
    /// `w_s * w_g`, max-normalized.
    Full,
    /// Confidence score alone, max-normalized.
    OnlyConfidence,
    /// Normalized local density alone, max-normalized.
    OnlyDensity,
    /// Distribution weight alone, max-normalized.
    OnlyDistribution,
    /// The same value for every sample.
    Constant(f64),
}

impl WeightMode {
    pub fn validate(self) -> Result<()> {
        match self {
            WeightMode::Constant(c) if !(0.0..=1.0).contains(&c) => Err(Error::InvalidConfig(
                format!("constant weight {c} outside [0, 1]"),
            )),
            _ => Ok(()),
        }
    }

    /// Whether the mode reads any per-sample component.
    pub fn uses_components(self) -> bool {
        !matches!(self, WeightMode::Constant(_))
    }

    pub fn name(self) -> String {
        match self {
            WeightMode::Full => "full".into(),
            WeightMode::OnlyConfidence => "only-wc".into(),
            WeightMode::OnlyDensity => "only-wd".into(),
            WeightMode::OnlyDistribution => "only-wg".into(),
            WeightMode::Constant(c) => format!("{c}"),
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = Error;

    /// `full`, `only-wc`, `only-wd`, `only-wg`, or a constant in `[0, 1]`.
    fn from_str(s: &str) -> Result<Self> {
        let mode = match s {
            "full" => WeightMode::Full,
            "only-wc" => WeightMode::OnlyConfidence,
            "only-wd" => WeightMode::OnlyDensity,
            "only-wg" => WeightMode::OnlyDistribution,
            other => WeightMode::Constant(other.parse().map_err(|_| {
                Error::InvalidConfig(format!(
                    "unknown weight mode '{other}' (expected full, only-wc, only-wd, only-wg or a number in [0, 1])"
                ))
            })?),
        };
        mode.validate()?;
        Ok(mode)
    }
}

/// Aligned per-sample components.
#[derive(Debug, Clone, Copy)]
pub struct WeightComponents<'a> {
    pub w_c: &'a [f64],
    pub w_d: &'a [f64],
    pub w_s: &'a [f64],
    pub w_g: &'a [f64],
}

impl WeightComponents<'_> {
    fn len(&self) -> Result<usize> {
        let n = self.w_s.len();
        if self.w_c.len() != n || self.w_d.len() != n || self.w_g.len() != n {
            return Err(Error::Shape(format!(
                "weight components have lengths {}, {}, {}, {}",
                self.w_c.len(),
                self.w_d.len(),
                n,
                self.w_g.len()
            )));
        }
        Ok(n)
    }
}

/// Divides by the maximum; an all-zero (or empty) input stays all zero.
pub fn normalize_by_max(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(0.0f64, f64::max);
    if max > 0.0 {
        values.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; values.len()]
    }
}

/// `w_i = (w_s_i * w_g_i) / max_j (w_s_j * w_g_j)`.
pub fn combine_full(w_s: &[f64], w_g: &[f64]) -> Result<Vec<f64>> {
    if w_s.len() != w_g.len() {
        return Err(Error::Shape(format!(
            "w_s has {} entries, w_g has {}",
            w_s.len(),
            w_g.len()
        )));
    }
    let products: Vec<f64> = w_s.iter().zip(w_g).map(|(s, g)| s * g).collect();
    Ok(normalize_by_max(&products))
}

pub fn combine(parts: &WeightComponents<'_>, mode: WeightMode) -> Result<Vec<f64>> {
    mode.validate()?;
    let n = parts.len()?;
    Ok(match mode {
        WeightMode::Full => combine_full(parts.w_s, parts.w_g)?,
        WeightMode::OnlyConfidence => normalize_by_max(parts.w_c),
        WeightMode::OnlyDensity => normalize_by_max(parts.w_d),
        WeightMode::OnlyDistribution => normalize_by_max(parts.w_g),
        WeightMode::Constant(c) => vec![c; n],
    })
}

/// Everything known about one sample's weight.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleWeightRecord {
    pub sample_index: usize,
    pub pseudo_class: usize,
    pub w_c: f64,
    pub w_d: f64,
    pub w_s: f64,
    pub h_hat: f64,
    pub w_g: f64,
    pub w_combined: f64,
}

pub const AUDIT_HEADER: &str = "index,pseudo_class,w_c,w_d,w_s,h_hat,w_g,w_combined";

pub fn audit_csv(records: &[SampleWeightRecord]) -> String {
    let mut out = String::from(AUDIT_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.sample_index,
            r.pseudo_class,
            fmt_f64(r.w_c),
            fmt_f64(r.w_d),
            fmt_f64(r.w_s),
            fmt_f64(r.h_hat),
            fmt_f64(r.w_g),
            fmt_f64(r.w_combined)
        );
    }
    out
}

pub fn write_audit(records: &[SampleWeightRecord], path: &Path) -> Result<()> {
    write_file_atomically(path, &audit_csv(records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parts<'a>(w_c: &'a [f64], w_d: &'a [f64], w_s: &'a [f64], w_g: &'a [f64]) -> WeightComponents<'a> {
        WeightComponents { w_c, w_d, w_s, w_g }
    }

    #[test]
    fn full_mode_normalizes_products() {
        let w = combine_full(&[0.2, 0.8], &[1.0, 0.5]).unwrap();
        assert_eq!(w, vec![0.5, 1.0]);
    }

    #[test]
    fn constant_modes() {
        let ones = [1.0, 0.3, 0.7];
        let p = parts(&ones, &ones, &ones, &ones);
        assert_eq!(combine(&p, WeightMode::Constant(0.0)).unwrap(), vec![0.0; 3]);
        assert_eq!(combine(&p, WeightMode::Constant(1.0)).unwrap(), vec![1.0; 3]);
        assert_eq!(combine(&p, WeightMode::Constant(0.5)).unwrap(), vec![0.5; 3]);
        assert!(combine(&p, WeightMode::Constant(1.5)).is_err());
    }

    #[test]
    fn single_component_modes_normalize_that_component() {
        let p = parts(&[0.5, 0.25], &[1.0, 0.5], &[0.5, 0.125], &[0.2, 0.4]);
        assert_eq!(combine(&p, WeightMode::OnlyConfidence).unwrap(), vec![1.0, 0.5]);
        assert_eq!(combine(&p, WeightMode::OnlyDensity).unwrap(), vec![1.0, 0.5]);
        assert_eq!(combine(&p, WeightMode::OnlyDistribution).unwrap(), vec![0.5, 1.0]);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            WeightMode::Full,
            WeightMode::OnlyConfidence,
            WeightMode::OnlyDensity,
            WeightMode::OnlyDistribution,
            WeightMode::Constant(0.0),
            WeightMode::Constant(0.5),
            WeightMode::Constant(1.0),
        ] {
            assert_eq!(m.name().parse::<WeightMode>().unwrap(), m);
        }
        assert!("2".parse::<WeightMode>().is_err());
        assert!("bogus".parse::<WeightMode>().is_err());
    }

    #[test]
    fn all_zero_products_give_zero_weights() {
        assert_eq!(combine_full(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(matches!(combine_full(&[0.1], &[0.1, 0.2]), Err(Error::Shape(_))));
        let p = parts(&[0.1], &[0.1, 0.2], &[0.1], &[0.1]);
        assert!(matches!(combine(&p, WeightMode::Full), Err(Error::Shape(_))));
    }

    #[test]
    fn audit_has_header_and_one_row_per_sample() {
        let r = SampleWeightRecord {
            sample_index: 3,
            pseudo_class: 1,
            w_c: 0.9,
            w_d: 1.0,
            w_s: 0.9,
            h_hat: 2.0,
            w_g: 0.8,
            w_combined: 1.0,
        };
        let text = audit_csv(&[r.clone(), SampleWeightRecord { sample_index: 4, ..r }]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], AUDIT_HEADER);
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("4,1,"));
        assert_eq!(lines[1].split(',').count(), 8);
    }
}
