//! Chip-level aggregation of resonator fits.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Deposition, Treatment};
use crate::participation::ParticipationBudget;
use crate::tlsfit::{q_low_high, QLowHigh, TlsFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMean {
    pub mean: f64,
    /// Standard error `sqrt(1 / sum w)`.
    pub uncertainty: f64,
    /// Weighted sample standard deviation of the inputs.
    pub spread: f64,
    /// False when some sigma was non-positive and uniform weights were used.
    pub weighted: bool,
}

/// Inverse-variance weighted mean. Falls back to uniform weights if any
/// sigma is not strictly positive; the uncertainty is then the standard error
/// of the arithmetic mean.
pub fn weighted_mean(values: &[(f64, f64)]) -> Result<WeightedMean> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    let weighted = values.iter().all(|&(_, s)| s > 0.0);
    let w: Vec<f64> = values
        .iter()
        .map(|&(_, s)| if weighted { 1.0 / (s * s) } else { 1.0 })
        .collect();
    let v1: f64 = w.iter().sum();
    let v2: f64 = w.iter().map(|w| w * w).sum();
    let mean = values.iter().zip(&w).map(|(&(x, _), w)| w * x).sum::<f64>() / v1;
    let ss: f64 = values.iter().zip(&w).map(|(&(x, _), w)| w * (x - mean).powi(2)).sum();
    // reliability-weight bias correction; zero for a single value
    let denom = v1 - v2 / v1;
    let spread = if denom > 0.0 { (ss / denom).sqrt() } else { 0.0 };
    let uncertainty = if weighted {
        (1.0 / v1).sqrt()
    } else {
        spread / (values.len() as f64).sqrt()
    };
    Ok(WeightedMean {
        mean,
        uncertainty,
        spread,
        weighted,
    })
}

/// Linearly interpolated quantile of sorted data (`p` in `[0, 1]`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
    pub count: usize,
}

/// Quartiles by linear interpolation between order statistics; whiskers reach
/// the most extreme points within 1.5 IQR of the box.
pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in boxplot input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = || sorted.iter().copied().filter(|v| *v >= lo_fence && *v <= hi_fence);
    Ok(BoxStats {
        q1,
        median: quantile_sorted(&sorted, 0.5),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q3,
        whisker_low: inside().fold(f64::INFINITY, f64::min),
        whisker_high: inside().fold(f64::NEG_INFINITY, f64::max),
        outliers: sorted.iter().copied().filter(|v| *v < lo_fence || *v > hi_fence).collect(),
        count: values.len(),
    })
}

/// Chip class: deposition temperature, treatment and sample holder.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChipLabel {
    pub deposition: Deposition,
    pub treatment: Treatment,
    pub holder: String,
}

impl fmt::Display for ChipLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.deposition.label(), self.treatment.key(), self.holder)
    }
}

impl FromStr for ChipLabel {
    type Err = Error;

    /// `400C-ref-A`, `450C/hf/B` and similar.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(['-', '/', '_', ' ']).filter(|p| !p.is_empty()).collect();
        match parts.as_slice() {
            [dep, treat, holder] => Ok(ChipLabel {
                deposition: dep.parse()?,
                treatment: treat.parse()?,
                holder: holder.to_string(),
            }),
            [dep, treat] => Ok(ChipLabel {
                deposition: dep.parse()?,
                treatment: treat.parse()?,
                holder: String::new(),
            }),
            _ => Err(Error::InvalidParameter(format!(
                "chip label `{s}` is not <deposition>-<treatment>[-<holder>]"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonatorRecord {
    pub resonator: String,
    pub fit: TlsFit,
    pub quality: QLowHigh,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipSummary {
    pub label: ChipLabel,
    pub records: Vec<ResonatorRecord>,
    pub weighted_mean_f_tan_delta0: WeightedMean,
    /// Keyed by quantity: `f_tan_delta0`, `q_i_low`, `q_i_high`, `n_c`, `b`, `delta_other`.
    pub boxes: BTreeMap<String, BoxStats>,
}

pub const SUMMARY_QUANTITIES: [&str; 6] = ["f_tan_delta0", "q_i_low", "q_i_high", "n_c", "b", "delta_other"];

pub fn summarize_chip(label: ChipLabel, fits: &[TlsFit]) -> Result<ChipSummary> {
    if fits.is_empty() {
        return Err(Error::Empty);
    }
    let mut records: Vec<ResonatorRecord> = fits
        .iter()
        .map(|fit| ResonatorRecord {
            resonator: fit.resonator.clone(),
            fit: fit.clone(),
            quality: q_low_high(fit),
        })
        .collect();
    records.sort_by(|a, b| a.resonator.cmp(&b.resonator));
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .map(|r| (r.fit.f_tan_delta0, r.fit.f_tan_delta0_sigma))
        .collect();
    let weighted_mean_f_tan_delta0 = weighted_mean(&pairs)?;
    let mut boxes = BTreeMap::new();
    for name in SUMMARY_QUANTITIES {
        let values: Vec<f64> = records
            .iter()
            .map(|r| match name {
                "f_tan_delta0" => r.fit.f_tan_delta0,
                "q_i_low" => r.quality.q_low,
                "q_i_high" => r.quality.q_high,
                "n_c" => r.fit.n_c,
                "b" => r.fit.b,
                _ => r.fit.delta_other,
            })
            .collect();
        boxes.insert(name.to_string(), boxplot_stats(&values)?);
    }
    Ok(ChipSummary {
        label,
        records,
        weighted_mean_f_tan_delta0,
        boxes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub measured: f64,
    pub simulated: f64,
    pub ratio: f64,
    pub difference: f64,
    /// The simulation predicts less loss than measured.
    pub underestimated: bool,
}

pub fn compare_values(measured: f64, simulated: f64) -> Result<Comparison> {
    if !(simulated > 0.0) || !measured.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cannot compare measured {measured:e} with simulated {simulated:e}"
        )));
    }
    let ratio = measured / simulated;
    Ok(Comparison {
        measured,
        simulated,
        ratio,
        difference: measured - simulated,
        underestimated: ratio > 1.0 + 1e-12,
    })
}

pub fn compare_measured_vs_simulated(
    summary: &ChipSummary,
    budget: Option<&ParticipationBudget>,
) -> Result<Comparison> {
    let budget = budget.ok_or_else(|| {
        Error::MissingCounterpart(format!("no simulated budget for chip class {}", summary.label))
    })?;
    compare_values(summary.weighted_mean_f_tan_delta0.mean, budget.total_f_tan_delta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_mean() {
        let m = weighted_mean(&[(1.0, 0.1), (3.0, 0.3)]).unwrap();
        // weights 100 and 100/9
        let w = [100.0, 100.0 / 9.0];
        let mean = (w[0] * 1.0 + w[1] * 3.0) / (w[0] + w[1]);
        assert!((m.mean - mean).abs() < 1e-12);
        assert!((m.mean - 1.2).abs() < 1e-12);
        assert!((m.uncertainty - (1.0 / (w[0] + w[1])).sqrt()).abs() < 1e-12);
        assert!((m.uncertainty - 0.0949).abs() < 1e-4);
    }

    #[test]
    fn single_value() {
        let m = weighted_mean(&[(2.5, 0.2)]).unwrap();
        assert_eq!((m.mean, m.spread), (2.5, 0.0));
        assert!((m.uncertainty - 0.2).abs() < 1e-15);
        assert!(matches!(weighted_mean(&[]), Err(Error::Empty)));
    }

    #[test]
    fn unweighted_fallback() {
        let m = weighted_mean(&[(1.0, 0.0), (3.0, 0.5)]).unwrap();
        assert!(!m.weighted);
        assert_eq!(m.mean, 2.0);
    }

    #[test]
    fn box_examples() {
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.q1, b.mean, b.q3, b.whisker_low, b.whisker_high), (2.0, 3.0, 4.0, 1.0, 5.0));
        assert!(b.outliers.is_empty());
        let b = boxplot_stats(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!(b.outliers, vec![100.0]);
        assert_eq!(b.whisker_high, 4.0);
        let b = boxplot_stats(&[7.0; 4]).unwrap();
        assert_eq!((b.q1, b.q3, b.mean), (7.0, 7.0, 7.0));
    }

    #[test]
    fn comparison_examples() {
        let c = compare_values(1.06e-6, 0.93e-6).unwrap();
        assert!((c.ratio - 1.14).abs() < 0.005);
        assert!(c.underestimated);
        let c = compare_values(0.28e-6, 0.27e-6).unwrap();
        assert!((c.ratio - 1.04).abs() < 0.005);
        let c = compare_values(0.5, 0.5).unwrap();
        assert_eq!(c.ratio, 1.0);
        assert!(!c.underestimated);
    }

    #[test]
    fn labels_parse() {
        let l: ChipLabel = "450C-hf-B".parse().unwrap();
        assert_eq!(l.deposition, Deposition::T450);
        assert_eq!(l.treatment, Treatment::HfTreated);
        assert_eq!(l.to_string().parse::<ChipLabel>().unwrap(), l);
        assert!("nonsense".parse::<ChipLabel>().is_err());
    }
}
