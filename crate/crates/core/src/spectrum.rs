//! Sorted entanglement spectra and the gaps derived from them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{cluster_sorted, Cluster};

/// Default absolute threshold between neighbouring values when grouping degeneracies.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Descending.
    pub values: Vec<f64>,
    pub gap: f64,
    pub clusters: Vec<ClusterInfo>,
    /// Offsets of the leading (nearly) degenerate values from their unperturbed common value,
    /// descending, when the producer resolved them beyond plain eigenvalue round-off.
    pub top_deviations: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterInfo {
    pub value: f64,
    pub multiplicity: usize,
    pub width: f64,
}

impl From<Cluster> for ClusterInfo {
    fn from(c: Cluster) -> Self {
        ClusterInfo { value: c.value, multiplicity: c.multiplicity, width: c.width }
    }
}

impl SpectrumReport {
    /// Sorts descending and clusters; `gap` is left at NaN until a gap function fills it.
    pub fn from_values(mut values: Vec<f64>, tol: f64) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let clusters = cluster_sorted(&values, tol).into_iter().map(Into::into).collect();
        SpectrumReport { values, gap: f64::NAN, clusters, top_deviations: None }
    }

    pub fn top_multiplicity(&self) -> usize {
        self.clusters.first().map(|c| c.multiplicity).unwrap_or(0)
    }
}

/// Single-particle gap 2 min |xi - 1/2|.
pub fn sp_gap(report: &SpectrumReport) -> Result<f64> {
    sp_gap_values(&report.values)
}

pub fn sp_gap_values(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    Ok(values.iter().map(|x| 2.0 * (x - 0.5).abs()).fold(f64::INFINITY, f64::min))
}

/// Many-body gap |zeta_1 - zeta_{r^2}| on a descending spectrum.
pub fn mb_gap(report: &SpectrumReport, r: usize) -> Result<f64> {
    let need = r * r;
    if let Some(dev) = &report.top_deviations {
        if need > 0 && dev.len() >= need && report.values.len() >= need {
            return Ok((dev[0] - dev[need - 1]).abs());
        }
    }
    mb_gap_values(&report.values, r)
}

pub fn mb_gap_values(values: &[f64], r: usize) -> Result<f64> {
    let need = r * r;
    if need == 0 || values.len() < need {
        return Err(Error::TooFewValues { need, have: values.len() });
    }
    Ok((values[0] - values[need - 1]).abs())
}

/// Free-fermion entanglement entropy from correlation-matrix eigenvalues.
pub fn sp_entropy(values: &[f64]) -> f64 {
    values
        .iter()
        .map(|&x| {
            let x = x.clamp(0.0, 1.0);
            let h = |p: f64| if p > 0.0 { -p * p.ln() } else { 0.0 };
            h(x) + h(1.0 - x)
        })
        .sum()
}

/// Von Neumann entropy of a probability spectrum.
pub fn mb_entropy(values: &[f64]) -> f64 {
    values.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gap_examples() {
        assert_eq!(sp_gap_values(&[0.5, 0.5, 0.0, 1.0]).unwrap(), 0.0);
        assert!((sp_gap_values(&[0.6, 0.4]).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(sp_gap_values(&[]), Err(Error::EmptySpectrum)));
        assert_eq!(mb_gap_values(&[0.25; 4], 2).unwrap(), 0.0);
        assert!((mb_gap_values(&[0.3, 0.3, 0.2, 0.2], 2).unwrap() - 0.1).abs() < 1e-15);
        assert!(matches!(mb_gap_values(&[0.5, 0.5], 2), Err(Error::TooFewValues { need: 4, have: 2 })));
    }

    #[test]
    fn entropy_bounds() {
        assert!((sp_entropy(&[0.5]) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(sp_entropy(&[0.0, 1.0]), 0.0);
        assert!((mb_entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-14);
    }
}
