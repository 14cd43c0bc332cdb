use serde::{Deserialize, Serialize};

use super::MonitorError;

pub const PROPORTION_FLOOR: f64 = 1e-4;
pub const DEFAULT_BINS: usize = 10;

/// Floors each proportion at 1e-4, then renormalizes to sum 1.
pub fn floor_and_normalize(p: &[f64]) -> Vec<f64> {
    let floored: Vec<f64> = p.iter().map(|v| v.max(PROPORTION_FLOOR)).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|v| v / total).collect()
}

/// Population stability index `Σ (qᵢ − pᵢ)·ln(qᵢ/pᵢ)` after flooring both
/// inputs.
pub fn psi(reference: &[f64], current: &[f64]) -> Result<f64, MonitorError> {
    if reference.len() != current.len() || reference.is_empty() {
        return Err(MonitorError::Metric(format!(
            "bin count mismatch: {} reference vs {} current",
            reference.len(),
            current.len()
        )));
    }
    let p = floor_and_normalize(reference);
    let q = floor_and_normalize(current);
    Ok(p.iter().zip(&q).map(|(p, q)| (q - p) * (q / p).ln()).sum::<f64>().max(0.0))
}

/// Histogram with upper-inclusive bins: value `v` falls in bin
/// `#{edges e : e < v}`, so there are `edges.len() + 1` bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub proportions: Vec<f64>,
}

impl Histogram {
    /// Equal-frequency edges at the `k/bins` quantiles (lower empirical
    /// quantile), deduplicated; proportions floored and renormalized.
    pub fn equal_frequency(values: &[f64], bins: usize) -> Result<Self, MonitorError> {
        if values.is_empty() {
            return Err(MonitorError::Metric("cannot build a histogram from no values".into()));
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut edges: Vec<f64> = (1..bins).map(|k| sorted[(k * n / bins).saturating_sub(1).min(n - 1)]).collect();
        edges.dedup();
        let mut h = Histogram { edges, proportions: vec![] };
        h.proportions = h.proportions_of(values);
        Ok(h)
    }

    pub fn bin_of(&self, v: f64) -> usize {
        self.edges.partition_point(|e| *e < v)
    }

    /// Floored, renormalized share of `values` in each bin.
    pub fn proportions_of(&self, values: &[f64]) -> Vec<f64> {
        let mut counts = vec![0usize; self.edges.len() + 1];
        for v in values {
            counts[self.bin_of(*v)] += 1;
        }
        let n = values.len().max(1) as f64;
        floor_and_normalize(&counts.iter().map(|c| *c as f64 / n).collect::<Vec<_>>())
    }

    pub fn psi_of(&self, values: &[f64]) -> Result<f64, MonitorError> {
        psi(&self.proportions, &self.proportions_of(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_examples() {
        assert_eq!(psi(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let v = psi(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert!((v - 0.878_889_8).abs() < 1e-4, "{v}");
        let back = psi(&[0.9, 0.1], &[0.5, 0.5]).unwrap();
        assert!((v - back).abs() < 1e-12);
        assert!(psi(&[1.0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn equal_frequency_bins() {
        let values: Vec<f64> = (0..1000).map(f64::from).collect();
        let h = Histogram::equal_frequency(&values, 10).unwrap();
        assert_eq!(h.edges.len(), 9);
        assert!(h.proportions.iter().all(|p| (p - 0.1).abs() < 1e-9));
        assert!((h.proportions.iter().sum::<f64>() - 1.0).abs() < 1e-9);

        let binary: Vec<f64> = (0..100).map(|i| f64::from(u8::from(i < 30))).collect();
        let h = Histogram::equal_frequency(&binary, 10).unwrap();
        assert_eq!(h.edges, [0.0, 1.0]);
        assert!((h.proportions[0] - 0.7).abs() < 1e-3);
        assert!((h.proportions[1] - 0.3).abs() < 1e-3);
    }
}
