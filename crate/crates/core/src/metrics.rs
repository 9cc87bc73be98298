//! Sparsity and smoothness measures of sampled controls.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::Method;

/// Magnitude at or below which a sample counts as zero.
pub const DEFAULT_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("control signal is empty")]
    Empty,
    #[error("threshold must be non-negative, got {0}")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlMetrics {
    pub sparsity_density: f64,
    /// `h sum |u_m|`.
    pub l1: f64,
    /// `sqrt(h sum u_m^2)`.
    pub l2: f64,
    pub linf: f64,
    pub max_step: f64,
    pub threshold: f64,
}

impl ControlMetrics {
    pub fn compute(u: &[f64], h: f64, threshold: f64) -> Result<Self, MetricsError> {
        let sparsity_density = sparsity_density(u, threshold)?;
        let (l1, l2, linf) = discrete_norms(u, h);
        Ok(ControlMetrics { sparsity_density, l1, l2, linf, max_step: max_step(u), threshold })
    }
}

/// Fraction of samples with `|u_m| > threshold`.
pub fn sparsity_density(u: &[f64], threshold: f64) -> Result<f64, MetricsError> {
    if u.is_empty() {
        return Err(MetricsError::Empty);
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(MetricsError::BadThreshold(threshold));
    }
    let count = u.iter().filter(|v| v.abs() > threshold).count();
    Ok(count as f64 / u.len() as f64)
}

/// Riemann sums `(h sum |u|, sqrt(h sum u^2), max |u|)`.
pub fn discrete_norms(u: &[f64], h: f64) -> (f64, f64, f64) {
    let l1 = h * u.iter().map(|v| v.abs()).sum::<f64>();
    let l2 = (h * u.iter().map(|v| v * v).sum::<f64>()).sqrt();
    let linf = u.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    (l1, l2, linf)
}

/// Largest jump between consecutive samples.
pub fn max_step(u: &[f64]) -> f64 {
    u.windows(2).fold(0.0f64, |m, w| m.max((w[1] - w[0]).abs()))
}

/// One solved case/method pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEntry {
    pub case_no: usize,
    pub method: Method,
    pub density: f64,
}

/// Density per case and method, rows in case order, columns in
/// [`Method::ALL`] order. Missing entries are `None`.
pub fn comparison_table(entries: &[DensityEntry]) -> Vec<(usize, [Option<f64>; 3])> {
    let mut rows: Vec<(usize, [Option<f64>; 3])> = Vec::new();
    for e in entries {
        let col = Method::ALL.iter().position(|m| *m == e.method).unwrap();
        match rows.iter_mut().find(|(c, _)| *c == e.case_no) {
            Some((_, row)) => row[col] = Some(e.density),
            None => {
                let mut row = [None; 3];
                row[col] = Some(e.density);
                rows.push((e.case_no, row));
            }
        }
    }
    rows.sort_by_key(|(c, _)| *c);
    rows
}

/// Plain-text rendering of [`comparison_table`].
pub fn format_comparison(rows: &[(usize, [Option<f64>; 3])]) -> String {
    let mut out = format!("{:>4}  {:>8}  {:>8}  {:>8}\n", "case", "LASSO", "EN", "CLOT");
    for (case, row) in rows {
        out += &format!("{case:>4}");
        for v in row {
            match v {
                Some(d) => out += &format!("  {d:>8.4}"),
                None => out += &format!("  {:>8}", "-"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_extremes() {
        assert_eq!(sparsity_density(&[0.0; 5], 1e-4).unwrap(), 0.0);
        assert_eq!(sparsity_density(&[1.0, -1.0, 1.0], 1e-4).unwrap(), 1.0);
        assert_eq!(sparsity_density(&[1e-4, 2e-4, 0.0, -1.0], 1e-4).unwrap(), 0.5);
        assert_eq!(sparsity_density(&[], 1e-4).unwrap_err(), MetricsError::Empty);
        assert!(sparsity_density(&[1.0], -1.0).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(discrete_norms(&[1.0, 1.0], 0.5), (1.0, 1.0, 1.0));
        assert_eq!(discrete_norms(&[0.0; 4], 0.1), (0.0, 0.0, 0.0));
        let (l1, l2, linf) = discrete_norms(&[3.0, -4.0], 1.0);
        assert_eq!((l1, l2, linf), (7.0, 5.0, 4.0));
    }

    #[test]
    fn riemann_sum_converges() {
        let l1 = |n: usize| {
            let h = std::f64::consts::PI / n as f64;
            let u: Vec<f64> = (0..n).map(|m| (m as f64 * h).sin()).collect();
            discrete_norms(&u, h).0
        };
        let e1 = (l1(100) - 2.0).abs();
        let e2 = (l1(200) - 2.0).abs();
        assert!(e1 < 1e-3 && e2 < e1);
    }

    #[test]
    fn steps() {
        assert_eq!(max_step(&[0.3; 6]), 0.0);
        assert_eq!(max_step(&[0.0, 0.0, 1.0, 1.0]), 1.0);
        assert_eq!(max_step(&[1.0, 0.0, -1.0]), 1.0);
        assert_eq!(max_step(&[]), 0.0);
    }

    #[test]
    fn table_orders_rows() {
        let e = |case_no, method, density| DensityEntry { case_no, method, density };
        let rows = comparison_table(&[
            e(2, Method::Clot, 0.3),
            e(1, Method::En, 0.2),
            e(2, Method::Lasso, 0.1),
        ]);
        assert_eq!(rows, vec![(1, [None, Some(0.2), None]), (2, [Some(0.1), None, Some(0.3)])]);
        let text = format_comparison(&rows);
        assert!(text.lines().nth(1).unwrap().contains("0.2000"));
    }
}
