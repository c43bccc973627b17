//! Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let y = (-std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
        let s: f64 = (0..8).map(|k| y.powi((2 * k + 1) * (2 * k + 1))).sum();
        let cdf = (2.0 * std::f64::consts::PI).sqrt() / lambda * s;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut q = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        q += if k % 2 == 1 { term } else { -term };
        if term < 1e-17 {
            break;
        }
    }
    (2.0 * q).clamp(0.0, 1.0)
}

/// Largest ECDF gap over the pooled sample points.
pub fn ks_statistic(xs: &[f64], ys: &[f64]) -> f64 {
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    // Gaps are compared as integers |i·ny − j·nx| so equal gaps give bit-equal statistics.
    let (nx, ny) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut d = 0usize;
    while i < a.len() && j < b.len() {
        let t = if a[i].total_cmp(&b[j]).is_le() { a[i] } else { b[j] };
        while i < a.len() && a[i] == t {
            i += 1;
        }
        while j < b.len() && b[j] == t {
            j += 1;
        }
        d = d.max((i * ny).abs_diff(j * nx));
    }
    // Once one sample is exhausted the gap only shrinks toward 0.
    d as f64 / (nx * ny) as f64
}

/// KS statistic and asymptotic p-value `Q(√nₑ·D)` with effective size `nₑ = nx·ny/(nx+ny)`.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<KsResult> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Domain("KS test needs two non-empty samples".into()));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan()) {
        return Err(Error::Domain("KS test sample contains NaN".into()));
    }
    let statistic = ks_statistic(xs, ys);
    let ne = (xs.len() * ys.len()) as f64 / (xs.len() + ys.len()) as f64;
    let p_value = if statistic == 0.0 {
        1.0
    } else {
        kolmogorov_q(ne.sqrt() * statistic)
    };
    Ok(KsResult { statistic, p_value })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples() {
        let x = [0.3, 0.1, 0.7, 0.7];
        let r = ks_two_sample(&x, &x).unwrap();
        assert_eq!(
            r,
            KsResult {
                statistic: 0.0,
                p_value: 1.0
            }
        );
    }

    #[test]
    fn disjoint_samples() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.01).collect();
        let y: Vec<f64> = (0..20).map(|i| 1.0 + i as f64).collect();
        let r = ks_two_sample(&x, &y).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn q_is_continuous_across_branches() {
        let a = kolmogorov_q(1.18 - 1e-9);
        let b = kolmogorov_q(1.18 + 1e-9);
        assert!((a - b).abs() < 1e-7);
        // Known quantile: P(K > 1.358) ≈ 0.05.
        assert!((kolmogorov_q(1.358) - 0.05).abs() < 1e-3);
    }

    #[test]
    fn ties_across_samples() {
        let r = ks_two_sample(&[1.0, 2.0], &[1.0, 2.0, 2.0, 2.0]).unwrap();
        assert!((r.statistic - 0.25).abs() < 1e-12);
    }

    #[test]
    fn equal_gaps_are_bit_equal() {
        // 7/20 − 0/20 and 10/20 − 3/20 round differently in floating point.
        let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let shifted = |k: usize| -> Vec<f64> { (0..20).map(|i| (i + k) as f64 + 0.5).collect() };
        assert_eq!(ks_statistic(&x, &shifted(6)), 0.35);
        assert_eq!(
            ks_statistic(&x, &shifted(6)).to_bits(),
            ks_statistic(&shifted(6), &x).to_bits()
        );
    }

    #[test]
    fn empty_is_error() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }
}
