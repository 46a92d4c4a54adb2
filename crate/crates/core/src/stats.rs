//! Summary statistics and the goodness-of-fit tests used by the test suites.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Upper tail probability of a chi-square statistic.
pub fn chi2_sf(stat: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|c| c.sf(stat)).unwrap_or(f64::NAN)
}

/// Pearson goodness of fit of observed counts against expected counts.
/// Adjacent cells are pooled until each expected count reaches `min_expected`.
/// Returns (statistic, degrees of freedom, p-value).
pub fn chi2_gof(observed: &[f64], expected: &[f64], min_expected: f64) -> (f64, usize, f64) {
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (&oi, &ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    let stat: f64 = cells.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = cells.len().saturating_sub(1).max(1);
    (stat, dof, chi2_sf(stat, dof))
}

/// Kolmogorov distribution tail Q(λ) = 2 Σ (−1)^{j−1} exp(−2 j² λ²).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-16 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
/// Returns (D statistic, p-value).
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] <= t {
            i += 1;
        }
        while j < m && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let s = ne.sqrt();
    (d, kolmogorov_q((s + 0.12 + 0.11 / s) * d))
}

/// Poisson probability mass function.
pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    (k as f64 * mean.ln() - mean - statrs::function::gamma::ln_gamma(k as f64 + 1.0)).exp()
}

/// Effective sample size of a set of log-weights.
pub fn ess_from_log_weights(lw: &[f64]) -> f64 {
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return 0.0;
    }
    let w: Vec<f64> = lw.iter().map(|l| (l - mx).exp()).collect();
    let s: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    s * s / s2
}

/// log of the mean of exp(lw), computed stably.
pub fn log_mean_exp(lw: &[f64]) -> f64 {
    let mx = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return f64::NEG_INFINITY;
    }
    let s: f64 = lw.iter().map(|l| (l - mx).exp()).sum();
    mx + (s / lw.len() as f64).ln()
}

/// Least-squares slope of y against x.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kolmogorov_known_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098 from standard tables
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.628) - 0.0100).abs() < 5e-4);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (d, p) = ks_two_sample(&a, &a);
        assert_eq!(d, 0.0);
        assert!(p > 0.99);
        let b: Vec<f64> = (0..100).map(|i| i as f64 + 60.0).collect();
        assert!(ks_two_sample(&a, &b).1 < 1e-6);
    }

    #[test]
    fn chi2_tail() {
        // 95% quantile of chi2(3) is 7.815
        assert!((chi2_sf(7.815, 3) - 0.05).abs() < 1e-3);
        let (_, dof, p) = chi2_gof(&[10.0, 10.0, 10.0], &[10.0, 10.0, 10.0], 5.0);
        assert_eq!(dof, 2);
        assert!((p - 1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_sums_to_one() {
        let s: f64 = (0..60).map(|k| poisson_pmf(k, 2.0)).sum();
        assert!((s - 1.0).abs() < 1e-12);
        assert!((poisson_pmf(0, 2.0) - (-2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn weights() {
        assert!((ess_from_log_weights(&[0.0; 10]) - 10.0).abs() < 1e-12);
        assert!((log_mean_exp(&[0.0, 2f64.ln()]) - 1.5f64.ln()).abs() < 1e-14);
    }
}
