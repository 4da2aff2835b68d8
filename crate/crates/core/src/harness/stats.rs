//! Summary statistics and goodness-of-fit tests used by the harness.

use serde::Serialize;

use crate::quadrature::{ln_poisson_pmf, poisson_tail, upper_gamma_regularized};

/// Pairwise summation; the result does not depend on how replicates were
/// scheduled, only on their order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sample mean and standard deviation (`n - 1` denominator).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let sq: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&sq) / (n - 1) as f64).sqrt())
}

/// `(mean - theory) / se`, with exact agreement at zero spread scoring 0.
pub fn z_score(mean: f64, theory: f64, se: f64) -> f64 {
    let diff = mean - theory;
    if se > 0.0 {
        diff / se
    } else if diff.abs() <= 1e-9 * theory.abs().max(1.0) {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (-1)^{j-1} e^{-2j²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    let mut prev = 0.0f64;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * lambda * lambda).exp();
        sum += sign * term;
        if term <= 1e-12 * sum.abs() || term <= 1e-300 || term == prev {
            break;
        }
        prev = term;
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return KsResult {
            statistic: 0.0,
            p_value: 1.0,
        };
    }
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0f64;
    while i < n && j < m {
        let x = a[i].min(b[j]);
        while i < n && a[i] <= x {
            i += 1;
        }
        while j < m && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let sq = ne.sqrt();
    KsResult {
        statistic: d,
        p_value: kolmogorov_q((sq + 0.12 + 0.11 / sq) * d),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// `(first k, observed, expected)` per bin; the last bin is open-ended.
    pub bins: Vec<(u64, f64, f64)>,
}

/// Chi-square goodness of fit of counts to `Poisson(mean)`, pooling
/// neighbouring values until every bin expects at least 5 observations.
pub fn chi_square_poisson(samples: &[u64], mean: f64) -> ChiSquareResult {
    let r = samples.len() as f64;
    let top = samples.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0.0; top as usize + 1];
    for &s in samples {
        observed[s as usize] += 1.0;
    }
    let obs = |k: u64| observed.get(k as usize).copied().unwrap_or(0.0);
    let obs_above = |k: u64| observed.iter().skip(k as usize + 1).sum::<f64>();

    let mut bins = Vec::new();
    let (mut start, mut e, mut o) = (0u64, 0.0, 0.0);
    let mut k = 0u64;
    loop {
        e += r * ln_poisson_pmf(mean, k).exp();
        o += obs(k);
        let rest = r * poisson_tail(mean, k);
        if rest < 5.0 || k > 10_000 {
            bins.push((start, o + obs_above(k), e + rest));
            break;
        }
        if e >= 5.0 {
            bins.push((start, o, e));
            start = k + 1;
            e = 0.0;
            o = 0.0;
        }
        k += 1;
    }
    // Fold an underfilled last bin into its neighbour.
    if bins.len() >= 2 && bins[bins.len() - 1].2 < 5.0 {
        let last = bins.pop().expect("nonempty");
        let prev = bins.last_mut().expect("nonempty");
        prev.1 += last.1;
        prev.2 += last.2;
    }
    let statistic: f64 = bins.iter().map(|&(_, o, e)| if e > 0.0 { (o - e) * (o - e) / e } else { 0.0 }).sum();
    let df = bins.len().saturating_sub(1);
    let p_value = if df == 0 {
        1.0
    } else {
        upper_gamma_regularized(df as f64 / 2.0, statistic / 2.0).unwrap_or(0.0)
    };
    ChiSquareResult {
        statistic,
        df,
        p_value,
        bins,
    }
}
