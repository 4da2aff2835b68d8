//! Special functions used by the closed forms and by the Poisson weights.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("{name}: argument out of domain (a = {a}, x = {x})")]
    Domain { name: &'static str, a: f64, x: f64 },
    #[error("{name}: no convergence after {iters} iterations")]
    NoConvergence { name: &'static str, iters: usize },
}

const MAX_ITER: usize = 10_000;
const TINY: f64 = 1e-300;

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

/// `ln Γ(x)` for `x > 0`.
pub fn log_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

fn gamma_series(a: f64, x: f64) -> Result<f64, SpecialError> {
    // Σ x^n / (a (a+1) ... (a+n)), scaled by exp(-x + a ln x - lnΓ(a)).
    let mut term = 1.0 / a;
    let mut sum = term;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * f64::EPSILON {
            return Ok(sum.ln() - x + a * x.ln() - log_gamma(a));
        }
    }
    Err(SpecialError::NoConvergence {
        name: "gamma_series",
        iters: MAX_ITER,
    })
}

fn gamma_cf(a: f64, x: f64) -> Result<f64, SpecialError> {
    // Modified Lentz evaluation of the continued fraction for Q(a, x).
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < f64::EPSILON {
            return Ok(h.ln() - x + a * x.ln() - log_gamma(a));
        }
    }
    Err(SpecialError::NoConvergence {
        name: "gamma_cf",
        iters: MAX_ITER,
    })
}

fn check_ax(name: &'static str, a: f64, x: f64) -> Result<(), SpecialError> {
    if a > 0.0 && x >= 0.0 && a.is_finite() && !x.is_nan() {
        Ok(())
    } else {
        Err(SpecialError::Domain { name, a, x })
    }
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn lower_gamma_regularized(a: f64, x: f64) -> Result<f64, SpecialError> {
    check_ax("P", a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(gamma_series(a, x)?.exp())
    } else {
        Ok(-gamma_cf(a, x)?.exp_m1())
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 - P(a, x)`.
pub fn upper_gamma_regularized(a: f64, x: f64) -> Result<f64, SpecialError> {
    check_ax("Q", a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        Ok(-gamma_series(a, x)?.exp_m1())
    } else {
        Ok(gamma_cf(a, x)?.exp())
    }
}

/// Exponential integral `E1(x) = Γ(0, x)` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64, SpecialError> {
    if x.is_nan() || x <= 0.0 {
        return Err(SpecialError::Domain {
            name: "E1",
            a: 0.0,
            x,
        });
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    const EULER: f64 = 0.577_215_664_901_532_9;
    if x <= 1.0 {
        // -γ - ln x - Σ (-x)^n / (n n!)
        let mut sum = 0.0;
        let mut term = 1.0;
        for n in 1..MAX_ITER {
            term *= -x / n as f64;
            let add = term / n as f64;
            sum += add;
            if add.abs() < f64::EPSILON * sum.abs().max(1e-300) {
                return Ok(-EULER - x.ln() - sum);
            }
        }
        Err(SpecialError::NoConvergence {
            name: "E1",
            iters: MAX_ITER,
        })
    } else {
        // Continued fraction (Lentz).
        let mut b = x + 1.0;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                return Ok(h * (-x).exp());
            }
        }
        Err(SpecialError::NoConvergence {
            name: "E1",
            iters: MAX_ITER,
        })
    }
}

/// Unregularized upper incomplete gamma `Γ(a, x)` for `a ≥ 0`.
pub fn upper_gamma(a: f64, x: f64) -> Result<f64, SpecialError> {
    if a == 0.0 {
        return exp_integral_e1(x);
    }
    check_ax("Γ(a,x)", a, x)?;
    if x == 0.0 {
        return Ok(log_gamma(a).exp());
    }
    if x >= a + 1.0 {
        return Ok(gamma_cf(a, x)?.exp() * log_gamma(a).exp());
    }
    Ok(upper_gamma_regularized(a, x)? * log_gamma(a).exp())
}

/// `ln P(Poisson(λ) = k)`; `-∞` when the mass is zero.
pub fn ln_poisson_pmf(lambda: f64, k: u64) -> f64 {
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let kf = k as f64;
    -lambda + kf * lambda.ln() - log_gamma(kf + 1.0)
}

/// `P(Poisson(λ) > k)`.
pub fn poisson_tail(lambda: f64, k: u64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    if k == 0 {
        return -(-lambda).exp_m1();
    }
    // P(X > k) = P(k + 1, λ); the arguments are always in domain here.
    lower_gamma_regularized(k as f64 + 1.0, lambda).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    #[test]
    fn basic_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!(close(log_gamma(5.0), 24f64.ln(), 1e-14));
        assert!(close(
            upper_gamma_regularized(1.0, 1.0).unwrap(),
            (-1f64).exp(),
            1e-14
        ));
        assert!(close(
            lower_gamma_regularized(1.0, 2.0).unwrap(),
            1.0 - (-2f64).exp(),
            1e-14
        ));
    }

    #[test]
    fn poisson_tail_values() {
        assert_eq!(poisson_tail(0.0, 3), 0.0);
        assert!(close(poisson_tail(1.0, 0), 1.0 - (-1f64).exp(), 1e-15));
        assert!(close(poisson_tail(2.0, 1), 1.0 - 3.0 * (-2f64).exp(), 1e-14));
        // direct sum oracle
        let lam: f64 = 7.3;
        for k in 0..30u64 {
            let mut cdf = 0.0;
            let mut p = (-lam).exp();
            for j in 0..=k {
                if j > 0 {
                    p *= lam / j as f64;
                }
                cdf += p;
            }
            assert!((poisson_tail(lam, k) - (1.0 - cdf)).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn poisson_tail_tiny_lambda_keeps_precision() {
        let t = poisson_tail(1e-12, 0);
        assert!(close(t, 1e-12, 1e-9));
        let t = poisson_tail(1e-6, 1);
        assert!(close(t, 0.5e-12, 1e-5));
    }

    #[test]
    fn pq_complement_and_monotone() {
        for &a in &[0.5, 1.0, 2.5, 10.0, 50.0] {
            let mut prev = 0.0;
            for i in 0..200 {
                let x = i as f64 * 0.5;
                let p = lower_gamma_regularized(a, x).unwrap();
                let q = upper_gamma_regularized(a, x).unwrap();
                assert!((p + q - 1.0).abs() < 1e-13, "a={a} x={x}");
                assert!(p >= prev - 1e-15);
                prev = p;
            }
        }
    }

    #[test]
    fn e1_values() {
        // E1(1) = 0.21938393439552027
        assert!(close(exp_integral_e1(1.0).unwrap(), 0.219_383_934_395_520_27, 1e-14));
        // E1(0.1) = 1.8229239584193906
        assert!(close(exp_integral_e1(0.1).unwrap(), 1.822_923_958_419_390_6, 1e-14));
        // E1(10) = 4.156968929685324e-6
        assert!(close(
            exp_integral_e1(10.0).unwrap() * 1e6,
            4.156_968_929_685_324,
            1e-13
        ));
        assert!(exp_integral_e1(0.0).is_err());
    }

    #[test]
    fn upper_gamma_matches_quadrature() {
        for &(a, x) in &[(0.5, 0.3), (1.5, 2.0), (3.0, 0.1), (0.0, 0.7)] {
            let q = crate::quadrature::integrate_from(
                |t| t.powf(a - 1.0) * (-t).exp(),
                x,
                1e-11,
            )
            .unwrap();
            let g = upper_gamma(a, x).unwrap();
            assert!(close(g, q.value, 1e-8), "a={a} x={x}: {g} vs {}", q.value);
        }
    }

    #[test]
    fn ln_pmf_sums_to_one() {
        let s: f64 = (0..200).map(|k| ln_poisson_pmf(12.5, k).exp()).sum();
        assert!((s - 1.0).abs() < 1e-13);
        assert_eq!(ln_poisson_pmf(0.0, 0), 0.0);
        assert_eq!(ln_poisson_pmf(0.0, 2), f64::NEG_INFINITY);
    }
}
