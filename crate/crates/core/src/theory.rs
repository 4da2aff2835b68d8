//! Expected edge, vertex and degree counts of ν-truncations, the limiting
//! degree-distribution ratio, and the dense/sparse classification.
//!
//! Every integrand is a function of `μ_W(x)`, `W(x,x)` and `S(x)` only, so a
//! single vector-valued quadrature serves all components of a query.
//! Poisson weights are evaluated in log space.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::graphex::{Graphex, GraphexError, Support};
use crate::quadrature::{self, ln_poisson_pmf, poisson_tail, QuadError, QuadOptions, VecIntegral};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("infinite expectation: {0}")]
    InfiniteExpectation(String),
    #[error("{what} did not converge (estimate {value}, error estimate {error_estimate})")]
    NoConvergence {
        what: String,
        value: f64,
        error_estimate: f64,
    },
    #[error("degenerate ratio: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Graphex(#[from] GraphexError),
    #[error(transparent)]
    Quadrature(#[from] QuadError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryResult {
    pub query: String,
    pub value: f64,
    pub components: BTreeMap<String, f64>,
    pub error_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Density {
    Dense,
    Sparse,
    Unknown,
}

fn check_nu(nu: f64) -> Result<(), TheoryError> {
    if nu >= 0.0 && nu.is_finite() {
        Ok(())
    } else {
        Err(TheoryError::InvalidQuery(format!("ν must be finite and nonnegative, got {nu}")))
    }
}

fn zero_result(query: String, names: &[&str]) -> TheoryResult {
    TheoryResult {
        query,
        value: 0.0,
        components: names.iter().map(|n| (n.to_string(), 0.0)).collect(),
        error_estimate: 0.0,
    }
}

fn finite(what: &str, v: f64) -> Result<f64, TheoryError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(TheoryError::InfiniteExpectation(format!("{what} is infinite")))
    }
}

/// Integrates `h(x, μ_W(x), W(x,x), S(x))` over the region that carries mass.
///
/// With bounded support the integral splits at the support's breakpoints;
/// when a star component is present `[c, ∞)` is added, where `μ_W = 0`.
fn integrate_over_x(
    g: &Graphex,
    dim: usize,
    rel_tol: f64,
    what: &str,
    h: impl Fn(f64, f64, f64, f64, &mut [f64]),
) -> Result<(Vec<f64>, Vec<f64>), TheoryError> {
    let failure: RefCell<Option<GraphexError>> = RefCell::new(None);
    let eval = |x: f64, out: &mut [f64]| match g.marginal(x) {
        Ok(mu) => h(x, mu, g.diag(x), g.star_rate(x), out),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            out.fill(f64::NAN);
        }
    };
    let opts = QuadOptions::with_rel_tol(rel_tol);
    let mut values = vec![0.0; dim];
    let mut errors = vec![0.0; dim];
    let mut absorb = |r: Result<VecIntegral, QuadError>| -> Result<(), TheoryError> {
        let r = match r {
            Ok(r) => r,
            Err(e) => {
                return Err(match failure.borrow_mut().take() {
                    Some(GraphexError::Divergent { what: w }) => TheoryError::InfiniteExpectation(format!("{w} diverges")),
                    Some(ge) => TheoryError::Graphex(ge),
                    None => TheoryError::Quadrature(e),
                })
            }
        };
        if r.diverging {
            return Err(TheoryError::InfiniteExpectation(format!("{what} integral diverges")));
        }
        if !r.converged {
            return Err(TheoryError::NoConvergence {
                what: what.to_string(),
                value: r.values.iter().sum(),
                error_estimate: r.errors.iter().sum(),
            });
        }
        for c in 0..dim {
            values[c] += r.values[c];
            errors[c] += r.errors[c];
        }
        Ok(())
    };
    match g.meta.support {
        Support::Bounded(c) => {
            for w in g.breakpoints().windows(2) {
                absorb(quadrature::integrate_vec(eval, dim, w[0], w[1], opts))?;
            }
            if g.has_star() {
                absorb(quadrature::integrate_semiinf_vec(|t, out| eval(c + t, out), dim, opts))?;
            }
        }
        Support::Unbounded => absorb(quadrature::integrate_semiinf_vec(eval, dim, opts))?,
    }
    Ok((values, errors))
}

/// `E[e_ν] = ½ν²∥W∥₁ + ν∫W(x,x)dx + ν²∫S + ν²I`.
pub fn expected_edges(g: &Graphex, nu: f64, rel_tol: f64) -> Result<TheoryResult, TheoryError> {
    check_nu(nu)?;
    let query = format!("expected_edges(nu={nu})");
    let names = ["w", "diagonal", "star", "isolated"];
    if nu == 0.0 {
        return Ok(zero_result(query, &names));
    }
    let norm = g
        .norm()
        .map_err(|_| TheoryError::InfiniteExpectation("∥W∥₁ is not finite".into()))?;
    let diag = g
        .meta
        .diag_integral
        .ok_or_else(|| TheoryError::InfiniteExpectation("∫W(x,x)dx is not finite".into()))?;
    let parts = [
        0.5 * nu * nu * norm,
        nu * diag,
        finite("∫S", nu * nu * g.meta.star_integral)?,
        finite("I", nu * nu * g.i)?,
    ];
    let value = parts.iter().sum();
    let exact = g.meta.norm_is_analytic;
    Ok(TheoryResult {
        query,
        value,
        components: names.iter().map(|s| s.to_string()).zip(parts).collect(),
        error_estimate: if exact { 0.0 } else { rel_tol * value },
    })
}

/// Expected number of visible vertices.
pub fn expected_vertices(g: &Graphex, nu: f64, rel_tol: f64) -> Result<TheoryResult, TheoryError> {
    check_nu(nu)?;
    let query = format!("expected_vertices(nu={nu})");
    let names = ["w", "diagonal", "star_centres", "star_leaves", "isolated"];
    if nu == 0.0 {
        return Ok(zero_result(query, &names));
    }
    let star = g.has_star();
    let (v, err) = integrate_over_x(g, 3, rel_tol, "vertex", |_, mu, w, s, out| {
        let m = nu * mu;
        let none = (-m).exp();
        out[0] = -(-m).exp_m1();
        out[1] = none * w;
        out[2] = if star { none * (1.0 - w) * -(-nu * s).exp_m1() } else { 0.0 };
    })?;
    let parts = [
        nu * v[0],
        nu * v[1],
        nu * v[2],
        finite("∫S", nu * nu * g.meta.star_integral)?,
        finite("I", 2.0 * nu * nu * g.i)?,
    ];
    Ok(TheoryResult {
        query,
        value: parts.iter().sum(),
        components: names.iter().map(|s| s.to_string()).zip(parts).collect(),
        error_estimate: nu * err.iter().sum::<f64>(),
    })
}

#[inline]
fn pmf(m: f64, k: u64) -> f64 {
    ln_poisson_pmf(m, k).exp()
}

/// Expected number of degree-`k` vertices for each `k` in `ks` (all ≥ 1),
/// sharing quadrature nodes across `k`.
pub fn expected_degree_counts(g: &Graphex, nu: f64, ks: &[u64], rel_tol: f64) -> Result<Vec<TheoryResult>, TheoryError> {
    check_nu(nu)?;
    if let Some(&k) = ks.iter().find(|&&k| k == 0) {
        return Err(TheoryError::InvalidQuery(format!("degree k must be at least 1, got {k}")));
    }
    let names = ["w", "diagonal", "star_leaves", "isolated"];
    if nu == 0.0 || ks.is_empty() {
        return Ok(ks
            .iter()
            .map(|k| zero_result(format!("expected_degree_k(nu={nu}, k={k})"), &names))
            .collect());
    }
    let dim = 2 * ks.len();
    let (v, err) = integrate_over_x(g, dim, rel_tol, "degree", |_, mu, w, s, out| {
        let m = nu * (mu + s);
        for (j, &k) in ks.iter().enumerate() {
            out[2 * j] = (1.0 - w) * pmf(m, k);
            out[2 * j + 1] = if k >= 2 { w * pmf(m, k - 2) } else { 0.0 };
        }
    })?;
    let leaves = finite("∫S", nu * nu * g.meta.star_integral)?;
    let iso = finite("I", 2.0 * nu * nu * g.i)?;
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let parts = [
                nu * v[2 * j],
                nu * v[2 * j + 1],
                if k == 1 { leaves } else { 0.0 },
                if k == 1 { iso } else { 0.0 },
            ];
            TheoryResult {
                query: format!("expected_degree_k(nu={nu}, k={k})"),
                value: parts.iter().sum(),
                components: names.iter().map(|s| s.to_string()).zip(parts).collect(),
                error_estimate: nu * (err[2 * j] + err[2 * j + 1]),
            }
        })
        .collect())
}

pub fn expected_degree_k(g: &Graphex, nu: f64, k: u64, rel_tol: f64) -> Result<TheoryResult, TheoryError> {
    Ok(expected_degree_counts(g, nu, &[k], rel_tol)?.remove(0))
}

/// `∫ P(Poi(νμ_W) > k) dx / ∫ (1 - e^{-νμ_W}) dx` for each `k`.
pub fn degree_ccdf_many(g: &Graphex, nu: f64, ks: &[u64], rel_tol: f64) -> Result<Vec<f64>, TheoryError> {
    check_nu(nu)?;
    let dim = ks.len() + 1;
    let (v, _) = integrate_over_x(g, dim, rel_tol, "degree tail", |_, mu, _, _, out| {
        let m = nu * mu;
        out[0] = -(-m).exp_m1();
        for (j, &k) in ks.iter().enumerate() {
            out[j + 1] = poisson_tail(m, k);
        }
    })?;
    if !(v[0] > 1e-300) {
        return Err(TheoryError::Degenerate(format!(
            "∫(1 - e^(-νμ)) = {} at ν = {nu}; no visible vertices",
            v[0]
        )));
    }
    Ok(ks
        .iter()
        .enumerate()
        .map(|(j, &k)| if k == 0 { 1.0 } else { (v[j + 1] / v[0]).clamp(0.0, 1.0) })
        .collect())
}

pub fn degree_ccdf(g: &Graphex, nu: f64, k: u64, rel_tol: f64) -> Result<f64, TheoryError> {
    Ok(degree_ccdf_many(g, nu, &[k], rel_tol)?[0])
}

/// Dense iff the declared support is bounded; sparse if `W` is integrable
/// with unbounded support.
pub fn classify_density(g: &Graphex) -> Density {
    match g.meta.support {
        Support::Bounded(_) => Density::Dense,
        Support::Unbounded if g.norm().is_ok() => Density::Sparse,
        Support::Unbounded => Density::Unknown,
    }
}
