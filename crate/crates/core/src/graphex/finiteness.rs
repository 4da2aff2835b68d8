//! Numerical and analytic checks of the local-finiteness conditions.

use serde::Serialize;

use super::{Graphex, Kernel, Profile, Support};
use crate::quadrature::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    HoldsAnalytic,
    HoldsNumeric,
    Violated,
    Undecidable,
}

impl Verdict {
    pub fn holds(self) -> bool {
        matches!(self, Verdict::HoldsAnalytic | Verdict::HoldsNumeric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    /// `I < ∞`
    #[serde(rename = "i")]
    IsolatedRate,
    /// `∫S < ∞`
    #[serde(rename = "ii")]
    StarMass,
    /// `Λ{μ_W > 1} < ∞`
    #[serde(rename = "iii")]
    HeavyMarginalSet,
    /// `∬ W 1[μ_W(x) ≤ 1] 1[μ_W(y) ≤ 1] < ∞`
    #[serde(rename = "iv")]
    LightKernelMass,
    /// `∫ W(x,x) dx < ∞`
    #[serde(rename = "v")]
    DiagonalMass,
    /// `Λ{μ_W = ∞} = 0`
    #[serde(rename = "null-set")]
    InfiniteMarginalSet,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionResult {
    pub condition: Condition,
    pub verdict: Verdict,
    pub value: Option<f64>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinitenessReport {
    pub conditions: Vec<ConditionResult>,
}

impl FinitenessReport {
    pub fn get(&self, c: Condition) -> &ConditionResult {
        self.conditions
            .iter()
            .find(|r| r.condition == c)
            .expect("every condition is reported")
    }

    /// No condition is violated.
    pub fn none_violated(&self) -> bool {
        self.conditions.iter().all(|r| r.verdict != Verdict::Violated)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ProbeConfig {
    /// Largest probe point of the geometric grid.
    pub grid_max: f64,
    /// Probe points per doubling.
    pub per_octave: usize,
    pub rel_tol: f64,
    pub max_evals: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            grid_max: 1e6,
            per_octave: 4,
            rel_tol: 1e-6,
            max_evals: 20_000,
        }
    }
}

fn result(condition: Condition, verdict: Verdict, value: Option<f64>, note: impl Into<String>) -> ConditionResult {
    ConditionResult {
        condition,
        verdict,
        value,
        note: note.into(),
    }
}

fn numeric_verdict(r: Result<quadrature::IntegralResult, quadrature::QuadError>) -> (Verdict, Option<f64>, String) {
    match r {
        Ok(r) if r.converged && !r.diverging => (Verdict::HoldsNumeric, Some(r.value), format!("quadrature, error estimate {:.3e}", r.error_estimate)),
        Ok(r) if r.diverging => (Verdict::Violated, None, "successive shells stopped shrinking".to_string()),
        Ok(r) => (Verdict::Undecidable, Some(r.value), format!("quadrature did not converge, error estimate {:.3e}", r.error_estimate)),
        Err(e) => (Verdict::Undecidable, None, e.to_string()),
    }
}

/// Geometric probe grid `0, 2^-10, ..., grid_max`.
fn probe_grid(cfg: &ProbeConfig, support: Support) -> Vec<f64> {
    let mut xs = vec![0.0];
    let step = 2f64.powf(1.0 / cfg.per_octave as f64);
    let mut x = 2f64.powi(-10);
    let top = support.bound().unwrap_or(cfg.grid_max).min(cfg.grid_max);
    while x < top {
        xs.push(x);
        x *= step;
    }
    xs.push(top);
    xs
}

/// Returns the bisected boundary `x*` of `{μ > 1}` and a verdict for (iii).
fn heavy_set(g: &Graphex, cfg: &ProbeConfig) -> (Verdict, Option<f64>, String) {
    let mu = |x: f64| g.marginal(x).unwrap_or(f64::INFINITY);
    let xs = probe_grid(cfg, g.meta.support);
    let vals: Vec<f64> = xs.iter().map(|&x| mu(x)).collect();
    let Some(last) = vals.iter().rposition(|&v| v > 1.0) else {
        return (Verdict::HoldsNumeric, Some(0.0), "μ_W ≤ 1 on every probe point".into());
    };
    if last + 1 == xs.len() {
        if g.meta.support.bound().is_some() {
            let c = g.meta.support.bound().unwrap_or(0.0);
            return (Verdict::HoldsNumeric, Some(c), "set lies inside the declared support".into());
        }
        return (Verdict::Undecidable, None, format!("μ_W > 1 at the largest probe point {}", xs[last]));
    }
    let beyond = &vals[last + 1..];
    if beyond.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-9) + 1e-15) {
        return (Verdict::Undecidable, None, "μ_W is not eventually nonincreasing on the probe grid".into());
    }
    let (mut lo, mut hi) = (xs[last], xs[last + 1]);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mu(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (Verdict::HoldsNumeric, Some(hi), "bisection on an eventually nonincreasing μ_W; value bounds the measure".into())
}

/// Checks the five local-finiteness conditions and the null-set condition.
pub fn check_local_finiteness(g: &Graphex, cfg: &ProbeConfig) -> FinitenessReport {
    let opts = QuadOptions {
        rel_tol: cfg.rel_tol,
        max_evals: cfg.max_evals,
        ..QuadOptions::default()
    };
    let mut out = Vec::with_capacity(6);

    out.push(if g.i.is_finite() {
        result(Condition::IsolatedRate, Verdict::HoldsAnalytic, Some(g.i), "")
    } else {
        result(Condition::IsolatedRate, Verdict::Violated, Some(g.i), "I is infinite")
    });

    out.push(match &g.star {
        None => result(Condition::StarMass, Verdict::HoldsAnalytic, Some(0.0), "no star component"),
        Some(s) => {
            let (v, val, note) = numeric_verdict(quadrature::integrate_semiinf_vec(|x, o| o[0] = s.eval(x), 1, opts).map(|r| first(&r)));
            result(Condition::StarMass, v, val, note)
        }
    });

    let analytic_norm = g.meta.norm_is_analytic;
    let (iii, x_star) = if let Some(r) = analytic_heavy_set(g) {
        (r, None)
    } else {
        let (v, val, note) = heavy_set(g, cfg);
        (result(Condition::HeavyMarginalSet, v, val, note), val)
    };
    let iii_holds = iii.verdict.holds();
    out.push(iii);

    out.push(if analytic_norm {
        let n = g.norm().ok();
        result(Condition::LightKernelMass, Verdict::HoldsAnalytic, n, "bounded by ∥W∥₁")
    } else if !iii_holds {
        result(Condition::LightKernelMass, Verdict::Undecidable, None, "needs the boundary of {μ_W > 1}")
    } else {
        let a = x_star.unwrap_or(0.0);
        let row = |x: f64| {
            let inner = match g.meta.support {
                Support::Bounded(c) if a >= c => return 0.0,
                Support::Bounded(c) => quadrature::integrate_vec(|y, o| o[0] = g.w(x, y), 1, a, c, opts),
                Support::Unbounded => quadrature::integrate_semiinf_vec(|t, o| o[0] = g.w(x, a + t), 1, opts),
            };
            match inner {
                Ok(r) if r.converged && !r.diverging => r.values[0],
                _ => f64::NAN,
            }
        };
        let outer = match g.meta.support {
            Support::Bounded(c) if a >= c => Ok(quadrature::IntegralResult {
                value: 0.0,
                error_estimate: 0.0,
                converged: true,
                evaluations: 0,
                diverging: false,
            }),
            Support::Bounded(c) => quadrature::integrate_vec(|x, o| o[0] = row(x), 1, a, c, opts).map(|r| first(&r)),
            Support::Unbounded => quadrature::integrate_semiinf_vec(|t, o| o[0] = row(a + t), 1, opts).map(|r| first(&r)),
        };
        let (v, val, note) = numeric_verdict(outer);
        result(Condition::LightKernelMass, v, val, format!("integral over [{a}, ∞)²; {note}"))
    });

    out.push(if !g.self_edges {
        result(Condition::DiagonalMass, Verdict::HoldsAnalytic, Some(0.0), "self edges disabled")
    } else if let (Some(d), true) = (g.meta.diag_integral, diag_is_analytic(g)) {
        result(Condition::DiagonalMass, Verdict::HoldsAnalytic, Some(d), "")
    } else {
        let r = match g.meta.support {
            Support::Bounded(c) => quadrature::integrate_vec(|x, o| o[0] = g.diag(x), 1, 0.0, c, opts),
            Support::Unbounded => quadrature::integrate_semiinf_vec(|x, o| o[0] = g.diag(x), 1, opts),
        };
        let (v, val, note) = numeric_verdict(r.map(|r| first(&r)));
        result(Condition::DiagonalMass, v, val, note)
    });

    out.push(if g.meta.analytic_marginal {
        result(Condition::InfiniteMarginalSet, Verdict::HoldsAnalytic, Some(0.0), "closed-form μ_W is finite everywhere")
    } else {
        infinite_marginal_set(g, cfg)
    });

    FinitenessReport { conditions: out }
}

/// Probes `μ_W` for divergence. Divergence everywhere on the grid is taken
/// as a set of positive measure; isolated divergent points are inconclusive.
fn infinite_marginal_set(g: &Graphex, cfg: &ProbeConfig) -> ConditionResult {
    let c = Condition::InfiniteMarginalSet;
    let xs = probe_grid(cfg, g.meta.support);
    let infinite = xs.iter().filter(|&&x| !g.marginal(x).is_ok_and(f64::is_finite)).count();
    match infinite {
        0 => result(c, Verdict::HoldsNumeric, Some(0.0), "μ_W finite on every probe point"),
        n if n == xs.len() => result(c, Verdict::Violated, None, "μ_W diverges on every probe point"),
        n => result(c, Verdict::Undecidable, None, format!("μ_W diverges on {n} of {} probe points", xs.len())),
    }
}

fn first(r: &quadrature::VecIntegral) -> quadrature::IntegralResult {
    quadrature::IntegralResult {
        value: r.values[0],
        error_estimate: r.errors[0],
        converged: r.converged,
        evaluations: r.evaluations,
        diverging: r.diverging,
    }
}

fn diag_is_analytic(g: &Graphex) -> bool {
    match &g.kernel {
        Kernel::Block { .. } => true,
        Kernel::Separable(f) => f.is_analytic(),
        _ => false,
    }
}

fn analytic_heavy_set(g: &Graphex) -> Option<ConditionResult> {
    let c = Condition::HeavyMarginalSet;
    match &g.kernel {
        Kernel::Block { c: width, n, cells } => {
            let h = width / *n as f64;
            let measure: f64 = (0..*n)
                .filter(|&i| cells[i * n..(i + 1) * n].iter().sum::<f64>() * h > 1.0)
                .map(|_| h)
                .sum();
            Some(result(c, Verdict::HoldsAnalytic, Some(measure), "piecewise-constant marginal"))
        }
        // Both closed-form profiles peak at x = 0 with μ_W(0) ≤ 1.
        Kernel::Separable(Profile::InvSquare { .. } | Profile::Exp) => {
            Some(result(c, Verdict::HoldsAnalytic, Some(0.0), "μ_W ≤ 1 everywhere"))
        }
        _ => None,
    }
}
