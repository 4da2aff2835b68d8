//! Graphex triples `(I, S, W)`, the built-in families, and the marginal.

mod finiteness;
mod spec;

pub use finiteness::{check_local_finiteness, Condition, ConditionResult, FinitenessReport, ProbeConfig, Verdict};
pub use spec::{build, Exprs, Family, GraphexSpec, Params, Rate};

use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::expr::{EvalError, Expr, ParseError};
use crate::quadrature::{self, exp_integral_e1, QuadError};

/// Relative tolerance for marginal and tail quadrature.
pub const MARGINAL_REL_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphexError {
    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("missing expression {0} required by family {1}")]
    MissingExpr(&'static str, &'static str),
    #[error("expression {field}: {source}")]
    Parse {
        field: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("{what} evaluates to {value} at ({x}, {y}), outside {range}")]
    OutOfRange {
        what: &'static str,
        x: f64,
        y: f64,
        value: f64,
        range: &'static str,
    },
    #[error("{what} fails to evaluate at ({x}, {y}): {source}")]
    Eval {
        what: &'static str,
        x: f64,
        y: f64,
        #[source]
        source: EvalError,
    },
    #[error("kernel is not symmetric: W({x}, {y}) = {a} but W({y}, {x}) = {b}")]
    Asymmetric { x: f64, y: f64, a: f64, b: f64 },
    #[error("graphon grid is not symmetric at ({i}, {j})")]
    AsymmetricGrid { i: usize, j: usize },
    #[error("{what} did not converge (estimate {value}, error estimate {error_estimate})")]
    NoConvergence {
        what: &'static str,
        value: f64,
        error_estimate: f64,
    },
    #[error("{what} diverges")]
    Divergent { what: &'static str },
    #[error("quadrature failed for {what}: {source}")]
    Quadrature {
        what: &'static str,
        #[source]
        source: QuadError,
    },
    #[error("malformed graphex spec: {0}")]
    Json(String),
}

/// Declared support of `W`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Bounded(f64),
    Unbounded,
}

impl Support {
    pub fn bound(self) -> Option<f64> {
        match self {
            Support::Bounded(c) => Some(c),
            Support::Unbounded => None,
        }
    }
}

/// A nonnegative function of one variable with whatever closed forms are known.
#[derive(Debug, Clone)]
pub enum Profile {
    /// `a (x+1)^-2`
    InvSquare { a: f64 },
    /// `e^-x`
    Exp,
    Expr(Arc<Expr>),
}

impl Profile {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::InvSquare { a } => {
                let t = x + 1.0;
                a / (t * t)
            }
            Profile::Exp => (-x).exp(),
            Profile::Expr(e) => e.eval(x, None).unwrap_or(f64::NAN),
        }
    }

    fn try_eval(&self, x: f64, what: &'static str) -> Result<f64, GraphexError> {
        match self {
            Profile::Expr(e) => e.eval(x, None).map_err(|source| GraphexError::Eval {
                what,
                x,
                y: f64::NAN,
                source,
            }),
            _ => Ok(self.eval(x)),
        }
    }

    pub fn is_analytic(&self) -> bool {
        !matches!(self, Profile::Expr(_))
    }

    /// Closed-form `∫_x^∞`.
    pub fn analytic_tail(&self, x: f64) -> Option<f64> {
        match self {
            Profile::InvSquare { a } => Some(a / (x + 1.0)),
            Profile::Exp => Some((-x).exp()),
            Profile::Expr(_) => None,
        }
    }

    /// Solves `analytic_tail(x) = q` for `x`.
    pub fn analytic_tail_inverse(&self, q: f64) -> Option<f64> {
        match self {
            Profile::InvSquare { a } => Some((a / q - 1.0).max(0.0)),
            Profile::Exp => Some((-q.ln()).max(0.0)),
            Profile::Expr(_) => None,
        }
    }

    /// Closed-form `∫_x^∞ f²`.
    fn analytic_square_tail(&self, x: f64) -> Option<f64> {
        match self {
            Profile::InvSquare { a } => Some(a * a / (3.0 * (x + 1.0).powi(3))),
            Profile::Exp => Some(0.5 * (-2.0 * x).exp()),
            Profile::Expr(_) => None,
        }
    }

    /// `∫_x^∞ f`, by quadrature when no closed form exists.
    pub fn tail(&self, x: f64, what: &'static str) -> Result<f64, GraphexError> {
        if let Some(t) = self.analytic_tail(x) {
            return Ok(t);
        }
        integrate_tail(|t| self.eval(t), x, what)
    }
}

fn integrate_tail(f: impl Fn(f64) -> f64, x: f64, what: &'static str) -> Result<f64, GraphexError> {
    let r = quadrature::integrate_from(f, x, MARGINAL_REL_TOL)
        .map_err(|source| GraphexError::Quadrature { what, source })?;
    checked(r, what)
}

fn checked(r: quadrature::IntegralResult, what: &'static str) -> Result<f64, GraphexError> {
    if r.diverging {
        return Err(GraphexError::Divergent { what });
    }
    if !r.converged {
        return Err(GraphexError::NoConvergence {
            what,
            value: r.value,
            error_estimate: r.error_estimate,
        });
    }
    Ok(r.value)
}

/// The kernel `W`, off the diagonal.
#[derive(Debug, Clone)]
pub enum Kernel {
    /// Piecewise-constant dilation of an `n × n` graphon grid onto `[0, c]²`.
    Block { c: f64, n: usize, cells: Vec<f64> },
    /// `f(x) f(y)`.
    Separable(Profile),
    /// `1 - exp(-2 g(x) g(y))`.
    CaronFox(Profile),
    Custom(Arc<Expr>),
}

#[derive(Debug, Clone)]
pub struct Meta {
    pub family: Family,
    pub support: Support,
    /// `μ_W` has a closed form.
    pub analytic_marginal: bool,
    /// `∥W∥₁`; analytic families fill it at build, others on first use.
    pub norm: OnceLock<Option<f64>>,
    pub norm_is_analytic: bool,
    /// `∫ W(x,x) dx` with the self-edge flag applied.
    pub diag_integral: Option<f64>,
    /// `∫ S`.
    pub star_integral: f64,
    /// `∫ f` for separable kernels.
    pub profile_mass: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Graphex {
    pub i: f64,
    pub star: Option<Profile>,
    pub kernel: Kernel,
    pub self_edges: bool,
    pub meta: Meta,
}

impl Graphex {
    #[inline]
    pub fn w(&self, x: f64, y: f64) -> f64 {
        if let Support::Bounded(c) = self.meta.support {
            if x > c || y > c {
                return 0.0;
            }
        }
        if x == y {
            return self.diag(x);
        }
        self.off_diag(x, y)
    }

    #[inline]
    fn off_diag(&self, x: f64, y: f64) -> f64 {
        match &self.kernel {
            Kernel::Block { c, n, cells } => match (cell(x, *c, *n), cell(y, *c, *n)) {
                (Some(i), Some(j)) => cells[i * n + j],
                _ => 0.0,
            },
            Kernel::Separable(f) => f.eval(x) * f.eval(y),
            Kernel::CaronFox(g) => -(-2.0 * g.eval(x) * g.eval(y)).exp_m1(),
            Kernel::Custom(e) => e.eval(x, Some(y)).unwrap_or(f64::NAN),
        }
    }

    /// `W(x, x)`, or 0 when self edges are disabled.
    #[inline]
    pub fn diag(&self, x: f64) -> f64 {
        if !self.self_edges || self.meta.support.bound().is_some_and(|c| x > c) {
            return 0.0;
        }
        match &self.kernel {
            Kernel::Block { c, n, cells } => match cell(x, *c, *n) {
                Some(i) => cells[i * n + i],
                None => 0.0,
            },
            Kernel::Separable(f) => {
                let v = f.eval(x);
                v * v
            }
            Kernel::CaronFox(g) => {
                let v = g.eval(x);
                -(-v * v).exp_m1()
            }
            Kernel::Custom(e) => e.eval(x, Some(x)).unwrap_or(f64::NAN),
        }
    }

    #[inline]
    pub fn star_rate(&self, x: f64) -> f64 {
        self.star.as_ref().map_or(0.0, |s| s.eval(x))
    }

    pub fn has_star(&self) -> bool {
        self.star.is_some()
    }

    /// True when `W` vanishes identically (as declared by the family).
    pub fn kernel_is_zero(&self) -> bool {
        match &self.kernel {
            Kernel::Block { cells, .. } => cells.iter().all(|&v| v == 0.0),
            _ => false,
        }
    }

    /// `f(x)` for a separable kernel, zero beyond the declared support.
    #[inline]
    pub fn separable_weight(&self, f: &Profile, x: f64) -> f64 {
        if self.meta.support.bound().is_some_and(|c| x > c) {
            return 0.0;
        }
        f.eval(x)
    }

    /// The profile `f` of a separable kernel.
    pub fn separable_profile(&self) -> Option<&Profile> {
        match &self.kernel {
            Kernel::Separable(f) => Some(f),
            _ => None,
        }
    }

    /// `μ_W(x) = ∫ W(x, y) dy`.
    pub fn marginal(&self, x: f64) -> Result<f64, GraphexError> {
        if !(x >= 0.0) {
            return Err(GraphexError::InvalidParameter {
                name: "x",
                reason: format!("marginal needs x >= 0, got {x}"),
            });
        }
        match &self.kernel {
            Kernel::Block { c, n, cells } => Ok(match cell(x, *c, *n) {
                Some(i) => {
                    let row: f64 = cells[i * n..(i + 1) * n].iter().sum();
                    row * c / *n as f64
                }
                None => 0.0,
            }),
            Kernel::Separable(f) => {
                let mass = self.meta.profile_mass.ok_or(GraphexError::Divergent { what: "∫f" })?;
                if let Support::Bounded(c) = self.meta.support {
                    if x > c {
                        return Ok(0.0);
                    }
                }
                Ok(f.try_eval(x, "f")? * mass)
            }
            Kernel::CaronFox(Profile::Exp) => Ok(ein(2.0 * (-x).exp())),
            Kernel::CaronFox(g) => {
                let gx = g.try_eval(x, "g")?;
                if gx == 0.0 {
                    return Ok(0.0);
                }
                self.numeric_row(x, |y| -(-2.0 * gx * g.eval(y)).exp_m1())
            }
            Kernel::Custom(e) => {
                let e = e.clone();
                self.numeric_row(x, move |y| e.eval(x, Some(y)).unwrap_or(f64::NAN))
            }
        }
    }

    fn numeric_row(&self, _x: f64, row: impl Fn(f64) -> f64) -> Result<f64, GraphexError> {
        let r = match self.meta.support {
            Support::Bounded(c) => quadrature::integrate(&row, 0.0, c, MARGINAL_REL_TOL),
            Support::Unbounded => quadrature::integrate_semiinf(&row, MARGINAL_REL_TOL, None),
        }
        .map_err(|source| GraphexError::Quadrature {
            what: "marginal",
            source,
        })?;
        checked(r, "marginal")
    }

    /// `∫_x^∞ μ_W`.
    pub fn marginal_tail(&self, x: f64) -> Result<f64, GraphexError> {
        if let Support::Bounded(c) = self.meta.support {
            if x >= c {
                return Ok(0.0);
            }
        }
        match &self.kernel {
            Kernel::Block { c, n, cells } => {
                let h = c / *n as f64;
                let mut total = 0.0;
                for i in 0..*n {
                    let lo = i as f64 * h;
                    let hi = lo + h;
                    let overlap = (hi - lo.max(x)).max(0.0);
                    if overlap > 0.0 {
                        let row: f64 = cells[i * n..(i + 1) * n].iter().sum();
                        total += row * h * overlap;
                    }
                }
                Ok(total)
            }
            Kernel::Separable(f) if f.is_analytic() => {
                let mass = self.meta.profile_mass.ok_or(GraphexError::Divergent { what: "∫f" })?;
                Ok(mass * f.tail(x, "tail of f")?)
            }
            Kernel::CaronFox(Profile::Exp) => {
                // ∫_x^∞ Ein(2e^-t) dt = ∫_0^{e^-x} Ein(2u)/u du
                let top = (-x).exp();
                let r = quadrature::integrate(|u| if u == 0.0 { 2.0 } else { ein(2.0 * u) / u }, 0.0, top, MARGINAL_REL_TOL)
                    .map_err(|source| GraphexError::Quadrature {
                        what: "marginal tail",
                        source,
                    })?;
                checked(r, "marginal tail")
            }
            _ => self.numeric_tail(x, |t| self.marginal(t).unwrap_or(f64::NAN), "marginal tail"),
        }
    }

    fn numeric_tail(&self, x: f64, f: impl Fn(f64) -> f64, what: &'static str) -> Result<f64, GraphexError> {
        match self.meta.support {
            Support::Bounded(c) => {
                let r = quadrature::integrate(f, x, c, MARGINAL_REL_TOL)
                    .map_err(|source| GraphexError::Quadrature { what, source })?;
                checked(r, what)
            }
            Support::Unbounded => integrate_tail(f, x, what),
        }
    }

    /// `∫_x^∞ W(t, t) dt` with the self-edge flag applied.
    pub fn diag_tail(&self, x: f64) -> Result<f64, GraphexError> {
        if !self.self_edges {
            return Ok(0.0);
        }
        if let Support::Bounded(c) = self.meta.support {
            if x >= c {
                return Ok(0.0);
            }
        }
        match &self.kernel {
            Kernel::Block { c, n, cells } => {
                let h = c / *n as f64;
                Ok((0..*n)
                    .map(|i| {
                        let lo = i as f64 * h;
                        cells[i * n + i] * (lo + h - lo.max(x)).max(0.0)
                    })
                    .sum())
            }
            Kernel::Separable(f) if f.is_analytic() => Ok(f.analytic_square_tail(x).unwrap_or(f64::NAN)),
            _ => self.numeric_tail(x, |t| self.diag(t), "diagonal tail"),
        }
    }

    /// `∫_x^∞ S`.
    pub fn star_tail(&self, x: f64) -> Result<f64, GraphexError> {
        match &self.star {
            None => Ok(0.0),
            Some(s) => s.tail(x, "star tail"),
        }
    }

    /// `∥W∥₁`, or an error when it is infinite or unknown.
    pub fn norm(&self) -> Result<f64, GraphexError> {
        self.meta
            .norm
            .get_or_init(|| spec::numeric_norm(self))
            .ok_or(GraphexError::Divergent { what: "∥W∥₁" })
    }

    /// Cells of the piecewise structure on `[0, c]`, used to split quadrature.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match (&self.kernel, self.meta.support) {
            (Kernel::Block { c, n, .. }, _) => (0..=*n).map(|i| c * i as f64 / *n as f64).collect(),
            (_, Support::Bounded(c)) => vec![0.0, c],
            _ => Vec::new(),
        }
    }
}

#[inline]
fn cell(x: f64, c: f64, n: usize) -> Option<usize> {
    if !(x >= 0.0) || x > c {
        return None;
    }
    Some(((x / c * n as f64) as usize).min(n - 1))
}

/// `Ein(z) = ∫_0^z (1 - e^-t)/t dt`.
pub fn ein(z: f64) -> f64 {
    if z == 0.0 {
        return 0.0;
    }
    if z <= 4.0 {
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..200 {
            term *= -z / n as f64;
            let add = -term / n as f64;
            sum += add;
            if add.abs() <= f64::EPSILON * sum.abs() {
                break;
            }
        }
        sum
    } else {
        const EULER: f64 = 0.577_215_664_901_532_9;
        EULER + z.ln() + exp_integral_e1(z).unwrap_or(0.0)
    }
}

/// Dilates a graphon grid onto `[0, c]²`.
pub fn dilate(grid: &[Vec<f64>], c: f64, self_edges: bool) -> Result<Graphex, GraphexError> {
    let spec = GraphexSpec {
        family: Family::GraphonDilation,
        params: Params {
            c: Some(c),
            grid: Some(grid.to_vec()),
            ..Params::default()
        },
        self_edges,
        ..GraphexSpec::default()
    };
    build(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, integrate_semiinf};

    fn family(f: Family) -> Graphex {
        build(&GraphexSpec {
            family: f,
            ..GraphexSpec::default()
        })
        .unwrap()
    }

    #[test]
    fn slow_decay_shape() {
        let g = family(Family::SlowDecay);
        assert_eq!(g.w(1.0, 1.0), 0.0);
        let want = (2.0f64).powi(-2) * (3.0f64).powi(-2) / 3.0;
        assert!((g.w(1.0, 2.0) - want).abs() < 1e-16);
        assert!((g.marginal(0.0).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.marginal_tail(9.0).unwrap() - 1.0 / 30.0).abs() < 1e-15);
    }

    #[test]
    fn unit_scale_slow_decay_matches_literal_kernel() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"slow-decay","params":{"scale":1}}"#).unwrap()).unwrap();
        for x in [0.0, 0.5, 3.0] {
            let q = integrate_semiinf(|y| g.off_diag(x, y), 1e-10, None).unwrap();
            assert!((q.value - (x + 1.0f64).powi(-2)).abs() < 1e-8);
        }
    }

    #[test]
    fn fast_decay_marginal_by_quadrature() {
        let g = family(Family::FastDecay);
        for x in [0.0, 1.0, 2.0] {
            let q = integrate_semiinf(|y| g.off_diag(x, y), 1e-10, None).unwrap();
            assert!((q.value - (-x).exp()).abs() < 1e-8, "{x}");
            assert!((g.marginal(x).unwrap() - (-x).exp()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_constant() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"constant","params":{"p":0}}"#).unwrap()).unwrap();
        assert!(g.kernel_is_zero());
        assert_eq!(g.marginal(0.3).unwrap(), 0.0);
        assert_eq!(g.norm().unwrap(), 0.0);
    }

    #[test]
    fn constant_outside_support() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"constant","params":{"p":0.5,"c":2}}"#).unwrap()).unwrap();
        assert_eq!(g.marginal(2.5).unwrap(), 0.0);
        assert_eq!(g.marginal(1.0).unwrap(), 1.0);
        assert_eq!(g.norm().unwrap(), 2.0);
    }

    #[test]
    fn dilation_examples() {
        let g = dilate(&[vec![0.3]], 1.0, false).unwrap();
        assert_eq!(g.norm().unwrap(), 0.3);
        assert_eq!(g.w(0.2, 0.9), 0.3);
        assert_eq!(g.w(0.2, 1.1), 0.0);
        let g = dilate(&[vec![0.0, 1.0], vec![1.0, 0.0]], 2.0, false).unwrap();
        assert_eq!(g.marginal(0.5).unwrap(), 1.0);
        assert!(dilate(&[vec![0.0, 1.0], vec![0.5, 0.0]], 2.0, false).is_err());
        assert!(dilate(&[vec![1.5]], 2.0, false).is_err());
        assert!(dilate(&[vec![0.5]], 0.0, false).is_err());
    }

    #[test]
    fn dilation_scaling_by_quadrature() {
        let grid = vec![
            vec![0.1, 0.7, 0.2],
            vec![0.7, 0.0, 0.9],
            vec![0.2, 0.9, 0.4],
        ];
        let base: f64 = grid.iter().flatten().sum::<f64>() / 9.0;
        for c in [0.5, 3.0] {
            let g = dilate(&grid, c, false).unwrap();
            // integrate each row cell exactly, then across cells
            let mut total = 0.0;
            for k in 0..3 {
                let lo = c * k as f64 / 3.0;
                let hi = c * (k + 1) as f64 / 3.0;
                total += integrate(|x| g.marginal(x).unwrap(), lo + 1e-12, hi - 1e-12, 1e-12).unwrap().value;
            }
            assert!((total - c * c * base).abs() < 1e-8 * c * c, "{total}");
            assert!((g.norm().unwrap() - c * c * base).abs() < 1e-12 * c * c);
        }
    }

    #[test]
    fn caron_fox_kernel() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"caron-fox","self_edges":true}"#).unwrap()).unwrap();
        let (x, y): (f64, f64) = (0.3, 1.7);
        let off = 1.0 - (-2.0 * (-x).exp() * (-y).exp()).exp();
        let on = 1.0 - (-(-x).exp() * (-x).exp()).exp();
        assert!((g.w(x, y) - off).abs() <= 4.0 * f64::EPSILON * off);
        assert!((g.w(x, x) - on).abs() <= 4.0 * f64::EPSILON * on);
        assert!((g.w(0.0, 1e-300) - 0.864_664_716_763_387_3).abs() < 1e-15);
        for x in [0.0, 0.4, 3.0] {
            let q = integrate_semiinf(|y| g.off_diag(x, y), 1e-10, None).unwrap();
            assert!((g.marginal(x).unwrap() - q.value).abs() < 1e-9 * q.value);
        }
    }

    #[test]
    fn custom_marginal_and_tail() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"custom","exprs":{"W":"exp(-x-y)"}}"#).unwrap()).unwrap();
        assert!((g.marginal(1.0).unwrap() - (-1f64).exp()).abs() < 1e-9);
        assert!((g.marginal_tail(2.0).unwrap() - (-2f64).exp()).abs() < 1e-8);
        assert!((g.norm().unwrap() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn nonintegrable_custom_kernel_has_no_norm() {
        let g = build(&GraphexSpec::from_json(r#"{"family":"custom","exprs":{"W":"le(x*y,1)"}}"#).unwrap()).unwrap();
        assert!(g.norm().is_err());
        assert!((g.marginal(2.0).unwrap() - 0.5).abs() < 1e-8);
    }

    #[test]
    fn ein_branches_agree() {
        let direct = |z: f64| integrate(|t| if t == 0.0 { 1.0 } else { -(-t).exp_m1() / t }, 0.0, z, 1e-13).unwrap().value;
        for z in [1e-6, 0.3, 2.0, 3.99, 4.01, 9.0] {
            assert!((ein(z) - direct(z)).abs() < 1e-12 * direct(z).max(1.0), "{z}");
        }
    }
}
