//! Declarative graphex descriptions and their JSON form.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Graphex, GraphexError, Kernel, Meta, Profile, Support, MARGINAL_REL_TOL};
use crate::expr::{self, Expr};
use crate::quadrature::{self, QuadOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    #[default]
    Constant,
    GraphonDilation,
    Separable,
    SlowDecay,
    FastDecay,
    CaronFox,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Constant => "constant",
            Family::GraphonDilation => "graphon-dilation",
            Family::Separable => "separable",
            Family::SlowDecay => "slow-decay",
            Family::FastDecay => "fast-decay",
            Family::CaronFox => "caron-fox",
            Family::Custom => "custom",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Dilation factor / support bound for graphon families.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    /// Multiplier of the slow-decay kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<Vec<f64>>>,
    /// Declared support bound for expression kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exprs {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    #[serde(rename = "S", default, skip_serializing_if = "Option::is_none")]
    pub s: Option<String>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<String>,
}

/// A nonnegative rate that may be infinite; JSON accepts a number or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Rate(pub f64);

impl Serialize for Rate {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for Rate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Rate(v)),
            Repr::Text(t) => match t.to_ascii_lowercase().as_str() {
                "inf" | "+inf" | "infinity" => Ok(Rate(f64::INFINITY)),
                _ => Err(serde::de::Error::custom(format!("expected a number or \"inf\", got {t:?}"))),
            },
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphexSpec {
    pub family: Family,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub exprs: Exprs,
    #[serde(rename = "I", default)]
    pub i: Rate,
    #[serde(default)]
    pub self_edges: bool,
}

impl GraphexSpec {
    pub fn from_json(text: &str) -> Result<Self, GraphexError> {
        serde_json::from_str(text).map_err(|e| GraphexError::Json(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }
}

fn parse_field(field: &'static str, text: &str) -> Result<Arc<Expr>, GraphexError> {
    expr::parse(text)
        .map(Arc::new)
        .map_err(|source| GraphexError::Parse { field, source })
}

fn invalid(name: &'static str, reason: impl Into<String>) -> GraphexError {
    GraphexError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

fn positive(name: &'static str, v: Option<f64>, default: Option<f64>) -> Result<f64, GraphexError> {
    let v = v.or(default).ok_or_else(|| invalid(name, "required"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(name, format!("must be positive and finite, got {v}")))
    }
}

fn unit_interval(name: &'static str, v: f64) -> Result<f64, GraphexError> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

fn probe_points(support: Support) -> Vec<f64> {
    let mut xs = vec![0.0, 1e-3, 0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 7.5, 10.0, 25.0, 100.0, 1e3];
    if let Support::Bounded(c) = support {
        xs.retain(|&x| x <= c);
        xs.extend((0..=10).map(|k| c * k as f64 / 10.0));
    }
    xs
}

fn probe_profile(what: &'static str, p: &Profile, support: Support, upper: Option<f64>) -> Result<(), GraphexError> {
    for x in probe_points(support) {
        let v = p.try_eval(x, what)?;
        let ok = v >= 0.0 && upper.map_or(v.is_finite(), |u| v <= u);
        if !ok {
            return Err(GraphexError::OutOfRange {
                what,
                x,
                y: f64::NAN,
                value: v,
                range: if upper.is_some() { "[0, 1]" } else { "[0, ∞)" },
            });
        }
    }
    Ok(())
}

fn probe_kernel(e: &Expr, support: Support) -> Result<(), GraphexError> {
    let xs = probe_points(support);
    for &x in &xs {
        for &y in &xs {
            let ev = |a: f64, b: f64| {
                e.eval(a, Some(b)).map_err(|source| GraphexError::Eval {
                    what: "W",
                    x: a,
                    y: b,
                    source,
                })
            };
            let a = ev(x, y)?;
            if !(0.0..=1.0).contains(&a) {
                return Err(GraphexError::OutOfRange {
                    what: "W",
                    x,
                    y,
                    value: a,
                    range: "[0, 1]",
                });
            }
            let b = ev(y, x)?;
            if (a - b).abs() > 1e-12 {
                return Err(GraphexError::Asymmetric { x, y, a, b });
            }
        }
    }
    Ok(())
}

fn reject_unused(family: Family, exprs: &Exprs, allowed: &[&str]) -> Result<(), GraphexError> {
    let present = [("f", &exprs.f), ("g", &exprs.g), ("W", &exprs.w)];
    for (name, v) in present {
        if v.is_some() && !allowed.contains(&name) {
            return Err(invalid(
                "exprs",
                format!("expression {name} is not used by family {}", family.name()),
            ));
        }
    }
    Ok(())
}

fn support_of(params: &Params) -> Result<Support, GraphexError> {
    match params.support {
        None => Ok(Support::Unbounded),
        Some(c) => Ok(Support::Bounded(positive("support", Some(c), None)?)),
    }
}

/// Integral of a profile over `[0, ∞)` or the declared support; `None` if divergent.
fn profile_integral(f: impl Fn(f64) -> f64, support: Support) -> Option<f64> {
    let r = match support {
        Support::Bounded(c) => quadrature::integrate(f, 0.0, c, MARGINAL_REL_TOL),
        Support::Unbounded => quadrature::integrate_semiinf(f, MARGINAL_REL_TOL, None),
    }
    .ok()?;
    (r.converged && !r.diverging).then_some(r.value)
}

fn star_integral(star: &Option<Profile>) -> f64 {
    match star {
        None => 0.0,
        Some(s) => profile_integral(|x| s.eval(x), Support::Unbounded).unwrap_or(f64::INFINITY),
    }
}

pub fn build(spec: &GraphexSpec) -> Result<Graphex, GraphexError> {
    let i = spec.i.0;
    if !(i >= 0.0) {
        return Err(invalid("I", format!("must be nonnegative, got {i}")));
    }
    let star = match &spec.exprs.s {
        None => None,
        Some(t) => {
            let e = parse_field("S", t)?;
            if e.uses_y() {
                return Err(invalid("S", "star rate is a function of x only"));
            }
            let p = Profile::Expr(e);
            probe_profile("S", &p, Support::Unbounded, None)?;
            Some(p)
        }
    };
    let p = &spec.params;
    let family = spec.family;
    let self_edges = spec.self_edges;

    let (kernel, support, analytic_marginal, norm, profile_mass) = match family {
        Family::Constant | Family::GraphonDilation => {
            reject_unused(family, &spec.exprs, &[])?;
            let c = positive("c", p.c, Some(1.0))?;
            let (n, cells) = if family == Family::Constant {
                if p.grid.is_some() {
                    return Err(invalid("grid", "not used by family constant"));
                }
                let v = p.p.ok_or_else(|| invalid("p", "required"))?;
                (1, vec![unit_interval("p", v)?])
            } else {
                let grid = p.grid.as_ref().ok_or_else(|| invalid("grid", "required"))?;
                let n = grid.len();
                if n == 0 || grid.iter().any(|row| row.len() != n) {
                    return Err(invalid("grid", "must be a nonempty square matrix"));
                }
                let mut cells = Vec::with_capacity(n * n);
                for row in grid {
                    for &v in row {
                        cells.push(unit_interval("grid", v)?);
                    }
                }
                for a in 0..n {
                    for b in 0..a {
                        if cells[a * n + b] != cells[b * n + a] {
                            return Err(GraphexError::AsymmetricGrid { i: a, j: b });
                        }
                    }
                }
                (n, cells)
            };
            let norm = c * c * cells.iter().sum::<f64>() / (n * n) as f64;
            (Kernel::Block { c, n, cells }, Support::Bounded(c), true, Some(norm), None)
        }
        Family::SlowDecay => {
            reject_unused(family, &spec.exprs, &[])?;
            let s = p.scale.unwrap_or(1.0 / 3.0);
            if !(s > 0.0 && s <= 1.0) {
                return Err(invalid("scale", format!("must lie in (0, 1], got {s}")));
            }
            let a = s.sqrt();
            (Kernel::Separable(Profile::InvSquare { a }), Support::Unbounded, true, Some(s), Some(a))
        }
        Family::FastDecay => {
            reject_unused(family, &spec.exprs, &[])?;
            (Kernel::Separable(Profile::Exp), Support::Unbounded, true, Some(1.0), Some(1.0))
        }
        Family::Separable => {
            reject_unused(family, &spec.exprs, &["f"])?;
            let text = spec.exprs.f.as_ref().ok_or(GraphexError::MissingExpr("f", "separable"))?;
            let e = parse_field("f", text)?;
            if e.uses_y() {
                return Err(invalid("f", "profile is a function of x only"));
            }
            let support = support_of(p)?;
            let f = Profile::Expr(e);
            probe_profile("f", &f, support, Some(1.0))?;
            let mass = profile_integral(|x| f.eval(x), support);
            (Kernel::Separable(f), support, false, mass.map(|m| m * m), mass)
        }
        Family::CaronFox => {
            reject_unused(family, &spec.exprs, &["g"])?;
            let support = support_of(p)?;
            let g = match &spec.exprs.g {
                None => Profile::Exp,
                Some(t) => {
                    let e = parse_field("g", t)?;
                    if e.uses_y() {
                        return Err(invalid("g", "g is a function of x only"));
                    }
                    Profile::Expr(e)
                }
            };
            probe_profile("g", &g, support, None)?;
            let analytic = matches!(g, Profile::Exp) && support == Support::Unbounded;
            (Kernel::CaronFox(g), support, analytic, None, None)
        }
        Family::Custom => {
            reject_unused(family, &spec.exprs, &["W"])?;
            let text = spec.exprs.w.as_ref().ok_or(GraphexError::MissingExpr("W", "custom"))?;
            let e = parse_field("W", text)?;
            let support = support_of(p)?;
            probe_kernel(&e, support)?;
            (Kernel::Custom(e), support, false, None, None)
        }
    };
    if family != Family::SlowDecay && p.scale.is_some() {
        return Err(invalid("scale", format!("not used by family {}", family.name())));
    }

    let norm_is_analytic = norm.is_some() && family != Family::Separable;
    let norm_cell = OnceLock::new();
    if let Some(v) = norm {
        let _ = norm_cell.set(Some(v));
    }
    let star_integral = star_integral(&star);
    let mut g = Graphex {
        i,
        star,
        kernel,
        self_edges,
        meta: Meta {
            family,
            support,
            analytic_marginal,
            norm: norm_cell,
            norm_is_analytic,
            diag_integral: None,
            star_integral,
            profile_mass,
        },
    };
    if family == Family::Separable && profile_mass.is_none() {
        let _ = g.meta.norm.set(None);
    }
    g.meta.diag_integral = diag_integral(&g);
    Ok(g)
}

fn diag_integral(g: &Graphex) -> Option<f64> {
    if !g.self_edges {
        return Some(0.0);
    }
    match &g.kernel {
        Kernel::Block { .. } => g.diag_tail(0.0).ok(),
        Kernel::Separable(f) if f.is_analytic() => f.analytic_square_tail(0.0),
        _ => profile_integral(|x| g.diag(x), g.meta.support),
    }
}

/// `∬ W` by nested quadrature with a capped evaluation budget.
pub(super) fn numeric_norm(g: &Graphex) -> Option<f64> {
    let opts = QuadOptions {
        rel_tol: 1e-7,
        max_evals: 4_000,
        ..QuadOptions::default()
    };
    let row = |x: f64| g.marginal(x).unwrap_or(f64::NAN);
    let r = match g.meta.support {
        Support::Bounded(c) => {
            let pieces = g.breakpoints();
            let mut total = 0.0;
            for w in pieces.windows(2) {
                let r = quadrature::integrate_vec(|x, out| out[0] = row(x), 1, w[0], w[1], opts).ok()?;
                if !r.converged {
                    return None;
                }
                total += r.values[0];
            }
            let _ = c;
            return Some(total);
        }
        Support::Unbounded => quadrature::integrate_semiinf_vec(|x, out| out[0] = row(x), 1, opts).ok()?,
    };
    (r.converged && !r.diverging).then_some(r.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let text = r#"{"family":"caron-fox","params":{"support":4},"exprs":{"g":"exp(-x)","S":"0.5*exp(-x)"},"I":0.2,"self_edges":true}"#;
        let spec = GraphexSpec::from_json(text).unwrap();
        assert_eq!(spec.family, Family::CaronFox);
        assert_eq!(spec.i, Rate(0.2));
        let back = GraphexSpec::from_json(&spec.to_json()).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn infinite_isolated_rate() {
        let spec = GraphexSpec::from_json(r#"{"family":"fast-decay","I":"inf"}"#).unwrap();
        assert!(spec.i.0.is_infinite());
        assert!(spec.to_json().contains("\"inf\""));
        assert!(build(&spec).is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        let bad = [
            r#"{"family":"constant","params":{"p":1.5}}"#,
            r#"{"family":"constant"}"#,
            r#"{"family":"constant","params":{"p":0.5,"c":-1}}"#,
            r#"{"family":"fast-decay","I":-1}"#,
            r#"{"family":"custom","exprs":{"W":"2*exp(-x-y)"}}"#,
            r#"{"family":"custom","exprs":{"W":"exp(-x)"}}"#,
            r#"{"family":"custom","exprs":{"W":"exp(-x-2*y)"}}"#,
            r#"{"family":"custom","exprs":{"W":"exp(-x-"}}"#,
            r#"{"family":"custom"}"#,
            r#"{"family":"separable","exprs":{"f":"x"}}"#,
            r#"{"family":"separable","exprs":{"f":"exp(-x)","W":"x"}}"#,
            r#"{"family":"slow-decay","params":{"scale":2}}"#,
            r#"{"family":"fast-decay","params":{"scale":0.5}}"#,
            r#"{"family":"graphon-dilation","params":{"grid":[[0.1,0.2],[0.3,0.4]]}}"#,
            r#"{"family":"graphon-dilation","params":{"grid":[[0.1,0.2]]}}"#,
            r#"{"family":"fast-decay","exprs":{"S":"-1"}}"#,
            r#"{"family":"warp"}"#,
            r#"{"family":"fast-decay","extra":1}"#,
        ];
        for text in bad {
            let r = GraphexSpec::from_json(text).and_then(|s| build(&s));
            assert!(r.is_err(), "{text} accepted");
        }
    }

    #[test]
    fn parse_errors_keep_offsets() {
        let spec = GraphexSpec::from_json(r#"{"family":"custom","exprs":{"W":"exp(-x-)"}}"#).unwrap();
        match build(&spec) {
            Err(GraphexError::Parse { field, source }) => {
                assert_eq!(field, "W");
                assert_eq!(source.offset(), 7);
            }
            other => panic!("{other:?}"),
        }
    }
}
