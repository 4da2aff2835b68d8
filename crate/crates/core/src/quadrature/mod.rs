//! Adaptive Gauss–Kronrod integration on finite intervals and on `[0, ∞)`.
//!
//! The semi-infinite driver integrates `[0, A]` and then geometric shells
//! `[A, 2A]`, `[2A, 4A]`, ... until the remaining tail (from a caller hint,
//! or extrapolated from the ratio of successive shells) is below the
//! requested tolerance. Slowly decaying integrands fall back to the map
//! `x = A / (1 - t)` on the remaining tail.
//!
//! Integrands may be vector valued; all components share the same nodes.

pub mod special;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

pub use special::{
    erf, exp_integral_e1, ln_poisson_pmf, log_gamma, lower_gamma_regularized, poisson_tail,
    upper_gamma, upper_gamma_regularized, SpecialError,
};

/// Default relative tolerance for theory-engine integrals.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

const DEFAULT_MAX_EVALS: usize = 400_000;
const MAX_SHELLS: usize = 48;
const MIN_SHELLS: usize = 3;
const DIVERGENCE_HORIZON: f64 = 1_048_576.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("integrand returned non-finite value {value} at x = {x}")]
    NonFinite { x: f64, value: f64 },
    #[error("relative tolerance {0} outside (0, 1e-2]")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralResult {
    pub value: f64,
    pub error_estimate: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Set when successive shells stopped shrinking: the integral most
    /// likely does not exist.
    pub diverging: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VecIntegral {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub converged: bool,
    pub evaluations: usize,
    pub diverging: bool,
}

impl VecIntegral {
    fn component(&self, i: usize) -> IntegralResult {
        IntegralResult {
            value: self.values[i],
            error_estimate: self.errors[i],
            converged: self.converged,
            evaluations: self.evaluations,
            diverging: self.diverging,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub max_evals: usize,
    /// Initial finite piece `[0, first_cut]` before shells start.
    pub first_cut: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            max_evals: DEFAULT_MAX_EVALS,
            first_cut: 1.0,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }
}

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Scratch space and evaluation counter shared by one integration run.
struct Evaluator<'a> {
    f: &'a mut dyn FnMut(f64, &mut [f64]),
    dim: usize,
    evals: usize,
    // 21 node values per component, laid out node-major.
    nodes: Vec<f64>,
}

impl Evaluator<'_> {
    fn call(&mut self, x: f64, slot: usize) -> Result<(), QuadError> {
        let dim = self.dim;
        let out = &mut self.nodes[slot * dim..(slot + 1) * dim];
        (self.f)(x, out);
        self.evals += 1;
        if let Some(v) = out.iter().copied().find(|v| !v.is_finite()) {
            return Err(QuadError::NonFinite { x, value: v });
        }
        Ok(())
    }

    /// 21-point Kronrod rule with the embedded 10-point Gauss rule.
    fn gk21(&mut self, a: f64, b: f64) -> Result<Segment, QuadError> {
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        self.call(center, 0)?;
        for j in 0..10 {
            let dx = half * XGK[j];
            self.call(center - dx, 1 + 2 * j)?;
            self.call(center + dx, 2 + 2 * j)?;
        }
        let dim = self.dim;
        let mut value = vec![0.0; dim];
        let mut error = vec![0.0; dim];
        for c in 0..dim {
            let fc = self.nodes[c];
            let mut kron = fc * WGK[10];
            let mut gauss = 0.0;
            let mut resabs = fc.abs() * WGK[10];
            for j in 0..10 {
                let f1 = self.nodes[(1 + 2 * j) * dim + c];
                let f2 = self.nodes[(2 + 2 * j) * dim + c];
                kron += WGK[j] * (f1 + f2);
                resabs += WGK[j] * (f1.abs() + f2.abs());
                if j % 2 == 1 {
                    gauss += WG[j / 2] * (f1 + f2);
                }
            }
            let mean = kron * 0.5;
            let mut resasc = WGK[10] * (fc - mean).abs();
            for j in 0..10 {
                let f1 = self.nodes[(1 + 2 * j) * dim + c];
                let f2 = self.nodes[(2 + 2 * j) * dim + c];
                resasc += WGK[j] * ((f1 - mean).abs() + (f2 - mean).abs());
            }
            let scale = half.abs();
            resasc *= scale;
            resabs *= scale;
            let mut err = ((kron - gauss) * half).abs();
            if resasc != 0.0 && err != 0.0 {
                err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
            }
            if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
                err = err.max(50.0 * f64::EPSILON * resabs);
            }
            value[c] = kron * half;
            error[c] = err;
        }
        Ok(Segment { a, b, value, error })
    }
}

struct Segment {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: Vec<f64>,
}

struct Ranked {
    priority: f64,
    seg: Segment,
}

impl PartialEq for Ranked {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl Eq for Ranked {}
impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

/// Adaptive bisection on `[a, b]`; `reference` lets the caller fold in the
/// magnitude of an enclosing integral so tiny pieces are not over-resolved.
fn adaptive(
    ev: &mut Evaluator<'_>,
    a: f64,
    b: f64,
    rel_tol: f64,
    reference: &[f64],
    budget: usize,
) -> Result<(Vec<f64>, Vec<f64>, bool), QuadError> {
    let dim = ev.dim;
    let first = ev.gk21(a, b)?;
    let mut total = first.value.clone();
    let mut total_err = first.error.clone();
    let mut heap = BinaryHeap::new();
    heap.push(Ranked {
        priority: first.error.iter().cloned().fold(0.0, f64::max),
        seg: first,
    });
    let tol = |total: &[f64], c: usize| -> f64 {
        rel_tol * total[c].abs().max(reference[c].abs()) + f64::MIN_POSITIVE
    };
    loop {
        let done = (0..dim).all(|c| total_err[c] <= tol(&total, c));
        if done {
            return Ok((total, total_err, true));
        }
        if ev.evals >= budget {
            return Ok((total, total_err, false));
        }
        let Some(worst) = heap.pop() else {
            return Ok((total, total_err, false));
        };
        let seg = worst.seg;
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // Interval cannot be split further in floating point.
            return Ok((total, total_err, false));
        }
        let left = ev.gk21(seg.a, mid)?;
        let right = ev.gk21(mid, seg.b)?;
        for c in 0..dim {
            total[c] += left.value[c] + right.value[c] - seg.value[c];
            total_err[c] += left.error[c] + right.error[c] - seg.error[c];
        }
        for s in [left, right] {
            let priority = (0..dim)
                .map(|c| s.error[c] / tol(&total, c))
                .fold(0.0, f64::max);
            heap.push(Ranked { priority, seg: s });
        }
    }
}

fn check_tol(rel_tol: f64) -> Result<(), QuadError> {
    if rel_tol > 0.0 && rel_tol <= 1e-2 {
        Ok(())
    } else {
        Err(QuadError::BadTolerance(rel_tol))
    }
}

/// Integrates a vector-valued `f` over `[a, b]`.
pub fn integrate_vec(
    mut f: impl FnMut(f64, &mut [f64]),
    dim: usize,
    a: f64,
    b: f64,
    opts: QuadOptions,
) -> Result<VecIntegral, QuadError> {
    check_tol(opts.rel_tol)?;
    if a == b {
        return Ok(VecIntegral {
            values: vec![0.0; dim],
            errors: vec![0.0; dim],
            converged: true,
            evaluations: 0,
            diverging: false,
        });
    }
    let mut ev = Evaluator {
        f: &mut f,
        dim,
        evals: 0,
        nodes: vec![0.0; 21 * dim],
    };
    let zero = vec![0.0; dim];
    let (values, errors, converged) = adaptive(&mut ev, a, b, opts.rel_tol, &zero, opts.max_evals)?;
    Ok(VecIntegral {
        values,
        errors,
        converged,
        evaluations: ev.evals,
        diverging: false,
    })
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
) -> Result<IntegralResult, QuadError> {
    let r = integrate_vec(|x, out| out[0] = f(x), 1, a, b, QuadOptions::with_rel_tol(rel_tol))?;
    Ok(r.component(0))
}

/// Integrates `f` over `[0, ∞)`.
///
/// `tail_hint(x)`, when supplied, must bound `|∫_x^∞ f|`; it replaces the
/// shell-ratio extrapolation in the stopping rule.
pub fn integrate_semiinf(
    mut f: impl FnMut(f64) -> f64,
    rel_tol: f64,
    tail_hint: Option<&dyn Fn(f64) -> f64>,
) -> Result<IntegralResult, QuadError> {
    let hint = tail_hint.map(|h| move |x: f64, out: &mut [f64]| out[0] = h(x));
    let r = semiinf_impl(
        &mut |x, out: &mut [f64]| out[0] = f(x),
        1,
        QuadOptions::with_rel_tol(rel_tol),
        hint.as_ref().map(|h| h as &dyn Fn(f64, &mut [f64])),
    )?;
    Ok(r.component(0))
}

/// Vector-valued version of [`integrate_semiinf`] without a tail hint.
pub fn integrate_semiinf_vec(
    mut f: impl FnMut(f64, &mut [f64]),
    dim: usize,
    opts: QuadOptions,
) -> Result<VecIntegral, QuadError> {
    semiinf_impl(&mut f, dim, opts, None)
}

/// Scalar semi-infinite integral with explicit options.
pub fn integrate_semiinf_opts(mut f: impl FnMut(f64) -> f64, opts: QuadOptions) -> Result<IntegralResult, QuadError> {
    let r = semiinf_impl(&mut |x, out: &mut [f64]| out[0] = f(x), 1, opts, None)?;
    Ok(r.component(0))
}

/// Integrates over `[a, ∞)` by shifting the argument.
pub fn integrate_from(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    rel_tol: f64,
) -> Result<IntegralResult, QuadError> {
    check_tol(rel_tol)?;
    let opts = QuadOptions {
        rel_tol,
        first_cut: a.abs().max(1.0),
        ..QuadOptions::default()
    };
    let r = semiinf_impl(&mut |t, out: &mut [f64]| out[0] = f(a + t), 1, opts, None)?;
    Ok(r.component(0))
}

fn semiinf_impl(
    f: &mut dyn FnMut(f64, &mut [f64]),
    dim: usize,
    opts: QuadOptions,
    tail_hint: Option<&dyn Fn(f64, &mut [f64])>,
) -> Result<VecIntegral, QuadError> {
    check_tol(opts.rel_tol)?;
    let rel_tol = opts.rel_tol;
    let mut ev = Evaluator {
        f,
        dim,
        evals: 0,
        nodes: vec![0.0; 21 * dim],
    };
    let zero = vec![0.0; dim];
    let mut a = opts.first_cut;
    let (mut total, mut total_err, mut ok) =
        adaptive(&mut ev, 0.0, a, rel_tol, &zero, opts.max_evals)?;

    let mut prev_shell: Option<Vec<f64>> = None;
    let mut growing_run = 0usize;
    let mut hint_buf = vec![0.0; dim];
    for shell_idx in 0..MAX_SHELLS {
        let b = 2.0 * a;
        let (shell, shell_err, shell_ok) = adaptive(&mut ev, a, b, rel_tol, &total, opts.max_evals)?;
        ok &= shell_ok;
        for c in 0..dim {
            total[c] += shell[c];
            total_err[c] += shell_err[c];
        }
        a = b;

        if let Some(h) = tail_hint {
            h(a, &mut hint_buf);
            let done = (0..dim).all(|c| hint_buf[c].abs() <= rel_tol * total[c].abs());
            if done {
                for c in 0..dim {
                    total_err[c] += hint_buf[c].abs();
                }
                return Ok(VecIntegral {
                    values: total,
                    errors: total_err,
                    converged: ok,
                    evaluations: ev.evals,
                    diverging: false,
                });
            }
            prev_shell = Some(shell);
            continue;
        }

        if let Some(prev) = &prev_shell {
            let mut done = shell_idx + 1 >= MIN_SHELLS;
            let mut tails = vec![0.0; dim];
            let mut any_growing = false;
            for c in 0..dim {
                let s = shell[c].abs();
                let p = prev[c].abs();
                if s == 0.0 {
                    continue;
                }
                if p == 0.0 || s >= p {
                    any_growing = true;
                    done = false;
                    continue;
                }
                let r = s / p;
                let tail = s * r / (1.0 - r);
                tails[c] = tail.copysign(shell[c]);
                if tail > rel_tol * total[c].abs() {
                    done = false;
                }
            }
            growing_run = if any_growing { growing_run + 1 } else { 0 };
            if done {
                for c in 0..dim {
                    total[c] += tails[c];
                    total_err[c] += 0.5 * tails[c].abs();
                }
                return Ok(VecIntegral {
                    values: total,
                    errors: total_err,
                    converged: ok,
                    evaluations: ev.evals,
                    diverging: false,
                });
            }
            // Shells that keep growing far from the origin mean the integral
            // does not exist.
            if growing_run >= 8 && a >= DIVERGENCE_HORIZON * opts.first_cut {
                return Ok(VecIntegral {
                    values: total,
                    errors: total_err,
                    converged: false,
                    evaluations: ev.evals,
                    diverging: true,
                });
            }
        }
        prev_shell = Some(shell);
        if ev.evals >= opts.max_evals {
            break;
        }
    }

    // Slow decay: map the remaining tail [a, ∞) onto [0, 1).
    let start = a;
    let f_inner = &mut ev.f;
    let mut mapped = |t: f64, out: &mut [f64]| {
        let one_minus = 1.0 - t;
        let x = start / one_minus;
        f_inner(x, out);
        let jac = start / (one_minus * one_minus);
        for v in out.iter_mut() {
            *v *= jac;
        }
    };
    let used = ev.evals;
    let mut tail_ev = Evaluator {
        f: &mut mapped,
        dim,
        evals: used,
        nodes: vec![0.0; 21 * dim],
    };
    let (tail, tail_err, tail_ok) = adaptive(
        &mut tail_ev,
        0.0,
        1.0,
        rel_tol,
        &total,
        opts.max_evals + used,
    )?;
    let evaluations = tail_ev.evals;
    let mut diverging = false;
    for c in 0..dim {
        total[c] += tail[c];
        total_err[c] += tail_err[c];
        if !tail_ok && tail_err[c] > total[c].abs() {
            diverging = true;
        }
    }
    Ok(VecIntegral {
        values: total,
        errors: total_err,
        converged: ok && tail_ok,
        evaluations,
        diverging,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_exponential() {
        let r = integrate_semiinf(|x| (-x).exp(), 1e-8, None).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn inverse_square() {
        let r = integrate_semiinf(|x| (x + 1.0).powi(-2), 1e-8, None).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 1e-8, "{r:?}");
        let r = integrate_semiinf(|x| (x + 1.0).powi(-2) / 3.0, 1e-8, None).unwrap();
        assert!((r.value - 1.0 / 3.0).abs() < 1e-8 / 3.0, "{r:?}");
    }

    #[test]
    fn tail_hint_is_used() {
        let hint = |x: f64| 1.0 / (x + 1.0);
        let r = integrate_semiinf(|x| (x + 1.0).powi(-2), 1e-8, Some(&hint)).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.0).abs() < 2e-8, "{r:?}");
    }

    #[test]
    fn heavy_tail_uses_map() {
        // ∫ (1+x)^{-1.5} = 2
        let r = integrate_semiinf(|x| (1.0 + x).powf(-1.5), 1e-8, None).unwrap();
        assert!((r.value - 2.0).abs() < 1e-6, "{r:?}");
    }

    #[test]
    fn compact_support_and_zero() {
        let r = integrate_semiinf(|x| if x <= 3.0 { 0.5 } else { 0.0 }, 1e-8, None).unwrap();
        assert!(r.converged);
        assert!((r.value - 1.5).abs() < 1e-8, "{r:?}");
        let r = integrate_semiinf(|_| 0.0, 1e-8, None).unwrap();
        assert!(r.converged);
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn divergent_integral_is_flagged() {
        let r = integrate_semiinf(|x| 1.0 / (1.0 + x).sqrt(), 1e-8, None).unwrap();
        assert!(!r.converged);
        let r = integrate_semiinf(|_| 1.0, 1e-8, None).unwrap();
        assert!(!r.converged);
        assert!(r.diverging);
    }

    #[test]
    fn non_finite_sample_is_an_error() {
        let e = integrate_semiinf(|x| if x > 0.5 { f64::NAN } else { 1.0 }, 1e-8, None);
        assert!(matches!(e, Err(QuadError::NonFinite { .. })));
    }

    #[test]
    fn bad_tolerance_rejected() {
        assert!(integrate_semiinf(|x| (-x).exp(), 0.5, None).is_err());
        assert!(integrate_semiinf(|x| (-x).exp(), 0.0, None).is_err());
    }

    #[test]
    fn finite_interval() {
        let r = integrate(|x| x.sin(), 0.0, std::f64::consts::PI, 1e-10).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
        let r = integrate(|x| x, 2.0, 2.0, 1e-10).unwrap();
        assert_eq!(r.value, 0.0);
    }

    #[test]
    fn vector_components_share_nodes() {
        let r = integrate_semiinf_vec(
            |x, out| {
                out[0] = (-x).exp();
                out[1] = x * (-x).exp();
                out[2] = 0.0;
            },
            3,
            QuadOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.values[0] - 1.0).abs() < 1e-8);
        assert!((r.values[1] - 1.0).abs() < 1e-8);
        assert_eq!(r.values[2], 0.0);
    }

    #[test]
    fn shifted_start() {
        let r = integrate_from(|x| (-x).exp(), 2.0, 1e-9).unwrap();
        assert!((r.value - (-2.0f64).exp()).abs() < 1e-10);
    }
}
