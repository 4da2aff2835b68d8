//! Exact sampler for `W = f(x) f(y)` with a nonincreasing, closed-form `f`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{poisson, LatentDraw, SampleError, SamplerConfig};
use crate::graphex::{Graphex, Profile};
use crate::rng::{stream, Component};

/// Offset to the next success in a run of Bernoulli(p) trials.
#[inline]
fn skip(rng: &mut ChaCha8Rng, p: f64) -> usize {
    if p >= 1.0 {
        return 0;
    }
    let r = 1.0 - rng.random::<f64>();
    let s = (r.ln() / (-p).ln_1p()).floor();
    if s >= usize::MAX as f64 / 4.0 {
        usize::MAX / 4
    } else {
        s as usize
    }
}

/// Visits every `l ≥ start` that succeeds with probability `a · w[l]`,
/// stopping early when `visit` returns `false`. Requires `w` nonincreasing.
fn successes(rng: &mut ChaCha8Rng, a: f64, w: &[f64], start: usize, mut visit: impl FnMut(usize) -> bool) {
    let n = w.len();
    let mut l = start;
    if l >= n {
        return;
    }
    let mut p = a * w[l];
    while l < n && p > 0.0 {
        l = l.saturating_add(skip(rng, p));
        if l >= n {
            break;
        }
        let q = a * w[l];
        if rng.random::<f64>() * p < q && !visit(l) {
            return;
        }
        p = q;
        l += 1;
    }
}

/// Core cutoff: smallest `x` with `½ν²(∫_x^∞ f)² + ν∫_x^∞ f² ≤ ε`.
fn core_cutoff(f: &Profile, nu: f64, eps: f64, self_edges: bool, cap: f64) -> f64 {
    let tail_sq = |x: f64| {
        if self_edges {
            // ∫_x^∞ f² ≤ f(x) ∫_x^∞ f for nonincreasing f
            f.eval(x) * f.analytic_tail(x).unwrap_or(f64::INFINITY)
        } else {
            0.0
        }
    };
    let budget = |x: f64| {
        let t = f.analytic_tail(x).unwrap_or(f64::INFINITY);
        0.5 * nu * nu * t * t + nu * tail_sq(x)
    };
    if budget(0.0) <= eps {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while budget(hi) > eps && hi < cap {
        lo = hi;
        hi *= 2.0;
    }
    if hi >= cap {
        return cap;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if budget(mid) > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    hi.min(cap)
}

pub(super) fn draw(g: &Graphex, cfg: &SamplerConfig, theta_max: f64) -> Result<LatentDraw, SampleError> {
    let f = g.separable_profile().expect("separable kernel");
    let nu = cfg.nu;
    let cutoff = core_cutoff(f, nu, cfg.epsilon, g.self_edges, theta_max);

    // Core points in increasing ϑ, i.e. nonincreasing f.
    let mut rng = stream(cfg.seed, cfg.replicate, Component::Latent);
    let mut points = Vec::with_capacity((nu * cutoff * 1.05) as usize + 16);
    let mut x = 0.0;
    loop {
        x += -(1.0 - rng.random::<f64>()).ln() / nu;
        if x > cutoff {
            break;
        }
        points.push(x);
    }
    let mut weights: Vec<f64> = points.iter().map(|&t| f.eval(t)).collect();

    let mut planted_at = Vec::with_capacity(cfg.planted.len());
    for &lambda in &cfg.planted {
        let w = f.eval(lambda);
        let pos = weights.partition_point(|&v| v >= w);
        weights.insert(pos, w);
        points.insert(pos, lambda);
        for p in planted_at.iter_mut() {
            if *p >= pos {
                *p += 1;
            }
        }
        planted_at.push(pos);
    }
    if let Some(&w) = weights.iter().find(|w| !(**w >= 0.0 && **w <= 1.0)) {
        return Err(SampleError::KernelValue { x: f64::NAN, y: f64::NAN, value: w });
    }

    let n = points.len();
    let mut edges = Vec::new();
    let mut rng = stream(cfg.seed, cfg.replicate, Component::Pairs);
    for u in 0..n {
        let wu = weights[u];
        if g.self_edges && rng.random::<f64>() < wu * wu {
            edges.push((u, u));
        }
        if wu == 0.0 {
            continue;
        }
        successes(&mut rng, wu, &weights, u + 1, |v| {
            edges.push((u, v));
            true
        });
    }

    // Tail points in (cutoff, ϑ_max] that attach to the core.
    let mut omitted = 0.0;
    if theta_max > cutoff && n > 0 {
        let t_lo = f.analytic_tail(cutoff).unwrap_or(0.0);
        let t_hi = f.analytic_tail(theta_max).unwrap_or(0.0);
        let mass = (t_lo - t_hi).max(0.0);
        omitted = 0.5 * nu * nu * mass * mass;
        let mut cum = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            cum.push(acc);
        }
        let total = acc;
        let mut rng = stream(cfg.seed, cfg.replicate, Component::Tail);
        let k = poisson(&mut rng, nu * total * mass);
        for _ in 0..k {
            let q = t_hi + rng.random::<f64>() * mass;
            let theta = f
                .analytic_tail_inverse(q)
                .unwrap_or(cutoff)
                .clamp(cutoff, theta_max);
            let a = f.eval(theta);
            let target = rng.random::<f64>() * total;
            let head = cum.partition_point(|&c| c < target).min(n - 1);
            // Thin to the event that `head` is the first core neighbour.
            let mut earlier = false;
            successes(&mut rng, a, &weights[..head], 0, |_| {
                earlier = true;
                false
            });
            if earlier {
                continue;
            }
            let t = points.len();
            points.push(theta);
            edges.push((head, t));
            successes(&mut rng, a, &weights, head + 1, |v| {
                edges.push((v, t));
                true
            });
            if g.self_edges && rng.random::<f64>() < a * a {
                edges.push((t, t));
            }
        }
        if g.self_edges {
            omitted += nu * f.eval(cutoff) * t_lo;
        }
    }

    Ok(LatentDraw {
        points,
        w_edges: edges,
        planted: planted_at,
        core_cutoff: Some(cutoff),
        omitted,
    })
}
