//! ν-truncated samples from the latent Poisson process.
//!
//! Two paths produce the W-component. The naive path draws every latent
//! point with `ϑ ≤ ϑ_max` and tests each unordered pair. The separable path
//! (for `W = f(x)f(y)` with closed-form tails of `f`) splits the latent axis
//! at a core cutoff `T`: core edges use geometric skipping over points
//! sorted by `f`, and tail points in `(T, ϑ_max]` are generated only when they
//! attach to the core. Edges between two tail points are not generated; the
//! bound on their expected count is recorded in the output.

mod io;
mod separable;

pub use io::{metadata, write_edges_csv, write_latent_csv, Counts, GraphMetadata};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;
use thiserror::Error;

use crate::graphex::{Graphex, GraphexError, Kernel, Support};
use crate::rng::{stream, Component};

pub const DEFAULT_EPSILON: f64 = 1e-3;
pub const DEFAULT_MAX_PAIRS: f64 = 2e8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected:.3e} candidate pairs exceeds the limit {limit:.3e}")]
    Capacity { expected: f64, limit: f64 },
    #[error("kernel value {value} at ({x}, {y}) is outside [0, 1]")]
    KernelValue { x: f64, y: f64, value: f64 },
    #[error("star rate {value} at {x} is not a nonnegative number")]
    StarValue { x: f64, value: f64 },
    #[error("cannot truncate the latent axis: {0}")]
    Truncation(String),
    #[error(transparent)]
    Graphex(#[from] GraphexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    W,
    Star,
    Isolated,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::W => "W",
            Provenance::Star => "star",
            Provenance::Isolated => "isolated",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Naive,
    Separable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledGraph {
    pub nu: f64,
    pub seed: u64,
    pub replicate: u64,
    pub labels: Vec<f64>,
    /// Latent value per vertex; `None` for star leaves and isolated-edge endpoints.
    pub latent: Option<Vec<Option<f64>>>,
    pub edges: Vec<Edge>,
    /// Vertex index of each planted latent point, `None` if it stayed isolated.
    pub planted: Vec<Option<usize>>,
    pub theta_max: f64,
    pub epsilon: f64,
    pub method: Method,
    /// Core cutoff of the separable path.
    pub core_cutoff: Option<f64>,
    /// Upper bound on the expected number of edges the truncation omits.
    pub omitted_edge_bound: f64,
}

impl SampledGraph {
    pub fn empty(nu: f64) -> Self {
        Self {
            nu,
            seed: 0,
            replicate: 0,
            labels: Vec::new(),
            latent: None,
            edges: Vec::new(),
            planted: Vec::new(),
            theta_max: 0.0,
            epsilon: 0.0,
            method: Method::Naive,
            core_cutoff: None,
            omitted_edge_bound: 0.0,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    pub nu: f64,
    pub seed: u64,
    /// Stream index, so replicates under one seed are independent.
    pub replicate: u64,
    pub epsilon: f64,
    pub theta_max: Option<f64>,
    pub retain_latent: bool,
    pub separable_fast_path: bool,
    /// Capacity guard on the expected number of candidate pairs.
    pub max_pairs: f64,
    /// Latent values of extra points added to the process.
    pub planted: Vec<f64>,
}

impl SamplerConfig {
    pub fn new(nu: f64, seed: u64) -> Self {
        Self {
            nu,
            seed,
            replicate: 0,
            epsilon: DEFAULT_EPSILON,
            theta_max: None,
            retain_latent: false,
            separable_fast_path: true,
            max_pairs: DEFAULT_MAX_PAIRS,
            planted: Vec::new(),
        }
    }

    pub fn replicate(mut self, r: u64) -> Self {
        self.replicate = r;
        self
    }
}

/// Smallest `x` with `ν²∫_x^∞ μ_W + ν²∫_x^∞ S + ν∫_x^∞ W(t,t)dt ≤ ε`.
pub fn choose_theta_max(g: &Graphex, nu: f64, eps: f64) -> Result<f64, SampleError> {
    if !(eps > 0.0) {
        return Err(SampleError::InvalidConfig(format!("ε must be positive, got {eps}")));
    }
    if nu == 0.0 {
        return Ok(0.0);
    }
    let nu2 = nu * nu;
    if let (Support::Bounded(c), false) = (g.meta.support, g.has_star()) {
        return Ok(c);
    }
    if let (Kernel::Separable(f), false, false) = (&g.kernel, g.has_star(), g.self_edges) {
        if let (Some(mass), true) = (g.meta.profile_mass, f.is_analytic()) {
            // ν² · mass · tail_f(x) = ε
            if let Some(x) = f.analytic_tail_inverse(eps / (nu2 * mass)) {
                return Ok(x);
            }
        }
    }
    let budget = |x: f64| -> Result<f64, SampleError> {
        Ok(nu2 * g.marginal_tail(x)? + nu2 * g.star_tail(x)? + nu * g.diag_tail(x)?)
    };
    let mut lo = 0.0;
    if budget(lo)? <= eps {
        return Ok(0.0);
    }
    let mut hi = g.meta.support.bound().unwrap_or(1.0).max(1.0);
    let mut doublings = 0;
    while budget(hi)? > eps {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(SampleError::Truncation("tail budget never falls below ε".into()));
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if budget(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Ok(hi)
}

/// Latent points and W-edges between them (by latent index).
pub(crate) struct LatentDraw {
    pub points: Vec<f64>,
    pub w_edges: Vec<(usize, usize)>,
    pub planted: Vec<usize>,
    pub core_cutoff: Option<f64>,
    pub omitted: f64,
}

pub(crate) fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive finite mean").sample(rng) as u64
}

#[inline]
fn check_w(x: f64, y: f64, w: f64) -> Result<f64, SampleError> {
    if (0.0..=1.0).contains(&w) {
        Ok(w)
    } else {
        Err(SampleError::KernelValue { x, y, value: w })
    }
}

fn naive_draw(g: &Graphex, cfg: &SamplerConfig, theta_max: f64) -> Result<LatentDraw, SampleError> {
    let mean = cfg.nu * theta_max;
    let expected_pairs = 0.5 * (mean + cfg.planted.len() as f64).powi(2);
    let zero = g.kernel_is_zero();
    if !zero && expected_pairs > cfg.max_pairs {
        return Err(SampleError::Capacity {
            expected: expected_pairs,
            limit: cfg.max_pairs,
        });
    }
    let mut rng = stream(cfg.seed, cfg.replicate, Component::Latent);
    let n = poisson(&mut rng, mean) as usize;
    let mut points: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * theta_max).collect();
    let planted: Vec<usize> = (n..n + cfg.planted.len()).collect();
    points.extend_from_slice(&cfg.planted);

    let mut edges = Vec::new();
    if !zero {
        let mut rng = stream(cfg.seed, cfg.replicate, Component::Pairs);
        let total = points.len();
        let weights: Option<Vec<f64>> = g.separable_profile().map(|f| points.iter().map(|&x| g.separable_weight(f, x)).collect());
        for i in 0..total {
            let xi = points[i];
            if g.self_edges {
                let d = check_w(xi, xi, g.diag(xi))?;
                if d > 0.0 && (d >= 1.0 || rng.random::<f64>() < d) {
                    edges.push((i, i));
                }
            }
            for j in i + 1..total {
                let w = match &weights {
                    Some(ws) => ws[i] * ws[j],
                    None => g.w(xi, points[j]),
                };
                let w = check_w(xi, points[j], w)?;
                if w <= 0.0 {
                    continue;
                }
                if w >= 1.0 || rng.random::<f64>() < w {
                    edges.push((i, j));
                }
            }
        }
    }
    Ok(LatentDraw {
        points,
        w_edges: edges,
        planted,
        core_cutoff: None,
        omitted: 0.0,
    })
}

fn use_fast_path(g: &Graphex, cfg: &SamplerConfig) -> bool {
    cfg.separable_fast_path
        && !g.has_star()
        && matches!(&g.kernel, Kernel::Separable(f) if f.is_analytic())
        && g.meta.support == Support::Unbounded
}

/// Samples the ν-truncation of the graph generated by `g`.
pub fn sample_keg(g: &Graphex, cfg: &SamplerConfig) -> Result<SampledGraph, SampleError> {
    let nu = cfg.nu;
    if !(nu >= 0.0 && nu.is_finite()) {
        return Err(SampleError::InvalidConfig(format!("ν must be finite and nonnegative, got {nu}")));
    }
    if !(cfg.epsilon > 0.0) {
        return Err(SampleError::InvalidConfig(format!("ε must be positive, got {}", cfg.epsilon)));
    }
    if !g.i.is_finite() {
        return Err(SampleError::InvalidConfig("isolated-edge rate I is infinite".into()));
    }
    if !g.meta.star_integral.is_finite() {
        return Err(SampleError::InvalidConfig("star rate S is not integrable".into()));
    }
    if let Some(&x) = cfg.planted.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(SampleError::InvalidConfig(format!("planted latent value {x} is not a finite nonnegative number")));
    }
    let theta_max = match cfg.theta_max {
        Some(t) if t >= 0.0 && t.is_finite() => t,
        Some(t) => return Err(SampleError::InvalidConfig(format!("ϑ_max override {t} is not finite and nonnegative"))),
        None => choose_theta_max(g, nu, cfg.epsilon)?,
    };
    let mut out = SampledGraph {
        nu,
        seed: cfg.seed,
        replicate: cfg.replicate,
        theta_max,
        epsilon: cfg.epsilon,
        ..SampledGraph::empty(nu)
    };
    if nu == 0.0 {
        out.planted = vec![None; cfg.planted.len()];
        if cfg.retain_latent {
            out.latent = Some(Vec::new());
        }
        return Ok(out);
    }

    let (draw, method) = if use_fast_path(g, cfg) {
        (separable::draw(g, cfg, theta_max)?, Method::Separable)
    } else {
        (naive_draw(g, cfg, theta_max)?, Method::Naive)
    };
    out.method = method;
    out.core_cutoff = draw.core_cutoff;
    out.omitted_edge_bound = cfg.epsilon + draw.omitted;

    let n = draw.points.len();
    let mut degree = vec![0u32; n];
    for &(a, b) in &draw.w_edges {
        degree[a] += 1;
        degree[b] += 1;
    }

    // Star leaves per latent point.
    let mut leaves: Vec<Vec<f64>> = Vec::new();
    if g.has_star() {
        let mut rng = stream(cfg.seed, cfg.replicate, Component::Stars);
        leaves = vec![Vec::new(); n];
        for (j, &x) in draw.points.iter().enumerate() {
            let s = g.star_rate(x);
            if !(s >= 0.0 && s.is_finite()) {
                return Err(SampleError::StarValue { x, value: s });
            }
            let k = poisson(&mut rng, nu * s);
            leaves[j] = (0..k).map(|_| rng.random::<f64>() * nu).collect();
        }
    }
    let has_leaves = |j: usize| leaves.get(j).is_some_and(|l| !l.is_empty());

    let mut index = vec![usize::MAX; n];
    let mut labels_rng = stream(cfg.seed, cfg.replicate, Component::Labels);
    let mut latent = Vec::new();
    for j in 0..n {
        if degree[j] > 0 || has_leaves(j) {
            index[j] = out.labels.len();
            out.labels.push(labels_rng.random::<f64>() * nu);
            latent.push(Some(draw.points[j]));
        }
    }
    out.edges.reserve(draw.w_edges.len());
    for &(a, b) in &draw.w_edges {
        let (u, v) = (index[a].min(index[b]), index[a].max(index[b]));
        out.edges.push(Edge { u, v, provenance: Provenance::W });
    }
    for (j, ls) in leaves.iter().enumerate() {
        for &label in ls {
            let leaf = out.labels.len();
            out.labels.push(label);
            latent.push(None);
            out.edges.push(Edge {
                u: index[j],
                v: leaf,
                provenance: Provenance::Star,
            });
        }
    }
    if g.i > 0.0 {
        let mut rng = stream(cfg.seed, cfg.replicate, Component::Isolated);
        let m = poisson(&mut rng, nu * nu * g.i);
        for _ in 0..m {
            let u = out.labels.len();
            out.labels.push(rng.random::<f64>() * nu);
            out.labels.push(rng.random::<f64>() * nu);
            latent.push(None);
            latent.push(None);
            out.edges.push(Edge {
                u,
                v: u + 1,
                provenance: Provenance::Isolated,
            });
        }
    }
    out.planted = draw
        .planted
        .iter()
        .map(|&j| (index[j] != usize::MAX).then_some(index[j]))
        .collect();
    if cfg.retain_latent {
        out.latent = Some(latent);
    }
    Ok(out)
}

/// Keeps the edges whose endpoints both carry labels `≤ nu`.
pub fn restrict(graph: &SampledGraph, nu: f64) -> Result<SampledGraph, SampleError> {
    if !(nu >= 0.0 && nu <= graph.nu) {
        return Err(SampleError::InvalidConfig(format!(
            "restriction size {nu} must lie in [0, {}]",
            graph.nu
        )));
    }
    let n = graph.labels.len();
    let mut keep = vec![false; n];
    let kept: Vec<&Edge> = graph
        .edges
        .iter()
        .filter(|e| graph.labels[e.u] <= nu && graph.labels[e.v] <= nu)
        .collect();
    for e in &kept {
        keep[e.u] = true;
        keep[e.v] = true;
    }
    let mut index = vec![usize::MAX; n];
    let mut labels = Vec::new();
    let mut latent = graph.latent.as_ref().map(|_| Vec::new());
    for i in 0..n {
        if keep[i] {
            index[i] = labels.len();
            labels.push(graph.labels[i]);
            if let (Some(out), Some(src)) = (latent.as_mut(), graph.latent.as_ref()) {
                out.push(src[i]);
            }
        }
    }
    Ok(SampledGraph {
        nu,
        labels,
        latent,
        edges: kept
            .into_iter()
            .map(|e| Edge {
                u: index[e.u],
                v: index[e.v],
                provenance: e.provenance,
            })
            .collect(),
        planted: graph
            .planted
            .iter()
            .map(|p| p.and_then(|i| (index[i] != usize::MAX).then_some(index[i])))
            .collect(),
        ..graph.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphex::{build, GraphexSpec};

    fn g(json: &str) -> Graphex {
        build(&GraphexSpec::from_json(json).unwrap()).unwrap()
    }

    #[test]
    fn theta_max_examples() {
        let t = choose_theta_max(&g(r#"{"family":"fast-decay"}"#), 10.0, 1e-3).unwrap();
        assert!((t - 5.0 * 10f64.ln()).abs() < 1e-9, "{t}");
        let t = choose_theta_max(&g(r#"{"family":"slow-decay"}"#), 10.0, 1e-3).unwrap();
        assert!((t - 33_332.333_333).abs() < 1e-3, "{t}");
        let t = choose_theta_max(&g(r#"{"family":"constant","params":{"p":0.4,"c":2.5}}"#), 10.0, 1e-3).unwrap();
        assert_eq!(t, 2.5);
    }

    #[test]
    fn theta_max_by_bisection_matches_closed_form() {
        // Same kernel as fast-decay but through the expression path.
        let gx = g(r#"{"family":"separable","exprs":{"f":"exp(-x)"}}"#);
        let t = choose_theta_max(&gx, 10.0, 1e-3).unwrap();
        assert!((t - 5.0 * 10f64.ln()).abs() < 1e-6, "{t}");
        let gx = g(r#"{"family":"constant","params":{"p":0},"exprs":{"S":"exp(-x)"}}"#);
        let t = choose_theta_max(&gx, 10.0, 1e-3).unwrap();
        assert!((t - 5.0 * 10f64.ln()).abs() < 1e-6, "{t}");
    }

    #[test]
    fn empty_cases() {
        let zero = g(r#"{"family":"constant","params":{"p":0}}"#);
        let s = sample_keg(&zero, &SamplerConfig::new(7.0, 3)).unwrap();
        assert_eq!((s.vertex_count(), s.edge_count()), (0, 0));
        let s = sample_keg(&g(r#"{"family":"fast-decay"}"#), &SamplerConfig::new(0.0, 3)).unwrap();
        assert_eq!((s.vertex_count(), s.edge_count()), (0, 0));
    }

    #[test]
    fn complete_block_gives_clique() {
        let gx = g(r#"{"family":"constant","params":{"p":1}}"#);
        let mut cfg = SamplerConfig::new(5.0, 11);
        cfg.retain_latent = true;
        let s = sample_keg(&gx, &cfg).unwrap();
        let n = s.vertex_count();
        assert_eq!(s.edge_count(), n * (n - 1) / 2);
        assert!(s.latent.as_ref().unwrap().iter().all(|v| v.is_some_and(|t| t <= 1.0)));
    }

    #[test]
    fn invariants_hold() {
        let gx = g(r#"{"family":"caron-fox","exprs":{"S":"0.3*exp(-x)"},"I":0.05,"self_edges":true}"#);
        let mut cfg = SamplerConfig::new(6.0, 5);
        cfg.retain_latent = true;
        let s = sample_keg(&gx, &cfg).unwrap();
        let n = s.vertex_count();
        let mut deg = vec![0; n];
        let mut seen = std::collections::HashSet::new();
        for e in &s.edges {
            assert!(e.u <= e.v && e.v < n);
            assert!(seen.insert((e.u, e.v)), "duplicate edge");
            deg[e.u] += 1;
            deg[e.v] += 1;
            if e.provenance != Provenance::W {
                assert!(s.latent.as_ref().unwrap()[e.v].is_none());
            }
        }
        assert!(deg.iter().all(|&d| d > 0));
        assert!(s.labels.iter().all(|&l| (0.0..=6.0).contains(&l)));
    }

    #[test]
    fn deterministic_per_seed_and_replicate() {
        let gx = g(r#"{"family":"slow-decay"}"#);
        let a = sample_keg(&gx, &SamplerConfig::new(20.0, 9)).unwrap();
        let b = sample_keg(&gx, &SamplerConfig::new(20.0, 9)).unwrap();
        let c = sample_keg(&gx, &SamplerConfig::new(20.0, 9).replicate(1)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.edges, c.edges);
        assert_eq!(a.method, Method::Separable);
    }

    #[test]
    fn restrict_hand_graph() {
        let s = SampledGraph {
            labels: vec![1.0, 2.0, 4.5],
            edges: vec![
                Edge { u: 0, v: 1, provenance: Provenance::W },
                Edge { u: 1, v: 2, provenance: Provenance::W },
            ],
            ..SampledGraph::empty(5.0)
        };
        let r = restrict(&s, 3.0).unwrap();
        assert_eq!(r.labels, vec![1.0, 2.0]);
        assert_eq!(r.edges, vec![Edge { u: 0, v: 1, provenance: Provenance::W }]);
        assert_eq!(r.nu, 3.0);
        assert_eq!(restrict(&s, 0.0).unwrap().edge_count(), 0);
        assert_eq!(restrict(&s, 5.0).unwrap(), s);
        assert!(restrict(&s, 6.0).is_err());
    }

    #[test]
    fn capacity_guard() {
        let gx = g(r#"{"family":"separable","exprs":{"f":"1/(x+1)^2"}}"#);
        let r = sample_keg(&gx, &SamplerConfig::new(50.0, 1));
        assert!(matches!(r, Err(SampleError::Capacity { .. })), "{r:?}");
    }

    #[test]
    fn infinite_isolated_rate_rejected() {
        let gx = g(r#"{"family":"fast-decay","I":"inf"}"#);
        assert!(sample_keg(&gx, &SamplerConfig::new(2.0, 1)).is_err());
    }
}
