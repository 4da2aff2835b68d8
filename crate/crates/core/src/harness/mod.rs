//! Monte Carlo experiments: replicate statistics against the theory engine,
//! the degree-law limit, the giant component, projectivity and the degree
//! law of a planted point.
//!
//! Replicate `r` at grid position `i` samples on stream
//! `(i << 32) | r`, so every run is a pure function of the seed. Replicates
//! run in parallel, are collected in order and reduced by pairwise
//! summation, so reports do not depend on the thread count.

pub mod stats;

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::graphex::{Graphex, GraphexError, GraphexSpec};
use crate::graphstats::{degrees, largest_component, w_degrees_without_loops};
use crate::sampler::{restrict, sample_keg, Provenance, SampleError, SampledGraph, SamplerConfig, DEFAULT_EPSILON};
use crate::theory::{self, TheoryError};

pub use stats::{chi_square_poisson, ks_two_sample, mean_sd, pairwise_sum, z_score, ChiSquareResult, KsResult};

pub const DEFAULT_Z_CRIT: f64 = 4.0;
pub const DEFAULT_P_FLOOR: f64 = 1e-3;
pub const MIN_REPLICATES: usize = 30;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("experiment rejected: sampled graphs have no vertices")]
    NoVertices,
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error(transparent)]
    Graphex(#[from] GraphexError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone)]
pub struct HarnessConfig {
    pub seed: u64,
    pub replicates: usize,
    pub epsilon: f64,
    pub rel_tol: f64,
    pub z_crit: f64,
    pub p_floor: f64,
}

impl HarnessConfig {
    pub fn new(seed: u64, replicates: usize) -> Self {
        Self {
            seed,
            replicates,
            epsilon: DEFAULT_EPSILON,
            rel_tol: 1e-8,
            z_crit: DEFAULT_Z_CRIT,
            p_floor: DEFAULT_P_FLOOR,
        }
    }
}

fn check_grid(nu_grid: &[f64]) -> Result<(), HarnessError> {
    if nu_grid.is_empty() {
        return Err(HarnessError::InvalidConfig("ν grid is empty".into()));
    }
    if let Some(nu) = nu_grid.iter().find(|nu| !(nu.is_finite() && **nu > 0.0)) {
        return Err(HarnessError::InvalidConfig(format!("ν must be finite and positive, got {nu}")));
    }
    Ok(())
}

fn check_replicates(r: usize, min: usize) -> Result<(), HarnessError> {
    if r < min {
        return Err(HarnessError::InvalidConfig(format!("need at least {min} replicates, got {r}")));
    }
    Ok(())
}

fn stream_id(block: u64, r: usize) -> u64 {
    (block << 32) | r as u64
}

fn sampler(cfg: &HarnessConfig, nu: f64, id: u64) -> SamplerConfig {
    let mut s = SamplerConfig::new(nu, cfg.seed).replicate(id);
    s.epsilon = cfg.epsilon;
    s
}

/// Draws `cfg.replicates` graphs on stream block `block` and maps each to
/// `T`, in replicate order.
fn replicate_map<T: Send>(
    g: &Graphex,
    cfg: &HarnessConfig,
    nu: f64,
    block: u64,
    f: impl Fn(&SampledGraph) -> T + Sync,
) -> Result<Vec<T>, HarnessError> {
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let graph = sample_keg(g, &sampler(cfg, nu, stream_id(block, r)))?;
            Ok(f(&graph))
        })
        .collect()
}

fn spec_echo(spec: &GraphexSpec) -> serde_json::Value {
    serde_json::to_value(spec).unwrap_or(serde_json::Value::Null)
}

fn csv_f64(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        x.to_string()
    }
}

// ---------------------------------------------------------------------------
// validate_expectations

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    Edges,
    Vertices,
    /// Number of vertices of degree exactly `k`.
    Degree(u64),
    StarEdges,
    IsolatedEdges,
}

impl Statistic {
    pub fn name(self) -> String {
        match self {
            Statistic::Edges => "edges".into(),
            Statistic::Vertices => "vertices".into(),
            Statistic::Degree(k) => format!("degree_{k}"),
            Statistic::StarEdges => "star_edges".into(),
            Statistic::IsolatedEdges => "isolated_edges".into(),
        }
    }

    /// `edges`, `vertices` and one `degree_k` per `k`.
    pub fn standard(ks: &[u64]) -> Vec<Statistic> {
        let mut v = vec![Statistic::Edges, Statistic::Vertices];
        v.extend(ks.iter().map(|&k| Statistic::Degree(k)));
        v
    }

    fn measure(self, g: &SampledGraph, degs: &[usize]) -> f64 {
        let by = |p: Provenance| g.edges.iter().filter(|e| e.provenance == p).count() as f64;
        match self {
            Statistic::Edges => g.edges.len() as f64,
            Statistic::Vertices => g.labels.len() as f64,
            Statistic::Degree(k) => degs.iter().filter(|&&d| d as u64 == k).count() as f64,
            Statistic::StarEdges => by(Provenance::Star),
            Statistic::IsolatedEdges => by(Provenance::Isolated),
        }
    }

    fn theory(self, g: &Graphex, nu: f64, rel_tol: f64) -> Result<f64, TheoryError> {
        let component = |name: &str| -> Result<f64, TheoryError> {
            let r = theory::expected_edges(g, nu, rel_tol)?;
            Ok(r.components.get(name).copied().unwrap_or(0.0))
        };
        match self {
            Statistic::Edges => Ok(theory::expected_edges(g, nu, rel_tol)?.value),
            Statistic::Vertices => Ok(theory::expected_vertices(g, nu, rel_tol)?.value),
            Statistic::Degree(k) => Ok(theory::expected_degree_k(g, nu, k, rel_tol)?.value),
            Statistic::StarEdges => component("star"),
            Statistic::IsolatedEdges => component("isolated"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub statistic: String,
    pub nu: f64,
    pub replicates: usize,
    pub mean: f64,
    pub sd: f64,
    pub se: f64,
    pub theory: f64,
    pub z: f64,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub seed: u64,
    pub z_crit: f64,
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphex: Option<serde_json::Value>,
    pub rows: Vec<ValidationRow>,
    pub all_pass: bool,
}

impl ValidationReport {
    pub fn with_spec(mut self, spec: &GraphexSpec) -> Self {
        self.graphex = Some(spec_echo(spec));
        self
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "statistic,nu,replicates,mean,sd,se,theory,z,verdict")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.statistic,
                r.nu,
                r.replicates,
                csv_f64(r.mean),
                csv_f64(r.sd),
                csv_f64(r.se),
                csv_f64(r.theory),
                csv_f64(r.z),
                r.verdict.as_str()
            )?;
        }
        Ok(())
    }
}

/// Compares replicate means of each statistic with its expectation at every
/// `ν`. A theory failure fails its own row and leaves the others intact.
pub fn validate_expectations(
    g: &Graphex,
    nu_grid: &[f64],
    statistics: &[Statistic],
    cfg: &HarnessConfig,
) -> Result<ValidationReport, HarnessError> {
    check_grid(nu_grid)?;
    check_replicates(cfg.replicates, MIN_REPLICATES)?;
    if statistics.is_empty() {
        return Err(HarnessError::InvalidConfig("no statistics requested".into()));
    }
    let mut rows = Vec::new();
    for (i, &nu) in nu_grid.iter().enumerate() {
        let samples = replicate_map(g, cfg, nu, i as u64, |graph| {
            let degs = degrees(graph);
            statistics.iter().map(|s| s.measure(graph, &degs)).collect::<Vec<f64>>()
        })?;
        for (j, &stat) in statistics.iter().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s[j]).collect();
            let (mean, sd) = mean_sd(&xs);
            let se = sd / (xs.len() as f64).sqrt();
            let (theory, z, error) = match stat.theory(g, nu, cfg.rel_tol) {
                // Identical replicates only bound the mean to within one
                // count in R, so that resolution stands in for a zero SE.
                Ok(t) => (t, z_score(mean, t, if se > 0.0 { se } else { 1.0 / xs.len() as f64 }), None),
                Err(e) => (f64::NAN, f64::NAN, Some(e.to_string())),
            };
            rows.push(ValidationRow {
                statistic: stat.name(),
                nu,
                replicates: xs.len(),
                mean,
                sd,
                se,
                theory,
                z,
                verdict: Verdict::from_bool(z.abs() <= cfg.z_crit),
                error,
            });
        }
    }
    Ok(ValidationReport {
        seed: cfg.seed,
        z_crit: cfg.z_crit,
        epsilon: cfg.epsilon,
        graphex: None,
        all_pass: rows.iter().all(|r| r.verdict == Verdict::Pass),
        rows,
    })
}

// ---------------------------------------------------------------------------
// degdist_experiment

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum KSchedule {
    Fixed(u64),
    /// `k_ν = ⌊ν^β⌋`.
    Power(f64),
}

impl KSchedule {
    pub fn k(self, nu: f64) -> u64 {
        match self {
            KSchedule::Fixed(k) => k,
            KSchedule::Power(beta) => nu.powf(beta).floor() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegdistRow {
    pub nu: f64,
    pub k: u64,
    pub graphs: usize,
    pub excluded_empty: usize,
    /// Mean over graphs of the fraction of vertices with degree `> k`.
    pub empirical_ccdf: f64,
    pub ccdf_se: f64,
    pub theory_ccdf: f64,
    pub abs_diff: f64,
    /// Mean fraction of vertices with degree exactly `k`.
    pub empirical_pmf: f64,
    pub theory_pmf: f64,
    /// `1 - empirical_ccdf`.
    pub empirical_cdf: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap_to_limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegdistReport {
    pub seed: u64,
    pub schedule: KSchedule,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit_cdf: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphex: Option<serde_json::Value>,
    pub rows: Vec<DegdistRow>,
    /// The empirical–theory gap at the largest ν is no larger than at the
    /// smallest, or within `z_crit` standard errors.
    pub shrinking: bool,
    /// Gaps to `limit_cdf` are nonincreasing along the grid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approaches_limit: Option<bool>,
    /// More than a tenth of the graphs at some ν had no vertices.
    pub frequent_empty: bool,
    pub verdict: Verdict,
}

impl DegdistReport {
    pub fn with_spec(mut self, spec: &GraphexSpec) -> Self {
        self.graphex = Some(spec_echo(spec));
        self
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(
            out,
            "nu,k,graphs,excluded_empty,empirical_ccdf,ccdf_se,theory_ccdf,abs_diff,empirical_pmf,theory_pmf,empirical_cdf,gap_to_limit"
        )?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                r.nu,
                r.k,
                r.graphs,
                r.excluded_empty,
                csv_f64(r.empirical_ccdf),
                csv_f64(r.ccdf_se),
                csv_f64(r.theory_ccdf),
                csv_f64(r.abs_diff),
                csv_f64(r.empirical_pmf),
                csv_f64(r.theory_pmf),
                csv_f64(r.empirical_cdf),
                r.gap_to_limit.map(csv_f64).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Empirical degree law of ν-truncations against the limiting ratio.
/// `limit_cdf`, when given, is the conjectured limit of `P(D ≤ k_ν)`.
pub fn degdist_experiment(
    g: &Graphex,
    nu_grid: &[f64],
    schedule: KSchedule,
    limit_cdf: Option<f64>,
    cfg: &HarnessConfig,
) -> Result<DegdistReport, HarnessError> {
    check_grid(nu_grid)?;
    check_replicates(cfg.replicates, 1)?;
    let mut rows = Vec::new();
    let mut frequent_empty = false;
    for (i, &nu) in nu_grid.iter().enumerate() {
        let k = schedule.k(nu);
        let per_graph = replicate_map(g, cfg, nu, i as u64, |graph| {
            let n = graph.labels.len();
            if n == 0 {
                return None;
            }
            let degs = degrees(graph);
            let above = degs.iter().filter(|&&d| d as u64 > k).count();
            let at = degs.iter().filter(|&&d| d as u64 == k).count();
            Some((above as f64 / n as f64, at as f64 / n as f64))
        })?;
        let kept: Vec<(f64, f64)> = per_graph.iter().flatten().copied().collect();
        let excluded = per_graph.len() - kept.len();
        if kept.is_empty() {
            return Err(HarnessError::NoVertices);
        }
        frequent_empty |= excluded * 10 > per_graph.len();
        let ccdfs: Vec<f64> = kept.iter().map(|p| p.0).collect();
        let pmfs: Vec<f64> = kept.iter().map(|p| p.1).collect();
        let (ccdf, sd) = mean_sd(&ccdfs);
        let (pmf, _) = mean_sd(&pmfs);
        let theory_pair = if k == 0 {
            vec![theory::degree_ccdf(g, nu, 0, cfg.rel_tol)?]
        } else {
            theory::degree_ccdf_many(g, nu, &[k - 1, k], cfg.rel_tol)?
        };
        let theory_ccdf = *theory_pair.last().expect("nonempty");
        let theory_pmf = if k == 0 { 0.0 } else { theory_pair[0] - theory_pair[1] };
        rows.push(DegdistRow {
            nu,
            k,
            graphs: kept.len(),
            excluded_empty: excluded,
            empirical_ccdf: ccdf,
            ccdf_se: sd / (kept.len() as f64).sqrt(),
            theory_ccdf,
            abs_diff: (ccdf - theory_ccdf).abs(),
            empirical_pmf: pmf,
            theory_pmf,
            empirical_cdf: 1.0 - ccdf,
            gap_to_limit: limit_cdf.map(|l| (1.0 - ccdf - l).abs()),
        });
    }
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let shrinking = last.abs_diff <= first.abs_diff || last.abs_diff <= cfg.z_crit * last.ccdf_se;
    let approaches_limit = limit_cdf.map(|_| {
        rows.windows(2)
            .all(|w| w[1].gap_to_limit.unwrap_or(0.0) <= w[0].gap_to_limit.unwrap_or(0.0))
    });
    Ok(DegdistReport {
        seed: cfg.seed,
        schedule,
        limit_cdf,
        graphex: None,
        verdict: Verdict::from_bool(shrinking && approaches_limit.unwrap_or(true)),
        rows,
        shrinking,
        approaches_limit,
        frequent_empty,
    })
}

// ---------------------------------------------------------------------------
// connectivity_experiment

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityRow {
    pub nu: f64,
    pub graphs: usize,
    pub excluded_empty: usize,
    pub mean_fraction: f64,
    pub sd: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectivityReport {
    pub seed: u64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphex: Option<serde_json::Value>,
    pub rows: Vec<ConnectivityRow>,
    pub nondecreasing: bool,
    pub final_fraction: f64,
    pub verdict: Verdict,
}

impl ConnectivityReport {
    pub fn with_spec(mut self, spec: &GraphexSpec) -> Self {
        self.graphex = Some(spec_echo(spec));
        self
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "nu,graphs,excluded_empty,mean_fraction,sd,se")?;
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.nu,
                r.graphs,
                r.excluded_empty,
                csv_f64(r.mean_fraction),
                csv_f64(r.sd),
                csv_f64(r.se)
            )?;
        }
        Ok(())
    }
}

/// Mean largest-component fraction along the grid; passes when it never
/// decreases and reaches `threshold` at the last ν.
pub fn connectivity_experiment(
    g: &Graphex,
    nu_grid: &[f64],
    threshold: f64,
    cfg: &HarnessConfig,
) -> Result<ConnectivityReport, HarnessError> {
    check_grid(nu_grid)?;
    check_replicates(cfg.replicates, 1)?;
    let mut rows = Vec::new();
    for (i, &nu) in nu_grid.iter().enumerate() {
        let fractions = replicate_map(g, cfg, nu, i as u64, |graph| {
            (!graph.labels.is_empty()).then(|| largest_component(graph).1)
        })?;
        let kept: Vec<f64> = fractions.iter().flatten().copied().collect();
        if kept.is_empty() {
            return Err(HarnessError::NoVertices);
        }
        let (mean, sd) = mean_sd(&kept);
        rows.push(ConnectivityRow {
            nu,
            graphs: kept.len(),
            excluded_empty: fractions.len() - kept.len(),
            mean_fraction: mean,
            sd,
            se: sd / (kept.len() as f64).sqrt(),
        });
    }
    let nondecreasing = rows.windows(2).all(|w| w[1].mean_fraction >= w[0].mean_fraction);
    let final_fraction = rows[rows.len() - 1].mean_fraction;
    Ok(ConnectivityReport {
        seed: cfg.seed,
        threshold,
        graphex: None,
        verdict: Verdict::from_bool(nondecreasing && final_fraction >= threshold),
        rows,
        nondecreasing,
        final_fraction,
    })
}

// ---------------------------------------------------------------------------
// projectivity_test

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectivityReport {
    pub seed: u64,
    pub nu: f64,
    pub replicates: usize,
    pub mean_edges_restricted: f64,
    pub mean_edges_direct: f64,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub p_floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graphex: Option<serde_json::Value>,
    pub verdict: Verdict,
}

impl ProjectivityReport {
    pub fn with_spec(mut self, spec: &GraphexSpec) -> Self {
        self.graphex = Some(spec_echo(spec));
        self
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "nu,replicates,mean_edges_restricted,mean_edges_direct,ks_statistic,p_value,verdict")?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            self.nu,
            self.replicates,
            csv_f64(self.mean_edges_restricted),
            csv_f64(self.mean_edges_direct),
            self.ks_statistic,
            self.p_value,
            self.verdict.as_str()
        )
    }
}

/// KS test of edge counts of `restrict(sample(2ν), ν)` against `sample(ν)`,
/// the two arms drawn on disjoint streams.
pub fn projectivity_test(g: &Graphex, nu: f64, cfg: &HarnessConfig) -> Result<ProjectivityReport, HarnessError> {
    check_grid(&[nu])?;
    check_replicates(cfg.replicates, 1)?;
    let restricted = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let big = sample_keg(g, &sampler(cfg, 2.0 * nu, stream_id(0, r)))?;
            Ok(restrict(&big, nu)?.edges.len() as f64)
        })
        .collect::<Result<Vec<f64>, HarnessError>>()?;
    let direct = replicate_map(g, cfg, nu, 1, |graph| graph.edges.len() as f64)?;
    let ks = ks_two_sample(&restricted, &direct);
    Ok(ProjectivityReport {
        seed: cfg.seed,
        nu,
        replicates: cfg.replicates,
        mean_edges_restricted: mean_sd(&restricted).0,
        mean_edges_direct: mean_sd(&direct).0,
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
        p_floor: cfg.p_floor,
        graphex: None,
        verdict: Verdict::from_bool(ks.p_value >= cfg.p_floor),
    })
}

// ---------------------------------------------------------------------------
// planted_degree_test

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedRow {
    pub lambda: f64,
    pub nu: f64,
    pub replicates: usize,
    pub poisson_mean: f64,
    pub sample_mean: f64,
    pub chi_square: ChiSquareResult,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlantedReport {
    pub seed: u64,
    pub p_floor: f64,
    pub rows: Vec<PlantedRow>,
    pub all_pass: bool,
}

/// Chi-square test of the W-degree of a point planted at `λ` against
/// `Poisson(ν μ_W(λ))`, one planted point per graph.
pub fn planted_degree_test(
    g: &Graphex,
    lambdas: &[f64],
    nu: f64,
    cfg: &HarnessConfig,
) -> Result<PlantedReport, HarnessError> {
    check_grid(&[nu])?;
    check_replicates(cfg.replicates, MIN_REPLICATES)?;
    let mut rows = Vec::new();
    for (i, &lambda) in lambdas.iter().enumerate() {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(HarnessError::InvalidConfig(format!("planted latent value must be finite and nonnegative, got {lambda}")));
        }
        let degs = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let mut s = sampler(cfg, nu, stream_id(i as u64, r));
                s.planted = vec![lambda];
                let graph = sample_keg(g, &s)?;
                Ok(match graph.planted[0] {
                    Some(idx) => w_degrees_without_loops(&graph)[idx] as u64,
                    None => 0,
                })
            })
            .collect::<Result<Vec<u64>, HarnessError>>()?;
        let mean = nu * g.marginal(lambda)?;
        let chi = chi_square_poisson(&degs, mean);
        let xs: Vec<f64> = degs.iter().map(|&d| d as f64).collect();
        rows.push(PlantedRow {
            lambda,
            nu,
            replicates: degs.len(),
            poisson_mean: mean,
            sample_mean: mean_sd(&xs).0,
            verdict: Verdict::from_bool(chi.p_value >= cfg.p_floor),
            chi_square: chi,
        });
    }
    Ok(PlantedReport {
        seed: cfg.seed,
        p_floor: cfg.p_floor,
        all_pass: rows.iter().all(|r| r.verdict == Verdict::Pass),
        rows,
    })
}
