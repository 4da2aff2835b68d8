//! Edge-list CSV, latent sidecar CSV and metadata JSON.

use std::io::{self, Write};

use serde::Serialize;

use super::{Method, Provenance, SampledGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub vertices: usize,
    pub edges: usize,
    pub w_edges: usize,
    pub star_edges: usize,
    pub isolated_edges: usize,
    pub self_loops: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphMetadata {
    pub nu: f64,
    pub seed: u64,
    pub replicate: u64,
    pub theta_max: f64,
    pub epsilon: f64,
    pub method: Method,
    pub core_cutoff: Option<f64>,
    pub omitted_edge_bound: f64,
    pub counts: Counts,
}

pub fn metadata(g: &SampledGraph) -> GraphMetadata {
    let by = |p: Provenance| g.edges.iter().filter(|e| e.provenance == p).count();
    GraphMetadata {
        nu: g.nu,
        seed: g.seed,
        replicate: g.replicate,
        theta_max: g.theta_max,
        epsilon: g.epsilon,
        method: g.method,
        core_cutoff: g.core_cutoff,
        omitted_edge_bound: g.omitted_edge_bound,
        counts: Counts {
            vertices: g.labels.len(),
            edges: g.edges.len(),
            w_edges: by(Provenance::W),
            star_edges: by(Provenance::Star),
            isolated_edges: by(Provenance::Isolated),
            self_loops: g.edges.iter().filter(|e| e.u == e.v).count(),
        },
    }
}

pub fn write_edges_csv<W: Write>(g: &SampledGraph, mut out: W) -> io::Result<()> {
    writeln!(out, "u_index,v_index,u_label,v_label,provenance")?;
    for e in &g.edges {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.u,
            e.v,
            g.labels[e.u],
            g.labels[e.v],
            e.provenance.as_str()
        )?;
    }
    Ok(())
}

/// Writes `index,label,latent` for every vertex that has a latent value.
pub fn write_latent_csv<W: Write>(g: &SampledGraph, mut out: W) -> io::Result<()> {
    writeln!(out, "index,label,latent")?;
    if let Some(latent) = &g.latent {
        for (i, v) in latent.iter().enumerate() {
            if let Some(t) = v {
                writeln!(out, "{},{},{}", i, g.labels[i], t)?;
            }
        }
    }
    Ok(())
}
