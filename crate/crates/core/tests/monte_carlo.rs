//! Distributional checks of the sampler against theory and against itself.
//! Seeds are fixed; thresholds are 4 standard errors or p ≥ 0.001.

use keg::graphex::{build, Graphex, GraphexSpec};
use keg::graphstats::degrees;
use keg::harness::{
    ks_two_sample, mean_sd, planted_degree_test, projectivity_test, validate_expectations, HarnessConfig, Statistic,
};
use keg::sampler::{sample_keg, Method, SamplerConfig};
use keg::theory;

fn graphex(json: &str) -> Graphex {
    build(&GraphexSpec::from_json(json).unwrap()).unwrap()
}

fn edge_counts(g: &Graphex, nu: f64, seed: u64, reps: u64, fast: bool) -> Vec<f64> {
    (0..reps)
        .map(|r| {
            let mut cfg = SamplerConfig::new(nu, seed).replicate(r);
            cfg.separable_fast_path = fast;
            let graph = sample_keg(g, &cfg).unwrap();
            assert_eq!(graph.method == Method::Separable, fast);
            graph.edges.len() as f64
        })
        .collect()
}

#[test]
fn fast_path_matches_naive_sampler() {
    let g = graphex(r#"{"family":"fast-decay"}"#);
    let fast = edge_counts(&g, 4.0, 1, 10_000, true);
    let naive = edge_counts(&g, 4.0, 2, 10_000, false);
    let ks = ks_two_sample(&fast, &naive);
    assert!(ks.p_value >= 1e-3, "{ks:?}");
    let (mf, sf) = mean_sd(&fast);
    let (mn, sn) = mean_sd(&naive);
    let se = (sf * sf / 1e4 + sn * sn / 1e4).sqrt();
    assert!((mf - mn).abs() <= 4.0 * se, "{mf} vs {mn}");
}

#[test]
fn fast_path_with_self_edges_matches_theory() {
    let g = graphex(r#"{"family":"slow-decay","params":{"scale":1},"self_edges":true}"#);
    let mut cfg = HarnessConfig::new(5, 2000);
    cfg.epsilon = 1e-2;
    let report = validate_expectations(&g, &[3.0], &Statistic::standard(&[1, 2, 3]), &cfg).unwrap();
    assert!(report.all_pass, "{report:#?}");
}

#[test]
fn label_is_independent_of_degree() {
    // Exchangeability surrogate: labels are uniform on [0, ν] whatever the
    // vertex's role, so the two halves of the label range look alike.
    let g = graphex(r#"{"family":"caron-fox","exprs":{"S":"exp(-x)/2"},"I":0.1}"#);
    let nu = 8.0;
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut labels = Vec::new();
    for r in 0..400 {
        let graph = sample_keg(&g, &SamplerConfig::new(nu, 11).replicate(r)).unwrap();
        for (d, &l) in degrees(&graph).iter().zip(&graph.labels) {
            labels.push(l);
            if l < nu / 2.0 {
                low.push(*d as f64);
            } else {
                high.push(*d as f64);
            }
        }
    }
    let ks = ks_two_sample(&low, &high);
    assert!(ks.p_value >= 1e-3, "{ks:?}");
    let grid: Vec<f64> = (0..20_000).map(|i| (i as f64 + 0.5) / 20_000.0 * nu).collect();
    let ks = ks_two_sample(&labels, &grid);
    assert!(ks.p_value >= 1e-3, "labels not uniform: {ks:?}");
}

#[test]
fn truncation_loss_within_epsilon() {
    let g = graphex(r#"{"family":"fast-decay"}"#);
    let nu = 5.0;
    let eps = 1e-3;
    let t = keg::sampler::choose_theta_max(&g, nu, eps).unwrap();
    // Exact edges with both endpoints in [0, T]: ½ν²(1 − e^{−T})².
    let kept = 0.5 * nu * nu * (1.0 - (-t).exp()).powi(2);
    let full = theory::expected_edges(&g, nu, 1e-12).unwrap().value;
    assert!(full - kept <= eps, "loss {}", full - kept);

    let naive: Vec<f64> = edge_counts(&g, nu, 3, 4000, false);
    let (m, s) = mean_sd(&naive);
    assert!((m - full).abs() <= 4.0 * s / 4000f64.sqrt(), "{m} vs {full}");
}

#[test]
fn full_graphex_components_match_theory() {
    let g = graphex(r#"{"family":"caron-fox","exprs":{"S":"exp(-2*x)"},"I":0.3,"self_edges":true}"#);
    let stats = [
        Statistic::Edges,
        Statistic::Vertices,
        Statistic::Degree(1),
        Statistic::Degree(2),
        Statistic::Degree(4),
        Statistic::StarEdges,
        Statistic::IsolatedEdges,
    ];
    let report = validate_expectations(&g, &[3.0, 6.0], &stats, &HarnessConfig::new(17, 600)).unwrap();
    assert!(report.all_pass, "{report:#?}");
}

#[test]
fn unit_square_constant_edge_mean() {
    let g = graphex(r#"{"family":"constant","params":{"p":1}}"#);
    assert!((theory::expected_edges(&g, 5.0, 1e-12).unwrap().value - 12.5).abs() < 1e-9);
    let r = validate_expectations(&g, &[5.0], &[Statistic::Edges], &HarnessConfig::new(21, 1000)).unwrap();
    assert!(r.all_pass, "{r:#?}");

    let loops = graphex(r#"{"family":"constant","params":{"p":1},"self_edges":true}"#);
    assert!((theory::expected_edges(&loops, 5.0, 1e-12).unwrap().value - 17.5).abs() < 1e-9);
    let r = validate_expectations(&loops, &[5.0], &[Statistic::Edges, Statistic::Vertices], &HarnessConfig::new(22, 1000)).unwrap();
    assert!(r.all_pass, "{r:#?}");
}

#[test]
fn slow_decay_vertices_at_twenty() {
    let g = graphex(r#"{"family":"slow-decay"}"#);
    let r = validate_expectations(&g, &[20.0], &[Statistic::Vertices], &HarnessConfig::new(23, 500)).unwrap();
    let a: f64 = 20.0 / 3.0;
    let closed = 20.0 * (std::f64::consts::PI.sqrt() * a.sqrt() * keg::quadrature::erf(a.sqrt()) + (-a).exp() - 1.0);
    assert!((r.rows[0].theory - closed).abs() < 1e-6 * closed);
    assert!(r.all_pass, "{r:#?}");
}

#[test]
fn planted_point_degree_is_poisson() {
    let fast = graphex(r#"{"family":"fast-decay"}"#);
    let r = planted_degree_test(&fast, &[0.0, 1.5], 10.0, &HarnessConfig::new(31, 4000)).unwrap();
    assert!(r.all_pass, "{r:#?}");
    let cf = graphex(r#"{"family":"caron-fox"}"#);
    let r = planted_degree_test(&cf, &[0.5], 6.0, &HarnessConfig::new(32, 4000)).unwrap();
    assert!(r.all_pass, "{r:#?}");
}

#[test]
fn isolated_only_projectivity() {
    let g = graphex(r#"{"family":"constant","params":{"p":0},"I":0.5}"#);
    let r = projectivity_test(&g, 4.0, &HarnessConfig::new(41, 2000)).unwrap();
    assert!(r.p_value >= 1e-3, "{r:?}");
    // Both arms are Poisson(ν²I) = Poisson(8).
    for m in [r.mean_edges_restricted, r.mean_edges_direct] {
        assert!((m - 8.0).abs() < 4.0 * (8.0f64 / 2000.0).sqrt(), "{m}");
    }
}

#[test]
fn projectivity_for_caron_fox_with_stars() {
    let g = graphex(r#"{"family":"caron-fox","exprs":{"S":"exp(-x)"},"self_edges":true}"#);
    let r = projectivity_test(&g, 3.0, &HarnessConfig::new(43, 2000)).unwrap();
    assert!(r.p_value >= 1e-3, "{r:?}");
}

#[test]
fn reports_do_not_depend_on_thread_count() {
    let g = graphex(r#"{"family":"slow-decay"}"#);
    let cfg = HarnessConfig::new(51, 64);
    let run = || serde_json::to_string(&validate_expectations(&g, &[4.0, 8.0], &Statistic::standard(&[1]), &cfg).unwrap()).unwrap();
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(run);
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(run);
    assert_eq!(single, many);
}
