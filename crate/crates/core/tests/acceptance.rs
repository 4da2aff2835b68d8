//! Acceptance criteria. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Seeds are fixed here once and never tuned.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use keg::graphex::{build, Graphex, GraphexSpec};
use keg::graphstats::sparsity_ratio;
use keg::harness::{
    connectivity_experiment, degdist_experiment, planted_degree_test, projectivity_test, validate_expectations,
    HarnessConfig, KSchedule, Statistic,
};
use keg::quadrature::{erf, upper_gamma};
use keg::sampler::{sample_keg, write_edges_csv, SamplerConfig};
use keg::theory;

const SEED: u64 = 42;
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

fn graphex(json: &str) -> Graphex {
    build(&GraphexSpec::from_json(json).expect("spec parses")).expect("spec builds")
}

fn slow() -> Graphex {
    graphex(r#"{"family":"slow-decay"}"#)
}

fn fast() -> Graphex {
    graphex(r#"{"family":"fast-decay"}"#)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn criterion_1() -> Outcome {
    let g = slow();
    let mut worst = 0.0f64;
    for nu in [1.0, 12.0, 100.0] {
        let a: f64 = nu / 3.0;
        let want = nu * (std::f64::consts::PI.sqrt() * a.sqrt() * erf(a.sqrt()) + (-a).exp() - 1.0);
        let got = theory::expected_vertices(&g, nu, 1e-10).unwrap().value;
        worst = worst.max(rel(got, want));
    }
    let nu = 1e4;
    let scaled = theory::expected_vertices(&g, nu, 1e-10).unwrap().value / nu.powf(1.5) / (std::f64::consts::PI / 3.0).sqrt();
    outcome(
        worst <= 1e-6 && (0.97..=1.03).contains(&scaled),
        format!("max rel err {worst:.2e}; E[v]/(ν^1.5 √(π/3)) at ν=1e4 = {scaled:.5}"),
    )
}

fn criterion_2() -> Outcome {
    let g = fast();
    let mut worst_v = 0.0f64;
    for nu in [1.0f64, 5.0, 100.0] {
        let want = nu * (EULER_GAMMA + upper_gamma(0.0, nu).unwrap() + nu.ln());
        worst_v = worst_v.max(rel(theory::expected_vertices(&g, nu, 1e-10).unwrap().value, want));
    }
    let mut worst_k = 0.0f64;
    for nu in [1.0f64, 5.0, 100.0] {
        for k in [1u64, 2, 5] {
            let kf = k as f64;
            let gamma_k = keg::quadrature::log_gamma(kf).exp();
            let want = nu / gamma_k / kf * (gamma_k - upper_gamma(kf, nu).unwrap());
            worst_k = worst_k.max(rel(theory::expected_degree_k(&g, nu, k, 1e-10).unwrap().value, want));
        }
    }
    outcome(
        worst_v <= 1e-6 && worst_k <= 1e-6,
        format!("vertices max rel err {worst_v:.2e}; degree max rel err {worst_k:.2e}"),
    )
}

fn criterion_3() -> Outcome {
    let cfg = HarnessConfig::new(SEED, 500);
    let stats = Statistic::standard(&[1, 2]);
    let cases = [
        ("slow-decay", slow()),
        ("fast-decay", fast()),
        ("constant", graphex(r#"{"family":"constant","params":{"p":0.5,"c":2},"self_edges":true}"#)),
    ];
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, g) in &cases {
        let report = validate_expectations(g, &[5.0, 10.0, 20.0], &stats, &cfg).unwrap();
        for r in &report.rows {
            worst = worst.max(r.z.abs());
            if r.z.abs() > 4.0 || r.z.is_nan() {
                failures.push(format!("{name}/{}@ν={} z={:.2}", r.statistic, r.nu, r.z));
            }
        }
    }
    outcome(failures.is_empty(), format!("36 rows, max |z| = {worst:.2} {failures:?}"))
}

fn criterion_4() -> Outcome {
    let g = slow();
    let report = degdist_experiment(&g, &[300.0], KSchedule::Fixed(1), Some(0.5), &HarnessConfig::new(SEED, 200)).unwrap();
    let p1 = report.rows[0].empirical_pmf;
    let c = theory::degree_ccdf_many(&g, 1e4, &[1, 2], 1e-10).unwrap();
    let pmf2 = c[0] - c[1];
    // Not part of the verdict: the law depends on scale·ν only, shown for the unscaled kernel.
    let unit = graphex(r#"{"family":"slow-decay","params":{"scale":1}}"#);
    let u = theory::degree_ccdf_many(&unit, 1e4, &[1, 2], 1e-10).unwrap();
    outcome(
        (p1 - 0.5).abs() <= 0.03 && (pmf2 - 0.125).abs() <= 1e-3,
        format!(
            "empirical P(D=1) at ν=300 = {p1:.4} (0.5 ± 0.03); theory pmf(2) at ν=1e4 = {pmf2:.6} (0.125 ± 1e-3); scale 1 gives {:.6}",
            u[0] - u[1]
        ),
    )
}

fn criterion_5() -> Outcome {
    let report =
        degdist_experiment(&fast(), &[100.0, 1000.0], KSchedule::Power(0.5), Some(0.5), &HarnessConfig::new(SEED, 50))
            .unwrap();
    let cdfs: Vec<f64> = report.rows.iter().map(|r| r.empirical_cdf).collect();
    let gaps: Vec<f64> = report.rows.iter().map(|r| r.gap_to_limit.unwrap()).collect();
    outcome(
        gaps[1] <= gaps[0] && gaps[1] <= 0.08,
        format!("P(D ≤ √ν) = {cdfs:.4?}, gaps to 0.5 = {gaps:.4?}"),
    )
}

// Empty graphs, where the ratio is undefined, are skipped.
fn mean_sparsity(g: &Graphex, nu: f64, reps: u64) -> f64 {
    let xs: Vec<f64> = (0..reps)
        .filter_map(|r| sparsity_ratio(&sample_keg(g, &SamplerConfig::new(nu, SEED).replicate(r)).unwrap()).ok())
        .collect();
    keg::harness::mean_sd(&xs).0
}

fn criterion_6() -> Outcome {
    let grid = [10.0, 40.0, 160.0];
    let dense = graphex(r#"{"family":"graphon-dilation","params":{"grid":[[0.5]],"c":1}}"#);
    let d: Vec<f64> = grid.iter().map(|&nu| mean_sparsity(&dense, nu, 20)).collect();
    let dense_ok = d.iter().all(|&x| x / d[2] >= 0.9 && x / d[2] <= 1.1);
    let s: Vec<f64> = grid.iter().map(|&nu| mean_sparsity(&slow(), nu, 20)).collect();
    let sparse_ok = s[0] / s[2] >= 2.0;
    outcome(dense_ok && sparse_ok, format!("dense √e/v = {d:.4?}; slow-decay √e/v = {s:.4?} (drop {:.2}×)", s[0] / s[2]))
}

fn criterion_7() -> Outcome {
    let report = connectivity_experiment(&fast(), &[25.0, 50.0, 100.0, 200.0], 0.95, &HarnessConfig::new(SEED, 50)).unwrap();
    let means: Vec<f64> = report.rows.iter().map(|r| r.mean_fraction).collect();
    outcome(
        report.nondecreasing && report.final_fraction >= 0.95,
        format!("mean largest-component fraction = {means:.4?}"),
    )
}

fn criterion_8() -> Outcome {
    let r = projectivity_test(&slow(), 10.0, &HarnessConfig::new(SEED, 2000)).unwrap();
    outcome(
        r.p_value >= 1e-3,
        format!("KS D = {:.4}, p = {:.4}; mean edges {:.3} vs {:.3}", r.ks_statistic, r.p_value, r.mean_edges_restricted, r.mean_edges_direct),
    )
}

fn criterion_9() -> Outcome {
    let g = graphex(r#"{"family":"constant","params":{"p":0},"exprs":{"S":"exp(-x)"},"I":0.2}"#);
    let mut cfg = HarnessConfig::new(SEED, 10_000);
    cfg.z_crit = 3.0;
    let r = validate_expectations(&g, &[10.0], &[Statistic::IsolatedEdges, Statistic::StarEdges], &cfg).unwrap();
    let iso = &r.rows[0];
    let star = &r.rows[1];
    let targets_ok = (iso.theory - 20.0).abs() < 1e-9 && (star.theory - 100.0).abs() < 1e-6;
    outcome(
        r.all_pass && targets_ok,
        format!(
            "isolated mean {:.3} (theory {}, z {:.2}); star mean {:.3} (theory {}, z {:.2})",
            iso.mean, iso.theory, iso.z, star.mean, star.theory, star.z
        ),
    )
}

fn criterion_10() -> Outcome {
    let r = planted_degree_test(&slow(), &[0.0, 2.0], 20.0, &HarnessConfig::new(SEED, 10_000)).unwrap();
    let parts: Vec<String> = r
        .rows
        .iter()
        .map(|row| format!("λ={}: mean {:.3} vs {:.3}, χ²={:.2} df={} p={:.4}", row.lambda, row.sample_mean, row.poisson_mean, row.chi_square.statistic, row.chi_square.df, row.chi_square.p_value))
        .collect();
    outcome(r.all_pass, parts.join("; "))
}

fn criterion_11() -> Outcome {
    let g = slow();
    let csv = || {
        let graph = sample_keg(&g, &SamplerConfig::new(50.0, SEED)).unwrap();
        let mut buf = Vec::new();
        write_edges_csv(&graph, &mut buf).unwrap();
        buf
    };
    let report = || {
        let r = validate_expectations(&g, &[5.0], &Statistic::standard(&[1]), &HarnessConfig::new(SEED, 40)).unwrap();
        serde_json::to_vec(&r).unwrap()
    };
    let (a, b) = (csv(), csv());
    let (ra, rb) = (report(), report());
    outcome(a == b && ra == rb, format!("edge list {} bytes, report {} bytes", a.len(), ra.len()))
}

type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        (1, "closed form, slow decay", Duration::from_secs(1), criterion_1),
        (2, "closed form, fast decay", Duration::from_secs(1), criterion_2),
        (3, "Monte Carlo expectations", Duration::from_secs(120), criterion_3),
        (4, "degree-law limit", Duration::from_secs(120), criterion_4),
        (5, "fast-decay scaling", Duration::from_secs(180), criterion_5),
        (6, "dense iff compact", Duration::from_secs(60), criterion_6),
        (7, "giant component", Duration::from_secs(300), criterion_7),
        (8, "projectivity", Duration::from_secs(60), criterion_8),
        (9, "representation components", Duration::from_secs(60), criterion_9),
        (10, "planted-vertex degree law", Duration::from_secs(60), criterion_10),
        (11, "determinism", Duration::from_secs(60), criterion_11),
    ];
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, limit, run) in criteria {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let pass = o.pass && took <= limit;
        if !pass {
            failed += 1;
        }
        println!(
            "[{}] criterion {id:>2} {name}: {} ({:.2}s, limit {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
