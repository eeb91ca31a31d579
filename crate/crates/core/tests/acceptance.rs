//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p rode-core --test acceptance`. Figure baselines are
//! rewritten when RODE_BLESS=1 is set.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use rode_core::config::named_example;
use rode_core::density::{density_grid, exact_gaussian_homogeneous, f1_mc, DensityGrid, Formula, GaussianLogFactor};
use rode_core::distributions::ScalarDistribution;
use rode_core::kl::{brownian_bridge, brownian_motion, nystrom_solve, parseval_partial_sums, CovKernel, KlProcess};
use rode_core::quadrature::{integrate_pieces, legendre_on, QuadratureSpec};
use rode_core::solution::{residual_check, sample_paths, ProblemSpec};
use rode_core::verify::{convergence_table, exact_oracle, normalization_audit, trapezoid};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn problem(name: &str) -> ProblemSpec {
    named_example(name).unwrap().problem.build().unwrap()
}

fn table_criterion(name: &str, tol: f64, oracle: bool) -> Outcome {
    let ex = named_example(name).unwrap();
    let spec = ex.problem.build().unwrap();
    let xs = ex.xs.points();
    let g = if oracle { Some(exact_oracle(&spec, ex.t, &xs).unwrap()) } else { None };
    let rep = convergence_table(&spec, &ex.ns, ex.t, &xs, &ex.quad, Formula::Auto, g.as_deref()).unwrap();
    let mut pass = true;
    let mut details = Vec::new();
    for (row, &want) in rep.rows.iter().zip(&ex.reference_errors) {
        let r = rel(row.error, want);
        let ok = r <= tol;
        pass &= ok;
        details.push(format!(
            "N={}: got {:.6e}, reference {:.6e}, relative gap {:.3} ({})",
            row.n,
            row.error,
            want,
            r,
            if ok { "ok" } else { "outside" }
        ));
    }
    pass &= rep.rows.len() == ex.reference_errors.len();
    Outcome {
        pass,
        summary: format!("{name} table at t={} within {}% relative ({:?})", ex.t, tol * 100.0, rep.formula),
        details,
    }
}

fn criterion1() -> Outcome {
    table_criterion("example1", 0.05, true)
}

fn criterion2() -> Outcome {
    table_criterion("example2", 0.10, false)
}

fn criterion3() -> Outcome {
    table_criterion("example3", 0.05, false)
}

/// Exact oracle: unit mass and agreement with a sampled histogram.
fn criterion4() -> Outcome {
    let x0 = ScalarDistribution::uniform(1.0, 2.0).unwrap();
    let k = GaussianLogFactor::brownian(0.5);
    let f = |x: f64| exact_gaussian_homogeneous(&x0, x, k);
    // Breakpoints at the kinks of the density and far into both tails.
    let mass = integrate_pieces(f, &[0.0, 0.25, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 40.0], 1e-13, 1e-12).value;
    let mass_ok = (mass - 1.0).abs() < 1e-6;

    // Window histogram: fraction of 1e7 draws within +-h of each grid point,
    // compared with the oracle averaged over the same window.
    let n = 10_000_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(20240607);
    let sd = k.variance.sqrt();
    let normal = ScalarDistribution::normal(0.0, 1.0).unwrap();
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = x0.sample(&mut rng);
            u * (sd * normal.sample(&mut rng)).exp()
        })
        .collect();
    draws.sort_by(|a, b| a.total_cmp(b));
    let h = 0.02;
    let xs: Vec<f64> = (0..401).map(|i| 4.0 * i as f64 / 400.0).collect();
    let mut gap: f64 = 0.0;
    for &x in &xs {
        let lo = draws.partition_point(|&d| d < x - h);
        let hi = draws.partition_point(|&d| d < x + h);
        let hist = (hi - lo) as f64 / (n as f64 * 2.0 * h);
        let avg = legendre_on(x - h, x + h, 8).integrate(|s| if s > 0.0 { f(s) } else { 0.0 }) / (2.0 * h);
        gap = gap.max((hist - avg).abs());
    }
    let hist_ok = gap < 1e-2;
    Outcome {
        pass: mass_ok && hist_ok,
        summary: format!("oracle mass {mass:.12} (|1-m| < 1e-6) and histogram sup gap {gap:.3e} (< 1e-2)"),
        details: vec![],
    }
}

/// Isolated-coefficient forms against the direct ones.
fn criterion5() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let cases = [
        ("example5", 1usize, 0.4, Formula::Eta1, Formula::Complete, 0.02, 1.2, 64usize),
        ("example2", 2usize, 0.7, Formula::Xi1, Formula::Homogeneous, 0.15, 3.0, 64usize),
    ];
    for (name, n, t, alt, direct, lo, hi, nodes) in cases {
        let spec = problem(name);
        let xs: Vec<f64> = (0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect();
        let q = QuadratureSpec::tensor(nodes);
        let a = density_grid(&spec, n, &xs, &[t], &q, alt).unwrap();
        let b = density_grid(&spec, n, &xs, &[t], &q, direct).unwrap();
        let gap = a.values[0].iter().zip(&b.values[0]).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        let ok = gap < 5e-3;
        pass &= ok;
        details.push(format!("{name} N={n} t={t}: {alt} vs {direct} max gap {gap:.3e} over 20 points"));
    }
    Outcome { pass, summary: "formula equivalence within 5e-3 absolute".into(), details }
}

/// Monte Carlo expectation form against tensor quadrature at random points.
///
/// Each t is uniform on [0.05, 1); each x is a draw of the truncated solution
/// at that t, so points fall where the density has mass.
fn criterion6() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;
    let mut worst: f64 = 0.0;
    for seed in [1u64, 2, 3] {
        for name in ["example1", "example4"] {
            let spec = problem(name);
            for n in [1usize, 2] {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * seed + n as u64);
                let mut fails = 0;
                for k in 0..10 {
                    let t = rng.random_range(0.05..1.0);
                    let x = sample_paths(&spec, n, n, 1, &[t], rng.random()).unwrap()[0].x_vals[0];
                    let tensor = density_grid(&spec, n, &[x], &[t], &QuadratureSpec::tensor(24), Formula::Auto)
                        .unwrap()
                        .values[0][0];
                    let mc = f1_mc(&spec, n, x, t, 1_000_000, seed * 100 + k).unwrap();
                    let z = (mc.estimate - tensor).abs() / mc.stderr;
                    worst = worst.max(z);
                    if z > 3.0 {
                        fails += 1;
                        details.push(format!(
                            "seed {seed} {name} N={n} (x={x:.4}, t={t:.4}): mc {:.6e} +- {:.2e}, tensor {tensor:.6e}, {z:.2} stderr",
                            mc.estimate, mc.stderr
                        ));
                    }
                }
                pass &= fails == 0;
            }
        }
    }
    Outcome {
        pass,
        summary: format!("MC (1e6 samples) within 3 stderr of tensor at 10 solution draws x 2 examples x N in {{1,2}} x 3 seeds; worst {worst:.2} stderr"),
        details,
    }
}

fn l2_gap(f: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..64 {
        let a = k as f64 / 64.0;
        acc += legendre_on(a, a + 1.0 / 64.0, 10).integrate(|s| (f(s) - g(s)).powi(2));
    }
    acc.sqrt()
}

fn nystrom_case(kernel: CovKernel, exact: KlProcess) -> (bool, String) {
    let p = nystrom_solve(&kernel, 200, 5).unwrap();
    let mut worst_rel: f64 = 0.0;
    let mut worst_l2: f64 = 0.0;
    for j in 1..=5 {
        let m = p.mode(j).unwrap();
        let e = exact.mode(j).unwrap();
        worst_rel = worst_rel.max(rel(m.eigenvalue, e.eigenvalue));
        let plus = l2_gap(|s| m.basis.eval(s), |s| e.basis.eval(s));
        let minus = l2_gap(|s| m.basis.eval(s), |s| -e.basis.eval(s));
        worst_l2 = worst_l2.max(plus.min(minus));
    }
    (
        worst_rel < 1e-4 && worst_l2 < 1e-3,
        format!(
            "{}: max eigenvalue rel err {worst_rel:.3e} (< 1e-4), max eigenfunction L2 gap {worst_l2:.3e} (< 1e-3)",
            kernel.name
        ),
    )
}

fn criterion7() -> Outcome {
    let (a, da) = nystrom_case(CovKernel::brownian_motion(0.0, 1.0).unwrap(), brownian_motion(0.0, 1.0).unwrap());
    let (b, db) = nystrom_case(CovKernel::brownian_bridge(0.0, 1.0).unwrap(), brownian_bridge(0.0, 1.0).unwrap());
    Outcome { pass: a && b, summary: "Nystrom top-5 eigenpairs at 200 nodes".into(), details: vec![da, db] }
}

/// Support-covering grid for the normalization audit.
fn audit_grid(name: &str) -> Vec<f64> {
    match name {
        "example1" => (0..=1200).map(|i| 6.0 * i as f64 / 1200.0).collect(),
        // Heavy-tailed rate: a geometric grid out to x = 200.
        "example2" => {
            let mut v = vec![0.0];
            v.extend((0..=2400).map(|i| 1e-4 * (2e6f64).powf(i as f64 / 2400.0)));
            v
        }
        "example3" => (0..=600).map(|i| 1.5 * i as f64 / 600.0).collect(),
        "example4" => (0..=400).map(|i| -8.0 + 16.0 * i as f64 / 400.0).collect(),
        "example5" => (0..=400).map(|i| -0.5 + 4.0 * i as f64 / 400.0).collect(),
        _ => unreachable!(),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct CurveSummary {
    peak: f64,
    mode: f64,
    mass: f64,
    probes: Vec<f64>,
}

fn summarize(g: &DensityGrid) -> CurveSummary {
    let v = &g.values[0];
    let (i, peak) =
        v.iter().enumerate().fold((0, f64::MIN), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) });
    let probes = (1..=8).map(|k| v[k * (v.len() - 1) / 9]).collect();
    CurveSummary { peak, mode: g.xs[i], mass: trapezoid(&g.xs, v), probes }
}

/// Count local maxima that rise more than `tol * peak` above the neighbouring minima.
fn prominent_maxima(v: &[f64], tol: f64) -> usize {
    let peak = v.iter().cloned().fold(0.0, f64::max);
    let thr = tol * peak;
    let mut count = 0;
    let mut low = v[0];
    let mut high = v[0];
    let mut rising = true;
    for &x in &v[1..] {
        if rising {
            if x > high {
                high = x;
            } else if high - x > thr {
                if high - low > thr {
                    count += 1;
                }
                rising = false;
                low = x;
            }
        } else if x < low {
            low = x;
        } else if x - low > thr {
            rising = true;
            high = x;
        }
    }
    if rising && high - low > thr {
        count += 1;
    }
    count
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/figures.json")
}

/// (figure, example, N values, quadrature, expected mode window)
type FigureCase = (&'static str, &'static str, &'static [usize], QuadratureSpec, (f64, f64));

fn figures(details: &mut Vec<String>) -> bool {
    let specs: [FigureCase; 5] = [
        ("brownia", "example1", &[1, 2, 3], QuadratureSpec::tensor(24), (1.0, 2.0)),
        ("nog", "example2", &[1, 2, 3], QuadratureSpec::tensor(64), (0.8, 2.2)),
        ("lip", "example3", &[1, 2, 3, 4], QuadratureSpec::tensor(16), (0.2, 0.7)),
        ("comp", "example4", &[1, 2, 3], QuadratureSpec::tensor(12), (-0.5, 0.5)),
        ("comp2", "example5", &[1, 2], QuadratureSpec::mc(40_000, 1), (0.15, 0.6)),
    ];
    let mut pass = true;
    let mut current = BTreeMap::new();
    for (fig, name, ns, quad, (mlo, mhi)) in specs {
        let ex = named_example(name).unwrap();
        let spec = ex.problem.build().unwrap();
        let xs = ex.xs.points();
        for &n in ns {
            let g = density_grid(&spec, n, &xs, &[ex.t], &quad, Formula::Auto).unwrap();
            let s = summarize(&g);
            let tol = if quad.is_mc() { 0.1 } else { 0.01 };
            let maxima = prominent_maxima(&g.values[0], tol);
            let ok = maxima == 1 && s.mode >= mlo && s.mode <= mhi;
            pass &= ok;
            details.push(format!(
                "{fig} N={n}: mode {:.3} in [{mlo}, {mhi}], {maxima} prominent maximum(s), peak {:.5}",
                s.mode, s.peak
            ));
            current.insert(format!("{fig}/N{n}"), s);
        }
    }
    let path = fixture_path();
    if std::env::var("RODE_BLESS").is_ok_and(|v| v == "1") {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&current).unwrap()).unwrap();
        details.push(format!("figure baselines written to {}", path.display()));
        return pass;
    }
    let locked: BTreeMap<String, CurveSummary> = match std::fs::read_to_string(&path) {
        Ok(s) => serde_json::from_str(&s).unwrap(),
        Err(_) => {
            details.push("no figure baseline; run once with RODE_BLESS=1 after checking shapes".into());
            return false;
        }
    };
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-12);
    for (key, s) in &current {
        let ok = locked.get(key).is_some_and(|l| {
            close(l.peak, s.peak)
                && close(l.mode, s.mode)
                && close(l.mass, s.mass)
                && l.probes.len() == s.probes.len()
                && l.probes.iter().zip(&s.probes).all(|(a, b)| close(*a, *b))
        });
        if !ok {
            details.push(format!("{key}: differs from the locked baseline"));
        }
        pass &= ok;
    }
    pass
}

fn criterion8() -> Outcome {
    let mut details = Vec::new();
    let mut pass = true;

    // Normalization and non-negativity, tensor rules, N <= 3.
    let mut worst: f64 = 0.0;
    for name in ["example1", "example2", "example3", "example4", "example5"] {
        let spec = problem(name);
        let ex = named_example(name).unwrap();
        let xs = audit_grid(name);
        for n in 1..=3 {
            // Six dimensions with forcing at N = 3: 10 nodes keep the grid at 1e6 atoms.
            let nodes = if spec.b.is_some() && n == 3 { 10 } else { 16 };
            let quad = QuadratureSpec::Tensor { nodes_per_dim: nodes, inner_time_nodes: 64, tensor_cap: 2e7 };
            let g = density_grid(&spec, n, &xs, &[ex.t], &quad, Formula::Auto).unwrap();
            let row = &normalization_audit(&g)[0];
            let nonneg = g.values[0].iter().all(|&v| v >= 0.0);
            let raw_ok = g.diagnostics.raw_min.is_none_or(|m| m >= -1e-9);
            let ok = (0.98..=1.02).contains(&row.integral) && nonneg && raw_ok;
            worst = worst.max((row.integral - 1.0).abs());
            pass &= ok;
            if !ok || row.warning.is_some() {
                details.push(format!(
                    "{name} N={n}: mass {:.5}, raw min {:?}, warning {:?}",
                    row.integral, g.diagnostics.raw_min, row.warning
                ));
            }
        }
    }
    details.push(format!("normalization: worst |mass - 1| = {worst:.3e} over 15 runs (<= 0.02)"));

    // Parseval partial sums of Brownian motion increase towards t - t0.
    let bm = brownian_motion(0.0, 1.0).unwrap();
    let ns = [1usize, 2, 4, 8, 16, 32, 64, 128, 256];
    let mut parseval_ok = true;
    for t in [0.25, 0.5, 1.0] {
        let s = parseval_partial_sums(&bm, t, &ns);
        let monotone = s.windows(2).all(|w| w[1] >= w[0] - 1e-15);
        let below = s.iter().all(|&v| v <= t + 1e-12);
        let close = (t - s[s.len() - 1]) < 5e-3 * t;
        parseval_ok &= monotone && below && close;
    }
    pass &= parseval_ok;
    details.push(format!("Parseval partial sums nondecreasing, below t, approaching t: {parseval_ok}"));

    // Path residual of the finite-difference derivative is second order.
    let spec = problem("example4");
    let mut hs = Vec::new();
    let mut res = Vec::new();
    for k in [20usize, 40, 80, 160] {
        let ts: Vec<f64> = (0..=k).map(|i| i as f64 / k as f64).collect();
        let paths = sample_paths(&spec, 3, 3, 8, &ts, 11).unwrap();
        let r = paths.iter().map(|p| residual_check(p, &spec).unwrap()).fold(0.0, f64::max);
        hs.push((1.0 / k as f64).ln());
        res.push(r.ln());
    }
    let mx = hs.iter().sum::<f64>() / hs.len() as f64;
    let my = res.iter().sum::<f64>() / res.len() as f64;
    let slope = hs.iter().zip(&res).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / hs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let slope_ok = (1.8..=2.2).contains(&slope);
    pass &= slope_ok;
    details.push(format!("path residual slope {slope:.3} (in [1.8, 2.2])"));

    pass &= figures(&mut details);
    Outcome { pass, summary: "invariant suites and figure shape/regression locks".into(), details }
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion1),
        (2, criterion2),
        (3, criterion3),
        (4, criterion4),
        (5, criterion5),
        (6, criterion6),
        (7, criterion7),
        (8, criterion8),
    ];
    let only: Option<u32> = std::env::var("RODE_CRITERION").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (id, f) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let out = f();
        println!(
            "{} criterion {id}: {} [{:.1}s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.summary,
            start.elapsed().as_secs_f64()
        );
        for d in &out.details {
            println!("    {d}");
        }
        if !out.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criterion/criteria failed");
        std::process::exit(1);
    }
}
