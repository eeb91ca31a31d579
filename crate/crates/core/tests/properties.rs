use proptest::prelude::*;

use rode_core::config::{named_example, XsGrid};
use rode_core::density::{density_grid, f1_mc, Formula};
use rode_core::distributions::ScalarDistribution;
use rode_core::kl::brownian_motion;
use rode_core::quadrature::{hermite, legendre, probability_rule, QuadratureSpec};
use rode_core::solution::ProblemSpec;
use rode_core::verify::{h4_closed_form, h4_norm_estimate, linf_error};

fn problem(name: &str) -> ProblemSpec {
    named_example(name).unwrap().problem.build().unwrap()
}

fn vecs(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linf_is_a_metric((a, b, c) in (1usize..40).prop_flat_map(|n| (vecs(n), vecs(n), vecs(n)))) {
        let ab = linf_error(&a, &b).unwrap();
        prop_assert_eq!(ab, linf_error(&b, &a).unwrap());
        prop_assert_eq!(linf_error(&a, &a).unwrap(), 0.0);
        prop_assert!(ab >= 0.0);
        let ac = linf_error(&a, &c).unwrap();
        let cb = linf_error(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12 * (ac + cb));
    }

    #[test]
    fn linf_rejects_mismatched_lengths(a in vecs(3), b in vecs(4)) {
        prop_assert!(linf_error(&a, &b).is_err());
    }

    #[test]
    fn legendre_is_exact_to_degree_2n_minus_1(n in 1usize..30, k in 0usize..60) {
        prop_assume!(k < 2 * n);
        let r = legendre(n);
        let got = r.integrate(|x| x.powi(k as i32));
        let want = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        prop_assert!((got - want).abs() < 1e-12, "n={} k={}: {} vs {}", n, k, got, want);
    }

    #[test]
    fn hermite_reproduces_normal_moments(n in 1usize..30, k in 0usize..12) {
        prop_assume!(k < 2 * n);
        let got = hermite(n).integrate(|x| x.powi(k as i32));
        // E[Z^k] = (k - 1)!! for even k.
        let want = if k % 2 == 1 { 0.0 } else { (1..k).step_by(2).map(|j| j as f64).product() };
        prop_assert!((got - want).abs() < 1e-9 * want.max(1.0), "n={} k={}: {} vs {}", n, k, got, want);
    }

    #[test]
    fn probability_rules_are_normalized(n in 1usize..80, which in 0usize..5) {
        let d = match which {
            0 => ScalarDistribution::standard_normal(),
            1 => ScalarDistribution::uniform(-2.0, 5.0).unwrap(),
            2 => ScalarDistribution::beta(5.0, 6.0).unwrap(),
            3 => ScalarDistribution::gamma(4.0, 9.0).unwrap(),
            _ => ScalarDistribution::quartic_cauchy(),
        };
        let r = probability_rule(&d, n).unwrap();
        // Hermite, Legendre and Laguerre rules are exact probability measures;
        // the Beta(5, 6) density is a degree 9 polynomial, integrated exactly
        // from 5 nodes; the quartic Cauchy weights only converge.
        let tol = match which {
            2 if n < 5 => f64::INFINITY,
            4 => if n >= 32 { 1e-6 } else { f64::INFINITY },
            _ => 1e-10,
        };
        prop_assert!((r.weight_sum() - 1.0).abs() < tol, "n={} sum={}", n, r.weight_sum());
        prop_assert!(r.weights.iter().all(|&w| w >= 0.0));
        let s = d.support();
        prop_assert!(r.nodes.iter().all(|&x| s.contains(x)));
    }

    #[test]
    fn densities_are_nonnegative(x in -3.0f64..4.0, t in 0.0f64..1.0, n in 1usize..4, which in 0usize..3) {
        let name = ["example1", "example3", "example4"][which];
        let g = density_grid(&problem(name), n, &[x], &[t], &QuadratureSpec::tensor(6), Formula::Auto).unwrap();
        prop_assert!(g.values[0][0] >= 0.0);
        prop_assert!(g.values[0][0].is_finite());
    }

    #[test]
    fn xs_grid_text_round_trip(lo in -10.0f64..10.0, w in 0.0f64..10.0, n in 0usize..500) {
        let g = XsGrid::new(lo, lo + w, n);
        prop_assert_eq!(g.to_string().parse::<XsGrid>().unwrap(), g);
        prop_assert_eq!(g.points().len(), n);
    }
}

#[test]
fn runs_are_deterministic() {
    let spec = problem("example5");
    let xs = [0.1, 0.4, 0.9];
    let q = QuadratureSpec::mc(2000, 7);
    let a = density_grid(&spec, 2, &xs, &[0.4], &q, Formula::Auto).unwrap();
    let b = density_grid(&spec, 2, &xs, &[0.4], &q, Formula::Auto).unwrap();
    assert_eq!(a, b);
    let c = density_grid(&spec, 2, &xs, &[0.4], &QuadratureSpec::mc(2000, 8), Formula::Auto).unwrap();
    assert_ne!(a.values, c.values);
    let e1 = problem("example1");
    let t1 = density_grid(&e1, 3, &xs, &[0.5], &QuadratureSpec::tensor(12), Formula::Auto).unwrap();
    let t2 = density_grid(&e1, 3, &xs, &[0.5], &QuadratureSpec::tensor(12), Formula::Auto).unwrap();
    assert_eq!(t1, t2);
    let m1 = f1_mc(&e1, 2, 1.3, 0.5, 5000, 3).unwrap();
    let m2 = f1_mc(&e1, 2, 1.3, 0.5, 5000, 3).unwrap();
    assert_eq!(m1, m2);
}

/// Monte Carlo estimate of ||e^{-K_a(t)}||_{L^q} for Gaussian Brownian
/// coefficients against the lognormal closed form, over q, t and N.
#[test]
fn h4_norm_matches_closed_form() {
    let a = brownian_motion(0.0, 1.0).unwrap();
    let mut bad = Vec::new();
    for q in [2.0, 4.0, 12.0] {
        for n in 1..=3 {
            let ts = [0.25, 0.5, 1.0];
            let est = h4_norm_estimate(&a, q, n, &ts, 100_000, 11).unwrap();
            for p in &est.points {
                let exact = h4_closed_form(&a, q, n, p.t, 64).unwrap();
                // Independent check of the closed form: e^{q var / 2} with var = sum c_j^2.
                let c = a.integrated_coefficients(p.t, n, 64);
                let var: f64 = c.iter().map(|c| c * c).sum();
                assert!((exact - (q * var / 2.0).exp()).abs() < 1e-12 * exact);
                let z = (p.estimate - exact).abs() / p.stderr;
                if z > 4.0 {
                    bad.push(format!(
                        "q={q} N={n} t={}: {:.6} +- {:.2e} vs {exact:.6} ({z:.1} stderr)",
                        p.t, p.estimate, p.stderr
                    ));
                }
            }
        }
    }
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}
