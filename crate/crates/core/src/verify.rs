//! Error metrics, convergence tables, normalization audits and checks of
//! the convergence-theorem hypotheses.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{
    density_grid, exact_gaussian_grid, int_phi1_nonzero, psi1_positive, DensityGrid, Formula, GaussianLogFactor,
};
use crate::distributions::{DistKind, ScalarDistribution, SupportSign};
use crate::error::{Error, Result};
use crate::kl::{CovKernel, KlProcess, MeanFn, SeriesFamily};
use crate::quadrature::{check_non_finite, legendre_on, mc_batches, QuadratureSpec, DEFAULT_INNER_TIME_NODES};
use crate::solution::ProblemSpec;

/// Default threshold below which a numeric H4 bound counts as evidence.
pub const H4_THRESHOLD: f64 = 1e6;

/// max |f - g| over a shared grid.
pub fn linf_error(f: &[f64], g: &[f64]) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::GridMismatch(f.len(), g.len()));
    }
    Ok(f.iter().zip(g).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorKind {
    VsOracle,
    VsNextN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub error: f64,
    pub kind: ErrorKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub grid: Vec<f64>,
    pub t: f64,
    pub method: QuadratureSpec,
    pub formula: Formula,
}

impl ConvergenceReport {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.error).collect()
    }

    /// Aligned two-column text table.
    pub fn to_text(&self) -> String {
        let heading = match self.rows.first().map(|r| r.kind) {
            Some(ErrorKind::VsNextN) => "Error between two consecutive orders",
            _ => "Error with respect to the exact density",
        };
        let mut out = format!("t = {}\n{:>4}  {}\n", self.t, "N", heading);
        for r in &self.rows {
            let label = match r.kind {
                ErrorKind::VsOracle => format!("{}", r.n),
                ErrorKind::VsNextN => format!("{}-{}", r.n, r.n + 1),
            };
            out.push_str(&format!("{label:>4}  {:.6e}\n", r.error));
        }
        out
    }
}

/// Errors of f_1^N on `xs` at time t for each N in `ns`.
///
/// With an oracle every N is compared with it; otherwise each N is compared
/// with the next entry of `ns` (so `ns.len() - 1` rows).
pub fn convergence_table(
    spec: &ProblemSpec,
    ns: &[usize],
    t: f64,
    xs: &[f64],
    quad: &QuadratureSpec,
    formula: Formula,
    oracle: Option<&[f64]>,
) -> Result<ConvergenceReport> {
    if ns.is_empty() {
        return Err(Error::InvalidParameter("no truncation orders given".into()));
    }
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let grids = sorted
        .par_iter()
        .map(|&n| density_grid(spec, n, xs, &[t], quad, formula))
        .collect::<Result<Vec<DensityGrid>>>()?;
    let rows = match oracle {
        Some(g) => grids
            .iter()
            .zip(&sorted)
            .map(|(d, &n)| Ok(ConvergenceRow { n, error: linf_error(&d.values[0], g)?, kind: ErrorKind::VsOracle }))
            .collect::<Result<Vec<_>>>()?,
        None => grids
            .windows(2)
            .zip(&sorted)
            .map(|(w, &n)| {
                Ok(ConvergenceRow { n, error: linf_error(&w[0].values[0], &w[1].values[0])?, kind: ErrorKind::VsNextN })
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(ConvergenceReport {
        rows,
        grid: xs.to_vec(),
        t,
        method: quad.clone(),
        formula: grids[0].formulas.first().copied().unwrap_or(formula),
    })
}

/// Law of K_a(t) when a is a zero-mean-coefficient Gaussian Brownian motion or
/// bridge family, for the exact homogeneous density.
pub fn exact_log_factor(spec: &ProblemSpec, t: f64) -> Result<GaussianLogFactor> {
    if spec.b.is_some() {
        return Err(Error::Unsupported("the exact oracle needs b = 0".into()));
    }
    spec.check_time(t)?;
    let (t0, t1) = spec.interval();
    let kernel = match spec.a.family() {
        Some((SeriesFamily::BrownianMotion, d)) if matches!(d.kind(), DistKind::Normal { .. }) => {
            CovKernel::brownian_motion(t0, t1)?
        }
        Some((SeriesFamily::BrownianBridge, d)) if matches!(d.kind(), DistKind::Normal { .. }) => {
            CovKernel::brownian_bridge(t0, t1)?
        }
        _ => {
            return Err(Error::Unsupported("the exact oracle needs a Gaussian Brownian motion or bridge for a".into()))
        }
    };
    let mean = spec.a.mean().integral(t0, t, DEFAULT_INNER_TIME_NODES);
    Ok(GaussianLogFactor::from_kernel(&kernel, mean, t))
}

/// Exact density values on `xs` at time t, when available.
pub fn exact_oracle(spec: &ProblemSpec, t: f64, xs: &[f64]) -> Result<Vec<f64>> {
    let k = exact_log_factor(spec, t)?;
    Ok(exact_gaussian_grid(&spec.x0, xs, k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationRow {
    pub t: f64,
    pub integral: f64,
    pub warning: Option<String>,
}

/// Trapezoid integral of each time slice of a grid.
pub fn normalization_audit(grid: &DensityGrid) -> Vec<NormalizationRow> {
    grid.ts
        .iter()
        .zip(&grid.values)
        .map(|(&t, row)| {
            let xs = &grid.xs;
            if xs.len() < 2 || xs[xs.len() - 1] <= xs[0] {
                return NormalizationRow { t, integral: 0.0, warning: Some("grid has zero width".into()) };
            }
            let integral = trapezoid(xs, row);
            let peak = row.iter().cloned().fold(0.0, f64::max);
            let edge = row[0].max(row[row.len() - 1]);
            let warning = if peak > 0.0 && edge >= 1e-4 * peak {
                Some(format!("boundary value {edge:.3e} exceeds 1e-4 of the peak {peak:.3e}; grid may miss mass"))
            } else {
                None
            };
            NormalizationRow { t, integral, warning }
        })
        .collect()
}

pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let parts: Vec<f64> = xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).collect();
    crate::quadrature::pairwise_sum(&parts)
}

/// E[e^{lambda X}] in closed form where known.
pub fn mgf(dist: &ScalarDistribution, lambda: f64) -> Option<f64> {
    match *dist.kind() {
        DistKind::Normal { mean, variance } => Some((lambda * mean + 0.5 * lambda * lambda * variance).exp()),
        DistKind::Uniform { lo, hi } => {
            if lambda == 0.0 {
                return Some(1.0);
            }
            let w = hi - lo;
            // e^{lambda (lo+hi)/2} sinh(lambda w / 2) / (lambda w / 2)
            let h = 0.5 * lambda * w;
            Some((lambda * 0.5 * (lo + hi)).exp() * h.sinh() / h)
        }
        DistKind::Gamma { shape, rate } => {
            Some(if lambda < rate { (1.0 - lambda / rate).powf(-shape) } else { f64::INFINITY })
        }
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Point {
    pub t: f64,
    pub estimate: f64,
    pub stderr: f64,
    pub closed_form: Option<f64>,
}

/// ||e^{-K_a(t, xi_N)}||_{L^q} over a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct H4Estimate {
    pub q: f64,
    pub n: usize,
    pub points: Vec<H4Point>,
    /// Largest Monte Carlo estimate and where it occurs.
    pub max_estimate: f64,
    pub t_at_max: f64,
    /// Largest closed-form value when every coefficient law has a known MGF.
    pub max_closed_form: Option<f64>,
}

/// Closed form of ||e^{-K_a(t)}||_{L^q} for independent coefficients with known MGFs.
pub fn h4_closed_form(a: &KlProcess, q: f64, n: usize, t: f64, inner: usize) -> Option<f64> {
    let (t0, _) = a.interval();
    let c = a.integrated_coefficients(t, n, inner);
    let modes = a.modes(n);
    let mut log = -a.mean().integral(t0, t, inner);
    for (m, cj) in modes.iter().zip(&c) {
        log += mgf(&m.dist, -q * cj)?.ln() / q;
    }
    Some(log.exp())
}

/// Monte Carlo estimate of E[e^{-q K_a(t)}]^{1/q} with a delta-method stderr,
/// maximized over `ts`. Time index i draws from streams i * 2^32 + batch.
pub fn h4_norm_estimate(
    a: &KlProcess,
    q: f64,
    n: usize,
    ts: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<H4Estimate> {
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidParameter(format!("q = {q} must lie in [1, inf)")));
    }
    if ts.is_empty() {
        return Err(Error::InvalidParameter("empty time grid".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let inner = DEFAULT_INNER_TIME_NODES;
    let (t0, _) = a.interval();
    let modes = a.modes(n);
    for m in &modes {
        m.dist.check_samplable()?;
    }
    let points = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            a.check_time(t)?;
            let mean = a.mean().integral(t0, t, inner);
            let c = a.integrated_coefficients(t, n, inner);
            let (acc, bad) = mc_batches(n_samples, seed, (i as u64) << 32, |rng| {
                let k = mean + modes.iter().zip(&c).map(|(m, cj)| cj * m.dist.sample(rng)).sum::<f64>();
                (-q * k).exp()
            });
            check_non_finite(bad, n_samples)?;
            let estimate = acc.mean.powf(1.0 / q);
            let stderr = if acc.mean > 0.0 { estimate / (q * acc.mean) * acc.stderr() } else { 0.0 };
            Ok(H4Point { t, estimate, stderr, closed_form: h4_closed_form(a, q, n, t, inner) })
        })
        .collect::<Result<Vec<_>>>()?;
    let (imax, _) = points.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, p)| {
        if p.estimate > bv {
            (i, p.estimate)
        } else {
            (bi, bv)
        }
    });
    let max_closed_form = points
        .iter()
        .map(|p| p.closed_form)
        .collect::<Option<Vec<_>>>()
        .map(|v| v.into_iter().fold(f64::NEG_INFINITY, f64::max));
    Ok(H4Estimate { q, n, max_estimate: points[imax].estimate, t_at_max: points[imax].t, points, max_closed_form })
}

/// The nine convergence theorems, by their setting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Theorem {
    /// Complete equation, f0 Lipschitz on R, L^p/L^q moment conditions.
    T1,
    /// Homogeneous equation, f0 Lipschitz on D(x0), L^4 bound.
    T2,
    /// Complete equation, eta_1 isolated, f_eta1 Lipschitz, compact xi, psi_1 > 0.
    T3,
    /// Homogeneous equation, xi_1 isolated, f_xi1 Lipschitz, int phi_1 != 0.
    T4,
    /// Complete equation, f0 continuous and bounded, L^2 bound.
    T5,
    /// Homogeneous equation, f0 continuous and bounded on D(x0), L^2 bound.
    T6,
    /// Homogeneous equation, f0 continuous on D(x0) with f0 <= C/|x|.
    T7,
    /// Complete equation, eta_1 isolated, f_eta1 continuous and bounded.
    T8,
    /// Homogeneous equation, xi_1 isolated, f_xi1 continuous and bounded, x0 sign-definite.
    T9,
}

impl Theorem {
    pub const ALL: [Theorem; 9] = [
        Theorem::T1,
        Theorem::T2,
        Theorem::T3,
        Theorem::T4,
        Theorem::T5,
        Theorem::T6,
        Theorem::T7,
        Theorem::T8,
        Theorem::T9,
    ];

    pub fn complete(&self) -> bool {
        matches!(self, Theorem::T1 | Theorem::T3 | Theorem::T5 | Theorem::T8)
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self)
    }
}

impl std::str::FromStr for Theorem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .iter()
            .copied()
            .find(|t| t.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown theorem '{s}'; expected T1..T9")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Unverifiable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Applicable,
    NotApplicable,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub theorem: Theorem,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
}

impl HypothesisReport {
    pub fn to_text(&self) -> String {
        let mut out = format!("{}: {:?}\n", self.theorem, self.verdict);
        for c in &self.checks {
            out.push_str(&format!("  {:<34} {:<12} {}\n", c.name, format!("{:?}", c.status).to_lowercase(), c.detail));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct HypothesisOptions {
    /// Largest truncation order used for the numeric bounds.
    pub n: usize,
    pub threshold: f64,
    pub t_points: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for HypothesisOptions {
    fn default() -> Self {
        HypothesisOptions { n: 3, threshold: H4_THRESHOLD, t_points: 21, n_samples: 20_000, seed: 0 }
    }
}

fn check(name: &str, ok: bool, detail: impl Into<String>) -> Check {
    Check { name: name.into(), status: if ok { Status::Pass } else { Status::Fail }, detail: detail.into() }
}

fn unverifiable(name: &str, detail: impl Into<String>) -> Check {
    Check { name: name.into(), status: Status::Unverifiable, detail: detail.into() }
}

fn is_custom(d: &ScalarDistribution) -> bool {
    matches!(d.kind(), DistKind::Custom(_))
}

/// Continuity on D(x0): for a sign-definite law the point 0 is excluded, so
/// only jumps at nonzero support endpoints matter.
fn continuous_on_domain(d: &ScalarDistribution) -> bool {
    if d.regularity().continuous {
        return true;
    }
    if d.support_sign() == SupportSign::Mixed {
        return false;
    }
    let s = d.support();
    [s.lo, s.hi].iter().all(|&e| !e.is_finite() || e == 0.0 || d.pdf(e) == 0.0)
}

fn bounded_on_domain(d: &ScalarDistribution) -> bool {
    if d.regularity().bounded {
        return true;
    }
    if d.support_sign() == SupportSign::Mixed {
        return false;
    }
    // Only a singularity at 0 is harmless; check just inside the support.
    let s = d.support();
    let probe = if s.lo == 0.0 { s.hi.min(1.0) } else { s.lo.max(-1.0) };
    (1..=200).map(|k| probe * (k as f64) / 200.0).all(|x| d.pdf(x).is_finite())
}

fn lipschitz_on_domain(d: &ScalarDistribution) -> bool {
    match d.support_sign() {
        SupportSign::Mixed => d.regularity().lipschitz_on_real,
        _ => d.regularity().lipschitz_on_support,
    }
}

fn regularity_check(name: &str, d: &ScalarDistribution, ok: bool, what: &str) -> Check {
    if is_custom(d) {
        return unverifiable(name, format!("{} is user-defined; {what} cannot be certified", d.name()));
    }
    check(name, ok, format!("{} {} {what}", d.name(), if ok { "is" } else { "is not" }))
}

fn square_integrable(p: &KlProcess, label: &str) -> Check {
    let name = format!("h1_{label}_square_integrable");
    if matches!(p.mean(), MeanFn::Custom(_)) {
        return unverifiable(&name, "user-defined mean");
    }
    match p.family() {
        None => check(&name, true, format!("finite rank {}, trace {:.6e}", p.rank().unwrap_or(0), p.trace(usize::MAX))),
        Some((SeriesFamily::Sqrt2OverJSin { power, .. }, _)) => {
            check(&name, *power > 0.5, format!("eigenvalues decay like j^(-{})", 2.0 * power))
        }
        Some((f, _)) => check(&name, true, format!("{f:?} has finite trace")),
    }
}

fn coefficient_laws(spec: &ProblemSpec, n: usize) -> Vec<ScalarDistribution> {
    let mut v = vec![spec.x0.clone()];
    v.extend(spec.a.modes(n).into_iter().map(|m| m.dist));
    if let Some(b) = &spec.b {
        v.extend(b.modes(n).into_iter().map(|m| m.dist));
    }
    v
}

fn independence(spec: &ProblemSpec, n: usize, min_a_modes: usize) -> Check {
    let laws = coefficient_laws(spec, n);
    let rank_ok = spec.a.effective_n(min_a_modes) >= min_a_modes;
    let custom = laws.iter().any(is_custom);
    let detail = format!(
        "independent by construction; {} absolutely continuous laws; a has {} mode(s), {} needed",
        laws.len(),
        spec.a.rank().map_or("unbounded".to_string(), |r| r.to_string()),
        min_a_modes
    );
    if !rank_ok {
        return check("h2_independent_abs_continuous", false, detail);
    }
    if custom {
        return unverifiable("h2_independent_abs_continuous", format!("{detail}; user laws assumed continuous"));
    }
    check("h2_independent_abs_continuous", true, detail)
}

fn time_grid(spec: &ProblemSpec, points: usize) -> Vec<f64> {
    let (t0, t1) = spec.interval();
    let k = points.max(2);
    (0..k).map(|i| t0 + (t1 - t0) * i as f64 / (k - 1) as f64).collect()
}

fn norm_bound(spec: &ProblemSpec, q: f64, opts: &HypothesisOptions) -> Check {
    let name = format!("h4_exp_ka_lq_bound_q{q}");
    let ts = time_grid(spec, opts.t_points);
    let closed: Option<Vec<f64>> =
        ts.iter().map(|&t| h4_closed_form(&spec.a, q, opts.n, t, DEFAULT_INNER_TIME_NODES)).collect();
    let (value, how) = match closed {
        Some(v) => (v.into_iter().fold(f64::NEG_INFINITY, f64::max), "closed form"),
        None => match h4_norm_estimate(&spec.a, q, opts.n, &ts, opts.n_samples, opts.seed) {
            Ok(e) => (e.max_estimate, "Monte Carlo"),
            Err(e) => return unverifiable(&name, format!("estimate failed: {e}")),
        },
    };
    check(
        &name,
        value.is_finite() && value < opts.threshold,
        format!(
            "max over {} times at N={} is {value:.6e} ({how}); numeric evidence against threshold {:e}",
            ts.len(),
            opts.n,
            opts.threshold
        ),
    )
}

/// Sum of sqrt(gamma_j) ||psi_j||_{L^p} ||eta_j||_{L^p} judged by its tail decay.
fn forcing_summability(b: &KlProcess, p: f64) -> Check {
    let name = "h4_forcing_series_lp";
    if matches!(b.mean(), MeanFn::Custom(_)) {
        return unverifiable(name, "user-defined mean of b");
    }
    let (dist, family) = match b.family() {
        None => return check(name, true, format!("finite rank {}", b.rank().unwrap_or(0))),
        Some((f, d)) => (d, f),
    };
    if is_custom(dist) {
        return unverifiable(name, "user-defined coefficient law");
    }
    let (t0, t1) = b.interval();
    let norm = |j: usize| {
        let m = b.mode(j).expect("family mode");
        let panels = 4 * j + 8;
        let h = (t1 - t0) / panels as f64;
        let mut acc = 0.0;
        for k in 0..panels {
            let a = t0 + k as f64 * h;
            acc += legendre_on(a, a + h, 8).integrate(|s| m.basis.eval(s).abs().powf(p));
        }
        m.eigenvalue.sqrt() * acc.powf(1.0 / p)
    };
    let (j1, j2) = (64usize, 512usize);
    let (v1, v2) = (norm(j1), norm(j2));
    let slope = (v2.ln() - v1.ln()) / ((j2 as f64).ln() - (j1 as f64).ln());
    check(
        name,
        slope < -1.05,
        format!("{family:?}: terms decay like j^({slope:.3}) between j={j1} and j={j2} for p={p}; numeric evidence"),
    )
}

fn growth_bound(d: &ScalarDistribution, threshold: f64) -> Check {
    let name = "h3_f0_bounded_by_c_over_x";
    if is_custom(d) {
        return unverifiable(name, "user-defined density");
    }
    let sign = d.support_sign();
    let mut worst: f64 = 0.0;
    for k in 0..=1600 {
        let r = 10f64.powf(-8.0 + 16.0 * k as f64 / 1600.0);
        for x in [r, -r] {
            let in_domain = match sign {
                SupportSign::Positive => x > 0.0,
                SupportSign::Negative => x < 0.0,
                SupportSign::Mixed => true,
            };
            if in_domain {
                worst = worst.max(x.abs() * d.pdf(x));
            }
        }
    }
    check(
        name,
        worst.is_finite() && worst < threshold,
        format!("sup |x| f0(x) on a log grid of 1e-8..1e8 is {worst:.6e}; numeric evidence"),
    )
}

fn compact_coefficients(a: &KlProcess, n: usize) -> Check {
    let name = "h4_xi_compact_support";
    let laws: Vec<ScalarDistribution> = match a.family() {
        Some((_, d)) => vec![d.clone()],
        None => a.modes(n.max(a.rank().unwrap_or(0))).into_iter().map(|m| m.dist).collect(),
    };
    let bound = laws.iter().map(|d| d.support().lo.abs().max(d.support().hi.abs())).fold(0.0, f64::max);
    check(
        name,
        laws.iter().all(|d| d.support().is_compact()),
        if bound.is_finite() {
            format!("all coefficients in [-{bound}, {bound}]")
        } else {
            "some coefficient law has unbounded support".into()
        },
    )
}

/// Evaluate the hypotheses of one convergence theorem for a problem.
pub fn hypothesis_report(spec: &ProblemSpec, theorem: Theorem, opts: &HypothesisOptions) -> HypothesisReport {
    let mut checks = Vec::new();
    let homogeneous = spec.b.is_none();
    checks.push(check(
        "equation_type",
        theorem.complete() != homogeneous,
        format!(
            "theorem addresses the {} equation; problem is {}",
            if theorem.complete() { "complete" } else { "homogeneous" },
            if homogeneous { "homogeneous" } else { "complete" }
        ),
    ));
    checks.push(square_integrable(&spec.a, "a"));
    if let (true, Some(b)) = (theorem.complete(), &spec.b) {
        checks.push(square_integrable(b, "b"));
    }
    let min_modes = if matches!(theorem, Theorem::T4 | Theorem::T9) { 2 } else { 1 };
    checks.push(independence(spec, opts.n.max(min_modes), min_modes));
    let x0 = &spec.x0;
    let a1 = spec.a.mode(1).map(|m| m.dist);
    let b1 = spec.b.as_ref().and_then(|b| b.mode(1)).map(|m| m.dist);
    let missing = |name: &str, what: &str| check(name, false, format!("no {what}"));
    match theorem {
        Theorem::T1 => {
            checks.push(regularity_check(
                "h3_f0_lipschitz_on_r",
                x0,
                x0.regularity().lipschitz_on_real,
                "Lipschitz on R",
            ));
            match &spec.b {
                Some(b) => checks.push(forcing_summability(b, 3.0)),
                None => checks.push(missing("h4_forcing_series_lp", "b-process")),
            }
            checks.push(norm_bound(spec, 12.0, opts));
        }
        Theorem::T2 => {
            checks.push(regularity_check(
                "h3_f0_lipschitz_on_domain",
                x0,
                lipschitz_on_domain(x0),
                "Lipschitz on D(x0)",
            ));
            checks.push(norm_bound(spec, 4.0, opts));
        }
        Theorem::T3 | Theorem::T8 => {
            match &b1 {
                Some(d) if theorem == Theorem::T3 => checks.push(regularity_check(
                    "h3_f_eta1_lipschitz_on_r",
                    d,
                    d.regularity().lipschitz_on_real,
                    "Lipschitz on R",
                )),
                Some(d) => checks.push(regularity_check(
                    "h3_f_eta1_continuous_bounded",
                    d,
                    d.regularity().continuous && d.regularity().bounded,
                    "continuous and bounded on R",
                )),
                None => checks.push(missing("h3_f_eta1", "b-mode")),
            }
            checks.push(compact_coefficients(&spec.a, opts.n));
            checks.push(match psi1_positive(spec) {
                Ok(()) => check("h4_psi1_positive", true, "psi_1 > 0 on a 1000-point interior grid"),
                Err(e) => check("h4_psi1_positive", false, e.to_string()),
            });
        }
        Theorem::T4 | Theorem::T9 => {
            match &a1 {
                Some(d) if theorem == Theorem::T4 => checks.push(regularity_check(
                    "h3_f_xi1_lipschitz_on_r",
                    d,
                    d.regularity().lipschitz_on_real,
                    "Lipschitz on R",
                )),
                Some(d) => checks.push(regularity_check(
                    "h3_f_xi1_continuous_bounded",
                    d,
                    d.regularity().continuous && d.regularity().bounded,
                    "continuous and bounded on R",
                )),
                None => checks.push(missing("h3_f_xi1", "a-mode")),
            }
            checks.push(match int_phi1_nonzero(spec, DEFAULT_INNER_TIME_NODES) {
                Ok(()) => check("h4_int_phi1_nonzero", true, "int phi_1 != 0 on a 1000-point grid of (t0, T]"),
                Err(e) => check("h4_int_phi1_nonzero", false, e.to_string()),
            });
            if theorem == Theorem::T9 {
                let sign = x0.support_sign();
                checks.push(check("h5_x0_sign_definite", sign != SupportSign::Mixed, format!("support sign {sign:?}")));
            }
        }
        Theorem::T5 => {
            let r = x0.regularity();
            checks.push(regularity_check(
                "h3_f0_continuous_bounded",
                x0,
                r.continuous && r.bounded,
                "continuous and bounded on R",
            ));
            checks.push(norm_bound(spec, 2.0, opts));
        }
        Theorem::T6 => {
            checks.push(regularity_check(
                "h3_f0_continuous_bounded_on_domain",
                x0,
                continuous_on_domain(x0) && bounded_on_domain(x0),
                "continuous and bounded on D(x0)",
            ));
            checks.push(norm_bound(spec, 2.0, opts));
        }
        Theorem::T7 => {
            checks.push(regularity_check(
                "h3_f0_continuous_on_domain",
                x0,
                continuous_on_domain(x0),
                "continuous on D(x0)",
            ));
            checks.push(growth_bound(x0, opts.threshold));
        }
    }
    let verdict = if checks.iter().any(|c| c.status == Status::Fail) {
        Verdict::NotApplicable
    } else if checks.iter().all(|c| c.status == Status::Pass) {
        Verdict::Applicable
    } else {
        Verdict::Undetermined
    };
    HypothesisReport { theorem, checks, verdict }
}

/// Reports for all nine theorems.
pub fn hypothesis_reports(spec: &ProblemSpec, opts: &HypothesisOptions) -> Vec<HypothesisReport> {
    Theorem::ALL.par_iter().map(|&t| hypothesis_report(spec, t, opts)).collect()
}
