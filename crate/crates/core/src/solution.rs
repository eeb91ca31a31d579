//! The truncated solution of x' = a(t) x + b(t), x(t0) = x0.
//!
//! With K_a(t) = int_{t0}^{t} a_N and S_b = b_M the truncated solution is
//! x(t) = e^{K_a(t)} (x0 + int_{t0}^{t} S_b(s) e^{-K_a(s)} ds). A `TimeSlice`
//! precomputes everything that does not depend on the random coefficients,
//! so one evaluation costs O(inner_nodes * (N + M)).

use std::io::Write;

use rayon::prelude::*;

use crate::distributions::ScalarDistribution;
use crate::error::{Error, Result};
use crate::kl::KlProcess;
use crate::quadrature::{legendre_on, rng_stream, DEFAULT_INNER_TIME_NODES};

/// Largest |K_a| accepted before exponentials are declared overflowed.
pub const MAX_EXPONENT: f64 = 700.0;

/// The randomized initial value problem.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub a: KlProcess,
    /// `None` for the homogeneous equation (b = 0).
    pub b: Option<KlProcess>,
    pub x0: ScalarDistribution,
}

impl ProblemSpec {
    pub fn new(a: KlProcess, b: Option<KlProcess>, x0: ScalarDistribution) -> Result<Self> {
        if let Some(b) = &b {
            let (ia, ib) = (a.interval(), b.interval());
            if (ia.0 - ib.0).abs() > 1e-12 || (ia.1 - ib.1).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "a lives on {ia:?} but b on {ib:?}; intervals must match"
                )));
            }
        }
        Ok(ProblemSpec { a, b, x0 })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.a.interval()
    }

    pub fn is_homogeneous(&self) -> bool {
        self.b.is_none()
    }

    /// Number of b-modes used with truncation order `m` (0 when homogeneous).
    pub fn b_order(&self, m: usize) -> usize {
        self.b.as_ref().map_or(0, |b| b.effective_n(m))
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        self.a.check_time(t)
    }
}

/// K_a(t, xi) = int_{t0}^{t} mu_a + sum_j sqrt(nu_j) (int_{t0}^{t} phi_j) xi_j.
pub fn k_a(a: &KlProcess, t: f64, xi: &[f64], inner_nodes: usize) -> Result<f64> {
    a.check_time(t)?;
    let c = a.integrated_coefficients(t, xi.len(), inner_nodes);
    if c.len() != xi.len() {
        return Err(Error::InvalidParameter(format!("{} coefficients for a rank-{} process", xi.len(), c.len())));
    }
    let t0 = a.interval().0;
    Ok(a.mean().integral(t0, t, inner_nodes) + c.iter().zip(xi).map(|(c, x)| c * x).sum::<f64>())
}

/// S_b(s, eta) = mu_b(s) + sum_i sqrt(gamma_i) psi_i(s) eta_i.
pub fn s_b(b: &KlProcess, s: f64, eta: &[f64]) -> Result<f64> {
    b.eval_truncated(s, eta)
}

/// Coefficient-free data for evaluating the truncated solution at one time.
#[derive(Debug, Clone)]
pub struct TimeSlice {
    pub t: f64,
    pub n: usize,
    pub m: usize,
    ka_mean: f64,
    ka_coef: Vec<f64>,
    weights: Vec<f64>,
    /// Row-major (node, mode) of sqrt(nu_j) int_{t0}^{s_k} phi_j.
    ka_coef_s: Vec<f64>,
    ka_mean_s: Vec<f64>,
    b_mean_s: Vec<f64>,
    /// Row-major (node, mode) of sqrt(gamma_i) psi_i(s_k).
    b_coef_s: Vec<f64>,
}

/// The pieces of the solution map for one draw of xi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolutionParts {
    /// K_a(t, xi)
    pub k: f64,
    /// e^{-K_a(t, xi)}
    pub y: f64,
    /// int S_b(s, eta) e^{-K_a(s, xi)} ds
    pub z: f64,
}

impl TimeSlice {
    /// Precompute for truncation orders `n` (a) and `m` (b), capped at the ranks.
    pub fn new(spec: &ProblemSpec, n: usize, m: usize, t: f64, inner_nodes: usize) -> Result<Self> {
        spec.check_time(t)?;
        if inner_nodes == 0 {
            return Err(Error::InvalidParameter("inner_time_nodes must be positive".into()));
        }
        let (t0, _) = spec.interval();
        let a_modes = spec.a.modes(n);
        let n = a_modes.len();
        let ka_mean = spec.a.mean().integral(t0, t, inner_nodes);
        let ka_coef: Vec<f64> =
            a_modes.iter().map(|md| md.eigenvalue.sqrt() * md.basis.integral(t0, t, inner_nodes)).collect();
        let (b_modes, m) = match &spec.b {
            Some(b) => {
                let bm = b.modes(m);
                let len = bm.len();
                (bm, len)
            }
            None => (Vec::new(), 0),
        };
        let mut slice = TimeSlice {
            t,
            n,
            m,
            ka_mean,
            ka_coef,
            weights: Vec::new(),
            ka_coef_s: Vec::new(),
            ka_mean_s: Vec::new(),
            b_mean_s: Vec::new(),
            b_coef_s: Vec::new(),
        };
        if let Some(b) = &spec.b {
            let rule = legendre_on(t0, t, inner_nodes);
            for &s in &rule.nodes {
                slice.ka_mean_s.push(spec.a.mean().integral(t0, s, inner_nodes));
                for md in &a_modes {
                    slice.ka_coef_s.push(md.eigenvalue.sqrt() * md.basis.integral(t0, s, inner_nodes));
                }
                slice.b_mean_s.push(b.mean().eval(s));
                for md in &b_modes {
                    slice.b_coef_s.push(md.scaled(s));
                }
            }
            slice.weights = rule.weights;
        }
        Ok(slice)
    }

    pub fn inner_len(&self) -> usize {
        self.weights.len()
    }

    /// K_a(t, xi).
    pub fn k_t(&self, xi: &[f64]) -> f64 {
        self.ka_mean + dot(&self.ka_coef, xi)
    }

    /// sqrt(nu_j) int_{t0}^{t} phi_j for j = 1..=n.
    pub fn ka_coefficients(&self) -> &[f64] {
        &self.ka_coef
    }

    /// int_{t0}^{t} mu_a.
    pub fn ka_mean(&self) -> f64 {
        self.ka_mean
    }

    fn k_s(&self, k: usize, xi: &[f64]) -> f64 {
        self.ka_mean_s[k] + dot(&self.ka_coef_s[k * self.n..(k + 1) * self.n], xi)
    }

    /// K, e^{-K} and the forcing integral for one draw; `eta` may be empty
    /// when the problem is homogeneous.
    pub fn parts(&self, xi: &[f64], eta: &[f64]) -> Result<SolutionParts> {
        let k = self.k_t(xi);
        if !(k.abs() <= MAX_EXPONENT) {
            return Err(Error::Overflow { k_a: k });
        }
        let mut z = 0.0;
        for q in 0..self.weights.len() {
            let ks = self.k_s(q, xi);
            if !(ks.abs() <= MAX_EXPONENT) {
                return Err(Error::Overflow { k_a: ks });
            }
            let sb = self.b_mean_s[q] + dot(&self.b_coef_s[q * self.m..(q + 1) * self.m], eta);
            z += self.weights[q] * sb * (-ks).exp();
        }
        Ok(SolutionParts { k, y: (-k).exp(), z })
    }

    /// Split of the forcing integral isolating the first b-mode:
    /// returns (z without mode 1, int sqrt(gamma_1) psi_1 e^{-K_a(s)} ds).
    /// `eta_rest` holds eta_2..eta_m.
    pub fn eta1_split(&self, xi: &[f64], eta_rest: &[f64]) -> Result<(f64, f64)> {
        let mut z0 = 0.0;
        let mut d = 0.0;
        for q in 0..self.weights.len() {
            let ks = self.k_s(q, xi);
            if !(ks.abs() <= MAX_EXPONENT) {
                return Err(Error::Overflow { k_a: ks });
            }
            let row = &self.b_coef_s[q * self.m..(q + 1) * self.m];
            let e = self.weights[q] * (-ks).exp();
            z0 += e * (self.b_mean_s[q] + dot(&row[1..], eta_rest));
            d += e * row[0];
        }
        Ok((z0, d))
    }

    /// x_{N,M}(t) for one draw.
    pub fn x(&self, x0: f64, xi: &[f64], eta: &[f64]) -> Result<f64> {
        let p = self.parts(xi, eta)?;
        Ok(p.k.exp() * (x0 + p.z))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Truncated solution at time t with orders N = xi.len(), M = eta.len().
pub fn x_trunc(spec: &ProblemSpec, t: f64, x0: f64, xi: &[f64], eta: &[f64], inner_nodes: usize) -> Result<f64> {
    let slice = TimeSlice::new(spec, xi.len(), eta.len(), t, inner_nodes)?;
    if slice.n != xi.len() || slice.m != eta.len() {
        return Err(Error::InvalidParameter(format!(
            "got ({}, {}) coefficients but the ranks allow ({}, {})",
            xi.len(),
            eta.len(),
            slice.n,
            slice.m
        )));
    }
    slice.x(x0, xi, eta)
}

/// One simulated trajectory of the truncated solution.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    pub path_id: usize,
    pub ts: Vec<f64>,
    pub x_vals: Vec<f64>,
    pub coeffs_xi: Vec<f64>,
    pub coeffs_eta: Vec<f64>,
    pub x0_draw: f64,
    pub n: usize,
    pub m: usize,
}

/// Draw (x0, xi, eta) on separate streams per path and evaluate the
/// truncated solution on `time_grid`.
pub fn sample_paths(
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    n_paths: usize,
    time_grid: &[f64],
    seed: u64,
) -> Result<Vec<PathSample>> {
    sample_paths_with(spec, n, m, n_paths, time_grid, seed, DEFAULT_INNER_TIME_NODES)
}

pub fn sample_paths_with(
    spec: &ProblemSpec,
    n: usize,
    m: usize,
    n_paths: usize,
    time_grid: &[f64],
    seed: u64,
    inner_nodes: usize,
) -> Result<Vec<PathSample>> {
    if n_paths == 0 {
        return Ok(Vec::new());
    }
    spec.x0.check_samplable()?;
    let a_modes = spec.a.modes(n);
    let b_modes = spec.b.as_ref().map(|b| b.modes(m)).unwrap_or_default();
    for md in a_modes.iter().chain(&b_modes) {
        md.dist.check_samplable()?;
    }
    let slices =
        time_grid.par_iter().map(|&t| TimeSlice::new(spec, n, m, t, inner_nodes)).collect::<Result<Vec<_>>>()?;
    (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let base = 3 * p as u64;
            let mut r0 = rng_stream(seed, base);
            let mut r1 = rng_stream(seed, base + 1);
            let mut r2 = rng_stream(seed, base + 2);
            let x0 = spec.x0.sample(&mut r0);
            let xi: Vec<f64> = a_modes.iter().map(|md| md.dist.sample(&mut r1)).collect();
            let eta: Vec<f64> = b_modes.iter().map(|md| md.dist.sample(&mut r2)).collect();
            let x_vals = slices.iter().map(|s| s.x(x0, &xi, &eta)).collect::<Result<Vec<_>>>()?;
            Ok(PathSample {
                path_id: p,
                ts: time_grid.to_vec(),
                x_vals,
                coeffs_xi: xi,
                coeffs_eta: eta,
                x0_draw: x0,
                n: a_modes.len(),
                m: b_modes.len(),
            })
        })
        .collect()
}

/// Max over interior grid points of |centered difference of x - (a_N x + b_M)|.
pub fn residual_check(path: &PathSample, spec: &ProblemSpec) -> Result<f64> {
    if path.ts.len() < 3 {
        return Err(Error::InvalidParameter("residual check needs at least 3 grid points".into()));
    }
    let mut worst: f64 = 0.0;
    for i in 1..path.ts.len() - 1 {
        let t = path.ts[i];
        let dx = (path.x_vals[i + 1] - path.x_vals[i - 1]) / (path.ts[i + 1] - path.ts[i - 1]);
        let a = spec.a.eval_truncated(t, &path.coeffs_xi)?;
        let b = match &spec.b {
            Some(b) => b.eval_truncated(t, &path.coeffs_eta)?,
            None => 0.0,
        };
        worst = worst.max((dx - (a * path.x_vals[i] + b)).abs());
    }
    Ok(worst)
}

/// Render a float with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v}");
    }
    format!("{v:.16e}")
}

/// CSV with columns t,x,path_id.
pub fn write_paths_csv<W: Write>(paths: &[PathSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,x,path_id")?;
    for p in paths {
        for (t, x) in p.ts.iter().zip(&p.x_vals) {
            writeln!(w, "{},{},{}", fmt17(*t), fmt17(*x), p.path_id)?;
        }
    }
    Ok(())
}
