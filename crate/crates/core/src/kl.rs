//! Karhunen-Loeve representations of second-order processes.
//!
//! A process is a mean function plus ordered eigenpairs (nu_j, phi_j) with
//! independent standardized coefficients. Pairs come from closed-form
//! catalogs (Brownian motion, Brownian bridge), explicit series, or a
//! Nystrom discretization of the covariance operator.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::distributions::{DistSpec, ScalarDistribution};
use crate::error::{Error, Result};
use crate::quadrature::{integrate, legendre_on, pairwise_sum, DEFAULT_INNER_TIME_NODES};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type KernelFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Tolerance for orthonormality checks of declared bases.
pub const ORTHONORMAL_TOL: f64 = 1e-6;

/// Deterministic part of a process.
#[derive(Clone)]
pub enum MeanFn {
    Constant(f64),
    /// Coefficients c_0 + c_1 t + c_2 t^2 + ...
    Polynomial(Vec<f64>),
    Custom(ScalarFn),
}

impl fmt::Debug for MeanFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MeanFn::Constant(c) => write!(f, "Constant({c})"),
            MeanFn::Polynomial(c) => write!(f, "Polynomial({c:?})"),
            MeanFn::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl MeanFn {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanFn::Constant(c) => *c,
            MeanFn::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * t + ci),
            MeanFn::Custom(f) => f(t),
        }
    }

    /// Integral over [a, b]; closed form except for custom means.
    pub fn integral(&self, a: f64, b: f64, inner_nodes: usize) -> f64 {
        match self {
            MeanFn::Constant(c) => c * (b - a),
            MeanFn::Polynomial(c) => {
                let anti =
                    |t: f64| c.iter().enumerate().rev().fold(0.0, |acc, (k, &ck)| acc * t + ck / (k as f64 + 1.0)) * t;
                anti(b) - anti(a)
            }
            MeanFn::Custom(f) => legendre_on(a, b, inner_nodes).integrate(|s| f(s)),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MeanFn::Constant(c) => *c == 0.0,
            MeanFn::Polynomial(c) => c.iter().all(|&x| x == 0.0),
            MeanFn::Custom(_) => false,
        }
    }
}

/// Eigenfunction of an expansion.
#[derive(Clone)]
pub enum Basis {
    /// amp * sin(freq * (t - origin))
    Sine {
        amp: f64,
        freq: f64,
        origin: f64,
    },
    /// amp * cos(freq * (t - origin))
    Cosine {
        amp: f64,
        freq: f64,
        origin: f64,
    },
    Constant(f64),
    Nystrom(Arc<NystromMode>),
    Custom(ScalarFn),
}

impl fmt::Debug for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::Sine { amp, freq, origin } => write!(f, "{amp}*sin({freq}*(t-{origin}))"),
            Basis::Cosine { amp, freq, origin } => write!(f, "{amp}*cos({freq}*(t-{origin}))"),
            Basis::Constant(c) => write!(f, "{c}"),
            Basis::Nystrom(m) => write!(f, "Nystrom(lambda={})", m.lambda),
            Basis::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Basis {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Basis::Sine { amp, freq, origin } => amp * (freq * (t - origin)).sin(),
            Basis::Cosine { amp, freq, origin } => amp * (freq * (t - origin)).cos(),
            Basis::Constant(c) => *c,
            Basis::Nystrom(m) => m.eval(t),
            Basis::Custom(f) => f(t),
        }
    }

    /// Closed-form integral over [a, b] when an antiderivative is known.
    pub fn closed_integral(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            Basis::Sine { amp, freq, origin } => {
                if *freq == 0.0 {
                    return Some(0.0);
                }
                Some(amp * ((freq * (a - origin)).cos() - (freq * (b - origin)).cos()) / freq)
            }
            Basis::Cosine { amp, freq, origin } => {
                if *freq == 0.0 {
                    return Some(amp * (b - a));
                }
                Some(amp * ((freq * (b - origin)).sin() - (freq * (a - origin)).sin()) / freq)
            }
            Basis::Constant(c) => Some(c * (b - a)),
            _ => None,
        }
    }

    /// Integral over [a, b], by Gauss-Legendre with `inner_nodes` points when
    /// no closed form exists.
    pub fn integral(&self, a: f64, b: f64, inner_nodes: usize) -> f64 {
        match self.closed_integral(a, b) {
            Some(v) => v,
            None => legendre_on(a, b, inner_nodes).integrate(|s| self.eval(s)),
        }
    }
}

/// One eigenpair with its coefficient law.
#[derive(Debug, Clone)]
pub struct Mode {
    pub eigenvalue: f64,
    pub basis: Basis,
    pub dist: ScalarDistribution,
}

impl Mode {
    /// sqrt(nu_j) * phi_j(t)
    pub fn scaled(&self, t: f64) -> f64 {
        self.eigenvalue.sqrt() * self.basis.eval(t)
    }
}

/// Unbounded families with closed-form eigenpairs.
#[derive(Debug, Clone)]
pub enum SeriesFamily {
    /// Covariance min(s,t) - t0 on [t0, t0 + L].
    BrownianMotion,
    /// Covariance of the bridge pinned at both ends of [t0, t0 + L].
    BrownianBridge,
    /// Terms amplitude * sqrt(2) / (j^power + offset) * sin(j pi (t - t0) / L).
    Sqrt2OverJSin { amplitude: f64, power: f64, offset: f64 },
}

#[derive(Debug, Clone)]
enum Modes {
    Finite(Vec<Mode>),
    Family { family: SeriesFamily, dist: ScalarDistribution },
}

/// A truncatable Karhunen-Loeve expansion on [t0, T].
#[derive(Debug, Clone)]
pub struct KlProcess {
    interval: (f64, f64),
    mean: MeanFn,
    modes: Modes,
}

fn check_interval(t0: f64, t1: f64) -> Result<()> {
    if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
        return Err(Error::InvalidParameter(format!("interval [{t0}, {t1}] needs t0 < T")));
    }
    Ok(())
}

/// Brownian motion started at t0 on [t0, T], Normal(0,1) coefficients.
pub fn brownian_motion(t0: f64, t1: f64) -> Result<KlProcess> {
    check_interval(t0, t1)?;
    Ok(KlProcess {
        interval: (t0, t1),
        mean: MeanFn::Constant(0.0),
        modes: Modes::Family { family: SeriesFamily::BrownianMotion, dist: ScalarDistribution::standard_normal() },
    })
}

/// Brownian bridge on [t0, T], Normal(0,1) coefficients.
pub fn brownian_bridge(t0: f64, t1: f64) -> Result<KlProcess> {
    check_interval(t0, t1)?;
    Ok(KlProcess {
        interval: (t0, t1),
        mean: MeanFn::Constant(0.0),
        modes: Modes::Family { family: SeriesFamily::BrownianBridge, dist: ScalarDistribution::standard_normal() },
    })
}

/// A single declared term of an explicit series: the product sqrt(nu) * phi.
#[derive(Debug, Clone)]
pub enum Term {
    /// amplitude * sin(frequency * (t - t0))
    Sine {
        amplitude: f64,
        frequency: f64,
        dist: ScalarDistribution,
    },
    /// amplitude * cos(frequency * (t - t0))
    Cosine {
        amplitude: f64,
        frequency: f64,
        dist: ScalarDistribution,
    },
    Constant {
        amplitude: f64,
        dist: ScalarDistribution,
    },
    /// `count` leading terms of a family, or all of them when `None`.
    Family {
        family: SeriesFamily,
        count: Option<usize>,
        dist: ScalarDistribution,
    },
}

/// Build a process from a mean and explicitly given scaled eigenfunctions.
///
/// Each term is factored into a unit-norm eigenfunction and its eigenvalue.
/// An unbounded family must be the only term. Finite term lists are sorted
/// by descending eigenvalue and checked for orthonormality.
pub fn explicit_series(t0: f64, t1: f64, mean: MeanFn, terms: Vec<Term>) -> Result<KlProcess> {
    check_interval(t0, t1)?;
    let unbounded = terms.iter().filter(|t| matches!(t, Term::Family { count: None, .. })).count();
    if unbounded > 0 && terms.len() > 1 {
        return Err(Error::InvalidParameter("an unbounded family must be the only term of a series".into()));
    }
    for term in &terms {
        let d = match term {
            Term::Sine { dist, .. }
            | Term::Cosine { dist, .. }
            | Term::Constant { dist, .. }
            | Term::Family { dist, .. } => dist,
        };
        d.check_standardized()?;
    }
    let proc = if let Some(Term::Family { family, count: None, dist }) = terms.first().filter(|_| unbounded == 1) {
        KlProcess { interval: (t0, t1), mean, modes: Modes::Family { family: family.clone(), dist: dist.clone() } }
    } else {
        let len = t1 - t0;
        let mut modes = Vec::new();
        for term in terms {
            match term {
                Term::Sine { amplitude, frequency, dist } => {
                    let w = frequency;
                    let norm2 = if w == 0.0 { 0.0 } else { len / 2.0 - (2.0 * w * len).sin() / (4.0 * w) };
                    if norm2 <= 0.0 {
                        return Err(Error::InvalidParameter("sine term vanishes on the interval".into()));
                    }
                    modes.push(Mode {
                        eigenvalue: amplitude * amplitude * norm2,
                        basis: Basis::Sine { amp: amplitude.signum() / norm2.sqrt(), freq: w, origin: t0 },
                        dist,
                    });
                }
                Term::Cosine { amplitude, frequency, dist } => {
                    let w = frequency;
                    let norm2 = if w == 0.0 { len } else { len / 2.0 + (2.0 * w * len).sin() / (4.0 * w) };
                    modes.push(Mode {
                        eigenvalue: amplitude * amplitude * norm2,
                        basis: Basis::Cosine { amp: amplitude.signum() / norm2.sqrt(), freq: w, origin: t0 },
                        dist,
                    });
                }
                Term::Constant { amplitude, dist } => modes.push(Mode {
                    eigenvalue: amplitude * amplitude * len,
                    basis: Basis::Constant(amplitude.signum() / len.sqrt()),
                    dist,
                }),
                Term::Family { family, count, dist } => {
                    let n = count.unwrap_or(0);
                    for j in 1..=n {
                        modes.push(family_mode(&family, j, t0, t1, &dist));
                    }
                }
            }
        }
        modes.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
        KlProcess { interval: (t0, t1), mean, modes: Modes::Finite(modes) }
    };
    let check_n = proc.rank().unwrap_or(12).min(12);
    let gap = orthonormality_gap(&proc.modes(check_n), t0, t1);
    if gap > ORTHONORMAL_TOL {
        return Err(Error::Validation(vec![format!(
            "declared eigenfunctions are not orthonormal: max Gram deviation {gap:.3e}"
        )]));
    }
    Ok(proc)
}

/// Build a process directly from eigenpairs (sorted here by descending eigenvalue).
pub fn from_modes(t0: f64, t1: f64, mean: MeanFn, mut modes: Vec<Mode>) -> Result<KlProcess> {
    check_interval(t0, t1)?;
    for m in &modes {
        if !(m.eigenvalue >= 0.0) {
            return Err(Error::InvalidParameter(format!("negative eigenvalue {}", m.eigenvalue)));
        }
        m.dist.check_standardized()?;
    }
    modes.sort_by(|a, b| b.eigenvalue.total_cmp(&a.eigenvalue));
    Ok(KlProcess { interval: (t0, t1), mean, modes: Modes::Finite(modes) })
}

fn family_mode(family: &SeriesFamily, j: usize, t0: f64, t1: f64, dist: &ScalarDistribution) -> Mode {
    let len = t1 - t0;
    let jf = j as f64;
    let amp = (2.0 / len).sqrt();
    let (eigenvalue, freq) = match family {
        SeriesFamily::BrownianMotion => {
            let w = (jf - 0.5) * PI;
            (len * len / (w * w), w / len)
        }
        SeriesFamily::BrownianBridge => {
            let w = jf * PI;
            (len * len / (w * w), w / len)
        }
        SeriesFamily::Sqrt2OverJSin { amplitude, power, offset } => {
            let c = amplitude * SQRT_2 / (jf.powf(*power) + offset);
            (c * c * len / 2.0, jf * PI / len)
        }
    };
    Mode { eigenvalue, basis: Basis::Sine { amp, freq, origin: t0 }, dist: dist.clone() }
}

/// Largest deviation of the Gram matrix from the identity under a 256-point
/// composite Gauss-Legendre reference rule.
pub fn orthonormality_gap(modes: &[Mode], t0: f64, t1: f64) -> f64 {
    if modes.is_empty() {
        return 0.0;
    }
    let panels = 8;
    let h = (t1 - t0) / panels as f64;
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for p in 0..panels {
        let r = legendre_on(t0 + p as f64 * h, t0 + (p + 1) as f64 * h, 32);
        nodes.extend(r.nodes);
        weights.extend(r.weights);
    }
    let vals: Vec<Vec<f64>> = modes.iter().map(|m| nodes.iter().map(|&s| m.basis.eval(s)).collect()).collect();
    let mut worst: f64 = 0.0;
    for i in 0..modes.len() {
        for k in 0..=i {
            let terms: Vec<f64> = (0..nodes.len()).map(|q| weights[q] * vals[i][q] * vals[k][q]).collect();
            let g = pairwise_sum(&terms);
            let target = if i == k { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}

impl KlProcess {
    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn mean(&self) -> &MeanFn {
        &self.mean
    }

    /// Number of modes, `None` for an unbounded family.
    pub fn rank(&self) -> Option<usize> {
        match &self.modes {
            Modes::Finite(m) => Some(m.len()),
            Modes::Family { .. } => None,
        }
    }

    /// The closed-form family and its coefficient law, for unbounded expansions.
    pub fn family(&self) -> Option<(&SeriesFamily, &ScalarDistribution)> {
        match &self.modes {
            Modes::Finite(_) => None,
            Modes::Family { family, dist } => Some((family, dist)),
        }
    }

    /// Mode j (1-based).
    pub fn mode(&self, j: usize) -> Option<Mode> {
        assert!(j >= 1);
        match &self.modes {
            Modes::Finite(m) => m.get(j - 1).cloned(),
            Modes::Family { family, dist } => Some(family_mode(family, j, self.interval.0, self.interval.1, dist)),
        }
    }

    /// The first min(n, rank) modes.
    pub fn modes(&self, n: usize) -> Vec<Mode> {
        let n = self.effective_n(n);
        (1..=n).filter_map(|j| self.mode(j)).collect()
    }

    pub fn effective_n(&self, n: usize) -> usize {
        match self.rank() {
            Some(r) => n.min(r),
            None => n,
        }
    }

    /// Keep the mean and the first N eigenpairs (N capped at the rank).
    pub fn truncate(&self, n: usize) -> KlProcess {
        KlProcess { interval: self.interval, mean: self.mean.clone(), modes: Modes::Finite(self.modes(n)) }
    }

    /// Permute the modes of a finite expansion: new mode i is old mode perm[i] (0-based).
    pub fn reorder(&self, perm: &[usize]) -> Result<KlProcess> {
        let modes = match &self.modes {
            Modes::Finite(m) => m,
            Modes::Family { .. } => {
                return Err(Error::Unsupported("truncate an unbounded family before reordering".into()))
            }
        };
        let mut seen = vec![false; modes.len()];
        if perm.len() != modes.len() || perm.iter().any(|&p| p >= modes.len() || std::mem::replace(&mut seen[p], true))
        {
            return Err(Error::InvalidParameter("reorder needs a permutation of all modes".into()));
        }
        Ok(KlProcess {
            interval: self.interval,
            mean: self.mean.clone(),
            modes: Modes::Finite(perm.iter().map(|&p| modes[p].clone()).collect()),
        })
    }

    /// Move mode `j` (1-based) to the front, keeping the rest in order.
    pub fn with_pivot(&self, j: usize) -> Result<KlProcess> {
        let r =
            self.rank().ok_or_else(|| Error::Unsupported("truncate an unbounded family before reordering".into()))?;
        if j == 0 || j > r {
            return Err(Error::InvalidParameter(format!("pivot {j} outside 1..={r}")));
        }
        let mut perm = vec![j - 1];
        perm.extend((0..r).filter(|&i| i != j - 1));
        self.reorder(&perm)
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let (lo, hi) = self.interval;
        let slack = 1e-12 * (hi - lo).abs().max(1.0);
        if t.is_nan() || t < lo - slack || t > hi + slack {
            return Err(Error::Domain { t, lo, hi });
        }
        Ok(())
    }

    /// mu(t) + sum_j sqrt(nu_j) phi_j(t) coeffs_j with N = coeffs.len().
    pub fn eval_truncated(&self, t: f64, coeffs: &[f64]) -> Result<f64> {
        self.check_time(t)?;
        let modes = self.modes(coeffs.len());
        if modes.len() != coeffs.len() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a rank-{} process",
                coeffs.len(),
                modes.len()
            )));
        }
        Ok(self.mean.eval(t) + modes.iter().zip(coeffs).map(|(m, &c)| m.scaled(t) * c).sum::<f64>())
    }

    /// sum_{j<=N} nu_j phi_j(t)^2, the variance of the truncation at t.
    pub fn pointwise_variance(&self, t: f64, n: usize) -> f64 {
        self.modes(n).iter().map(|m| m.eigenvalue * m.basis.eval(t).powi(2)).sum()
    }

    /// sum_{j<=N} nu_j.
    pub fn trace(&self, n: usize) -> f64 {
        let vals: Vec<f64> = self.modes(n).iter().map(|m| m.eigenvalue).collect();
        pairwise_sum(&vals)
    }

    /// sqrt(nu_j) * int_{t0}^{t} phi_j for j = 1..=N.
    pub fn integrated_coefficients(&self, t: f64, n: usize, inner_nodes: usize) -> Vec<f64> {
        let t0 = self.interval.0;
        self.modes(n).iter().map(|m| m.eigenvalue.sqrt() * m.basis.integral(t0, t, inner_nodes)).collect()
    }
}

/// Covariance kernel on an interval.
#[derive(Clone)]
pub struct CovKernel {
    pub name: String,
    k: KernelFn,
    interval: (f64, f64),
    row_integral: Option<ScalarFn>,
}

impl fmt::Debug for CovKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CovKernel({}, {:?})", self.name, self.interval)
    }
}

impl CovKernel {
    pub fn custom(name: impl Into<String>, k: KernelFn, t0: f64, t1: f64) -> Result<Self> {
        check_interval(t0, t1)?;
        Ok(CovKernel { name: name.into(), k, interval: (t0, t1), row_integral: None })
    }

    /// min(s, t) - t0, the Brownian motion covariance.
    pub fn brownian_motion(t0: f64, t1: f64) -> Result<Self> {
        check_interval(t0, t1)?;
        Ok(CovKernel {
            name: "min".into(),
            k: Arc::new(move |s, t| s.min(t) - t0),
            interval: (t0, t1),
            row_integral: Some(Arc::new(move |t| {
                let u = t - t0;
                u * u / 2.0 + u * (t1 - t)
            })),
        })
    }

    /// min(s, t) - s t on [0, 1] after mapping [t0, T] to it, scaled by T - t0.
    pub fn brownian_bridge(t0: f64, t1: f64) -> Result<Self> {
        check_interval(t0, t1)?;
        let len = t1 - t0;
        Ok(CovKernel {
            name: "bridge".into(),
            k: Arc::new(move |s, t| {
                let (u, v) = (s - t0, t - t0);
                u.min(v) - u * v / len
            }),
            interval: (t0, t1),
            row_integral: Some(Arc::new(move |t| {
                let u = t - t0;
                u * len / 2.0 - u * u / 2.0
            })),
        })
    }

    pub fn constant(value: f64, t0: f64, t1: f64) -> Result<Self> {
        check_interval(t0, t1)?;
        Ok(CovKernel {
            name: "constant".into(),
            k: Arc::new(move |_, _| value),
            interval: (t0, t1),
            row_integral: Some(Arc::new(move |_| value * (t1 - t0))),
        })
    }

    /// variance * exp(-|s - t| / length).
    pub fn exponential(variance: f64, length: f64, t0: f64, t1: f64) -> Result<Self> {
        check_interval(t0, t1)?;
        if !(variance > 0.0 && length > 0.0) {
            return Err(Error::InvalidParameter("exponential kernel needs variance, length > 0".into()));
        }
        Ok(CovKernel {
            name: "exponential".into(),
            k: Arc::new(move |s, t| variance * (-(s - t).abs() / length).exp()),
            interval: (t0, t1),
            row_integral: Some(Arc::new(move |t| {
                variance * length * (2.0 - (-(t - t0) / length).exp() - (-(t1 - t) / length).exp())
            })),
        })
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn eval(&self, s: f64, t: f64) -> f64 {
        (self.k)(s, t)
    }

    /// int k(t, s) ds over the interval; adaptive with a break at s = t when
    /// no closed form was supplied.
    pub fn row_integral(&self, t: f64) -> f64 {
        match &self.row_integral {
            Some(r) => r(t),
            None => {
                let (a, b) = self.interval;
                let pts: Vec<f64> = if t > a && t < b { vec![a, t, b] } else { vec![a, b] };
                crate::quadrature::integrate_pieces(|s| (self.k)(t, s), &pts, 1e-14, 1e-13).value
            }
        }
    }

    /// Var of int_{t0}^{t} X(s) ds, i.e. the double integral of the kernel over [t0, t]^2.
    pub fn integrated_variance(&self, t: f64) -> f64 {
        let (t0, _) = self.interval;
        match self.name.as_str() {
            "min" => (t - t0).powi(3) / 3.0,
            _ => {
                let inner =
                    |u: f64| crate::quadrature::integrate_pieces(|s| (self.k)(u, s), &[t0, u, t], 1e-14, 1e-13).value;
                integrate(inner, t0, t, 1e-13, 1e-12).value
            }
        }
    }
}

/// Options for the Nystrom solver.
#[derive(Debug, Clone)]
pub struct NystromOptions {
    /// Add the singularity-subtraction diagonal (row integral minus its
    /// quadrature), which restores high accuracy for kernels with a kink
    /// on the diagonal.
    pub corrected: bool,
    pub dist: ScalarDistribution,
}

impl Default for NystromOptions {
    fn default() -> Self {
        NystromOptions { corrected: true, dist: ScalarDistribution::standard_normal() }
    }
}

/// Eigenfunction of a Nystrom discretization, extended off the grid through the kernel.
#[derive(Debug)]
pub struct NystromMode {
    kernel: CovKernel,
    nodes: Arc<Vec<f64>>,
    weights: Arc<Vec<f64>>,
    values: Vec<f64>,
    pub lambda: f64,
    corrected: bool,
}

impl NystromMode {
    pub fn node_values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        if let Ok(i) = self.nodes.binary_search_by(|s| s.total_cmp(&t)) {
            return self.values[i];
        }
        let mut num = 0.0;
        let mut kw = 0.0;
        for ((&s, &w), &v) in self.nodes.iter().zip(self.weights.iter()).zip(&self.values) {
            let k = self.kernel.eval(t, s);
            num += w * k * v;
            kw += w * k;
        }
        let den = if self.corrected { self.lambda - (self.kernel.row_integral(t) - kw) } else { self.lambda };
        num / den
    }
}

/// Gauss-Legendre Nystrom solution of the covariance eigenproblem.
pub fn nystrom_solve(kernel: &CovKernel, n_nodes: usize, n_modes: usize) -> Result<KlProcess> {
    nystrom_solve_with(kernel, n_nodes, n_modes, &NystromOptions::default())
}

pub fn nystrom_solve_with(
    kernel: &CovKernel,
    n_nodes: usize,
    n_modes: usize,
    opts: &NystromOptions,
) -> Result<KlProcess> {
    if n_nodes == 0 || n_modes > n_nodes {
        return Err(Error::InvalidParameter(format!("need 1 <= n_modes ({n_modes}) <= n_nodes ({n_nodes})")));
    }
    opts.dist.check_standardized()?;
    let (t0, t1) = kernel.interval;
    let rule = legendre_on(t0, t1, n_nodes);
    let (s, w) = (rule.nodes, rule.weights);
    let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(n_nodes, n_nodes);
    for i in 0..n_nodes {
        for j in 0..=i {
            let k = kernel.eval(s[i], s[j]);
            let kj = kernel.eval(s[j], s[i]);
            if (k - kj).abs() > 1e-12 * (1.0 + k.abs()) {
                return Err(Error::InvalidParameter(format!("kernel not symmetric at ({}, {})", s[i], s[j])));
            }
            let v = sw[i] * k * sw[j];
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    if opts.corrected {
        for i in 0..n_nodes {
            let kw: f64 = (0..n_nodes).map(|j| kernel.eval(s[i], s[j]) * w[j]).sum();
            a[(i, i)] += kernel.row_integral(s[i]) - kw;
        }
    }
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..n_nodes).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -1e-8 {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let lambda1 = eig.eigenvalues[order[0]].max(0.0);
    let nodes = Arc::new(s);
    let weights = Arc::new(w);
    let mut modes = Vec::new();
    for &k in order.iter().take(n_modes) {
        let mut lambda = eig.eigenvalues[k];
        if lambda < 0.0 {
            lambda = 0.0;
        }
        if lambda <= 1e-12 * lambda1 || lambda == 0.0 {
            break;
        }
        let mut values: Vec<f64> = (0..n_nodes).map(|i| eig.eigenvectors[(i, k)] / sw[i]).collect();
        let integral: f64 = values.iter().zip(weights.iter()).map(|(v, w)| v * w).sum();
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let sign = if integral.abs() > 1e-8 * peak {
            integral.signum()
        } else {
            values.iter().find(|v| v.abs() > 1e-3 * peak).map(|v| v.signum()).unwrap_or(1.0)
        };
        if sign < 0.0 {
            values.iter_mut().for_each(|v| *v = -*v);
        }
        modes.push(Mode {
            eigenvalue: lambda,
            basis: Basis::Nystrom(Arc::new(NystromMode {
                kernel: kernel.clone(),
                nodes: nodes.clone(),
                weights: weights.clone(),
                values,
                lambda,
                corrected: opts.corrected,
            })),
            dist: opts.dist.clone(),
        });
    }
    Ok(KlProcess { interval: (t0, t1), mean: MeanFn::Constant(0.0), modes: Modes::Finite(modes) })
}

/// Result of the series bound diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemarkBound {
    /// sup_t sum_j sqrt(nu_j) |int_{t0}^{t} phi_j|
    pub value: f64,
    /// sqrt(sum_j nu_j) * sqrt(T - t0)
    pub bound: f64,
    pub t_at_sup: f64,
}

/// sup over a 1001-point time grid of sum_j sqrt(nu_j)|int phi_j| for a
/// finite expansion, with the Cauchy-Schwarz/Bessel bound.
pub fn remark_bound(proc: &KlProcess) -> Result<RemarkBound> {
    let n = proc.rank().ok_or_else(|| Error::Unsupported("truncate an unbounded family first".into()))?;
    let (t0, t1) = proc.interval;
    let bound = proc.trace(n).sqrt() * (t1 - t0).sqrt();
    let mut best = RemarkBound { value: 0.0, bound, t_at_sup: t0 };
    for i in 0..=1000 {
        let t = t0 + (t1 - t0) * i as f64 / 1000.0;
        let v: f64 = proc.integrated_coefficients(t, n, DEFAULT_INNER_TIME_NODES).iter().map(|c| c.abs()).sum();
        if v > best.value {
            best.value = v;
            best.t_at_sup = t;
        }
    }
    if best.value > bound * (1.0 + 1e-9) + 1e-12 {
        return Err(Error::Numerical(format!("series value {} exceeds the bound {}", best.value, bound)));
    }
    Ok(best)
}

/// Partial sums sum_{j<=N} (int_{t0}^{t} phi_j)^2 for each N in `ns`.
/// For a complete basis they increase towards t - t0.
pub fn parseval_partial_sums(proc: &KlProcess, t: f64, ns: &[usize]) -> Vec<f64> {
    let max = ns.iter().cloned().max().unwrap_or(0);
    let t0 = proc.interval.0;
    let mut acc = crate::quadrature::Neumaier::default();
    let mut sums = Vec::with_capacity(max + 1);
    sums.push(0.0);
    for m in proc.modes(max) {
        let c = m.basis.integral(t0, t, DEFAULT_INNER_TIME_NODES);
        acc.add(c * c);
        sums.push(acc.value());
    }
    ns.iter().map(|&n| sums[n.min(sums.len() - 1)]).collect()
}

/// JSON form of a process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProcessSpec {
    BrownianMotion {
        #[serde(default = "unit_interval")]
        interval: [f64; 2],
    },
    BrownianBridge {
        #[serde(default = "unit_interval")]
        interval: [f64; 2],
    },
    ExplicitSeries {
        #[serde(default = "unit_interval")]
        interval: [f64; 2],
        #[serde(default)]
        mean: MeanSpec,
        #[serde(default)]
        terms: Vec<TermSpec>,
    },
    Nystrom {
        #[serde(default = "unit_interval")]
        interval: [f64; 2],
        kernel: KernelSpec,
        #[serde(default = "default_nystrom_nodes")]
        n_nodes: usize,
        n_modes: usize,
        #[serde(default = "default_true")]
        corrected: bool,
        #[serde(default)]
        dist: Option<DistSpec>,
    },
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_nystrom_nodes() -> usize {
    200
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanSpec {
    Constant(f64),
    Polynomial(Vec<f64>),
}

impl Default for MeanSpec {
    fn default() -> Self {
        MeanSpec::Constant(0.0)
    }
}

/// A named coefficient function with parameters and the coefficient law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub coef: String,
    #[serde(default)]
    pub params: TermParams,
    pub dist: DistSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermParams {
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "one")]
    pub power: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub frequency: f64,
    /// Number of family terms; unbounded when absent.
    #[serde(default)]
    pub count: Option<usize>,
}

impl Default for TermParams {
    fn default() -> Self {
        TermParams { amplitude: 1.0, power: 1.0, offset: 0.0, frequency: 0.0, count: None }
    }
}

fn one() -> f64 {
    1.0
}

/// Names accepted in `TermSpec::coef`.
pub const COEF_REGISTRY: [&str; 4] = ["sqrt2_over_j_sin", "sine", "cosine", "constant"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum KernelSpec {
    Min,
    Bridge,
    Constant { value: f64 },
    Exponential { variance: f64, length: f64 },
}

impl ProcessSpec {
    pub fn build(&self) -> Result<KlProcess> {
        match self {
            ProcessSpec::BrownianMotion { interval } => brownian_motion(interval[0], interval[1]),
            ProcessSpec::BrownianBridge { interval } => brownian_bridge(interval[0], interval[1]),
            ProcessSpec::ExplicitSeries { interval, mean, terms } => {
                let mean = match mean {
                    MeanSpec::Constant(c) => MeanFn::Constant(*c),
                    MeanSpec::Polynomial(c) => MeanFn::Polynomial(c.clone()),
                };
                let terms = terms.iter().map(TermSpec::build).collect::<Result<Vec<_>>>()?;
                explicit_series(interval[0], interval[1], mean, terms)
            }
            ProcessSpec::Nystrom { interval, kernel, n_nodes, n_modes, corrected, dist } => {
                let (t0, t1) = (interval[0], interval[1]);
                let k = match kernel {
                    KernelSpec::Min => CovKernel::brownian_motion(t0, t1)?,
                    KernelSpec::Bridge => CovKernel::brownian_bridge(t0, t1)?,
                    KernelSpec::Constant { value } => CovKernel::constant(*value, t0, t1)?,
                    KernelSpec::Exponential { variance, length } => CovKernel::exponential(*variance, *length, t0, t1)?,
                };
                let dist = match dist {
                    Some(d) => d.build()?,
                    None => ScalarDistribution::standard_normal(),
                };
                nystrom_solve_with(&k, *n_nodes, *n_modes, &NystromOptions { corrected: *corrected, dist })
            }
        }
    }

    pub fn interval(&self) -> [f64; 2] {
        match self {
            ProcessSpec::BrownianMotion { interval }
            | ProcessSpec::BrownianBridge { interval }
            | ProcessSpec::ExplicitSeries { interval, .. }
            | ProcessSpec::Nystrom { interval, .. } => *interval,
        }
    }
}

impl TermSpec {
    pub fn build(&self) -> Result<Term> {
        let dist = self.dist.build()?;
        let p = &self.params;
        Ok(match self.coef.as_str() {
            "sqrt2_over_j_sin" => Term::Family {
                family: SeriesFamily::Sqrt2OverJSin { amplitude: p.amplitude, power: p.power, offset: p.offset },
                count: p.count,
                dist,
            },
            "sine" => Term::Sine { amplitude: p.amplitude, frequency: p.frequency, dist },
            "cosine" => Term::Cosine { amplitude: p.amplitude, frequency: p.frequency, dist },
            "constant" => Term::Constant { amplitude: p.amplitude, dist },
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown coefficient function '{other}'; known: {}",
                    COEF_REGISTRY.join(", ")
                )))
            }
        })
    }
}
