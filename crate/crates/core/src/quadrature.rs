//! Gauss rules, tensor grids, adaptive 1-D integration and seeded Monte Carlo.
//!
//! Probability rules carry the density in their weights, so a rule for a
//! distribution is a discrete probability measure whose weights sum to one.
//! Parallel reductions chunk the work in a fixed way and combine chunk sums
//! pairwise, so results do not depend on the number of threads.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistKind, ScalarDistribution};
use crate::error::{Error, Result};

pub const DEFAULT_NODES_PER_DIM: usize = 16;
pub const DEFAULT_INNER_TIME_NODES: usize = 64;
pub const DEFAULT_TENSOR_CAP: f64 = 1e7;
pub const MIN_MC_SAMPLES: usize = 100;

/// Points handled by one sequential chunk in parallel reductions.
pub const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).collect();
        pairwise_sum(&terms)
    }

    /// Drop nodes whose weight underflowed to zero.
    fn prune(mut self) -> Rule {
        let keep: Vec<bool> = self.weights.iter().map(|&w| w > 0.0).collect();
        let mut i = 0;
        self.nodes.retain(|_| {
            i += 1;
            keep[i - 1]
        });
        self.weights.retain(|&w| w > 0.0);
        self
    }
}

/// Nodes and weights from the Jacobi matrix of a three-term recurrence.
///
/// `diag` holds the recurrence alphas, `offdiag` the square roots of the
/// betas, and `mu0` the total mass of the weight function.
pub fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
    }
    for i in 1..n {
        m[(i, i - 1)] = offdiag[i - 1];
        m[(i - 1, i)] = offdiag[i - 1];
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Rule { nodes, weights }
}

/// Gauss-Legendre on [-1, 1], weights summing to 2.
pub fn legendre(n: usize) -> Rule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let mut rule = golub_welsch(&diag, &off, 2.0);
    // Impose exact symmetry about the origin.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
    rule
}

/// Gauss-Legendre mapped to [lo, hi]; weights sum to hi - lo.
pub fn legendre_on(lo: f64, hi: f64, n: usize) -> Rule {
    let base = legendre(n);
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Rule {
        nodes: base.nodes.iter().map(|&x| mid + half * x).collect(),
        weights: base.weights.iter().map(|&w| half * w).collect(),
    }
}

/// Probabilists' Gauss-Hermite for the standard normal; weights sum to 1.
pub fn hermite(n: usize) -> Rule {
    assert!(n >= 1);
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut rule = golub_welsch(&diag, &off, 1.0);
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
    rule
}

/// Generalized Gauss-Laguerre for the weight x^alpha e^{-x} / Gamma(alpha + 1),
/// i.e. a probability rule for Gamma(alpha + 1, 1).
pub fn laguerre(alpha: f64, n: usize) -> Rule {
    assert!(n >= 1 && alpha > -1.0);
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            (k * (k + alpha)).sqrt()
        })
        .collect();
    golub_welsch(&diag, &off, 1.0)
}

/// Classical rule by distribution kind.
///
/// Standard normal gives the probabilists' Hermite rule (weights sum to 1).
/// A bounded support [lo, hi] gives Legendre mapped to it with weights
/// summing to hi - lo; the density must be folded into the integrand.
pub fn gauss_rule(dist: &ScalarDistribution, n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::InvalidParameter("rule needs at least one node".into()));
    }
    if let DistKind::Normal { mean, variance } = dist.kind() {
        if *mean == 0.0 && *variance == 1.0 {
            return Ok(hermite(n));
        }
    }
    let s = dist.support();
    if s.lo.is_finite() && s.hi.is_finite() {
        return Ok(legendre_on(s.lo, s.hi, n));
    }
    Err(Error::Unsupported(format!("no classical Gauss rule for {}; use Monte Carlo mode", dist.name())))
}

/// Gauss rule that is a probability measure for `dist`.
///
/// Normal uses scaled Hermite, Gamma generalized Laguerre, the quartic
/// Cauchy law a Legendre rule in the angle variable of x = tan(theta), and
/// every compactly supported law Legendre with the density folded into the
/// weights. Unbounded custom laws need Monte Carlo or `truncated_legendre`.
pub fn probability_rule(dist: &ScalarDistribution, n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::InvalidParameter("rule needs at least one node".into()));
    }
    let rule = match dist.kind() {
        DistKind::Normal { mean, variance } => {
            let sd = variance.sqrt();
            let h = hermite(n);
            Rule { nodes: h.nodes.iter().map(|&z| mean + sd * z).collect(), weights: h.weights }
        }
        DistKind::Uniform { lo, hi } => {
            let r = legendre_on(*lo, *hi, n);
            let h = hi - lo;
            Rule { nodes: r.nodes, weights: r.weights.iter().map(|w| w / h).collect() }
        }
        DistKind::Gamma { shape, rate } => {
            let l = laguerre(shape - 1.0, n);
            Rule { nodes: l.nodes.iter().map(|&u| u / rate).collect(), weights: l.weights }
        }
        DistKind::QuarticCauchy => {
            let half_pi = std::f64::consts::FRAC_PI_2;
            let r = legendre_on(-half_pi, half_pi, n);
            let mut nodes = Vec::with_capacity(n);
            let mut weights = Vec::with_capacity(n);
            for (&th, &w) in r.nodes.iter().zip(&r.weights) {
                let x = th.tan();
                let c = th.cos();
                nodes.push(x);
                weights.push(w * dist.pdf(x) / (c * c));
            }
            Rule { nodes, weights }
        }
        _ => {
            let s = dist.support();
            if !(s.lo.is_finite() && s.hi.is_finite()) {
                return Err(Error::Unsupported(format!(
                    "no probability rule for unbounded {}; use Monte Carlo or a truncated Legendre rule",
                    dist.name()
                )));
            }
            return Ok(truncated_legendre(dist, s.lo, s.hi, n));
        }
    };
    Ok(rule.prune())
}

/// Legendre rule on [lo, hi] with the density of `dist` folded into the weights.
pub fn truncated_legendre(dist: &ScalarDistribution, lo: f64, hi: f64, n: usize) -> Rule {
    let r = legendre_on(lo, hi, n);
    let weights = r.nodes.iter().zip(&r.weights).map(|(&x, &w)| w * dist.pdf(x)).collect();
    Rule { nodes: r.nodes, weights }.prune()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum QuadratureSpec {
    Tensor {
        #[serde(default = "default_nodes")]
        nodes_per_dim: usize,
        #[serde(default = "default_inner")]
        inner_time_nodes: usize,
        #[serde(default = "default_cap")]
        tensor_cap: f64,
    },
    Mc {
        n_samples: usize,
        seed: u64,
        #[serde(default = "default_inner")]
        inner_time_nodes: usize,
    },
}

fn default_nodes() -> usize {
    DEFAULT_NODES_PER_DIM
}

fn default_inner() -> usize {
    DEFAULT_INNER_TIME_NODES
}

fn default_cap() -> f64 {
    DEFAULT_TENSOR_CAP
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec::tensor(DEFAULT_NODES_PER_DIM)
    }
}

impl QuadratureSpec {
    pub fn tensor(nodes_per_dim: usize) -> Self {
        QuadratureSpec::Tensor {
            nodes_per_dim,
            inner_time_nodes: DEFAULT_INNER_TIME_NODES,
            tensor_cap: DEFAULT_TENSOR_CAP,
        }
    }

    pub fn mc(n_samples: usize, seed: u64) -> Self {
        QuadratureSpec::Mc { n_samples, seed, inner_time_nodes: DEFAULT_INNER_TIME_NODES }
    }

    pub fn inner_time_nodes(&self) -> usize {
        match self {
            QuadratureSpec::Tensor { inner_time_nodes, .. } => *inner_time_nodes,
            QuadratureSpec::Mc { inner_time_nodes, .. } => *inner_time_nodes,
        }
    }

    pub fn with_inner_time_nodes(mut self, n: usize) -> Self {
        match &mut self {
            QuadratureSpec::Tensor { inner_time_nodes, .. } => *inner_time_nodes = n,
            QuadratureSpec::Mc { inner_time_nodes, .. } => *inner_time_nodes = n,
        }
        self
    }

    pub fn is_mc(&self) -> bool {
        matches!(self, QuadratureSpec::Mc { .. })
    }

    /// All violated constraints, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        match self {
            QuadratureSpec::Tensor { nodes_per_dim, inner_time_nodes, tensor_cap } => {
                if *nodes_per_dim < 1 {
                    v.push("quad.nodes_per_dim must be >= 1".to_string());
                }
                if *inner_time_nodes < 1 {
                    v.push("quad.inner_time_nodes must be >= 1".to_string());
                }
                if !(*tensor_cap >= 1.0) {
                    v.push("quad.tensor_cap must be >= 1".to_string());
                }
            }
            QuadratureSpec::Mc { n_samples, inner_time_nodes, .. } => {
                if *n_samples < MIN_MC_SAMPLES {
                    v.push(format!("quad.n_samples must be >= {MIN_MC_SAMPLES}"));
                }
                if *inner_time_nodes < 1 {
                    v.push("quad.inner_time_nodes must be >= 1".to_string());
                }
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// Cartesian product of one-dimensional rules, enumerated in row-major order
/// with the last dimension fastest.
#[derive(Debug, Clone)]
pub struct TensorGrid {
    rules: Vec<Rule>,
    total: usize,
}

impl TensorGrid {
    pub fn new(rules: Vec<Rule>, cap: f64) -> Result<Self> {
        let points: f64 = rules.iter().map(|r| r.len() as f64).product();
        if points > cap {
            return Err(Error::TensorCap { points, cap });
        }
        Ok(TensorGrid { total: points as usize, rules })
    }

    pub fn dim(&self) -> usize {
        self.rules.len()
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Writes the nodes of point `index` into `buf` and returns its weight.
    pub fn point(&self, mut index: usize, buf: &mut [f64]) -> f64 {
        let mut w = 1.0;
        for d in (0..self.rules.len()).rev() {
            let r = &self.rules[d];
            let k = index % r.len();
            index /= r.len();
            buf[d] = r.nodes[k];
            w *= r.weights[k];
        }
        w
    }
}

/// E[f(X)] over independent coordinates by a tensor Gauss rule.
pub fn tensor_integrate<F>(f: F, dists: &[ScalarDistribution], spec: &QuadratureSpec) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let (n, cap) = match spec {
        QuadratureSpec::Tensor { nodes_per_dim, tensor_cap, .. } => (*nodes_per_dim, *tensor_cap),
        QuadratureSpec::Mc { .. } => {
            return Err(Error::InvalidParameter("tensor_integrate needs a tensor spec".into()))
        }
    };
    let rules = dists.iter().map(|d| probability_rule(d, n)).collect::<Result<Vec<_>>>()?;
    let grid = TensorGrid::new(rules, cap)?;
    let d = grid.dim();
    Ok(par_chunked_sum(grid.len(), |range| {
        let mut buf = vec![0.0; d];
        let mut acc = Neumaier::default();
        for i in range {
            let w = grid.point(i, &mut buf);
            acc.add(w * f(&buf));
        }
        acc.value()
    }))
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        let mut acc = Neumaier::default();
        for &x in xs {
            acc.add(x);
        }
        return acc.value();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Sum over `0..n` split into fixed chunks of `CHUNK`, evaluated in parallel
/// and combined pairwise in chunk order.
pub fn par_chunked_sum<F>(n: usize, chunk_sum: F) -> f64
where
    F: Fn(std::ops::Range<usize>) -> f64 + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let parts: Vec<f64> = (0..chunks).into_par_iter().map(|c| chunk_sum(c * CHUNK..((c + 1) * CHUNK).min(n))).collect();
    pairwise_sum(&parts)
}

/// Compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Running mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. parallel combination.
    pub fn merge(&self, other: &Welford) -> Welford {
        if self.count == 0 {
            return *other;
        }
        if other.count == 0 {
            return *self;
        }
        let n = self.count + other.count;
        let (na, nb) = (self.count as f64, other.count as f64);
        let d = other.mean - self.mean;
        Welford { count: n, mean: self.mean + d * nb / n as f64, m2: self.m2 + other.m2 + d * d * na * nb / n as f64 }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Merge accumulators pairwise in order.
pub fn merge_pairwise(parts: &[Welford]) -> Welford {
    match parts.len() {
        0 => Welford::default(),
        1 => parts[0],
        n => {
            let mid = n / 2;
            merge_pairwise(&parts[..mid]).merge(&merge_pairwise(&parts[mid..]))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub non_finite: usize,
}

/// Random stream for batch `stream` of a run seeded by `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Run `n` samples in batches of `CHUNK`, each batch on its own stream
/// `stream_base + batch`, accumulating with Welford and merging in order.
pub fn mc_batches<F>(n: usize, seed: u64, stream_base: u64, f: F) -> (Welford, usize)
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let batches = n.div_ceil(CHUNK);
    let parts: Vec<(Welford, usize)> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_stream(seed, stream_base + b as u64);
            let m = CHUNK.min(n - b * CHUNK);
            let mut acc = Welford::default();
            let mut bad = 0;
            for _ in 0..m {
                let v = f(&mut rng);
                if v.is_finite() {
                    acc.push(v);
                } else {
                    bad += 1;
                }
            }
            (acc, bad)
        })
        .collect();
    let acc: Vec<Welford> = parts.iter().map(|p| p.0).collect();
    (merge_pairwise(&acc), parts.iter().map(|p| p.1).sum())
}

/// Check the fraction of discarded non-finite samples.
pub fn check_non_finite(non_finite: usize, n: usize) -> Result<()> {
    if n > 0 && non_finite as f64 > 1e-3 * n as f64 {
        return Err(Error::Numerical(format!("{non_finite} of {n} Monte Carlo samples were not finite")));
    }
    Ok(())
}

/// Monte Carlo estimate of E[f(X)] with independent coordinates.
pub fn mc_expectation<F>(f: F, dists: &[ScalarDistribution], n_samples: usize, seed: u64) -> Result<McEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    for d in dists {
        d.check_samplable()?;
    }
    let (acc, bad) = mc_batches(n_samples, seed, 0, |rng| {
        let x: Vec<f64> = dists.iter().map(|d| d.sample(rng)).collect();
        f(&x)
    });
    check_non_finite(bad, n_samples)?;
    Ok(McEstimate { estimate: acc.mean, stderr: acc.stderr(), n_samples, non_finite: bad })
}

const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut g = GK_WG[3] * fc;
    for i in 0..7 {
        let dx = h * GK_X[i];
        let s = f(c - dx) + f(c + dx);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            g += GK_WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub converged: bool,
}

const MAX_SUBDIVISIONS: usize = 4000;

/// Globally adaptive Gauss-Kronrod (7, 15) on a finite or infinite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    if a == b {
        return Integral { value: 0.0, error: 0.0, converged: true };
    }
    if a > b {
        let r = integrate(f, b, a, abs_tol, rel_tol);
        return Integral { value: -r.value, ..r };
    }
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adapt(&f, a, b, abs_tol, rel_tol),
        (true, false) => {
            let g = |u: f64| {
                let v = 1.0 - u;
                let y = f(a + u / v);
                if y == 0.0 {
                    0.0
                } else {
                    y / (v * v)
                }
            };
            adapt(&g, 0.0, 1.0, abs_tol, rel_tol)
        }
        (false, true) => {
            let g = |u: f64| {
                let y = f(b - (1.0 - u) / u);
                if y == 0.0 {
                    0.0
                } else {
                    y / (u * u)
                }
            };
            adapt(&g, 0.0, 1.0, abs_tol, rel_tol)
        }
        (false, false) => {
            let g = |u: f64| {
                let v = 1.0 - u * u;
                let y = f(u / v);
                if y == 0.0 {
                    0.0
                } else {
                    y * (1.0 + u * u) / (v * v)
                }
            };
            adapt(&g, -1.0, 1.0, abs_tol, rel_tol)
        }
    }
}

/// Adaptive integration over consecutive pieces split at `points`
/// (which must be sorted and include both ends).
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, points: &[f64], abs_tol: f64, rel_tol: f64) -> Integral {
    let mut out = Integral { value: 0.0, error: 0.0, converged: true };
    let pieces = points.len().saturating_sub(1).max(1);
    for w in points.windows(2) {
        if w[1] <= w[0] {
            continue;
        }
        let r = integrate(&f, w[0], w[1], abs_tol / pieces as f64, rel_tol);
        out.value += r.value;
        out.error += r.error;
        out.converged &= r.converged;
    }
    out
}

fn adapt<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Integral {
    let (v, e) = gk15(f, a, b);
    let mut segs = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while segs.len() < MAX_SUBDIVISIONS {
        if err <= abs_tol.max(rel_tol * total.abs()) {
            break;
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, s)| if s.3 > best.1 { (i, s.3) } else { best });
        let (lo, hi, sv, se) = segs.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            segs.push((lo, hi, sv, se));
            break;
        }
        let (v1, e1) = gk15(f, lo, mid);
        let (v2, e2) = gk15(f, mid, hi);
        total += v1 + v2 - sv;
        err += e1 + e2 - se;
        segs.push((lo, mid, v1, e1));
        segs.push((mid, hi, v2, e2));
    }
    // Re-sum to shed accumulated cancellation.
    segs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let vals: Vec<f64> = segs.iter().map(|s| s.2).collect();
    let errs: Vec<f64> = segs.iter().map(|s| s.3).collect();
    let value = pairwise_sum(&vals);
    let error = pairwise_sum(&errs);
    Integral { value, error, converged: error <= abs_tol.max(rel_tol * value.abs()) }
}
