//! Densities of the truncated solution by random variable transformation.
//!
//! Four equivalent integral forms are available:
//!
//! * `Complete`: E over (xi, eta) of f0(x e^{-K} - Z) e^{-K}.
//! * `Homogeneous`: E over xi of f0(x e^{-K}) e^{-K}, when b = 0.
//! * `Eta1`: eta_1 solved for, integrating over (x0, xi, eta_2..).
//! * `Xi1`: xi_1 solved for, integrating over (x0, xi_2..), when b = 0.
//! * `Split`: the homogeneous form with the xi_1 integral done in one
//!   dimension over the range where x e^{-K} stays in the support of f0.
//!
//! Each form is reduced to a weighted ensemble of "atoms" at a fixed time,
//! either a tensor Gauss grid or Monte Carlo draws, after which evaluating
//! at any x is a plain weighted sum.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{DistKind, ScalarDistribution};
use crate::error::{Error, Result};
use crate::kl::CovKernel;
use crate::quadrature::{
    check_non_finite, integrate_pieces, legendre, mc_batches, probability_rule, McEstimate, Neumaier, QuadratureSpec,
    Rule, TensorGrid, Welford,
};
use crate::solution::{ProblemSpec, TimeSlice};

/// Threshold below which int phi_1 counts as zero.
pub const XI1_THRESHOLD: f64 = 1e-12;

/// Points of the grid checks for the eta_1 / xi_1 hypotheses.
pub const HYPOTHESIS_GRID: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formula {
    #[serde(rename = "auto")]
    Auto,
    #[serde(rename = "f1n")]
    Complete,
    #[serde(rename = "f1homo")]
    Homogeneous,
    #[serde(rename = "eta1")]
    Eta1,
    #[serde(rename = "xi1")]
    Xi1,
    #[serde(rename = "f1homo_split")]
    Split,
}

impl Formula {
    pub fn name(&self) -> &'static str {
        match self {
            Formula::Auto => "auto",
            Formula::Complete => "f1n",
            Formula::Homogeneous => "f1homo",
            Formula::Eta1 => "eta1",
            Formula::Xi1 => "xi1",
            Formula::Split => "f1homo_split",
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Formula {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => Formula::Auto,
            "f1n" => Formula::Complete,
            "f1homo" => Formula::Homogeneous,
            "eta1" => Formula::Eta1,
            "xi1" => Formula::Xi1,
            "f1homo_split" => Formula::Split,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown formula '{other}'; expected auto|f1n|f1homo|eta1|xi1|f1homo_split"
                )))
            }
        })
    }
}

/// psi_1 > 0 on a grid of the open interval.
pub fn psi1_positive(spec: &ProblemSpec) -> Result<()> {
    let b = spec.b.as_ref().ok_or_else(|| Error::Hypothesis("no b-process".into()))?;
    let m1 = b.mode(1).ok_or_else(|| Error::Hypothesis("b has no modes".into()))?;
    let (t0, t1) = spec.interval();
    for i in 1..HYPOTHESIS_GRID {
        let s = t0 + (t1 - t0) * i as f64 / HYPOTHESIS_GRID as f64;
        let v = m1.basis.eval(s);
        if !(v > 0.0) {
            return Err(Error::Hypothesis(format!("psi_1({s}) = {v:.3e} is not positive")));
        }
    }
    Ok(())
}

/// int_{t0}^{s} phi_1 != 0 for s on a grid of (t0, T].
pub fn int_phi1_nonzero(spec: &ProblemSpec, inner_nodes: usize) -> Result<()> {
    let m1 = spec.a.mode(1).ok_or_else(|| Error::Hypothesis("a has no modes".into()))?;
    let (t0, t1) = spec.interval();
    for i in 1..=HYPOTHESIS_GRID {
        let s = t0 + (t1 - t0) * i as f64 / HYPOTHESIS_GRID as f64;
        let v = m1.basis.integral(t0, s, inner_nodes);
        if !(v.abs() > XI1_THRESHOLD) {
            return Err(Error::Hypothesis(format!("int phi_1 over [{t0}, {s}] = {v:.3e} vanishes")));
        }
    }
    Ok(())
}

/// Pick the formula used for `Auto` at time t.
///
/// Complete problems use the complete form. Homogeneous problems with a
/// discontinuous f0 use the split form: a tensor rule straddling a jump of f0
/// converges slowly, and the xi_1-isolated form loses resolution in x0 when
/// int phi_1 is small (early times). Otherwise the plain homogeneous form.
pub fn resolve_formula(spec: &ProblemSpec, n: usize, t: f64, formula: Formula, inner_nodes: usize) -> Formula {
    if formula != Formula::Auto {
        return formula;
    }
    if spec.b.is_some() {
        return Formula::Complete;
    }
    let (t0, _) = spec.interval();
    if spec.x0.regularity().continuous || t <= t0 || spec.a.effective_n(n) == 0 {
        return Formula::Homogeneous;
    }
    match spec.a.mode(1) {
        Some(m1) if (m1.eigenvalue.sqrt() * m1.basis.integral(t0, t, inner_nodes)).abs() > XI1_THRESHOLD => {
            Formula::Split
        }
        _ => Formula::Homogeneous,
    }
}

/// Legendre nodes of the one-dimensional xi_1 rule under Monte Carlo.
pub const SPLIT_MC_NODES: usize = 32;

/// Half-width, in standard deviations, kept of a normal xi_1.
const NORMAL_SPAN: f64 = 9.0;

/// Widest panel of the split rule, in standard deviations of xi_1.
const PANEL_SDS: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
enum Atom {
    /// e^{-K} and Z.
    Transform { y: f64, z: f64 },
    /// e^{-K}, x0 + Z without mode 1, and the eta_1 coefficient.
    Eta1 { y: f64, c: f64, d: f64 },
    /// x0 and int mu_a + sum_{j>=2} c_j xi_j.
    Xi1 { x0: f64, m: f64 },
    /// int mu_a + sum_{j>=2} c_j xi_j.
    Split { m: f64 },
    /// Exponent overflow: the contribution tends to zero.
    Dropped,
}

/// Everything needed to produce atoms for one (spec, N, t, formula).
struct Context<'a> {
    spec: &'a ProblemSpec,
    slice: TimeSlice,
    formula: Formula,
    dists: Vec<ScalarDistribution>,
    /// Density of the isolated coefficient (eta_1 or xi_1).
    pivot: Option<ScalarDistribution>,
    c1: f64,
    /// Legendre rule on [-1, 1] for the split form.
    split_rule: Rule,
}

impl<'a> Context<'a> {
    fn new(
        spec: &'a ProblemSpec,
        n: usize,
        t: f64,
        formula: Formula,
        inner_nodes: usize,
        split_nodes: usize,
    ) -> Result<Self> {
        spec.check_time(t)?;
        let (t0, _) = spec.interval();
        let formula = resolve_formula(spec, n, t, formula, inner_nodes);
        match formula {
            Formula::Complete => {
                if spec.b.is_none() {
                    return Err(Error::InvalidParameter(
                        "the complete form needs a b-process; use the homogeneous form".into(),
                    ));
                }
            }
            Formula::Homogeneous => {
                if spec.b.is_some() {
                    return Err(Error::InvalidParameter(
                        "the homogeneous form needs b = 0; use the complete form".into(),
                    ));
                }
            }
            Formula::Eta1 => {
                if t <= t0 {
                    return Err(Error::Singular(format!("the eta_1 form needs t > t0 = {t0}")));
                }
                if spec.b_order(n) == 0 {
                    return Err(Error::Hypothesis("the eta_1 form needs a b-process with at least one mode".into()));
                }
                psi1_positive(spec)?;
            }
            Formula::Split => {
                if spec.b.is_some() {
                    return Err(Error::InvalidParameter("the split form needs b = 0".into()));
                }
                if spec.a.effective_n(n) == 0 {
                    return Err(Error::Hypothesis("the split form needs at least one a-mode".into()));
                }
            }
            Formula::Xi1 => {
                if spec.b.is_some() {
                    return Err(Error::InvalidParameter("the xi_1 form needs b = 0".into()));
                }
                if spec.a.effective_n(n) == 0 {
                    return Err(Error::Hypothesis("the xi_1 form needs at least one a-mode".into()));
                }
                int_phi1_nonzero(spec, inner_nodes)?;
            }
            Formula::Auto => unreachable!(),
        }
        let slice = TimeSlice::new(spec, n, n, t, inner_nodes)?;
        let a_modes = spec.a.modes(n);
        let b_modes = spec.b.as_ref().map(|b| b.modes(n)).unwrap_or_default();
        let mut dists = Vec::new();
        let mut pivot = None;
        let mut c1 = 0.0;
        match formula {
            Formula::Complete => {
                dists.extend(a_modes.iter().map(|m| m.dist.clone()));
                dists.extend(b_modes.iter().map(|m| m.dist.clone()));
            }
            Formula::Homogeneous => dists.extend(a_modes.iter().map(|m| m.dist.clone())),
            Formula::Eta1 => {
                dists.push(spec.x0.clone());
                dists.extend(a_modes.iter().map(|m| m.dist.clone()));
                dists.extend(b_modes.iter().skip(1).map(|m| m.dist.clone()));
                pivot = Some(b_modes[0].dist.clone());
            }
            Formula::Xi1 => {
                dists.push(spec.x0.clone());
                dists.extend(a_modes.iter().skip(1).map(|m| m.dist.clone()));
                pivot = Some(a_modes[0].dist.clone());
                c1 = slice.ka_coefficients()[0];
                if !(c1.abs() > XI1_THRESHOLD) {
                    return Err(Error::Hypothesis(format!("int phi_1 over [{t0}, {t}] vanishes")));
                }
            }
            Formula::Split => {
                dists.extend(a_modes.iter().skip(1).map(|m| m.dist.clone()));
                pivot = Some(a_modes[0].dist.clone());
                c1 = slice.ka_coefficients()[0];
                if !(c1.abs() > XI1_THRESHOLD) {
                    return Err(Error::Hypothesis(format!("int phi_1 over [{t0}, {t}] vanishes")));
                }
            }
            Formula::Auto => unreachable!(),
        }
        let split_rule = legendre(split_nodes.max(1));
        Ok(Context { spec, slice, formula, dists, pivot, c1, split_rule })
    }

    fn atom(&self, p: &[f64]) -> Result<Atom> {
        let n = self.slice.n;
        let dropped = |e: Error| match e {
            Error::Overflow { .. } => Ok(Atom::Dropped),
            e => Err(e),
        };
        match self.formula {
            Formula::Complete | Formula::Homogeneous => {
                let (xi, eta) = p.split_at(n);
                match self.slice.parts(xi, eta) {
                    Ok(s) => Ok(Atom::Transform { y: s.y, z: s.z }),
                    Err(e) => dropped(e),
                }
            }
            Formula::Eta1 => {
                let x0 = p[0];
                let (xi, eta_rest) = p[1..].split_at(n);
                let k = self.slice.k_t(xi);
                if k.abs() > crate::solution::MAX_EXPONENT {
                    return Ok(Atom::Dropped);
                }
                match self.slice.eta1_split(xi, eta_rest) {
                    Ok((z0, d)) => Ok(Atom::Eta1 { y: (-k).exp(), c: x0 + z0, d }),
                    Err(e) => dropped(e),
                }
            }
            Formula::Xi1 => {
                let c = self.slice.ka_coefficients();
                let m = self.slice.ka_mean() + c[1..].iter().zip(&p[1..]).map(|(c, x)| c * x).sum::<f64>();
                Ok(Atom::Xi1 { x0: p[0], m })
            }
            Formula::Split => {
                let c = self.slice.ka_coefficients();
                let m = self.slice.ka_mean() + c[1..].iter().zip(p).map(|(c, x)| c * x).sum::<f64>();
                Ok(Atom::Split { m })
            }
            Formula::Auto => unreachable!(),
        }
    }

    fn contribution(&self, atom: &Atom, x: f64) -> f64 {
        match *atom {
            Atom::Transform { y, z } => {
                let f = self.spec.x0.pdf(x * y - z);
                if f == 0.0 {
                    0.0
                } else {
                    f * y
                }
            }
            Atom::Eta1 { y, c, d } => {
                let pivot = self.pivot.as_ref().expect("eta_1 density");
                let f = pivot.pdf((x * y - c) / d);
                if f == 0.0 {
                    0.0
                } else {
                    f * y / d.abs()
                }
            }
            Atom::Xi1 { x0, m } => {
                if x0 == 0.0 || (x0 > 0.0) != (x > 0.0) {
                    return 0.0;
                }
                let pivot = self.pivot.as_ref().expect("xi_1 density");
                let u = ((x / x0).ln() - m) / self.c1;
                pivot.pdf(u) / (x.abs() * self.c1.abs())
            }
            Atom::Split { m } => self.split_integral(m, x),
            Atom::Dropped => 0.0,
        }
    }

    /// int f_xi1(u) f0(x e^{-k}) e^{-k} du with k = m + c1 u, over the range of
    /// u where x e^{-k} lies in the support of f0. The integrand is smooth
    /// there, so a Gauss rule on that range converges quickly.
    fn split_integral(&self, m: f64, x: f64) -> f64 {
        let pivot = self.pivot.as_ref().expect("xi_1 density");
        let x0 = &self.spec.x0;
        let c1 = self.c1;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        if x != 0.0 {
            // Magnitudes |x| e^{-k} allowed on the side of sign(x).
            let s = x0.support();
            let (a, b) = if x > 0.0 { (s.lo.max(0.0), s.hi) } else { ((-s.hi).max(0.0), -s.lo) };
            if !(b > 0.0) || a > b {
                return 0.0;
            }
            let lx = x.abs().ln();
            let u1 = (lx - b.ln() - m) / c1;
            let u2 = (lx - a.ln() - m) / c1;
            lo = u1.min(u2);
            hi = u1.max(u2);
        } else if !x0.support().contains(0.0) {
            return 0.0;
        }
        let sp = pivot.support();
        lo = lo.max(sp.lo);
        hi = hi.min(sp.hi);
        let (mu, sd) = match (pivot.mean(), pivot.variance().sqrt()) {
            (mu, sd) if mu.is_finite() && sd.is_finite() && sd > 0.0 => (mu, sd),
            _ => (0.0, 1.0),
        };
        if matches!(pivot.kind(), DistKind::Normal { .. }) {
            lo = lo.max(mu - NORMAL_SPAN * sd);
            hi = hi.min(mu + NORMAL_SPAN * sd);
        }
        if !(lo < hi) {
            return 0.0;
        }
        let g = |u: f64| {
            let k = m + c1 * u;
            if k.abs() > crate::solution::MAX_EXPONENT {
                return 0.0;
            }
            let y = (-k).exp();
            let f = x0.pdf(x * y);
            if f == 0.0 {
                0.0
            } else {
                f * y * pivot.pdf(u)
            }
        };
        let rule = &self.split_rule;
        let mut acc = Neumaier::default();
        // Composite rule: panels at most PANEL_SDS standard deviations wide,
        // or a quarter turn in the tan-mapped coordinate.
        let mut panels = |a: f64, b: f64, width: f64, h: &dyn Fn(f64) -> f64| {
            let count = ((b - a) / width).ceil().max(1.0) as usize;
            let step = (b - a) / count as f64;
            for p in 0..count {
                let mid = a + step * (p as f64 + 0.5);
                for (z, w) in rule.nodes.iter().zip(&rule.weights) {
                    acc.add(w * 0.5 * step * h(mid + 0.5 * step * z));
                }
            }
        };
        if lo.is_finite() && hi.is_finite() {
            panels(lo, hi, PANEL_SDS * sd, &g);
        } else {
            // u = mu + sd tan(theta) keeps heavy tails on a finite range.
            let h = |th: f64| {
                let c = th.cos();
                g(mu + sd * th.tan()) * sd / (c * c)
            };
            panels(((lo - mu) / sd).atan(), ((hi - mu) / sd).atan(), std::f64::consts::FRAC_PI_4, &h);
        }
        acc.value()
    }
}

/// Weighted atoms of a tensor rule at one time.
struct Ensemble {
    atoms: Vec<(Atom, f64)>,
    dropped_weight: f64,
    dropped: usize,
}

fn tensor_ensemble(ctx: &Context, nodes_per_dim: usize, cap: f64) -> Result<Ensemble> {
    let rules = ctx.dists.iter().map(|d| probability_rule(d, nodes_per_dim)).collect::<Result<Vec<_>>>()?;
    let grid = TensorGrid::new(rules, cap)?;
    let d = grid.dim();
    let chunks = grid.len().div_ceil(crate::quadrature::CHUNK);
    let parts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let lo = c * crate::quadrature::CHUNK;
            let hi = (lo + crate::quadrature::CHUNK).min(grid.len());
            let mut buf = vec![0.0; d];
            let mut out = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let w = grid.point(i, &mut buf);
                if w > 0.0 {
                    out.push((ctx.atom(&buf)?, w));
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut atoms = Vec::with_capacity(grid.len());
    let mut dropped_weight = Neumaier::default();
    let mut dropped = 0;
    for part in parts {
        for (a, w) in part {
            if matches!(a, Atom::Dropped) {
                dropped_weight.add(w);
                dropped += 1;
            } else {
                atoms.push((a, w));
            }
        }
    }
    Ok(Ensemble { atoms, dropped_weight: dropped_weight.value(), dropped })
}

fn ensemble_value(ctx: &Context, ens: &Ensemble, x: f64) -> f64 {
    let mut acc = Neumaier::default();
    for (a, w) in &ens.atoms {
        let c = ctx.contribution(a, x);
        if c != 0.0 {
            acc.add(w * c);
        }
    }
    acc.value()
}

/// Streams per grid point; point p uses streams p * STREAM_STRIDE + batch.
const STREAM_STRIDE: u64 = 1 << 32;

fn mc_value(ctx: &Context, x: f64, n_samples: usize, seed: u64, point: u64) -> Result<(Welford, usize, usize)> {
    for d in &ctx.dists {
        d.check_samplable()?;
    }
    let dropped = std::sync::atomic::AtomicUsize::new(0);
    let failure = std::sync::Mutex::new(None);
    let (acc, bad) = mc_batches(n_samples, seed, point * STREAM_STRIDE, |rng| {
        let p: Vec<f64> = ctx.dists.iter().map(|d| d.sample(rng)).collect();
        match ctx.atom(&p) {
            Ok(Atom::Dropped) => {
                dropped.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                0.0
            }
            Ok(a) => ctx.contribution(&a, x),
            Err(e) => {
                failure.lock().expect("lock").get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure.into_inner().expect("lock") {
        return Err(e);
    }
    check_non_finite(bad, n_samples)?;
    Ok((acc, bad, dropped.into_inner()))
}

/// Bookkeeping about numerical artifacts of a grid evaluation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridDiagnostics {
    /// Smallest value before clamping at zero.
    pub raw_min: Option<f64>,
    /// Number of values clamped to zero.
    pub clamped: usize,
    /// Raw values that were clamped, as (t index, x index, value).
    pub clamped_values: Vec<(usize, usize, f64)>,
    /// Quadrature atoms dropped for exponent overflow and their total weight.
    pub dropped_atoms: usize,
    pub dropped_weight: f64,
    /// Monte Carlo samples discarded as non-finite.
    pub non_finite: usize,
}

/// Density values on an (x, t) grid with method metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub xs: Vec<f64>,
    pub ts: Vec<f64>,
    /// values[t][x]
    pub values: Vec<Vec<f64>>,
    /// Present iff Monte Carlo was used.
    pub stderr: Option<Vec<Vec<f64>>>,
    pub method: QuadratureSpec,
    pub n: usize,
    /// Formula actually used at each t.
    pub formulas: Vec<Formula>,
    pub diagnostics: GridDiagnostics,
}

impl DensityGrid {
    pub fn value(&self, it: usize, ix: usize) -> f64 {
        self.values[it][ix]
    }
}

/// Evaluate f_1^N on xs x ts.
pub fn density_grid(
    spec: &ProblemSpec,
    n: usize,
    xs: &[f64],
    ts: &[f64],
    quad: &QuadratureSpec,
    formula: Formula,
) -> Result<DensityGrid> {
    quad.validate()?;
    let inner = quad.inner_time_nodes();
    let mut values = Vec::with_capacity(ts.len());
    let mut stderr = if quad.is_mc() { Some(Vec::with_capacity(ts.len())) } else { None };
    let mut formulas = Vec::with_capacity(ts.len());
    let mut diag = GridDiagnostics::default();
    let first_x = xs.first().copied().unwrap_or(f64::NAN);
    for (it, &t) in ts.iter().enumerate() {
        if xs.is_empty() {
            values.push(Vec::new());
            if let Some(s) = stderr.as_mut() {
                s.push(Vec::new());
            }
            formulas.push(resolve_formula(spec, n, t, formula, inner));
            continue;
        }
        let split_nodes = match quad {
            QuadratureSpec::Tensor { nodes_per_dim, .. } => *nodes_per_dim,
            QuadratureSpec::Mc { .. } => SPLIT_MC_NODES,
        };
        let ctx = Context::new(spec, n, t, formula, inner, split_nodes).map_err(|e| e.at(first_x, t, n))?;
        if formula == Formula::Xi1 {
            if let Some(&x) = xs.iter().find(|&&x| x == 0.0) {
                return Err(
                    Error::UndefinedPoint { x, reason: "the xi_1 form is not defined at x = 0".into() }.at(x, t, n)
                );
            }
        }
        formulas.push(ctx.formula);
        let row: Vec<(f64, f64)> = match quad {
            QuadratureSpec::Tensor { nodes_per_dim, tensor_cap, .. } => {
                let ens = tensor_ensemble(&ctx, *nodes_per_dim, *tensor_cap).map_err(|e| e.at(first_x, t, n))?;
                diag.dropped_atoms += ens.dropped;
                diag.dropped_weight = diag.dropped_weight.max(ens.dropped_weight);
                xs.par_iter().map(|&x| (ensemble_value(&ctx, &ens, x), 0.0)).collect()
            }
            QuadratureSpec::Mc { n_samples, seed, .. } => {
                let res = xs
                    .par_iter()
                    .enumerate()
                    .map(|(ix, &x)| {
                        let point = (it * xs.len() + ix) as u64;
                        mc_value(&ctx, x, *n_samples, *seed, point).map_err(|e| e.at(x, t, n))
                    })
                    .collect::<Result<Vec<_>>>()?;
                res.iter()
                    .map(|(acc, bad, dropped)| {
                        diag.non_finite += bad;
                        diag.dropped_atoms += dropped;
                        (acc.mean, acc.stderr())
                    })
                    .collect()
            }
        };
        let mut vrow = Vec::with_capacity(xs.len());
        let mut srow = Vec::with_capacity(xs.len());
        for (ix, (v, s)) in row.into_iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numerical(format!("non-finite density {v}")).at(xs[ix], t, n));
            }
            diag.raw_min = Some(diag.raw_min.map_or(v, |m: f64| m.min(v)));
            if v < 0.0 {
                diag.clamped += 1;
                diag.clamped_values.push((it, ix, v));
            }
            vrow.push(v.max(0.0));
            srow.push(s);
        }
        values.push(vrow);
        if let Some(s) = stderr.as_mut() {
            s.push(srow);
        }
    }
    Ok(DensityGrid {
        xs: xs.to_vec(),
        ts: ts.to_vec(),
        values,
        stderr,
        method: quad.clone(),
        n,
        formulas,
        diagnostics: diag,
    })
}

fn scalar(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec, formula: Formula) -> Result<f64> {
    Ok(density_grid(spec, n, &[x], &[t], quad, formula)?.values[0][0])
}

/// Complete form: E over (xi_N, eta_N) of f0(x e^{-K} - Z) e^{-K}.
pub fn f1_complete(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    scalar(spec, n, x, t, quad, Formula::Complete)
}

/// Homogeneous form: E over xi_N of f0(x e^{-K}) e^{-K}.
pub fn f1_homogeneous(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    scalar(spec, n, x, t, quad, Formula::Homogeneous)
}

/// Form with eta_1 isolated; needs psi_1 > 0 and t > t0.
pub fn f1_eta1_form(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    scalar(spec, n, x, t, quad, Formula::Eta1)
}

/// Homogeneous form with the xi_1 integral split at the support of f0.
pub fn f1_homogeneous_split(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    scalar(spec, n, x, t, quad, Formula::Split)
}

/// Form with xi_1 isolated; needs b = 0, int phi_1 != 0 and x != 0.
pub fn f1_xi1_form(spec: &ProblemSpec, n: usize, x: f64, t: f64, quad: &QuadratureSpec) -> Result<f64> {
    if x == 0.0 {
        return Err(Error::UndefinedPoint { x, reason: "the xi_1 form is not defined at x = 0".into() }.at(x, t, n));
    }
    scalar(spec, n, x, t, quad, Formula::Xi1)
}

/// Monte Carlo estimate of E[f0(x Y - Z) Y] with Y = e^{-K_a}, Z the forcing integral.
pub fn f1_mc(spec: &ProblemSpec, n: usize, x: f64, t: f64, n_samples: usize, seed: u64) -> Result<McEstimate> {
    f1_mc_with(spec, n, x, t, n_samples, seed, crate::quadrature::DEFAULT_INNER_TIME_NODES)
}

pub fn f1_mc_with(
    spec: &ProblemSpec,
    n: usize,
    x: f64,
    t: f64,
    n_samples: usize,
    seed: u64,
    inner_nodes: usize,
) -> Result<McEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParameter("n_samples must be positive".into()));
    }
    let formula = if spec.b.is_some() { Formula::Complete } else { Formula::Homogeneous };
    let ctx = Context::new(spec, n, t, formula, inner_nodes, SPLIT_MC_NODES).map_err(|e| e.at(x, t, n))?;
    let (acc, bad, _) = mc_value(&ctx, x, n_samples, seed, 0).map_err(|e| e.at(x, t, n))?;
    Ok(McEstimate { estimate: acc.mean, stderr: acc.stderr(), n_samples, non_finite: bad })
}

/// Law of K_a(t) for a Gaussian a-process: Normal(mean, variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianLogFactor {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianLogFactor {
    /// K_a(t) for zero-mean Brownian motion from t0 = 0: variance t^3 / 3.
    pub fn brownian(t: f64) -> Self {
        GaussianLogFactor { mean: 0.0, variance: t.powi(3) / 3.0 }
    }

    /// From a covariance kernel and the integrated mean.
    pub fn from_kernel(kernel: &CovKernel, mean_integral: f64, t: f64) -> Self {
        GaussianLogFactor { mean: mean_integral, variance: kernel.integrated_variance(t) }
    }
}

/// Exact density of x0 e^{K} with K ~ Normal(mean, variance) independent of x0:
/// int f0(x e^{-y}) phi(y) e^{-y} dy by adaptive quadrature.
pub fn exact_gaussian_homogeneous(x0: &ScalarDistribution, x: f64, k: GaussianLogFactor) -> f64 {
    let GaussianLogFactor { mean, variance } = k;
    if variance <= 0.0 {
        return x0.pdf(x * (-mean).exp()) * (-mean).exp();
    }
    if x == 0.0 {
        return x0.pdf(0.0) * (-mean + variance / 2.0).exp();
    }
    let sd = variance.sqrt();
    // e^{-y} phi(y; m, s^2) = e^{-m + s^2/2} phi(y; m - s^2, s^2).
    let centre = mean - variance;
    let (lo, hi) = (centre - 40.0 * sd, centre + 40.0 * sd);
    let mut pts = vec![lo, centre, hi];
    let s = x0.support();
    for e in [s.lo, s.hi] {
        if e.is_finite() && e != 0.0 && x / e > 0.0 {
            let y = (x / e).ln();
            if y > lo && y < hi {
                pts.push(y);
            }
        }
    }
    pts.sort_by(|a, b| a.total_cmp(b));
    pts.dedup();
    let norm = 1.0 / (2.0 * std::f64::consts::PI * variance).sqrt();
    let g = |y: f64| {
        let f = x0.pdf(x * (-y).exp());
        if f == 0.0 {
            return 0.0;
        }
        let d = y - mean;
        f * (-y - 0.5 * d * d / variance).exp() * norm
    };
    integrate_pieces(g, &pts, 1e-13, 1e-11).value
}

/// Exact density on a grid of x.
pub fn exact_gaussian_grid(x0: &ScalarDistribution, xs: &[f64], k: GaussianLogFactor) -> Vec<f64> {
    xs.par_iter().map(|&x| exact_gaussian_homogeneous(x0, x, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kl::{brownian_bridge, brownian_motion, explicit_series, MeanFn, Term};
    use std::f64::consts::{PI, SQRT_2};

    fn ex1() -> ProblemSpec {
        ProblemSpec::new(brownian_motion(0.0, 1.0).unwrap(), None, ScalarDistribution::uniform(1.0, 2.0).unwrap())
            .unwrap()
    }

    #[test]
    fn formula_names_round_trip() {
        for f in [Formula::Auto, Formula::Complete, Formula::Homogeneous, Formula::Eta1, Formula::Xi1, Formula::Split] {
            assert_eq!(f.name().parse::<Formula>().unwrap(), f);
        }
        assert!("bogus".parse::<Formula>().is_err());
    }

    #[test]
    fn deterministic_complete_is_identity() {
        let a = explicit_series(0.0, 1.0, MeanFn::Constant(0.0), vec![]).unwrap();
        let b = explicit_series(0.0, 1.0, MeanFn::Constant(0.0), vec![]).unwrap();
        let spec = ProblemSpec::new(a, Some(b), ScalarDistribution::standard_normal()).unwrap();
        for &x in &[-1.0, 0.2, 2.0] {
            let v = f1_complete(&spec, 3, x, 0.7, &QuadratureSpec::tensor(4)).unwrap();
            assert!((v - spec.x0.pdf(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn homogeneous_at_initial_time_is_f0() {
        let spec = ex1();
        for &x in &[0.5, 1.2, 1.9, 2.5] {
            let v = f1_homogeneous(&spec, 2, x, 0.0, &QuadratureSpec::tensor(8)).unwrap();
            assert!((v - spec.x0.pdf(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn outside_reachable_support_is_zero() {
        // With 4 Hermite nodes |K| stays below ~1.1, so x = 100 maps outside [1, 2].
        let v = f1_homogeneous(&ex1(), 1, 100.0, 0.5, &QuadratureSpec::tensor(4)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn wrong_form_is_directed() {
        assert!(f1_complete(&ex1(), 1, 1.0, 0.5, &QuadratureSpec::tensor(4)).is_err());
        let spec = ProblemSpec::new(
            brownian_motion(0.0, 1.0).unwrap(),
            Some(brownian_bridge(0.0, 1.0).unwrap()),
            ScalarDistribution::standard_normal(),
        )
        .unwrap();
        assert!(f1_homogeneous(&spec, 1, 1.0, 0.5, &QuadratureSpec::tensor(4)).is_err());
    }

    #[test]
    fn eta1_rejects_initial_time() {
        let spec = ProblemSpec::new(
            brownian_motion(0.0, 1.0).unwrap(),
            Some(brownian_bridge(0.0, 1.0).unwrap()),
            ScalarDistribution::standard_normal(),
        )
        .unwrap();
        let e = f1_eta1_form(&spec, 1, 0.3, 0.0, &QuadratureSpec::tensor(4)).unwrap_err();
        assert_eq!(e.kind(), "singular");
    }

    #[test]
    fn xi1_undefined_at_zero_and_zero_on_wrong_sign() {
        let spec = ex1();
        let e = f1_xi1_form(&spec, 2, 0.0, 0.5, &QuadratureSpec::tensor(8)).unwrap_err();
        assert_eq!(e.kind(), "undefined_point");
        assert_eq!(f1_xi1_form(&spec, 2, -0.7, 0.5, &QuadratureSpec::tensor(8)).unwrap(), 0.0);
    }

    #[test]
    fn eta1_denominator_closed_form() {
        // a = 0, b = bridge with one mode, t = 1: sqrt(gamma_1) int psi_1 = 2 sqrt 2 / pi^2.
        let a = explicit_series(0.0, 1.0, MeanFn::Constant(0.0), vec![]).unwrap();
        let spec = ProblemSpec::new(a, Some(brownian_bridge(0.0, 1.0).unwrap()), ScalarDistribution::standard_normal())
            .unwrap();
        let slice = TimeSlice::new(&spec, 1, 1, 1.0, 64).unwrap();
        let (_, d) = slice.eta1_split(&[], &[]).unwrap();
        assert!((d - 2.0 * SQRT_2 / (PI * PI)).abs() < 1e-14);
        assert!((d - 0.2865796).abs() < 1e-7);
    }

    #[test]
    fn exact_oracle_limits() {
        let x0 = ScalarDistribution::uniform(1.0, 2.0).unwrap();
        assert_eq!(exact_gaussian_homogeneous(&x0, 1.5, GaussianLogFactor::brownian(0.0)), 1.0);
        assert!((GaussianLogFactor::brownian(0.5).variance - 1.0 / 24.0).abs() < 1e-16);
        let tiny = exact_gaussian_homogeneous(&x0, 1.5, GaussianLogFactor { mean: 0.0, variance: 1e-10 });
        assert!((tiny - 1.0).abs() < 1e-3);
    }

    #[test]
    fn exact_oracle_matches_uniform_closed_form() {
        // For Uniform(1,2): f = e^{s^2/2} [Phi((ln x + s^2)/s) - Phi((ln(x/2) + s^2)/s)].
        let x0 = ScalarDistribution::uniform(1.0, 2.0).unwrap();
        let k = GaussianLogFactor::brownian(0.5);
        let s = k.variance.sqrt();
        let phi = |z: f64| 0.5 * statrs::function::erf::erfc(-z / SQRT_2);
        for &x in &[0.3, 0.9, 1.0, 1.5, 2.0, 2.4, 3.7] {
            let closed = (k.variance / 2.0).exp()
                * (phi((f64::ln(x) + k.variance) / s) - phi(((x / 2.0).ln() + k.variance) / s));
            assert!((exact_gaussian_homogeneous(&x0, x, k) - closed).abs() < 1e-10, "x={x}");
        }
    }

    #[test]
    fn grid_shapes_and_empty() {
        let spec = ex1();
        let g = density_grid(&spec, 1, &[], &[0.5], &QuadratureSpec::tensor(4), Formula::Auto).unwrap();
        assert!(g.values[0].is_empty());
        let g =
            density_grid(&spec, 1, &[1.0, 1.5, 2.0], &[0.3, 0.5], &QuadratureSpec::tensor(4), Formula::Auto).unwrap();
        assert_eq!(g.values.len(), 2);
        assert_eq!(g.values[1].len(), 3);
        assert!(g.stderr.is_none());
        let one = f1_homogeneous(&spec, 1, 1.5, 0.5, &QuadratureSpec::tensor(4)).unwrap();
        let g1 = density_grid(&spec, 1, &[1.5], &[0.5], &QuadratureSpec::tensor(4), Formula::Homogeneous).unwrap();
        assert_eq!(g1.values[0][0], one);
    }

    #[test]
    fn auto_picks_split_for_discontinuous_x0() {
        let spec = ex1();
        assert_eq!(resolve_formula(&spec, 2, 0.5, Formula::Auto, 64), Formula::Split);
        assert_eq!(resolve_formula(&spec, 2, 0.0, Formula::Auto, 64), Formula::Homogeneous);
        let g = density_grid(&spec, 1, &[0.0, 1.0], &[0.5], &QuadratureSpec::tensor(8), Formula::Auto).unwrap();
        assert_eq!(g.values[0][0], 0.0);
        assert!(g.values[0][1] > 0.0);
    }

    #[test]
    fn split_matches_exact_law_at_early_times() {
        // One Brownian mode: K = c1 xi_1 is exactly Normal(0, c1^2).
        let spec = ex1();
        let m1 = brownian_motion(0.0, 1.0).unwrap().mode(1).unwrap();
        for &t in &[0.05, 0.13, 0.5, 1.0] {
            let c1 = m1.eigenvalue.sqrt() * m1.basis.integral(0.0, t, 64);
            let k = GaussianLogFactor { mean: 0.0, variance: c1 * c1 };
            for &x in &[0.9, 1.0, 1.3347, 1.99, 2.05] {
                let v = f1_homogeneous_split(&spec, 1, x, t, &QuadratureSpec::tensor(24)).unwrap();
                let e = exact_gaussian_homogeneous(&spec.x0, x, k);
                assert!((v - e).abs() < 1e-9, "t={t} x={x}: {v} vs {e}");
            }
        }
    }

    #[test]
    fn split_agrees_with_xi1_form() {
        let spec = ex1();
        let q = QuadratureSpec::tensor(24);
        for &x in &[0.8, 1.4, 2.6] {
            let a = f1_homogeneous_split(&spec, 2, x, 0.7, &q).unwrap();
            let b = f1_xi1_form(&spec, 2, x, 0.7, &q).unwrap();
            assert!((a - b).abs() < 1e-6 * b.max(1e-3), "x={x}: {a} vs {b}");
        }
        // Heavy-tailed coefficient: K = t xi with quartic Cauchy xi.
        let a = explicit_series(
            0.0,
            1.0,
            MeanFn::Constant(0.0),
            vec![Term::Constant { amplitude: 1.0, dist: ScalarDistribution::quartic_cauchy() }],
        )
        .unwrap();
        let spec = ProblemSpec::new(a, None, ScalarDistribution::uniform(1.0, 2.0).unwrap()).unwrap();
        let q = QuadratureSpec::tensor(64);
        for &x in &[0.5, 1.5, 4.0] {
            let v = f1_homogeneous_split(&spec, 1, x, 0.5, &q).unwrap();
            // Direct: int_1^2 f_xi((ln(x / x0)) / t) / (x t) dx0.
            let qc = ScalarDistribution::quartic_cauchy();
            let e = integrate_pieces(|x0| qc.pdf((x / x0).ln() / 0.5) / (x * 0.5), &[1.0, 2.0], 1e-14, 1e-12).value;
            assert!((v - e).abs() < 1e-8, "x={x}: {v} vs {e}");
        }
    }
}
