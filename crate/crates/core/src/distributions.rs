//! Univariate laws for the initial condition and for expansion coefficients.
//!
//! Every law carries regularity flags that feed the hypothesis checks. The
//! flags for catalog laws are declared from known facts; custom laws must
//! declare their own.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_pieces};

/// Interval support, endpoints possibly infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    pub fn is_compact(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SupportSign {
    Positive,
    Negative,
    Mixed,
}

/// Regularity of the density, with the density extended by zero off its support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Regularity {
    /// Lipschitz on the sign domain of the support ((0,inf), (-inf,0) or R).
    pub lipschitz_on_support: bool,
    /// Lipschitz on the whole real line.
    pub lipschitz_on_real: bool,
    /// Continuous on the whole real line.
    pub continuous: bool,
    pub bounded: bool,
    pub compact_support: bool,
}

pub type PdfFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SamplerFn = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct CustomLaw {
    pub name: String,
    pub pdf: PdfFn,
    pub sampler: Option<SamplerFn>,
}

impl fmt::Debug for CustomLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomLaw").field("name", &self.name).field("sampler", &self.sampler.is_some()).finish()
    }
}

#[derive(Debug, Clone)]
pub enum DistKind {
    Normal {
        mean: f64,
        variance: f64,
    },
    Uniform {
        lo: f64,
        hi: f64,
    },
    Beta {
        alpha: f64,
        beta: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Density sqrt(2) / (pi (1 + x^4)); mean 0, variance 1.
    QuarticCauchy,
    Custom(CustomLaw),
}

#[derive(Clone)]
enum Sampler {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta(rand_distr::Beta<f64>),
    Gamma(rand_distr::Gamma<f64>),
    QuarticCauchy,
    Custom(Option<SamplerFn>),
}

impl fmt::Debug for Sampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sampler::Normal { mean, sd } => write!(f, "Normal({mean}, {sd})"),
            Sampler::Uniform { lo, hi } => write!(f, "Uniform({lo}, {hi})"),
            Sampler::Beta(d) => write!(f, "{d:?}"),
            Sampler::Gamma(d) => write!(f, "{d:?}"),
            Sampler::QuarticCauchy => f.write_str("QuarticCauchy"),
            Sampler::Custom(s) => write!(f, "Custom(sampler: {})", s.is_some()),
        }
    }
}

/// A univariate distribution, immutable after construction.
#[derive(Debug, Clone)]
pub struct ScalarDistribution {
    kind: DistKind,
    support: Support,
    regularity: Regularity,
    /// log of the normalizing constant for Beta and Gamma.
    log_norm: f64,
    sampler: Sampler,
}

/// JSON form of a catalog distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "snake_case")]
pub enum DistSpec {
    Normal { mean: f64, variance: f64 },
    Uniform { lo: f64, hi: f64 },
    Beta { alpha: f64, beta: f64 },
    Gamma { shape: f64, rate: f64 },
    QuarticCauchy {},
}

impl DistSpec {
    pub fn build(&self) -> Result<ScalarDistribution> {
        match *self {
            DistSpec::Normal { mean, variance } => ScalarDistribution::normal(mean, variance),
            DistSpec::Uniform { lo, hi } => ScalarDistribution::uniform(lo, hi),
            DistSpec::Beta { alpha, beta } => ScalarDistribution::beta(alpha, beta),
            DistSpec::Gamma { shape, rate } => ScalarDistribution::gamma(shape, rate),
            DistSpec::QuarticCauchy {} => Ok(ScalarDistribution::quartic_cauchy()),
        }
    }
}

fn check(ok: bool, msg: impl Into<String>) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg.into()))
    }
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

impl ScalarDistribution {
    pub fn normal(mean: f64, variance: f64) -> Result<Self> {
        check(
            finite(&[mean, variance]) && variance > 0.0,
            format!("normal needs finite mean and variance > 0, got ({mean}, {variance})"),
        )?;
        Ok(ScalarDistribution {
            kind: DistKind::Normal { mean, variance },
            support: Support { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            regularity: Regularity {
                lipschitz_on_support: true,
                lipschitz_on_real: true,
                continuous: true,
                bounded: true,
                compact_support: false,
            },
            log_norm: 0.0,
            sampler: Sampler::Normal { mean, sd: variance.sqrt() },
        })
    }

    pub fn standard_normal() -> Self {
        Self::normal(0.0, 1.0).expect("valid parameters")
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check(finite(&[lo, hi]) && lo < hi, format!("uniform needs finite lo < hi, got ({lo}, {hi})"))?;
        Ok(ScalarDistribution {
            kind: DistKind::Uniform { lo, hi },
            support: Support { lo, hi },
            regularity: Regularity {
                lipschitz_on_support: false,
                lipschitz_on_real: false,
                continuous: false,
                bounded: true,
                compact_support: true,
            },
            log_norm: 0.0,
            sampler: Sampler::Uniform { lo, hi },
        })
    }

    /// Uniform on (-sqrt 3, sqrt 3): mean 0, variance 1.
    pub fn standard_uniform() -> Self {
        let s = 3f64.sqrt();
        Self::uniform(-s, s).expect("valid parameters")
    }

    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        check(
            finite(&[alpha, beta]) && alpha > 0.0 && beta > 0.0,
            format!("beta needs alpha, beta > 0, got ({alpha}, {beta})"),
        )?;
        let sampler = rand_distr::Beta::new(alpha, beta).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(ScalarDistribution {
            kind: DistKind::Beta { alpha, beta },
            support: Support { lo: 0.0, hi: 1.0 },
            regularity: Regularity {
                lipschitz_on_support: (alpha == 1.0 || alpha >= 2.0) && beta >= 2.0,
                lipschitz_on_real: alpha >= 2.0 && beta >= 2.0,
                continuous: alpha > 1.0 && beta > 1.0,
                bounded: alpha >= 1.0 && beta >= 1.0,
                compact_support: true,
            },
            log_norm: -ln_beta(alpha, beta),
            sampler: Sampler::Beta(sampler),
        })
    }

    /// Gamma with shape and rate (density proportional to x^(shape-1) e^(-rate x)).
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        check(
            finite(&[shape, rate]) && shape > 0.0 && rate > 0.0,
            format!("gamma needs shape, rate > 0, got ({shape}, {rate})"),
        )?;
        let sampler = rand_distr::Gamma::new(shape, 1.0 / rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(ScalarDistribution {
            kind: DistKind::Gamma { shape, rate },
            support: Support { lo: 0.0, hi: f64::INFINITY },
            regularity: Regularity {
                lipschitz_on_support: shape == 1.0 || shape >= 2.0,
                lipschitz_on_real: shape >= 2.0,
                continuous: shape > 1.0,
                bounded: shape >= 1.0,
                compact_support: false,
            },
            log_norm: shape * rate.ln() - ln_gamma(shape),
            sampler: Sampler::Gamma(sampler),
        })
    }

    pub fn quartic_cauchy() -> Self {
        ScalarDistribution {
            kind: DistKind::QuarticCauchy,
            support: Support { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            regularity: Regularity {
                lipschitz_on_support: true,
                lipschitz_on_real: true,
                continuous: true,
                bounded: true,
                compact_support: false,
            },
            log_norm: 0.0,
            sampler: Sampler::QuarticCauchy,
        }
    }

    /// A user law. The density must integrate to one over `support` within 1e-8.
    pub fn custom(
        name: impl Into<String>,
        pdf: PdfFn,
        support: Support,
        sampler: Option<SamplerFn>,
        regularity: Regularity,
    ) -> Result<Self> {
        check(support.lo < support.hi && !support.lo.is_nan() && !support.hi.is_nan(), "custom support needs lo < hi")?;
        let f = pdf.clone();
        let mass = integrate(|x| f(x), support.lo, support.hi, 1e-12, 1e-12);
        if !mass.value.is_finite() || (mass.value - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "custom density integrates to {:.12} over its support",
                mass.value
            )));
        }
        Ok(ScalarDistribution {
            kind: DistKind::Custom(CustomLaw { name: name.into(), pdf, sampler: sampler.clone() }),
            support,
            regularity: Regularity { compact_support: support.is_compact(), ..regularity },
            log_norm: 0.0,
            sampler: Sampler::Custom(sampler),
        })
    }

    pub fn kind(&self) -> &DistKind {
        &self.kind
    }

    pub fn support(&self) -> Support {
        self.support
    }

    pub fn regularity(&self) -> Regularity {
        self.regularity
    }

    pub fn name(&self) -> String {
        match &self.kind {
            DistKind::Normal { mean, variance } => format!("Normal({mean}, {variance})"),
            DistKind::Uniform { lo, hi } => format!("Uniform({lo}, {hi})"),
            DistKind::Beta { alpha, beta } => format!("Beta({alpha}, {beta})"),
            DistKind::Gamma { shape, rate } => format!("Gamma({shape}, {rate})"),
            DistKind::QuarticCauchy => "QuarticCauchy".to_string(),
            DistKind::Custom(c) => c.name.clone(),
        }
    }

    pub fn to_spec(&self) -> Option<DistSpec> {
        Some(match self.kind {
            DistKind::Normal { mean, variance } => DistSpec::Normal { mean, variance },
            DistKind::Uniform { lo, hi } => DistSpec::Uniform { lo, hi },
            DistKind::Beta { alpha, beta } => DistSpec::Beta { alpha, beta },
            DistKind::Gamma { shape, rate } => DistSpec::Gamma { shape, rate },
            DistKind::QuarticCauchy => DistSpec::QuarticCauchy {},
            DistKind::Custom(_) => return None,
        })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match &self.kind {
            DistKind::Normal { mean, variance } => {
                let d = x - mean;
                (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
            }
            DistKind::Uniform { lo, hi } => {
                if x >= *lo && x <= *hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            DistKind::Beta { alpha, beta } => {
                if !(0.0..=1.0).contains(&x) {
                    return 0.0;
                }
                let a = power_factor(x, alpha - 1.0);
                let b = power_factor(1.0 - x, beta - 1.0);
                if a == 0.0 || b == 0.0 {
                    return 0.0;
                }
                a * b * self.log_norm.exp()
            }
            DistKind::Gamma { shape, rate } => {
                if x < 0.0 {
                    return 0.0;
                }
                if x == 0.0 {
                    return if *shape > 1.0 {
                        0.0
                    } else if *shape == 1.0 {
                        *rate
                    } else {
                        f64::INFINITY
                    };
                }
                ((shape - 1.0) * x.ln() - rate * x + self.log_norm).exp()
            }
            DistKind::QuarticCauchy => SQRT_2 / (PI * (1.0 + x.powi(4))),
            DistKind::Custom(c) => {
                if self.support.contains(x) {
                    (c.pdf)(x).max(0.0)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lo {
            return 0.0;
        }
        if x >= self.support.hi {
            return 1.0;
        }
        match &self.kind {
            DistKind::Normal { mean, variance } => 0.5 * erfc(-(x - mean) / (2.0 * variance).sqrt()),
            DistKind::Uniform { lo, hi } => (x - lo) / (hi - lo),
            DistKind::Beta { alpha, beta } => beta_reg(*alpha, *beta, x),
            DistKind::Gamma { shape, rate } => gamma_lr(*shape, rate * x),
            DistKind::QuarticCauchy => quartic_cauchy_cdf(x),
            DistKind::Custom(c) => {
                let f = c.pdf.clone();
                integrate(|s| f(s), self.support.lo, x, 1e-13, 1e-12).value.clamp(0.0, 1.0)
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match &self.kind {
            DistKind::Normal { mean, .. } => *mean,
            DistKind::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistKind::Beta { alpha, beta } => alpha / (alpha + beta),
            DistKind::Gamma { shape, rate } => shape / rate,
            DistKind::QuarticCauchy => 0.0,
            DistKind::Custom(_) => self.moment(1, 0.0),
        }
    }

    pub fn variance(&self) -> f64 {
        match &self.kind {
            DistKind::Normal { variance, .. } => *variance,
            DistKind::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            DistKind::Beta { alpha, beta } => {
                let s = alpha + beta;
                alpha * beta / (s * s * (s + 1.0))
            }
            DistKind::Gamma { shape, rate } => shape / (rate * rate),
            DistKind::QuarticCauchy => 1.0,
            DistKind::Custom(_) => {
                let m = self.mean();
                self.moment(2, m)
            }
        }
    }

    /// Central-or-raw moment E[(X - c)^k] by adaptive quadrature.
    fn moment(&self, k: i32, c: f64) -> f64 {
        let s = self.support;
        let mut pts = vec![s.lo];
        if s.lo < c && c < s.hi {
            pts.push(c);
        }
        pts.push(s.hi);
        integrate_pieces(|x| (x - c).powi(k) * self.pdf(x), &pts, 1e-14, 1e-12).value
    }

    /// Expansion coefficients need zero mean and unit variance.
    pub fn check_standardized(&self) -> Result<()> {
        let (m, v) = (self.mean(), self.variance());
        if m.abs() > 1e-8 || (v - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidParameter(format!(
                "coefficient law {} has mean {m:.3e} and variance {v:.10}; need 0 and 1",
                self.name()
            )));
        }
        Ok(())
    }

    /// D(x0): the sign domain of the support.
    pub fn support_sign(&self) -> SupportSign {
        if self.support.lo >= 0.0 {
            SupportSign::Positive
        } else if self.support.hi <= 0.0 {
            SupportSign::Negative
        } else {
            SupportSign::Mixed
        }
    }

    pub fn check_samplable(&self) -> Result<()> {
        match &self.sampler {
            Sampler::Custom(None) => Err(Error::Unsupported(format!("{} has no sampler", self.name()))),
            _ => Ok(()),
        }
    }

    /// One draw. Panics for a custom law without sampler; see `try_sample`.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match &self.sampler {
            Sampler::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Sampler::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Gamma(d) => d.sample(rng),
            Sampler::QuarticCauchy => {
                let mut u: f64 = rng.random();
                while u == 0.0 {
                    u = rng.random();
                }
                quartic_cauchy_quantile(u)
            }
            Sampler::Custom(Some(f)) => f(rng),
            Sampler::Custom(None) => panic!("{} has no sampler", self.name()),
        }
    }

    pub fn try_sample<R: Rng>(&self, rng: &mut R) -> Result<f64> {
        self.check_samplable()?;
        Ok(self.sample(rng))
    }
}

/// x^p with the continuous extension at x = 0.
fn power_factor(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if x == 0.0 {
        if p > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        x.powf(p)
    }
}

/// Closed-form cdf of the density sqrt(2) / (pi (1 + x^4)).
pub fn quartic_cauchy_cdf(x: f64) -> f64 {
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    if x > 0.0 {
        return 1.0 - quartic_cauchy_cdf(-x);
    }
    let r = SQRT_2 * x;
    let log_term = ((x * x + r + 1.0) / (x * x - r + 1.0)).ln();
    // atan(r+1) + atan(r-1) tends to -pi as x -> -inf; fold it for accuracy.
    let at = (r + 1.0).atan() + (r - 1.0).atan();
    let head = 0.5 + log_term / (4.0 * PI) + at / (2.0 * PI);
    if x < -4.0 {
        // Tail series sqrt(2)/pi * sum (-1)^k / ((4k+3)|x|^(4k+3)) avoids cancellation.
        let inv4 = x.powi(-4);
        let (mut sum, mut p, mut k) = (0.0, 1.0 / (-x).powi(3), 0);
        while p > 1e-18 * sum || k == 0 {
            let term = p / (4 * k + 3) as f64;
            sum += if k % 2 == 0 { term } else { -term };
            p *= inv4;
            k += 1;
        }
        return SQRT_2 / PI * sum;
    }
    head
}

/// Inverse of `quartic_cauchy_cdf` by safeguarded Newton iteration.
pub fn quartic_cauchy_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    if u > 0.5 {
        return -quartic_cauchy_quantile(1.0 - u);
    }
    if u == 0.5 {
        return 0.0;
    }
    // Lower tail: solve F(x) = u for x < 0.
    let mut lo = -1.0;
    while quartic_cauchy_cdf(lo) > u {
        lo *= 2.0;
    }
    let mut hi = 0.0;
    let mut x = if u < 1e-3 { -(SQRT_2 / (3.0 * PI * u)).cbrt() } else { 0.5 * (lo + hi) };
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..100 {
        let g = quartic_cauchy_cdf(x) - u;
        if g > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = SQRT_2 / (PI * (1.0 + x.powi(4)));
        let mut nx = x - g / d;
        if !(nx > lo && nx < hi) {
            nx = 0.5 * (lo + hi);
        }
        if (nx - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            return nx;
        }
        x = nx;
    }
    x
}
