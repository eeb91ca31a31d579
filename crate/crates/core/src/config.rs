//! JSON problem descriptions and the built-in named examples.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::DistSpec;
use crate::error::{Error, Result};
use crate::kl::{MeanSpec, ProcessSpec, TermParams, TermSpec};
use crate::quadrature::QuadratureSpec;
use crate::solution::ProblemSpec;

/// Serializable form of a problem: x' = a(t) x + b(t), x(t0) = x0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub a: ProcessSpec,
    #[serde(default)]
    pub b: Option<ProcessSpec>,
    pub x0: DistSpec,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<ProblemSpec> {
        let a = self.a.build()?;
        let b = self.b.as_ref().map(|b| b.build()).transpose()?;
        ProblemSpec::new(a, b, self.x0.build()?)
    }
}

/// Uniform grid `lo:hi:n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XsGrid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl XsGrid {
    pub fn new(lo: f64, hi: f64, n: usize) -> Self {
        XsGrid { lo, hi, n }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.lo.is_finite() && self.hi.is_finite()) {
            v.push(format!("xs bounds must be finite, got {}:{}", self.lo, self.hi));
        } else if self.hi < self.lo {
            v.push(format!("xs needs lo <= hi, got {}:{}", self.lo, self.hi));
        }
        if self.n > 1 && self.lo == self.hi {
            v.push("xs with several points needs lo < hi".into());
        }
        v
    }

    pub fn points(&self) -> Vec<f64> {
        match self.n {
            0 => Vec::new(),
            1 => vec![self.lo],
            n => (0..n).map(|i| self.lo + (self.hi - self.lo) * i as f64 / (n - 1) as f64).collect(),
        }
    }
}

impl FromStr for XsGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::InvalidParameter(format!("xs '{s}' must look like lo:hi:n"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo = parts[0].trim().parse().map_err(|_| bad())?;
        let hi = parts[1].trim().parse().map_err(|_| bad())?;
        let n = parts[2].trim().parse().map_err(|_| bad())?;
        Ok(XsGrid { lo, hi, n })
    }
}

impl fmt::Display for XsGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.n)
    }
}

/// A named example with its reference settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedExample {
    pub name: String,
    pub problem: ProblemConfig,
    pub t: f64,
    pub ns: Vec<usize>,
    pub xs: XsGrid,
    pub quad: QuadratureSpec,
    /// Whether the exact Gaussian oracle applies.
    pub exact_oracle: bool,
    /// Reference convergence-table values, when any.
    pub reference_errors: Vec<f64>,
}

pub const EXAMPLE_NAMES: [&str; 5] = ["example1", "example2", "example3", "example4", "example5"];

fn sin_family(power: f64, offset: f64, dist: DistSpec) -> TermSpec {
    TermSpec { coef: "sqrt2_over_j_sin".into(), params: TermParams { power, offset, ..TermParams::default() }, dist }
}

fn unit() -> [f64; 2] {
    [0.0, 1.0]
}

fn standard_uniform() -> DistSpec {
    let w = 3f64.sqrt();
    DistSpec::Uniform { lo: -w, hi: w }
}

/// Look up a built-in example by name.
pub fn named_example(name: &str) -> Result<NamedExample> {
    let ex = match name {
        // Brownian motion rate, Uniform(1,2) start.
        "example1" => NamedExample {
            name: name.into(),
            problem: ProblemConfig {
                a: ProcessSpec::BrownianMotion { interval: unit() },
                b: None,
                x0: DistSpec::Uniform { lo: 1.0, hi: 2.0 },
            },
            t: 0.5,
            ns: vec![1, 2, 3],
            xs: XsGrid::new(0.0, 4.0, 401),
            quad: QuadratureSpec::tensor(24),
            exact_oracle: true,
            reference_errors: vec![0.0687343, 0.00743475, 0.00332728],
        },
        // Heavy-tailed quartic coefficients, Uniform(1,2) start.
        "example2" => NamedExample {
            name: name.into(),
            problem: ProblemConfig {
                a: ProcessSpec::ExplicitSeries {
                    interval: unit(),
                    mean: MeanSpec::Constant(0.0),
                    terms: vec![sin_family(1.0, 0.0, DistSpec::QuarticCauchy {})],
                },
                b: None,
                x0: DistSpec::Uniform { lo: 1.0, hi: 2.0 },
            },
            t: 0.7,
            ns: vec![1, 2, 3],
            xs: XsGrid::new(0.0, 3.0, 301),
            quad: QuadratureSpec::tensor(64),
            exact_oracle: false,
            reference_errors: vec![0.010764, 0.000177],
        },
        // Negative mean rate with uniform coefficients, Beta(5,6) start.
        "example3" => NamedExample {
            name: name.into(),
            problem: ProblemConfig {
                a: ProcessSpec::ExplicitSeries {
                    interval: unit(),
                    mean: MeanSpec::Constant(-1.0),
                    terms: vec![sin_family(1.0, 0.0, standard_uniform())],
                },
                b: None,
                x0: DistSpec::Beta { alpha: 5.0, beta: 6.0 },
            },
            t: 0.3,
            ns: vec![1, 2, 3, 4],
            xs: XsGrid::new(0.0, 1.2, 241),
            quad: QuadratureSpec::tensor(16),
            exact_oracle: false,
            reference_errors: vec![0.225333, 0.0799602, 0.0203143],
        },
        // Brownian motion rate, Brownian bridge forcing, standard normal start.
        "example4" => NamedExample {
            name: name.into(),
            problem: ProblemConfig {
                a: ProcessSpec::BrownianMotion { interval: unit() },
                b: Some(ProcessSpec::BrownianBridge { interval: unit() }),
                x0: DistSpec::Normal { mean: 0.0, variance: 1.0 },
            },
            t: 0.5,
            ns: vec![1, 2, 3],
            xs: XsGrid::new(-5.0, 5.0, 401),
            quad: QuadratureSpec::tensor(16),
            exact_oracle: false,
            reference_errors: vec![],
        },
        // Fast-decaying uniform rate, normal forcing, Gamma start.
        "example5" => NamedExample {
            name: name.into(),
            problem: ProblemConfig {
                a: ProcessSpec::ExplicitSeries {
                    interval: unit(),
                    mean: MeanSpec::Constant(0.0),
                    terms: vec![sin_family(3.0, 0.0, standard_uniform())],
                },
                b: Some(ProcessSpec::ExplicitSeries {
                    interval: unit(),
                    mean: MeanSpec::Constant(0.0),
                    terms: vec![sin_family(4.0, 6.0, DistSpec::Normal { mean: 0.0, variance: 1.0 })],
                }),
                x0: DistSpec::Gamma { shape: 4.0, rate: 9.0 },
            },
            t: 0.4,
            ns: vec![1, 2],
            xs: XsGrid::new(-0.2, 1.6, 361),
            quad: QuadratureSpec::mc(40_000, 1),
            exact_oracle: false,
            reference_errors: vec![],
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown example '{other}'; known: {}",
                EXAMPLE_NAMES.join(", ")
            )))
        }
    };
    Ok(ex)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::SupportSign;

    #[test]
    fn all_examples_build() {
        for name in EXAMPLE_NAMES {
            let ex = named_example(name).unwrap();
            let spec = ex.problem.build().unwrap();
            assert_eq!(spec.interval(), (0.0, 1.0));
            assert!(ex.xs.violations().is_empty());
        }
        assert!(named_example("example6").is_err());
    }

    #[test]
    fn example_details() {
        let s1 = named_example("example1").unwrap().problem.build().unwrap();
        assert_eq!(s1.x0.support_sign(), SupportSign::Positive);
        assert!(s1.b.is_none());
        let s5 = named_example("example5").unwrap().problem.build().unwrap();
        // b coefficient sqrt(2)/(1 + 6) sin(pi t), so gamma_1 = 1/49.
        let g1 = s5.b.as_ref().unwrap().mode(1).unwrap().eigenvalue;
        assert!((g1 - 1.0 / 49.0).abs() < 1e-12);
        // a coefficient sqrt(2)/8 sin(2 pi t) for j = 2.
        let n2 = s5.a.mode(2).unwrap().eigenvalue;
        assert!((n2 - 1.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn problem_json_round_trip() {
        let p = named_example("example5").unwrap().problem;
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<ProblemConfig>(&s).unwrap(), p);
        let raw = r#"{"a":{"type":"explicit_series","mean":{"constant":-1},
            "terms":[{"coef":"sqrt2_over_j_sin","dist":{"kind":"uniform","params":{"lo":-1.7320508075688772,"hi":1.7320508075688772}}}]},
            "x0":{"kind":"beta","params":{"alpha":5,"beta":6}}}"#;
        let c: ProblemConfig = serde_json::from_str(raw).unwrap();
        assert!(c.build().is_ok());
    }

    #[test]
    fn xs_grid_parse() {
        let g: XsGrid = "0:4:401".parse().unwrap();
        assert_eq!(g.points().len(), 401);
        assert_eq!(g.points()[400], 4.0);
        assert!("0:4".parse::<XsGrid>().is_err());
        assert!(!XsGrid::new(2.0, 1.0, 3).violations().is_empty());
        assert!(XsGrid::new(0.0, 1.0, 0).points().is_empty());
    }
}
