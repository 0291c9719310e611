//! Unit-mean fading power-gain distributions of class C.
//!
//! Each [`FadingModel`] is a positive, continuous, strictly increasing
//! distribution whose survival function decays double exponentially and whose
//! CDF behaves like `eta * x^gamma` near the origin. [`ClassCTail`] carries the
//! constants of both limits.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};
use crate::special::{bessel_i_scaled, marcum_q1};

const QUANTILE_MAX_ITER: usize = 200;

/// A unit-mean fading power gain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FadingModel {
    Rayleigh,
    /// Rician fading with line-of-sight factor `k > 0`.
    Rician {
        k: f64,
    },
    /// Nakagami-m fading, power gain Gamma(m, rate m).
    Nakagami {
        m: f64,
    },
    /// Weibull fading with shape `c` on the amplitude, so the power gain has
    /// CDF `1 - exp(-beta x^{c/2})`.
    Weibull {
        c: f64,
    },
}

fn check_shape(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Model(
            name.to_string(),
            format!("shape must be a positive finite number, got {v}"),
        ))
    }
}

impl FadingModel {
    pub fn rician(k: f64) -> Result<Self> {
        check_shape("rician", k)?;
        Ok(FadingModel::Rician { k })
    }

    pub fn nakagami(m: f64) -> Result<Self> {
        check_shape("nakagami", m)?;
        Ok(FadingModel::Nakagami { m })
    }

    pub fn weibull(c: f64) -> Result<Self> {
        check_shape("weibull", c)?;
        Ok(FadingModel::Weibull { c })
    }

    pub fn family(&self) -> &'static str {
        match self {
            FadingModel::Rayleigh => "rayleigh",
            FadingModel::Rician { .. } => "rician",
            FadingModel::Nakagami { .. } => "nakagami",
            FadingModel::Weibull { .. } => "weibull",
        }
    }

    pub fn shape(&self) -> Option<f64> {
        match *self {
            FadingModel::Rayleigh => None,
            FadingModel::Rician { k } => Some(k),
            FadingModel::Nakagami { m } => Some(m),
            FadingModel::Weibull { c } => Some(c),
        }
    }

    fn weibull_beta(c: f64) -> f64 {
        gamma(1.0 + 2.0 / c).powf(c / 2.0)
    }

    fn rician_args(k: f64, x: f64) -> (f64, f64) {
        ((2.0 * k).sqrt(), (2.0 * (k + 1.0) * x).sqrt())
    }

    /// Distribution function; zero on `x <= 0`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match *self {
            FadingModel::Rayleigh => -(-x).exp_m1(),
            FadingModel::Rician { k } => {
                let (a, b) = Self::rician_args(k, x);
                marcum_q1(a, b).1
            }
            FadingModel::Nakagami { m } => gamma_lr(m, m * x),
            FadingModel::Weibull { c } => -(-Self::weibull_beta(c) * x.powf(c / 2.0)).exp_m1(),
        }
    }

    /// Survival function `1 - F(x)`, evaluated directly so the far tail keeps
    /// relative precision.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 || x.is_nan() {
            return 1.0;
        }
        if x == f64::INFINITY {
            return 0.0;
        }
        match *self {
            FadingModel::Rayleigh => (-x).exp(),
            FadingModel::Rician { k } => {
                let (a, b) = Self::rician_args(k, x);
                marcum_q1(a, b).0
            }
            FadingModel::Nakagami { m } => gamma_ur(m, m * x),
            FadingModel::Weibull { c } => (-Self::weibull_beta(c) * x.powf(c / 2.0)).exp(),
        }
    }

    /// Density of the power gain.
    pub fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        match *self {
            FadingModel::Rayleigh => (-x).exp(),
            FadingModel::Rician { k } => {
                let z = 2.0 * (k * (k + 1.0) * x).sqrt();
                let i0 = bessel_i_scaled(0, z)[0];
                (k + 1.0) * (-k - (k + 1.0) * x + z).exp() * i0
            }
            FadingModel::Nakagami { m } => {
                (m * m.ln() + (m - 1.0) * x.ln() - m * x - ln_gamma(m)).exp()
            }
            FadingModel::Weibull { c } => {
                let beta = Self::weibull_beta(c);
                let n = c / 2.0;
                beta * n * x.powf(n - 1.0) * (-beta * x.powf(n)).exp()
            }
        }
    }

    /// Inverse CDF on `[0, 1)`.
    ///
    /// Closed form for Rayleigh and Weibull; bracketed bisection otherwise,
    /// run on the survival function in the upper half so extreme quantiles
    /// stay accurate.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "quantile level must lie in [0, 1), got {q}"
            )));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        match *self {
            FadingModel::Rayleigh => Ok(-(-q).ln_1p()),
            FadingModel::Weibull { c } => Ok((-(-q).ln_1p() / Self::weibull_beta(c)).powf(2.0 / c)),
            _ if q <= 0.5 => bisect_increasing(|x| self.cdf(x), q),
            _ => bisect_increasing(|x| -self.sf(x), -(1.0 - q)),
        }
    }

    /// Inverse survival function: the `x` with `P(gain > x) = tail`.
    pub fn upper_quantile(&self, tail: f64) -> Result<f64> {
        if !(tail > 0.0 && tail <= 1.0) {
            return Err(Error::Domain(format!(
                "tail probability must lie in (0, 1], got {tail}"
            )));
        }
        if tail >= 0.5 {
            return self.quantile(1.0 - tail);
        }
        match *self {
            FadingModel::Rayleigh => Ok(-tail.ln()),
            FadingModel::Weibull { c } => Ok((-tail.ln() / Self::weibull_beta(c)).powf(2.0 / c)),
            _ => bisect_increasing(|x| -self.sf(x), -tail),
        }
    }

    pub fn sampler(&self) -> FadingSampler {
        let kind = match *self {
            FadingModel::Rayleigh => SamplerKind::Exponential,
            FadingModel::Rician { k } => SamplerKind::Rician {
                los: (k / (k + 1.0)).sqrt(),
                sigma: (0.5 / (k + 1.0)).sqrt(),
            },
            FadingModel::Nakagami { m } => {
                SamplerKind::Gamma(Gamma::new(m, 1.0 / m).expect("validated Nakagami shape"))
            }
            FadingModel::Weibull { c } => SamplerKind::Weibull {
                inv_beta: 1.0 / Self::weibull_beta(c),
                exponent: 2.0 / c,
            },
        };
        FadingSampler { kind }
    }

    /// One power-gain draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }

    /// Class-C limit constants for this family.
    pub fn class_c(&self) -> ClassCTail {
        ClassCTail::for_model(self)
    }
}

/// Find `x >= 0` with `f(x) = target` for nondecreasing `f`, expanding the
/// upper bracket geometrically from 1.
fn bisect_increasing<F: Fn(f64) -> f64>(f: F, target: f64) -> Result<f64> {
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut expansions = 0;
    while f(hi) < target {
        lo = hi;
        hi *= 2.0;
        expansions += 1;
        if expansions > 1100 {
            return Err(Error::NoConvergence {
                solver: "quantile bracket",
                iterations: expansions,
                residual: target - f(hi),
            });
        }
    }
    for _ in 0..QUANTILE_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone)]
enum SamplerKind {
    Exponential,
    Rician { los: f64, sigma: f64 },
    Gamma(Gamma<f64>),
    Weibull { inv_beta: f64, exponent: f64 },
}

/// Cached sampling state for one [`FadingModel`].
#[derive(Debug, Clone)]
pub struct FadingSampler {
    kind: SamplerKind,
}

impl Distribution<f64> for FadingSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.kind {
            SamplerKind::Exponential => rng.sample(Exp1),
            SamplerKind::Rician { los, sigma } => {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                let re = los + sigma * re;
                let im = sigma * im;
                re * re + im * im
            }
            SamplerKind::Gamma(g) => g.sample(rng),
            SamplerKind::Weibull { inv_beta, exponent } => {
                let e: f64 = rng.sample(Exp1);
                (e * inv_beta).powf(*exponent)
            }
        }
    }
}

impl fmt::Display for FadingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.shape() {
            None => write!(f, "{}", self.family()),
            Some(s) => write!(f, "{}:{}", self.family(), s),
        }
    }
}

/// Parses `family[:shape]`, e.g. `weibull:4.0`, `rayleigh`, `nakagami:0.5`.
impl FromStr for FadingModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (family, shape) = match s.split_once(':') {
            Some((f, v)) => (f.trim().to_ascii_lowercase(), Some(v.trim())),
            None => (s.to_ascii_lowercase(), None),
        };
        let parse_shape = |v: Option<&str>| -> Result<f64> {
            let v = v.ok_or_else(|| {
                Error::Model(s.to_string(), format!("{family} needs a shape parameter"))
            })?;
            v.parse::<f64>()
                .map_err(|e| Error::Model(s.to_string(), format!("bad shape `{v}`: {e}")))
        };
        match family.as_str() {
            "rayleigh" => match shape {
                None => Ok(FadingModel::Rayleigh),
                Some(_) => Err(Error::Model(
                    s.to_string(),
                    "rayleigh takes no shape".into(),
                )),
            },
            "rician" | "rice" => FadingModel::rician(parse_shape(shape)?),
            "nakagami" => FadingModel::nakagami(parse_shape(shape)?),
            "weibull" => FadingModel::weibull(parse_shape(shape)?),
            _ => Err(Error::Model(s.to_string(), "unknown family".into())),
        }
    }
}

/// The slowly varying exponent correction `H(x)` in the tail envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlowlyVarying {
    Zero,
    /// `coeff * sqrt(x)`
    Sqrt {
        coeff: f64,
    },
}

impl SlowlyVarying {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            SlowlyVarying::Zero => 0.0,
            SlowlyVarying::Sqrt { coeff } => coeff * x.sqrt(),
        }
    }
}

/// Class-C limit constants: `1 - F(x) ~ alpha x^l exp(-beta x^n + H(x))` as
/// `x -> inf` and `F(x) ~ tail_eta x^gamma` as `x -> 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassCTail {
    pub alpha: f64,
    pub l: f64,
    pub beta: f64,
    pub n: f64,
    pub h: SlowlyVarying,
    pub tail_eta: f64,
    pub gamma: f64,
}

impl ClassCTail {
    pub fn for_model(model: &FadingModel) -> Self {
        match *model {
            FadingModel::Rayleigh => ClassCTail {
                alpha: 1.0,
                l: 0.0,
                beta: 1.0,
                n: 1.0,
                h: SlowlyVarying::Zero,
                tail_eta: 1.0,
                gamma: 1.0,
            },
            FadingModel::Rician { k } => ClassCTail {
                alpha: 1.0 / (2.0 * PI.sqrt() * k.exp() * (k * (k + 1.0)).powf(0.25)),
                l: -0.25,
                beta: k + 1.0,
                n: 1.0,
                h: SlowlyVarying::Sqrt {
                    coeff: 2.0 * (k * (k + 1.0)).sqrt(),
                },
                tail_eta: (k + 1.0) / k.exp(),
                gamma: 1.0,
            },
            FadingModel::Nakagami { m } => {
                let c = m.powf(m - 1.0) / gamma(m);
                ClassCTail {
                    alpha: c,
                    l: m - 1.0,
                    beta: m,
                    n: 1.0,
                    h: SlowlyVarying::Zero,
                    tail_eta: c,
                    gamma: m,
                }
            }
            FadingModel::Weibull { c } => {
                let beta = FadingModel::weibull_beta(c);
                ClassCTail {
                    alpha: 1.0,
                    l: 0.0,
                    beta,
                    n: c / 2.0,
                    h: SlowlyVarying::Zero,
                    tail_eta: beta,
                    gamma: c / 2.0,
                }
            }
        }
    }

    /// `alpha x^l exp(-beta x^n + H(x))`
    pub fn envelope(&self, x: f64) -> f64 {
        self.alpha * x.powf(self.l) * (-self.beta * x.powf(self.n) + self.h.eval(x)).exp()
    }
}

/// Ratio of a survival or distribution value to its class-C approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitRatio {
    pub value: f64,
    /// Numerator or envelope underflowed; `value` is then meaningless.
    pub saturated: bool,
}

/// `(1 - F(x)) / (alpha x^l e^{-beta x^n + H(x)})`, which tends to 1 as `x -> inf`.
pub fn tail_ratio(model: &FadingModel, tail: &ClassCTail, x: f64) -> Result<LimitRatio> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("tail ratio needs x > 0, got {x}")));
    }
    let num = model.sf(x);
    let den = tail.envelope(x);
    let saturated = !(num >= f64::MIN_POSITIVE && den >= f64::MIN_POSITIVE && den.is_finite());
    Ok(LimitRatio {
        value: if saturated { f64::NAN } else { num / den },
        saturated,
    })
}

/// `F(x) / (tail_eta x^gamma)`, which tends to 1 as `x -> 0`.
pub fn origin_ratio(model: &FadingModel, tail: &ClassCTail, x: f64) -> Result<f64> {
    if x.is_nan() || x <= 0.0 {
        return Err(Error::Domain(format!("origin ratio needs x > 0, got {x}")));
    }
    Ok(model.cdf(x) / (tail.tail_eta * x.powf(tail.gamma)))
}

/// Kolmogorov–Smirnov sup distance between the empirical CDF of `samples`
/// and `model.cdf`. Sorts `samples` in place.
pub fn ks_distance(model: &FadingModel, samples: &mut [f64]) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = model.cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}
