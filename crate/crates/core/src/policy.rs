//! The distributed power allocation and scheduling policy.
//!
//! Each user sees only its own gains `(h, g)`. With multipliers `lambda`
//! (average power) and `mu` (average interference) it forms the ratio
//! `X = h / (lambda + mu g)`, transmits only if `X` exceeds a threshold chosen
//! so that `P(X > threshold) = p`, and then water-fills with power
//! `(1/(lambda + mu g) - 1/h)^+`.

use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::quad::{integrate, Estimate, Tolerance};

/// Probability mass of `g` left beyond the upper quadrature cutoff.
pub const G_TAIL_MASS: f64 = 1e-15;
const QUAD_REL_TOL: f64 = 1e-9;
const RATIO_QUANTILE_MAX_ITER: usize = 200;

/// `(1/(lambda + mu g) - 1/h)^+`; a user with `h = 0` stays silent.
#[inline]
pub fn waterfill(h: f64, g: f64, lambda: f64, mu: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    let level = lambda + mu * g;
    if h / level <= 1.0 {
        0.0
    } else {
        1.0 / level - 1.0 / h
    }
}

/// `h / (lambda + mu g)`
#[inline]
pub fn ratio_value(h: f64, g: f64, lambda: f64, mu: f64) -> f64 {
    h / (lambda + mu * g)
}

/// `G(x) = log x + 1/x - 1` evaluated at `max(t, 1)`: the scheduling
/// multiplier implied by threshold `t`. Nondecreasing in `t`, zero for `t <= 1`.
pub fn eta_from_threshold(t: f64) -> f64 {
    let x = t.max(1.0);
    x.ln() + 1.0 / x - 1.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverDiagnostics {
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    /// `expected_power / budget - 1`
    pub power_residual: f64,
    /// `expected_interference / budget - 1`
    pub interference_residual: f64,
    /// `ratio_cdf(threshold) - (1 - p)`
    pub schedule_residual: f64,
}

/// Multipliers and the matching scheduling threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualSolution {
    pub lambda: f64,
    pub mu: f64,
    pub threshold: f64,
    pub p: f64,
    pub diagnostics: SolverDiagnostics,
}

impl DualSolution {
    /// Build a solution from multipliers, computing the threshold as the
    /// `(1 - p)`-quantile of the ratio.
    pub fn from_multipliers(
        lambda: f64,
        mu: f64,
        p: f64,
        model_h: &FadingModel,
        model_g: &FadingModel,
    ) -> Result<Self> {
        let dist = RatioDistribution::new(lambda, mu, *model_h, *model_g)?;
        let threshold = dist.upper_quantile(p)?;
        let schedule_residual = dist.cdf(threshold)? - (1.0 - p);
        Ok(DualSolution {
            lambda,
            mu,
            threshold,
            p,
            diagnostics: SolverDiagnostics {
                schedule_residual,
                ..Default::default()
            },
        })
    }

    /// `max(threshold, 1)`: the ratio a user must beat to transmit with positive power.
    #[inline]
    pub fn gate(&self) -> f64 {
        self.threshold.max(1.0)
    }

    #[inline]
    pub fn ratio(&self, h: f64, g: f64) -> f64 {
        ratio_value(h, g, self.lambda, self.mu)
    }

    #[inline]
    pub fn power(&self, h: f64, g: f64) -> f64 {
        if self.schedule(h, g) {
            waterfill(h, g, self.lambda, self.mu)
        } else {
            0.0
        }
    }

    /// Strictly above the threshold.
    #[inline]
    pub fn schedule(&self, h: f64, g: f64) -> bool {
        self.ratio(h, g) > self.threshold
    }

    /// Rate in nats, `log(X) 1{X > max(threshold, 1)}`.
    #[inline]
    pub fn rate(&self, h: f64, g: f64) -> f64 {
        let x = self.ratio(h, g);
        if x > self.gate() {
            x.ln()
        } else {
            0.0
        }
    }

    /// The same rate written through the allocated power, `log(1 + h P) 1{X > threshold}`.
    pub fn rate_via_power(&self, h: f64, g: f64) -> f64 {
        if self.schedule(h, g) {
            (h * waterfill(h, g, self.lambda, self.mu)).ln_1p()
        } else {
            0.0
        }
    }
}

pub fn schedule(h: f64, g: f64, dual: &DualSolution) -> bool {
    dual.schedule(h, g)
}

pub fn instantaneous_rate(h: f64, g: f64, dual: &DualSolution) -> f64 {
    dual.rate(h, g)
}

/// `E_g[phi(g)]` by adaptive quadrature over `[0, U]`, `U` the
/// `(1 - G_TAIL_MASS)`-quantile of `g`. The integration variable is
/// `y = g^gamma` (gamma the origin exponent of `g`), which removes the density
/// singularity at zero. The mass beyond `U` contributes `phi(U) * P(g > U)`,
/// with the same amount added to the error bound.
pub fn expect_over<F: Fn(f64) -> f64>(
    model: &FadingModel,
    phi: F,
    rel_tol: f64,
) -> Result<Estimate> {
    let upper = model.upper_quantile(G_TAIL_MASS)?;
    let gamma = model.class_c().gamma;
    let inv = 1.0 / gamma;
    let y_max = upper.powf(gamma);
    let body = integrate(
        |y| {
            let g = y.powf(inv);
            let jac = inv * y.powf(inv - 1.0);
            let w = model.pdf(g) * jac;
            if w == 0.0 {
                0.0
            } else {
                phi(g) * w
            }
        },
        0.0,
        y_max,
        Tolerance::rel(rel_tol),
    )?;
    let tail = phi(upper).abs() * model.sf(upper);
    Ok(Estimate {
        value: body.value + tail,
        error: body.error + tail,
    })
}

/// Distribution of `X = h / (lambda + mu g)` with `h`, `g` independent.
#[derive(Debug, Clone, Copy)]
pub struct RatioDistribution {
    pub lambda: f64,
    pub mu: f64,
    pub model_h: FadingModel,
    pub model_g: FadingModel,
}

impl RatioDistribution {
    pub fn new(lambda: f64, mu: f64, model_h: FadingModel, model_g: FadingModel) -> Result<Self> {
        if !(lambda >= 0.0 && mu >= 0.0 && lambda + mu > 0.0 && (lambda + mu).is_finite()) {
            return Err(Error::Domain(format!(
                "multipliers must be nonnegative and not both zero, got lambda={lambda}, mu={mu}"
            )));
        }
        Ok(RatioDistribution {
            lambda,
            mu,
            model_h,
            model_g,
        })
    }

    /// `P(X <= x) = E_g[F_h(x (lambda + mu g))]`.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(0.0);
        }
        if self.mu == 0.0 {
            return Ok(self.model_h.cdf(x * self.lambda));
        }
        let (l, m, h) = (self.lambda, self.mu, self.model_h);
        Ok(
            expect_over(&self.model_g, |g| h.cdf(x * (l + m * g)), QUAD_REL_TOL)?
                .value
                .min(1.0),
        )
    }

    /// `P(X > x) = E_g[1 - F_h(x (lambda + mu g))]`, accurate for small tails.
    pub fn sf(&self, x: f64) -> Result<f64> {
        if x <= 0.0 {
            return Ok(1.0);
        }
        if self.mu == 0.0 {
            return Ok(self.model_h.sf(x * self.lambda));
        }
        let (l, m, h) = (self.lambda, self.mu, self.model_h);
        Ok(
            expect_over(&self.model_g, |g| h.sf(x * (l + m * g)), QUAD_REL_TOL)?
                .value
                .min(1.0),
        )
    }

    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::Domain(format!(
                "quantile level must lie in [0, 1), got {q}"
            )));
        }
        if q == 0.0 {
            return Ok(0.0);
        }
        self.upper_quantile(1.0 - q)
    }

    /// The `x` with `P(X > x) = tail`.
    pub fn upper_quantile(&self, tail: f64) -> Result<f64> {
        if !(tail > 0.0 && tail <= 1.0) {
            return Err(Error::Domain(format!(
                "tail probability must lie in (0, 1], got {tail}"
            )));
        }
        if tail == 1.0 {
            return Ok(0.0);
        }
        if self.mu == 0.0 {
            return Ok(self.model_h.upper_quantile(tail)? / self.lambda);
        }
        // P(X > x) <= P(g < g_q) + P(h > x (lambda + mu g_q)), each term at tail / 2
        let g_q = self.model_g.quantile(0.5 * tail)?;
        let mut hi = self.model_h.upper_quantile(0.5 * tail)? / (self.lambda + self.mu * g_q);
        if !(hi.is_finite() && hi > 0.0) {
            hi = 1.0;
        }
        let mut lo = 0.0;
        let mut expansions = 0;
        while self.sf(hi)? > tail {
            lo = hi;
            hi *= 2.0;
            expansions += 1;
            if expansions > 1100 {
                return Err(Error::NoConvergence {
                    solver: "ratio quantile bracket",
                    iterations: expansions,
                    residual: tail,
                });
            }
        }
        // the upper-half regime bisects on the survival, the lower half on the cdf
        let use_cdf = tail > 0.5;
        let target = if use_cdf { 1.0 - tail } else { tail };
        for _ in 0..RATIO_QUANTILE_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-14 * hi {
                break;
            }
            let below = if use_cdf {
                self.cdf(mid)? < target
            } else {
                self.sf(mid)? > target
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn ratio_cdf(
    x: f64,
    lambda: f64,
    mu: f64,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<f64> {
    RatioDistribution::new(lambda, mu, *model_h, *model_g)?.cdf(x)
}

pub fn ratio_quantile(
    q: f64,
    lambda: f64,
    mu: f64,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<f64> {
    RatioDistribution::new(lambda, mu, *model_h, *model_g)?.quantile(q)
}
