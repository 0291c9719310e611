//! Multipliers that make the average power and interference constraints hold.
//!
//! The power constraint is taken to be active. The solver first tries
//! `mu = 0`; if the resulting policy overshoots the interference budget it
//! searches `mu > 0` so that interference meets its budget with equality,
//! re-solving `lambda` for the power budget at every trial `mu`. Both
//! expectations are nonincreasing in each multiplier, which is what makes the
//! nested one-dimensional searches valid.

use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::policy::{expect_over, DualSolution, RatioDistribution, SolverDiagnostics};
use crate::quad::{integrate, Tolerance};
use crate::sim::NetworkConfig;

const OUTER_REL_TOL: f64 = 1e-9;
const INNER_REL_TOL: f64 = 1e-11;
/// Relative residual at which the power and interference searches stop.
pub const SOLVE_REL_TOL: f64 = 1e-9;
pub const MAX_OUTER_ITER: usize = 500;
const MAX_INNER_ITER: usize = 500;
const LAMBDA_FLOOR: f64 = 1e-12;

/// Per-user right-hand sides of the average constraints.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintBudget {
    pub per_user_power: f64,
    pub per_user_interference: f64,
}

impl ConstraintBudget {
    pub fn new(per_user_power: f64, per_user_interference: f64) -> Result<Self> {
        for (name, v) in [
            ("power", per_user_power),
            ("interference", per_user_interference),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Infeasible(format!(
                    "{name} budget must be positive and finite, got {v}"
                )));
            }
        }
        Ok(ConstraintBudget {
            per_user_power,
            per_user_interference,
        })
    }

    pub fn for_network(config: &NetworkConfig) -> Result<Self> {
        let n = config.n_users as f64;
        Self::new(config.p_ave / n, config.q_ave / n)
    }
}

/// `E[(1/c - 1/h)^+ 1{h > s c}]` for a fixed level `c = lambda + mu g` and
/// gate `s = max(threshold, 1)`.
///
/// Integrating by parts and substituting `h = L / v`, `L = s c`, gives
/// `(1/c - 1/L) S(L) + (1/L) int_0^1 S(L / v) dv` with `S` the survival of `h`.
fn conditional_power(model_h: &FadingModel, level: f64, gate: f64) -> Result<f64> {
    let edge = gate * level;
    let boundary = (1.0 / level - 1.0 / edge) * model_h.sf(edge);
    let tail = integrate(
        |v| model_h.sf(edge / v),
        0.0,
        1.0,
        Tolerance::rel(INNER_REL_TOL),
    )?;
    Ok(boundary + tail.value / edge)
}

fn check_args(lambda: f64, mu: f64, threshold: f64) -> Result<()> {
    if !(lambda >= 0.0 && mu >= 0.0 && lambda + mu > 0.0) {
        return Err(Error::Domain(format!(
            "need lambda, mu >= 0 with lambda + mu > 0, got {lambda}, {mu}"
        )));
    }
    if threshold.is_nan() || threshold < 0.0 {
        return Err(Error::Domain(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    Ok(())
}

/// Average transmit power per user, `E[P(h, g) 1{X > threshold}]`.
pub fn expected_power(
    lambda: f64,
    mu: f64,
    threshold: f64,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<f64> {
    check_args(lambda, mu, threshold)?;
    let gate = threshold.max(1.0);
    if mu == 0.0 {
        return conditional_power(model_h, lambda, gate);
    }
    let inner_err = std::cell::Cell::new(None);
    let est = expect_over(
        model_g,
        |g| match conditional_power(model_h, lambda + mu * g, gate) {
            Ok(v) => v,
            Err(e) => {
                inner_err.set(Some(e));
                f64::NAN
            }
        },
        OUTER_REL_TOL,
    );
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    Ok(est?.value)
}

/// Average interference per user at the primary receiver, `E[g P(h, g) 1{X > threshold}]`.
pub fn expected_interference(
    lambda: f64,
    mu: f64,
    threshold: f64,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<f64> {
    check_args(lambda, mu, threshold)?;
    let gate = threshold.max(1.0);
    if mu == 0.0 {
        // g is independent of the policy and has unit mean
        return conditional_power(model_h, lambda, gate);
    }
    let inner_err = std::cell::Cell::new(None);
    let est = expect_over(
        model_g,
        |g| match conditional_power(model_h, lambda + mu * g, gate) {
            Ok(v) => g * v,
            Err(e) => {
                inner_err.set(Some(e));
                f64::NAN
            }
        },
        OUTER_REL_TOL,
    );
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    Ok(est?.value)
}

/// Constraint consumption of the self-consistent policy at `(lambda, mu)`.
#[derive(Debug, Clone, Copy)]
struct Evaluation {
    lambda: f64,
    threshold: f64,
    power: f64,
}

struct Problem<'a> {
    model_h: &'a FadingModel,
    model_g: &'a FadingModel,
    p: f64,
    budget: ConstraintBudget,
    inner_iterations: usize,
}

impl Problem<'_> {
    fn threshold(&self, lambda: f64, mu: f64) -> Result<f64> {
        RatioDistribution::new(lambda, mu, *self.model_h, *self.model_g)?.upper_quantile(self.p)
    }

    fn evaluate(&mut self, lambda: f64, mu: f64) -> Result<Evaluation> {
        self.inner_iterations += 1;
        let threshold = self.threshold(lambda, mu)?;
        let power = expected_power(lambda, mu, threshold, self.model_h, self.model_g)?;
        Ok(Evaluation {
            lambda,
            threshold,
            power,
        })
    }

    /// `lambda` meeting the power budget at this `mu`, searched on a log scale.
    fn solve_lambda(&mut self, mu: f64) -> Result<Evaluation> {
        let target = self.budget.per_user_power;
        let mut lo = self.evaluate(1e-6, mu)?;
        if lo.power < target && mu > 0.0 {
            // power is largest at the floor; fail fast when even that falls short
            let floor = self.evaluate(LAMBDA_FLOOR, mu)?;
            if floor.power < target {
                return Err(Error::DegenerateBudget(format!(
                    "power budget {target:e} is not reached even at lambda = {LAMBDA_FLOOR:e} (mu = {mu:e})"
                )));
            }
        }
        while lo.power < target {
            let next = lo.lambda * 0.1;
            if next < LAMBDA_FLOOR {
                return Err(Error::DegenerateBudget(format!(
                    "power budget {target:e} is not reached even at lambda = {:e} (mu = {mu:e})",
                    lo.lambda
                )));
            }
            lo = self.evaluate(next, mu)?;
        }
        let mut hi = self.evaluate(10.0, mu)?;
        let mut expansions = 0;
        while hi.power > target {
            expansions += 1;
            if expansions > 60 {
                return Err(Error::NoConvergence {
                    solver: "lambda bracket",
                    iterations: expansions,
                    residual: hi.power / target - 1.0,
                });
            }
            lo = hi;
            hi = self.evaluate(hi.lambda * 10.0, mu)?;
        }
        // False position on (log lambda, log power) with the Illinois
        // modification, falling back to geometric bisection.
        let f = |e: &Evaluation| (e.power.max(f64::MIN_POSITIVE) / target).ln();
        let (mut f_lo, mut f_hi) = (f(&lo), f(&hi));
        let mut side = 0i8;
        for _ in 0..MAX_INNER_ITER {
            let (a, b) = (lo.lambda.ln(), hi.lambda.ln());
            let mut x = if f_lo.is_finite() && f_hi.is_finite() && f_lo != f_hi {
                (a * f_hi - b * f_lo) / (f_hi - f_lo)
            } else {
                0.5 * (a + b)
            };
            if !(x > a && x < b) {
                x = 0.5 * (a + b);
            }
            let mid = self.evaluate(x.exp(), mu)?;
            let fm = f(&mid);
            if fm.abs() <= SOLVE_REL_TOL || (b - a) < 1e-15 {
                return Ok(mid);
            }
            if fm > 0.0 {
                lo = mid;
                f_lo = fm;
                if side == -1 {
                    f_hi *= 0.5;
                }
                side = -1;
            } else {
                hi = mid;
                f_hi = fm;
                if side == 1 {
                    f_lo *= 0.5;
                }
                side = 1;
            }
        }
        Err(Error::NoConvergence {
            solver: "lambda search",
            iterations: MAX_INNER_ITER,
            residual: f_lo.abs().min(f_hi.abs()),
        })
    }

    fn interference(&self, eval: &Evaluation, mu: f64) -> Result<f64> {
        expected_interference(eval.lambda, mu, eval.threshold, self.model_h, self.model_g)
    }
}

/// Solve for `(lambda, mu)` and the matching threshold.
pub fn solve_duals(
    config: &NetworkConfig,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<DualSolution> {
    config.validate()?;
    let budget = ConstraintBudget::for_network(config)?;
    solve_with_budget(budget, config.sched_prob, model_h, model_g)
}

pub fn solve_with_budget(
    budget: ConstraintBudget,
    p: f64,
    model_h: &FadingModel,
    model_g: &FadingModel,
) -> Result<DualSolution> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!(
            "scheduling probability must lie in (0, 1), got {p}"
        )));
    }
    let mut problem = Problem {
        model_h,
        model_g,
        p,
        budget,
        inner_iterations: 0,
    };
    let q_target = budget.per_user_interference;

    let free = problem.solve_lambda(0.0)?;
    let free_interference = problem.interference(&free, 0.0)?;
    if free_interference <= q_target {
        return finish(&problem, free, 0.0, free_interference, 0);
    }

    // Interference is binding: find mu with I(lambda(mu), mu) = budget,
    // bracketing geometrically from the scale of the free lambda.
    let mut outer = 0;
    // `None` marks a mu so large that no lambda spends the power budget,
    // which places it above the root.
    let probe = |mu: f64, problem: &mut Problem<'_>| -> Result<Option<Trial>> {
        let eval = match problem.solve_lambda(mu) {
            Ok(eval) => eval,
            Err(Error::DegenerateBudget(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let interference = problem.interference(&eval, mu)?;
        Ok(Some(Trial {
            eval,
            mu,
            interference,
        }))
    };
    let above = |t: &Option<Trial>| t.as_ref().is_none_or(|t| t.interference <= q_target);
    let bracket_error = |outer: usize, t: &Option<Trial>| Error::NoConvergence {
        solver: "mu bracket",
        iterations: outer,
        residual: t
            .as_ref()
            .map_or(f64::NAN, |t| t.interference / q_target - 1.0),
    };
    let mut mu = free.lambda;
    let mut trial = probe(mu, &mut problem)?;
    let (mut mu_lo, mut mu_hi);
    let mut best: Option<Trial>;
    if !above(&trial) {
        loop {
            outer += 1;
            if outer > 100 {
                return Err(bracket_error(outer, &trial));
            }
            let next = probe(mu * 4.0, &mut problem)?;
            if above(&next) {
                mu_lo = mu;
                mu_hi = mu * 4.0;
                best = next;
                break;
            }
            mu *= 4.0;
            trial = next;
        }
    } else {
        loop {
            outer += 1;
            if outer > 100 {
                return Err(bracket_error(outer, &trial));
            }
            let next = probe(mu / 4.0, &mut problem)?;
            if !above(&next) {
                mu_lo = mu / 4.0;
                mu_hi = mu;
                best = trial;
                trial = next;
                break;
            }
            mu /= 4.0;
            trial = next;
        }
    }
    // `trial` now holds the lower end and `best` the upper end.
    // Illinois false position on (log mu, log interference), bisecting
    // geometrically whenever an end has no finite residual.
    let resid = |t: &Option<Trial>| {
        t.as_ref()
            .map(|t| (t.interference.max(f64::MIN_POSITIVE) / q_target).ln())
    };
    let mut f_lo = resid(&trial);
    let mut f_hi = resid(&best);
    let mut side = 0i8;
    while outer < MAX_OUTER_ITER {
        if let Some(t) = &best {
            if (t.interference / q_target - 1.0).abs() <= SOLVE_REL_TOL
                || mu_hi - mu_lo <= 1e-15 * mu_hi
            {
                return finish(&problem, t.eval, t.mu, t.interference, outer);
            }
        }
        outer += 1;
        let (a, b) = (mu_lo.ln(), mu_hi.ln());
        let mut x = match (f_lo, f_hi) {
            (Some(fa), Some(fb)) if fa != fb => (a * fb - b * fa) / (fb - fa),
            _ => 0.5 * (a + b),
        };
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let mid = x.exp();
        let next = probe(mid, &mut problem)?;
        let f_mid = resid(&next);
        if above(&next) {
            mu_hi = mid;
            f_hi = f_mid;
            if side == 1 {
                f_lo = f_lo.map(|f| f * 0.5);
            }
            side = 1;
            if next.is_some() {
                best = next;
            }
        } else {
            mu_lo = mid;
            f_lo = f_mid;
            if side == -1 {
                f_hi = f_hi.map(|f| f * 0.5);
            }
            side = -1;
            let closer = match (&next, &best) {
                (Some(n), Some(b)) => {
                    (n.interference / q_target - 1.0).abs()
                        < (b.interference / q_target - 1.0).abs()
                }
                _ => best.is_none(),
            };
            if closer {
                best = next;
            }
        }
    }
    Err(Error::NoConvergence {
        solver: "mu search",
        iterations: outer,
        residual: best.map_or(f64::NAN, |t| t.interference / q_target - 1.0),
    })
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    eval: Evaluation,
    mu: f64,
    interference: f64,
}

fn finish(
    problem: &Problem<'_>,
    eval: Evaluation,
    mu: f64,
    interference: f64,
    outer: usize,
) -> Result<DualSolution> {
    let dist = RatioDistribution::new(eval.lambda, mu, *problem.model_h, *problem.model_g)?;
    let schedule_residual = dist.cdf(eval.threshold)? - (1.0 - problem.p);
    Ok(DualSolution {
        lambda: eval.lambda,
        mu,
        threshold: eval.threshold,
        p: problem.p,
        diagnostics: SolverDiagnostics {
            outer_iterations: outer,
            inner_iterations: problem.inner_iterations,
            power_residual: eval.power / problem.budget.per_user_power - 1.0,
            interference_residual: interference / problem.budget.per_user_interference - 1.0,
            schedule_residual,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const RAY: FadingModel = FadingModel::Rayleigh;

    // E_1(1) by its power series; e^{-1} - E_1(1) = int_1^inf (1 - 1/h) e^{-h} dh
    fn exp_integral_e1(x: f64) -> f64 {
        let euler = 0.577_215_664_901_532_9;
        let mut term = 1.0;
        let mut sum = 0.0;
        for k in 1..100 {
            term *= -x / k as f64;
            sum += term / k as f64;
        }
        -euler - x.ln() - sum
    }

    #[test]
    fn expected_power_examples() {
        let want = (-1.0f64).exp() - exp_integral_e1(1.0);
        let got = expected_power(1.0, 0.0, 1.0, &RAY, &RAY).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!((got - 0.148496).abs() < 1e-6);
        assert!(expected_power(1.0, 0.0, 60.0, &RAY, &RAY).unwrap() < 1e-25);
        let a = expected_power(1.0, 0.3, 1.5, &RAY, &RAY).unwrap();
        let b = expected_power(2.0, 0.3, 1.5, &RAY, &RAY).unwrap();
        assert!(b < a);
    }

    #[test]
    fn expected_interference_examples() {
        let p = expected_power(1.0, 0.0, 1.0, &RAY, &RAY).unwrap();
        let i = expected_interference(1.0, 0.0, 1.0, &RAY, &RAY).unwrap();
        assert!((i - 0.148496).abs() < 1e-6);
        assert_eq!(i, p);
        assert!(expected_interference(1.0, 0.5, 60.0, &RAY, &RAY).unwrap() < 1e-25);
        let mut prev = f64::INFINITY;
        for k in 0..6 {
            let v = expected_interference(0.5, 0.2 * k as f64, 1.2, &RAY, &RAY).unwrap();
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn tiny_mu_is_continuous_with_zero() {
        let mh = FadingModel::Weibull { c: 4.0 };
        let a = expected_power(0.4, 0.0, 1.3, &mh, &RAY).unwrap();
        let b = expected_power(0.4, 1e-9, 1.3, &mh, &RAY).unwrap();
        assert!((a - b).abs() < 1e-8 * a);
        let a = expected_interference(0.4, 0.0, 1.3, &mh, &RAY).unwrap();
        let b = expected_interference(0.4, 1e-9, 1.3, &mh, &RAY).unwrap();
        assert!((a - b).abs() < 1e-8 * a);
    }

    #[test]
    fn monotone_in_threshold_and_multipliers() {
        let mh = FadingModel::Nakagami { m: 2.0 };
        let mg = FadingModel::Nakagami { m: 0.5 };
        let base = expected_power(0.3, 0.3, 1.1, &mh, &mg).unwrap();
        assert!(expected_power(0.3, 0.3, 1.5, &mh, &mg).unwrap() < base);
        assert!(expected_power(0.4, 0.3, 1.1, &mh, &mg).unwrap() < base);
        assert!(expected_power(0.3, 0.4, 1.1, &mh, &mg).unwrap() < base);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(expected_power(0.0, 0.0, 1.0, &RAY, &RAY).is_err());
        assert!(expected_power(1.0, -0.1, 1.0, &RAY, &RAY).is_err());
        assert!(expected_interference(1.0, 0.0, -1.0, &RAY, &RAY).is_err());
        assert!(ConstraintBudget::new(0.0, 1.0).is_err());
    }

    #[test]
    fn slack_interference_gives_zero_mu() {
        let cfg = NetworkConfig::new(10, 31.6228, 1e6).unwrap();
        let d = solve_duals(&cfg, &RAY, &RAY).unwrap();
        assert_eq!(d.mu, 0.0);
        let p = expected_power(d.lambda, 0.0, d.threshold, &RAY, &RAY).unwrap();
        assert!((p / (31.6228 / 10.0) - 1.0).abs() < 1e-6);
        assert!(d.diagnostics.schedule_residual.abs() < 1e-8);
    }

    #[test]
    fn binding_interference_meets_both_budgets() {
        let cfg = NetworkConfig::new(10, 31.6228, 1.0)
            .unwrap()
            .with_sched_prob(0.1)
            .unwrap();
        let d = solve_duals(&cfg, &RAY, &RAY).unwrap();
        assert!(d.mu > 0.0);
        let p = expected_power(d.lambda, d.mu, d.threshold, &RAY, &RAY).unwrap();
        let i = expected_interference(d.lambda, d.mu, d.threshold, &RAY, &RAY).unwrap();
        assert!((p / 3.16228 - 1.0).abs() < 1e-6, "power {p}");
        assert!((i / 0.1 - 1.0).abs() < 1e-6, "interference {i}");
        assert!((d.mu * (i - 0.1)).abs() < 1e-8);
        let dist = RatioDistribution::new(d.lambda, d.mu, RAY, RAY).unwrap();
        assert!((dist.cdf(d.threshold).unwrap() - 0.9).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_probability() {
        let b = ConstraintBudget::new(1.0, 1.0).unwrap();
        assert!(solve_with_budget(b, 1.0, &RAY, &RAY).is_err());
        assert!(solve_with_budget(b, 0.0, &RAY, &RAY).is_err());
    }
    // mean and standard error of (P 1{X > t}, g P 1{X > t}) over seeded draws
    fn monte_carlo(
        lambda: f64,
        mu: f64,
        t: f64,
        mh: &FadingModel,
        mg: &FadingModel,
        n: usize,
        seed: u64,
    ) -> [(f64, f64); 2] {
        use crate::sim::ChannelSampler;
        let channels = ChannelSampler::new(mh, mg);
        let mut rng = crate::stream::substream(seed, 0);
        let gate = t.max(1.0);
        let mut acc = [[0.0f64; 2]; 2];
        for _ in 0..n {
            let (h, g) = channels.draw(&mut rng);
            let level = lambda + mu * g;
            let x = h / level;
            if x > gate {
                let p = 1.0 / level - 1.0 / h;
                for (a, v) in acc.iter_mut().zip([p, g * p]) {
                    a[0] += v;
                    a[1] += v * v;
                }
            }
        }
        let nf = n as f64;
        acc.map(|[s, ss]| {
            let mean = s / nf;
            (mean, ((ss / nf - mean * mean) / (nf - 1.0)).sqrt())
        })
    }

    #[test]
    fn quadrature_matches_monte_carlo() {
        let cases = [
            (0.7, 0.4, 1.6, FadingModel::Weibull { c: 4.0 }, RAY),
            (0.2, 1.1, 3.0, RAY, FadingModel::Nakagami { m: 0.5 }),
            (
                1.3,
                0.25,
                0.8,
                FadingModel::Rician { k: 2.0 },
                FadingModel::Weibull { c: 1.5 },
            ),
        ];
        for (k, (lambda, mu, t, mh, mg)) in cases.into_iter().enumerate() {
            let [(p_mc, p_se), (i_mc, i_se)] =
                monte_carlo(lambda, mu, t, &mh, &mg, 10_000_000, 17 + k as u64);
            let p = expected_power(lambda, mu, t, &mh, &mg).unwrap();
            let i = expected_interference(lambda, mu, t, &mh, &mg).unwrap();
            assert!(
                (p - p_mc).abs() <= 4.0 * p_se,
                "power {p} vs {p_mc} +- {p_se}"
            );
            assert!(
                (i - i_mc).abs() <= 4.0 * i_se,
                "interference {i} vs {i_mc} +- {i_se}"
            );
        }
    }

    #[test]
    fn monte_carlo_reverifies_solved_budgets() {
        let cfg = NetworkConfig::new(10, 31.6228, 1.0)
            .unwrap()
            .with_sched_prob(0.1)
            .unwrap();
        let d = solve_duals(&cfg, &RAY, &RAY).unwrap();
        let [(p, _), (i, _)] = monte_carlo(d.lambda, d.mu, d.threshold, &RAY, &RAY, 10_000_000, 5);
        assert!((p / 3.16228 - 1.0).abs() < 0.01, "power {p}");
        assert!((i / 0.1 - 1.0).abs() < 0.01, "interference {i}");
    }

    #[test]
    fn lambda_approaches_inverse_power_budget() {
        let target = 1.0 / 31.6228;
        let gaps: Vec<f64> = [10, 100, 1000]
            .iter()
            .map(|&n| {
                let cfg = NetworkConfig::new(n, 31.6228, 1.0).unwrap();
                (solve_duals(&cfg, &RAY, &RAY).unwrap().lambda - target).abs()
            })
            .collect();
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "{gaps:?}");
    }
}
