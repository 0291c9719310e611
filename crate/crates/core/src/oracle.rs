//! Brute-force check of the threshold policy on a discretized channel.
//!
//! The continuous problem is replaced by a finite set of equiprobable
//! `(h, g)` states. On that set the relaxed problem in effective power
//! `q = w P` and scheduling weight `w` is concave, so it can be solved by
//! projected gradient ascent and compared with the threshold policy.
//!
//! Discrete states have atoms, so the threshold policy may need a fractional
//! weight on one boundary state to meet the scheduling constraint exactly.
//! This goes beyond the continuous-fading setting where weights are binary.

use rand::Rng;

use crate::dual::ConstraintBudget;
use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::stream::substream;

pub const RELAXED_STARTS: usize = 20;
pub const START_AGREEMENT_REL: f64 = 1e-6;
const STALL_WINDOW: usize = 50;
const STALL_GAIN: f64 = 1e-12;
const MAX_ASCENT_ITER: usize = 200_000;
const ARMIJO: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointState {
    pub h: f64,
    pub g: f64,
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJointState {
    pub states: Vec<JointState>,
    pub counts: (usize, usize),
}

/// Product grid of cell midpoints at equiprobable quantiles of `h` and `g`.
pub fn discretize(
    model_h: &FadingModel,
    model_g: &FadingModel,
    n_h_grid: usize,
    n_g_grid: usize,
) -> Result<DiscreteJointState> {
    if n_h_grid < 2 || n_g_grid < 2 {
        return Err(Error::Domain(format!(
            "grid sizes must be at least 2, got {n_h_grid}x{n_g_grid}"
        )));
    }
    let midpoints = |model: &FadingModel, n: usize| -> Result<Vec<f64>> {
        (0..n)
            .map(|i| model.quantile((i as f64 + 0.5) / n as f64))
            .collect()
    };
    let hs = midpoints(model_h, n_h_grid)?;
    let gs = midpoints(model_g, n_g_grid)?;
    let mass = 1.0 / (n_h_grid * n_g_grid) as f64;
    let states = hs
        .iter()
        .flat_map(|&h| gs.iter().map(move |&g| JointState { h, g, mass }))
        .collect();
    Ok(DiscreteJointState {
        states,
        counts: (n_h_grid, n_g_grid),
    })
}

impl DiscreteJointState {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// `sum mass * w * ln(1 + h q / w)`, with zero at `w = 0`.
    pub fn objective(&self, q: &[f64], w: &[f64]) -> f64 {
        self.states
            .iter()
            .zip(q.iter().zip(w))
            .map(|(s, (&q, &w))| {
                if w > 0.0 {
                    s.mass * w * (s.h * q / w).ln_1p()
                } else {
                    0.0
                }
            })
            .sum()
    }

    pub fn residuals(&self, q: &[f64], w: &[f64], budget: &ConstraintBudget, p: f64) -> Residuals {
        let mut power = 0.0;
        let mut interference = 0.0;
        let mut schedule = 0.0;
        for (s, (&q, &w)) in self.states.iter().zip(q.iter().zip(w)) {
            power += s.mass * q;
            interference += s.mass * s.g * q;
            schedule += s.mass * w;
        }
        Residuals {
            power: power - budget.per_user_power,
            interference: interference - budget.per_user_interference,
            schedule: schedule - p,
        }
    }
}

/// Constraint left-hand side minus right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residuals {
    pub power: f64,
    pub interference: f64,
    pub schedule: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub mu: f64,
    pub sched_eta: f64,
    pub residuals: Residuals,
    pub iterations: usize,
    /// Objective reached from each random start.
    pub start_objectives: Vec<f64>,
}

fn check_inputs(d: &DiscreteJointState, p: f64) -> Result<()> {
    if d.is_empty() {
        return Err(Error::Domain("no states".into()));
    }
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Infeasible(format!(
            "scheduling probability must lie in (0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Projection onto `{0 <= w <= 1, sum m w = p}` in the mass-weighted norm;
/// returns `theta` with `w = clip(z - theta, 0, 1)`.
fn project_weights(mass: &[f64], z: &[f64], p: f64, out: &mut [f64]) -> f64 {
    let fill = |theta: f64, out: &mut [f64]| -> f64 {
        let mut total = 0.0;
        for ((o, &z), &m) in out.iter_mut().zip(z).zip(mass) {
            *o = (z - theta).clamp(0.0, 1.0);
            total += m * *o;
        }
        total
    };
    let (mut lo, mut hi) = z
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    lo -= 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if fill(mid, out) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let theta = 0.5 * (lo + hi);
    fill(theta, out);
    theta
}

/// Geometric bisection for the crossing of a nonincreasing `f` through
/// `target` on `[lo, hi]` with `f(lo) > target >= f(hi)`; returns the upper end.
fn geometric_root(mut lo: f64, mut hi: f64, target: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..400 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Best effective power for fixed weights: a concave problem whose optimum
/// is `q = w (1/(lambda + mu g) - 1/h)^+` with multipliers for both budgets.
#[derive(Debug, Clone)]
struct InnerPower {
    q: Vec<f64>,
    lambda: f64,
    mu: f64,
}

fn inner_power(d: &DiscreteJointState, w: &[f64], budget: &ConstraintBudget) -> InnerPower {
    let usage = |lambda: f64, mu: f64| -> (f64, f64) {
        let (mut power, mut interference) = (0.0, 0.0);
        for (s, &w) in d.states.iter().zip(w) {
            let level = lambda + mu * s.g;
            if w > 0.0 && s.h > level {
                let q = s.mass * w * (1.0 / level - 1.0 / s.h);
                power += q;
                interference += s.g * q;
            }
        }
        (power, interference)
    };
    let pt = budget.per_user_power;
    let h_max = d.states.iter().map(|s| s.h).fold(0.0, f64::max);
    let lambda_for = |mu: f64| -> f64 {
        if mu > 0.0 && usage(0.0, mu).0 <= pt {
            return 0.0;
        }
        let mut lo = h_max;
        while usage(lo, mu).0 <= pt && lo > f64::MIN_POSITIVE {
            lo *= 0.5;
        }
        geometric_root(lo, h_max.max(lo * 2.0), pt, |l| usage(l, mu).0)
    };
    let qt = budget.per_user_interference;
    let interference_at = |mu: f64| usage(lambda_for(mu), mu).1;
    let lambda0 = lambda_for(0.0);
    let mu = if usage(lambda0, 0.0).1 <= qt {
        0.0
    } else {
        let mut hi = lambda0.max(f64::MIN_POSITIVE);
        while interference_at(hi) > qt {
            hi *= 4.0;
        }
        let mut lo = hi;
        while interference_at(lo) <= qt && lo > f64::MIN_POSITIVE {
            lo *= 0.25;
        }
        geometric_root(lo, hi, qt, interference_at)
    };
    let lambda = lambda_for(mu);
    let q = d
        .states
        .iter()
        .zip(w)
        .map(|(s, &w)| {
            let level = lambda + mu * s.g;
            if w > 0.0 && s.h > level {
                w * (1.0 / level - 1.0 / s.h)
            } else {
                0.0
            }
        })
        .collect();
    InnerPower { q, lambda, mu }
}

/// Gain per unit mass of raising `w_s` at the inner optimum,
/// `G(max(X_s, 1))` with `X_s = h_s / (lambda + mu g_s)`.
fn weight_gradient(d: &DiscreteJointState, inner: &InnerPower, out: &mut [f64]) {
    for (o, s) in out.iter_mut().zip(&d.states) {
        let x = (s.h / (inner.lambda + inner.mu * s.g)).max(1.0);
        *o = x.ln() + 1.0 / x - 1.0;
    }
}

struct Ascent<'a> {
    d: &'a DiscreteJointState,
    mass: Vec<f64>,
    budget: &'a ConstraintBudget,
    p: f64,
}

impl Ascent<'_> {
    fn value(&self, w: &[f64]) -> (InnerPower, f64) {
        let inner = inner_power(self.d, w, self.budget);
        let f = self.d.objective(&inner.q, w);
        (inner, f)
    }

    fn run(&self, mut w: Vec<f64>) -> (Vec<f64>, InnerPower, f64, usize) {
        let n = w.len();
        let mut grad = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut next = vec![0.0; n];
        let (mut inner, mut f) = self.value(&w);
        let mut history = vec![f];
        let mut iter = 0;
        while iter < MAX_ASCENT_ITER {
            iter += 1;
            weight_gradient(self.d, &inner, &mut grad);
            let mut step = 1.0;
            let mut moved = false;
            for _ in 0..60 {
                for i in 0..n {
                    z[i] = w[i] + step * grad[i];
                }
                project_weights(&self.mass, &z, self.p, &mut next);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for i in 0..n {
                    let dw = next[i] - w[i];
                    lin += self.mass[i] * grad[i] * dw;
                    sq += self.mass[i] * dw * dw;
                }
                if sq == 0.0 {
                    break;
                }
                let (trial_inner, trial_f) = self.value(&next);
                if trial_f >= f + ARMIJO * lin {
                    std::mem::swap(&mut w, &mut next);
                    inner = trial_inner;
                    f = trial_f;
                    moved = true;
                    break;
                }
                step *= 0.5;
            }
            history.push(f);
            if !moved {
                break;
            }
            if history.len() > STALL_WINDOW
                && f - history[history.len() - 1 - STALL_WINDOW] < STALL_GAIN
            {
                break;
            }
        }
        (w, inner, f, iter)
    }
}

/// Maximize the relaxed objective from `RELAXED_STARTS` seeded random
/// starts. The ascent runs over the weights `w`; for each `w` the effective
/// power `q` is set to its exact concave optimum, whose gradient in `w` stays
/// bounded where the per-state term has its kink at `w = 0`.
pub fn solve_relaxed(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
) -> Result<OracleSolution> {
    solve_relaxed_seeded(d, budget, p, 0)
}

pub fn solve_relaxed_seeded(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
    seed: u64,
) -> Result<OracleSolution> {
    check_inputs(d, p)?;
    let mass: Vec<f64> = d.states.iter().map(|s| s.mass).collect();
    let n = d.len();
    let ascent = Ascent {
        d,
        mass: mass.clone(),
        budget,
        p,
    };
    let mut best: Option<(Vec<f64>, InnerPower, f64)> = None;
    let mut objectives = Vec::with_capacity(RELAXED_STARTS);
    let mut iterations = 0;
    for start in 0..RELAXED_STARTS {
        let mut rng = substream(seed, start as u64);
        let z: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut w0 = vec![0.0; n];
        project_weights(&mass, &z, p, &mut w0);
        let (w, inner, f, it) = ascent.run(w0);
        iterations += it;
        objectives.push(f);
        if best.as_ref().is_none_or(|b| f > b.2) {
            best = Some((w, inner, f));
        }
    }
    let (w, inner, objective) = best.expect("at least one start");
    let worst = objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread = (objective - worst) / objective.abs().max(f64::MIN_POSITIVE);
    if spread > START_AGREEMENT_REL && objective - worst > STALL_GAIN {
        return Err(Error::NoConvergence {
            solver: "relaxed ascent",
            iterations,
            residual: spread,
        });
    }
    // a unit step from a stationary point projects back onto it, and the
    // projection shift is the scheduling multiplier
    let mut grad = vec![0.0; n];
    weight_gradient(d, &inner, &mut grad);
    let z: Vec<f64> = w.iter().zip(&grad).map(|(a, b)| a + b).collect();
    let mut scratch = vec![0.0; n];
    let sched_eta = project_weights(&mass, &z, p, &mut scratch);
    let residuals = d.residuals(&inner.q, &w, budget, p);
    Ok(OracleSolution {
        q: inner.q,
        w,
        objective,
        lambda: inner.lambda,
        mu: inner.mu,
        sched_eta,
        residuals,
        iterations,
        start_objectives: objectives,
    })
}

/// Threshold policy evaluated on the discrete states.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormSolution {
    pub q: Vec<f64>,
    pub w: Vec<f64>,
    pub objective: f64,
    pub lambda: f64,
    pub mu: f64,
    pub residuals: Residuals,
}

#[derive(Debug, Clone)]
struct Policy {
    q: Vec<f64>,
    w: Vec<f64>,
    power: f64,
    interference: f64,
}

impl Policy {
    fn mix(a: &Policy, b: &Policy, theta: f64) -> Policy {
        let lerp = |x: &[f64], y: &[f64]| {
            x.iter()
                .zip(y)
                .map(|(x, y)| theta * x + (1.0 - theta) * y)
                .collect()
        };
        Policy {
            q: lerp(&a.q, &b.q),
            w: lerp(&a.w, &b.w),
            power: theta * a.power + (1.0 - theta) * b.power,
            interference: theta * a.interference + (1.0 - theta) * b.interference,
        }
    }
}

/// Schedule the states of largest `X = h / (lambda + mu g)` up to mass `p`,
/// splitting the boundary state, and water-fill the scheduled ones.
fn threshold_policy(d: &DiscreteJointState, p: f64, lambda: f64, mu: f64) -> Policy {
    let n = d.len();
    let x: Vec<f64> = d.states.iter().map(|s| s.h / (lambda + mu * s.g)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut w = vec![0.0; n];
    let mut left = p;
    for &i in &order {
        if left <= 0.0 {
            break;
        }
        let m = d.states[i].mass;
        w[i] = if m <= left { 1.0 } else { left / m };
        left -= m * w[i];
    }
    let mut q = vec![0.0; n];
    let (mut power, mut interference) = (0.0, 0.0);
    for (i, s) in d.states.iter().enumerate() {
        if w[i] > 0.0 && x[i] > 1.0 {
            q[i] = w[i] * (1.0 / (lambda + mu * s.g) - 1.0 / s.h);
            power += s.mass * q[i];
            interference += s.mass * s.g * q[i];
        }
    }
    Policy {
        q,
        w,
        power,
        interference,
    }
}

fn mix_to(lo: &Policy, hi: &Policy, lo_value: f64, hi_value: f64, target: f64) -> Policy {
    if lo_value == hi_value {
        return hi.clone();
    }
    let theta = ((target - hi_value) / (lo_value - hi_value)).clamp(0.0, 1.0);
    Policy::mix(lo, hi, theta)
}

/// `lambda` spending the power budget at this `mu`; power falls in `lambda`
/// with jumps where the ordering of states changes, and at a jump the two
/// sides are mixed.
fn solve_power(d: &DiscreteJointState, p: f64, target: f64, mu: f64) -> (f64, Policy) {
    let h_max = d.states.iter().map(|s| s.h).fold(0.0, f64::max);
    if mu > 0.0 {
        let at_zero = threshold_policy(d, p, 0.0, mu);
        if at_zero.power <= target {
            return (0.0, at_zero);
        }
    }
    let mut hi = h_max;
    let mut hi_pol = threshold_policy(d, p, hi, mu);
    let mut lo = h_max;
    let mut lo_pol = hi_pol.clone();
    while lo_pol.power < target {
        hi = lo;
        hi_pol = lo_pol.clone();
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            break;
        }
        lo_pol = threshold_policy(d, p, lo, mu);
    }
    for _ in 0..2000 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let pol = threshold_policy(d, p, mid, mu);
        if pol.power >= target {
            lo = mid;
            lo_pol = pol;
        } else {
            hi = mid;
            hi_pol = pol;
        }
    }
    let (lp, hp) = (lo_pol.power, hi_pol.power);
    (hi, mix_to(&lo_pol, &hi_pol, lp, hp, target))
}

/// Search the multipliers so that the threshold policy meets the budgets,
/// and return it together with its objective.
pub fn closed_form(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
) -> Result<ClosedFormSolution> {
    check_inputs(d, p)?;
    let pt = budget.per_user_power;
    let qt = budget.per_user_interference;
    let (lambda0, free) = solve_power(d, p, pt, 0.0);
    let (lambda, mu, policy) = if free.interference <= qt {
        (lambda0, 0.0, free)
    } else {
        // interference falls as mu grows; bracket geometrically from the free lambda
        let mut mu_hi = lambda0.max(f64::MIN_POSITIVE);
        let mut hi = solve_power(d, p, pt, mu_hi);
        let mut guard = 0;
        while hi.1.interference > qt {
            mu_hi *= 4.0;
            hi = solve_power(d, p, pt, mu_hi);
            guard += 1;
            if guard > 2000 {
                return Err(Error::Infeasible(
                    "interference budget cannot be met".into(),
                ));
            }
        }
        let mut mu_lo = mu_hi;
        let mut lo = hi.clone();
        while lo.1.interference <= qt {
            mu_hi = mu_lo;
            hi = lo.clone();
            mu_lo *= 0.25;
            if mu_lo < f64::MIN_POSITIVE {
                break;
            }
            lo = solve_power(d, p, pt, mu_lo);
        }
        for _ in 0..2000 {
            let mid = (mu_lo * mu_hi).sqrt();
            if mid <= mu_lo || mid >= mu_hi {
                break;
            }
            let trial = solve_power(d, p, pt, mid);
            if trial.1.interference > qt {
                mu_lo = mid;
                lo = trial;
            } else {
                mu_hi = mid;
                hi = trial;
            }
        }
        let (li, hi_i) = (lo.1.interference, hi.1.interference);
        (hi.0, mu_hi, mix_to(&lo.1, &hi.1, li, hi_i, qt))
    };
    let objective = d.objective(&policy.q, &policy.w);
    let residuals = d.residuals(&policy.q, &policy.w, budget, p);
    Ok(ClosedFormSolution {
        q: policy.q,
        w: policy.w,
        objective,
        lambda,
        mu,
        residuals,
    })
}

pub fn closed_form_objective(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
) -> Result<f64> {
    Ok(closed_form(d, budget, p)?.objective)
}

/// Side-by-side result of both solvers on one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleComparison {
    pub relaxed: OracleSolution,
    pub closed_form: ClosedFormSolution,
    pub gap: f64,
}

pub fn compare(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
) -> Result<OracleComparison> {
    compare_seeded(d, budget, p, 0)
}

pub fn compare_seeded(
    d: &DiscreteJointState,
    budget: &ConstraintBudget,
    p: f64,
    seed: u64,
) -> Result<OracleComparison> {
    let relaxed = solve_relaxed_seeded(d, budget, p, seed)?;
    let closed_form = closed_form(d, budget, p)?;
    let gap = (relaxed.objective - closed_form.objective).abs()
        / relaxed.objective.abs().max(f64::MIN_POSITIVE);
    Ok(OracleComparison {
        relaxed,
        closed_form,
        gap,
    })
}
