//! Self-checks of the fading models, run by `dist-check`.

use std::f64::consts::{E, PI};

use crate::fading::{
    ks_distance, origin_ratio, tail_ratio, ClassCTail, FadingModel, SlowlyVarying,
};
use crate::stream::substream;

/// 1% Kolmogorov–Smirnov critical value times `sqrt(n)`.
pub const KS_COEFF: f64 = 1.95;
pub const ROUND_TRIP_TOL: f64 = 1e-9;
/// Tail points are placed where the exponent `beta x^n` takes these values.
pub const TAIL_EXPONENTS: [f64; 3] = [10.0, 20.0, 40.0];
pub const ORIGIN_GRID: [f64; 3] = [1e-2, 1e-3, 1e-4];

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub model: FadingModel,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// One model of each family, at the shapes used in the reference examples.
pub fn reference_models() -> [FadingModel; 4] {
    [
        FadingModel::Rayleigh,
        FadingModel::Rician { k: 1.0 },
        FadingModel::Nakagami { m: 0.5 },
        FadingModel::Weibull { c: 4.0 },
    ]
}

/// Class-C row written out by hand for the reference models.
pub fn reference_row(model: &FadingModel) -> Option<ClassCTail> {
    let row = match *model {
        FadingModel::Rayleigh => ClassCTail {
            alpha: 1.0,
            l: 0.0,
            beta: 1.0,
            n: 1.0,
            h: SlowlyVarying::Zero,
            tail_eta: 1.0,
            gamma: 1.0,
        },
        FadingModel::Rician { k: 1.0 } => ClassCTail {
            alpha: 1.0 / (2.0 * PI.sqrt() * E * 2f64.powf(0.25)),
            l: -0.25,
            beta: 2.0,
            n: 1.0,
            h: SlowlyVarying::Sqrt {
                coeff: 2.0 * 2f64.sqrt(),
            },
            tail_eta: 2.0 / E,
            gamma: 1.0,
        },
        FadingModel::Nakagami { m: 0.5 } => ClassCTail {
            alpha: (2.0 / PI).sqrt(),
            l: -0.5,
            beta: 0.5,
            n: 1.0,
            h: SlowlyVarying::Zero,
            tail_eta: (2.0 / PI).sqrt(),
            gamma: 0.5,
        },
        FadingModel::Weibull { c: 4.0 } => ClassCTail {
            alpha: 1.0,
            l: 0.0,
            beta: PI / 4.0,
            n: 2.0,
            h: SlowlyVarying::Zero,
            tail_eta: PI / 4.0,
            gamma: 2.0,
        },
        _ => return None,
    };
    Some(row)
}

/// Agreement up to the rounding of the Gamma function behind some constants.
pub const ROW_REL_TOL: f64 = 1e-14;

fn close(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= ROW_REL_TOL * a.abs().max(b.abs())
}

fn rows_match(a: &ClassCTail, b: &ClassCTail) -> bool {
    let h = match (a.h, b.h) {
        (SlowlyVarying::Zero, SlowlyVarying::Zero) => true,
        (SlowlyVarying::Sqrt { coeff: x }, SlowlyVarying::Sqrt { coeff: y }) => close(x, y),
        _ => false,
    };
    h && close(a.alpha, b.alpha)
        && close(a.l, b.l)
        && close(a.beta, b.beta)
        && close(a.n, b.n)
        && close(a.tail_eta, b.tail_eta)
        && close(a.gamma, b.gamma)
}

/// `|r - 1|` must not grow along the grid (up to rounding).
fn converging(devs: &[f64]) -> bool {
    devs.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check(model: FadingModel, name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        model,
        name,
        passed,
        detail,
    }
}

/// Invariant checks for one model from `samples` seeded draws.
pub fn check_model(model: &FadingModel, samples: usize, seed: u64) -> Vec<Check> {
    let m = *model;
    let mut out = Vec::new();
    let mut rng = substream(seed, 0);
    let sampler = model.sampler();
    let mut xs: Vec<f64> = (0..samples)
        .map(|_| rand::Rng::sample(&mut rng, &sampler))
        .collect();

    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    out.push(check(
        m,
        "unit mean",
        (mean - 1.0).abs() <= 4.0 * se && xs.iter().all(|&x| x > 0.0),
        format!("mean {mean:.5} (4 se = {:.5})", 4.0 * se),
    ));

    let ks = ks_distance(model, &mut xs);
    let crit = KS_COEFF / n.sqrt();
    out.push(check(
        m,
        "ks distance",
        ks <= crit,
        format!("{ks:.5} <= {crit:.5}"),
    ));

    let mut worst: f64 = 0.0;
    let mut ok = model.quantile(0.0).ok() == Some(0.0);
    for q in [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99] {
        match model.quantile(q) {
            Ok(x) => worst = worst.max((model.cdf(x) - q).abs()),
            Err(_) => ok = false,
        }
    }
    out.push(check(
        m,
        "quantile round trip",
        ok && worst <= ROUND_TRIP_TOL,
        format!("max error {worst:.2e}"),
    ));

    let grid: Vec<f64> = (1..=400).map(|i| 0.025 * i as f64).collect();
    let mut monotone = model.cdf(0.0) == 0.0 && model.cdf(-1.0) == 0.0;
    for w in grid.windows(2) {
        let (a, b) = (model.cdf(w[0]), model.cdf(w[1]));
        monotone &= if model.sf(w[1]) > 1e-12 {
            b > a
        } else {
            b >= a
        };
    }
    out.push(check(
        m,
        "cdf monotone",
        monotone,
        "400-point grid on (0, 10]".into(),
    ));

    let tail = model.class_c();
    match reference_row(model) {
        Some(row) => out.push(check(
            m,
            "class-C row",
            rows_match(&tail, &row),
            format!("{tail:?}"),
        )),
        None => out.push(check(
            m,
            "class-C row",
            false,
            "no reference row for this shape".into(),
        )),
    }

    let tail_grid = TAIL_EXPONENTS.map(|e| (e / tail.beta).powf(1.0 / tail.n));
    let mut devs = Vec::new();
    let mut saturated = false;
    for x in tail_grid {
        match tail_ratio(model, &tail, x) {
            Ok(r) if !r.saturated => devs.push((r.value - 1.0).abs()),
            _ => saturated = true,
        }
    }
    out.push(check(
        m,
        "tail ratio converges",
        !saturated && converging(&devs),
        format!("|r - 1| at {}: {}", sci(&tail_grid), sci(&devs)),
    ));

    let devs: Vec<f64> = ORIGIN_GRID
        .iter()
        .map(|&x| origin_ratio(model, &tail, x).map_or(f64::INFINITY, |r| (r - 1.0).abs()))
        .collect();
    out.push(check(
        m,
        "origin ratio converges",
        devs.iter().all(|d| d.is_finite()) && converging(&devs),
        format!("|r - 1| at {ORIGIN_GRID:?}: {}", sci(&devs)),
    ));
    out
}

/// All invariant checks over the reference models.
pub fn conformance_suite(samples: usize, seed: u64) -> Vec<Check> {
    reference_models()
        .iter()
        .enumerate()
        .flat_map(|(i, m)| check_model(m, samples, crate::stream::child_seed(seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes_for_reference_models() {
        let checks = conformance_suite(20_000, 1);
        assert_eq!(checks.len(), 4 * 7);
        for c in &checks {
            assert!(c.passed, "{} {}: {}", c.model, c.name, c.detail);
        }
    }

    #[test]
    fn unknown_shape_has_no_reference_row() {
        assert!(reference_row(&FadingModel::Weibull { c: 3.0 }).is_none());
        let checks = check_model(&FadingModel::Weibull { c: 3.0 }, 1000, 0);
        assert!(checks.iter().any(|c| c.name == "class-C row" && !c.passed));
    }
}
