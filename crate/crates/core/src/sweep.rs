//! Throughput against the number of users, with the double-logarithmic
//! reference curve.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::dual::solve_duals;
use crate::error::{Error, Result};
use crate::fading::FadingModel;
use crate::sim::{estimate, NetworkConfig};
use crate::stream::child_seed;

pub const DEFAULT_SLOTS: u64 = 100_000;
/// Rows with at most this many users get `SMALL_N_BOOST` times the slots.
pub const SMALL_N: usize = 200;
pub const SMALL_N_BOOST: u64 = 10;

pub const CSV_HEADER: [&str; 8] = [
    "n",
    "throughput",
    "stderr",
    "asymptote",
    "lambda",
    "mu",
    "threshold",
    "p_an",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    #[serde(rename = "n")]
    pub n_users: usize,
    pub throughput: f64,
    pub stderr: f64,
    pub asymptote: f64,
    pub lambda: f64,
    pub mu: f64,
    pub threshold: f64,
    pub p_an: f64,
}

/// Growth exponent `n_h` of the tail `exp(-beta x^n)` of the secondary link gain.
pub fn tail_exponent(model_h: &FadingModel) -> f64 {
    model_h.class_c().n
}

/// `(1/(e n_h)) ln ln N + (1/e) ln p_ave`.
pub fn asymptote(n_users: usize, model_h: &FadingModel, p_ave: f64) -> Result<f64> {
    let n = n_users as f64;
    if n <= std::f64::consts::E {
        return Err(Error::Domain(format!("ln ln N needs N > e, got {n_users}")));
    }
    if !(p_ave > 0.0 && p_ave.is_finite()) {
        return Err(Error::Domain(format!(
            "power budget must be positive, got {p_ave}"
        )));
    }
    let e = std::f64::consts::E;
    Ok(n.ln().ln() / (e * tail_exponent(model_h)) + p_ave.ln() / e)
}

/// Fixed part of a sweep: channel models and linear budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepTemplate {
    pub model_h: FadingModel,
    pub model_g: FadingModel,
    pub p_ave: f64,
    pub q_ave: f64,
}

pub fn slots_for(n_users: usize, base: u64) -> u64 {
    if n_users <= SMALL_N {
        base * SMALL_N_BOOST
    } else {
        base
    }
}

/// Solve, simulate and attach the reference curve for one `N` with `p = 1/N`.
pub fn sweep_row(
    template: &SweepTemplate,
    n_users: usize,
    slots: u64,
    seed: u64,
) -> Result<SweepRow> {
    if n_users < 2 {
        return Err(Error::Config(format!(
            "sweep needs at least two users, got {n_users}"
        )));
    }
    let config = NetworkConfig::new(n_users, template.p_ave, template.q_ave)?;
    let dual = solve_duals(&config, &template.model_h, &template.model_g)?;
    let stats = estimate(
        &config,
        &dual,
        &template.model_h,
        &template.model_g,
        slots,
        seed,
    )?;
    Ok(SweepRow {
        n_users,
        throughput: stats.throughput,
        stderr: stats.throughput_stderr,
        asymptote: asymptote(n_users, &template.model_h, template.p_ave)?,
        lambda: dual.lambda,
        mu: dual.mu,
        threshold: dual.threshold,
        p_an: stats.p_an,
    })
}

#[derive(Debug)]
pub struct SweepReport {
    /// Successful rows in increasing `N`.
    pub rows: Vec<SweepRow>,
    /// Rows that failed, with the reason.
    pub failures: Vec<(usize, Error)>,
}

/// One row per distinct `N`, each with its own seed derived from `(seed, N)`
/// and `slots_for(N, slots)` slots. A failing row is reported and skipped.
pub fn sweep(template: &SweepTemplate, n_list: &[usize], slots: u64, seed: u64) -> SweepReport {
    let mut ns = n_list.to_vec();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = Vec::with_capacity(ns.len());
    let mut failures = Vec::new();
    for n in ns {
        match sweep_row(template, n, slots_for(n, slots), child_seed(seed, n as u64)) {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((n, e)),
        }
    }
    SweepReport { rows, failures }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateDecomposition {
    /// `ln(1/lambda) P(A_N)`.
    pub const_part: f64,
    pub growth_part: f64,
    /// Large-`N` value of `const_part`, `(1/e) ln p_ave`.
    pub const_limit: f64,
}

pub fn rate_decomposition(row: &SweepRow, p_ave: f64) -> RateDecomposition {
    let const_part = (1.0 / row.lambda).ln() * row.p_an;
    RateDecomposition {
        const_part,
        growth_part: row.throughput - const_part,
        const_limit: p_ave.ln() / std::f64::consts::E,
    }
}

/// Least-squares slope of throughput against `ln ln N`.
pub fn loglog_slope(rows: &[SweepRow]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| ((r.n_users as f64).ln().ln(), r.throughput))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Domain("slope needs at least two rows".into()));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Domain("slope needs two distinct N".into()));
    }
    Ok(sxy / sxx)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record(CSV_HEADER)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != CSV_HEADER {
        return Err(Error::Config(format!("unexpected sweep header {header:?}")));
    }
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}
