//! Monte Carlo simulation of the secondary network over a collision channel.
//!
//! In every slot each of the `N` users draws its own `(h, g)`, applies the
//! threshold policy, and transmits with water-filling power if its ratio beats
//! `max(threshold, 1)`. A slot delivers `log X_(1)` nats when exactly one user
//! transmits and nothing otherwise.

use rand::Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fading::{FadingModel, FadingSampler};
use crate::policy::{waterfill, DualSolution};
use crate::stream::{substream, Stream};

/// Slots per deterministic work unit; the reduction order over units is fixed.
const CHUNK_SLOTS: u64 = 1024;

/// `10^(db / 10)`
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetworkConfig {
    pub n_users: usize,
    /// Average total power budget, linear scale.
    pub p_ave: f64,
    /// Average interference budget at the primary receiver, linear scale.
    pub q_ave: f64,
    /// Per-user scheduling probability.
    pub sched_prob: f64,
}

impl NetworkConfig {
    /// Budgets in linear scale; the scheduling probability defaults to `1/N`.
    pub fn new(n_users: usize, p_ave: f64, q_ave: f64) -> Result<Self> {
        if n_users < 1 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        for (name, v) in [("p_ave", p_ave), ("q_ave", q_ave)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(NetworkConfig {
            n_users,
            p_ave,
            q_ave,
            sched_prob: 1.0 / n_users as f64,
        })
    }

    pub fn from_db(n_users: usize, p_ave_db: f64, q_ave_db: f64) -> Result<Self> {
        Self::new(n_users, db_to_linear(p_ave_db), db_to_linear(q_ave_db))
    }

    pub fn with_sched_prob(mut self, p: f64) -> Result<Self> {
        self.sched_prob = p;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users < 1 {
            return Err(Error::Config("n_users must be at least 1".into()));
        }
        if !(self.sched_prob > 0.0 && self.sched_prob < 1.0) {
            return Err(Error::Config(format!(
                "scheduling probability must lie in (0, 1), got {}",
                self.sched_prob
            )));
        }
        Ok(())
    }
}

/// What happened in one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub rate: f64,
    pub num_transmitters: usize,
    pub total_power: f64,
    pub interference: f64,
    /// Largest ratio in the slot.
    pub top_ratio: f64,
    /// Second largest ratio; 0 with a single user.
    pub second_ratio: f64,
}

impl SlotOutcome {
    /// `log X_(1) 1{X_(1) > gate, X_(2) <= gate}`, the order-statistic form of the rate.
    #[inline]
    pub fn orderstat_rate(&self, gate: f64) -> f64 {
        orderstat_rate(self.top_ratio, self.second_ratio, gate)
    }
}

#[inline]
pub fn orderstat_rate(top: f64, second: f64, gate: f64) -> f64 {
    if top > gate && second <= gate {
        top.ln()
    } else {
        0.0
    }
}

/// Apply the policy to one slot's gains.
pub fn evaluate_slot<I: IntoIterator<Item = (f64, f64)>>(
    draws: I,
    dual: &DualSolution,
) -> SlotOutcome {
    let gate = dual.gate();
    let mut top = 0.0f64;
    let mut second = 0.0f64;
    let mut count = 0;
    let mut power = 0.0;
    let mut interference = 0.0;
    for (h, g) in draws {
        let x = dual.ratio(h, g);
        if x > top {
            second = top;
            top = x;
        } else if x > second {
            second = x;
        }
        if x > gate {
            let p = waterfill(h, g, dual.lambda, dual.mu);
            count += 1;
            power += p;
            interference += g * p;
        }
    }
    SlotOutcome {
        rate: if count == 1 { top.ln() } else { 0.0 },
        num_transmitters: count,
        total_power: power,
        interference,
        top_ratio: top,
        second_ratio: second,
    }
}

/// Per-user gain samplers for a pair of fading models.
#[derive(Debug, Clone)]
pub struct ChannelSampler {
    h: FadingSampler,
    g: FadingSampler,
}

impl ChannelSampler {
    pub fn new(model_h: &FadingModel, model_g: &FadingModel) -> Self {
        ChannelSampler {
            h: model_h.sampler(),
            g: model_g.sampler(),
        }
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let h = self.h.sample(rng);
        let g = self.g.sample(rng);
        (h, g)
    }
}

/// Simulate one slot with `n_users` users drawn from `stream`.
pub fn run_slot(
    n_users: usize,
    dual: &DualSolution,
    channels: &ChannelSampler,
    stream: &mut Stream,
) -> SlotOutcome {
    evaluate_slot((0..n_users).map(|_| channels.draw(stream)), dual)
}

/// The random stream of slot `slot` under `seed`.
pub fn slot_stream(seed: u64, slot: u64) -> Stream {
    substream(seed, slot)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SimStats {
    /// Mean sum-rate, nats per slot.
    pub throughput: f64,
    pub throughput_stderr: f64,
    /// Fraction of slots with exactly one transmitter.
    pub p_an: f64,
    pub p_an_stderr: f64,
    /// Realised average total transmit power per slot.
    pub avg_power: f64,
    pub avg_power_stderr: f64,
    pub avg_interference: f64,
    pub avg_interference_stderr: f64,
    pub slots: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: f64,
    rate: [f64; 2],
    an: f64,
    power: [f64; 2],
    interference: [f64; 2],
}

impl Moments {
    fn push(&mut self, rate: f64, out: &SlotOutcome) {
        self.n += 1.0;
        self.rate[0] += rate;
        self.rate[1] += rate * rate;
        if out.num_transmitters == 1 {
            self.an += 1.0;
        }
        self.power[0] += out.total_power;
        self.power[1] += out.total_power * out.total_power;
        self.interference[0] += out.interference;
        self.interference[1] += out.interference * out.interference;
    }

    fn merge(a: Moments, b: Moments) -> Moments {
        Moments {
            n: a.n + b.n,
            rate: [a.rate[0] + b.rate[0], a.rate[1] + b.rate[1]],
            an: a.an + b.an,
            power: [a.power[0] + b.power[0], a.power[1] + b.power[1]],
            interference: [
                a.interference[0] + b.interference[0],
                a.interference[1] + b.interference[1],
            ],
        }
    }
}

fn pairwise_sum(parts: &[Moments]) -> Moments {
    match parts.len() {
        0 => Moments::default(),
        1 => parts[0],
        n => {
            let (l, r) = parts.split_at(n / 2);
            Moments::merge(pairwise_sum(l), pairwise_sum(r))
        }
    }
}

fn mean_and_stderr(sum: [f64; 2], n: f64) -> (f64, f64) {
    let mean = sum[0] / n;
    if n < 2.0 {
        return (mean, 0.0);
    }
    let var = ((sum[1] - n * mean * mean) / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Which of the two equivalent rate formulas a run accumulates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateForm {
    /// Count transmitters and declare a collision when more than one is active.
    Collision,
    /// `log X_(1) 1{A_N}` from the two largest ratios.
    OrderStatistic,
}

fn simulate(
    config: &NetworkConfig,
    dual: &DualSolution,
    model_h: &FadingModel,
    model_g: &FadingModel,
    slots: u64,
    seed: u64,
    form: RateForm,
) -> Result<SimStats> {
    if slots < 1 {
        return Err(Error::Config("need at least one slot".into()));
    }
    if config.n_users < 1 {
        return Err(Error::Config("n_users must be at least 1".into()));
    }
    let channels = ChannelSampler::new(model_h, model_g);
    let gate = dual.gate();
    let chunks = slots.div_ceil(CHUNK_SLOTS);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::default();
            let end = ((c + 1) * CHUNK_SLOTS).min(slots);
            for slot in c * CHUNK_SLOTS..end {
                let mut stream = slot_stream(seed, slot);
                let out = run_slot(config.n_users, dual, &channels, &mut stream);
                let rate = match form {
                    RateForm::Collision => out.rate,
                    RateForm::OrderStatistic => out.orderstat_rate(gate),
                };
                m.push(rate, &out);
            }
            m
        })
        .collect();
    let total = pairwise_sum(&parts);
    let n = total.n;
    let (throughput, throughput_stderr) = mean_and_stderr(total.rate, n);
    let p_an = total.an / n;
    let (avg_power, avg_power_stderr) = mean_and_stderr(total.power, n);
    let (avg_interference, avg_interference_stderr) = mean_and_stderr(total.interference, n);
    Ok(SimStats {
        throughput,
        throughput_stderr,
        p_an,
        p_an_stderr: (p_an * (1.0 - p_an) / n).sqrt(),
        avg_power,
        avg_power_stderr,
        avg_interference,
        avg_interference_stderr,
        slots,
    })
}

/// Throughput, `P(A_N)` and realised constraint usage over `slots` slots.
pub fn estimate(
    config: &NetworkConfig,
    dual: &DualSolution,
    model_h: &FadingModel,
    model_g: &FadingModel,
    slots: u64,
    seed: u64,
) -> Result<SimStats> {
    simulate(
        config,
        dual,
        model_h,
        model_g,
        slots,
        seed,
        RateForm::Collision,
    )
}

/// Same as [`estimate`] but with the rate taken from the order statistics.
pub fn estimate_orderstat(
    config: &NetworkConfig,
    dual: &DualSolution,
    model_h: &FadingModel,
    model_g: &FadingModel,
    slots: u64,
    seed: u64,
) -> Result<SimStats> {
    if config.n_users < 2 {
        return Err(Error::Config(
            "order-statistic estimator needs at least two users".into(),
        ));
    }
    simulate(
        config,
        dual,
        model_h,
        model_g,
        slots,
        seed,
        RateForm::OrderStatistic,
    )
}

/// Run [`estimate`] (or its order-statistic twin) on a dedicated pool of `workers` threads.
#[allow(clippy::too_many_arguments)]
pub fn estimate_with_workers(
    config: &NetworkConfig,
    dual: &DualSolution,
    model_h: &FadingModel,
    model_g: &FadingModel,
    slots: u64,
    seed: u64,
    form: RateForm,
    workers: usize,
) -> Result<SimStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| simulate(config, dual, model_h, model_g, slots, seed, form))
}

/// Per-slot `(collision rate, order-statistic rate)` pairs on shared draws.
pub fn slot_rates(
    config: &NetworkConfig,
    dual: &DualSolution,
    model_h: &FadingModel,
    model_g: &FadingModel,
    slots: u64,
    seed: u64,
) -> Vec<(f64, f64)> {
    let channels = ChannelSampler::new(model_h, model_g);
    let gate = dual.gate();
    (0..slots)
        .into_par_iter()
        .map(|slot| {
            let mut stream = slot_stream(seed, slot);
            let out = run_slot(config.n_users, dual, &channels, &mut stream);
            (out.rate, out.orderstat_rate(gate))
        })
        .collect()
}
