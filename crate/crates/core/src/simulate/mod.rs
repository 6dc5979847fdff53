//! Discrete-event simulation of the token bucket, the randomized load
//! balancing and static assignments, under any job size distribution.

mod engine;
mod randomized;
mod rates;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{AssignmentMatrix, BalanceTables};
use crate::model::CompatModel;

pub use engine::{Allocation, Routing, SimConfig, SimJob};
pub use randomized::SplitTable;
pub use rates::{admit, first_compatible, seize_rates, service_rates_fcfs, Admission, DetailedState};

use engine::RunOutcome;

/// Mean over runs with its 95% normal-approximation half-width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    /// Absent for a single run.
    pub half_width: Option<f64>,
}

impl Estimate {
    pub fn from_samples(samples: &[f64]) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let half_width = (samples.len() >= 2).then(|| {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
            1.96 * (var / n).sqrt()
        });
        Estimate { mean, half_width }
    }

    /// Whether `value` lies within `k` half-widths of the mean.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.half_width.unwrap_or(0.0)
    }
}

/// Simulated blocking and idleness, pooled over independent runs.
#[derive(Clone, Debug, Serialize)]
pub struct SimEstimate {
    /// Per-type blocked fraction of arrivals.
    pub blocking: Vec<Estimate>,
    /// Per-server fraction of time with no job in service.
    pub idle: Vec<Estimate>,
    pub beta: Estimate,
    pub eta: Estimate,
    /// Measured arrivals per type, summed over runs.
    pub arrivals: Vec<u64>,
    pub blocked: Vec<u64>,
    /// Measured events, summed over runs.
    pub events: u64,
    pub runs: usize,
    pub seed: u64,
    /// Mean time fraction spent in each aggregate state, indexed like the state space.
    pub occupancy: Option<Vec<f64>>,
}

impl SimEstimate {
    fn from_runs(model: &CompatModel, runs: Vec<RunOutcome>, seed: u64) -> Self {
        let caps = model.capacities();
        let total_cap = model.total_capacity();
        let mut blocking = vec![Vec::new(); model.num_types()];
        let mut idle = vec![Vec::new(); model.num_servers()];
        let mut beta = Vec::new();
        let mut eta = Vec::new();
        for r in &runs {
            for (k, b) in blocking.iter_mut().enumerate() {
                b.push(ratio(r.blocked[k] as f64, r.arrivals[k] as f64));
            }
            let mut busy = 0.0;
            for (s, v) in idle.iter_mut().enumerate() {
                let psi = if r.time > 0.0 { r.idle_time[s] / r.time } else { 1.0 };
                busy += caps[s] * (1.0 - psi);
                v.push(psi);
            }
            let arrivals: u64 = r.arrivals.iter().sum();
            let blocked: u64 = r.blocked.iter().sum();
            beta.push(ratio(blocked as f64, arrivals as f64));
            eta.push(busy / total_cap);
        }
        let sum_counts = |f: fn(&RunOutcome) -> &Vec<u64>| {
            let mut total = vec![0; f(&runs[0]).len()];
            for r in &runs {
                total.iter_mut().zip(f(r)).for_each(|(t, c)| *t += c);
            }
            total
        };
        let arrivals = sum_counts(|r| &r.arrivals);
        let blocked = sum_counts(|r| &r.blocked);
        let occupancy = runs[0].occupancy.as_ref().map(|first| {
            let mut mean = vec![0.0; first.len()];
            for r in &runs {
                let occ = r.occupancy.as_ref().expect("tracked in every run");
                for (m, t) in mean.iter_mut().zip(occ) {
                    if r.time > 0.0 {
                        *m += t / r.time / runs.len() as f64;
                    }
                }
            }
            mean
        });
        SimEstimate {
            blocking: blocking.iter().map(|s| Estimate::from_samples(s)).collect(),
            idle: idle.iter().map(|s| Estimate::from_samples(s)).collect(),
            beta: Estimate::from_samples(&beta),
            eta: Estimate::from_samples(&eta),
            arrivals,
            blocked,
            events: runs.iter().map(|r| r.events).sum(),
            runs: runs.len(),
            seed,
            occupancy,
        }
    }

    /// Types that saw no measured arrival; their blocking estimate is 0 by convention.
    pub fn types_without_arrivals(&self) -> Vec<usize> {
        (0..self.arrivals.len()).filter(|&k| self.arrivals[k] == 0).collect()
    }

    /// Largest half-width among the per-type blocking estimates.
    pub fn max_half_width(&self) -> Option<f64> {
        self.blocking
            .iter()
            .filter_map(|e| e.half_width)
            .reduce(f64::max)
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if b > 0.0 {
        a / b
    } else {
        0.0
    }
}

/// Everything a replicated simulation needs.
#[derive(Clone, Copy, Debug)]
pub struct RunSpec<'a> {
    pub model: &'a CompatModel,
    pub routing: Routing<'a>,
    /// Needed by balanced fairness; also used to index occupancy when present.
    pub tables: Option<&'a BalanceTables>,
    pub config: SimConfig,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn run_streams(spec: &RunSpec<'_>, runs: usize) -> Result<SimEstimate> {
    let space = engine::prepare(spec.model, spec.routing, spec.tables, &spec.config)?;
    let space = space.as_deref();
    let outcomes: Vec<RunOutcome> = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_for(spec.config.seed, r);
            engine::run_once(spec.model, spec.routing, spec.tables, space, &spec.config, &mut rng)
        })
        .collect();
    Ok(SimEstimate::from_runs(spec.model, outcomes, spec.config.seed))
}

/// Independent runs on streams `0..runs` of the master seed.
pub fn replicate(spec: &RunSpec<'_>, runs: usize) -> Result<SimEstimate> {
    if runs < 2 {
        return Err(Error::InvalidProtocol(format!(
            "{runs} run(s) give no variance estimate; use at least 2"
        )));
    }
    run_streams(spec, runs)
}

/// One run on stream 0 of the seed; the estimate has no half-width.
pub fn run_single(spec: &RunSpec<'_>) -> Result<SimEstimate> {
    run_streams(spec, 1)
}

/// One run of the token bucket on stream 0 of the seed.
pub fn run_dynamic(
    model: &CompatModel,
    tables: Option<&BalanceTables>,
    config: SimConfig,
) -> Result<SimEstimate> {
    let spec = RunSpec {
        model,
        routing: Routing::Tokens,
        tables,
        config,
    };
    run_streams(&spec, 1)
}

/// One run of the randomized insensitive load balancing.
pub fn run_randomized(
    model: &CompatModel,
    tables: &BalanceTables,
    config: SimConfig,
) -> Result<SimEstimate> {
    let split = SplitTable::build(model, tables)?;
    let spec = RunSpec {
        model,
        routing: Routing::Randomized(&split),
        tables: Some(tables),
        config,
    };
    run_streams(&spec, 1)
}

/// One run of a static assignment.
pub fn run_static(
    model: &CompatModel,
    assignment: &AssignmentMatrix,
    tables: Option<&BalanceTables>,
    config: SimConfig,
) -> Result<SimEstimate> {
    let spec = RunSpec {
        model,
        routing: Routing::Static(assignment),
        tables,
        config,
    };
    run_streams(&spec, 1)
}
