use std::sync::OnceLock;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact::{
    best_static_assignment, ideal_and_bounds, performance_report, static_report,
    uniform_static_assignment, BalanceTables, PerfReport, StateSpace,
};
use crate::experiment::config::{ExperimentConfig, Policy};
use crate::model::CompatModel;
use crate::simulate::{replicate, run_single, Allocation, Routing, RunSpec, SimConfig, SplitTable};

/// Metrics of one policy at one load.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RowValues {
    pub beta: f64,
    pub eta: f64,
    /// Per-type blocking; absent for the ideal bound.
    pub blocking: Option<Vec<f64>>,
    /// Per-server idle probability; absent for the ideal bound.
    pub idle: Option<Vec<f64>>,
    /// Half-width of the average blocking estimate.
    pub ci_halfwidth: Option<f64>,
    pub runs: Option<usize>,
    pub seed: Option<u64>,
}

impl RowValues {
    fn exact(r: PerfReport) -> Self {
        RowValues {
            beta: r.beta,
            eta: r.eta,
            blocking: Some(r.blocking),
            idle: Some(r.idle),
            ci_halfwidth: None,
            runs: None,
            seed: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub policy: Policy,
    pub rho: f64,
    /// The metrics, or why this point could not be evaluated.
    pub result: std::result::Result<RowValues, String>,
}

/// Rows ordered by policy (as listed) then load (as listed).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepTable {
    pub num_types: usize,
    pub num_servers: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn failures(&self) -> impl Iterator<Item = (&SweepRow, &str)> {
        self.rows
            .iter()
            .filter_map(|r| r.result.as_ref().err().map(|e| (r, e.as_str())))
    }

    pub fn get(&self, policy: Policy, rho: f64) -> Option<&RowValues> {
        self.rows
            .iter()
            .find(|r| r.policy == policy && r.rho == rho)
            .and_then(|r| r.result.as_ref().ok())
    }
}

/// Shared state of a sweep: the nominal model and its balance tables, built on first use.
struct Context<'a> {
    cfg: &'a ExperimentConfig,
    model: CompatModel,
    tables: OnceLock<std::result::Result<BalanceTables, String>>,
}

impl Context<'_> {
    fn tables(&self) -> Result<&BalanceTables, String> {
        self.tables
            .get_or_init(|| BalanceTables::build(&self.model).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(Clone::clone)
    }

    fn evaluate(&self, policy: Policy, rho: f64) -> Result<RowValues, String> {
        let factor = rho / self.model.load();
        let model = self.model.with_arrival_scale(factor);
        let err = |e: Error| e.to_string();
        match policy {
            Policy::ExactDynamic => {
                let tables = self.tables()?.rescale_arrivals(factor);
                performance_report(&model, &tables).map(RowValues::exact).map_err(err)
            }
            Policy::StaticBest | Policy::StaticUniform | Policy::StaticCustom => {
                let a = match policy {
                    Policy::StaticBest => best_static_assignment(&model),
                    Policy::StaticUniform => uniform_static_assignment(&model),
                    _ => self
                        .cfg
                        .custom()
                        .ok_or_else(|| "static-custom needs a custom_assignment".to_string())?,
                };
                static_report(&model, &a, StateSpace::DEFAULT_CAP)
                    .map(RowValues::exact)
                    .map_err(err)
            }
            Policy::Ideal => {
                let b = ideal_and_bounds(&model);
                Ok(RowValues {
                    beta: b.blocking,
                    eta: b.eta(),
                    blocking: None,
                    idle: None,
                    ci_halfwidth: None,
                    runs: None,
                    seed: None,
                })
            }
            Policy::DynamicFcfs => self.simulate(&model, Routing::Tokens, None, Allocation::Fcfs),
            Policy::DynamicBf => {
                let tables = self.tables()?.rescale_arrivals(factor);
                self.simulate(&model, Routing::Tokens, Some(&tables), Allocation::BalancedFairness)
            }
            Policy::Randomized => {
                let tables = self.tables()?.rescale_arrivals(factor);
                let split = SplitTable::build(&model, &tables).map_err(err)?;
                self.simulate(
                    &model,
                    Routing::Randomized(&split),
                    Some(&tables),
                    Allocation::BalancedFairness,
                )
            }
        }
    }

    fn simulate(
        &self,
        model: &CompatModel,
        routing: Routing<'_>,
        tables: Option<&BalanceTables>,
        allocation: Allocation,
    ) -> Result<RowValues, String> {
        let s = &self.cfg.simulation;
        let spec = RunSpec {
            model,
            routing,
            tables,
            config: SimConfig::new(
                allocation,
                s.warmup_events + s.measured_events,
                s.warmup_events,
                s.seed,
            ),
        };
        let est = if s.runs >= 2 {
            replicate(&spec, s.runs)
        } else {
            run_single(&spec)
        }
        .map_err(|e| e.to_string())?;
        Ok(RowValues {
            beta: est.beta.mean,
            eta: est.eta.mean,
            blocking: Some(est.blocking.iter().map(|e| e.mean).collect()),
            idle: Some(est.idle.iter().map(|e| e.mean).collect()),
            ci_halfwidth: est.beta.half_width,
            runs: Some(est.runs),
            seed: Some(est.seed),
        })
    }
}

/// Evaluates every policy at every load of the grid.
///
/// A point that cannot be evaluated (state space above the cap, say) becomes
/// an error row and the sweep goes on. Points run in parallel; the table
/// keeps the configured order.
pub fn sweep(cfg: &ExperimentConfig) -> Result<SweepTable> {
    let model = cfg.model()?;
    let ctx = Context {
        cfg,
        model,
        tables: OnceLock::new(),
    };
    let points: Vec<(Policy, f64)> = cfg
        .policies
        .iter()
        .flat_map(|&p| cfg.rho_grid.iter().map(move |&r| (p, r)))
        .collect();
    let rows = points
        .par_iter()
        .map(|&(policy, rho)| SweepRow {
            policy,
            rho,
            result: ctx.evaluate(policy, rho),
        })
        .collect();
    Ok(SweepTable {
        num_types: ctx.model.num_types(),
        num_servers: ctx.model.num_servers(),
        rows,
    })
}
