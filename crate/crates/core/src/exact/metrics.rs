use serde::Serialize;

use crate::error::Result;
use crate::exact::space::StateSpace;
use crate::exact::tables::{stationary_distribution, BalanceTables};
use crate::model::CompatModel;
use crate::numeric::CompensatedSum;

/// Blocking and occupancy metrics of one policy at one load.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PerfReport {
    /// Blocking probability of each type.
    pub blocking: Vec<f64>,
    /// Idle probability of each server.
    pub idle: Vec<f64>,
    /// Arrival-weighted average blocking probability.
    pub beta: f64,
    /// Capacity-weighted resource occupancy.
    pub eta: f64,
    /// Total load.
    pub rho: f64,
    /// Natural log of the normalization constant, when one exists.
    pub ln_g: Option<f64>,
}

impl PerfReport {
    pub(crate) fn from_marginals(model: &CompatModel, m: Marginals, ln_g: Option<f64>) -> Self {
        let Marginals {
            blocking,
            idle,
            busy,
        } = m;
        let rates = model.arrival_rates();
        let caps = model.capacities();
        let total_rate = model.total_arrival_rate();
        let total_cap = model.total_capacity();
        let beta = rates
            .iter()
            .zip(&blocking)
            .map(|(nu, b)| nu * b)
            .collect::<CompensatedSum>()
            .value()
            / total_rate;
        let eta = caps
            .iter()
            .zip(&busy)
            .map(|(mu, b)| mu * b)
            .collect::<CompensatedSum>()
            .value()
            / total_cap;
        PerfReport {
            blocking,
            idle,
            beta,
            eta,
            rho: total_rate / total_cap,
            ln_g,
        }
    }

    pub fn g(&self) -> Option<f64> {
        self.ln_g.map(f64::exp)
    }

    /// `|rho (1 - beta) - eta|`, relative to `max(eta, 1)`.
    pub fn conservation_gap(&self) -> f64 {
        crate::numeric::relative_gap(self.rho * (1.0 - self.beta), self.eta)
    }
}

pub(crate) struct Marginals {
    pub blocking: Vec<f64>,
    pub idle: Vec<f64>,
    /// `1 - idle`, accumulated directly so light traffic keeps its precision.
    pub busy: Vec<f64>,
}

/// Blocking of type `k` and idleness of server `s` accumulated from an aggregate distribution.
pub(crate) fn marginals(model: &CompatModel, space: &StateSpace, pi: &[f64]) -> Marginals {
    let type_sets: Vec<_> = (0..model.num_types()).map(|k| model.compatible_classes(k)).collect();
    let server_sets: Vec<_> = (0..model.num_servers()).map(|s| model.classes_on_server(s)).collect();
    let mut blocked = vec![CompensatedSum::default(); type_sets.len()];
    let mut idle = vec![CompensatedSum::default(); server_sets.len()];
    let mut busy = vec![CompensatedSum::default(); server_sets.len()];
    for (idx, &p) in pi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (active, full) = space.masks(idx);
        for (acc, set) in blocked.iter_mut().zip(&type_sets) {
            if set.is_subset(full) {
                acc.add(p);
            }
        }
        for (s, set) in server_sets.iter().enumerate() {
            if set.intersection(active).is_empty() {
                idle[s].add(p);
            } else {
                busy[s].add(p);
            }
        }
    }
    let values = |v: Vec<CompensatedSum>| v.iter().map(|a| a.value()).collect();
    Marginals {
        blocking: values(blocked),
        idle: values(idle),
        busy: values(busy),
    }
}

/// Exact metrics of the token-based (or randomized) insensitive load balancing with balanced fairness.
pub fn performance_report(model: &CompatModel, tables: &BalanceTables) -> Result<PerfReport> {
    tables.check_model(model)?;
    let st = stationary_distribution(tables);
    let m = marginals(model, tables.space(), &st.pi);
    Ok(PerfReport::from_marginals(model, m, Some(st.ln_g)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn toy_report() {
        let m = presets::toy([1, 1]);
        let r = performance_report(&m, &BalanceTables::build(&m).unwrap()).unwrap();
        close(r.blocking[0], 2.0 / 11.0);
        close(r.blocking[1], 5.0 / 11.0);
        close(r.beta, 7.0 / 22.0);
        close(r.idle[0], 15.0 / 22.0);
        close(r.idle[1], 9.0 / 22.0);
        close(r.idle[2], 12.0 / 22.0);
        close(r.eta, 5.0 / 11.0);
        close(r.rho, 2.0 / 3.0);
        close(r.g().unwrap(), 11.0 / 6.0);
        assert!(r.conservation_gap() < 1e-15);
    }

    #[test]
    fn single_server_loss_queue() {
        let m = presets::single_type_pool(&[1.0], 2, 1.0);
        let r = performance_report(&m, &BalanceTables::build(&m).unwrap()).unwrap();
        close(r.beta, 1.0 / 3.0);
        close(r.eta, 2.0 / 3.0);
    }

    #[test]
    fn light_traffic() {
        let m = presets::toy([2, 2]).with_load(1e-9);
        let r = performance_report(&m, &BalanceTables::build(&m).unwrap()).unwrap();
        assert!(r.beta < 1e-15);
        assert!((r.eta - r.rho).abs() < 1e-12 * r.rho);
    }

    #[test]
    fn mismatched_tables_are_rejected() {
        let t = BalanceTables::build(&presets::toy([1, 1])).unwrap();
        assert!(performance_report(&presets::toy([2, 1]), &t).is_err());
    }
}
