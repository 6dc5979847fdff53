use petgraph::algo::ford_fulkerson;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::model::CompatModel;

/// Lower bounds on blocking that any stable pool must respect.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdealBounds {
    /// Lowest average blocking compatible with the compatibility graph:
    /// one minus the max flow from types to servers over the total arrival rate.
    pub blocking: f64,
    /// `max(0, 1 - 1/rho)`, the bound from total capacity alone.
    pub capacity_blocking: f64,
    /// Per-type bound `max(0, 1 - mu(servers reachable by k) / nu_k)`.
    pub per_type: Vec<f64>,
    pub rho: f64,
}

impl IdealBounds {
    pub fn eta(&self) -> f64 {
        self.rho * (1.0 - self.blocking)
    }
}

pub fn ideal_blocking(rho: f64) -> f64 {
    (1.0 - 1.0 / rho).max(0.0)
}

/// Largest total throughput: types feed the servers reachable through their classes.
pub fn max_throughput(model: &CompatModel) -> f64 {
    let mut g = DiGraph::<(), f64>::new();
    let source = g.add_node(());
    let sink = g.add_node(());
    let types: Vec<_> = (0..model.num_types()).map(|_| g.add_node(())).collect();
    let servers: Vec<_> = (0..model.num_servers()).map(|_| g.add_node(())).collect();
    let unbounded = model.total_arrival_rate() + model.total_capacity();
    for (k, &node) in types.iter().enumerate() {
        g.add_edge(source, node, model.types()[k].rate);
        let reach = model.servers_of(model.compatible_classes(k));
        for (s, &sn) in servers.iter().enumerate() {
            if reach & (1 << s) != 0 {
                g.add_edge(node, sn, unbounded);
            }
        }
    }
    for (s, &node) in servers.iter().enumerate() {
        g.add_edge(node, sink, model.capacities()[s]);
    }
    ford_fulkerson(&g, source, sink).0
}

pub fn ideal_and_bounds(model: &CompatModel) -> IdealBounds {
    let total = model.total_arrival_rate();
    let flow = max_throughput(model).min(total);
    let per_type = (0..model.num_types())
        .map(|k| {
            let reach = model.servers_of(model.compatible_classes(k));
            let cap = model.capacity_of_servers(reach);
            (1.0 - cap / model.types()[k].rate).max(0.0)
        })
        .collect();
    IdealBounds {
        blocking: (1.0 - flow / total).max(0.0),
        capacity_blocking: ideal_blocking(model.load()),
        per_type,
        rho: model.load(),
    }
}
