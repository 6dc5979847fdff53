//! Static load balancing: state-independent assignment of types to classes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::metrics::{marginals, Marginals, PerfReport};
use crate::exact::space::StateSpace;
use crate::exact::tables::BalanceTables;
use crate::model::{CompatModel, JobClass, JobType};
use crate::numeric::CompensatedSum;

const ROW_TOLERANCE: f64 = 1e-9;

/// `p[k][i]`: probability that a type-`k` job is sent to class `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    rows: Vec<Vec<f64>>,
}

impl AssignmentMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        AssignmentMatrix { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn get(&self, k: usize, i: usize) -> f64 {
        self.rows[k][i]
    }

    /// Rows must sum to one over compatible classes (zero for a type with no class).
    pub fn check(&self, model: &CompatModel) -> Result<()> {
        if self.rows.len() != model.num_types() {
            return Err(Error::InvalidAssignment(format!(
                "{} rows for {} types",
                self.rows.len(),
                model.num_types()
            )));
        }
        for (k, row) in self.rows.iter().enumerate() {
            if row.len() != model.num_classes() {
                return Err(Error::InvalidAssignment(format!(
                    "row {k} has {} entries for {} classes",
                    row.len(),
                    model.num_classes()
                )));
            }
            let compatible = model.compatible_classes(k);
            for (i, &p) in row.iter().enumerate() {
                if !(p.is_finite() && p >= 0.0) {
                    return Err(Error::InvalidAssignment(format!("entry ({k},{i}) is {p}")));
                }
                if p > 0.0 && !compatible.contains(i) {
                    return Err(Error::InvalidAssignment(format!(
                        "type {k} cannot be assigned to class {i}"
                    )));
                }
            }
            let total: f64 = row.iter().sum();
            let expected = if compatible.is_empty() { 0.0 } else { 1.0 };
            if (total - expected).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidAssignment(format!(
                    "row {k} sums to {total}, expected {expected}"
                )));
            }
        }
        Ok(())
    }

    /// `lambda_i = sum_k nu_k p[k][i]`.
    pub fn class_rates(&self, model: &CompatModel) -> Vec<f64> {
        let rates = model.arrival_rates();
        (0..model.num_classes())
            .map(|i| {
                self.rows
                    .iter()
                    .zip(&rates)
                    .map(|(row, nu)| nu * row[i])
                    .collect::<CompensatedSum>()
                    .value()
            })
            .collect()
    }
}

/// Equal split of each type over its compatible classes.
pub fn uniform_static_assignment(model: &CompatModel) -> AssignmentMatrix {
    let rows = (0..model.num_types())
        .map(|k| {
            let set = model.compatible_classes(k);
            let share = 1.0 / set.len().max(1) as f64;
            (0..model.num_classes())
                .map(|i| if set.contains(i) { share } else { 0.0 })
                .collect()
        })
        .collect();
    AssignmentMatrix::new(rows)
}

/// Static assignment that spreads offered load as evenly as possible.
///
/// The offered load of class `i` is `lambda_i / mu(S_i)`. The class rates
/// minimize `sum_i lambda_i^2 / mu(S_i)`, whose minimizer is the
/// lexicographically optimal vector of offered loads, hence also the min-max
/// one. It is found by cyclic water-filling over types. Among the matrices
/// producing these class rates, the one of maximum entropy is returned
/// (iterative proportional fitting on the optimal support).
pub fn best_static_assignment(model: &CompatModel) -> AssignmentMatrix {
    let n = model.num_classes();
    let k_types = model.num_types();
    let rates = model.arrival_rates();
    let weights: Vec<f64> = (0..n)
        .map(|i| model.capacity_of_servers(model.server_mask(i)).max(f64::MIN_POSITIVE))
        .collect();
    let compat: Vec<Vec<usize>> = (0..k_types)
        .map(|k| model.compatible_classes(k).iter().collect())
        .collect();

    // flows[k][i] = nu_k p[k][i]
    let mut flows = vec![vec![0.0; n]; k_types];
    let mut class_rate = vec![0.0; n];
    let scale = model.total_arrival_rate().max(f64::MIN_POSITIVE);
    for _sweep in 0..100_000 {
        let mut moved = 0.0f64;
        for k in 0..k_types {
            if compat[k].is_empty() {
                continue;
            }
            for &i in &compat[k] {
                class_rate[i] -= flows[k][i];
            }
            let fill = water_fill(&compat[k], &class_rate, &weights, rates[k]);
            for (&i, f) in compat[k].iter().zip(fill) {
                moved = moved.max((f - flows[k][i]).abs());
                flows[k][i] = f;
                class_rate[i] += f;
            }
        }
        if moved <= 1e-15 * scale {
            break;
        }
    }

    // A type only uses the least loaded of its compatible classes at the optimum.
    let load: Vec<f64> = (0..n).map(|i| class_rate[i] / weights[i]).collect();
    let support: Vec<Vec<bool>> = (0..k_types)
        .map(|k| {
            let floor = compat[k].iter().map(|&i| load[i]).fold(f64::INFINITY, f64::min);
            (0..n)
                .map(|i| compat[k].contains(&i) && load[i] <= floor + 1e-9 * floor.max(1e-300))
                .collect()
        })
        .collect();
    let flows = max_entropy_fit(&support, &rates, &class_rate);

    let rows = flows
        .into_iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            if total > 0.0 {
                row.into_iter().map(|f| f / total).collect()
            } else {
                vec![0.0; n]
            }
        })
        .collect();
    AssignmentMatrix::new(rows)
}

/// Distributes `amount` over `classes` so that `(base_i + f_i) / w_i` is
/// levelled, the least loaded classes being filled first.
fn water_fill(classes: &[usize], base: &[f64], weights: &[f64], amount: f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..classes.len()).collect();
    let lvl = |j: usize| base[classes[j]].max(0.0) / weights[classes[j]];
    order.sort_by(|&a, &b| lvl(a).total_cmp(&lvl(b)));
    // Find the water level over the first m classes in load order.
    let mut sum_base = 0.0;
    let mut sum_w = 0.0;
    let mut level = 0.0;
    for (m, &j) in order.iter().enumerate() {
        let i = classes[j];
        sum_base += base[i].max(0.0);
        sum_w += weights[i];
        level = (amount + sum_base) / sum_w;
        let next = order.get(m + 1).map(|&j2| lvl(j2));
        if next.is_none_or(|v| level <= v) {
            break;
        }
    }
    classes
        .iter()
        .map(|&i| (level * weights[i] - base[i].max(0.0)).max(0.0))
        .collect()
}

/// Maximum-entropy nonnegative matrix on `support` with row sums `rows` and column sums `cols`.
fn max_entropy_fit(support: &[Vec<bool>], rows: &[f64], cols: &[f64]) -> Vec<Vec<f64>> {
    let k_types = support.len();
    let n = cols.len();
    let mut m: Vec<Vec<f64>> = support
        .iter()
        .map(|r| r.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect())
        .collect();
    for _ in 0..20_000 {
        for (k, row) in m.iter_mut().enumerate() {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                let f = rows[k] / s;
                row.iter_mut().for_each(|v| *v *= f);
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            let s: f64 = (0..k_types).map(|k| m[k][i]).sum();
            if s > 0.0 {
                worst = worst.max((s - cols[i]).abs() / cols[i].max(1e-300));
                let f = cols[i] / s;
                (0..k_types).for_each(|k| m[k][i] *= f);
            }
        }
        if worst < 1e-15 {
            break;
        }
    }
    m
}

/// Exact metrics of a static assignment with balanced fairness.
#[derive(Clone, Debug)]
pub struct StaticSolution {
    /// Aggregate stationary law, indexed like the state space.
    pub pi: Vec<f64>,
    /// `P(x_i = l_i)` per class.
    pub full: Vec<f64>,
    pub report: PerfReport,
}

/// `pi(x) ~ Phi(x) prod_i lambda_i^{x_i}`; type-`k` blocking is `sum_i p[k][i] P(x_i = l_i)`.
pub fn static_stationary(
    model: &CompatModel,
    tables: &BalanceTables,
    assignment: &AssignmentMatrix,
) -> Result<StaticSolution> {
    tables.check_model(model)?;
    assignment.check(model)?;
    let lambda = assignment.class_rates(model);
    let (pi, ln_g) = static_distribution(tables, &lambda);
    let space = tables.space();

    let mut full = vec![CompensatedSum::default(); model.num_classes()];
    for (idx, &p) in pi.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let (_, f) = space.masks(idx);
        for i in f.iter() {
            full[i].add(p);
        }
    }
    let full: Vec<f64> = full.iter().map(|a| a.value()).collect();
    let blocking = (0..model.num_types())
        .map(|k| {
            let fc = model.compatible_classes(k);
            if fc.is_empty() {
                return 1.0;
            }
            fc.iter()
                .map(|i| assignment.get(k, i) * full[i])
                .collect::<CompensatedSum>()
                .value()
        })
        .collect();
    let mut m = marginals(model, space, &pi);
    m.blocking = blocking;
    let report = PerfReport::from_marginals(model, m, Some(ln_g));
    Ok(StaticSolution { pi, full, report })
}

/// Classes grouped by shared servers: connected components of the class / server graph.
pub fn server_components(model: &CompatModel) -> Vec<Vec<usize>> {
    let n = model.num_classes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for a in 0..n {
        for b in a + 1..n {
            if model.server_mask(a) & model.server_mask(b) != 0 {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                parent[ra] = rb;
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = root(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

/// Exact metrics of a static assignment with balanced fairness, computed
/// component by component: classes that share no server evolve independently,
/// so only the largest component has to fit in `cap` states.
pub fn static_report(
    model: &CompatModel,
    assignment: &AssignmentMatrix,
    cap: usize,
) -> Result<PerfReport> {
    model.ensure_valid()?;
    assignment.check(model)?;
    let lambda = assignment.class_rates(model);
    let ns = model.num_servers();
    let mut full = vec![0.0; model.num_classes()];
    let mut idle = vec![1.0; ns];
    let mut busy = vec![0.0; ns];
    let mut ln_g = 0.0;
    for group in server_components(model) {
        let servers: Vec<usize> = crate::model::BitIter(
            group.iter().fold(0u64, |m, &i| m | model.server_mask(i)),
        )
        .collect();
        let local = |s: usize| servers.iter().position(|&t| t == s).expect("server of the group");
        let classes: Vec<JobClass> = group
            .iter()
            .map(|&i| {
                let c = &model.classes()[i];
                let srv: Vec<usize> = c.servers.iter().map(|&s| local(s)).collect();
                JobClass::new(&srv, &[0], c.tokens)
            })
            .collect();
        let caps = servers.iter().map(|&s| model.capacities()[s]).collect();
        let sub = CompatModel::new(caps, vec![JobType::new(1.0)], classes)?;
        let space = StateSpace::with_cap(&sub.tokens(), cap)?;
        let tables = BalanceTables::from_space(&sub, space);
        let rates: Vec<f64> = group.iter().map(|&i| lambda[i]).collect();
        let (pi, g) = static_distribution(&tables, &rates);
        ln_g += g;
        let m = marginals(&sub, tables.space(), &pi);
        let sp = tables.space();
        let mut f = vec![CompensatedSum::default(); group.len()];
        for (idx, &p) in pi.iter().enumerate() {
            if p > 0.0 {
                for j in sp.masks(idx).1.iter() {
                    f[j].add(p);
                }
            }
        }
        for (j, &i) in group.iter().enumerate() {
            full[i] = f[j].value();
        }
        for (j, &s) in servers.iter().enumerate() {
            idle[s] = m.idle[j];
            busy[s] = m.busy[j];
        }
    }
    let blocking = (0..model.num_types())
        .map(|k| {
            let fc = model.compatible_classes(k);
            if fc.is_empty() {
                return 1.0;
            }
            fc.iter()
                .map(|i| assignment.get(k, i) * full[i])
                .collect::<CompensatedSum>()
                .value()
        })
        .collect();
    Ok(PerfReport::from_marginals(
        model,
        Marginals {
            blocking,
            idle,
            busy,
        },
        Some(ln_g),
    ))
}

/// Normalized `Phi(x) prod_i lambda_i^{x_i}` and the log of its normalization.
/// Classes with zero rate stay empty.
pub fn static_distribution(tables: &BalanceTables, lambda: &[f64]) -> (Vec<f64>, f64) {
    let space = tables.space();
    let ln_rate: Vec<f64> = lambda.iter().map(|l| l.ln()).collect();
    let mut logw = vec![f64::NEG_INFINITY; space.size()];
    let mut digits = vec![0u32; space.num_classes()];
    let mut top = f64::NEG_INFINITY;
    for n in 0..=space.total() {
        for &idx in space.level(n) {
            let idx = idx as usize;
            space.decode_into(idx, &mut digits);
            let mut lw = tables.phi.ln_value(idx, n);
            for (i, &d) in digits.iter().enumerate() {
                if d > 0 {
                    lw += d as f64 * ln_rate[i];
                }
            }
            if !lw.is_nan() {
                logw[idx] = lw;
                top = top.max(lw);
            }
        }
    }
    let mut g = CompensatedSum::default();
    let mut pi: Vec<f64> = logw.iter().map(|&l| (l - top).exp()).collect();
    pi.iter().for_each(|&p| g.add(p));
    let g = g.value();
    pi.iter_mut().for_each(|p| *p /= g);
    (pi, g.ln() + top)
}
