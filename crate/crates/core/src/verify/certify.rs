use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::exact::{stationary_distribution, BalanceTables};
use crate::model::{BitIter, ClassSubset, CompatModel, JobClass, JobType};
use crate::numeric::CompensatedSum;
use crate::simulate::{seize_rates, service_rates_fcfs, DetailedState};
use crate::verify::generator::Generator;

/// `ln Phi(c) = -sum_p ln mu(I(c_1..c_p))` and `ln Lambda(t)` likewise with `nu`.
pub fn sequence_ln_weights(model: &CompatModel, s: &DetailedState) -> (f64, f64) {
    let ln_phi = -prefix_logs(&s.c, |set| model.mu_of(set));
    let ln_lambda = -prefix_logs(&s.t, |set| model.nu_of(set));
    (ln_phi, ln_lambda)
}

fn prefix_logs(seq: &[usize], f: impl Fn(ClassSubset) -> f64) -> f64 {
    let mut set = ClassSubset::EMPTY;
    seq.iter()
        .map(|&i| {
            set = set.with(i);
            f(set).ln()
        })
        .sum()
}

fn counts(seq: &[usize], n: usize) -> Vec<u32> {
    let mut v = vec![0; n];
    for &i in seq {
        v[i] += 1;
    }
    v
}

/// Normalized `exp(w_i - max w)`.
fn normalize_logs(logs: &[f64]) -> Vec<f64> {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
    let total: f64 = w.iter().copied().collect::<CompensatedSum>().value();
    w.into_iter().map(|v| v / total).collect()
}

/// Agreement between the solved chain, the product form and the aggregate engine.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProductFormCheck {
    /// Total variation between the solved law and normalized `Phi(c) Lambda(t)`.
    pub tv: f64,
    /// Largest `|sum_{|c| = x} pi(c, t) - pi(x)|` against the aggregate engine.
    pub aggregate_gap: f64,
    /// Largest relative gap between `sum_{|c| = x} Phi(c)` and `Phi(x)`.
    pub phi_sum_gap: f64,
    /// Largest relative gap between `sum_{|t| = y} Lambda(t)` and `Lambda(y)`.
    pub lambda_sum_gap: f64,
}

impl ProductFormCheck {
    pub fn max_deviation(&self) -> f64 {
        self.tv
            .max(self.aggregate_gap)
            .max(self.phi_sum_gap)
            .max(self.lambda_sum_gap)
    }
}

pub fn compare_product_form(
    gen: &Generator,
    pi: &[f64],
    model: &CompatModel,
    tables: &BalanceTables,
) -> Result<ProductFormCheck> {
    tables.check_model(model)?;
    let n = model.num_classes();
    let space = tables.space();
    let weights: Vec<(f64, f64)> = gen
        .states()
        .iter()
        .map(|s| sequence_ln_weights(model, s))
        .collect();
    let product = normalize_logs(&weights.iter().map(|(a, b)| a + b).collect::<Vec<_>>());
    let tv = 0.5
        * pi
            .iter()
            .zip(&product)
            .map(|(a, b)| (a - b).abs())
            .collect::<CompensatedSum>()
            .value();

    let exact = stationary_distribution(tables).pi;
    let mut agg = vec![CompensatedSum::default(); space.size()];
    for (s, &p) in gen.states().iter().zip(pi) {
        agg[space.index(&counts(&s.c, n))].add(p);
    }
    let aggregate_gap = agg
        .iter()
        .zip(&exact)
        .map(|(a, e)| (a.value() - e).abs())
        .fold(0.0, f64::max);

    // Each distinct sequence counted once.
    let cs: BTreeSet<&[usize]> = gen.states().iter().map(|s| s.c.as_slice()).collect();
    let ts: BTreeSet<&[usize]> = gen.states().iter().map(|s| s.t.as_slice()).collect();
    let phi_sum_gap = aggregation_gap(
        cs,
        |c| -prefix_logs(c, |set| model.mu_of(set)),
        |idx, level| tables.phi.ln_value(idx, level),
        space,
        n,
    );
    let lambda_sum_gap = aggregation_gap(
        ts,
        |t| -prefix_logs(t, |set| model.nu_of(set)),
        |idx, level| tables.lambda.ln_value(idx, level),
        space,
        n,
    );
    Ok(ProductFormCheck {
        tv,
        aggregate_gap,
        phi_sum_gap,
        lambda_sum_gap,
    })
}

fn aggregation_gap(
    seqs: BTreeSet<&[usize]>,
    ln_seq: impl Fn(&[usize]) -> f64,
    ln_agg: impl Fn(usize, u32) -> f64,
    space: &crate::exact::StateSpace,
    n: usize,
) -> f64 {
    let mut sums: BTreeMap<usize, (u32, CompensatedSum)> = BTreeMap::new();
    for s in seqs {
        let idx = space.index(&counts(s, n));
        let entry = sums
            .entry(idx)
            .or_insert_with(|| (s.len() as u32, CompensatedSum::default()));
        // relative to the aggregate value, so large budgets stay in range
        entry.1.add((ln_seq(s) - ln_agg(idx, s.len() as u32)).exp());
    }
    sums.values()
        .map(|(_, sum)| (sum.value() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Largest absolute residuals of the per-class rate identities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateResiduals {
    /// `|phi_i(x) - sum_{|c| = x} Phi(c) / Phi(x) mu_i(c)|`.
    pub service: f64,
    /// `|lambda_i(y) - sum_{|t| = y} Lambda(t) / Lambda(y) nu_i(t)|`.
    pub arrival: f64,
    /// Same as `service`, with the weights taken from the solved chain.
    pub solved_service: f64,
    /// Same as `arrival`, with the weights taken from the solved chain.
    pub solved_arrival: f64,
}

impl RateResiduals {
    pub fn max(&self) -> f64 {
        self.service
            .max(self.arrival)
            .max(self.solved_service)
            .max(self.solved_arrival)
    }
}

/// Accumulates, per aggregate state, weighted first-token rate sums of one queue.
struct RateAverages {
    weight: Vec<CompensatedSum>,
    rate: Vec<Vec<CompensatedSum>>,
}

impl RateAverages {
    fn new(size: usize, n: usize) -> Self {
        RateAverages {
            weight: vec![CompensatedSum::default(); size],
            rate: vec![vec![CompensatedSum::default(); n]; size],
        }
    }

    fn add(&mut self, idx: usize, w: f64, seq: &[usize], position_rates: &[f64]) {
        self.weight[idx].add(w);
        for (&i, &r) in seq.iter().zip(position_rates) {
            self.rate[idx][i].add(w * r);
        }
    }

    /// Largest `|average - expected|` over states with weight.
    fn gap(&self, expected: impl Fn(usize) -> Vec<(usize, f64)>) -> f64 {
        let mut worst = 0.0f64;
        for idx in 0..self.weight.len() {
            let w = self.weight[idx].value();
            if w <= 0.0 {
                continue;
            }
            for (i, e) in expected(idx) {
                worst = worst.max((self.rate[idx][i].value() / w - e).abs());
            }
        }
        worst
    }
}

pub fn check_rate_identities(
    gen: &Generator,
    pi: &[f64],
    model: &CompatModel,
    tables: &BalanceTables,
) -> Result<RateResiduals> {
    tables.check_model(model)?;
    let n = model.num_classes();
    let space = tables.space();
    let size = space.size();

    let mut seq_service = RateAverages::new(size, n);
    let cs: BTreeSet<&[usize]> = gen.states().iter().map(|s| s.c.as_slice()).collect();
    for c in cs {
        let idx = space.index(&counts(c, n));
        let w = (-prefix_logs(c, |set| model.mu_of(set)) - tables.phi.ln_value(idx, c.len() as u32)).exp();
        seq_service.add(idx, w, c, &service_rates_fcfs(model, c));
    }
    let mut seq_arrival = RateAverages::new(size, n);
    let ts: BTreeSet<&[usize]> = gen.states().iter().map(|s| s.t.as_slice()).collect();
    for t in ts {
        let idx = space.index(&counts(t, n));
        let w = (-prefix_logs(t, |set| model.nu_of(set)) - tables.lambda.ln_value(idx, t.len() as u32)).exp();
        seq_arrival.add(idx, w, t, &seize_rates(model, t));
    }

    let mut solved_service = RateAverages::new(size, n);
    let mut solved_arrival = RateAverages::new(size, n);
    for (s, &p) in gen.states().iter().zip(pi) {
        let x = space.index(&counts(&s.c, n));
        solved_service.add(x, p, &s.c, &service_rates_fcfs(model, &s.c));
        solved_arrival.add(space.complement(x), p, &s.t, &seize_rates(model, &s.t));
    }

    let phi = |idx| tables.service_rates_at(idx);
    let lambda = |idx| tables.arrival_rates_at(idx);
    Ok(RateResiduals {
        service: seq_service.gap(phi),
        arrival: seq_arrival.gap(lambda),
        solved_service: solved_service.gap(phi),
        solved_arrival: solved_arrival.gap(lambda),
    })
}

/// Rate at which a token of class `later`, queued right behind one of class
/// `earlier`, leaves its queue first: the larger of the rates in service and
/// in the bucket, with all other tokens waiting in the other queue.
pub fn overtake_rate(gen: &Generator, model: &CompatModel, later: usize, earlier: usize) -> f64 {
    let tokens = model.tokens();
    if later == earlier || tokens[later] == 0 || tokens[earlier] == 0 {
        return 0.0;
    }
    let mut rest: Vec<usize> = Vec::new();
    for (i, &l) in tokens.iter().enumerate() {
        let skip = u32::from(i == later) + u32::from(i == earlier);
        rest.extend(std::iter::repeat_n(i, (l - skip) as usize));
    }
    let with = |mut v: Vec<usize>, i: usize| {
        v.push(i);
        v
    };
    let in_service = gen.rate_between(
        &DetailedState::new(vec![earlier, later], rest.clone()),
        &DetailedState::new(vec![earlier], with(rest.clone(), later)),
    );
    let in_bucket = gen.rate_between(
        &DetailedState::new(rest.clone(), vec![earlier, later]),
        &DetailedState::new(with(rest, later), vec![earlier]),
    );
    in_service.max(in_bucket)
}

/// For every pair of positions `q < p` of `order`, the rate at which class
/// `order[p]` overtakes class `order[q]`.
pub fn ordering_overtakes(
    gen: &Generator,
    model: &CompatModel,
    order: &[usize],
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for p in 0..order.len() {
        for q in 0..p {
            out.push((order[p], order[q], overtake_rate(gen, model, order[p], order[q])));
        }
    }
    out
}

/// A random valid separable model with at most `max_classes` classes, three
/// servers and three types, total budget at most `max_tokens`, and rates
/// and capacities uniform in `[0.5, 2]`.
pub fn random_separable_model<R: Rng + ?Sized>(
    rng: &mut R,
    max_classes: usize,
    max_tokens: u32,
) -> CompatModel {
    loop {
        let ns = rng.random_range(1..=3usize);
        let nk = rng.random_range(1..=3usize);
        let nc = rng.random_range(1..=max_classes.max(1));
        let caps: Vec<f64> = (0..ns).map(|_| rng.random_range(0.5..=2.0)).collect();
        let types: Vec<JobType> = (0..nk).map(|_| JobType::new(rng.random_range(0.5..=2.0))).collect();
        let budget = rng.random_range(nc as u32..=max_tokens.max(nc as u32));
        let mut tokens = vec![1u32; nc];
        for _ in nc as u32..budget {
            tokens[rng.random_range(0..nc)] += 1;
        }
        let classes: Vec<JobClass> = (0..nc)
            .map(|i| {
                let servers: Vec<usize> = BitIter(rng.random_range(1..1u64 << ns)).collect();
                let tys: Vec<usize> = BitIter(rng.random_range(1..1u64 << nk)).collect();
                JobClass::new(&servers, &tys, tokens[i])
            })
            .collect();
        let Ok(model) = CompatModel::new(caps, types, classes) else {
            continue;
        };
        if model.validate().errors.is_empty() && model.is_separable() {
            return model;
        }
    }
}
