use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact::{AssignmentMatrix, BalanceTables, StateSpace};
use crate::model::{BitIter, ClassSubset, CompatModel};
use crate::simulate::rates::first_compatible;
use crate::simulate::randomized::SplitTable;

/// How servers are shared between the jobs in service.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Allocation {
    /// Each server serves the oldest job of a class it belongs to.
    Fcfs,
    /// Class `i` gets `phi_i(x)`, shared equally by its jobs.
    BalancedFairness,
}

/// How an arrival is assigned to a class.
#[derive(Clone, Copy, Debug)]
pub enum Routing<'a> {
    /// Seize the first compatible token of the bucket.
    Tokens,
    /// Randomized insensitive load balancing.
    Randomized(&'a SplitTable),
    /// State-independent assignment; blocked if the drawn class is full.
    Static(&'a AssignmentMatrix),
}

/// Event-count protocol of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub allocation: Allocation,
    /// Total number of events, warm-up included.
    pub horizon_events: u64,
    pub warmup_events: u64,
    pub seed: u64,
    /// Record the time spent in each aggregate state.
    #[serde(default)]
    pub track_occupancy: bool,
}

impl SimConfig {
    pub fn new(allocation: Allocation, horizon_events: u64, warmup_events: u64, seed: u64) -> Self {
        SimConfig {
            allocation,
            horizon_events,
            warmup_events,
            seed,
            track_occupancy: false,
        }
    }

    pub fn with_occupancy(mut self) -> Self {
        self.track_occupancy = true;
        self
    }
}

/// A job in the system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimJob {
    pub class: usize,
    /// Work left, in capacity-time units.
    pub remaining: f64,
    pub ty: usize,
}

/// Raw counters of one run, over the measured window.
#[derive(Clone, Debug, Default)]
pub(crate) struct RunOutcome {
    pub arrivals: Vec<u64>,
    pub blocked: Vec<u64>,
    pub idle_time: Vec<f64>,
    pub time: f64,
    pub events: u64,
    pub occupancy: Option<Vec<f64>>,
}

/// Checks the protocol and the inputs it needs; returns the state space used for indexing, if any.
pub(crate) fn prepare<'t>(
    model: &CompatModel,
    routing: Routing<'_>,
    tables: Option<&'t BalanceTables>,
    cfg: &SimConfig,
) -> Result<Option<std::borrow::Cow<'t, StateSpace>>> {
    if cfg.horizon_events <= cfg.warmup_events {
        return Err(Error::InvalidProtocol(format!(
            "horizon of {} events does not exceed the warm-up of {}",
            cfg.horizon_events, cfg.warmup_events
        )));
    }
    if let Some(t) = tables {
        t.check_model(model)?;
    }
    if cfg.allocation == Allocation::BalancedFairness && tables.is_none() {
        return Err(Error::MissingTables);
    }
    match routing {
        Routing::Tokens => {}
        Routing::Randomized(split) => {
            if split.space().bounds() != model.tokens().as_slice() {
                return Err(Error::InvalidModel(
                    "split table was built for different token budgets".into(),
                ));
            }
        }
        Routing::Static(a) => a.check(model)?,
    }
    let needs_space = cfg.track_occupancy
        || cfg.allocation == Allocation::BalancedFairness
        || matches!(routing, Routing::Randomized(_));
    if !needs_space {
        return Ok(None);
    }
    Ok(Some(match (tables, routing) {
        (Some(t), _) => std::borrow::Cow::Borrowed(t.space()),
        (None, Routing::Randomized(split)) => std::borrow::Cow::Owned(split.space().clone()),
        (None, _) => std::borrow::Cow::Owned(StateSpace::new(&model.tokens())?),
    }))
}

/// One run of the event loop.
pub(crate) fn run_once<R: Rng>(
    model: &CompatModel,
    routing: Routing<'_>,
    tables: Option<&BalanceTables>,
    space: Option<&StateSpace>,
    cfg: &SimConfig,
    rng: &mut R,
) -> RunOutcome {
    let nk = model.num_types();
    let nc = model.num_classes();
    let ns = model.num_servers();
    let tokens = model.tokens();
    let rates = model.arrival_rates();
    let total_rate: f64 = rates.iter().sum();
    let arrival_clock = (total_rate > 0.0).then(|| Exp::new(total_rate).expect("positive rate"));
    let type_pick = Picker::new(&rates);
    let static_rows: Vec<Picker> = match routing {
        Routing::Static(a) => a.rows().iter().map(|r| Picker::new(r)).collect(),
        _ => Vec::new(),
    };

    let mut out = RunOutcome {
        arrivals: vec![0; nk],
        blocked: vec![0; nk],
        idle_time: vec![0.0; ns],
        occupancy: cfg
            .track_occupancy
            .then(|| vec![0.0; space.map_or(0, StateSpace::size)]),
        ..RunOutcome::default()
    };

    let mut jobs: Vec<SimJob> = Vec::with_capacity(model.total_tokens() as usize);
    let mut rate = Vec::with_capacity(jobs.capacity());
    let mut class_rate = vec![0.0; nc];
    let mut x = vec![0u32; nc];
    let mut x_idx = 0usize;
    let mut level = 0u32;
    let mut bucket: Vec<usize> = (0..nc)
        .flat_map(|i| std::iter::repeat_n(i, tokens[i] as usize))
        .collect();

    let mut now = 0.0f64;
    let mut next_arrival = arrival_clock
        .as_ref()
        .map_or(f64::INFINITY, |d| d.sample(rng));
    let mut events = 0u64;

    while events < cfg.horizon_events {
        rate.clear();
        let mut active = 0u64;
        for (i, &n) in x.iter().enumerate() {
            if n > 0 {
                active |= 1 << i;
            }
        }
        match cfg.allocation {
            Allocation::Fcfs => {
                let mut covered = 0u64;
                for job in &jobs {
                    let fresh = model.server_mask(job.class) & !covered;
                    covered |= fresh;
                    rate.push(BitIter(fresh).map(|s| model.capacities()[s]).sum::<f64>());
                }
            }
            Allocation::BalancedFairness => {
                let (tables, space) = (tables.expect("checked"), space.expect("checked"));
                for i in BitIter(active) {
                    let phi = tables.phi.ratio(x_idx, x_idx - space.stride(i), level);
                    class_rate[i] = phi / x[i] as f64;
                }
                rate.extend(jobs.iter().map(|j| class_rate[j.class]));
            }
        }

        let mut completion: Option<(usize, f64)> = None;
        for (p, (job, &r)) in jobs.iter().zip(&rate).enumerate() {
            if r > 0.0 {
                let dt = job.remaining / r;
                if completion.is_none_or(|(_, best)| dt < best) {
                    completion = Some((p, dt));
                }
            }
        }
        let dt_arrival = next_arrival - now;
        let (dt, finishing) = match completion {
            Some((p, dt)) if dt <= dt_arrival => (dt, Some(p)),
            _ if next_arrival.is_finite() => (dt_arrival, None),
            _ => break,
        };

        let measuring = events >= cfg.warmup_events;
        if measuring {
            out.time += dt;
            let busy = model.servers_of(ClassSubset::from_bits(active));
            for (s, t) in out.idle_time.iter_mut().enumerate() {
                if busy & (1 << s) == 0 {
                    *t += dt;
                }
            }
            if let Some(occ) = out.occupancy.as_mut() {
                occ[x_idx] += dt;
            }
        }
        for (job, &r) in jobs.iter_mut().zip(&rate) {
            job.remaining = (job.remaining - r * dt).max(0.0);
        }
        now += dt;

        match finishing {
            Some(p) => {
                let job = jobs.remove(p);
                x[job.class] -= 1;
                level -= 1;
                if let Some(sp) = space {
                    x_idx -= sp.stride(job.class);
                }
                bucket.push(job.class);
            }
            None => {
                let k = type_pick.pick(rng).expect("arrivals occur");
                if measuring {
                    out.arrivals[k] += 1;
                }
                let class = match routing {
                    Routing::Tokens => first_compatible(model, &bucket, k).map(|p| bucket.remove(p)),
                    Routing::Randomized(split) => {
                        let y_idx = space.expect("checked").complement(x_idx);
                        draw(split.split(y_idx, k), rng)
                    }
                    Routing::Static(_) => static_rows[k].pick(rng).filter(|&i| x[i] < tokens[i]),
                };
                match class {
                    Some(i) => {
                        if !matches!(routing, Routing::Tokens) {
                            let p = bucket.iter().position(|&c| c == i).expect("token available");
                            bucket.remove(p);
                        }
                        x[i] += 1;
                        level += 1;
                        if let Some(sp) = space {
                            x_idx += sp.stride(i);
                        }
                        jobs.push(SimJob {
                            class: i,
                            remaining: model.types()[k].size.sample(rng),
                            ty: k,
                        });
                    }
                    None => {
                        if measuring {
                            out.blocked[k] += 1;
                        }
                    }
                }
                next_arrival = now + arrival_clock.as_ref().expect("arrivals occur").sample(rng);
            }
        }
        debug_assert!((0..nc).all(|i| x[i] + bucket.iter().filter(|&&c| c == i).count() as u32 == tokens[i]));
        events += 1;
    }
    out.events = events.saturating_sub(cfg.warmup_events);
    out
}

/// Draws an index with fixed weights; a single candidate uses no randomness.
enum Picker {
    Never,
    Always(usize),
    Weighted(WeightedIndex<f64>),
}

impl Picker {
    fn new(weights: &[f64]) -> Self {
        let support: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
        match support.as_slice() {
            [] => Picker::Never,
            [i] => Picker::Always(*i),
            _ => Picker::Weighted(WeightedIndex::new(weights).expect("nonnegative weights")),
        }
    }

    fn pick<R: Rng>(&self, rng: &mut R) -> Option<usize> {
        match self {
            Picker::Never => None,
            Picker::Always(i) => Some(*i),
            Picker::Weighted(w) => Some(w.sample(rng)),
        }
    }
}

/// Index drawn with the given probabilities, or `None` if they are all zero.
fn draw<R: Rng>(p: &[f64], rng: &mut R) -> Option<usize> {
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &w) in p.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = Some(i);
            if u < acc {
                return last;
            }
        }
    }
    last
}
