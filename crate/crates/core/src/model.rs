//! Tripartite compatibility model: job types, job classes and servers.
//!
//! A job type `k` arrives as a Poisson stream of rate `nu_k` and may be
//! assigned to any class `i` whose type set contains `k`. A class `i` holds
//! `tokens_i` admission tokens and its jobs may be served by any server of
//! its server set. The two set functions of the model, the aggregate capacity
//! `mu(A)` and the aggregate arrival rate `nu(A)` of a set of classes `A`,
//! drive every exact recursion and simulated rate in the crate.
//!
//! Class, type and server sets are carried as 64-bit masks, so a model holds
//! at most 64 classes, 64 types and 64 servers.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_CLASSES: usize = 64;
pub const MAX_TYPES: usize = 64;
pub const MAX_SERVERS: usize = 64;

/// Class counts up to this bound get a dense memo table for the set functions.
const DENSE_SET_FUNCTION_LIMIT: usize = 20;

/// A subset of class indices, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ClassSubset(u64);

impl ClassSubset {
    pub const EMPTY: ClassSubset = ClassSubset(0);

    pub fn from_bits(bits: u64) -> Self {
        ClassSubset(bits)
    }

    /// All classes `0..n`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_CLASSES);
        if n == 64 {
            ClassSubset(u64::MAX)
        } else {
            ClassSubset((1u64 << n) - 1)
        }
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        indices.into_iter().fold(Self::EMPTY, |acc, i| acc.with(i))
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        i < 64 && self.0 & (1u64 << i) != 0
    }

    pub fn with(self, i: usize) -> Self {
        debug_assert!(i < MAX_CLASSES);
        ClassSubset(self.0 | (1u64 << i))
    }

    pub fn without(self, i: usize) -> Self {
        ClassSubset(self.0 & !(1u64 << i))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        ClassSubset(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        ClassSubset(self.0 & other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Checks that every index lies below `n`.
    pub fn fits(self, n: usize) -> bool {
        self.is_subset(Self::full(n))
    }

    pub fn iter(self) -> impl Iterator<Item = usize> {
        BitIter(self.0)
    }
}

impl fmt::Debug for ClassSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromIterator<usize> for ClassSubset {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::from_indices(iter)
    }
}

/// Iterates over the set bits of a mask, lowest first.
pub(crate) struct BitIter(pub(crate) u64);

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}

fn mask_of(indices: &[usize]) -> u64 {
    indices.iter().fold(0u64, |m, &i| m | (1u64 << i))
}

fn weighted_sum(mask: u64, weights: &[f64]) -> f64 {
    BitIter(mask).map(|s| weights[s]).sum()
}

/// One branch of a hyperexponential mixture.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub probability: f64,
    pub mean: f64,
}

/// Job size distribution of a type, in work units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SizeDistribution {
    Exponential { mean: f64 },
    Hyperexponential { branches: Vec<Branch> },
}

impl Default for SizeDistribution {
    fn default() -> Self {
        SizeDistribution::Exponential { mean: 1.0 }
    }
}

impl SizeDistribution {
    pub fn exponential(mean: f64) -> Self {
        SizeDistribution::Exponential { mean }
    }

    pub fn hyperexponential(branches: &[(f64, f64)]) -> Self {
        SizeDistribution::Hyperexponential {
            branches: branches
                .iter()
                .map(|&(probability, mean)| Branch { probability, mean })
                .collect(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            SizeDistribution::Exponential { mean } => *mean,
            SizeDistribution::Hyperexponential { branches } => {
                branches.iter().map(|b| b.probability * b.mean).sum()
            }
        }
    }

    pub fn check(&self) -> std::result::Result<(), String> {
        match self {
            SizeDistribution::Exponential { mean } => {
                if !(mean.is_finite() && *mean > 0.0) {
                    return Err(format!("exponential mean must be positive, got {mean}"));
                }
            }
            SizeDistribution::Hyperexponential { branches } => {
                if branches.is_empty() {
                    return Err("hyperexponential needs at least one branch".into());
                }
                for b in branches {
                    if !(b.mean.is_finite() && b.mean > 0.0) {
                        return Err(format!("branch mean must be positive, got {}", b.mean));
                    }
                    if !(b.probability.is_finite() && b.probability >= 0.0) {
                        return Err(format!(
                            "branch probability must be nonnegative, got {}",
                            b.probability
                        ));
                    }
                }
                let total: f64 = branches.iter().map(|b| b.probability).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(format!("branch probabilities sum to {total}, not 1"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mean = match self {
            SizeDistribution::Exponential { mean } => *mean,
            SizeDistribution::Hyperexponential { branches } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = branches[branches.len() - 1].mean;
                for b in branches {
                    acc += b.probability;
                    if u < acc {
                        chosen = b.mean;
                        break;
                    }
                }
                chosen
            }
        };
        // Exp::new only fails on a negative rate, excluded by `check`.
        Exp::new(1.0 / mean).expect("positive mean").sample(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobType {
    pub rate: f64,
    #[serde(default)]
    pub size: SizeDistribution,
}

impl JobType {
    pub fn new(rate: f64) -> Self {
        JobType {
            rate,
            size: SizeDistribution::default(),
        }
    }
}

/// A job class: its compatible servers and types (0-based) and its token budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobClass {
    pub servers: Vec<usize>,
    pub types: Vec<usize>,
    pub tokens: u32,
}

impl JobClass {
    pub fn new(servers: &[usize], types: &[usize], tokens: u32) -> Self {
        JobClass {
            servers: servers.to_vec(),
            types: types.to_vec(),
            tokens,
        }
    }
}

/// Servers, job types and job classes with their compatibility graph.
#[derive(Clone, Debug, PartialEq)]
pub struct CompatModel {
    capacities: Vec<f64>,
    types: Vec<JobType>,
    classes: Vec<JobClass>,
    class_servers: Vec<u64>,
    class_types: Vec<u64>,
    type_classes: Vec<ClassSubset>,
    server_classes: Vec<ClassSubset>,
}

impl CompatModel {
    /// Builds a model, checking only its structure (sizes and index ranges).
    /// Rates, budgets and empty sets are reported by [`CompatModel::validate`].
    pub fn new(capacities: Vec<f64>, types: Vec<JobType>, mut classes: Vec<JobClass>) -> Result<Self> {
        let check_size = |what, found, max| {
            if found > max {
                Err(Error::TooLarge { what, found, max })
            } else {
                Ok(())
            }
        };
        check_size("classes", classes.len(), MAX_CLASSES)?;
        check_size("types", types.len(), MAX_TYPES)?;
        check_size("servers", capacities.len(), MAX_SERVERS)?;

        for (i, class) in classes.iter_mut().enumerate() {
            class.servers.sort_unstable();
            class.servers.dedup();
            class.types.sort_unstable();
            class.types.dedup();
            if let Some(&s) = class.servers.iter().find(|&&s| s >= capacities.len()) {
                return Err(Error::InvalidModel(format!(
                    "class {i} refers to server {s}, but there are {} servers",
                    capacities.len()
                )));
            }
            if let Some(&k) = class.types.iter().find(|&&k| k >= types.len()) {
                return Err(Error::InvalidModel(format!(
                    "class {i} refers to type {k}, but there are {} types",
                    types.len()
                )));
            }
        }

        let class_servers: Vec<u64> = classes.iter().map(|c| mask_of(&c.servers)).collect();
        let class_types: Vec<u64> = classes.iter().map(|c| mask_of(&c.types)).collect();
        let type_classes = (0..types.len())
            .map(|k| {
                (0..classes.len())
                    .filter(|&i| class_types[i] & (1 << k) != 0)
                    .collect()
            })
            .collect();
        let server_classes = (0..capacities.len())
            .map(|s| {
                (0..classes.len())
                    .filter(|&i| class_servers[i] & (1 << s) != 0)
                    .collect()
            })
            .collect();

        Ok(CompatModel {
            capacities,
            types,
            classes,
            class_servers,
            class_types,
            type_classes,
            server_classes,
        })
    }

    pub fn num_servers(&self) -> usize {
        self.capacities.len()
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn types(&self) -> &[JobType] {
        &self.types
    }

    pub fn classes(&self) -> &[JobClass] {
        &self.classes
    }

    pub fn arrival_rates(&self) -> Vec<f64> {
        self.types.iter().map(|t| t.rate).collect()
    }

    pub fn tokens(&self) -> Vec<u32> {
        self.classes.iter().map(|c| c.tokens).collect()
    }

    pub fn total_tokens(&self) -> u32 {
        self.classes.iter().map(|c| c.tokens).sum()
    }

    /// Server set of class `i` as a bitmask over servers.
    pub fn server_mask(&self, i: usize) -> u64 {
        self.class_servers[i]
    }

    /// Type set of class `i` as a bitmask over types.
    pub fn type_mask(&self, i: usize) -> u64 {
        self.class_types[i]
    }

    /// Classes that accept type `k`.
    pub fn compatible_classes(&self, k: usize) -> ClassSubset {
        self.type_classes[k]
    }

    /// Classes whose jobs server `s` can process.
    pub fn classes_on_server(&self, s: usize) -> ClassSubset {
        self.server_classes[s]
    }

    pub fn all_classes(&self) -> ClassSubset {
        ClassSubset::full(self.num_classes())
    }

    /// Servers that can process at least one class of `set`, as a bitmask.
    pub fn servers_of(&self, set: ClassSubset) -> u64 {
        set.iter().fold(0, |m, i| m | self.class_servers[i])
    }

    /// Types that can be assigned to at least one class of `set`, as a bitmask.
    pub fn types_of(&self, set: ClassSubset) -> u64 {
        set.iter().fold(0, |m, i| m | self.class_types[i])
    }

    /// Aggregate capacity of the servers that can process at least one class of `set`.
    pub fn mu_of(&self, set: ClassSubset) -> f64 {
        weighted_sum(self.servers_of(set), &self.capacities)
    }

    /// Aggregate arrival rate of the types that can be assigned to at least one class of `set`.
    pub fn nu_of(&self, set: ClassSubset) -> f64 {
        let rates = self.arrival_rates();
        weighted_sum(self.types_of(set), &rates)
    }

    /// Sum of capacities over a server bitmask.
    pub fn capacity_of_servers(&self, servers: u64) -> f64 {
        weighted_sum(servers, &self.capacities)
    }

    pub fn total_capacity(&self) -> f64 {
        self.capacities.iter().sum()
    }

    pub fn total_arrival_rate(&self) -> f64 {
        self.types.iter().map(|t| t.rate).sum()
    }

    /// Total load: aggregate arrival rate over aggregate capacity.
    pub fn load(&self) -> f64 {
        self.total_arrival_rate() / self.total_capacity()
    }

    /// Same model with every arrival rate multiplied by `factor`.
    pub fn with_arrival_scale(&self, factor: f64) -> CompatModel {
        let mut scaled = self.clone();
        for t in &mut scaled.types {
            t.rate *= factor;
        }
        scaled
    }

    /// Same model with arrival rates rescaled proportionally to reach total load `rho`.
    pub fn with_load(&self, rho: f64) -> CompatModel {
        self.with_arrival_scale(rho / self.load())
    }

    /// Same model with every class holding `tokens` tokens.
    pub fn with_uniform_tokens(&self, tokens: u32) -> CompatModel {
        let mut m = self.clone();
        for c in &mut m.classes {
            c.tokens = tokens;
        }
        m
    }

    /// Same model with every type using `size` as its job size distribution.
    pub fn with_sizes(&self, sizes: &[SizeDistribution]) -> CompatModel {
        let mut m = self.clone();
        for (t, s) in m.types.iter_mut().zip(sizes) {
            t.size = s.clone();
        }
        m
    }

    pub fn capacity_function(&self) -> SetFunction {
        SetFunction::new(self.class_servers.clone(), self.capacities.clone())
    }

    pub fn arrival_function(&self) -> SetFunction {
        SetFunction::new(self.class_types.clone(), self.arrival_rates())
    }

    /// Lists hard errors and separability warnings. Never fails.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (s, &mu) in self.capacities.iter().enumerate() {
            if !(mu.is_finite() && mu > 0.0) {
                report.errors.push(Issue::NonPositiveCapacity { server: s, value: mu });
            }
        }
        for (k, t) in self.types.iter().enumerate() {
            if !(t.rate.is_finite() && t.rate > 0.0) {
                report.errors.push(Issue::NonPositiveRate { ty: k, value: t.rate });
            }
            if let Err(reason) = t.size.check() {
                report.errors.push(Issue::InvalidSize { ty: k, reason });
            }
        }
        for (i, c) in self.classes.iter().enumerate() {
            if c.servers.is_empty() {
                report.errors.push(Issue::EmptyServerSet { class: i });
            }
            if c.types.is_empty() {
                report.errors.push(Issue::EmptyTypeSet { class: i });
            }
            if c.tokens == 0 {
                report.errors.push(Issue::NoTokens { class: i });
            }
        }
        for i in 0..self.num_classes() {
            for j in i + 1..self.num_classes() {
                if self.class_servers[i] == self.class_servers[j]
                    && self.class_types[i] == self.class_types[j]
                {
                    report.warnings.push(Issue::NotSeparable { first: i, second: j });
                }
            }
        }
        report
    }

    /// Fails with the hard errors of [`CompatModel::validate`], if any.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.errors.is_empty() {
            Ok(())
        } else {
            let msgs: Vec<String> = report.errors.iter().map(|e| e.to_string()).collect();
            Err(Error::InvalidModel(msgs.join("; ")))
        }
    }

    pub fn is_separable(&self) -> bool {
        self.validate()
            .warnings
            .iter()
            .all(|w| !matches!(w, Issue::NotSeparable { .. }))
    }

    /// A class permutation in which every class can overtake all classes
    /// placed before it, in the bucket (type sets) or in service (server sets).
    ///
    /// Classes are sorted along a linear extension of type-set inclusion;
    /// classes sharing a type set are sorted along a linear extension of
    /// server-set inclusion.
    pub fn separability_ordering(&self) -> Result<Vec<usize>> {
        if let Some(Issue::NotSeparable { first, second }) = self
            .validate()
            .warnings
            .into_iter()
            .find(|w| matches!(w, Issue::NotSeparable { .. }))
        {
            return Err(Error::NotSeparable(first, second));
        }
        let mut order: Vec<usize> = (0..self.num_classes()).collect();
        order.sort_by_key(|&i| {
            let k = self.class_types[i];
            let s = self.class_servers[i];
            (k.count_ones(), k, s.count_ones(), s)
        });
        Ok(order)
    }

    /// Whether class `later` can overtake class `earlier` in at least one queue.
    pub fn can_overtake(&self, later: usize, earlier: usize) -> bool {
        let k = |i: usize| self.class_types[i];
        let s = |i: usize| self.class_servers[i];
        k(later) & !k(earlier) != 0 || s(later) & !s(earlier) != 0
    }

    /// Checks that `order` is a permutation in which each class can overtake every earlier one.
    pub fn is_valid_ordering(&self, order: &[usize]) -> bool {
        let n = self.num_classes();
        if order.len() != n {
            return false;
        }
        let mut seen = vec![false; n];
        for &i in order {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        (0..n).all(|p| (0..p).all(|q| self.can_overtake(order[p], order[q])))
    }
}

/// A problem found by [`CompatModel::validate`].
#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    NonPositiveCapacity { server: usize, value: f64 },
    NonPositiveRate { ty: usize, value: f64 },
    InvalidSize { ty: usize, reason: String },
    EmptyServerSet { class: usize },
    EmptyTypeSet { class: usize },
    NoTokens { class: usize },
    NotSeparable { first: usize, second: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::NonPositiveCapacity { server, value } => {
                write!(f, "server {server} has nonpositive capacity {value}")
            }
            Issue::NonPositiveRate { ty, value } => {
                write!(f, "type {ty} has nonpositive arrival rate {value}")
            }
            Issue::InvalidSize { ty, reason } => write!(f, "type {ty}: {reason}"),
            Issue::EmptyServerSet { class } => write!(f, "class {class} has an empty server set"),
            Issue::EmptyTypeSet { class } => write!(f, "class {class} has an empty type set"),
            Issue::NoTokens { class } => write!(f, "class {class} has no tokens"),
            Issue::NotSeparable { first, second } => write!(
                f,
                "classes {first} and {second} have the same type set and server set"
            ),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

/// A coverage set function `f(A) = sum of weights over the union of masks[i], i in A`.
///
/// Both `mu` and `nu` have this shape. Values are memoized in a dense table
/// when there are few enough classes.
#[derive(Clone, Debug)]
pub struct SetFunction {
    masks: Vec<u64>,
    weights: Vec<f64>,
    dense: Option<Vec<f64>>,
}

impl SetFunction {
    pub fn new(masks: Vec<u64>, weights: Vec<f64>) -> Self {
        let n = masks.len();
        let dense = (n <= DENSE_SET_FUNCTION_LIMIT).then(|| {
            let mut unions = vec![0u64; 1 << n];
            let mut values = vec![0.0; 1 << n];
            for a in 1..(1usize << n) {
                let low = a.trailing_zeros() as usize;
                unions[a] = unions[a & (a - 1)] | masks[low];
                values[a] = weighted_sum(unions[a], &weights);
            }
            values
        });
        SetFunction {
            masks,
            weights,
            dense,
        }
    }

    pub fn eval(&self, set: ClassSubset) -> f64 {
        match &self.dense {
            Some(values) => values[set.bits() as usize],
            None => {
                let union = set.iter().fold(0u64, |m, i| m | self.masks[i]);
                weighted_sum(union, &self.weights)
            }
        }
    }
}

/// Ready-made models used by the examples, the tests and the demo.
pub mod presets {
    use super::*;

    /// Three servers, two classes on servers {0,1} and {1,2}; type 0 fits both
    /// classes, type 1 fits only the second. Unit rates and capacities.
    pub fn toy(tokens: [u32; 2]) -> CompatModel {
        CompatModel::new(
            vec![1.0; 3],
            vec![JobType::new(1.0), JobType::new(1.0)],
            vec![
                JobClass::new(&[0, 1], &[0], tokens[0]),
                JobClass::new(&[1, 2], &[0, 1], tokens[1]),
            ],
        )
        .expect("static model")
    }

    /// One class per server, one job type compatible with every class.
    pub fn single_type_pool(capacities: &[f64], tokens: u32, rate: f64) -> CompatModel {
        let classes = (0..capacities.len())
            .map(|s| JobClass::new(&[s], &[0], tokens))
            .collect();
        CompatModel::new(capacities.to_vec(), vec![JobType::new(rate)], classes)
            .expect("static model")
    }

    /// Ten servers: five of unit capacity and five of capacity 4, one type.
    /// The arrival rate is set so that the load is `rho`.
    pub fn heterogeneous_pool(tokens: u32, rho: f64) -> CompatModel {
        let mut caps = vec![1.0; 5];
        caps.extend([4.0; 5]);
        single_type_pool(&caps, tokens, 25.0 * rho)
    }

    /// Four-server half of [`heterogeneous_pool`]: two unit servers and two of capacity 4.
    pub fn heterogeneous_half_pool(tokens: u32, rho: f64) -> CompatModel {
        single_type_pool(&[1.0, 1.0, 4.0, 4.0], tokens, 10.0 * rho)
    }

    /// Six unit servers, one class per server. Type 0 (rate `nu`) fits
    /// servers 0..4, type 1 (rate `4 nu`) fits servers 2..6. Load `rho = 5 nu / 6`.
    pub fn two_type_pool(tokens: u32, rho: f64) -> CompatModel {
        let nu = 6.0 * rho / 5.0;
        let classes = (0..6)
            .map(|s| {
                let types: &[usize] = match s {
                    0 | 1 => &[0],
                    2 | 3 => &[0, 1],
                    _ => &[1],
                };
                JobClass::new(&[s], types, tokens)
            })
            .collect();
        CompatModel::new(
            vec![1.0; 6],
            vec![JobType::new(nu), JobType::new(4.0 * nu)],
            classes,
        )
        .expect("static model")
    }

    /// Type-dependent hyperexponential sizes with unit means for [`two_type_pool`].
    pub fn two_type_hyperexponential_sizes() -> [SizeDistribution; 2] {
        [
            SizeDistribution::hyperexponential(&[(1.0 / 3.0, 2.0), (2.0 / 3.0, 0.5)]),
            SizeDistribution::hyperexponential(&[(1.0 / 6.0, 5.0), (5.0 / 6.0, 0.2)]),
        ]
    }

    /// Four classes over two types and three servers where no class can
    /// overtake two others at once: type sets {0}, {0,1}, {0,1}, {1} and
    /// server sets {0,1}, {0,1}, {1}, {2}.
    pub fn overtaking_example(tokens: u32) -> CompatModel {
        CompatModel::new(
            vec![1.0; 3],
            vec![JobType::new(1.0), JobType::new(1.0)],
            vec![
                JobClass::new(&[0, 1], &[0], tokens),
                JobClass::new(&[0, 1], &[0, 1], tokens),
                JobClass::new(&[1], &[0, 1], tokens),
                JobClass::new(&[2], &[1], tokens),
            ],
        )
        .expect("static model")
    }
}

#[cfg(test)]
mod tests {
    use super::presets::*;
    use super::*;

    fn set(ix: &[usize]) -> ClassSubset {
        ClassSubset::from_indices(ix.iter().copied())
    }

    #[test]
    fn capacity_of_class_sets() {
        let m = toy([1, 1]);
        assert_eq!(m.mu_of(set(&[0])), 2.0);
        assert_eq!(m.mu_of(set(&[0, 1])), 3.0);
        assert_eq!(m.mu_of(ClassSubset::EMPTY), 0.0);
    }

    #[test]
    fn arrival_rate_of_class_sets() {
        let m = toy([1, 1]);
        assert_eq!(m.nu_of(set(&[0])), 1.0);
        assert_eq!(m.nu_of(set(&[1])), 2.0);
        assert_eq!(m.nu_of(ClassSubset::EMPTY), 0.0);
    }

    #[test]
    fn memoized_matches_direct() {
        let m = overtaking_example(1);
        let mu = m.capacity_function();
        let nu = m.arrival_function();
        for a in 0..16u64 {
            let a = ClassSubset::from_bits(a);
            assert_eq!(mu.eval(a), m.mu_of(a));
            assert_eq!(nu.eval(a), m.nu_of(a));
        }
    }

    #[test]
    fn toy_model_is_clean() {
        let r = toy([1, 1]).validate();
        assert!(r.errors.is_empty());
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn duplicate_classes_warn() {
        let m = CompatModel::new(
            vec![1.0],
            vec![JobType::new(1.0)],
            vec![JobClass::new(&[0], &[0], 1), JobClass::new(&[0], &[0], 1)],
        )
        .unwrap();
        let r = m.validate();
        assert!(r.is_ok());
        assert_eq!(r.warnings, vec![Issue::NotSeparable { first: 0, second: 1 }]);
        assert!(matches!(m.separability_ordering(), Err(Error::NotSeparable(0, 1))));
    }

    #[test]
    fn empty_type_set_is_an_error() {
        let m = CompatModel::new(
            vec![1.0],
            vec![JobType::new(1.0)],
            vec![JobClass::new(&[0], &[], 1)],
        )
        .unwrap();
        let r = m.validate();
        assert_eq!(r.errors, vec![Issue::EmptyTypeSet { class: 0 }]);
        assert!(m.ensure_valid().is_err());
    }

    #[test]
    fn nonpositive_rates_are_errors() {
        let m = CompatModel::new(
            vec![0.0],
            vec![JobType::new(-1.0)],
            vec![JobClass::new(&[0], &[0], 0)],
        )
        .unwrap();
        assert_eq!(m.validate().errors.len(), 3);
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let err = CompatModel::new(
            vec![1.0],
            vec![JobType::new(1.0)],
            vec![JobClass::new(&[3], &[0], 1)],
        );
        assert!(matches!(err, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn overtaking_example_ordering() {
        let m = overtaking_example(1);
        // 1-based 1, 4, 3, 2
        assert!(m.is_valid_ordering(&[0, 3, 2, 1]));
        assert_eq!(m.separability_ordering().unwrap(), vec![0, 3, 2, 1]);
        assert!(!m.is_valid_ordering(&[1, 0, 2, 3]));
    }

    #[test]
    fn toy_orderings_both_valid() {
        let m = toy([1, 1]);
        assert!(m.is_valid_ordering(&[0, 1]));
        assert!(m.is_valid_ordering(&[1, 0]));
        assert!(m.is_valid_ordering(&m.separability_ordering().unwrap()));
    }

    #[test]
    fn single_class_identity_ordering() {
        let m = single_type_pool(&[1.0], 2, 1.0);
        assert_eq!(m.separability_ordering().unwrap(), vec![0]);
    }

    #[test]
    fn load_rescaling() {
        let m = heterogeneous_pool(6, 0.4);
        assert!((m.load() - 0.4).abs() < 1e-15);
        assert!((m.with_load(1.3).load() - 1.3).abs() < 1e-14);
        let two = two_type_pool(6, 0.8);
        assert!((two.load() - 0.8).abs() < 1e-15);
    }

    #[test]
    fn hyperexponential_means() {
        for d in two_type_hyperexponential_sizes() {
            assert!((d.mean() - 1.0).abs() < 1e-15);
            d.check().unwrap();
        }
        assert!(SizeDistribution::hyperexponential(&[(0.5, 1.0)]).check().is_err());
    }

    #[test]
    fn bit_iteration() {
        let s = set(&[0, 3, 63]);
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 63]);
        assert_eq!(s.len(), 3);
        assert!(set(&[3]).is_subset(s));
        assert!(ClassSubset::full(64).contains(63));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn random_model() -> impl Strategy<Value = CompatModel> {
            (1usize..=5, 1usize..=4, 1usize..=4).prop_flat_map(|(n, s, k)| {
                (
                    prop::collection::vec(0.1f64..5.0, s),
                    prop::collection::vec(0.1f64..5.0, k),
                    prop::collection::vec((1u64..(1 << s), 1u64..(1 << k)), n),
                )
                    .prop_map(move |(caps, rates, sets)| {
                        let classes = sets
                            .iter()
                            .map(|&(sm, km)| {
                                let servers: Vec<usize> = BitIter(sm).collect();
                                let types: Vec<usize> = BitIter(km).collect();
                                JobClass::new(&servers, &types, 1)
                            })
                            .collect();
                        CompatModel::new(
                            caps,
                            rates.into_iter().map(JobType::new).collect(),
                            classes,
                        )
                        .unwrap()
                    })
            })
        }

        proptest! {
            #[test]
            fn set_functions_are_normalized_monotone_submodular(m in random_model()) {
                let n = m.num_classes();
                let mu = m.capacity_function();
                let nu = m.arrival_function();
                for f in [&mu, &nu] {
                    prop_assert_eq!(f.eval(ClassSubset::EMPTY), 0.0);
                    for a in 0..(1u64 << n) {
                        for b in 0..(1u64 << n) {
                            let (a, b) = (ClassSubset::from_bits(a), ClassSubset::from_bits(b));
                            let (fa, fb) = (f.eval(a), f.eval(b));
                            if a.is_subset(b) {
                                prop_assert!(fa <= fb + 1e-12);
                            }
                            let lhs = f.eval(a.union(b)) + f.eval(a.intersection(b));
                            prop_assert!(lhs <= fa + fb + 1e-12);
                        }
                    }
                }
            }

            #[test]
            fn ordering_lets_later_classes_overtake(m in random_model()) {
                match m.separability_ordering() {
                    Ok(order) => {
                        prop_assert!(m.is_valid_ordering(&order));
                        for p in 0..order.len() {
                            for q in 0..p {
                                let (a, b) = (order[p], order[q]);
                                let k_in = m.type_mask(a) & !m.type_mask(b) == 0;
                                let s_in = m.server_mask(a) & !m.server_mask(b) == 0;
                                prop_assert!(!(k_in && s_in));
                            }
                        }
                    }
                    Err(_) => prop_assert!(!m.is_separable()),
                }
            }
        }
    }
}
