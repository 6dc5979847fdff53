use serde::{Deserialize, Serialize};

use crate::model::{BitIter, CompatModel};

/// Ordered detailed state: `c` lists the classes of the tokens held by jobs in
/// service, oldest first; `t` lists the classes of the available tokens,
/// longest available first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct DetailedState {
    pub c: Vec<usize>,
    pub t: Vec<usize>,
}

impl DetailedState {
    pub fn new(c: Vec<usize>, t: Vec<usize>) -> Self {
        DetailedState { c, t }
    }

    /// All tokens available, class by class.
    pub fn initial(model: &CompatModel) -> Self {
        let t = model
            .tokens()
            .iter()
            .enumerate()
            .flat_map(|(i, &l)| std::iter::repeat_n(i, l as usize))
            .collect();
        DetailedState { c: Vec::new(), t }
    }

    /// Per-class count of tokens held by jobs in service.
    pub fn in_service(&self, n_classes: usize) -> Vec<u32> {
        counts(&self.c, n_classes)
    }

    pub fn available(&self, n_classes: usize) -> Vec<u32> {
        counts(&self.t, n_classes)
    }

    /// Whether the two sequences together hold exactly the model's tokens.
    pub fn conserves_tokens(&self, model: &CompatModel) -> bool {
        let n = model.num_classes();
        let held = self.in_service(n);
        let free = self.available(n);
        model
            .tokens()
            .iter()
            .enumerate()
            .all(|(i, &l)| held[i] + free[i] == l)
    }
}

fn counts(seq: &[usize], n: usize) -> Vec<u32> {
    let mut v = vec![0; n];
    for &i in seq {
        v[i] += 1;
    }
    v
}

/// Rate increments along a sequence: position `p` gets the weight of the
/// elements first covered by `seq[p]`.
fn prefix_increments(seq: &[usize], mask: impl Fn(usize) -> u64, weights: &[f64]) -> Vec<f64> {
    let mut covered = 0u64;
    seq.iter()
        .map(|&i| {
            let fresh = mask(i) & !covered;
            covered |= fresh;
            BitIter(fresh).map(|b| weights[b]).sum()
        })
        .collect()
}

/// Rate at which each available token is seized: the token in position `p`
/// takes the arrivals compatible with it but with no earlier token.
pub fn seize_rates(model: &CompatModel, t: &[usize]) -> Vec<f64> {
    let rates = model.arrival_rates();
    prefix_increments(t, |i| model.type_mask(i), &rates)
}

/// Service rate of each job under first-come-first-served: the job in
/// position `p` runs on the servers of its class not taken by older jobs.
pub fn service_rates_fcfs(model: &CompatModel, c: &[usize]) -> Vec<f64> {
    prefix_increments(c, |i| model.server_mask(i), model.capacities())
}

/// Outcome of an arrival at the token bucket.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Admission {
    /// The job seized the token in this position of the bucket.
    Seized(usize),
    Blocked,
}

/// Position of the first token compatible with type `k`, if any.
pub fn first_compatible(model: &CompatModel, t: &[usize], k: usize) -> Option<usize> {
    let classes = model.compatible_classes(k);
    t.iter().position(|&i| classes.contains(i))
}

/// A type-`k` arrival seizes the first compatible token, which moves to the tail of `c`.
pub fn admit(model: &CompatModel, state: &mut DetailedState, k: usize) -> Admission {
    match first_compatible(model, &state.t, k) {
        Some(p) => {
            let class = state.t.remove(p);
            state.c.push(class);
            Admission::Seized(p)
        }
        None => Admission::Blocked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;

    #[test]
    fn seize_rates_in_bucket() {
        let m = presets::toy([4, 4]);
        assert_eq!(seize_rates(&m, &[0, 1, 1]), vec![1.0, 1.0, 0.0]);
        assert!(seize_rates(&m, &[]).is_empty());
        let single = presets::single_type_pool(&[1.0], 3, 2.5);
        assert_eq!(seize_rates(&single, &[0, 0, 0]), vec![2.5, 0.0, 0.0]);
    }

    #[test]
    fn fcfs_service_rates() {
        let m = presets::toy([4, 4]);
        assert_eq!(service_rates_fcfs(&m, &[0, 0, 1, 0, 1]), vec![2.0, 0.0, 1.0, 0.0, 0.0]);
        assert!(service_rates_fcfs(&m, &[]).is_empty());
        assert_eq!(service_rates_fcfs(&m, &[1]), vec![2.0]);
    }

    #[test]
    fn rates_telescope() {
        let m = presets::overtaking_example(2);
        let seq = [3, 1, 0, 2, 1, 3];
        let total: f64 = service_rates_fcfs(&m, &seq).iter().sum();
        let set = seq.iter().copied().collect();
        assert_eq!(total, m.mu_of(set));
        let total: f64 = seize_rates(&m, &seq).iter().sum();
        assert_eq!(total, m.nu_of(set));
    }

    #[test]
    fn admission_scans_the_bucket() {
        let m = presets::toy([4, 4]);
        let mut s = DetailedState::new(vec![0, 0, 1, 0, 1], vec![0, 1, 1]);
        assert_eq!(first_compatible(&m, &s.t, 0), Some(0));
        assert_eq!(first_compatible(&m, &s.t, 1), Some(1));
        assert_eq!(admit(&m, &mut s, 1), Admission::Seized(1));
        assert_eq!(s.t, vec![0, 1]);
        assert_eq!(s.c, vec![0, 0, 1, 0, 1, 1]);
        assert!(s.conserves_tokens(&m));

        let mut empty = DetailedState::new(vec![0, 1], vec![]);
        assert_eq!(admit(&m, &mut empty, 0), Admission::Blocked);

        // type 1 is not accepted by class 0
        let mut only_first = DetailedState::new(vec![], vec![0, 0]);
        assert_eq!(admit(&m, &mut only_first, 1), Admission::Blocked);
    }
}
