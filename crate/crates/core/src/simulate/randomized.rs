use std::sync::Arc;

use crate::error::Result;
use crate::exact::{BalanceTables, StateSpace};
use crate::model::CompatModel;

/// Per-type routing of the randomized insensitive load balancing.
///
/// For available tokens `y`, `split(y, k)[i]` is the probability that a type-`k`
/// arrival is assigned to class `i`. It is the stationary fraction of token
/// orders with aggregate `y` whose first type-`k` compatible token is of class
/// `i`, so the per-class arrival rates it induces are exactly `lambda_i(y)`.
/// The fractions obey
///
/// `p_ki(y) = sum_j lambda_j(y) / nu(I(y)) * (p_ki(y - e_j) + [i = j, k in K_j, no class of y - e_j accepts k])`.
#[derive(Clone, Debug)]
pub struct SplitTable {
    space: Arc<StateSpace>,
    num_types: usize,
    num_classes: usize,
    p: Vec<f64>,
}

impl SplitTable {
    pub fn build(model: &CompatModel, tables: &BalanceTables) -> Result<Self> {
        tables.check_model(model)?;
        let space = tables.space();
        let nk = model.num_types();
        let nc = model.num_classes();
        let type_sets: Vec<_> = (0..nk).map(|k| model.compatible_classes(k)).collect();
        let mut p = vec![0.0; space.size() * nk * nc];
        for n in 1..=space.total() {
            for &idx in space.level(n) {
                let idx = idx as usize;
                let (avail, _) = space.masks(idx);
                let rates = tables.arrival_rates_at(idx);
                let total = model.nu_of(avail);
                let base = idx * nk * nc;
                for (j, lam) in rates {
                    let w = lam / total;
                    let lower = idx - space.stride(j);
                    let (lower_avail, _) = space.masks(lower);
                    for (k, set) in type_sets.iter().enumerate() {
                        let from = lower * nk * nc + k * nc;
                        let to = base + k * nc;
                        for i in 0..nc {
                            p[to + i] += w * p[from + i];
                        }
                        if set.contains(j) && set.intersection(lower_avail).is_empty() {
                            p[to + j] += w;
                        }
                    }
                }
            }
        }
        Ok(SplitTable {
            space: tables.shared_space(),
            num_types: nk,
            num_classes: nc,
            p,
        })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// Assignment probabilities of a type-`k` arrival when the available tokens have index `y_idx`.
    pub fn split(&self, y_idx: usize, k: usize) -> &[f64] {
        let start = (y_idx * self.num_types + k) * self.num_classes;
        &self.p[start..start + self.num_classes]
    }

    /// `sum_k nu_k p_ki(y)` per class.
    pub fn class_rates(&self, model: &CompatModel, y_idx: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.num_classes];
        for (k, ty) in model.types().iter().enumerate() {
            for (o, p) in out.iter_mut().zip(self.split(y_idx, k)) {
                *o += ty.rate * p;
            }
        }
        out
    }
}
