use crate::error::{Error, Result};
use crate::model::ClassSubset;

/// Aggregate state: number of tokens of each class held by jobs in service.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AggState(pub Vec<u32>);

impl AggState {
    pub fn zero(n: usize) -> Self {
        AggState(vec![0; n])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    /// Available tokens `bounds - self`.
    pub fn complement(&self, bounds: &[u32]) -> AggState {
        AggState(bounds.iter().zip(&self.0).map(|(l, x)| l - x).collect())
    }

    pub fn active(&self) -> ClassSubset {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn total(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl From<Vec<u32>> for AggState {
    fn from(v: Vec<u32>) -> Self {
        AggState(v)
    }
}

/// The box `{x : 0 <= x <= bounds}` with a mixed-radix index and a level
/// (total count) ordering.
#[derive(Clone, Debug)]
pub struct StateSpace {
    bounds: Vec<u32>,
    strides: Vec<usize>,
    size: usize,
    total: u32,
    by_level: Vec<u32>,
    level_start: Vec<usize>,
}

impl StateSpace {
    pub const DEFAULT_CAP: usize = 10_000_000;

    pub fn new(bounds: &[u32]) -> Result<Self> {
        Self::with_cap(bounds, Self::DEFAULT_CAP)
    }

    /// Number of states of the box, without building it.
    pub fn count(bounds: &[u32]) -> u128 {
        bounds
            .iter()
            .fold(1u128, |acc, &l| acc.saturating_mul(l as u128 + 1))
    }

    pub fn with_cap(bounds: &[u32], cap: usize) -> Result<Self> {
        let count = Self::count(bounds);
        if count > cap as u128 || count > u32::MAX as u128 {
            return Err(Error::StateSpaceCap {
                count,
                cap: cap as u128,
            });
        }
        let size = count as usize;
        let mut strides = Vec::with_capacity(bounds.len());
        let mut stride = 1usize;
        for &l in bounds {
            strides.push(stride);
            stride *= l as usize + 1;
        }
        let total: u32 = bounds.iter().sum();

        // Counting sort of the indices by level, walking the box with an odometer.
        let mut level_of = vec![0u32; size];
        let mut digits = vec![0u32; bounds.len()];
        let mut level = 0u32;
        for slot in level_of.iter_mut().skip(1) {
            for (d, &l) in digits.iter_mut().zip(bounds) {
                if *d < l {
                    *d += 1;
                    level += 1;
                    break;
                }
                level -= *d;
                *d = 0;
            }
            *slot = level;
        }
        let mut level_start = vec![0usize; total as usize + 2];
        for &n in &level_of {
            level_start[n as usize + 1] += 1;
        }
        for n in 0..=total as usize {
            level_start[n + 1] += level_start[n];
        }
        let mut fill = level_start.clone();
        let mut by_level = vec![0u32; size];
        for (idx, &n) in level_of.iter().enumerate() {
            by_level[fill[n as usize]] = idx as u32;
            fill[n as usize] += 1;
        }

        Ok(StateSpace {
            bounds: bounds.to_vec(),
            strides,
            size,
            total,
            by_level,
            level_start,
        })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bounds(&self) -> &[u32] {
        &self.bounds
    }

    pub fn num_classes(&self) -> usize {
        self.bounds.len()
    }

    pub fn stride(&self, i: usize) -> usize {
        self.strides[i]
    }

    /// Total number of tokens, i.e. the top level.
    pub fn total(&self) -> u32 {
        self.total
    }

    /// Indices of the states holding exactly `n` tokens in service.
    pub fn level(&self, n: u32) -> &[u32] {
        let n = n as usize;
        &self.by_level[self.level_start[n]..self.level_start[n + 1]]
    }

    pub fn index(&self, x: &[u32]) -> usize {
        debug_assert_eq!(x.len(), self.bounds.len());
        x.iter().zip(&self.strides).map(|(&d, &s)| d as usize * s).sum()
    }

    pub fn digit(&self, idx: usize, i: usize) -> u32 {
        ((idx / self.strides[i]) % (self.bounds[i] as usize + 1)) as u32
    }

    pub fn decode(&self, idx: usize) -> AggState {
        AggState((0..self.bounds.len()).map(|i| self.digit(idx, i)).collect())
    }

    pub fn decode_into(&self, idx: usize, out: &mut [u32]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.digit(idx, i);
        }
    }

    /// Index of `bounds - x` given the index of `x`.
    pub fn complement(&self, idx: usize) -> usize {
        self.size - 1 - idx
    }

    /// Classes with a nonzero count and classes at their bound.
    pub fn masks(&self, idx: usize) -> (ClassSubset, ClassSubset) {
        let mut active = 0u64;
        let mut full = 0u64;
        for i in 0..self.bounds.len() {
            let d = self.digit(idx, i);
            if d > 0 {
                active |= 1 << i;
            }
            if d == self.bounds[i] {
                full |= 1 << i;
            }
        }
        (ClassSubset::from_bits(active), ClassSubset::from_bits(full))
    }

    pub fn contains(&self, x: &[u32]) -> bool {
        x.len() == self.bounds.len() && x.iter().zip(&self.bounds).all(|(a, b)| a <= b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_partition_the_box() {
        let space = StateSpace::new(&[2, 1, 3]).unwrap();
        assert_eq!(space.size(), 24);
        assert_eq!(space.total(), 6);
        let mut seen = vec![false; space.size()];
        for n in 0..=space.total() {
            for &idx in space.level(n) {
                assert_eq!(space.decode(idx as usize).total(), n);
                seen[idx as usize] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn complement_index() {
        let space = StateSpace::new(&[2, 3]).unwrap();
        for idx in 0..space.size() {
            let x = space.decode(idx);
            let y = x.complement(space.bounds());
            assert_eq!(space.index(y.counts()), space.complement(idx));
        }
    }

    #[test]
    fn cap_is_enforced() {
        let err = StateSpace::with_cap(&[6; 10], 1_000).unwrap_err();
        match err {
            Error::StateSpaceCap { count, .. } => assert_eq!(count, 7u128.pow(10)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn empty_budget_has_one_state() {
        let space = StateSpace::new(&[0, 0]).unwrap();
        assert_eq!(space.size(), 1);
        assert_eq!(space.level(0), &[0]);
    }
}
