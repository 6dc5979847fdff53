use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::CompatModel;
use crate::simulate::{seize_rates, service_rates_fcfs, DetailedState};

/// Number of ordered states `(c, t)`: a word over the token multiset with a cut point,
/// `(L + 1) L! / prod_i l_i!`. Saturates on overflow.
pub fn detailed_state_count(tokens: &[u32]) -> u128 {
    let total: u32 = tokens.iter().sum();
    // multinomial coefficient as a product of binomials
    let mut count = 1u128;
    let mut placed = 0u128;
    for &l in tokens {
        for j in 1..=l as u128 {
            placed += 1;
            count = match count.checked_mul(placed) {
                Some(v) => v / j,
                None => return u128::MAX,
            };
        }
    }
    count.saturating_mul(total as u128 + 1)
}

/// Default limit on the number of ordered states.
pub const DEFAULT_STATE_CAP: u128 = 200_000;

/// All ordered states of `model`, sorted.
pub fn enumerate_detailed_states(model: &CompatModel) -> Result<Vec<DetailedState>> {
    enumerate_detailed_states_with_cap(model, DEFAULT_STATE_CAP)
}

pub fn enumerate_detailed_states_with_cap(
    model: &CompatModel,
    cap: u128,
) -> Result<Vec<DetailedState>> {
    let tokens = model.tokens();
    let count = detailed_state_count(&tokens);
    if count > cap {
        return Err(Error::StateSpaceCap { count, cap });
    }
    let mut left = tokens.clone();
    let mut word = Vec::with_capacity(model.total_tokens() as usize);
    let mut out = Vec::with_capacity(count as usize);
    words(&mut left, &mut word, &mut |w| {
        for cut in 0..=w.len() {
            out.push(DetailedState::new(w[..cut].to_vec(), w[cut..].to_vec()));
        }
    });
    out.sort();
    Ok(out)
}

/// Calls `f` on every arrangement of the multiset with multiplicities `left`.
fn words(left: &mut [u32], word: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if left.iter().all(|&l| l == 0) {
        f(word);
        return;
    }
    for i in 0..left.len() {
        if left[i] > 0 {
            left[i] -= 1;
            word.push(i);
            words(left, word, f);
            word.pop();
            left[i] += 1;
        }
    }
}

/// Sparse generator of the ordered token chain.
#[derive(Clone, Debug)]
pub struct Generator {
    states: Vec<DetailedState>,
    index: HashMap<DetailedState, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    diagonal: Vec<f64>,
}

impl Generator {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[DetailedState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &DetailedState {
        &self.states[i]
    }

    pub fn index_of(&self, s: &DetailedState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Off-diagonal transitions out of state `i`, sorted by target.
    pub fn transitions(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `q_ii`, minus the total outgoing rate.
    pub fn diagonal(&self, i: usize) -> f64 {
        self.diagonal[i]
    }

    /// `q_ij`, including the diagonal.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diagonal[i];
        }
        self.rows[i]
            .binary_search_by_key(&j, |&(t, _)| t)
            .map_or(0.0, |p| self.rows[i][p].1)
    }

    /// Rate between two states given by value; 0 if either is unknown.
    pub fn rate_between(&self, from: &DetailedState, to: &DetailedState) -> f64 {
        match (self.index_of(from), self.index_of(to)) {
            (Some(i), Some(j)) => self.rate(i, j),
            _ => 0.0,
        }
    }

    /// Largest absolute row sum; zero up to rounding.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.rows[i].iter().map(|t| t.1).sum::<f64>() + self.diagonal[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest total outgoing rate.
    pub fn max_exit_rate(&self) -> f64 {
        self.diagonal.iter().fold(0.0, |m, d| m.max(-d))
    }
}

pub fn build_generator(model: &CompatModel) -> Result<Generator> {
    build_generator_with_cap(model, DEFAULT_STATE_CAP)
}

/// Arrivals seize the token in position `p` of `t` at the seize rate of `p`;
/// the job in position `p` of `c` leaves at its first-come-first-served rate.
pub fn build_generator_with_cap(model: &CompatModel, cap: u128) -> Result<Generator> {
    let states = enumerate_detailed_states_with_cap(model, cap)?;
    let index: HashMap<DetailedState, usize> =
        states.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
    let mut rows = Vec::with_capacity(states.len());
    let mut diagonal = Vec::with_capacity(states.len());
    for s in &states {
        let mut out: Vec<(usize, f64)> = Vec::new();
        for (p, r) in seize_rates(model, &s.t).into_iter().enumerate() {
            if r > 0.0 {
                let mut next = s.clone();
                let class = next.t.remove(p);
                next.c.push(class);
                out.push((index[&next], r));
            }
        }
        for (p, r) in service_rates_fcfs(model, &s.c).into_iter().enumerate() {
            if r > 0.0 {
                let mut next = s.clone();
                let class = next.c.remove(p);
                next.t.push(class);
                out.push((index[&next], r));
            }
        }
        out.sort_by_key(|t| t.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(out.len());
        for (j, r) in out {
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += r,
                _ => merged.push((j, r)),
            }
        }
        diagonal.push(-merged.iter().map(|t| t.1).sum::<f64>());
        rows.push(merged);
    }
    Ok(Generator {
        states,
        index,
        rows,
        diagonal,
    })
}
