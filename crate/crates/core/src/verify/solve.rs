use nalgebra::{DMatrix, DVector};
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::simulate::DetailedState;
use crate::verify::generator::Generator;

/// Strong connectivity of the transition graph.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Irreducibility {
    pub irreducible: bool,
    /// Number of strongly connected components.
    pub components: usize,
    /// Two states that do not communicate, when the chain is reducible.
    pub witness: Option<(DetailedState, DetailedState)>,
}

pub fn check_irreducible(gen: &Generator) -> Irreducibility {
    let mut g = DiGraph::<(), ()>::with_capacity(gen.len(), 0);
    let nodes: Vec<_> = (0..gen.len()).map(|_| g.add_node(())).collect();
    for i in 0..gen.len() {
        for &(j, _) in gen.transitions(i) {
            g.add_edge(nodes[i], nodes[j], ());
        }
    }
    let sccs = kosaraju_scc(&g);
    let witness = (sccs.len() > 1).then(|| {
        let a = sccs[0][0].index();
        let b = sccs[1][0].index();
        (gen.state(a).clone(), gen.state(b).clone())
    });
    Irreducibility {
        irreducible: sccs.len() <= 1,
        components: sccs.len(),
        witness,
    }
}

/// Chains up to this many states are solved by dense LU.
pub const DENSE_LIMIT: usize = 1500;

/// Residual `max_j |(pi Q)_j|` allowed, relative to the largest exit rate.
pub const RESIDUAL_TOLERANCE: f64 = 1e-12;

/// Stationary law `pi Q = 0`, `sum pi = 1`.
///
/// Small chains replace the last balance equation by the normalization and
/// use dense LU; larger ones use Gauss-Seidel sweeps. Either way the result is
/// rejected if its residual exceeds the tolerance, which flags reducible chains.
pub fn solve_ctmc(gen: &Generator) -> Result<Vec<f64>> {
    let n = gen.len();
    if n == 0 {
        return Err(Error::Solve("empty chain".into()));
    }
    if n == 1 {
        return Ok(vec![1.0]);
    }
    let pi = if n <= DENSE_LIMIT {
        dense_solve(gen)?
    } else {
        gauss_seidel(gen)?
    };
    let scale = gen.max_exit_rate().max(f64::MIN_POSITIVE);
    let res = residual(gen, &pi) / scale;
    if res > RESIDUAL_TOLERANCE || pi.iter().any(|&p| p < -RESIDUAL_TOLERANCE || !p.is_finite()) {
        return Err(Error::Solve(format!(
            "no unique stationary law: relative residual {res:.3e} (is the chain reducible?)"
        )));
    }
    Ok(pi)
}

/// `max_j |sum_i pi_i q_ij|`.
pub fn residual(gen: &Generator, pi: &[f64]) -> f64 {
    let mut acc = vec![CompensatedSum::default(); gen.len()];
    for (i, &p) in pi.iter().enumerate() {
        acc[i].add(p * gen.diagonal(i));
        for &(j, r) in gen.transitions(i) {
            acc[j].add(p * r);
        }
    }
    acc.iter().map(|a| a.value().abs()).fold(0.0, f64::max)
}

fn dense_solve(gen: &Generator) -> Result<Vec<f64>> {
    let n = gen.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = gen.diagonal(i);
        for &(j, r) in gen.transitions(i) {
            a[(j, i)] = r;
        }
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Solve("singular balance equations (is the chain reducible?)".into()))?;
    Ok(x.iter().copied().collect())
}

fn gauss_seidel(gen: &Generator) -> Result<Vec<f64>> {
    let n = gen.len();
    let mut incoming: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, r) in gen.transitions(i) {
            incoming[j].push((i, r));
        }
    }
    if (0..n).any(|i| gen.diagonal(i) == 0.0) {
        return Err(Error::Solve("absorbing state (is the chain reducible?)".into()));
    }
    let mut pi = vec![1.0 / n as f64; n];
    let scale = gen.max_exit_rate();
    for _ in 0..200_000 {
        for j in 0..n {
            let inflow: f64 = incoming[j].iter().map(|&(i, r)| pi[i] * r).sum();
            pi[j] = inflow / -gen.diagonal(j);
        }
        let total: f64 = pi.iter().sum();
        pi.iter_mut().for_each(|p| *p /= total);
        if residual(gen, &pi) <= 0.1 * RESIDUAL_TOLERANCE * scale {
            return Ok(pi);
        }
    }
    Err(Error::Solve("Gauss-Seidel did not converge".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{presets, CompatModel, JobClass, JobType};
    use crate::verify::generator::build_generator;

    #[test]
    fn toy_is_irreducible() {
        let g = build_generator(&presets::toy([1, 1])).unwrap();
        let v = check_irreducible(&g);
        assert!(v.irreducible);
        assert_eq!(v.witness, None);
    }

    fn duplicates(tokens: u32) -> CompatModel {
        CompatModel::new(
            vec![1.0, 1.0],
            vec![JobType::new(1.0)],
            vec![
                JobClass::new(&[0, 1], &[0], tokens),
                JobClass::new(&[0, 1], &[0], tokens),
            ],
        )
        .unwrap()
    }

    #[test]
    fn duplicate_classes_freeze_token_order() {
        let g = build_generator(&duplicates(2)).unwrap();
        let v = check_irreducible(&g);
        assert!(!v.irreducible);
        let (a, b) = v.witness.unwrap();
        assert!(g.index_of(&a).is_some() && g.index_of(&b).is_some());
        assert!(solve_ctmc(&g).is_err());
    }

    #[test]
    fn two_duplicate_tokens_have_one_cyclic_order() {
        assert!(check_irreducible(&build_generator(&duplicates(1)).unwrap()).irreducible);
    }

    #[test]
    fn birth_death_is_uniform() {
        let g = build_generator(&presets::single_type_pool(&[1.0], 2, 1.0)).unwrap();
        assert!(check_irreducible(&g).irreducible);
        let pi = solve_ctmc(&g).unwrap();
        for p in pi {
            assert!((p - 1.0 / 3.0).abs() < 1e-14);
        }
    }

    #[test]
    fn one_state_chain() {
        let g = build_generator(&presets::single_type_pool(&[1.0], 0, 1.0)).unwrap();
        assert_eq!(solve_ctmc(&g).unwrap(), vec![1.0]);
    }

    #[test]
    fn iterative_solve_agrees_with_lu() {
        let g = build_generator(&presets::toy([2, 2])).unwrap();
        let a = dense_solve(&g).unwrap();
        let b = gauss_seidel(&g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
