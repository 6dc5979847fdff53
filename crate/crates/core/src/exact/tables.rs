use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exact::space::{AggState, StateSpace};
use crate::model::{CompatModel, SetFunction};
use crate::numeric::CompensatedSum;

/// A balance function over the aggregate state space, stored level by level.
///
/// The value at index `idx` on level `n` is `mantissa[idx] * exp(log_scale[n])`.
/// Each level is renormalized so its largest mantissa is 1, which keeps the
/// recursion away from overflow and underflow for large budgets.
#[derive(Clone, Debug)]
pub struct LevelTable {
    mantissa: Arc<Vec<f64>>,
    log_scale: Vec<f64>,
    step: Vec<f64>,
}

impl LevelTable {
    /// Runs `F(x) = (1 / f(I(x))) * sum_{i in I(x)} F(x - e_i)`, `F(0) = 1`, level by level.
    pub fn build(space: &StateSpace, f: &SetFunction) -> LevelTable {
        let n_classes = space.num_classes();
        let mut mantissa = vec![0.0; space.size()];
        mantissa[0] = 1.0;
        let mut log_scale = vec![0.0; space.total() as usize + 1];
        for n in 1..=space.total() {
            let mut top = 0.0f64;
            for &idx in space.level(n) {
                let idx = idx as usize;
                let (active, _) = space.masks(idx);
                let mut acc = CompensatedSum::default();
                for i in active.iter() {
                    acc.add(mantissa[idx - space.stride(i)]);
                }
                let v = acc.value() / f.eval(active);
                mantissa[idx] = v;
                top = top.max(v);
            }
            for &idx in space.level(n) {
                mantissa[idx as usize] /= top;
            }
            log_scale[n as usize] = log_scale[n as usize - 1] + top.ln();
        }
        debug_assert!(n_classes == 0 || mantissa.iter().all(|&v| v > 0.0 && v.is_finite()));
        LevelTable::from_parts(Arc::new(mantissa), log_scale)
    }

    fn from_parts(mantissa: Arc<Vec<f64>>, log_scale: Vec<f64>) -> LevelTable {
        let mut step = vec![1.0; log_scale.len()];
        for n in 1..log_scale.len() {
            step[n] = (log_scale[n - 1] - log_scale[n]).exp();
        }
        LevelTable {
            mantissa,
            log_scale,
            step,
        }
    }

    pub fn mantissa(&self, idx: usize) -> f64 {
        self.mantissa[idx]
    }

    pub fn log_scale(&self, level: u32) -> f64 {
        self.log_scale[level as usize]
    }

    pub fn ln_value(&self, idx: usize, level: u32) -> f64 {
        self.mantissa[idx].ln() + self.log_scale[level as usize]
    }

    /// The value itself; may overflow for large budgets, prefer `ln_value`.
    pub fn value(&self, idx: usize, level: u32) -> f64 {
        self.ln_value(idx, level).exp()
    }

    /// `F(x - e_i) / F(x)` for `x` at `idx` on `level`, with `lower` the index of `x - e_i`.
    pub fn ratio(&self, idx: usize, lower: usize, level: u32) -> f64 {
        self.mantissa[lower] / self.mantissa[idx] * self.step[level as usize]
    }

    /// Same table with every level-`n` value multiplied by `factor^n`.
    pub fn rescaled(&self, factor: f64) -> LevelTable {
        let ln = factor.ln();
        let log_scale = self
            .log_scale
            .iter()
            .enumerate()
            .map(|(n, s)| s + n as f64 * ln)
            .collect();
        LevelTable::from_parts(Arc::clone(&self.mantissa), log_scale)
    }
}

/// Balance functions of the resource allocation and of the load balancing.
#[derive(Clone, Debug)]
pub struct BalanceTables {
    space: Arc<StateSpace>,
    /// Balanced-fair service balance function, driven by capacities.
    pub phi: LevelTable,
    /// Insensitive load balancing balance function, driven by arrival rates.
    pub lambda: LevelTable,
}

pub fn build_phi_table(model: &CompatModel, space: &StateSpace) -> LevelTable {
    LevelTable::build(space, &model.capacity_function())
}

pub fn build_lambda_table(model: &CompatModel, space: &StateSpace) -> LevelTable {
    LevelTable::build(space, &model.arrival_function())
}

impl BalanceTables {
    pub fn build(model: &CompatModel) -> Result<Self> {
        Self::build_with_cap(model, StateSpace::DEFAULT_CAP)
    }

    pub fn build_with_cap(model: &CompatModel, cap: usize) -> Result<Self> {
        model.ensure_valid()?;
        let space = StateSpace::with_cap(&model.tokens(), cap)?;
        Ok(Self::from_space(model, space))
    }

    pub(crate) fn from_space(model: &CompatModel, space: StateSpace) -> Self {
        let phi = build_phi_table(model, &space);
        let lambda = build_lambda_table(model, &space);
        BalanceTables {
            space: Arc::new(space),
            phi,
            lambda,
        }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub(crate) fn shared_space(&self) -> Arc<StateSpace> {
        Arc::clone(&self.space)
    }

    /// Tables of the same model with all arrival rates multiplied by `factor`.
    /// Only the level scales of the arrival balance function change.
    pub fn rescale_arrivals(&self, factor: f64) -> BalanceTables {
        BalanceTables {
            space: Arc::clone(&self.space),
            phi: self.phi.clone(),
            lambda: self.lambda.rescaled(1.0 / factor),
        }
    }

    /// Checks that these tables were built for a model with the same token budgets.
    pub fn check_model(&self, model: &CompatModel) -> Result<()> {
        if self.space.bounds() != model.tokens().as_slice() {
            return Err(Error::InvalidModel(
                "balance tables were built for different token budgets".into(),
            ));
        }
        Ok(())
    }

    /// `phi_i(x) = Phi(x - e_i) / Phi(x)` for every active class of `x` (by index).
    pub fn service_rates_at(&self, idx: usize) -> Vec<(usize, f64)> {
        let space = &self.space;
        let mut level = 0;
        let mut active = Vec::new();
        for i in 0..space.num_classes() {
            let d = space.digit(idx, i);
            level += d;
            if d > 0 {
                active.push(i);
            }
        }
        active
            .into_iter()
            .map(|i| (i, self.phi.ratio(idx, idx - space.stride(i), level)))
            .collect()
    }

    /// `lambda_i(y) = Lambda(y - e_i) / Lambda(y)` for every class with an available token.
    pub fn arrival_rates_at(&self, y_idx: usize) -> Vec<(usize, f64)> {
        let space = &self.space;
        let mut level = 0;
        let mut active = Vec::new();
        for i in 0..space.num_classes() {
            let d = space.digit(y_idx, i);
            level += d;
            if d > 0 {
                active.push(i);
            }
        }
        active
            .into_iter()
            .map(|i| (i, self.lambda.ratio(y_idx, y_idx - space.stride(i), level)))
            .collect()
    }
}

/// Per-class rates in one aggregate state.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassRates {
    /// `(i, phi_i(x))` for classes with jobs in service.
    pub service: Vec<(usize, f64)>,
    /// `(i, lambda_i(l - x))` for classes with an available token.
    pub arrival: Vec<(usize, f64)>,
}

pub fn per_class_rates(tables: &BalanceTables, x: &AggState) -> Result<ClassRates> {
    let space = tables.space();
    if !space.contains(x.counts()) {
        return Err(Error::InvalidModel(format!(
            "state {:?} is outside the token budgets {:?}",
            x.counts(),
            space.bounds()
        )));
    }
    let idx = space.index(x.counts());
    Ok(ClassRates {
        service: tables.service_rates_at(idx),
        arrival: tables.arrival_rates_at(space.complement(idx)),
    })
}

/// Stationary law of the aggregate state under balanced fairness and the
/// insensitive load balancing.
#[derive(Clone, Debug)]
pub struct Stationary {
    /// Probabilities indexed like the state space.
    pub pi: Vec<f64>,
    /// Natural log of the normalization constant `G`.
    pub ln_g: f64,
}

impl Stationary {
    pub fn g(&self) -> f64 {
        self.ln_g.exp()
    }
}

/// `pi(x) = Phi(x) Lambda(l - x) / G`.
pub fn stationary_distribution(tables: &BalanceTables) -> Stationary {
    let space = tables.space();
    let total = space.total();
    let combined: Vec<f64> = (0..=total)
        .map(|n| tables.phi.log_scale(n) + tables.lambda.log_scale(total - n))
        .collect();
    let shift = combined.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut pi = vec![0.0; space.size()];
    let mut g = CompensatedSum::default();
    for n in 0..=total {
        let w = (combined[n as usize] - shift).exp();
        for &idx in space.level(n) {
            let idx = idx as usize;
            let v = tables.phi.mantissa(idx) * tables.lambda.mantissa(space.complement(idx)) * w;
            pi[idx] = v;
            g.add(v);
        }
    }
    let g = g.value();
    for p in &mut pi {
        *p /= g;
    }
    Stationary {
        pi,
        ln_g: g.ln() + shift,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::presets;
    use crate::model::{CompatModel, JobClass, JobType};

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    fn val(t: &LevelTable, space: &StateSpace, x: &[u32]) -> f64 {
        t.value(space.index(x), x.iter().sum())
    }

    #[test]
    fn phi_in_the_two_class_pool() {
        let m = presets::toy([2, 1]);
        let space = StateSpace::new(&m.tokens()).unwrap();
        let phi = build_phi_table(&m, &space);
        close(val(&phi, &space, &[0, 0]), 1.0);
        close(val(&phi, &space, &[1, 0]), 0.5);
        close(val(&phi, &space, &[1, 1]), 1.0 / 3.0);
        close(val(&phi, &space, &[2, 1]), 7.0 / 36.0);
    }

    #[test]
    fn phi_single_unit_server() {
        let m = presets::single_type_pool(&[1.0], 5, 1.0);
        let space = StateSpace::new(&m.tokens()).unwrap();
        let phi = build_phi_table(&m, &space);
        for x in 0..=5 {
            close(val(&phi, &space, &[x]), 1.0);
        }
    }

    #[test]
    fn lambda_in_the_two_class_pool() {
        let m = presets::toy([1, 1]);
        let space = StateSpace::new(&m.tokens()).unwrap();
        let lambda = build_lambda_table(&m, &space);
        close(val(&lambda, &space, &[0, 0]), 1.0);
        close(val(&lambda, &space, &[1, 0]), 1.0);
        close(val(&lambda, &space, &[0, 1]), 0.5);
        close(val(&lambda, &space, &[1, 1]), 0.75);
    }

    #[test]
    fn lambda_single_class_is_geometric() {
        let nu = 2.5;
        let m = presets::single_type_pool(&[1.0], 6, nu);
        let space = StateSpace::new(&m.tokens()).unwrap();
        let lambda = build_lambda_table(&m, &space);
        for y in 0..=6 {
            let expected = nu.powi(-(y as i32));
            assert!((val(&lambda, &space, &[y]) - expected).abs() < 1e-14 * expected.max(1.0));
        }
    }

    #[test]
    fn stationary_toy() {
        let m = presets::toy([1, 1]);
        let t = BalanceTables::build(&m).unwrap();
        let s = stationary_distribution(&t);
        let sp = t.space();
        close(s.g(), 11.0 / 6.0);
        close(s.pi[sp.index(&[1, 1])], 2.0 / 11.0);
        close(s.pi[sp.index(&[0, 1])], 3.0 / 11.0);
        close(s.pi.iter().sum(), 1.0);
    }

    #[test]
    fn stationary_single_server_is_uniform() {
        let m = presets::single_type_pool(&[1.0], 2, 1.0);
        let s = stationary_distribution(&BalanceTables::build(&m).unwrap());
        for p in s.pi {
            close(p, 1.0 / 3.0);
        }
    }

    #[test]
    fn stationary_without_tokens() {
        let m = CompatModel::new(
            vec![1.0],
            vec![JobType::new(1.0)],
            vec![JobClass::new(&[0], &[0], 1)],
        )
        .unwrap();
        let space = StateSpace::new(&[0]).unwrap();
        let phi = build_phi_table(&m, &space);
        let lambda = build_lambda_table(&m, &space);
        let t = BalanceTables {
            space: Arc::new(space),
            phi,
            lambda,
        };
        let s = stationary_distribution(&t);
        assert_eq!(s.pi, vec![1.0]);
    }

    #[test]
    fn class_rates_toy() {
        let m = presets::toy([1, 1]);
        let t = BalanceTables::build(&m).unwrap();
        let r = per_class_rates(&t, &AggState(vec![1, 1])).unwrap();
        assert_eq!(r.service.len(), 2);
        close(r.service[0].1, 1.5);
        close(r.service[1].1, 1.5);
        assert!(r.arrival.is_empty());

        let r = per_class_rates(&t, &AggState(vec![0, 0])).unwrap();
        assert!(r.service.is_empty());
        close(r.arrival[0].1, 2.0 / 3.0);
        close(r.arrival[1].1, 4.0 / 3.0);

        let r = per_class_rates(&t, &AggState(vec![1, 0])).unwrap();
        assert_eq!(r.service, vec![(0, m.mu_of(crate::model::ClassSubset::from_bits(1)))]);
    }

    #[test]
    fn out_of_box_state_is_rejected() {
        let t = BalanceTables::build(&presets::toy([1, 1])).unwrap();
        assert!(per_class_rates(&t, &AggState(vec![2, 0])).is_err());
    }

    #[test]
    fn large_budgets_stay_finite() {
        // Levels reach 400 tokens: raw values would underflow f64.
        let m = presets::single_type_pool(&[0.01, 0.02], 200, 0.05);
        let t = BalanceTables::build(&m).unwrap();
        let s = stationary_distribution(&t);
        assert!(s.ln_g.is_finite());
        assert!((s.pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(s.pi.iter().all(|p| p.is_finite() && *p >= 0.0));
    }

    #[test]
    fn arrival_rescaling_matches_rebuild() {
        let m = presets::two_type_pool(2, 0.8);
        let t = BalanceTables::build(&m).unwrap();
        let scaled = t.rescale_arrivals(1.7);
        let rebuilt = BalanceTables::build(&m.with_arrival_scale(1.7)).unwrap();
        let a = stationary_distribution(&scaled);
        let b = stationary_distribution(&rebuilt);
        for (p, q) in a.pi.iter().zip(&b.pi) {
            assert!((p - q).abs() < 1e-13);
        }
        assert!((a.ln_g - b.ln_g).abs() < 1e-12);
    }
}
