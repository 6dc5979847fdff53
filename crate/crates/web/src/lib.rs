//! Browser bindings: load curves, a simulation check and a chain certificate
//! for a handful of preset models. Every entry point returns a JSON string.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tokenpool::exact::BalanceTables;
use tokenpool::experiment::{sweep, ExperimentConfig, ModelSpec, Policy, SimulationSpec};
use tokenpool::model::presets;
use tokenpool::simulate::{replicate, Allocation, Routing, RunSpec, SimConfig};
use tokenpool::verify::{
    build_generator, check_irreducible, check_rate_identities, compare_product_form, residual,
    solve_ctmc,
};
use tokenpool::CompatModel;

const MAX_POINTS: usize = 200;
const MAX_EVENTS: u64 = 2_000_000;

/// Builds a preset at unit load with `tokens` tokens per class.
pub fn preset(name: &str, tokens: u32) -> Result<CompatModel, String> {
    if tokens == 0 {
        return Err("each class needs at least one token".into());
    }
    let m = match name {
        "toy" => presets::toy([tokens, tokens]).with_load(1.0),
        "half-pool" => presets::heterogeneous_half_pool(tokens, 1.0),
        "two-type" => presets::two_type_pool(tokens, 1.0),
        "overtaking" => presets::overtaking_example(tokens).with_load(1.0),
        _ => return Err(format!("unknown preset `{name}`")),
    };
    Ok(m)
}

#[derive(Serialize)]
struct Curve {
    policy: &'static str,
    beta: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct Curves {
    rho: Vec<f64>,
    curves: Vec<Curve>,
    errors: Vec<String>,
}

/// Average blocking of the exact policies on `points` loads evenly spaced in (0, rho_max].
pub fn curves_json(name: &str, tokens: u32, rho_max: f64, points: usize) -> Result<String, String> {
    if !(rho_max > 0.0 && rho_max.is_finite()) || points == 0 || points > MAX_POINTS {
        return Err(format!("need rho_max > 0 and 1..={MAX_POINTS} points"));
    }
    let model = preset(name, tokens)?;
    let rho: Vec<f64> = (1..=points).map(|i| rho_max * i as f64 / points as f64).collect();
    let policies = vec![Policy::ExactDynamic, Policy::StaticBest, Policy::StaticUniform, Policy::Ideal];
    let cfg = ExperimentConfig {
        policies: policies.clone(),
        rho_grid: rho.clone(),
        output: None,
        custom_assignment: None,
        model: ModelSpec::from_model(&model),
        simulation: SimulationSpec::default(),
    };
    let table = sweep(&cfg).map_err(|e| e.to_string())?;
    let mut errors: Vec<String> = table
        .failures()
        .map(|(row, msg)| format!("{} at rho = {}: {msg}", row.policy, row.rho))
        .collect();
    errors.dedup();
    let curves = policies
        .into_iter()
        .map(|p| Curve {
            policy: p.name(),
            beta: rho.iter().map(|&r| table.get(p, r).map(|v| v.beta)).collect(),
        })
        .collect();
    json(&Curves { rho, curves, errors })
}

#[derive(Serialize)]
struct Side {
    beta: f64,
    half_width: Option<f64>,
    blocking: Vec<f64>,
}

#[derive(Serialize)]
struct SimulationCheck {
    rho: f64,
    exact_beta: f64,
    exact_blocking: Vec<f64>,
    fcfs: Side,
    balanced_fairness: Side,
}

/// Simulated blocking under both service disciplines next to the exact
/// value, from `runs` independent runs of `events` measured events.
pub fn simulate_json(
    name: &str,
    tokens: u32,
    rho: f64,
    runs: usize,
    events: u64,
    seed: u64,
) -> Result<String, String> {
    if !(rho > 0.0 && rho.is_finite()) || runs < 2 || events == 0 || events > MAX_EVENTS {
        return Err(format!("need rho > 0, at least 2 runs and 1..={MAX_EVENTS} events"));
    }
    let model = preset(name, tokens)?.with_load(rho);
    let err = |e: tokenpool::Error| e.to_string();
    let tables = BalanceTables::build(&model).map_err(err)?;
    let exact = tokenpool::exact::performance_report(&model, &tables).map_err(err)?;
    let warmup = events / 2;
    let side = |allocation| -> Result<Side, String> {
        let spec = RunSpec {
            model: &model,
            routing: Routing::Tokens,
            tables: Some(&tables),
            config: SimConfig::new(allocation, warmup + events, warmup, seed),
        };
        let est = replicate(&spec, runs).map_err(err)?;
        Ok(Side {
            beta: est.beta.mean,
            half_width: est.beta.half_width,
            blocking: est.blocking.iter().map(|e| e.mean).collect(),
        })
    };
    json(&SimulationCheck {
        rho,
        exact_beta: exact.beta,
        exact_blocking: exact.blocking,
        fcfs: side(Allocation::Fcfs)?,
        balanced_fairness: side(Allocation::BalancedFairness)?,
    })
}

#[derive(Serialize)]
struct Certificate {
    states: usize,
    irreducible: bool,
    residual: Option<f64>,
    tv: Option<f64>,
    rate_residual: Option<f64>,
    ordering: Option<Vec<usize>>,
}

/// Solves the ordered token chain of a preset and compares it with the product form.
pub fn certify_json(name: &str, tokens: u32) -> Result<String, String> {
    let model = preset(name, tokens)?;
    let err = |e: tokenpool::Error| e.to_string();
    let gen = build_generator(&model).map_err(err)?;
    let mut cert = Certificate {
        states: gen.len(),
        irreducible: check_irreducible(&gen).irreducible,
        residual: None,
        tv: None,
        rate_residual: None,
        ordering: model.separability_ordering().ok(),
    };
    if cert.irreducible {
        let pi = solve_ctmc(&gen).map_err(err)?;
        let tables = BalanceTables::build(&model).map_err(err)?;
        cert.residual = Some(residual(&gen, &pi));
        cert.tv = Some(compare_product_form(&gen, &pi, &model, &tables).map_err(err)?.tv);
        cert.rate_residual = Some(check_rate_identities(&gen, &pi, &model, &tables).map_err(err)?.max());
    }
    json(&cert)
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

fn to_js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn curves(name: &str, tokens: u32, rho_max: f64, points: usize) -> Result<String, JsValue> {
    to_js(curves_json(name, tokens, rho_max, points))
}

#[wasm_bindgen]
pub fn simulate(
    name: &str,
    tokens: u32,
    rho: f64,
    runs: usize,
    events: u64,
    seed: u64,
) -> Result<String, JsValue> {
    to_js(simulate_json(name, tokens, rho, runs, events, seed))
}

#[wasm_bindgen]
pub fn certify(name: &str, tokens: u32) -> Result<String, JsValue> {
    to_js(certify_json(name, tokens))
}
