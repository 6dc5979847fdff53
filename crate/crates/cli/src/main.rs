use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tokenpool::exact::BalanceTables;
use tokenpool::experiment::{load_config, sweep, to_csv_string, ExperimentConfig, Policy, SweepTable};
use tokenpool::verify::{
    build_generator, check_irreducible, check_rate_identities, compare_product_form,
    ordering_overtakes, residual, solve_ctmc,
};
use tokenpool::{Error, Result};

/// Blocking and occupancy of token-based load balancing in server pools.
#[derive(Parser)]
#[command(name = "tokenpool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file and print a summary of its model.
    Validate(Common),
    /// Exact metrics of the token bucket with balanced fairness over the load grid.
    Exact(SweepArgs),
    /// Simulated metrics over the load grid (default policy: dynamic-fcfs).
    Simulate(SweepArgs),
    /// Certify the product form on the ordered token chain of a small model.
    Verify(Common),
    /// All configured policies over the load grid.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Loads, as `0.5,1,1.5` or `start:stop:step`.
    #[arg(long, value_parser = parse_grid)]
    rho_grid: Option<Grid>,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    /// Independent runs per simulated point.
    #[arg(long)]
    runs: Option<usize>,
    /// Warm-up events per run.
    #[arg(long)]
    warmup: Option<u64>,
    /// Measured events per run.
    #[arg(long)]
    events: Option<u64>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination; `-` for standard output. Defaults to the config's output, else standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
struct Grid(Vec<f64>);

fn parse_grid(s: &str) -> std::result::Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("bad number `{t}`: {e}"));
    let parts: Vec<&str> = s.split(':').collect();
    if let [start, stop, step] = parts.as_slice() {
        let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
        if step.is_nan() || step <= 0.0 || stop < start {
            return Err("need start <= stop and a positive step".into());
        }
        let n = ((stop - start) / step + 1e-9).floor() as usize;
        // rounded to 12 digits so 0.1:0.3:0.1 gives 0.3 and not 0.30000000000000004
        return Ok(Grid(
            (0..=n)
                .map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12)
                .collect(),
        ));
    }
    s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect::<std::result::Result<_, _>>().map(Grid)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate(c) => validate(&c.config),
        Command::Exact(a) => run_sweep(a, Some(vec![Policy::ExactDynamic])),
        Command::Simulate(a) => {
            let default = (a.policies.is_none()).then(|| vec![Policy::DynamicFcfs]);
            run_sweep(a, default)
        }
        Command::Verify(c) => verify(&c.config),
        Command::Sweep(a) => run_sweep(a, None),
    }
}

fn load(path: &Path) -> Result<ExperimentConfig> {
    let cfg = load_config(path)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn validate(path: &Path) -> Result<ExitCode> {
    let cfg = load(path)?;
    let m = cfg.model()?;
    println!(
        "{} servers, {} types, {} classes, {} tokens, load {}",
        m.num_servers(),
        m.num_types(),
        m.num_classes(),
        m.total_tokens(),
        m.load()
    );
    match m.separability_ordering() {
        Ok(order) => println!("separable; class ordering {order:?}"),
        Err(e) => println!("{e}"),
    }
    let policies: Vec<&str> = cfg.policies.iter().map(|p| p.name()).collect();
    println!("policies: {}", policies.join(", "));
    println!("loads: {:?}", cfg.rho_grid);
    Ok(ExitCode::SUCCESS)
}

fn run_sweep(args: SweepArgs, forced: Option<Vec<Policy>>) -> Result<ExitCode> {
    let mut cfg = load(&args.common.config)?;
    if let Some(p) = &args.policies {
        cfg.policies = p.iter().map(|s| s.parse()).collect::<Result<_>>()?;
    } else if let Some(p) = forced {
        cfg.policies = p;
    }
    if let Some(g) = args.rho_grid {
        cfg.rho_grid = g.0;
    }
    let sim = &mut cfg.simulation;
    sim.runs = args.runs.unwrap_or(sim.runs);
    sim.warmup_events = args.warmup.unwrap_or(sim.warmup_events);
    sim.measured_events = args.events.unwrap_or(sim.measured_events);
    sim.seed = args.seed.unwrap_or(sim.seed);
    // overrides go through the same checks as the file
    let cfg = ExperimentConfig::from_toml_str(&cfg.to_toml_string()?)?;

    let table = sweep(&cfg)?;
    for (row, msg) in table.failures() {
        eprintln!("warning: {} at rho = {}: {msg}", row.policy, row.rho);
    }
    write_table(&table, args.out.or(cfg.output.clone()))?;
    Ok(ExitCode::SUCCESS)
}

fn write_table(table: &SweepTable, out: Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) if p.as_os_str() != "-" => {
            tokenpool::experiment::emit_csv(table, &p)?;
            eprintln!("wrote {} rows to {}", table.rows.len(), p.display());
        }
        _ => print!("{}", to_csv_string(table)),
    }
    Ok(())
}

const CERTIFY_TOLERANCE: f64 = 1e-9;

fn verify(path: &Path) -> Result<ExitCode> {
    let cfg = load(path)?;
    let m = cfg.model()?;
    let gen = build_generator(&m)?;
    println!("ordered states: {}", gen.len());
    println!("generator row sums: max {:.3e}", gen.max_row_sum());
    let irr = check_irreducible(&gen);
    if let Some((a, b)) = &irr.witness {
        println!(
            "reducible: {} components; ({:?}, {:?}) and ({:?}, {:?}) do not communicate",
            irr.components, a.c, a.t, b.c, b.t
        );
        return Ok(ExitCode::FAILURE);
    }
    println!("irreducible");
    let pi = solve_ctmc(&gen)?;
    println!("stationary residual: {:.3e}", residual(&gen, &pi));
    let tables = BalanceTables::build(&m)?;
    let pf = compare_product_form(&gen, &pi, &m, &tables)?;
    println!(
        "product form: tv {:.3e}, aggregate gap {:.3e}, phi sums {:.3e}, lambda sums {:.3e}",
        pf.tv, pf.aggregate_gap, pf.phi_sum_gap, pf.lambda_sum_gap
    );
    let rates = check_rate_identities(&gen, &pi, &m, &tables)?;
    println!(
        "rate identities: service {:.3e}, arrival {:.3e}, solved service {:.3e}, solved arrival {:.3e}",
        rates.service, rates.arrival, rates.solved_service, rates.solved_arrival
    );
    let mut ok = pf.max_deviation() < CERTIFY_TOLERANCE && rates.max() < CERTIFY_TOLERANCE;
    match m.separability_ordering() {
        Ok(order) => {
            let stuck: Vec<_> = ordering_overtakes(&gen, &m, &order)
                .into_iter()
                .filter(|t| t.2 <= 0.0)
                .collect();
            if stuck.is_empty() {
                println!("class ordering {order:?}: every overtake has a positive rate");
            } else {
                ok = false;
                for (later, earlier, _) in stuck {
                    println!("class ordering {order:?}: class {later} cannot overtake class {earlier}");
                }
            }
        }
        Err(e @ Error::NotSeparable(..)) => println!("{e}"),
        Err(e) => return Err(e),
    }
    println!("{}", if ok { "certified" } else { "NOT certified" });
    Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
