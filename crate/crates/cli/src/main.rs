use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use relins::experiment::{self, BatteryGrid, ScenarioConfig};
use relins::oracle::mc_settlement;
use relins::{social_cost_of, solve_ins, solve_so, thresholds, Error};

const DEFAULT_SEED: u64 = 20_240_601;

/// Reliability insurance contracts for renewable utilities.
#[derive(Debug, Parser)]
#[command(name = "relins", version)]
struct Cli {
    /// Seed for Monte Carlo settlement and randomized batteries.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Gauss-Legendre nodes per integration panel (overrides the config).
    #[arg(long, global = true)]
    quadrature_nodes: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the insurance contract for the market in a config file.
    Solve {
        config: PathBuf,
        /// Also settle this many simulated days and report sample means.
        #[arg(long, default_value_t = 0)]
        mc_days: usize,
    },
    /// Run the sweep in a config file and write its CSV.
    Sweep {
        config: PathBuf,
        /// Output path (overrides `output.path`).
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Check the solver against the brute-force oracle on random markets.
    Verify {
        #[arg(long, default_value_t = experiment::battery::BATTERY_SIZE)]
        count: usize,
    },
    /// Print the price thresholds for the market in a config file.
    Thresholds { config: PathBuf },
}

fn quiet() -> bool {
    std::env::var("REL_QUIET").is_ok_and(|v| !v.is_empty() && v != "0")
}

macro_rules! progress {
    ($($arg:tt)*) => {
        if !quiet() {
            eprintln!($($arg)*);
        }
    };
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigParse(_) => 3,
        Error::Schema(_)
        | Error::Domain(_)
        | Error::InvalidDistribution(_)
        | Error::InvalidMarket(_)
        | Error::Index { .. } => 4,
        Error::Io(_) => 5,
        Error::Infeasible(_) => 6,
        Error::NoBracket(_) | Error::Internal(_) => 7,
    }
}

fn load(path: &Path, nodes: Option<usize>) -> relins::Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::from_path(path)?;
    if nodes.is_some() {
        cfg.market.quadrature_nodes = nodes;
        cfg.validate()?;
    }
    Ok(cfg)
}

fn num(x: f64) -> String {
    match x {
        x if x.is_nan() => "nan".into(),
        x if x.is_infinite() && x > 0.0 => "inf".into(),
        x if x.is_infinite() => "-inf".into(),
        x => {
            let s = experiment::format_number(x);
            if s.contains(['.', 'e', 'E']) {
                s
            } else {
                format!("{s}.0")
            }
        }
    }
}

fn list<T, F: Fn(&T) -> String>(xs: &[T], f: F) -> String {
    format!("[{}]", xs.iter().map(f).collect::<Vec<_>>().join(", "))
}

fn solve(cli: &Cli, config: &Path, mc_days: usize) -> relins::Result<()> {
    let cfg = load(config, cli.quadrature_nodes)?;
    let market = cfg.base_market()?;
    let sol = solve_ins(&market)?;
    let mut out = String::new();
    let _ = writeln!(out, "regime = \"{}\"", sol.regime);
    let _ = writeln!(out, "r_star = {}", num(sol.r_star));
    let _ = writeln!(out, "r_social_optimum = {}", num(sol.social_optimum.r_star));
    let _ = writeln!(out, "lower_threshold = {}", num(sol.thresholds.lower));
    let _ = writeln!(out, "upper_threshold = {}", num(sol.thresholds.upper));
    if let Some(l) = sol.lambda {
        let _ = writeln!(out, "lambda = {}", num(l));
    }
    let _ = writeln!(out, "profit = {}", num(sol.profit));
    let _ = writeln!(out, "total_premium = {}", num(sol.total_premium));
    let _ = writeln!(out, "social_cost = {}", num(social_cost_of(&sol, &market)));
    let _ = writeln!(out, "\n[premiums]");
    for (k, row) in sol.premiums.rows().iter().enumerate() {
        let _ = writeln!(out, "type_{} = {}", k + 1, list(row, |x| num(*x)));
    }
    let _ = writeln!(out, "\n[ir_status]");
    for (k, row) in sol.binding.status.iter().enumerate() {
        let _ = writeln!(out, "type_{} = {}", k + 1, list(row, |s| format!("\"{}\"", s.as_str())));
    }
    if mc_days > 0 {
        progress!("settling {mc_days} days (seed {})", cli.seed);
        let rep = mc_settlement(&market, sol.r_star, &sol.premiums, mc_days, cli.seed)?;
        let _ = writeln!(out, "\n[monte_carlo]");
        let _ = writeln!(out, "days = {mc_days}");
        let _ = writeln!(out, "seed = {}", cli.seed);
        let _ = writeln!(out, "profit_mean = {}", num(rep.profit.mean));
        let _ = writeln!(out, "profit_std_err = {}", num(rep.profit.std_err));
        let _ = writeln!(out, "social_cost_mean = {}", num(rep.social_cost.mean));
        let _ = writeln!(out, "social_cost_std_err = {}", num(rep.social_cost.std_err));
    }
    print!("{out}");
    Ok(())
}

fn sweep(cli: &Cli, config: &Path, output: Option<&Path>) -> relins::Result<()> {
    let cfg = load(config, cli.quadrature_nodes)?;
    let out = match (output, &cfg.output) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(o)) => o.path.clone(),
        (None, None) => return Err(Error::Schema("no output path: set output.path or pass --output".into())),
    };
    progress!("running {} sweep points", cfg.points()?.len());
    let rows = experiment::run_to_path(&cfg, &out)?;
    let ok = rows.iter().filter(|r| r.status == experiment::RowStatus::Ok).count();
    progress!("wrote {} rows ({ok} solved) to {}", rows.len(), out.display());
    Ok(())
}

fn verify(cli: &Cli, count: usize) -> relins::Result<bool> {
    progress!("oracle battery: {count} markets, seed {}", cli.seed);
    let cases = experiment::run_oracle_battery(cli.seed, count, BatteryGrid::default());
    println!("case,types,periods,regime,solver_r,oracle_r,grid_step,solver_premium,oracle_premium,result");
    for c in &cases {
        println!(
            "{},{},{},{},{},{},{},{},{},{}",
            c.index,
            c.types,
            c.periods,
            c.regime.map(|r| r.as_str()).unwrap_or("none"),
            experiment::format_number(c.solver_r),
            experiment::format_number(c.oracle_r),
            experiment::format_number(c.grid_step),
            experiment::format_number(c.solver_premium),
            experiment::format_number(c.oracle_premium),
            if c.passed() { "pass" } else { "FAIL" }
        );
        if let Some(e) = &c.error {
            progress!("case {}: {e}", c.index);
        }
    }
    let passed = cases.iter().filter(|c| c.passed()).count();
    progress!("{passed}/{} cases agree", cases.len());
    Ok(passed == cases.len())
}

fn print_thresholds(cli: &Cli, config: &Path) -> relins::Result<()> {
    let cfg = load(config, cli.quadrature_nodes)?;
    let market = cfg.base_market()?;
    let so = solve_so(&market)?;
    let th = thresholds(&market, so.r_star)?;
    println!("r_social_optimum = {}", num(so.r_star));
    println!("lower_threshold = {}", num(th.lower));
    println!("upper_threshold = {}", num(th.upper));
    println!("regime = \"{}\"", relins::Regime::select(market.price(), &th));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve { config, mc_days } => solve(&cli, config, *mc_days).map(|_| true),
        Command::Sweep { config, output } => sweep(&cli, config, output.as_deref()).map(|_| true),
        Command::Verify { count } => verify(&cli, *count),
        Command::Thresholds { config } => print_thresholds(&cli, config).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
