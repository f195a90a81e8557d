use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::{ScenarioConfig, SweepPoint};
use super::table::emit_csv;
use crate::benchmark::{solve_noins, solve_so};
use crate::contract::{social_cost_of, solve_ins, thresholds, Regime};
use crate::error::{Error, Result};
use crate::market::{Market, PremiumSchedule};
use crate::oracle::{oracle_ins, GridSpec};

/// Grid used when `oracle_check` is on.
const ORACLE_R_STEPS: usize = 401;
const ORACLE_LAMBDA_STEPS: usize = 33;
const ORACLE_ZOOM: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    /// No capacity meets the profit floor.
    Infeasible,
    /// The point does not define a valid market (e.g. price above a VOLL).
    Invalid,
    Error,
}

impl RowStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Infeasible => "infeasible",
            RowStatus::Invalid => "invalid",
            RowStatus::Error => "error",
        }
    }
}

/// Results at one sweep point. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub status: RowStatus,
    pub regime: Option<Regime>,
    pub lower_threshold: f64,
    pub upper_threshold: f64,
    pub lambda: f64,
    pub r_so: f64,
    pub r_noins: f64,
    pub r_ins: f64,
    pub social_so: f64,
    pub social_noins: f64,
    pub social_ins: f64,
    /// `100·(social_noins − social_ins)/social_noins`.
    pub social_reduction_pct: f64,
    pub total_premium: f64,
    pub profit_ins: f64,
    pub total_user_cost_noins: f64,
    pub total_user_cost_ins: f64,
    pub total_user_reduction_pct: f64,
    /// Per type: no-insurance utility at its own capacity.
    pub cost_noins: Vec<f64>,
    /// Per type: insurance utility, buying the own item.
    pub cost_ins_own: Vec<f64>,
    /// Per type: insurance utility, declining insurance.
    pub cost_ins_none: Vec<f64>,
    /// Per type: `100·(cost_noins − cost_ins_own)/cost_noins`.
    pub user_reduction_pct: Vec<f64>,
    /// Per type: `100·(cost_ins_none − cost_ins_own)/cost_ins_none`.
    pub insurance_benefit_pct: Vec<f64>,
    pub oracle_r_ins: f64,
    pub oracle_total_premium: f64,
}

pub fn reduction_pct(baseline: f64, value: f64) -> f64 {
    if baseline > 0.0 {
        100.0 * (baseline - value) / baseline
    } else {
        f64::NAN
    }
}

impl SweepRow {
    fn empty(point: SweepPoint, types: usize, status: RowStatus) -> Self {
        let nan = vec![f64::NAN; types];
        SweepRow {
            point,
            status,
            regime: None,
            lower_threshold: f64::NAN,
            upper_threshold: f64::NAN,
            lambda: f64::NAN,
            r_so: f64::NAN,
            r_noins: f64::NAN,
            r_ins: f64::NAN,
            social_so: f64::NAN,
            social_noins: f64::NAN,
            social_ins: f64::NAN,
            social_reduction_pct: f64::NAN,
            total_premium: f64::NAN,
            profit_ins: f64::NAN,
            total_user_cost_noins: f64::NAN,
            total_user_cost_ins: f64::NAN,
            total_user_reduction_pct: f64::NAN,
            cost_noins: nan.clone(),
            cost_ins_own: nan.clone(),
            cost_ins_none: nan.clone(),
            user_reduction_pct: nan.clone(),
            insurance_benefit_pct: nan,
            oracle_r_ins: f64::NAN,
            oracle_total_premium: f64::NAN,
        }
    }
}

fn status_of(e: &Error) -> RowStatus {
    match e {
        Error::Infeasible(_) => RowStatus::Infeasible,
        Error::InvalidMarket(_) | Error::InvalidDistribution(_) | Error::Domain(_) => RowStatus::Invalid,
        _ => RowStatus::Error,
    }
}

/// Solves every benchmark and the insurance contract at one market.
pub fn evaluate_market(market: &Market, point: SweepPoint, oracle_check: bool) -> SweepRow {
    let mut row = SweepRow::empty(point, market.num_types(), RowStatus::Ok);
    if let Err(e) = fill_row(market, oracle_check, &mut row) {
        row.status = status_of(&e);
    }
    row
}

fn fill_row(market: &Market, oracle_check: bool, row: &mut SweepRow) -> Result<()> {
    let so = solve_so(market)?;
    row.r_so = so.r_star;
    row.social_so = so.objective;
    let th = thresholds(market, so.r_star)?;
    row.lower_threshold = th.lower;
    row.upper_threshold = th.upper;

    let r_noins = solve_noins(market)?.r_star;
    row.r_noins = r_noins;
    row.social_noins = market.social_cost(r_noins)?;
    let none = PremiumSchedule::zeros(market.num_types(), market.periods());
    row.cost_noins = market.cost_report(r_noins, &none)?.per_type_noins;

    let sol = solve_ins(market)?;
    row.regime = Some(sol.regime);
    row.lambda = sol.lambda.unwrap_or(f64::NAN);
    row.r_ins = sol.r_star;
    row.social_ins = social_cost_of(&sol, market);
    row.total_premium = sol.total_premium;
    row.profit_ins = sol.profit;
    let rep = market.cost_report(sol.r_star, &sol.premiums)?;
    row.cost_ins_own = rep.per_type_own;
    row.cost_ins_none = rep.per_type_noins;

    row.social_reduction_pct = reduction_pct(row.social_noins, row.social_ins);
    row.total_user_cost_noins = row.cost_noins.iter().sum();
    row.total_user_cost_ins = row.cost_ins_own.iter().sum();
    row.total_user_reduction_pct = reduction_pct(row.total_user_cost_noins, row.total_user_cost_ins);
    row.user_reduction_pct = row
        .cost_noins
        .iter()
        .zip(&row.cost_ins_own)
        .map(|(b, v)| reduction_pct(*b, *v))
        .collect();
    row.insurance_benefit_pct = row
        .cost_ins_none
        .iter()
        .zip(&row.cost_ins_own)
        .map(|(b, v)| reduction_pct(*b, *v))
        .collect();

    if oracle_check {
        let grid = GridSpec::for_market(market, ORACLE_R_STEPS, ORACLE_LAMBDA_STEPS, 0)?.with_zoom(ORACLE_ZOOM);
        let (r, prem) = oracle_ins(market, &grid)?;
        row.oracle_r_ins = r;
        row.oracle_total_premium = prem;
    }
    Ok(())
}

/// Evaluates every sweep point, in parallel, returning rows in sweep order.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Vec<SweepRow>> {
    let points = cfg.points()?;
    let types = cfg.market.types.len();
    Ok(points
        .par_iter()
        .map(|pt| match cfg.build_market(pt) {
            Ok(m) => evaluate_market(&m, *pt, cfg.oracle_check),
            Err(e) => SweepRow::empty(*pt, types, status_of(&e)),
        })
        .collect())
}

/// Sidecar with the modelling conventions behind a result file.
fn metadata(cfg: &ScenarioConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("schema_version = {}\n", cfg.schema_version));
    out.push_str(&format!("crate_version = \"{}\"\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("quadrature_nodes = {}\n", cfg.quadrature_nodes()));
    out.push_str("medium_price_premiums = \"type-1 premium = lambda * (V_1 - p) * q, lambda in [0, 1], shared across periods\"\n");
    out.push_str(
        "heterogeneity_vols = \"lower half of types at V_1, upper half at V_K, odd middle type at v_sum / 2\"\n",
    );
    out.push_str("social_cost = \"c_r * r + sum_t sum_k V_k * expected lost load of type k\"\n");
    out
}

pub fn metadata_path(csv: &Path) -> PathBuf {
    let mut name = csv.as_os_str().to_owned();
    name.push(".meta.toml");
    PathBuf::from(name)
}

/// Runs a scenario and writes its CSV (plus a metadata sidecar) to `out`.
pub fn run_to_path(cfg: &ScenarioConfig, out: &Path) -> Result<Vec<SweepRow>> {
    let rows = run_scenario(cfg)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    emit_csv(&rows, cfg.market.types.len(), out)?;
    fs::write(metadata_path(out), metadata(cfg))?;
    Ok(rows)
}

/// Loads a config file and writes the CSV named in its `output.path`.
pub fn run_config(path: &Path) -> Result<Vec<SweepRow>> {
    let cfg = ScenarioConfig::from_path(path)?;
    let out = cfg
        .output
        .as_ref()
        .map(|o| o.path.clone())
        .ok_or_else(|| Error::Schema("output.path is required for a sweep".into()))?;
    run_to_path(&cfg, &out)
}
