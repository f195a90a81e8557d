//! Randomized small markets checked against the brute-force oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::benchmark::solve_profit_seeking;
use crate::contract::{solve_ins, Regime};
use crate::error::Result;
use crate::market::{Market, MarketParams, TypeProfile};
use crate::oracle::{oracle_ins, GridSpec};
use crate::supply::{OutputFactorDist, SupplyModel};

pub const BATTERY_SIZE: usize = 20;
pub const PREMIUM_REL_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryGrid {
    pub r_steps: usize,
    pub lambda_steps: usize,
    pub zoom_levels: usize,
}

impl Default for BatteryGrid {
    fn default() -> Self {
        BatteryGrid {
            r_steps: 401,
            lambda_steps: 33,
            zoom_levels: 1,
        }
    }
}

fn random_dist<R: Rng>(rng: &mut R) -> OutputFactorDist {
    match rng.random_range(0..3) {
        0 => OutputFactorDist::uniform(),
        1 => OutputFactorDist::trunc_normal(rng.random_range(0.3..0.7), rng.random_range(0.1..0.4))
            .expect("parameters lie in the valid range"),
        _ => {
            let n = rng.random_range(2..=3);
            let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let pts = raw.iter().map(|w| (rng.random_range(0.0..=1.0), w / total)).collect();
            OutputFactorDist::discrete(pts).expect("weights sum to one")
        }
    }
}

/// A feasible market with at most `max_types` types and `max_periods`
/// periods. The profit floor is a random fraction of the best attainable
/// no-insurance profit.
pub fn random_market<R: Rng>(rng: &mut R, max_types: usize, max_periods: usize) -> Market {
    loop {
        let k = rng.random_range(1..=max_types);
        let t = rng.random_range(1..=max_periods);
        let dist = random_dist(rng);
        let mean = dist.mean();
        let mut vols: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..t).map(|_| rng.random_range(5.0..30.0)).collect())
            .collect();
        for p in 0..t {
            let mut col: Vec<f64> = vols.iter().map(|v| v[p]).collect();
            col.sort_by(f64::total_cmp);
            for (v, x) in vols.iter_mut().zip(col) {
                v[p] = x;
            }
        }
        let types: Vec<TypeProfile> = vols
            .into_iter()
            .map(|v| {
                let d = (0..t).map(|_| rng.random_range(2.0..15.0)).collect();
                TypeProfile::new(v, d).expect("positive entries")
            })
            .collect();
        let v1_min = types[0].voll().iter().copied().fold(f64::INFINITY, f64::min);
        let cost = rng.random_range(0.5..1.5);
        // price high enough that the first unit of capacity pays off
        let p_floor = 1.05 * cost / (mean * t as f64).max(1e-3);
        if mean <= 0.0 || p_floor >= v1_min {
            continue;
        }
        let price = rng.random_range(p_floor..v1_min);
        let Ok(supply) = SupplyModel::iid(dist, t) else {
            continue;
        };
        let Ok(params) = MarketParams::new(cost, price, 0.0) else {
            continue;
        };
        let Ok(m) = Market::new(types, supply, params) else {
            continue;
        };
        let Ok((best, _)) = solve_profit_seeking(&m) else {
            continue;
        };
        if best.objective <= 0.0 {
            continue;
        }
        let xi = if rng.random_bool(0.25) {
            0.0
        } else {
            rng.random_range(0.0..0.8) * best.objective
        };
        if let Ok(m) = m.with_profit_floor(xi) {
            return m;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatteryCase {
    pub index: usize,
    pub types: usize,
    pub periods: usize,
    pub regime: Option<Regime>,
    pub solver_r: f64,
    pub solver_premium: f64,
    pub oracle_r: f64,
    pub oracle_premium: f64,
    pub grid_step: f64,
    pub capacity_ok: bool,
    pub premium_ok: bool,
    pub error: Option<String>,
}

impl BatteryCase {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.capacity_ok && self.premium_ok
    }
}

fn check(index: usize, market: &Market, grid: BatteryGrid) -> BatteryCase {
    let mut case = BatteryCase {
        index,
        types: market.num_types(),
        periods: market.periods(),
        regime: None,
        solver_r: f64::NAN,
        solver_premium: f64::NAN,
        oracle_r: f64::NAN,
        oracle_premium: f64::NAN,
        grid_step: f64::NAN,
        capacity_ok: false,
        premium_ok: false,
        error: None,
    };
    let run = || -> Result<(crate::contract::ContractSolution, f64, f64, f64)> {
        let sol = solve_ins(market)?;
        let spec = GridSpec::for_market(market, grid.r_steps, grid.lambda_steps, 0)?.with_zoom(grid.zoom_levels);
        let (r, prem) = oracle_ins(market, &spec)?;
        Ok((sol, r, prem, spec.final_step()))
    };
    match run() {
        Ok((sol, r, prem, step)) => {
            case.regime = Some(sol.regime);
            case.solver_r = sol.r_star;
            case.solver_premium = sol.total_premium;
            case.oracle_r = r;
            case.oracle_premium = prem;
            case.grid_step = step;
            case.capacity_ok = (r - sol.r_star).abs() <= step * (1.0 + 1e-9);
            case.premium_ok = (prem - sol.total_premium).abs() <= PREMIUM_REL_TOL * sol.total_premium.abs() + 1e-9;
        }
        Err(e) => case.error = Some(e.to_string()),
    }
    case
}

/// The markets of the battery for a seed, generated sequentially so the set
/// does not depend on thread scheduling.
pub fn battery_markets(seed: u64, count: usize) -> Vec<Market> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_market(&mut rng, 3, 2)).collect()
}

pub fn run_oracle_battery(seed: u64, count: usize, grid: BatteryGrid) -> Vec<BatteryCase> {
    battery_markets(seed, count)
        .par_iter()
        .enumerate()
        .map(|(i, m)| check(i, m, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn markets_are_feasible_and_reproducible() {
        let a = battery_markets(5, 6);
        let b = battery_markets(5, 6);
        assert_eq!(a, b);
        for m in &a {
            assert!(m.num_types() <= 3 && m.periods() <= 2);
            assert!(crate::contract::feasibility_check(m));
        }
    }

    #[test]
    fn small_battery_passes() {
        let cases = run_oracle_battery(17, 4, BatteryGrid::default());
        for c in &cases {
            assert!(c.passed(), "{c:?}");
        }
    }
}
