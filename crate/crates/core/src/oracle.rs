//! Brute-force cross-checks: capacity grids for the social optimum and the
//! insurance problem, and Monte Carlo settlement of realized days.
//!
//! The insurance grid keeps the IC structure (every premium is the type-1
//! premium plus its VOLL gap times the shortfall fraction) and scans the
//! type-1 premium as `λ·(V_1 − p)·q` with `λ ∈ [0, 1]`. It never looks at the
//! price thresholds.
//!
//! Monte Carlo draws use ChaCha8 with one stream per fixed-size chunk of days,
//! so results are bit-identical for a given seed regardless of thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::market::{Market, PremiumSchedule};
use crate::supply::OutputFactorDist;

/// Days simulated per RNG stream.
pub const MC_CHUNK: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    r_min: f64,
    r_max: f64,
    r_steps: usize,
    lambda_steps: usize,
    mc_days: usize,
    zoom_levels: usize,
}

impl GridSpec {
    pub fn new(r_min: f64, r_max: f64, r_steps: usize, lambda_steps: usize, mc_days: usize) -> Result<Self> {
        if !(r_min >= 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(Error::Domain(format!("bad capacity range [{r_min}, {r_max}]")));
        }
        if r_steps < 2 || lambda_steps < 2 {
            return Err(Error::Domain("grid needs at least two steps per axis".into()));
        }
        Ok(GridSpec {
            r_min,
            r_max,
            r_steps,
            lambda_steps,
            mc_days,
            zoom_levels: 0,
        })
    }

    /// Range `[0, max(p·ΣD_a, Σ w·D_a)/c_r]`: beyond it the utility cannot
    /// break even and capacity alone costs more than serving nobody.
    pub fn for_market(market: &Market, r_steps: usize, lambda_steps: usize, mc_days: usize) -> Result<Self> {
        let revenue = market.price() * market.total_demand().iter().sum::<f64>();
        let lost: f64 = (0..market.periods())
            .map(|t| market.lost_load_weight(t) * market.total_demand()[t])
            .sum();
        GridSpec::new(
            0.0,
            revenue.max(lost) / market.capacity_cost(),
            r_steps,
            lambda_steps,
            mc_days,
        )
    }

    /// Each zoom level re-grids the two cells around the current best point.
    pub fn with_zoom(mut self, levels: usize) -> Self {
        self.zoom_levels = levels;
        self
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn r_steps(&self) -> usize {
        self.r_steps
    }

    pub fn lambda_steps(&self) -> usize {
        self.lambda_steps
    }

    pub fn mc_days(&self) -> usize {
        self.mc_days
    }

    pub fn zoom_levels(&self) -> usize {
        self.zoom_levels
    }

    /// Spacing of the coarse grid.
    pub fn step(&self) -> f64 {
        (self.r_max - self.r_min) / (self.r_steps - 1) as f64
    }

    /// Spacing of the finest grid after all zoom levels.
    pub fn final_step(&self) -> f64 {
        let shrink = 2.0 / (self.r_steps - 1) as f64;
        self.step() * shrink.powi(self.zoom_levels as i32)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

/// Grid minimization with zoom. `score` returns `None` for infeasible points.
/// Near-ties go to the larger capacity.
fn zoomed_argmin<F>(grid: &GridSpec, score: F) -> Option<(f64, f64)>
where
    F: Fn(f64) -> Option<f64> + Sync,
{
    let (mut lo, mut hi) = (grid.r_min, grid.r_max);
    let mut best: Option<(f64, f64)> = None;
    for _ in 0..=grid.zoom_levels {
        let pts = linspace(lo, hi, grid.r_steps);
        let vals: Vec<Option<f64>> = pts.par_iter().map(|r| score(*r)).collect();
        for (r, v) in pts.iter().zip(vals) {
            let Some(v) = v else { continue };
            let better = match best {
                None => true,
                Some((_, b)) => v <= b + 1e-12 * b.abs().max(1.0),
            };
            if better {
                best = Some((*r, v));
            }
        }
        let (r, _) = best?;
        let step = (hi - lo) / (grid.r_steps - 1) as f64;
        lo = (r - step).max(grid.r_min);
        hi = (r + step).min(grid.r_max);
    }
    best
}

/// Capacity minimizing the social cost over the grid.
pub fn oracle_so(market: &Market, grid: &GridSpec) -> f64 {
    zoomed_argmin(grid, |r| {
        Some(market.social_cost_at(r, &market.expected_supply_unchecked(r)))
    })
    .map(|(r, _)| r)
    .unwrap_or(grid.r_min)
}

/// Smallest total premium meeting the profit floor at capacity `r`, scanning
/// `λ` and refining the first feasible cell by bisection.
fn min_premium_at(market: &Market, r: f64, lambda_steps: usize) -> Option<f64> {
    let es = market.expected_supply_unchecked(r);
    let q = market.shortfall_from_supply(&es);
    let p = market.price();
    let v1 = market.types()[0].voll();
    let total = |lambda: f64| -> f64 {
        let mut sum = 0.0;
        for ty in market.types() {
            for t in 0..market.periods() {
                let pi = lambda * (v1[t] - p) * q[t] + (ty.voll()[t] - v1[t]) * q[t];
                sum += pi * ty.demand()[t];
            }
        }
        sum
    };
    let others = market.noins_profit_at(r, &es) - market.reimbursement_at(&es).iter().sum::<f64>();
    let xi = market.profit_floor();
    let slack = 1e-12 * (1.0 + xi.abs() + others.abs());
    let feasible = |lambda: f64| total(lambda) + others >= xi - slack;
    let lambdas = linspace(0.0, 1.0, lambda_steps);
    let first = lambdas.iter().position(|l| feasible(*l))?;
    if first == 0 {
        return Some(total(0.0));
    }
    let (mut lo, mut hi) = (lambdas[first - 1], lambdas[first]);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(total(hi))
}

/// Capacity and total premium minimizing premiums subject to the profit
/// floor, over the grid.
pub fn oracle_ins(market: &Market, grid: &GridSpec) -> Result<(f64, f64)> {
    zoomed_argmin(grid, |r| min_premium_at(market, r, grid.lambda_steps))
        .ok_or_else(|| Error::Infeasible("no grid capacity meets the profit floor with valid premiums".into()))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McStat {
    pub mean: f64,
    pub std_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub days: usize,
    pub profit: McStat,
    pub social_cost: McStat,
    /// Realized daily cost of each type buying its own item.
    pub type_cost_own: Vec<McStat>,
    /// Realized daily cost of each type without insurance.
    pub type_cost_noins: Vec<McStat>,
    /// Delivered energy per period.
    pub supply: Vec<McStat>,
}

/// Running mean and sum of squared deviations for several statistics.
#[derive(Debug, Clone)]
struct Moments {
    n: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(width: usize) -> Self {
        Moments {
            n: 0.0,
            mean: vec![0.0; width],
            m2: vec![0.0; width],
        }
    }

    fn push(&mut self, x: &[f64]) {
        self.n += 1.0;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let d = x - *m;
            *m += d / self.n;
            *s += d * (x - *m);
        }
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0.0 {
            return;
        }
        let n = self.n + other.n;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.n / n;
            self.m2[i] += other.m2[i] + d * d * self.n * other.n / n;
        }
        self.n = n;
    }

    fn stat(&self, i: usize) -> McStat {
        let var = if self.n > 1.0 { self.m2[i] / (self.n - 1.0) } else { 0.0 };
        McStat {
            mean: self.mean[i],
            std_err: (var / self.n).sqrt(),
        }
    }
}

fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64);
    rng
}

/// Runs `days` draws split into fixed chunks, each with its own stream, and
/// merges chunk moments in chunk order.
fn simulate<F>(days: usize, seed: u64, width: usize, day: F) -> Moments
where
    F: Fn(&mut ChaCha8Rng, &mut [f64]) + Sync,
{
    let chunks = days.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = chunk_rng(seed, c);
            let n = MC_CHUNK.min(days - c * MC_CHUNK);
            let mut acc = Moments::new(width);
            let mut row = vec![0.0; width];
            for _ in 0..n {
                day(&mut rng, &mut row);
                acc.push(&row);
            }
            acc
        })
        .collect();
    let mut total = Moments::new(width);
    for p in &parts {
        total.merge(p);
    }
    total
}

/// Settles `days` independent days at capacity `r` under premiums `pi`.
pub fn mc_settlement(market: &Market, r: f64, pi: &PremiumSchedule, days: usize, seed: u64) -> Result<McReport> {
    pi.check_shape(market)?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("capacity must be nonnegative, got {r}")));
    }
    if days == 0 {
        return Err(Error::Domain("need at least one simulated day".into()));
    }
    let k_n = market.num_types();
    let t_n = market.periods();
    let width = 2 + 2 * k_n + t_n;
    let p = market.price();
    let c = market.capacity_cost();
    let types = market.types();
    let moments = simulate(days, seed, width, |rng, row| {
        row.fill(0.0);
        row[0] = -c * r;
        row[1] = c * r;
        for t in 0..t_n {
            let da = market.total_demand()[t];
            let theta = market.supply().dist(t).sample(rng);
            let s = da.min(r * theta);
            row[2 + 2 * k_n + t] = s;
            row[0] += p * s;
            for (k, ty) in types.iter().enumerate() {
                let (v, d) = (ty.voll()[t], ty.demand()[t]);
                let served = d * s / da;
                let lost = d - served;
                let premium = pi.get(k, t) * d;
                row[0] += premium - (v - p) * lost;
                row[1] += v * lost;
                row[2 + k] += premium + p * served + v * lost - (v - p) * lost;
                row[2 + k_n + k] += p * served + v * lost;
            }
        }
    });
    Ok(McReport {
        days,
        profit: moments.stat(0),
        social_cost: moments.stat(1),
        type_cost_own: (0..k_n).map(|k| moments.stat(2 + k)).collect(),
        type_cost_noins: (0..k_n).map(|k| moments.stat(2 + k_n + k)).collect(),
        supply: (0..t_n).map(|t| moments.stat(2 + 2 * k_n + t)).collect(),
    })
}

/// Sample mean of `min(D, r·Θ)` over `draws` draws.
pub fn mc_expected_supply(dist: &OutputFactorDist, r: f64, demand: f64, draws: usize, seed: u64) -> McStat {
    simulate(draws, seed, 1, |rng, row| {
        row[0] = demand.min(r * dist.sample(rng));
    })
    .stat(0)
}
