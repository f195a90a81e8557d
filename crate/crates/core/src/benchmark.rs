//! Benchmark capacity problems: the social optimum, the regulated utility
//! without insurance, and the profit-seeking utility.
//!
//! All three objectives are one-dimensional and concave/convex in capacity
//! with monotone derivatives, so every search is a bisection on the sign of
//! a derivative or of a constraint.

use crate::error::{Error, Result};
use crate::market::{Market, PremiumSchedule};

pub(crate) const MAX_ITERATIONS: usize = 200;
pub(crate) const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkSolution {
    pub r_star: f64,
    /// Social cost for the social optimum; profit for the utility problems.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
    pub bracket: (f64, f64),
}

impl BenchmarkSolution {
    fn at_zero(objective: f64) -> Self {
        BenchmarkSolution {
            r_star: 0.0,
            objective,
            converged: true,
            iterations: 0,
            bracket: (0.0, 0.0),
        }
    }
}

/// Result of a bisection on a monotone predicate.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Bracket {
    /// Predicate is false here.
    pub lo: f64,
    /// Predicate is true here.
    pub hi: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn bracket_tol(hi: f64) -> f64 {
    1e-13 * hi.max(1.0)
}

/// Narrows `[lo, hi]` around the point where `pred` switches from false to
/// true. Requires `pred(lo) == false` and `pred(hi) == true`.
pub(crate) fn bisect<P: FnMut(f64) -> bool>(mut lo: f64, mut hi: f64, mut pred: P) -> Bracket {
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS && hi - lo > bracket_tol(hi) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
        iterations += 1;
    }
    Bracket {
        lo,
        hi,
        iterations,
        converged: hi - lo <= bracket_tol(hi) || 0.5 * (lo + hi) <= lo || 0.5 * (lo + hi) >= hi,
    }
}

/// Doubles `start` until `pred` holds.
pub(crate) fn grow_until<P: FnMut(f64) -> bool>(start: f64, what: &str, mut pred: P) -> Result<f64> {
    let mut hi = start;
    for _ in 0..=MAX_DOUBLINGS {
        if pred(hi) {
            return Ok(hi);
        }
        hi *= 2.0;
    }
    Err(Error::NoBracket(format!("{what}: no sign change up to r = {hi:e}")))
}

/// Initial upper search bound: ten times the peak demand divided by the 1st
/// percentile of the output factor (clamped to at least 0.01).
pub(crate) fn initial_upper_bound(market: &Market) -> f64 {
    let q01 = (0..market.periods())
        .map(|t| {
            let d = market.supply().dist(t);
            if d.is_continuous() {
                d.quantile(0.01)
            } else {
                1.0
            }
        })
        .fold(f64::INFINITY, f64::min)
        .max(0.01);
    let peak = market.total_demand().iter().copied().fold(0.0, f64::max);
    10.0 * peak / q01
}

/// Absolute slack used when comparing a profit against the floor; covers the
/// rounding noise of summing period expectations.
pub(crate) fn profit_eps(market: &Market) -> f64 {
    let revenue_scale: f64 = market.price() * market.total_demand().iter().sum::<f64>();
    1e-13 * (1.0 + market.profit_floor() + revenue_scale)
}

/// Largest `r ≥ from` with `f(r) ≥ level − eps`, where `f` is nonincreasing
/// on `[from, ∞)` and `f(from) ≥ level − eps`.
pub(crate) fn largest_crossing<F: Fn(f64) -> f64>(
    market: &Market,
    from: f64,
    level: f64,
    eps: f64,
    what: &str,
    f: F,
) -> Result<Bracket> {
    let feasible = |r: f64| f(r) >= level - eps;
    let start = initial_upper_bound(market).max(2.0 * from + 1.0);
    let hi = grow_until(start, what, |r| !feasible(r))?;
    Ok(bisect(from, hi, |r| !feasible(r)))
}

impl Market {
    /// `c_r − Σ_t w^t · d/dr E[s^t]` with `w^t` the demand-weighted VOLL;
    /// nondecreasing in `r`.
    pub(crate) fn social_cost_slope(&self, r: f64) -> f64 {
        let slopes = self.supply_slope(r);
        self.capacity_cost()
            - slopes
                .iter()
                .enumerate()
                .map(|(t, s)| self.lost_load_weight(t) * s)
                .sum::<f64>()
    }

    /// `d/dr f^No(r) = p Σ_t d/dr E[s^t] − c_r`; nonincreasing in `r`.
    pub(crate) fn noins_profit_slope(&self, r: f64) -> f64 {
        self.price() * self.supply_slope(r).iter().sum::<f64>() - self.capacity_cost()
    }

    /// Capacity maximizing `f^No`, bracketed from below; `hi` is the smallest
    /// maximizer when the top is flat.
    pub(crate) fn noins_profit_peak(&self) -> Result<Bracket> {
        if self.noins_profit_slope(0.0) <= 0.0 {
            return Ok(Bracket {
                lo: 0.0,
                hi: 0.0,
                iterations: 0,
                converged: true,
            });
        }
        let hi = grow_until(initial_upper_bound(self), "profit peak", |r| {
            self.noins_profit_slope(r) <= 0.0
        })?;
        Ok(bisect(0.0, hi, |r| self.noins_profit_slope(r) <= 0.0))
    }
}

/// Minimizes the social cost `c_r·r + Σ_t Σ_k V_k^t E[D_k^t − d_k^t]`.
pub fn solve_so(market: &Market) -> Result<BenchmarkSolution> {
    if market.social_cost_slope(0.0) >= 0.0 {
        return Ok(BenchmarkSolution::at_zero(market.social_cost(0.0)?));
    }
    let hi = grow_until(initial_upper_bound(market), "social optimum", |r| {
        market.social_cost_slope(r) >= 0.0
    })?;
    let b = bisect(0.0, hi, |r| market.social_cost_slope(r) >= 0.0);
    let r = 0.5 * (b.lo + b.hi);
    Ok(BenchmarkSolution {
        r_star: r,
        objective: market.social_cost(r)?,
        converged: b.converged,
        iterations: b.iterations,
        bracket: (b.lo, b.hi),
    })
}

/// Largest capacity whose no-insurance profit still meets the floor.
///
/// Fails with [`Error::Infeasible`] when `max_r f^No(r) < ξ`.
pub fn solve_noins(market: &Market) -> Result<BenchmarkSolution> {
    let peak = market.noins_profit_peak()?;
    let r_peak = peak.hi;
    let eps = profit_eps(market);
    let xi = market.profit_floor();
    let f = |r: f64| market.noins_profit_at(r, &market.expected_supply_unchecked(r));
    let best = f(r_peak);
    if best < xi - eps {
        return Err(Error::Infeasible(format!(
            "maximum no-insurance profit {best} is below the floor {xi}"
        )));
    }
    let b = largest_crossing(market, r_peak, xi, eps, "no-insurance root", f)?;
    Ok(BenchmarkSolution {
        r_star: b.lo,
        objective: f(b.lo),
        converged: b.converged,
        iterations: peak.iterations + b.iterations,
        bracket: (b.lo, b.hi),
    })
}

/// Profit-maximizing capacity with every premium at its IR upper bound.
/// Premium revenue then exactly offsets expected reimbursement, so the
/// capacity maximizes `f^No`.
pub fn solve_profit_seeking(market: &Market) -> Result<(BenchmarkSolution, PremiumSchedule)> {
    let peak = market.noins_profit_peak()?;
    let r = peak.hi;
    let q = market.shortfall_fraction(r)?;
    let p = market.price();
    let rows = market
        .types()
        .iter()
        .map(|ty| ty.voll().iter().zip(&q).map(|(v, q)| ((v - p) * q).max(0.0)).collect())
        .collect();
    let premiums = PremiumSchedule::new(rows)?;
    Ok((
        BenchmarkSolution {
            r_star: r,
            objective: market.utility_profit_ins(r, &premiums)?,
            converged: peak.converged,
            iterations: peak.iterations,
            bracket: (peak.lo, peak.hi),
        },
        premiums,
    ))
}
