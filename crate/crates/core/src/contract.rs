//! Optimal insurance contract for the regulated utility.
//!
//! The optimal capacity depends on where the retail price sits relative to
//! two thresholds computed at the social optimum `r†`:
//!
//! * `p ≤ L̲`: largest capacity with `f^No(r) = ξ`, premiums at their IR caps;
//! * `L̲ < p < L̄`: the social optimum `r†`, premiums scaled by `λ ∈ [0,1]`;
//! * `p ≥ L̄`: largest root of `h(r) = ξ`, type-1 premiums at zero.

use std::fmt;

use crate::benchmark::{largest_crossing, profit_eps, solve_noins, solve_so, BenchmarkSolution};
use crate::error::{Error, Result};
use crate::market::{Market, PremiumSchedule};
use crate::validity::IrReport;

/// Certificate tolerance on `|f^Ins − ξ|`, scaled by `max(1, ξ)`.
pub const PROFIT_TOL: f64 = 1e-8;
/// How far `λ` may stray outside `[0, 1]` before it is treated as a bug.
pub const LAMBDA_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    LowPrice,
    MediumPrice,
    HighPrice,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::LowPrice => "low",
            Regime::MediumPrice => "medium",
            Regime::HighPrice => "high",
        }
    }

    /// Ties go to the outer regimes.
    pub fn select(price: f64, thresholds: &Thresholds) -> Regime {
        if price <= thresholds.lower {
            Regime::LowPrice
        } else if price >= thresholds.upper {
            Regime::HighPrice
        } else {
            Regime::MediumPrice
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Price thresholds `(L̲, L̄)`. `lower` is `+∞` when the social optimum
/// delivers no energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContractSolution {
    pub r_star: f64,
    pub premiums: PremiumSchedule,
    pub regime: Regime,
    pub thresholds: Thresholds,
    pub profit: f64,
    /// `Σ_k Σ_t π_k^t D_k^t`.
    pub total_premium: f64,
    pub binding: IrReport,
    /// Medium-price scaling of the type-1 premium; `None` in the other regimes.
    pub lambda: Option<f64>,
    pub social_optimum: BenchmarkSolution,
}

pub fn thresholds(market: &Market, r_dagger: f64) -> Result<Thresholds> {
    let es = market.expected_supply(r_dagger)?;
    let xi = market.profit_floor();
    let fixed = market.capacity_cost() * r_dagger + xi;
    let served: f64 = es.iter().sum();
    let lower = if served > 0.0 { fixed / served } else { f64::INFINITY };
    let v1 = market.types()[0].voll();
    let unserved: f64 = (0..market.periods())
        .map(|t| v1[t] * (market.total_demand()[t] - es[t]))
        .sum();
    let upper = (fixed + unserved) / market.total_demand().iter().sum::<f64>();
    Ok(Thresholds { lower, upper })
}

/// True when some capacity lets the utility reach `ξ` with every premium at
/// its IR cap. At the caps premium revenue equals expected reimbursement, so
/// this is `max_r f^No(r) ≥ ξ`.
pub fn feasibility_check(market: &Market) -> bool {
    match market.noins_profit_peak() {
        Ok(peak) => {
            let best = market.noins_profit_at(peak.hi, &market.expected_supply_unchecked(peak.hi));
            best >= market.profit_floor() - profit_eps(market)
        }
        Err(_) => false,
    }
}

pub fn recover_premiums(market: &Market, r_star: f64, regime: Regime) -> Result<PremiumSchedule> {
    recover_premiums_with_lambda(market, r_star, regime).map(|(pi, _)| pi)
}

/// [`recover_premiums`] also returning the medium-price scale `λ`.
pub fn recover_premiums_with_lambda(
    market: &Market,
    r_star: f64,
    regime: Regime,
) -> Result<(PremiumSchedule, Option<f64>)> {
    let es = market.expected_supply(r_star)?;
    let q = market.shortfall_from_supply(&es);
    let p = market.price();
    let v1 = market.types()[0].voll().to_vec();
    let build = |type1: &dyn Fn(usize) -> f64| {
        let rows = market
            .types()
            .iter()
            .map(|ty| {
                (0..market.periods())
                    .map(|t| (type1(t) + (ty.voll()[t] - v1[t]) * q[t]).max(0.0))
                    .collect()
            })
            .collect();
        PremiumSchedule::from_rows_unchecked(rows)
    };
    match regime {
        Regime::LowPrice => Ok((build(&|t| (v1[t] - p) * q[t]), None)),
        Regime::HighPrice => Ok((build(&|_| 0.0), None)),
        Regime::MediumPrice => {
            // f^Ins = λ·A + f^l + f^No − Σ_t E[C_s^t], linear in λ
            let span: f64 = (0..market.periods())
                .map(|t| (v1[t] - p) * market.total_demand()[t] * q[t])
                .sum();
            let base = build(&|_| 0.0).total(market);
            let reimb: f64 = market.reimbursement_at(&es).iter().sum();
            let need = market.profit_floor() - market.noins_profit_at(r_star, &es) + reimb - base;
            let lambda = if span > 0.0 { need / span } else { 0.0 };
            if !(-LAMBDA_TOL..=1.0 + LAMBDA_TOL).contains(&lambda) {
                return Err(Error::Internal(format!(
                    "medium-price premium scale {lambda} outside [0, 1]"
                )));
            }
            let lambda = lambda.clamp(0.0, 1.0);
            Ok((build(&|t| lambda * (v1[t] - p) * q[t]), Some(lambda)))
        }
    }
}

/// `h(r) = f^No(r) − Σ_t (V_1^t − p)·(D_a^t − E[s^t])`: the utility's profit
/// when type-1 premiums are zero and the others sit at their IC levels.
pub(crate) fn high_price_profit(market: &Market, r: f64) -> f64 {
    let es = market.expected_supply_unchecked(r);
    let v1 = market.types()[0].voll();
    let p = market.price();
    let extra: f64 = (0..market.periods())
        .map(|t| (v1[t] - p) * (market.total_demand()[t] - es[t]))
        .sum();
    market.noins_profit_at(r, &es) - extra
}

fn high_price_capacity(market: &Market, r_dagger: f64) -> Result<f64> {
    let eps = profit_eps(market);
    let xi = market.profit_floor();
    let f = |r: f64| high_price_profit(market, r);
    let at_dagger = f(r_dagger);
    if at_dagger < xi - eps {
        return Err(Error::Infeasible(format!(
            "high-price regime: h(r†) = {at_dagger} below the floor {xi}"
        )));
    }
    Ok(largest_crossing(market, r_dagger, xi, eps, "high-price root", f)?.lo)
}

pub fn solve_ins(market: &Market) -> Result<ContractSolution> {
    if !feasibility_check(market) {
        return Err(Error::Infeasible(format!(
            "no capacity reaches the profit floor {}",
            market.profit_floor()
        )));
    }
    let so = solve_so(market)?;
    let th = thresholds(market, so.r_star)?;
    let regime = Regime::select(market.price(), &th);
    let r_star = match regime {
        Regime::LowPrice => solve_noins(market)?.r_star,
        Regime::MediumPrice => so.r_star,
        Regime::HighPrice => high_price_capacity(market, so.r_star)?,
    };
    let (premiums, lambda) = recover_premiums_with_lambda(market, r_star, regime)?;

    let es = market.expected_supply(r_star)?;
    let q = market.shortfall_from_supply(&es);
    let total_premium = premiums.total(market);
    let profit = total_premium + market.noins_profit_at(r_star, &es) - market.reimbursement_at(&es).iter().sum::<f64>();
    let xi = market.profit_floor();
    if (profit - xi).abs() > PROFIT_TOL * xi.max(1.0) {
        return Err(Error::Internal(format!(
            "{regime} regime: profit {profit} misses the floor {xi} at r = {r_star}"
        )));
    }
    let ic = market.ic_at(&q, &premiums);
    let binding = market.ir_at(&q, &premiums);
    if !ic.satisfied || !binding.satisfied {
        return Err(Error::Internal(format!(
            "{regime} regime: schedule fails IC/IR (IC residual {})",
            ic.max_residual
        )));
    }
    Ok(ContractSolution {
        r_star,
        premiums,
        regime,
        thresholds: th,
        profit,
        total_premium,
        binding,
        lambda,
        social_optimum: so,
    })
}

/// Social cost evaluated at the contract's capacity.
pub fn social_cost_of(solution: &ContractSolution, market: &Market) -> f64 {
    let r = solution.r_star;
    market.social_cost_at(r, &market.expected_supply_unchecked(r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{MarketParams, TypeProfile};
    use crate::supply::{OutputFactorDist, SupplyModel};
    use crate::validity::IrStatus;

    fn four_types(v: [f64; 4], price: f64, xi: f64, periods: usize) -> Market {
        Market::new(
            v.iter()
                .map(|v| TypeProfile::flat(*v, 10.0, periods).unwrap())
                .collect(),
            SupplyModel::iid(OutputFactorDist::uniform(), periods).unwrap(),
            MarketParams::new(1.0, price, xi).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn deterministic_supply_collapses_thresholds() {
        let m = Market::new(
            vec![TypeProfile::flat(20.0, 10.0, 1).unwrap()],
            SupplyModel::iid(OutputFactorDist::constant(1.0).unwrap(), 1).unwrap(),
            MarketParams::new(1.0, 2.0, 0.0).unwrap(),
        )
        .unwrap();
        let th = thresholds(&m, 10.0).unwrap();
        assert!((th.lower - 1.0).abs() < 1e-12);
        assert!((th.upper - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_supply_forces_low_regime() {
        let m = Market::new(
            vec![TypeProfile::flat(20.0, 10.0, 1).unwrap()],
            SupplyModel::iid(OutputFactorDist::constant(0.0).unwrap(), 1).unwrap(),
            MarketParams::new(1.0, 2.0, 0.0).unwrap(),
        )
        .unwrap();
        let th = thresholds(&m, 0.0).unwrap();
        assert!(th.lower.is_infinite());
        assert_eq!(Regime::select(1e9, &th), Regime::LowPrice);
        let sol = solve_ins(&m).unwrap();
        assert_eq!(sol.regime, Regime::LowPrice);
        assert!(sol.r_star < 1e-9);
    }

    #[test]
    fn thresholds_single_period_plug_in() {
        let m = four_types([20.0; 4], 1.0, 0.0, 1).with_profit_floor(0.0).unwrap();
        let m = Market::new(
            vec![TypeProfile::flat(20.0, 10.0, 1).unwrap()],
            m.supply().clone(),
            *m.params(),
        )
        .unwrap();
        let so = solve_so(&m).unwrap();
        let th = thresholds(&m, so.r_star).unwrap();
        let es = m.expected_supply(so.r_star).unwrap()[0];
        assert!((th.lower - so.r_star / es).abs() < 1e-12);
    }

    #[test]
    fn thresholds_increase_with_floor() {
        let m = four_types([15.0, 15.0, 25.0, 25.0], 1.0, 0.0, 2);
        let r = solve_so(&m).unwrap().r_star;
        let a = thresholds(&m, r).unwrap();
        let b = thresholds(&m.with_profit_floor(5.0).unwrap(), r).unwrap();
        assert!(b.lower > a.lower && b.upper > a.upper);
        assert!(a.lower <= a.upper);
    }

    #[test]
    fn feasibility_edges() {
        let m = four_types([20.0; 4], 1.2, 0.0, 1);
        assert!(feasibility_check(&m));
        assert!(!feasibility_check(&m.with_profit_floor(1e9).unwrap()));
        assert!(matches!(
            solve_ins(&m.with_profit_floor(1e9).unwrap()),
            Err(Error::Infeasible(_))
        ));
        let peak = m.noins_profit_peak().unwrap().lo;
        let best = m.utility_profit_noins(peak).unwrap();
        assert!(feasibility_check(&m.with_profit_floor(best).unwrap()));
    }

    #[test]
    fn regimes_across_price() {
        let base = four_types([15.0, 15.0, 25.0, 25.0], 1.0, 0.0, 24);
        let r_dagger = solve_so(&base).unwrap().r_star;
        let th = thresholds(&base, r_dagger).unwrap();

        let low = solve_ins(&base.with_price(0.5 * th.lower).unwrap()).unwrap();
        assert_eq!(low.regime, Regime::LowPrice);
        assert!(low.binding.all(IrStatus::UpperBinding));
        assert!(low.lambda.is_none());

        let mid_p = 0.5 * (th.lower + th.upper);
        let mid_m = base.with_price(mid_p).unwrap();
        let mid = solve_ins(&mid_m).unwrap();
        assert_eq!(mid.regime, Regime::MediumPrice);
        assert!((mid.r_star - r_dagger).abs() <= 1e-9 * r_dagger);
        let lam = mid.lambda.unwrap();
        assert!(lam > 0.0 && lam < 1.0);
        assert!((mid.profit - 0.0).abs() <= 1e-9);
        assert!((social_cost_of(&mid, &mid_m) - mid.social_optimum.objective).abs() < 1e-9);

        let high_m = base.with_price(th.upper + 0.5 * (15.0 - th.upper)).unwrap();
        let high = solve_ins(&high_m).unwrap();
        assert_eq!(high.regime, Regime::HighPrice);
        assert!(high.binding.row_all(0, IrStatus::LowerBinding));
        let r_ddagger = solve_noins(&high_m).unwrap().r_star;
        assert!(high.r_star >= r_dagger - 1e-9 && high.r_star <= r_ddagger + 1e-9);
    }

    #[test]
    fn lambda_hits_bounds_at_thresholds() {
        let base = four_types([15.0, 15.0, 25.0, 25.0], 1.0, 0.0, 3);
        let r = solve_so(&base).unwrap().r_star;
        let th = thresholds(&base, r).unwrap();
        let at_lower = base.with_price(th.lower).unwrap();
        let (_, lam) = recover_premiums_with_lambda(&at_lower, r, Regime::MediumPrice).unwrap();
        assert!((lam.unwrap() - 1.0).abs() < 1e-9);
        let at_upper = base.with_price(th.upper).unwrap();
        let (_, lam) = recover_premiums_with_lambda(&at_upper, r, Regime::MediumPrice).unwrap();
        assert!(lam.unwrap().abs() < 1e-9);
    }

    #[test]
    fn total_premium_continuous_across_thresholds() {
        let base = four_types([15.0, 15.0, 25.0, 25.0], 1.0, 2.0, 2);
        let r = solve_so(&base).unwrap().r_star;
        let th = thresholds(&base, r).unwrap();
        for edge in [th.lower, th.upper] {
            let a = solve_ins(&base.with_price(edge - 1e-6).unwrap()).unwrap();
            let b = solve_ins(&base.with_price(edge + 1e-6).unwrap()).unwrap();
            assert!(
                (a.total_premium - b.total_premium).abs() < 1e-3,
                "{} vs {}",
                a.total_premium,
                b.total_premium
            );
            assert!((a.r_star - b.r_star).abs() < 1e-3);
        }
    }

    #[test]
    fn medium_out_of_band_is_internal_error() {
        let base = four_types([15.0, 15.0, 25.0, 25.0], 1.0, 0.0, 1);
        let r = solve_so(&base).unwrap().r_star;
        let th = thresholds(&base, r).unwrap();
        let far = base.with_price(0.2 * th.lower).unwrap();
        assert!(matches!(
            recover_premiums(&far, r, Regime::MediumPrice),
            Err(Error::Internal(_))
        ));
    }
}
