//! Incentive-compatibility and individual-rationality checks for a premium
//! schedule.
//!
//! The type-level checks verify the sufficient conditions: premium gaps equal
//! VOLL gaps times the expected shortfall fraction, and every premium lies in
//! `[0, (V_k^t − p)·q^t]`. The per-consumer check compares expected costs of
//! every menu choice directly.

use crate::costs::Choice;
use crate::error::{check_index, Result};
use crate::market::{Market, PremiumSchedule};

/// Absolute tolerance on premium-unit equalities.
pub const PREMIUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct IcReport {
    pub satisfied: bool,
    pub max_residual: f64,
    /// `(k, m, t)` attaining `max_residual`.
    pub worst: Option<(usize, usize, usize)>,
}

/// Where a premium sits within its IR box `[0, (V_k^t − p)·q^t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrStatus {
    /// Box has zero width and the premium sits on it.
    Pinned,
    LowerBinding,
    UpperBinding,
    Interior,
    BelowLower,
    AboveUpper,
}

impl IrStatus {
    pub fn is_ok(self) -> bool {
        !matches!(self, IrStatus::BelowLower | IrStatus::AboveUpper)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IrStatus::Pinned => "pinned",
            IrStatus::LowerBinding => "lower",
            IrStatus::UpperBinding => "upper",
            IrStatus::Interior => "interior",
            IrStatus::BelowLower => "below_lower",
            IrStatus::AboveUpper => "above_upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrReport {
    pub satisfied: bool,
    /// Status per `[k][t]`.
    pub status: Vec<Vec<IrStatus>>,
    /// `π_k^t − 0`, per `[k][t]`.
    pub lower_slack: Vec<Vec<f64>>,
    /// `(V_k^t − p)·q^t − π_k^t`, per `[k][t]`.
    pub upper_slack: Vec<Vec<f64>>,
}

impl IrReport {
    /// True when every entry has the given status (or is pinned).
    pub fn all(&self, status: IrStatus) -> bool {
        self.status
            .iter()
            .flatten()
            .all(|s| *s == status || *s == IrStatus::Pinned)
    }

    pub fn row_all(&self, k: usize, status: IrStatus) -> bool {
        self.status[k].iter().all(|s| *s == status || *s == IrStatus::Pinned)
    }
}

impl Market {
    pub fn check_ic_sufficient(&self, r: f64, pi: &PremiumSchedule) -> Result<IcReport> {
        pi.check_shape(self)?;
        let q = self.shortfall_fraction(r)?;
        Ok(self.ic_at(&q, pi))
    }

    pub(crate) fn ic_at(&self, q: &[f64], pi: &PremiumSchedule) -> IcReport {
        let mut max_residual = 0.0;
        let mut worst = None;
        let types = self.types();
        for k in 0..types.len() {
            for m in 0..types.len() {
                if k == m {
                    continue;
                }
                for (t, qt) in q.iter().enumerate() {
                    let want = (types[k].voll()[t] - types[m].voll()[t]) * qt;
                    let res = (pi.get(k, t) - pi.get(m, t) - want).abs();
                    if res > max_residual {
                        max_residual = res;
                        worst = Some((k, m, t));
                    }
                }
            }
        }
        IcReport {
            satisfied: max_residual <= PREMIUM_TOL,
            max_residual,
            worst,
        }
    }

    pub fn check_ir_sufficient(&self, r: f64, pi: &PremiumSchedule) -> Result<IrReport> {
        pi.check_shape(self)?;
        let q = self.shortfall_fraction(r)?;
        Ok(self.ir_at(&q, pi))
    }

    pub(crate) fn ir_at(&self, q: &[f64], pi: &PremiumSchedule) -> IrReport {
        let p = self.price();
        let mut status = Vec::with_capacity(self.num_types());
        let mut lower_slack = Vec::with_capacity(self.num_types());
        let mut upper_slack = Vec::with_capacity(self.num_types());
        for (k, ty) in self.types().iter().enumerate() {
            let mut srow = Vec::with_capacity(self.periods());
            let mut lrow = Vec::with_capacity(self.periods());
            let mut urow = Vec::with_capacity(self.periods());
            for (t, qt) in q.iter().enumerate() {
                let upper = (ty.voll()[t] - p) * qt;
                let v = pi.get(k, t);
                let lo = v;
                let hi = upper - v;
                let s = if lo < -PREMIUM_TOL {
                    IrStatus::BelowLower
                } else if hi < -PREMIUM_TOL {
                    IrStatus::AboveUpper
                } else if upper <= PREMIUM_TOL {
                    IrStatus::Pinned
                } else if lo <= PREMIUM_TOL {
                    IrStatus::LowerBinding
                } else if hi <= PREMIUM_TOL {
                    IrStatus::UpperBinding
                } else {
                    IrStatus::Interior
                };
                srow.push(s);
                lrow.push(lo);
                urow.push(hi);
            }
            status.push(srow);
            lower_slack.push(lrow);
            upper_slack.push(urow);
        }
        let satisfied = status.iter().flatten().all(|s| s.is_ok());
        IrReport {
            satisfied,
            status,
            lower_slack,
            upper_slack,
        }
    }

    /// Direct cost comparison for a consumer of type `k` with the given
    /// demand: the own item must cost no more than any other item and no more
    /// than buying nothing.
    pub fn check_ic_ir_for_demand(&self, k: usize, demand: &[f64], r: f64, pi: &PremiumSchedule) -> Result<bool> {
        check_index("type", k, self.num_types())?;
        pi.check_shape(self)?;
        let q = self.shortfall_fraction(r)?;
        let voll = self.types()[k].voll();
        let own = self.cost_for_demand_at(voll, demand, &q, Some(pi), Choice::Item(k))?;
        let tol = 1e-9 * own.abs().max(1.0);
        for m in 0..self.num_types() {
            let alt = self.cost_for_demand_at(voll, demand, &q, Some(pi), Choice::Item(m))?;
            if own > alt + tol {
                return Ok(false);
            }
        }
        let none = self.cost_for_demand_at(voll, demand, &q, None, Choice::NoInsurance)?;
        Ok(own <= none + tol)
    }

    /// [`Market::check_ic_ir_for_demand`] for user `i` treated as type `k`.
    pub fn check_ic_ir_per_user(&self, r: f64, pi: &PremiumSchedule, i: usize, k: usize) -> Result<bool> {
        let u = self.user(i)?;
        self.check_ic_ir_for_demand(k, &u.demand, r, pi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{MarketParams, TypeProfile, User};
    use crate::supply::{OutputFactorDist, SupplyModel};
    use proptest::prelude::*;

    fn market(vs: &[f64], price: f64, periods: usize) -> Market {
        Market::new(
            vs.iter()
                .map(|v| TypeProfile::flat(*v, 5.0, periods).unwrap())
                .collect(),
            SupplyModel::iid(OutputFactorDist::uniform(), periods).unwrap(),
            MarketParams::new(1.0, price, 0.0).unwrap(),
        )
        .unwrap()
    }

    /// Schedule with π_1 = λ × (IR upper bound) and the IC gaps on top.
    fn ic_schedule(m: &Market, r: f64, lambda: f64) -> PremiumSchedule {
        let q = m.shortfall_fraction(r).unwrap();
        let v1 = m.types()[0].voll().to_vec();
        let rows = m
            .types()
            .iter()
            .map(|ty| {
                (0..m.periods())
                    .map(|t| lambda * (v1[t] - m.price()) * q[t] + (ty.voll()[t] - v1[t]) * q[t])
                    .collect()
            })
            .collect();
        PremiumSchedule::new(rows).unwrap()
    }

    #[test]
    fn single_type_always_ic() {
        let m = market(&[10.0], 1.0, 2);
        let pi = PremiumSchedule::new(vec![vec![3.0, 0.1]]).unwrap();
        assert!(m.check_ic_sufficient(4.0, &pi).unwrap().satisfied);
    }

    #[test]
    fn identical_vols_need_equal_premiums() {
        let m = market(&[10.0, 10.0], 1.0, 1);
        let same = PremiumSchedule::new(vec![vec![0.5], vec![0.5]]).unwrap();
        assert!(m.check_ic_sufficient(4.0, &same).unwrap().satisfied);
        let diff = PremiumSchedule::new(vec![vec![0.5], vec![0.6]]).unwrap();
        let rep = m.check_ic_sufficient(4.0, &diff).unwrap();
        assert!(!rep.satisfied);
        assert!((rep.max_residual - 0.1).abs() < 1e-12);
    }

    #[test]
    fn ir_bounds() {
        let m = market(&[10.0, 20.0], 2.0, 1);
        let r = 6.0;
        let zero = PremiumSchedule::zeros(2, 1);
        let rep = m.check_ir_sufficient(r, &zero).unwrap();
        assert!(rep.satisfied && rep.all(IrStatus::LowerBinding));
        // π_1 at its upper bound plus the IC gaps puts every type on its upper bound
        let upper = ic_schedule(&m, r, 1.0);
        let rep = m.check_ir_sufficient(r, &upper).unwrap();
        assert!(rep.satisfied && rep.all(IrStatus::UpperBinding));
        let mid = ic_schedule(&m, r, 0.5);
        let rep = m.check_ir_sufficient(r, &mid).unwrap();
        assert!(rep.satisfied && rep.all(IrStatus::Interior));
        let q = m.shortfall_fraction(r).unwrap()[0];
        let over = PremiumSchedule::new(vec![vec![16.0 * q], vec![18.0 * q]]).unwrap();
        let rep = m.check_ir_sufficient(r, &over).unwrap();
        assert!(!rep.satisfied);
        assert_eq!(rep.status[0][0], IrStatus::AboveUpper);
    }

    #[test]
    fn doubled_premium_fails_per_user_ir() {
        let m = market(&[10.0, 20.0], 2.0, 1).with_representative_users();
        let r = 6.0;
        let q = m.shortfall_fraction(r).unwrap()[0];
        let ok = PremiumSchedule::new(vec![vec![8.0 * q], vec![18.0 * q]]).unwrap();
        assert!(m.check_ic_ir_per_user(r, &ok, 1, 1).unwrap());
        let doubled = PremiumSchedule::new(vec![vec![8.0 * q], vec![36.0 * q]]).unwrap();
        assert!(!m.check_ic_ir_per_user(r, &doubled, 1, 1).unwrap());
    }

    #[test]
    fn per_user_check_on_split_users() {
        let m = market(&[10.0, 20.0], 2.0, 2)
            .with_users(vec![
                User {
                    type_index: 0,
                    demand: vec![1.0, 4.0],
                },
                User {
                    type_index: 0,
                    demand: vec![4.0, 1.0],
                },
                User {
                    type_index: 1,
                    demand: vec![5.0, 5.0],
                },
            ])
            .unwrap();
        let pi = ic_schedule(&m, 7.0, 0.3);
        for i in 0..3 {
            let k = m.user(i).unwrap().type_index;
            assert!(m.check_ic_ir_per_user(7.0, &pi, i, k).unwrap());
        }
        assert!(m.check_ic_ir_per_user(7.0, &pi, 9, 0).is_err());
    }

    proptest! {
        #[test]
        fn ic_schedules_pass_for_any_demand(
            lambda in 0.0f64..=1.0,
            r in 0.0f64..40.0,
            d1 in 0.01f64..50.0,
            d2 in 0.01f64..50.0,
            k in 0usize..3,
        ) {
            let m = market(&[4.0, 9.0, 30.0], 2.0, 2);
            let pi = ic_schedule(&m, r, lambda);
            prop_assert!(m.check_ic_sufficient(r, &pi).unwrap().satisfied);
            prop_assert!(m.check_ir_sufficient(r, &pi).unwrap().satisfied);
            prop_assert!(m.check_ic_ir_for_demand(k, &[d1, d2], r, &pi).unwrap());
            // every item costs the same under the IC equalities
            let q = m.shortfall_fraction(r).unwrap();
            let voll = m.types()[k].voll();
            let base = m.cost_for_demand_at(voll, &[d1, d2], &q, Some(&pi), Choice::Item(0)).unwrap();
            for o in 1..3 {
                let c = m.cost_for_demand_at(voll, &[d1, d2], &q, Some(&pi), Choice::Item(o)).unwrap();
                prop_assert!((c - base).abs() <= 1e-9 * base.max(1.0));
            }
        }

        #[test]
        fn per_user_check_agrees_with_cost_oracle(
            p0 in 0.0f64..10.0, p1 in 0.0f64..10.0, r in 0.0f64..40.0, d in 0.1f64..20.0, k in 0usize..2,
        ) {
            let m = market(&[10.0, 20.0], 2.0, 1);
            let pi = PremiumSchedule::new(vec![vec![p0], vec![p1]]).unwrap();
            let q = m.shortfall_fraction(r).unwrap()[0];
            let voll = m.types()[k].voll()[0];
            // oracle: closed-form expected costs from the four-term formula
            let cost = |o: Option<usize>| {
                let bill = 2.0 * d * (1.0 - q) + voll * d * q;
                match o {
                    Some(o) => [p0, p1][o] * d + bill - (m.types()[o].voll()[0] - 2.0) * d * q,
                    None => bill,
                }
            };
            let own = cost(Some(k));
            let tol = 1e-9 * own.abs().max(1.0);
            let expect = own <= cost(Some(0)) + tol && own <= cost(Some(1)) + tol && own <= cost(None) + tol;
            prop_assert_eq!(m.check_ic_ir_for_demand(k, &[d], r, &pi).unwrap(), expect);
        }
    }
}
