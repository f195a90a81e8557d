//! Allocation, user costs and utility profits.
//!
//! Expected per-type and per-user quantities use the proportional allocation
//! identity `E[D_i^t − d_i^t] = D_i^t · q^t` with `q^t = 1 − E[s^t]/D_a^t`,
//! so no per-user integration is needed.

use crate::error::{check_index, Error, Result};
use crate::market::{Market, PremiumSchedule};

/// Which contract item a user takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// The item designed for the given type index.
    Item(usize),
    NoInsurance,
}

/// Energy delivered in one realization of the output factors.
#[derive(Debug, Clone, PartialEq)]
pub struct Allocation {
    /// `s^t = min(D_a^t, r·θ^t)`.
    pub supply: Vec<f64>,
    /// `d_k^t`, indexed `[k][t]`.
    pub per_type: Vec<Vec<f64>>,
    /// `d_i^t`, indexed `[i][t]`, when the market has users.
    pub per_user: Option<Vec<Vec<f64>>>,
}

/// Expected daily costs of every type (and user) plus the system totals.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    /// `CU(k)` for each type buying its own item.
    pub per_type_own: Vec<f64>,
    /// `CU(0)` for each type buying nothing.
    pub per_type_noins: Vec<f64>,
    pub per_user_own: Option<Vec<f64>>,
    pub per_user_noins: Option<Vec<f64>>,
    pub social_cost: f64,
    pub utility_profit: f64,
}

impl Market {
    /// Splits `min(D_a^t, r·θ^t)` across types and users in proportion to demand.
    pub fn allocate(&self, r: f64, theta: &[f64]) -> Result<Allocation> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("capacity must be nonnegative, got {r}")));
        }
        if theta.len() != self.periods() {
            return Err(Error::Domain(format!(
                "expected {} output factors, got {}",
                self.periods(),
                theta.len()
            )));
        }
        if let Some(x) = theta.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(format!("output factor {x} outside [0,1]")));
        }
        let supply: Vec<f64> = theta
            .iter()
            .zip(self.total_demand())
            .map(|(th, da)| da.min(r * th))
            .collect();
        let share = |demand: &[f64]| -> Vec<f64> {
            demand
                .iter()
                .zip(&supply)
                .zip(self.total_demand())
                .map(|((d, s), da)| d / da * s)
                .collect()
        };
        let per_type = self.types().iter().map(|ty| share(ty.demand())).collect();
        let per_user = self
            .users()
            .map(|users| users.iter().map(|u| share(&u.demand)).collect());
        Ok(Allocation {
            supply,
            per_type,
            per_user,
        })
    }

    /// Expected daily cost of a consumer with VOLL `voll` and demand `demand`
    /// taking `choice`: premium, bill on delivered energy, lost-load cost and
    /// (with insurance) minus the reimbursement at the chosen item's rate.
    pub fn cost_for_demand(
        &self,
        voll: &[f64],
        demand: &[f64],
        r: f64,
        premiums: Option<&PremiumSchedule>,
        choice: Choice,
    ) -> Result<f64> {
        if voll.len() != self.periods() || demand.len() != self.periods() {
            return Err(Error::Domain("VOLL and demand must have one entry per period".into()));
        }
        let q = self.shortfall_fraction(r)?;
        self.cost_for_demand_at(voll, demand, &q, premiums, choice)
    }

    pub(crate) fn cost_for_demand_at(
        &self,
        voll: &[f64],
        demand: &[f64],
        q: &[f64],
        premiums: Option<&PremiumSchedule>,
        choice: Choice,
    ) -> Result<f64> {
        let p = self.price();
        let mut cost = 0.0;
        if let Choice::Item(o) = choice {
            check_index("type", o, self.num_types())?;
            let pi = premiums
                .ok_or_else(|| Error::Domain("a premium schedule is required to price a contract item".into()))?;
            pi.check_shape(self)?;
            let v_o = self.types()[o].voll();
            for t in 0..self.periods() {
                cost += pi.get(o, t) * demand[t];
                cost -= (v_o[t] - p) * demand[t] * q[t];
            }
        }
        for t in 0..self.periods() {
            cost += p * demand[t] * (1.0 - q[t]);
            cost += voll[t] * demand[t] * q[t];
        }
        Ok(cost)
    }

    /// `CU_i(o)` for user `i` choosing the type-`o` item.
    pub fn user_cost_choice(&self, r: f64, pi: &PremiumSchedule, i: usize, o: usize) -> Result<f64> {
        let u = self.user(i)?;
        let voll = self.types()[u.type_index].voll();
        self.cost_for_demand(voll, &u.demand, r, Some(pi), Choice::Item(o))
    }

    /// `CU_i(0)` for user `i` without insurance.
    pub fn user_cost_noins(&self, r: f64, i: usize) -> Result<f64> {
        let u = self.user(i)?;
        let voll = self.types()[u.type_index].voll();
        self.cost_for_demand(voll, &u.demand, r, None, Choice::NoInsurance)
    }

    /// Cost of a representative consumer holding all of type `k`'s demand.
    pub fn type_cost(&self, r: f64, pi: Option<&PremiumSchedule>, k: usize, choice: Choice) -> Result<f64> {
        let ty = self.ty(k)?;
        self.cost_for_demand(ty.voll(), ty.demand(), r, pi, choice)
    }

    /// `E[C_s^t]`, expected reimbursement paid out in each period.
    pub fn reimbursement_expected(&self, r: f64) -> Result<Vec<f64>> {
        let es = self.expected_supply(r)?;
        Ok(self.reimbursement_at(&es))
    }

    pub(crate) fn reimbursement_at(&self, es: &[f64]) -> Vec<f64> {
        (0..self.periods())
            .map(|t| self.reimbursement_weight(t) * (self.total_demand()[t] - es[t]))
            .collect()
    }

    /// `f^Ins(r, π)`: premiums plus bill revenue minus capacity cost and
    /// expected reimbursement.
    pub fn utility_profit_ins(&self, r: f64, pi: &PremiumSchedule) -> Result<f64> {
        pi.check_shape(self)?;
        let es = self.expected_supply(r)?;
        Ok(pi.total(self) + self.noins_profit_at(r, &es) - self.reimbursement_at(&es).iter().sum::<f64>())
    }

    /// `f^No(r) = Σ_t p·E[s^t] − c_r·r`.
    pub fn utility_profit_noins(&self, r: f64) -> Result<f64> {
        let es = self.expected_supply(r)?;
        Ok(self.noins_profit_at(r, &es))
    }

    pub(crate) fn noins_profit_at(&self, r: f64, es: &[f64]) -> f64 {
        self.price() * es.iter().sum::<f64>() - self.capacity_cost() * r
    }

    /// Capacity cost plus expected lost load valued at each type's VOLL:
    /// `c_r·r + Σ_t Σ_k V_k^t E[D_k^t − d_k^t]`.
    pub fn social_cost(&self, r: f64) -> Result<f64> {
        let es = self.expected_supply(r)?;
        Ok(self.social_cost_at(r, &es))
    }

    pub(crate) fn social_cost_at(&self, r: f64, es: &[f64]) -> f64 {
        let lost: f64 = (0..self.periods())
            .map(|t| self.lost_load_weight(t) * (self.total_demand()[t] - es[t]))
            .sum();
        self.capacity_cost() * r + lost
    }

    /// Expected costs of every type (and user) under `pi` at capacity `r`.
    pub fn cost_report(&self, r: f64, pi: &PremiumSchedule) -> Result<CostReport> {
        pi.check_shape(self)?;
        let es = self.expected_supply(r)?;
        let q = self.shortfall_from_supply(&es);
        let mut per_type_own = Vec::with_capacity(self.num_types());
        let mut per_type_noins = Vec::with_capacity(self.num_types());
        for (k, ty) in self.types().iter().enumerate() {
            per_type_own.push(self.cost_for_demand_at(ty.voll(), ty.demand(), &q, Some(pi), Choice::Item(k))?);
            per_type_noins.push(self.cost_for_demand_at(ty.voll(), ty.demand(), &q, None, Choice::NoInsurance)?);
        }
        let (per_user_own, per_user_noins) = match self.users() {
            Some(users) => {
                let mut own = Vec::with_capacity(users.len());
                let mut none = Vec::with_capacity(users.len());
                for u in users {
                    let voll = self.types()[u.type_index].voll();
                    own.push(self.cost_for_demand_at(voll, &u.demand, &q, Some(pi), Choice::Item(u.type_index))?);
                    none.push(self.cost_for_demand_at(voll, &u.demand, &q, None, Choice::NoInsurance)?);
                }
                (Some(own), Some(none))
            }
            None => (None, None),
        };
        let utility_profit =
            pi.total(self) + self.noins_profit_at(r, &es) - self.reimbursement_at(&es).iter().sum::<f64>();
        Ok(CostReport {
            per_type_own,
            per_type_noins,
            per_user_own,
            per_user_noins,
            social_cost: self.social_cost_at(r, &es),
            utility_profit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{MarketParams, TypeProfile, User};
    use crate::supply::{OutputFactorDist, SupplyModel};
    use proptest::prelude::*;

    fn market(dist: OutputFactorDist, types: Vec<(f64, f64)>, price: f64, periods: usize) -> Market {
        Market::new(
            types
                .into_iter()
                .map(|(v, d)| TypeProfile::flat(v, d, periods).unwrap())
                .collect(),
            SupplyModel::iid(dist, periods).unwrap(),
            MarketParams::new(1.0, price, 0.0).unwrap(),
        )
        .unwrap()
    }

    fn two_users() -> Market {
        market(OutputFactorDist::uniform(), vec![(20.0, 10.0)], 1.0, 1)
            .with_users(vec![
                User {
                    type_index: 0,
                    demand: vec![3.0],
                },
                User {
                    type_index: 0,
                    demand: vec![7.0],
                },
            ])
            .unwrap()
    }

    #[test]
    fn allocation_examples() {
        let m = two_users();
        let a = m.allocate(20.0, &[1.0]).unwrap();
        assert_eq!(a.per_user.as_ref().unwrap(), &vec![vec![3.0], vec![7.0]]);
        let a = m.allocate(5.0, &[1.0]).unwrap();
        assert_eq!(a.per_user.as_ref().unwrap(), &vec![vec![1.5], vec![3.5]]);
        let a = m.allocate(50.0, &[0.0]).unwrap();
        assert_eq!(a.per_user.as_ref().unwrap(), &vec![vec![0.0], vec![0.0]]);
        assert!(matches!(m.allocate(5.0, &[1.2]), Err(Error::Domain(_))));
        assert!(matches!(m.allocate(5.0, &[0.5, 0.5]), Err(Error::Domain(_))));
    }

    #[test]
    fn own_item_cost_is_premium_plus_bill() {
        let m = two_users();
        let pi = PremiumSchedule::new(vec![vec![0.7]]).unwrap();
        for r in [0.0, 3.0, 10.0, 40.0] {
            let c = m.user_cost_choice(r, &pi, 1, 0).unwrap();
            assert!((c - (0.7 + 1.0) * 7.0).abs() < 1e-12, "r={r} c={c}");
        }
    }

    #[test]
    fn full_supply_removes_lost_load() {
        let m = market(
            OutputFactorDist::constant(1.0).unwrap(),
            vec![(5.0, 4.0), (9.0, 6.0)],
            2.0,
            2,
        )
        .with_representative_users();
        let pi = PremiumSchedule::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        for o in 0..2 {
            let c = m.user_cost_choice(10.0, &pi, 0, o).unwrap();
            let expect = (pi.get(o, 0) + pi.get(o, 1)) * 4.0 + 2.0 * 2.0 * 4.0;
            assert!((c - expect).abs() < 1e-12);
        }
        assert!((m.user_cost_noins(10.0, 1).unwrap() - 2.0 * 2.0 * 6.0).abs() < 1e-12);
        assert_eq!(m.reimbursement_expected(10.0).unwrap(), vec![0.0, 0.0]);
        let zero = PremiumSchedule::zeros(2, 2);
        let f = m.utility_profit_ins(12.0, &zero).unwrap();
        assert!((f - (2.0 * 20.0 - 12.0)).abs() < 1e-12);
    }

    #[test]
    fn zero_capacity_costs() {
        let m = two_users();
        let zero = PremiumSchedule::zeros(1, 1);
        // full loss fully reimbursed at the own rate: only the bill-equivalent remains
        assert!((m.user_cost_choice(0.0, &zero, 0, 0).unwrap() - 3.0).abs() < 1e-12);
        assert!((m.user_cost_noins(0.0, 0).unwrap() - 20.0 * 3.0).abs() < 1e-12);
        assert_eq!(m.reimbursement_expected(0.0).unwrap(), vec![19.0 * 10.0]);
        assert!((m.utility_profit_ins(0.0, &zero).unwrap() + 190.0).abs() < 1e-12);
        assert_eq!(m.utility_profit_noins(0.0).unwrap(), 0.0);
    }

    #[test]
    fn uniform_single_period_values() {
        // E[s] = 5 at r = D_a = 10
        let m = market(OutputFactorDist::uniform(), vec![(15.0, 10.0)], 1.0, 1).with_representative_users();
        assert!((m.user_cost_noins(10.0, 0).unwrap() - 80.0).abs() < 1e-10);
        assert!((m.utility_profit_noins(10.0).unwrap() + 5.0).abs() < 1e-10);
        assert!((m.reimbursement_expected(10.0).unwrap()[0] - 70.0).abs() < 1e-10);
        assert!(m.utility_profit_noins(1e4).unwrap() < 0.0);
    }

    #[test]
    fn index_errors() {
        let m = two_users();
        let pi = PremiumSchedule::zeros(1, 1);
        assert!(matches!(m.user_cost_choice(1.0, &pi, 5, 0), Err(Error::Index { .. })));
        assert!(matches!(m.user_cost_choice(1.0, &pi, 0, 3), Err(Error::Index { .. })));
        assert!(matches!(m.user_cost_noins(1.0, 2), Err(Error::Index { .. })));
        let no_users = market(OutputFactorDist::uniform(), vec![(15.0, 10.0)], 1.0, 1);
        assert!(matches!(no_users.user_cost_noins(1.0, 0), Err(Error::Index { .. })));
    }

    #[test]
    fn cost_report_matches_individual_ops() {
        let m = market(OutputFactorDist::uniform(), vec![(5.0, 4.0), (9.0, 6.0)], 2.0, 1).with_representative_users();
        let pi = PremiumSchedule::new(vec![vec![0.5], vec![1.5]]).unwrap();
        let rep = m.cost_report(7.0, &pi).unwrap();
        for k in 0..2 {
            assert!((rep.per_type_own[k] - m.type_cost(7.0, Some(&pi), k, Choice::Item(k)).unwrap()).abs() < 1e-12);
            assert!((rep.per_user_noins.as_ref().unwrap()[k] - m.user_cost_noins(7.0, k).unwrap()).abs() < 1e-12);
        }
        assert!((rep.utility_profit - m.utility_profit_ins(7.0, &pi).unwrap()).abs() < 1e-12);
        assert!((rep.social_cost - m.social_cost(7.0).unwrap()).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn allocation_conserves_supply(r in 0.0f64..50.0, theta in 0.0f64..=1.0, a in 0.1f64..10.0, b in 0.1f64..10.0, c in 0.1f64..10.0) {
            let m = market(OutputFactorDist::uniform(), vec![(20.0, a + b), (30.0, c)], 1.0, 1)
                .with_users(vec![
                    User { type_index: 0, demand: vec![a] },
                    User { type_index: 0, demand: vec![b] },
                    User { type_index: 1, demand: vec![c] },
                ]).unwrap();
            let al = m.allocate(r, &[theta]).unwrap();
            let users = al.per_user.unwrap();
            let total: f64 = users.iter().map(|u| u[0]).sum();
            prop_assert!((total - al.supply[0]).abs() <= 1e-12 * al.supply[0].max(1.0));
            for (u, d) in users.iter().zip([a, b, c]) {
                prop_assert!(u[0] >= 0.0 && u[0] <= d * (1.0 + 1e-15));
            }
        }

        #[test]
        fn profit_is_linear_in_premiums(r in 0.0f64..60.0, p1 in 0.0f64..5.0, p2 in 0.0f64..5.0) {
            let m = market(OutputFactorDist::trunc_normal(0.5, 0.2).unwrap(), vec![(5.0, 4.0), (9.0, 6.0)], 2.0, 1);
            let pi = PremiumSchedule::new(vec![vec![p1], vec![p2]]).unwrap();
            let base = m.utility_profit_ins(r, &PremiumSchedule::zeros(2, 1)).unwrap();
            let with = m.utility_profit_ins(r, &pi).unwrap();
            prop_assert!((base + pi.total(&m) - with).abs() <= 1e-10 * with.abs().max(1.0));
        }
    }
}
