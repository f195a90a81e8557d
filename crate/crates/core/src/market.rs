//! Market description: user types, optional individual users, the supply
//! model and the tariff parameters.

use crate::error::{check_index, Error, Result};
use crate::supply::SupplyModel;

/// One user type's value of lost load and aggregate demand per period.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeProfile {
    voll: Vec<f64>,
    demand: Vec<f64>,
}

impl TypeProfile {
    pub fn new(voll: Vec<f64>, demand: Vec<f64>) -> Result<Self> {
        if voll.len() != demand.len() {
            return Err(Error::InvalidMarket(format!(
                "type has {} VOLL entries but {} demand entries",
                voll.len(),
                demand.len()
            )));
        }
        if voll.is_empty() {
            return Err(Error::InvalidMarket("type profile has no periods".into()));
        }
        if let Some(v) = voll.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidMarket(format!("VOLL must be positive, got {v}")));
        }
        if let Some(d) = demand.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidMarket(format!("demand must be positive, got {d}")));
        }
        Ok(TypeProfile { voll, demand })
    }

    /// Same VOLL and demand in each of `periods` periods.
    pub fn flat(voll: f64, demand: f64, periods: usize) -> Result<Self> {
        Self::new(vec![voll; periods], vec![demand; periods])
    }

    pub fn voll(&self) -> &[f64] {
        &self.voll
    }

    pub fn demand(&self) -> &[f64] {
        &self.demand
    }

    pub fn periods(&self) -> usize {
        self.voll.len()
    }
}

/// Unit capacity cost, electricity-bill price and regulated profit floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketParams {
    /// `c_r`, currency per kW of capacity per day.
    pub capacity_cost: f64,
    /// `p`, currency per kWh delivered.
    pub price: f64,
    /// `ξ`, currency per day.
    pub profit_floor: f64,
}

impl MarketParams {
    pub fn new(capacity_cost: f64, price: f64, profit_floor: f64) -> Result<Self> {
        let params = MarketParams {
            capacity_cost,
            price,
            profit_floor,
        };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.capacity_cost > 0.0 && self.capacity_cost.is_finite()) {
            return Err(Error::InvalidMarket(format!(
                "capacity cost must be positive, got {}",
                self.capacity_cost
            )));
        }
        if !(self.price > 0.0 && self.price.is_finite()) {
            return Err(Error::InvalidMarket(format!(
                "price must be positive, got {}",
                self.price
            )));
        }
        if !(self.profit_floor >= 0.0 && self.profit_floor.is_finite()) {
            return Err(Error::InvalidMarket(format!(
                "profit floor must be nonnegative, got {}",
                self.profit_floor
            )));
        }
        Ok(())
    }
}

/// An individual user: the type it belongs to and its own demand per period.
#[derive(Debug, Clone, PartialEq)]
pub struct User {
    pub type_index: usize,
    pub demand: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Market {
    types: Vec<TypeProfile>,
    supply: SupplyModel,
    params: MarketParams,
    users: Option<Vec<User>>,
    total_demand: Vec<f64>,
}

impl Market {
    /// Builds and validates a market. Types must be ordered by VOLL (Type-1
    /// lowest) in every period and the price may not exceed Type-1's VOLL.
    pub fn new(types: Vec<TypeProfile>, supply: SupplyModel, params: MarketParams) -> Result<Self> {
        params.validate()?;
        if types.is_empty() {
            return Err(Error::InvalidMarket("at least one type is required".into()));
        }
        let periods = supply.periods();
        for (k, ty) in types.iter().enumerate() {
            if ty.periods() != periods {
                return Err(Error::InvalidMarket(format!(
                    "type {} has {} periods, supply model has {periods}",
                    k + 1,
                    ty.periods()
                )));
            }
        }
        for t in 0..periods {
            for k in 1..types.len() {
                if types[k].voll[t] < types[k - 1].voll[t] {
                    return Err(Error::InvalidMarket(format!(
                        "types must be ordered by VOLL: V_{}^{t} = {} < V_{}^{t} = {}",
                        k + 1,
                        types[k].voll[t],
                        k,
                        types[k - 1].voll[t]
                    )));
                }
            }
            if params.price > types[0].voll[t] {
                return Err(Error::InvalidMarket(format!(
                    "price {} exceeds the lowest VOLL {} in period {t}",
                    params.price, types[0].voll[t]
                )));
            }
        }
        let total_demand = (0..periods)
            .map(|t| types.iter().map(|ty| ty.demand[t]).sum())
            .collect();
        Ok(Market {
            types,
            supply,
            params,
            users: None,
            total_demand,
        })
    }

    /// Attaches individual users. Each type's users must account for that
    /// type's aggregate demand in every period.
    pub fn with_users(mut self, users: Vec<User>) -> Result<Self> {
        let periods = self.periods();
        let mut sums = vec![vec![0.0; periods]; self.num_types()];
        for (i, u) in users.iter().enumerate() {
            check_index("type", u.type_index, self.num_types())?;
            if u.demand.len() != periods {
                return Err(Error::InvalidMarket(format!(
                    "user {i} has {} demand entries, expected {periods}",
                    u.demand.len()
                )));
            }
            for (t, d) in u.demand.iter().enumerate() {
                if !(*d >= 0.0 && d.is_finite()) {
                    return Err(Error::InvalidMarket(format!("user {i} has invalid demand {d}")));
                }
                sums[u.type_index][t] += d;
            }
        }
        for (k, row) in sums.iter().enumerate() {
            for (t, s) in row.iter().enumerate() {
                let target = self.types[k].demand[t];
                if (s - target).abs() > 1e-9 * target {
                    return Err(Error::InvalidMarket(format!(
                        "users of type {} demand {s} in period {t}, type aggregate is {target}",
                        k + 1
                    )));
                }
            }
        }
        self.users = Some(users);
        Ok(self)
    }

    /// One user per type holding the type's full aggregate demand.
    pub fn with_representative_users(self) -> Self {
        let users = self
            .types
            .iter()
            .enumerate()
            .map(|(k, ty)| User {
                type_index: k,
                demand: ty.demand.clone(),
            })
            .collect();
        self.with_users(users).expect("aggregate users always validate")
    }

    /// Copy of the market under a different electricity-bill price.
    pub fn with_price(&self, price: f64) -> Result<Self> {
        let params = MarketParams::new(self.params.capacity_cost, price, self.params.profit_floor)?;
        self.with_params(params)
    }

    pub fn with_profit_floor(&self, profit_floor: f64) -> Result<Self> {
        let params = MarketParams::new(self.params.capacity_cost, self.params.price, profit_floor)?;
        self.with_params(params)
    }

    pub fn with_params(&self, params: MarketParams) -> Result<Self> {
        let m = Market::new(self.types.clone(), self.supply.clone(), params)?;
        match &self.users {
            Some(u) => m.with_users(u.clone()),
            None => Ok(m),
        }
    }

    pub fn with_supply(&self, supply: SupplyModel) -> Result<Self> {
        let m = Market::new(self.types.clone(), supply, self.params)?;
        match &self.users {
            Some(u) => m.with_users(u.clone()),
            None => Ok(m),
        }
    }

    pub fn types(&self) -> &[TypeProfile] {
        &self.types
    }

    pub fn ty(&self, k: usize) -> Result<&TypeProfile> {
        check_index("type", k, self.types.len())?;
        Ok(&self.types[k])
    }

    pub fn supply(&self) -> &SupplyModel {
        &self.supply
    }

    pub fn params(&self) -> &MarketParams {
        &self.params
    }

    pub fn price(&self) -> f64 {
        self.params.price
    }

    pub fn capacity_cost(&self) -> f64 {
        self.params.capacity_cost
    }

    pub fn profit_floor(&self) -> f64 {
        self.params.profit_floor
    }

    pub fn users(&self) -> Option<&[User]> {
        self.users.as_deref()
    }

    pub fn user(&self, i: usize) -> Result<&User> {
        let users = self.users.as_deref().unwrap_or(&[]);
        check_index("user", i, users.len())?;
        Ok(&users[i])
    }

    pub fn num_types(&self) -> usize {
        self.types.len()
    }

    pub fn periods(&self) -> usize {
        self.supply.periods()
    }

    /// `D_a^t`, total demand in each period.
    pub fn total_demand(&self) -> &[f64] {
        &self.total_demand
    }

    /// `E[s^t]` for each period at capacity `r`. Periods sharing a
    /// distribution and total demand reuse one evaluation.
    pub fn expected_supply(&self, r: f64) -> Result<Vec<f64>> {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("capacity must be nonnegative, got {r}")));
        }
        Ok(self.expected_supply_unchecked(r))
    }

    pub(crate) fn expected_supply_unchecked(&self, r: f64) -> Vec<f64> {
        self.per_period(|t| self.supply.dist(t).expected_supply_unchecked(r, self.total_demand[t]))
    }

    /// `d/dr E[s^t]` (right derivative) for each period.
    pub(crate) fn supply_slope(&self, r: f64) -> Vec<f64> {
        self.per_period(|t| self.supply.dist(t).supply_slope(r, self.total_demand[t]))
    }

    /// `q^t = E[1 − s^t / D_a^t]` for each period.
    pub fn shortfall_fraction(&self, r: f64) -> Result<Vec<f64>> {
        Ok(self
            .expected_supply(r)?
            .iter()
            .zip(&self.total_demand)
            .map(|(s, d)| (1.0 - s / d).max(0.0))
            .collect())
    }

    pub(crate) fn shortfall_from_supply(&self, es: &[f64]) -> Vec<f64> {
        es.iter()
            .zip(&self.total_demand)
            .map(|(s, d)| (1.0 - s / d).max(0.0))
            .collect()
    }

    /// Demand-weighted VOLL `Σ_k V_k^t D_k^t / D_a^t`: the social cost of one
    /// unit of unserved energy in period `t`.
    pub fn lost_load_weight(&self, t: usize) -> f64 {
        self.types.iter().map(|ty| ty.voll[t] * ty.demand[t]).sum::<f64>() / self.total_demand[t]
    }

    /// Demand-weighted reimbursement rate `Σ_k (V_k^t − p) D_k^t / D_a^t`.
    pub fn reimbursement_weight(&self, t: usize) -> f64 {
        self.lost_load_weight(t) - self.params.price
    }

    fn per_period<F: Fn(usize) -> f64>(&self, f: F) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.periods());
        for t in 0..self.periods() {
            let reuse = (t > 0 && self.supply.same_dist(t - 1, t) && self.total_demand[t - 1] == self.total_demand[t])
                .then(|| out[t - 1]);
            out.push(reuse.unwrap_or_else(|| f(t)));
        }
        out
    }
}

/// Premium per kWh of demand, `π_k^t`, for each type (rows) and period.
#[derive(Debug, Clone, PartialEq)]
pub struct PremiumSchedule {
    rows: Vec<Vec<f64>>,
}

impl PremiumSchedule {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map(Vec::len).unwrap_or(0);
        if rows.is_empty() || width == 0 || rows.iter().any(|r| r.len() != width) {
            return Err(Error::Domain("premium schedule must be a nonempty K×T matrix".into()));
        }
        if let Some(v) = rows.iter().flatten().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("premiums must be nonnegative, got {v}")));
        }
        Ok(PremiumSchedule { rows })
    }

    pub fn zeros(types: usize, periods: usize) -> Self {
        PremiumSchedule {
            rows: vec![vec![0.0; periods]; types],
        }
    }

    /// Builds a schedule without the nonnegativity check; callers clamp
    /// rounding noise themselves.
    pub(crate) fn from_rows_unchecked(rows: Vec<Vec<f64>>) -> Self {
        PremiumSchedule { rows }
    }

    pub fn get(&self, k: usize, t: usize) -> f64 {
        self.rows[k][t]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.rows[k]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn num_types(&self) -> usize {
        self.rows.len()
    }

    pub fn periods(&self) -> usize {
        self.rows[0].len()
    }

    /// `Σ_k Σ_t π_k^t D_k^t`, total premium revenue per day.
    pub fn total(&self, market: &Market) -> f64 {
        market
            .types()
            .iter()
            .zip(&self.rows)
            .map(|(ty, row)| row.iter().zip(ty.demand()).map(|(p, d)| p * d).sum::<f64>())
            .sum()
    }

    pub(crate) fn check_shape(&self, market: &Market) -> Result<()> {
        if self.num_types() != market.num_types() || self.periods() != market.periods() {
            return Err(Error::Domain(format!(
                "premium schedule is {}×{}, market is {}×{}",
                self.num_types(),
                self.periods(),
                market.num_types(),
                market.periods()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supply::OutputFactorDist;

    fn two_types() -> Market {
        Market::new(
            vec![
                TypeProfile::flat(5.0, 3.0, 2).unwrap(),
                TypeProfile::flat(9.0, 7.0, 2).unwrap(),
            ],
            SupplyModel::iid(OutputFactorDist::uniform(), 2).unwrap(),
            MarketParams::new(1.0, 2.0, 0.0).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn total_demand_and_weights() {
        let m = two_types();
        assert_eq!(m.total_demand(), &[10.0, 10.0]);
        assert!((m.lost_load_weight(0) - (15.0 + 63.0) / 10.0).abs() < 1e-15);
        assert!((m.reimbursement_weight(1) - (7.8 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_unordered_types_and_high_price() {
        let supply = SupplyModel::iid(OutputFactorDist::uniform(), 1).unwrap();
        let err = Market::new(
            vec![
                TypeProfile::flat(9.0, 1.0, 1).unwrap(),
                TypeProfile::flat(5.0, 1.0, 1).unwrap(),
            ],
            supply.clone(),
            MarketParams::new(1.0, 2.0, 0.0).unwrap(),
        );
        assert!(matches!(err, Err(Error::InvalidMarket(_))));
        let err = Market::new(
            vec![TypeProfile::flat(5.0, 1.0, 1).unwrap()],
            supply,
            MarketParams::new(1.0, 6.0, 0.0).unwrap(),
        );
        assert!(matches!(err, Err(Error::InvalidMarket(_))));
    }

    #[test]
    fn rejects_bad_params_and_profiles() {
        assert!(MarketParams::new(0.0, 1.0, 0.0).is_err());
        assert!(MarketParams::new(1.0, -1.0, 0.0).is_err());
        assert!(MarketParams::new(1.0, 1.0, -0.5).is_err());
        assert!(TypeProfile::new(vec![1.0], vec![0.0]).is_err());
        assert!(TypeProfile::new(vec![0.0], vec![1.0]).is_err());
        assert!(TypeProfile::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn users_must_sum_to_type_demand() {
        let m = two_types();
        let ok = m.clone().with_users(vec![
            User {
                type_index: 0,
                demand: vec![1.0, 2.0],
            },
            User {
                type_index: 0,
                demand: vec![2.0, 1.0],
            },
            User {
                type_index: 1,
                demand: vec![7.0, 7.0],
            },
        ]);
        assert!(ok.is_ok());
        let bad = m.clone().with_users(vec![User {
            type_index: 0,
            demand: vec![1.0, 2.0],
        }]);
        assert!(matches!(bad, Err(Error::InvalidMarket(_))));
        let bad = m.with_users(vec![User {
            type_index: 4,
            demand: vec![1.0, 2.0],
        }]);
        assert!(matches!(bad, Err(Error::Index { .. })));
    }

    #[test]
    fn premium_schedule_validation_and_total() {
        let m = two_types();
        assert!(PremiumSchedule::new(vec![vec![0.1, -0.2], vec![0.0, 0.0]]).is_err());
        assert!(PremiumSchedule::new(vec![vec![0.1], vec![0.0, 0.0]]).is_err());
        let pi = PremiumSchedule::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        assert!((pi.total(&m) - (0.3 * 3.0 + 0.7 * 7.0)).abs() < 1e-12);
        assert!(pi.check_shape(&m).is_ok());
        assert!(PremiumSchedule::zeros(3, 2).check_shape(&m).is_err());
    }

    #[test]
    fn shared_periods_reuse_expectations() {
        let m = two_types();
        let es = m.expected_supply(10.0).unwrap();
        assert_eq!(es[0], es[1]);
        assert!((es[0] - 5.0).abs() < 1e-12);
        assert!(m.expected_supply(-1.0).is_err());
    }
}
