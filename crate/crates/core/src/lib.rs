//! Reliability insurance for consumers served by a renewable utility.
//!
//! A regulated utility sells energy at a fixed price `p` from capacity `r`
//! whose output factor `Θ ∈ [0, 1]` is random. Shortfalls are shared in
//! proportion to demand. Consumers differ in their value of lost load and
//! choose from a menu of insurance items; the utility picks capacity and
//! premiums to minimize total premiums subject to a profit floor.
//!
//! Modules, bottom up:
//!
//! * [`supply`]: output-factor distributions and expected delivered energy;
//! * [`market`], [`costs`], [`validity`]: the market, cost accounting and
//!   contract validity checks;
//! * [`benchmark`]: social optimum, no-insurance and profit-seeking utilities;
//! * [`contract`]: the optimal insurance contract;
//! * [`oracle`]: brute-force grid search and Monte Carlo settlement;
//! * [`experiment`]: configuration-driven sweeps and CSV output.

pub mod benchmark;
pub mod contract;
pub mod costs;
pub mod error;
pub mod experiment;
pub mod market;
pub mod oracle;
mod quadrature;
pub mod supply;
pub mod validity;

pub use benchmark::{solve_noins, solve_profit_seeking, solve_so, BenchmarkSolution};
pub use contract::{
    feasibility_check, recover_premiums, social_cost_of, solve_ins, thresholds, ContractSolution, Regime, Thresholds,
};
pub use costs::{Allocation, Choice, CostReport};
pub use error::{Error, Result};
pub use market::{Market, MarketParams, PremiumSchedule, TypeProfile, User};
pub use oracle::{mc_settlement, oracle_ins, oracle_so, GridSpec, McReport, McStat};
pub use supply::{OutputFactorDist, OutputFactorKind, SupplyModel, DEFAULT_QUADRATURE_NODES};
pub use validity::{IcReport, IrReport, IrStatus};
