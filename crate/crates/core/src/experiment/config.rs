use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{Market, MarketParams, TypeProfile};
use crate::supply::{OutputFactorDist, OutputFactorKind, SupplyModel, DEFAULT_QUADRATURE_NODES};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub market: MarketConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub oracle_check: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketConfig {
    pub capacity_cost: f64,
    #[serde(default)]
    pub price: Option<f64>,
    #[serde(default)]
    pub profit_floor: f64,
    #[serde(default = "one")]
    pub periods: usize,
    #[serde(default)]
    pub quadrature_nodes: Option<usize>,
    pub supply: SupplyConfig,
    pub types: Vec<TypeConfig>,
}

fn one() -> usize {
    1
}

/// A value that is either constant across periods or given per period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Scalar(f64),
    PerPeriod(Vec<f64>),
}

impl Series {
    fn expand(&self, periods: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            Series::Scalar(v) => Ok(vec![*v; periods]),
            Series::PerPeriod(v) if v.len() == periods => Ok(v.clone()),
            Series::PerPeriod(v) => Err(Error::Schema(format!(
                "{what} has {} entries but periods = {periods}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeConfig {
    pub voll: Series,
    pub demand: Series,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupplyConfig {
    Uniform,
    TruncNormal {
        mu: f64,
        sigma: f64,
    },
    /// `[value, probability]` pairs.
    Discrete {
        points: Vec<[f64; 2]>,
    },
    Constant {
        value: f64,
    },
}

impl SupplyConfig {
    fn kind(&self, sigma: Option<f64>) -> Result<OutputFactorKind> {
        Ok(match (self, sigma) {
            (SupplyConfig::TruncNormal { mu, .. }, Some(sigma)) => OutputFactorKind::TruncNormal01 { mu: *mu, sigma },
            (_, Some(_)) => {
                return Err(Error::Schema("uncertainty sweep needs a trunc_normal supply".into()));
            }
            (SupplyConfig::Uniform, None) => OutputFactorKind::Uniform01,
            (SupplyConfig::TruncNormal { mu, sigma }, None) => {
                OutputFactorKind::TruncNormal01 { mu: *mu, sigma: *sigma }
            }
            (SupplyConfig::Discrete { points }, None) => {
                OutputFactorKind::Discrete(points.iter().map(|[v, p]| (*v, *p)).collect())
            }
            (SupplyConfig::Constant { value }, None) => OutputFactorKind::Discrete(vec![(*value, 1.0)]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepConfig {
    Price {
        p_min: f64,
        p_max: f64,
        steps: usize,
    },
    /// VOLLs follow `V_1 + V_K = v_sum`, `V_K − V_1 = Δ`: the lower half of
    /// the types gets `V_1`, the upper half `V_K`, a middle type `v_sum/2`.
    Heterogeneity {
        v_sum: f64,
        deltas: Vec<f64>,
        #[serde(default)]
        p_min: Option<f64>,
        #[serde(default)]
        p_max: Option<f64>,
        #[serde(default)]
        steps: Option<usize>,
    },
    /// Replaces the truncated-normal standard deviation.
    Uncertainty {
        sigmas: Vec<f64>,
        #[serde(default)]
        p_min: Option<f64>,
        #[serde(default)]
        p_max: Option<f64>,
        #[serde(default)]
        steps: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
}

/// One point of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub price: f64,
    pub delta: Option<f64>,
    pub sigma: Option<f64>,
}

pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => vec![],
        1 => vec![lo],
        n => (0..n)
            .map(|i| {
                if i + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * i as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// `(V_1, V_K)` pattern across `k` types.
pub fn heterogeneity_vols(v_sum: f64, delta: f64, k: usize) -> Vec<f64> {
    let (low, high) = (0.5 * (v_sum - delta), 0.5 * (v_sum + delta));
    (0..k)
        .map(|i| {
            if 2 * i + 1 == k {
                0.5 * v_sum
            } else if 2 * i < k {
                low
            } else {
                high
            }
        })
        .collect()
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        let cfg = ScenarioConfig::deserialize(table).map_err(|e| Error::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        ScenarioConfig::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let m = &self.market;
        if m.periods == 0 {
            return Err(Error::Schema("periods must be at least 1".into()));
        }
        if m.types.is_empty() {
            return Err(Error::Schema("market needs at least one type".into()));
        }
        if m.quadrature_nodes == Some(0) {
            return Err(Error::Schema("quadrature_nodes must be positive".into()));
        }
        for (i, ty) in m.types.iter().enumerate() {
            ty.voll.expand(m.periods, &format!("types[{i}].voll"))?;
            ty.demand.expand(m.periods, &format!("types[{i}].demand"))?;
        }
        let grid = |p_min: Option<f64>, p_max: Option<f64>, steps: Option<usize>| -> Result<()> {
            match (p_min, p_max, steps) {
                (None, None, None) if m.price.is_some() => Ok(()),
                (None, None, None) => Err(Error::Schema("sweep needs a price grid or market.price".into())),
                (Some(lo), Some(hi), Some(n)) if n >= 1 && lo <= hi => Ok(()),
                (Some(_), Some(_), Some(0)) => Err(Error::Schema("sweep steps must be at least 1".into())),
                (Some(_), Some(_), Some(_)) => Err(Error::Schema("sweep needs p_min <= p_max".into())),
                _ => Err(Error::Schema("p_min, p_max and steps go together".into())),
            }
        };
        match &self.sweep {
            None => {}
            Some(SweepConfig::Price { p_min, p_max, steps }) => grid(Some(*p_min), Some(*p_max), Some(*steps))?,
            Some(SweepConfig::Heterogeneity {
                v_sum,
                deltas,
                p_min,
                p_max,
                steps,
            }) => {
                if deltas.is_empty() {
                    return Err(Error::Schema("heterogeneity sweep has an empty delta list".into()));
                }
                if let Some(d) = deltas.iter().find(|d| !(**d >= 0.0 && **d < *v_sum)) {
                    return Err(Error::Schema(format!("delta {d} must lie in [0, v_sum)")));
                }
                grid(*p_min, *p_max, *steps)?;
            }
            Some(SweepConfig::Uncertainty {
                sigmas,
                p_min,
                p_max,
                steps,
            }) => {
                if sigmas.is_empty() {
                    return Err(Error::Schema("uncertainty sweep has an empty sigma list".into()));
                }
                if !matches!(m.supply, SupplyConfig::TruncNormal { .. }) {
                    return Err(Error::Schema("uncertainty sweep needs a trunc_normal supply".into()));
                }
                grid(*p_min, *p_max, *steps)?;
            }
        }
        Ok(())
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.market.quadrature_nodes.unwrap_or(DEFAULT_QUADRATURE_NODES)
    }

    /// Sweep points in output order: outer loop over Δ or σ, inner over price.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        let base = self.market.price;
        let prices = |p_min: Option<f64>, p_max: Option<f64>, steps: Option<usize>| match (p_min, p_max, steps) {
            (Some(lo), Some(hi), Some(n)) => linspace(lo, hi, n),
            _ => base.into_iter().collect(),
        };
        Ok(match &self.sweep {
            None => {
                let price = base.ok_or_else(|| Error::Schema("market.price is required".into()))?;
                vec![SweepPoint {
                    price,
                    delta: None,
                    sigma: None,
                }]
            }
            Some(SweepConfig::Price { p_min, p_max, steps }) => linspace(*p_min, *p_max, *steps)
                .into_iter()
                .map(|price| SweepPoint {
                    price,
                    delta: None,
                    sigma: None,
                })
                .collect(),
            Some(SweepConfig::Heterogeneity {
                deltas,
                p_min,
                p_max,
                steps,
                ..
            }) => deltas
                .iter()
                .flat_map(|d| {
                    prices(*p_min, *p_max, *steps).into_iter().map(move |price| SweepPoint {
                        price,
                        delta: Some(*d),
                        sigma: None,
                    })
                })
                .collect(),
            Some(SweepConfig::Uncertainty {
                sigmas,
                p_min,
                p_max,
                steps,
            }) => sigmas
                .iter()
                .flat_map(|s| {
                    prices(*p_min, *p_max, *steps).into_iter().map(move |price| SweepPoint {
                        price,
                        delta: None,
                        sigma: Some(*s),
                    })
                })
                .collect(),
        })
    }

    /// Market at one sweep point.
    pub fn build_market(&self, point: &SweepPoint) -> Result<Market> {
        let m = &self.market;
        let vols: Option<Vec<f64>> = match (&self.sweep, point.delta) {
            (Some(SweepConfig::Heterogeneity { v_sum, .. }), Some(d)) => {
                Some(heterogeneity_vols(*v_sum, d, m.types.len()))
            }
            _ => None,
        };
        let types = m
            .types
            .iter()
            .enumerate()
            .map(|(i, ty)| {
                let voll = match &vols {
                    Some(v) => vec![v[i]; m.periods],
                    None => ty.voll.expand(m.periods, "voll")?,
                };
                TypeProfile::new(voll, ty.demand.expand(m.periods, "demand")?)
            })
            .collect::<Result<Vec<_>>>()?;
        let dist = OutputFactorDist::build(m.supply.kind(point.sigma)?, self.quadrature_nodes())?;
        let supply = SupplyModel::iid(dist, m.periods)?;
        let params = MarketParams::new(m.capacity_cost, point.price, m.profit_floor)?;
        Market::new(types, supply, params)
    }

    /// Market at `market.price` with no sweep overrides.
    pub fn base_market(&self) -> Result<Market> {
        let price = self
            .market
            .price
            .ok_or_else(|| Error::Schema("market.price is required".into()))?;
        self.build_market(&SweepPoint {
            price,
            delta: None,
            sigma: None,
        })
    }
}
