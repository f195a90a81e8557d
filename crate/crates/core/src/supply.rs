//! Renewable output-factor distributions and the expectations built on them.
//!
//! Every quantity the solvers need reduces to one of three expectations of the
//! delivered energy `min(D, r·Θ)` for capacity `r`, demand `D` and output
//! factor `Θ ∈ [0, 1]`. The integrand has a kink at `θ* = D / r`, so continuous
//! distributions are integrated piecewise with the kink (and, for a narrow
//! truncated normal, points around its mode) as panel boundaries.

use std::sync::Arc;

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::quadrature::GaussLegendre;

pub const DEFAULT_QUADRATURE_NODES: usize = 256;

/// Smallest admissible truncated-normal normalizing mass on `[0, 1]`.
const MIN_TRUNCATED_MASS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum OutputFactorKind {
    Uniform01,
    TruncNormal01 {
        mu: f64,
        sigma: f64,
    },
    /// Finitely supported distribution as `(value, probability)` pairs.
    Discrete(Vec<(f64, f64)>),
}

/// Distribution of the output factor `Θ` for one period.
#[derive(Debug, Clone)]
pub struct OutputFactorDist {
    kind: OutputFactorKind,
    rule: Arc<GaussLegendre>,
    /// `(Φ(-μ/σ), Φ((1-μ)/σ) - Φ(-μ/σ))` for the truncated normal.
    tn: Option<(f64, f64)>,
}

impl PartialEq for OutputFactorDist {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.rule.order() == other.rule.order()
    }
}

fn std_normal() -> Normal {
    Normal::standard()
}

impl OutputFactorDist {
    pub fn uniform() -> Self {
        Self::build(OutputFactorKind::Uniform01, DEFAULT_QUADRATURE_NODES).expect("uniform is always valid")
    }

    pub fn trunc_normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::build(OutputFactorKind::TruncNormal01 { mu, sigma }, DEFAULT_QUADRATURE_NODES)
    }

    pub fn discrete(points: Vec<(f64, f64)>) -> Result<Self> {
        Self::build(OutputFactorKind::Discrete(points), DEFAULT_QUADRATURE_NODES)
    }

    /// Deterministic output factor `Θ ≡ value`.
    pub fn constant(value: f64) -> Result<Self> {
        Self::discrete(vec![(value, 1.0)])
    }

    /// Validates `kind` and builds the distribution with an `nodes`-point rule.
    pub fn build(kind: OutputFactorKind, nodes: usize) -> Result<Self> {
        if nodes == 0 {
            return Err(Error::InvalidDistribution("quadrature_nodes must be positive".into()));
        }
        let mut tn = None;
        match &kind {
            OutputFactorKind::Uniform01 => {}
            OutputFactorKind::TruncNormal01 { mu, sigma } => {
                if !mu.is_finite() || !sigma.is_finite() || *sigma <= 0.0 {
                    return Err(Error::InvalidDistribution(format!(
                        "truncated normal needs finite mu and sigma > 0 (mu={mu}, sigma={sigma})"
                    )));
                }
                let n = std_normal();
                let lo = n.cdf((0.0 - mu) / sigma);
                let hi = n.cdf((1.0 - mu) / sigma);
                let mass = hi - lo;
                if mass <= MIN_TRUNCATED_MASS {
                    return Err(Error::InvalidDistribution(format!(
                        "truncated normal has negligible mass on [0,1] ({mass:e})"
                    )));
                }
                tn = Some((lo, mass));
            }
            OutputFactorKind::Discrete(points) => {
                if points.is_empty() {
                    return Err(Error::InvalidDistribution(
                        "discrete distribution needs at least one point".into(),
                    ));
                }
                let mut total = 0.0;
                for &(v, p) in points {
                    if !(0.0..=1.0).contains(&v) {
                        return Err(Error::InvalidDistribution(format!("support point {v} outside [0,1]")));
                    }
                    if !p.is_finite() || p < 0.0 {
                        return Err(Error::InvalidDistribution(format!(
                            "probability {p} must be nonnegative"
                        )));
                    }
                    total += p;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDistribution(format!(
                        "probabilities sum to {total}, not 1"
                    )));
                }
            }
        }
        Ok(OutputFactorDist {
            kind,
            rule: Arc::new(GaussLegendre::new(nodes)),
            tn,
        })
    }

    /// Same distribution integrated with a different number of nodes.
    pub fn with_quadrature_nodes(&self, nodes: usize) -> Result<Self> {
        Self::build(self.kind.clone(), nodes)
    }

    pub fn kind(&self) -> &OutputFactorKind {
        &self.kind
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.rule.order()
    }

    pub fn is_continuous(&self) -> bool {
        !matches!(self.kind, OutputFactorKind::Discrete(_))
    }

    /// Density on `[0, 1]`; zero for discrete kinds.
    pub fn pdf(&self, theta: f64) -> f64 {
        if !(0.0..=1.0).contains(&theta) {
            return 0.0;
        }
        match &self.kind {
            OutputFactorKind::Uniform01 => 1.0,
            OutputFactorKind::TruncNormal01 { mu, sigma } => {
                let (_, mass) = self.tn.expect("validated");
                let z = (theta - mu) / sigma;
                (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt() * mass)
            }
            OutputFactorKind::Discrete(_) => 0.0,
        }
    }

    pub fn cdf(&self, theta: f64) -> f64 {
        if theta < 0.0 {
            return 0.0;
        }
        if theta >= 1.0 {
            return 1.0;
        }
        match &self.kind {
            OutputFactorKind::Uniform01 => theta,
            OutputFactorKind::TruncNormal01 { mu, sigma } => {
                let (lo, mass) = self.tn.expect("validated");
                ((std_normal().cdf((theta - mu) / sigma) - lo) / mass).clamp(0.0, 1.0)
            }
            OutputFactorKind::Discrete(points) => points.iter().filter(|(v, _)| *v <= theta).map(|(_, p)| p).sum(),
        }
    }

    /// Smallest `θ` with `cdf(θ) ≥ prob`.
    pub fn quantile(&self, prob: f64) -> f64 {
        let prob = prob.clamp(0.0, 1.0);
        match &self.kind {
            OutputFactorKind::Uniform01 => prob,
            OutputFactorKind::TruncNormal01 { mu, sigma } => {
                let (lo, mass) = self.tn.expect("validated");
                let u = (lo + prob * mass).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
                (mu + sigma * std_normal().inverse_cdf(u)).clamp(0.0, 1.0)
            }
            OutputFactorKind::Discrete(points) => {
                let mut sorted = points.clone();
                sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
                let mut cum = 0.0;
                for (v, p) in &sorted {
                    cum += p;
                    if cum >= prob - 1e-15 {
                        return *v;
                    }
                }
                sorted.last().map(|x| x.0).unwrap_or(0.0)
            }
        }
    }

    /// `E[Θ]`.
    pub fn mean(&self) -> f64 {
        match &self.kind {
            OutputFactorKind::Discrete(points) => points.iter().map(|(v, p)| v * p).sum(),
            _ => self
                .panels(1.0)
                .windows(2)
                .map(|w| self.rule.integrate(w[0], w[1], |x| x * self.pdf(x)))
                .sum(),
        }
    }

    /// Draws one realization of `Θ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        match &self.kind {
            OutputFactorKind::Uniform01 => u,
            OutputFactorKind::TruncNormal01 { .. } => self.quantile(u),
            OutputFactorKind::Discrete(points) => {
                let mut cum = 0.0;
                for (v, p) in points {
                    cum += p;
                    if u < cum {
                        return *v;
                    }
                }
                points.last().map(|x| x.0).unwrap_or(0.0)
            }
        }
    }

    /// Panel boundaries on `[0, 1]` for continuous kinds, including `kink`.
    fn panels(&self, kink: f64) -> Vec<f64> {
        let mut pts = vec![0.0, 1.0];
        if kink > 0.0 && kink < 1.0 {
            pts.push(kink);
        }
        if let OutputFactorKind::TruncNormal01 { mu, sigma } = self.kind {
            for k in [-8.0, -3.0, 0.0, 3.0, 8.0] {
                let x = mu + k * sigma;
                if x > 0.0 && x < 1.0 {
                    pts.push(x);
                }
            }
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `E[min(D, r·Θ)]`.
    pub fn expected_supply(&self, r: f64, demand: f64) -> Result<f64> {
        check_inputs(r, demand, false)?;
        Ok(self.expected_supply_unchecked(r, demand))
    }

    pub(crate) fn expected_supply_unchecked(&self, r: f64, demand: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        match &self.kind {
            OutputFactorKind::Discrete(points) => {
                let total: f64 = points.iter().map(|(v, p)| p * demand.min(r * v)).sum();
                total.clamp(0.0, demand)
            }
            _ => {
                let kink = (demand / r).min(1.0);
                let pts = self.panels(kink);
                let mut total = 0.0;
                for w in pts.windows(2) {
                    let (a, b) = (w[0], w[1]);
                    total += if b <= kink {
                        r * self.rule.integrate(a, b, |x| x * self.pdf(x))
                    } else {
                        demand * self.rule.integrate(a, b, |x| self.pdf(x))
                    };
                }
                total.clamp(0.0, demand)
            }
        }
    }

    /// `1 − E[min(D, r·Θ)] / D`, the expected fraction of demand left unserved.
    pub fn expected_shortfall_fraction(&self, r: f64, demand: f64) -> Result<f64> {
        Ok((1.0 - self.expected_supply(r, demand)? / demand).max(0.0))
    }

    /// `d/dr E[min(D, r·Θ)] = E[Θ · 1{r·Θ < D}]` for `r > 0`.
    pub fn expected_supply_derivative(&self, r: f64, demand: f64) -> Result<f64> {
        check_inputs(r, demand, true)?;
        Ok(self.supply_slope(r, demand))
    }

    /// Right derivative of expected supply in `r`; at `r = 0` this is `E[Θ]`.
    pub(crate) fn supply_slope(&self, r: f64, demand: f64) -> f64 {
        match &self.kind {
            OutputFactorKind::Discrete(points) => {
                points.iter().filter(|(v, _)| r * v < demand).map(|(v, p)| v * p).sum()
            }
            _ => {
                let kink = if r > 0.0 { (demand / r).min(1.0) } else { 1.0 };
                self.panels(kink)
                    .windows(2)
                    .filter(|w| w[1] <= kink)
                    .map(|w| self.rule.integrate(w[0], w[1], |x| x * self.pdf(x)))
                    .sum::<f64>()
                    .clamp(0.0, 1.0)
            }
        }
    }
}

fn check_inputs(r: f64, demand: f64, strict_r: bool) -> Result<()> {
    if !r.is_finite() || r < 0.0 || (strict_r && r == 0.0) {
        return Err(Error::Domain(format!(
            "capacity must be {} (got {r})",
            if strict_r { "positive" } else { "nonnegative" }
        )));
    }
    if !demand.is_finite() || demand <= 0.0 {
        return Err(Error::Domain(format!("demand must be positive (got {demand})")));
    }
    Ok(())
}

/// Output-factor distributions for each period of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct SupplyModel {
    per_period: Vec<Arc<OutputFactorDist>>,
}

impl SupplyModel {
    /// One distribution shared by all `periods` periods.
    pub fn iid(dist: OutputFactorDist, periods: usize) -> Result<Self> {
        if periods == 0 {
            return Err(Error::InvalidMarket("at least one period is required".into()));
        }
        let shared = Arc::new(dist);
        Ok(SupplyModel {
            per_period: vec![shared; periods],
        })
    }

    pub fn per_period(dists: Vec<OutputFactorDist>) -> Result<Self> {
        if dists.is_empty() {
            return Err(Error::InvalidMarket("at least one period is required".into()));
        }
        Ok(SupplyModel {
            per_period: dists.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn periods(&self) -> usize {
        self.per_period.len()
    }

    pub fn dist(&self, t: usize) -> &OutputFactorDist {
        &self.per_period[t]
    }

    /// True when periods `a` and `b` share the same distribution object.
    pub(crate) fn same_dist(&self, a: usize, b: usize) -> bool {
        Arc::ptr_eq(&self.per_period[a], &self.per_period[b])
    }

    pub fn is_iid(&self) -> bool {
        (1..self.periods()).all(|t| self.same_dist(0, t))
    }

    /// Rebuilds every distribution with `nodes` quadrature points, keeping
    /// shared distributions shared.
    pub fn with_quadrature_nodes(&self, nodes: usize) -> Result<Self> {
        let mut out: Vec<Arc<OutputFactorDist>> = Vec::with_capacity(self.periods());
        for t in 0..self.periods() {
            if let Some(prev) = (0..t).find(|&s| self.same_dist(s, t)) {
                out.push(out[prev].clone());
            } else {
                out.push(Arc::new(self.per_period[t].with_quadrature_nodes(nodes)?));
            }
        }
        Ok(SupplyModel { per_period: out })
    }
}
