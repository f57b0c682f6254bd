use crate::final_size::FinalSizeDistribution;
use crate::math::CompensatedSum;
use crate::population::HouseholdSizeDistribution;
use crate::{Error, Result};

/// Below this the exact form is replaced by its second-order expansion.
pub const TAYLOR_SWITCHOVER: f64 = 1e-5;

pub const ASYMPTOTIC_NORMALIZATION_TOL: f64 = 1e-9;
pub const EMPIRICAL_NORMALIZATION_TOL: f64 = 1e-6;

/// Observed household final-size data together with the size weights.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetData {
    pub q: FinalSizeDistribution,
    pub dist: HouseholdSizeDistribution,
    /// Number of households, when the data come from a finite population.
    pub m: Option<usize>,
}

impl TargetData {
    pub fn new(q: FinalSizeDistribution, dist: HouseholdSizeDistribution, m: Option<usize>) -> Result<Self> {
        if q.n_max() < dist.n_max() {
            return Err(Error::invalid(
                "target",
                format!("data cover sizes up to {} but weights reach {}", q.n_max(), dist.n_max()),
            ));
        }
        let tol = if m.is_some() { EMPIRICAL_NORMALIZATION_TOL } else { ASYMPTOTIC_NORMALIZATION_TOL };
        q.validate(&dist, tol)?;
        if m == Some(0) {
            return Err(Error::invalid("target.m", "household count must be positive"));
        }
        Ok(Self { q, dist, m })
    }

    pub fn asymptotic(q: FinalSizeDistribution, dist: HouseholdSizeDistribution) -> Result<Self> {
        Self::new(q, dist, None)
    }

    /// Overall mild and severe attack fractions of the data.
    pub fn attack_fractions(&self) -> (f64, f64) {
        self.q.attack_fractions(&self.dist)
    }
}

fn per_size(target: &TargetData, p: &FinalSizeDistribution, cell: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; target.dist.n_max()];
    for (n, rho) in target.dist.support() {
        let mut acc = CompensatedSum::new();
        for (rm, rs, qv) in target.q.cells(n) {
            let pv = if n <= p.n_max() { p.get(n, rm, rs) } else { 0.0 };
            if qv > 0.0 && pv <= 0.0 {
                out[n - 1] = f64::INFINITY;
                break;
            }
            if pv > 0.0 {
                acc.add(cell(qv, pv));
            }
        }
        if out[n - 1] != f64::INFINITY {
            out[n - 1] = rho * acc.value();
        }
    }
    out
}

fn total(parts: &[f64]) -> f64 {
    if parts.iter().any(|v| v.is_infinite()) {
        return f64::INFINITY;
    }
    parts.iter().copied().collect::<CompensatedSum>().value()
}

fn exact_cell(q: f64, p: f64) -> f64 {
    if q > 0.0 {
        q * (q / p).ln()
    } else {
        0.0
    }
}

fn taylor_cell(q: f64, p: f64) -> f64 {
    let d = q - p;
    d * d / (2.0 * p)
}

/// `rho_n`-weighted exact-form contributions per household size (index `n-1`).
pub fn kl_per_size_breakdown(target: &TargetData, p: &FinalSizeDistribution) -> Vec<f64> {
    per_size(target, p, exact_cell)
}

pub fn kl_exact(target: &TargetData, p: &FinalSizeDistribution) -> f64 {
    total(&kl_per_size_breakdown(target, p))
}

pub fn kl_taylor(target: &TargetData, p: &FinalSizeDistribution) -> f64 {
    total(&per_size(target, p, taylor_cell))
}

/// Weighted Kullback-Leibler divergence of `p` from the data. Infinite when
/// `p` vanishes on an observed cell.
pub fn kl_divergence(target: &TargetData, p: &FinalSizeDistribution) -> f64 {
    let exact = kl_exact(target, p);
    if exact < TAYLOR_SWITCHOVER {
        kl_taylor(target, p)
    } else {
        exact
    }
}
