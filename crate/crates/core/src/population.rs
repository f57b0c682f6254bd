//! Household-size structure shared by both models.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest household size accepted by default. The household-state ODE grows
/// like `C(n_max + 5, 5)`.
pub const MAX_HOUSEHOLD_SIZE: usize = 10;

/// Smallest `n_max` for which both models are identifiable from final sizes.
pub const MIN_IDENTIFIABLE_SIZE: usize = 3;

const SUM_TOLERANCE: f64 = 1e-12;

/// Limiting proportions `rho_n` of households of size `n = 1..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct HouseholdSizeDistribution {
    props: Vec<f64>,
}

impl HouseholdSizeDistribution {
    /// Validates and wraps `props[n - 1] = rho_n`.
    pub fn new(props: Vec<f64>) -> Result<Self> {
        const FIELD: &str = "household.props";
        if props.is_empty() {
            return Err(Error::invalid(FIELD, "at least one household size is required"));
        }
        if props.len() > MAX_HOUSEHOLD_SIZE {
            return Err(Error::invalid(
                FIELD,
                format!("{} sizes given, at most {MAX_HOUSEHOLD_SIZE} supported", props.len()),
            ));
        }
        if let Some((i, &p)) = props.iter().enumerate().find(|(_, p)| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("{FIELD}[{i}]"), format!("proportion must be finite and >= 0, got {p}")));
        }
        let total: f64 = props.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid(FIELD, format!("proportions sum to {total}, expected 1")));
        }
        if *props.last().unwrap() == 0.0 {
            return Err(Error::invalid(FIELD, "largest household size has zero proportion; drop trailing zeros"));
        }
        Ok(Self { props })
    }

    /// Equal proportions over sizes `1..=n_max`.
    pub fn uniform(n_max: usize) -> Result<Self> {
        if n_max == 0 {
            return Err(Error::invalid("household.props", "n_max must be positive"));
        }
        Self::new(vec![1.0 / n_max as f64; n_max])
    }

    /// The three-size population with `rho = (1, 1, 1) / 3`.
    pub fn rho3() -> Self {
        Self::uniform(3).unwrap()
    }

    /// The five-size UK-like population `(29, 35, 15, 14, 7) / 100`.
    pub fn rho5() -> Self {
        Self::new(vec![0.29, 0.35, 0.15, 0.14, 0.07]).unwrap()
    }

    pub fn n_max(&self) -> usize {
        self.props.len()
    }

    pub fn props(&self) -> &[f64] {
        &self.props
    }

    /// `rho_n`, zero outside `1..=n_max`.
    pub fn rho(&self, n: usize) -> f64 {
        if n == 0 {
            0.0
        } else {
            self.props.get(n - 1).copied().unwrap_or(0.0)
        }
    }

    /// `(n, rho_n)` for sizes with positive proportion.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.props.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, &p)| (i + 1, p))
    }

    pub fn mean_size(&self) -> f64 {
        mean_household_size(self)
    }

    /// Fails unless `n_max` is large enough for fitting.
    pub fn require_identifiable(&self) -> Result<()> {
        if self.n_max() < MIN_IDENTIFIABLE_SIZE {
            return Err(Error::invalid(
                "household.props",
                format!("fitting needs n_max >= {MIN_IDENTIFIABLE_SIZE}, got {}", self.n_max()),
            ));
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for HouseholdSizeDistribution {
    type Error = Error;

    fn try_from(props: Vec<f64>) -> Result<Self> {
        Self::new(props)
    }
}

impl From<HouseholdSizeDistribution> for Vec<f64> {
    fn from(d: HouseholdSizeDistribution) -> Self {
        d.props
    }
}

/// `mu_H = sum_n n rho_n`.
pub fn mean_household_size(dist: &HouseholdSizeDistribution) -> f64 {
    dist.props.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum()
}

/// Integer household counts `m_n` summing to `m`.
///
/// Each count starts at `floor(rho_n m)`. The shortfall is handed out one
/// household at a time starting from the largest size, so every count stays
/// within one of `rho_n m`.
pub fn realize_counts(dist: &HouseholdSizeDistribution, m: usize) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::invalid("population.households", "number of households must be positive"));
    }
    let mut counts: Vec<usize> = dist.props.iter().map(|p| (p * m as f64 + 1e-9).floor() as usize).collect();
    let mut assigned: usize = counts.iter().sum();
    // Rounding guard can overshoot only by representation error.
    while assigned > m {
        let n = counts.iter().rposition(|&c| c > 0).unwrap();
        counts[n] -= 1;
        assigned -= 1;
    }
    let sizes: Vec<usize> = (0..counts.len()).rev().filter(|&i| dist.props[i] > 0.0).collect();
    let mut cursor = 0;
    while assigned < m {
        counts[sizes[cursor % sizes.len()]] += 1;
        assigned += 1;
        cursor += 1;
    }
    Ok(counts)
}

/// A finite population of `m` households with sizes following `dist`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationConfig {
    pub dist: HouseholdSizeDistribution,
    pub households: usize,
}

impl PopulationConfig {
    pub fn new(dist: HouseholdSizeDistribution, households: usize) -> Result<Self> {
        if households == 0 {
            return Err(Error::invalid("population.households", "number of households must be positive"));
        }
        Ok(Self { dist, households })
    }

    /// `m_n` for `n = 1..=n_max`.
    pub fn counts(&self) -> Vec<usize> {
        realize_counts(&self.dist, self.households).expect("validated at construction")
    }

    /// Total population size `N = sum_n n m_n`.
    pub fn population_size(&self) -> usize {
        self.counts().iter().enumerate().map(|(i, c)| (i + 1) * c).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mean_sizes() {
        assert!((HouseholdSizeDistribution::rho3().mean_size() - 2.0).abs() < 1e-15);
        assert!((HouseholdSizeDistribution::rho5().mean_size() - 2.35).abs() < 1e-12);
        let single = HouseholdSizeDistribution::new(vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(single.mean_size(), 3.0);
    }

    #[test]
    fn counts_examples() {
        assert_eq!(realize_counts(&HouseholdSizeDistribution::rho3(), 9).unwrap(), vec![3, 3, 3]);
        assert_eq!(
            realize_counts(&HouseholdSizeDistribution::rho5(), 10_000).unwrap(),
            vec![2900, 3500, 1500, 1400, 700]
        );
        let c = realize_counts(&HouseholdSizeDistribution::rho3(), 10).unwrap();
        assert_eq!(c.iter().sum::<usize>(), 10);
        assert_eq!(c, vec![3, 3, 4]);
        assert!(realize_counts(&HouseholdSizeDistribution::rho3(), 0).is_err());
    }

    #[test]
    fn rejects_bad_distributions() {
        let err = HouseholdSizeDistribution::new(vec![0.3, 0.3, 0.3]).unwrap_err();
        assert!(err.to_string().starts_with("household.props"), "{err}");
        assert!(HouseholdSizeDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(HouseholdSizeDistribution::new(vec![]).is_err());
        assert!(HouseholdSizeDistribution::new(vec![0.1; 11]).is_err());
        assert!(HouseholdSizeDistribution::new(vec![0.5, 0.5]).unwrap().require_identifiable().is_err());
    }

    #[test]
    fn population_size_rho5() {
        let pop = PopulationConfig::new(HouseholdSizeDistribution::rho5(), 10_000).unwrap();
        assert_eq!(pop.population_size(), 23_500);
    }

    fn arb_dist() -> impl Strategy<Value = HouseholdSizeDistribution> {
        prop::collection::vec(0.01f64..1.0, 1..=MAX_HOUSEHOLD_SIZE).prop_map(|w| {
            let s: f64 = w.iter().sum();
            let mut props: Vec<f64> = w.iter().map(|x| x / s).collect();
            let head: f64 = props[..props.len() - 1].iter().sum();
            *props.last_mut().unwrap() = 1.0 - head;
            HouseholdSizeDistribution::new(props).unwrap()
        })
    }

    proptest! {
        #[test]
        fn counts_sum_to_m_and_stay_close(dist in arb_dist(), m in 1usize..50_000) {
            let counts = realize_counts(&dist, m).unwrap();
            prop_assert_eq!(counts.iter().sum::<usize>(), m);
            for (c, p) in counts.iter().zip(dist.props()) {
                prop_assert!((*c as f64 - p * m as f64).abs() <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn mean_size_is_linear(a in arb_dist(), b in arb_dist(), alpha in 0.0f64..1.0) {
            let len = a.n_max().max(b.n_max());
            let mix: Vec<f64> = (1..=len).map(|n| alpha * a.rho(n) + (1.0 - alpha) * b.rho(n)).collect();
            let mix_mean: f64 = mix.iter().enumerate().map(|(i, p)| (i + 1) as f64 * p).sum();
            prop_assert!((mix_mean - (alpha * a.mean_size() + (1.0 - alpha) * b.mean_size())).abs() < 1e-12);
        }
    }
}
