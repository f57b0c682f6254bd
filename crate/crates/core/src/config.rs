//! Structured-text (TOML) run configuration.
//!
//! Every section is optional; missing sections fall back to the illustrative
//! parameter sets. Validation errors name the offending field path.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discrimination::{DegeneracyThresholds, FiniteDataSpec};
use crate::fitting::nelder_mead::NelderMeadOptions;
use crate::fitting::FitConfig;
use crate::ids::IdsParams;
use crate::mt::{LocalRates, MtGeneration, MtParams};
use crate::population::HouseholdSizeDistribution;
use crate::sim::{InitialInfectives, InitialSeverity, DEFAULT_CUTOFF};
use crate::{Error, Model, ModelParams, Result};

/// A household distribution given by name (`rho3`, `rho5`, `uniformN`) or as
/// explicit proportions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DistSpec {
    Named(String),
    Props(Vec<f64>),
}

impl DistSpec {
    pub fn resolve(&self, field: &str) -> Result<HouseholdSizeDistribution> {
        match self {
            DistSpec::Props(p) => HouseholdSizeDistribution::new(p.clone()).map_err(|e| relabel(e, field)),
            DistSpec::Named(name) => match name.as_str() {
                "rho3" => Ok(HouseholdSizeDistribution::rho3()),
                "rho5" => Ok(HouseholdSizeDistribution::rho5()),
                other => match other.strip_prefix("uniform").and_then(|n| n.parse::<usize>().ok()) {
                    Some(n) => HouseholdSizeDistribution::uniform(n).map_err(|e| relabel(e, field)),
                    None => Err(Error::invalid(field, format!("unknown distribution `{other}`"))),
                },
            },
        }
    }
}

fn relabel(e: Error, field: &str) -> Error {
    match e {
        Error::Invalid { message, .. } => Error::invalid(field, message),
        other => other,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HouseholdSection {
    /// Proportions `rho_1, rho_2, ...`.
    pub props: Option<Vec<f64>>,
    pub preset: Option<String>,
    /// Number of households `m` for simulation.
    pub households: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MtSection {
    pub beta_m: f64,
    pub local: LocalRates,
    pub global: Option<LocalRates>,
    pub pi_m: Option<f64>,
    pub pi_s: Option<f64>,
    pub gamma_m: Option<f64>,
    pub gamma_s: Option<f64>,
}

/// MT parameters either as generating rates or directly as escape probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MtSpec {
    Generation(MtGeneration),
    Escape(MtParams),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub replicates: Option<usize>,
    pub cutoff: Option<f64>,
    pub initial_count: Option<usize>,
    pub initial_severity: Option<InitialSeverity>,
    pub initial_household_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub runs: Option<usize>,
    pub max_evals: Option<usize>,
    pub ftol: Option<f64>,
    pub ids_candidates: Option<usize>,
    pub penalty: Option<f64>,
    pub max_restarts: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CrossFit,
    Sweep,
    FiniteData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub kind: ExperimentKind,
    /// Generating model (sweep and finite-data).
    pub generator: Option<Model>,
    pub datasets: Option<usize>,
    pub runs_per_fit: Option<usize>,
    /// Household distributions (cross-fit); defaults to `rho3` and `rho5`.
    pub dists: Option<Vec<DistSpec>>,
    pub proximity: Option<f64>,
    pub criticality: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    #[serde(default)]
    pub household: HouseholdSection,
    pub mt: Option<MtSection>,
    pub ids: Option<IdsParams>,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub fit: FitSection,
    pub experiment: Option<ExperimentSection>,
}

impl std::str::FromStr for Config {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse()
    }

    /// Household distribution; `rho5` when unspecified.
    pub fn household_dist(&self) -> Result<HouseholdSizeDistribution> {
        match (&self.household.props, &self.household.preset) {
            (Some(_), Some(_)) => Err(Error::invalid("household", "give either `props` or `preset`, not both")),
            (Some(p), None) => DistSpec::Props(p.clone()).resolve("household.props"),
            (None, Some(name)) => DistSpec::Named(name.clone()).resolve("household.preset"),
            (None, None) => Ok(HouseholdSizeDistribution::rho5()),
        }
    }

    pub fn households(&self) -> usize {
        self.household.households.unwrap_or(10_000)
    }

    pub fn mt_spec(&self) -> Result<MtSpec> {
        let Some(s) = &self.mt else {
            return Ok(MtSpec::Generation(MtGeneration::reference()));
        };
        match (s.global, s.pi_m, s.pi_s) {
            (Some(global), None, None) => {
                let gen = MtGeneration {
                    global,
                    local: s.local,
                    beta_m: s.beta_m,
                    gamma_m: s.gamma_m.unwrap_or(1.0),
                    gamma_s: s.gamma_s.unwrap_or(1.0),
                };
                gen.validate()?;
                Ok(MtSpec::Generation(gen))
            }
            (None, Some(pi_m), Some(pi_s)) => {
                if s.gamma_m.is_some() || s.gamma_s.is_some() {
                    return Err(Error::invalid("mt.gamma_m", "removal rates apply only with `global` rates"));
                }
                let p = MtParams { pi_m, pi_s, local: s.local, beta_m: s.beta_m };
                p.validate()?;
                Ok(MtSpec::Escape(p))
            }
            _ => Err(Error::invalid("mt", "give either `global` rates or both `pi_m` and `pi_s`")),
        }
    }

    /// MT generating rates; rejects the escape-probability form.
    pub fn mt_generation(&self) -> Result<MtGeneration> {
        match self.mt_spec()? {
            MtSpec::Generation(g) => Ok(g),
            MtSpec::Escape(_) => Err(Error::invalid("mt.global", "simulation needs global rates, not escape probabilities")),
        }
    }

    pub fn ids_params(&self) -> Result<IdsParams> {
        let p = self.ids.unwrap_or_else(IdsParams::reference);
        p.validate()?;
        Ok(p)
    }

    pub fn model_params(&self, model: Model) -> Result<ModelParams> {
        Ok(match model {
            Model::Mt => ModelParams::Mt(self.mt_generation()?),
            Model::Ids => ModelParams::Ids(self.ids_params()?),
        })
    }

    pub fn fit_config(&self, seed: u64) -> Result<FitConfig> {
        let f = &self.fit;
        let base = FitConfig::default();
        let optimizer = NelderMeadOptions {
            max_evals: f.max_evals.unwrap_or(base.optimizer.max_evals),
            ftol: f.ftol.unwrap_or(base.optimizer.ftol),
            max_restarts: f.max_restarts.unwrap_or(base.optimizer.max_restarts),
            ..base.optimizer
        };
        if optimizer.max_evals == 0 {
            return Err(Error::invalid("fit.max_evals", "must be positive"));
        }
        if !(optimizer.ftol.is_finite() && optimizer.ftol >= 0.0) {
            return Err(Error::invalid("fit.ftol", "must be finite and non-negative"));
        }
        let penalty = f.penalty.unwrap_or(base.penalty);
        if !(penalty.is_finite() && penalty > 0.0) {
            return Err(Error::invalid("fit.penalty", "must be finite and positive"));
        }
        Ok(FitConfig { seed, optimizer, ids_candidates: f.ids_candidates.unwrap_or(base.ids_candidates), penalty, ..base })
    }

    pub fn fit_runs(&self) -> usize {
        self.fit.runs.unwrap_or(100)
    }

    pub fn cutoff(&self) -> Result<f64> {
        let c = self.simulation.cutoff.unwrap_or(DEFAULT_CUTOFF);
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::invalid("simulation.cutoff", format!("must lie in [0, 1], got {c}")));
        }
        Ok(c)
    }

    pub fn replicates(&self) -> usize {
        self.simulation.replicates.unwrap_or(100)
    }

    /// Initial infectives; the default severity is `by-type`.
    pub fn initial(&self) -> InitialInfectives {
        let s = &self.simulation;
        InitialInfectives {
            count: s.initial_count.unwrap_or(10),
            severity: s.initial_severity.unwrap_or(InitialSeverity::ByType),
            household_size: s.initial_household_size,
        }
    }

    pub fn experiment(&self) -> Result<&ExperimentSection> {
        self.experiment.as_ref().ok_or_else(|| Error::invalid("experiment", "missing [experiment] section"))
    }

    pub fn thresholds(&self) -> DegeneracyThresholds {
        let d = DegeneracyThresholds::default();
        match &self.experiment {
            Some(e) => DegeneracyThresholds {
                proximity: e.proximity.unwrap_or(d.proximity),
                criticality: e.criticality.unwrap_or(d.criticality),
            },
            None => d,
        }
    }

    pub fn experiment_dists(&self) -> Result<Vec<HouseholdSizeDistribution>> {
        let e = self.experiment()?;
        match &e.dists {
            None => Ok(vec![HouseholdSizeDistribution::rho3(), HouseholdSizeDistribution::rho5()]),
            Some(list) if list.is_empty() => Err(Error::invalid("experiment.dists", "list is empty")),
            Some(list) => list.iter().enumerate().map(|(i, d)| d.resolve(&format!("experiment.dists[{i}]"))).collect(),
        }
    }

    pub fn generator(&self) -> Result<Model> {
        self.experiment()?.generator.ok_or_else(|| Error::invalid("experiment.generator", "required for this experiment kind"))
    }

    pub fn datasets(&self, default: usize) -> Result<usize> {
        let n = self.experiment()?.datasets.unwrap_or(default);
        if n == 0 {
            return Err(Error::invalid("experiment.datasets", "must be at least 1"));
        }
        Ok(n)
    }

    pub fn runs_per_fit(&self) -> Result<usize> {
        let n = self.experiment()?.runs_per_fit.unwrap_or(5);
        if n == 0 {
            return Err(Error::invalid("experiment.runs_per_fit", "must be at least 1"));
        }
        Ok(n)
    }

    /// Finite-data spec. Initial infectives default to severe here.
    pub fn finite_data_spec(&self) -> Result<FiniteDataSpec> {
        let generator = self.model_params(self.generator()?)?;
        let mut spec = FiniteDataSpec::new(generator, self.household_dist()?);
        spec.datasets = self.datasets(25)?;
        spec.households = self.households();
        spec.runs_per_fit = self.runs_per_fit()?;
        spec.cutoff = self.cutoff()?;
        let s = &self.simulation;
        spec.initial = InitialInfectives {
            count: s.initial_count.unwrap_or(10),
            severity: s.initial_severity.unwrap_or(InitialSeverity::Severe),
            household_size: s.initial_household_size,
        };
        if spec.households == 0 {
            return Err(Error::invalid("household.households", "must be at least 1"));
        }
        Ok(spec)
    }
}
