//! Household final-size distributions for two SIR household epidemic models
//! in which infection can be mild or severe.
//!
//! * [`mt`]: the multitype model, where each individual's severity is fixed in
//!   advance. Final sizes come from a single-household triangular solver
//!   combined with escape-probability balance equations.
//! * [`ids`]: the infector-dependent-severity model, where severity is drawn
//!   at infection time. Final sizes come from integrating the deterministic
//!   limit of the household-state population process.
//! * [`sim`]: exact event-driven simulation of both models in finite
//!   populations.
//! * [`fitting`]: Kullback-Leibler fitting of either model to final-size data.
//! * [`discrimination`]: the cross-fitting experiments built on top.

pub mod config;
pub mod discrimination;
pub mod error;
pub mod final_size;
pub mod fitting;
pub mod ids;
pub mod math;
pub mod mt;
pub mod ode;
pub mod population;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
pub use final_size::{FinalSizeDistribution, SizeAggregates};
pub use fitting::{FitResult, FittedParams, PseudoDiagnostics, TargetData};
pub use ids::{HouseholdState, IdsParams, StateIndex};
pub use mt::{EscapeProbs, LocalRates, MtGeneration, MtGlobalRates, MtParams};
pub use population::{HouseholdSizeDistribution, PopulationConfig};

use serde::{Deserialize, Serialize};

/// Which of the two household models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Mt,
    Ids,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::Mt => "mt",
            Model::Ids => "ids",
        }
    }

    pub fn other(self) -> Model {
        match self {
            Model::Mt => Model::Ids,
            Model::Ids => Model::Mt,
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Model {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mt" => Ok(Model::Mt),
            "ids" => Ok(Model::Ids),
            other => Err(Error::invalid("model", format!("unknown model `{other}` (expected mt or ids)"))),
        }
    }
}

/// Generation parameters for either model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    Mt(MtGeneration),
    Ids(IdsParams),
}

impl ModelParams {
    pub fn model(&self) -> Model {
        match self {
            ModelParams::Mt(_) => Model::Mt,
            ModelParams::Ids(_) => Model::Ids,
        }
    }
}
