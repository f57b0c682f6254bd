//! Stochastic simulation of both household models in finite populations.

mod engine;
mod sumtree;

pub use engine::simulate_once;
pub use sumtree::SumTree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::final_size::{format_sig15, FinalSizeDistribution, SizeAggregates};
use crate::ids::IdsParams;
use crate::mt::MtGeneration;
use crate::population::PopulationConfig;
use crate::{seed, Error, Model, ModelParams, Result};

pub const DEFAULT_CUTOFF: f64 = 0.15;
pub const DEFAULT_EVENT_BUDGET: u64 = 1_000_000_000;

pub type SimModel = ModelParams;

/// Severity of the initial infectives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialSeverity {
    /// All initial infectives are severe.
    Severe,
    /// All initial infectives are mild.
    Mild,
    /// MT: each keeps its pre-drawn type. IDS has no types and uses severe.
    ByType,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialInfectives {
    pub count: usize,
    pub severity: InitialSeverity,
    /// Size of the households that receive them; defaults to `n_max`.
    pub household_size: Option<usize>,
}

impl Default for InitialInfectives {
    fn default() -> Self {
        Self { count: 10, severity: InitialSeverity::Severe, household_size: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: SimModel,
    pub population: PopulationConfig,
    pub initial: InitialInfectives,
    pub cutoff: f64,
    pub seed: u64,
    pub event_budget: u64,
}

impl SimConfig {
    pub fn new(model: SimModel, population: PopulationConfig, seed: u64) -> Self {
        Self {
            model,
            population,
            initial: InitialInfectives::default(),
            cutoff: DEFAULT_CUTOFF,
            seed,
            event_budget: DEFAULT_EVENT_BUDGET,
        }
    }

    pub fn with_initial(mut self, initial: InitialInfectives) -> Self {
        self.initial = initial;
        self
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelParams::Mt(g) => g.validate()?,
            ModelParams::Ids(p) => p.validate()?,
        }
        if !(0.0..=1.0).contains(&self.cutoff) {
            return Err(Error::invalid("simulation.cutoff", format!("cutoff must lie in [0, 1], got {}", self.cutoff)));
        }
        let size = self.initial.household_size.unwrap_or(self.population.dist.n_max());
        let available = self.population.counts().get(size.wrapping_sub(1)).copied().unwrap_or(0);
        if self.initial.count > available {
            return Err(Error::invalid(
                "simulation.initial_infectives",
                format!("{} initial infectives but only {available} households of size {size}", self.initial.count),
            ));
        }
        Ok(())
    }

    pub fn model_kind(&self) -> Model {
        self.model.model()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub seed: u64,
    /// Mild removed among initial susceptibles.
    pub mild_total: u64,
    /// Severe removed among initial susceptibles.
    pub severe_total: u64,
    /// `Z_n(r_M, r_S)`: numbers of initially fully susceptible households of
    /// size `n` ending with `r_M` mild and `r_S` severe removed.
    pub household_counts: FinalSizeDistribution,
    /// Fraction of the whole population ever infected, initial cases included.
    pub infected_fraction: f64,
    pub major: bool,
    pub events: u64,
}

impl SimOutcome {
    /// Empirical final-size distribution of this outcome.
    pub fn empirical(&self) -> FinalSizeDistribution {
        let mut d = self.household_counts.clone();
        d.normalize();
        d
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub outcomes: Vec<SimOutcome>,
    /// Pooled over major outbreaks; `None` when there were none.
    pub empirical: Option<FinalSizeDistribution>,
}

impl BatchResult {
    pub fn majors(&self) -> impl Iterator<Item = &SimOutcome> {
        self.outcomes.iter().filter(|o| o.major)
    }

    pub fn major_count(&self) -> usize {
        self.majors().count()
    }
}

/// Runs `replicates` independent realizations; replicate `i` uses seed
/// `derive(cfg.seed, i)`. Output order follows the replicate index.
pub fn run_batch(cfg: &SimConfig, replicates: usize) -> Result<BatchResult> {
    if replicates == 0 {
        return Err(Error::invalid("simulation.replicates", "at least one replicate is required"));
    }
    cfg.validate()?;
    let outcomes = (0..replicates as u64)
        .into_par_iter()
        .map(|i| simulate_once(&cfg.clone().with_seed(seed::derive(cfg.seed, i))))
        .collect::<Result<Vec<_>>>()?;
    let empirical = pooled(outcomes.iter().filter(|o| o.major));
    Ok(BatchResult { outcomes, empirical })
}

fn pooled<'a>(outcomes: impl Iterator<Item = &'a SimOutcome>) -> Option<FinalSizeDistribution> {
    let mut acc: Option<FinalSizeDistribution> = None;
    for o in outcomes {
        match acc.as_mut() {
            None => acc = Some(o.household_counts.clone()),
            Some(a) => {
                for (n, rm, rs, c) in o.household_counts.iter() {
                    a.add(n, rm, rs, c);
                }
            }
        }
    }
    acc.map(|mut a| {
        a.normalize();
        a
    })
}

/// Simulates until a major outbreak occurs, trying seeds
/// `derive(cfg.seed, attempt)` in turn.
pub fn simulate_major(cfg: &SimConfig, max_attempts: usize) -> Result<SimOutcome> {
    for attempt in 0..max_attempts as u64 {
        let out = simulate_once(&cfg.clone().with_seed(seed::derive(cfg.seed, attempt)))?;
        if out.major {
            return Ok(out);
        }
    }
    Err(Error::invalid("simulation", format!("no major outbreak in {max_attempts} attempts")))
}

/// Sample moments of a set of totals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Moments {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
}

impl Moments {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        let n = count as f64;
        let mean = values.iter().sum::<f64>() / n;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for v in values {
            let d = v - mean;
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
        let variance = if count > 1 { m2 * n / (n - 1.0) } else { 0.0 };
        let (skewness, excess_kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
        Self { count, mean, variance, skewness, excess_kurtosis }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub model: Model,
    pub replicates: usize,
    pub majors: usize,
    /// Per household size, pooled over major outbreaks.
    pub per_size: Vec<SizeAggregates>,
    pub mild: Moments,
    pub severe: Moments,
}

/// Per-size attack rates and moment summaries over the major outbreaks.
pub fn summarize(batch: &BatchResult, model: Model) -> Result<BatchSummary> {
    let majors: Vec<&SimOutcome> = batch.majors().collect();
    if majors.is_empty() {
        return Err(Error::invalid("simulation", "no major outbreaks to summarize"));
    }
    let n_max = majors[0].household_counts.n_max();
    let mut per_size = Vec::with_capacity(n_max);
    for n in 1..=n_max {
        let (mut households, mut mild, mut severe) = (0.0, 0.0, 0.0);
        for o in &majors {
            for (rm, rs, c) in o.household_counts.cells(n) {
                households += c;
                mild += rm as f64 * c;
                severe += rs as f64 * c;
            }
        }
        let agg = if households > 0.0 {
            SizeAggregates::from_means(n, mild / households, severe / households)
        } else {
            SizeAggregates::from_means(n, 0.0, 0.0)
        };
        per_size.push(agg);
    }
    let mild: Vec<f64> = majors.iter().map(|o| o.mild_total as f64).collect();
    let severe: Vec<f64> = majors.iter().map(|o| o.severe_total as f64).collect();
    Ok(BatchSummary {
        model,
        replicates: batch.outcomes.len(),
        majors: majors.len(),
        per_size,
        mild: Moments::of(&mild),
        severe: Moments::of(&severe),
    })
}

/// Equal-width histogram over `[min, max]` of the values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn histogram(values: &[f64], bins: usize) -> Histogram {
    let bins = bins.max(1);
    if values.is_empty() {
        return Histogram { edges: vec![0.0, 1.0], counts: vec![0] };
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        hi = lo + 1.0;
    }
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|b| lo + b as f64 * width).collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Histogram { edges, counts }
}

/// MT generation parameters with the mild-type infection rates scaled by `c`
/// and `gamma_M = c`.
pub fn rescale_mild_clock(gen: &MtGeneration, c: f64) -> MtGeneration {
    let mut out = *gen;
    out.global.mm *= c;
    out.global.ms *= c;
    out.local.mm *= c;
    out.local.ms *= c;
    out.gamma_m = gen.gamma_m * c;
    out
}

/// Convenience for the IDS model with unit mild removal rate.
pub fn ids_config(params: IdsParams, population: PopulationConfig, seed: u64) -> SimConfig {
    SimConfig::new(ModelParams::Ids(params), population, seed)
}

pub fn mt_config(gen: MtGeneration, population: PopulationConfig, seed: u64) -> SimConfig {
    SimConfig::new(ModelParams::Mt(gen), population, seed)
}

/// One row per replicate: seed, totals and the major-outbreak flag.
pub fn write_replicates_csv<W: std::io::Write>(outcomes: &[SimOutcome], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["replicate", "seed", "mild_total", "severe_total", "infected_fraction", "major", "events"])?;
    for (i, o) in outcomes.iter().enumerate() {
        w.write_record([
            i.to_string(),
            o.seed.to_string(),
            o.mild_total.to_string(),
            o.severe_total.to_string(),
            format_sig15(o.infected_fraction),
            o.major.to_string(),
            o.events.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: std::io::Write>(h: &Histogram, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lower", "upper", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([format_sig15(h.edges[i]), format_sig15(h.edges[i + 1]), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
