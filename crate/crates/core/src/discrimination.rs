//! Model discrimination experiments: asymptotic cross-fits, random-parameter
//! sweeps, finite-population cross-fits and degeneracy diagnostics.

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::final_size::{format_sig15, FinalSizeDistribution};
use crate::fitting::{kl_per_size_breakdown, multi_run, FitConfig, FitResult, TargetData};
use crate::ids::{ids_final_size, IdsParams, IdsSolveOptions};
use crate::mt::{mt_generate, LocalRates, MtGeneration};
use crate::population::{HouseholdSizeDistribution, PopulationConfig};
use crate::sim::{simulate_major, InitialInfectives, SimConfig};
use crate::{seed, Error, Model, ModelParams, Result};

/// IDS draws whose final infected fraction is below this are rejected.
pub const IDS_REJECTION_FLOOR: f64 = 1e-3;
const MAX_DRAWS: usize = 10_000;
const MAX_MAJOR_ATTEMPTS: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegeneracyThresholds {
    /// "Near zero" for rate and probability proximities.
    pub proximity: f64,
    /// Infected fraction above the rejection floor counted as near-critical.
    pub criticality: f64,
}

impl Default for DegeneracyThresholds {
    fn default() -> Self {
        Self { proximity: 0.05, criticality: 0.02 }
    }
}

/// Distances of a parameter set from the regions where both models give the
/// same final-size laws. Entries that do not apply to the model are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegeneracyReport {
    /// Final infected fraction above the rejection floor (0 at the floor).
    pub criticality: f64,
    /// IDS: `min(lambda_L_M, lambda_L_S / gamma_S)`.
    pub local_rate: Option<f64>,
    /// IDS: `|p_L_MM - p_L_SM|`.
    pub local_severity: Option<f64>,
    /// MT: `min(beta_M, 1 - beta_M)`.
    pub one_type: Option<f64>,
    /// MT: `min(pi_M, pi_S)`.
    pub escape: Option<f64>,
    pub thresholds: DegeneracyThresholds,
}

impl DegeneracyReport {
    pub fn for_ids(p: &IdsParams, attack_fraction: f64, thresholds: DegeneracyThresholds) -> Self {
        Self {
            criticality: (attack_fraction - IDS_REJECTION_FLOOR).max(0.0),
            local_rate: Some(p.lambda_l_m.min(p.lambda_l_s / p.gamma_s)),
            local_severity: Some((p.p_l_mm - p.p_l_sm).abs()),
            one_type: None,
            escape: None,
            thresholds,
        }
    }

    pub fn for_mt(gen: &MtGeneration, pi: (f64, f64), attack_fraction: f64, thresholds: DegeneracyThresholds) -> Self {
        Self {
            criticality: attack_fraction.max(0.0),
            local_rate: None,
            local_severity: None,
            one_type: Some(gen.beta_m.min(1.0 - gen.beta_m)),
            escape: Some(pi.0.min(pi.1)),
            thresholds,
        }
    }

    pub fn near_critical(&self) -> bool {
        self.criticality < self.thresholds.criticality
    }

    fn near(&self, v: Option<f64>) -> bool {
        v.is_some_and(|v| v < self.thresholds.proximity)
    }

    /// Names of the flagged cases.
    pub fn flags(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.near_critical() {
            out.push("near_critical");
        }
        for (name, v) in [
            ("local_rate", self.local_rate),
            ("local_severity", self.local_severity),
            ("one_type", self.one_type),
            ("escape", self.escape),
        ] {
            if self.near(v) {
                out.push(name);
            }
        }
        out
    }

    pub fn any(&self) -> bool {
        !self.flags().is_empty()
    }
}

/// Asymptotic data generated by either model, with its degeneracy report.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub target: TargetData,
    pub degeneracy: DegeneracyReport,
    /// Generation collapsed to (near) no infection.
    pub subcritical: bool,
}

pub fn generate_asymptotic(
    params: &ModelParams,
    dist: &HouseholdSizeDistribution,
    fit: &FitConfig,
    thresholds: DegeneracyThresholds,
) -> Result<GeneratedData> {
    let (q, degeneracy, subcritical) = match params {
        ModelParams::Mt(gen) => {
            let (q, sol) = mt_generate(gen, dist)?;
            let report = DegeneracyReport::for_mt(gen, (sol.pi_m, sol.pi_s), sol.z_m + sol.z_s, thresholds);
            (q, report, sol.subcritical)
        }
        ModelParams::Ids(p) => {
            // data generation is not bound by the fitting step budget
            let mut opts = fit.ids_solve;
            opts.integrator.max_steps = IdsSolveOptions::default().integrator.max_steps;
            let (q, diag) = ids_final_size(p, dist, &opts)?;
            let report = DegeneracyReport::for_ids(p, diag.attack_fraction, thresholds);
            (q, report, diag.attack_fraction < IDS_REJECTION_FLOOR)
        }
    };
    Ok(GeneratedData { target: TargetData::asymptotic(q, dist.clone())?, degeneracy, subcritical })
}

/// Rates from Exp(1) and probabilities from U(0,1), independently.
pub fn draw_parameters<R: rand::Rng + ?Sized>(model: Model, rng: &mut R) -> ModelParams {
    let mut rate = || -> f64 { Exp1.sample(rng) };
    match model {
        Model::Mt => {
            let global = LocalRates::new(rate(), rate(), rate(), rate());
            let local = LocalRates::new(rate(), rate(), rate(), rate());
            ModelParams::Mt(MtGeneration { global, local, beta_m: rng.gen(), gamma_m: 1.0, gamma_s: 1.0 })
        }
        Model::Ids => {
            let r: Vec<f64> = (0..5).map(|_| rate()).collect();
            let p: Vec<f64> = (0..4).map(|_| rng.gen()).collect();
            ModelParams::Ids(IdsParams {
                lambda_g_m: r[0],
                lambda_g_s: r[1],
                lambda_l_m: r[2],
                lambda_l_s: r[3],
                p_g_mm: p[0],
                p_g_sm: p[1],
                p_l_mm: p[2],
                p_l_sm: p[3],
                gamma_s: r[4],
            })
        }
    }
}

/// Config for fitting cell `label` of an experiment.
fn cell_config(fit: &FitConfig, label: &str, index: u64) -> FitConfig {
    fit.with_seed(seed::derive_named(fit.seed, label, index))
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossFitCell {
    /// Index into the list of household distributions.
    pub dist_index: usize,
    pub n_max: usize,
    pub fitted: Model,
    pub data: Model,
    pub best_f: f64,
    /// Exact-form contributions of each household size at the best fit.
    pub per_size: Vec<f64>,
    #[serde(skip)]
    pub best: FitResult,
    #[serde(skip)]
    pub summary: crate::fitting::TrimmedSummary,
}

/// Best-of-`runs` fits of both models to both models' asymptotic data, for
/// each household distribution.
pub fn cross_fit_table(
    mt: &MtGeneration,
    ids: &IdsParams,
    dists: &[HouseholdSizeDistribution],
    runs: usize,
    fit: &FitConfig,
) -> Result<Vec<CrossFitCell>> {
    if dists.is_empty() {
        return Err(Error::invalid("experiment.dists", "at least one household distribution is required"));
    }
    let mut cells = Vec::new();
    for (d, dist) in dists.iter().enumerate() {
        let data = [
            (Model::Mt, generate_asymptotic(&ModelParams::Mt(*mt), dist, fit, Default::default())?),
            (Model::Ids, generate_asymptotic(&ModelParams::Ids(*ids), dist, fit, Default::default())?),
        ];
        for fitted in [Model::Mt, Model::Ids] {
            for (data_model, g) in &data {
                let label = format!("cross/{d}/{}/{}", fitted.name(), data_model.name());
                let mr = multi_run(fitted, &g.target, &cell_config(fit, &label, 0), runs)?;
                let best = mr.best().clone();
                let p = best.theta.predict(dist, &fit.ids_solve)?;
                cells.push(CrossFitCell {
                    dist_index: d,
                    n_max: dist.n_max(),
                    fitted,
                    data: *data_model,
                    best_f: best.f,
                    per_size: kl_per_size_breakdown(&g.target, &p),
                    best,
                    summary: mr.summary,
                });
            }
        }
    }
    Ok(cells)
}

pub fn write_cross_fit_csv<W: Write>(cells: &[CrossFitCell], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = cells.iter().map(|c| c.per_size.len()).max().unwrap_or(0);
    let mut header = vec!["dist_index".to_string(), "n_max".into(), "fitted_model".into(), "data_model".into(), "best_f".into()];
    header.extend((1..=width).map(|n| format!("kl_size_{n}")));
    w.write_record(&header)?;
    for c in cells {
        let mut row = vec![c.dist_index.to_string(), c.n_max.to_string(), c.fitted.name().into(), c.data.name().into(), format_sig15(c.best_f)];
        row.extend((0..width).map(|i| c.per_size.get(i).map_or(String::new(), |v| format_sig15(*v))));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    pub dataset: usize,
    pub params: ModelParams,
    /// Subcritical draws rejected before this one was accepted.
    pub rejected_draws: usize,
    pub fitted: Model,
    pub best_f: f64,
    pub degeneracy: DegeneracyReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub generator: Model,
    pub records: Vec<SweepRecord>,
    /// Datasets whose generation or fitting failed numerically.
    pub skipped: Vec<(usize, String)>,
}

/// Fits the other model to the asymptotic data of the given generating
/// parameters.
pub fn evaluate_dataset(
    params: &ModelParams,
    dist: &HouseholdSizeDistribution,
    runs_per_fit: usize,
    fit: &FitConfig,
    thresholds: DegeneracyThresholds,
) -> Result<(f64, DegeneracyReport)> {
    let g = generate_asymptotic(params, dist, fit, thresholds)?;
    let mr = multi_run(params.model().other(), &g.target, fit, runs_per_fit)?;
    Ok((mr.best().f, g.degeneracy))
}

/// Draws supercritical parameter sets for `generator` and records how well
/// the other model fits each one's asymptotic data.
pub fn random_parameter_sweep(
    generator: Model,
    n_datasets: usize,
    dist: &HouseholdSizeDistribution,
    runs_per_fit: usize,
    fit: &FitConfig,
    thresholds: DegeneracyThresholds,
) -> Result<SweepReport> {
    if n_datasets == 0 {
        return Err(Error::invalid("experiment.datasets", "at least one dataset is required"));
    }
    let outcomes: Vec<std::result::Result<SweepRecord, (usize, String)>> = (0..n_datasets)
        .into_par_iter()
        .map(|i| {
            let mut rng = seed::rng(seed::derive_named(fit.seed, "sweep-draw", i as u64));
            let mut rejected = 0;
            let (params, data) = loop {
                if rejected >= MAX_DRAWS {
                    return Err((i, format!("no supercritical draw in {MAX_DRAWS} attempts")));
                }
                let params = draw_parameters(generator, &mut rng);
                match generate_asymptotic(&params, dist, fit, thresholds) {
                    Ok(g) if !g.subcritical => break (params, g),
                    Ok(_) => rejected += 1,
                    Err(e) => return Err((i, format!("generation failed: {e}"))),
                }
            };
            let cfg = cell_config(fit, "sweep-fit", i as u64);
            let mr = multi_run(generator.other(), &data.target, &cfg, runs_per_fit).map_err(|e| (i, e.to_string()))?;
            Ok(SweepRecord {
                dataset: i,
                params,
                rejected_draws: rejected,
                fitted: generator.other(),
                best_f: mr.best().f,
                degeneracy: data.degeneracy,
            })
        })
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => records.push(r),
            Err(s) => skipped.push(s),
        }
    }
    Ok(SweepReport { generator, records, skipped })
}

fn param_columns(params: &ModelParams) -> Vec<f64> {
    match params {
        ModelParams::Mt(g) => {
            let mut v = vec![g.global.mm, g.global.ms, g.global.sm, g.global.ss];
            v.extend([g.local.mm, g.local.ms, g.local.sm, g.local.ss, g.beta_m]);
            v
        }
        ModelParams::Ids(p) => p.to_vec(),
    }
}

fn param_names(model: Model) -> Vec<&'static str> {
    match model {
        Model::Mt => vec![
            "lambda_G_MM", "lambda_G_MS", "lambda_G_SM", "lambda_G_SS", "lambda_L_MM", "lambda_L_MS", "lambda_L_SM",
            "lambda_L_SS", "beta_M",
        ],
        Model::Ids => IdsParams::NAMES.to_vec(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), format_sig15)
}

pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["dataset".to_string(), "rejected_draws".into()];
    header.extend(param_names(report.generator).into_iter().map(String::from));
    header.extend(
        ["fitted_model", "best_f", "criticality", "local_rate", "local_severity", "one_type", "escape", "flags"]
            .map(String::from),
    );
    w.write_record(&header)?;
    for r in &report.records {
        let d = &r.degeneracy;
        let mut row = vec![r.dataset.to_string(), r.rejected_draws.to_string()];
        row.extend(param_columns(&r.params).into_iter().map(format_sig15));
        row.extend([
            r.fitted.name().to_string(),
            format_sig15(r.best_f),
            format_sig15(d.criticality),
            opt(d.local_rate),
            opt(d.local_severity),
            opt(d.one_type),
            opt(d.escape),
            d.flags().join(";"),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Counts per decade-aligned bin of `log10(value)`; non-positive values are
/// counted in the first bin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogHistogram {
    pub log10_edges: Vec<f64>,
    pub counts: Vec<usize>,
}

pub fn log_histogram(values: &[f64], bins_per_decade: usize) -> LogHistogram {
    let per = bins_per_decade.max(1) as f64;
    let logs: Vec<f64> = values.iter().filter(|v| v.is_finite()).map(|&v| v.max(f64::MIN_POSITIVE).log10()).collect();
    if logs.is_empty() {
        return LogHistogram { log10_edges: vec![0.0, 1.0], counts: vec![0] };
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).floor();
    let hi = (logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).floor() + 1.0).max(lo + 1.0);
    let bins = ((hi - lo) * per).round() as usize;
    let log10_edges = (0..=bins).map(|b| lo + b as f64 / per).collect();
    let mut counts = vec![0; bins];
    for l in logs {
        counts[(((l - lo) * per) as usize).min(bins - 1)] += 1;
    }
    LogHistogram { log10_edges, counts }
}

pub fn write_log_histogram_csv<W: Write>(h: &LogHistogram, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["log10_lower", "log10_upper", "count"])?;
    for (i, c) in h.counts.iter().enumerate() {
        w.write_record([format_sig15(h.log10_edges[i]), format_sig15(h.log10_edges[i + 1]), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteRecord {
    pub dataset: usize,
    pub sim_seed: u64,
    pub f_mt: f64,
    pub f_ids: f64,
    pub correct_wins: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDataReport {
    pub generator: Model,
    pub households: usize,
    pub records: Vec<FiniteRecord>,
    pub wins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDataSpec {
    pub generator: ModelParams,
    pub datasets: usize,
    pub households: usize,
    pub dist: HouseholdSizeDistribution,
    pub runs_per_fit: usize,
    pub cutoff: f64,
    pub initial: InitialInfectives,
}

impl FiniteDataSpec {
    pub fn new(generator: ModelParams, dist: HouseholdSizeDistribution) -> Self {
        Self {
            generator,
            datasets: 25,
            households: 10_000,
            dist,
            runs_per_fit: 5,
            cutoff: crate::sim::DEFAULT_CUTOFF,
            initial: InitialInfectives::default(),
        }
    }
}

/// Empirical final-size data of one major outbreak.
pub fn simulate_target(spec: &FiniteDataSpec, sim_seed: u64) -> Result<(TargetData, u64)> {
    let population = PopulationConfig::new(spec.dist.clone(), spec.households)?;
    let cfg = SimConfig::new(spec.generator, population, sim_seed).with_initial(spec.initial).with_cutoff(spec.cutoff);
    let out = simulate_major(&cfg, MAX_MAJOR_ATTEMPTS)?;
    let q: FinalSizeDistribution = out.empirical();
    Ok((TargetData::new(q, spec.dist.clone(), Some(spec.households))?, out.seed))
}

/// Fits both models to `datasets` simulated outbreaks of the generating model.
pub fn finite_data_experiment(spec: &FiniteDataSpec, fit: &FitConfig) -> Result<FiniteDataReport> {
    if spec.datasets == 0 {
        return Err(Error::invalid("experiment.datasets", "at least one dataset is required"));
    }
    if spec.households == 0 {
        return Err(Error::invalid("experiment.households", "at least one household is required"));
    }
    let generator = spec.generator.model();
    let records = (0..spec.datasets)
        .into_par_iter()
        .map(|i| {
            let (target, sim_seed) = simulate_target(spec, seed::derive_named(fit.seed, "finite-sim", i as u64))?;
            let f_mt = multi_run(Model::Mt, &target, &cell_config(fit, "finite-fit/mt", i as u64), spec.runs_per_fit)?.best().f;
            let f_ids =
                multi_run(Model::Ids, &target, &cell_config(fit, "finite-fit/ids", i as u64), spec.runs_per_fit)?.best().f;
            let correct_wins = match generator {
                Model::Mt => f_mt < f_ids,
                Model::Ids => f_ids < f_mt,
            };
            Ok(FiniteRecord { dataset: i, sim_seed, f_mt, f_ids, correct_wins })
        })
        .collect::<Result<Vec<_>>>()?;
    let wins = records.iter().filter(|r| r.correct_wins).count();
    Ok(FiniteDataReport { generator, households: spec.households, records, wins })
}

pub fn write_finite_csv<W: Write>(report: &FiniteDataReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["dataset", "generator", "households", "sim_seed", "f_mt", "f_ids", "correct_wins"])?;
    for r in &report.records {
        w.write_record([
            r.dataset.to_string(),
            report.generator.name().into(),
            report.households.to_string(),
            r.sim_seed.to_string(),
            format_sig15(r.f_mt),
            format_sig15(r.f_ids),
            r.correct_wins.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes any of the CSV outputs above to a file.
pub fn save_csv(path: &Path, write: impl FnOnce(std::io::BufWriter<std::fs::File>) -> csv::Result<()>) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write(std::io::BufWriter::new(file)).map_err(|source| Error::Csv { path: path.into(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forced_degenerate_values_have_zero_proximity() {
        let mut p = IdsParams::reference();
        p.p_l_sm = p.p_l_mm;
        p.lambda_l_m = 0.0;
        let r = DegeneracyReport::for_ids(&p, 0.5, Default::default());
        assert_eq!(r.local_severity, Some(0.0));
        assert_eq!(r.local_rate, Some(0.0));
        assert_eq!(r.flags(), vec!["local_rate", "local_severity"]);
        let mut g = MtGeneration::reference();
        g.beta_m = 0.0;
        let r = DegeneracyReport::for_mt(&g, (0.7, 0.5), 0.5, Default::default());
        assert_eq!(r.one_type, Some(0.0));
        assert_eq!(r.flags(), vec!["one_type"]);
    }

    #[test]
    fn draws_are_reproducible() {
        for model in [Model::Mt, Model::Ids] {
            let a = draw_parameters(model, &mut seed::rng(9));
            let b = draw_parameters(model, &mut seed::rng(9));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn log_histogram_counts_all() {
        let h = log_histogram(&[1e-9, 2e-9, 5e-4, 0.02], 1);
        assert_eq!(h.log10_edges.first(), Some(&-9.0));
        assert_eq!(h.log10_edges.last(), Some(&-1.0));
        assert_eq!(h.counts.iter().sum::<usize>(), 4);
        assert_eq!(h.counts[0], 2);
    }

    #[test]
    fn zero_datasets_rejected() {
        let spec = FiniteDataSpec { datasets: 0, ..FiniteDataSpec::new(ModelParams::Ids(IdsParams::reference()), HouseholdSizeDistribution::rho3()) };
        assert!(finite_data_experiment(&spec, &FitConfig::default()).is_err());
        assert!(random_parameter_sweep(Model::Mt, 0, &HouseholdSizeDistribution::rho3(), 1, &FitConfig::default(), Default::default()).is_err());
    }
}
