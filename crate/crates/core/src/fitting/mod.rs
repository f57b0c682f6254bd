//! Minimum-divergence fitting of either model to household final-size data.

mod kl;
pub mod nelder_mead;

pub use kl::{
    kl_divergence, kl_exact, kl_per_size_breakdown, kl_taylor, TargetData, ASYMPTOTIC_NORMALIZATION_TOL,
    EMPIRICAL_NORMALIZATION_TOL, TAYLOR_SWITCHOVER,
};

use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::Serialize;

use crate::final_size::{cell_count, format_sig15, FinalSizeDistribution};
use crate::ids::{ids_final_size, IdsParams, IdsSolveOptions};
use crate::math::CompensatedSum;
use crate::mt::{mt_final_size_distribution, LocalRates, MtParams};
use crate::population::HouseholdSizeDistribution;
use crate::{seed, Error, Model, Result};
use nelder_mead::{minimize, NelderMeadOptions};

pub const PROB_LOWER: f64 = 1e-6;
pub const PROB_UPPER: f64 = 1.0 - 1e-6;
pub const RATE_UPPER: f64 = 50.0;
pub const GAMMA_LOWER: f64 = 1e-3;
pub const DEFAULT_PENALTY: f64 = 1e3;

/// Fitted parameter vector of either model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum FittedParams {
    Mt(MtParams),
    Ids(IdsParams),
}

impl FittedParams {
    pub fn model(&self) -> Model {
        match self {
            FittedParams::Mt(_) => Model::Mt,
            FittedParams::Ids(_) => Model::Ids,
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            FittedParams::Mt(p) => p.to_vec(),
            FittedParams::Ids(p) => p.to_vec(),
        }
    }

    pub fn from_slice(model: Model, x: &[f64]) -> Self {
        match model {
            Model::Mt => FittedParams::Mt(MtParams::from_slice(x)),
            Model::Ids => FittedParams::Ids(IdsParams::from_slice(x)),
        }
    }

    /// Final-size distribution implied by the parameters.
    pub fn predict(&self, dist: &HouseholdSizeDistribution, ids: &IdsSolveOptions) -> Result<FinalSizeDistribution> {
        match self {
            FittedParams::Mt(p) => mt_final_size_distribution(p, dist.n_max()),
            FittedParams::Ids(p) => ids_final_size(p, dist, ids).map(|(d, _)| d),
        }
    }
}

pub fn parameter_names(model: Model) -> &'static [&'static str] {
    match model {
        Model::Mt => &MtParams::NAMES,
        Model::Ids => &IdsParams::NAMES,
    }
}

/// Box bounds of the fitted parameters.
pub fn bounds(model: Model) -> (Vec<f64>, Vec<f64>) {
    let p = (PROB_LOWER, PROB_UPPER);
    let r = (0.0, RATE_UPPER);
    let kinds: Vec<(f64, f64)> = match model {
        Model::Mt => vec![p, p, r, r, r, r, p],
        Model::Ids => vec![r, r, r, r, p, p, p, p, (GAMMA_LOWER, RATE_UPPER)],
    };
    kinds.into_iter().unzip()
}

fn is_probability(model: Model, i: usize) -> bool {
    match model {
        Model::Mt => matches!(i, 0 | 1 | 6),
        Model::Ids => (4..8).contains(&i),
    }
}

/// Rates from Exp(1), probabilities from U(0,1), clipped to the box.
pub fn draw_start<R: rand::Rng + ?Sized>(model: Model, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = bounds(model);
    (0..lo.len())
        .map(|i| {
            let v: f64 = if is_probability(model, i) { rng.gen() } else { Exp1.sample(rng) };
            v.clamp(lo[i], hi[i])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// Candidate starts drawn for the IDS model; the best is kept.
    pub ids_candidates: usize,
    pub penalty: f64,
    pub ids_solve: IdsSolveOptions,
}

/// Step budget for one IDS solve inside the objective. Solves near the
/// optimum take about a thousand steps; those that run out are penalized.
pub const FIT_IDS_MAX_STEPS: usize = 20_000;

impl Default for FitConfig {
    fn default() -> Self {
        let mut ids_solve = IdsSolveOptions::default();
        ids_solve.integrator.max_steps = FIT_IDS_MAX_STEPS;
        Self { seed: 0, optimizer: NelderMeadOptions::default(), ids_candidates: 20, penalty: DEFAULT_PENALTY, ids_solve }
    }
}

impl FitConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Divergence of the model at `x` from the data; failures and unsupported
/// cells map to the penalty.
pub fn objective(model: Model, target: &TargetData, x: &[f64], cfg: &FitConfig) -> f64 {
    match FittedParams::from_slice(model, x).predict(&target.dist, &cfg.ids_solve) {
        Ok(p) => {
            let f = kl_divergence(target, &p);
            if f.is_finite() {
                f
            } else {
                cfg.penalty
            }
        }
        Err(_) => cfg.penalty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub theta: FittedParams,
    /// Final divergence, nats.
    pub f: f64,
    pub start: Vec<f64>,
    pub run: usize,
    pub seed: u64,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
    /// IDS only.
    pub identifiability: Option<[f64; 3]>,
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn model(&self) -> Model {
        self.theta.model()
    }
}

/// Local search from a given start.
pub fn fit_from(model: Model, target: &TargetData, x0: &[f64], cfg: &FitConfig, run: usize) -> FitResult {
    let (lo, hi) = bounds(model);
    let start: Vec<f64> = x0.iter().zip(lo.iter().zip(&hi)).map(|(v, (&l, &h))| v.clamp(l, h)).collect();
    let r = minimize(|x: &[f64]| objective(model, target, x, cfg), &start, &lo, &hi, &cfg.optimizer);
    let theta = FittedParams::from_slice(model, &r.x);
    let identifiability = match theta {
        FittedParams::Ids(p) => Some(identifiability_functions(&p, target.attack_fractions())),
        FittedParams::Mt(_) => None,
    };
    FitResult {
        theta,
        f: r.f,
        start,
        run,
        seed: cfg.seed,
        evaluations: r.evaluations,
        iterations: r.iterations,
        converged: r.converged,
        identifiability,
        trace: r.trace,
    }
}

/// One fitting run: draw the start (best of `ids_candidates` for IDS), then search.
pub fn fit_model(model: Model, target: &TargetData, cfg: &FitConfig, run: usize) -> FitResult {
    let mut rng = seed::rng(seed::derive_named(cfg.seed, "fit", run as u64));
    let start = match model {
        Model::Mt => draw_start(model, &mut rng),
        Model::Ids => {
            let mut best = (f64::INFINITY, Vec::new());
            for _ in 0..cfg.ids_candidates.max(1) {
                let x = draw_start(model, &mut rng);
                let f = objective(model, target, &x, cfg);
                if f < best.0 || best.1.is_empty() {
                    best = (f, x);
                }
            }
            best.1
        }
    };
    fit_from(model, target, &start, cfg, run)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrimmedSummary {
    pub kept: usize,
    pub param_mean: Vec<f64>,
    pub param_sd: Vec<f64>,
    pub f_mean: f64,
    pub f_sd: f64,
    pub identifiability_mean: Option<[f64; 3]>,
    pub identifiability_sd: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiRun {
    /// Ordered by run index.
    pub results: Vec<FitResult>,
    pub best: usize,
    pub summary: TrimmedSummary,
}

impl MultiRun {
    pub fn best(&self) -> &FitResult {
        &self.results[self.best]
    }
}

pub const TRIM_FRACTION: f64 = 0.9;

fn mean_sd(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = if n > 1.0 { values.map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Mean and standard deviation over the best `fraction` of runs by `f`.
pub fn trimmed_summary(results: &[FitResult], fraction: f64) -> TrimmedSummary {
    assert!(!results.is_empty());
    let mut order: Vec<&FitResult> = results.iter().collect();
    order.sort_by(|a, b| a.f.total_cmp(&b.f).then(a.run.cmp(&b.run)));
    let kept = ((results.len() as f64 * fraction).ceil() as usize).clamp(1, results.len());
    let top = &order[..kept];
    let dim = top[0].theta.to_vec().len();
    let vecs: Vec<Vec<f64>> = top.iter().map(|r| r.theta.to_vec()).collect();
    let (param_mean, param_sd) = (0..dim).map(|i| mean_sd(vecs.iter().map(move |v| v[i]))).unzip();
    let (f_mean, f_sd) = mean_sd(top.iter().map(|r| r.f));
    let ident: Option<Vec<[f64; 3]>> = top.iter().map(|r| r.identifiability).collect();
    let (identifiability_mean, identifiability_sd) = match ident {
        Some(v) => {
            let stats: Vec<(f64, f64)> = (0..3).map(|i| mean_sd(v.iter().map(move |t| t[i]))).collect();
            (Some([stats[0].0, stats[1].0, stats[2].0]), Some([stats[0].1, stats[1].1, stats[2].1]))
        }
        None => (None, None),
    };
    TrimmedSummary { kept, param_mean, param_sd, f_mean, f_sd, identifiability_mean, identifiability_sd }
}

/// Independent runs `0..n_runs` with seeds derived from `cfg.seed`.
pub fn multi_run(model: Model, target: &TargetData, cfg: &FitConfig, n_runs: usize) -> Result<MultiRun> {
    if n_runs == 0 {
        return Err(Error::invalid("fit.runs", "at least one run is required"));
    }
    let results: Vec<FitResult> = (0..n_runs).into_par_iter().map(|r| fit_model(model, target, cfg, r)).collect();
    let best = results
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let summary = trimmed_summary(&results, TRIM_FRACTION);
    Ok(MultiRun { results, best, summary })
}

/// The three combinations of IDS parameters that the data pin down, given the
/// overall attack fractions `z = (z_M, z_S)`.
pub fn identifiability_functions(theta: &IdsParams, z: (f64, f64)) -> [f64; 3] {
    let (z_m, z_s) = z;
    let gm = IdsParams::GAMMA_M;
    let gs = theta.gamma_s;
    [
        z_m * theta.lambda_g_m / gm + z_s * theta.lambda_g_s / gs,
        theta.lambda_l_s / gs,
        z_m * theta.lambda_g_m * theta.p_g_mm / gm + z_s * theta.lambda_g_s * theta.p_g_sm / gs,
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoDiagnostics {
    pub log_pseudolikelihood: f64,
    /// `-2 log Lambda_m`, defined as `2 m` times the divergence.
    pub lambda_statistic: f64,
    /// `2 (l(q) - l(p))`, the same quantity from the log-likelihoods.
    pub lambda_from_likelihoods: f64,
    pub chi_square: f64,
    pub dof: i64,
}

/// Number of free cells over the supported sizes.
pub fn free_cells(dist: &HouseholdSizeDistribution) -> usize {
    dist.support().map(|(n, _)| cell_count(n) - 1).sum()
}

/// Pseudolikelihood diagnostics for a fitted distribution `p`.
pub fn pseudo_diagnostics(target: &TargetData, p: &FinalSizeDistribution, n_params: usize) -> Result<PseudoDiagnostics> {
    let m = target.m.ok_or_else(|| Error::invalid("target.m", "household count required for diagnostics"))? as f64;
    let mut l_p = CompensatedSum::new();
    let mut l_q = CompensatedSum::new();
    let mut chi = CompensatedSum::new();
    let mut unsupported = false;
    for (n, rho) in target.dist.support() {
        let m_n = rho * m;
        for (rm, rs, qv) in target.q.cells(n) {
            let pv = p.get(n, rm, rs);
            if qv > 0.0 {
                if pv <= 0.0 {
                    unsupported = true;
                    continue;
                }
                l_p.add(m * rho * qv * pv.ln());
                l_q.add(m * rho * qv * qv.ln());
            }
            if pv > 0.0 {
                let d = m_n * qv - m_n * pv;
                chi.add(d * d / (m_n * pv));
            }
        }
    }
    let (log_pseudolikelihood, lambda_from_likelihoods, chi_square) = if unsupported {
        (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY)
    } else {
        (l_p.value(), 2.0 * (l_q.value() - l_p.value()), chi.value())
    };
    Ok(PseudoDiagnostics {
        log_pseudolikelihood,
        lambda_statistic: 2.0 * m * kl_divergence(target, p),
        lambda_from_likelihoods,
        chi_square,
        dof: free_cells(&target.dist) as i64 - n_params as i64,
    })
}

/// One row per run: index, seed, parameters, `f`, convergence and, for IDS,
/// the identifiable combinations.
pub fn write_fit_results<W: Write>(results: &[FitResult], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = results.first() else {
        w.flush()?;
        return Ok(());
    };
    let model = first.model();
    let mut header = vec!["run".to_string(), "seed".into()];
    header.extend(parameter_names(model).iter().map(|s| s.to_string()));
    header.extend(["f".into(), "converged".into(), "evaluations".into(), "iterations".into()]);
    if model == Model::Ids {
        header.extend(["ident_global".into(), "ident_local_severe".into(), "ident_global_mild".into()]);
    }
    w.write_record(&header)?;
    for r in results {
        let mut row = vec![r.run.to_string(), r.seed.to_string()];
        row.extend(r.theta.to_vec().into_iter().map(format_sig15));
        row.extend([format_sig15(r.f), r.converged.to_string(), r.evaluations.to_string(), r.iterations.to_string()]);
        if let Some(id) = r.identifiability {
            row.extend(id.into_iter().map(format_sig15));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_fit_results(results: &[FitResult], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_fit_results(results, std::io::BufWriter::new(file)).map_err(|source| Error::Csv { path: path.into(), source })
}

/// True MT parameters expressed in the fitted parameterization.
pub fn mt_fitted_from(pi: (f64, f64), local: LocalRates, beta_m: f64) -> FittedParams {
    FittedParams::Mt(MtParams { pi_m: pi.0, pi_s: pi.1, local, beta_m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mt::{mt_generate, MtGeneration};

    fn mt_target() -> (TargetData, Vec<f64>) {
        let dist = HouseholdSizeDistribution::rho3();
        let gen = MtGeneration::reference();
        let (q, sol) = mt_generate(&gen, &dist).unwrap();
        let truth = mt_fitted_from((sol.pi_m, sol.pi_s), gen.local, gen.beta_m).to_vec();
        (TargetData::asymptotic(q, dist).unwrap(), truth)
    }

    #[test]
    fn objective_zero_at_truth() {
        let (t, truth) = mt_target();
        assert!(objective(Model::Mt, &t, &truth, &FitConfig::default()) < 1e-20);
    }

    #[test]
    fn refit_from_truth_stays_put() {
        let (t, truth) = mt_target();
        let r = fit_from(Model::Mt, &t, &truth, &FitConfig::default(), 0);
        assert!(r.f <= 1e-20);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn slow_ids_solves_are_penalized() {
        let (target, _) = mt_target();
        let x = [0.996, 0.75, 2.255, 1.416, 0.438, 0.298, 0.977, 0.717, 0.001];
        let cfg = FitConfig::default();
        assert_eq!(cfg.ids_solve.integrator.max_steps, FIT_IDS_MAX_STEPS);
        assert_eq!(objective(Model::Ids, &target, &x, &cfg), cfg.penalty);
    }

    #[test]
    fn starts_inside_box() {
        let mut rng = seed::rng(1);
        for model in [Model::Mt, Model::Ids] {
            let (lo, hi) = bounds(model);
            for _ in 0..100 {
                let x = draw_start(model, &mut rng);
                assert!(x.iter().zip(lo.iter().zip(&hi)).all(|(v, (l, h))| v >= l && v <= h));
            }
        }
    }

    #[test]
    fn identifiability_without_global_spread() {
        let mut p = IdsParams::reference();
        p.lambda_g_m = 0.0;
        p.lambda_g_s = 0.0;
        assert_eq!(identifiability_functions(&p, (0.3, 0.2)), [0.0, 0.5, 0.0]);
    }

    #[test]
    fn diagnostics_vanish_at_data() {
        let (t, _) = mt_target();
        let t = TargetData { m: Some(1000), ..t };
        let d = pseudo_diagnostics(&t, &t.q, 7).unwrap();
        assert_eq!(d.lambda_statistic, 0.0);
        assert!(d.chi_square.abs() < 1e-20);
        assert_eq!(d.dof, (2 + 5 + 9) - 7);
    }

    #[test]
    fn single_run_is_best() {
        let (t, _) = mt_target();
        let cfg = FitConfig { optimizer: NelderMeadOptions { max_evals: 200, ..Default::default() }, ..Default::default() };
        let mr = multi_run(Model::Mt, &t, &cfg, 1).unwrap();
        assert_eq!(mr.best, 0);
        assert_eq!(mr.summary.kept, 1);
        assert!(multi_run(Model::Mt, &t, &cfg, 0).is_err());
    }

    #[test]
    fn csv_has_one_row_per_run() {
        let (t, truth) = mt_target();
        let r = fit_from(Model::Mt, &t, &truth, &FitConfig::default(), 3);
        let mut buf = Vec::new();
        write_fit_results(&[r.clone(), r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("run,seed,pi_M"));
    }
}
