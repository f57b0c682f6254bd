use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};

use hhepi::config::{Config, ExperimentKind, MtSpec};
use hhepi::discrimination::{self, save_csv};
use hhepi::final_size::write_aggregates_csv;
use hhepi::fitting::{self, kl_per_size_breakdown, multi_run, parameter_names, TargetData};
use hhepi::ids::ids_final_size;
use hhepi::mt::{mt_final_size_distribution, mt_generate};
use hhepi::sim::{self, run_batch, summarize, SimConfig};
use hhepi::{FinalSizeDistribution, HouseholdSizeDistribution, Model, ModelParams, PopulationConfig};

use crate::manifest::Recorder;
use crate::Common;

const DEFAULT_SEED: u64 = 1;
const HISTOGRAM_BINS: usize = 30;
const DEFAULT_SWEEP_DATASETS: usize = 100;

fn load(common: &Common) -> Result<(Config, u64)> {
    let config = match &common.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let seed = common.seed.or(config.seed).unwrap_or(DEFAULT_SEED);
    Ok((config, seed))
}

fn save_distribution(rec: &mut Recorder, name: &str, d: &FinalSizeDistribution) -> hhepi::Result<()> {
    d.save(&rec.file(name))
}

fn save_aggregates(rec: &mut Recorder, name: &str, d: &FinalSizeDistribution) -> hhepi::Result<()> {
    let rows: Vec<_> = (1..=d.n_max()).map(|n| d.aggregates(n)).collect();
    save_csv(&rec.file(name), |w| write_aggregates_csv(&rows, w))
}

fn model_json(params: &ModelParams) -> Value {
    match params {
        ModelParams::Mt(g) => json!({ "mt": g }),
        ModelParams::Ids(p) => json!({ "ids": p }),
    }
}

pub fn final_size(out: &Path, model: Model, common: &Common) -> Result<()> {
    let (config, seed) = load(common)?;
    let dist = config.household_dist()?;
    let mut rec = Recorder::new(out, "final-size", seed)?;
    let (d, params, details) = match model {
        Model::Mt => match config.mt_spec()? {
            MtSpec::Generation(gen) => {
                let (d, sol) = mt_generate(&gen, &dist)?;
                (d, json!({ "mt": gen }), json!({ "balance": sol }))
            }
            MtSpec::Escape(p) => (mt_final_size_distribution(&p, dist.n_max())?, json!({ "mt": p }), Value::Null),
        },
        Model::Ids => {
            let p = config.ids_params()?;
            let (d, diag) = ids_final_size(&p, &dist, &Default::default())?;
            (d, json!({ "ids": p }), json!({ "integration": diag }))
        }
    };
    save_distribution(&mut rec, "final_size.csv", &d)?;
    save_aggregates(&mut rec, "aggregates.csv", &d)?;
    let (z_m, z_s) = d.attack_fractions(&dist);
    rec.finish(
        json!({ "model": model, "household": dist.props(), "params": params }),
        json!({ "z_m": z_m, "z_s": z_s, "details": details }),
    )?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn simulate(out: &Path, model: Model, replicates: Option<usize>, cutoff: Option<f64>, common: &Common) -> Result<()> {
    let (config, seed) = load(common)?;
    let dist = config.household_dist()?;
    let population = PopulationConfig::new(dist.clone(), config.households())?;
    let params = config.model_params(model)?;
    let cutoff = match cutoff {
        Some(c) => c,
        None => config.cutoff()?,
    };
    let cfg = SimConfig::new(params, population, seed).with_initial(config.initial()).with_cutoff(cutoff);
    cfg.validate()?;
    let replicates = replicates.unwrap_or_else(|| config.replicates());

    let mut rec = Recorder::new(out, "simulate", seed)?;
    let batch = run_batch(&cfg, replicates)?;
    save_csv(&rec.file("replicates.csv"), |w| sim::write_replicates_csv(&batch.outcomes, w))?;
    let results = match &batch.empirical {
        Some(emp) => {
            save_distribution(&mut rec, "empirical.csv", emp)?;
            let summary = summarize(&batch, model)?;
            save_csv(&rec.file("summary.csv"), |w| write_aggregates_csv(&summary.per_size, w))?;
            let mild: Vec<f64> = batch.majors().map(|o| o.mild_total as f64).collect();
            let severe: Vec<f64> = batch.majors().map(|o| o.severe_total as f64).collect();
            let hm = sim::histogram(&mild, HISTOGRAM_BINS);
            let hs = sim::histogram(&severe, HISTOGRAM_BINS);
            save_csv(&rec.file("histogram_mild.csv"), |w| sim::write_histogram_csv(&hm, w))?;
            save_csv(&rec.file("histogram_severe.csv"), |w| sim::write_histogram_csv(&hs, w))?;
            json!({ "majors": summary.majors, "empty": false, "mild": summary.mild, "severe": summary.severe })
        }
        None => json!({ "majors": 0, "empty": true }),
    };
    rec.finish(
        json!({
            "model": model,
            "household": dist.props(),
            "households": cfg.population.households,
            "params": model_json(&cfg.model),
            "initial": cfg.initial,
            "cutoff": cfg.cutoff,
            "replicates": replicates,
        }),
        results,
    )?;
    println!("{} of {} replicates were major outbreaks", batch.major_count(), replicates);
    Ok(())
}

pub fn fit(out: &Path, model: Model, target_path: &Path, runs: Option<usize>, common: &Common) -> Result<()> {
    let (config, seed) = load(common)?;
    let dist = config.household_dist()?;
    let q = FinalSizeDistribution::load(target_path)?;
    let target = TargetData::new(q, dist.clone(), config.household.households)?;
    let fc = config.fit_config(seed)?;
    let runs = runs.unwrap_or_else(|| config.fit_runs());

    let mut rec = Recorder::new(out, "fit", seed)?;
    let mr = multi_run(model, &target, &fc, runs)?;
    save_csv(&rec.file("fits.csv"), |w| fitting::write_fit_results(&mr.results, w))?;
    let best = mr.best();
    let p = best.theta.predict(&dist, &fc.ids_solve)?;
    save_distribution(&mut rec, "best_final_size.csv", &p)?;
    let diagnostics = match target.m {
        Some(_) => Some(fitting::pseudo_diagnostics(&target, &p, parameter_names(model).len())?),
        None => None,
    };
    rec.finish(
        json!({
            "model": model,
            "target": target_path,
            "household": dist.props(),
            "households": target.m,
            "runs": runs,
            "max_evals": fc.optimizer.max_evals,
            "ftol": fc.optimizer.ftol,
            "ids_candidates": fc.ids_candidates,
            "penalty": fc.penalty,
        }),
        json!({
            "best_run": best.run,
            "best_f": best.f,
            "best_theta": best.theta,
            "kl_per_size": kl_per_size_breakdown(&target, &p),
            "trimmed": mr.summary,
            "diagnostics": diagnostics,
        }),
    )?;
    println!("best f = {:e} (run {})", best.f, best.run);
    Ok(())
}

pub fn experiment(out: &Path, runs: Option<usize>, common: &Common) -> Result<()> {
    let path = common.config.as_ref().context("experiment requires --config")?;
    let (config, seed) = load(common)?;
    let exp = config.experiment()?.clone();
    let fc = config.fit_config(seed)?;
    let mut rec = Recorder::new(out, "experiment", seed)?;
    let (resolved, results) = match exp.kind {
        ExperimentKind::CrossFit => {
            let dists = config.experiment_dists()?;
            let runs = runs.unwrap_or_else(|| config.fit_runs());
            let mt = config.mt_generation()?;
            let ids = config.ids_params()?;
            let cells = discrimination::cross_fit_table(&mt, &ids, &dists, runs, &fc)?;
            save_csv(&rec.file("cross_fit.csv"), |w| discrimination::write_cross_fit_csv(&cells, w))?;
            let props: Vec<&[f64]> = dists.iter().map(HouseholdSizeDistribution::props).collect();
            (json!({ "dists": props, "runs": runs, "mt": mt, "ids": ids }), json!({ "cells": cells }))
        }
        ExperimentKind::Sweep => {
            let generator = config.generator()?;
            let dist = config.household_dist()?;
            let datasets = config.datasets(DEFAULT_SWEEP_DATASETS)?;
            let runs_per_fit = runs.unwrap_or(config.runs_per_fit()?);
            let thresholds = config.thresholds();
            let report = discrimination::random_parameter_sweep(generator, datasets, &dist, runs_per_fit, &fc, thresholds)?;
            save_csv(&rec.file("sweep.csv"), |w| discrimination::write_sweep_csv(&report, w))?;
            let fs: Vec<f64> = report.records.iter().map(|r| r.best_f).collect();
            let h = discrimination::log_histogram(&fs, 2);
            save_csv(&rec.file("sweep_histogram.csv"), |w| discrimination::write_log_histogram_csv(&h, w))?;
            for (i, reason) in &report.skipped {
                eprintln!("dataset {i} skipped: {reason}");
            }
            (
                json!({ "generator": generator, "household": dist.props(), "datasets": datasets, "runs_per_fit": runs_per_fit, "thresholds": thresholds }),
                json!({ "accepted": report.records.len(), "skipped": report.skipped }),
            )
        }
        ExperimentKind::FiniteData => {
            let mut spec = config.finite_data_spec()?;
            if let Some(r) = runs {
                spec.runs_per_fit = r;
            }
            let report = discrimination::finite_data_experiment(&spec, &fc)?;
            save_csv(&rec.file("finite_data.csv"), |w| discrimination::write_finite_csv(&report, w))?;
            (
                json!({
                    "generator": model_json(&spec.generator),
                    "household": spec.dist.props(),
                    "households": spec.households,
                    "datasets": spec.datasets,
                    "runs_per_fit": spec.runs_per_fit,
                    "cutoff": spec.cutoff,
                    "initial": spec.initial,
                }),
                json!({ "wins": report.wins, "datasets": report.records.len() }),
            )
        }
    };
    rec.finish(json!({ "config_file": path, "kind": exp.kind, "resolved": resolved }), results)?;
    println!("wrote {}", out.display());
    Ok(())
}
