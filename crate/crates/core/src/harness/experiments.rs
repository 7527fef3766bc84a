use log::info;
use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use super::{Cell, CellFailure, Comparison, Context, PriorSource, RunReport, SummaryRow};
use crate::bayes::{
    evaluate, prior_predictive_loglik, sample_posterior, LinearModelSpec, Metric, Observations,
};
use crate::datasets::{make_folds, subsample_train, Dataset};
use crate::elicitation::{build_mixture, ElicitedPriorTable, MixturePrior};
use crate::error::{Error, Result};
use crate::icl::{extract_distribution, mc_posterior_on_extracted_prior, ExtractedDistribution, Kde, ProbeDesign};
use crate::memorisation::{header_test, row_test, MemorisationResult};
use crate::seed::stage;
use crate::selection::{compare_elicited_vs_extracted, energy, icl_prior_predictive_loglik, BayesFactorReport};

fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable report");
    s.push('\n');
    s
}

fn finish(
    ctx: &Context,
    experiment: &str,
    cells: Vec<Cell>,
    summary: Vec<SummaryRow>,
    failures: Vec<CellFailure>,
) -> Result<RunReport> {
    let report = RunReport {
        experiment: experiment.into(),
        name: ctx.config.name.clone(),
        dataset: ctx.config.dataset.id.clone(),
        config_hash: ctx.config.hash(),
        cells,
        summary,
        failures,
    };
    ctx.write(&format!("{experiment}/report.json"), &json(&report))?;
    ctx.write(&format!("{experiment}/cells.csv"), &report.cells_csv())?;
    if !report.summary.is_empty() {
        ctx.write(&format!("{experiment}/summary.csv"), &report.summary_csv())?;
    }
    // Call counts differ between a recorded run and its replay, so they stay
    // out of the report proper.
    ctx.write(&format!("{experiment}/gateway_stats.json"), &json(&ctx.llm.stats()))?;
    for f in &report.failures {
        log::warn!("{experiment}: {} failed: {}", f.cell, f.reason);
    }
    Ok(report)
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Mse => "mse",
        Metric::Accuracy => "accuracy",
    }
}

/// `n` rows drawn without replacement, in ascending index order.
fn subset(ds: &Dataset, n: usize, seed: u64) -> Result<Dataset> {
    if n > ds.n() {
        return Err(Error::Argument(format!("cannot draw {n} rows from a dataset of {}", ds.n())));
    }
    let mut idx = index::sample(&mut crate::seed::rng(seed), ds.n(), n).into_vec();
    idx.sort_unstable();
    Ok(ds.select(&idx))
}

fn round4(v: f64) -> f64 {
    (v * 1e4).round() / 1e4
}

/// Demonstration rows: standardised with whole-dataset statistics when the
/// context normalises, then rounded to the 4 decimals a prompt shows, so the
/// model and any Monte Carlo reference condition on the same numbers.
fn demonstrations(ctx: &Context, n: usize, seed: u64) -> Result<Observations> {
    let raw = subset(&ctx.dataset, n, seed)?;
    let ds = ctx.prepare(&ctx.dataset, &[&raw])?.remove(0);
    let rows: Vec<Vec<f64>> = ds.rows().map(|r| r.iter().map(|&v| round4(v)).collect()).collect();
    Observations::new(&rows, ds.targets().iter().map(|&y| round4(y)).collect(), ds.d())
}

/// Elicit (or load) the prior table and store it as `elicited_prior.json`.
pub fn run_elicitation_only(ctx: &Context) -> Result<ElicitedPriorTable> {
    let table = ctx.elicited_table()?;
    let path = ctx.config.output_dir.join("elicited_prior.json");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    table.save(&path)?;
    info!("elicited {} components for {}", table.k(), table.dataset_id);
    Ok(table)
}

fn posterior_sources(ctx: &Context, table: &ElicitedPriorTable) -> Result<Vec<(String, MixturePrior)>> {
    let names = ctx.dataset.feature_names().to_vec();
    let mut out = Vec::new();
    for source in &ctx.config.posterior.sources {
        out.push(match source {
            PriorSource::Elicited => ("elicited".to_string(), build_mixture(table)?),
            PriorSource::Uninformative => ("uninformative".to_string(), MixturePrior::standard_normal(names.len())),
            PriorSource::MixtureUninformative => {
                let t = ElicitedPriorTable::mixture_of_uninformative(
                    &ctx.config.dataset.id,
                    names.clone(),
                    table.k(),
                    ctx.seed(&[stage::PRIOR_SAMPLES]),
                )?;
                ("mixture_uninformative".to_string(), build_mixture(&t)?)
            }
        });
    }
    for &k in &ctx.config.elicitation.k_sweep {
        out.push((format!("elicited_k{k}"), build_mixture(&table.truncated(k)?)?));
    }
    Ok(out)
}

/// Posterior performance per (fold, training size, prior source). Every
/// source sees the same training subsample; standardisation is fitted on the
/// fold's full training split.
pub fn run_elicitation_experiment(ctx: &Context) -> Result<RunReport> {
    let table = run_elicitation_only(ctx)?;
    let sources = posterior_sources(ctx, &table)?;
    let cfg = &ctx.config.posterior;
    let folds = make_folds(
        &ctx.dataset,
        cfg.n_folds,
        ctx.config.dataset.test_fraction,
        ctx.split_strategy(),
        ctx.config.seed,
    )?;
    let kind = ctx.dataset.task_kind();
    let names = ctx.dataset.feature_names();

    let n_sources = sources.len();
    let tasks: Vec<(usize, usize, usize)> = (0..folds.len())
        .flat_map(|f| cfg.training_sizes.iter().flat_map(move |&m| (0..n_sources).map(move |si| (f, m, si))))
        .collect();
    let outcomes: Vec<std::result::Result<Cell, CellFailure>> = tasks
        .par_iter()
        .map(|&(f, m, si)| {
            let (label, prior) = &sources[si];
            let run = || -> Result<Cell> {
                let fold = &folds[f];
                let sub = subsample_train(fold, m, ctx.seed(&[stage::SUBSAMPLE, f as u64, m as u64]))?;
                let full_train = ctx.dataset.select(&fold.train_indices);
                let prepared =
                    ctx.prepare(&full_train, &[&ctx.dataset.select(&sub.train_indices), &ctx.dataset.select(&sub.test_indices)])?;
                let spec = LinearModelSpec::new(kind, prior.clone())?.with_noise(cfg.noise)?;
                let samples = sample_posterior(
                    &spec,
                    &Observations::from_dataset(&prepared[0]),
                    &cfg.sampler,
                    ctx.seed(&[stage::POSTERIOR, f as u64, m as u64, si as u64]),
                    names,
                )?;
                let summary = evaluate(&samples, &Observations::from_dataset(&prepared[1]))?;
                Ok(Cell::new(label.clone(), metric_name(summary.metric), summary.mean).fold(f).size(m))
            };
            run().map_err(|e| CellFailure { cell: format!("fold={f} size={m} source={label}"), reason: e.to_string() })
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(c) => cells.push(c),
            Err(f) => failures.push(f),
        }
    }
    let mut summary = Vec::new();
    for &m in &cfg.training_sizes {
        for (label, _) in &sources {
            let of_cell: Vec<&Cell> = cells.iter().filter(|c| c.size == Some(m) && &c.source == label).collect();
            if let Some(first) = of_cell.first() {
                let values: Vec<f64> = of_cell.iter().map(|c| c.value).collect();
                summary.push(SummaryRow::from_values(m, label, &first.metric, &values));
            }
        }
    }
    finish(ctx, "fit", cells, summary, failures)
}

/// Evenly spaced subset of at most `max` rows.
fn thin(rows: Vec<Vec<f64>>, max: usize) -> Vec<Vec<f64>> {
    let n = rows.len();
    if n <= max {
        return rows;
    }
    (0..max).map(|i| rows[i * n / max].clone()).collect()
}

fn energy_cells(cells: &mut Vec<Cell>, source: &str, r: &crate::selection::EnergyResult, split: Option<usize>) {
    for (metric, value) in [("energy", r.statistic), ("energy_distance_sq", r.distance_sq)] {
        let mut c = Cell::new(source, metric, value);
        c.split = split;
        cells.push(c);
    }
}

fn probe_failures(failures: &mut Vec<CellFailure>, what: &str, dist: &ExtractedDistribution) {
    failures.extend(dist.failures.iter().map(|f| CellFailure {
        cell: format!("{what} description={} repetition={}", f.origin.0, f.origin.1),
        reason: f.reason.clone(),
    }));
}

/// Extract the model's prior (and posteriors given demonstration sets) via
/// in-context probes, then compare: elicited prior vs extracted prior, and
/// for each demonstration set the MC posterior on the KDE of the extracted
/// prior vs the extracted posterior. The probe's model class follows the
/// dataset's task.
pub fn run_probe_experiment(ctx: &Context) -> Result<RunReport> {
    let cfg = &ctx.config.probe;
    let d = ctx.dataset.d();
    let class = ctx.class();
    let design = ProbeDesign { model_class: class, ..cfg.design.clone() };
    let names = ctx.dataset.feature_names();
    let descriptions = ctx.icl_descriptions()?;
    let mut cells = Vec::new();
    let mut failures = Vec::new();

    let prior_dist = extract_distribution(&ctx.llm, &descriptions, &design, d, None, ctx.seed(&[stage::PROBE, 0]))?;
    probe_failures(&mut failures, "prior", &prior_dist);
    ctx.write("probe/extracted_prior.csv", &prior_dist.to_csv(names))?;
    if prior_dist.samples.is_empty() {
        failures.push(CellFailure { cell: "prior".into(), reason: "no description produced a usable probe".into() });
        return finish(ctx, "probe", cells, Vec::new(), failures);
    }

    let table = ctx.elicited_table()?;
    let elicited = build_mixture(&table)?;
    match compare_elicited_vs_extracted(&elicited, &prior_dist, cfg.n_prior_draws, ctx.seed(&[stage::PRIOR_SAMPLES])) {
        Ok(r) => energy_cells(&mut cells, "elicited_vs_extracted_prior", &r, None),
        Err(e) => failures.push(CellFailure { cell: "elicited_vs_extracted_prior".into(), reason: e.to_string() }),
    }

    if cfg.posterior {
        let prior_phis = prior_dist.phis();
        let kde = Kde::fit(&prior_phis, cfg.bandwidth_factor)?;
        for j in 0..cfg.n_demo_sets {
            let run = |cells: &mut Vec<Cell>, failures: &mut Vec<CellFailure>| -> Result<()> {
                let demos = demonstrations(ctx, cfg.demo_size, ctx.seed(&[stage::DEMOS, j as u64]))?;
                let post = extract_distribution(
                    &ctx.llm,
                    &descriptions,
                    &design,
                    d,
                    Some(&demos),
                    ctx.seed(&[stage::PROBE, j as u64 + 1]),
                )?;
                probe_failures(failures, &format!("posterior demo_set={j}"), &post);
                ctx.write(&format!("probe/extracted_posterior_{j}.csv"), &post.to_csv(names))?;
                let post_phis = post.phis();
                if post_phis.is_empty() {
                    return Err(Error::Probe("no description produced a usable probe".into()));
                }
                let draws = mc_posterior_on_extracted_prior(
                    &kde,
                    &demos,
                    class,
                    cfg.noise,
                    &cfg.mc,
                    ctx.seed(&[stage::KDE_MC, j as u64]),
                )?;
                let mc = thin(draws.rows().map(<[f64]>::to_vec).collect(), cfg.max_energy_points);
                energy_cells(cells, "mc_vs_extracted_posterior", &energy(&mc, &post_phis)?, Some(j));
                energy_cells(cells, "extracted_prior_vs_posterior", &energy(&prior_phis, &post_phis)?, Some(j));
                Ok(())
            };
            if let Err(e) = run(&mut cells, &mut failures) {
                failures.push(CellFailure { cell: format!("posterior demo_set={j}"), reason: e.to_string() });
            }
        }
    }
    finish(ctx, "probe", cells, Vec::new(), failures)
}

fn comparison_methods(c: Comparison) -> (&'static str, &'static str) {
    match c {
        Comparison::ElicitedVsIcl => ("elicited", "icl"),
        Comparison::ElicitedVsUninformative => ("elicited", "uninformative"),
    }
}

/// Prior predictive log-likelihoods on random subsets and the Bayes factors
/// between methods. Split `s` draws its subset from `[SELECTION, s]`.
pub fn run_selection_experiment(ctx: &Context) -> Result<RunReport> {
    let cfg = &ctx.config.selection;
    let kind = ctx.dataset.task_kind();
    let table = ctx.elicited_table()?;
    let elicited = LinearModelSpec::new(kind, build_mixture(&table)?)?.with_noise(cfg.noise)?;
    let flat = LinearModelSpec::new(kind, MixturePrior::standard_normal(ctx.dataset.d()))?.with_noise(cfg.noise)?;
    let needs_icl = cfg.comparisons.contains(&Comparison::ElicitedVsIcl);
    let icl_descriptions = if needs_icl { ctx.icl_descriptions()? } else { Vec::new() };

    let mut methods: Vec<&str> = vec!["elicited"];
    for &c in &cfg.comparisons {
        let b = comparison_methods(c).1;
        if !methods.contains(&b) {
            methods.push(b);
        }
    }

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut per_split: Vec<(usize, std::collections::BTreeMap<&str, Vec<f64>>)> = Vec::new();
    for s in 0..cfg.n_splits {
        let data = match demonstrations_for_selection(ctx, cfg.subset_size, s) {
            Ok(d) => d,
            Err(e) => {
                failures.push(CellFailure { cell: format!("split={s}"), reason: e.to_string() });
                continue;
            }
        };
        let mut lls = std::collections::BTreeMap::new();
        for &m in &methods {
            let ll = match m {
                "elicited" => prior_predictive_loglik(
                    &elicited,
                    &data,
                    cfg.n_prior_samples,
                    ctx.seed(&[stage::PRIOR_SAMPLES, s as u64, 0]),
                ),
                "uninformative" => {
                    prior_predictive_loglik(&flat, &data, cfg.n_prior_samples, ctx.seed(&[stage::PRIOR_SAMPLES, s as u64, 1]))
                }
                _ => icl_prior_predictive_loglik(&ctx.llm, &icl_descriptions, &data, ctx.class(), ctx.config.probe.design.retries),
            };
            match ll {
                Ok(v) => {
                    cells.push(Cell::new(m, "mean_loglik", crate::math::mean(&v)).split(s));
                    lls.insert(m, v);
                }
                Err(e) => failures.push(CellFailure { cell: format!("split={s} method={m}"), reason: e.to_string() }),
            }
        }
        per_split.push((s, lls));
    }

    let mut reports = Vec::new();
    for &c in &cfg.comparisons {
        let (a, b) = comparison_methods(c);
        let pairs: Vec<(usize, (Vec<f64>, Vec<f64>))> = per_split
            .iter()
            .filter_map(|(s, lls)| Some((*s, (lls.get(a)?.clone(), lls.get(b)?.clone()))))
            .collect();
        if pairs.is_empty() {
            continue;
        }
        let mut report = BayesFactorReport::from_splits(
            &ctx.config.dataset.id,
            a,
            b,
            &pairs.iter().map(|(_, p)| p.clone()).collect::<Vec<_>>(),
        )?;
        for (entry, (s, _)) in report.splits.iter_mut().zip(&pairs) {
            entry.split = *s;
            cells.push(Cell::new(format!("{a}_vs_{b}"), "log_bf", entry.log_bf).split(*s));
        }
        reports.push(report);
    }
    ctx.write("select/bayes_factors.json", &json(&reports))?;
    let mut csv = String::from("dataset,split,method,mean_loglik,log_bf\n");
    for r in &reports {
        csv.extend(r.to_csv().lines().skip(1).map(|l| format!("{l}\n")));
    }
    ctx.write("select/bayes_factors.csv", &csv)?;
    finish(ctx, "select", cells, Vec::new(), failures)
}

fn demonstrations_for_selection(ctx: &Context, n: usize, split: usize) -> Result<Observations> {
    demonstrations(ctx, n, ctx.seed(&[stage::SELECTION, split as u64]))
}

#[derive(Serialize)]
struct MemorisationRecord<'a> {
    dataset: &'a str,
    #[serde(flatten)]
    result: &'a MemorisationResult,
}

/// Header and row completion tests on the dataset's raw text. Failures
/// propagate.
pub fn run_memorisation_tests(ctx: &Context) -> Result<RunReport> {
    let cfg = &ctx.config.memorisation;
    let header = header_test(&ctx.llm, &ctx.raw_text, cfg.n_seed_rows, cfg.completion_tokens, cfg.normalisation)?;
    let row = row_test(
        &ctx.llm,
        &ctx.raw_text,
        cfg.n_trials,
        cfg.context_rows,
        ctx.seed(&[stage::MEMORISATION]),
        cfg.normalisation,
    )?;
    let dataset = ctx.config.dataset.id.as_str();
    let records = [MemorisationRecord { dataset, result: &header }, MemorisationRecord { dataset, result: &row }];
    ctx.write("memtest/memorisation.json", &json(&records))?;
    let mut cells = Vec::new();
    for (name, r) in [("header", &header), ("row", &row)] {
        cells.push(Cell::new(name, "mean_distance", r.mean));
        cells.push(Cell::new(name, "std_distance", r.std));
    }
    finish(ctx, "memtest", cells, Vec::new(), Vec::new())
}
