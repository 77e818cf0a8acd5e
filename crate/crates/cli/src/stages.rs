//! The five pipeline stages. Each reads its upstream manifest, does its work
//! and writes its own manifest last, so an interrupted stage is never
//! mistaken for a finished one.
//!
//! Layout under the output directory:
//!
//! - `generate/`: `scenarios.csv`, `labels.csv`, `daily_<site>.csv`
//! - `preprocess/`: `samples_<site>_<part>.csv` (raw), `scaled_<site>_<part>.csv`,
//!   `scaler_<site>.csv`
//! - `train/<model>/`: `<site>_seed<n>.ckpt.json`, `<site>_seed<n>.log.csv`,
//!   and for the forest `bo_trace_<site>.csv`, `rf_params_<site>.json`
//! - `evaluate/<model>/`: `runs_<site>.csv`
//! - `report/`: metrics, per-run metrics, candles, gate verdicts, JSON mirror

use rayon::prelude::*;
use serde_json::json;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nrr_core::eval::{
    attach_forest_features, build_report, evaluate_model, read_runs, run_seed, train_model,
    tune_forest, write_report, write_runs, SiteData, TrainedModel, GATE_THRESHOLD, REPORT_FILES,
};
use nrr_core::features::{
    apply_scaler, build_samples, fit_scaler, read_samples, split_by_year, write_samples,
};
use nrr_core::forest::RfHyperparams;
use nrr_core::models::ModelKind;
use nrr_core::surrogate::{generate_dataset, read_dataset, write_dataset};
use nrr_core::RunResult;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult, Failure};
use crate::manifest::Manifest;

pub const PARTS: [&str; 3] = ["train", "validation", "test"];

pub fn checkpoint_name(site: &str, seed: u64) -> String {
    format!("{site}_seed{seed}.ckpt.json")
}

pub fn log_name(site: &str, seed: u64) -> String {
    format!("{site}_seed{seed}.log.csv")
}

pub struct Pipeline {
    pub config: ExperimentConfig,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Self {
        Pipeline { config }
    }

    fn out(&self) -> &Path {
        &self.config.output_dir
    }

    pub fn generate_dir(&self) -> PathBuf {
        self.out().join("generate")
    }

    pub fn preprocess_dir(&self) -> PathBuf {
        self.out().join("preprocess")
    }

    pub fn train_dir(&self, kind: ModelKind) -> PathBuf {
        self.out().join("train").join(kind.name())
    }

    pub fn evaluate_dir(&self, kind: ModelKind) -> PathBuf {
        self.out().join("evaluate").join(kind.name())
    }

    pub fn report_dir(&self) -> PathBuf {
        self.out().join("report")
    }

    /// Runs `f` on a pool limited to the configured number of threads.
    fn pooled<T: Send>(&self, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.jobs)
            .build()
            .map_err(|e| CliError::new(Failure::Runtime, format!("thread pool: {e}")))?;
        pool.install(f)
    }

    fn create(dir: &Path) -> CliResult<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::from(e).context(format!("cannot create {}", dir.display())))
    }

    pub fn generate(&self) -> CliResult<Manifest> {
        let t = Instant::now();
        let dir = self.generate_dir();
        Self::create(&dir)?;
        let cfg = &self.config;
        let results = self.pooled(|| {
            Ok(generate_dataset(
                &cfg.grid,
                &cfg.surrogate,
                cfg.master_seed,
            )?)
        })?;
        let (files, counts) = write_dataset(&dir, &results)?;
        let m = Manifest::write(
            &dir,
            "generate",
            cfg.generate_hash(),
            cfg.master_seed,
            json!({
                "scenarios": counts.scenarios,
                "labeled": counts.labeled,
                "daily_rows": counts.daily_rows,
            }),
            &files,
        )?;
        log::info!(
            "generate: {} scenarios, {} labeled in {:.1?}",
            counts.scenarios,
            counts.labeled,
            t.elapsed()
        );
        Ok(m)
    }

    pub fn preprocess(&self) -> CliResult<Manifest> {
        let t = Instant::now();
        let cfg = &self.config;
        let gen = self.generate_dir();
        Manifest::require(&gen, "generate", &cfg.generate_hash())?.verify_files(&gen)?;
        let dir = self.preprocess_dir();
        Self::create(&dir)?;

        let results = read_dataset(&gen)?;
        let samples = build_samples(&results)?;
        let mut files = Vec::new();
        let mut details = serde_json::Map::new();
        for site in &cfg.sites {
            let mine: Vec<_> = samples
                .iter()
                .filter(|s| &s.meta.site_id == site)
                .cloned()
                .collect();
            let splits = split_by_year(mine, &cfg.split)?;
            for (part, rows) in PARTS
                .iter()
                .zip([&splits.train, &splits.validation, &splits.test])
            {
                if rows.is_empty() {
                    return Err(CliError::config(format!(
                        "split leaves no {part} samples for site {site}; check [split] against grid.years"
                    )));
                }
            }
            let scaler = fit_scaler(&splits.train, site)?;
            let name = format!("scaler_{site}.csv");
            scaler.save(&dir.join(&name))?;
            files.push(name);
            let mut counts = serde_json::Map::new();
            for (part, rows) in PARTS
                .iter()
                .zip([&splits.train, &splits.validation, &splits.test])
            {
                let raw = format!("samples_{site}_{part}.csv");
                write_samples(&dir.join(&raw), rows)?;
                let scaled = format!("scaled_{site}_{part}.csv");
                write_samples(&dir.join(&scaled), &apply_scaler(&scaler, rows)?)?;
                files.extend([raw, scaled]);
                let mut years: Vec<i32> = rows.iter().map(|s| s.meta.fert_year).collect();
                years.sort_unstable();
                years.dedup();
                counts.insert(
                    part.to_string(),
                    json!({ "samples": rows.len(), "years": years }),
                );
            }
            details.insert(site.clone(), counts.into());
        }
        let m = Manifest::write(
            &dir,
            "preprocess",
            cfg.preprocess_hash(),
            cfg.master_seed,
            json!({ "sites": details }),
            &files,
        )?;
        log::info!(
            "preprocess: {} samples in {:.1?}",
            samples.len(),
            t.elapsed()
        );
        Ok(m)
    }

    /// Loads a site's partitions: standardized network features with the raw
    /// weekly aggregates attached for the forest.
    pub fn load_site(&self, site: &str) -> CliResult<SiteData> {
        let dir = self.preprocess_dir();
        let load = |part: &str| -> CliResult<_> {
            let raw = read_samples(&dir.join(format!("samples_{site}_{part}.csv")))?;
            let scaled = read_samples(&dir.join(format!("scaled_{site}_{part}.csv")))?;
            Ok(attach_forest_features(scaled, &raw)?)
        };
        Ok(SiteData {
            site: site.to_string(),
            train: load("train")?,
            validation: load("validation")?,
            test: load("test")?,
        })
    }

    fn require_preprocess(&self) -> CliResult<()> {
        let dir = self.preprocess_dir();
        Manifest::require(&dir, "preprocess", &self.config.preprocess_hash())?.verify_files(&dir)
    }

    pub fn train(&self) -> CliResult<Vec<Manifest>> {
        self.require_preprocess()?;
        let mut out = Vec::new();
        for &kind in &self.config.models {
            out.push(self.train_one(kind)?);
        }
        Ok(out)
    }

    fn train_one(&self, kind: ModelKind) -> CliResult<Manifest> {
        let t = Instant::now();
        let cfg = &self.config;
        let dir = self.train_dir(kind);
        Self::create(&dir)?;
        let mut files = Vec::new();
        let mut failures = Vec::new();
        let mut tuned_params = serde_json::Map::new();
        for site in &cfg.sites {
            let data = self.load_site(site)?;
            let tuned: Option<RfHyperparams> = if kind == ModelKind::Rf {
                let (trace, hp) =
                    self.pooled(|| Ok(tune_forest(&cfg.specs.forest, &data, cfg.master_seed)?))?;
                let trace_name = format!("bo_trace_{site}.csv");
                trace.write_csv(&dir.join(&trace_name))?;
                let params_name = format!("rf_params_{site}.json");
                let mut text = serde_json::to_string_pretty(&hp)?;
                text.push('\n');
                std::fs::write(dir.join(&params_name), text)?;
                files.extend([trace_name, params_name]);
                tuned_params.insert(site.clone(), serde_json::to_value(hp)?);
                Some(hp)
            } else {
                None
            };
            let runs: Vec<(u64, CliResult<Vec<String>>)> = self.pooled(|| {
                Ok(cfg
                    .seeds
                    .par_iter()
                    .map(|&seed| {
                        let r = (|| -> CliResult<Vec<String>> {
                            let s = run_seed(cfg.master_seed, kind, site, seed);
                            let (model, log) =
                                train_model(kind, &cfg.specs, &data, s, tuned.as_ref())?;
                            let ckpt = checkpoint_name(site, seed);
                            model.save(&dir.join(&ckpt))?;
                            let mut written = vec![ckpt];
                            if let Some(log) = log {
                                let name = log_name(site, seed);
                                log.write_csv(&dir.join(&name))?;
                                written.push(name);
                            }
                            Ok(written)
                        })();
                        (seed, r)
                    })
                    .collect())
            })?;
            for (seed, r) in runs {
                match r {
                    Ok(w) => files.extend(w),
                    Err(e) => failures.push((site.clone(), seed, e)),
                }
            }
        }
        if let Some((site, seed, e)) = failures.into_iter().next() {
            // Finished checkpoints stay on disk; without a manifest the
            // downstream stages refuse to use them.
            let kind_code = if e.kind == Failure::Runtime {
                Failure::Model
            } else {
                e.kind
            };
            return Err(CliError::new(
                kind_code,
                format!(
                    "training {kind} at {site}, seed {seed} failed: {}",
                    e.message
                ),
            ));
        }
        let mut details = json!({ "model": kind.name(), "sites": cfg.sites, "seeds": cfg.seeds });
        if kind == ModelKind::Rf {
            details["tuned"] = tuned_params.into();
        }
        let m = Manifest::write(
            &dir,
            "train",
            cfg.train_hash(kind),
            cfg.master_seed,
            details,
            &files,
        )?;
        log::info!(
            "train {kind}: {} sites x {} seeds in {:.1?}",
            cfg.sites.len(),
            cfg.seeds.len(),
            t.elapsed()
        );
        Ok(m)
    }

    pub fn evaluate(&self) -> CliResult<Vec<Manifest>> {
        self.require_preprocess()?;
        let mut out = Vec::new();
        for &kind in &self.config.models {
            out.push(self.evaluate_one(kind)?);
        }
        Ok(out)
    }

    fn evaluate_one(&self, kind: ModelKind) -> CliResult<Manifest> {
        let cfg = &self.config;
        let train_dir = self.train_dir(kind);
        let tm = Manifest::require(&train_dir, "train", &cfg.train_hash(kind))?;
        tm.verify_files(&train_dir)?;
        let dir = self.evaluate_dir(kind);
        Self::create(&dir)?;
        let mut files = Vec::new();
        for site in &cfg.sites {
            let data = self.load_site(site)?;
            let runs: Vec<CliResult<RunResult>> = self.pooled(|| {
                Ok(cfg
                    .seeds
                    .par_iter()
                    .map(|&seed| {
                        let name = checkpoint_name(site, seed);
                        if !tm.files.iter().any(|f| f.name == name) {
                            return Err(CliError::missing(format!(
                                "no {kind} checkpoint for {site}, seed {seed}; run `train --model {kind} --seeds {seed}`"
                            )));
                        }
                        let model = TrainedModel::load(kind, &train_dir.join(&name))?;
                        evaluate_model(kind, seed, &model, &data)
                            .map_err(|e| CliError::from(e).context(format!("evaluating {kind} at {site}, seed {seed}")))
                    })
                    .collect())
            })?;
            let runs = runs.into_iter().collect::<CliResult<Vec<_>>>()?;
            let name = format!("runs_{site}.csv");
            write_runs(&dir.join(&name), &runs)?;
            files.push(name);
        }
        Manifest::write(
            &dir,
            "evaluate",
            cfg.evaluate_hash(kind),
            cfg.master_seed,
            json!({ "model": kind.name(), "sites": cfg.sites, "seeds": cfg.seeds }),
            &files,
        )
    }

    pub fn report(&self) -> CliResult<Manifest> {
        let cfg = &self.config;
        let mut groups = Vec::new();
        for &kind in &cfg.models {
            let eval_dir = self.evaluate_dir(kind);
            Manifest::require(&eval_dir, "evaluate", &cfg.evaluate_hash(kind))?
                .verify_files(&eval_dir)?;
            for site in &cfg.sites {
                let mut runs = read_runs(&eval_dir.join(format!("runs_{site}.csv")), kind, site)?;
                runs.retain(|r| cfg.seeds.contains(&r.seed));
                if runs.len() != cfg.seeds.len() {
                    return Err(CliError::missing(format!(
                        "evaluated {kind} runs at {site} do not cover seeds {:?}; rerun `evaluate`",
                        cfg.seeds
                    )));
                }
                groups.push(runs);
            }
        }
        let dir = self.report_dir();
        Self::create(&dir)?;
        let report = build_report(&groups, GATE_THRESHOLD)?;
        write_report(&dir, &report)?;
        let files: Vec<String> = REPORT_FILES.iter().map(|s| s.to_string()).collect();
        let operational: Vec<_> = report
            .gates
            .iter()
            .map(|g| json!({ "model": g.model.name(), "site": g.site, "operational": g.operational }))
            .collect();
        let m = Manifest::write(
            &dir,
            "report",
            cfg.report_hash(),
            cfg.master_seed,
            json!({ "models": cfg.models, "sites": cfg.sites, "seeds": cfg.seeds, "gates": operational }),
            &files,
        )?;
        for row in &report.metrics {
            log::info!(
                "{} {}: MAE {:.3} (baseline {:.3}), R2 {}, sigma {:.3}",
                row.model,
                row.site,
                row.mae,
                row.baseline_mae,
                row.r2.map_or("n/a".to_string(), |r| format!("{r:.3}")),
                row.sigma
            );
        }
        Ok(m)
    }

    pub fn run_all(&self) -> CliResult<()> {
        self.generate()?;
        self.preprocess()?;
        self.train()?;
        self.evaluate()?;
        self.report()?;
        Ok(())
    }
}
