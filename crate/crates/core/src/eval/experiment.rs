use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::residuals::{monthly_residual_stats, operational_gate, GateVerdict, GATE_THRESHOLD};
use super::{metrics_row, MetricsRow, Prediction, RunResult};
use crate::error::{Error, Result};
use crate::features::Sample;
use crate::forest::{
    bayes_opt, fit_forest, BoConfig, BoTrace, ForestModel, ParamSpace, RfHyperparams, Rows,
};
use crate::models::{
    train_ae_two_stage, train_dae, train_mlp, AeSpec, DaeSpec, MlpSpec, ModelKind, NeuralModel,
    TrainLog,
};
use crate::seeding::SeedKey;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestSpec {
    pub space: ParamSpace,
    pub bo: BoConfig,
}

impl ForestSpec {
    pub fn validate(&self) -> Result<()> {
        self.space.validate()?;
        self.bo.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpecs {
    pub mlp: MlpSpec,
    pub ae: AeSpec,
    pub dae: DaeSpec,
    pub forest: ForestSpec,
}

impl ModelSpecs {
    pub fn validate(&self) -> Result<()> {
        self.mlp.validate()?;
        self.ae.validate()?;
        self.dae.validate()?;
        self.forest.validate()
    }
}

/// One site's partitions. `features` are standardized; `rf_features` are the
/// raw weekly aggregates (trees need no scaling).
#[derive(Debug, Clone, Default)]
pub struct SiteData {
    pub site: String,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl SiteData {
    pub fn train_mean(&self) -> Result<f64> {
        if self.train.is_empty() {
            return Err(Error::data(format!(
                "{}: empty training partition",
                self.site
            )));
        }
        Ok(self.train.iter().map(|s| s.target).sum::<f64>() / self.train.len() as f64)
    }
}

/// Replaces the weekly features of standardized samples with those of the
/// matching raw samples (same order, same scenarios).
pub fn attach_forest_features(scaled: Vec<Sample>, raw: &[Sample]) -> Result<Vec<Sample>> {
    if scaled.len() != raw.len() {
        return Err(Error::data(format!(
            "{} scaled vs {} raw samples",
            scaled.len(),
            raw.len()
        )));
    }
    scaled
        .into_iter()
        .zip(raw)
        .map(|(mut s, r)| {
            if s.meta.scenario_id != r.meta.scenario_id {
                return Err(Error::data(format!(
                    "scaled sample {} paired with raw sample {}",
                    s.meta.scenario_key, r.meta.scenario_key
                )));
            }
            s.rf_features = r.rf_features.clone();
            Ok(s)
        })
        .collect()
}

/// Seed of run `seed` of `kind` at `site`.
pub fn run_seed(master_seed: u64, kind: ModelKind, site: &str, seed: u64) -> u64 {
    SeedKey::new(master_seed)
        .with_str("run")
        .with_str(kind.name())
        .with_str(site)
        .with(seed)
        .value()
}

fn forest_rows(samples: &[&Sample]) -> (Vec<Vec<f64>>, Vec<f64>) {
    (
        samples.iter().map(|s| s.rf_features.clone()).collect(),
        samples.iter().map(|s| s.target).collect(),
    )
}

/// Tunes forest hyperparameters on the training and validation partitions.
pub fn tune_forest(
    spec: &ForestSpec,
    data: &SiteData,
    master_seed: u64,
) -> Result<(BoTrace, RfHyperparams)> {
    let pool: Vec<&Sample> = data.train.iter().chain(&data.validation).collect();
    let (x, y) = forest_rows(&pool);
    let seed = SeedKey::new(master_seed)
        .with_str("bo")
        .with_str(&data.site)
        .value();
    bayes_opt(Rows::new(&x, &y)?, &spec.space, &spec.bo, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Neural(NeuralModel),
    Forest(ForestModel),
}

impl TrainedModel {
    pub fn predict(&self, samples: &[Sample]) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Neural(m) => m.predict_samples(samples),
            TrainedModel::Forest(f) => Ok(samples
                .iter()
                .map(|s| f.predict_one(&s.rf_features))
                .collect()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            TrainedModel::Neural(m) => m.save(path),
            TrainedModel::Forest(f) => f.save(path),
        }
    }

    pub fn load(kind: ModelKind, path: &Path) -> Result<Self> {
        let m = if kind == ModelKind::Rf {
            TrainedModel::Forest(ForestModel::load(path)?)
        } else {
            let m = NeuralModel::load(path)?;
            if m.kind != kind {
                return Err(Error::data(format!(
                    "{} holds a {} model, expected {kind}",
                    path.display(),
                    m.kind
                )));
            }
            TrainedModel::Neural(m)
        };
        Ok(m)
    }
}

/// Trains one run. Forests need the tuned hyperparameters.
pub fn train_model(
    kind: ModelKind,
    specs: &ModelSpecs,
    data: &SiteData,
    seed: u64,
    tuned: Option<&RfHyperparams>,
) -> Result<(TrainedModel, Option<TrainLog>)> {
    let (model, log) = match kind {
        ModelKind::Mlp => train_mlp(&specs.mlp, &data.train, &data.validation, seed)?,
        ModelKind::Ae => train_ae_two_stage(&specs.ae, &data.train, &data.validation, seed)?,
        ModelKind::Dae => train_dae(&specs.dae, &data.train, &data.validation, seed)?,
        ModelKind::Rf => {
            let hp = tuned.ok_or_else(|| {
                Error::Usage("forest training needs tuned hyperparameters".into())
            })?;
            let pool: Vec<&Sample> = data.train.iter().chain(&data.validation).collect();
            let (x, y) = forest_rows(&pool);
            return Ok((
                TrainedModel::Forest(fit_forest(Rows::new(&x, &y)?, hp, seed)?),
                None,
            ));
        }
    };
    Ok((TrainedModel::Neural(model), Some(log)))
}

pub fn evaluate_model(
    kind: ModelKind,
    seed: u64,
    model: &TrainedModel,
    data: &SiteData,
) -> Result<RunResult> {
    let preds = model.predict(&data.test)?;
    if let Some(p) = preds.iter().find(|p| !p.is_finite()) {
        return Err(Error::Training(format!("{kind} seed {seed} predicted {p}")));
    }
    Ok(RunResult {
        model: kind,
        site: data.site.clone(),
        seed,
        train_mean: data.train_mean()?,
        predictions: data
            .test
            .iter()
            .zip(preds)
            .map(|(s, p)| Prediction {
                scenario_id: s.meta.scenario_id,
                fert_year: s.meta.fert_year,
                fert_month: s.meta.fert_month,
                target: s.target,
                prediction: p,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunFailure {
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct TrainedRun {
    pub seed: u64,
    pub model: TrainedModel,
    pub log: Option<TrainLog>,
    pub result: RunResult,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub model: ModelKind,
    pub site: String,
    pub runs: Vec<TrainedRun>,
    pub failures: Vec<RunFailure>,
    pub trace: Option<BoTrace>,
    /// Aggregates over the successful runs.
    pub metrics: Option<MetricsRow>,
    pub gate: Option<GateVerdict>,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn results(&self) -> Vec<RunResult> {
        self.runs.iter().map(|r| r.result.clone()).collect()
    }
}

/// Trains and evaluates `kind` once per seed (in parallel), then aggregates.
/// A failing seed is recorded and the remaining runs are kept.
pub fn run_experiment(
    kind: ModelKind,
    data: &SiteData,
    specs: &ModelSpecs,
    seeds: &[u64],
    master_seed: u64,
) -> Result<ExperimentOutcome> {
    let (trace, tuned) = if kind == ModelKind::Rf {
        let (t, hp) = tune_forest(&specs.forest, data, master_seed)?;
        (Some(t), Some(hp))
    } else {
        (None, None)
    };
    let outcomes: Vec<(u64, Result<TrainedRun>)> = seeds
        .par_iter()
        .map(|&seed| {
            let r = (|| {
                let s = run_seed(master_seed, kind, &data.site, seed);
                let (model, log) = train_model(kind, specs, data, s, tuned.as_ref())?;
                let mut result = evaluate_model(kind, seed, &model, data)?;
                result.seed = seed;
                Ok(TrainedRun {
                    seed,
                    model,
                    log,
                    result,
                })
            })();
            (seed, r)
        })
        .collect();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in outcomes {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push(RunFailure {
                seed,
                message: e.to_string(),
            }),
        }
    }
    let results: Vec<RunResult> = runs.iter().map(|r| r.result.clone()).collect();
    let (metrics, gate) = if results.is_empty() {
        (None, None)
    } else {
        let stats = monthly_residual_stats(&results)?;
        (
            Some(metrics_row(&results)?),
            Some(operational_gate(kind, &data.site, &stats, GATE_THRESHOLD)),
        )
    };
    Ok(ExperimentOutcome {
        model: kind,
        site: data.site.clone(),
        runs,
        failures,
        trace,
        metrics,
        gate,
    })
}
