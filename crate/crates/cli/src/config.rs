//! Experiment configuration (TOML).

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use nrr_core::eval::{ForestSpec, ModelSpecs, GATE_THRESHOLD};
use nrr_core::models::{AeSpec, DaeSpec, MlpSpec, ModelKind};
use nrr_core::surrogate::{ScenarioGrid, SiteConfig, SurrogateConstants, YearRange};
use nrr_core::SplitSpec;

use crate::error::{CliError, CliResult};

/// Sites modelled when `sites` is not given and the grid contains them.
pub const DEFAULT_MODEL_SITES: [&str; 2] = ["waiotu", "mahana"];

/// Environment variable that overrides `master_seed`.
pub const SEED_ENV: &str = "NRR_MASTER_SEED";

/// Scenario grid with sites given by id. Ids resolve against
/// `custom_sites` first, then the built-in site climates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub sites: Vec<String>,
    pub custom_sites: Vec<SiteConfig>,
    pub soil_water_levels: Vec<f64>,
    pub soil_fertility_levels: Vec<f64>,
    pub irrigation_levels: Vec<bool>,
    pub years: YearRange,
    pub months: Vec<u32>,
    pub days: Vec<u32>,
    pub n_amounts: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = ScenarioGrid::default();
        GridConfig {
            sites: g.sites.iter().map(|s| s.site_id.clone()).collect(),
            custom_sites: Vec::new(),
            soil_water_levels: g.soil_water_levels,
            soil_fertility_levels: g.soil_fertility_levels,
            irrigation_levels: g.irrigation_levels,
            years: g.years,
            months: g.months,
            days: g.days,
            n_amounts: g.n_amounts,
        }
    }
}

impl GridConfig {
    pub fn to_grid(&self) -> CliResult<ScenarioGrid> {
        let sites = self
            .sites
            .iter()
            .map(|id| {
                self.custom_sites
                    .iter()
                    .find(|s| &s.site_id == id)
                    .cloned()
                    .or_else(|| SiteConfig::builtin(id))
                    .ok_or_else(|| CliError::config(format!("grid.sites: unknown site {id:?}")))
            })
            .collect::<CliResult<Vec<_>>>()?;
        let grid = ScenarioGrid {
            sites,
            soil_water_levels: self.soil_water_levels.clone(),
            soil_fertility_levels: self.soil_fertility_levels.clone(),
            irrigation_levels: self.irrigation_levels.clone(),
            years: self.years,
            months: self.months.clone(),
            days: self.days.clone(),
            n_amounts: self.n_amounts.clone(),
        };
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    master_seed: Option<u64>,
    sites: Option<Vec<String>>,
    seeds: Option<Vec<u64>>,
    models: Option<Vec<ModelKind>>,
    output_dir: Option<PathBuf>,
    jobs: Option<usize>,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    surrogate: SurrogateConstants,
    split: Option<SplitSpec>,
    #[serde(default)]
    mlp: MlpSpec,
    #[serde(default)]
    ae: AeSpec,
    #[serde(default)]
    dae: DaeSpec,
    #[serde(default)]
    forest: ForestSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub grid: ScenarioGrid,
    pub surrogate: SurrogateConstants,
    pub split: SplitSpec,
    /// Sites that get models, a subset of the grid's sites.
    pub sites: Vec<String>,
    pub specs: ModelSpecs,
    pub models: Vec<ModelKind>,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub jobs: usize,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub models: Option<Vec<ModelKind>>,
    pub seeds: Option<Vec<u64>>,
    pub output_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    /// Parses and validates a configuration. `env_seed` is the value of
    /// [`SEED_ENV`], if set.
    pub fn from_toml(text: &str, env_seed: Option<&str>) -> CliResult<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))?;
        let master_seed = match env_seed {
            Some(s) => s.trim().parse::<u64>().map_err(|e| {
                CliError::config(format!("{SEED_ENV}={s:?} is not an unsigned integer: {e}"))
            })?,
            None => raw
                .master_seed
                .ok_or_else(|| CliError::config("missing required key `master_seed`"))?,
        };
        let grid = raw.grid.to_grid()?;
        let sites = raw.sites.unwrap_or_else(|| default_sites(&grid));
        let cfg = ExperimentConfig {
            master_seed,
            grid,
            surrogate: raw.surrogate,
            split: raw.split.unwrap_or_default(),
            sites,
            specs: ModelSpecs {
                mlp: raw.mlp,
                ae: raw.ae,
                dae: raw.dae,
                forest: raw.forest,
            },
            models: raw.models.unwrap_or_else(|| ModelKind::ALL.to_vec()),
            seeds: raw.seeds.unwrap_or_else(|| (1..=5).collect()),
            output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
            jobs: raw.jobs.unwrap_or(1),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, taking the seed override from the process environment.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let env = std::env::var(SEED_ENV).ok();
        Self::from_toml(&text, env.as_deref())
    }

    pub fn apply(mut self, o: &Overrides) -> CliResult<Self> {
        if let Some(m) = &o.models {
            self.models = m.clone();
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = d.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.surrogate.validate()?;
        self.split.validate()?;
        self.specs.validate()?;
        if self.sites.is_empty() {
            return Err(CliError::config(
                "sites: at least one modelling site is required",
            ));
        }
        for s in &self.sites {
            if self.grid.site(s).is_none() {
                return Err(CliError::config(format!(
                    "sites: {s:?} is not part of grid.sites"
                )));
            }
        }
        if self.sites.iter().collect::<BTreeSet<_>>().len() != self.sites.len() {
            return Err(CliError::config("sites: duplicate entries"));
        }
        if self.seeds.is_empty()
            || self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len()
        {
            return Err(CliError::config(
                "seeds: need at least one seed and no duplicates",
            ));
        }
        if self.models.is_empty() {
            return Err(CliError::config("models: at least one model is required"));
        }
        if self.jobs == 0 {
            return Err(CliError::config("jobs must be at least 1"));
        }
        Ok(())
    }

    fn spec_json(&self, kind: ModelKind) -> Value {
        let v = match kind {
            ModelKind::Rf => serde_json::to_value(self.specs.forest),
            ModelKind::Mlp => serde_json::to_value(&self.specs.mlp),
            ModelKind::Ae => serde_json::to_value(&self.specs.ae),
            ModelKind::Dae => serde_json::to_value(&self.specs.dae),
        };
        v.expect("model specs serialize")
    }

    pub fn generate_hash(&self) -> String {
        hash_value(&json!({
            "master_seed": self.master_seed,
            "grid": self.grid,
            "surrogate": self.surrogate,
        }))
    }

    pub fn preprocess_hash(&self) -> String {
        hash_value(&json!({
            "generate": self.generate_hash(),
            "split": self.split,
            "sites": self.sites,
        }))
    }

    pub fn train_hash(&self, kind: ModelKind) -> String {
        hash_value(&json!({
            "preprocess": self.preprocess_hash(),
            "model": kind.name(),
            "spec": self.spec_json(kind),
        }))
    }

    pub fn evaluate_hash(&self, kind: ModelKind) -> String {
        hash_value(&json!({ "train": self.train_hash(kind) }))
    }

    pub fn report_hash(&self) -> String {
        let models: Vec<Value> = self
            .models
            .iter()
            .map(|&k| json!({ "model": k.name(), "evaluate": self.evaluate_hash(k) }))
            .collect();
        hash_value(&json!({ "models": models, "seeds": self.seeds, "threshold": GATE_THRESHOLD }))
    }
}

fn default_sites(grid: &ScenarioGrid) -> Vec<String> {
    let ids: Vec<String> = grid.sites.iter().map(|s| s.site_id.clone()).collect();
    let preferred: Vec<String> = ids
        .iter()
        .filter(|id| DEFAULT_MODEL_SITES.contains(&id.as_str()))
        .cloned()
        .collect();
    if preferred.is_empty() {
        ids
    } else {
        preferred
    }
}

/// SHA-256 of the compact JSON text; object keys are sorted.
pub fn hash_value(v: &Value) -> String {
    hex(&Sha256::digest(
        serde_json::to_string(v)
            .expect("json values serialize")
            .as_bytes(),
    ))
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses `3`, `1,2,5`, `1..5` or `1-5` (inclusive ranges).
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let range = part.split_once("..").or_else(|| part.split_once('-'));
        match range {
            Some((a, b)) => {
                let a: u64 = a
                    .trim()
                    .parse()
                    .map_err(|e| format!("bad seed {a:?}: {e}"))?;
                let b: u64 = b
                    .trim()
                    .trim_start_matches('=')
                    .parse()
                    .map_err(|e| format!("bad seed {b:?}: {e}"))?;
                if a > b {
                    return Err(format!("empty seed range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(
                part.parse()
                    .map_err(|e| format!("bad seed {part:?}: {e}"))?,
            ),
        }
    }
    if out.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(out)
}

/// Parses a model selection; `all` expands to every kind.
pub fn parse_models(s: &str) -> Result<Vec<ModelKind>, String> {
    let mut out: Vec<ModelKind> = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if part == "all" {
            out.extend(ModelKind::ALL);
        } else {
            out.push(part.parse().map_err(|e: nrr_core::Error| e.to_string())?);
        }
    }
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err("no models given".into());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_and_models_parse() {
        assert_eq!(parse_seeds("1..5").unwrap(), [1, 2, 3, 4, 5]);
        assert_eq!(parse_seeds("1..=3").unwrap(), [1, 2, 3]);
        assert_eq!(parse_seeds("2-3,7").unwrap(), [2, 3, 7]);
        assert!(parse_seeds("5..1").is_err());
        assert_eq!(parse_models("all").unwrap(), ModelKind::ALL);
        assert_eq!(
            parse_models("dae,rf").unwrap(),
            [ModelKind::Rf, ModelKind::Dae]
        );
        assert!(parse_models("cnn").is_err());
    }

    #[test]
    fn master_seed_is_required_unless_overridden() {
        let err = ExperimentConfig::from_toml("", None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.message.contains("master_seed"));
        let cfg = ExperimentConfig::from_toml("", Some("9")).unwrap();
        assert_eq!(cfg.master_seed, 9);
        let cfg = ExperimentConfig::from_toml("master_seed = 3", Some("11")).unwrap();
        assert_eq!(cfg.master_seed, 11);
        assert_eq!(
            ExperimentConfig::from_toml("", Some("x"))
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn defaults_and_unknown_keys() {
        let cfg = ExperimentConfig::from_toml("master_seed = 1", None).unwrap();
        assert_eq!(cfg.grid.cardinality(), 622_080);
        assert_eq!(cfg.sites, ["waiotu", "mahana"]);
        assert_eq!(cfg.seeds, [1, 2, 3, 4, 5]);
        assert_eq!(cfg.specs, ModelSpecs::default());
        let err = ExperimentConfig::from_toml("master_seed = 1\nbogus = 2", None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err =
            ExperimentConfig::from_toml("master_seed = 1\n[mlp]\nepoch = 2", None).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn hashes_track_relevant_sections() {
        let a = ExperimentConfig::from_toml("master_seed = 1", None).unwrap();
        let b = ExperimentConfig::from_toml("master_seed = 1\n[mlp]\nepochs = 3", None).unwrap();
        assert_eq!(a.preprocess_hash(), b.preprocess_hash());
        assert_eq!(a.train_hash(ModelKind::Ae), b.train_hash(ModelKind::Ae));
        assert_ne!(a.train_hash(ModelKind::Mlp), b.train_hash(ModelKind::Mlp));
        let c = ExperimentConfig::from_toml("master_seed = 2", None).unwrap();
        assert_ne!(a.generate_hash(), c.generate_hash());
        let o = Overrides {
            output_dir: Some("elsewhere".into()),
            jobs: Some(3),
            ..Default::default()
        };
        assert_eq!(a.clone().apply(&o).unwrap().report_hash(), a.report_hash());
    }
}
