//! Pipeline configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stabscope_core::explain::pfi::Score;
use stabscope_core::explain::{Budget, ExplainerConfig, Method};
use stabscope_core::features::FeatureSchema;
use stabscope_core::intervention::Rule;
use stabscope_core::ml::select::LadderConfig;
use stabscope_core::network::{BusId, PowerNetwork};
use stabscope_core::scenario::ScenarioConfig;
use stabscope_core::study::StudyConfig;

use crate::error::{Error, Result};
use crate::io;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Case file, relative to the config file.
    pub case: PathBuf,
    /// Output directory, relative to the config file; `--out` overrides it.
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Master seed; every stage derives its own from it.
    #[serde(default)]
    pub seed: u64,
    pub scenarios: ScenarioConfig,
    pub study: StudyConfig,
    /// Branch indices whose flows become features; all branches when absent.
    #[serde(default)]
    pub monitored_branches: Option<Vec<usize>>,
    #[serde(default)]
    pub ladder: LadderConfig,
    #[serde(default)]
    pub explain: ExplainSettings,
    #[serde(default)]
    pub trends: TrendSettings,
    #[serde(default)]
    pub interventions: Vec<InterventionSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub method: Method,
    pub budget: Budget,
    /// Background rows drawn from the training partition; all of it when
    /// absent.
    pub background: Option<usize>,
    pub top_k: usize,
    pub dependence: Vec<DependenceSpec>,
    pub pfi_repeats: usize,
    pub pfi_score: Score,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            budget: Budget::Samples(2048),
            background: None,
            top_k: 20,
            dependence: Vec::new(),
            pfi_repeats: 5,
            pfi_score: Score::Rsq,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DependenceSpec {
    pub voi: String,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrendSettings {
    pub vois: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterventionSpec {
    pub rule: Rule,
    pub target_bus: BusId,
}

/// A parsed config with its network, ready to run.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub network: PowerNetwork,
    pub schema: FeatureSchema,
    /// SHA-256 of the case file bytes.
    pub case_hash: String,
    /// SHA-256 of the config with the case file folded in.
    pub config_hash: String,
    pub default_out: PathBuf,
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Loaded> {
        let config: PipelineConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base)
    }

    /// Loads the case relative to `base` and checks every cross-reference.
    pub fn resolve(self, base: &Path) -> Result<Loaded> {
        let case_path = base.join(&self.case);
        let case_bytes = io::read(&case_path)?;
        let network = crate::case::parse_case(&case_bytes, &case_path)?;
        let schema = FeatureSchema::for_network(&network, self.monitored_branches.as_deref())
            .map_err(|e| Error::Config(e.to_string()))?;
        self.validate(&network, &schema)?;
        let case_hash = io::sha256_hex(&case_bytes);
        let mut blob = io::to_json(&self);
        blob.extend_from_slice(case_hash.as_bytes());
        let config_hash = io::sha256_hex(&blob);
        let default_out = base.join(self.out.clone().unwrap_or_else(|| PathBuf::from("out")));
        Ok(Loaded { config: self, network, schema, case_hash, config_hash, default_out })
    }

    fn validate(&self, net: &PowerNetwork, schema: &FeatureSchema) -> Result<()> {
        let cfg = |e: stabscope_core::Error| Error::Config(e.to_string());
        self.scenarios.demand_levels().map_err(cfg)?;
        for m in &self.scenarios.displaceable {
            if net.machine_index(m).is_none() {
                return Err(Error::Config(format!("displaceable machine '{m}' is not in the case")));
            }
        }
        for (area, bus) in &self.scenarios.res_siting {
            if net.bus_index(*bus).is_none() {
                return Err(Error::Config(format!("RES siting for area {area} names unknown bus {bus}")));
            }
        }
        self.study.validate(net).map_err(cfg)?;
        self.ladder.validate().map_err(cfg)?;
        if !(self.ladder.theta > 0.0) {
            return Err(Error::Config(format!("theta must be positive, got {}", self.ladder.theta)));
        }
        let e = &self.explain;
        if e.budget == Budget::Samples(0) {
            return Err(Error::Config("coalition budget must be positive".into()));
        }
        ExplainerConfig { method: e.method, budget: e.budget, seed: 0 }.validate(schema.len()).map_err(cfg)?;
        if e.background == Some(0) {
            return Err(Error::Config("background size must be positive".into()));
        }
        if e.pfi_repeats == 0 {
            return Err(Error::Config("pfi_repeats must be at least 1".into()));
        }
        if e.top_k == 0 || e.top_k > schema.len() {
            return Err(Error::Config(format!("top_k must be in 1..={}, got {}", schema.len(), e.top_k)));
        }
        let names = e.dependence.iter().flat_map(|d| [&d.voi, &d.color]).chain(&self.trends.vois);
        for name in names {
            schema.index_of(name).map_err(cfg)?;
        }
        for spec in &self.interventions {
            spec.rule.validate(net).map_err(cfg)?;
            if !self.study.fault_buses.contains(&spec.target_bus) {
                return Err(Error::Config(format!(
                    "intervention target bus {} is not a configured fault bus",
                    spec.target_bus
                )));
            }
        }
        Ok(())
    }
}
