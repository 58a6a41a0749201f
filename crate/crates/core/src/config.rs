//! Declarative run configuration (TOML). Every default that the pipeline
//! relies on is a field here, so a frozen config fully describes a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, GridSpec};
use crate::model::{CapConfig, ModelDescriptor, Variant};
use crate::physics::{derive_seed, DatasetConfig, ScenarioConfig, ScenarioKind};
use crate::training::TrainConfig;

const MODEL_STREAM: u64 = 0x6d6f_6465_6c;
const TRAIN_STREAM: u64 = 0x7472_6169_6e;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub coeff_hidden: Vec<usize>,
    pub stream_hidden: Vec<usize>,
    pub node_hidden: Vec<usize>,
    pub activation: Activation,
    pub caps: CapConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let d = ModelDescriptor::for_variant(Variant::Fhnn, 0);
        Self {
            coeff_hidden: d.coeff_hidden,
            stream_hidden: d.stream_hidden,
            node_hidden: d.node_hidden,
            activation: d.activation,
            caps: d.caps,
        }
    }
}

impl ModelConfig {
    /// The architecture of `variant`: these widths, then the ablation rules.
    pub fn descriptor(&self, variant: Variant, seed: u64) -> ModelDescriptor {
        let mut d = ModelDescriptor {
            variant,
            coeff_hidden: self.coeff_hidden.clone(),
            stream_hidden: self.stream_hidden.clone(),
            node_hidden: self.node_hidden.clone(),
            activation: self.activation,
            caps: self.caps,
            tied_added_mass: false,
            seed,
        };
        d.apply_variant_rules();
        d
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Within-threshold for the position error [m].
    pub eps: f64,
    pub rollout_step: f64,
    /// RK4 step of regenerated ground truth beyond the stored samples [s].
    pub truth_step: f64,
    /// Horizons of `eval` and of the vs-NODE suite [s].
    pub horizons: Vec<f64>,
    /// Sparse horizons of the long-horizon suite [s].
    pub long_horizons: Vec<f64>,
    /// The long-horizon suite also reports every integer second up to this.
    pub long_dense_max: usize,
    pub scenario_horizon: f64,
    pub ablation_horizon: f64,
    /// Scenarios of the scenario suite.
    pub scenarios: Vec<ScenarioKind>,
    /// Variants of the ablation suite (the full model is always included).
    pub ablations: Vec<Variant>,
    pub grid: GridSpec,
    /// Every this-many-th test state is a parameter-report probe.
    pub probe_stride: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let e = EvalConfig::default();
        Self {
            eps: e.eps,
            rollout_step: e.rollout_step,
            truth_step: e.truth_step,
            horizons: vec![1.0, 2.0, 3.0, 4.0],
            long_horizons: vec![30.0, 60.0, 120.0],
            long_dense_max: 16,
            scenario_horizon: 5.0,
            ablation_horizon: 4.0,
            scenarios: ScenarioKind::ALL.to_vec(),
            ablations: Variant::ABLATIONS.to_vec(),
            grid: GridSpec::default(),
            probe_stride: 10,
        }
    }
}

impl EvaluationConfig {
    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { eps: self.eps, rollout_step: self.rollout_step, truth_step: self.truth_step }
    }

    /// Integer seconds up to `long_dense_max`, then the sparse horizons.
    pub fn long_horizon_list(&self) -> Vec<f64> {
        let mut h: Vec<f64> = (1..=self.long_dense_max).map(|k| k as f64).collect();
        h.extend(self.long_horizons.iter().copied());
        h.sort_by(f64::total_cmp);
        h.dedup();
        h
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0 && self.rollout_step > 0.0 && self.truth_step > 0.0) {
            return Err(Error::config("evaluation.eps, rollout_step and truth_step must be positive"));
        }
        let all = self.horizons.iter().chain(&self.long_horizons).chain([&self.scenario_horizon, &self.ablation_horizon]);
        if self.horizons.is_empty() || all.into_iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::config("evaluation horizons must be non-empty and positive"));
        }
        if self.ablations.iter().any(|v| !matches!(v, Variant::NoAddedMass | Variant::NoLinearDrag | Variant::NoFlowField | Variant::Shallow | Variant::Relu))
        {
            return Err(Error::config("evaluation.ablations may only list ablation variants"));
        }
        if self.probe_stride == 0 {
            return Err(Error::config("evaluation.probe_stride must be >= 1"));
        }
        self.grid.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonBound {
    pub horizon: f64,
    pub value: f64,
}

/// Checks that make `eval`, `flow` and `suite` exit non-zero when violated.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssertConfig {
    /// Upper bounds on the aggregate RMSE(pos) of `eval`.
    pub max_rmse_pos: Vec<HorizonBound>,
    /// Lower bounds on the aggregate within-eps ratio of `eval`.
    pub min_within_eps: Vec<HorizonBound>,
    pub max_flow_angle_deg: Option<f64>,
    pub max_flow_speed_rel: Option<f64>,
    pub max_flow_divergence: Option<f64>,
    /// vs-NODE suite: Neural ODE / FHNN error ratio required at every horizon.
    pub min_node_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub name: String,
    /// Global seed; dataset, initialisation and shuffling seeds derive from it.
    pub seed: u64,
    /// Parent directory of run directories.
    pub output_dir: PathBuf,
    /// Generate trajectories on the rayon pool (output is identical either way).
    pub parallel: bool,
    pub scenario: ScenarioConfig,
    pub dataset: DatasetConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub evaluation: EvaluationConfig,
    #[serde(rename = "assert")]
    pub checks: AssertConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 0,
            output_dir: PathBuf::from("runs"),
            parallel: true,
            scenario: ScenarioConfig::default(),
            dataset: DatasetConfig::default(),
            model: ModelConfig::default(),
            training: TrainConfig::default(),
            evaluation: EvaluationConfig::default(),
            checks: AssertConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) || self.name.starts_with('.') {
            return Err(Error::config("name must be a non-empty plain directory name"));
        }
        self.scenario.validate()?;
        self.dataset.validate()?;
        self.model.descriptor(Variant::Fhnn, 0).validate()?;
        self.training.validate()?;
        self.evaluation.validate()?;
        if (self.training.step_dt - self.dataset.dt_sample).abs() > 1e-12 {
            return Err(Error::config("training.step_dt must equal dataset.dt_sample"));
        }
        if self.training.n_val >= self.dataset.n_train {
            return Err(Error::config("training.n_val must be smaller than dataset.n_train"));
        }
        Ok(())
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.name)
    }

    /// The scenario block with its kind replaced.
    pub fn scenario_of(&self, kind: ScenarioKind) -> ScenarioConfig {
        ScenarioConfig { kind, ..self.scenario.clone() }
    }

    pub fn descriptor(&self, variant: Variant) -> ModelDescriptor {
        self.model.descriptor(variant, derive_seed(self.seed, MODEL_STREAM))
    }

    /// The training block with its shuffle seed derived from the global seed.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig { seed: derive_seed(self.seed, TRAIN_STREAM), ..self.training.clone() }
    }
}
