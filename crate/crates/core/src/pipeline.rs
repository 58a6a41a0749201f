//! Run-directory orchestration shared by the CLI and the acceptance suite.
//!
//! Layout of `<output_dir>/<name>/`:
//! `config.toml`, `dataset.jsonl`, `manifest.json`, `checkpoints/<variant>.json`,
//! `logs/<variant>.csv`, `reports/`; scenarios other than the configured one
//! live under `scenarios/<kind>/` with the same dataset/checkpoint/log layout.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::evaluation::{
    default_probes, evaluate_rollouts, export_flow_grid, parameter_report, EvalReport, FlowGrid, GridSpec, ParameterReport,
    SuiteKind, SuiteReport,
};
use crate::model::{CheckpointMeta, Model, PhysicalContext, Variant};
use crate::physics::{generate_dataset, Dataset, Manifest, ScenarioKind};
use crate::training::{train, write_log};

/// Exclusive claim on a run directory, released on drop.
#[derive(Debug)]
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(dir: &Path) -> Result<Self> {
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "run directory {} is locked by another process (delete {} if it is stale)",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// What `train` reports besides the checkpoint and log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub variant: Variant,
    pub scenario: ScenarioKind,
    pub epochs: usize,
    pub best_epoch: usize,
    pub first_total: f64,
    pub final_total: f64,
    pub best_val_total: f64,
}

impl TrainSummary {
    /// Training-loss reduction from the first to the last epoch.
    pub fn loss_reduction(&self) -> f64 {
        self.first_total / self.final_total
    }
}

pub struct Workspace {
    cfg: RunConfig,
    root: PathBuf,
    _lock: RunLock,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| Error::io(path, e))
}

impl Workspace {
    /// Validates `cfg`, creates and locks the run directory and freezes the
    /// resolved config into `config.toml`.
    pub fn open(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let root = cfg.run_dir();
        std::fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        let lock = RunLock::acquire(&root)?;
        let frozen = root.join("config.toml");
        std::fs::write(&frozen, cfg.to_toml()?).map_err(|e| Error::io(&frozen, e))?;
        Ok(Self { cfg, root, _lock: lock })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn main_scenario(&self) -> ScenarioKind {
        self.cfg.scenario.kind
    }

    fn scenario_dir(&self, kind: ScenarioKind) -> PathBuf {
        if kind == self.main_scenario() {
            self.root.clone()
        } else {
            self.root.join("scenarios").join(kind.as_str())
        }
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn checkpoint_path(&self, kind: ScenarioKind, variant: Variant) -> PathBuf {
        self.scenario_dir(kind).join("checkpoints").join(format!("{variant}.json"))
    }

    pub fn log_path(&self, kind: ScenarioKind, variant: Variant) -> PathBuf {
        self.scenario_dir(kind).join("logs").join(format!("{variant}.csv"))
    }

    fn manifest_for(&self, kind: ScenarioKind) -> Manifest {
        Manifest { seed: self.cfg.seed, scenario: self.cfg.scenario_of(kind), dataset: self.cfg.dataset.clone() }
    }

    fn train_command(&self, kind: ScenarioKind, variant: Variant) -> String {
        if kind == self.main_scenario() {
            format!("fhnn train --variant {variant}")
        } else {
            "fhnn suite scenarios --train-missing".into()
        }
    }

    pub fn has_dataset(&self, kind: ScenarioKind) -> bool {
        self.scenario_dir(kind).join("manifest.json").exists()
    }

    pub fn has_model(&self, kind: ScenarioKind, variant: Variant) -> bool {
        self.checkpoint_path(kind, variant).exists()
    }

    /// Generates and writes the dataset of scenario `kind`.
    pub fn generate(&self, kind: ScenarioKind) -> Result<Dataset> {
        let m = self.manifest_for(kind);
        let ds = generate_dataset(&m.scenario, &m.dataset, m.seed, self.cfg.parallel)?;
        ds.save(&self.scenario_dir(kind))?;
        Ok(ds)
    }

    /// Loads the dataset of `kind`, refusing one generated from another config.
    pub fn dataset(&self, kind: ScenarioKind) -> Result<Dataset> {
        let dir = self.scenario_dir(kind);
        let ds = Dataset::load(&dir).map_err(|e| match e {
            Error::MissingArtifact { path, .. } => {
                let producer = if kind == self.main_scenario() { "fhnn generate" } else { "fhnn suite scenarios --train-missing" };
                Error::MissingArtifact { path, producer: producer.into() }
            }
            other => other,
        })?;
        if ds.manifest != self.manifest_for(kind) {
            return Err(Error::config(format!(
                "the dataset in {} was generated from a different config; rerun `fhnn generate`",
                dir.display()
            )));
        }
        Ok(ds)
    }

    fn dataset_or_generate(&self, kind: ScenarioKind) -> Result<Dataset> {
        if self.has_dataset(kind) {
            self.dataset(kind)
        } else {
            self.generate(kind)
        }
    }

    /// Trains `variant` on scenario `kind`; writes the best-validation
    /// checkpoint, the epoch log and `reports/train_<variant>.json`. On
    /// divergence the last good weights go to `<variant>.last_good.json`.
    pub fn train(&self, kind: ScenarioKind, variant: Variant) -> Result<TrainSummary> {
        let ds = self.dataset(kind)?;
        let sc = ds.manifest.scenario_for(ds.manifest.seed)?;
        let model = Model::new(self.cfg.descriptor(variant), PhysicalContext { body: sc.body, fluid: sc.fluid })?;
        let ckpt = self.checkpoint_path(kind, variant);
        let ckpt_dir = ckpt.parent().expect("checkpoint path has a parent").to_path_buf();
        let cadence_dir = ckpt_dir.join(variant.as_str());
        let tcfg = self.cfg.train_config();
        let out = match train(model, &ds, &tcfg, (tcfg.checkpoint_every > 0).then_some(cadence_dir.as_path())) {
            Err(Error::Diverged { epoch, reason, last_good }) => {
                if let Some(good) = &last_good {
                    good.save(&ckpt_dir.join(format!("{variant}.last_good.json")))?;
                }
                return Err(Error::Diverged { epoch, reason, last_good });
            }
            other => other?,
        };
        let log = self.log_path(kind, variant);
        std::fs::create_dir_all(log.parent().expect("log path has a parent")).map_err(|e| Error::io(&log, e))?;
        write_log(&log, &out.log)?;
        let best = &out.log[out.best_epoch.max(1) - 1];
        let meta = CheckpointMeta { epoch: out.best_epoch, val_total: Some(best.val_total), train_total: Some(best.total) };
        out.best.to_checkpoint(meta).save(&ckpt)?;
        let summary = TrainSummary {
            variant,
            scenario: kind,
            epochs: out.log.len(),
            best_epoch: out.best_epoch,
            first_total: out.log[0].total,
            final_total: out.log[out.log.len() - 1].total,
            best_val_total: best.val_total,
        };
        write_json(&self.scenario_dir(kind).join("reports").join(format!("train_{variant}.json")), &summary)?;
        Ok(summary)
    }

    pub fn model(&self, kind: ScenarioKind, variant: Variant) -> Result<Model> {
        Model::load(&self.checkpoint_path(kind, variant), Some(variant)).map_err(|e| match e {
            Error::MissingArtifact { path, .. } => Error::MissingArtifact { path, producer: self.train_command(kind, variant) },
            other => other,
        })
    }

    /// Rollout evaluation on the configured scenario; writes `reports/eval_<variant>.json`.
    pub fn eval(&self, variant: Variant, horizons: &[f64]) -> Result<EvalReport> {
        let kind = self.main_scenario();
        let ds = self.dataset(kind)?;
        let model = self.model(kind, variant)?;
        let report = evaluate_rollouts(&model, &ds, horizons, &self.cfg.evaluation.eval_config())?;
        write_json(&self.reports_dir().join(format!("eval_{variant}.json")), &report)?;
        Ok(report)
    }

    /// Writes `reports/flow_<variant>.csv` and `reports/flow_<variant>.json` (summary).
    pub fn flow(&self, variant: Variant, grid: &GridSpec) -> Result<FlowGrid> {
        if !variant.has_flow() {
            return Err(Error::config(format!(
                "variant `{variant}` has no streamfunction network, so there is no learned flow field to export"
            )));
        }
        let kind = self.main_scenario();
        let ds = self.dataset(kind)?;
        let model = self.model(kind, variant)?;
        let fg = export_flow_grid(&model, &ds.manifest, grid)?;
        std::fs::create_dir_all(self.reports_dir()).map_err(|e| Error::io(self.reports_dir(), e))?;
        fg.write_csv(&self.reports_dir().join(format!("flow_{variant}.csv")))?;
        write_json(&self.reports_dir().join(format!("flow_{variant}.json")), &fg.summary)?;
        Ok(fg)
    }

    /// Writes `reports/params_<variant>.json`.
    pub fn params(&self, variant: Variant) -> Result<ParameterReport> {
        let kind = self.main_scenario();
        let ds = self.dataset(kind)?;
        let model = self.model(kind, variant)?;
        let probes = default_probes(&ds, self.cfg.evaluation.probe_stride);
        let report = parameter_report(&model, &ds, &probes)?;
        write_json(&self.reports_dir().join(format!("params_{variant}.json")), &report)?;
        Ok(report)
    }

    /// (scenario, variant) pairs a suite evaluates, in report order.
    pub fn suite_models(&self, kind: SuiteKind) -> Vec<(ScenarioKind, Variant)> {
        let main = self.main_scenario();
        match kind {
            SuiteKind::VsNode => vec![(main, Variant::Fhnn), (main, Variant::NeuralOde)],
            SuiteKind::LongHorizon => vec![(main, Variant::Fhnn)],
            SuiteKind::Scenarios => self.cfg.evaluation.scenarios.iter().map(|&k| (k, Variant::Fhnn)).collect(),
            SuiteKind::Ablation => std::iter::once(Variant::Fhnn)
                .chain(self.cfg.evaluation.ablations.iter().copied())
                .map(|v| (main, v))
                .collect(),
        }
    }

    /// Generates and trains whatever `kind` needs that is not on disk yet.
    /// Independent trainings run on the rayon pool when `parallel` is set;
    /// each is seeded on its own, so the result does not depend on it.
    pub fn prepare_suite(&self, kind: SuiteKind) -> Result<Vec<TrainSummary>> {
        let missing: Vec<(ScenarioKind, Variant)> =
            self.suite_models(kind).into_iter().filter(|&(k, v)| !self.has_model(k, v)).collect();
        for &(k, _) in &missing {
            self.dataset_or_generate(k)?;
        }
        if self.cfg.parallel {
            missing.par_iter().map(|&(k, v)| self.train(k, v)).collect()
        } else {
            missing.iter().map(|&(k, v)| self.train(k, v)).collect()
        }
    }

    /// Evaluates every model of the suite and writes
    /// `reports/suite_<kind>.{json,csv}` and `reports/suite_<kind>_plot.csv`.
    pub fn suite(&self, kind: SuiteKind) -> Result<SuiteReport> {
        let ev = &self.cfg.evaluation;
        let horizons = match kind {
            SuiteKind::VsNode => ev.horizons.clone(),
            SuiteKind::LongHorizon => ev.long_horizon_list(),
            SuiteKind::Scenarios => vec![ev.scenario_horizon],
            SuiteKind::Ablation => vec![ev.ablation_horizon],
        };
        let mut report = SuiteReport::new(kind, ev.eps);
        for (k, v) in self.suite_models(kind) {
            let ds = self.dataset(k)?;
            let model = self.model(k, v)?;
            let r = evaluate_rollouts(&model, &ds, &horizons, &ev.eval_config())?;
            report.push_report(v.as_str(), &r);
        }
        report.write_all(&self.reports_dir(), &format!("suite_{kind}"))?;
        Ok(report)
    }

    /// Violations of the `assert` block by an `eval` report.
    pub fn check_eval(&self, report: &EvalReport) -> Vec<String> {
        let mut fails = Vec::new();
        for b in &self.cfg.checks.max_rmse_pos {
            match report.at(b.horizon) {
                Some(m) if m.rmse_pos < b.value => {}
                Some(m) => fails.push(format!("RMSE(pos) at {} s = {:.3e} >= {:.3e}", b.horizon, m.rmse_pos, b.value)),
                None => fails.push(format!("horizon {} s was not evaluated", b.horizon)),
            }
        }
        for b in &self.cfg.checks.min_within_eps {
            match report.at(b.horizon) {
                Some(m) if m.within_eps_ratio >= b.value => {}
                Some(m) => fails.push(format!("within-eps ratio at {} s = {:.3} < {}", b.horizon, m.within_eps_ratio, b.value)),
                None => fails.push(format!("horizon {} s was not evaluated", b.horizon)),
            }
        }
        fails
    }

    pub fn check_flow(&self, fg: &FlowGrid) -> Vec<String> {
        let c = &self.cfg.checks;
        let s = &fg.summary;
        let mut fails = Vec::new();
        let mut bound = |name: &str, value: f64, max: Option<f64>| {
            if let Some(max) = max {
                if !(value < max) {
                    fails.push(format!("{name} = {value:.4e} >= {max:.4e}"));
                }
            }
        };
        bound("median angle error [deg]", s.median_angle_error_deg, c.max_flow_angle_deg);
        bound("median relative speed error", s.median_speed_rel_error, c.max_flow_speed_rel);
        bound("max |div u|", s.max_abs_divergence, c.max_flow_divergence);
        fails
    }

    /// `min_node_ratio`: the Neural ODE's RMSE(pos), RMSE(vel) and FDE must
    /// exceed FHNN's by this factor at every horizon of the vs-NODE suite.
    pub fn check_suite(&self, report: &SuiteReport) -> Vec<String> {
        let mut fails = Vec::new();
        let Some(ratio) = self.cfg.checks.min_node_ratio else { return fails };
        if report.kind != SuiteKind::VsNode {
            return fails;
        }
        let sc = self.main_scenario().as_str();
        for &h in &self.cfg.evaluation.horizons {
            let (Some(f), Some(n)) = (report.row("fhnn", sc, h), report.row("neural_ode", sc, h)) else {
                fails.push(format!("horizon {h} s missing from the suite"));
                continue;
            };
            for (name, a, b) in [
                ("RMSE(pos)", f.metrics.rmse_pos, n.metrics.rmse_pos),
                ("RMSE(vel)", f.metrics.rmse_vel, n.metrics.rmse_vel),
                ("FDE", f.metrics.fde_pos, n.metrics.fde_pos),
            ] {
                if !(b >= ratio * a) {
                    fails.push(format!("{name} at {h} s: neural_ode {b:.3e} < {ratio} x fhnn {a:.3e}"));
                }
            }
        }
        fails
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::DatasetConfig;

    fn tiny(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig { name: "t".into(), output_dir: dir.to_path_buf(), ..RunConfig::default() };
        cfg.dataset = DatasetConfig { n_train: 3, n_test: 2, duration: 1.0, ..DatasetConfig::default() };
        cfg.training.epochs = 2;
        cfg.training.batch_size = 8;
        cfg.training.n_val = 1;
        cfg.model.coeff_hidden = vec![4];
        cfg.model.stream_hidden = vec![4];
        cfg.model.node_hidden = vec![4];
        cfg.evaluation.horizons = vec![1.0];
        cfg
    }

    #[test]
    fn lock_excludes_a_second_writer() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tiny(tmp.path())).unwrap();
        assert!(Workspace::open(tiny(tmp.path())).is_err());
        drop(ws);
        Workspace::open(tiny(tmp.path())).unwrap();
    }

    #[test]
    fn missing_artifacts_name_their_producer() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tiny(tmp.path())).unwrap();
        let err = ws.dataset(ScenarioKind::SteadyVortex).unwrap_err();
        assert!(matches!(&err, Error::MissingArtifact { producer, .. } if producer == "fhnn generate"));
        ws.generate(ScenarioKind::SteadyVortex).unwrap();
        let err = ws.eval(Variant::Fhnn, &[1.0]).unwrap_err();
        assert!(matches!(&err, Error::MissingArtifact { producer, .. } if producer.contains("--variant fhnn")));
    }

    #[test]
    fn stale_dataset_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tiny(tmp.path())).unwrap();
        ws.generate(ScenarioKind::SteadyVortex).unwrap();
        drop(ws);
        let ws = Workspace::open(RunConfig { seed: 9, ..tiny(tmp.path()) }).unwrap();
        assert!(matches!(ws.dataset(ScenarioKind::SteadyVortex), Err(Error::Config(_))));
    }

    #[test]
    fn train_eval_flow_params_write_their_files() {
        let tmp = tempfile::tempdir().unwrap();
        let ws = Workspace::open(tiny(tmp.path())).unwrap();
        ws.generate(ScenarioKind::SteadyVortex).unwrap();
        let s = ws.train(ScenarioKind::SteadyVortex, Variant::Fhnn).unwrap();
        assert_eq!(s.epochs, 2);
        ws.eval(Variant::Fhnn, &[1.0]).unwrap();
        ws.flow(Variant::Fhnn, &GridSpec { n: 4, ..GridSpec::default() }).unwrap();
        ws.params(Variant::Fhnn).unwrap();
        let root = ws.root();
        for f in [
            "config.toml",
            "dataset.jsonl",
            "manifest.json",
            "checkpoints/fhnn.json",
            "logs/fhnn.csv",
            "reports/eval_fhnn.json",
            "reports/flow_fhnn.csv",
            "reports/params_fhnn.json",
            "reports/train_fhnn.json",
        ] {
            assert!(root.join(f).exists(), "{f}");
        }
        assert!(matches!(ws.flow(Variant::NoFlowField, &GridSpec::default()), Err(Error::Config(_))));
    }

    #[test]
    fn suite_trains_missing_scenario_models() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = tiny(tmp.path());
        cfg.evaluation.scenarios = vec![ScenarioKind::SteadyVortex, ScenarioKind::MorisonWave];
        cfg.evaluation.scenario_horizon = 1.0;
        let ws = Workspace::open(cfg).unwrap();
        assert!(ws.suite(SuiteKind::Scenarios).is_err());
        assert_eq!(ws.prepare_suite(SuiteKind::Scenarios).unwrap().len(), 2);
        let r = ws.suite(SuiteKind::Scenarios).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert!(ws.root().join("scenarios/morison_wave/checkpoints/fhnn.json").exists());
        assert!(ws.reports_dir().join("suite_scenarios_plot.csv").exists());
    }
}
