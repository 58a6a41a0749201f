//! Trajectory error metrics and rollout evaluation over the test split.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{integer_checkpoints, rollout_model, Model};
use crate::physics::{simulate, Dataset, State, Trajectory};

/// Errors of one rollout against the truth, over the checkpoints up to a horizon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Root mean square over checkpoints and the two position components [m].
    pub rmse_pos: f64,
    /// Same over the velocity components [m/s].
    pub rmse_vel: f64,
    /// Mean Euclidean position error [m].
    pub ade_pos: f64,
    /// Euclidean position error at the horizon [m].
    pub fde_pos: f64,
    /// `rmse_pos^2` [m^2].
    pub mse: f64,
    /// Fraction of checkpoints with position error below `eps`.
    pub within_eps_ratio: f64,
}

impl Metrics {
    pub fn diverged(within_eps_ratio: f64) -> Self {
        let inf = f64::INFINITY;
        Self { rmse_pos: inf, rmse_vel: inf, ade_pos: inf, fde_pos: inf, mse: inf, within_eps_ratio }
    }

    pub fn is_finite(&self) -> bool {
        [self.rmse_pos, self.rmse_vel, self.ade_pos, self.fde_pos, self.mse].iter().all(|v| v.is_finite())
    }

    /// Elementwise mean; any infinite entry makes the mean infinite.
    pub fn mean(items: &[Metrics]) -> Metrics {
        let n = items.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Metrics {
            rmse_pos: avg(|m| m.rmse_pos),
            rmse_vel: avg(|m| m.rmse_vel),
            ade_pos: avg(|m| m.ade_pos),
            fde_pos: avg(|m| m.fde_pos),
            mse: avg(|m| m.mse),
            within_eps_ratio: avg(|m| m.within_eps_ratio),
        }
    }
}

/// Metrics of `pred` against `truth`, both sampled at the same checkpoints
/// (the last one being the horizon). A shorter `pred` means the rollout
/// diverged: errors are infinite and missing checkpoints count as misses.
pub fn trajectory_metrics(pred: &[State], truth: &[State], eps: f64) -> Metrics {
    let n = truth.len();
    assert!(n > 0, "metrics need at least one checkpoint");
    let hits = |k: usize| {
        pred[..k].iter().zip(truth).filter(|(p, t)| (p.x - t.x).hypot(p.y - t.y) < eps).count() as f64 / n as f64
    };
    if pred.len() < n {
        return Metrics::diverged(hits(pred.len()));
    }
    let (mut sp, mut sv, mut ade) = (0.0, 0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        let (dx, dy) = (p.x - t.x, p.y - t.y);
        sp += dx * dx + dy * dy;
        sv += (p.vx - t.vx).powi(2) + (p.vy - t.vy).powi(2);
        ade += dx.hypot(dy);
    }
    let rmse_pos = (sp / (2.0 * n as f64)).sqrt();
    let last = (pred[n - 1], truth[n - 1]);
    Metrics {
        rmse_pos,
        rmse_vel: (sv / (2.0 * n as f64)).sqrt(),
        ade_pos: ade / n as f64,
        fde_pos: (last.0.x - last.1.x).hypot(last.0.y - last.1.y),
        mse: rmse_pos * rmse_pos,
        within_eps_ratio: hits(n),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Within-threshold for the position error [m].
    pub eps: f64,
    /// RK4 step of learned-model rollouts [s].
    pub rollout_step: f64,
    /// RK4 step of regenerated long-horizon ground truth [s].
    pub truth_step: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { eps: 0.05, rollout_step: 0.01, truth_step: 0.005 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonMetrics {
    pub horizon: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub n_diverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEval {
    pub id: usize,
    pub diverged_at: Option<f64>,
    pub horizons: Vec<HorizonMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: String,
    pub scenario: String,
    pub eps: f64,
    /// Means over the test trajectories, one entry per horizon.
    pub aggregate: Vec<HorizonMetrics>,
    pub trajectories: Vec<TrajectoryEval>,
}

impl EvalReport {
    pub fn at(&self, horizon: f64) -> Option<&Metrics> {
        self.aggregate.iter().find(|h| (h.horizon - horizon).abs() < 1e-9).map(|h| &h.metrics)
    }
}

/// Ground truth at `checkpoints`: from the stored samples when they cover
/// the horizon, otherwise regenerated from the manifest at `truth_step`.
pub fn truth_at(dataset: &Dataset, traj: &Trajectory, checkpoints: &[f64], truth_step: f64) -> Result<Vec<State>> {
    let horizon = checkpoints.iter().copied().fold(0.0, f64::max);
    let stored: Option<Vec<State>> =
        checkpoints.iter().map(|&c| traj.index_at(c).map(|k| traj.states[k])).collect();
    if let Some(states) = stored {
        return Ok(states);
    }
    let scenario = dataset.manifest.scenario_for(traj.seed)?;
    let n = (horizon / truth_step).round();
    let fine = simulate(&scenario, traj.initial(), n * truth_step, truth_step, 1)?;
    checkpoints
        .iter()
        .map(|&c| {
            fine.index_at(c)
                .map(|k| fine.states[k])
                .ok_or_else(|| Error::config(format!("checkpoint {c} s is not a multiple of truth_step {truth_step}")))
        })
        .collect()
}

/// Rolls the model out from every test trajectory's initial state and
/// compares at integer-second checkpoints up to each horizon.
pub fn evaluate_rollouts(model: &Model, dataset: &Dataset, horizons: &[f64], cfg: &EvalConfig) -> Result<EvalReport> {
    if horizons.is_empty() || horizons.iter().any(|h| !(*h > 0.0)) {
        return Err(Error::config("evaluation horizons must be a non-empty list of positive seconds"));
    }
    let t_max = horizons.iter().copied().fold(0.0, f64::max);
    let mut checkpoints = integer_checkpoints(t_max);
    checkpoints.extend(horizons.iter().copied());
    checkpoints.sort_by(f64::total_cmp);
    checkpoints.dedup_by(|a, b| (*a - *b).abs() < 1e-9);

    let test = dataset.test();
    let initial: Vec<State> = test.iter().map(|t| t.initial()).collect();
    let rollouts = rollout_model(model, &initial, t_max, cfg.rollout_step, &checkpoints)?;

    let mut trajectories = Vec::with_capacity(test.len());
    for (traj, ro) in test.iter().zip(&rollouts) {
        let truth = truth_at(dataset, traj, &checkpoints, cfg.truth_step)?;
        // drop the t = 0 sample the rollout always records
        let pred = &ro.states[1..];
        let per = horizons
            .iter()
            .map(|&h| {
                let k = checkpoints.iter().filter(|&&c| c <= h + 1e-9).count();
                let m = trajectory_metrics(&pred[..pred.len().min(k)], &truth[..k], cfg.eps);
                HorizonMetrics { horizon: h, n_diverged: usize::from(!m.is_finite()), metrics: m }
            })
            .collect();
        trajectories.push(TrajectoryEval { id: traj.id, diverged_at: ro.diverged_at, horizons: per });
    }
    let aggregate = horizons
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            let per: Vec<Metrics> = trajectories.iter().map(|t| t.horizons[i].metrics).collect();
            HorizonMetrics {
                horizon: h,
                metrics: Metrics::mean(&per),
                n_diverged: trajectories.iter().map(|t| t.horizons[i].n_diverged).sum(),
            }
        })
        .collect();
    Ok(EvalReport {
        variant: model.variant().to_string(),
        scenario: dataset.manifest.scenario.kind.to_string(),
        eps: cfg.eps,
        aggregate,
        trajectories,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(x: f64, y: f64) -> State {
        State::new(x, y, 0.0, 0.0)
    }

    #[test]
    fn frozen_rollout_fde_is_net_displacement() {
        let truth = [s(1.0, 0.0), s(2.0, 0.0), s(3.0, 4.0)];
        let frozen = [s(0.0, 0.0); 3];
        let m = trajectory_metrics(&frozen, &truth, 0.05);
        assert_eq!(m.fde_pos, 5.0);
        assert_eq!(m.within_eps_ratio, 0.0);
    }

    #[test]
    fn single_checkpoint_relations() {
        let m = trajectory_metrics(&[s(0.3, -0.4)], &[s(0.0, 0.0)], 1.0);
        assert!((m.ade_pos - 0.5).abs() < 1e-15);
        assert_eq!(m.ade_pos, m.fde_pos);
        assert!(m.rmse_pos * 2f64.sqrt() >= m.ade_pos - 1e-15);
        assert!((m.mse - m.rmse_pos.powi(2)).abs() < 1e-15);
        assert_eq!(m.within_eps_ratio, 1.0);
    }

    #[test]
    fn diverged_rollout_is_infinite() {
        let truth = [s(0.0, 0.0), s(0.0, 0.0)];
        let m = trajectory_metrics(&[s(0.0, 0.0)], &truth, 0.1);
        assert!(m.rmse_pos.is_infinite() && m.fde_pos.is_infinite());
        assert_eq!(m.within_eps_ratio, 0.5);
        let mean = Metrics::mean(&[m, trajectory_metrics(&truth, &truth, 0.1)]);
        assert!(mean.rmse_pos.is_infinite());
    }
}
