//! Batched RK4 rollouts of a learned model.

use serde::{Deserialize, Serialize};

use super::dynamics::Model;
use crate::error::{Error, Result};
use crate::physics::{rk4_step, OdeState, State};

/// Any state component above this magnitude counts as a blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

pub const DEFAULT_ROLLOUT_STEP: f64 = 0.01;

/// A rollout sampled at checkpoints. If it diverged, `states` stops at the
/// last checkpoint reached before the blow-up.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rollout {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub diverged_at: Option<f64>,
}

impl Rollout {
    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn state_at(&self, t: f64) -> Option<State> {
        self.times.iter().position(|&c| (c - t).abs() < 1e-9).map(|i| self.states[i])
    }
}

#[derive(Clone, Debug)]
struct Rows(Vec<State>);

impl OdeState for Rows {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        Rows(self.0.iter().zip(&k.0).map(|(s, k)| s.axpy(h, k)).collect())
    }

    fn all_finite(&self) -> bool {
        self.0.iter().all(State::is_finite)
    }
}

fn blown_up(s: &State) -> bool {
    s.to_array().iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_LIMIT)
}

/// Integer-second checkpoints `1, 2, .., floor(T)`, plus `T` itself.
pub fn integer_checkpoints(horizon: f64) -> Vec<f64> {
    let mut c: Vec<f64> = (1..=horizon.floor() as usize).map(|k| k as f64).collect();
    if c.last().is_none_or(|&l| (l - horizon).abs() > 1e-9) && horizon > 0.0 {
        c.push(horizon);
    }
    c
}

/// Rolls every initial state out to `horizon` with RK4 step `h`, all rows in
/// one batch, recording states at `checkpoints` (seconds, multiples of `h`).
/// `t = 0` is always recorded first.
pub fn rollout_model(model: &Model, initial: &[State], horizon: f64, h: f64, checkpoints: &[f64]) -> Result<Vec<Rollout>> {
    if !(h > 0.0) || !(horizon >= 0.0) {
        return Err(Error::config(format!("rollout needs h > 0 and T >= 0 (got h = {h}, T = {horizon})")));
    }
    let mut marks = Vec::with_capacity(checkpoints.len());
    for &c in checkpoints {
        let k = (c / h).round();
        if !(0.0..=horizon + 1e-9).contains(&c) || (k * h - c).abs() > 1e-9 {
            return Err(Error::config(format!("checkpoint {c} s is not a step multiple inside [0, {horizon}]")));
        }
        marks.push(k as usize);
    }
    let n_steps = (horizon / h).round() as usize;
    let mut out: Vec<Rollout> =
        initial.iter().map(|&s| Rollout { times: vec![0.0], states: vec![s], diverged_at: None }).collect();
    let mut diverged: Vec<bool> = initial.iter().map(blown_up).collect();
    for (r, &d) in out.iter_mut().zip(&diverged) {
        if d {
            r.diverged_at = Some(0.0);
        }
    }
    let mut s = Rows(initial.to_vec());
    for k in 0..n_steps {
        if diverged.iter().all(|&d| d) {
            break;
        }
        let t = k as f64 * h;
        let mut stage_bad = vec![false; s.0.len()];
        let next = rk4_step(
            |rows: &Rows, tt| {
                let mut d = model.derivatives(&rows.0, tt)?;
                for (i, di) in d.iter_mut().enumerate() {
                    if diverged[i] || blown_up(di) {
                        stage_bad[i] |= !diverged[i];
                        *di = State::default();
                    }
                }
                Ok(Rows(d))
            },
            &s,
            t,
            h,
        )?;
        s = next;
        let t_next = (k + 1) as f64 * h;
        for i in 0..s.0.len() {
            if diverged[i] {
                continue;
            }
            if stage_bad[i] || blown_up(&s.0[i]) {
                diverged[i] = true;
                out[i].diverged_at = Some(t_next);
                s.0[i] = State::default();
            }
        }
        for (j, &m) in marks.iter().enumerate() {
            if m == k + 1 {
                for i in 0..s.0.len() {
                    if !diverged[i] {
                        out[i].times.push(checkpoints[j]);
                        out[i].states.push(s.0[i]);
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ModelDescriptor, PhysicalContext, Variant};
    use crate::physics::{make_scenario, simulate, ScenarioConfig, ScenarioKind};

    fn plug_in(kind: ScenarioKind) -> (crate::physics::Scenario, Model) {
        let sc = make_scenario(&ScenarioConfig::with_kind(kind), 2).unwrap();
        let ctx = PhysicalContext { body: sc.body.clone(), fluid: sc.fluid };
        let mut m = Model::new(ModelDescriptor::for_variant(Variant::Fhnn, 0), ctx).unwrap();
        m.flow_override = Some(sc.flow.clone());
        m.set_constant_coefficients(sc.coefficients.at(0.0)).unwrap();
        (sc, m)
    }

    #[test]
    fn zero_horizon_is_initial_state() {
        let (_, m) = plug_in(ScenarioKind::SteadyVortex);
        let s0 = State::new(1.0, 2.0, 0.1, 0.0);
        let r = rollout_model(&m, &[s0], 0.0, 0.01, &[]).unwrap();
        assert_eq!(r[0].states, vec![s0]);
        assert_eq!(r[0].times, vec![0.0]);
    }

    #[test]
    fn plug_in_reproduces_truth() {
        let (sc, m) = plug_in(ScenarioKind::SteadyVortex);
        let s0 = State::new(1.5, -0.5, 0.2, 0.1);
        let r = rollout_model(&m, &[s0], 4.0, 0.01, &integer_checkpoints(4.0)).unwrap();
        let truth = simulate(&sc, s0, 4.0, 0.005, 200).unwrap();
        let a = r[0].state_at(4.0).unwrap();
        let b = *truth.states.last().unwrap();
        assert!((a.x - b.x).hypot(a.y - b.y) < 1e-4);
        assert_eq!(r[0].times, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn blow_up_is_flagged_and_truncated() {
        let (_, m) = plug_in(ScenarioKind::SteadyVortex);
        let bad = State::new(2e6, 0.0, 0.0, 0.0);
        let ok = State::new(1.0, 0.0, 0.0, 0.0);
        let r = rollout_model(&m, &[ok, bad], 1.0, 0.01, &[0.5, 1.0]).unwrap();
        assert!(!r[0].diverged());
        assert_eq!(r[0].times.len(), 3);
        assert_eq!(r[1].diverged_at, Some(0.0));
        assert_eq!(r[1].states.len(), 1);
    }

    #[test]
    fn checkpoints_validated() {
        let (_, m) = plug_in(ScenarioKind::SteadyVortex);
        let s0 = [State::default()];
        assert!(rollout_model(&m, &s0, 1.0, 0.01, &[2.0]).is_err());
        assert!(rollout_model(&m, &s0, 1.0, 0.01, &[0.005]).is_err());
        assert_eq!(integer_checkpoints(4.0), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(integer_checkpoints(2.5), vec![1.0, 2.0, 2.5]);
    }
}
