//! Derivative, one-step RK4 and streamfunction-smoothness losses.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::model::{BatchState, BoundModel, Model};
use crate::physics::{rk4_step_from, State};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    pub deriv: f64,
    pub step: f64,
    /// `lambda_flow`, the weight of the mean squared Hessian norm.
    pub flow: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { deriv: 1.0, step: 1.0, flow: 1e-4 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.deriv, self.step, self.flow].iter().all(|w| *w >= 0.0 && w.is_finite()) {
            Ok(())
        } else {
            Err(Error::config(format!("loss weights must be finite and >= 0: {self:?}")))
        }
    }
}

/// Loss values. `l_smooth` already includes `lambda_flow`; `total` is
/// `w_deriv * l_deriv + w_step * l_step + l_smooth`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_deriv: f64,
    pub l_step: f64,
    pub l_smooth: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        [self.l_deriv, self.l_step, self.l_smooth, self.total].iter().all(|v| v.is_finite())
    }

    /// Weighted mean of breakdowns, weights being batch sizes.
    pub fn weighted_mean(parts: &[(LossBreakdown, usize)]) -> LossBreakdown {
        let n: usize = parts.iter().map(|p| p.1).sum();
        let mut out = LossBreakdown::default();
        for (b, k) in parts {
            let w = *k as f64 / n as f64;
            out.l_deriv += w * b.l_deriv;
            out.l_step += w * b.l_step;
            out.l_smooth += w * b.l_smooth;
            out.total += w * b.total;
        }
        out
    }
}

/// One training example: a sample, its exact derivative label and the next sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub trajectory: usize,
    pub t: f64,
    pub state: State,
    pub deriv: State,
    pub next: State,
}

/// Loss nodes for one minibatch, sharing the first RK4 stage between the
/// derivative and the step loss.
pub struct BatchLoss<'t> {
    pub l_deriv: Var<'t>,
    pub l_step: Var<'t>,
    pub l_smooth: Var<'t>,
    pub total: Var<'t>,
}

impl BatchLoss<'_> {
    pub fn breakdown(&self) -> LossBreakdown {
        LossBreakdown {
            l_deriv: self.l_deriv.scalar(),
            l_step: self.l_step.scalar(),
            l_smooth: self.l_smooth.scalar(),
            total: self.total.scalar(),
        }
    }
}

/// Builds all three losses for `batch` on `bound`'s tape. The smoothness
/// points are the batch positions.
pub fn batch_losses<'t>(
    bound: &BoundModel<'_, 't>,
    batch: &[Transition],
    dt: f64,
    weights: &LossWeights,
) -> Result<BatchLoss<'t>> {
    if batch.is_empty() {
        return Err(Error::Usage("empty minibatch".into()));
    }
    let tape = bound.tape;
    let states: Vec<State> = batch.iter().map(|b| b.state).collect();
    let s = BatchState::constant(tape, &states);
    let labels = BatchState::constant(tape, &batch.iter().map(|b| b.deriv).collect::<Vec<_>>());
    let next = BatchState::constant(tape, &batch.iter().map(|b| b.next).collect::<Vec<_>>());
    // f_theta(s, 0): the losses treat every sample as starting at t = 0.
    let times = vec![0.0; batch.len()];

    let want_hessian = weights.flow > 0.0;
    let (k1, stream) = bound.derivative(&s, &times, want_hessian)?;
    let l_deriv = k1.mse(&labels);

    let stage = |st: &BatchState<'t>, offset: f64| -> Result<BatchState<'t>> {
        let ts: Vec<f64> = times.iter().map(|t| t + offset).collect();
        Ok(bound.derivative(st, &ts, false)?.0)
    };
    let stepped = rk4_step_from(stage, &s, k1, 0.0, dt)?;
    let l_step = stepped.mse(&next);

    let l_smooth = match stream.and_then(|e| e.hessian_frobenius_sq()) {
        Some(h) => h.mean() * weights.flow,
        None => tape.constant_scalar(0.0),
    };
    let total = l_deriv * weights.deriv + l_step * weights.step + l_smooth;
    Ok(BatchLoss { l_deriv, l_step, l_smooth, total })
}

/// Evaluates the losses of `batch` without keeping the tape.
pub fn evaluate_losses(model: &Model, batch: &[Transition], dt: f64, weights: &LossWeights) -> Result<LossBreakdown> {
    let tape = Tape::new();
    let bound = model.bind(&tape)?;
    Ok(batch_losses(&bound, batch, dt, weights)?.breakdown())
}

/// Mean squared error of `f_theta(s, 0)` against the labels, over all four components.
pub fn loss_derivative(model: &Model, batch: &[Transition]) -> Result<f64> {
    let w = LossWeights { deriv: 1.0, step: 0.0, flow: 0.0 };
    Ok(evaluate_losses(model, batch, 1.0, &w)?.l_deriv)
}

/// Mean squared error of one RK4 step of size `dt` from `t = 0` against the next samples.
pub fn loss_step(model: &Model, batch: &[Transition], dt: f64) -> Result<f64> {
    let w = LossWeights { deriv: 0.0, step: 1.0, flow: 0.0 };
    Ok(evaluate_losses(model, batch, dt, &w)?.l_step)
}

/// `lambda_flow` times the mean of `|H psi|_F^2` over `points`.
pub fn loss_smooth(model: &Model, points: &[[f64; 2]], lambda_flow: f64) -> Result<f64> {
    if lambda_flow == 0.0 || points.is_empty() {
        return Ok(0.0);
    }
    let tape = Tape::new();
    let bound = model.bind(&tape)?;
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let flow = bound.flow(tape.constant_column(&xs), tape.constant_column(&ys), &vec![0.0; points.len()], true)?;
    Ok(match flow.stream.and_then(|e| e.hessian_frobenius_sq()) {
        Some(h) => lambda_flow * h.mean().scalar(),
        None => 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::model::{zero_weights, ModelDescriptor, PhysicalContext, Variant};
    use crate::physics::{make_scenario, Scenario, ScenarioConfig, ScenarioKind};

    fn scenario() -> Scenario {
        make_scenario(&ScenarioConfig::with_kind(ScenarioKind::SteadyVortex), 0).unwrap()
    }

    fn model(variant: Variant, sc: &Scenario) -> Model {
        let ctx = PhysicalContext { body: sc.body.clone(), fluid: sc.fluid };
        Model::new(ModelDescriptor::for_variant(variant, 3), ctx).unwrap()
    }

    fn plug_in(sc: &Scenario) -> Model {
        let mut m = model(Variant::Fhnn, sc);
        m.flow_override = Some(sc.flow.clone());
        m.set_constant_coefficients(sc.coefficients.at(0.0)).unwrap();
        m
    }

    fn transitions(sc: &Scenario) -> Vec<Transition> {
        let dt = 0.05;
        [State::new(1.0, 0.5, 0.1, 0.0), State::new(-2.0, 1.0, 0.0, -0.3), State::new(0.3, -3.0, 0.2, 0.2)]
            .iter()
            .map(|&s| {
                let traj = crate::physics::simulate(sc, s, dt, dt / 10.0, 10).unwrap();
                Transition { trajectory: 0, t: 0.0, state: s, deriv: sc.derivative(&s, 0.0).unwrap(), next: traj.states[1] }
            })
            .collect()
    }

    #[test]
    fn plug_in_truth_losses_vanish() {
        let sc = scenario();
        let m = plug_in(&sc);
        let batch = transitions(&sc);
        assert!(loss_derivative(&m, &batch).unwrap() < 1e-12);
        assert!(loss_step(&m, &batch, 0.05).unwrap() < 1e-10);
    }

    #[test]
    fn duplicated_batch_keeps_mean() {
        let sc = scenario();
        let m = model(Variant::Fhnn, &sc);
        let batch = transitions(&sc);
        let doubled: Vec<_> = batch.iter().chain(&batch).copied().collect();
        let a = loss_derivative(&m, &batch).unwrap();
        let b = loss_derivative(&m, &doubled).unwrap();
        assert!((a - b).abs() < 1e-14 * a.max(1.0));
    }

    #[test]
    fn zero_field_step_loss() {
        let sc = scenario();
        let mut m = model(Variant::NeuralOde, &sc);
        zero_weights(&mut m.params);
        // with zero velocity rows, f = 0 and the RK4 step is the identity
        let batch: Vec<Transition> = transitions(&sc)
            .into_iter()
            .map(|mut b| {
                b.state.vx = 0.0;
                b.state.vy = 0.0;
                b
            })
            .collect();
        let want: f64 = batch
            .iter()
            .map(|b| {
                let (a, c) = (b.state.to_array(), b.next.to_array());
                (0..4).map(|i| (a[i] - c[i]).powi(2)).sum::<f64>() / 4.0
            })
            .sum::<f64>()
            / batch.len() as f64;
        assert!((loss_step(&m, &batch, 0.05).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn smoothness_examples() {
        let sc = scenario();
        let mut m = model(Variant::Fhnn, &sc);
        let pts = [[0.5, 0.5], [1.0, -2.0]];
        assert_eq!(loss_smooth(&m, &pts, 0.0).unwrap(), 0.0);
        for (name, v) in m.params.iter().map(|(n, v)| (n.to_string(), v.clone())).collect::<Vec<_>>() {
            if name.starts_with("stream") {
                *m.params.get_mut(&name).unwrap() = Tensor::zeros(v.raw_dim());
            }
        }
        assert_eq!(loss_smooth(&m, &pts, 1.0).unwrap(), 0.0);
    }

    /// `psi = 2 (s(x) + s(-x) + s(y) + s(-y))` with `s` = softplus matches
    /// `(x^2 + y^2) / 2` to second order at the origin: `s'' (0) = 1/4`, so
    /// `H = I` there and `|H|_F^2 = 2`.
    #[test]
    fn quadratic_stream_has_frobenius_two() {
        let sc = scenario();
        let mut desc = ModelDescriptor::for_variant(Variant::Fhnn, 0);
        desc.stream_hidden = vec![4];
        desc.activation = crate::autodiff::Activation::Softplus;
        let ctx = PhysicalContext { body: sc.body.clone(), fluid: sc.fluid };
        let mut m = Model::new(desc, ctx).unwrap();
        *m.params.get_mut("stream.0.weight").unwrap() = ndarray::array![[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]];
        *m.params.get_mut("stream.0.bias").unwrap() = Tensor::zeros((1, 4));
        *m.params.get_mut("stream.1.weight").unwrap() = ndarray::array![[2.0], [2.0], [2.0], [2.0]];
        let l = loss_smooth(&m, &[[0.0, 0.0]], 1.0).unwrap();
        assert!((l - 2.0).abs() < 1e-12, "{l}");
    }
}
