//! Learned vs true hydrodynamic coefficients on probe states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Model;
use crate::physics::{Dataset, State, COEFFICIENT_NAMES};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub learned_mean: f64,
    /// Standard deviation across probes; nonzero spread for a constant truth
    /// is the identifiability diagnostic.
    pub learned_std: f64,
    pub learned_min: f64,
    pub learned_max: f64,
    pub true_mean: f64,
    /// `|learned_mean - true_mean| / true_mean`
    pub rel_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub r: f64,
    pub sigma: f64,
    /// Outside the training annulus.
    pub extrapolated: bool,
    pub learned: [f64; 4],
    pub truth: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterReport {
    pub variant: String,
    pub scenario: String,
    pub annulus: (f64, f64),
    pub n_probes: usize,
    pub n_extrapolated: usize,
    pub coefficients: Vec<CoefficientSummary>,
    pub probes: Vec<Probe>,
}

/// Every `stride`-th state of the test trajectories.
pub fn default_probes(dataset: &Dataset, stride: usize) -> Vec<State> {
    dataset.test().iter().flat_map(|t| t.states.iter().step_by(stride.max(1)).copied()).collect()
}

/// Evaluates the coefficient network at `probes`, with `sigma` taken from the
/// model's own flow estimate, and compares with the generator's coefficients.
pub fn parameter_report(model: &Model, dataset: &Dataset, probes: &[State]) -> Result<ParameterReport> {
    if !model.variant().is_structured() {
        return Err(Error::config("the neural_ode variant has no hydrodynamic coefficients to report"));
    }
    if probes.is_empty() {
        return Err(Error::config("parameter report needs at least one probe state"));
    }
    let manifest = &dataset.manifest;
    let scenario = manifest.scenario_for(manifest.seed)?;
    let learned = model.coefficients(probes, 0.0)?;
    let points: Vec<[f64; 2]> = probes.iter().map(|s| [s.x, s.y]).collect();
    let flow = model.flow_velocities(&points, 0.0)?;
    let (r_lo, r_hi) = manifest.annulus();
    let eps = model.context.fluid.eps;

    let probes: Vec<Probe> = probes
        .iter()
        .zip(&learned)
        .zip(&flow)
        .map(|((s, c), u)| {
            let r = s.radius();
            Probe {
                r,
                sigma: (s.vx - u[0]).hypot(s.vy - u[1]) + eps,
                extrapolated: !(r_lo..=r_hi).contains(&r),
                learned: c.to_array(),
                truth: scenario.coefficients.at(r).to_array(),
            }
        })
        .collect();
    let n = probes.len() as f64;
    let coefficients = (0..4)
        .map(|j| {
            let vals: Vec<f64> = probes.iter().map(|p| p.learned[j]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let true_mean = probes.iter().map(|p| p.truth[j]).sum::<f64>() / n;
            CoefficientSummary {
                name: COEFFICIENT_NAMES[j].to_string(),
                learned_mean: mean,
                learned_std: var.sqrt(),
                learned_min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                learned_max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                true_mean,
                rel_error: if true_mean != 0.0 { (mean - true_mean).abs() / true_mean.abs() } else { mean.abs() },
            }
        })
        .collect();
    Ok(ParameterReport {
        variant: model.variant().to_string(),
        scenario: manifest.scenario.kind.to_string(),
        annulus: (r_lo, r_hi),
        n_probes: probes.len(),
        n_extrapolated: probes.iter().filter(|p| p.extrapolated).count(),
        coefficients,
        probes,
    })
}
