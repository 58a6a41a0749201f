//! Learned-vs-true flow field comparison on a grid.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{LearnedFlow, Model};
use crate::physics::{make_scenario, numerical_divergence, FlowField, FlowFieldProvider, Manifest};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub n: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { x_min: -4.0, x_max: 4.0, y_min: -4.0, y_max: 4.0, n: 20 }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.x_max > self.x_min) || !(self.y_max > self.y_min) {
            return Err(Error::config(format!("invalid grid {self:?}")));
        }
        Ok(())
    }

    /// Cell-centred points, row-major in `y`.
    pub fn points(&self) -> Vec<[f64; 2]> {
        let n = self.n as f64;
        let dx = (self.x_max - self.x_min) / n;
        let dy = (self.y_max - self.y_min) / n;
        let mut pts = Vec::with_capacity(self.n * self.n);
        for j in 0..self.n {
            for i in 0..self.n {
                pts.push([self.x_min + (i as f64 + 0.5) * dx, self.y_min + (j as f64 + 0.5) * dy]);
            }
        }
        pts
    }
}

/// `"x_min:x_max:n"` (square grid).
impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::config(format!("--grid expects `min:max:n`, got `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].parse().map_err(|_| bad())?;
        let n: usize = parts[2].parse().map_err(|_| bad())?;
        let g = GridSpec { x_min: lo, x_max: hi, y_min: lo, y_max: hi, n };
        g.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowPoint {
    pub x: f64,
    pub y: f64,
    pub u_true: f64,
    pub v_true: f64,
    pub u_learned: f64,
    pub v_learned: f64,
    /// `| |u_learned| - |u_true| | / |u_true|`
    pub speed_rel_error: f64,
    pub angle_error_deg: f64,
    pub divergence: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub annulus: (f64, f64),
    pub n_annulus: usize,
    pub median_angle_error_deg: f64,
    pub median_speed_rel_error: f64,
    pub max_abs_divergence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowGrid {
    pub grid: GridSpec,
    pub points: Vec<FlowPoint>,
    pub summary: FlowSummary,
}

impl FlowGrid {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for p in &self.points {
            w.serialize(p)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// The analytic field a learned flow is compared against: the steady part
/// of the scenario's flow at `t = 0`.
pub fn reference_flow(manifest: &Manifest) -> Result<FlowField> {
    let flow = make_scenario(&manifest.scenario, manifest.seed)?.flow;
    match flow {
        FlowField::Still => Err(Error::config(format!(
            "scenario `{}` has no ambient flow to compare against",
            manifest.scenario.kind
        ))),
        FlowField::Perturbed { base, .. } => Ok(*base),
        other => Ok(other),
    }
}

/// Compares the learned `u = (-psi_y, psi_x)` with the true field on `grid`.
/// Summary statistics cover the points inside the training annulus.
pub fn export_flow_grid(model: &Model, manifest: &Manifest, grid: &GridSpec) -> Result<FlowGrid> {
    grid.validate()?;
    if !model.variant().has_flow() {
        return Err(Error::config(format!(
            "variant `{}` has no streamfunction network, so there is no learned flow field to export",
            model.variant()
        )));
    }
    let truth = reference_flow(manifest)?;
    let pts = grid.points();
    let learned = model.flow_velocities(&pts, 0.0)?;
    let provider = LearnedFlow(model);
    let h = 1e-4;
    let (r_lo, r_hi) = manifest.annulus();
    let mut points = Vec::with_capacity(pts.len());
    let (mut angles, mut speeds) = (Vec::new(), Vec::new());
    let mut max_div: f64 = 0.0;
    for (p, ul) in pts.iter().zip(&learned) {
        let ut = truth.velocity(p[0], p[1], 0.0);
        let st = ut[0].hypot(ut[1]);
        let sl = ul[0].hypot(ul[1]);
        let speed_rel_error = if st > 0.0 { (sl - st).abs() / st } else { f64::NAN };
        let angle_error_deg = if st > 0.0 && sl > 0.0 {
            let cross = ut[0] * ul[1] - ut[1] * ul[0];
            let dot = ut[0] * ul[0] + ut[1] * ul[1];
            cross.atan2(dot).abs().to_degrees()
        } else {
            f64::NAN
        };
        let divergence = numerical_divergence(&provider, p[0], p[1], 0.0, h);
        max_div = max_div.max(divergence.abs());
        let r = p[0].hypot(p[1]);
        if (r_lo..=r_hi).contains(&r) && st > 0.0 {
            angles.push(angle_error_deg);
            speeds.push(speed_rel_error);
        }
        points.push(FlowPoint {
            x: p[0],
            y: p[1],
            u_true: ut[0],
            v_true: ut[1],
            u_learned: ul[0],
            v_learned: ul[1],
            speed_rel_error,
            angle_error_deg,
            divergence,
        });
    }
    let summary = FlowSummary {
        annulus: (r_lo, r_hi),
        n_annulus: angles.len(),
        median_angle_error_deg: median(angles),
        median_speed_rel_error: median(speeds),
        max_abs_divergence: max_div,
    };
    Ok(FlowGrid { grid: *grid, points, summary })
}
