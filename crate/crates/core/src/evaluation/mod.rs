//! Rollout metrics, flow-field recovery, parameter recovery and the
//! table-style suite reports built from them.

mod flow;
mod metrics;
mod params;

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use flow::{export_flow_grid, reference_flow, FlowGrid, FlowPoint, FlowSummary, GridSpec};
pub use metrics::{
    evaluate_rollouts, trajectory_metrics, truth_at, EvalConfig, EvalReport, HorizonMetrics, Metrics, TrajectoryEval,
};
pub use params::{default_probes, parameter_report, CoefficientSummary, ParameterReport, Probe};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// FHNN against the Neural ODE baseline at short horizons.
    VsNode,
    /// FHNN at long horizons with regenerated ground truth.
    LongHorizon,
    /// FHNN trained and evaluated on every scenario.
    Scenarios,
    /// Structural ablations under identical data and training.
    Ablation,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 4] = [SuiteKind::VsNode, SuiteKind::LongHorizon, SuiteKind::Scenarios, SuiteKind::Ablation];

    pub fn as_str(self) -> &'static str {
        match self {
            SuiteKind::VsNode => "vs_node",
            SuiteKind::LongHorizon => "long_horizon",
            SuiteKind::Scenarios => "scenarios",
            SuiteKind::Ablation => "ablation",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            SuiteKind::VsNode => "FHNN vs Neural ODE",
            SuiteKind::LongHorizon => "Long-horizon evaluation of FHNN",
            SuiteKind::Scenarios => "FHNN across flow scenarios",
            SuiteKind::Ablation => "Ablation study of FHNN variants",
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SuiteKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown suite `{s}` (expected vs_node, long_horizon, scenarios or ablation)")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteRow {
    pub model: String,
    pub scenario: String,
    pub horizon: f64,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub n_diverged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub kind: SuiteKind,
    pub eps: f64,
    pub rows: Vec<SuiteRow>,
}

const COLUMNS: [&str; 10] =
    ["model", "scenario", "horizon", "rmse_pos", "rmse_vel", "ade_pos", "fde_pos", "mse", "within_eps_ratio", "n_diverged"];

impl SuiteReport {
    pub fn new(kind: SuiteKind, eps: f64) -> Self {
        Self { kind, eps, rows: Vec::new() }
    }

    /// Appends every aggregate horizon of `report` under `model`.
    pub fn push_report(&mut self, model: &str, report: &EvalReport) {
        for h in &report.aggregate {
            self.rows.push(SuiteRow {
                model: model.to_string(),
                scenario: report.scenario.clone(),
                horizon: h.horizon,
                metrics: h.metrics,
                n_diverged: h.n_diverged,
            });
        }
    }

    pub fn row(&self, model: &str, scenario: &str, horizon: f64) -> Option<&SuiteRow> {
        self.rows.iter().find(|r| r.model == model && r.scenario == scenario && (r.horizon - horizon).abs() < 1e-9)
    }

    fn cells(row: &SuiteRow) -> [String; 10] {
        let m = &row.metrics;
        let e = |v: f64| format!("{v:.3e}");
        [
            row.model.clone(),
            row.scenario.clone(),
            format!("{}", row.horizon),
            e(m.rmse_pos),
            e(m.rmse_vel),
            e(m.ade_pos),
            e(m.fde_pos),
            e(m.mse),
            format!("{:.3}", m.within_eps_ratio),
            row.n_diverged.to_string(),
        ]
    }

    /// The table as CSV with space-padded columns.
    pub fn to_table(&self) -> String {
        let body: Vec<[String; 10]> = self.rows.iter().map(Self::cells).collect();
        let mut widths = COLUMNS.map(str::len);
        for r in &body {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        let mut line = |cells: &[String]| {
            let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", padded.join(", "));
        };
        line(&COLUMNS.map(String::from));
        for r in &body {
            line(r);
        }
        out
    }

    /// Long-form error-vs-horizon data, one row per (model, scenario, horizon).
    pub fn write_plot_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            let m = &r.metrics;
            let num = [r.horizon, m.rmse_pos, m.rmse_vel, m.ade_pos, m.fde_pos, m.mse, m.within_eps_ratio].map(|v| v.to_string());
            w.write_record([&r.model, &r.scenario].into_iter().cloned().chain(num).chain([r.n_diverged.to_string()]))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes `<stem>.json`, `<stem>.csv` (aligned table) and
    /// `<stem>_plot.csv` into `dir`.
    pub fn write_all(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join(format!("{stem}.json"));
        std::fs::write(&json, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(&json, e))?;
        let table = dir.join(format!("{stem}.csv"));
        std::fs::write(&table, self.to_table()).map_err(|e| Error::io(&table, e))?;
        self.write_plot_csv(&dir.join(format!("{stem}_plot.csv")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn metrics(v: f64) -> Metrics {
        Metrics { rmse_pos: v, rmse_vel: v, ade_pos: v, fde_pos: v, mse: v * v, within_eps_ratio: 1.0 }
    }

    #[test]
    fn suite_kind_round_trip() {
        for k in SuiteKind::ALL {
            assert_eq!(k.as_str().parse::<SuiteKind>().unwrap(), k);
        }
        assert!("table9".parse::<SuiteKind>().is_err());
    }

    #[test]
    fn table_is_aligned_and_complete() {
        let mut r = SuiteReport::new(SuiteKind::VsNode, 0.05);
        for (model, v) in [("fhnn", 1e-3), ("neural_ode", f64::INFINITY)] {
            r.rows.push(SuiteRow {
                model: model.into(),
                scenario: "steady_vortex".into(),
                horizon: 4.0,
                metrics: metrics(v),
                n_diverged: 0,
            });
        }
        let t = r.to_table();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.len() == lines[0].len()));
        assert!(lines[2].contains("inf"));
        assert!(r.row("fhnn", "steady_vortex", 4.0).is_some());
    }
}
