//! Synthetic trajectory datasets with trajectory-level train/test splits.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::integrate::{integrate, Split, State, Trajectory};
use super::scenario::{make_scenario, Scenario, ScenarioConfig};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub n_train: usize,
    pub n_test: usize,
    /// Trajectory length T [s].
    pub duration: f64,
    pub dt_sample: f64,
    /// Ground-truth RK4 steps per sample interval.
    pub substeps: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub speed_max: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            n_train: 64,
            n_test: 10,
            duration: 8.0,
            dt_sample: 0.05,
            substeps: 10,
            r_min: 0.5,
            r_max: 4.0,
            speed_max: 0.5,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_train == 0 || self.n_test == 0 {
            return Err(Error::config("dataset.n_train and dataset.n_test must be >= 1"));
        }
        if !(self.duration > 0.0 && self.dt_sample > 0.0) || self.substeps == 0 {
            return Err(Error::config("dataset.duration, dt_sample and substeps must be positive"));
        }
        let n = self.duration / self.dt_sample;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::config("dataset.dt_sample must divide dataset.duration"));
        }
        if !(self.r_min >= 0.0 && self.r_max > self.r_min && self.speed_max >= 0.0) {
            return Err(Error::config("dataset annulus needs 0 <= r_min < r_max and speed_max >= 0"));
        }
        Ok(())
    }

    pub fn samples_per_trajectory(&self) -> usize {
        (self.duration / self.dt_sample).round() as usize + 1
    }

    pub fn truth_step(&self) -> f64 {
        self.dt_sample / self.substeps as f64
    }
}

/// Sidecar metadata: everything needed to rebuild the ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub dataset: DatasetConfig,
}

impl Manifest {
    /// Ground-truth system for one trajectory.
    pub fn scenario_for(&self, trajectory_seed: u64) -> Result<Scenario> {
        make_scenario(&self.scenario, derive_seed(trajectory_seed, NOISE_STREAM))
    }

    /// Effective start annulus, after obstacle clearance.
    pub fn annulus(&self) -> (f64, f64) {
        (self.dataset.r_min.max(self.scenario.min_start_radius()), self.dataset.r_max)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub manifest: Manifest,
    pub trajectories: Vec<Trajectory>,
}

const NOISE_STREAM: u64 = 0x6e6f_6973_65;

/// Mixes a base seed with a stream index (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `r` uniformly in the annulus, the angle uniformly, and the speed
/// uniformly in `[0, speed_max]` with a uniform direction.
pub fn sample_initial_state(rng: &mut impl Rng, r_min: f64, r_max: f64, speed_max: f64) -> State {
    let r = rng.random_range(r_min..=r_max);
    let th = rng.random_range(0.0..2.0 * PI);
    let speed = rng.random_range(0.0..=speed_max);
    let dir = rng.random_range(0.0..2.0 * PI);
    State::new(r * th.cos(), r * th.sin(), speed * dir.cos(), speed * dir.sin())
}

/// Simulates `scenario` from `s0` over `[0, horizon]` at RK4 step `h`,
/// keeping every `sample_every`-th state.
pub fn simulate(scenario: &Scenario, s0: State, horizon: f64, h: f64, sample_every: usize) -> Result<Trajectory> {
    integrate(|s, t| scenario.derivative(s, t), s0, 0.0, horizon, h, sample_every)
}

fn generate_one(manifest: &Manifest, id: usize) -> Result<Trajectory> {
    let cfg = &manifest.dataset;
    let seed = derive_seed(manifest.seed, id as u64);
    let scenario = manifest.scenario_for(seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r_min, r_max) = manifest.annulus();
    let s0 = sample_initial_state(&mut rng, r_min, r_max, cfg.speed_max);
    let mut traj = simulate(&scenario, s0, cfg.duration, cfg.truth_step(), cfg.substeps)?;
    traj.derivs = traj
        .states
        .iter()
        .zip(&traj.times)
        .map(|(s, &t)| scenario.derivative(s, t))
        .collect::<Result<_>>()?;
    traj.id = id;
    traj.scenario = manifest.scenario.kind.to_string();
    traj.seed = seed;
    traj.split = if id < cfg.n_train { Split::Train } else { Split::Test };
    traj.dt = cfg.dt_sample;
    Ok(traj)
}

/// Generates `n_train + n_test` trajectories. Trajectory `i` depends only on
/// `(seed, i)`, so parallel and serial generation give identical output.
pub fn generate_dataset(scenario: &ScenarioConfig, dataset: &DatasetConfig, seed: u64, parallel: bool) -> Result<Dataset> {
    scenario.validate()?;
    dataset.validate()?;
    let manifest = Manifest { seed, scenario: scenario.clone(), dataset: dataset.clone() };
    let n = dataset.n_train + dataset.n_test;
    let trajectories = if parallel {
        (0..n).into_par_iter().map(|i| generate_one(&manifest, i)).collect::<Result<Vec<_>>>()?
    } else {
        (0..n).map(|i| generate_one(&manifest, i)).collect::<Result<Vec<_>>>()?
    };
    Ok(Dataset { manifest, trajectories })
}

impl Dataset {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &Trajectory> {
        self.trajectories.iter().filter(move |t| t.split == split)
    }

    pub fn train(&self) -> Vec<&Trajectory> {
        self.split(Split::Train).collect()
    }

    pub fn test(&self) -> Vec<&Trajectory> {
        self.split(Split::Test).collect()
    }

    /// One JSON record per line.
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for t in &self.trajectories {
            serde_json::to_writer(&mut w, t)?;
            w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path, manifest: Manifest) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut trajectories = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            trajectories.push(serde_json::from_str::<Trajectory>(&line)?);
        }
        Ok(Self { manifest, trajectories })
    }

    /// Writes `dataset.jsonl` and `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.write_jsonl(&dir.join("dataset.jsonl"))?;
        self.manifest.write(&dir.join("manifest.json"))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let data = dir.join("dataset.jsonl");
        let manifest = dir.join("manifest.json");
        for p in [&data, &manifest] {
            if !p.exists() {
                return Err(Error::MissingArtifact { path: p.clone(), producer: "fhnn generate".into() });
            }
        }
        Self::read_jsonl(&data, Manifest::read(&manifest)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::scenario::ScenarioKind;

    fn small() -> DatasetConfig {
        DatasetConfig { n_train: 3, n_test: 2, duration: 1.0, ..DatasetConfig::default() }
    }

    #[test]
    fn counts_and_lengths() {
        let ds = generate_dataset(&ScenarioConfig::default(), &small(), 9, false).unwrap();
        assert_eq!(ds.train().len(), 3);
        assert_eq!(ds.test().len(), 2);
        for t in &ds.trajectories {
            assert_eq!(t.len(), 21);
            assert_eq!(t.derivs.len(), 21);
            assert!(t.times.windows(2).all(|w| (w[1] - w[0] - 0.05).abs() < 1e-12));
        }
    }

    #[test]
    fn default_config_sample_count() {
        assert_eq!(DatasetConfig::default().samples_per_trajectory(), 161);
    }

    #[test]
    fn deterministic_serial_and_parallel() {
        let a = generate_dataset(&ScenarioConfig::default(), &small(), 4, false).unwrap();
        let b = generate_dataset(&ScenarioConfig::default(), &small(), 4, true).unwrap();
        assert_eq!(a, b);
        let c = generate_dataset(&ScenarioConfig::default(), &small(), 5, false).unwrap();
        assert_ne!(a.trajectories[0].states, c.trajectories[0].states);
    }

    #[test]
    fn splits_are_disjoint() {
        let ds = generate_dataset(&ScenarioConfig::default(), &small(), 1, false).unwrap();
        let train: Vec<usize> = ds.train().iter().map(|t| t.id).collect();
        assert!(ds.test().iter().all(|t| !train.contains(&t.id)));
    }

    #[test]
    fn derivative_labels_are_analytic() {
        let ds = generate_dataset(&ScenarioConfig::default(), &small(), 2, false).unwrap();
        let t = &ds.trajectories[1];
        let sc = ds.manifest.scenario_for(t.seed).unwrap();
        assert_eq!(t.derivs[7], sc.derivative(&t.states[7], t.times[7]).unwrap());
    }

    #[test]
    fn obstacle_starts_outside_clearance() {
        let cfg = ScenarioConfig::with_kind(ScenarioKind::ObstacleFlow);
        let ds = generate_dataset(&cfg, &DatasetConfig { n_train: 20, n_test: 1, duration: 0.1, ..small() }, 3, false)
            .unwrap();
        assert!(ds.trajectories.iter().all(|t| t.initial().radius() >= 1.2));
    }

    #[test]
    fn jsonl_roundtrip_is_exact() {
        let ds = generate_dataset(&ScenarioConfig::with_kind(ScenarioKind::NoisyFlow), &small(), 8, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        ds.save(dir.path()).unwrap();
        let back = Dataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_dataset_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        match Dataset::load(dir.path()) {
            Err(Error::MissingArtifact { producer, .. }) => assert!(producer.contains("generate")),
            other => panic!("{other:?}"),
        }
    }
}
