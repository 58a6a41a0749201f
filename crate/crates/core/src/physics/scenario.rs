//! Ground-truth systems used to synthesize trajectories.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::flow::{FlowField, FlowFieldProvider, FourierMode, Modulation};
use super::forces::{acceleration, FluidProperties, HydroCoefficients};
use super::integrate::State;
use super::scalar::{Scalar, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SteadyVortex,
    TimeVaryingVortex,
    NoisyFlow,
    ObstacleFlow,
    MorisonWave,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::NoisyFlow,
        ScenarioKind::ObstacleFlow,
        ScenarioKind::SteadyVortex,
        ScenarioKind::TimeVaryingVortex,
        ScenarioKind::MorisonWave,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::SteadyVortex => "steady_vortex",
            ScenarioKind::TimeVaryingVortex => "time_varying_vortex",
            ScenarioKind::NoisyFlow => "noisy_flow",
            ScenarioKind::ObstacleFlow => "obstacle_flow",
            ScenarioKind::MorisonWave => "morison_wave",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ScenarioKind::SteadyVortex => "Steady Vortex",
            ScenarioKind::TimeVaryingVortex => "Time-varying Vortex",
            ScenarioKind::NoisyFlow => "Noisy Flow",
            ScenarioKind::ObstacleFlow => "Flow with Obstacle",
            ScenarioKind::MorisonWave => "Wave (Morison Force)",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown scenario kind `{s}`")))
    }
}

/// Every physical constant of a ground-truth system. Fields irrelevant to
/// `kind` are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    /// Dry mass M [kg].
    pub mass: f64,
    pub fluid: FluidProperties,
    pub coefficients: HydroCoefficients,
    /// Scale `m_ax` by `1 + 0.2 exp(-r)`.
    pub radial_added_mass: bool,
    /// Vortex rotation rate [1/s].
    pub omega: f64,
    /// Saturation radius of the vortex [m]; 0 gives rigid rotation.
    pub core_radius: f64,
    pub modulation_amplitude: f64,
    pub modulation_period: f64,
    pub noise_modes: usize,
    /// Perturbation peak speed as a fraction of the vortex peak speed.
    pub noise_fraction: f64,
    pub noise_k_min: f64,
    pub noise_k_max: f64,
    pub cylinder_speed: f64,
    pub cylinder_radius: f64,
    /// Initial states keep `r >= clearance * R` in the obstacle scenario.
    pub obstacle_clearance: f64,
    pub wave_speed: f64,
    pub wave_period: f64,
    pub drag_cd: f64,
    pub inertia_cm: f64,
    /// Displaced volume for the Morison inertia term [m^3].
    pub volume: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::SteadyVortex,
            mass: 10.0,
            fluid: FluidProperties { rho: 1000.0, area: 0.05, eps: 1e-6 },
            coefficients: HydroCoefficients { m_ax: 40.0, m_ay: 50.0, c_q: 1.4, c_l: 7.0 },
            radial_added_mass: false,
            omega: 1.0,
            core_radius: 3.0,
            modulation_amplitude: 0.3,
            modulation_period: 10.0,
            noise_modes: 8,
            noise_fraction: 0.05,
            noise_k_min: 0.3,
            noise_k_max: 1.0,
            cylinder_speed: 0.5,
            cylinder_radius: 1.0,
            obstacle_clearance: 1.2,
            wave_speed: 0.3,
            wave_period: 4.0,
            drag_cd: 1.0,
            inertia_cm: 1.0,
            volume: 0.05,
        }
    }
}

impl ScenarioConfig {
    pub fn with_kind(kind: ScenarioKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.fluid.validate()?;
        if !(self.mass > 0.0) {
            return Err(Error::config("scenario.mass must be > 0"));
        }
        if !self.coefficients.is_nonnegative() {
            return Err(Error::config("scenario.coefficients must be >= 0"));
        }
        if !(self.core_radius >= 0.0 && self.core_radius.is_finite()) {
            return Err(Error::config("scenario.core_radius must be >= 0 (0 for rigid rotation)"));
        }
        if self.kind == ScenarioKind::TimeVaryingVortex && !(self.modulation_period > 0.0) {
            return Err(Error::config("scenario.modulation_period must be > 0"));
        }
        if self.kind == ScenarioKind::MorisonWave && !(self.wave_period > 0.0) {
            return Err(Error::config("scenario.wave_period must be > 0"));
        }
        if self.kind == ScenarioKind::NoisyFlow && !(self.noise_k_min > 0.0 && self.noise_k_max >= self.noise_k_min) {
            return Err(Error::config("scenario.noise_k_min/noise_k_max must satisfy 0 < min <= max"));
        }
        if self.kind == ScenarioKind::ObstacleFlow && !(self.cylinder_radius > 0.0) {
            return Err(Error::config("scenario.cylinder_radius must be > 0"));
        }
        Ok(())
    }

    fn core_radius_opt(&self) -> Option<f64> {
        (self.core_radius > 0.0).then_some(self.core_radius)
    }

    fn vortex(&self, modulation: Option<Modulation>) -> FlowField {
        FlowField::Vortex { omega: self.omega, core_radius: self.core_radius_opt(), modulation }
    }

    /// Largest azimuthal speed of the vortex profile.
    pub fn vortex_peak_speed(&self) -> f64 {
        match self.core_radius_opt() {
            // max of r / (1 + r^2/rc^2)^2 is at r = rc / sqrt(3)
            Some(rc) => {
                let r = rc / 3f64.sqrt();
                self.omega.abs() * r / (1.0 + r * r / (rc * rc)).powi(2)
            }
            None => self.omega.abs(),
        }
    }

    /// Smallest admissible initial radius.
    pub fn min_start_radius(&self) -> f64 {
        match self.kind {
            ScenarioKind::ObstacleFlow => self.obstacle_clearance * self.cylinder_radius,
            _ => 0.0,
        }
    }
}

/// Known external forcing on the body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Forcing {
    None,
    /// `F = 1/2 rho C_d A |u_w - v| (u_w - v) + rho C_m V du_w/dt`,
    /// `u_w(t) = (U_w sin(2 pi t / T_w), 0)`.
    Morison {
        wave_speed: f64,
        wave_period: f64,
        drag_cd: f64,
        inertia_cm: f64,
        volume: f64,
    },
}

impl Forcing {
    /// Wave particle velocity and its time derivative at `t`.
    pub fn wave(&self, t: f64) -> Option<([f64; 2], [f64; 2])> {
        match *self {
            Forcing::None => None,
            Forcing::Morison { wave_speed, wave_period, .. } => {
                let w = 2.0 * PI / wave_period;
                Some(([wave_speed * (w * t).sin(), 0.0], [wave_speed * w * (w * t).cos(), 0.0]))
            }
        }
    }

    /// Force on a body moving at `velocity`, given the wave kinematics from [`Forcing::wave`].
    pub fn force<T: Scalar>(&self, velocity: Vec2<T>, wave_u: Vec2<T>, wave_du: Vec2<T>, fluid: &FluidProperties) -> Option<Vec2<T>> {
        match *self {
            Forcing::None => None,
            Forcing::Morison { drag_cd, inertia_cm, volume, .. } => {
                let rel = wave_u - velocity;
                let drag = rel.scale(rel.norm() * (0.5 * fluid.rho * drag_cd * fluid.area));
                Some(drag + wave_du * (fluid.rho * inertia_cm * volume))
            }
        }
    }

    pub fn at(&self, s: &State, t: f64, fluid: &FluidProperties) -> Option<Vec2<f64>> {
        let (u, du) = self.wave(t)?;
        self.force(Vec2::new(s.vx, s.vy), u.into(), du.into(), fluid)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyProperties {
    pub mass: f64,
    pub forcing: Forcing,
}

/// Coefficients the generator uses, constant or with `m_ax(r) = m_ax (1 + 0.2 e^-r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TrueCoefficients {
    Constant(HydroCoefficients),
    RadialAddedMass(HydroCoefficients),
}

impl TrueCoefficients {
    pub fn at(&self, r: f64) -> HydroCoefficients {
        match *self {
            TrueCoefficients::Constant(c) => c,
            TrueCoefficients::RadialAddedMass(c) => HydroCoefficients { m_ax: c.m_ax * (1.0 + 0.2 * (-r).exp()), ..c },
        }
    }
}

/// A fully specified ground-truth system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub flow: FlowField,
    pub body: BodyProperties,
    pub fluid: FluidProperties,
    pub coefficients: TrueCoefficients,
}

impl Scenario {
    /// Analytic state derivative `(vx, vy, ax, ay)`.
    pub fn derivative(&self, s: &State, t: f64) -> Result<State> {
        let u: Vec2<f64> = self.flow.velocity(s.x, s.y, t).into();
        let coeffs = self.coefficients.at(s.radius());
        let ext = self.body.forcing.at(s, t, &self.fluid);
        let a = acceleration(Vec2::new(s.vx, s.vy), u, &coeffs, self.body.mass, &self.fluid, ext)?;
        Ok(State::new(s.vx, s.vy, a.x, a.y))
    }
}

/// Builds the ground truth for `config`. `seed` only matters for `noisy_flow`,
/// where it fixes the frozen perturbation field.
pub fn make_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    config.validate()?;
    let flow = match config.kind {
        ScenarioKind::SteadyVortex => config.vortex(None),
        ScenarioKind::TimeVaryingVortex => config.vortex(Some(Modulation {
            amplitude: config.modulation_amplitude,
            period: config.modulation_period,
        })),
        ScenarioKind::NoisyFlow => FlowField::Perturbed {
            base: Box::new(config.vortex(None)),
            modes: noise_modes(config, seed),
        },
        ScenarioKind::ObstacleFlow => FlowField::Cylinder { speed: config.cylinder_speed, radius: config.cylinder_radius },
        ScenarioKind::MorisonWave => FlowField::Still,
    };
    let forcing = match config.kind {
        ScenarioKind::MorisonWave => Forcing::Morison {
            wave_speed: config.wave_speed,
            wave_period: config.wave_period,
            drag_cd: config.drag_cd,
            inertia_cm: config.inertia_cm,
            volume: config.volume,
        },
        _ => Forcing::None,
    };
    let coefficients = if config.radial_added_mass {
        TrueCoefficients::RadialAddedMass(config.coefficients)
    } else {
        TrueCoefficients::Constant(config.coefficients)
    };
    Ok(Scenario {
        kind: config.kind,
        flow,
        body: BodyProperties { mass: config.mass, forcing },
        fluid: config.fluid,
        coefficients,
    })
}

/// Random low-wavenumber modes whose peak speeds sum to
/// `noise_fraction * vortex_peak_speed`.
fn noise_modes(config: &ScenarioConfig, seed: u64) -> Vec<FourierMode> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.noise_modes;
    if n == 0 {
        return Vec::new();
    }
    let per_mode = config.noise_fraction * config.vortex_peak_speed() / n as f64;
    (0..n)
        .map(|_| {
            let k = rng.random_range(config.noise_k_min..=config.noise_k_max);
            let dir = rng.random_range(0.0..2.0 * PI);
            let phase = rng.random_range(0.0..2.0 * PI);
            FourierMode { amplitude: per_mode / k, kx: k * dir.cos(), ky: k * dir.sin(), phase }
        })
        .collect()
}
