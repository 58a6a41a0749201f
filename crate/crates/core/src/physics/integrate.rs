//! Classical RK4 and fixed-step integration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Body position [m] and velocity [m/s]. Serializes as `[x, y, vx, vy]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct State {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl State {
    pub const fn new(x: f64, y: f64, vx: f64, vy: f64) -> Self {
        Self { x, y, vx, vy }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x, self.y, self.vx, self.vy]
    }

    pub fn radius(&self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|c| c.is_finite())
    }

    /// Rotates position and velocity by `angle` about the origin.
    pub fn rotated(&self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            x: c * self.x - s * self.y,
            y: s * self.x + c * self.y,
            vx: c * self.vx - s * self.vy,
            vy: s * self.vx + c * self.vy,
        }
    }
}

impl From<[f64; 4]> for State {
    fn from([x, y, vx, vy]: [f64; 4]) -> Self {
        Self { x, y, vx, vy }
    }
}

impl From<State> for [f64; 4] {
    fn from(s: State) -> Self {
        s.to_array()
    }
}

/// A state type RK4 can combine linearly.
pub trait OdeState: Sized {
    /// `self + h * k`
    fn axpy(&self, h: f64, k: &Self) -> Self;
    fn all_finite(&self) -> bool;
}

impl OdeState for State {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        Self {
            x: self.x + h * k.x,
            y: self.y + h * k.y,
            vx: self.vx + h * k.vx,
            vy: self.vy + h * k.vy,
        }
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

impl OdeState for f64 {
    fn axpy(&self, h: f64, k: &Self) -> Self {
        self + h * k
    }

    fn all_finite(&self) -> bool {
        self.is_finite()
    }
}

/// One classical RK4 step of size `h` from `(s, t)`.
pub fn rk4_step<S: OdeState>(mut f: impl FnMut(&S, f64) -> Result<S>, s: &S, t: f64, h: f64) -> Result<S> {
    if !(h > 0.0) {
        return Err(Error::config(format!("RK4 step must be positive, got {h}")));
    }
    let k1 = stage(&mut f, s, t, 1)?;
    rk4_step_from(f, s, k1, t, h)
}

/// RK4 step when the first stage `k1 = f(s, t)` is already known.
pub fn rk4_step_from<S: OdeState>(mut f: impl FnMut(&S, f64) -> Result<S>, s: &S, k1: S, t: f64, h: f64) -> Result<S> {
    let k2 = stage(&mut f, &s.axpy(0.5 * h, &k1), t + 0.5 * h, 2)?;
    let k3 = stage(&mut f, &s.axpy(0.5 * h, &k2), t + 0.5 * h, 3)?;
    let k4 = stage(&mut f, &s.axpy(h, &k3), t + h, 4)?;
    Ok(s.axpy(h / 6.0, &k1).axpy(h / 3.0, &k2).axpy(h / 3.0, &k3).axpy(h / 6.0, &k4))
}

fn stage<S: OdeState>(f: &mut impl FnMut(&S, f64) -> Result<S>, s: &S, t: f64, index: usize) -> Result<S> {
    let k = f(s, t)?;
    if !k.all_finite() {
        return Err(Error::Integration { time: t, stage: index });
    }
    Ok(k)
}

/// Time-stamped states, with optional derivative labels and dataset metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: usize,
    pub scenario: String,
    pub seed: u64,
    pub split: Split,
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    #[serde(default)]
    pub derivs: Vec<State>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn initial(&self) -> State {
        self.states[0]
    }

    pub fn duration(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0) - self.times.first().copied().unwrap_or(0.0)
    }

    /// Index of the sample at time `t`, if one lies within `1e-9 s`.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.times[0]) / self.dt).round();
        if k < 0.0 {
            return None;
        }
        let k = k as usize;
        (k < self.times.len() && (self.times[k] - t).abs() < 1e-9).then_some(k)
    }
}

/// Integrates `f` from `(s0, t0)` over `horizon` with fixed step `h`, keeping
/// every `sample_every`-th state (always including both ends).
pub fn integrate(
    mut f: impl FnMut(&State, f64) -> Result<State>,
    s0: State,
    t0: f64,
    horizon: f64,
    h: f64,
    sample_every: usize,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !(h > 0.0) || sample_every == 0 {
        return Err(Error::config(format!(
            "integrate needs horizon > 0, h > 0, sample_every >= 1 (got {horizon}, {h}, {sample_every})"
        )));
    }
    let n_steps = (horizon / h).round() as usize;
    if n_steps == 0 || ((n_steps as f64) * h - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::config(format!("step {h} does not divide horizon {horizon}")));
    }
    if n_steps % sample_every != 0 {
        return Err(Error::config(format!(
            "{n_steps} steps are not a multiple of sample_every = {sample_every}"
        )));
    }
    let mut times = vec![t0];
    let mut states = vec![s0];
    let mut s = s0;
    for k in 0..n_steps {
        // t from the step index, so long runs do not accumulate drift
        let t = t0 + k as f64 * h;
        s = rk4_step(&mut f, &s, t, h)?;
        if (k + 1) % sample_every == 0 {
            times.push(t0 + (k + 1) as f64 * h);
            states.push(s);
        }
    }
    Ok(Trajectory {
        id: 0,
        scenario: String::new(),
        seed: 0,
        split: Split::Train,
        dt: h * sample_every as f64,
        times,
        states,
        derivs: Vec::new(),
    })
}
