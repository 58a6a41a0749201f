//! Analytic background flows. Every field here is the perpendicular gradient
//! of a streamfunction, `u = (-d psi/dy, d psi/dx)`, so `psi = Omega r^2 / 2`
//! with `Omega > 0` turns counter-clockwise.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Anything that can report a background velocity.
pub trait FlowFieldProvider {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2];

    /// The streamfunction, where the provider has one.
    fn streamfunction(&self, _x: f64, _y: f64, _t: f64) -> Option<f64> {
        None
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub amplitude: f64,
    /// [s]
    pub period: f64,
}

/// `psi_m = a sin(k . x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub amplitude: f64,
    pub kx: f64,
    pub ky: f64,
    pub phase: f64,
}

impl FourierMode {
    fn psi(&self, x: f64, y: f64) -> f64 {
        self.amplitude * (self.kx * x + self.ky * y + self.phase).sin()
    }

    fn grad(&self, x: f64, y: f64) -> [f64; 2] {
        let c = self.amplitude * (self.kx * x + self.ky * y + self.phase).cos();
        [self.kx * c, self.ky * c]
    }

    /// Peak speed of this mode, `|a| |k|`.
    pub fn peak_speed(&self) -> f64 {
        self.amplitude.abs() * self.kx.hypot(self.ky)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum FlowField {
    Still,
    /// `psi = (Omega/2) r^2 s(r)`, `s(r) = 1 / (1 + (r/r_c)^2)`; `core_radius = None`
    /// gives rigid rotation.
    Vortex {
        omega: f64,
        core_radius: Option<f64>,
        modulation: Option<Modulation>,
    },
    /// A base field plus frozen Fourier modes.
    Perturbed {
        base: Box<FlowField>,
        modes: Vec<FourierMode>,
    },
    /// Potential flow past a cylinder, `psi = U y (1 - R^2/r^2)` outside `r = R`,
    /// fluid at rest inside.
    Cylinder { speed: f64, radius: f64 },
}

impl FlowField {
    fn vortex_omega(omega: f64, modulation: &Option<Modulation>, t: f64) -> f64 {
        match modulation {
            Some(m) => omega * (1.0 + m.amplitude * (2.0 * PI * t / m.period).sin()),
            None => omega,
        }
    }

    /// `grad psi` at `(x, y, t)`.
    pub fn psi_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        match self {
            FlowField::Still => [0.0, 0.0],
            FlowField::Vortex { omega, core_radius, modulation } => {
                let w = Self::vortex_omega(*omega, modulation, t);
                // d psi / dr = Omega r s^2
                let s = match core_radius {
                    Some(rc) => 1.0 / (1.0 + (x * x + y * y) / (rc * rc)),
                    None => 1.0,
                };
                [w * x * s * s, w * y * s * s]
            }
            FlowField::Perturbed { base, modes } => {
                let mut g = base.psi_gradient(x, y, t);
                for m in modes {
                    let d = m.grad(x, y);
                    g[0] += d[0];
                    g[1] += d[1];
                }
                g
            }
            FlowField::Cylinder { speed, radius } => {
                let r2 = x * x + y * y;
                let rr = radius * radius;
                if r2 < rr {
                    return [0.0, 0.0];
                }
                let r4 = r2 * r2;
                let dx = speed * y * 2.0 * rr * x / r4;
                let dy = speed * (1.0 - rr / r2) + speed * y * 2.0 * rr * y / r4;
                [dx, dy]
            }
        }
    }

    pub fn psi(&self, x: f64, y: f64, t: f64) -> f64 {
        match self {
            FlowField::Still => 0.0,
            FlowField::Vortex { omega, core_radius, modulation } => {
                let w = Self::vortex_omega(*omega, modulation, t);
                let r2 = x * x + y * y;
                let s = core_radius.map_or(1.0, |rc| 1.0 / (1.0 + r2 / (rc * rc)));
                0.5 * w * r2 * s
            }
            FlowField::Perturbed { base, modes } => base.psi(x, y, t) + modes.iter().map(|m| m.psi(x, y)).sum::<f64>(),
            FlowField::Cylinder { speed, radius } => {
                let r2 = x * x + y * y;
                if r2 < radius * radius {
                    0.0
                } else {
                    speed * y * (1.0 - radius * radius / r2)
                }
            }
        }
    }
}

impl FlowFieldProvider for FlowField {
    fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let [px, py] = self.psi_gradient(x, y, t);
        [-py, px]
    }

    fn streamfunction(&self, x: f64, y: f64, t: f64) -> Option<f64> {
        Some(self.psi(x, y, t))
    }
}

/// Central-difference divergence of `field` at `(x, y)` with probe spacing `h`.
pub fn numerical_divergence(field: &impl FlowFieldProvider, x: f64, y: f64, t: f64, h: f64) -> f64 {
    let dudx = (field.velocity(x + h, y, t)[0] - field.velocity(x - h, y, t)[0]) / (2.0 * h);
    let dvdy = (field.velocity(x, y + h, t)[1] - field.velocity(x, y - h, t)[1]) / (2.0 * h);
    dudx + dvdy
}
