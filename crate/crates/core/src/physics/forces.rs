//! Relative kinematics, drag, added mass and the equations of motion.

use serde::{Deserialize, Serialize};

use super::scalar::{Scalar, Vec2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidProperties {
    /// Density [kg/m^3].
    pub rho: f64,
    /// Reference area [m^2].
    pub area: f64,
    /// Relative-speed regularizer [m/s].
    pub eps: f64,
}

impl FluidProperties {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.area > 0.0 && self.eps >= 0.0) {
            return Err(Error::config(format!("fluid properties must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Added masses [kg] and drag coefficients (`c_q` dimensionless, `c_l` in kg/s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HydroCoefficients<T = f64> {
    pub m_ax: T,
    pub m_ay: T,
    pub c_q: T,
    pub c_l: T,
}

impl HydroCoefficients<f64> {
    pub fn to_array(self) -> [f64; 4] {
        [self.m_ax, self.m_ay, self.c_q, self.c_l]
    }

    pub fn from_array([m_ax, m_ay, c_q, c_l]: [f64; 4]) -> Self {
        Self { m_ax, m_ay, c_q, c_l }
    }

    pub fn is_nonnegative(&self) -> bool {
        self.to_array().iter().all(|&c| c >= 0.0)
    }
}

pub const COEFFICIENT_NAMES: [&str; 4] = ["m_ax", "m_ay", "c_q", "c_l"];

#[derive(Clone, Copy, Debug)]
pub struct RelativeKinematics<T> {
    pub v_rel: Vec2<T>,
    /// `|v_rel| + eps`.
    pub sigma: T,
}

#[derive(Clone, Copy, Debug)]
pub struct ForceBreakdown<T> {
    pub quadratic: Vec2<T>,
    pub linear: Vec2<T>,
    pub total: Vec2<T>,
}

/// `v_rel = v - u`, `sigma = |v_rel| + eps`.
pub fn relative_kinematics<T: Scalar>(velocity: Vec2<T>, flow: Vec2<T>, fluid: &FluidProperties) -> RelativeKinematics<T> {
    let v_rel = velocity - flow;
    let sigma = v_rel.norm() + fluid.eps;
    RelativeKinematics { v_rel, sigma }
}

/// `F_q = -1/2 rho A c_q sigma v_rel`, `F_l = -c_l v_rel`.
pub fn hydro_forces<T: Scalar>(
    kin: &RelativeKinematics<T>,
    coeffs: &HydroCoefficients<T>,
    fluid: &FluidProperties,
) -> ForceBreakdown<T> {
    let q = coeffs.c_q * kin.sigma * (-0.5 * fluid.rho * fluid.area);
    let quadratic = kin.v_rel.scale(q);
    let linear = kin.v_rel.scale(-coeffs.c_l);
    ForceBreakdown { quadratic, linear, total: quadratic + linear }
}

/// `a = M_eff^-1 (F_h + F_ext)` with `M_eff = diag(M + m_ax, M + m_ay)`.
pub fn acceleration<T: Scalar>(
    velocity: Vec2<T>,
    flow: Vec2<T>,
    coeffs: &HydroCoefficients<T>,
    mass: f64,
    fluid: &FluidProperties,
    external: Option<Vec2<T>>,
) -> Result<Vec2<T>> {
    let kin = relative_kinematics(velocity, flow, fluid);
    let forces = hydro_forces(&kin, coeffs, fluid);
    let total = match external {
        Some(f) => forces.total + f,
        None => forces.total,
    };
    let mx = coeffs.m_ax + mass;
    let my = coeffs.m_ay + mass;
    let min_mass = mx.min_value().min(my.min_value());
    if !(min_mass > 0.0) {
        return Err(Error::Physical(format!("effective mass {min_mass} is not positive")));
    }
    Ok(Vec2::new(total.x / mx, total.y / my))
}
