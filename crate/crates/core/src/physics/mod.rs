//! Ground-truth floating-body dynamics: flows, hydrodynamic forces,
//! integration and dataset synthesis.

mod dataset;
mod flow;
mod forces;
mod integrate;
mod scalar;
mod scenario;

pub use dataset::{derive_seed, generate_dataset, sample_initial_state, simulate, Dataset, DatasetConfig, Manifest};
pub use flow::{numerical_divergence, FlowField, FlowFieldProvider, FourierMode, Modulation};
pub use forces::{
    acceleration, hydro_forces, relative_kinematics, FluidProperties, ForceBreakdown, HydroCoefficients,
    RelativeKinematics, COEFFICIENT_NAMES,
};
pub use integrate::{integrate, rk4_step, rk4_step_from, OdeState, Split, State, Trajectory};
pub use scalar::{Scalar, Vec2};
pub use scenario::{make_scenario, BodyProperties, Forcing, Scenario, ScenarioConfig, ScenarioKind, TrueCoefficients};

/// State derivative of the ground truth, `(vx, vy, ax, ay)`.
pub fn state_derivative(scenario: &Scenario, s: &State, t: f64) -> crate::error::Result<State> {
    scenario.derivative(s, t)
}


