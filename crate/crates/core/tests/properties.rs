use fhnn::model::{cap_inverse, cap_map, Model, ModelDescriptor, PhysicalContext, Variant};
use fhnn::physics::{
    hydro_forces, make_scenario, relative_kinematics, FlowField, FluidProperties, HydroCoefficients, ScenarioConfig, State,
    Vec2,
};
use proptest::prelude::*;

fn vortex_model(seed: u64, tied: bool) -> Model {
    let sc = make_scenario(&ScenarioConfig::default(), 0).unwrap();
    let mut d = ModelDescriptor::for_variant(Variant::Fhnn, seed);
    d.tied_added_mass = tied;
    let mut m = Model::new(d, PhysicalContext { body: sc.body, fluid: sc.fluid }).unwrap();
    m.flow_override = Some(FlowField::Vortex { omega: 1.0, core_radius: Some(3.0), modulation: None });
    m
}

fn state() -> impl Strategy<Value = State> {
    (-4.0..4.0f64, -4.0..4.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, vx, vy)| State::new(x, y, vx, vy))
}

proptest! {
    #[test]
    fn cap_map_is_bounded(o in -60.0..60.0f64, cap in 0.1..100.0f64) {
        // open interval (C/2, C) in exact arithmetic; rounding may reach the ends
        let v = cap_map(o, cap);
        prop_assert!(v >= cap / 2.0 && v <= cap, "{v} outside [{}, {cap}]", cap / 2.0);
        if (cap * o).abs() < 20.0 {
            prop_assert!(v > cap / 2.0 && v < cap);
        }
    }

    #[test]
    fn cap_map_is_monotone(a in -5.0..5.0f64, d in 0.0..5.0f64, cap in 0.1..100.0f64) {
        prop_assert!(cap_map(a, cap) <= cap_map(a + d, cap));
    }

    #[test]
    fn cap_inverse_round_trips(p in 0.51..0.99f64, cap in 0.5..100.0f64) {
        let v = p * cap;
        let back = cap_map(cap_inverse(v, cap).unwrap(), cap);
        prop_assert!((back - v).abs() <= 1e-9 * cap);
    }

    #[test]
    fn hydrodynamic_force_is_dissipative(
        v in (-3.0..3.0f64, -3.0..3.0f64),
        u in (-3.0..3.0f64, -3.0..3.0f64),
        c in (0.0..80.0f64, 0.0..80.0f64, 0.0..3.0f64, 0.0..15.0f64),
    ) {
        let fluid = FluidProperties { rho: 1000.0, area: 0.05, eps: 1e-6 };
        let kin = relative_kinematics(Vec2::new(v.0, v.1), Vec2::new(u.0, u.1), &fluid);
        let coeffs = HydroCoefficients { m_ax: c.0, m_ay: c.1, c_q: c.2, c_l: c.3 };
        let f = hydro_forces(&kin, &coeffs, &fluid).total;
        prop_assert!(f.dot(kin.v_rel) <= 0.0);
    }

    #[test]
    fn coefficients_are_rotation_invariant(s in state(), angle in 0.0..6.3f64, seed in 0..8u64) {
        let m = vortex_model(seed, false);
        let a = m.coefficients(&[s], 0.0).unwrap()[0].to_array();
        let b = m.coefficients(&[s.rotated(angle)], 0.0).unwrap()[0].to_array();
        for k in 0..4 {
            prop_assert!((a[k] - b[k]).abs() < 1e-8 * a[k].abs().max(1.0));
        }
    }

    #[test]
    fn tied_model_with_radial_stream_is_rotation_equivariant(s in state(), angle in 0.0..6.3f64, seed in 0..8u64) {
        let m = vortex_model(seed, true);
        let d = m.derivatives(&[s], 0.0).unwrap()[0].rotated(angle).to_array();
        let e = m.derivatives(&[s.rotated(angle)], 0.0).unwrap()[0].to_array();
        for k in 0..4 {
            prop_assert!((d[k] - e[k]).abs() < 1e-8, "component {k}: {} vs {}", d[k], e[k]);
        }
    }
}

#[test]
fn anisotropic_added_mass_breaks_equivariance() {
    let mut m = vortex_model(1, false);
    m.set_constant_coefficients(HydroCoefficients { m_ax: 40.0, m_ay: 55.0, c_q: 1.4, c_l: 7.0 }).unwrap();
    let s = State::new(1.0, 0.5, 0.4, -0.2);
    let angle = 0.9;
    let d = m.derivatives(&[s], 0.0).unwrap()[0].rotated(angle);
    let e = m.derivatives(&[s.rotated(angle)], 0.0).unwrap()[0];
    assert!((d.vx - e.vx).abs() + (d.vy - e.vy).abs() > 1e-6);
}
