mod common;

use fhnn::autodiff::Activation;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn stream_derivatives_match_finite_differences(seed in any::<u64>(), x in -4.0..4.0f64, y in -4.0..4.0f64) {
        for act in [Activation::Tanh, Activation::Softplus] {
            let (g, h) = common::stream_fd_errors(seed, act, &[[x, y]]);
            prop_assert!(g < 1.0, "{act:?}: gradient score {g}");
            prop_assert!(h < 1e-4, "{act:?}: hessian error {h}");
        }
    }

    #[test]
    fn hessian_is_symmetric_jacobian_of_gradient(seed in any::<u64>(), x in -3.0..3.0f64, y in -3.0..3.0f64) {
        // d(psi_x)/dy and d(psi_y)/dx are both compared with the single hxy
        let (_, h) = common::stream_fd_errors(seed, Activation::Tanh, &[[x, y]]);
        prop_assert!(h < 1e-4);
    }

    #[test]
    fn learned_flow_is_divergence_free(seed in any::<u64>()) {
        let d = common::learned_divergence_max(seed);
        prop_assert!(d < 1e-6, "max |div u| = {d}");
    }
}

#[test]
fn relu_stream_has_zero_hessian() {
    let (spec, store) = common::random_stream_net(3, &[8, 8], Activation::Relu);
    for p in common::grid(5) {
        let (_, _, h) = common::stream_at(&spec, &store, p[0] + 0.013, p[1] - 0.007);
        assert_eq!(h, [0.0; 3]);
    }
}
