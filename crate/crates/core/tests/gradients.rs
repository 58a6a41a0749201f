mod common;

use fhnn::model::Variant;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, ..ProptestConfig::default() })]

    #[test]
    fn random_graphs_match_finite_differences(seed in any::<u64>()) {
        let score = common::random_graph_score(seed);
        prop_assert!(score < 1.0, "seed {seed}: score {score}");
    }
}

#[test]
fn every_variant_loss_matches_finite_differences() {
    for v in Variant::ALL {
        for seed in [1, 2] {
            let score = common::loss_gradient_score(v, seed);
            assert!(score < 1.0, "{v} seed {seed}: score {score}");
        }
    }
}
