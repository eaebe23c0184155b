mod common;

use common::gradcheck::{config, relative_error, ALL_PARAMS};

#[test]
fn single_gaussian_every_parameter_class() {
    for seed in 0..4 {
        let c = config(seed, 1);
        for p in ALL_PARAMS {
            let (rel, scale) = relative_error(&c, p);
            assert!(scale > 0.0, "seed {seed} {p:?}: zero gradient");
            assert!(rel <= 1e-3, "seed {seed} {p:?}: relative error {rel:e}");
        }
    }
}

#[test]
fn overlapping_gaussians_every_parameter_class() {
    for seed in 10..14 {
        let c = config(seed, 4);
        for p in ALL_PARAMS {
            let (rel, _) = relative_error(&c, p);
            assert!(rel <= 1e-3, "seed {seed} {p:?}: relative error {rel:e}");
        }
    }
}
