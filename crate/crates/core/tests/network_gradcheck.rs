mod common;

use common::*;
use discseg::loss::{LossConfig, Norm};

#[test]
fn network_gradient_matches_finite_differences() {
    let cfg = LossConfig::default();
    for seed in 0..3 {
        let f = net_fixture(seed, &cfg);
        let check = net_grad_check(&f, &cfg, 1e-5, 1e-4);
        assert!(check.max_rel < 1e-5, "seed {seed}: {}", check.max_rel);
        assert!(check.max_abs_small < 1e-8, "seed {seed}: {}", check.max_abs_small);
    }
}

#[test]
fn network_gradient_matches_finite_differences_l1() {
    let cfg = LossConfig { norm: Norm::L1, ..LossConfig::default() };
    let f = net_fixture(100, &cfg);
    let check = net_grad_check(&f, &cfg, 1e-5, 1e-4);
    assert!(check.max_rel < 1e-5, "{}", check.max_rel);
}
