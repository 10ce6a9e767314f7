mod common;

use common::{f64_config, shadow_config, CompositeObjective, SrlObjective};
use unikp::numerics::{grad_check, grad_check_shadowed, GradCheckConfig};

#[test]
fn srl_layer_at_64_bit() {
    let (obj, store) = SrlObjective::new(6, 4, 8, 11);
    let r = grad_check::<f64, _>(&obj, &store, &f64_config()).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
    // input, two d×d projections with biases, four norms
    assert_eq!(r.coords_checked, 6 * 8 + 2 * (64 + 8) + 4 * 2 * 8);
}

#[test]
fn srl_layer_at_32_bit() {
    let (obj, store) = SrlObjective::new(6, 4, 8, 11);
    let cfg = GradCheckConfig {
        step: 1e-2,
        ..Default::default()
    };
    let r = grad_check::<f32, _>(&obj, &store, &cfg).unwrap();
    assert!(r.max_rel_error <= 1e-2, "{r:?}");
    let r = grad_check_shadowed(&obj, &store, &shadow_config()).unwrap();
    assert!(r.max_rel_error <= 1e-2, "{r:?}");
}

#[test]
fn composite_objective_at_64_bit() {
    for srl in [0, 2] {
        let (obj, store) = CompositeObjective::new(srl, 5);
        let r = grad_check::<f64, _>(&obj, &store, &f64_config()).unwrap();
        assert!(r.max_rel_error <= 1e-4, "srl_layers={srl}: {r:?}");
    }
}

#[test]
fn composite_objective_at_32_bit() {
    for srl in [0, 2] {
        let (obj, store) = CompositeObjective::new(srl, 5);
        let r = grad_check_shadowed(&obj, &store, &shadow_config()).unwrap();
        assert!(r.max_rel_error <= 1e-2, "srl_layers={srl}: {r:?}");
    }
}

#[test]
fn static_support_objective_also_checks() {
    let (mut obj, store) = CompositeObjective::new(1, 9);
    obj.loss.dynamic_vocab = false;
    let r = grad_check::<f64, _>(&obj, &store, &f64_config()).unwrap();
    assert!(r.max_rel_error <= 1e-4, "{r:?}");
}
