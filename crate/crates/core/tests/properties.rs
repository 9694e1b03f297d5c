use std::collections::BTreeMap;

use proptest::prelude::*;

use covmech::catalog::{self, System};
use covmech::gauge::{field_strength_nonabelian, StructureConstants};
use covmech::phase::{charge, coordinate, covariant_bracket, jacobi_residual, momentum, ProductObservable};
use covmech::sweep::random_observables;
use covmech::tensor::{DenseTensor, SymmetricTensor};
use covmech::PhasePoint;

fn system(name: &str) -> System {
    catalog::build(name, &BTreeMap::new()).unwrap()
}

const CONTEXTS: [&str; 3] = ["kerr", "quantum-dot", "su2-plane"];

fn point(sys: &System, seed: u64) -> PhasePoint {
    sys.sample(1, seed).pop().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bracket_is_exactly_antisymmetric(seed in any::<u64>(), which in 0usize..3) {
        let sys = system(CONTEXTS[which]);
        let ctx = sys.hamiltonian.context();
        let p = point(&sys, seed);
        let obs = random_observables(ctx.dim(), ctx.algebra_dim(), 2, seed);
        let gk = covariant_bracket(ctx, &*obs[0], &*obs[1], &p).unwrap();
        let kg = covariant_bracket(ctx, &*obs[1], &*obs[0], &p).unwrap();
        prop_assert_eq!(gk, -kg);
    }

    #[test]
    fn canonical_pairs(seed in any::<u64>(), which in 0usize..3) {
        let sys = system(CONTEXTS[which]);
        let ctx = sys.hamiltonian.context();
        let p = point(&sys, seed);
        let d = ctx.dim();
        for m in 0..d {
            for n in 0..d {
                let b = covariant_bracket(ctx, &*coordinate("x", m), &*momentum("p", n), &p).unwrap();
                let delta = if m == n { 1.0 } else { 0.0 };
                prop_assert!((b - delta).abs() <= 1e-12);
                let xx = covariant_bracket(ctx, &*coordinate("x", m), &*coordinate("y", n), &p).unwrap();
                prop_assert_eq!(xx, 0.0);
            }
        }
    }

    #[test]
    fn leibniz_rule(seed in any::<u64>(), which in 0usize..3) {
        let sys = system(CONTEXTS[which]);
        let ctx = sys.hamiltonian.context();
        let p = point(&sys, seed);
        let o = random_observables(ctx.dim(), ctx.algebra_dim(), 3, seed);
        let gk: covmech::SharedObservable = std::sync::Arc::new(ProductObservable::new(o[0].clone(), o[1].clone()));
        let lhs = covariant_bracket(ctx, &*gk, &*o[2], &p).unwrap();
        let kj = covariant_bracket(ctx, &*o[1], &*o[2], &p).unwrap();
        let gj = covariant_bracket(ctx, &*o[0], &*o[2], &p).unwrap();
        let (g, k) = (o[0].value(&p), o[1].value(&p));
        let rhs = g * kj + gj * k;
        let scale = (g * kj).abs().max((gj * k).abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() <= 1e-9 * scale, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn symmetrizer_is_idempotent(data in prop::collection::vec(-10.0f64..10.0, 27)) {
        let dense = DenseTensor::from_vec(3, 3, data);
        let once = dense.symmetrize();
        let twice = once.expand().symmetrize();
        for (a, b) in once.data().iter().zip(twice.data()) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
        let round = SymmetricTensor::from_canonical(3, 3, once.data().to_vec());
        prop_assert_eq!(round.expand().symmetrize(), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn jacobi_identity(seed in any::<u64>(), which in 0usize..3) {
        let sys = system(CONTEXTS[which]);
        let ctx = sys.hamiltonian.context();
        let p = point(&sys, seed);
        let o = random_observables(ctx.dim(), ctx.algebra_dim(), 3, seed);
        let r = jacobi_residual(ctx, &o[0], &o[1], &o[2], &p).unwrap();
        prop_assert!(r.value.abs() <= 1e-6 * r.scale, "{} vs scale {}", r.value, r.scale);
    }
}

#[test]
fn ricci_identity_and_charge_algebra() {
    let qd = system("quantum-dot");
    let wl = qd.params["omega_L"];
    for p in qd.sample(100, 17) {
        let ctx = qd.hamiltonian.context();
        let b = covariant_bracket(ctx, &*momentum("p_rho", 0), &*momentum("p_phi", 2), &p).unwrap();
        assert!((b + 2.0 * wl * p.x[0]).abs() <= 1e-10);
    }
    let qd = catalog::build("quantum-dot", &[("omega_L".to_string(), 1.5)].into_iter().collect()).unwrap();
    for p in qd.sample(100, 18) {
        let ctx = qd.hamiltonian.context();
        for (m, n, expected) in [(0, 2, -3.0 * p.x[0]), (2, 0, 3.0 * p.x[0]), (0, 1, 0.0), (1, 2, 0.0)] {
            let b = covariant_bracket(ctx, &*momentum("a", m), &*momentum("b", n), &p).unwrap();
            assert!((b - expected).abs() <= 1e-10, "{b} vs {expected}");
        }
    }

    let su2 = system("su2-plane");
    let bfield = [0.3, -0.2, 1.0];
    let f = StructureConstants::su2();
    for p in su2.sample(100, 19) {
        let ctx = su2.hamiltonian.context();
        let tb: f64 = p.t.iter().zip(bfield).map(|(t, b)| t * b).sum();
        let b = covariant_bracket(ctx, &*momentum("px", 0), &*momentum("py", 1), &p).unwrap();
        assert!((b - tb).abs() <= 1e-10);
        for a in 0..3 {
            for c in 0..3 {
                let got = covariant_bracket(ctx, &*charge("ta", a), &*charge("tc", c), &p).unwrap();
                let want: f64 = (0..3).map(|e| f.get(a, c, e) * p.t[e]).sum();
                assert!((got - want).abs() <= 1e-10);
            }
        }
    }

    let kerr = system("kerr");
    for p in kerr.sample(100, 20) {
        let ctx = kerr.hamiltonian.context();
        for m in 0..4 {
            for n in 0..4 {
                let b = covariant_bracket(ctx, &*momentum("a", m), &*momentum("b", n), &p).unwrap();
                assert!(b.abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn su2_field_strength_is_uniform() {
    let su2 = system("su2-plane");
    let Some(bg) = (match su2.hamiltonian.context().background() {
        covmech::phase::Background::NonAbelian(bg) => Some(bg.clone()),
        _ => None,
    }) else {
        panic!("su2-plane has a non-abelian background")
    };
    let b = [0.3, -0.2, 1.0];
    for p in su2.sample(100, 2) {
        let fa = field_strength_nonabelian(&bg, su2.chart(), &p.x).unwrap();
        for a in 0..3 {
            assert!((fa[a][(0, 1)] - b[a]).abs() <= 1e-12);
            assert!((fa[a][(1, 0)] + b[a]).abs() <= 1e-12);
            assert_eq!(fa[a][(0, 0)], 0.0);
        }
    }
}
