use std::collections::BTreeMap;

use covmech::catalog::{self, flat, ControlKind, System};
use covmech::killing::{
    closure_check, conserved_check, generator_bracket, hierarchy_check, hierarchy_residual, killing_check,
    killing_residual, GeneratorSeries, SymmetricTensorField,
};
use covmech::phase::{covariant_bracket, TensorMonomial};
use covmech::{BracketContext, Dual, DualNum, PhasePoint};

fn build(name: &str, ps: &[(&str, f64)]) -> System {
    let params: BTreeMap<String, f64> = ps.iter().map(|(k, v)| (k.to_string(), *v)).collect();
    catalog::build(name, &params).unwrap()
}

fn all_systems() -> Vec<System> {
    vec![
        build("flat", &[]),
        build("kerr", &[]),
        build("quantum-dot", &[]),
        build("quantum-dot", &[("omega_0", 1.0), ("omega_L", 3f64.sqrt())]),
        build("su2-plane", &[]),
    ]
}

fn rotation(axis: usize) -> SymmetricTensorField {
    // (L_i)^k = ε_{ijk} x_j
    SymmetricTensorField::new(format!("L{axis}"), 3, 1, move |x: &[Dual]| {
        let (j, k) = ((axis + 1) % 3, (axis + 2) % 3);
        let mut v = vec![Dual::from_re(0.0); 3];
        v[k] = x[j];
        v[j] = -x[k];
        v
    })
}

#[test]
fn rotations_close_into_so3() {
    let chart = flat(3);
    let x = [0.3, -1.1, 2.4];
    for i in 0..3 {
        let (j, k) = ((i + 1) % 3, (i + 2) % 3);
        let c = generator_bracket(&chart, &rotation(i), &rotation(j)).unwrap().evaluate(&x, &[]);
        let expected = rotation(k).evaluate(&x, &[]);
        assert_eq!(c, expected, "[L{i}, L{j}]");
        let back = generator_bracket(&chart, &rotation(j), &rotation(i)).unwrap().evaluate(&x, &[]);
        let neg: Vec<f64> = c.data().iter().map(|v| -v).collect();
        assert_eq!(back.data(), &neg[..]);
    }
}

#[test]
fn generator_bracket_is_pointwise_bracket_on_kerr() {
    let sys = build("kerr", &[]);
    let chart = sys.chart();
    let ctx = BracketContext::geodesic(chart.clone());
    let k = catalog::kerr::carter_field(catalog::kerr::KerrParams::new(1.0, 0.8).unwrap(), false);
    let v = SymmetricTensorField::new("v", 4, 1, |x: &[Dual]| vec![x[1], x[2] * x[2], x[1].recip(), x[3]]);
    let c = generator_bracket(chart, &k, &v).unwrap();
    let (gk, gv) = (TensorMonomial::new(k).shared(), TensorMonomial::new(v).shared());
    for p in sys.sample(20, 6) {
        let br = covariant_bracket(&ctx, &*gk, &*gv, &p).unwrap();
        let cv = c.evaluate(&p.x, &[]).contract(&p.pi);
        assert!((br - cv).abs() <= 1e-9 * br.abs().max(1.0), "{br} {cv}");
    }
}

#[test]
fn registered_invariants_pass_their_checks() {
    for sys in all_systems() {
        let sample = sys.sample(100, 42);
        let tol = sys.tolerances;
        for o in &sys.invariants {
            let c = conserved_check(&sys.hamiltonian, &**o, &sample).unwrap();
            assert!(c.passes(tol.conserved), "{} {}: {}", sys.name, o.name(), c.max_ratio);
        }
        for k in &sys.killing {
            let c = killing_check(sys.chart(), &k.field, &sample).unwrap();
            assert!(c.passes(tol.killing), "{} {}: {}", sys.name, k.name, c.max_ratio);
        }
        for s in &sys.series {
            for (rank, c) in hierarchy_check(&sys.hamiltonian, &s.series, &sample).unwrap().iter().enumerate() {
                assert!(c.passes(tol.hierarchy), "{} {} rank {rank}: {}", sys.name, s.name, c.max_ratio);
            }
        }
        for (a, b) in &sys.closure_pairs {
            let (ga, gb) = (sys.observable(a).unwrap(), sys.observable(b).unwrap());
            let c = closure_check(&sys.hamiltonian, &ga, &gb, &sample).unwrap();
            assert!(c.passes(tol.closure), "{} {{{a},{b}}}: {}", sys.name, c.max_ratio);
        }
    }
}

#[test]
fn negative_controls_fail_by_a_wide_margin() {
    for sys in all_systems() {
        let sample = sys.sample(100, 42);
        for nc in &sys.negative_controls {
            let ratio = match &nc.kind {
                ControlKind::Conserved { hamiltonian, observable } => {
                    conserved_check(hamiltonian, &**observable, &sample).unwrap().max_ratio
                }
                ControlKind::Hierarchy { hamiltonian, series } => hierarchy_check(hamiltonian, series, &sample)
                    .unwrap()
                    .iter()
                    .map(|c| c.max_ratio)
                    .fold(0.0, f64::max),
                ControlKind::Killing { chart, field } => killing_check(chart, field, &sample).unwrap().max_ratio,
            };
            assert!(ratio >= 1e3 * nc.tolerance, "{} {}: {ratio}", sys.name, nc.name);
        }
    }
}

#[test]
fn hierarchy_of_pure_killing_tensor_is_killing_residual() {
    let sys = build("kerr", &[]);
    let field = SymmetricTensorField::new("w", 4, 2, |x: &[Dual]| {
        let z = Dual::from_re(0.0);
        vec![x[1] * x[1], z, x[2], z, x[1], z, z, x[2].cos(), z, x[1] * x[2]]
    });
    let series = GeneratorSeries::single(field.clone());
    for p in sys.sample(5, 3) {
        let h = hierarchy_residual(&sys.hamiltonian, &series, &p.x, &[]).unwrap();
        let k = killing_residual(sys.chart(), &field, &p.x, &[]).unwrap();
        assert!(h.entries.iter().enumerate().all(|(r, e)| r == 3 || e.max_abs() == 0.0));
        let (a, b) = (&h.entries[3].tensor, &k.tensor);
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}

#[test]
fn detuned_dot_refuses_g4() {
    let params: BTreeMap<String, f64> = [("omega_0".to_string(), 1.5)].into_iter().collect();
    let sys = catalog::build("quantum-dot", &params).unwrap();
    assert!(sys.observable("G4").is_err());
    assert!(sys.observable("J").is_ok());
    let q = catalog::quantum_dot::QuantumDotParams {
        omega_0: 1.5,
        omega_z: 1.0,
        omega_l: 0.0,
        kappa: 1.0,
    };
    assert!(matches!(q.g4(), Err(covmech::Error::DetunedParameters { .. })));
}

#[test]
fn unknown_names_are_rejected() {
    assert!(matches!(
        catalog::build("schwarzschild", &BTreeMap::new()),
        Err(covmech::Error::UnknownSystem(_))
    ));
    let params: BTreeMap<String, f64> = [("mass".to_string(), 1.0)].into_iter().collect();
    assert!(catalog::build("kerr", &params).is_err());
    let params: BTreeMap<String, f64> = [("a".to_string(), 1.2)].into_iter().collect();
    assert!(catalog::build("kerr", &params).is_err());
    let p = PhasePoint::new(vec![0.0; 4], vec![0.0; 4]);
    assert!(build("kerr", &[]).hamiltonian.eval(&p).is_err());
}
