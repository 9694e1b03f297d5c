//! Reference values computed symbolically and frozen here.

use std::collections::BTreeMap;

use covmech::catalog::{self, kerr};
use covmech::phase::{covariant_bracket, momentum};
use covmech::PhasePoint;

fn params(ps: &[(&str, f64)]) -> BTreeMap<String, f64> {
    ps.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol * b.abs().max(1.0), "{a} vs {b}");
}

fn kerr_point() -> PhasePoint {
    PhasePoint::new(vec![0.0, 5.0, 1.0, 0.3], vec![-0.95, 0.2, 1.3, 2.1])
}

#[test]
fn kerr_inverse_metric() {
    let chart = kerr::chart(kerr::KerrParams::new(1.0, 0.8).unwrap());
    let gi = chart.inverse_metric_at(&kerr_point().x).unwrap();
    let expected = [
        ((0, 0), -1.6508901648958395213),
        ((0, 3), -0.020308585488169719854),
        ((1, 1), 0.62095937160337498820),
        ((2, 2), 0.039703284629371802314),
        ((3, 3), 0.054447584206195637236),
    ];
    for ((i, j), v) in expected {
        close(gi[(i, j)], v, 1e-13);
        close(gi[(j, i)], v, 1e-13);
    }
    assert_eq!(gi[(0, 1)], 0.0);
}

#[test]
fn kerr_connection() {
    let chart = kerr::chart(kerr::KerrParams::new(1.0, 0.8).unwrap());
    let g = chart.christoffel_at(&kerr_point().x).unwrap();
    close(g.get(0, 0, 1), 0.024288363757364466712, 1e-12);
    close(g.get(0, 1, 0), 0.064123370907007363481, 1e-12);
    close(g.get(3, 3, 2), -0.46938285448111524126, 1e-12);
    assert!(g.get(1, 2, 3).abs() < 1e-15);
}

#[test]
fn kerr_hamiltonian_and_carter_constant() {
    let sys = catalog::build("kerr", &params(&[])).unwrap();
    let p = kerr_point();
    close(sys.hamiltonian.eval(&p).unwrap(), -0.53842317274180094006, 1e-13);
    close(sys.observable("K").unwrap().value(&p), 2.6681706814549764985, 1e-13);
    let kp = kerr::KerrParams::new(1.0, 0.8).unwrap();
    close(kerr::hamiltonian_closed_form(kp, &p.x, &p.pi), -0.53842317274180094006, 1e-13);
}

#[test]
fn schwarzschild_limit() {
    let sys = catalog::build("kerr", &params(&[("a", 0.0)])).unwrap();
    let p = kerr_point();
    close(sys.hamiltonian.eval(&p).unwrap(), -0.58171997913335536646, 1e-12);
    // K → ½(π_θ² + π_φ²/sin²θ)
    let s = p.x[2].sin();
    let reduced = 0.5 * (p.pi[2] * p.pi[2] + p.pi[3] * p.pi[3] / (s * s));
    close(sys.observable("K").unwrap().value(&p), reduced, 1e-12);
}

#[test]
fn schwarzschild_limit_at_random_points() {
    let sys = catalog::build("kerr", &params(&[("a", 0.0)])).unwrap();
    for p in sys.sample(100, 5) {
        let (r, th) = (p.x[1], p.x[2]);
        let f = 1.0 - 2.0 / r;
        let s2 = th.sin().powi(2);
        let pi = &p.pi;
        let h = 0.5 * (-pi[0] * pi[0] / f + f * pi[1] * pi[1] + pi[2] * pi[2] / (r * r) + pi[3] * pi[3] / (r * r * s2));
        close(sys.hamiltonian.eval(&p).unwrap(), h, 1e-12);
        let k = 0.5 * (pi[2] * pi[2] + pi[3] * pi[3] / s2);
        close(sys.observable("K").unwrap().value(&p), k, 1e-12);
    }
}

#[test]
fn quantum_dot_values() {
    let sys = catalog::build(
        "quantum-dot",
        &params(&[("omega_0", 1.0), ("omega_L", 3f64.sqrt()), ("kappa", 2.0)]),
    )
    .unwrap();
    let p = PhasePoint::new(vec![1.1, 0.4, 0.2], vec![0.3, -0.5, 0.7]);
    close(sys.hamiltonian.eval(&p).unwrap(), -0.65123597659054670713, 1e-13);
    close(sys.observable("G4").unwrap().value(&p), -10.133723298689958540, 1e-13);
    let ctx = sys.hamiltonian.context();
    let b = covariant_bracket(ctx, &*momentum("p_rho", 0), &*momentum("p_phi", 2), &p).unwrap();
    close(b, -3.8105117766515300458, 1e-14);
}

#[test]
fn quantum_dot_harmonic_energy() {
    let sys = catalog::build("quantum-dot", &params(&[("omega_0", 1.0), ("kappa", 0.0)])).unwrap();
    let p = PhasePoint::new(vec![1.0, 0.0, 2.5], vec![0.0; 3]);
    assert_eq!(sys.hamiltonian.eval(&p).unwrap(), 0.5);
}

#[test]
fn su2_invariants_and_brackets() {
    let sys = catalog::build("su2-plane", &params(&[])).unwrap();
    let p = PhasePoint::with_charges(vec![0.7, -0.4], vec![0.5, 0.9], vec![0.6, 0.3, 0.8]);
    let ctx = sys.hamiltonian.context();
    let j = sys.observable("J").unwrap();
    let kx = sys.observable("K_x").unwrap();
    let ky = sys.observable("K_y").unwrap();
    close(j.value(&p), 1.129, 1e-14);
    close(kx.value(&p), 1.743176, 1e-14);
    close(ky.value(&p), -0.979972, 1e-14);
    close(covariant_bracket(ctx, &*j, &*kx, &p).unwrap(), -0.979972, 1e-12);
    close(covariant_bracket(ctx, &*kx, &*ky, &p).unwrap(), -4.71474916, 1e-12);
}
