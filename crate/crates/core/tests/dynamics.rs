use std::collections::BTreeMap;

use covmech::catalog::{self, axial, flat};
use covmech::diff::Dual2;
use covmech::dynamics::{
    equations_of_motion, equations_of_motion_closed_form, integrate, momentum_from_velocity, velocity_from_momentum,
    HamiltonianSpec, IntegratorConfig, TrajectoryStatus,
};
use covmech::gauge::{apply_gauge_transformation, AbelianBackground};
use covmech::phase::noether_flow;
use covmech::{BracketContext, Dual, DualNum, PhasePoint};

fn params(ps: &[(&str, f64)]) -> BTreeMap<String, f64> {
    ps.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

#[test]
fn bracket_flow_matches_closed_form() {
    let cases = [
        ("kerr", params(&[])),
        ("quantum-dot", params(&[])),
        ("quantum-dot", params(&[("omega_0", 1.0), ("omega_L", 3f64.sqrt())])),
        ("su2-plane", params(&[])),
        ("flat", params(&[("dim", 3.0)])),
    ];
    for (name, ps) in cases {
        let sys = catalog::build(name, &ps).unwrap();
        for p in sys.sample(100, 31) {
            let a = equations_of_motion(&sys.hamiltonian, &p).unwrap().to_state();
            let b = equations_of_motion_closed_form(&sys.hamiltonian, &p).unwrap().to_state();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() <= 1e-9 * v.abs().max(1.0), "{name}: {u} vs {v}");
            }
        }
    }
}

#[test]
fn hamiltonian_flow_is_noether_flow_of_h() {
    let sys = catalog::build("quantum-dot", &params(&[("omega_0", 1.0), ("omega_L", 3f64.sqrt())])).unwrap();
    let h = sys.hamiltonian.observable();
    for p in sys.sample(10, 4) {
        let eom = equations_of_motion(&sys.hamiltonian, &p).unwrap();
        let flow = noether_flow(sys.hamiltonian.context(), &*h, &p).unwrap();
        // dz/dτ = {z, H}: ẋ = ∂H/∂π, while the covariant momentum variation
        // −DH omits the Lorentz term carried by the bracket.
        for (u, v) in eom.dx.iter().zip(&flow.dx) {
            assert!((u - v).abs() <= 1e-12);
        }
    }
}

#[test]
fn momentum_velocity_examples() {
    let two = HamiltonianSpec::new(2.0, BracketContext::geodesic(flat(2))).unwrap();
    assert_eq!(momentum_from_velocity(&two, &[0.0, 0.0], &[1.0, 0.0]).unwrap(), vec![2.0, 0.0]);
    let ax = HamiltonianSpec::new(1.0, BracketContext::geodesic(axial())).unwrap();
    assert_eq!(momentum_from_velocity(&ax, &[2.0, 0.0, 0.0], &[0.0, 0.0, 0.7]).unwrap()[2], 4.0 * 0.7);

    let kerr = catalog::build("kerr", &params(&[])).unwrap();
    for p in kerr.sample(20, 8) {
        let v = velocity_from_momentum(&kerr.hamiltonian, &p.x, &p.pi).unwrap();
        let back = momentum_from_velocity(&kerr.hamiltonian, &p.x, &v).unwrap();
        for (a, b) in back.iter().zip(&p.pi) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn positions_are_gauge_invariant() {
    let b = 1.3;
    let bg = AbelianBackground::new(1.0, move |x: &[Dual]| vec![x[1] * (-0.5 * b), x[0] * (0.5 * b)]);
    let shifted = apply_gauge_transformation(&bg, |x: &[Dual2]| x[0] * x[1] + x[0].sin());
    let run = |bg: AbelianBackground| {
        let spec = HamiltonianSpec::new(1.0, BracketContext::abelian(flat(2), bg)).unwrap();
        let p0 = PhasePoint::new(vec![0.5, -0.2], vec![0.4, 0.9]);
        integrate(&spec, &p0, &IntegratorConfig::rk45(1e-10, 1e-12), (0.0, 20.0), &[spec.observable()]).unwrap()
    };
    let (a, c) = (run(bg), run(shifted));
    let (pa, pc) = (&a.final_sample().point, &c.final_sample().point);
    for (u, v) in pa.x.iter().zip(&pc.x) {
        assert!((u - v).abs() <= 1e-9, "{u} vs {v}");
    }
    assert!(a.monitors[0].max_rel_drift <= 1e-9 && c.monitors[0].max_rel_drift <= 1e-9);
}

#[test]
fn wong_precession_keeps_casimir() {
    let sys = catalog::build("su2-plane", &params(&[])).unwrap();
    let casimir = sys.observable("|t|^2").unwrap();
    let tr = integrate(
        &sys.hamiltonian,
        &sys.default_initial,
        &IntegratorConfig::rk45(1e-10, 1e-12).with_record_every(100),
        (0.0, 100.0),
        &[casimir],
    )
    .unwrap();
    assert_eq!(tr.status, TrajectoryStatus::Completed);
    assert!(tr.monitors[0].max_rel_drift <= 1e-9, "{}", tr.monitors[0].max_rel_drift);
    // the charges do move
    let t_end = &tr.final_sample().point.t;
    assert!((t_end[0] - sys.default_initial.t[0]).abs() > 1e-3);
}

#[test]
fn kerr_orbit_stays_bound_and_conserves() {
    let sys = catalog::build("kerr", &params(&[])).unwrap();
    let cfg = IntegratorConfig::rk45(1e-10, 1e-12).with_record_every(50);
    let tr = integrate(&sys.hamiltonian, &sys.default_initial, &cfg, (0.0, 2000.0), &sys.invariants).unwrap();
    assert_eq!(tr.status, TrajectoryStatus::Completed);
    let radii: Vec<f64> = tr.samples.iter().map(|s| s.point.x[1]).collect();
    let (lo, hi) = radii.iter().fold((f64::MAX, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
    assert!(lo > 3.0 && hi < 30.0 && hi - lo > 2.0, "r in [{lo}, {hi}]");
    let h = tr.monitor("H").unwrap();
    assert!(h.max_rel_drift <= 1e-8);
    for name in ["p_t", "p_phi", "K"] {
        assert!(tr.monitor(name).unwrap().max_rel_drift <= 1e-7, "{name}");
    }
}

#[test]
fn plunging_orbit_stops_at_margin() {
    let sys = catalog::build("kerr", &params(&[])).unwrap();
    let mut p0 = sys.default_initial.clone();
    p0.pi = vec![p0.pi[0], -2.0, 0.0, 0.0];
    let cfg = IntegratorConfig::rk45(1e-9, 1e-12).with_domain_margin(0.05);
    let tr = integrate(&sys.hamiltonian, &p0, &cfg, (0.0, 1000.0), &[]).unwrap();
    assert!(matches!(tr.status, TrajectoryStatus::DomainStop { .. }), "{:?}", tr.status);
    assert!(tr.final_sample().point.x[1] > 1.6);
}

#[test]
fn rk4_energy_error_is_fourth_order() {
    let sys = catalog::build(
        "quantum-dot",
        &params(&[("omega_0", 1.0), ("omega_L", 3f64.sqrt()), ("kappa", 2.0)]),
    )
    .unwrap();
    let h = vec![sys.hamiltonian.observable()];
    let drift = |step: f64| {
        let tr = integrate(&sys.hamiltonian, &sys.default_initial, &IntegratorConfig::rk4(step), (0.0, 10.0), &h).unwrap();
        tr.monitors[0].max_abs_drift
    };
    let d: Vec<f64> = [0.0025, 0.00125, 0.000625, 0.0003125].iter().map(|s| drift(*s)).collect();
    for w in d.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!((order - 4.0).abs() <= 0.3, "{d:?}");
    }
}
