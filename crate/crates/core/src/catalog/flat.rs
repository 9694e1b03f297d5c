use std::collections::BTreeMap;

use crate::diff::Dual;
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::geometry::MetricChart;
use crate::killing::{GeneratorSeries, MomentumPolynomial, Normalization, SymmetricTensorField};
use crate::phase::{self, BracketContext, PhasePoint};
use crate::sweep::SampleBox;

use super::{positive, series_observable, KillingEntry, Params, SeriesEntry, System, Tolerances};

fn coordinate_names(dim: usize) -> Vec<String> {
    match dim {
        1..=3 => ["x", "y", "z"][..dim].iter().map(|s| s.to_string()).collect(),
        _ => (0..dim).map(|i| format!("x{i}")).collect(),
    }
}

/// Euclidean space in Cartesian coordinates.
pub fn flat(dim: usize) -> MetricChart {
    let names = coordinate_names(dim);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    MetricChart::new("flat", &refs, move |_x: &[Dual]| {
        let mut out = Vec::with_capacity(dim * (dim + 1) / 2);
        for i in 0..dim {
            for j in i..dim {
                out.push(Dual::from_re(if i == j { 1.0 } else { 0.0 }));
            }
        }
        out
    })
    .with_partials(move |_x: &[f64]| vec![vec![0.0; dim * (dim + 1) / 2]; dim])
}

/// Cylindrical coordinates `(ρ, z, φ)` with metric `diag(1, 1, ρ²)`, `ρ > 0`.
pub fn axial() -> MetricChart {
    let zero = Dual::from_re(0.0);
    let one = Dual::from_re(1.0);
    MetricChart::new("axial", &["rho", "z", "phi"], move |x: &[Dual]| {
        vec![one, zero, zero, one, zero, x[0] * x[0]]
    })
    .with_partials(|x: &[f64]| {
        vec![
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 2.0 * x[0]],
            vec![0.0; 6],
            vec![0.0; 6],
        ]
    })
    .with_domain(|x: &[f64]| x[0] > 0.0)
    .with_boundary_distance(|x: &[f64]| x[0])
}

pub(super) fn build(given: &BTreeMap<String, f64>) -> Result<System> {
    let mut p = Params::new(given, &["dim", "mass"])?;
    let dim_f = p.get("dim", 2.0);
    let mass = positive("mass", p.get("mass", 1.0))?;
    if dim_f.fract() != 0.0 || !(1.0..=6.0).contains(&dim_f) {
        return Err(Error::InvalidParameter {
            name: "dim".into(),
            reason: format!("must be an integer in 1..=6, got {dim_f}"),
        });
    }
    let dim = dim_f as usize;
    let params = p.finish();
    let chart = flat(dim);
    let names = chart.coordinate_names().to_vec();
    let ham = HamiltonianSpec::new(mass, BracketContext::geodesic(chart.clone()))?;

    let mut invariants = vec![ham.observable()];
    let mut killing = vec![KillingEntry {
        name: "inverse-metric".into(),
        field: SymmetricTensorField::inverse_metric(&chart),
    }];
    let mut series = Vec::new();
    for (i, n) in names.iter().enumerate() {
        let name = format!("p_{n}");
        invariants.push(phase::momentum(name.clone(), i));
        let field = SymmetricTensorField::new(name.clone(), dim, 1, move |_x: &[Dual]| {
            (0..dim).map(|k| Dual::from_re(if k == i { 1.0 } else { 0.0 })).collect()
        });
        killing.push(KillingEntry {
            name: name.clone(),
            field: field.clone(),
        });
        series.push(SeriesEntry {
            name,
            series: GeneratorSeries::single(field),
        });
    }
    let mut closure_pairs = Vec::new();
    if dim >= 2 {
        // rotation in the first coordinate plane: J = x p_y − y p_x
        let mut e1 = vec![0; dim];
        e1[1] = 1;
        let mut e0 = vec![0; dim];
        e0[0] = 1;
        let rot = MomentumPolynomial::new(dim, vec![e1, e0], |x: &[Dual], _t: &[Dual]| vec![x[0], -x[1]]);
        let s = rot.to_series(Normalization::Factorial);
        invariants.push(series_observable("J", &s));
        killing.push(KillingEntry {
            name: "J".into(),
            field: s.term(1).expect("rank-1 term").clone().renamed("J"),
        });
        series.push(SeriesEntry { name: "J".into(), series: s });
        closure_pairs.push((format!("p_{}", names[0]), format!("p_{}", names[1])));
        closure_pairs.push(("J".into(), format!("p_{}", names[0])));
    }

    let x0 = vec![0.0; dim];
    let pi0: Vec<f64> = (0..dim).map(|i| 1.0 / (i + 1) as f64).collect();
    Ok(System {
        name: "flat".into(),
        params,
        hamiltonian: ham,
        invariants,
        killing,
        series,
        closure_pairs,
        negative_controls: Vec::new(),
        sample_box: SampleBox::new(vec![[-2.0, 2.0]; dim], 1.0),
        tolerances: Tolerances::default(),
        default_initial: PhasePoint::new(x0, pi0),
    })
}
