//! Particle with SU(2) charge in the plane, in a covariantly constant field
//! `F^a_{ij} = ε_{ij} B^a` from the potential `A^a_i = −½ ε_{ij} x^j B^a`.
//!
//! With `β = g t_a B^a` the registered invariants are
//!
//! ```text
//! J   = x π_y − y π_x + ½ β r²
//! K_i = x_i π² − π_i (x·π) + β (½ ε_{ij} π_j r² + x_i x_j ε_{jk} π_k) + ½ β² x_i r²
//! ```
//!
//! together with the Casimir `|t|²`. The charges are phase-space variables,
//! so these only commute with `H` under the full bracket including the
//! charge-algebra term.

use std::collections::BTreeMap;

use crate::diff::Dual;
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::gauge::{NonAbelianBackground, StructureConstants};
use crate::killing::{MomentumPolynomial, Normalization, SymmetricTensorField};
use crate::phase::{BracketContext, PhasePoint};
use crate::sweep::SampleBox;

use super::{flat, series_observable, ControlKind, KillingEntry, NegativeControl, Params, SeriesEntry, System, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Su2PlaneParams {
    pub g: f64,
    pub b: [f64; 3],
    pub t: [f64; 3],
}

fn beta(g: f64, b: [f64; 3], t: &[Dual]) -> Dual {
    (t[0] * b[0] + t[1] * b[1] + t[2] * b[2]) * g
}

impl Su2PlaneParams {
    pub fn background(&self) -> NonAbelianBackground {
        let b = self.b;
        NonAbelianBackground::new(self.g, StructureConstants::su2(), 2, move |x: &[Dual]| {
            // A^a_x = −½ y B^a, A^a_y = ½ x B^a
            (0..3).flat_map(|a| [x[1] * (-0.5 * b[a]), x[0] * (0.5 * b[a])]).collect()
        })
    }

    pub fn hamiltonian(&self) -> HamiltonianSpec {
        HamiltonianSpec::new(1.0, BracketContext::non_abelian(flat(2), self.background())).expect("unit mass")
    }

    pub fn angular_momentum(&self, with_charge_term: bool) -> MomentumPolynomial {
        let (g, b) = (self.g, self.b);
        MomentumPolynomial::new(2, vec![vec![0, 1], vec![1, 0], vec![0, 0]], move |x: &[Dual], t: &[Dual]| {
            let extra = if with_charge_term {
                beta(g, b, t) * (x[0] * x[0] + x[1] * x[1]) * 0.5
            } else {
                Dual::from_re(0.0)
            };
            vec![x[0], -x[1], extra]
        })
    }

    /// `K_x` (`i = 0`) or `K_y` (`i = 1`).
    pub fn runge_lenz(&self, i: usize) -> MomentumPolynomial {
        let (g, b) = (self.g, self.b);
        let exps = vec![vec![2, 0], vec![1, 1], vec![0, 2], vec![1, 0], vec![0, 1], vec![0, 0]];
        MomentumPolynomial::new(2, exps, move |x: &[Dual], t: &[Dual]| {
            let (px, py) = (x[0], x[1]);
            let bt = beta(g, b, t);
            let r2 = px * px + py * py;
            let zero = Dual::from_re(0.0);
            let xi = x[i];
            if i == 0 {
                vec![
                    zero,
                    -py,
                    px,
                    -(bt * px * py),
                    bt * r2 * 0.5 + bt * px * px,
                    bt * bt * xi * r2 * 0.5,
                ]
            } else {
                vec![
                    py,
                    -px,
                    zero,
                    -(bt * r2 * 0.5) - bt * py * py,
                    bt * px * py,
                    bt * bt * xi * r2 * 0.5,
                ]
            }
        })
    }

    pub fn casimir(&self) -> MomentumPolynomial {
        MomentumPolynomial::new(2, vec![vec![0, 0]], |_x: &[Dual], t: &[Dual]| {
            vec![t.iter().fold(Dual::from_re(0.0), |s, v| s + *v * *v)]
        })
    }
}

pub(super) fn build(given: &BTreeMap<String, f64>) -> Result<System> {
    let mut pr = Params::new(given, &["g", "B1", "B2", "B3", "t1", "t2", "t3"])?;
    let sp = Su2PlaneParams {
        g: pr.get("g", 1.0),
        b: [pr.get("B1", 0.3), pr.get("B2", -0.2), pr.get("B3", 1.0)],
        t: [pr.get("t1", 0.6), pr.get("t2", 0.3), pr.get("t3", 0.8)],
    };
    let params = pr.finish();
    let bnorm = sp.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Err(Error::InvalidParameter {
            name: "B".into(),
            reason: "field must be non-zero".into(),
        });
    }
    let tnorm = sp.t.iter().map(|v| v * v).sum::<f64>().sqrt();
    if tnorm == 0.0 {
        return Err(Error::InvalidParameter {
            name: "t".into(),
            reason: "initial charge must be non-zero".into(),
        });
    }
    let ham = sp.hamiltonian();
    let chart = ham.context().chart().clone();

    let entries = [
        ("J", sp.angular_momentum(true)),
        ("K_x", sp.runge_lenz(0)),
        ("K_y", sp.runge_lenz(1)),
        ("|t|^2", sp.casimir()),
    ];
    let mut invariants = vec![ham.observable()];
    let mut series = Vec::new();
    for (name, poly) in entries {
        let s = poly.to_series(Normalization::Factorial);
        invariants.push(series_observable(name, &s));
        series.push(SeriesEntry {
            name: name.into(),
            series: s,
        });
    }
    let tolerances = Tolerances {
        conserved: 1e-9,
        killing: 1e-8,
        hierarchy: 1e-9,
        closure: 1e-6,
        drift: 1e-7,
    };
    let stripped = sp.angular_momentum(false).to_series(Normalization::Factorial);
    let negative_controls = vec![
        NegativeControl {
            name: "J without charge term".into(),
            kind: ControlKind::Conserved {
                hamiltonian: ham.clone(),
                observable: series_observable("J_stripped", &stripped),
            },
            tolerance: tolerances.conserved,
        },
        NegativeControl {
            name: "J without charge term (hierarchy)".into(),
            kind: ControlKind::Hierarchy {
                hamiltonian: ham.clone(),
                series: stripped,
            },
            tolerance: tolerances.hierarchy,
        },
    ];
    let translations = (0..2).map(|k| KillingEntry {
        name: ["p_x", "p_y"][k].into(),
        field: SymmetricTensorField::new(["p_x", "p_y"][k], 2, 1, move |_x: &[Dual]| {
            (0..2).map(|i| Dual::from_re(if i == k { 1.0 } else { 0.0 })).collect()
        }),
    });
    let mut killing = vec![KillingEntry {
        name: "inverse-metric".into(),
        field: SymmetricTensorField::inverse_metric(&chart),
    }];
    killing.extend(translations);
    Ok(System {
        name: "su2-plane".into(),
        params,
        hamiltonian: ham,
        invariants,
        killing,
        series,
        closure_pairs: vec![
            ("J".into(), "K_x".into()),
            ("J".into(), "K_y".into()),
            ("K_x".into(), "K_y".into()),
        ],
        negative_controls,
        sample_box: SampleBox::new(vec![[-2.0, 2.0], [-2.0, 2.0]], 1.0).with_charges(3, tnorm),
        tolerances,
        default_initial: PhasePoint::with_charges(vec![1.0, 0.0], vec![0.0, 0.5], sp.t.to_vec()),
    })
}
