//! Two-electron quantum dot in a magnetic field, relative motion only, in
//! cylindrical coordinates `(ρ, z, φ)` with unit mass.
//!
//! The field enters through `A_φ = −ω_L ρ²`, so `{π_ρ, π_φ} = −2 ω_L ρ`, and
//!
//! ```text
//! Φ = ½(ω₀² ρ² + ω_z² z²) − κ / sqrt(ρ² + z²)
//! ```
//!
//! When `ω_L² + ω₀² = 4 ω_z²` a quartic invariant `G₄` exists. Relative to
//! this orientation of the field its Larmor-odd terms carry `w = −ω_L`; the
//! polynomial with `w = +ω_L` is exposed as a negative control.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::diff::{Dual, DualNum};
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::gauge::{AbelianBackground, ScalarPotential};
use crate::killing::{MomentumPolynomial, Normalization, SymmetricTensorField};
use crate::phase::{BracketContext, PhasePoint};
use crate::sweep::SampleBox;

use super::{axial, positive, series_observable, ControlKind, KillingEntry, NegativeControl, Params, SeriesEntry, System, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantumDotParams {
    pub omega_0: f64,
    pub omega_z: f64,
    pub omega_l: f64,
    pub kappa: f64,
}

impl QuantumDotParams {
    /// `ω_L² + ω₀² − 4ω_z²`.
    pub fn mismatch(&self) -> f64 {
        self.omega_l * self.omega_l + self.omega_0 * self.omega_0 - 4.0 * self.omega_z * self.omega_z
    }

    pub fn tuned(&self) -> bool {
        let scale = (4.0 * self.omega_z * self.omega_z).max(self.omega_0 * self.omega_0);
        self.mismatch().abs() <= 1e-12 * scale
    }

    /// The same dot with the field (or, at zero field, the radial trap)
    /// detuned by 10 %.
    pub fn detuned(&self) -> Self {
        let mut p = *self;
        if p.omega_l != 0.0 {
            p.omega_l *= 1.1;
        } else {
            p.omega_0 *= 1.1;
        }
        p
    }

    pub fn context(&self) -> BracketContext {
        let wl = self.omega_l;
        let bg = AbelianBackground::new(1.0, move |x: &[Dual]| {
            vec![Dual::from_re(0.0), Dual::from_re(0.0), -(x[0] * x[0]) * wl]
        })
        .with_partials(move |x: &[f64]| {
            vec![
                vec![0.0, 0.0, -2.0 * wl * x[0]],
                vec![0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0],
            ]
        });
        let (w0, wz, k) = (self.omega_0, self.omega_z, self.kappa);
        let phi = ScalarPotential::new(move |x: &[Dual]| {
            let (r, z) = (x[0], x[1]);
            (r * r * (w0 * w0) + z * z * (wz * wz)) * 0.5 - (r * r + z * z).sqrt().recip() * k
        });
        BracketContext::abelian(axial(), bg).with_scalar_potential(phi)
    }

    pub fn hamiltonian(&self) -> HamiltonianSpec {
        HamiltonianSpec::new(1.0, self.context()).expect("unit mass")
    }

    /// `G₄`; fails unless the tuning condition holds.
    pub fn g4(&self) -> Result<MomentumPolynomial> {
        if !self.tuned() {
            return Err(Error::DetunedParameters {
                mismatch: self.mismatch(),
            });
        }
        Ok(g4_polynomial(*self, -self.omega_l))
    }

    /// `π_φ − ω_L ρ²`.
    pub fn angular_momentum(&self) -> MomentumPolynomial {
        let wl = self.omega_l;
        MomentumPolynomial::new(3, vec![vec![0, 0, 1], vec![0, 0, 0]], move |x: &[Dual], _t: &[Dual]| {
            vec![Dual::from_re(1.0), -(x[0] * x[0]) * wl]
        })
    }
}

/// The quartic polynomial with Larmor parameter `w` in its odd terms.
pub fn g4_polynomial(p: QuantumDotParams, w: f64) -> MomentumPolynomial {
    let (w0, wz, k) = (p.omega_0, p.omega_z, p.kappa);
    let (w02, wz2, w2) = (w0 * w0, wz * wz, w * w);
    let exps = vec![
        vec![0, 4, 0],
        vec![1, 3, 0],
        vec![2, 2, 0],
        vec![0, 0, 4],
        vec![2, 0, 2],
        vec![0, 2, 2],
        vec![2, 0, 1],
        vec![0, 2, 1],
        vec![1, 1, 0],
        vec![0, 2, 0],
        vec![2, 0, 0],
        vec![0, 0, 2],
        vec![0, 0, 1],
        vec![0, 0, 0],
    ];
    MomentumPolynomial::new(3, exps, move |x: &[Dual], _t: &[Dual]| {
        let (r, z) = (x[0], x[1]);
        let (r2, z2) = (r * r, z * z);
        let rr = (r2 + z2).sqrt();
        let kr = rr.recip() * k;
        let r4 = r2 * r2;
        let one = Dual::from_re(1.0);
        vec![
            r2,
            -(r * z) * 2.0,
            z2,
            r2.recip(),
            one,
            z2 / r2 + 2.0,
            r2 * (2.0 * w),
            (r2 * 2.0 + z2) * (2.0 * w),
            z2 * z * r * (2.0 * wz2) + z * r * kr * 2.0,
            z2 * r2 * (2.0 * wz2 - w02) + r4 * (2.0 * w2) - r2 * kr * 2.0,
            r4 * w2,
            z2 * (2.0 * wz2) + r2 * (w02 - 5.0 * w2) - kr * 2.0,
            (r4 * (3.0 * w2 - w02) - r2 * z2 * (2.0 * wz2) + r2 * kr * 2.0) * (-2.0 * w),
            r2 * z2 * z2 * (wz2 * wz2) + r4 * z2 * (2.0 * wz2 * w2) - r4 * r2 * (w2 * (3.0 * w2 - 4.0 * wz2))
                + kr * 2.0 * (r2 * z2 * wz2 - r4 * w2)
                + (r2 - z2) / (r2 + z2) * (0.5 * k * k),
        ]
    })
}

pub(super) fn build(given: &BTreeMap<String, f64>) -> Result<System> {
    let mut pr = Params::new(given, &["omega_0", "omega_z", "omega_L", "kappa"])?;
    let qp = QuantumDotParams {
        omega_0: positive("omega_0", pr.get("omega_0", 2.0))?,
        omega_z: positive("omega_z", pr.get("omega_z", 1.0))?,
        omega_l: pr.get("omega_L", 0.0),
        kappa: pr.get("kappa", 1.0),
    };
    let params = pr.finish();
    let ham = qp.hamiltonian();
    let chart = ham.context().chart().clone();

    let j = qp.angular_momentum().to_series(Normalization::Factorial);
    let mut invariants = vec![ham.observable(), series_observable("J", &j)];
    let mut series = vec![SeriesEntry {
        name: "J".into(),
        series: j,
    }];
    let tolerances = Tolerances {
        conserved: 1e-9,
        killing: 1e-8,
        hierarchy: 1e-7,
        closure: 1e-6,
        drift: 1e-6,
    };
    let mut negative_controls = Vec::new();
    let mut closure_pairs = Vec::new();
    if qp.tuned() {
        let g4 = qp.g4()?.to_series(Normalization::Factorial);
        invariants.push(series_observable("G4", &g4));
        series.push(SeriesEntry {
            name: "G4".into(),
            series: g4,
        });
        closure_pairs.push(("J".into(), "G4".into()));
        let det = qp.detuned();
        negative_controls.push(NegativeControl {
            name: "G4 detuned by 10%".into(),
            kind: ControlKind::Hierarchy {
                hamiltonian: det.hamiltonian(),
                series: g4_polynomial(det, -det.omega_l).to_series(Normalization::Factorial),
            },
            tolerance: tolerances.hierarchy,
        });
        if qp.omega_l != 0.0 {
            negative_controls.push(NegativeControl {
                name: "G4 with opposite Larmor orientation".into(),
                kind: ControlKind::Hierarchy {
                    hamiltonian: ham.clone(),
                    series: g4_polynomial(qp, qp.omega_l).to_series(Normalization::Factorial),
                },
                tolerance: tolerances.hierarchy,
            });
        }
    }
    let rotation = SymmetricTensorField::new("p_phi", 3, 1, |_x: &[Dual]| {
        vec![Dual::from_re(0.0), Dual::from_re(0.0), Dual::from_re(1.0)]
    });
    let killing = vec![
        KillingEntry {
            name: "inverse-metric".into(),
            field: SymmetricTensorField::inverse_metric(&chart),
        },
        KillingEntry {
            name: "p_phi".into(),
            field: rotation,
        },
    ];
    Ok(System {
        name: "quantum-dot".into(),
        params,
        hamiltonian: ham,
        invariants,
        killing,
        series,
        closure_pairs,
        negative_controls,
        sample_box: SampleBox::new(vec![[0.3, 2.0], [-1.5, 1.5], [0.0, 2.0 * PI]], 1.0),
        tolerances,
        default_initial: PhasePoint::new(vec![1.0, 0.3, 0.0], vec![0.2, 0.1, 0.6]),
    })
}
