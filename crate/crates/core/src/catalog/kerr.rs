//! Kerr black hole in Boyer–Lindquist coordinates `(t, r, θ, φ)`.
//!
//! Signature `(−, +, +, +)`; future-directed orbits have `π_t < 0` and the
//! mass shell is `H = −1/2` for unit rest mass. With `Δ = r² − 2Mr + a²` and
//! `ρ² = r² + a² cos²θ` the Hamiltonian is
//!
//! ```text
//! H = [Δ π_r² + π_θ² + (a sinθ π_t + π_φ/sinθ)² − ((r² + a²) π_t + a π_φ)²/Δ] / (2ρ²)
//! ```
//!
//! and the Carter constant
//!
//! ```text
//! K = [−Δ a² cos²θ π_r² + r² π_θ² + r² (a sinθ π_t + π_φ/sinθ)²
//!      + a² cos²θ ((r² + a²) π_t + a π_φ)²/Δ] / (2ρ²)
//! ```
//!
//! The variant with `r² (a π_t + π_φ/sin²θ)²` as the third term is kept as a
//! negative control; it is not conserved.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use crate::diff::{Dual, DualNum};
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::geometry::MetricChart;
use crate::killing::{GeneratorSeries, SymmetricTensorField};
use crate::phase::{self, BracketContext, PhasePoint};
use crate::sweep::SampleBox;

use super::{
    positive, series_observable, ControlKind, KillingEntry, NegativeControl, Params, SeriesEntry, System, Tolerances,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrParams {
    pub mass: f64,
    pub a: f64,
}

impl KerrParams {
    pub fn new(mass: f64, a: f64) -> Result<Self> {
        positive("M", mass)?;
        if !a.is_finite() || a.abs() >= mass {
            return Err(Error::ExtremalParams { mass, a });
        }
        Ok(KerrParams { mass, a })
    }

    /// Outer horizon `r₊ = M + sqrt(M² − a²)`.
    pub fn outer_horizon(&self) -> f64 {
        self.mass + (self.mass * self.mass - self.a * self.a).sqrt()
    }

    pub fn delta(&self, r: f64) -> f64 {
        r * r - 2.0 * self.mass * r + self.a * self.a
    }

    pub fn rho2(&self, r: f64, theta: f64) -> f64 {
        r * r + self.a * self.a * theta.cos().powi(2)
    }
}

pub fn chart(p: KerrParams) -> MetricChart {
    let (m, a) = (p.mass, p.a);
    let rp = p.outer_horizon();
    let zero = Dual::from_re(0.0);
    MetricChart::new("kerr", &["t", "r", "theta", "phi"], move |x: &[Dual]| {
        let (r, th) = (x[1], x[2]);
        let s2 = th.sin().powi(2);
        let rho2 = r * r + th.cos().powi(2) * (a * a);
        let delta = r * r - r * (2.0 * m) + a * a;
        let gtt = -(-(r * (2.0 * m)) / rho2 + 1.0);
        let gtp = -(r * s2 * (2.0 * m * a)) / rho2;
        let grr = rho2 / delta;
        let gpp = (r * r + a * a + r * s2 * (2.0 * m * a * a) / rho2) * s2;
        // packed (t,t) (t,r) (t,θ) (t,φ) (r,r) (r,θ) (r,φ) (θ,θ) (θ,φ) (φ,φ)
        vec![gtt, zero, zero, gtp, grr, zero, zero, rho2, zero, gpp]
    })
    .with_domain(move |x: &[f64]| x[1] > rp && x[2].sin().abs() > 0.0)
    .with_boundary_distance(move |x: &[f64]| (x[1] - rp).min(x[2].sin().abs()))
    .with_signature(vec![-1, 1, 1, 1])
}

/// The Hamiltonian written out in closed form (unit mass).
pub fn hamiltonian_closed_form(p: KerrParams, x: &[f64], pi: &[f64]) -> f64 {
    let (r, th) = (x[1], x[2]);
    let (s, a) = (th.sin(), p.a);
    let delta = p.delta(r);
    let ang = a * s * pi[0] + pi[3] / s;
    let rad = (r * r + a * a) * pi[0] + a * pi[3];
    (delta * pi[1] * pi[1] + pi[2] * pi[2] + ang * ang - rad * rad / delta) / (2.0 * p.rho2(r, th))
}

/// Carter tensor `K^{μν}` (`K = K^{μν} π_μ π_ν`); `printed` selects the
/// non-conserved variant.
pub fn carter_field(p: KerrParams, printed: bool) -> SymmetricTensorField {
    let (m, a) = (p.mass, p.a);
    let name = if printed { "K_printed" } else { "K" };
    SymmetricTensorField::sparse(name, 4, 2, move |x: &[Dual], _t: &[Dual]| {
        let (r, th) = (x[1], x[2]);
        let (s, c) = (th.sin(), th.cos());
        let (r2, s2, c2) = (r * r, s * s, c * c);
        let delta = r2 - r * (2.0 * m) + a * a;
        let two_rho2 = (r2 + c2 * (a * a)) * 2.0;
        let ra = r2 + a * a;
        let (tt, tp, pp) = if printed {
            (r2 * (a * a), r2 * a / s2, r2 / (s2 * s2))
        } else {
            (r2 * s2 * (a * a), r2 * a, r2 / s2)
        };
        let tt = tt + c2 * ra * ra * (a * a) / delta;
        let tp = tp + c2 * ra * (a * a * a) / delta;
        let pp = pp + c2 * (a * a * a * a) / delta;
        vec![
            (vec![0, 0], tt / two_rho2),
            (vec![0, 3], tp / two_rho2),
            (vec![3, 3], pp / two_rho2),
            (vec![1, 1], -(delta * c2 * (a * a)) / two_rho2),
            (vec![2, 2], r2 / two_rho2),
        ]
    })
}

fn unit_vector(name: &str, k: usize) -> SymmetricTensorField {
    SymmetricTensorField::new(name, 4, 1, move |_x: &[Dual]| {
        (0..4).map(|i| Dual::from_re(if i == k { 1.0 } else { 0.0 })).collect()
    })
}

/// Future-directed `π_t` putting `(x, π_r, π_θ, π_φ)` on the unit mass shell
/// `H = −1/2`.
pub fn mass_shell_pt(p: KerrParams, x: &[f64], pr: f64, pth: f64, pph: f64) -> Result<f64> {
    let ginv = chart(p).inverse_metric_at(x)?;
    let b = ginv[(0, 3)] * pph;
    let rest = ginv[(1, 1)] * pr * pr + ginv[(2, 2)] * pth * pth + ginv[(3, 3)] * pph * pph;
    let disc = b * b - ginv[(0, 0)] * (rest + 1.0);
    if !(disc >= 0.0) || ginv[(0, 0)] >= 0.0 {
        return Err(Error::InvalidParameter {
            name: "initial".into(),
            reason: "no timelike mass-shell solution at this point".into(),
        });
    }
    Ok((-b + disc.sqrt()) / ginv[(0, 0)])
}

pub(super) fn build(given: &BTreeMap<String, f64>) -> Result<System> {
    let mut pr = Params::new(given, &["M", "a"])?;
    let mass = pr.get("M", 1.0);
    let a = pr.get("a", 0.8);
    let params = pr.finish();
    let kp = KerrParams::new(mass, a)?;
    let chart = chart(kp);
    let ham = HamiltonianSpec::new(1.0, BracketContext::geodesic(chart.clone()))?;

    let carter = carter_field(kp, false);
    let printed = carter_field(kp, true);
    let carter_series = GeneratorSeries::single(carter.clone());
    let pt = unit_vector("p_t", 0);
    let pphi = unit_vector("p_phi", 3);

    let invariants = vec![
        ham.observable(),
        phase::momentum("p_t", 0),
        phase::momentum("p_phi", 3),
        series_observable("K", &carter_series),
    ];
    let killing = vec![
        KillingEntry {
            name: "inverse-metric".into(),
            field: SymmetricTensorField::inverse_metric(&chart),
        },
        KillingEntry {
            name: "p_t".into(),
            field: pt.clone(),
        },
        KillingEntry {
            name: "p_phi".into(),
            field: pphi.clone(),
        },
        KillingEntry {
            name: "K".into(),
            field: carter.clone(),
        },
    ];
    let series = vec![
        SeriesEntry {
            name: "p_t".into(),
            series: GeneratorSeries::single(pt),
        },
        SeriesEntry {
            name: "p_phi".into(),
            series: GeneratorSeries::single(pphi),
        },
        SeriesEntry {
            name: "K".into(),
            series: carter_series,
        },
    ];
    let tolerances = Tolerances {
        conserved: 1e-8,
        killing: 1e-8,
        hierarchy: 1e-8,
        closure: 1e-7,
        drift: 1e-7,
    };
    let negative_controls = vec![
        NegativeControl {
            name: "K_printed (killing)".into(),
            kind: ControlKind::Killing {
                chart: chart.clone(),
                field: printed.clone(),
            },
            tolerance: tolerances.killing,
        },
        NegativeControl {
            name: "K_printed (conserved)".into(),
            kind: ControlKind::Conserved {
                hamiltonian: ham.clone(),
                observable: series_observable("K_printed", &GeneratorSeries::single(printed)),
            },
            tolerance: tolerances.conserved,
        },
    ];

    // generic non-equatorial bound orbit
    let x0 = vec![0.0, 10.0 * mass, 1.2, 0.0];
    let (p_r, p_th, p_ph) = (0.0, 1.6 * mass, 2.6 * mass);
    let p_t = mass_shell_pt(kp, &x0, p_r, p_th, p_ph)?;
    Ok(System {
        name: "kerr".into(),
        params,
        hamiltonian: ham,
        invariants,
        killing,
        series,
        closure_pairs: vec![
            ("p_phi".into(), "K".into()),
            ("p_t".into(), "K".into()),
            ("p_t".into(), "p_phi".into()),
        ],
        negative_controls,
        sample_box: SampleBox::new(
            vec![[0.0, 10.0 * mass], [3.0 * mass, 20.0 * mass], [0.2, PI - 0.2], [0.0, 2.0 * PI]],
            1.0,
        ),
        tolerances,
        default_initial: PhasePoint::new(x0, vec![p_t, p_r, p_th, p_ph]),
    })
}
