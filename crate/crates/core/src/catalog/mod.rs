//! Ready-made systems with their registered constants of motion, sample
//! boxes, tolerances and negative controls.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::geometry::MetricChart;
use crate::killing::{GeneratorSeries, SymmetricTensorField};
use crate::phase::{self, PhasePoint, SharedObservable};
use crate::sweep::SampleBox;

mod flat;
pub mod kerr;
pub mod quantum_dot;
pub mod su2;

pub use flat::{axial, flat};

pub const SYSTEM_NAMES: [&str; 4] = ["flat", "kerr", "quantum-dot", "su2-plane"];

/// Relative tolerances (`|residual| <= tol * scale`) used by verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub conserved: f64,
    pub killing: f64,
    pub hierarchy: f64,
    pub closure: f64,
    /// Relative trajectory drift of registered invariants.
    pub drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            conserved: 1e-9,
            killing: 1e-8,
            hierarchy: 1e-7,
            closure: 1e-6,
            drift: 1e-7,
        }
    }
}

/// A deliberately broken variant that verification must reject.
#[derive(Clone)]
pub enum ControlKind {
    Conserved {
        hamiltonian: HamiltonianSpec,
        observable: SharedObservable,
    },
    Hierarchy {
        hamiltonian: HamiltonianSpec,
        series: GeneratorSeries,
    },
    Killing {
        chart: MetricChart,
        field: SymmetricTensorField,
    },
}

#[derive(Clone)]
pub struct NegativeControl {
    pub name: String,
    pub kind: ControlKind,
    pub tolerance: f64,
}

/// A named Killing-tensor candidate.
#[derive(Clone)]
pub struct KillingEntry {
    pub name: String,
    pub field: SymmetricTensorField,
}

/// A named series checked against the gauge-covariant hierarchy.
#[derive(Clone)]
pub struct SeriesEntry {
    pub name: String,
    pub series: GeneratorSeries,
}

#[derive(Clone)]
pub struct System {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub hamiltonian: HamiltonianSpec,
    /// Registered constants of motion, `H` first.
    pub invariants: Vec<SharedObservable>,
    pub killing: Vec<KillingEntry>,
    pub series: Vec<SeriesEntry>,
    pub closure_pairs: Vec<(String, String)>,
    pub negative_controls: Vec<NegativeControl>,
    pub sample_box: SampleBox,
    pub tolerances: Tolerances,
    pub default_initial: PhasePoint,
}

impl System {
    pub fn chart(&self) -> &MetricChart {
        self.hamiltonian.context().chart()
    }

    /// Resolves a registered invariant or a built-in name: `H`, a coordinate
    /// name, `p_<coordinate>`, or `t<k>` (1-based charge index).
    pub fn observable(&self, name: &str) -> Result<SharedObservable> {
        if let Some(o) = self.invariants.iter().find(|o| o.name() == name) {
            return Ok(o.clone());
        }
        if name == "H" {
            return Ok(self.hamiltonian.observable());
        }
        let coords = self.chart().coordinate_names();
        if let Some(i) = coords.iter().position(|c| c == name) {
            return Ok(phase::coordinate(name, i));
        }
        if let Some(rest) = name.strip_prefix("p_") {
            if let Some(i) = coords.iter().position(|c| c == rest) {
                return Ok(phase::momentum(name, i));
            }
        }
        if let Some(k) = name.strip_prefix('t').and_then(|k| k.parse::<usize>().ok()) {
            if k >= 1 && k <= self.hamiltonian.context().algebra_dim() {
                return Ok(phase::charge(name, k - 1));
            }
        }
        Err(Error::UnknownObservable(name.to_string()))
    }

    pub fn invariant_names(&self) -> Vec<String> {
        self.invariants.iter().map(|o| o.name().to_string()).collect()
    }

    /// Deterministic random sample inside the declared box and the chart domain.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<PhasePoint> {
        let chart = self.chart().clone();
        crate::sweep::sample_points(&self.sample_box, n, seed, move |x| chart.in_domain(x))
    }
}

/// Parameter reader that rejects unknown names and fills defaults.
pub(crate) struct Params<'a> {
    given: &'a BTreeMap<String, f64>,
    resolved: BTreeMap<String, f64>,
}

impl<'a> Params<'a> {
    pub(crate) fn new(given: &'a BTreeMap<String, f64>, known: &[&str]) -> Result<Self> {
        if let Some(bad) = given.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidParameter {
                name: bad.clone(),
                reason: format!("not a parameter of this system (expected one of {known:?})"),
            });
        }
        if let Some((k, v)) = given.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: k.clone(),
                reason: format!("must be finite, got {v}"),
            });
        }
        Ok(Params {
            given,
            resolved: BTreeMap::new(),
        })
    }

    pub(crate) fn get(&mut self, name: &str, default: f64) -> f64 {
        let v = self.given.get(name).copied().unwrap_or(default);
        self.resolved.insert(name.to_string(), v);
        v
    }

    pub(crate) fn finish(self) -> BTreeMap<String, f64> {
        self.resolved
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::InvalidParameter {
            name: name.to_string(),
            reason: format!("must be positive, got {v}"),
        })
    }
}

/// Builds a catalog system by name.
pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<System> {
    match name {
        "flat" => flat::build(params),
        "kerr" => kerr::build(params),
        "quantum-dot" => quantum_dot::build(params),
        "su2-plane" => su2::build(params),
        other => Err(Error::UnknownSystem(other.to_string())),
    }
}

pub(crate) fn series_observable(name: &str, series: &GeneratorSeries) -> SharedObservable {
    Arc::new(phase::SeriesObservable::new(name, series.clone()))
}
