//! Covariant Hamiltonian mechanics on curved manifolds.
//!
//! Phase space is parametrised by coordinates `x^μ`, covariant momenta
//! `π_μ = m g_{μν} ẋ^ν` and, for non-abelian backgrounds, internal gauge
//! charges `t_a`. Observables are scalar functions on that space; the
//! covariant Poisson bracket combines the connection, the field strength and
//! the charge algebra so that `dG/dτ = {G, H}`.
//!
//! The crate is organised as
//!
//! * [`geometry`]: coordinate charts, Christoffel symbols, covariant
//!   derivatives of symmetric tensor fields;
//! * [`gauge`]: abelian and non-abelian backgrounds and scalar potentials;
//! * [`phase`]: phase points, observables and the covariant bracket;
//! * [`dynamics`]: Hamiltonians, equations of motion and integrators;
//! * [`killing`]: Killing-tensor and gauge-hierarchy residuals, generator
//!   algebra and conservation checks;
//! * [`catalog`]: ready-made systems (Kerr, quantum dot, SU(2) plane, flat);
//! * [`sweep`]: random sampling and parallel evaluation over point sets.

pub mod catalog;
pub mod diff;
pub mod dynamics;
pub mod error;
pub mod gauge;
pub mod geometry;
pub mod killing;
pub mod phase;
pub mod sweep;
pub mod tensor;

pub use diff::{DifferentiationScheme, Dual, DualNum};
pub use error::{Error, Result};
pub use geometry::MetricChart;
pub use phase::{BracketContext, Observable, PhasePoint, SharedObservable};
