//! Covariant phase space and the covariant Poisson bracket.
//!
//! Sign convention: `dG/dτ = {G, H}` and `{x^μ, π_ν} = δ^μ_ν`. With the
//! covariant derivative
//!
//! ```text
//! D_μ G = ∂G/∂x^μ + Γ_{μν}^λ π_λ ∂G/∂π_ν + g f_{ab}^c t_c A_μ^a ∂G/∂t_b
//! ```
//!
//! the bracket is
//!
//! ```text
//! {G, K} = D_μG ∂K/∂π_μ − ∂G/∂π_μ D_μK + Q_{μν} ∂G/∂π_μ ∂K/∂π_ν + f_{ab}^c t_c ∂G/∂t_a ∂K/∂t_b
//! ```
//!
//! where `Q = qF` for abelian backgrounds, `Q = g t_a F^a` for non-abelian
//! ones and the charge terms are present only in the non-abelian case.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diff::{self, Dual};
use crate::error::{Error, Result};
use crate::gauge::{
    field_strength_abelian, field_strength_nonabelian, AbelianBackground, NonAbelianBackground, ScalarPotential,
};
use crate::geometry::{LocalGeometry, MetricChart};
use crate::killing::{GeneratorSeries, SymmetricTensorField};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub x: Vec<f64>,
    pub pi: Vec<f64>,
    #[serde(default)]
    pub t: Vec<f64>,
}

impl PhasePoint {
    pub fn new(x: Vec<f64>, pi: Vec<f64>) -> Self {
        PhasePoint { x, pi, t: Vec::new() }
    }

    pub fn with_charges(x: Vec<f64>, pi: Vec<f64>, t: Vec<f64>) -> Self {
        PhasePoint { x, pi, t }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    pub fn algebra_dim(&self) -> usize {
        self.t.len()
    }

    /// Flat state `(x, π, t)`.
    pub fn state(&self) -> Vec<f64> {
        let mut s = Vec::with_capacity(2 * self.x.len() + self.t.len());
        s.extend_from_slice(&self.x);
        s.extend_from_slice(&self.pi);
        s.extend_from_slice(&self.t);
        s
    }

    pub fn from_state(dim: usize, state: &[f64]) -> Self {
        PhasePoint {
            x: state[..dim].to_vec(),
            pi: state[dim..2 * dim].to_vec(),
            t: state[2 * dim..].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().chain(&self.pi).chain(&self.t).all(|v| v.is_finite())
    }
}

/// Partial derivatives of an observable at fixed complementary variables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhaseGradient {
    pub dx: Vec<f64>,
    pub dpi: Vec<f64>,
    pub dt: Vec<f64>,
}

impl PhaseGradient {
    pub fn zeros(dim: usize, algebra_dim: usize) -> Self {
        PhaseGradient {
            dx: vec![0.0; dim],
            dpi: vec![0.0; dim],
            dt: vec![0.0; algebra_dim],
        }
    }

    fn as_state(&self) -> Vec<f64> {
        let mut s = self.dx.clone();
        s.extend_from_slice(&self.dpi);
        s.extend_from_slice(&self.dt);
        s
    }
}

/// Scalar function on phase space.
pub trait Observable: Send + Sync {
    fn name(&self) -> &str;

    fn value(&self, p: &PhasePoint) -> f64;

    /// Defaults to central finite differences of [`value`](Self::value).
    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        finite_difference_gradient(self, p)
    }

    fn polynomial_form(&self) -> Option<&GeneratorSeries> {
        None
    }
}

pub type SharedObservable = Arc<dyn Observable>;

impl fmt::Debug for dyn Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.name())
    }
}

pub fn finite_difference_gradient<O: Observable + ?Sized>(obs: &O, p: &PhasePoint) -> PhaseGradient {
    let d = p.dim();
    let state = p.state();
    let f = |s: &[f64]| vec![obs.value(&PhasePoint::from_state(d, s))];
    let partials = diff::jacobian_fd(&f, &state);
    let flat: Vec<f64> = partials.into_iter().map(|v| v[0]).collect();
    PhaseGradient {
        dx: flat[..d].to_vec(),
        dpi: flat[d..2 * d].to_vec(),
        dt: flat[2 * d..].to_vec(),
    }
}

/// Largest relative mismatch between an observable's gradient and finite
/// differences of its value.
pub fn gradient_check(obs: &dyn Observable, p: &PhasePoint) -> f64 {
    let g = obs.gradient(p).as_state();
    let fd = finite_difference_gradient(obs, p).as_state();
    let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    g.iter()
        .zip(&fd)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs() / scale))
}

type PhaseFn = Arc<dyn Fn(&[Dual], &[Dual], &[Dual]) -> Dual + Send + Sync>;

/// Observable written once on dual numbers; all partials come from forward
/// mode.
#[derive(Clone)]
pub struct DualObservable {
    name: String,
    f: PhaseFn,
    series: Option<GeneratorSeries>,
}

impl DualObservable {
    /// `f(x, π, t)`.
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(&[Dual], &[Dual], &[Dual]) -> Dual + Send + Sync + 'static,
    {
        DualObservable {
            name: name.into(),
            f: Arc::new(f),
            series: None,
        }
    }

    pub fn with_polynomial_form(mut self, series: GeneratorSeries) -> Self {
        self.series = Some(series);
        self
    }

    pub fn shared(self) -> SharedObservable {
        Arc::new(self)
    }
}

impl Observable for DualObservable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        (self.f)(&diff::constant(&p.x), &diff::constant(&p.pi), &diff::constant(&p.t)).re
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        let d = p.dim();
        let k = p.algebra_dim();
        let state = p.state();
        let mut flat = Vec::with_capacity(state.len());
        for i in 0..state.len() {
            let z = diff::seeded(&state, i);
            flat.push((self.f)(&z[..d], &z[d..2 * d], &z[2 * d..2 * d + k]).eps);
        }
        PhaseGradient {
            dx: flat[..d].to_vec(),
            dpi: flat[d..2 * d].to_vec(),
            dt: flat[2 * d..].to_vec(),
        }
    }

    fn polynomial_form(&self) -> Option<&GeneratorSeries> {
        self.series.as_ref()
    }
}

type ValueFn = Arc<dyn Fn(&PhasePoint) -> f64 + Send + Sync>;
type GradientFn = Arc<dyn Fn(&PhasePoint) -> PhaseGradient + Send + Sync>;

/// Observable from plain closures, with an optional supplied gradient.
#[derive(Clone)]
pub struct ClosureObservable {
    name: String,
    eval: ValueFn,
    gradient: Option<GradientFn>,
}

impl ClosureObservable {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(&PhasePoint) -> f64 + Send + Sync + 'static,
    {
        ClosureObservable {
            name: name.into(),
            eval: Arc::new(eval),
            gradient: None,
        }
    }

    pub fn with_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&PhasePoint) -> PhaseGradient + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(f));
        self
    }
}

impl Observable for ClosureObservable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        (self.eval)(p)
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        match &self.gradient {
            Some(g) => g(p),
            None => finite_difference_gradient(self, p),
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Slot {
    Coordinate(usize),
    Momentum(usize),
    Charge(usize),
}

/// A single phase-space variable as an observable, with exact gradient.
#[derive(Debug, Clone)]
pub struct Variable {
    name: String,
    slot: Slot,
}

impl Observable for Variable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        match self.slot {
            Slot::Coordinate(i) => p.x[i],
            Slot::Momentum(i) => p.pi[i],
            Slot::Charge(a) => p.t[a],
        }
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        let mut g = PhaseGradient::zeros(p.dim(), p.algebra_dim());
        match self.slot {
            Slot::Coordinate(i) => g.dx[i] = 1.0,
            Slot::Momentum(i) => g.dpi[i] = 1.0,
            Slot::Charge(a) => g.dt[a] = 1.0,
        }
        g
    }
}

pub fn coordinate(name: impl Into<String>, index: usize) -> SharedObservable {
    Arc::new(Variable {
        name: name.into(),
        slot: Slot::Coordinate(index),
    })
}

pub fn momentum(name: impl Into<String>, index: usize) -> SharedObservable {
    Arc::new(Variable {
        name: name.into(),
        slot: Slot::Momentum(index),
    })
}

pub fn charge(name: impl Into<String>, index: usize) -> SharedObservable {
    Arc::new(Variable {
        name: name.into(),
        slot: Slot::Charge(index),
    })
}

/// `G^{μ_1..μ_n}(x) π_{μ_1}..π_{μ_n}` without factorial weight.
#[derive(Clone)]
pub struct TensorMonomial {
    name: String,
    field: SymmetricTensorField,
}

impl TensorMonomial {
    pub fn new(field: SymmetricTensorField) -> Self {
        TensorMonomial {
            name: field.name().to_string(),
            field,
        }
    }

    pub fn shared(self) -> SharedObservable {
        Arc::new(self)
    }
}

impl Observable for TensorMonomial {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        self.field.evaluate(&p.x, &p.t).contract(&p.pi)
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        let eval = self.field.evaluate_with_partials(&p.x, &p.t, diff::DifferentiationScheme::Dual);
        PhaseGradient {
            dx: eval.dx.iter().map(|t| t.contract(&p.pi)).collect(),
            dpi: eval.value.contract_gradient(&p.pi),
            dt: eval.dt.iter().map(|t| t.contract(&p.pi)).collect(),
        }
    }
}

/// Observable evaluating a [`GeneratorSeries`].
#[derive(Clone)]
pub struct SeriesObservable {
    name: String,
    series: GeneratorSeries,
}

impl SeriesObservable {
    pub fn new(name: impl Into<String>, series: GeneratorSeries) -> Self {
        SeriesObservable {
            name: name.into(),
            series,
        }
    }
}

impl Observable for SeriesObservable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        self.series.evaluate(p)
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        self.series.gradient(p)
    }

    fn polynomial_form(&self) -> Option<&GeneratorSeries> {
        Some(&self.series)
    }
}

/// Pointwise product of two observables (product-rule gradient).
#[derive(Clone)]
pub struct ProductObservable {
    name: String,
    a: SharedObservable,
    b: SharedObservable,
}

impl ProductObservable {
    pub fn new(a: SharedObservable, b: SharedObservable) -> Self {
        ProductObservable {
            name: format!("({})*({})", a.name(), b.name()),
            a,
            b,
        }
    }
}

impl Observable for ProductObservable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        self.a.value(p) * self.b.value(p)
    }

    fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        let (va, vb) = (self.a.value(p), self.b.value(p));
        let (ga, gb) = (self.a.gradient(p), self.b.gradient(p));
        let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u * vb + va * v).collect();
        PhaseGradient {
            dx: comb(&ga.dx, &gb.dx),
            dpi: comb(&ga.dpi, &gb.dpi),
            dt: comb(&ga.dt, &gb.dt),
        }
    }
}

/// `{G, K}` realised as an observable. Its derivatives come from central
/// differences; analytic second derivatives are never required.
#[derive(Clone)]
pub struct BracketObservable {
    name: String,
    ctx: BracketContext,
    g: SharedObservable,
    k: SharedObservable,
}

impl BracketObservable {
    pub fn new(ctx: &BracketContext, g: SharedObservable, k: SharedObservable) -> Self {
        BracketObservable {
            name: format!("{{{}, {}}}", g.name(), k.name()),
            ctx: ctx.clone(),
            g,
            k,
        }
    }

    pub fn shared(self) -> SharedObservable {
        Arc::new(self)
    }
}

impl Observable for BracketObservable {
    fn name(&self) -> &str {
        &self.name
    }

    fn value(&self, p: &PhasePoint) -> f64 {
        covariant_bracket(&self.ctx, &*self.g, &*self.k, p).unwrap_or(f64::NAN)
    }
}

/// Gauge sector of a bracket context.
#[derive(Debug, Clone)]
pub enum Background {
    None,
    Abelian(AbelianBackground),
    NonAbelian(NonAbelianBackground),
}

#[derive(Debug, Clone)]
pub struct BracketContext {
    chart: Arc<MetricChart>,
    background: Background,
    scalar_potential: Option<ScalarPotential>,
}

impl BracketContext {
    pub fn geodesic(chart: MetricChart) -> Self {
        BracketContext {
            chart: Arc::new(chart),
            background: Background::None,
            scalar_potential: None,
        }
    }

    pub fn abelian(chart: MetricChart, bg: AbelianBackground) -> Self {
        BracketContext {
            chart: Arc::new(chart),
            background: Background::Abelian(bg),
            scalar_potential: None,
        }
    }

    pub fn non_abelian(chart: MetricChart, bg: NonAbelianBackground) -> Self {
        BracketContext {
            chart: Arc::new(chart),
            background: Background::NonAbelian(bg),
            scalar_potential: None,
        }
    }

    pub fn with_scalar_potential(mut self, phi: ScalarPotential) -> Self {
        self.scalar_potential = Some(phi);
        self
    }

    pub fn with_background(&self, background: Background) -> Self {
        BracketContext {
            chart: self.chart.clone(),
            background,
            scalar_potential: self.scalar_potential.clone(),
        }
    }

    pub fn chart(&self) -> &MetricChart {
        &self.chart
    }

    pub fn background(&self) -> &Background {
        &self.background
    }

    pub fn scalar_potential(&self) -> Option<&ScalarPotential> {
        self.scalar_potential.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }

    pub fn algebra_dim(&self) -> usize {
        match &self.background {
            Background::NonAbelian(bg) => bg.algebra_dim(),
            _ => 0,
        }
    }

    pub fn check_point(&self, p: &PhasePoint) -> Result<()> {
        self.chart.check_domain(&p.x)?;
        if p.pi.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "momenta",
                expected: self.dim(),
                got: p.pi.len(),
            });
        }
        if p.t.len() != self.algebra_dim() {
            return Err(Error::DimensionMismatch {
                what: "charges",
                expected: self.algebra_dim(),
                got: p.t.len(),
            });
        }
        Ok(())
    }

    /// `Q_{μν}` at a point: `qF` or `g t_a F^a`; `None` without background.
    pub fn field_matrix(&self, x: &[f64], t: &[f64]) -> Result<Option<DMatrix<f64>>> {
        match &self.background {
            Background::None => Ok(None),
            Background::Abelian(bg) => {
                let f = field_strength_abelian(bg, &self.chart, x)?;
                Ok(Some(f * bg.charge()))
            }
            Background::NonAbelian(bg) => {
                let fa = field_strength_nonabelian(bg, &self.chart, x)?;
                let d = self.dim();
                let mut q = DMatrix::zeros(d, d);
                for m in 0..d {
                    for n in (m + 1)..d {
                        let v: f64 = fa.iter().zip(t).map(|(f, ta)| ta * f[(m, n)]).sum::<f64>() * bg.coupling();
                        q[(m, n)] = v;
                        q[(n, m)] = -v;
                    }
                }
                Ok(Some(q))
            }
        }
    }

    /// Everything the bracket needs at one phase point.
    pub fn frame(&self, p: &PhasePoint) -> Result<PhaseFrame> {
        self.check_point(p)?;
        let local = self.chart.local(&p.x)?;
        let gamma_pi = local.gamma.contract_momentum(&p.pi);
        let field = self.field_matrix(&p.x, &p.t)?;
        let (charge_rotation, charge_poisson) = match &self.background {
            Background::NonAbelian(bg) => (
                Some(bg.charge_rotation(&p.x, &p.t)),
                Some(bg.structure().contract_charges(&p.t)),
            ),
            _ => (None, None),
        };
        Ok(PhaseFrame {
            local,
            pi: p.pi.clone(),
            gamma_pi,
            field,
            charge_rotation,
            charge_poisson,
        })
    }
}

/// Bracket value with the largest single term that entered it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketValue {
    pub value: f64,
    pub scale: f64,
}

/// Geometric and gauge data of a [`BracketContext`] frozen at one point.
#[derive(Debug, Clone)]
pub struct PhaseFrame {
    pub local: LocalGeometry,
    pub pi: Vec<f64>,
    /// `(Γπ)_{μν} = Γ_{μν}^{ λ} π_λ`.
    pub gamma_pi: DMatrix<f64>,
    /// `Q_{μν}`.
    pub field: Option<DMatrix<f64>>,
    /// `C_{μb}` with `D_μ G ⊃ C_{μb} ∂G/∂t_b`.
    pub charge_rotation: Option<DMatrix<f64>>,
    /// `P_{ab} = f_{ab}^{ c} t_c`.
    pub charge_poisson: Option<DMatrix<f64>>,
}

/// `D_μ G` split into its three contributions.
#[derive(Debug, Clone)]
pub struct CovariantTerms {
    pub partial: Vec<f64>,
    pub connection: Vec<f64>,
    pub charge: Vec<f64>,
}

impl CovariantTerms {
    pub fn total(&self) -> Vec<f64> {
        self.partial
            .iter()
            .zip(&self.connection)
            .zip(&self.charge)
            .map(|((a, b), c)| a + b + c)
            .collect()
    }
}

/// `Σ_{a<b} m_{ab}(u_a v_b − u_b v_a)`, grouped so that swapping `u` and `v`
/// negates the result exactly.
fn antisym_form(m: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for a in 0..n {
        for b in (a + 1)..n {
            let q = m[(a, b)];
            if q != 0.0 {
                s += q * (u[a] * v[b]) - q * (u[b] * v[a]);
            }
        }
    }
    s
}

impl PhaseFrame {
    pub fn dim(&self) -> usize {
        self.local.dim()
    }

    pub fn covariant_terms(&self, g: &PhaseGradient) -> CovariantTerms {
        let d = self.dim();
        let connection = (0..d)
            .map(|m| (0..d).map(|n| self.gamma_pi[(m, n)] * g.dpi[n]).sum())
            .collect();
        let charge = match &self.charge_rotation {
            Some(c) => (0..d)
                .map(|m| g.dt.iter().enumerate().map(|(b, dt)| c[(m, b)] * dt).sum())
                .collect(),
            None => vec![0.0; d],
        };
        CovariantTerms {
            partial: g.dx.clone(),
            connection,
            charge,
        }
    }

    pub fn covariant_derivative(&self, g: &PhaseGradient) -> Vec<f64> {
        self.covariant_terms(g).total()
    }

    /// Bracket of two observables given their gradients at this frame.
    ///
    /// The value is assembled as `A − B` with `B` computed exactly like `A`
    /// with the roles swapped, so `{G, K} = −{K, G}` bitwise.
    pub fn bracket(&self, g: &PhaseGradient, k: &PhaseGradient) -> BracketValue {
        let d = self.dim();
        let dg = self.covariant_derivative(g);
        let dk = self.covariant_derivative(k);
        let first: f64 = (0..d).map(|m| dg[m] * k.dpi[m]).sum();
        let second: f64 = (0..d).map(|m| g.dpi[m] * dk[m]).sum();
        let mut value = first - second;
        if let Some(q) = &self.field {
            value += antisym_form(q, &g.dpi, &k.dpi);
        }
        if let Some(p) = &self.charge_poisson {
            value += antisym_form(p, &g.dt, &k.dt);
        }
        let scale = self.bracket_terms(g, k).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        BracketValue { value, scale }
    }

    /// Every elementary product entering the bracket, signed so that they sum
    /// to its value. The layout depends only on the dimensions.
    pub fn bracket_terms(&self, g: &PhaseGradient, k: &PhaseGradient) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::new();
        let covariant = |a: &PhaseGradient, b: &PhaseGradient, sign: f64, out: &mut Vec<f64>| {
            for m in 0..d {
                let w = sign * b.dpi[m];
                out.push(a.dx[m] * w);
                for n in 0..d {
                    out.push(self.gamma_pi[(m, n)] * a.dpi[n] * w);
                }
                if let Some(c) = &self.charge_rotation {
                    for (bb, dt) in a.dt.iter().enumerate() {
                        out.push(c[(m, bb)] * dt * w);
                    }
                }
            }
        };
        covariant(g, k, 1.0, &mut out);
        covariant(k, g, -1.0, &mut out);
        let pairs = |mat: &DMatrix<f64>, u: &[f64], v: &[f64], out: &mut Vec<f64>| {
            let n = u.len();
            for a in 0..n {
                for b in (a + 1)..n {
                    out.push(mat[(a, b)] * u[a] * v[b]);
                    out.push(-mat[(a, b)] * u[b] * v[a]);
                }
            }
        };
        if let Some(q) = &self.field {
            pairs(q, &g.dpi, &k.dpi, &mut out);
        }
        if let Some(p) = &self.charge_poisson {
            pairs(p, &g.dt, &k.dt, &mut out);
        }
        out
    }
}

/// `D_μ G` at a phase point.
pub fn covariant_observable_derivative(ctx: &BracketContext, obs: &dyn Observable, p: &PhasePoint) -> Result<Vec<f64>> {
    let frame = ctx.frame(p)?;
    Ok(frame.covariant_derivative(&obs.gradient(p)))
}

pub fn covariant_bracket(ctx: &BracketContext, g: &dyn Observable, k: &dyn Observable, p: &PhasePoint) -> Result<f64> {
    Ok(covariant_bracket_scaled(ctx, g, k, p)?.value)
}

/// Bracket together with the magnitude of its largest term.
pub fn covariant_bracket_scaled(
    ctx: &BracketContext,
    g: &dyn Observable,
    k: &dyn Observable,
    p: &PhasePoint,
) -> Result<BracketValue> {
    let frame = ctx.frame(p)?;
    Ok(frame.bracket(&g.gradient(p), &k.gradient(p)))
}

/// Cyclic sum `{{G,K},J} + {{K,J},G} + {{J,G},K}`; `scale` is the largest
/// term over the three outer brackets.
pub fn jacobi_residual(
    ctx: &BracketContext,
    g: &SharedObservable,
    k: &SharedObservable,
    j: &SharedObservable,
    p: &PhasePoint,
) -> Result<BracketValue> {
    let frame = ctx.frame(p)?;
    let mut value = 0.0;
    let mut scale = 0.0f64;
    for (a, b, c) in [(g, k, j), (k, j, g), (j, g, k)] {
        let inner = BracketObservable::new(ctx, a.clone(), b.clone());
        let bv = frame.bracket(&inner.gradient(p), &c.gradient(p));
        value += bv.value;
        scale = scale.max(bv.scale);
    }
    Ok(BracketValue { value, scale })
}

/// Phase-space transformation generated by an observable: `Δx^μ = ∂G/∂π_μ`
/// and the covariant momentum variation `Δπ_μ = −D_μ G`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoetherFlow {
    pub dx: Vec<f64>,
    pub dpi: Vec<f64>,
    /// Ordinary change of the momentum components,
    /// `δπ_μ = Δπ_μ + Δx^λ Γ_{λμ}^{ ν} π_ν`.
    pub coordinate_dpi: Vec<f64>,
}

pub fn noether_flow(ctx: &BracketContext, g: &dyn Observable, p: &PhasePoint) -> Result<NoetherFlow> {
    let frame = ctx.frame(p)?;
    let grad = g.gradient(p);
    let d = frame.dim();
    let dpi: Vec<f64> = frame.covariant_derivative(&grad).iter().map(|v| -v).collect();
    let dx = grad.dpi.clone();
    let coordinate_dpi = (0..d)
        .map(|m| dpi[m] + (0..d).map(|l| dx[l] * frame.gamma_pi[(l, m)]).sum::<f64>())
        .collect();
    Ok(NoetherFlow { dx, dpi, coordinate_dpi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{self, axial, flat};
    use crate::gauge::AbelianBackground;

    fn uniform_field(b: f64) -> BracketContext {
        let bg = AbelianBackground::new(2.0, move |x: &[Dual]| vec![x[1] * (-0.5 * b), x[0] * (0.5 * b)]);
        BracketContext::abelian(flat(2), bg)
    }

    #[test]
    fn canonical_pairs() {
        let ctx = uniform_field(0.7);
        let p = PhasePoint::new(vec![0.4, -1.2], vec![0.3, 0.8]);
        for m in 0..2 {
            for n in 0..2 {
                let b = covariant_bracket(&ctx, &*coordinate("x", m), &*momentum("p", n), &p).unwrap();
                assert_eq!(b, if m == n { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn momenta_bracket_to_field() {
        let ctx = uniform_field(0.7);
        let p = PhasePoint::new(vec![0.4, -1.2], vec![0.3, 0.8]);
        let b = covariant_bracket(&ctx, &*momentum("px", 0), &*momentum("py", 1), &p).unwrap();
        assert!((b - 2.0 * 0.7).abs() < 1e-14);
    }

    #[test]
    fn self_bracket_vanishes_exactly() {
        let sys = catalog::build("su2-plane", &Default::default()).unwrap();
        let ctx = sys.hamiltonian.context();
        for p in sys.sample(20, 3) {
            for o in &sys.invariants {
                assert_eq!(covariant_bracket(ctx, &**o, &**o, &p).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn geodesic_hamiltonian_is_covariantly_constant() {
        let sys = catalog::build("kerr", &Default::default()).unwrap();
        let h = sys.hamiltonian.observable();
        for p in sys.sample(10, 1) {
            let dh = covariant_observable_derivative(sys.hamiltonian.context(), &*h, &p).unwrap();
            let scale = h.gradient(&p).dx.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            assert!(dh.iter().all(|v| v.abs() <= 1e-12 * scale), "{dh:?}");
        }
    }

    #[test]
    fn momentum_derivative_is_connection() {
        let ctx = BracketContext::geodesic(axial());
        let p = PhasePoint::new(vec![2.0, 0.1, 0.3], vec![0.5, -0.4, 1.5]);
        let d = covariant_observable_derivative(&ctx, &*momentum("p_phi", 2), &p).unwrap();
        // Γ_{ρφ}^φ π_φ = π_φ/ρ, Γ_{φφ}^ρ π_ρ = −ρ π_ρ
        assert_eq!(d, vec![0.75, 0.0, -1.0]);
    }

    #[test]
    fn rotation_flow() {
        let ctx = BracketContext::geodesic(flat(2));
        let j = DualObservable::new("J", |x: &[Dual], pi: &[Dual], _t: &[Dual]| x[0] * pi[1] - x[1] * pi[0]);
        let p = PhasePoint::new(vec![1.0, 2.0], vec![3.0, 5.0]);
        let flow = noether_flow(&ctx, &j, &p).unwrap();
        assert_eq!(flow.dx, vec![-2.0, 1.0]);
        assert_eq!(flow.dpi, vec![-5.0, 3.0]);
        assert_eq!(flow.coordinate_dpi, flow.dpi);
    }

    #[test]
    fn series_observable_matches_wrapped_value() {
        let sys = catalog::build("quantum-dot", &Default::default()).unwrap();
        let g4 = sys.observable("G4").unwrap();
        let series = g4.polynomial_form().expect("registered with a series").clone();
        for p in sys.sample(10, 9) {
            assert_eq!(series.evaluate(&p), g4.value(&p));
            assert!(gradient_check(&*g4, &p) < 1e-6);
        }
    }
}
