//! Symmetric tensor fields, Killing and hierarchy residuals, the generator
//! bracket and conservation sweeps.
//!
//! All residual arrays carry contravariant indices: they are the
//! coefficients of the covariant momenta in `{G, H}`. Symmetrisation is the
//! unit-weight average over index permutations.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::diff::{self, DifferentiationScheme, Dual, DualNum};
use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::geometry::{covariant_derivative_parts, LocalGeometry, MetricChart};
use crate::phase::{
    covariant_bracket_scaled, Background, BracketContext, BracketObservable, Observable, PhaseGradient, PhasePoint, SeriesObservable,
    SharedObservable,
};
use crate::sweep::{self, Execution};
use crate::tensor::{unflatten, DenseTensor, SymmetricLayout, SymmetricTensor};

type DualFieldFn = Arc<dyn Fn(&[Dual], &[Dual]) -> Vec<Dual> + Send + Sync>;
type NumericFieldFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Clone)]
enum Source {
    Dual(DualFieldFn),
    Numeric(NumericFieldFn),
}

/// `x, t -> G^{μ_1..μ_n}`, components in canonical slot order.
#[derive(Clone)]
pub struct SymmetricTensorField {
    name: String,
    dim: usize,
    rank: usize,
    source: Source,
}

impl fmt::Debug for SymmetricTensorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymmetricTensorField({}, dim {}, rank {})", self.name, self.dim, self.rank)
    }
}

/// Value and first partials of a field at one point.
#[derive(Debug, Clone)]
pub struct FieldEvaluation {
    pub value: SymmetricTensor,
    /// `∂_λ G` for each coordinate.
    pub dx: Vec<SymmetricTensor>,
    /// `∂G/∂t_a` for each charge.
    pub dt: Vec<SymmetricTensor>,
}

impl SymmetricTensorField {
    /// Field depending on position only.
    pub fn new<F>(name: impl Into<String>, dim: usize, rank: usize, f: F) -> Self
    where
        F: Fn(&[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        Self::with_charges(name, dim, rank, move |x: &[Dual], _t: &[Dual]| f(x))
    }

    /// Field depending on position and gauge charges.
    pub fn with_charges<F>(name: impl Into<String>, dim: usize, rank: usize, f: F) -> Self
    where
        F: Fn(&[Dual], &[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        SymmetricTensorField {
            name: name.into(),
            dim,
            rank,
            source: Source::Dual(Arc::new(f)),
        }
    }

    /// Field known only through plain values; partials by central differences.
    pub fn numeric<F>(name: impl Into<String>, dim: usize, rank: usize, f: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        SymmetricTensorField {
            name: name.into(),
            dim,
            rank,
            source: Source::Numeric(Arc::new(f)),
        }
    }

    /// Components given as `(multi-index, value)` pairs; unlisted slots are zero.
    pub fn sparse<F>(name: impl Into<String>, dim: usize, rank: usize, f: F) -> Self
    where
        F: Fn(&[Dual], &[Dual]) -> Vec<(Vec<usize>, Dual)> + Send + Sync + 'static,
    {
        let layout = SymmetricLayout::get(dim, rank);
        Self::with_charges(name, dim, rank, move |x: &[Dual], t: &[Dual]| {
            let mut out = vec![Dual::from_re(0.0); layout.len()];
            for (idx, v) in f(x, t) {
                out[layout.slot(&idx)] += v;
            }
            out
        })
    }

    pub fn constant(name: impl Into<String>, value: SymmetricTensor) -> Self {
        let (dim, rank) = (value.dim(), value.rank());
        let data = value.data().to_vec();
        Self::with_charges(name, dim, rank, move |_x: &[Dual], _t: &[Dual]| {
            data.iter().map(|&v| Dual::from_re(v)).collect()
        })
    }

    /// `g^{μν}(x)` as a rank-2 field, inverted on dual numbers.
    pub fn inverse_metric(chart: &MetricChart) -> Self {
        let chart = chart.clone();
        let d = chart.dim();
        Self::new("inverse-metric", d, 2, move |x: &[Dual]| {
            let packed = chart.metric_dual(x);
            let inv = dual_inverse(d, &packed);
            let mut out = Vec::with_capacity(d * (d + 1) / 2);
            for i in 0..d {
                for j in i..d {
                    out.push(inv[i * d + j]);
                }
            }
            out
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    fn raw(&self, x: &[f64], t: &[f64]) -> Vec<f64> {
        match &self.source {
            Source::Dual(f) => f(&diff::constant(x), &diff::constant(t)).iter().map(|d| d.re).collect(),
            Source::Numeric(f) => f(x, t),
        }
    }

    pub fn evaluate(&self, x: &[f64], t: &[f64]) -> SymmetricTensor {
        SymmetricTensor::from_canonical(self.dim, self.rank, self.raw(x, t))
    }

    pub fn evaluate_with_partials(&self, x: &[f64], t: &[f64], scheme: DifferentiationScheme) -> FieldEvaluation {
        let d = self.dim;
        let wrap = |v: Vec<f64>| SymmetricTensor::from_canonical(d, self.rank, v);
        match (&self.source, scheme) {
            (Source::Dual(f), DifferentiationScheme::Analytic | DifferentiationScheme::Dual) => {
                let mut state = x.to_vec();
                state.extend_from_slice(t);
                let value = self.evaluate(x, t);
                let mut partials = Vec::with_capacity(state.len());
                for k in 0..state.len() {
                    let z = diff::seeded(&state, k);
                    partials.push(wrap(f(&z[..d], &z[d..]).iter().map(|v| v.eps).collect()));
                }
                let dt = partials.split_off(d);
                FieldEvaluation {
                    value,
                    dx: partials,
                    dt,
                }
            }
            _ => {
                let mut state = x.to_vec();
                state.extend_from_slice(t);
                let f = |s: &[f64]| self.raw(&s[..d], &s[d..]);
                let mut partials: Vec<SymmetricTensor> = diff::jacobian_fd(&f, &state).into_iter().map(wrap).collect();
                let dt = partials.split_off(d);
                FieldEvaluation {
                    value: self.evaluate(x, t),
                    dx: partials,
                    dt,
                }
            }
        }
    }
}

/// Gauss-Jordan inverse of a packed symmetric matrix on dual numbers.
fn dual_inverse(d: usize, packed: &[Dual]) -> Vec<Dual> {
    let zero = Dual::from_re(0.0);
    let one = Dual::from_re(1.0);
    let mut a = vec![zero; d * d];
    let mut inv = vec![zero; d * d];
    for i in 0..d {
        for j in 0..d {
            a[i * d + j] = packed[crate::geometry::packed_index(d, i, j)];
        }
        inv[i * d + i] = one;
    }
    for col in 0..d {
        let pivot = (col..d)
            .max_by(|&p, &q| a[p * d + col].re.abs().total_cmp(&a[q * d + col].re.abs()))
            .unwrap_or(col);
        if pivot != col {
            for k in 0..d {
                a.swap(col * d + k, pivot * d + k);
                inv.swap(col * d + k, pivot * d + k);
            }
        }
        let p = a[col * d + col].recip();
        for k in 0..d {
            a[col * d + k] *= p;
            inv[col * d + k] *= p;
        }
        for r in 0..d {
            if r != col {
                let factor = a[r * d + col];
                if factor.re != 0.0 || factor.eps != 0.0 {
                    for k in 0..d {
                        let (ak, ik) = (a[col * d + k], inv[col * d + k]);
                        a[r * d + k] -= factor * ak;
                        inv[r * d + k] -= factor * ik;
                    }
                }
            }
        }
    }
    inv
}

/// Weights applied to the rank-`n` term of a series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// `1/n!`, the power-series convention.
    #[default]
    Factorial,
    /// Bare monomials `G^{μ..} π_μ ..`.
    Unit,
}

impl Normalization {
    pub fn weight(self, n: usize) -> f64 {
        match self {
            Normalization::Factorial => 1.0 / (1..=n).map(|k| k as f64).product::<f64>(),
            Normalization::Unit => 1.0,
        }
    }
}

/// `G = Σ_n w_n G^{(n)μ_1..μ_n} π_{μ_1} .. π_{μ_n}`.
#[derive(Debug, Clone)]
pub struct GeneratorSeries {
    dim: usize,
    normalization: Normalization,
    terms: Vec<Option<SymmetricTensorField>>,
}

impl GeneratorSeries {
    pub fn new(dim: usize, normalization: Normalization) -> Self {
        GeneratorSeries {
            dim,
            normalization,
            terms: Vec::new(),
        }
    }

    /// Sets (or replaces) the term of the field's rank.
    pub fn with_term(mut self, field: SymmetricTensorField) -> Self {
        assert_eq!(field.dim(), self.dim, "series term dimension");
        let n = field.rank();
        if self.terms.len() <= n {
            self.terms.resize(n + 1, None);
        }
        self.terms[n] = Some(field);
        self
    }

    pub fn single(field: SymmetricTensorField) -> Self {
        GeneratorSeries::new(field.dim(), Normalization::Unit).with_term(field)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn weight(&self, n: usize) -> f64 {
        self.normalization.weight(n)
    }

    /// Highest rank present (0 for an empty series).
    pub fn max_rank(&self) -> usize {
        self.terms.len().saturating_sub(1)
    }

    pub fn term(&self, n: usize) -> Option<&SymmetricTensorField> {
        self.terms.get(n).and_then(|t| t.as_ref())
    }

    pub fn evaluate(&self, p: &PhasePoint) -> f64 {
        self.terms
            .iter()
            .enumerate()
            .filter_map(|(n, t)| t.as_ref().map(|f| (n, f)))
            .map(|(n, f)| self.weight(n) * f.evaluate(&p.x, &p.t).contract(&p.pi))
            .sum()
    }

    pub fn gradient(&self, p: &PhasePoint) -> PhaseGradient {
        let mut g = PhaseGradient::zeros(p.dim(), p.algebra_dim());
        for (n, f) in self.terms.iter().enumerate() {
            let Some(f) = f else { continue };
            let w = self.weight(n);
            let e = f.evaluate_with_partials(&p.x, &p.t, DifferentiationScheme::Dual);
            for (gx, t) in g.dx.iter_mut().zip(&e.dx) {
                *gx += w * t.contract(&p.pi);
            }
            for (gp, v) in g.dpi.iter_mut().zip(e.value.contract_gradient(&p.pi)) {
                *gp += w * v;
            }
            for (gt, t) in g.dt.iter_mut().zip(&e.dt) {
                *gt += w * t.contract(&p.pi);
            }
        }
        g
    }

    pub fn observable(&self, name: impl Into<String>) -> SharedObservable {
        Arc::new(SeriesObservable::new(name, self.clone()))
    }
}

type CoefficientFn = Arc<dyn Fn(&[Dual], &[Dual]) -> Vec<Dual> + Send + Sync>;

/// `Σ_k c_k(x, t) Π_μ π_μ^{e_{kμ}}` written term by term.
#[derive(Clone)]
pub struct MomentumPolynomial {
    dim: usize,
    exponents: Vec<Vec<usize>>,
    coefficients: CoefficientFn,
}

impl fmt::Debug for MomentumPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MomentumPolynomial")
            .field("dim", &self.dim)
            .field("exponents", &self.exponents)
            .finish()
    }
}

impl MomentumPolynomial {
    /// `coefficients(x, t)` returns one value per exponent row.
    pub fn new<F>(dim: usize, exponents: Vec<Vec<usize>>, coefficients: F) -> Self
    where
        F: Fn(&[Dual], &[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        assert!(exponents.iter().all(|e| e.len() == dim), "exponent row length");
        MomentumPolynomial {
            dim,
            exponents,
            coefficients: Arc::new(coefficients),
        }
    }

    pub fn exponents(&self) -> &[Vec<usize>] {
        &self.exponents
    }

    /// Direct evaluation on dual numbers.
    pub fn eval_dual(&self, x: &[Dual], pi: &[Dual], t: &[Dual]) -> Dual {
        let c = (self.coefficients)(x, t);
        let mut s = Dual::from_re(0.0);
        for (e, ck) in self.exponents.iter().zip(c) {
            let mut term = ck;
            for (mu, &k) in e.iter().enumerate() {
                if k > 0 {
                    term *= pi[mu].powi(k as i32);
                }
            }
            s += term;
        }
        s
    }

    /// Repackages the polynomial as a series of symmetric tensor fields.
    /// A monomial `c π^e` of rank `n` lands in the canonical slot of `e`
    /// with value `c Π e_μ! / (n! w_n)`.
    pub fn to_series(&self, normalization: Normalization) -> GeneratorSeries {
        let max_rank = self.exponents.iter().map(|e| e.iter().sum::<usize>()).max().unwrap_or(0);
        let mut series = GeneratorSeries::new(self.dim, normalization);
        for n in 0..=max_rank {
            let rows: Vec<(usize, Vec<usize>, f64)> = self
                .exponents
                .iter()
                .enumerate()
                .filter(|(_, e)| e.iter().sum::<usize>() == n)
                .map(|(k, e)| {
                    let idx: Vec<usize> = e.iter().enumerate().flat_map(|(mu, &c)| std::iter::repeat(mu).take(c)).collect();
                    let fact: f64 = e.iter().map(|&c| (1..=c).map(|v| v as f64).product::<f64>()).product();
                    let nfact: f64 = (1..=n).map(|v| v as f64).product();
                    (k, idx, fact / (nfact * normalization.weight(n)))
                })
                .collect();
            if rows.is_empty() {
                continue;
            }
            let coeffs = self.coefficients.clone();
            let field = SymmetricTensorField::sparse(format!("rank-{n}"), self.dim, n, move |x: &[Dual], t: &[Dual]| {
                let c = coeffs(x, t);
                rows.iter().map(|(k, idx, f)| (idx.clone(), c[*k] * *f)).collect()
            });
            series = series.with_term(field);
        }
        series
    }
}

/// A residual tensor together with the magnitude of the terms that formed it.
#[derive(Debug, Clone)]
pub struct Residual {
    pub tensor: SymmetricTensor,
    pub scale: f64,
}

impl Residual {
    pub fn max_abs(&self) -> f64 {
        self.tensor.max_abs()
    }

    pub fn ratio(&self) -> f64 {
        ratio(self.max_abs(), self.scale)
    }
}

fn ratio(residual: f64, scale: f64) -> f64 {
    if residual == 0.0 {
        0.0
    } else if scale > 0.0 {
        residual / scale
    } else {
        f64::INFINITY
    }
}

/// `T^{β μ..} = g^{βλ} T_λ^{ μ..}`, and the largest `|g^{βλ}| m_λ^{ μ..}`
/// for per-component magnitudes `m`.
fn raise_first(ginv: &DMatrix<f64>, t: &DenseTensor, magnitude: &DenseTensor) -> (DenseTensor, f64) {
    let d = t.dim();
    let inner = t.data().len() / d;
    let mut out = DenseTensor::zeros(d, t.rank());
    let mut scale = 0.0f64;
    for b in 0..d {
        for l in 0..d {
            let g = ginv[(b, l)];
            if g == 0.0 {
                continue;
            }
            for k in 0..inner {
                scale = scale.max((g * magnitude.data()[l * inner + k]).abs());
                out.data_mut()[b * inner + k] += g * t.data()[l * inner + k];
            }
        }
    }
    (out, scale)
}

/// `sym(g^{βλ} ∇_λ G^{μ..})` for a prepared point; `charge_rotation` adds the
/// non-abelian charge term of the covariant derivative.
fn symmetric_gradient(
    local: &LocalGeometry,
    field: &SymmetricTensorField,
    charges: &[f64],
    charge_rotation: Option<&DMatrix<f64>>,
    scheme: DifferentiationScheme,
) -> Result<Residual> {
    let parts = covariant_derivative_parts(local, field, charges, charge_rotation, scheme)?;
    let (total, scale) = raise_first(&local.ginv, &parts.total(), &parts.magnitude);
    Ok(Residual {
        tensor: total.symmetrize(),
        scale,
    })
}

/// Symmetrised covariant derivative `∇^{(β} G^{μ_1..μ_n)}`; vanishes iff the
/// field is a Killing tensor at `x`.
pub fn killing_residual(chart: &MetricChart, field: &SymmetricTensorField, x: &[f64], charges: &[f64]) -> Result<Residual> {
    let local = chart.local(x)?;
    symmetric_gradient(&local, field, charges, None, chart.scheme())
}

/// Residuals of the gauge-covariant hierarchy for a series.
#[derive(Debug, Clone)]
pub struct HierarchyResidual {
    /// Entry `k` is the coefficient of `π^k` in `m {G, H}`, divided by
    /// `w_{k-1}` for `k >= 1`.
    pub entries: Vec<Residual>,
}

impl HierarchyResidual {
    pub fn max_ratio(&self) -> f64 {
        self.entries.iter().map(Residual::ratio).fold(0.0, f64::max)
    }
}

fn accumulate(entry: &mut (DenseTensor, f64), add: &DenseTensor, weight: f64, scale: f64) {
    for (o, v) in entry.0.data_mut().iter_mut().zip(add.data()) {
        *o += weight * v;
    }
    entry.1 = entry.1.max(weight.abs() * scale);
}

/// Evaluates every rank of `m {G, H}` for the series `G`.
///
/// With weights `w_n`, entry `k` collects
/// `w_{k-1} sym∇G^{(k-1)} + k w_k sym(G^{(k)}·Q) − m (k+1) w_{k+1} ∂Φ·G^{(k+1)}`
/// where `(G·Q)^{β μ..} = G^{ν μ..} Q_{νκ} g^{κβ}`. For the factorial weights
/// this is `sym∇G^{(k-1)} + sym(G^{(k)}·Q) − (m/k) ∂Φ·G^{(k+1)}`.
pub fn hierarchy_residual(
    ham: &HamiltonianSpec,
    series: &GeneratorSeries,
    x: &[f64],
    charges: &[f64],
) -> Result<HierarchyResidual> {
    let ctx = ham.context();
    let chart = ctx.chart();
    let d = chart.dim();
    let local = chart.local(x)?;
    let q = ctx.field_matrix(x, charges)?;
    let rotation = match ctx.background() {
        Background::NonAbelian(bg) => Some(bg.charge_rotation(x, charges)),
        _ => None,
    };
    let dphi = ctx.scalar_potential().map(|phi| phi.gradient(x));
    let top = series.max_rank() + 1;
    let mut raw: Vec<(DenseTensor, f64)> = (0..=top).map(|k| (DenseTensor::zeros(d, k), 0.0)).collect();
    let q_up = q.as_ref().map(|q| q * &local.ginv);

    for n in 0..=series.max_rank() {
        let Some(field) = series.term(n) else { continue };
        let w = series.weight(n);
        let grad = symmetric_gradient(&local, field, charges, rotation.as_ref(), chart.scheme())?;
        accumulate(&mut raw[n + 1], &grad.tensor.expand(), w, grad.scale);
        if n == 0 {
            continue;
        }
        let g = field.evaluate(x, charges).expand();
        let inner = g.data().len() / d;
        if let Some(qu) = &q_up {
            // (G·Q)^{β J} = Σ_ν G^{ν J} Q_ν^{ β}
            let mut t = DenseTensor::zeros(d, n);
            let mut s = 0.0f64;
            for b in 0..d {
                for nu in 0..d {
                    let qv = qu[(nu, b)];
                    if qv == 0.0 {
                        continue;
                    }
                    for k in 0..inner {
                        let v = g.data()[nu * inner + k] * qv;
                        s = s.max(v.abs());
                        t.data_mut()[b * inner + k] += v;
                    }
                }
            }
            accumulate(&mut raw[n], &t.symmetrize().expand(), n as f64 * w, s);
        }
        if let Some(dp) = &dphi {
            let mut t = DenseTensor::zeros(d, n - 1);
            let mut s = 0.0f64;
            for (mu, dpm) in dp.iter().enumerate() {
                for k in 0..inner {
                    let v = dpm * g.data()[mu * inner + k];
                    s = s.max(v.abs());
                    t.data_mut()[k] += v;
                }
            }
            let coef = -ham.mass() * n as f64 * w;
            accumulate(&mut raw[n - 1], &t.symmetrize().expand(), coef, s);
        }
    }

    let entries = raw
        .into_iter()
        .enumerate()
        .map(|(k, (t, s))| {
            let norm = if k == 0 { 1.0 } else { series.weight(k - 1) };
            let mut tensor = t.symmetrize();
            tensor.scale(1.0 / norm);
            Residual { tensor, scale: s / norm }
        })
        .collect();
    Ok(HierarchyResidual { entries })
}

/// Worst case of a scaled check over a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    /// Largest `|residual| / scale`.
    pub max_ratio: f64,
    /// Residual and scale at the point achieving `max_ratio`.
    pub residual: f64,
    pub scale: f64,
    pub worst_index: usize,
    /// Largest absolute residual anywhere in the sample.
    pub max_residual: f64,
    pub mean_residual: f64,
    pub points: usize,
}

impl CheckOutcome {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_ratio <= tol
    }

    /// Folds per-point `(residual, scale)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        let mut out = CheckOutcome {
            max_ratio: 0.0,
            residual: 0.0,
            scale: 0.0,
            worst_index: 0,
            max_residual: 0.0,
            mean_residual: 0.0,
            points: pairs.len(),
        };
        let mut sum = 0.0;
        for (i, &(r, s)) in pairs.iter().enumerate() {
            let q = ratio(r, s);
            if i == 0 || q > out.max_ratio || q.is_nan() {
                out.max_ratio = q;
                out.residual = r;
                out.scale = s;
                out.worst_index = i;
            }
            out.max_residual = out.max_residual.max(r);
            sum += r;
        }
        if !pairs.is_empty() {
            out.mean_residual = sum / pairs.len() as f64;
        }
        out
    }
}

fn collect_pairs(results: Vec<Result<(f64, f64)>>) -> Result<CheckOutcome> {
    let pairs = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(CheckOutcome::from_pairs(&pairs))
}

/// `max |{G, H}|` over the sample, scaled per point by the largest bracket term.
pub fn conserved_check(ham: &HamiltonianSpec, obs: &dyn Observable, sample: &[PhasePoint]) -> Result<CheckOutcome> {
    conserved_check_with(ham, obs, sample, Execution::default())
}

pub fn conserved_check_with(
    ham: &HamiltonianSpec,
    obs: &dyn Observable,
    sample: &[PhasePoint],
    exec: Execution,
) -> Result<CheckOutcome> {
    let h = ham.observable();
    let ctx = ham.context();
    let results = sweep::map(exec, sample, |p| {
        let b = covariant_bracket_scaled(ctx, obs, &*h, p)?;
        Ok((b.value.abs(), b.scale))
    });
    collect_pairs(results)
}

/// `max |{{G, K}, H}|`: the bracket of two constants is again conserved.
///
/// The inner bracket is differentiated numerically. Its scale at a point is
/// the larger of the outer bracket's own terms and the brackets of `H` with
/// the derivatives of each inner term, which keeps commuting pairs (inner
/// bracket identically zero) from being judged against round-off alone.
pub fn closure_check(
    ham: &HamiltonianSpec,
    g: &SharedObservable,
    k: &SharedObservable,
    sample: &[PhasePoint],
) -> Result<CheckOutcome> {
    let ctx = ham.context();
    let inner = BracketObservable::new(ctx, g.clone(), k.clone());
    let h = ham.observable();
    let results = sweep::map(Execution::default(), sample, |p| {
        let frame = ctx.frame(p)?;
        let hg = h.gradient(p);
        let outer = frame.bracket(&inner.gradient(p), &hg);
        let terms = inner_term_scale(ctx, &**g, &**k, p, &hg)?;
        Ok((outer.value.abs(), outer.scale.max(terms)))
    });
    collect_pairs(results)
}

fn inner_term_scale(
    ctx: &BracketContext,
    g: &dyn Observable,
    k: &dyn Observable,
    p: &PhasePoint,
    hg: &PhaseGradient,
) -> Result<f64> {
    let frame = ctx.frame(p)?;
    let len = frame.bracket_terms(&g.gradient(p), &k.gradient(p)).len();
    let (d, na) = (p.dim(), p.algebra_dim());
    let terms = |s: &[f64]| -> Vec<f64> {
        let q = PhasePoint::from_state(d, s);
        match ctx.frame(&q) {
            Ok(f) => f.bracket_terms(&g.gradient(&q), &k.gradient(&q)),
            Err(_) => vec![f64::NAN; len],
        }
    };
    let jac = diff::jacobian_fd(&terms, &p.state());
    let mut scale = 0.0f64;
    for i in 0..len {
        let col: Vec<f64> = jac.iter().map(|row| row[i]).collect();
        let grad = PhaseGradient {
            dx: col[..d].to_vec(),
            dpi: col[d..2 * d].to_vec(),
            dt: col[2 * d..2 * d + na].to_vec(),
        };
        scale = scale.max(frame.bracket(&grad, hg).scale);
    }
    Ok(scale)
}

/// Killing residual over a sample of positions (charges taken from the points).
pub fn killing_check(chart: &MetricChart, field: &SymmetricTensorField, sample: &[PhasePoint]) -> Result<CheckOutcome> {
    let results = sweep::map(Execution::default(), sample, |p| {
        let r = killing_residual(chart, field, &p.x, &p.t)?;
        Ok((r.max_abs(), r.scale))
    });
    collect_pairs(results)
}

/// Per-rank worst cases of the hierarchy residual over a sample.
pub fn hierarchy_check(ham: &HamiltonianSpec, series: &GeneratorSeries, sample: &[PhasePoint]) -> Result<Vec<CheckOutcome>> {
    let per_point = sweep::map(Execution::default(), sample, |p| hierarchy_residual(ham, series, &p.x, &p.t))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let ranks = series.max_rank() + 2;
    Ok((0..ranks)
        .map(|k| {
            let pairs: Vec<(f64, f64)> = per_point.iter().map(|h| (h.entries[k].max_abs(), h.entries[k].scale)).collect();
            CheckOutcome::from_pairs(&pairs)
        })
        .collect())
}

/// Bracket of generator tensors: for `A` of rank `n` and `B` of rank `m`,
/// `C = sym[m B^{λ(..}∇_λ A^{..)} − n A^{λ(..}∇_λ B^{..)}]` of rank `n + m − 1`,
/// so that `{A π^n, B π^m} = C π^{n+m-1}` in a geodesic context.
pub fn generator_bracket(
    chart: &MetricChart,
    a: &SymmetricTensorField,
    b: &SymmetricTensorField,
) -> Result<SymmetricTensorField> {
    let (n, m) = (a.rank(), b.rank());
    if n == 0 || m == 0 {
        return Err(Error::RankZeroOperand);
    }
    for f in [a, b] {
        if f.dim() != chart.dim() {
            return Err(Error::DimensionMismatch {
                what: "tensor field",
                expected: chart.dim(),
                got: f.dim(),
            });
        }
    }
    let (chart, a, b) = (chart.clone(), a.clone(), b.clone());
    let name = format!("[{}, {}]", a.name(), b.name());
    let d = chart.dim();
    let rank = n + m - 1;
    let len = SymmetricLayout::get(d, rank).len();
    Ok(SymmetricTensorField::numeric(name, d, rank, move |x: &[f64], t: &[f64]| {
        generator_bracket_at(&chart, &a, &b, x, t).map_or_else(|_| vec![f64::NAN; len], |s| s.data().to_vec())
    }))
}

fn generator_bracket_at(
    chart: &MetricChart,
    a: &SymmetricTensorField,
    b: &SymmetricTensorField,
    x: &[f64],
    t: &[f64],
) -> Result<SymmetricTensor> {
    let local = chart.local(x)?;
    let d = local.dim();
    let (n, m) = (a.rank(), b.rank());
    let scheme = chart.scheme();
    let na = covariant_derivative_parts(&local, a, t, None, scheme)?.total();
    let nb = covariant_derivative_parts(&local, b, t, None, scheme)?.total();
    let av = a.evaluate(x, t).expand();
    let bv = b.evaluate(x, t).expand();
    let rank = n + m - 1;
    let mut out = DenseTensor::zeros(d, rank);
    let mut idx = vec![0usize; rank];
    // output index layout: (B's remaining m-1 indices, A's n indices) for the
    // first term; symmetrisation makes the order immaterial.
    for flat in 0..out.data().len() {
        unflatten(flat, d, &mut idx);
        let (bj, ai) = idx.split_at(m - 1);
        let mut s = 0.0;
        for l in 0..d {
            let mut bi = vec![l];
            bi.extend_from_slice(bj);
            let mut da = vec![l];
            da.extend_from_slice(ai);
            s += m as f64 * bv.get(&bi) * na.get(&da);
        }
        let (ak, bk) = idx.split_at(n - 1);
        for l in 0..d {
            let mut ai2 = vec![l];
            ai2.extend_from_slice(ak);
            let mut db = vec![l];
            db.extend_from_slice(bk);
            s -= n as f64 * av.get(&ai2) * nb.get(&db);
        }
        out.data_mut()[flat] = s;
    }
    Ok(out.symmetrize())
}
