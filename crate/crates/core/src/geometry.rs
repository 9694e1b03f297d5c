//! Coordinate charts, metrics and connection coefficients.
//!
//! Index convention: Christoffel symbols are stored as `Γ[λ][ν][μ] =
//! Γ_{λν}^{ μ}`, the contravariant index last. Metric closures return the
//! packed upper triangle (`i <= j`, row-major) so every metric is symmetric
//! by construction.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::diff::{self, DifferentiationScheme, Dual, PartialsFn, VectorFn};
use crate::error::{Error, Result};
use crate::killing::SymmetricTensorField;
use crate::tensor::DenseTensor;

pub type DomainFn = Arc<dyn Fn(&[f64]) -> bool + Send + Sync>;
pub type DistanceFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Position of `(i, j)` in the packed upper triangle of a `dim x dim` matrix.
pub fn packed_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dim - i * i.saturating_sub(1) / 2 + (j - i)
}

pub fn packed_len(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

fn unpack(dim: usize, packed: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(dim, dim, |i, j| packed[packed_index(dim, i, j)])
}

/// A coordinate chart carrying a metric `g_{μν}(x)`.
#[derive(Clone)]
pub struct MetricChart {
    name: String,
    coordinate_names: Vec<String>,
    metric: VectorFn,
    metric_partials: Option<PartialsFn>,
    domain: DomainFn,
    boundary_distance: Option<DistanceFn>,
    signature_hint: Vec<i8>,
    scheme: DifferentiationScheme,
    singularity_tolerance: f64,
}

impl fmt::Debug for MetricChart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MetricChart")
            .field("name", &self.name)
            .field("coordinates", &self.coordinate_names)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl MetricChart {
    /// `metric` must return the packed upper triangle of `g_{μν}`.
    pub fn new<F>(name: impl Into<String>, coordinate_names: &[&str], metric: F) -> Self
    where
        F: Fn(&[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        let dim = coordinate_names.len();
        MetricChart {
            name: name.into(),
            coordinate_names: coordinate_names.iter().map(|s| s.to_string()).collect(),
            metric: Arc::new(metric),
            metric_partials: None,
            domain: Arc::new(|x: &[f64]| x.iter().all(|v| v.is_finite())),
            boundary_distance: None,
            signature_hint: vec![1; dim],
            scheme: DifferentiationScheme::Dual,
            singularity_tolerance: 1e-12,
        }
    }

    pub fn with_domain<F>(mut self, domain: F) -> Self
    where
        F: Fn(&[f64]) -> bool + Send + Sync + 'static,
    {
        self.domain = Arc::new(move |x: &[f64]| x.iter().all(|v| v.is_finite()) && domain(x));
        self
    }

    /// Distance-like measure to the nearest exclusion zone, used by the
    /// integrator's domain margin.
    pub fn with_boundary_distance<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        self.boundary_distance = Some(Arc::new(f));
        self
    }

    /// Analytic partials `x -> [∂_λ g (packed)]_λ`.
    pub fn with_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    {
        self.metric_partials = Some(Arc::new(f));
        self
    }

    pub fn with_scheme(mut self, scheme: DifferentiationScheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_signature(mut self, signature: Vec<i8>) -> Self {
        self.signature_hint = signature;
        self
    }

    pub fn with_singularity_tolerance(mut self, tol: f64) -> Self {
        self.singularity_tolerance = tol;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coordinate_names.len()
    }

    pub fn coordinate_names(&self) -> &[String] {
        &self.coordinate_names
    }

    pub fn signature_hint(&self) -> &[i8] {
        &self.signature_hint
    }

    pub fn scheme(&self) -> DifferentiationScheme {
        self.scheme
    }

    pub fn has_analytic_partials(&self) -> bool {
        self.metric_partials.is_some()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && (self.domain)(x)
    }

    pub fn boundary_distance(&self, x: &[f64]) -> Option<f64> {
        self.boundary_distance.as_ref().map(|f| f(x))
    }

    pub fn check_domain(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "coordinates",
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !(self.domain)(x) {
            return Err(Error::OutOfDomain {
                chart: self.name.clone(),
                x: x.to_vec(),
            });
        }
        Ok(())
    }

    /// Metric evaluated on dual coordinates, packed upper triangle.
    pub fn metric_dual(&self, x: &[Dual]) -> Vec<Dual> {
        (self.metric)(x)
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        Ok(unpack(self.dim(), &diff::values(&*self.metric, x)))
    }

    /// `∂_λ g_{μν}` for every λ using the chart's differentiation scheme.
    pub fn metric_partials_at(&self, x: &[f64]) -> Result<Vec<DMatrix<f64>>> {
        self.metric_partials_with(x, self.scheme)
    }

    pub fn metric_partials_with(&self, x: &[f64], scheme: DifferentiationScheme) -> Result<Vec<DMatrix<f64>>> {
        self.check_domain(x)?;
        let (_, partials) = diff::jacobian(&*self.metric, self.metric_partials.as_ref(), scheme, x);
        Ok(partials.iter().map(|p| unpack(self.dim(), p)).collect())
    }

    fn invert(&self, x: &[f64], g: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let det = g.determinant();
        let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(d as i32);
        if !det.is_finite() || det.abs() <= self.singularity_tolerance * scale {
            return Err(Error::SingularMetric { x: x.to_vec(), det });
        }
        let inv = g
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMetric { x: x.to_vec(), det })?;
        // exact symmetry of the inverse
        Ok(DMatrix::from_fn(d, d, |i, j| {
            if i <= j {
                inv[(i, j)]
            } else {
                inv[(j, i)]
            }
        }))
    }

    pub fn inverse_metric_at(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        let g = self.metric_at(x)?;
        self.invert(x, &g)
    }

    pub fn christoffel_at(&self, x: &[f64]) -> Result<Christoffel> {
        Ok(self.local(x)?.gamma)
    }

    pub fn christoffel_with(&self, x: &[f64], scheme: DifferentiationScheme) -> Result<Christoffel> {
        let g = self.metric_at(x)?;
        let ginv = self.invert(x, &g)?;
        let dg = self.metric_partials_with(x, scheme)?;
        Ok(Christoffel::from_metric(&ginv, &dg))
    }

    /// Metric, inverse, partials and connection at one point.
    pub fn local(&self, x: &[f64]) -> Result<LocalGeometry> {
        self.check_domain(x)?;
        let d = self.dim();
        let (vals, partials) = diff::jacobian(&*self.metric, self.metric_partials.as_ref(), self.scheme, x);
        let g = unpack(d, &vals);
        let ginv = self.invert(x, &g)?;
        let dg: Vec<_> = partials.iter().map(|p| unpack(d, p)).collect();
        let gamma = Christoffel::from_metric(&ginv, &dg);
        Ok(LocalGeometry {
            x: x.to_vec(),
            g,
            ginv,
            dg,
            gamma,
        })
    }
}

/// Connection coefficients `Γ_{λν}^{ μ}`, stored `[λ][ν][μ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Christoffel {
    dim: usize,
    data: Vec<f64>,
}

impl Christoffel {
    /// `Γ_{λν}^{ μ} = ½ g^{μκ}(∂_λ g_{κν} + ∂_ν g_{κλ} − ∂_κ g_{λν})`,
    /// evaluated for `λ <= ν` and mirrored.
    pub fn from_metric(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Self {
        let d = ginv.nrows();
        let mut data = vec![0.0; d * d * d];
        for l in 0..d {
            for n in l..d {
                for m in 0..d {
                    let mut s = 0.0;
                    for k in 0..d {
                        let lowered = (dg[l][(k, n)] + dg[n][(k, l)]) - dg[k][(l, n)];
                        s += ginv[(m, k)] * lowered;
                    }
                    s *= 0.5;
                    data[(l * d + n) * d + m] = s;
                    data[(n * d + l) * d + m] = s;
                }
            }
        }
        Christoffel { dim: d, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Christoffel {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `Γ_{λν}^{ μ}`.
    #[inline]
    pub fn get(&self, lambda: usize, nu: usize, mu: usize) -> f64 {
        self.data[(lambda * self.dim + nu) * self.dim + mu]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(Γπ)_{μν} = Γ_{μν}^{ λ} π_λ`.
    pub fn contract_momentum(&self, pi: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |m, n| (0..d).map(|l| self.get(m, n, l) * pi[l]).sum())
    }
}

/// Geometric data at a single point.
#[derive(Debug, Clone)]
pub struct LocalGeometry {
    pub x: Vec<f64>,
    pub g: DMatrix<f64>,
    pub ginv: DMatrix<f64>,
    /// `dg[λ][(μ, ν)] = ∂_λ g_{μν}`.
    pub dg: Vec<DMatrix<f64>>,
    pub gamma: Christoffel,
}

impl LocalGeometry {
    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    /// `π^μ = g^{μν} π_ν`.
    pub fn raise(&self, pi: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|m| (0..d).map(|n| self.ginv[(m, n)] * pi[n]).sum()).collect()
    }

    /// `v_μ = g_{μν} v^ν`.
    pub fn lower(&self, v: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..d).map(|m| (0..d).map(|n| self.g[(m, n)] * v[n]).sum()).collect()
    }
}

/// Covariant derivative split into its partial-derivative, connection and
/// charge-rotation pieces. Index 0 of each tensor is the derivative index λ
/// (covariant); the remaining indices are the field's contravariant ones.
#[derive(Debug, Clone)]
pub struct CovariantDerivative {
    pub partial: DenseTensor,
    pub connection: DenseTensor,
    pub charge: DenseTensor,
    /// Largest single product entering each component.
    pub magnitude: DenseTensor,
}

impl CovariantDerivative {
    pub fn total(&self) -> DenseTensor {
        let mut out = self.partial.clone();
        for ((o, c), q) in out
            .data_mut()
            .iter_mut()
            .zip(self.connection.data())
            .zip(self.charge.data())
        {
            *o += c + q;
        }
        out
    }
}

/// `∇_λ G^{μ_1..μ_n}` with one connection term per index. The returned
/// tensor has rank `n + 1`, derivative index first, not symmetrised.
pub fn covariant_tensor_derivative(
    chart: &MetricChart,
    field: &SymmetricTensorField,
    x: &[f64],
) -> Result<DenseTensor> {
    let local = chart.local(x)?;
    Ok(covariant_derivative_parts(&local, field, &[], None, chart.scheme())?.total())
}

/// Pieces of the covariant derivative at a prepared point. `charge_rotation`,
/// when given, is the matrix `C_{λb}` multiplying `∂G/∂t_b` (non-abelian
/// backgrounds).
pub fn covariant_derivative_parts(
    local: &LocalGeometry,
    field: &SymmetricTensorField,
    charges: &[f64],
    charge_rotation: Option<&DMatrix<f64>>,
    scheme: DifferentiationScheme,
) -> Result<CovariantDerivative> {
    let d = local.dim();
    if field.dim() != d {
        return Err(Error::DimensionMismatch {
            what: "tensor field",
            expected: d,
            got: field.dim(),
        });
    }
    let n = field.rank();
    let eval = field.evaluate_with_partials(&local.x, charges, scheme);
    let dense = eval.value.expand();
    let dense_dx: Vec<DenseTensor> = eval.dx.iter().map(|t| t.expand()).collect();
    let dense_dt: Vec<DenseTensor> = eval.dt.iter().map(|t| t.expand()).collect();

    let mut partial = DenseTensor::zeros(d, n + 1);
    let mut connection = DenseTensor::zeros(d, n + 1);
    let mut charge = DenseTensor::zeros(d, n + 1);
    let mut magnitude = DenseTensor::zeros(d, n + 1);
    let mut idx = vec![0usize; n + 1];
    let mut sub = vec![0usize; n];
    let total = d.pow((n + 1) as u32);
    for flat in 0..total {
        crate::tensor::unflatten(flat, d, &mut idx);
        let lambda = idx[0];
        sub.copy_from_slice(&idx[1..]);
        let dpart = dense_dx[lambda].get(&sub);
        partial.data_mut()[flat] = dpart;
        let mut mag = dpart.abs();

        let mut conn = 0.0;
        for pos in 0..n {
            let mu = sub[pos];
            let mut probe = sub.clone();
            for kappa in 0..d {
                let gamma = local.gamma.get(lambda, kappa, mu);
                if gamma != 0.0 {
                    probe[pos] = kappa;
                    let v = gamma * dense.get(&probe);
                    mag = mag.max(v.abs());
                    conn += v;
                }
            }
        }
        connection.data_mut()[flat] = conn;

        if let Some(c) = charge_rotation {
            let mut q = 0.0;
            for (b, dtb) in dense_dt.iter().enumerate() {
                let v = c[(lambda, b)] * dtb.get(&sub);
                mag = mag.max(v.abs());
                q += v;
            }
            charge.data_mut()[flat] = q;
        }
        magnitude.data_mut()[flat] = mag;
    }
    Ok(CovariantDerivative {
        partial,
        connection,
        charge,
        magnitude,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{axial, kerr};

    #[test]
    fn axial_connection() {
        let g = axial().christoffel_at(&[2.0, 0.5, 1.0]).unwrap();
        assert_eq!(g.get(2, 2, 0), -2.0);
        assert_eq!(g.get(0, 2, 2), 0.5);
        assert_eq!(g.get(2, 0, 2), 0.5);
        assert_eq!(g.get(0, 0, 0), 0.0);
    }

    #[test]
    fn dual_and_fd_connections_agree_on_kerr() {
        let chart = kerr::chart(kerr::KerrParams::new(1.0, 0.8).unwrap());
        let x = [0.0, 4.0, 0.9, 0.2];
        let a = chart.christoffel_with(&x, DifferentiationScheme::Dual).unwrap();
        let b = chart.christoffel_with(&x, DifferentiationScheme::FiniteDifference).unwrap();
        let scale = a.max_abs();
        for l in 0..4 {
            for n in 0..4 {
                for m in 0..4 {
                    assert!((a.get(l, n, m) - b.get(l, n, m)).abs() <= 1e-7 * scale);
                }
            }
        }
    }

    #[test]
    fn domain_and_singularity_errors() {
        assert!(matches!(axial().local(&[-1.0, 0.0, 0.0]), Err(Error::OutOfDomain { .. })));
        let degenerate = MetricChart::new("degenerate", &["u", "v"], |x: &[Dual]| vec![x[0], x[0], x[0]]);
        assert!(matches!(degenerate.inverse_metric_at(&[1.0, 0.0]), Err(Error::SingularMetric { .. })));
    }

    #[test]
    fn raise_lower_round_trip() {
        let local = axial().local(&[3.0, 0.0, 0.0]).unwrap();
        let v = local.raise(&[1.0, 2.0, 9.0]);
        assert_eq!(v, vec![1.0, 2.0, 1.0]);
        assert_eq!(local.lower(&v), vec![1.0, 2.0, 9.0]);
    }
}
