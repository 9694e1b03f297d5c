//! Differentiation schemes: dual-number forward mode and central finite
//! differences.

use std::sync::Arc;

pub use num_dual::DualNum;
use serde::{Deserialize, Serialize};

/// First-order dual number used by every differentiable closure in the crate.
pub type Dual = num_dual::Dual64;

/// Dual number over dual numbers, used where a closure must be differentiated
/// twice (gauge functions whose gradient enters a potential).
pub type Dual2 = num_dual::Dual<Dual>;

/// Vector-valued differentiable map on coordinates.
pub type VectorFn = Arc<dyn Fn(&[Dual]) -> Vec<Dual> + Send + Sync>;

/// Scalar differentiable map on coordinates.
pub type ScalarFn = Arc<dyn Fn(&[Dual]) -> Dual + Send + Sync>;

/// Analytic partial derivatives: `x -> [∂_0 f, ∂_1 f, ...]`, each of the
/// same length as `f(x)`.
pub type PartialsFn = Arc<dyn Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DifferentiationScheme {
    /// Closed-form partials supplied alongside the closure.
    Analytic,
    /// Forward-mode dual numbers, one pass per seeded coordinate.
    #[default]
    Dual,
    /// Central differences with step `cbrt(eps) * max(1, |x|)`.
    FiniteDifference,
}

/// Central-difference step for coordinate value `x`.
///
/// The step is rounded so that `x + h` and `x - h` are exactly representable,
/// which keeps differences of linear functions exact.
pub fn fd_step(x: f64) -> f64 {
    let h = f64::EPSILON.cbrt() * x.abs().max(1.0);
    let h = 2f64.powi(h.log2().round() as i32);
    (x + h) - x
}

pub fn constant(x: &[f64]) -> Vec<Dual> {
    x.iter().map(|&v| Dual::from_re(v)).collect()
}

pub fn seeded(x: &[f64], k: usize) -> Vec<Dual> {
    x.iter()
        .enumerate()
        .map(|(i, &v)| Dual::new(v, if i == k { 1.0 } else { 0.0 }))
        .collect()
}

pub fn values(f: &dyn Fn(&[Dual]) -> Vec<Dual>, x: &[f64]) -> Vec<f64> {
    f(&constant(x)).into_iter().map(|d| d.re).collect()
}

/// Values and partials of `f` at `x` by forward mode: `partials[k][i] = ∂_k f_i`.
pub fn jacobian_dual(f: &dyn Fn(&[Dual]) -> Vec<Dual>, x: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut vals = Vec::new();
    let mut partials = Vec::with_capacity(x.len());
    for k in 0..x.len() {
        let out = f(&seeded(x, k));
        if k == 0 {
            vals = out.iter().map(|d| d.re).collect();
        }
        partials.push(out.iter().map(|d| d.eps).collect());
    }
    if x.is_empty() {
        vals = values(f, x);
    }
    (vals, partials)
}

/// Partials of `f` at `x` by central differences: `partials[k][i] = ∂_k f_i`.
pub fn jacobian_fd(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Vec<Vec<f64>> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = fd_step(x[k]);
            probe[k] = x[k] + h;
            let plus = f(&probe);
            probe[k] = x[k] - h;
            let minus = f(&probe);
            probe[k] = x[k];
            plus.iter()
                .zip(&minus)
                .map(|(p, m)| (p - m) / (2.0 * h))
                .collect()
        })
        .collect()
}

/// Values and partials of `f` using the requested scheme. `analytic` is used
/// only for [`DifferentiationScheme::Analytic`] and falls back to dual mode
/// when absent.
pub fn jacobian(
    f: &dyn Fn(&[Dual]) -> Vec<Dual>,
    analytic: Option<&PartialsFn>,
    scheme: DifferentiationScheme,
    x: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>) {
    match (scheme, analytic) {
        (DifferentiationScheme::Analytic, Some(p)) => (values(f, x), p(x)),
        (DifferentiationScheme::FiniteDifference, _) => {
            let plain = |y: &[f64]| values(f, y);
            (values(f, x), jacobian_fd(&plain, x))
        }
        _ => jacobian_dual(f, x),
    }
}

/// Gradient of a scalar closure by forward mode.
pub fn gradient_dual(f: &dyn Fn(&[Dual]) -> Dual, x: &[f64]) -> (f64, Vec<f64>) {
    let value = f(&constant(x)).re;
    let grad = (0..x.len()).map(|k| f(&seeded(x, k)).eps).collect();
    (value, grad)
}
