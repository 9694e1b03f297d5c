//! Gauge backgrounds: abelian and non-abelian potentials, their field
//! strengths, structure constants and scalar potentials.
//!
//! In the antisymmetrised combination `∇_μ A_ν − ∇_ν A_μ` the Christoffel
//! terms cancel (the connection is symmetric), so field strengths are built
//! from plain partial derivatives.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::diff::{self, DifferentiationScheme, Dual, Dual2, PartialsFn, ScalarFn, VectorFn};
use crate::error::{Error, Result};
use crate::geometry::MetricChart;

/// Structure constants `f_{ab}^{ c}` of the charge algebra, stored `[a][b][c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    dim: usize,
    f: Vec<f64>,
}

impl StructureConstants {
    pub fn new(dim: usize, f: Vec<f64>) -> Result<Self> {
        if f.len() != dim * dim * dim {
            return Err(Error::DimensionMismatch {
                what: "structure constants",
                expected: dim * dim * dim,
                got: f.len(),
            });
        }
        let sc = StructureConstants { dim, f };
        for a in 0..dim {
            for b in 0..dim {
                for c in 0..dim {
                    if sc.get(a, b, c) != -sc.get(b, a, c) {
                        return Err(Error::InvalidStructureConstants(format!(
                            "f[{a}][{b}][{c}] is not antisymmetric in its lower indices"
                        )));
                    }
                }
            }
        }
        let scale = sc.f.iter().fold(0.0f64, |m, v| m.max(v.abs())).powi(2).max(1.0);
        let jac = sc.jacobi_residual();
        if jac > 1e-14 * scale {
            return Err(Error::InvalidStructureConstants(format!(
                "Jacobi identity violated by {jac:e}"
            )));
        }
        Ok(sc)
    }

    /// su(2) with `f_{ab}^{ c} = ε_{abc}`.
    pub fn su2() -> Self {
        let mut f = vec![0.0; 27];
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    f[(a * 3 + b) * 3 + c] = levi_civita3(a, b, c);
                }
            }
        }
        StructureConstants { dim: 3, f }
    }

    /// Commuting algebra of the given dimension.
    pub fn abelian(dim: usize) -> Self {
        StructureConstants {
            dim,
            f: vec![0.0; dim * dim * dim],
        }
    }

    pub fn algebra_dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.f[(a * self.dim + b) * self.dim + c]
    }

    /// Largest component of `f_{ab}^d f_{dc}^e + f_{bc}^d f_{da}^e + f_{ca}^d f_{db}^e`.
    pub fn jacobi_residual(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    for e in 0..n {
                        let mut s = 0.0;
                        for d in 0..n {
                            s += self.get(a, b, d) * self.get(d, c, e)
                                + self.get(b, c, d) * self.get(d, a, e)
                                + self.get(c, a, d) * self.get(d, b, e);
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// `P_{ab} = f_{ab}^{ c} t_c`, exactly antisymmetric.
    pub fn contract_charges(&self, t: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        DMatrix::from_fn(n, n, |a, b| (0..n).map(|c| self.get(a, b, c) * t[c]).sum())
    }
}

pub fn levi_civita3(a: usize, b: usize, c: usize) -> f64 {
    match (a, b, c) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

fn potential_partials(
    potential: &VectorFn,
    analytic: Option<&PartialsFn>,
    chart: &MetricChart,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    chart.check_domain(x)?;
    let scheme = match chart.scheme() {
        DifferentiationScheme::Analytic if analytic.is_none() => DifferentiationScheme::Dual,
        s => s,
    };
    Ok(diff::jacobian(&**potential, analytic, scheme, x))
}

/// `F_{μν} = ∂_μ A_ν − ∂_ν A_μ` from partials laid out `dA[μ][ν] = ∂_μ A_ν`,
/// filled for `μ < ν` and mirrored with the opposite sign.
fn curl(dim: usize, da: impl Fn(usize, usize) -> f64) -> DMatrix<f64> {
    let mut f = DMatrix::zeros(dim, dim);
    for m in 0..dim {
        for n in (m + 1)..dim {
            let v = da(m, n) - da(n, m);
            f[(m, n)] = v;
            f[(n, m)] = -v;
        }
    }
    f
}

/// Abelian potential `A_μ(x)` coupled with charge `q`.
#[derive(Clone)]
pub struct AbelianBackground {
    charge: f64,
    potential: VectorFn,
    potential_partials: Option<PartialsFn>,
}

impl fmt::Debug for AbelianBackground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AbelianBackground").field("charge", &self.charge).finish()
    }
}

impl AbelianBackground {
    pub fn new<F>(charge: f64, potential: F) -> Self
    where
        F: Fn(&[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        AbelianBackground {
            charge,
            potential: Arc::new(potential),
            potential_partials: None,
        }
    }

    /// Closed-form `∂_μ A_ν`, laid out `[μ][ν]`.
    pub fn with_partials<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<Vec<f64>> + Send + Sync + 'static,
    {
        self.potential_partials = Some(Arc::new(f));
        self
    }

    pub fn charge(&self) -> f64 {
        self.charge
    }

    pub fn potential_at(&self, x: &[f64]) -> Vec<f64> {
        diff::values(&*self.potential, x)
    }

    pub fn potential_dual(&self, x: &[Dual]) -> Vec<Dual> {
        (self.potential)(x)
    }

    /// Canonical momentum `p = π + qA`.
    pub fn canonical_momentum(&self, x: &[f64], pi: &[f64]) -> Vec<f64> {
        let a = self.potential_at(x);
        pi.iter().zip(&a).map(|(p, a)| p + self.charge * a).collect()
    }
}

pub fn field_strength_abelian(bg: &AbelianBackground, chart: &MetricChart, x: &[f64]) -> Result<DMatrix<f64>> {
    let (_, da) = potential_partials(&bg.potential, bg.potential_partials.as_ref(), chart, x)?;
    Ok(curl(chart.dim(), |m, n| da[m][n]))
}

/// `A'_μ = A_μ + ∂_μ Λ`. Λ is written on second-order duals so that the new
/// potential stays differentiable.
pub fn apply_gauge_transformation<L>(bg: &AbelianBackground, lambda: L) -> AbelianBackground
where
    L: Fn(&[Dual2]) -> Dual2 + Send + Sync + 'static,
{
    let inner = bg.potential.clone();
    let potential = move |x: &[Dual]| -> Vec<Dual> {
        let mut a = inner(x);
        for (mu, slot) in a.iter_mut().enumerate() {
            let z: Vec<Dual2> = x
                .iter()
                .enumerate()
                .map(|(k, &xk)| Dual2::new(xk, if k == mu { Dual::from_re(1.0) } else { Dual::from_re(0.0) }))
                .collect();
            *slot += lambda(&z).eps;
        }
        a
    };
    AbelianBackground {
        charge: bg.charge,
        potential: Arc::new(potential),
        potential_partials: None,
    }
}

/// Non-abelian potential `A_μ^a(x)`; the closure returns `algebra_dim * dim`
/// values laid out `[a][μ]`.
#[derive(Clone)]
pub struct NonAbelianBackground {
    coupling: f64,
    structure: StructureConstants,
    dim: usize,
    potential: VectorFn,
}

impl fmt::Debug for NonAbelianBackground {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NonAbelianBackground")
            .field("coupling", &self.coupling)
            .field("algebra_dim", &self.structure.algebra_dim())
            .finish()
    }
}

impl NonAbelianBackground {
    pub fn new<F>(coupling: f64, structure: StructureConstants, dim: usize, potential: F) -> Self
    where
        F: Fn(&[Dual]) -> Vec<Dual> + Send + Sync + 'static,
    {
        NonAbelianBackground {
            coupling,
            structure,
            dim,
            potential: Arc::new(potential),
        }
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    pub fn structure(&self) -> &StructureConstants {
        &self.structure
    }

    pub fn algebra_dim(&self) -> usize {
        self.structure.algebra_dim()
    }

    /// `A[a][μ]` at `x`.
    pub fn potential_at(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let flat = diff::values(&*self.potential, x);
        flat.chunks(self.dim).map(|c| c.to_vec()).collect()
    }

    /// `C_{μb} = g f_{ab}^{ c} t_c A_μ^a`, the charge-rotation matrix in
    /// `D_μ G ⊃ C_{μb} ∂G/∂t_b`.
    pub fn charge_rotation(&self, x: &[f64], t: &[f64]) -> DMatrix<f64> {
        let a = self.potential_at(x);
        let n = self.algebra_dim();
        let f = &self.structure;
        DMatrix::from_fn(self.dim, n, |mu, b| {
            let mut s = 0.0;
            for (ai, row) in a.iter().enumerate() {
                for (c, tc) in t.iter().enumerate() {
                    s += f.get(ai, b, c) * tc * row[mu];
                }
            }
            self.coupling * s
        })
    }
}

/// `F^a_{μν} = ∂_μ A^a_ν − ∂_ν A^a_μ + g f_{bc}^{ a} A^b_μ A^c_ν`, one matrix per `a`.
pub fn field_strength_nonabelian(
    bg: &NonAbelianBackground,
    chart: &MetricChart,
    x: &[f64],
) -> Result<Vec<DMatrix<f64>>> {
    let (vals, partials) = potential_partials(&bg.potential, None, chart, x)?;
    let d = chart.dim();
    let n = bg.algebra_dim();
    let a = |alg: usize, mu: usize| vals[alg * d + mu];
    let f = &bg.structure;
    Ok((0..n)
        .map(|alg| {
            let mut fs = curl(d, |m, nu| partials[m][alg * d + nu]);
            for m in 0..d {
                for nu in (m + 1)..d {
                    let mut quad = 0.0;
                    for b in 0..n {
                        for c in 0..n {
                            quad += f.get(b, c, alg) * a(b, m) * a(c, nu);
                        }
                    }
                    let v = fs[(m, nu)] + bg.coupling * quad;
                    fs[(m, nu)] = v;
                    fs[(nu, m)] = -v;
                }
            }
            fs
        })
        .collect())
}

/// Scalar potential `Φ(x)` added to the Hamiltonian.
#[derive(Clone)]
pub struct ScalarPotential {
    phi: ScalarFn,
    gradient: Option<Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>>,
}

impl fmt::Debug for ScalarPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ScalarPotential")
    }
}

impl ScalarPotential {
    pub fn new<F>(phi: F) -> Self
    where
        F: Fn(&[Dual]) -> Dual + Send + Sync + 'static,
    {
        ScalarPotential {
            phi: Arc::new(phi),
            gradient: None,
        }
    }

    pub fn with_gradient<F>(mut self, f: F) -> Self
    where
        F: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    {
        self.gradient = Some(Arc::new(f));
        self
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.phi)(&diff::constant(x)).re
    }

    pub fn value_dual(&self, x: &[Dual]) -> Dual {
        (self.phi)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match &self.gradient {
            Some(g) => g(x),
            None => diff::gradient_dual(&*self.phi, x).1,
        }
    }

    pub fn gradient_fd(&self, x: &[f64]) -> Vec<f64> {
        let f = |y: &[f64]| vec![self.value(y)];
        diff::jacobian_fd(&f, x).into_iter().map(|v| v[0]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::flat;
    use crate::diff::DualNum;

    fn uniform_b(b: f64) -> AbelianBackground {
        AbelianBackground::new(1.0, move |x: &[Dual]| vec![x[1] * (-0.5 * b), x[0] * (0.5 * b)])
    }

    #[test]
    fn su2_structure_constants_valid() {
        let f = StructureConstants::su2();
        assert_eq!(f.jacobi_residual(), 0.0);
        assert!(StructureConstants::new(3, f.f.clone()).is_ok());
        assert_eq!(f.get(0, 1, 2), 1.0);
        assert_eq!(f.get(1, 0, 2), -1.0);
    }

    #[test]
    fn rejects_non_antisymmetric_constants() {
        let mut f = vec![0.0; 8];
        f[1] = 1.0;
        assert!(matches!(
            StructureConstants::new(2, f),
            Err(Error::InvalidStructureConstants(_))
        ));
    }

    #[test]
    fn zero_potential_has_zero_field() {
        let chart = flat(2);
        let bg = AbelianBackground::new(1.0, |_x: &[Dual]| vec![Dual::from_re(0.0); 2]);
        let f = field_strength_abelian(&bg, &chart, &[0.3, 0.4]).unwrap();
        assert_eq!(f.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn uniform_field_curl() {
        let chart = flat(2);
        let f = field_strength_abelian(&uniform_b(1.7), &chart, &[0.3, -2.0]).unwrap();
        assert!((f[(0, 1)] - 1.7).abs() < 1e-15);
        assert_eq!(f[(1, 0)], -f[(0, 1)]);
    }

    #[test]
    fn pure_gauge_has_no_field() {
        let chart = flat(2);
        let zero = AbelianBackground::new(1.0, |_x: &[Dual]| vec![Dual::from_re(0.0); 2]);
        let bg = apply_gauge_transformation(&zero, |x: &[Dual2]| x[0] * x[1]);
        let f = field_strength_abelian(&bg, &chart, &[1.3, -0.2]).unwrap();
        assert!(f[(0, 1)].abs() <= 1e-12);
        let a = bg.potential_at(&[1.3, -0.2]);
        assert!((a[0] + 0.2).abs() < 1e-15 && (a[1] - 1.3).abs() < 1e-15);
    }

    #[test]
    fn gauge_shift_keeps_field() {
        let chart = flat(2);
        let bg = uniform_b(2.5);
        let shifted = apply_gauge_transformation(&bg, |x: &[Dual2]| x[0] * x[1]);
        let konst = apply_gauge_transformation(&bg, |_x: &[Dual2]| Dual2::from(3.0));
        for x in [[0.1, 0.2], [-1.0, 3.0], [2.2, -0.7]] {
            let f0 = field_strength_abelian(&bg, &chart, &x).unwrap();
            let f1 = field_strength_abelian(&shifted, &chart, &x).unwrap();
            assert!((f0 - f1).abs().max() <= 1e-10);
            assert_eq!(bg.potential_at(&x), konst.potential_at(&x));
        }
    }

    #[test]
    fn one_dimensional_algebra_reduces_to_abelian() {
        let chart = flat(2);
        let pot = |x: &[Dual]| vec![x[1] * x[1] * 0.3, x[0] * x[1] - x[0]];
        let ab = AbelianBackground::new(1.0, pot);
        let na = NonAbelianBackground::new(0.8, StructureConstants::abelian(1), 2, pot);
        let x = [0.4, 1.9];
        let fa = field_strength_abelian(&ab, &chart, &x).unwrap();
        let fna = field_strength_nonabelian(&na, &chart, &x).unwrap();
        assert_eq!(fa, fna[0]);
    }

    #[test]
    fn scalar_gradient_matches_fd() {
        let phi = ScalarPotential::new(|x: &[Dual]| x[0] * x[0] * 0.5 - (x[0] * x[0] + x[1] * x[1]).sqrt().recip());
        let x = [0.8, -0.3];
        let g = phi.gradient(&x);
        let fd = phi.gradient_fd(&x);
        for (a, b) in g.iter().zip(&fd) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }
}
