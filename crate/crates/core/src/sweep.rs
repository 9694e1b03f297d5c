//! Random sampling boxes and data-parallel evaluation over point sets.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] maps with
//! rayon; without it every execution mode runs sequentially. Results are
//! always returned in input order, so reports do not depend on the mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Dual, DualNum};
use crate::phase::{DualObservable, PhasePoint, SharedObservable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Region from which random phase points are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBox {
    /// Per-coordinate `[lo, hi]`.
    pub x: Vec<[f64; 2]>,
    /// Momenta are drawn uniformly from a ball of this radius.
    pub momentum_radius: f64,
    /// Charges are drawn on a sphere of this radius (empty algebra when 0).
    pub charge_radius: f64,
    pub algebra_dim: usize,
}

impl SampleBox {
    pub fn new(x: Vec<[f64; 2]>, momentum_radius: f64) -> Self {
        SampleBox {
            x,
            momentum_radius,
            charge_radius: 0.0,
            algebra_dim: 0,
        }
    }

    pub fn with_charges(mut self, algebra_dim: usize, radius: f64) -> Self {
        self.algebra_dim = algebra_dim;
        self.charge_radius = radius;
        self
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let r2: f64 = v.iter().map(|a| a * a).sum();
        if r2 > 1e-4 && r2 <= 1.0 {
            let r = r2.sqrt();
            return v.into_iter().map(|a| a / r).collect();
        }
    }
}

fn in_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return v.into_iter().map(|a| a * radius).collect();
        }
    }
}

/// `n` deterministic points for a given seed, rejecting positions where
/// `accept` fails.
pub fn sample_points(b: &SampleBox, n: usize, seed: u64, accept: impl Fn(&[f64]) -> bool) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < 1000 * (n + 1), "sample box rejects almost every point");
        let x: Vec<f64> = b.x.iter().map(|r| rng.gen_range(r[0]..=r[1])).collect();
        let pi = in_ball(&mut rng, b.dim(), b.momentum_radius);
        let t = if b.algebra_dim > 0 {
            unit_direction(&mut rng, b.algebra_dim)
                .into_iter()
                .map(|a| a * b.charge_radius)
                .collect()
        } else {
            Vec::new()
        };
        if accept(&x) {
            out.push(PhasePoint::with_charges(x, pi, t));
        }
    }
    out
}

fn coefficients(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn dot(c: &[f64], v: &[Dual]) -> Dual {
    c.iter().zip(v).fold(Dual::from_re(0.0), |acc, (a, b)| acc + *b * *a)
}

/// Smooth test observables mixing every phase-space sector: a linear part,
/// a momentum quadratic with an `x`-dependent weight, a trigonometric
/// coordinate term and a charge-momentum coupling. Deterministic per seed.
pub fn random_observables(dim: usize, algebra_dim: usize, count: usize, seed: u64) -> Vec<SharedObservable> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let lin_x = coefficients(&mut rng, dim);
            let lin_pi = coefficients(&mut rng, dim);
            let lin_t = coefficients(&mut rng, algebra_dim);
            let quad = coefficients(&mut rng, dim * dim);
            let wave = coefficients(&mut rng, dim);
            let weight = coefficients(&mut rng, dim);
            let mix_t = coefficients(&mut rng, algebra_dim);
            let mix_pi = coefficients(&mut rng, dim);
            let amp = coefficients(&mut rng, 2);
            DualObservable::new(format!("R{i}"), move |x: &[Dual], pi: &[Dual], t: &[Dual]| {
                let mut q = Dual::from_re(0.0);
                for a in 0..dim {
                    for b in 0..dim {
                        q += pi[a] * pi[b] * quad[a * dim + b];
                    }
                }
                let w = (dot(&weight, x) * 0.3).cos();
                dot(&lin_x, x) * 0.1
                    + dot(&lin_pi, pi)
                    + dot(&lin_t, t)
                    + q * w * 0.5
                    + (dot(&wave, x) * 0.5).sin() * amp[0]
                    + dot(&mix_t, t) * dot(&mix_pi, pi) * amp[1]
            })
            .shared()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let b = SampleBox::new(vec![[1.0, 2.0], [-1.0, 1.0]], 0.5).with_charges(3, 2.0);
        let a = sample_points(&b, 50, 7, |_| true);
        let c = sample_points(&b, 50, 7, |_| true);
        assert_eq!(a, c);
        for p in &a {
            assert!((1.0..=2.0).contains(&p.x[0]));
            assert!(p.pi.iter().map(|v| v * v).sum::<f64>() <= 0.25 + 1e-15);
            let t2: f64 = p.t.iter().map(|v| v * v).sum();
            assert!((t2 - 4.0).abs() < 1e-12);
        }
        assert_ne!(a, sample_points(&b, 50, 8, |_| true));
    }

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |v: &u64| (*v as f64).sqrt();
        assert_eq!(map(Execution::Sequential, &items, f), map(Execution::Parallel, &items, f));
    }

    #[test]
    fn random_observables_repeat_per_seed() {
        let p = PhasePoint::with_charges(vec![0.3, -0.2], vec![0.5, 0.1], vec![0.6, 0.0, 0.8]);
        let a = random_observables(2, 3, 4, 11);
        let b = random_observables(2, 3, 4, 11);
        for (g, k) in a.iter().zip(&b) {
            assert_eq!(g.value(&p), k.value(&p));
            assert!(g.gradient(&p).dt.iter().any(|v| *v != 0.0));
        }
    }
}
