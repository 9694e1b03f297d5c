//! Dense and symmetric tensor storage.
//!
//! Symmetric tensors are stored once per canonical (non-decreasing)
//! multi-index; the multiplicity of a slot is the number of dense index
//! tuples that map onto it, `n! / Π count_μ!`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug)]
pub struct SymmetricLayout {
    dim: usize,
    rank: usize,
    canonical: Vec<Vec<usize>>,
    multiplicity: Vec<f64>,
    dense_to_slot: Vec<usize>,
}

fn enumerate_canonical(dim: usize, rank: usize) -> Vec<Vec<usize>> {
    fn rec(dim: usize, rank: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == rank {
            out.push(cur.clone());
            return;
        }
        for i in start..dim {
            cur.push(i);
            rec(dim, rank, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(dim, rank, 0, &mut Vec::with_capacity(rank), &mut out);
    out
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

impl SymmetricLayout {
    /// Shared layout for `(dim, rank)`.
    pub fn get(dim: usize, rank: usize) -> Arc<SymmetricLayout> {
        static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<SymmetricLayout>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = cache.lock().expect("layout cache poisoned");
        guard
            .entry((dim, rank))
            .or_insert_with(|| Arc::new(SymmetricLayout::build(dim, rank)))
            .clone()
    }

    fn build(dim: usize, rank: usize) -> Self {
        let canonical = enumerate_canonical(dim, rank);
        let multiplicity = canonical
            .iter()
            .map(|idx| {
                let mut denom = 1.0;
                let mut run = 1;
                for w in idx.windows(2) {
                    if w[0] == w[1] {
                        run += 1;
                    } else {
                        denom *= factorial(run);
                        run = 1;
                    }
                }
                if !idx.is_empty() {
                    denom *= factorial(run);
                }
                factorial(rank) / denom
            })
            .collect();
        let slot_of: HashMap<Vec<usize>, usize> = canonical
            .iter()
            .enumerate()
            .map(|(i, v)| (v.clone(), i))
            .collect();
        let dense_len = dim.pow(rank as u32);
        let mut dense_to_slot = Vec::with_capacity(dense_len);
        let mut idx = vec![0usize; rank];
        for flat in 0..dense_len {
            unflatten(flat, dim, &mut idx);
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            dense_to_slot.push(slot_of[&sorted]);
        }
        SymmetricLayout {
            dim,
            rank,
            canonical,
            multiplicity,
            dense_to_slot,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    pub fn canonical(&self) -> &[Vec<usize>] {
        &self.canonical
    }

    pub fn multiplicity(&self, slot: usize) -> f64 {
        self.multiplicity[slot]
    }

    /// Slot of an arbitrary (unsorted) multi-index.
    pub fn slot(&self, idx: &[usize]) -> usize {
        self.dense_to_slot[flatten(idx, self.dim)]
    }

    pub fn slot_of_dense(&self, flat: usize) -> usize {
        self.dense_to_slot[flat]
    }
}

pub(crate) fn flatten(idx: &[usize], dim: usize) -> usize {
    idx.iter().fold(0, |acc, &i| acc * dim + i)
}

pub(crate) fn unflatten(mut flat: usize, dim: usize, out: &mut [usize]) {
    for slot in out.iter_mut().rev() {
        *slot = flat % dim;
        flat /= dim;
    }
}

/// Row-major dense tensor, every index running over `0..dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    dim: usize,
    rank: usize,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        DenseTensor {
            dim,
            rank,
            data: vec![0.0; dim.pow(rank as u32)],
        }
    }

    pub fn from_vec(dim: usize, rank: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim.pow(rank as u32), "dense tensor size");
        DenseTensor { dim, rank, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[flatten(idx, self.dim)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let k = flatten(idx, self.dim);
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Unit-weight symmetrisation over all index positions. Slots whose
    /// contributing entries are already bitwise identical are copied
    /// unchanged, so symmetrising a symmetric tensor is exact.
    pub fn symmetrize(&self) -> SymmetricTensor {
        let layout = SymmetricLayout::get(self.dim, self.rank);
        let n = layout.len();
        let mut sum = vec![0.0; n];
        let mut first = vec![f64::NAN; n];
        let mut uniform = vec![true; n];
        let mut seen = vec![false; n];
        for (flat, &v) in self.data.iter().enumerate() {
            let s = layout.slot_of_dense(flat);
            sum[s] += v;
            if !seen[s] {
                seen[s] = true;
                first[s] = v;
            } else if first[s].to_bits() != v.to_bits() {
                uniform[s] = false;
            }
        }
        let data = (0..n)
            .map(|s| {
                if uniform[s] {
                    first[s]
                } else {
                    sum[s] / layout.multiplicity(s)
                }
            })
            .collect();
        SymmetricTensor { layout, data }
    }
}

/// Totally symmetric tensor in canonical storage.
#[derive(Debug, Clone)]
pub struct SymmetricTensor {
    layout: Arc<SymmetricLayout>,
    data: Vec<f64>,
}

impl PartialEq for SymmetricTensor {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim() && self.rank() == other.rank() && self.data == other.data
    }
}

impl SymmetricTensor {
    pub fn zeros(dim: usize, rank: usize) -> Self {
        let layout = SymmetricLayout::get(dim, rank);
        let data = vec![0.0; layout.len()];
        SymmetricTensor { layout, data }
    }

    /// Build from canonical-slot values (ordering of [`SymmetricLayout::canonical`]).
    pub fn from_canonical(dim: usize, rank: usize, data: Vec<f64>) -> Self {
        let layout = SymmetricLayout::get(dim, rank);
        assert_eq!(data.len(), layout.len(), "symmetric tensor size");
        SymmetricTensor { layout, data }
    }

    pub fn layout(&self) -> &Arc<SymmetricLayout> {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn rank(&self) -> usize {
        self.layout.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.layout.slot(idx)]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn expand(&self) -> DenseTensor {
        let layout = &self.layout;
        let data = layout.dense_to_slot.iter().map(|&s| self.data[s]).collect();
        DenseTensor {
            dim: layout.dim,
            rank: layout.rank,
            data,
        }
    }

    /// `G^{μ_1..μ_n} π_{μ_1} .. π_{μ_n}`.
    pub fn contract(&self, pi: &[f64]) -> f64 {
        self.layout
            .canonical
            .iter()
            .zip(&self.data)
            .enumerate()
            .map(|(s, (idx, &g))| {
                let prod: f64 = idx.iter().map(|&i| pi[i]).product();
                self.layout.multiplicity[s] * g * prod
            })
            .sum()
    }

    /// Gradient of [`contract`](Self::contract) with respect to `π`.
    pub fn contract_gradient(&self, pi: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.dim()];
        for (s, (idx, &g)) in self.layout.canonical.iter().zip(&self.data).enumerate() {
            let w = self.layout.multiplicity[s] * g;
            for k in 0..idx.len() {
                let others: f64 = idx
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != k)
                    .map(|(_, &i)| pi[i])
                    .product();
                grad[idx[k]] += w * others;
            }
        }
        grad
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_counts() {
        let l = SymmetricLayout::get(3, 4);
        // C(3+4-1, 4)
        assert_eq!(l.len(), 15);
        let total: f64 = (0..l.len()).map(|s| l.multiplicity(s)).sum();
        assert_eq!(total, 81.0);
        let l0 = SymmetricLayout::get(4, 0);
        assert_eq!(l0.len(), 1);
        assert_eq!(l0.multiplicity(0), 1.0);
    }

    #[test]
    fn slot_ignores_order() {
        let l = SymmetricLayout::get(4, 3);
        assert_eq!(l.slot(&[2, 0, 1]), l.slot(&[0, 1, 2]));
        assert_eq!(l.slot(&[3, 3, 1]), l.slot(&[1, 3, 3]));
    }

    #[test]
    fn contract_matches_dense_sum() {
        let mut dense = DenseTensor::zeros(3, 2);
        dense.set(&[0, 1], 2.0);
        dense.set(&[1, 0], 2.0);
        dense.set(&[2, 2], -1.5);
        let sym = dense.symmetrize();
        let pi = [0.3, -0.7, 1.1];
        let direct = 2.0 * 2.0 * 0.3 * -0.7 - 1.5 * 1.1 * 1.1;
        assert!((sym.contract(&pi) - direct).abs() < 1e-15);
        let g = sym.contract_gradient(&pi);
        assert!((g[0] - 4.0 * -0.7).abs() < 1e-15);
        assert!((g[2] - -3.0 * 1.1).abs() < 1e-15);
    }

    #[test]
    fn symmetrize_averages_permutations() {
        let mut dense = DenseTensor::zeros(2, 2);
        dense.set(&[0, 1], 1.0);
        let sym = dense.symmetrize();
        assert_eq!(sym.get(&[0, 1]), 0.5);
        assert_eq!(sym.get(&[1, 0]), 0.5);
    }
}
