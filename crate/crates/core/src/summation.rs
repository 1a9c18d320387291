//! Compensated summation and order-fixed parallel reductions.
//!
//! Work is split into blocks of a fixed size that does not depend on the
//! number of worker threads. Each block is reduced sequentially with
//! Neumaier compensation and the block partials are combined in index order,
//! so the result is bitwise identical for any thread count.

use rayon::prelude::*;

/// Default number of items per reduction block.
pub const DEFAULT_BLOCK: usize = 64;

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    compensation: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = NeumaierSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Compensated sum of a sequence.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<NeumaierSum>().value()
}

/// Vector of compensated accumulators.
#[derive(Debug, Clone, PartialEq)]
pub struct NeumaierVec {
    parts: Vec<NeumaierSum>,
}

impl NeumaierVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            parts: vec![NeumaierSum::new(); len],
        }
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    #[inline]
    pub fn add_at(&mut self, index: usize, value: f64) {
        self.parts[index].add(value);
    }

    /// Adds `scale * values` component-wise.
    pub fn add_scaled(&mut self, values: &[f64], scale: f64) {
        for (acc, v) in self.parts.iter_mut().zip(values) {
            acc.add(scale * v);
        }
    }

    pub fn merge(&mut self, other: &NeumaierVec) {
        for (a, b) in self.parts.iter_mut().zip(&other.parts) {
            a.merge(b);
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.parts.iter().map(NeumaierSum::value).collect()
    }
}

/// Maps fixed-size blocks of `0..len` in parallel and folds the partial
/// results sequentially in block order.
pub fn blocked_reduce<T, M, F>(len: usize, block: usize, map_block: M, fold: F, init: T) -> T
where
    T: Send,
    M: Fn(std::ops::Range<usize>) -> T + Sync + Send,
    F: FnMut(T, T) -> T,
{
    let block = block.max(1);
    let n_blocks = len.div_ceil(block);
    let partials: Vec<T> = (0..n_blocks)
        .into_par_iter()
        .map(|b| map_block(b * block..((b + 1) * block).min(len)))
        .collect();
    partials.into_iter().fold(init, fold)
}

/// Deterministic parallel compensated sum of `f(i)` for `i in 0..len`.
pub fn deterministic_sum<F>(len: usize, block: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    blocked_reduce(
        len,
        block,
        |range| range.map(&f).collect::<NeumaierSum>(),
        |mut acc, part| {
            acc.merge(&part);
            acc
        },
        NeumaierSum::new(),
    )
    .value()
}
