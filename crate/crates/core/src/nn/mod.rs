//! Minimal dense-network toolkit with hand-written backward passes.
//!
//! Parameters live in a [`ParamSet`]: an ordered list of named tensors.
//! Layers hold indices into the set, so one set can back a whole model and
//! gradients use the identical layout. Values are kept in `f64` for
//! arithmetic but are always representable as `f32`, which is the
//! checkpoint storage type.

mod layers;
pub mod optim;
pub mod transformer;

pub use layers::{gelu, gelu_grad, AttentionCache, AttnMask, FeedForward, LayerNorm, Linear, MultiHeadAttention};

use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> usize {
        assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
        self.tensors.push(Tensor {
            name: name.into(),
            shape,
            data,
        });
        self.tensors.len() - 1
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn mat(&self, i: usize) -> ArrayView2<'_, f64> {
        let t = &self.tensors[i];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("2-d tensor")
    }

    pub fn mat_mut(&mut self, i: usize) -> ArrayViewMut2<'_, f64> {
        let t = &mut self.tensors[i];
        ArrayViewMut2::from_shape((t.shape[0], t.shape[1]), &mut t.data).expect("2-d tensor")
    }

    pub fn vec(&self, i: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.tensors[i].data[..])
    }

    pub fn vec_mut(&mut self, i: usize) -> ArrayViewMut1<'_, f64> {
        ArrayViewMut1::from(&mut self.tensors[i].data[..])
    }

    pub fn zeros_like(&self) -> Self {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: vec![0.0; t.data.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &ParamSet) {
        assert_eq!(self.tensors.len(), other.tensors.len());
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += *y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    fn locate(&self, mut k: usize) -> (usize, usize) {
        for (i, t) in self.tensors.iter().enumerate() {
            if k < t.data.len() {
                return (i, k);
            }
            k -= t.data.len();
        }
        panic!("flat index out of range");
    }

    /// Value at position `k` of the concatenation of all tensors.
    pub fn get_flat(&self, k: usize) -> f64 {
        let (i, j) = self.locate(k);
        self.tensors[i].data[j]
    }

    pub fn set_flat(&mut self, k: usize, value: f64) {
        let (i, j) = self.locate(k);
        self.tensors[i].data[j] = value;
    }

    pub fn round_to_f32(&mut self) {
        for t in &mut self.tensors {
            t.data.iter_mut().for_each(|x| *x = *x as f32 as f64);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|x| x.is_finite()))
    }

    /// Largest `|a - b| / max(|a|, |b|)` over all entries (0 where both are 0).
    pub fn max_relative_diff(&self, other: &ParamSet) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, b) in self.tensors.iter().zip(&other.tensors) {
            for (x, y) in a.data.iter().zip(&b.data) {
                let denom = x.abs().max(y.abs());
                if denom > 0.0 {
                    worst = worst.max((x - y).abs() / denom);
                }
            }
        }
        worst
    }

    pub fn split_off(&mut self, at: usize) -> ParamSet {
        ParamSet {
            tensors: self.tensors.split_off(at),
        }
    }

    pub fn append(&mut self, other: ParamSet) {
        self.tensors.extend(other.tensors);
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Allocates tensors in declaration order, drawing initial values from a
/// seeded generator.
pub struct ParamBuilder<'a> {
    set: ParamSet,
    rng: &'a mut ChaCha8Rng,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            set: ParamSet::default(),
            rng,
        }
    }

    /// Continue an existing set, so indices of new tensors follow on.
    pub fn extend(set: ParamSet, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder { set, rng }
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> usize {
        let n: usize = shape.iter().product();
        let data = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal(std) => {
                let dist = Normal::new(0.0, std).expect("positive std");
                (0..n)
                    .map(|_| {
                        // Truncate at two standard deviations.
                        loop {
                            let v: f64 = dist.sample(self.rng);
                            if v.abs() <= 2.0 * std {
                                break v as f32 as f64;
                            }
                        }
                    })
                    .collect()
            }
        };
        self.set.push(name, shape.to_vec(), data)
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn finish(self) -> ParamSet {
        self.set
    }
}

/// Uniform random index helper used by several samplers.
pub fn sample_index(rng: &mut impl Rng, n: usize) -> usize {
    rng.random_range(0..n)
}

/// Numerically stable softmax of a slice, in place.
pub fn softmax_in_place(xs: &mut [f64]) {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in xs.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x /= sum;
    }
}

/// `ln(softmax(xs)[target])` via max subtraction.
pub fn log_softmax_at(xs: &[f64], target: usize) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln() + max;
    xs[target] - lse
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn flat_indexing_spans_tensors() {
        let mut p = ParamSet::default();
        p.push("a", vec![2], vec![1.0, 2.0]);
        p.push("b", vec![1, 3], vec![3.0, 4.0, 5.0]);
        assert_eq!(p.num_params(), 5);
        assert_eq!(p.get_flat(3), 4.0);
        p.set_flat(4, 9.0);
        assert_eq!(p.tensor(1).data, vec![3.0, 4.0, 9.0]);
    }

    #[test]
    fn builder_values_are_f32_and_bounded() {
        let mut rng = seed::rng(3);
        let mut b = ParamBuilder::new(&mut rng);
        let i = b.add("w", &[10, 10], Init::Normal(0.1));
        let p = b.finish();
        for &v in &p.tensor(i).data {
            assert_eq!(v, v as f32 as f64);
            assert!(v.abs() <= 0.2);
        }
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut xs = vec![1000.0, 1001.0, -5.0];
        softmax_in_place(&mut xs);
        assert!((xs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((log_softmax_at(&[0.0, 0.0], 1) - 0.5f64.ln()).abs() < 1e-12);
    }
}
