//! Fully connected networks with batched forward and reverse-mode passes.
//! Batches are row-major: one sample per row.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use crate::error::{KseError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Swish,
    Tanh,
    Linear,
    /// `c · tanh(x)`.
    TanhScaled(f64),
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Swish => x * sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
            Activation::TanhScaled(c) => c * x.tanh(),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::Linear => 1.0,
            Activation::TanhScaled(c) => c * (1.0 - x.tanh().powi(2)),
        }
    }

    pub(crate) fn tag(self) -> (u8, f64) {
        match self {
            Activation::Swish => (0, 0.0),
            Activation::Tanh => (1, 0.0),
            Activation::Linear => (2, 0.0),
            Activation::TanhScaled(c) => (3, c),
        }
    }

    pub(crate) fn from_tag(tag: u8, c: f64) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Swish,
            1 => Activation::Tanh,
            2 => Activation::Linear,
            3 => Activation::TanhScaled(c),
            _ => return Err(KseError::Format(format!("unknown activation tag {tag}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out × in`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub act: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
}

/// Gradients shaped like an [`Mlp`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub w: Vec<Array2<f64>>,
    pub b: Vec<Array1<f64>>,
}

impl Grads {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            w: net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.w.raw_dim()))
                .collect(),
            b: net
                .layers
                .iter()
                .map(|l| Array1::zeros(l.b.raw_dim()))
                .collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.w.iter().zip(&self.b) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }
}

impl Mlp {
    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn new(sizes: &[usize], acts: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 || acts.len() != sizes.len() - 1 || sizes.contains(&0) {
            return Err(KseError::InvalidArgument(format!(
                "need k+1 positive sizes for k activations, got {} sizes and {} activations",
                sizes.len(),
                acts.len()
            )));
        }
        let layers = sizes
            .windows(2)
            .zip(acts)
            .map(|(s, &act)| {
                let bound = 1.0 / (s[0] as f64).sqrt();
                Layer {
                    w: Array2::from_shape_fn((s[1], s[0]), |_| rng.random_range(-bound..=bound)),
                    b: Array1::from_shape_fn(s[1], |_| rng.random_range(-bound..=bound)),
                    act,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").w.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.w.nrows()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Batched forward pass, keeping what [`Mlp::backward`] needs.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, Cache)> {
        if x.ncols() != self.input_dim() {
            return Err(KseError::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.to_owned();
        for l in &self.layers {
            let z = a.dot(&l.w.t()) + &l.b;
            let next = z.mapv(|v| l.act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = next;
        }
        Ok((a, Cache { inputs, pre }))
    }

    /// Output only; no cache.
    pub fn predict_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(KseError::Shape {
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut a = x.to_owned();
        for l in &self.layers {
            let mut z = a.dot(&l.w.t()) + &l.b;
            z.mapv_inplace(|v| l.act.apply(v));
            a = z;
        }
        Ok(a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.predict_batch(view)?.into_raw_vec_and_offset().0)
    }

    /// Reverse pass: parameter gradients of `Σ dL/dy · y` and the gradient
    /// with respect to the batch input.
    pub fn backward(&self, cache: &Cache, grad_out: ArrayView2<f64>) -> (Grads, Array2<f64>) {
        let mut gw = Vec::with_capacity(self.layers.len());
        let mut gb = Vec::with_capacity(self.layers.len());
        let mut g = grad_out.to_owned();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let z = &cache.pre[i];
            g.zip_mut_with(z, |gi, &zi| *gi *= l.act.derivative(zi));
            gw.push(g.t().dot(&cache.inputs[i]));
            gb.push(g.sum_axis(Axis(0)));
            g = g.dot(&l.w);
        }
        gw.reverse();
        gb.reverse();
        (Grads { w: gw, b: gb }, g)
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.w.dim() == b.w.dim() && a.act == b.act)
    }

    /// `self ← τ·online + (1 − τ)·self`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) -> Result<()> {
        if !self.same_shape(online) {
            return Err(KseError::InvalidArgument(
                "soft update between different architectures".into(),
            ));
        }
        for (t, o) in self.layers.iter_mut().zip(&online.layers) {
            t.w.zip_mut_with(&o.w, |a, &b| *a = tau * b + (1.0 - tau) * *a);
            t.b.zip_mut_with(&o.b, |a, &b| *a = tau * b + (1.0 - tau) * *a);
        }
        Ok(())
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.w.iter());
            out.extend(l.b.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(KseError::Shape {
                expected: self.param_count(),
                got: p.len(),
            });
        }
        let mut it = p.iter();
        for l in &mut self.layers {
            l.w.iter_mut()
                .chain(l.b.iter_mut())
                .for_each(|v| *v = *it.next().expect("length checked"));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }
}
