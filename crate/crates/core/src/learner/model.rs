//! Classifiers with hand-derived backpropagation: a linear softmax model
//! and a one-hidden-layer MLP. Parameters live in one flat vector so the
//! optimizer and the finite-difference checks stay simple.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::kb::Label;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Linear,
    Mlp { hidden: usize, activation: Activation },
}

/// A parametric map from feature vectors to class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    arch: Arch,
    input_dim: usize,
    classes: usize,
    params: Vec<f64>,
}

/// Hidden-layer activations cached by the forward pass for backprop.
pub struct ForwardCache {
    pre_activation: Vec<f64>,
    activated: Vec<f64>,
}

impl Classifier {
    pub fn zeros(arch: Arch, input_dim: usize, classes: usize) -> Self {
        let len = param_len(arch, input_dim, classes);
        Self { arch, input_dim, classes, params: vec![0.0; len] }
    }

    /// Weights i.i.d. normal with the given scale, biases zero.
    pub fn random_init(
        arch: Arch,
        input_dim: usize,
        classes: usize,
        weight_scale: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let mut h = Self::zeros(arch, input_dim, classes);
        let weight_ranges: Vec<std::ops::Range<usize>> = match arch {
            Arch::Linear => vec![0..classes * input_dim],
            Arch::Mlp { hidden, .. } => {
                let w1 = hidden * input_dim;
                vec![0..w1, w1 + hidden..w1 + hidden + classes * hidden]
            }
        };
        for range in weight_ranges {
            for slot in &mut h.params[range] {
                let z: f64 = StandardNormal.sample(rng);
                *slot = weight_scale * z;
            }
        }
        h
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    /// Logits plus the hidden state needed to backpropagate.
    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, Option<ForwardCache>) {
        debug_assert_eq!(x.len(), self.input_dim);
        match self.arch {
            Arch::Linear => {
                let (w, b) = self.linear_slices();
                (affine(w, b, x, self.classes), None)
            }
            Arch::Mlp { hidden, activation } => {
                let (w1, b1, w2, b2) = self.mlp_slices(hidden);
                let pre: Vec<f64> = affine(w1, b1, x, hidden);
                let act: Vec<f64> = pre.iter().map(|&z| apply(activation, z)).collect();
                let logits = affine(w2, b2, &act, self.classes);
                (logits, Some(ForwardCache { pre_activation: pre, activated: act }))
            }
        }
    }

    /// Accumulates `d loss / d params` into `grad`, given `d loss / d logits`.
    pub fn backprop(
        &self,
        x: &[f64],
        cache: &Option<ForwardCache>,
        dlogits: &[f64],
        grad: &mut [f64],
    ) {
        debug_assert_eq!(grad.len(), self.params.len());
        match self.arch {
            Arch::Linear => {
                let d = self.input_dim;
                for j in 0..self.classes {
                    for (i, &xi) in x.iter().enumerate() {
                        grad[j * d + i] += dlogits[j] * xi;
                    }
                    grad[self.classes * d + j] += dlogits[j];
                }
            }
            Arch::Mlp { hidden, activation } => {
                let cache = cache.as_ref().expect("MLP backprop needs the forward cache");
                let d = self.input_dim;
                let (w1_len, b1_len) = (hidden * d, hidden);
                let w2_off = w1_len + b1_len;
                let b2_off = w2_off + self.classes * hidden;
                let w2 = &self.params[w2_off..b2_off];

                for j in 0..self.classes {
                    for (i, &a) in cache.activated.iter().enumerate() {
                        grad[w2_off + j * hidden + i] += dlogits[j] * a;
                    }
                    grad[b2_off + j] += dlogits[j];
                }
                for i in 0..hidden {
                    let upstream: f64 =
                        (0..self.classes).map(|j| dlogits[j] * w2[j * hidden + i]).sum();
                    let dz = upstream * derivative(activation, cache.pre_activation[i]);
                    for (k, &xk) in x.iter().enumerate() {
                        grad[i * d + k] += dz * xk;
                    }
                    grad[w1_len + i] += dz;
                }
            }
        }
    }

    fn linear_slices(&self) -> (&[f64], &[f64]) {
        let split = self.classes * self.input_dim;
        self.params.split_at(split)
    }

    fn mlp_slices(&self, hidden: usize) -> (&[f64], &[f64], &[f64], &[f64]) {
        let d = self.input_dim;
        let (w1, rest) = self.params.split_at(hidden * d);
        let (b1, rest) = rest.split_at(hidden);
        let (w2, b2) = rest.split_at(self.classes * hidden);
        (w1, b1, w2, b2)
    }
}

fn param_len(arch: Arch, input_dim: usize, classes: usize) -> usize {
    match arch {
        Arch::Linear => classes * input_dim + classes,
        Arch::Mlp { hidden, .. } => hidden * input_dim + hidden + classes * hidden + classes,
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let d = x.len();
    (0..rows)
        .map(|r| {
            let row = &w[r * d..(r + 1) * d];
            b[r] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
        })
        .collect()
}

fn apply(activation: Activation, z: f64) -> f64 {
    match activation {
        Activation::Relu => z.max(0.0),
        Activation::Tanh => z.tanh(),
    }
}

fn derivative(activation: Activation, z: f64) -> f64 {
    match activation {
        Activation::Relu => {
            if z > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Tanh => {
            let t = z.tanh();
            1.0 - t * t
        }
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / total).collect()
}

/// Arg-max class; ties go to the smallest index.
pub fn argmax(values: &[f64]) -> Label {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best as Label
}

pub fn predict(h: &Classifier, x: &[f64]) -> Label {
    argmax(&h.forward(x))
}
