//! Dense feedforward networks, Adam, and the binary model format.
//!
//! Parameters live in one flat vector, layer by layer: the weight matrix
//! (`out x in`, row-major) followed by the bias vector. The same order is
//! used by [`Network::lift_params`], the batched gradients in [`dense`], the
//! optimizer, and the file format in [`io`].

pub mod adam;
pub mod dense;
pub mod io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{AutodiffError, Tape, Var};

pub use adam::{clip_global_norm, AdamState, ParamGroup};
pub use dense::BatchCache;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("network needs at least 2 layer sizes, got {0}")]
    TooFewLayers(usize),
    #[error("layer sizes must be positive")]
    ZeroWidth,
    #[error("expected {expected} activations, got {got}")]
    ActivationCount { expected: usize, got: usize },
    #[error("output layer activation must be identity")]
    OutputActivation,
    #[error("input has width {got}, network expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("parameter vector has length {got}, network has {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: Vec<f64>,
    seed: u64,
}

impl Network {
    /// Xavier-uniform weights, zero biases; `hidden` on every hidden layer
    /// and identity on the output.
    pub fn new(sizes: &[usize], hidden: Activation, seed: u64) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::TooFewLayers(sizes.len()));
        }
        let mut activations = vec![hidden; sizes.len() - 1];
        *activations.last_mut().unwrap() = Activation::Identity;
        Self::with_activations(sizes, activations, seed)
    }

    pub fn with_activations(
        sizes: &[usize],
        activations: Vec<Activation>,
        seed: u64,
    ) -> Result<Self, NnError> {
        if sizes.len() < 2 {
            return Err(NnError::TooFewLayers(sizes.len()));
        }
        if sizes.contains(&0) {
            return Err(NnError::ZeroWidth);
        }
        if activations.len() != sizes.len() - 1 {
            return Err(NnError::ActivationCount {
                expected: sizes.len() - 1,
                got: activations.len(),
            });
        }
        if activations.last() != Some(&Activation::Identity) {
            return Err(NnError::OutputActivation);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations,
            params,
            seed,
        })
    }

    /// Rebuilds a network from stored parts.
    pub fn from_parts(
        sizes: Vec<usize>,
        activations: Vec<Activation>,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let mut net = Self::with_activations(&sizes, activations, seed)?;
        net.set_params(&params)?;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_width(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_width(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::ParamCount {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offsets of layer `k`'s weights and biases in the flat vector.
    pub(crate) fn layer_offsets(&self, k: usize) -> (usize, usize) {
        let mut off = 0;
        for w in self.sizes.windows(2).take(k) {
            off += w[0] * w[1] + w[1];
        }
        (off, off + self.sizes[k] * self.sizes[k + 1])
    }

    /// Positions of layer `k`'s weights and biases in the flat parameters.
    pub fn layer_range(&self, k: usize) -> std::ops::Range<usize> {
        let (w, b) = self.layer_offsets(k);
        w..b + self.sizes[k + 1]
    }

    /// Layer `k` weight matrix, `sizes[k+1] x sizes[k]` row-major.
    pub fn weights(&self, k: usize) -> &[f64] {
        let (w, b) = self.layer_offsets(k);
        &self.params[w..b]
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        let (_, b) = self.layer_offsets(k);
        &self.params[b..b + self.sizes[k + 1]]
    }

    /// Plain single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let mut a = input.to_vec();
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let w = self.weights(k);
            let b = self.biases(k);
            let act = self.activations[k];
            a = (0..n_out)
                .map(|j| {
                    let row = &w[j * n_in..(j + 1) * n_in];
                    act.apply(row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>() + b[j])
                })
                .collect();
        }
        Ok(a)
    }

    /// Records every parameter as a leaf on `tape`, in flat order.
    pub fn lift_params<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.iter().map(|&p| tape.lift(p)).collect()
    }

    /// Forward pass recorded on the tape so that backward reaches `params`.
    pub fn forward_tape<'t>(
        &self,
        params: &[Var<'t>],
        input: &[Var<'t>],
    ) -> Result<Vec<Var<'t>>, NnError> {
        self.check_input(input.len())?;
        if params.len() != self.params.len() {
            return Err(NnError::ParamCount {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let mut a = input.to_vec();
        for k in 0..self.num_layers() {
            let (n_in, n_out) = (self.sizes[k], self.sizes[k + 1]);
            let (w_off, b_off) = self.layer_offsets(k);
            let act = self.activations[k];
            a = (0..n_out)
                .map(|j| {
                    let row = &params[w_off + j * n_in..w_off + (j + 1) * n_in];
                    let z = row
                        .iter()
                        .zip(&a)
                        .fold(params[b_off + j], |acc, (&w, &x)| acc + w * x);
                    match act {
                        Activation::Identity => z,
                        Activation::Tanh => z.tanh(),
                    }
                })
                .collect();
        }
        Ok(a)
    }

    fn check_input(&self, got: usize) -> Result<(), NnError> {
        if got != self.sizes[0] {
            return Err(NnError::InputWidth {
                expected: self.sizes[0],
                got,
            });
        }
        Ok(())
    }
}

/// Parameter count of a dense network with the given layer sizes.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}
