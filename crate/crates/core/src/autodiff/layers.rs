//! Dense layers and multilayer perceptrons on the tape.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Softplus,
}

impl Activation {
    pub fn apply<'t>(self, z: Var<'t>) -> Var<'t> {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.relu(),
            Activation::Softplus => z.softplus(),
        }
    }

    /// First and second derivatives of the activation at `z`, where
    /// `y = apply(z)`. The second derivative is `None` where it is
    /// identically zero.
    pub fn derivatives<'t>(self, z: Var<'t>, y: Var<'t>) -> (Var<'t>, Option<Var<'t>>) {
        match self {
            Activation::Tanh => {
                let d1 = 1.0 - y.square();
                let d2 = y * d1 * -2.0;
                (d1, Some(d2))
            }
            Activation::Softplus => {
                let s = z.sigmoid();
                let d2 = s * (1.0 - s);
                (s, Some(d2))
            }
            Activation::Relu => {
                let step = z.value().mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
                (z.tape().constant(step), None)
            }
        }
    }

    pub fn is_smooth(self) -> bool {
        !matches!(self, Activation::Relu)
    }
}

/// Layer widths `[in, h1, .., out]` plus naming for the parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub prefix: String,
    pub sizes: Vec<usize>,
    pub activation: Activation,
    /// Apply the activation after the last layer too. Off for regression heads.
    #[serde(default)]
    pub activate_output: bool,
}

impl MlpSpec {
    pub fn new(prefix: &str, sizes: Vec<usize>, activation: Activation) -> Self {
        Self { prefix: prefix.to_string(), sizes, activation, activate_output: false }
    }

    pub fn n_layers(&self) -> usize {
        self.sizes.len().saturating_sub(1)
    }

    pub fn weight_name(&self, layer: usize) -> String {
        format!("{}.{layer}.weight", self.prefix)
    }

    pub fn bias_name(&self, layer: usize) -> String {
        format!("{}.{layer}.bias", self.prefix)
    }

    /// Inserts Glorot-uniform weights and zero biases into `store`.
    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) -> Result<()> {
        if self.sizes.len() < 2 || self.sizes.contains(&0) {
            return Err(Error::config(format!("mlp `{}` needs >= 2 positive sizes, got {:?}", self.prefix, self.sizes)));
        }
        for l in 0..self.n_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let w = Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-a..a));
            store.insert(self.weight_name(l), w)?;
            store.insert(self.bias_name(l), Array2::zeros((1, fan_out)))?;
        }
        Ok(())
    }

    /// Loads the layer parameters onto `tape`, checking that shapes chain.
    pub fn bind<'t>(&self, tape: &'t Tape, store: &ParamStore) -> Result<BoundMlp<'t>> {
        let mut layers = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let w = tape.param(store, &self.weight_name(l))?;
            let b = tape.param(store, &self.bias_name(l))?;
            let (want_in, want_out) = (self.sizes[l], self.sizes[l + 1]);
            if w.shape() != (want_in, want_out) || b.shape() != (1, want_out) {
                return Err(Error::config(format!(
                    "layer {l} of `{}`: weight {:?} / bias {:?}, expected ({want_in}, {want_out}) / (1, {want_out})",
                    self.prefix,
                    w.shape(),
                    b.shape()
                )));
            }
            layers.push(Dense { weight: w, bias: b });
        }
        Ok(BoundMlp { layers, activation: self.activation, activate_output: self.activate_output })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Dense<'t> {
    pub weight: Var<'t>,
    pub bias: Var<'t>,
}

impl<'t> Dense<'t> {
    pub fn affine(&self, x: Var<'t>) -> Var<'t> {
        x.matmul(self.weight) + self.bias
    }
}

/// An [`MlpSpec`] whose parameters live on a tape.
#[derive(Clone, Debug)]
pub struct BoundMlp<'t> {
    pub layers: Vec<Dense<'t>>,
    pub activation: Activation,
    pub activate_output: bool,
}

impl<'t> BoundMlp<'t> {
    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape().0
    }

    /// Batched forward pass, `x` is `n x input_dim`.
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let cols = x.shape().1;
        if cols != self.input_dim() {
            return Err(Error::config(format!("mlp input has {cols} columns, expected {}", self.input_dim())));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = layer.affine(h);
            if l < last || self.activate_output {
                h = self.activation.apply(h);
            }
        }
        Ok(h)
    }
}

/// Forward pass of `spec` with parameters from `store`.
pub fn forward_mlp<'t>(tape: &'t Tape, store: &ParamStore, spec: &MlpSpec, input: Var<'t>) -> Result<Var<'t>> {
    spec.bind(tape, store)?.forward(input)
}
