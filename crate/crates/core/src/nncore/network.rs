use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Element-wise nonlinearity applied after a layer's affine map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }
}

/// Dense layer `y = act(W x + b)` with `W` stored row-major as `(out_dim, in_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    pub fn new(
        in_dim: usize,
        out_dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::InvalidParameter("layer widths must be positive".into()));
        }
        check_len("layer weights", in_dim * out_dim, weights.len())?;
        check_len("layer bias", out_dim, bias.len())?;
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("layer parameters must be finite".into()));
        }
        Ok(Self {
            in_dim,
            out_dim,
            weights,
            bias,
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.bias).map(|(row, b)| {
            let z = row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi);
            self.activation.apply(z)
        }));
    }
}

/// Gradient buffers laid out exactly like the owning network's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientTape {
    pub(crate) layers: Vec<LayerGrad>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientTape {
    pub fn layers(&self) -> &[LayerGrad] {
        &self.layers
    }

    pub fn zero(&mut self) {
        for g in &mut self.layers {
            g.weights.fill(0.0);
            g.bias.fill(0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for v in self.values_mut() {
            *v *= factor;
        }
    }

    /// Flattened view in the same order as [`Network::params`].
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|g| g.weights.iter().chain(g.bias.iter()).copied())
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.flatten().iter().all(|v| *v == 0.0)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|g| g.weights.iter_mut().chain(g.bias.iter_mut()))
    }
}

/// Post-activation values of every layer for one input, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct Trace {
    activations: Vec<Vec<f64>>,
}

impl Trace {
    pub fn input(&self) -> &[f64] {
        &self.activations[0]
    }

    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("trace holds the input at least")
    }
}

/// Feedforward network of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
}

impl Network {
    /// Glorot-uniform initialized network. `widths` lists input width, hidden widths
    /// and output width; hidden layers use `hidden`, the last layer uses `output`.
    pub fn new(widths: &[usize], hidden: Activation, output: Activation, seed: u64) -> Result<Self> {
        Self::validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                let act = if i + 1 == n { output } else { hidden };
                Layer::new(fan_in, fan_out, weights, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    /// Network with every parameter set to zero.
    pub fn zeros(widths: &[usize], hidden: Activation, output: Activation) -> Result<Self> {
        Self::validate_widths(widths)?;
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i + 1 == n { output } else { hidden };
                Layer::new(w[0], w[1], vec![0.0; w[0] * w[1]], vec![0.0; w[1]], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            check_len("layer chaining", pair[0].out_dim, pair[1].in_dim)?;
        }
        Ok(Self { layers })
    }

    fn validate_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 {
            return Err(Error::InvalidParameter("need at least input and output widths".into()));
        }
        if widths.iter().any(|w| *w == 0) {
            return Err(Error::InvalidParameter("widths must be positive".into()));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters flattened layer by layer, weights (row-major) before bias.
    pub fn params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn set_params(&mut self, values: &[f64]) -> Result<()> {
        check_len("network parameters", self.param_count(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        for (dst, src) in self.params_mut().zip(values) {
            *dst = *src;
        }
        Ok(())
    }

    pub(crate) fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// Mutable access to one flattened parameter (see [`Network::params`] for ordering).
    pub fn param_mut(&mut self, index: usize) -> Option<&mut f64> {
        self.params_mut().nth(index)
    }

    pub fn zero_tape(&self) -> GradientTape {
        GradientTape {
            layers: self
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("network input", self.input_width(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<Trace> {
        check_len("network input", self.input_width(), x.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(activations.last().unwrap(), &mut out);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    /// Gradient of `<upstream, forward(x)>` with respect to every parameter.
    pub fn backward(&self, x: &[f64], upstream: &[f64]) -> Result<GradientTape> {
        let trace = self.forward_traced(x)?;
        let mut tape = self.zero_tape();
        self.backpropagate(&trace, upstream, Some(&mut tape))?;
        Ok(tape)
    }

    /// Accumulates parameter gradients into `tape` (when given) and returns the
    /// gradient with respect to the network input.
    pub fn backpropagate(
        &self,
        trace: &Trace,
        upstream: &[f64],
        mut tape: Option<&mut GradientTape>,
    ) -> Result<Vec<f64>> {
        check_len("upstream gradient", self.output_width(), upstream.len())?;
        check_len("trace depth", self.layers.len() + 1, trace.activations.len())?;
        if let Some(t) = tape.as_deref() {
            check_len("gradient tape", self.layers.len(), t.layers.len())?;
        }
        let mut grad_out = upstream.to_vec();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let input = &trace.activations[li];
            let output = &trace.activations[li + 1];
            let delta: Vec<f64> = grad_out
                .iter()
                .zip(output)
                .map(|(g, y)| g * layer.activation.derivative_from_output(*y))
                .collect();
            if let Some(t) = tape.as_deref_mut() {
                let g = &mut t.layers[li];
                for (o, d) in delta.iter().enumerate() {
                    if *d == 0.0 {
                        continue;
                    }
                    let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for (gw, xi) in row.iter_mut().zip(input) {
                        *gw += d * xi;
                    }
                    g.bias[o] += d;
                }
            }
            let mut grad_in = vec![0.0; layer.in_dim];
            for (row, d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                for (gi, w) in grad_in.iter_mut().zip(row) {
                    *gi += w * d;
                }
            }
            grad_out = grad_in;
        }
        Ok(grad_out)
    }

    /// Jacobian of the outputs with respect to the input, `(output_width, input_width)`.
    pub fn input_jacobian(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        let trace = self.forward_traced(x)?;
        let mut seed = vec![0.0; self.output_width()];
        (0..self.output_width())
            .map(|k| {
                seed.fill(0.0);
                seed[k] = 1.0;
                self.backpropagate(&trace, &seed, None)
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}
