use crate::error::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fully connected layer; `weights` is row-major `outputs × inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    fn uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        let mut draw = || rng.random_range(-bound..bound);
        let weights = (0..inputs * outputs).map(|_| draw()).collect();
        let bias = (0..outputs).map(|_| draw()).collect();
        Self { inputs, outputs, weights, bias }
    }

    fn check(&self) -> Result<()> {
        if self.weights.len() != self.inputs * self.outputs {
            return Err(Error::Dimension { expected: self.inputs * self.outputs, got: self.weights.len() });
        }
        if self.bias.len() != self.outputs {
            return Err(Error::Dimension { expected: self.outputs, got: self.bias.len() });
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite parameter in layer".into()));
        }
        Ok(())
    }

    #[inline]
    fn apply(&self, input: &[f64], out: &mut [f64], relu: bool) {
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(self.inputs).zip(&self.bias)) {
            let v = row.iter().zip(input).fold(*b, |acc, (w, x)| acc + w * x);
            *o = if relu { v.max(0.0) } else { v };
        }
    }
}

/// Score model `s_θ(x, σ)`: an MLP over `[x, log σ]` with rectifier hidden
/// layers and an identity output of the data dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Checkpoint", into = "Checkpoint")]
pub struct ScoreNetwork {
    data_dim: usize,
    layers: Vec<DenseLayer>,
}

/// On-disk form of a [`ScoreNetwork`].
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    data_dim: usize,
    conditioning: String,
    layers: Vec<DenseLayer>,
}

const CONDITIONING: &str = "log_sigma_input";

impl TryFrom<Checkpoint> for ScoreNetwork {
    type Error = Error;
    fn try_from(c: Checkpoint) -> Result<Self> {
        if c.conditioning != CONDITIONING {
            return Err(Error::Config(format!("unsupported conditioning '{}'", c.conditioning)));
        }
        ScoreNetwork::from_layers(c.data_dim, c.layers)
    }
}

impl From<ScoreNetwork> for Checkpoint {
    fn from(n: ScoreNetwork) -> Self {
        Checkpoint { data_dim: n.data_dim, conditioning: CONDITIONING.into(), layers: n.layers }
    }
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Scratch {
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f64>>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
}

impl Scratch {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("at least one layer")
    }
}

/// Parameter gradients with the same layout as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zero(&mut self) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().chain(self.bias.iter_mut()).flat_map(|g| g.iter_mut()).for_each(|v| *v *= k);
    }

    /// Flattened in the same order as [`ScoreNetwork::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.bias) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

impl ScoreNetwork {
    /// Randomly initialised network with `U(-1/√fan_in, 1/√fan_in)` weights
    /// and biases. Input width is `data_dim + 1` for the log σ feature.
    pub fn new<R: Rng + ?Sized>(data_dim: usize, hidden: &[usize], rng: &mut R) -> Result<Self> {
        if data_dim == 0 {
            return Err(Error::Config("data dimension must be >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        let mut widths = vec![data_dim + 1];
        widths.extend_from_slice(hidden);
        widths.push(data_dim);
        let layers = widths.windows(2).map(|w| DenseLayer::uniform(w[0], w[1], rng)).collect();
        Ok(Self { data_dim, layers })
    }

    pub fn from_layers(data_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Config("network has no layers".into()))?;
        if first.inputs != data_dim + 1 {
            return Err(Error::Dimension { expected: data_dim + 1, got: first.inputs });
        }
        let last = layers.last().expect("non-empty");
        if last.outputs != data_dim {
            return Err(Error::Dimension { expected: data_dim, got: last.outputs });
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Dimension { expected: pair[0].outputs, got: pair[1].inputs });
            }
        }
        for layer in &layers {
            layer.check()?;
        }
        Ok(Self { data_dim, layers })
    }

    pub fn data_dim(&self) -> usize {
        self.data_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Layer widths from input to output.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].inputs).chain(self.layers.iter().map(|l| l.outputs)).collect()
    }

    pub fn zero_output_layer(&mut self) {
        let last = self.layers.last_mut().expect("non-empty");
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    pub fn scratch(&self) -> Scratch {
        let widths = self.widths();
        let max = widths.iter().copied().max().unwrap_or(0);
        Scratch { acts: widths.iter().map(|&w| vec![0.0; w]).collect(), grad_a: vec![0.0; max], grad_b: vec![0.0; max] }
    }

    pub fn gradients(&self) -> Gradients {
        Gradients {
            weights: self.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect(),
            bias: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
        }
    }

    /// Evaluate `s_θ(x, σ)` given `log σ`.
    pub fn forward(&self, x: &[f64], log_sigma: f64) -> Result<Vec<f64>> {
        if x.len() != self.data_dim {
            return Err(Error::Dimension { expected: self.data_dim, got: x.len() });
        }
        let mut scratch = self.scratch();
        Ok(self.forward_with(x, log_sigma, &mut scratch).to_vec())
    }

    /// Allocation-free forward pass; panics if `x` has the wrong length.
    pub fn forward_with<'s>(&self, x: &[f64], log_sigma: f64, scratch: &'s mut Scratch) -> &'s [f64] {
        assert_eq!(x.len(), self.data_dim, "input dimension");
        let input = &mut scratch.acts[0];
        input[..self.data_dim].copy_from_slice(x);
        input[self.data_dim] = log_sigma;
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = scratch.acts.split_at_mut(l + 1);
            layer.apply(&head[l], &mut tail[0], l != last);
        }
        scratch.output()
    }

    /// Accumulate `∂L/∂θ` into `grads` given `∂L/∂output` for the sample
    /// whose activations are in `scratch`.
    pub fn backward(&self, scratch: &mut Scratch, d_output: &[f64], grads: &mut Gradients) {
        assert_eq!(d_output.len(), self.data_dim, "output gradient dimension");
        let Scratch { acts, grad_a, grad_b } = scratch;
        grad_a[..self.data_dim].copy_from_slice(d_output);
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &acts[l];
            let g_out = &grad_a[..layer.outputs];
            let dw = &mut grads.weights[l];
            let db = &mut grads.bias[l];
            for (o, &g) in g_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                db[o] += g;
                for (dwi, &a) in dw[o * layer.inputs..(o + 1) * layer.inputs].iter_mut().zip(input) {
                    *dwi += g * a;
                }
            }
            if l == 0 {
                break;
            }
            let g_in = &mut grad_b[..layer.inputs];
            g_in.fill(0.0);
            for (o, &g) in g_out.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (gi, &w) in g_in.iter_mut().zip(&layer.weights[o * layer.inputs..(o + 1) * layer.inputs]) {
                    *gi += g * w;
                }
            }
            // Rectifier derivative on the hidden activation feeding this layer.
            for (gi, &a) in g_in.iter_mut().zip(input) {
                if a <= 0.0 {
                    *gi = 0.0;
                }
            }
            std::mem::swap(grad_a, grad_b);
        }
    }

    /// `θ ← θ - lr · g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64) {
        for (layer, (gw, gb)) in self.layers.iter_mut().zip(grads.weights.iter().zip(&grads.bias)) {
            layer.weights.iter_mut().zip(gw).for_each(|(w, g)| *w -= lr * g);
            layer.bias.iter_mut().zip(gb).for_each(|(b, g)| *b -= lr * g);
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters flattened layer by layer, weights before bias.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Dimension { expected: self.param_count(), got: params.len() });
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, tail) = rest.split_at(l.weights.len());
            l.weights.copy_from_slice(w);
            let (b, tail) = tail.split_at(l.bias.len());
            l.bias.copy_from_slice(b);
            rest = tail;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn tiny() -> ScoreNetwork {
        ScoreNetwork::new(2, &[4], &mut seeded(3)).unwrap()
    }

    #[test]
    fn widths_include_conditioning_feature() {
        let net = ScoreNetwork::new(2, &[16, 16], &mut seeded(0)).unwrap();
        assert_eq!(net.widths(), vec![3, 16, 16, 2]);
        assert_eq!(net.param_count(), 3 * 16 + 16 + 16 * 16 + 16 + 16 * 2 + 2);
    }

    #[test]
    fn zero_output_layer_gives_zero_score() {
        let mut net = tiny();
        net.zero_output_layer();
        assert_eq!(net.forward(&[3.0, -1.0], 0.2).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let a = tiny().forward(&[0.3, 0.7], -1.0).unwrap();
        let b = tiny().forward(&[0.3, 0.7], -1.0).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(matches!(tiny().forward(&[1.0], 0.0), Err(Error::Dimension { .. })));
    }

    #[test]
    fn checkpoint_round_trip_and_validation() {
        let net = tiny();
        let json = serde_json::to_string(&net).unwrap();
        let back: ScoreNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(net, back);

        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["layers"][0]["weights"].as_array_mut().unwrap().pop();
        assert!(serde_json::from_value::<ScoreNetwork>(v).is_err());
    }

    #[test]
    fn params_round_trip() {
        let mut net = tiny();
        let mut p = net.params();
        p[0] += 1.0;
        net.set_params(&p).unwrap();
        assert_eq!(net.params(), p);
        assert!(net.set_params(&p[1..]).is_err());
    }
}
