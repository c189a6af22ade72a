use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Gradients, NodeId, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    Linear,
    Mlp,
}

/// One affine layer: `x · weight + bias` with `weight` stored `in × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Model parameters θ for the linear classifier or the one-hidden-layer MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub layers: Vec<Layer>,
}

/// Parameter leaves bound onto a tape, in layer order `(weight, bias)`.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub nodes: Vec<(NodeId, NodeId)>,
}

impl ModelParams {
    pub fn from_layers(architecture: Architecture, layers: Vec<Layer>) -> Result<Self> {
        let expected = match architecture {
            Architecture::Linear => 1,
            Architecture::Mlp => 2,
        };
        if layers.len() != expected {
            return Err(Error::Validation(format!(
                "{architecture:?} model needs {expected} layer(s), got {}",
                layers.len()
            )));
        }
        for layer in &layers {
            if layer.weight.shape().len() != 2 || layer.bias.shape() != [layer.output_dim()] {
                return Err(Error::Dimension {
                    context: "layer weight/bias",
                    left: layer.weight.shape().to_vec(),
                    right: layer.bias.shape().to_vec(),
                });
            }
        }
        for pair in layers.windows(2) {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Dimension {
                    context: "layer composition",
                    left: pair[0].weight.shape().to_vec(),
                    right: pair[1].weight.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            architecture,
            layers,
        })
    }

    pub fn linear_zeros(input: usize, output: usize) -> Self {
        Self {
            architecture: Architecture::Linear,
            layers: vec![Layer {
                weight: Tensor::zeros(vec![input, output]),
                bias: Tensor::zeros(vec![output]),
            }],
        }
    }

    /// Gaussian init with std `scale / sqrt(fan_in)`, zero biases.
    pub fn init_linear<R: Rng + ?Sized>(input: usize, output: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            architecture: Architecture::Linear,
            layers: vec![random_layer(input, output, scale, rng)],
        }
    }

    pub fn init_mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            architecture: Architecture::Mlp,
            layers: vec![
                random_layer(input, hidden, scale, rng),
                random_layer(hidden, output, scale, rng),
            ],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn hidden_width(&self) -> Option<usize> {
        match self.architecture {
            Architecture::Mlp => Some(self.layers[0].output_dim()),
            Architecture::Linear => None,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters flattened as `w0, b0, w1, b1, ...`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for layer in &self.layers {
            out.extend_from_slice(layer.weight.data());
            out.extend_from_slice(layer.bias.data());
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten) onto this model's shapes.
    pub fn with_flat(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension {
                context: "flat parameter vector",
                left: vec![self.num_params()],
                right: vec![flat.len()],
            });
        }
        let mut out = self.clone();
        let mut at = 0;
        for layer in &mut out.layers {
            for t in [&mut layer.weight, &mut layer.bias] {
                let n = t.len();
                t.data_mut().copy_from_slice(&flat[at..at + n]);
                at += n;
            }
        }
        Ok(out)
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let nodes = self
            .layers
            .iter()
            .map(|l| (tape.param(l.weight.clone()), tape.param(l.bias.clone())))
            .collect();
        BoundParams { nodes }
    }

    /// Records `f_θ(features)` on the tape using already-bound parameters.
    pub fn forward_bound(&self, tape: &mut Tape, bound: &BoundParams, features: NodeId) -> Result<NodeId> {
        let x = tape.value(features);
        if x.shape().len() != 2 || x.shape()[1] != self.input_dim() {
            return Err(Error::Dimension {
                context: "model input",
                left: x.shape().to_vec(),
                right: self.layers[0].weight.shape().to_vec(),
            });
        }
        let mut h = features;
        let last = bound.nodes.len() - 1;
        for (i, &(w, b)) in bound.nodes.iter().enumerate() {
            let z = tape.matmul(h, w)?;
            h = tape.add_row(z, b)?;
            if i < last {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }

    /// Binds the parameters and records the logits for `features`.
    pub fn forward(&self, tape: &mut Tape, features: &Tensor) -> Result<(NodeId, BoundParams)> {
        let bound = self.bind(tape);
        let x = tape.constant(features.clone());
        let logits = self.forward_bound(tape, &bound, x)?;
        Ok((logits, bound))
    }

    /// Logits without recording a tape.
    pub fn predict(&self, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (logits, _) = self.forward(&mut tape, features)?;
        Ok(tape.value(logits).clone())
    }

    /// Collects the adjoints of `bound` into a parameter-shaped gradient.
    pub fn gradient_of(&self, grads: &Gradients, bound: &BoundParams) -> ModelParams {
        let mut out = self.clone();
        for (layer, &(w, b)) in out.layers.iter_mut().zip(&bound.nodes) {
            layer.weight = grads
                .get(w)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(layer.weight.shape().to_vec()));
            layer.bias = grads
                .get(b)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(layer.bias.shape().to_vec()));
        }
        out
    }

    pub fn zeros_like(&self) -> ModelParams {
        let mut out = self.clone();
        for layer in &mut out.layers {
            layer.weight = Tensor::zeros(layer.weight.shape().to_vec());
            layer.bias = Tensor::zeros(layer.bias.shape().to_vec());
        }
        out
    }

    /// `self += factor · other`.
    pub fn axpy(&mut self, factor: f64, other: &ModelParams) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.weight.data_mut().iter_mut().zip(b.weight.data()) {
                *x += factor * y;
            }
            for (x, y) in a.bias.data_mut().iter_mut().zip(b.bias.data()) {
                *x += factor * y;
            }
        }
    }

    pub fn norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weight.norm_sq() + l.bias.norm_sq())
            .sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.all_finite() && l.bias.all_finite())
    }

    fn check_compatible(&self, other: &ModelParams) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::Dimension {
                context: "gradient layer count",
                left: vec![self.layers.len()],
                right: vec![other.layers.len()],
            });
        }
        for (a, b) in self.layers.iter().zip(&other.layers) {
            a.weight.same_shape(&b.weight, "gradient weight")?;
            a.bias.same_shape(&b.bias, "gradient bias")?;
        }
        Ok(())
    }
}

fn random_layer<R: Rng + ?Sized>(input: usize, output: usize, scale: f64, rng: &mut R) -> Layer {
    let std = scale / (input.max(1) as f64).sqrt();
    let normal = Normal::new(0.0, std.max(f64::MIN_POSITIVE)).expect("finite std");
    let weight = (0..input * output).map(|_| normal.sample(rng)).collect();
    Layer {
        weight: Tensor::new(vec![input, output], weight).expect("shape matches"),
        bias: Tensor::zeros(vec![output]),
    }
}

/// `θ ← θ − lr·(g + weight_decay·θ)`.
pub fn sgd_step(params: &ModelParams, grads: &ModelParams, lr: f64, weight_decay: f64) -> Result<ModelParams> {
    params.check_compatible(grads)?;
    if !grads.all_finite() {
        return Err(Error::NonFinite("sgd step gradient".into()));
    }
    if !(lr > 0.0) || !(weight_decay >= 0.0) {
        return Err(Error::Validation(format!(
            "sgd needs lr > 0 and weight_decay >= 0, got {lr} and {weight_decay}"
        )));
    }
    let mut out = params.clone();
    for (layer, g) in out.layers.iter_mut().zip(&grads.layers) {
        for (t, gt) in [(&mut layer.weight, &g.weight), (&mut layer.bias, &g.bias)] {
            for (x, &gx) in t.data_mut().iter_mut().zip(gt.data()) {
                *x -= lr * (gx + weight_decay * *x);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_linear(theta: f64) -> ModelParams {
        ModelParams::from_layers(
            Architecture::Linear,
            vec![Layer {
                weight: Tensor::matrix(1, 1, vec![theta]).unwrap(),
                bias: Tensor::vector(vec![0.0]),
            }],
        )
        .unwrap()
    }

    #[test]
    fn identity_weights_pass_features_through() {
        let params = ModelParams::from_layers(
            Architecture::Linear,
            vec![Layer {
                weight: Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap(),
                bias: Tensor::vector(vec![0.0, 0.0]),
            }],
        )
        .unwrap();
        let x = Tensor::matrix(1, 2, vec![3.0, -1.0]).unwrap();
        assert_eq!(params.predict(&x).unwrap().data(), &[3.0, -1.0]);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut params = ModelParams::linear_zeros(5, 2);
        params.layers[0].bias = Tensor::vector(vec![1.0, 2.0]);
        let x = Tensor::matrix(1, 5, vec![0.3, -4.0, 9.0, 1.0, 2.0]).unwrap();
        assert_eq!(params.predict(&x).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn mlp_matches_hand_rolled_matrix_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let params = ModelParams::init_mlp(2, 4, 2, 1.0, &mut rng);
        let x = [1.0, 1.0];
        // independent oracle: explicit loops over the stored weights
        let l0 = &params.layers[0];
        let mut hidden = [0.0; 4];
        for (j, h) in hidden.iter_mut().enumerate() {
            let mut acc = l0.bias.data()[j];
            for (i, xi) in x.iter().enumerate() {
                acc += xi * l0.weight.data()[i * 4 + j];
            }
            *h = acc.max(0.0);
        }
        let l1 = &params.layers[1];
        let mut expected = [0.0; 2];
        for (k, e) in expected.iter_mut().enumerate() {
            let mut acc = l1.bias.data()[k];
            for (j, hj) in hidden.iter().enumerate() {
                acc += hj * l1.weight.data()[j * 2 + k];
            }
            *e = acc;
        }
        let got = params.predict(&Tensor::matrix(1, 2, x.to_vec()).unwrap()).unwrap();
        for (g, e) in got.data().iter().zip(expected) {
            assert!((g - e).abs() < 1e-14, "{g} vs {e}");
        }
    }

    #[test]
    fn input_dim_mismatch_names_both_shapes() {
        let params = ModelParams::linear_zeros(3, 2);
        let err = params
            .predict(&Tensor::matrix(1, 2, vec![1.0, 2.0]).unwrap())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1, 2]") && msg.contains("[3, 2]"), "{msg}");
    }

    #[test]
    fn layer_composition_is_validated() {
        let bad = ModelParams::from_layers(
            Architecture::Mlp,
            vec![
                Layer {
                    weight: Tensor::zeros(vec![2, 3]),
                    bias: Tensor::zeros(vec![3]),
                },
                Layer {
                    weight: Tensor::zeros(vec![4, 2]),
                    bias: Tensor::zeros(vec![2]),
                },
            ],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn sgd_examples() {
        let p = scalar_linear(1.0);
        let g = scalar_linear(2.0);
        let out = sgd_step(&p, &g, 0.1, 0.0).unwrap();
        assert!((out.layers[0].weight.data()[0] - 0.8).abs() < 1e-15);

        let zero = scalar_linear(0.0);
        assert_eq!(sgd_step(&p, &zero, 0.1, 0.0).unwrap(), p);

        let out = sgd_step(&p, &zero, 0.1, 1.0).unwrap();
        assert!((out.layers[0].weight.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn sgd_rejects_non_finite_gradient() {
        let p = scalar_linear(1.0);
        let g = scalar_linear(f64::NAN);
        assert!(matches!(sgd_step(&p, &g, 0.1, 0.0), Err(Error::NonFinite(_))));
    }

    #[test]
    fn flatten_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = ModelParams::init_mlp(3, 5, 2, 1.0, &mut rng);
        assert_eq!(p.with_flat(&p.flatten()).unwrap(), p);
    }
}
