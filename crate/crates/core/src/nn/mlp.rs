use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::NeuralError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutputActivation {
    Identity,
    /// `scale * tanh(z)`.
    Tanh { scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    /// Input, hidden..., output widths. Hidden layers use ReLU.
    pub layer_sizes: Vec<usize>,
    pub output: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_sizes: Vec<usize>, output: OutputActivation) -> Result<Self, NeuralError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NeuralError::BadSpec(layer_sizes));
        }
        Ok(Self { layer_sizes, output })
    }

    /// Four hidden layers of 64, 64, 64 and 32 units.
    pub fn standard(input: usize, output: usize, activation: OutputActivation) -> Self {
        Self {
            layer_sizes: vec![input, 64, 64, 64, 32, output],
            output: activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// Weights (`out x in`, so `z = W x + b`) and biases of a fully connected
/// network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

/// Per-layer inputs and pre-activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    /// Gradient with respect to the network input, `batch x in`.
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }
}

impl Mlp {
    /// He-normal weights for ReLU layers, `1/fan_in` variance for the output
    /// layer, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &MlpSpec, rng: &mut R) -> Self {
        let layers = spec.layer_sizes.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for (l, pair) in spec.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let gain = if l + 1 < layers { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).unwrap();
            weights.push(Array2::from_shape_fn((fan_out, fan_in), |_| normal.sample(rng)));
            biases.push(Array1::zeros(fan_out));
        }
        Self {
            spec: spec.clone(),
            weights,
            biases,
        }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        Self {
            spec: spec.clone(),
            weights: spec
                .layer_sizes
                .windows(2)
                .map(|p| Array2::zeros((p[1], p[0])))
                .collect(),
            biases: spec.layer_sizes[1..].iter().map(|&n| Array1::zeros(n)).collect(),
        }
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn output_activation(&self, z: f64) -> f64 {
        match self.spec.output {
            OutputActivation::Identity => z,
            OutputActivation::Tanh { scale } => scale * z.tanh(),
        }
    }

    /// Batched forward pass over the rows of `x`.
    pub fn forward(&self, x: ArrayView2<'_, f64>) -> (Array2<f64>, ForwardCache) {
        assert_eq!(x.ncols(), self.spec.input_dim(), "input width mismatch");
        let last = self.num_layers() - 1;
        let mut inputs = Vec::with_capacity(self.num_layers());
        let mut pre_activations = Vec::with_capacity(self.num_layers());
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = a.dot(&w.t()) + b;
            let out = if l < last {
                z.mapv(|v| v.max(0.0))
            } else {
                z.mapv(|v| self.output_activation(v))
            };
            inputs.push(a);
            pre_activations.push(z);
            a = out;
        }
        (
            a,
            ForwardCache {
                inputs,
                pre_activations,
            },
        )
    }

    /// Forward pass without a cache, for inference.
    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        assert_eq!(x.ncols(), self.spec.input_dim(), "input width mismatch");
        let last = self.num_layers() - 1;
        let mut a = x.to_owned();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = a.dot(&w.t()) + b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                z.mapv_inplace(|v| self.output_activation(v));
            }
            a = z;
        }
        a
    }

    /// Single-sample forward pass on plain slices.
    pub fn predict_one(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.spec.input_dim(), "input width mismatch");
        let last = self.num_layers() - 1;
        let mut a = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z: Vec<f64> = w
                .rows()
                .into_iter()
                .zip(b.iter())
                .map(|(row, bias)| row.iter().zip(&a).map(|(wi, ai)| wi * ai).sum::<f64>() + bias)
                .collect();
            if l < last {
                z.iter_mut().for_each(|v| *v = v.max(0.0));
            } else {
                z.iter_mut().for_each(|v| *v = self.output_activation(*v));
            }
            a = z;
        }
        a
    }

    /// Reverse-mode pass: given `dy = dL/dy` for the batch, returns `dL/dθ`
    /// summed over the batch and `dL/dx` per row.
    pub fn backward(&self, cache: &ForwardCache, dy: ArrayView2<'_, f64>) -> Gradients {
        let layers = self.num_layers();
        assert_eq!(cache.inputs.len(), layers, "cache from a different network");
        let z_out = &cache.pre_activations[layers - 1];
        assert_eq!(dy.dim(), z_out.dim(), "output gradient shape mismatch");

        let mut delta = match self.spec.output {
            OutputActivation::Identity => dy.to_owned(),
            OutputActivation::Tanh { scale } => {
                let mut d = dy.to_owned();
                d.zip_mut_with(z_out, |g, &z| {
                    let t = z.tanh();
                    *g *= scale * (1.0 - t * t);
                });
                d
            }
        };
        let mut weights = vec![Array2::zeros((0, 0)); layers];
        let mut biases = vec![Array1::zeros(0); layers];
        for l in (0..layers).rev() {
            weights[l] = delta.t().dot(&cache.inputs[l]);
            biases[l] = delta.sum_axis(Axis(0));
            let mut upstream = delta.dot(&self.weights[l]);
            if l > 0 {
                upstream.zip_mut_with(&cache.pre_activations[l - 1], |g, &z| {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                });
            }
            delta = upstream;
        }
        Gradients {
            weights,
            biases,
            input: delta,
        }
    }

    /// Polyak averaging: `self <- (1 - tau) * self + tau * online`.
    pub fn soft_update(&mut self, online: &Mlp, tau: f64) {
        assert_eq!(self.spec.layer_sizes, online.spec.layer_sizes, "architecture mismatch");
        for (t, o) in self.weights.iter_mut().zip(&online.weights) {
            t.zip_mut_with(o, |t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
        for (t, o) in self.biases.iter_mut().zip(&online.biases) {
            t.zip_mut_with(o, |t, &o| *t = (1.0 - tau) * *t + tau * o);
        }
    }

    pub fn to_record(&self) -> MlpRecord {
        MlpRecord {
            spec: self.spec.clone(),
            layers: self
                .weights
                .iter()
                .zip(&self.biases)
                .map(|(w, b)| LayerRecord {
                    rows: w.nrows(),
                    cols: w.ncols(),
                    weights: w.iter().copied().collect(),
                    biases: b.to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_record(record: &MlpRecord) -> Result<Self, NeuralError> {
        let spec = MlpSpec::new(record.spec.layer_sizes.clone(), record.spec.output)?;
        if record.layers.len() != spec.layer_sizes.len() - 1 {
            return Err(NeuralError::Shape("layer count does not match spec".into()));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for (l, layer) in record.layers.iter().enumerate() {
            let (cols, rows) = (spec.layer_sizes[l], spec.layer_sizes[l + 1]);
            if layer.rows != rows || layer.cols != cols || layer.biases.len() != rows {
                return Err(NeuralError::Shape(format!("layer {l} does not match spec")));
            }
            let w = Array2::from_shape_vec((rows, cols), layer.weights.clone())
                .map_err(|e| NeuralError::Shape(format!("layer {l}: {e}")))?;
            weights.push(w);
            biases.push(Array1::from(layer.biases.clone()));
        }
        let mlp = Self { spec, weights, biases };
        if !mlp.is_finite() {
            return Err(NeuralError::NonFinite);
        }
        Ok(mlp)
    }
}

/// Serialized network: row-major weights per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpRecord {
    pub spec: MlpSpec,
    pub layers: Vec<LayerRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}
