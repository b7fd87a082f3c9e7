//! Fully connected ReLU network trained with Adam on mini-batches.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Task;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub hidden_layers: usize,
    #[serde(default = "default_width")]
    pub width: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_width() -> usize {
    64
}
fn default_learning_rate() -> f64 {
    1e-3
}
fn default_batch() -> usize {
    256
}
fn default_epochs() -> usize {
    50
}

impl NetworkParams {
    pub fn new(hidden_layers: usize) -> Self {
        Self {
            hidden_layers,
            width: default_width(),
            learning_rate: default_learning_rate(),
            batch_size: default_batch(),
            epochs: default_epochs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers == 0 || self.width == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Params("hidden_layers, width, batch_size and epochs must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Params("learning_rate must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Layer {
    w: Array2<f64>,
    b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    task: Task,
    n_features: usize,
    layers: Vec<Layer>,
}

fn to_array(x: &Matrix) -> Array2<f64> {
    Array2::from_shape_vec((x.n_rows(), x.n_cols()), x.as_slice().to_vec()).expect("matrix shape")
}

impl Mlp {
    /// He-initialised weights, zero biases.
    pub fn init(n_features: usize, params: &NetworkParams, task: Task, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_features];
        sizes.extend(std::iter::repeat(params.width).take(params.hidden_layers));
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let normal = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).unwrap();
                Layer {
                    w: Array2::from_shape_fn((w[0], w[1]), |_| normal.sample(&mut rng)),
                    b: Array1::zeros(w[1]),
                }
            })
            .collect();
        Self { task, n_features, layers }
    }

    pub fn fit(x: &Matrix, y: &[f64], params: &NetworkParams, task: Task, seed: u64) -> Result<Self> {
        params.validate()?;
        let mut net = Self::init(x.n_cols(), params, task, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        let xa = to_array(x);
        let ya = Array1::from(y.to_vec());
        let n_params = net.n_params();
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let mut m = vec![0.0; n_params];
        let mut v = vec![0.0; n_params];
        let mut step = 0i32;
        let mut order: Vec<usize> = (0..x.n_rows()).collect();
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(params.batch_size) {
                let xb = xa.select(Axis(0), batch);
                let yb = ya.select(Axis(0), batch);
                let (_, grad) = net.loss_and_gradient(xb.view(), yb.as_slice().unwrap());
                step += 1;
                let c1 = 1.0 - b1.powi(step);
                let c2 = 1.0 - b2.powi(step);
                let mut k = 0;
                for layer in net.layers.iter_mut() {
                    for p in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                        let g = grad[k];
                        m[k] = b1 * m[k] + (1.0 - b1) * g;
                        v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                        *p -= params.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
                        k += 1;
                    }
                }
            }
        }
        Ok(net)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Weights then bias of each layer, row-major.
    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.w.iter().chain(l.b.iter()).copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter();
        for layer in self.layers.iter_mut() {
            for p in layer.w.iter_mut().chain(layer.b.iter_mut()) {
                *p = *it.next().expect("parameter count");
            }
        }
    }

    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array1<f64>) {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&layer.w) + &layer.b;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
                acts.push(z);
            } else {
                return (acts, z.column(0).to_owned());
            }
        }
        unreachable!("network has an output layer")
    }

    /// Mean loss over the batch and its gradient in `params_flat` order.
    /// Logistic loss on the output logit for classification, half squared
    /// error for regression.
    pub fn loss_and_gradient(&self, x: ArrayView2<f64>, y: &[f64]) -> (f64, Vec<f64>) {
        let n = y.len() as f64;
        let (acts, out) = self.forward(x);
        let mut loss = 0.0;
        let mut delta = Array2::zeros((y.len(), 1));
        for (i, (&z, &t)) in out.iter().zip(y).enumerate() {
            match self.task {
                Task::Classify => {
                    let softplus = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
                    loss += softplus - t * z;
                    delta[[i, 0]] = (1.0 / (1.0 + (-z).exp()) - t) / n;
                }
                Task::Regress => {
                    loss += 0.5 * (z - t) * (z - t);
                    delta[[i, 0]] = (z - t) / n;
                }
            }
        }
        let mut grads: Vec<(Array2<f64>, Array1<f64>)> = Vec::with_capacity(self.layers.len());
        for l in (0..self.layers.len()).rev() {
            let gw = acts[l].t().dot(&delta);
            let gb = delta.sum_axis(Axis(0));
            if l > 0 {
                let mut next = delta.dot(&self.layers[l].w.t());
                next.zip_mut_with(&acts[l], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = next;
            }
            grads.push((gw, gb));
        }
        grads.reverse();
        let flat = grads.iter().flat_map(|(w, b)| w.iter().chain(b.iter()).copied()).collect();
        (loss / n, flat)
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.n_cols() != self.n_features {
            return Err(Error::Schema { expected: self.n_features, got: x.n_cols() });
        }
        let xa = to_array(x);
        let (_, out) = self.forward(xa.view());
        Ok(match self.task {
            Task::Regress => out.to_vec(),
            Task::Classify => out.iter().map(|&z| if z > 0.0 { 1.0 } else { 0.0 }).collect(),
        })
    }
}
