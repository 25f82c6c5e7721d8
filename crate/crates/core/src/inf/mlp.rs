//! Dense SiLU network with hand-written backpropagation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fully connected layer, `weight` row-major `(outputs, inputs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn n_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniform Glorot initialization from the training seed.
    #[default]
    Seeded,
    /// All weights and biases zero.
    Zero,
}

fn silu(z: f64) -> f64 {
    z / (1.0 + (-z).exp())
}

fn silu_grad(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s * (1.0 + z * (1.0 - s))
}

/// Multilayer perceptron: SiLU on every hidden layer, linear head.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(&l.bias).copied())
            .collect()
    }
}

/// Activations cached by a batched forward pass.
pub struct Trace {
    batch: usize,
    /// `inputs[i]` feeds layer `i`; the last entry is the network output.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty trace")
    }
}

impl Mlp {
    pub fn new(widths: &[usize], init: Init, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::invalid("network", "needs >= 2 non-zero layer widths"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let mut d = Dense::zeros(w[0], w[1]);
                if init == Init::Seeded {
                    let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                    for v in d.weight.iter_mut() {
                        *v = rng.random_range(-limit..limit);
                    }
                }
                d
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_size(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_size()];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    pub fn check_chain(&self) -> Result<()> {
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Dimension(format!(
                    "layer {i} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.weight.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Dimension(format!("layer {i} parameter block sizes")));
            }
        }
        Ok(())
    }

    /// Single-input evaluation with plain loops, for bit-stable inference.
    pub fn eval(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_size(),
                input.len()
            )));
        }
        let mut x = input.to_vec();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut y = l.bias.clone();
            for (o, yo) in y.iter_mut().enumerate() {
                let row = &l.weight[o * l.inputs..(o + 1) * l.inputs];
                *yo += row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>();
            }
            if i != last {
                y.iter_mut().for_each(|v| *v = silu(*v));
            }
            x = y;
        }
        Ok(x)
    }

    /// Batched forward pass over `batch` row-major inputs.
    pub fn forward(&self, inputs: &[f64], batch: usize) -> Trace {
        debug_assert_eq!(inputs.len(), batch * self.input_size());
        let mut acts = vec![inputs.to_vec()];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let x = acts.last().unwrap();
            let mut z = vec![0.0; batch * l.outputs];
            for row in z.chunks_mut(l.outputs) {
                row.copy_from_slice(&l.bias);
            }
            // z (B x out) += x (B x in) * W^T (in x out)
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    l.inputs,
                    l.outputs,
                    1.0,
                    x.as_ptr(),
                    l.inputs as isize,
                    1,
                    l.weight.as_ptr(),
                    1,
                    l.inputs as isize,
                    1.0,
                    z.as_mut_ptr(),
                    l.outputs as isize,
                    1,
                );
            }
            let a = if i == last { z.clone() } else { z.iter().map(|&v| silu(v)).collect() };
            pre.push(z);
            acts.push(a);
        }
        Trace { batch, acts, pre }
    }

    /// Backpropagates `d_out` (gradient of the loss w.r.t. the outputs).
    ///
    /// Only the last `trainable_from..` layers receive gradients; earlier
    /// layers get zero blocks.
    pub fn backward(&self, trace: &Trace, d_out: &[f64], trainable_from: usize) -> Gradients {
        let batch = trace.batch;
        let mut grads: Vec<Dense> = self.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        let mut delta = d_out.to_vec();
        for i in (trainable_from..self.layers.len()).rev() {
            let l = &self.layers[i];
            let x = &trace.acts[i];
            let g = &mut grads[i];
            // dW (out x in) = delta^T (out x B) * x (B x in)
            unsafe {
                matrixmultiply::dgemm(
                    l.outputs,
                    batch,
                    l.inputs,
                    1.0,
                    delta.as_ptr(),
                    1,
                    l.outputs as isize,
                    x.as_ptr(),
                    l.inputs as isize,
                    1,
                    0.0,
                    g.weight.as_mut_ptr(),
                    l.inputs as isize,
                    1,
                );
            }
            for row in delta.chunks(l.outputs) {
                for (b, d) in g.bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            if i == trainable_from {
                break;
            }
            // dx (B x in) = delta (B x out) * W (out x in), then through SiLU
            let mut dx = vec![0.0; batch * l.inputs];
            unsafe {
                matrixmultiply::dgemm(
                    batch,
                    l.outputs,
                    l.inputs,
                    1.0,
                    delta.as_ptr(),
                    l.outputs as isize,
                    1,
                    l.weight.as_ptr(),
                    l.inputs as isize,
                    1,
                    0.0,
                    dx.as_mut_ptr(),
                    l.inputs as isize,
                    1,
                );
            }
            for (d, z) in dx.iter_mut().zip(&trace.pre[i - 1]) {
                *d *= silu_grad(*z);
            }
            delta = dx;
        }
        Gradients { layers: grads }
    }

    /// Parameter at a flat index (layer by layer, weights before biases).
    pub fn param_mut(&mut self, mut idx: usize) -> &mut f64 {
        for l in &mut self.layers {
            if idx < l.weight.len() {
                return &mut l.weight[idx];
            }
            idx -= l.weight.len();
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weight.iter_mut().chain(l.bias.iter_mut()))
    }
}

/// Mean over the batch of the summed squared error, and its output gradient.
pub fn squared_error(pred: &[f64], target: &[f64], batch: usize) -> (f64, Vec<f64>) {
    let scale = 1.0 / batch as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let e = p - t;
            loss += e * e;
            2.0 * e * scale
        })
        .collect();
    (loss * scale, grad)
}

/// Loss and analytic gradients for a batch.
pub fn loss_and_grad(net: &Mlp, inputs: &[f64], targets: &[f64], batch: usize) -> (f64, Gradients) {
    let trace = net.forward(inputs, batch);
    let (loss, d_out) = squared_error(trace.output(), targets, batch);
    (loss, net.backward(&trace, &d_out, 0))
}

/// Largest relative disagreement between `analytic` and central finite
/// differences of the loss, over every parameter.
///
/// The differences use the five-point stencil, whose O(epsilon^4) truncation
/// error lets `epsilon` be large enough to keep round-off far below the
/// comparison floor.
///
/// The relative error of one parameter is `|a - n| / max(|a|, |n|, floor)`
/// where `floor` is `1e-6` times the largest finite-difference magnitude, so
/// components many orders below the gradient scale are compared absolutely.
pub fn grad_check_against(net: &Mlp, inputs: &[f64], targets: &[f64], batch: usize, epsilon: f64, analytic: &Gradients) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon <= 1e-3) {
        return Err(Error::invalid("epsilon", "must lie in (0, 1e-3]"));
    }
    let loss_of = |m: &Mlp| squared_error(m.forward(inputs, batch).output(), targets, batch).0;
    let a = analytic.flat();
    if a.len() != net.n_params() {
        return Err(Error::Dimension("gradient shape differs from network".into()));
    }
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(a.len());
    for idx in 0..a.len() {
        let orig = *probe.param_mut(idx);
        let mut at = |k: f64| {
            *probe.param_mut(idx) = orig + k * epsilon;
            loss_of(&probe)
        };
        let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
        *probe.param_mut(idx) = orig;
        numeric.push((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * epsilon));
    }
    let scale = numeric.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = (1e-6 * scale).max(f64::MIN_POSITIVE);
    Ok(a.iter()
        .zip(&numeric)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max))
}
