//! Dense multilayer perceptron over a flat parameter vector.
//!
//! Hidden layers use ReLU; the output activation is configurable. Every
//! evaluation takes the parameter vector explicitly so callers can hold
//! several parameter sets for one architecture at the same time.

use matrixmultiply::dgemm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Softplus,
}

fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Flat real-valued parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(len: usize) -> ParamVector {
        ParamVector(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &ParamVector) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::shape(format!(
                "parameter length mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.0 {
            *a *= c;
        }
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Dense network: architecture plus its current parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetFragment", into = "NetFragment")]
pub struct Net {
    sizes: Vec<usize>,
    output: Activation,
    params: ParamVector,
}

/// Serialized form of a [`Net`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetFragment {
    pub layer_sizes: Vec<usize>,
    pub output_activation: Activation,
    pub params: Vec<f64>,
}

impl TryFrom<NetFragment> for Net {
    type Error = Error;
    fn try_from(f: NetFragment) -> Result<Net> {
        check_sizes(&f.layer_sizes)?;
        let net = Net {
            sizes: f.layer_sizes,
            output: f.output_activation,
            params: ParamVector(f.params),
        };
        if net.params.len() != param_count(&net.sizes) {
            return Err(Error::config(
                "params",
                format!("expected {} parameters, found {}", param_count(&net.sizes), net.params.len()),
            ));
        }
        if !net.params.is_finite() {
            return Err(Error::config("params", "non-finite parameter"));
        }
        Ok(net)
    }
}

impl From<Net> for NetFragment {
    fn from(n: Net) -> NetFragment {
        NetFragment {
            layer_sizes: n.sizes,
            output_activation: n.output,
            params: n.params.0,
        }
    }
}

fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::config(
            "layer_sizes",
            "need an input size and at least one layer",
        ));
    }
    if sizes.contains(&0) {
        return Err(Error::config("layer_sizes", "layer sizes must be at least 1"));
    }
    Ok(())
}

/// Parameters of a dense net with the given layer sizes: sum of `(in + 1) * out`.
pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
}

/// Activations recorded by a batched forward pass.
struct Tape {
    rows: usize,
    /// Layer inputs, starting with the batch itself.
    acts: Vec<Vec<f64>>,
    /// Pre-activations of every layer.
    pre: Vec<Vec<f64>>,
}

impl Net {
    /// Glorot-uniform weights and zero biases, drawn deterministically from `seed`.
    pub fn new(layer_sizes: &[usize], output: Activation, seed: u64) -> Result<Net> {
        check_sizes(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count(layer_sizes));
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.gen_range(-limit..=limit));
            }
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Net {
            sizes: layer_sizes.to_vec(),
            output,
            params: ParamVector(params),
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn output_activation(&self) -> Activation {
        self.output
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    /// Same architecture with different parameters.
    pub fn with_params(&self, params: ParamVector) -> Result<Net> {
        self.check_params(&params)?;
        if !params.is_finite() {
            return Err(Error::config("params", "non-finite parameter"));
        }
        Ok(Net {
            sizes: self.sizes.clone(),
            output: self.output,
            params,
        })
    }

    fn check_params(&self, params: &ParamVector) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        Ok(())
    }

    fn batch_rows(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.input_size();
        if inputs.is_empty() || inputs.len() % d != 0 {
            return Err(Error::shape(format!(
                "input of length {} is not a nonempty batch of {d}-vectors",
                inputs.len()
            )));
        }
        Ok(inputs.len() / d)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.forward_with(&self.params, x)
    }

    /// Forward pass of a single input under explicit parameters.
    pub fn forward_with(&self, params: &ParamVector, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size() {
            return Err(Error::shape(format!(
                "expected input of size {}, got {}",
                self.input_size(),
                x.len()
            )));
        }
        self.forward_batch_with(params, x)
    }

    /// Forward pass of a row-major batch (`rows x input_size`).
    pub fn forward_batch_with(&self, params: &ParamVector, inputs: &[f64]) -> Result<Vec<f64>> {
        self.check_params(params)?;
        let rows = self.batch_rows(inputs)?;
        let mut tape = self.run(params, inputs, rows, false);
        Ok(tape.acts.pop().unwrap())
    }

    fn run(&self, params: &ParamVector, inputs: &[f64], rows: usize, record: bool) -> Tape {
        let nl = self.sizes.len() - 1;
        let mut acts = vec![inputs.to_vec()];
        let mut pre = Vec::with_capacity(if record { nl } else { 0 });
        let mut off = 0;
        for (layer, w) in self.sizes.windows(2).enumerate() {
            let (din, dout) = (w[0], w[1]);
            let weights = &params.0[off..off + din * dout];
            let bias = &params.0[off + din * dout..off + din * dout + dout];
            off += (din + 1) * dout;
            let mut z = Vec::with_capacity(rows * dout);
            for _ in 0..rows {
                z.extend_from_slice(bias);
            }
            let x = acts.last().unwrap();
            // z (rows x dout) += x (rows x din) * W^T, W stored dout x din.
            unsafe {
                dgemm(
                    rows, din, dout, 1.0,
                    x.as_ptr(), din as isize, 1,
                    weights.as_ptr(), 1, din as isize,
                    1.0,
                    z.as_mut_ptr(), dout as isize, 1,
                );
            }
            let last = layer + 1 == nl;
            let a: Vec<f64> = if last {
                match self.output {
                    Activation::Identity => z.clone(),
                    Activation::Softplus => z.iter().map(|&v| softplus(v)).collect(),
                }
            } else {
                z.iter().map(|&v| v.max(0.0)).collect()
            };
            if record {
                pre.push(z);
            } else if !last {
                acts.pop();
            } else {
                acts.clear();
            }
            acts.push(a);
        }
        Tape { rows, acts, pre }
    }

    /// Loss and reverse-mode gradient at the net's own parameters.
    pub fn grad<F>(&self, inputs: &[f64], loss: F) -> Result<(f64, ParamVector)>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        self.grad_with(&self.params, inputs, loss)
    }

    /// Loss and reverse-mode gradient at `params`.
    ///
    /// `inputs` is a row-major batch. `loss` receives the batch outputs
    /// (`rows x output_size`), writes dLoss/dOutput into its second argument
    /// and returns the loss value; any normalisation over the batch is the
    /// loss's responsibility.
    pub fn grad_with<F>(&self, params: &ParamVector, inputs: &[f64], mut loss: F) -> Result<(f64, ParamVector)>
    where
        F: FnMut(&[f64], &mut [f64]) -> f64,
    {
        self.check_params(params)?;
        let rows = self.batch_rows(inputs)?;
        let tape = self.run(params, inputs, rows, true);
        let out = tape.acts.last().unwrap();
        let mut delta = vec![0.0; out.len()];
        let value = loss(out, &mut delta);
        Ok((value, self.backward(params, &tape, delta)))
    }

    fn backward(&self, params: &ParamVector, tape: &Tape, mut delta: Vec<f64>) -> ParamVector {
        let rows = tape.rows;
        let nl = self.sizes.len() - 1;
        let mut grad = vec![0.0; params.len()];
        let mut offsets = Vec::with_capacity(nl);
        let mut off = 0;
        for w in self.sizes.windows(2) {
            offsets.push(off);
            off += (w[0] + 1) * w[1];
        }
        for layer in (0..nl).rev() {
            let (din, dout) = (self.sizes[layer], self.sizes[layer + 1]);
            let z = &tape.pre[layer];
            if layer + 1 == nl {
                if self.output == Activation::Softplus {
                    for (d, &zv) in delta.iter_mut().zip(z) {
                        *d *= sigmoid(zv);
                    }
                }
            } else {
                for (d, &zv) in delta.iter_mut().zip(z) {
                    if zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let off = offsets[layer];
            let x = &tape.acts[layer];
            let (gw, gb) = grad[off..off + (din + 1) * dout].split_at_mut(din * dout);
            // dW (dout x din) = delta^T (dout x rows) * x (rows x din)
            unsafe {
                dgemm(
                    dout, rows, din, 1.0,
                    delta.as_ptr(), 1, dout as isize,
                    x.as_ptr(), din as isize, 1,
                    0.0,
                    gw.as_mut_ptr(), din as isize, 1,
                );
            }
            for r in 0..rows {
                for (g, d) in gb.iter_mut().zip(&delta[r * dout..(r + 1) * dout]) {
                    *g += d;
                }
            }
            if layer > 0 {
                let weights = &params.0[off..off + din * dout];
                let mut prev = vec![0.0; rows * din];
                // dX (rows x din) = delta (rows x dout) * W (dout x din)
                unsafe {
                    dgemm(
                        rows, dout, din, 1.0,
                        delta.as_ptr(), dout as isize, 1,
                        weights.as_ptr(), din as isize, 1,
                        0.0,
                        prev.as_mut_ptr(), din as isize, 1,
                    );
                }
                delta = prev;
            }
        }
        ParamVector(grad)
    }

    /// Sign pattern of every hidden pre-activation for a batch.
    pub(crate) fn relu_pattern(&self, params: &ParamVector, inputs: &[f64]) -> Result<Vec<bool>> {
        self.check_params(params)?;
        let rows = self.batch_rows(inputs)?;
        let tape = self.run(params, inputs, rows, true);
        let nl = self.sizes.len() - 1;
        Ok(tape.pre[..nl - 1].iter().flatten().map(|&z| z > 0.0).collect())
    }
}

/// Mean squared error over all outputs of a batch, scaled by rows only:
/// `(1/rows) * sum (y - t)^2`.
pub fn squared_error<'a>(targets: &'a [f64], rows: usize) -> impl FnMut(&[f64], &mut [f64]) -> f64 + 'a {
    move |out, grad| {
        let scale = 1.0 / rows as f64;
        let mut total = 0.0;
        for ((g, &y), &t) in grad.iter_mut().zip(out).zip(targets) {
            let e = y - t;
            total += e * e;
            *g = 2.0 * e * scale;
        }
        total * scale
    }
}
