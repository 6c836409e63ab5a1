//! Stacked LSTM with a linear head on the last hidden state.
//!
//! Gate blocks in every `w_ih`, `w_hh` and `bias` tensor are ordered
//! input, forget, cell, output:
//!
//! ```text
//! z_t = W_ih x_t + W_hh h_{t-1} + b
//! i = σ(z_i)  f = σ(z_f)  g = tanh(z_g)  o = σ(z_o)
//! c_t = f ⊙ c_{t-1} + i ⊙ g
//! h_t = o ⊙ tanh(c_t)
//! ```
//!
//! Between stacked layers an inverted-dropout mask (one draw per unit per
//! time step) is applied to the lower layer's output in training mode only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForecastError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmShape {
    pub input_size: usize,
    pub hidden_size: usize,
    pub num_layers: usize,
}

impl LstmShape {
    pub fn layer_input(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_size
        } else {
            self.hidden_size
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `4h × input`, row-major.
    pub w_ih: Vec<f64>,
    /// `4h × h`, row-major.
    pub w_hh: Vec<f64>,
    /// `4h`.
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub shape: LstmShape,
    pub dropout: f64,
    pub layers: Vec<LayerParams>,
    /// `h`.
    pub head_w: Vec<f64>,
    /// `1`.
    pub head_b: Vec<f64>,
    #[serde(skip)]
    generation: u64,
}

/// Named view of one parameter tensor.
#[derive(Debug)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

impl LstmParams {
    pub fn zeros(shape: LstmShape, dropout: f64) -> Self {
        let h = shape.hidden_size;
        let layers = (0..shape.num_layers)
            .map(|l| LayerParams {
                w_ih: vec![0.0; 4 * h * shape.layer_input(l)],
                w_hh: vec![0.0; 4 * h * h],
                bias: vec![0.0; 4 * h],
            })
            .collect();
        Self {
            shape,
            dropout,
            layers,
            head_w: vec![0.0; h],
            head_b: vec![0.0],
            generation: 0,
        }
    }

    /// Uniform(±1/√h) weights, forget-gate bias 1, other biases 0.
    pub fn init(shape: LstmShape, dropout: f64, seed: u64) -> Self {
        let mut p = Self::zeros(shape, dropout);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = 1.0 / (shape.hidden_size as f64).sqrt();
        let h = shape.hidden_size;
        for layer in &mut p.layers {
            for w in layer.w_ih.iter_mut().chain(layer.w_hh.iter_mut()) {
                *w = rng.gen_range(-k..k);
            }
            layer.bias[h..2 * h].fill(1.0);
        }
        for w in &mut p.head_w {
            *w = rng.gen_range(-k..k);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.shape, self.dropout)
    }

    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let h = self.shape.hidden_size;
        let mut out = Vec::with_capacity(3 * self.layers.len() + 2);
        for (l, layer) in self.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("layer{l}.w_ih"),
                shape: vec![4 * h, self.shape.layer_input(l)],
                data: &layer.w_ih,
            });
            out.push(TensorRef {
                name: format!("layer{l}.w_hh"),
                shape: vec![4 * h, h],
                data: &layer.w_hh,
            });
            out.push(TensorRef {
                name: format!("layer{l}.bias"),
                shape: vec![4 * h],
                data: &layer.bias,
            });
        }
        out.push(TensorRef {
            name: "head.w".into(),
            shape: vec![h],
            data: &self.head_w,
        });
        out.push(TensorRef {
            name: "head.b".into(),
            shape: vec![1],
            data: &self.head_b,
        });
        out
    }

    /// Mutable slices in the same order as [`tensors`](Self::tensors). Marks
    /// any outstanding forward caches as stale.
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for layer in &mut self.layers {
            out.push(&mut layer.w_ih);
            out.push(&mut layer.w_hh);
            out.push(&mut layer.bias);
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &LstmParams, scale: f64) {
        let src: Vec<Vec<f64>> = other.tensors().iter().map(|t| t.data.to_vec()).collect();
        for (dst, s) in self.tensors_mut().into_iter().zip(src) {
            for (d, v) in dst.iter_mut().zip(s) {
                *d += scale * v;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// Rebuilds parameters from flat tensors in [`tensors`](Self::tensors)
    /// order.
    pub fn from_flat(shape: LstmShape, dropout: f64, flat: &[f64]) -> Result<Self, ForecastError> {
        let mut p = Self::zeros(shape, dropout);
        let expected = p.num_params();
        if flat.len() != expected {
            return Err(ForecastError::Shape(format!(
                "expected {expected} parameters, got {}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in p.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(p)
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.tensors()
            .iter()
            .flat_map(|t| t.data.iter().copied())
            .collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `out += M v` for a row-major `rows × cols` matrix.
fn matvec_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (row, o) in m.chunks_exact(cols).zip(out.iter_mut()) {
        let mut s = 0.0;
        for (a, b) in row.iter().zip(v) {
            s += a * b;
        }
        *o += s;
    }
}

/// `out += Mᵀ v`.
fn matvec_t_add(m: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (row, vi) in m.chunks_exact(cols).zip(v) {
        if *vi == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(row) {
            *o += a * vi;
        }
    }
}

/// `M += a bᵀ`.
fn outer_add(m: &mut [f64], a: &[f64], b: &[f64]) {
    let cols = b.len();
    for (row, ai) in m.chunks_exact_mut(cols).zip(a) {
        if *ai == 0.0 {
            continue;
        }
        for (x, bj) in row.iter_mut().zip(b) {
            *x += ai * bj;
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// `T × in`, the (dropped-out) inputs seen by the layer.
    inputs: Vec<f64>,
    /// `(T + 1) × h`, row 0 is the zero initial state.
    h: Vec<f64>,
    c: Vec<f64>,
    /// `T × 4h` post-activation gates.
    gates: Vec<f64>,
    /// `T × h`.
    tanh_c: Vec<f64>,
}

/// Activations retained from a forward pass for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    steps: usize,
    layers: Vec<LayerCache>,
    /// Dropout masks on the outputs of layers `0..L-1`, each `T × h`.
    masks: Vec<Vec<f64>>,
    pub prediction: f64,
    generation: u64,
    pub train_mode: bool,
}

fn dropout_masks(params: &LstmParams, steps: usize, train_mode: bool, seed: u64) -> Vec<Vec<f64>> {
    let h = params.shape.hidden_size;
    let n = params.shape.num_layers.saturating_sub(1);
    let p = params.dropout;
    if !train_mode || p <= 0.0 {
        return vec![vec![1.0; steps * h]; n];
    }
    let keep = 1.0 / (1.0 - p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..steps * h)
                .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
                .collect()
        })
        .collect()
}

const GATE_NAMES: [&str; 4] = ["input", "forget", "cell", "output"];

/// Runs the network over one window of `steps` feature rows (flattened,
/// `steps × input_size`).
pub fn forward(
    params: &LstmParams,
    window: &[f64],
    train_mode: bool,
    dropout_seed: u64,
) -> Result<ForwardCache, ForecastError> {
    let shape = params.shape;
    let h = shape.hidden_size;
    if shape.input_size == 0 || !window.len().is_multiple_of(shape.input_size) || window.is_empty()
    {
        return Err(ForecastError::Shape(format!(
            "window of {} values does not match input size {}",
            window.len(),
            shape.input_size
        )));
    }
    let steps = window.len() / shape.input_size;
    let masks = dropout_masks(params, steps, train_mode, dropout_seed);
    let mut layers: Vec<LayerCache> = Vec::with_capacity(shape.num_layers);
    let mut z = vec![0.0; 4 * h];
    for (l, lp) in params.layers.iter().enumerate() {
        let in_size = shape.layer_input(l);
        let inputs: Vec<f64> = if l == 0 {
            window.to_vec()
        } else {
            let below = &layers[l - 1];
            below.h[h..]
                .iter()
                .zip(&masks[l - 1])
                .map(|(v, m)| v * m)
                .collect()
        };
        let mut cache = LayerCache {
            inputs,
            h: vec![0.0; (steps + 1) * h],
            c: vec![0.0; (steps + 1) * h],
            gates: vec![0.0; steps * 4 * h],
            tanh_c: vec![0.0; steps * h],
        };
        for t in 0..steps {
            z.copy_from_slice(&lp.bias);
            matvec_add(
                &lp.w_ih,
                &cache.inputs[t * in_size..(t + 1) * in_size],
                &mut z,
            );
            matvec_add(&lp.w_hh, &cache.h[t * h..(t + 1) * h], &mut z);
            if let Some(k) = z.iter().position(|v| !v.is_finite()) {
                return Err(ForecastError::NonFinite {
                    gate: GATE_NAMES[k / h],
                    layer: l,
                    step: t,
                });
            }
            let gates = &mut cache.gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                gates[k] = sigmoid(z[k]);
                gates[h + k] = sigmoid(z[h + k]);
                gates[2 * h + k] = z[2 * h + k].tanh();
                gates[3 * h + k] = sigmoid(z[3 * h + k]);
            }
            for k in 0..h {
                let c_prev = cache.c[t * h + k];
                let c = gates[h + k] * c_prev + gates[k] * gates[2 * h + k];
                let tc = c.tanh();
                cache.c[(t + 1) * h + k] = c;
                cache.tanh_c[t * h + k] = tc;
                cache.h[(t + 1) * h + k] = gates[3 * h + k] * tc;
            }
        }
        layers.push(cache);
    }
    let top = layers
        .last()
        .ok_or_else(|| ForecastError::Shape("no layers".into()))?;
    let last = &top.h[steps * h..];
    let prediction = params.head_b[0]
        + params
            .head_w
            .iter()
            .zip(last)
            .map(|(a, b)| a * b)
            .sum::<f64>();
    if !prediction.is_finite() {
        return Err(ForecastError::NonFinite {
            gate: "head",
            layer: shape.num_layers,
            step: steps,
        });
    }
    Ok(ForwardCache {
        steps,
        layers,
        masks,
        prediction,
        generation: params.generation,
        train_mode,
    })
}

/// Prediction only, evaluation mode.
pub fn predict(params: &LstmParams, window: &[f64]) -> Result<f64, ForecastError> {
    forward(params, window, false, 0).map(|c| c.prediction)
}

/// Backpropagation through time for the squared error
/// `(prediction - target)^2`. Returns the loss and the gradient of every
/// parameter tensor.
pub fn backward(
    params: &LstmParams,
    cache: &ForwardCache,
    target: f64,
) -> Result<(f64, LstmParams), ForecastError> {
    if cache.generation != params.generation || cache.layers.len() != params.layers.len() {
        return Err(ForecastError::StaleCache);
    }
    let shape = params.shape;
    let h = shape.hidden_size;
    let steps = cache.steps;
    let err = cache.prediction - target;
    let loss = err * err;
    let dy = 2.0 * err;
    let mut grads = params.zeros_like();

    let top = &cache.layers[shape.num_layers - 1];
    let h_last = &top.h[steps * h..];
    for (g, v) in grads.head_w.iter_mut().zip(h_last) {
        *g = dy * v;
    }
    grads.head_b[0] = dy;

    // Gradient w.r.t. each layer's output sequence, T × h.
    let mut dh_out = vec![0.0; steps * h];
    for (d, w) in dh_out[(steps - 1) * h..].iter_mut().zip(&params.head_w) {
        *d = dy * w;
    }

    let mut dz = vec![0.0; 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for l in (0..shape.num_layers).rev() {
        let lp = &params.layers[l];
        let lc = &cache.layers[l];
        let in_size = shape.layer_input(l);
        let mut dx = vec![0.0; steps * in_size];
        dh_next.fill(0.0);
        dc_next.fill(0.0);
        let gl = &mut grads.layers[l];
        for t in (0..steps).rev() {
            let gates = &lc.gates[t * 4 * h..(t + 1) * 4 * h];
            for k in 0..h {
                let i = gates[k];
                let f = gates[h + k];
                let g = gates[2 * h + k];
                let o = gates[3 * h + k];
                let tc = lc.tanh_c[t * h + k];
                let c_prev = lc.c[t * h + k];
                let dh = dh_out[t * h + k] + dh_next[k];
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let x_t = &lc.inputs[t * in_size..(t + 1) * in_size];
            let h_prev = &lc.h[t * h..(t + 1) * h];
            outer_add(&mut gl.w_ih, &dz, x_t);
            outer_add(&mut gl.w_hh, &dz, h_prev);
            for (b, d) in gl.bias.iter_mut().zip(&dz) {
                *b += d;
            }
            dh_next.fill(0.0);
            matvec_t_add(&lp.w_hh, &dz, &mut dh_next);
            matvec_t_add(&lp.w_ih, &dz, &mut dx[t * in_size..(t + 1) * in_size]);
        }
        if l > 0 {
            let mask = &cache.masks[l - 1];
            dh_out = dx.iter().zip(mask).map(|(d, m)| d * m).collect();
        }
    }
    Ok((loss, grads))
}
