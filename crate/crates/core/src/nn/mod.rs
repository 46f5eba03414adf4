//! Small neural building blocks on top of candle.
//!
//! Parameter initialisation and dropout masks are drawn from a seeded
//! ChaCha stream owned by the caller, so runs are reproducible on CPU.

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointHeader, TensorEntry};

use candle_core::{DType, Device, Module, Tensor, Var, D};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const INIT_RANGE: f32 = 0.1;

/// Named trainable tensors, in creation order.
pub struct ParamStore {
    vars: Vec<(String, Var)>,
    rng: ChaCha8Rng,
    device: Device,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        ParamStore {
            vars: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            device: Device::Cpu,
        }
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    /// Weights uniform in (-0.1, 0.1).
    pub fn uniform(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let data: Vec<f32> = (0..n)
            .map(|_| self.rng.random_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        self.register(name, Tensor::from_vec(data, shape, &self.device)?)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        self.register(name, Tensor::zeros(shape, DType::F32, &self.device)?)
    }

    fn register(&mut self, name: &str, t: Tensor) -> Result<Tensor> {
        if self.vars.iter().any(|(n, _)| n == name) {
            return Err(Error::Contract(format!("parameter {name} registered twice")));
        }
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.vars.push((name.to_string(), var));
        Ok(out)
    }

    /// Linear layer with uniform weights `(out, in)` and zero bias.
    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Result<candle_nn::Linear> {
        let w = self.uniform(&format!("{name}.weight"), &[output, input])?;
        let b = self.zeros(&format!("{name}.bias"), &[output])?;
        Ok(candle_nn::Linear::new(w, Some(b)))
    }

    pub fn linear_no_bias(&mut self, name: &str, input: usize, output: usize) -> Result<candle_nn::Linear> {
        let w = self.uniform(&format!("{name}.weight"), &[output, input])?;
        Ok(candle_nn::Linear::new(w, None))
    }

    pub fn embedding(&mut self, name: &str, count: usize, dim: usize) -> Result<candle_nn::Embedding> {
        let w = self.uniform(&format!("{name}.weight"), &[count, dim])?;
        Ok(candle_nn::Embedding::new(w, dim))
    }

    pub fn lstm(&mut self, name: &str, input: usize, hidden: usize) -> Result<LstmCell> {
        Ok(LstmCell {
            ih: self.linear(&format!("{name}.ih"), input, 4 * hidden)?,
            hh: self.linear(&format!("{name}.hh"), hidden, 4 * hidden)?,
            hidden,
        })
    }

    pub fn vars(&self) -> Vec<Var> {
        self.vars.iter().map(|(_, v)| v.clone()).collect()
    }

    pub fn named(&self) -> &[(String, Var)] {
        &self.vars
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    /// Copies values into existing parameters; names and shapes must match exactly.
    pub fn assign(&self, tensors: &[(String, Tensor)]) -> Result<()> {
        if tensors.len() != self.vars.len() {
            return Err(Error::Input(format!(
                "checkpoint has {} tensors, model expects {}",
                tensors.len(),
                self.vars.len()
            )));
        }
        for (name, t) in tensors {
            let var = self
                .get(name)
                .ok_or_else(|| Error::Input(format!("unexpected tensor {name} in checkpoint")))?;
            if var.dims() != t.dims() {
                return Err(Error::Input(format!(
                    "tensor {name}: shape {:?} in checkpoint, model expects {:?}",
                    t.dims(),
                    var.dims()
                )));
            }
            var.set(t)?;
        }
        Ok(())
    }

    /// Detached copies of all parameters.
    pub fn snapshot(&self) -> Result<Vec<(String, Tensor)>> {
        self.vars
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.as_tensor().detach().copy()?)))
            .collect()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Single-layer LSTM cell; gate order i, f, g, o.
#[derive(Clone)]
pub struct LstmCell {
    ih: candle_nn::Linear,
    hh: candle_nn::Linear,
    hidden: usize,
}

impl LstmCell {
    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// One step on `x: (B, in)` with state `(h, c): (B, hidden)`.
    pub fn step(&self, x: &Tensor, h: &Tensor, c: &Tensor) -> Result<(Tensor, Tensor)> {
        let gates = (self.ih.forward(x)? + self.hh.forward(h)?)?;
        let chunks = gates.chunk(4, D::Minus1)?;
        let i = sigmoid(&chunks[0])?;
        let f = sigmoid(&chunks[1])?;
        let g = chunks[2].tanh()?;
        let o = sigmoid(&chunks[3])?;
        let c2 = ((f * c)? + (i * g)?)?;
        let h2 = (o * c2.tanh()?)?;
        Ok((h2, c2))
    }
}

/// Logistic function built from differentiable primitives.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok((x.neg()?.exp()? + 1.0)?.recip()?)
}

/// Inverted dropout; identity when `train` is false or `p == 0`.
pub fn dropout(x: &Tensor, p: f32, train: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !train || p <= 0.0 {
        return Ok(x.clone());
    }
    if p >= 1.0 {
        return Ok(x.zeros_like()?);
    }
    let keep = 1.0 - p;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.random::<f32>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
    Ok((x * mask)?)
}

/// Dropout in training mode (`Some(rng)`), identity otherwise.
pub fn maybe_dropout(x: &Tensor, p: f32, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    match rng {
        Some(r) => dropout(x, p, true, r),
        None => Ok(x.clone()),
    }
}

/// `m * new + (1 - m) * old` with `m: (B, 1)` in {0, 1}.
pub fn blend(mask: &Tensor, new: &Tensor, old: &Tensor) -> Result<Tensor> {
    let keep = mask.affine(-1.0, 1.0)?;
    Ok((new.broadcast_mul(mask)? + old.broadcast_mul(&keep)?)?)
}

/// Softmax over the last dim with masked entries (mask == 0) at exactly 0.
/// Every row needs at least one unmasked entry.
pub fn masked_softmax(logits: &Tensor, mask: &Tensor) -> Result<Tensor> {
    let neg = Tensor::full(f32::NEG_INFINITY, logits.shape(), logits.device())?;
    let keep = mask.ne(0.0f32)?;
    let masked = keep.where_cond(logits, &neg)?;
    Ok(candle_nn::ops::softmax(&masked, D::Minus1)?)
}

/// Rescales the last dim to unit L2 norm; zero vectors stay zero.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let norm = (x.sqr()?.sum_keepdim(D::Minus1)? + 1e-24)?.sqrt()?;
    Ok(x.broadcast_div(&norm)?)
}

/// `(B, T)` float mask with 1 for the first `len` positions of each row.
pub fn length_mask(lengths: &[usize], max_len: usize, device: &Device) -> Result<Tensor> {
    let data: Vec<f32> = lengths
        .iter()
        .flat_map(|&l| (0..max_len).map(move |t| if t < l { 1.0 } else { 0.0 }))
        .collect();
    Ok(Tensor::from_vec(data, (lengths.len(), max_len), device)?)
}

/// Row-major `(B, T)` u32 index tensor, right-padded with `pad`.
pub fn pad_indices(rows: &[Vec<usize>], pad: usize, device: &Device) -> Result<(Tensor, usize)> {
    let max_len = rows.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let data: Vec<u32> = rows
        .iter()
        .flat_map(|r| (0..max_len).map(move |t| r.get(t).copied().unwrap_or(pad) as u32))
        .collect();
    Ok((Tensor::from_vec(data, (rows.len(), max_len), device)?, max_len))
}

/// Euclidean norm of all gradients present in `grads`.
pub fn grad_norm(vars: &[Var], grads: &candle_core::backprop::GradStore) -> Result<f64> {
    let mut total = 0.0f64;
    for v in vars {
        if let Some(g) = grads.get(v) {
            total += f64::from(g.sqr()?.sum_all()?.to_scalar::<f32>()?);
        }
    }
    Ok(total.sqrt())
}

/// Scales every gradient so the global norm is at most `max_norm`.
pub fn clip_grad_norm(
    vars: &[Var],
    grads: &mut candle_core::backprop::GradStore,
    max_norm: f64,
) -> Result<f64> {
    let norm = grad_norm(vars, grads)?;
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for v in vars {
            if let Some(g) = grads.remove(v) {
                grads.insert(v, (g * scale)?);
            }
        }
    }
    Ok(norm)
}
