//! Deterministic MLP encoders/decoders, Lipschitz bounds, optimizers and
//! the binary checkpoint format.
//!
//! Layer `l` maps `h ↦ W_l h + b_l` with `W_l` stored `out × in`. The
//! activation is applied between layers (not after the last one) and the
//! head is applied to the final affine output.
//!
//! Checkpoint layout, all little-endian:
//!
//! ```text
//! u32 n_sizes, u32 sizes[n_sizes], u32 activation_id, u32 head_id,
//! then per layer: f64 W[out][in] (row-major), f64 b[out]
//! ```

use std::io::{Read, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diff::{Tape, Var};
use crate::error::{OtError, Result};
use crate::measures::PointCloud;
use crate::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn id(self) -> u32 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Tanh),
            2 => Ok(Activation::Sigmoid),
            _ => Err(OtError::invalid(format!("unknown activation id {id}"))),
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        }
    }

    fn apply_var(self, v: Var<'_>) -> Var<'_> {
        match self {
            Activation::Relu => v.relu(),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => v.sigmoid(),
        }
    }
}

/// Output constraint applied after the last affine layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Linear,
    /// Rows projected onto the unit sphere.
    L2Normalize,
    /// Rows mapped onto the probability simplex.
    Softmax,
}

impl Head {
    pub fn id(self) -> u32 {
        match self {
            Head::Linear => 0,
            Head::L2Normalize => 1,
            Head::Softmax => 2,
        }
    }

    pub fn from_id(id: u32) -> Result<Self> {
        match id {
            0 => Ok(Head::Linear),
            1 => Ok(Head::L2Normalize),
            2 => Ok(Head::Softmax),
            _ => Err(OtError::invalid(format!("unknown head id {id}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub weight: Matrix,
    /// `1 × out`
    pub bias: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    activation: Activation,
    head: Head,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. `sizes` lists every width,
    /// input first.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        activation: Activation,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(OtError::invalid(format!(
                "need at least two positive layer sizes, got {sizes:?}"
            )));
        }
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                Layer {
                    weight: Matrix::from_fn(fan_out, fan_in, |_, _| {
                        rng.random_range(-limit..=limit)
                    }),
                    bias: Matrix::zeros(1, fan_out),
                }
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            head,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, activation: Activation, head: Head) -> Result<Self> {
        if layers.is_empty() {
            return Err(OtError::invalid("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.nrows()) {
                return Err(OtError::invalid(format!(
                    "layer {i}: bias must be 1x{}",
                    l.weight.nrows()
                )));
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(OtError::invalid(format!(
                    "layer {i} expects {} inputs but layer {} produces {}",
                    l.weight.ncols(),
                    i - 1,
                    layers[i - 1].weight.nrows()
                )));
            }
        }
        Ok(Self {
            layers,
            activation,
            head,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    /// Layer widths, input first.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.nrows()))
            .collect()
    }

    /// Parameters in layer order: `W_1, b_1, W_2, b_2, ...`.
    pub fn params(&self) -> Vec<Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.clone(), l.bias.clone()])
            .collect()
    }

    pub fn param_count(&self) -> usize {
        2 * self.layers.len()
    }

    pub fn set_params(&mut self, params: &[Matrix]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(OtError::invalid(format!(
                "expected {} parameter blocks, got {}",
                self.param_count(),
                params.len()
            )));
        }
        for (l, pair) in self.layers.iter().zip(params.chunks(2)) {
            if pair[0].shape() != l.weight.shape() || pair[1].shape() != l.bias.shape() {
                return Err(OtError::invalid(
                    "parameter shapes do not match the network",
                ));
            }
        }
        for (l, pair) in self.layers.iter_mut().zip(params.chunks(2)) {
            l.weight.copy_from(&pair[0]);
            l.bias.copy_from(&pair[1]);
        }
        Ok(())
    }

    pub fn forward(&self, batch: &PointCloud) -> Result<PointCloud> {
        if batch.dim() != self.input_dim() {
            return Err(OtError::invalid(format!(
                "network expects dimension {}, batch has {}",
                self.input_dim(),
                batch.dim()
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = batch.matrix().clone();
        for (i, l) in self.layers.iter().enumerate() {
            h = &h * l.weight.transpose();
            for mut row in h.row_iter_mut() {
                row += &l.bias;
            }
            if i < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        let tape = Tape::new();
        let out = match self.head {
            Head::Linear => h,
            Head::L2Normalize => tape.leaf(h).row_l2_normalize().value(),
            Head::Softmax => tape.leaf(h).row_softmax().value(),
        };
        PointCloud::new(out)
    }

    /// Records the forward pass with `params` (as laid out by [`Mlp::params`]).
    pub fn forward_var<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        if params.len() != self.param_count() {
            return Err(OtError::invalid(
                "parameter count does not match the network",
            ));
        }
        if x.shape().1 != self.input_dim() {
            return Err(OtError::invalid(format!(
                "network expects dimension {}, batch has {}",
                self.input_dim(),
                x.shape().1
            )));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, pair) in params.chunks(2).enumerate() {
            h = h.matmul(pair[0].t()).add_row(pair[1]);
            if i < last {
                h = self.activation.apply_var(h);
            }
        }
        Ok(match self.head {
            Head::Linear => h,
            Head::L2Normalize => h.row_l2_normalize(),
            Head::Softmax => h.row_softmax(),
        })
    }

    /// Product of per-layer operator norms; an upper bound on the Lipschitz
    /// constant of the linear-head network for 1-Lipschitz activations.
    pub fn lipschitz_upper_bound(&self, p: NormKind) -> f64 {
        self.layers
            .iter()
            .map(|l| operator_norm(&l.weight, p))
            .product()
    }

    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        let sizes = self.sizes();
        w.write_all(&(sizes.len() as u32).to_le_bytes())?;
        for s in &sizes {
            w.write_all(&(*s as u32).to_le_bytes())?;
        }
        w.write_all(&self.activation.id().to_le_bytes())?;
        w.write_all(&self.head.id().to_le_bytes())?;
        for l in &self.layers {
            for i in 0..l.weight.nrows() {
                for j in 0..l.weight.ncols() {
                    w.write_all(&l.weight[(i, j)].to_le_bytes())?;
                }
            }
            for v in l.bias.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        fn u32_le<R: Read>(r: &mut R) -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        }
        fn f64_le<R: Read>(r: &mut R) -> Result<f64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            Ok(f64::from_le_bytes(b))
        }
        let n = u32_le(&mut r)? as usize;
        if !(2..=1024).contains(&n) {
            return Err(OtError::invalid(format!(
                "implausible layer count {n} in checkpoint"
            )));
        }
        let sizes = (0..n)
            .map(|_| u32_le(&mut r).map(|v| v as usize))
            .collect::<Result<Vec<_>>>()?;
        let activation = Activation::from_id(u32_le(&mut r)?)?;
        let head = Head::from_id(u32_le(&mut r)?)?;
        let mut layers = Vec::with_capacity(n - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let mut weight = Matrix::zeros(fan_out, fan_in);
            for i in 0..fan_out {
                for j in 0..fan_in {
                    weight[(i, j)] = f64_le(&mut r)?;
                }
            }
            let mut bias = Matrix::zeros(1, fan_out);
            for j in 0..fan_out {
                bias[(0, j)] = f64_le(&mut r)?;
            }
            layers.push(Layer { weight, bias });
        }
        Self::from_layers(layers, activation, head)
    }
}

/// Supported operator norms.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormKind {
    L1,
    L2,
    LInf,
}

impl NormKind {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(NormKind::L1)
        } else if p == 2.0 {
            Ok(NormKind::L2)
        } else if p == f64::INFINITY {
            Ok(NormKind::LInf)
        } else {
            Err(OtError::invalid(format!(
                "operator norms are supported for p in {{1, 2, inf}}, got {p}"
            )))
        }
    }

    /// Vector norm matching the operator norm.
    pub fn vector_norm(self, v: &[f64]) -> f64 {
        match self {
            NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
            NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormKind::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }
}

/// Induced norm of `x ↦ A x`.
pub fn operator_norm(a: &Matrix, p: NormKind) -> f64 {
    match p {
        NormKind::L1 => a
            .column_iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::LInf => a
            .row_iter()
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::L2 => spectral_norm(a, 1e-8),
    }
}

/// Largest singular value by power iteration on `AᵀA`, stopped when the
/// estimate changes by less than `rel_tol` relative.
pub fn spectral_norm(a: &Matrix, rel_tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    // deterministic start with a component along every axis
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64 / n as f64);
    v /= v.norm();
    let mut sigma2 = 0.0;
    for _ in 0..10_000 {
        let w = &ata * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - sigma2).abs() <= rel_tol * next.abs() {
            sigma2 = next;
            break;
        }
        sigma2 = next;
    }
    // Rayleigh quotient of the final iterate
    let w = &ata * &v;
    sigma2.max(v.dot(&w)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Adam (with bias correction) or plain SGD over a list of parameter blocks.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn adam(lr: f64, params: &[Matrix]) -> Self {
        Self::new(OptimizerKind::Adam, lr, params)
    }

    pub fn sgd(lr: f64, params: &[Matrix]) -> Self {
        Self::new(OptimizerKind::Sgd, lr, params)
    }

    pub fn new(kind: OptimizerKind, lr: f64, params: &[Matrix]) -> Self {
        let zeros = |p: &Matrix| Matrix::zeros(p.nrows(), p.ncols());
        let (m, v) = match kind {
            OptimizerKind::Adam => (
                params.iter().map(zeros).collect(),
                params.iter().map(zeros).collect(),
            ),
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
        };
        Self {
            kind,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m,
            v,
        }
    }

    /// One update in place.
    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) -> Result<()> {
        if params.len() != grads.len()
            || params
                .iter()
                .zip(grads)
                .any(|(p, g)| p.shape() != g.shape())
        {
            return Err(OtError::invalid("parameter and gradient shapes differ"));
        }
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    p.zip_apply(g, |p, g| *p -= self.lr * g);
                }
            }
            OptimizerKind::Adam => {
                if self.m.len() != params.len()
                    || self
                        .m
                        .iter()
                        .zip(params.iter())
                        .any(|(m, p)| m.shape() != p.shape())
                {
                    return Err(OtError::invalid(
                        "optimizer state does not match parameter shapes",
                    ));
                }
                let t = self.step as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
                for ((p, g), (m, v)) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(self.m.iter_mut().zip(self.v.iter_mut()))
                {
                    m.zip_apply(g, |m, g| *m = b1 * *m + (1.0 - b1) * g);
                    v.zip_apply(g, |v, g| *v = b2 * *v + (1.0 - b2) * g * g);
                    for k in 0..p.len() {
                        let mhat = m[k] / c1;
                        let vhat = v[k] / c2;
                        p[k] -= lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Free-function form of [`OptimizerState::step`] for Adam states.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [Matrix],
    grads: &[Matrix],
) -> Result<()> {
    state.step(params, grads)
}
