//! Layer forward/backward passes, the SGD update, and a finite-difference
//! gradient checker.
//!
//! Every layer comes in two flavors: a plain forward for inference and a
//! `*_grad` forward that additionally returns a context struct whose
//! `backward` maps upstream gradients to input/parameter gradients.

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Batch-normalization epsilon inside the variance square root.
pub const BN_EPS: f64 = 1e-5;
/// Weight on the old value when running statistics are updated.
pub const BN_MOMENTUM: f64 = 0.9;
/// Weights initialize uniformly in `[-INIT_RANGE, INIT_RANGE]`.
pub const INIT_RANGE: f64 = 0.05;

/// One named parameter tensor with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named parameters with paired same-shape gradient buffers.
///
/// Iteration order is registration order, which keeps checkpoints and
/// updates deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    /// Registers a parameter; its gradient buffer starts at zero.
    pub fn insert(&mut self, name: &str, value: Tensor) -> Result<()> {
        if self.entries.iter().any(|e| e.name == name) {
            return Err(Error::Contract(format!("duplicate parameter name {name:?}")));
        }
        let grad = Tensor::zeros(value.shape().to_vec());
        self.entries.push(ParamEntry { name: name.to_string(), value, grad });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamEntry> {
        self.entries.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|e| e.name == name).map(|e| &e.value)
    }

    /// Borrows a parameter that is known to exist. Panics on a name that was
    /// never registered: that is a wiring bug, not a runtime condition.
    pub fn value(&self, name: &str) -> &Tensor {
        self.get(name).unwrap_or_else(|| panic!("unknown parameter {name:?}"))
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.iter_mut().find(|e| e.name == name).map(|e| &mut e.value)
    }

    /// Adds `scale * contribution` into the gradient buffer of `name`.
    pub fn accumulate(&mut self, name: &str, contribution: &Tensor, scale: f64) -> Result<()> {
        let entry = self
            .entries
            .iter_mut()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::Contract(format!("unknown parameter {name:?}")))?;
        if entry.grad.shape() != contribution.shape() {
            return Err(Error::Dimension {
                op: "param::accumulate",
                detail: format!(
                    "{name}: gradient shape {:?} vs contribution {:?}",
                    entry.grad.shape(),
                    contribution.shape()
                ),
            });
        }
        for (g, c) in entry.grad.data_mut().iter_mut().zip(contribution.data()) {
            *g += scale * c;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for entry in &mut self.entries {
            entry.grad.data_mut().fill(0.0);
        }
    }

    // Scalar access by (entry, offset), used by the gradient checker.
    fn scalar(&self, entry: usize, offset: usize) -> f64 {
        self.entries[entry].value.data()[offset]
    }

    fn set_scalar(&mut self, entry: usize, offset: usize, v: f64) {
        self.entries[entry].value.data_mut()[offset] = v;
    }
}

/// Step-decayed learning rate: `base * factor^(t / every)`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LrSchedule {
    pub base_rate: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
}

impl LrSchedule {
    pub fn new(base_rate: f64, decay_factor: f64, decay_every: u64) -> Result<Self> {
        let s = Self { base_rate, decay_factor, decay_every };
        s.validate()?;
        Ok(s)
    }

    /// A rate that never decays.
    pub fn constant(base_rate: f64) -> Self {
        Self { base_rate, decay_factor: 1.0, decay_every: 1 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_rate.is_finite() && self.base_rate > 0.0) {
            return Err(Error::Config(format!("base rate must be positive, got {}", self.base_rate)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config("decay interval must be at least 1".into()));
        }
        Ok(())
    }

    pub fn rate(&self, iteration: u64) -> f64 {
        self.base_rate * self.decay_factor.powi((iteration / self.decay_every) as i32)
    }
}

/// Uniform initialization in `[-INIT_RANGE, INIT_RANGE]`.
pub fn uniform_init(shape: Vec<usize>, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE)).collect();
    Tensor::new(shape, data).expect("uniform samples are finite")
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`; never overflows for large `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn mat_mul(a: &Tensor, b: &Tensor) -> Tensor {
    let (p, q, r) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let arow = a.row(i);
        for (j, &av) in arow.iter().enumerate().take(q) {
            let brow = b.row(j);
            let orow = &mut out[i * r..(i + 1) * r];
            for k in 0..r {
                orow[k] += av * brow[k];
            }
        }
    }
    Tensor::new(vec![p, r], out).expect("matmul of finite inputs")
}

// a^T * b for a: [q x p], b: [q x r] -> [p x r]
fn mat_mul_at_b(a: &Tensor, b: &Tensor) -> Tensor {
    let (q, p, r) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0; p * r];
    for i in 0..q {
        let arow = a.row(i);
        let brow = b.row(i);
        for (j, &av) in arow.iter().enumerate().take(p) {
            let orow = &mut out[j * r..(j + 1) * r];
            for k in 0..r {
                orow[k] += av * brow[k];
            }
        }
    }
    Tensor::new(vec![p, r], out).expect("matmul of finite inputs")
}

// a * b^T for a: [p x q], b: [r x q] -> [p x r]
fn mat_mul_a_bt(a: &Tensor, b: &Tensor) -> Tensor {
    let (p, q, r) = (a.rows(), a.cols(), b.rows());
    let mut out = vec![0.0; p * r];
    for i in 0..p {
        let arow = a.row(i);
        for k in 0..r {
            let brow = b.row(k);
            let mut acc = 0.0;
            for j in 0..q {
                acc += arow[j] * brow[j];
            }
            out[i * r + k] = acc;
        }
    }
    Tensor::new(vec![p, r], out).expect("matmul of finite inputs")
}

/// Bias-free affine map `y = x * weights`. The shift lives in the batch-norm
/// beta that follows every linear layer here.
pub fn linear(x: &Tensor, weights: &Tensor) -> Result<Tensor> {
    if x.cols() != weights.rows() {
        return Err(Error::Dimension {
            op: "linear",
            detail: format!("input {:?} vs weights {:?}", x.shape(), weights.shape()),
        });
    }
    Ok(mat_mul(x, weights))
}

/// `linear` that also captures what `backward` needs.
pub fn linear_grad(x: &Tensor, weights: &Tensor) -> Result<(Tensor, LinearGrad)> {
    let y = linear(x, weights)?;
    Ok((y, LinearGrad { x: x.clone(), weights: weights.clone() }))
}

#[derive(Debug, Clone)]
pub struct LinearGrad {
    x: Tensor,
    weights: Tensor,
}

impl LinearGrad {
    /// Maps dL/dy to (dL/dx, dL/dweights).
    pub fn backward(&self, dy: &Tensor) -> Result<(Tensor, Tensor)> {
        if dy.rows() != self.x.rows() || dy.cols() != self.weights.cols() {
            return Err(Error::Dimension {
                op: "linear::backward",
                detail: format!("upstream {:?} for output {}x{}", dy.shape(), self.x.rows(), self.weights.cols()),
            });
        }
        let dx = mat_mul_a_bt(dy, &self.weights);
        let dw = mat_mul_at_b(&self.x, dy);
        Ok((dx, dw))
    }
}

/// Valid (no-padding) 1-D convolution of each row of `x` with every kernel.
///
/// Output shape is `[B, K, P]` with `P = (L - w)/stride + 1`; position `p`
/// reads the window starting at `p * stride`.
pub fn conv1d(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<Tensor> {
    let (out, _) = conv1d_raw(x, kernels, stride)?;
    Ok(out)
}

/// `conv1d` that also captures what `backward` needs.
pub fn conv1d_grad(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<(Tensor, Conv1dGrad)> {
    let (out, positions) = conv1d_raw(x, kernels, stride)?;
    Ok((out, Conv1dGrad { x: x.clone(), kernels: kernels.clone(), stride, positions }))
}

fn conv1d_raw(x: &Tensor, kernels: &Tensor, stride: usize) -> Result<(Tensor, usize)> {
    let (b, l) = (x.rows(), x.cols());
    let (k, w) = (kernels.rows(), kernels.cols());
    if stride == 0 {
        return Err(Error::Argument("stride must be at least 1".into()));
    }
    if w > l || w == 0 {
        return Err(Error::Dimension {
            op: "conv1d",
            detail: format!("kernel width {w} against signal length {l}"),
        });
    }
    let p = (l - w) / stride + 1;
    let mut out = vec![0.0; b * k * p];
    for bi in 0..b {
        let xrow = x.row(bi);
        for ki in 0..k {
            let ker = kernels.row(ki);
            let orow = &mut out[(bi * k + ki) * p..(bi * k + ki + 1) * p];
            for (pi, o) in orow.iter_mut().enumerate() {
                let window = &xrow[pi * stride..pi * stride + w];
                let mut acc = 0.0;
                for j in 0..w {
                    acc += window[j] * ker[j];
                }
                *o = acc;
            }
        }
    }
    Ok((Tensor::new(vec![b, k, p], out)?, p))
}

#[derive(Debug, Clone)]
pub struct Conv1dGrad {
    x: Tensor,
    kernels: Tensor,
    stride: usize,
    positions: usize,
}

impl Conv1dGrad {
    /// Maps dL/dout to (dL/dx, dL/dkernels).
    pub fn backward(&self, dy: &Tensor) -> Result<(Tensor, Tensor)> {
        let (b, l) = (self.x.rows(), self.x.cols());
        let (k, w) = (self.kernels.rows(), self.kernels.cols());
        let p = self.positions;
        if dy.shape() != [b, k, p] {
            return Err(Error::Dimension {
                op: "conv1d::backward",
                detail: format!("upstream {:?} for output [{b}, {k}, {p}]", dy.shape()),
            });
        }
        let mut dx = vec![0.0; b * l];
        let mut dker = vec![0.0; k * w];
        for bi in 0..b {
            let xrow = self.x.row(bi);
            let dxrow = &mut dx[bi * l..(bi + 1) * l];
            for ki in 0..k {
                let ker = self.kernels.row(ki);
                let dyrow = &dy.data()[(bi * k + ki) * p..(bi * k + ki + 1) * p];
                for (pi, &g) in dyrow.iter().enumerate() {
                    let start = pi * self.stride;
                    for j in 0..w {
                        dxrow[start + j] += g * ker[j];
                        dker[ki * w + j] += g * xrow[start + j];
                    }
                }
            }
        }
        Ok((Tensor::new(vec![b, l], dx)?, Tensor::new(vec![k, w], dker)?))
    }
}

/// Running statistics for one batch-norm layer.
///
/// The first training batch copies its statistics in verbatim; later batches
/// blend in with momentum `BN_MOMENTUM`. Inference before any training batch
/// is an error.
#[derive(Debug, Clone)]
pub struct BnState {
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub initialized: bool,
}

impl BnState {
    pub fn new(width: usize) -> Self {
        Self {
            running_mean: Tensor::zeros(vec![width]),
            running_var: Tensor::filled(vec![width], 1.0),
            initialized: false,
        }
    }

    pub fn width(&self) -> usize {
        self.running_mean.len()
    }
}

fn check_bn_shapes(op: &'static str, x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<usize> {
    let m = x.cols();
    if x.shape().len() != 2 || gamma.shape() != [m] || beta.shape() != [m] {
        return Err(Error::Dimension {
            op,
            detail: format!(
                "input {:?}, gamma {:?}, beta {:?}",
                x.shape(),
                gamma.shape(),
                beta.shape()
            ),
        });
    }
    Ok(m)
}

/// Batch normalization in training mode: normalizes by batch statistics,
/// updates `state`, and returns a backward context.
pub fn batchnorm_train(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    state: &mut BnState,
) -> Result<(Tensor, BatchNormGrad)> {
    let m = check_bn_shapes("batchnorm", x, gamma, beta)?;
    let b = x.rows();
    if b < 2 {
        return Err(Error::DegenerateBatch { rows: b });
    }
    let mut mean = vec![0.0; m];
    let mut var = vec![0.0; m];
    for bi in 0..b {
        for (c, &v) in x.row(bi).iter().enumerate() {
            mean[c] += v;
        }
    }
    for v in &mut mean {
        *v /= b as f64;
    }
    for bi in 0..b {
        for (c, &v) in x.row(bi).iter().enumerate() {
            let d = v - mean[c];
            var[c] += d * d;
        }
    }
    for v in &mut var {
        *v /= b as f64;
    }

    let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut xhat = vec![0.0; b * m];
    let mut out = vec![0.0; b * m];
    for bi in 0..b {
        for (c, &v) in x.row(bi).iter().enumerate() {
            let h = (v - mean[c]) * inv_std[c];
            xhat[bi * m + c] = h;
            out[bi * m + c] = h * gamma.data()[c] + beta.data()[c];
        }
    }

    if state.width() != m {
        return Err(Error::Dimension {
            op: "batchnorm",
            detail: format!("state width {} for {m} columns", state.width()),
        });
    }
    if state.initialized {
        for (r, &v) in state.running_mean.data_mut().iter_mut().zip(&mean) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
        for (r, &v) in state.running_var.data_mut().iter_mut().zip(&var) {
            *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v;
        }
    } else {
        state.running_mean.data_mut().copy_from_slice(&mean);
        state.running_var.data_mut().copy_from_slice(&var);
        state.initialized = true;
    }

    let ctx = BatchNormGrad {
        xhat: Tensor::new(vec![b, m], xhat)?,
        inv_std,
        gamma: gamma.clone(),
    };
    Ok((Tensor::new(vec![b, m], out)?, ctx))
}

/// Batch normalization in inference mode: uses stored running statistics.
pub fn batchnorm_infer(x: &Tensor, gamma: &Tensor, beta: &Tensor, state: &BnState) -> Result<Tensor> {
    let m = check_bn_shapes("batchnorm", x, gamma, beta)?;
    if !state.initialized {
        return Err(Error::UnpopulatedStats);
    }
    if state.width() != m {
        return Err(Error::Dimension {
            op: "batchnorm",
            detail: format!("state width {} for {m} columns", state.width()),
        });
    }
    let inv_std: Vec<f64> = state.running_var.data().iter().map(|&v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut out = vec![0.0; x.len()];
    for bi in 0..x.rows() {
        for (c, &v) in x.row(bi).iter().enumerate() {
            out[bi * m + c] =
                (v - state.running_mean.data()[c]) * inv_std[c] * gamma.data()[c] + beta.data()[c];
        }
    }
    Tensor::new(vec![x.rows(), m], out)
}

#[derive(Debug, Clone)]
pub struct BatchNormGrad {
    xhat: Tensor,
    inv_std: Vec<f64>,
    gamma: Tensor,
}

impl BatchNormGrad {
    /// Maps dL/dy to (dL/dx, dL/dgamma, dL/dbeta).
    ///
    /// dL/dx folds in the dependence of the batch mean and variance on every
    /// row: dx = inv_std/B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)).
    pub fn backward(&self, dy: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let (b, m) = (self.xhat.rows(), self.xhat.cols());
        if dy.shape() != [b, m] {
            return Err(Error::Dimension {
                op: "batchnorm::backward",
                detail: format!("upstream {:?} for output [{b}, {m}]", dy.shape()),
            });
        }
        let mut dgamma = vec![0.0; m];
        let mut dbeta = vec![0.0; m];
        let mut sum_dxhat = vec![0.0; m];
        let mut sum_dxhat_xhat = vec![0.0; m];
        let mut dxhat = vec![0.0; b * m];
        for bi in 0..b {
            for c in 0..m {
                let g = dy.at2(bi, c);
                let h = self.xhat.at2(bi, c);
                dgamma[c] += g * h;
                dbeta[c] += g;
                let dh = g * self.gamma.data()[c];
                dxhat[bi * m + c] = dh;
                sum_dxhat[c] += dh;
                sum_dxhat_xhat[c] += dh * h;
            }
        }
        let bn = b as f64;
        let mut dx = vec![0.0; b * m];
        for bi in 0..b {
            for c in 0..m {
                let h = self.xhat.at2(bi, c);
                dx[bi * m + c] = self.inv_std[c] / bn
                    * (bn * dxhat[bi * m + c] - sum_dxhat[c] - h * sum_dxhat_xhat[c]);
            }
        }
        Ok((
            Tensor::new(vec![b, m], dx)?,
            Tensor::new(vec![m], dgamma)?,
            Tensor::new(vec![m], dbeta)?,
        ))
    }
}

/// Elementwise nonlinearities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
        }
    }

    // Derivative expressed through the output value y = f(x).
    // relu uses f'(0) = 0, consistent with y = 0 there.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn activation(x: &Tensor, kind: Activation) -> Tensor {
    x.map(|v| kind.apply(v))
}

/// `activation` that also captures what `backward` needs.
pub fn activation_grad(x: &Tensor, kind: Activation) -> (Tensor, ActivationGrad) {
    let y = activation(x, kind);
    (y.clone(), ActivationGrad { y, kind })
}

#[derive(Debug, Clone)]
pub struct ActivationGrad {
    y: Tensor,
    kind: Activation,
}

impl ActivationGrad {
    /// Maps dL/dy to dL/dx.
    pub fn backward(&self, dy: &Tensor) -> Result<Tensor> {
        if dy.shape() != self.y.shape() {
            return Err(Error::Dimension {
                op: "activation::backward",
                detail: format!("upstream {:?} for output {:?}", dy.shape(), self.y.shape()),
            });
        }
        let mut dx = dy.clone();
        for (d, &y) in dx.data_mut().iter_mut().zip(self.y.data()) {
            *d *= self.kind.derivative_from_output(y);
        }
        Ok(dx)
    }
}

/// One gradient-descent update: `p <- p - rate(iteration) * scale * grad(p)`,
/// then zeroes every gradient.
///
/// Zero-valued steps are skipped so that `scale = 0` leaves parameters
/// bit-identical (subtracting a signed zero would rewrite -0.0 as +0.0).
pub fn sgd_step(params: &mut ParamSet, schedule: &LrSchedule, iteration: u64, scale: f64) -> Result<()> {
    let rate = schedule.rate(iteration);
    for entry in &params.entries {
        if !entry.grad.all_finite() {
            return Err(Error::NonFiniteGradient { name: entry.name.clone() });
        }
    }
    for entry in &mut params.entries {
        for (p, &g) in entry.value.data_mut().iter_mut().zip(entry.grad.data()) {
            let step = rate * scale * g;
            if step != 0.0 {
                *p -= step;
            }
        }
        entry.grad.data_mut().fill(0.0);
    }
    Ok(())
}

/// Compares the gradients already stored in `params` against central
/// differences of `loss_fn` and returns the worst relative error,
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-12)`.
///
/// The caller runs its backward pass first; `loss_fn` must recompute the
/// same scalar loss from scratch on every call.
pub fn grad_check<F>(params: &mut ParamSet, eps: f64, mut loss_fn: F) -> Result<f64>
where
    F: FnMut(&ParamSet) -> Result<f64>,
{
    let mut worst: f64 = 0.0;
    for entry in 0..params.len() {
        for offset in 0..params.entries[entry].value.len() {
            let original = params.scalar(entry, offset);
            params.set_scalar(entry, offset, original + eps);
            let plus = loss_fn(params)?;
            params.set_scalar(entry, offset, original - eps);
            let minus = loss_fn(params)?;
            params.set_scalar(entry, offset, original);
            let numeric = (plus - minus) / (2.0 * eps);
            let analytic = params.entries[entry].grad.data()[offset];
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}
