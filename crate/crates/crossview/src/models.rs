//! View models: an MLP head over precomputed image features and a two-layer
//! text CNN over concatenated word vectors, each ending in a binary-embedding
//! (DBE) layer, plus a bias-free linear classifier per view.
//!
//! Parameters live in the owning `ViewModel`'s `ParamSet` under stable dotted
//! names ("proj.h0.w", "proj.dbe.gamma", "clf.w", ...), so checkpoints and
//! update rules address them uniformly. Initialization draws from the caller's
//! RNG in declaration order, which pins determinism to the seed.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{
    activation, activation_grad, batchnorm_infer, batchnorm_train, conv1d, conv1d_grad, linear,
    linear_grad, uniform_init, Activation, ActivationGrad, BatchNormGrad, BnState, Conv1dGrad,
    LinearGrad, ParamSet,
};
use crate::retrieval::BitMatrix;
use crate::tensor::Tensor;

/// linear -> batchnorm -> ReLU, the hidden block used by both views.
#[derive(Debug, Clone)]
struct Block {
    prefix: String,
    pub bn: BnState,
}

#[derive(Debug, Clone)]
struct BlockTrace {
    lin: LinearGrad,
    bn: BatchNormGrad,
    relu: ActivationGrad,
}

impl Block {
    fn init(
        prefix: &str,
        input: usize,
        width: usize,
        params: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        params.insert(&format!("{prefix}.w"), uniform_init(vec![input, width], rng))?;
        params.insert(&format!("{prefix}.gamma"), Tensor::filled(vec![width], 1.0))?;
        params.insert(&format!("{prefix}.beta"), Tensor::zeros(vec![width]))?;
        Ok(Self { prefix: prefix.to_string(), bn: BnState::new(width) })
    }

    fn forward_train(&mut self, x: &Tensor, params: &ParamSet) -> Result<(Tensor, BlockTrace)> {
        let (h, lin) = linear_grad(x, params.value(&format!("{}.w", self.prefix)))?;
        let (h, bn) = batchnorm_train(
            &h,
            params.value(&format!("{}.gamma", self.prefix)),
            params.value(&format!("{}.beta", self.prefix)),
            &mut self.bn,
        )?;
        let (y, relu) = activation_grad(&h, Activation::Relu);
        Ok((y, BlockTrace { lin, bn, relu }))
    }

    fn forward_infer(&self, x: &Tensor, params: &ParamSet) -> Result<Tensor> {
        let h = linear(x, params.value(&format!("{}.w", self.prefix)))?;
        let h = batchnorm_infer(
            &h,
            params.value(&format!("{}.gamma", self.prefix)),
            params.value(&format!("{}.beta", self.prefix)),
            &self.bn,
        )?;
        Ok(activation(&h, Activation::Relu))
    }

    /// Accumulates parameter gradients and returns dL/dx.
    fn backward(&self, trace: &BlockTrace, dy: &Tensor, params: &mut ParamSet) -> Result<Tensor> {
        let dh = trace.relu.backward(dy)?;
        let (dh, dgamma, dbeta) = trace.bn.backward(&dh)?;
        let (dx, dw) = trace.lin.backward(&dh)?;
        params.accumulate(&format!("{}.gamma", self.prefix), &dgamma, 1.0)?;
        params.accumulate(&format!("{}.beta", self.prefix), &dbeta, 1.0)?;
        params.accumulate(&format!("{}.w", self.prefix), &dw, 1.0)?;
        Ok(dx)
    }
}

/// Binary-embedding head: linear -> batchnorm -> ReLU -> tanh.
///
/// ReLU clips to [0, inf) and tanh squashes to [0, 1), so outputs are
/// threshold-ready without a quantization penalty term.
///
/// tanh(x) rounds to exactly 1.0 in f64 once x exceeds ~19; outputs clamp to
/// one ULP below 1 to keep the strict upper bound. The true derivative there
/// is below 1e-31, so gradients are unaffected.
const DBE_CEILING: f64 = 1.0 - f64::EPSILON;
#[derive(Debug, Clone)]
pub struct DbeLayer {
    prefix: String,
    pub bn: BnState,
    code_bits: usize,
}

#[derive(Debug, Clone)]
pub struct DbeTrace {
    lin: LinearGrad,
    bn: BatchNormGrad,
    relu: ActivationGrad,
    tanh: ActivationGrad,
}

impl DbeLayer {
    fn init(
        prefix: &str,
        input: usize,
        code_bits: usize,
        params: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        params.insert(&format!("{prefix}.w"), uniform_init(vec![input, code_bits], rng))?;
        params.insert(&format!("{prefix}.gamma"), Tensor::filled(vec![code_bits], 1.0))?;
        params.insert(&format!("{prefix}.beta"), Tensor::zeros(vec![code_bits]))?;
        Ok(Self { prefix: prefix.to_string(), bn: BnState::new(code_bits), code_bits })
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    pub fn forward_train(&mut self, x: &Tensor, params: &ParamSet) -> Result<(Tensor, DbeTrace)> {
        let (h, lin) = linear_grad(x, params.value(&format!("{}.w", self.prefix)))?;
        let (h, bn) = batchnorm_train(
            &h,
            params.value(&format!("{}.gamma", self.prefix)),
            params.value(&format!("{}.beta", self.prefix)),
            &mut self.bn,
        )?;
        let (h, relu) = activation_grad(&h, Activation::Relu);
        let (z, tanh) = activation_grad(&h, Activation::Tanh);
        Ok((z.map(|v| v.min(DBE_CEILING)), DbeTrace { lin, bn, relu, tanh }))
    }

    pub fn forward_infer(&self, x: &Tensor, params: &ParamSet) -> Result<Tensor> {
        let h = linear(x, params.value(&format!("{}.w", self.prefix)))?;
        let h = batchnorm_infer(
            &h,
            params.value(&format!("{}.gamma", self.prefix)),
            params.value(&format!("{}.beta", self.prefix)),
            &self.bn,
        )?;
        Ok(activation(&activation(&h, Activation::Relu), Activation::Tanh).map(|v| v.min(DBE_CEILING)))
    }

    /// Accumulates parameter gradients and returns dL/dx.
    pub fn backward(&self, trace: &DbeTrace, dz: &Tensor, params: &mut ParamSet) -> Result<Tensor> {
        let dh = trace.tanh.backward(dz)?;
        let dh = trace.relu.backward(&dh)?;
        let (dh, dgamma, dbeta) = trace.bn.backward(&dh)?;
        let (dx, dw) = trace.lin.backward(&dh)?;
        params.accumulate(&format!("{}.gamma", self.prefix), &dgamma, 1.0)?;
        params.accumulate(&format!("{}.beta", self.prefix), &dbeta, 1.0)?;
        params.accumulate(&format!("{}.w", self.prefix), &dw, 1.0)?;
        Ok(dx)
    }
}

/// Hidden MLP blocks over precomputed image features, then the DBE head.
#[derive(Debug, Clone)]
pub struct ImageProjection {
    feature_dim: usize,
    blocks: Vec<Block>,
    dbe: DbeLayer,
}

#[derive(Debug, Clone)]
pub struct ImageTrace {
    blocks: Vec<BlockTrace>,
    dbe: DbeTrace,
}

impl ImageProjection {
    pub fn init(
        feature_dim: usize,
        hidden: &[usize],
        code_bits: usize,
        params: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if feature_dim == 0 || code_bits == 0 || hidden.contains(&0) {
            return Err(Error::Config("image projection dimensions must be positive".into()));
        }
        let mut blocks = Vec::with_capacity(hidden.len());
        let mut width = feature_dim;
        for (i, &next) in hidden.iter().enumerate() {
            blocks.push(Block::init(&format!("proj.h{i}"), width, next, params, rng)?);
            width = next;
        }
        let dbe = DbeLayer::init("proj.dbe", width, code_bits, params, rng)?;
        Ok(Self { feature_dim, blocks, dbe })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.feature_dim {
            return Err(Error::Dimension {
                op: "image_forward",
                detail: format!("{}-wide features, model expects {}", x.cols(), self.feature_dim),
            });
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Tensor, params: &ParamSet) -> Result<(Tensor, ImageTrace)> {
        self.check_input(x)?;
        let mut h = x.clone();
        let mut traces = Vec::with_capacity(self.blocks.len());
        for block in &mut self.blocks {
            let (next, trace) = block.forward_train(&h, params)?;
            h = next;
            traces.push(trace);
        }
        let (z, dbe) = self.dbe.forward_train(&h, params)?;
        Ok((z, ImageTrace { blocks: traces, dbe }))
    }

    pub fn forward_infer(&self, x: &Tensor, params: &ParamSet) -> Result<Tensor> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            h = block.forward_infer(&h, params)?;
        }
        self.dbe.forward_infer(&h, params)
    }

    pub fn backward(&self, trace: &ImageTrace, dz: &Tensor, params: &mut ParamSet) -> Result<()> {
        let mut d = self.dbe.backward(&trace.dbe, dz, params)?;
        for (block, t) in self.blocks.iter().zip(&trace.blocks).rev() {
            d = block.backward(t, &d, params)?;
        }
        Ok(())
    }
}

/// Two-layer text CNN over concatenated word vectors, then FC and DBE.
///
/// conv1 scans word slots (kernel width = stride = word-vector length d);
/// conv2 kernels span conv1's entire response map, producing one value per
/// kernel. The FC stage is a linear+BN+ReLU block (its activation is a
/// declared choice; only the layer's existence is given).
#[derive(Debug, Clone)]
pub struct TextProjection {
    glove_dim: usize,
    max_words: usize,
    conv1_kernels: usize,
    conv2_kernels: usize,
    fc: Block,
    dbe: DbeLayer,
}

#[derive(Debug, Clone)]
pub struct TextTrace {
    conv1: Conv1dGrad,
    relu1: ActivationGrad,
    conv2: Conv1dGrad,
    relu2: ActivationGrad,
    fc: BlockTrace,
    dbe: DbeTrace,
}

impl TextProjection {
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        glove_dim: usize,
        max_words: usize,
        conv1_kernels: usize,
        conv2_kernels: usize,
        fc_width: usize,
        code_bits: usize,
        params: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if [glove_dim, max_words, conv1_kernels, conv2_kernels, fc_width, code_bits]
            .contains(&0)
        {
            return Err(Error::Config("text projection dimensions must be positive".into()));
        }
        params.insert("proj.conv1.k", uniform_init(vec![conv1_kernels, glove_dim], rng))?;
        params.insert(
            "proj.conv2.k",
            uniform_init(vec![conv2_kernels, conv1_kernels * max_words], rng),
        )?;
        let fc = Block::init("proj.fc", conv2_kernels, fc_width, params, rng)?;
        let dbe = DbeLayer::init("proj.dbe", fc_width, code_bits, params, rng)?;
        Ok(Self { glove_dim, max_words, conv1_kernels, conv2_kernels, fc, dbe })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.cols() != self.glove_dim * self.max_words {
            return Err(Error::Dimension {
                op: "text_forward",
                detail: format!(
                    "{}-wide text vectors, model expects {} ({} x {} words)",
                    x.cols(),
                    self.glove_dim * self.max_words,
                    self.glove_dim,
                    self.max_words
                ),
            });
        }
        Ok(())
    }

    pub fn forward_train(&mut self, x: &Tensor, params: &ParamSet) -> Result<(Tensor, TextTrace)> {
        self.check_input(x)?;
        let b = x.rows();
        let span = self.conv1_kernels * self.max_words;
        let (h, conv1) = conv1d_grad(x, params.value("proj.conv1.k"), self.glove_dim)?;
        let (h, relu1) = activation_grad(&h, Activation::Relu);
        let h = h.reshape(vec![b, span])?;
        // conv2 kernels are as wide as the whole response map: one output
        // position per kernel.
        let (h, conv2) = conv1d_grad(&h, params.value("proj.conv2.k"), span)?;
        let (h, relu2) = activation_grad(&h, Activation::Relu);
        let h = h.reshape(vec![b, self.conv2_kernels])?;
        let (h, fc) = self.fc.forward_train(&h, params)?;
        let (z, dbe) = self.dbe.forward_train(&h, params)?;
        Ok((z, TextTrace { conv1, relu1, conv2, relu2, fc, dbe }))
    }

    pub fn forward_infer(&self, x: &Tensor, params: &ParamSet) -> Result<Tensor> {
        self.check_input(x)?;
        let b = x.rows();
        let span = self.conv1_kernels * self.max_words;
        let h = conv1d(x, params.value("proj.conv1.k"), self.glove_dim)?;
        let h = activation(&h, Activation::Relu).reshape(vec![b, span])?;
        let h = conv1d(&h, params.value("proj.conv2.k"), span)?;
        let h = activation(&h, Activation::Relu).reshape(vec![b, self.conv2_kernels])?;
        let h = self.fc.forward_infer(&h, params)?;
        self.dbe.forward_infer(&h, params)
    }

    pub fn backward(&self, trace: &TextTrace, dz: &Tensor, params: &mut ParamSet) -> Result<()> {
        let b = dz.rows();
        let d = self.dbe.backward(&trace.dbe, dz, params)?;
        let d = self.fc.backward(&trace.fc, &d, params)?;
        let d = trace.relu2.backward(&d.reshape(vec![b, self.conv2_kernels, 1])?)?;
        let (d, dk2) = trace.conv2.backward(&d)?;
        params.accumulate("proj.conv2.k", &dk2, 1.0)?;
        let d = trace.relu1.backward(&d.reshape(vec![b, self.conv1_kernels, self.max_words])?)?;
        let (_, dk1) = trace.conv1.backward(&d)?;
        params.accumulate("proj.conv1.k", &dk1, 1.0)?;
        Ok(())
    }
}

/// Either view's projection, presenting one train/infer/backward surface.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Projection {
    Image(ImageProjection),
    Text(TextProjection),
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Trace {
    Image(ImageTrace),
    Text(TextTrace),
}

impl Projection {
    pub fn forward_train(&mut self, x: &Tensor, params: &ParamSet) -> Result<(Tensor, Trace)> {
        match self {
            Projection::Image(m) => {
                let (z, t) = m.forward_train(x, params)?;
                Ok((z, Trace::Image(t)))
            }
            Projection::Text(m) => {
                let (z, t) = m.forward_train(x, params)?;
                Ok((z, Trace::Text(t)))
            }
        }
    }

    pub fn forward_infer(&self, x: &Tensor, params: &ParamSet) -> Result<Tensor> {
        match self {
            Projection::Image(m) => m.forward_infer(x, params),
            Projection::Text(m) => m.forward_infer(x, params),
        }
    }

    pub fn backward(&self, trace: &Trace, dz: &Tensor, params: &mut ParamSet) -> Result<()> {
        match (self, trace) {
            (Projection::Image(m), Trace::Image(t)) => m.backward(t, dz, params),
            (Projection::Text(m), Trace::Text(t)) => m.backward(t, dz, params),
            _ => Err(Error::Contract("trace does not belong to this projection".into())),
        }
    }

    fn dbe(&self) -> &DbeLayer {
        match self {
            Projection::Image(m) => &m.dbe,
            Projection::Text(m) => &m.dbe,
        }
    }

    pub fn code_bits(&self) -> usize {
        self.dbe().code_bits()
    }

    /// Batch-norm states in a stable order, named for checkpointing.
    pub fn bn_states(&self) -> Vec<(String, &BnState)> {
        let mut out = Vec::new();
        match self {
            Projection::Image(m) => {
                for b in &m.blocks {
                    out.push((b.prefix.clone(), &b.bn));
                }
            }
            Projection::Text(m) => out.push((m.fc.prefix.clone(), &m.fc.bn)),
        }
        out.push((self.dbe().prefix.clone(), &self.dbe().bn));
        out
    }

    pub fn bn_states_mut(&mut self) -> Vec<(String, &mut BnState)> {
        let mut out = Vec::new();
        match self {
            Projection::Image(m) => {
                for b in &mut m.blocks {
                    out.push((b.prefix.clone(), &mut b.bn));
                }
                out.push((m.dbe.prefix.clone(), &mut m.dbe.bn));
            }
            Projection::Text(m) => {
                out.push((m.fc.prefix.clone(), &mut m.fc.bn));
                out.push((m.dbe.prefix.clone(), &mut m.dbe.bn));
            }
        }
        out
    }
}

/// Bias-free linear classifier over continuous codes; weights under "clf.w".
#[derive(Debug, Clone)]
pub struct Classifier {
    code_bits: usize,
    categories: usize,
}

impl Classifier {
    pub fn init(
        code_bits: usize,
        categories: usize,
        params: &mut ParamSet,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if code_bits == 0 || categories == 0 {
            return Err(Error::Config("classifier dimensions must be positive".into()));
        }
        params.insert("clf.w", uniform_init(vec![code_bits, categories], rng))?;
        Ok(Self { code_bits, categories })
    }

    pub fn categories(&self) -> usize {
        self.categories
    }

    pub fn code_bits(&self) -> usize {
        self.code_bits
    }

    /// logits = Z * W.
    pub fn classify(&self, z: &Tensor, params: &ParamSet) -> Result<Tensor> {
        linear(z, params.value("clf.w"))
    }

    pub fn classify_grad(&self, z: &Tensor, params: &ParamSet) -> Result<(Tensor, LinearGrad)> {
        linear_grad(z, params.value("clf.w"))
    }
}

/// Thresholds continuous codes at 0.5: bit = 1 iff z >= 0.5.
pub fn binarize(z: &Tensor) -> Result<BitMatrix> {
    if z.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Contract("codes to binarize must lie in [0, 1]".into()));
    }
    let mut bits = BitMatrix::new(z.rows(), z.cols());
    for r in 0..z.rows() {
        for (c, &v) in z.row(r).iter().enumerate() {
            bits.set(r, c, v >= 0.5);
        }
    }
    Ok(bits)
}

/// One view's projection plus classifier, sharing a parameter set.
#[derive(Debug, Clone)]
pub struct ViewModel {
    pub params: ParamSet,
    pub projection: Projection,
    pub classifier: Classifier,
}

impl ViewModel {
    pub fn new_image(
        feature_dim: usize,
        hidden: &[usize],
        code_bits: usize,
        categories: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut params = ParamSet::new();
        let projection =
            Projection::Image(ImageProjection::init(feature_dim, hidden, code_bits, &mut params, rng)?);
        let classifier = Classifier::init(code_bits, categories, &mut params, rng)?;
        Ok(Self { params, projection, classifier })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn new_text(
        glove_dim: usize,
        max_words: usize,
        conv1_kernels: usize,
        conv2_kernels: usize,
        fc_width: usize,
        code_bits: usize,
        categories: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let mut params = ParamSet::new();
        let projection = Projection::Text(TextProjection::init(
            glove_dim,
            max_words,
            conv1_kernels,
            conv2_kernels,
            fc_width,
            code_bits,
            &mut params,
            rng,
        )?);
        let classifier = Classifier::init(code_bits, categories, &mut params, rng)?;
        Ok(Self { params, projection, classifier })
    }

    pub fn code_bits(&self) -> usize {
        self.projection.code_bits()
    }

    /// Inference-mode continuous codes (requires populated BN statistics).
    pub fn encode(&self, x: &Tensor) -> Result<Tensor> {
        self.projection.forward_infer(x, &self.params)
    }

    /// Inference-mode binary codes.
    pub fn codes(&self, x: &Tensor) -> Result<BitMatrix> {
        binarize(&self.encode(x)?)
    }
}
