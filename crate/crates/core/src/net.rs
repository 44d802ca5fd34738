//! The shared-weight convolutional embedding model.
//!
//! Every branch of the Siamese computation (anchor, positive, negative) runs
//! through one [`EmbeddingNet`]; a batch is simply a list of images pushed
//! through the same parameters.
//!
//! Layer rules: valid-padding stride-1 convolution followed by ReLU and a
//! 2×2 stride-2 max-pool (floor), then fully connected layers. Pixels enter
//! as `value / 255` in channel-major layout.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::dataset::{Image, InputShape};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Derivative at `z`; ReLU passes no gradient at or below zero.
    fn slope(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcSpec {
    pub out_dim: usize,
    pub activation: Activation,
}

/// Conv+pool stages followed by fully connected layers. The last fully
/// connected layer is linear and its width is the embedding dimension.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetArchitecture {
    pub conv_layers: Vec<ConvSpec>,
    pub fc_layers: Vec<FcSpec>,
    pub embedding_dim: usize,
}

impl Default for NetArchitecture {
    /// conv(8, 3×3) → pool → conv(16, 3×3) → pool → fc(32, linear).
    fn default() -> Self {
        NetArchitecture {
            conv_layers: vec![
                ConvSpec {
                    out_channels: 8,
                    kernel: 3,
                    activation: Activation::Relu,
                },
                ConvSpec {
                    out_channels: 16,
                    kernel: 3,
                    activation: Activation::Relu,
                },
            ],
            fc_layers: vec![FcSpec {
                out_dim: 32,
                activation: Activation::Linear,
            }],
            embedding_dim: 32,
        }
    }
}

/// Shape bookkeeping for one conv stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_channels: usize,
    pub kernel: usize,
    /// Convolution output (pre-pool) spatial size.
    pub conv_h: usize,
    pub conv_w: usize,
    /// After the 2×2 pool.
    pub pool_h: usize,
    pub pool_w: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcShape {
    pub in_dim: usize,
    pub out_dim: usize,
}

/// Every layer shape implied by an architecture and an input shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapePlan {
    pub conv: Vec<ConvShape>,
    pub fc: Vec<FcShape>,
}

impl NetArchitecture {
    pub fn plan(&self, input: InputShape) -> Result<ShapePlan> {
        let last = self.fc_layers.last().ok_or_else(|| {
            Error::Architecture("at least one fully connected layer is required".into())
        })?;
        if last.out_dim != self.embedding_dim {
            return Err(Error::Architecture(format!(
                "final layer width {} differs from embedding_dim {}",
                last.out_dim, self.embedding_dim
            )));
        }
        if last.activation != Activation::Linear {
            return Err(Error::Architecture("final layer must be linear".into()));
        }
        if input.is_empty() {
            return Err(Error::Architecture("empty input shape".into()));
        }
        let (mut c, mut h, mut w) = (input.channels, input.height, input.width);
        let mut conv = Vec::with_capacity(self.conv_layers.len());
        for (i, spec) in self.conv_layers.iter().enumerate() {
            if spec.activation != Activation::Relu {
                return Err(Error::Architecture(format!("conv layer {i} must use relu")));
            }
            if spec.kernel == 0 || spec.out_channels == 0 {
                return Err(Error::Architecture(format!(
                    "conv layer {i} has a zero size"
                )));
            }
            if spec.kernel > h || spec.kernel > w {
                return Err(Error::Architecture(format!(
                    "spatial size underflow at conv layer {i}: kernel {} on {h}x{w}",
                    spec.kernel
                )));
            }
            let (ch, cw) = (h - spec.kernel + 1, w - spec.kernel + 1);
            let (ph, pw) = (ch / 2, cw / 2);
            if ph == 0 || pw == 0 {
                return Err(Error::Architecture(format!(
                    "spatial size underflow at pool after conv layer {i}: {ch}x{cw}"
                )));
            }
            conv.push(ConvShape {
                in_channels: c,
                in_h: h,
                in_w: w,
                out_channels: spec.out_channels,
                kernel: spec.kernel,
                conv_h: ch,
                conv_w: cw,
                pool_h: ph,
                pool_w: pw,
            });
            (c, h, w) = (spec.out_channels, ph, pw);
        }
        let mut dim = c * h * w;
        let mut fc = Vec::with_capacity(self.fc_layers.len());
        for (i, spec) in self.fc_layers.iter().enumerate() {
            if spec.out_dim == 0 {
                return Err(Error::Architecture(format!("fc layer {i} has zero width")));
            }
            fc.push(FcShape {
                in_dim: dim,
                out_dim: spec.out_dim,
            });
            dim = spec.out_dim;
        }
        Ok(ShapePlan { conv, fc })
    }
}

/// Weight and bias of one layer, stored flat. Conv weights are laid out
/// `[out][in][ky][kx]`, fully connected weights `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// One entry per layer, conv layers first.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
}

impl Parameters {
    fn zeros_like(&self) -> Self {
        Parameters {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weight: vec![0.0; l.weight.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn congruent(&self, other: &Parameters) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.len() == b.weight.len() && a.bias.len() == b.bias.len())
    }

    pub fn count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    /// All values, layer by layer, weights before biases.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.count());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Mutable access to the `index`-th value in [`Parameters::flatten`] order.
    pub fn value_mut(&mut self, mut index: usize) -> Option<&mut f64> {
        for l in &mut self.layers {
            if index < l.weight.len() {
                return l.weight.get_mut(index);
            }
            index -= l.weight.len();
            if index < l.bias.len() {
                return l.bias.get_mut(index);
            }
            index -= l.bias.len();
        }
        None
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight.iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
    }

    fn add_assign(&mut self, other: &Parameters) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight
                .iter_mut()
                .zip(&b.weight)
                .for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
    }
}

/// ∂L/∂θ, shape-congruent with the network it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet(pub Parameters);

impl GradientSet {
    pub fn is_zero(&self) -> bool {
        self.0.flatten().iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingNet {
    architecture: NetArchitecture,
    input_shape: InputShape,
    plan: ShapePlan,
    params: Parameters,
}

/// Everything backward needs from one image's forward pass.
#[derive(Debug, Clone)]
struct ImageCache {
    conv_inputs: Vec<Vec<f64>>,
    conv_pre: Vec<Vec<f64>>,
    /// Per pooled cell, the flat index of the winning conv output.
    pool_argmax: Vec<Vec<usize>>,
    fc_inputs: Vec<Vec<f64>>,
    fc_pre: Vec<Vec<f64>>,
}

/// Activations recorded by [`EmbeddingNet::forward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    images: Vec<ImageCache>,
    input_shape: InputShape,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.images.len()
    }
}

impl EmbeddingNet {
    /// He-initialized weights (zero-mean Gaussian, variance 2/fan_in) and
    /// zero biases, drawn layer by layer from a stream seeded with `seed`.
    pub fn init(architecture: NetArchitecture, input_shape: InputShape, seed: u64) -> Result<Self> {
        let plan = architecture.plan(input_shape)?;
        let mut rng = rng::seeded(seed);
        let mut layers = Vec::new();
        for s in &plan.conv {
            let fan_in = s.in_channels * s.kernel * s.kernel;
            let sigma = (2.0 / fan_in as f64).sqrt();
            let weight = (0..s.out_channels * fan_in)
                .map(|_| rng::gaussian(&mut rng, sigma))
                .collect();
            layers.push(LayerParams {
                weight,
                bias: vec![0.0; s.out_channels],
            });
        }
        for s in &plan.fc {
            let sigma = (2.0 / s.in_dim as f64).sqrt();
            let weight = (0..s.out_dim * s.in_dim)
                .map(|_| rng::gaussian(&mut rng, sigma))
                .collect();
            layers.push(LayerParams {
                weight,
                bias: vec![0.0; s.out_dim],
            });
        }
        Ok(EmbeddingNet {
            architecture,
            input_shape,
            plan,
            params: Parameters { layers },
        })
    }

    pub fn from_parameters(
        architecture: NetArchitecture,
        input_shape: InputShape,
        params: Parameters,
    ) -> Result<Self> {
        let plan = architecture.plan(input_shape)?;
        let expected = Self::expected_sizes(&plan);
        let actual: Vec<_> = params
            .layers
            .iter()
            .map(|l| (l.weight.len(), l.bias.len()))
            .collect();
        if expected != actual {
            return Err(Error::Shape(format!(
                "parameter sizes {actual:?} do not match architecture {expected:?}"
            )));
        }
        Ok(EmbeddingNet {
            architecture,
            input_shape,
            plan,
            params,
        })
    }

    fn expected_sizes(plan: &ShapePlan) -> Vec<(usize, usize)> {
        plan.conv
            .iter()
            .map(|s| {
                (
                    s.out_channels * s.in_channels * s.kernel * s.kernel,
                    s.out_channels,
                )
            })
            .chain(plan.fc.iter().map(|s| (s.out_dim * s.in_dim, s.out_dim)))
            .collect()
    }

    pub fn architecture(&self) -> &NetArchitecture {
        &self.architecture
    }

    pub fn input_shape(&self) -> InputShape {
        self.input_shape
    }

    pub fn plan(&self) -> &ShapePlan {
        &self.plan
    }

    pub fn parameters(&self) -> &Parameters {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut Parameters {
        &mut self.params
    }

    pub fn embedding_dim(&self) -> usize {
        self.architecture.embedding_dim
    }

    fn to_input(&self, img: &Image) -> Result<Vec<f64>> {
        if img.shape() != self.input_shape {
            return Err(Error::Shape(format!(
                "image {:?} is {}x{}x{}, network expects {}x{}x{}",
                img.id,
                img.width,
                img.height,
                img.channels,
                self.input_shape.width,
                self.input_shape.height,
                self.input_shape.channels
            )));
        }
        let (c, h, w) = (img.channels, img.height, img.width);
        let mut x = vec![0.0; c * h * w];
        for y in 0..h {
            for xx in 0..w {
                for ch in 0..c {
                    x[(ch * h + y) * w + xx] = img.pixels[(y * w + xx) * c + ch] as f64 / 255.0;
                }
            }
        }
        Ok(x)
    }

    /// Embeds every image of the batch with the same parameters. Row `i` of
    /// the result is the embedding of `batch[i]`.
    pub fn forward(&self, batch: &[&Image]) -> Result<(Matrix, ForwardCache)> {
        let d = self.embedding_dim();
        let mut out = Matrix::zeros(batch.len(), d);
        let mut images = Vec::with_capacity(batch.len());
        for (b, img) in batch.iter().enumerate() {
            let (emb, cache) = self.forward_one(self.to_input(img)?);
            out.row_mut(b).copy_from_slice(&emb);
            images.push(cache);
        }
        Ok((
            out,
            ForwardCache {
                images,
                input_shape: self.input_shape,
            },
        ))
    }

    /// Forward pass without keeping a cache.
    pub fn embed(&self, batch: &[&Image]) -> Result<Matrix> {
        self.forward(batch).map(|(m, _)| m)
    }

    fn forward_one(&self, mut x: Vec<f64>) -> (Vec<f64>, ImageCache) {
        let n_conv = self.plan.conv.len();
        let mut cache = ImageCache {
            conv_inputs: Vec::with_capacity(n_conv),
            conv_pre: Vec::with_capacity(n_conv),
            pool_argmax: Vec::with_capacity(n_conv),
            fc_inputs: Vec::with_capacity(self.plan.fc.len()),
            fc_pre: Vec::with_capacity(self.plan.fc.len()),
        };
        for (li, s) in self.plan.conv.iter().enumerate() {
            let p = &self.params.layers[li];
            let act = self.architecture.conv_layers[li].activation;
            let k = s.kernel;
            let mut pre = vec![0.0; s.out_channels * s.conv_h * s.conv_w];
            for o in 0..s.out_channels {
                for i in 0..s.conv_h {
                    for j in 0..s.conv_w {
                        let mut acc = p.bias[o];
                        for c in 0..s.in_channels {
                            for u in 0..k {
                                let wrow = ((o * s.in_channels + c) * k + u) * k;
                                let xrow = (c * s.in_h + i + u) * s.in_w + j;
                                for v in 0..k {
                                    acc += p.weight[wrow + v] * x[xrow + v];
                                }
                            }
                        }
                        pre[(o * s.conv_h + i) * s.conv_w + j] = acc;
                    }
                }
            }
            let activated: Vec<f64> = pre.iter().map(|&z| act.apply(z)).collect();
            let mut pooled = vec![0.0; s.out_channels * s.pool_h * s.pool_w];
            let mut argmax = vec![0; pooled.len()];
            for o in 0..s.out_channels {
                for i in 0..s.pool_h {
                    for j in 0..s.pool_w {
                        // first maximal element in row-major order wins ties
                        let mut best = (o * s.conv_h + 2 * i) * s.conv_w + 2 * j;
                        for (di, dj) in [(0, 1), (1, 0), (1, 1)] {
                            let idx = (o * s.conv_h + 2 * i + di) * s.conv_w + 2 * j + dj;
                            if activated[idx] > activated[best] {
                                best = idx;
                            }
                        }
                        let cell = (o * s.pool_h + i) * s.pool_w + j;
                        pooled[cell] = activated[best];
                        argmax[cell] = best;
                    }
                }
            }
            cache.conv_inputs.push(std::mem::replace(&mut x, pooled));
            cache.conv_pre.push(pre);
            cache.pool_argmax.push(argmax);
        }
        for (fi, s) in self.plan.fc.iter().enumerate() {
            let p = &self.params.layers[n_conv + fi];
            let act = self.architecture.fc_layers[fi].activation;
            let pre: Vec<f64> = (0..s.out_dim)
                .map(|o| {
                    let row = &p.weight[o * s.in_dim..(o + 1) * s.in_dim];
                    p.bias[o] + row.iter().zip(&x).map(|(w, v)| w * v).sum::<f64>()
                })
                .collect();
            let out = pre.iter().map(|&z| act.apply(z)).collect();
            cache.fc_inputs.push(std::mem::replace(&mut x, out));
            cache.fc_pre.push(pre);
        }
        (x, cache)
    }

    /// Exact gradient of `Σ_{b,d} upstream[b,d] · embedding[b,d]` with respect
    /// to every parameter, summed over the batch in batch order.
    pub fn backward(&self, cache: &ForwardCache, upstream: &Matrix) -> Result<GradientSet> {
        if cache.input_shape != self.input_shape {
            return Err(Error::Shape(
                "cache was produced by a different network".into(),
            ));
        }
        if upstream.rows() != cache.images.len() || upstream.cols() != self.embedding_dim() {
            return Err(Error::Shape(format!(
                "upstream is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                cache.images.len(),
                self.embedding_dim()
            )));
        }
        let mut total = self.params.zeros_like();
        for (b, img) in cache.images.iter().enumerate() {
            let g = self.backward_one(img, upstream.row(b));
            total.add_assign(&g);
        }
        Ok(GradientSet(total))
    }

    fn backward_one(&self, cache: &ImageCache, upstream: &[f64]) -> Parameters {
        let mut grads = self.params.zeros_like();
        let n_conv = self.plan.conv.len();
        let mut g = upstream.to_vec();
        for (fi, s) in self.plan.fc.iter().enumerate().rev() {
            let act = self.architecture.fc_layers[fi].activation;
            let p = &self.params.layers[n_conv + fi];
            let gl = &mut grads.layers[n_conv + fi];
            let input = &cache.fc_inputs[fi];
            let dz: Vec<f64> = g
                .iter()
                .zip(&cache.fc_pre[fi])
                .map(|(gv, &z)| gv * act.slope(z))
                .collect();
            let mut dx = vec![0.0; s.in_dim];
            for (o, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gl.bias[o] += d;
                let wrow = &p.weight[o * s.in_dim..(o + 1) * s.in_dim];
                let grow = &mut gl.weight[o * s.in_dim..(o + 1) * s.in_dim];
                for i in 0..s.in_dim {
                    grow[i] += d * input[i];
                    dx[i] += wrow[i] * d;
                }
            }
            g = dx;
        }
        for (li, s) in self.plan.conv.iter().enumerate().rev() {
            let act = self.architecture.conv_layers[li].activation;
            let p = &self.params.layers[li];
            let pre = &cache.conv_pre[li];
            // route pooled gradient back to the winning positions
            let mut dpre = vec![0.0; pre.len()];
            for (cell, &src) in cache.pool_argmax[li].iter().enumerate() {
                dpre[src] += g[cell] * act.slope(pre[src]);
            }
            let x = &cache.conv_inputs[li];
            let k = s.kernel;
            let need_dx = li > 0;
            let mut dx = if need_dx {
                vec![0.0; x.len()]
            } else {
                Vec::new()
            };
            let gl = &mut grads.layers[li];
            for o in 0..s.out_channels {
                for i in 0..s.conv_h {
                    for j in 0..s.conv_w {
                        let d = dpre[(o * s.conv_h + i) * s.conv_w + j];
                        if d == 0.0 {
                            continue;
                        }
                        gl.bias[o] += d;
                        for c in 0..s.in_channels {
                            for u in 0..k {
                                let wrow = ((o * s.in_channels + c) * k + u) * k;
                                let xrow = (c * s.in_h + i + u) * s.in_w + j;
                                for v in 0..k {
                                    gl.weight[wrow + v] += d * x[xrow + v];
                                    if need_dx {
                                        dx[xrow + v] += p.weight[wrow + v] * d;
                                    }
                                }
                            }
                        }
                    }
                }
            }
            g = dx;
        }
        grads
    }

    /// Plain SGD step `θ ← θ − η·g`.
    pub fn apply_gradients(&self, grads: &GradientSet, learning_rate: f64) -> Result<EmbeddingNet> {
        if !self.params.congruent(&grads.0) {
            return Err(Error::Shape(
                "gradient set does not match network parameters".into(),
            ));
        }
        let mut next = self.clone();
        for (p, g) in next.params.layers.iter_mut().zip(&grads.0.layers) {
            p.weight
                .iter_mut()
                .zip(&g.weight)
                .for_each(|(w, gw)| *w -= learning_rate * gw);
            p.bias
                .iter_mut()
                .zip(&g.bias)
                .for_each(|(b, gb)| *b -= learning_rate * gb);
        }
        Ok(next)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut parameters = Vec::new();
        for (s, p) in self.plan.conv.iter().zip(&self.params.layers) {
            let k = s.kernel;
            let weight = (0..s.out_channels)
                .map(|o| {
                    Value::from(
                        (0..s.in_channels)
                            .map(|c| {
                                (0..k)
                                    .map(|u| {
                                        let at = ((o * s.in_channels + c) * k + u) * k;
                                        p.weight[at..at + k].to_vec()
                                    })
                                    .collect::<Vec<_>>()
                            })
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            parameters.push(LayerCheckpoint {
                kind: LayerKind::Conv,
                weight: Value::Array(weight),
                bias: p.bias.clone(),
            });
        }
        let n_conv = self.plan.conv.len();
        for (s, p) in self.plan.fc.iter().zip(&self.params.layers[n_conv..]) {
            let weight = p.weight.chunks(s.in_dim).map(Value::from).collect();
            parameters.push(LayerCheckpoint {
                kind: LayerKind::Fc,
                weight: Value::Array(weight),
                bias: p.bias.clone(),
            });
        }
        Checkpoint {
            format_version: 1,
            architecture: self.architecture.clone(),
            input_shape: self.input_shape,
            parameters,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format_version != 1 {
            return Err(Error::Shape(format!(
                "unsupported checkpoint format_version {}",
                ck.format_version
            )));
        }
        let plan = ck.architecture.plan(ck.input_shape)?;
        let n_conv = plan.conv.len();
        if ck.parameters.len() != n_conv + plan.fc.len() {
            return Err(Error::Shape(format!(
                "checkpoint has {} layers, architecture needs {}",
                ck.parameters.len(),
                n_conv + plan.fc.len()
            )));
        }
        let mut layers = Vec::with_capacity(ck.parameters.len());
        for (i, l) in ck.parameters.iter().enumerate() {
            let (expect_kind, depth) = if i < n_conv {
                (LayerKind::Conv, 4)
            } else {
                (LayerKind::Fc, 2)
            };
            if l.kind != expect_kind {
                return Err(Error::Shape(format!("layer {i} should be {expect_kind:?}")));
            }
            let mut weight = Vec::new();
            flatten_nested(&l.weight, depth, &mut weight)
                .map_err(|m| Error::Shape(format!("layer {i} weight: {m}")))?;
            layers.push(LayerParams {
                weight,
                bias: l.bias.clone(),
            });
        }
        let net = Self::from_parameters(
            ck.architecture.clone(),
            ck.input_shape,
            Parameters { layers },
        )?;
        // nesting must be rectangular, not just the right total length
        if net.to_checkpoint().parameters != ck.parameters {
            return Err(Error::Shape(
                "checkpoint weight arrays are not rectangular".into(),
            ));
        }
        Ok(net)
    }
}

fn flatten_nested(v: &Value, depth: usize, out: &mut Vec<f64>) -> std::result::Result<(), String> {
    match (depth, v) {
        (0, Value::Number(n)) => {
            out.push(n.as_f64().ok_or("non-finite number")?);
            Ok(())
        }
        (0, _) => Err("expected a number".into()),
        (_, Value::Array(items)) => items
            .iter()
            .try_for_each(|i| flatten_nested(i, depth - 1, out)),
        _ => Err(format!("expected a nested array of depth {depth}")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCheckpoint {
    pub kind: LayerKind,
    /// `[out][in][ky][kx]` for conv layers, `[out][in]` for fully connected.
    pub weight: Value,
    pub bias: Vec<f64>,
}

/// Network checkpoint document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub architecture: NetArchitecture,
    pub input_shape: InputShape,
    pub parameters: Vec<LayerCheckpoint>,
}
