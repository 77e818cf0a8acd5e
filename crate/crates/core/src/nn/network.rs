use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

/// Fully connected layer, `y = x W^T + b` with `W` of shape out x in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let data = (0..input * output)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Dense {
            weights: Matrix::from_vec(output, input, data).expect("sized above"),
            bias: vec![0.0; output],
        }
    }

    pub fn input_width(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weights.rows()
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut y = Matrix::zeros(x.rows(), self.output_width());
        for i in 0..y.rows() {
            y.row_mut(i).copy_from_slice(&self.bias);
        }
        gemm(1.0, x, false, &self.weights, true, 1.0, &mut y)?;
        Ok(y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Layer {
    Dense(Dense),
    Relu,
    /// Inverted dropout: kept units are scaled by `1 / (1 - rate)`.
    Dropout {
        rate: f64,
    },
}

/// Element-wise addition of the output of layer `from` onto the output of
/// layer `to`. The sum is what layer `to` passes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipLink {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    input_width: usize,
    layers: Vec<Layer>,
    skips: Vec<SkipLink>,
    widths: Vec<usize>,
}

/// Per-layer dropout masks for one batch (`None` for non-dropout layers and
/// rate-0 dropout).
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Option<Matrix>>);

#[derive(Debug, Clone, Copy)]
pub enum Mode<'a> {
    Eval,
    Train(&'a DropoutMasks),
}

/// Intermediate outputs of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    train: bool,
    input: Matrix,
    outputs: Vec<Matrix>,
    masks: Vec<Option<Matrix>>,
}

impl ForwardCache {
    /// Output of the last evaluated layer.
    pub fn output(&self) -> &Matrix {
        self.outputs.last().unwrap_or(&self.input)
    }

    pub fn layer_output(&self, layer: usize) -> Option<&Matrix> {
        self.outputs.get(layer)
    }

    pub fn is_train(&self) -> bool {
        self.train
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Gradients for every dense layer, in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dense: Vec<DenseGrad>,
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            dense: net
                .dense_layers()
                .map(|d| DenseGrad {
                    weights: Matrix::zeros(d.output_width(), d.input_width()),
                    bias: vec![0.0; d.output_width()],
                })
                .collect(),
        }
    }

    /// Flat views in the same order as [`Network::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        self.dense
            .iter()
            .flat_map(|g| [g.weights.as_slice(), g.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.dense.iter_mut().zip(&other.dense) {
            for (x, y) in a
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(b.weights.as_slice())
            {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| *v == 0.0))
    }
}

pub struct Backward {
    pub grads: Gradients,
    /// Gradient with respect to the network input.
    pub input_grad: Matrix,
}

impl Network {
    pub fn new(input_width: usize) -> Self {
        Network {
            input_width,
            layers: Vec::new(),
            skips: Vec::new(),
            widths: Vec::new(),
        }
    }

    /// Builds and validates a network from its parts.
    pub fn from_parts(
        input_width: usize,
        layers: Vec<Layer>,
        skips: Vec<SkipLink>,
    ) -> Result<Self> {
        let mut net = Network::new(input_width);
        for layer in layers {
            net.push(layer)?;
        }
        for s in skips {
            net.add_skip(s.from, s.to)?;
        }
        Ok(net)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn output_width(&self) -> usize {
        self.widths.last().copied().unwrap_or(self.input_width)
    }

    /// Output width of each layer.
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// The final layer when it is dense. Its shape must not be changed.
    pub fn output_layer_mut(&mut self) -> Option<&mut Dense> {
        match self.layers.last_mut() {
            Some(Layer::Dense(d)) => Some(d),
            _ => None,
        }
    }

    pub fn skips(&self) -> &[SkipLink] {
        &self.skips
    }

    pub fn push(&mut self, layer: Layer) -> Result<usize> {
        let prev = self.output_width();
        let width = match &layer {
            Layer::Dense(d) => {
                if d.input_width() != prev {
                    return Err(Error::shape(format!(
                        "dense layer expects {} inputs, previous width is {prev}",
                        d.input_width()
                    )));
                }
                if d.bias.len() != d.output_width() {
                    return Err(Error::shape("bias length differs from output width"));
                }
                if !d.weights.is_finite() || d.bias.iter().any(|b| !b.is_finite()) {
                    return Err(Error::Argument("non-finite dense parameter".into()));
                }
                d.output_width()
            }
            Layer::Relu => prev,
            Layer::Dropout { rate } => {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::Argument(format!(
                        "dropout rate {rate} outside [0, 1)"
                    )));
                }
                prev
            }
        };
        self.layers.push(layer);
        self.widths.push(width);
        Ok(self.layers.len() - 1)
    }

    pub fn push_dense<R: Rng + ?Sized>(&mut self, output: usize, rng: &mut R) -> usize {
        let d = Dense::glorot(self.output_width(), output, rng);
        self.push(Layer::Dense(d))
            .expect("glorot layer matches previous width")
    }

    pub fn push_relu(&mut self) -> usize {
        self.push(Layer::Relu).expect("relu keeps width")
    }

    pub fn push_dropout(&mut self, rate: f64) -> Result<usize> {
        self.push(Layer::Dropout { rate })
    }

    pub fn add_skip(&mut self, from: usize, to: usize) -> Result<()> {
        if from >= to || to >= self.layers.len() {
            return Err(Error::shape(format!(
                "skip {from} -> {to} must go forward between existing layers"
            )));
        }
        if self.widths[from] != self.widths[to] {
            return Err(Error::shape(format!(
                "skip {from} -> {to} joins widths {} and {}",
                self.widths[from], self.widths[to]
            )));
        }
        self.skips.push(SkipLink { from, to });
        Ok(())
    }

    pub fn dense_layers(&self) -> impl Iterator<Item = &Dense> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Dense(d) => Some(d),
            _ => None,
        })
    }

    pub fn param_count(&self) -> usize {
        self.dense_layers()
            .map(|d| d.weights.as_slice().len() + d.bias.len())
            .sum()
    }

    /// Weights then bias of each dense layer, in layer order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.dense_layers()
            .flat_map(|d| [d.weights.as_slice(), d.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::Dense(d) = l {
                out.push(d.weights.as_mut_slice());
                out.push(d.bias.as_mut_slice());
            }
        }
        out
    }

    /// Labels matching [`Network::param_slices`].
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if matches!(l, Layer::Dense(_)) {
                out.push(format!("layer{i}.weights"));
                out.push(format!("layer{i}.bias"));
            }
        }
        out
    }

    pub fn sample_masks<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> DropoutMasks {
        DropoutMasks(
            self.layers
                .iter()
                .zip(&self.widths)
                .map(|(l, &w)| match l {
                    Layer::Dropout { rate } if *rate > 0.0 => {
                        let keep = 1.0 / (1.0 - rate);
                        let data = (0..rows * w)
                            .map(|_| {
                                if rng.random::<f64>() < *rate {
                                    0.0
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        Some(Matrix::from_vec(rows, w, data).expect("sized above"))
                    }
                    _ => None,
                })
                .collect(),
        )
    }

    pub fn forward(&self, x: &Matrix, mode: Mode<'_>) -> Result<ForwardCache> {
        self.forward_prefix(x, mode, self.layers.len())
    }

    /// Evaluates the first `n_layers` layers only.
    pub fn forward_prefix(
        &self,
        x: &Matrix,
        mode: Mode<'_>,
        n_layers: usize,
    ) -> Result<ForwardCache> {
        if x.cols() != self.input_width {
            return Err(Error::shape(format!(
                "network expects {} input columns, got {}",
                self.input_width,
                x.cols()
            )));
        }
        if n_layers > self.layers.len() {
            return Err(Error::shape("prefix longer than the network"));
        }
        let masks = match mode {
            Mode::Eval => vec![None; self.layers.len()],
            Mode::Train(m) => {
                if m.0.len() != self.layers.len() {
                    return Err(Error::shape("dropout masks do not match the network"));
                }
                for mask in m.0.iter().flatten() {
                    if mask.rows() != x.rows() {
                        return Err(Error::shape("dropout mask batch size differs from input"));
                    }
                }
                m.0.clone()
            }
        };
        let mut outputs: Vec<Matrix> = Vec::with_capacity(n_layers);
        for i in 0..n_layers {
            let input = if i == 0 { x } else { &outputs[i - 1] };
            let mut out = match &self.layers[i] {
                Layer::Dense(d) => d.forward(input)?,
                Layer::Relu => {
                    let mut o = input.clone();
                    o.map_inplace(|v| v.max(0.0));
                    o
                }
                Layer::Dropout { .. } => {
                    let mut o = input.clone();
                    if let Some(mask) = &masks[i] {
                        for (v, m) in o.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                            *v *= m;
                        }
                    }
                    o
                }
            };
            for s in self.skips.iter().filter(|s| s.to == i) {
                out.add_assign(&outputs[s.from])?;
            }
            outputs.push(out);
        }
        Ok(ForwardCache {
            train: matches!(mode, Mode::Train(_)),
            input: x.clone(),
            outputs,
            masks,
        })
    }

    /// Eval-mode output without keeping intermediates.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.predict_prefix(x, self.layers.len())
    }

    pub fn predict_prefix(&self, x: &Matrix, n_layers: usize) -> Result<Matrix> {
        if self.skips.is_empty() {
            if x.cols() != self.input_width {
                return Err(Error::shape(format!(
                    "network expects {} input columns, got {}",
                    self.input_width,
                    x.cols()
                )));
            }
            let mut cur = x.clone();
            for layer in &self.layers[..n_layers.min(self.layers.len())] {
                match layer {
                    Layer::Dense(d) => cur = d.forward(&cur)?,
                    Layer::Relu => cur.map_inplace(|v| v.max(0.0)),
                    Layer::Dropout { .. } => {}
                }
            }
            return Ok(cur);
        }
        let cache = self.forward_prefix(x, Mode::Eval, n_layers)?;
        Ok(cache.output().clone())
    }

    /// Reverse-mode gradients.
    ///
    /// `grad_output` is the loss gradient with respect to the last evaluated
    /// layer; `taps` inject additional gradients at intermediate layer outputs
    /// (for heads attached to an inner layer).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_output: Option<&Matrix>,
        taps: &[(usize, &Matrix)],
    ) -> Result<Backward> {
        if !cache.train {
            return Err(Error::Usage(
                "backward needs a forward pass run in train mode".into(),
            ));
        }
        let n = cache.outputs.len();
        if n == 0 || cache.input.cols() != self.input_width || n > self.layers.len() {
            return Err(Error::Usage(
                "forward cache does not belong to this network".into(),
            ));
        }
        for (i, out) in cache.outputs.iter().enumerate() {
            if out.cols() != self.widths[i] {
                return Err(Error::Usage(
                    "forward cache does not belong to this network".into(),
                ));
            }
        }
        let mut acc: Vec<Option<Matrix>> = vec![None; n];
        let add = |acc: &mut Vec<Option<Matrix>>, i: usize, g: &Matrix| -> Result<()> {
            match &mut acc[i] {
                Some(a) => a.add_assign(g),
                slot @ None => {
                    if g.shape() != cache.outputs[i].shape() {
                        return Err(Error::shape(format!(
                            "gradient {:?} for layer {i} output {:?}",
                            g.shape(),
                            cache.outputs[i].shape()
                        )));
                    }
                    *slot = Some(g.clone());
                    Ok(())
                }
            }
        };
        if let Some(g) = grad_output {
            add(&mut acc, n - 1, g)?;
        }
        for &(i, g) in taps {
            if i >= n {
                return Err(Error::shape(format!(
                    "tap at layer {i} beyond evaluated prefix"
                )));
            }
            add(&mut acc, i, g)?;
        }

        let mut grads = Gradients::zeros_like(self);
        let dense_slot: Vec<Option<usize>> = {
            let mut k = 0;
            self.layers
                .iter()
                .map(|l| {
                    matches!(l, Layer::Dense(_)).then(|| {
                        k += 1;
                        k - 1
                    })
                })
                .collect()
        };
        let mut input_grad = Matrix::zeros(cache.input.rows(), cache.input.cols());
        for i in (0..n).rev() {
            let Some(g) = acc[i].take() else { continue };
            for s in self.skips.iter().filter(|s| s.to == i) {
                add(&mut acc, s.from, &g)?;
            }
            let input = if i == 0 {
                &cache.input
            } else {
                &cache.outputs[i - 1]
            };
            let grad_in = match &self.layers[i] {
                Layer::Dense(d) => {
                    let slot = &mut grads.dense[dense_slot[i].expect("dense layer")];
                    gemm(1.0, &g, true, input, false, 0.0, &mut slot.weights)?;
                    for r in 0..g.rows() {
                        for (b, v) in slot.bias.iter_mut().zip(g.row(r)) {
                            *b += v;
                        }
                    }
                    let mut gi = Matrix::zeros(g.rows(), d.input_width());
                    gemm(1.0, &g, false, &d.weights, false, 0.0, &mut gi)?;
                    gi
                }
                Layer::Relu => {
                    let mut gi = g;
                    for (v, x) in gi.as_mut_slice().iter_mut().zip(input.as_slice()) {
                        if *x <= 0.0 {
                            *v = 0.0;
                        }
                    }
                    gi
                }
                Layer::Dropout { .. } => {
                    let mut gi = g;
                    if let Some(mask) = &cache.masks[i] {
                        for (v, m) in gi.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                            *v *= m;
                        }
                    }
                    gi
                }
            };
            if i == 0 {
                input_grad = grad_in;
            } else {
                add(&mut acc, i - 1, &grad_in)?;
            }
        }
        Ok(Backward { grads, input_grad })
    }
}
