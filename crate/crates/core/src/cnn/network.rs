use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::scalar::{gemm, Scalar, View};
use crate::error::{Error, Result};

/// Shape of an activation tensor, stored `[len][bins][channels]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shape {
    /// Temporal axis, the only axis convolutions and pooling act on.
    pub len: usize,
    pub bins: usize,
    pub channels: usize,
}

impl Shape {
    pub fn size(&self) -> usize {
        self.len * self.bins * self.channels
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// `kernel × 1` convolution along time with `pad` zeros on both ends.
    Conv {
        kernel: usize,
        in_channels: usize,
        out_channels: usize,
        pad: usize,
    },
    Relu,
    /// Window 2, stride 2 along time; a trailing odd element is dropped.
    AvgPool,
    /// Swaps the temporal and bin axes.
    Transpose,
    /// Dense map from the whole input tensor to `outputs` values.
    FullyConnected {
        outputs: usize,
    },
    SoftMax,
}

impl LayerKind {
    pub fn code(&self) -> u8 {
        match self {
            LayerKind::Conv { .. } => 1,
            LayerKind::Relu => 2,
            LayerKind::AvgPool => 3,
            LayerKind::Transpose => 4,
            LayerKind::FullyConnected { .. } => 5,
            LayerKind::SoftMax => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Conv { .. } => "conv",
            LayerKind::Relu => "relu",
            LayerKind::AvgPool => "apool",
            LayerKind::Transpose => "transpose",
            LayerKind::FullyConnected { .. } => "fc",
            LayerKind::SoftMax => "softmax",
        }
    }
}

/// Parameters of one layer. Conv weights are `[kernel][in][out]`, FC
/// weights `[outputs][inputs]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub kind: LayerKind,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// How the last convolution's `len × bins × channels` output becomes a
/// per-bin feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureReduce {
    #[default]
    Mean,
    Max,
}

/// Temporal lengths of the standard network: the input, then every
/// convolution and pooling output.
pub const STANDARD_TRACE: [usize; 13] = [75, 75, 37, 37, 18, 18, 9, 9, 4, 4, 2, 1, 1];
pub const STANDARD_BINS: usize = 768;
pub const STANDARD_CHANNELS: usize = 64;

pub fn standard_layers() -> Vec<LayerKind> {
    let conv = |kernel, in_channels, pad| LayerKind::Conv {
        kernel,
        in_channels,
        out_channels: STANDARD_CHANNELS,
        pad,
    };
    let mut layers = Vec::new();
    for block in 0..5 {
        let cin = if block == 0 { 1 } else { STANDARD_CHANNELS };
        layers.extend([conv(3, cin, 1), LayerKind::Relu, LayerKind::AvgPool]);
    }
    layers.extend([
        conv(2, STANDARD_CHANNELS, 0),
        LayerKind::Relu,
        conv(1, STANDARD_CHANNELS, 0),
        LayerKind::Transpose,
        LayerKind::FullyConnected { outputs: 2 },
        LayerKind::SoftMax,
    ]);
    layers
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    input: Shape,
    layers: Vec<Layer<T>>,
    /// `shapes[i]` is the input of layer `i`; the last entry is the output.
    shapes: Vec<Shape>,
}

/// Activations of a forward pass; `acts[i]` is the input of layer `i`.
/// A convolution output that feeds a ReLU is rectified in place and its
/// slot left empty, since no gradient needs it.
pub struct Forward<T> {
    pub acts: Vec<Vec<T>>,
    /// Class probabilities computed in 64-bit.
    pub probs: Vec<f64>,
}

/// Gradients with the same layout as the layer parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub layers: Vec<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> Grads<T> {
    pub fn zeros_like(net: &Network<T>) -> Self {
        Grads {
            layers: net
                .layers
                .iter()
                .map(|l| (vec![T::ZERO; l.weights.len()], vec![T::ZERO; l.bias.len()]))
                .collect(),
        }
    }

    pub fn add(&mut self, other: &Grads<T>) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            w.iter_mut().zip(ow).for_each(|(a, b)| *a += *b);
            b.iter_mut().zip(ob).for_each(|(a, b)| *a += *b);
        }
    }

    pub fn scale(&mut self, s: T) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|v| *v *= s);
            b.iter_mut().for_each(|v| *v *= s);
        }
    }
}

fn output_shape(kind: &LayerKind, s: Shape) -> Result<Shape> {
    let bad = |msg: String| Err(Error::InvalidState(msg));
    match *kind {
        LayerKind::Conv {
            kernel,
            in_channels,
            out_channels,
            pad,
        } => {
            if in_channels != s.channels {
                return bad(format!(
                    "conv expects {in_channels} channels, input has {}",
                    s.channels
                ));
            }
            if kernel == 0 || out_channels == 0 || s.len + 2 * pad < kernel {
                return bad(format!(
                    "conv kernel {kernel} does not fit temporal length {}",
                    s.len
                ));
            }
            Ok(Shape {
                len: s.len + 2 * pad - kernel + 1,
                channels: out_channels,
                ..s
            })
        }
        LayerKind::Relu => Ok(s),
        LayerKind::AvgPool => {
            if s.len < 2 {
                return bad(format!("pooling needs temporal length >= 2, got {}", s.len));
            }
            Ok(Shape {
                len: s.len / 2,
                ..s
            })
        }
        LayerKind::Transpose => Ok(Shape {
            len: s.bins,
            bins: s.len,
            ..s
        }),
        LayerKind::FullyConnected { outputs } => {
            if outputs == 0 {
                return bad("fully connected layer needs outputs".into());
            }
            Ok(Shape {
                len: 1,
                bins: 1,
                channels: outputs,
            })
        }
        LayerKind::SoftMax => {
            if s.size() < 2 {
                return bad("softmax needs at least two inputs".into());
            }
            Ok(s)
        }
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with seeded random weights: He scaling for
    /// convolutions followed by a ReLU, fan-in scaling otherwise, zero biases.
    pub fn new(kinds: &[LayerKind], input_len: usize, bins: usize, seed: u64) -> Result<Self> {
        let mut net = Self::zeroed(kinds, input_len, bins)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..net.layers.len() {
            let fan_in = net.fan_in(i);
            if fan_in == 0 {
                continue;
            }
            let relu_next = matches!(kinds.get(i + 1), Some(LayerKind::Relu));
            let gain = if relu_next { 2.0 } else { 1.0 };
            let normal =
                Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("finite standard deviation");
            for w in &mut net.layers[i].weights {
                *w = T::from_f64(normal.sample(&mut rng));
            }
        }
        Ok(net)
    }

    /// All parameters zero. The layer list must end with a softmax.
    pub fn zeroed(kinds: &[LayerKind], input_len: usize, bins: usize) -> Result<Self> {
        if input_len == 0 || bins == 0 {
            return Err(Error::invalid("network input must be non-empty"));
        }
        if kinds.last() != Some(&LayerKind::SoftMax)
            || kinds[..kinds.len() - 1].contains(&LayerKind::SoftMax)
        {
            return Err(Error::InvalidState(
                "the layer list must end with its only softmax".into(),
            ));
        }
        let input = Shape {
            len: input_len,
            bins,
            channels: 1,
        };
        let mut shapes = vec![input];
        let mut layers = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let s = *shapes.last().unwrap();
            let (nw, nb) = match *kind {
                LayerKind::Conv {
                    kernel,
                    in_channels,
                    out_channels,
                    ..
                } => (kernel * in_channels * out_channels, out_channels),
                LayerKind::FullyConnected { outputs } => (s.size() * outputs, outputs),
                _ => (0, 0),
            };
            shapes.push(output_shape(kind, s)?);
            layers.push(Layer {
                kind: *kind,
                weights: vec![T::ZERO; nw],
                bias: vec![T::ZERO; nb],
            });
        }
        Ok(Network {
            input,
            layers,
            shapes,
        })
    }

    /// The standard network for `75 × 768` inputs; checks the shape trace.
    pub fn standard(seed: u64) -> Result<Self> {
        let net = Self::new(&standard_layers(), STANDARD_TRACE[0], STANDARD_BINS, seed)?;
        if net.temporal_trace() != STANDARD_TRACE {
            return Err(Error::InvalidState(format!(
                "temporal trace {:?} differs from {:?}",
                net.temporal_trace(),
                STANDARD_TRACE
            )));
        }
        if net.num_classes() != 2 {
            return Err(Error::InvalidState("expected two logits".into()));
        }
        Ok(net)
    }

    /// Rebuilds a network from stored layers, validating every shape.
    pub fn from_layers(layers: Vec<Layer<T>>, input_len: usize, bins: usize) -> Result<Self> {
        let kinds: Vec<LayerKind> = layers.iter().map(|l| l.kind).collect();
        let mut net = Self::zeroed(&kinds, input_len, bins)?;
        for (dst, src) in net.layers.iter_mut().zip(layers) {
            if dst.weights.len() != src.weights.len() || dst.bias.len() != src.bias.len() {
                return Err(Error::Dimension {
                    expected: dst.weights.len() + dst.bias.len(),
                    actual: src.weights.len() + src.bias.len(),
                });
            }
            *dst = src;
        }
        Ok(net)
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            input: self.input,
            shapes: self.shapes.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    kind: l.kind,
                    weights: l.weights.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                    bias: l.bias.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn input_shape(&self) -> Shape {
        self.input
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map_or(0, Shape::size)
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn fan_in(&self, layer: usize) -> usize {
        match self.layers[layer].kind {
            LayerKind::Conv {
                kernel,
                in_channels,
                ..
            } => kernel * in_channels,
            LayerKind::FullyConnected { .. } => self.shapes[layer].size(),
            _ => 0,
        }
    }

    /// Input length followed by the output length of every convolution and
    /// pooling layer.
    pub fn temporal_trace(&self) -> Vec<usize> {
        let mut trace = vec![self.input.len];
        for (i, l) in self.layers.iter().enumerate() {
            if matches!(l.kind, LayerKind::Conv { .. } | LayerKind::AvgPool) {
                trace.push(self.shapes[i + 1].len);
            }
        }
        trace
    }

    /// Index of the last convolution, whose output is the feature tap.
    pub fn feature_layer(&self) -> Option<usize> {
        self.layers
            .iter()
            .rposition(|l| matches!(l.kind, LayerKind::Conv { .. }))
    }

    fn check_input(&self, input: &[T]) -> Result<()> {
        if input.len() != self.input.size() {
            return Err(Error::Dimension {
                expected: self.input.size(),
                actual: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<Forward<T>> {
        self.check_input(input)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        let mut probs = Vec::new();
        let mut i = 0;
        while i < self.layers.len() {
            if self.fused_head(i) {
                let y = head_forward(
                    &self.layers[i],
                    &acts[i],
                    self.shapes[i],
                    self.shapes[i + 1],
                    self.shapes[i + 3],
                );
                acts.extend([Vec::new(), Vec::new(), y]);
                i += 3;
                continue;
            }
            let layer = &self.layers[i];
            let (s_in, s_out) = (self.shapes[i], self.shapes[i + 1]);
            let y = match layer.kind {
                LayerKind::SoftMax => {
                    probs = softmax(acts.last().unwrap());
                    probs.iter().map(|&p| T::from_f64(p)).collect()
                }
                LayerKind::Relu
                    if i > 0 && matches!(self.layers[i - 1].kind, LayerKind::Conv { .. }) =>
                {
                    let mut y = std::mem::take(acts.last_mut().unwrap());
                    relu_in_place(&mut y);
                    y
                }
                _ => layer_forward(layer, acts.last().unwrap(), s_in, s_out),
            };
            acts.push(y);
            i += 1;
        }
        Ok(Forward { acts, probs })
    }

    /// Layers `i..i + 3` are a single-channel convolution, a ReLU and a
    /// pooling step. They run as one unit so that the wide convolution
    /// output is never stored; the backward pass recomputes it.
    fn fused_head(&self, i: usize) -> bool {
        i + 2 < self.layers.len()
            && self.shapes[i].channels == 1
            && matches!(self.layers[i].kind, LayerKind::Conv { .. })
            && self.layers[i + 1].kind == LayerKind::Relu
            && self.layers[i + 2].kind == LayerKind::AvgPool
    }

    /// Class probabilities only.
    pub fn predict(&self, input: &[T]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.probs)
    }

    /// Output of the last convolution reduced over time and channels to
    /// one value per bin.
    pub fn extract_feature(&self, input: &[T], reduce: FeatureReduce) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let tap = self
            .feature_layer()
            .ok_or_else(|| Error::InvalidState("network has no convolution to tap".into()))?;
        let mut x = input.to_vec();
        let mut i = 0;
        while i <= tap {
            if i + 2 <= tap && self.fused_head(i) {
                x = head_forward(
                    &self.layers[i],
                    &x,
                    self.shapes[i],
                    self.shapes[i + 1],
                    self.shapes[i + 3],
                );
                i += 3;
            } else {
                x = layer_forward(&self.layers[i], &x, self.shapes[i], self.shapes[i + 1]);
                i += 1;
            }
        }
        let s = self.shapes[tap + 1];
        let mut out = vec![
            match reduce {
                FeatureReduce::Mean => 0.0,
                FeatureReduce::Max => f64::NEG_INFINITY,
            };
            s.bins
        ];
        for t in 0..s.len {
            for (b, o) in out.iter_mut().enumerate() {
                let cell = &x[(t * s.bins + b) * s.channels..(t * s.bins + b + 1) * s.channels];
                match reduce {
                    FeatureReduce::Mean => *o += cell.iter().map(|v| v.to_f64()).sum::<f64>(),
                    FeatureReduce::Max => *o = cell.iter().map(|v| v.to_f64()).fold(*o, f64::max),
                }
            }
        }
        if reduce == FeatureReduce::Mean {
            let n = (s.len * s.channels) as f64;
            out.iter_mut().for_each(|v| *v /= n);
        }
        Ok(out)
    }

    /// Cross-entropy loss of a forward pass.
    pub fn loss(fwd: &Forward<T>, label: usize) -> f64 {
        let p = fwd.probs[label];
        // `f64::max` would swallow a NaN probability.
        if p.is_nan() {
            return f64::NAN;
        }
        -p.max(f64::MIN_POSITIVE).ln()
    }

    /// Gradients of the cross-entropy loss of one sample, accumulated into
    /// `grads`. Returns the gradient with respect to the input when asked.
    pub fn backward(
        &self,
        fwd: &Forward<T>,
        label: usize,
        grads: &mut Grads<T>,
        input_grad: bool,
    ) -> Vec<T> {
        let n = self.layers.len();
        let mut dy: Vec<T> = fwd
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| T::from_f64(p - if k == label { 1.0 } else { 0.0 }))
            .collect();
        // The softmax layer is folded into the loss derivative above.
        let mut i = n - 1;
        while i > 0 {
            i -= 1;
            if i >= 2 && self.fused_head(i - 2) {
                i -= 2;
                let (gw, gb) = &mut grads.layers[i];
                let shapes = (self.shapes[i], self.shapes[i + 1], self.shapes[i + 3]);
                dy = head_backward(
                    &self.layers[i],
                    &fwd.acts[i],
                    &dy,
                    shapes,
                    gw,
                    gb,
                    i > 0 || input_grad,
                );
                continue;
            }
            let want_dx = i > 0 || input_grad;
            let (gw, gb) = &mut grads.layers[i];
            dy = layer_backward(
                &self.layers[i],
                &fwd.acts[i],
                &fwd.acts[i + 1],
                dy,
                self.shapes[i],
                self.shapes[i + 1],
                gw,
                gb,
                want_dx,
            );
        }
        dy
    }
}

fn softmax<T: Scalar>(x: &[T]) -> Vec<f64> {
    let max = x
        .iter()
        .map(|v| v.to_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v.to_f64() - max).exp()).collect();
    let total: f64 = e.iter().sum();
    e.iter().map(|v| v / total).collect()
}

fn layer_forward<T: Scalar>(layer: &Layer<T>, x: &[T], s_in: Shape, s_out: Shape) -> Vec<T> {
    match layer.kind {
        LayerKind::Conv { kernel, pad, .. } => conv_forward(layer, x, kernel, pad, s_in, s_out),
        LayerKind::Relu => {
            let mut y = x.to_vec();
            relu_in_place(&mut y);
            y
        }
        LayerKind::AvgPool => {
            let row = s_in.bins * s_in.channels;
            let half = T::from_f64(0.5);
            let mut y = Vec::with_capacity(s_out.size());
            for t in 0..s_out.len {
                let (a, b) = (
                    &x[2 * t * row..(2 * t + 1) * row],
                    &x[(2 * t + 1) * row..(2 * t + 2) * row],
                );
                y.extend(a.iter().zip(b).map(|(&p, &q)| half * (p + q)));
            }
            y
        }
        LayerKind::Transpose => transpose(x, s_in),
        LayerKind::FullyConnected { outputs } => {
            let n = s_in.size();
            (0..outputs)
                .map(|o| {
                    let w = &layer.weights[o * n..(o + 1) * n];
                    w.iter()
                        .zip(x)
                        .fold(layer.bias[o], |acc, (&a, &b)| acc + a * b)
                })
                .collect()
        }
        LayerKind::SoftMax => softmax(x).into_iter().map(T::from_f64).collect(),
    }
}

fn relu_in_place<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| *v = v.relu());
}

fn transpose<T: Scalar>(x: &[T], s: Shape) -> Vec<T> {
    let c = s.channels;
    let mut y = vec![T::ZERO; x.len()];
    for t in 0..s.len {
        for b in 0..s.bins {
            let src = (t * s.bins + b) * c;
            let dst = (b * s.len + t) * c;
            y[dst..dst + c].copy_from_slice(&x[src..src + c]);
        }
    }
    y
}

/// Output rows `t` in `lo..hi` read input rows `t + k - pad`.
fn tap_range(k: usize, pad: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k);
    let hi = (len_in + pad).saturating_sub(k).min(len_out);
    (lo, hi.max(lo))
}

fn conv_forward<T: Scalar>(
    layer: &Layer<T>,
    x: &[T],
    kernel: usize,
    pad: usize,
    s_in: Shape,
    s_out: Shape,
) -> Vec<T> {
    let (cin, cout, bins) = (s_in.channels, s_out.channels, s_in.bins);
    if cin == 1 {
        // One pass per output row keeps the large first-layer output
        // written exactly once.
        let mut y = vec![T::ZERO; s_out.size()];
        for (r, out) in y.chunks_exact_mut(cout).enumerate() {
            single_channel_cell(layer, x, kernel, pad, s_in, r / bins, r % bins, out);
        }
        return y;
    }
    let mut y = Vec::with_capacity(s_out.size());
    for _ in 0..s_out.len * bins {
        y.extend_from_slice(&layer.bias);
    }
    for k in 0..kernel {
        let (lo, hi) = tap_range(k, pad, s_in.len, s_out.len);
        if lo >= hi {
            continue;
        }
        let rows = (hi - lo) * bins;
        let src = (lo + k - pad) * bins * cin;
        let w = &layer.weights[k * cin * cout..(k + 1) * cin * cout];
        gemm(
            rows,
            cin,
            cout,
            View::rows(&x[src..src + rows * cin], cin),
            View::rows(w, cout),
            T::ONE,
            &mut y[lo * bins * cout..hi * bins * cout],
        );
    }
    y
}

/// Source time step of tap `k` for output step `t`, if inside the input.
fn tap_source(t: usize, k: usize, pad: usize, len_in: usize) -> Option<usize> {
    (t + k).checked_sub(pad).filter(|&u| u < len_in)
}

/// Pre-activation output of a single-channel convolution at step `t` of
/// bin `b`.
#[allow(clippy::too_many_arguments)]
fn single_channel_cell<T: Scalar>(
    layer: &Layer<T>,
    x: &[T],
    kernel: usize,
    pad: usize,
    s_in: Shape,
    t: usize,
    b: usize,
    out: &mut [T],
) {
    let cout = out.len();
    out.copy_from_slice(&layer.bias);
    for k in 0..kernel {
        let Some(src_t) = tap_source(t, k, pad, s_in.len) else {
            continue;
        };
        let xv = x[src_t * s_in.bins + b];
        let w = &layer.weights[k * cout..(k + 1) * cout];
        out.iter_mut().zip(w).for_each(|(o, &wv)| *o += xv * wv);
    }
}

fn conv_geometry<T>(layer: &Layer<T>) -> (usize, usize) {
    match layer.kind {
        LayerKind::Conv { kernel, pad, .. } => (kernel, pad),
        _ => unreachable!("fused head starts with a convolution"),
    }
}

/// Single-channel convolution with its activation and pooling fused into one pass.
/// Arithmetic matches the unfused layers exactly.
fn head_forward<T: Scalar>(
    layer: &Layer<T>,
    x: &[T],
    s_in: Shape,
    s_conv: Shape,
    s_out: Shape,
) -> Vec<T> {
    let (kernel, pad) = conv_geometry(layer);
    let (cout, bins) = (s_conv.channels, s_in.bins);
    let half = T::from_f64(0.5);
    let mut y = vec![T::ZERO; s_out.size()];
    let (mut p, mut q) = (vec![T::ZERO; cout], vec![T::ZERO; cout]);
    for (r, out) in y.chunks_exact_mut(cout).enumerate() {
        let (t, b) = (r / bins, r % bins);
        single_channel_cell(layer, x, kernel, pad, s_in, 2 * t, b, &mut p);
        single_channel_cell(layer, x, kernel, pad, s_in, 2 * t + 1, b, &mut q);
        for ((o, &u), &v) in out.iter_mut().zip(&p).zip(&q) {
            *o = half * (u.relu() + v.relu());
        }
    }
    y
}

/// Backward pass of [`head_forward`]; `dy` is the gradient of the pooled
/// output. Returns the input gradient when `want_dx` is set.
fn head_backward<T: Scalar>(
    layer: &Layer<T>,
    x: &[T],
    dy: &[T],
    (s_in, s_conv, s_out): (Shape, Shape, Shape),
    gw: &mut [T],
    gb: &mut [T],
    want_dx: bool,
) -> Vec<T> {
    let (kernel, pad) = conv_geometry(layer);
    let (cout, bins) = (s_conv.channels, s_in.bins);
    let half = T::from_f64(0.5);
    let mut dx = if want_dx {
        vec![T::ZERO; x.len()]
    } else {
        Vec::new()
    };
    let (mut z, mut d) = (vec![T::ZERO; cout], vec![T::ZERO; cout]);
    // An odd length leaves the last step out of every pooling window.
    for t in 0..2 * s_out.len {
        for b in 0..bins {
            single_channel_cell(layer, x, kernel, pad, s_in, t, b, &mut z);
            let g = &dy[((t / 2) * bins + b) * cout..][..cout];
            for ((dc, &gc), &zc) in d.iter_mut().zip(g).zip(&z) {
                *dc = (half * gc).mask_positive(zc.relu());
            }
            gb.iter_mut().zip(&d).for_each(|(acc, &v)| *acc += v);
            for k in 0..kernel {
                let Some(src_t) = tap_source(t, k, pad, s_in.len) else {
                    continue;
                };
                let src = src_t * bins + b;
                let xv = x[src];
                gw[k * cout..(k + 1) * cout]
                    .iter_mut()
                    .zip(&d)
                    .for_each(|(acc, &v)| *acc += xv * v);
                if want_dx {
                    let w = &layer.weights[k * cout..(k + 1) * cout];
                    dx[src] += w
                        .iter()
                        .zip(&d)
                        .fold(T::ZERO, |acc, (&wv, &v)| acc + wv * v);
                }
            }
        }
    }
    dx
}

#[allow(clippy::too_many_arguments)]
fn layer_backward<T: Scalar>(
    layer: &Layer<T>,
    x: &[T],
    y: &[T],
    mut dy: Vec<T>,
    s_in: Shape,
    s_out: Shape,
    gw: &mut [T],
    gb: &mut [T],
    want_dx: bool,
) -> Vec<T> {
    match layer.kind {
        LayerKind::Conv { kernel, pad, .. } => {
            let (cin, cout, bins) = (s_in.channels, s_out.channels, s_in.bins);
            if cin == 1 && !want_dx {
                // A GEMM with a single output row wastes most of its kernel.
                for (r, d) in dy.chunks_exact(cout).enumerate() {
                    let (t, b) = (r / bins, r % bins);
                    gb.iter_mut().zip(d).for_each(|(g, &v)| *g += v);
                    for k in 0..kernel {
                        let Some(src_t) = tap_source(t, k, pad, s_in.len) else {
                            continue;
                        };
                        let xv = x[src_t * bins + b];
                        gw[k * cout..(k + 1) * cout]
                            .iter_mut()
                            .zip(d)
                            .for_each(|(g, &v)| *g += xv * v);
                    }
                }
                return Vec::new();
            }
            for row in dy.chunks_exact(cout) {
                gb.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
            }
            let mut dx = if want_dx {
                vec![T::ZERO; x.len()]
            } else {
                Vec::new()
            };
            for k in 0..kernel {
                let (lo, hi) = tap_range(k, pad, s_in.len, s_out.len);
                if lo >= hi {
                    continue;
                }
                let rows = (hi - lo) * bins;
                let src = (lo + k - pad) * bins * cin;
                let d = &dy[lo * bins * cout..hi * bins * cout];
                let xs = &x[src..src + rows * cin];
                gemm(
                    cin,
                    rows,
                    cout,
                    View::transposed(xs, cin),
                    View::rows(d, cout),
                    T::ONE,
                    &mut gw[k * cin * cout..(k + 1) * cin * cout],
                );
                if want_dx {
                    let w = &layer.weights[k * cin * cout..(k + 1) * cin * cout];
                    gemm(
                        rows,
                        cout,
                        cin,
                        View::rows(d, cout),
                        View::transposed(w, cout),
                        T::ONE,
                        &mut dx[src..src + rows * cin],
                    );
                }
            }
            dx
        }
        LayerKind::Relu => {
            dy.iter_mut()
                .zip(y)
                .for_each(|(d, &v)| *d = d.mask_positive(v));
            dy
        }
        LayerKind::AvgPool => {
            let row = s_in.bins * s_in.channels;
            let half = T::from_f64(0.5);
            let mut dx = Vec::with_capacity(x.len());
            for d in dy.chunks_exact(row) {
                dx.extend(d.iter().map(|&g| half * g));
                dx.extend(d.iter().map(|&g| half * g));
            }
            // An odd input length leaves the last step out of every window.
            dx.resize(x.len(), T::ZERO);
            dx
        }
        LayerKind::Transpose => transpose(&dy, s_out),
        LayerKind::FullyConnected { outputs } => {
            let n = s_in.size();
            let mut dx = vec![T::ZERO; n];
            for o in 0..outputs {
                let g = dy[o];
                gb[o] += g;
                let w = &layer.weights[o * n..(o + 1) * n];
                let gwo = &mut gw[o * n..(o + 1) * n];
                for i in 0..n {
                    gwo[i] += g * x[i];
                    dx[i] += g * w[i];
                }
            }
            dx
        }
        LayerKind::SoftMax => unreachable!("softmax is folded into the loss"),
    }
}
