//! Sequential network: layer specifications, parameter store and the
//! chunk-parallel forward/backward passes.

use super::loss::{per_sample_grad, per_sample_loss, LossKind, LossTarget};
use super::ops::{axpy, dot};
use super::tensor::Tensor;
use super::{NnError, Real};
use crate::util::mix_seed;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Samples per work chunk. Fixed so gradient reduction order does not
/// depend on the rayon worker count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
    },
    Relu,
    Dropout {
        rate: f64,
    },
    Flatten,
    Dense {
        units: usize,
    },
}

/// Data shape between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Spatial { c: usize, h: usize, w: usize },
    Flat(usize),
}

impl Shape {
    pub fn numel(&self) -> usize {
        match *self {
            Shape::Spatial { c, h, w } => c * h * w,
            Shape::Flat(n) => n,
        }
    }
}

/// One named parameter tensor with its Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<F> {
    pub name: String,
    pub value: Tensor<F>,
    pub m: Tensor<F>,
    pub v: Tensor<F>,
}

/// Ordered named parameters plus optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<F> {
    pub entries: Vec<ParamEntry<F>>,
    pub step: u64,
}

impl<F: Real> ModelParameters<F> {
    pub fn new() -> Self {
        Self {
            entries: Vec::new(),
            step: 0,
        }
    }

    fn push(&mut self, name: String, value: Tensor<F>) -> usize {
        assert!(
            self.entries.iter().all(|e| e.name != name),
            "duplicate parameter name {name}"
        );
        let m = Tensor::zeros(value.dims());
        let v = Tensor::zeros(value.dims());
        self.entries.push(ParamEntry { name, value, m, v });
        self.entries.len() - 1
    }

    pub fn by_name(&self, name: &str) -> Option<&ParamEntry<F>> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Zeroed gradient tensors aligned with the parameter order.
    pub fn zero_grads(&self) -> Vec<Tensor<F>> {
        self.entries
            .iter()
            .map(|e| Tensor::zeros(e.value.dims()))
            .collect()
    }
}

impl<F: Real> Default for ModelParameters<F> {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BackwardOptions {
    pub training: bool,
    pub dropout_seed: u64,
    /// Skip parameter-gradient accumulation when only input gradients are
    /// needed (trigger reverse-engineering).
    pub param_grads: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            training: true,
            dropout_seed: 0,
            param_grads: true,
        }
    }
}

pub struct BackwardOutput<F: Real> {
    pub loss: F,
    /// Summed parameter gradients aligned with `params.entries` (zeros when
    /// `param_grads` was off).
    pub grads: Vec<Tensor<F>>,
    /// Per-sample gradient of the loss with respect to the network input.
    pub input_grads: Tensor<F>,
    /// Network outputs, one row per sample.
    pub outputs: Tensor<F>,
}

/// Per-layer bookkeeping kept during one sample's forward pass.
struct TraceEntry<F> {
    output: Vec<F>,
    /// Conv layers: patch matrix of the layer input, rows = output positions.
    cols: Option<Vec<F>>,
    /// Dropout layers in training mode: per-element scale (0 or 1/(1-rate)).
    mask: Option<Vec<F>>,
}

/// Sequential feed-forward network.
#[derive(Debug, Clone)]
pub struct Network<F: Real> {
    input_shape: Shape,
    layers: Vec<LayerSpec>,
    /// Output shape of every layer.
    shapes: Vec<Shape>,
    /// Parameter indices (weight, bias) for conv/dense layers.
    param_index: Vec<Option<(usize, usize)>>,
    pub params: ModelParameters<F>,
}

impl<F: Real> Network<F> {
    /// Build the network and initialize parameters: He-uniform for layers
    /// feeding a rectifier, Glorot-uniform otherwise, biases zero.
    pub fn new(
        input_c: usize,
        input_h: usize,
        input_w: usize,
        layers: Vec<LayerSpec>,
        seed: u64,
    ) -> Result<Self, NnError> {
        let input_shape = Shape::Spatial {
            c: input_c,
            h: input_h,
            w: input_w,
        };
        let mut shapes = Vec::with_capacity(layers.len());
        let mut param_index = Vec::with_capacity(layers.len());
        let mut params = ModelParameters::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cur = input_shape;
        let mut conv_count = 0usize;
        let mut dense_count = 0usize;

        for (i, layer) in layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                    padding,
                } => {
                    let Shape::Spatial { c, h, w } = cur else {
                        return Err(NnError::InvalidSpec(format!(
                            "conv layer {i} requires spatial input"
                        )));
                    };
                    let (oh, ow) = match padding {
                        Padding::Valid => {
                            if kernel_h > h || kernel_w > w {
                                return Err(NnError::InvalidSpec(format!(
                                    "kernel {kernel_h}x{kernel_w} larger than input {h}x{w}"
                                )));
                            }
                            (h - kernel_h + 1, w - kernel_w + 1)
                        }
                        Padding::Same => (h, w),
                    };
                    if filters == 0 || kernel_h == 0 || kernel_w == 0 {
                        return Err(NnError::InvalidSpec("empty conv dimensions".into()));
                    }
                    conv_count += 1;
                    let fan_in = c * kernel_h * kernel_w;
                    let fan_out = filters * kernel_h * kernel_w;
                    let limit = init_limit(&layers, i, fan_in, fan_out);
                    let w_dims = [filters, c, kernel_h, kernel_w];
                    let weight = random_uniform(&w_dims, limit, &mut rng);
                    let name = format!("conv{conv_count}");
                    let wi = params.push(format!("{name}.w"), weight);
                    let bi = params.push(format!("{name}.b"), Tensor::zeros(&[filters]));
                    param_index.push(Some((wi, bi)));
                    cur = Shape::Spatial {
                        c: filters,
                        h: oh,
                        w: ow,
                    };
                }
                LayerSpec::Dense { units } => {
                    let Shape::Flat(n) = cur else {
                        return Err(NnError::InvalidSpec(format!(
                            "dense layer {i} requires flattened input"
                        )));
                    };
                    if units == 0 {
                        return Err(NnError::InvalidSpec("dense layer with zero units".into()));
                    }
                    dense_count += 1;
                    let limit = init_limit(&layers, i, n, units);
                    let weight = random_uniform(&[units, n], limit, &mut rng);
                    let name = format!("dense{dense_count}");
                    let wi = params.push(format!("{name}.w"), weight);
                    let bi = params.push(format!("{name}.b"), Tensor::zeros(&[units]));
                    param_index.push(Some((wi, bi)));
                    cur = Shape::Flat(units);
                }
                LayerSpec::Flatten => {
                    let Shape::Spatial { .. } = cur else {
                        return Err(NnError::InvalidSpec(format!(
                            "flatten layer {i} requires spatial input"
                        )));
                    };
                    param_index.push(None);
                    cur = Shape::Flat(cur.numel());
                }
                LayerSpec::Relu => {
                    param_index.push(None);
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NnError::InvalidSpec(format!(
                            "dropout rate {rate} outside [0, 1)"
                        )));
                    }
                    param_index.push(None);
                }
            }
            shapes.push(cur);
        }

        Ok(Self {
            input_shape,
            layers,
            shapes,
            param_index,
            params,
        })
    }

    pub fn input_shape(&self) -> Shape {
        self.input_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Output width of the final layer.
    pub fn output_len(&self) -> usize {
        self.shapes.last().map_or(self.input_shape.numel(), Shape::numel)
    }

    /// Replace parameter values with checkpointed ones; names and shapes
    /// must match the architecture.
    pub fn load_params(&mut self, loaded: ModelParameters<F>) -> Result<(), NnError> {
        if loaded.entries.len() != self.params.entries.len() {
            return Err(NnError::ShapeMismatch(format!(
                "checkpoint has {} tensors, architecture needs {}",
                loaded.entries.len(),
                self.params.entries.len()
            )));
        }
        for (have, want) in loaded.entries.iter().zip(&self.params.entries) {
            if have.name != want.name || have.value.dims() != want.value.dims() {
                return Err(NnError::ShapeMismatch(format!(
                    "checkpoint tensor {}{:?} does not match {}{:?}",
                    have.name,
                    have.value.dims(),
                    want.name,
                    want.value.dims()
                )));
            }
        }
        self.params = loaded;
        Ok(())
    }

    fn check_batch(&self, batch: &Tensor<F>) -> Result<usize, NnError> {
        let dims = batch.dims();
        let expect = self.input_shape.numel();
        if dims.len() < 2 || batch.numel() != dims[0] * expect {
            return Err(NnError::ShapeMismatch(format!(
                "batch dims {:?} incompatible with input of {} values",
                dims, expect
            )));
        }
        Ok(dims[0])
    }

    /// Forward pass over a batch; returns one output row per sample.
    pub fn forward_batch(
        &self,
        batch: &Tensor<F>,
        training: bool,
        dropout_seed: u64,
    ) -> Result<Tensor<F>, NnError> {
        self.forward_layer_outputs(batch, training, dropout_seed, self.layers.len())
    }

    /// Forward pass truncated after `layer_count` layers (eval semantics for
    /// the remaining ones is irrelevant); used to read hidden activations.
    pub fn layer_activations(&self, batch: &Tensor<F>, layer: usize) -> Result<Tensor<F>, NnError> {
        self.forward_layer_outputs(batch, false, 0, layer + 1)
    }

    fn forward_layer_outputs(
        &self,
        batch: &Tensor<F>,
        training: bool,
        dropout_seed: u64,
        layer_count: usize,
    ) -> Result<Tensor<F>, NnError> {
        let b = self.check_batch(batch)?;
        if layer_count > self.layers.len() {
            return Err(NnError::InvalidSpec(format!(
                "layer index {layer_count} beyond {}",
                self.layers.len()
            )));
        }
        let out_len = if layer_count == 0 {
            self.input_shape.numel()
        } else {
            self.shapes[layer_count - 1].numel()
        };
        let stride = self.input_shape.numel();
        let ranges = chunk_ranges(b);
        let rows: Vec<Vec<F>> = ranges
            .par_iter()
            .map(|range| {
                let mut out = Vec::with_capacity(range.len() * out_len);
                for s in range.clone() {
                    let input = &batch.values()[s * stride..(s + 1) * stride];
                    let trace = self.forward_sample(input, training, sample_seed(dropout_seed, s), layer_count);
                    match trace.last() {
                        Some(t) => out.extend_from_slice(&t.output),
                        None => out.extend_from_slice(input),
                    }
                }
                out
            })
            .collect();
        let mut values = Vec::with_capacity(b * out_len);
        for row in rows {
            values.extend(row);
        }
        Tensor::from_values(vec![b, out_len], values)
    }

    /// Loss plus gradients for a batch.
    pub fn backward_batch(
        &self,
        batch: &Tensor<F>,
        targets: &LossTarget<'_, F>,
        kind: LossKind,
        opts: BackwardOptions,
    ) -> Result<BackwardOutput<F>, NnError> {
        let b = self.check_batch(batch)?;
        targets.check(b, self.output_len(), kind)?;
        let stride = self.input_shape.numel();
        let ranges = chunk_ranges(b);

        struct Partial<F: Real> {
            loss: F,
            grads: Option<Vec<Tensor<F>>>,
            input_grads: Vec<F>,
            outputs: Vec<F>,
        }

        let partials: Vec<Partial<F>> = ranges
            .par_iter()
            .map(|range| {
                let mut grads = opts.param_grads.then(|| self.params.zero_grads());
                let mut input_grads = Vec::with_capacity(range.len() * stride);
                let mut outputs = Vec::with_capacity(range.len() * self.output_len());
                let mut loss = F::zero();
                for s in range.clone() {
                    let input = &batch.values()[s * stride..(s + 1) * stride];
                    let trace = self.forward_sample(
                        input,
                        opts.training,
                        sample_seed(opts.dropout_seed, s),
                        self.layers.len(),
                    );
                    let output = trace
                        .last()
                        .map_or(input, |t| t.output.as_slice());
                    outputs.extend_from_slice(output);
                    loss += per_sample_loss(output, targets, kind, s, b);
                    let dy = per_sample_grad(output, targets, kind, s, b);
                    let dx = self.backward_sample(input, &trace, dy, grads.as_deref_mut());
                    input_grads.extend(dx);
                }
                Partial {
                    loss,
                    grads,
                    input_grads,
                    outputs,
                }
            })
            .collect();

        let mut total_loss = F::zero();
        let mut grads = self.params.zero_grads();
        let mut input_values = Vec::with_capacity(b * stride);
        let mut output_values = Vec::with_capacity(b * self.output_len());
        for p in partials {
            total_loss += p.loss;
            if let Some(part) = p.grads {
                for (acc, g) in grads.iter_mut().zip(&part) {
                    axpy(F::one(), g.values(), acc.values_mut());
                }
            }
            input_values.extend(p.input_grads);
            output_values.extend(p.outputs);
        }
        let mut input_dims = vec![b];
        match self.input_shape {
            Shape::Spatial { c, h, w } => input_dims.extend([c, h, w]),
            Shape::Flat(n) => input_dims.push(n),
        }
        Ok(BackwardOutput {
            loss: total_loss,
            grads,
            input_grads: Tensor::from_values(input_dims, input_values)?,
            outputs: Tensor::from_values(vec![b, self.output_len()], output_values)?,
        })
    }

    /// Run layers 0..layer_count for one sample, keeping per-layer outputs.
    fn forward_sample(
        &self,
        input: &[F],
        training: bool,
        seed: u64,
        layer_count: usize,
    ) -> Vec<TraceEntry<F>> {
        let mut trace: Vec<TraceEntry<F>> = Vec::with_capacity(layer_count);
        for (i, layer) in self.layers.iter().take(layer_count).enumerate() {
            let cur: &[F] = if i == 0 {
                input
            } else {
                &trace[i - 1].output
            };
            let in_shape = if i == 0 {
                self.input_shape
            } else {
                self.shapes[i - 1]
            };
            let entry = match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                    padding,
                } => {
                    let (wi, bi) = self.param_index[i].expect("conv has params");
                    let weight = self.params.entries[wi].value.values();
                    let bias = self.params.entries[bi].value.values();
                    let (cols, out) = conv_forward(
                        cur, in_shape, self.shapes[i], filters, kernel_h, kernel_w, padding,
                        weight, bias,
                    );
                    TraceEntry {
                        output: out,
                        cols: Some(cols),
                        mask: None,
                    }
                }
                LayerSpec::Dense { units } => {
                    let (wi, bi) = self.param_index[i].expect("dense has params");
                    let weight = self.params.entries[wi].value.values();
                    let bias = self.params.entries[bi].value.values();
                    let n = in_shape.numel();
                    let out: Vec<F> = (0..units)
                        .map(|o| dot(&weight[o * n..(o + 1) * n], cur) + bias[o])
                        .collect();
                    TraceEntry {
                        output: out,
                        cols: None,
                        mask: None,
                    }
                }
                LayerSpec::Relu => TraceEntry {
                    output: cur.iter().map(|&v| v.max(F::zero())).collect(),
                    cols: None,
                    mask: None,
                },
                LayerSpec::Dropout { rate } => {
                    if training && rate > 0.0 {
                        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, i as u64, 1));
                        let keep_scale = F::of_f64(1.0 / (1.0 - rate));
                        let mask: Vec<F> = cur
                            .iter()
                            .map(|_| {
                                if rng.gen::<f64>() >= rate {
                                    keep_scale
                                } else {
                                    F::zero()
                                }
                            })
                            .collect();
                        TraceEntry {
                            output: cur.iter().zip(&mask).map(|(&v, &m)| v * m).collect(),
                            cols: None,
                            mask: Some(mask),
                        }
                    } else {
                        TraceEntry {
                            output: cur.to_vec(),
                            cols: None,
                            mask: None,
                        }
                    }
                }
                LayerSpec::Flatten => TraceEntry {
                    output: cur.to_vec(),
                    cols: None,
                    mask: None,
                },
            };
            trace.push(entry);
        }
        trace
    }

    /// Backpropagate one sample; accumulates parameter gradients when given
    /// a buffer and returns the gradient with respect to the sample input.
    fn backward_sample(
        &self,
        input: &[F],
        trace: &[TraceEntry<F>],
        mut dy: Vec<F>,
        mut grads: Option<&mut [Tensor<F>]>,
    ) -> Vec<F> {
        for i in (0..self.layers.len()).rev() {
            let layer_input: &[F] = if i == 0 {
                input
            } else {
                &trace[i - 1].output
            };
            let in_shape = if i == 0 {
                self.input_shape
            } else {
                self.shapes[i - 1]
            };
            dy = match self.layers[i] {
                LayerSpec::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                    padding,
                } => {
                    let (wi, bi) = self.param_index[i].expect("conv has params");
                    let weight = self.params.entries[wi].value.values();
                    let cols = trace[i].cols.as_ref().expect("conv trace");
                    let (dw_db, dx) = conv_backward(
                        &dy, cols, in_shape, self.shapes[i], filters, kernel_h, kernel_w,
                        padding, weight,
                        grads.is_some(),
                    );
                    if let (Some(gs), Some((dw, db))) = (grads.as_deref_mut(), dw_db) {
                        axpy(F::one(), &dw, gs[wi].values_mut());
                        axpy(F::one(), &db, gs[bi].values_mut());
                    }
                    dx
                }
                LayerSpec::Dense { units } => {
                    let (wi, bi) = self.param_index[i].expect("dense has params");
                    let weight = self.params.entries[wi].value.values();
                    let n = in_shape.numel();
                    if let Some(gs) = grads.as_deref_mut() {
                        for o in 0..units {
                            axpy(dy[o], layer_input, &mut gs[wi].values_mut()[o * n..(o + 1) * n]);
                        }
                        axpy(F::one(), &dy, gs[bi].values_mut());
                    }
                    let mut dx = vec![F::zero(); n];
                    for o in 0..units {
                        axpy(dy[o], &weight[o * n..(o + 1) * n], &mut dx);
                    }
                    dx
                }
                LayerSpec::Relu => trace[i]
                    .output
                    .iter()
                    .zip(&dy)
                    .map(|(&o, &g)| if o > F::zero() { g } else { F::zero() })
                    .collect(),
                LayerSpec::Dropout { .. } => match &trace[i].mask {
                    Some(mask) => dy.iter().zip(mask).map(|(&g, &m)| g * m).collect(),
                    None => dy,
                },
                LayerSpec::Flatten => dy,
            };
        }
        dy
    }
}

/// He-uniform when the layer feeds a rectifier (possibly through dropout or
/// flatten), Glorot-uniform otherwise.
fn init_limit(layers: &[LayerSpec], index: usize, fan_in: usize, fan_out: usize) -> f64 {
    let feeds_relu = layers[index + 1..]
        .iter()
        .find_map(|l| match l {
            LayerSpec::Relu => Some(true),
            LayerSpec::Dropout { .. } | LayerSpec::Flatten => None,
            _ => Some(false),
        })
        .unwrap_or(false);
    if feeds_relu {
        (6.0 / fan_in as f64).sqrt()
    } else {
        (6.0 / (fan_in + fan_out) as f64).sqrt()
    }
}

fn random_uniform<F: Real>(dims: &[usize], limit: f64, rng: &mut ChaCha8Rng) -> Tensor<F> {
    let n: usize = dims.iter().product();
    let values: Vec<F> = (0..n)
        .map(|_| F::of_f64(rng.gen_range(-limit..limit)))
        .collect();
    Tensor::from_values(dims.to_vec(), values).expect("consistent dims")
}

fn sample_seed(dropout_seed: u64, sample: usize) -> u64 {
    mix_seed(dropout_seed, sample as u64, 0)
}

fn chunk_ranges(b: usize) -> Vec<std::ops::Range<usize>> {
    (0..b.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(b))
        .collect()
}

fn conv_geometry(
    in_shape: Shape,
    kernel_h: usize,
    kernel_w: usize,
    padding: Padding,
) -> (usize, usize, usize, usize, usize, usize, usize) {
    let Shape::Spatial { c, h, w } = in_shape else {
        panic!("conv requires spatial input");
    };
    let (oh, ow, pad_top, pad_left) = match padding {
        Padding::Valid => (h - kernel_h + 1, w - kernel_w + 1, 0usize, 0usize),
        Padding::Same => (h, w, (kernel_h - 1) / 2, (kernel_w - 1) / 2),
    };
    (c, h, w, oh, ow, pad_top, pad_left)
}

/// Build the patch matrix (one row per output position) and the conv output.
#[allow(clippy::too_many_arguments)]
fn conv_forward<F: Real>(
    input: &[F],
    in_shape: Shape,
    out_shape: Shape,
    filters: usize,
    kernel_h: usize,
    kernel_w: usize,
    padding: Padding,
    weight: &[F],
    bias: &[F],
) -> (Vec<F>, Vec<F>) {
    let (c, h, w, oh, ow, pad_top, pad_left) = conv_geometry(in_shape, kernel_h, kernel_w, padding);
    debug_assert_eq!(out_shape.numel(), filters * oh * ow);
    let k = c * kernel_h * kernel_w;
    let positions = oh * ow;

    let mut cols = vec![F::zero(); positions * k];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * k;
            let mut idx = row;
            for ic in 0..c {
                let plane = ic * h * w;
                for ky in 0..kernel_h {
                    let iy = oy + ky;
                    for kx in 0..kernel_w {
                        let ix = ox + kx;
                        // shifted by padding offsets; zero outside the input
                        let val = if iy >= pad_top && ix >= pad_left {
                            let sy = iy - pad_top;
                            let sx = ix - pad_left;
                            if sy < h && sx < w {
                                input[plane + sy * w + sx]
                            } else {
                                F::zero()
                            }
                        } else {
                            F::zero()
                        };
                        cols[idx] = val;
                        idx += 1;
                    }
                }
            }
        }
    }

    let mut out = vec![F::zero(); filters * positions];
    for f in 0..filters {
        let wrow = &weight[f * k..(f + 1) * k];
        let orow = &mut out[f * positions..(f + 1) * positions];
        for (p, o) in orow.iter_mut().enumerate() {
            *o = dot(wrow, &cols[p * k..(p + 1) * k]) + bias[f];
        }
    }
    (cols, out)
}

/// Gradients of a conv layer: optionally (dW, db), plus dInput.
#[allow(clippy::too_many_arguments)]
fn conv_backward<F: Real>(
    dy: &[F],
    cols: &[F],
    in_shape: Shape,
    out_shape: Shape,
    filters: usize,
    kernel_h: usize,
    kernel_w: usize,
    padding: Padding,
    weight: &[F],
    want_param_grads: bool,
) -> (Option<(Vec<F>, Vec<F>)>, Vec<F>) {
    let (c, h, w, oh, ow, pad_top, pad_left) = conv_geometry(in_shape, kernel_h, kernel_w, padding);
    debug_assert_eq!(out_shape.numel(), filters * oh * ow);
    let k = c * kernel_h * kernel_w;
    let positions = oh * ow;

    let dw_db = want_param_grads.then(|| {
        let mut dw = vec![F::zero(); filters * k];
        let mut db = vec![F::zero(); filters];
        for f in 0..filters {
            let dyrow = &dy[f * positions..(f + 1) * positions];
            let dwrow = &mut dw[f * k..(f + 1) * k];
            let mut bsum = F::zero();
            for (p, &g) in dyrow.iter().enumerate() {
                bsum += g;
                if g != F::zero() {
                    axpy(g, &cols[p * k..(p + 1) * k], dwrow);
                }
            }
            db[f] = bsum;
        }
        (dw, db)
    });

    // dCols = dyT * W, then scatter back to the input grid.
    let mut dcols = vec![F::zero(); positions * k];
    for f in 0..filters {
        let dyrow = &dy[f * positions..(f + 1) * positions];
        let wrow = &weight[f * k..(f + 1) * k];
        for (p, &g) in dyrow.iter().enumerate() {
            if g != F::zero() {
                axpy(g, wrow, &mut dcols[p * k..(p + 1) * k]);
            }
        }
    }

    let mut dx = vec![F::zero(); c * h * w];
    for oy in 0..oh {
        for ox in 0..ow {
            let row = (oy * ow + ox) * k;
            let mut idx = row;
            for ic in 0..c {
                let plane = ic * h * w;
                for ky in 0..kernel_h {
                    let iy = oy + ky;
                    for kx in 0..kernel_w {
                        let ix = ox + kx;
                        if iy >= pad_top && ix >= pad_left {
                            let sy = iy - pad_top;
                            let sx = ix - pad_left;
                            if sy < h && sx < w {
                                dx[plane + sy * w + sx] += dcols[idx];
                            }
                        }
                        idx += 1;
                    }
                }
            }
        }
    }
    (dw_db, dx)
}
