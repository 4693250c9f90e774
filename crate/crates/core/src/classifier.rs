//! Compact convolutional action classifier trained from scratch.
//!
//! Architecture: a stack of `3×3 conv (pad 1) → bias → ReLU → 2×2 max-pool`
//! blocks (default widths 16/32/64/128 on 64×64 RGB input), global average
//! pooling and one linear layer onto the four action classes. Forward and
//! backward passes are written out by hand over im2col + GEMM and are generic
//! over `f32` (training) and `f64` (gradient checking).

use std::fmt::Debug;
use std::fs;
use std::path::Path;

use num_traits::Float;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_batch, ImageBatch, Manifest};
use crate::error::{Error, Result};
use crate::imaging::{ImageBuffer, CHANNELS};
use crate::seed;
use crate::synthesis::ActionKind;

pub const NUM_CLASSES: usize = 4;
const KERNEL: usize = 3;
const TAPS: usize = KERNEL * KERNEL;

/// Floating point element type of the network.
pub trait Scalar: Float + Default + Debug + Send + Sync + 'static {
    fn of(x: f64) -> Self;

    fn as_f64(self) -> f64;

    /// `c ← a·b + beta·c` for an `m×k` by `k×n` product with explicit
    /// (nonnegative) row/column strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (usize, usize),
        b: &[Self],
        b_strides: (usize, usize),
        beta: Self,
        c: &mut [Self],
        c_strides: (usize, usize),
    );
}

fn check_extent(len: usize, rows: usize, cols: usize, (rs, cs): (usize, usize)) {
    if rows > 0 && cols > 0 {
        assert!(
            (rows - 1) * rs + (cols - 1) * cs < len,
            "gemm operand out of bounds"
        );
    }
}

macro_rules! impl_scalar {
    ($t:ty, $gemm:path) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn as_f64(self) -> f64 {
                self as f64
            }

            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (usize, usize),
                b: &[Self],
                b_strides: (usize, usize),
                beta: Self,
                c: &mut [Self],
                c_strides: (usize, usize),
            ) {
                check_extent(a.len(), m, k, a_strides);
                check_extent(b.len(), k, n, b_strides);
                check_extent(c.len(), m, n, c_strides);
                // SAFETY: every operand extent was checked against its slice above.
                unsafe {
                    $gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0 as isize,
                        a_strides.1 as isize,
                        b.as_ptr(),
                        b_strides.0 as isize,
                        b_strides.1 as isize,
                        beta,
                        c.as_mut_ptr(),
                        c_strides.0 as isize,
                        c_strides.1 as isize,
                    );
                }
            }
        }
    };
}

impl_scalar!(f32, matrixmultiply::sgemm);
impl_scalar!(f64, matrixmultiply::dgemm);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArchitecture {
    /// Square input side in pixels.
    pub input_size: usize,
    /// Output channels of each conv block.
    pub widths: Vec<usize>,
    pub num_classes: usize,
}

impl Default for ModelArchitecture {
    fn default() -> Self {
        Self {
            input_size: 64,
            widths: vec![16, 32, 64, 128],
            num_classes: NUM_CLASSES,
        }
    }
}

impl ModelArchitecture {
    pub fn with_input_size(input_size: usize) -> Self {
        Self {
            input_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes != NUM_CLASSES {
            return Err(Error::Config(format!(
                "architecture must have {NUM_CLASSES} outputs, got {}",
                self.num_classes
            )));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("architecture needs nonzero block widths".into()));
        }
        if self.input_size >> self.widths.len() == 0 {
            return Err(Error::Config(format!(
                "input size {} too small for {} pooling blocks",
                self.input_size,
                self.widths.len()
            )));
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut shapes = Vec::new();
        let mut c_in = CHANNELS;
        for (i, &c_out) in self.widths.iter().enumerate() {
            shapes.push((format!("conv{}.weight", i + 1), vec![c_out, c_in, KERNEL, KERNEL]));
            shapes.push((format!("conv{}.bias", i + 1), vec![c_out]));
            c_in = c_out;
        }
        shapes.push(("fc.weight".into(), vec![self.num_classes, c_in]));
        shapes.push(("fc.bias".into(), vec![self.num_classes]));
        shapes
    }

    pub fn parameter_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|(_, s)| s.iter().product::<usize>())
            .sum()
    }

    fn last_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

/// Named parameter tensors in [`ModelArchitecture::param_shapes`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub tensors: Vec<Tensor<T>>,
}

pub type Gradients<T> = ModelParams<T>;

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(arch: &ModelArchitecture) -> Self {
        Self {
            tensors: arch
                .param_shapes()
                .into_iter()
                .map(|(name, shape)| Tensor {
                    data: vec![T::zero(); shape.iter().product()],
                    name,
                    shape,
                })
                .collect(),
        }
    }

    /// Seeded fan-in scaled uniform initialization; biases start at zero.
    /// Conv kernels use `±sqrt(6 / fan_in)`, the linear layer `±1 / sqrt(fan_in)`.
    pub fn init(arch: &ModelArchitecture, rng_seed: u64) -> Self {
        let mut rng = seed::rng(rng_seed);
        let mut params = Self::zeros(arch);
        let last = params.tensors.len() - 2;
        for (i, t) in params.tensors.iter_mut().enumerate() {
            if t.shape.len() == 1 {
                continue;
            }
            let fan_in: usize = t.shape[1..].iter().product();
            let bound = if i == last {
                1.0 / (fan_in as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            for v in &mut t.data {
                *v = T::of(rng.random_range(-bound..bound));
            }
        }
        params
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.iter_mut().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// Mutable access to the `i`-th scalar in flat order.
    pub fn flat_mut(&mut self, mut i: usize) -> &mut T {
        for t in &mut self.tensors {
            if i < t.data.len() {
                return &mut t.data[i];
            }
            i -= t.data.len();
        }
        panic!("flat parameter index out of range")
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    /// Checks names, shapes and finiteness against `arch`.
    pub fn validate(&self, arch: &ModelArchitecture) -> Result<()> {
        let expected = arch.param_shapes();
        if expected.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for ((name, shape), t) in expected.iter().zip(&self.tensors) {
            if &t.name != name {
                return Err(Error::Checkpoint(format!(
                    "expected tensor `{name}`, found `{}`",
                    t.name
                )));
            }
            if &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::ShapeMismatch {
                    name: name.clone(),
                    expected: shape.clone(),
                    actual: t.shape.clone(),
                });
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter tensor `{name}`")));
            }
        }
        Ok(())
    }
}

fn im2col<T: Scalar>(input: &[T], c: usize, h: usize, w: usize, cols: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &input[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &mut cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let dst = &mut row[y * w..(y + 1) * w];
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            dst[0] = T::zero();
                            dst[1..].copy_from_slice(&src[..w - 1]);
                        }
                        1 => dst.copy_from_slice(src),
                        _ => {
                            dst[..w - 1].copy_from_slice(&src[1..]);
                            dst[w - 1] = T::zero();
                        }
                    }
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], c: usize, h: usize, w: usize, out: &mut [T]) {
    let hw = h * w;
    out.fill(T::zero());
    for ci in 0..c {
        let plane = &mut out[ci * hw..(ci + 1) * hw];
        for ky in 0..KERNEL {
            for kx in 0..KERNEL {
                let row = &cols[(ci * TAPS + ky * KERNEL + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src = &row[y * w..(y + 1) * w];
                    let dst = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    match kx {
                        0 => {
                            for (d, &s) in dst[..w - 1].iter_mut().zip(&src[1..]) {
                                *d = *d + s;
                            }
                        }
                        1 => {
                            for (d, &s) in dst.iter_mut().zip(src) {
                                *d = *d + s;
                            }
                        }
                        _ => {
                            for (d, &s) in dst[1..].iter_mut().zip(&src[..w - 1]) {
                                *d = *d + s;
                            }
                        }
                    }
                }
            }
        }
    }
}

struct BlockTrace<T> {
    c_in: usize,
    h: usize,
    w: usize,
    cols: Vec<T>,
    act: Vec<T>,
    argmax: Vec<u32>,
}

struct SampleTrace<T> {
    blocks: Vec<BlockTrace<T>>,
    pooled_hw: usize,
    gap: Vec<T>,
}

/// Forward pass for one planar sample; keeps intermediates when `trace`.
fn forward_sample<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    input: &[T],
    trace: bool,
) -> (Vec<T>, Option<SampleTrace<T>>) {
    let (mut h, mut w) = (arch.input_size, arch.input_size);
    let mut c_in = CHANNELS;
    let mut x: Vec<T> = input.to_vec();
    let mut blocks = Vec::with_capacity(arch.widths.len());
    for (b, &c_out) in arch.widths.iter().enumerate() {
        let hw = h * w;
        let k = c_in * TAPS;
        let weight = &params.tensors[2 * b].data;
        let bias = &params.tensors[2 * b + 1].data;
        let mut cols = vec![T::zero(); k * hw];
        im2col(&x, c_in, h, w, &mut cols);
        let mut act = vec![T::zero(); c_out * hw];
        T::gemm(c_out, k, hw, weight, (k, 1), &cols, (hw, 1), T::zero(), &mut act, (hw, 1));
        for (o, row) in act.chunks_exact_mut(hw).enumerate() {
            for v in row {
                let z = *v + bias[o];
                *v = if z > T::zero() { z } else { T::zero() };
            }
        }
        let (ph, pw) = (h / 2, w / 2);
        let mut pooled = vec![T::zero(); c_out * ph * pw];
        let mut argmax = vec![0u32; c_out * ph * pw];
        for o in 0..c_out {
            for py in 0..ph {
                for px in 0..pw {
                    let mut best = o * hw + 2 * py * w + 2 * px;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = o * hw + (2 * py + dy) * w + 2 * px + dx;
                        if act[idx] > act[best] {
                            best = idx;
                        }
                    }
                    let p = o * ph * pw + py * pw + px;
                    pooled[p] = act[best];
                    argmax[p] = best as u32;
                }
            }
        }
        if trace {
            blocks.push(BlockTrace {
                c_in,
                h,
                w,
                cols,
                act,
                argmax,
            });
        }
        x = pooled;
        h /= 2;
        w /= 2;
        c_in = c_out;
    }
    let pooled_hw = h * w;
    let inv = T::of(1.0 / pooled_hw as f64);
    let gap: Vec<T> = x
        .chunks_exact(pooled_hw)
        .map(|plane| plane.iter().fold(T::zero(), |a, &v| a + v) * inv)
        .collect();
    let nb = arch.widths.len();
    let fc_w = &params.tensors[2 * nb].data;
    let fc_b = &params.tensors[2 * nb + 1].data;
    let logits = (0..arch.num_classes)
        .map(|j| {
            gap.iter()
                .zip(&fc_w[j * c_in..(j + 1) * c_in])
                .fold(fc_b[j], |acc, (&g, &wt)| acc + g * wt)
        })
        .collect();
    let trace = trace.then_some(SampleTrace {
        blocks,
        pooled_hw,
        gap,
    });
    (logits, trace)
}

/// Accumulates the gradient of one sample into `grads` given `d loss / d logits`.
fn backward_sample<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    trace: &SampleTrace<T>,
    dlogits: &[T],
    grads: &mut ModelParams<T>,
) {
    let nb = arch.widths.len();
    let c_last = arch.last_width();
    let fc_w = &params.tensors[2 * nb].data;
    let mut dgap = vec![T::zero(); c_last];
    for (j, &dl) in dlogits.iter().enumerate() {
        let gw = &mut grads.tensors[2 * nb].data[j * c_last..(j + 1) * c_last];
        for (c, g) in gw.iter_mut().enumerate() {
            *g = *g + dl * trace.gap[c];
            dgap[c] = dgap[c] + fc_w[j * c_last + c] * dl;
        }
        let gb = &mut grads.tensors[2 * nb + 1].data[j];
        *gb = *gb + dl;
    }
    let inv = T::of(1.0 / trace.pooled_hw as f64);
    let mut dpooled: Vec<T> = dgap
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g * inv, trace.pooled_hw))
        .collect();

    for b in (0..nb).rev() {
        let blk = &trace.blocks[b];
        let c_out = arch.widths[b];
        let hw = blk.h * blk.w;
        let k = blk.c_in * TAPS;
        let mut dact = vec![T::zero(); c_out * hw];
        for (&idx, &g) in blk.argmax.iter().zip(&dpooled) {
            let idx = idx as usize;
            if blk.act[idx] > T::zero() {
                dact[idx] = dact[idx] + g;
            }
        }
        {
            let gbias = &mut grads.tensors[2 * b + 1].data;
            for (o, row) in dact.chunks_exact(hw).enumerate() {
                gbias[o] = row.iter().fold(gbias[o], |a, &v| a + v);
            }
        }
        T::gemm(
            c_out,
            hw,
            k,
            &dact,
            (hw, 1),
            &blk.cols,
            (1, hw),
            T::one(),
            &mut grads.tensors[2 * b].data,
            (k, 1),
        );
        if b > 0 {
            let mut dcols = vec![T::zero(); k * hw];
            T::gemm(
                k,
                c_out,
                hw,
                &params.tensors[2 * b].data,
                (1, k),
                &dact,
                (hw, 1),
                T::zero(),
                &mut dcols,
                (hw, 1),
            );
            let mut dinput = vec![T::zero(); blk.c_in * hw];
            col2im(&dcols, blk.c_in, blk.h, blk.w, &mut dinput);
            dpooled = dinput;
        }
    }
}

fn check_batch<T: Scalar>(arch: &ModelArchitecture, batch: &ImageBatch<T>) -> Result<()> {
    arch.validate()?;
    let per = CHANNELS * arch.input_size * arch.input_size;
    if batch.size != arch.input_size || batch.data.len() != batch.n * per {
        return Err(Error::InvalidInput(format!(
            "batch of {} samples at {}px ({} values) does not match {}px input",
            batch.n,
            batch.size,
            batch.data.len(),
            arch.input_size
        )));
    }
    Ok(())
}

/// Logits, `n × num_classes` row-major.
pub fn forward<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    batch: &ImageBatch<T>,
) -> Result<Vec<T>> {
    check_batch(arch, batch)?;
    let mut logits = Vec::with_capacity(batch.n * arch.num_classes);
    for i in 0..batch.n {
        logits.extend(forward_sample(params, arch, batch.sample(i), false).0);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    Ok(logits)
}

/// Numerically stable softmax of one row.
pub fn softmax<T: Scalar>(row: &[T]) -> Vec<T> {
    let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &v| a + v);
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log softmax(row)[label]` via max-subtraction.
fn row_loss<T: Scalar>(row: &[T], label: usize) -> T {
    let max = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
    let lse = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln() + max;
    lse - row[label]
}

/// Mean cross-entropy over the batch and its gradient w.r.t. the logits,
/// `(softmax − one_hot) / batch_size`.
pub fn cross_entropy<T: Scalar>(
    logits: &[T],
    labels: &[usize],
    num_classes: usize,
) -> Result<(T, Vec<T>)> {
    if logits.len() != labels.len() * num_classes || labels.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{} logits for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let m = T::of(labels.len() as f64);
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks_exact(num_classes).zip(labels) {
        if label >= num_classes {
            return Err(Error::InvalidInput(format!("label {label} out of range")));
        }
        loss = loss + row_loss(row, label);
        for (j, p) in softmax(row).into_iter().enumerate() {
            let target = if j == label { T::one() } else { T::zero() };
            grad.push((p - target) / m);
        }
    }
    Ok((loss / m, grad))
}

/// Mean cross-entropy of the batch and its exact gradient w.r.t. every parameter.
pub fn backward<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    batch: &ImageBatch<T>,
    labels: &[usize],
) -> Result<(T, Gradients<T>)> {
    check_batch(arch, batch)?;
    if labels.len() != batch.n || batch.n == 0 {
        return Err(Error::InvalidInput(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch.n
        )));
    }
    let mut grads = ModelParams::zeros(arch);
    let m = T::of(batch.n as f64);
    let mut loss = T::zero();
    for (i, &label) in labels.iter().enumerate() {
        let (logits, trace) = forward_sample(params, arch, batch.sample(i), true);
        let (sample_loss, dlogits) = cross_entropy(&logits, &[label], arch.num_classes)?;
        loss = loss + sample_loss;
        let dlogits: Vec<T> = dlogits.into_iter().map(|g| g / m).collect();
        backward_sample(params, arch, &trace.expect("traced"), &dlogits, &mut grads);
    }
    Ok((loss / m, grads))
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.weight_decay < 0.0 || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("weight_decay >= 0 and betas in [0, 1) required".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState<T> {
    pub first_moment: Vec<Vec<T>>,
    pub second_moment: Vec<Vec<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect();
        Self {
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }
}

/// One AdamW update with decoupled weight decay (`p ← p·(1 − lr·wd)` before
/// the bias-corrected adaptive step). `step` counts from 1.
pub fn optimizer_step<T: Scalar>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamWState<T>,
    cfg: &TrainConfig,
    step: u64,
) -> Result<()> {
    if step == 0 {
        return Err(Error::InvalidInput("optimizer step index starts at 1".into()));
    }
    if params.tensors.len() != grads.tensors.len() || params.tensors.len() != state.first_moment.len() {
        return Err(Error::InvalidInput("parameter/gradient/state layout mismatch".into()));
    }
    let lr = T::of(cfg.learning_rate);
    let decay = T::of(1.0 - cfg.learning_rate * cfg.weight_decay);
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - cfg.beta1), T::of(1.0 - cfg.beta2));
    let bc1 = T::of(1.0 - cfg.beta1.powf(step as f64));
    let bc2 = T::of(1.0 - cfg.beta2.powf(step as f64));
    let eps = T::of(cfg.epsilon);
    for (i, (p, g)) in params.tensors.iter_mut().zip(&grads.tensors).enumerate() {
        if p.data.len() != g.data.len() {
            return Err(Error::ShapeMismatch {
                name: p.name.clone(),
                expected: p.shape.clone(),
                actual: g.shape.clone(),
            });
        }
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for j in 0..p.data.len() {
            let gj = g.data[j];
            m[j] = b1 * m[j] + one_b1 * gj;
            v[j] = b2 * v[j] + one_b2 * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            p.data[j] = p.data[j] * decay - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Predicted class per sample.
pub fn predict_classes<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    batch: &ImageBatch<T>,
) -> Result<Vec<usize>> {
    let logits = forward(params, arch, batch)?;
    Ok(logits
        .chunks_exact(arch.num_classes)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect())
}

/// Fraction of samples whose argmax matches the label.
pub fn accuracy<T: Scalar>(
    params: &ModelParams<T>,
    arch: &ModelArchitecture,
    batch: &ImageBatch<T>,
    labels: &[usize],
) -> Result<f64> {
    if batch.n == 0 {
        return Err(Error::InvalidInput("accuracy of an empty batch".into()));
    }
    let predicted = predict_classes(params, arch, batch)?;
    let correct = predicted.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / batch.n as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Fraction in `[0, 1]`; `None` without a validation split.
    pub val_accuracy: Option<f64>,
}

pub const TRAIN_LOG_HEADER: &str = "epoch\ttrain_loss\tval_accuracy";

/// Line-delimited training log: header plus one tab-separated row per epoch
/// (loss to 6 decimals, validation accuracy as a percentage to 2 decimals).
pub fn format_train_log(log: &[EpochLog]) -> String {
    let mut out = format!("{TRAIN_LOG_HEADER}\n");
    for e in log {
        let acc = e
            .val_accuracy
            .map_or_else(|| "undefined".to_string(), |a| format!("{:.2}", a * 100.0));
        out.push_str(&format!("{}\t{:.6}\t{}\n", e.epoch, e.train_loss, acc));
    }
    out
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams<f32>,
    pub log: Vec<EpochLog>,
    /// Epoch (1-based) the returned parameters come from; 0 for the initialization.
    pub best_epoch: usize,
    pub best_val_accuracy: Option<f64>,
}

/// In-memory labeled images.
#[derive(Clone, Debug)]
pub struct LabeledImages {
    pub images: ImageBatch<f32>,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    /// Every record of `manifest`, resized to `size`.
    pub fn load(manifest: &Manifest, root: &Path, size: usize) -> Result<Self> {
        let indices: Vec<usize> = (0..manifest.len()).collect();
        let (images, labels) = load_batch(manifest, root, &indices, size)?;
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn gather(&self, indices: &[usize]) -> LabeledImages {
        let per = self.images.sample_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(self.images.sample(i));
        }
        LabeledImages {
            images: ImageBatch {
                n: indices.len(),
                size: self.images.size,
                data,
            },
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

const INIT_STREAM: u64 = 0;
const SHUFFLE_STREAM: u64 = 1;

/// Seeded mini-batch AdamW training; returns the parameters with the best
/// validation accuracy (earliest epoch on ties, final epoch without validation).
pub fn train(
    train_set: &LabeledImages,
    val_set: Option<&LabeledImages>,
    arch: &ModelArchitecture,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    arch.validate()?;
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::InvalidInput("empty training split".into()));
    }
    let val_set = val_set.filter(|v| !v.is_empty());
    let mut params = ModelParams::<f32>::init(arch, seed::derive(cfg.seed, INIT_STREAM));
    let mut state = AdamWState::new(&params);
    let mut rng = seed::rng(seed::derive(cfg.seed, SHUFFLE_STREAM));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, ModelParams<f32>)> = None;
    let mut step = 0u64;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train_set.gather(chunk);
            let (loss, grads) = backward(&params, arch, &batch.images, &batch.labels)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
            }
            step += 1;
            optimizer_step(&mut params, &grads, &mut state, cfg, step)?;
            loss_sum += loss as f64 * chunk.len() as f64;
        }
        let val_accuracy = match val_set {
            Some(v) => Some(accuracy(&params, arch, &v.images, &v.labels)?),
            None => None,
        };
        let train_loss = loss_sum / train_set.len() as f64;
        log::info!(
            "epoch {epoch}: loss {train_loss:.4}, val acc {}",
            val_accuracy.map_or("-".into(), |a| format!("{:.2}%", a * 100.0))
        );
        log.push(EpochLog {
            epoch,
            train_loss,
            val_accuracy,
        });
        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, params.clone()));
            }
        }
    }
    let (params, best_epoch, best_val_accuracy) = match best {
        Some((acc, epoch, p)) => (p, epoch, Some(acc)),
        None => (params, cfg.epochs, None),
    };
    Ok(TrainOutcome {
        params,
        log,
        best_epoch,
        best_val_accuracy,
    })
}

/// A trained network ready for single-image inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub arch: ModelArchitecture,
    pub params: ModelParams<f32>,
}

impl Model {
    pub fn new(arch: ModelArchitecture, params: ModelParams<f32>) -> Result<Self> {
        arch.validate()?;
        params.validate(&arch)?;
        Ok(Self { arch, params })
    }

    /// Class probabilities for planar normalized input at the model's size.
    pub fn probabilities_normalized(&self, input: &[f32]) -> Result<[f64; NUM_CLASSES]> {
        let batch = ImageBatch {
            n: 1,
            size: self.arch.input_size,
            data: input.to_vec(),
        };
        let logits = forward(&self.params, &self.arch, &batch)?;
        let row: Vec<f64> = logits.iter().map(|&v| v as f64).collect();
        let p = softmax(&row);
        Ok([p[0], p[1], p[2], p[3]])
    }

    /// Resizes and normalizes exactly like dataset loading, then classifies.
    pub fn probabilities(&self, img: &ImageBuffer) -> Result<[f64; NUM_CLASSES]> {
        self.probabilities_normalized(&crate::dataset::normalize_image(img, self.arch.input_size))
    }

    pub fn classify(&self, img: &ImageBuffer) -> Result<(ActionKind, [f64; NUM_CLASSES])> {
        let p = self.probabilities(img)?;
        Ok((argmax_action(&p), p))
    }
}

pub fn argmax_action(p: &[f64; NUM_CLASSES]) -> ActionKind {
    let mut best = 0;
    for j in 1..NUM_CLASSES {
        if p[j] > p[best] {
            best = j;
        }
    }
    ActionKind::from_index(best).expect("index below NUM_CLASSES")
}

// Checkpoint layout (all integers u32 little-endian, values f32 little-endian):
//   magic "MFCK", version
//   input_size, num_classes, block count, block widths...
//   tensor count, then per tensor: name length, UTF-8 name, rank, dims..., values
const CHECKPOINT_MAGIC: &[u8; 4] = b"MFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint(params: &ModelParams<f32>, arch: &ModelArchitecture) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + params.len() * 4);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    put_u32(&mut buf, arch.input_size);
    put_u32(&mut buf, arch.num_classes);
    put_u32(&mut buf, arch.widths.len());
    for &w in &arch.widths {
        put_u32(&mut buf, w);
    }
    put_u32(&mut buf, params.tensors.len());
    for t in &params.tensors {
        put_u32(&mut buf, t.name.len());
        buf.extend_from_slice(t.name.as_bytes());
        put_u32(&mut buf, t.shape.len());
        for &d in &t.shape {
            put_u32(&mut buf, d);
        }
        for v in &t.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated file while reading {what} at byte {}", self.pos))
        })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams<f32>, ModelArchitecture)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a motionforge checkpoint".into()));
    }
    let version = r.u32("version")? as u32;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let input_size = r.u32("input size")?;
    let num_classes = r.u32("class count")?;
    let blocks = r.u32("block count")?;
    if blocks > 64 {
        return Err(Error::Checkpoint(format!("implausible block count {blocks}")));
    }
    let widths = (0..blocks).map(|_| r.u32("block width")).collect::<Result<Vec<_>>>()?;
    let arch = ModelArchitecture {
        input_size,
        widths,
        num_classes,
    };
    let count = r.u32("tensor count")?;
    let mut tensors = Vec::with_capacity(count.min(256));
    for _ in 0..count {
        let name_len = r.u32("tensor name length")?;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("tensor rank")?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("implausible rank {rank} for `{name}`")));
        }
        let shape = (0..rank).map(|_| r.u32("tensor dim")).collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("oversized tensor `{name}`")))?;
        let raw = r.take(n.saturating_mul(4), &format!("values of `{name}`"))?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        tensors.push(Tensor { name, shape, data });
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    arch.validate()?;
    let params = ModelParams { tensors };
    params.validate(&arch)?;
    Ok((params, arch))
}

pub fn save_checkpoint(params: &ModelParams<f32>, arch: &ModelArchitecture, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(params, arch)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams<f32>, ModelArchitecture)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

/// Loads a checkpoint and requires it to fit `expected`; reports the first
/// tensor whose shape differs.
pub fn load_checkpoint_for(path: &Path, expected: &ModelArchitecture) -> Result<ModelParams<f32>> {
    let (params, arch) = load_checkpoint(path)?;
    if &arch != expected {
        params.validate(expected)?;
        return Err(Error::Checkpoint(format!(
            "architecture mismatch: checkpoint {arch:?}, expected {expected:?}"
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_arch() -> ModelArchitecture {
        ModelArchitecture {
            input_size: 8,
            widths: vec![2, 3],
            num_classes: 4,
        }
    }

    fn random_batch<T: Scalar>(n: usize, size: usize, seed_: u64) -> ImageBatch<T> {
        let mut rng = seed::rng(seed_);
        ImageBatch {
            n,
            size,
            data: (0..n * 3 * size * size).map(|_| T::of(rng.random())).collect(),
        }
    }

    #[test]
    fn default_architecture_is_small() {
        let arch = ModelArchitecture::default();
        arch.validate().unwrap();
        assert_eq!(arch.parameter_count(), 448 + 4640 + 18496 + 73856 + 516);
        assert!(arch.parameter_count() < 1_000_000);
        assert_eq!(arch.param_shapes().last().unwrap().1, vec![4]);
    }

    #[test]
    fn im2col_col2im_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        let (c, h, w) = (2, 5, 4);
        let mut rng = seed::rng(1);
        let x: Vec<f64> = (0..c * h * w).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..c * 9 * h * w).map(|_| rng.random()).collect();
        let mut cols = vec![0.0; y.len()];
        im2col(&x, c, h, w, &mut cols);
        let mut back = vec![0.0; x.len()];
        col2im(&y, c, h, w, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn zero_final_layer_gives_uniform_softmax() {
        let arch = tiny_arch();
        let mut params = ModelParams::<f64>::init(&arch, 3);
        for name in ["fc.weight", "fc.bias"] {
            params.get_mut(name).unwrap().data.iter_mut().for_each(|v| *v = 0.0);
        }
        let logits = forward(&params, &arch, &random_batch(3, 8, 4)).unwrap();
        assert!(logits.iter().all(|&v| v == 0.0));
        assert!(softmax(&logits[..4]).iter().all(|&p| p == 0.25));
    }

    #[test]
    fn batch_elements_are_independent() {
        let arch = tiny_arch();
        let params = ModelParams::<f64>::init(&arch, 5);
        let batch = random_batch::<f64>(3, 8, 6);
        let logits = forward(&params, &arch, &batch).unwrap();
        // reversed order and a duplicated sample
        let per = batch.sample_len();
        let mut data = Vec::new();
        for i in [2, 1, 0, 0] {
            data.extend_from_slice(&batch.data[i * per..(i + 1) * per]);
        }
        let permuted = ImageBatch { n: 4, size: 8, data };
        let out = forward(&params, &arch, &permuted).unwrap();
        for (k, i) in [2usize, 1, 0, 0].iter().enumerate() {
            assert_eq!(out[k * 4..k * 4 + 4], logits[i * 4..i * 4 + 4]);
        }
        assert!(forward(&params, &arch, &random_batch::<f64>(1, 6, 1)).is_err());
    }

    #[test]
    fn cross_entropy_closed_forms() {
        let (loss, grad) = cross_entropy(&[0.0f64; 8], &[1, 3], 4).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((grad[1] - (0.25 - 1.0) / 2.0).abs() < 1e-12);
        let logits: Vec<f64> = [0.7f64, 0.1, 0.1, 0.1].iter().map(|p| p.ln()).collect();
        let (loss, _) = cross_entropy(&logits, &[0], 4).unwrap();
        assert!((loss + 0.7f64.ln()).abs() < 1e-12);
        let (loss, _) = cross_entropy(&[800.0f64, 0.0, 0.0, 0.0], &[0], 4).unwrap();
        assert!(loss.abs() < 1e-12);
        assert!(cross_entropy(&[f64::NAN, 0.0, 0.0, 0.0], &[0], 4).is_err());
        assert!(cross_entropy(&[0.0f64; 4], &[4], 4).is_err());
    }

    #[test]
    fn backward_matches_central_differences() {
        let arch = tiny_arch();
        let mut params = ModelParams::<f64>::init(&arch, 7);
        for (i, v) in params.get_mut("conv1.bias").unwrap().data.iter_mut().enumerate() {
            *v = 0.05 * (i as f64 + 1.0);
        }
        let batch = random_batch::<f64>(3, 8, 8);
        let labels = [0, 2, 3];
        let (_, grads) = backward(&params, &arch, &batch, &labels).unwrap();
        let analytic = grads.flat();
        let h = 1e-6;
        for i in 0..params.len() {
            let mut plus = params.clone();
            *plus.flat_mut(i) += h;
            let mut minus = params.clone();
            *minus.flat_mut(i) -= h;
            let lp = cross_entropy(&forward(&plus, &arch, &batch).unwrap(), &labels, 4).unwrap().0;
            let lm = cross_entropy(&forward(&minus, &arch, &batch).unwrap(), &labels, 4).unwrap().0;
            let numeric = (lp - lm) / (2.0 * h);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic[i] - numeric).abs() / denom < 1e-4,
                "param {i}: analytic {} numeric {numeric}",
                analytic[i]
            );
        }
    }

    #[test]
    fn dead_channel_has_zero_gradient() {
        let arch = tiny_arch();
        let mut params = ModelParams::<f64>::init(&arch, 9);
        // Channel 0 of conv1 feeds conv2 only; zero its outgoing weights.
        let w2 = params.get_mut("conv2.weight").unwrap();
        for o in 0..3 {
            for t in 0..9 {
                w2.data[o * 2 * 9 + t] = 0.0;
            }
        }
        let (_, grads) = backward(&params, &arch, &random_batch(2, 8, 10), &[1, 2]).unwrap();
        let g1 = grads.get("conv1.weight").unwrap();
        assert!(g1.data[..27].iter().all(|&g| g == 0.0));
        assert_eq!(grads.get("conv1.bias").unwrap().data[0], 0.0);
    }

    #[test]
    fn sum_reduction_is_batch_times_mean() {
        let arch = tiny_arch();
        let params = ModelParams::<f64>::init(&arch, 11);
        let batch = random_batch::<f64>(4, 8, 12);
        let labels = [0, 1, 2, 3];
        let (_, mean_grads) = backward(&params, &arch, &batch, &labels).unwrap();
        let mut sum = vec![0.0; params.len()];
        for i in 0..4 {
            let one = ImageBatch { n: 1, size: 8, data: batch.sample(i).to_vec() };
            let (_, g) = backward(&params, &arch, &one, &labels[i..i + 1]).unwrap();
            for (s, v) in sum.iter_mut().zip(g.flat()) {
                *s += v;
            }
        }
        for (s, m) in sum.iter().zip(mean_grads.flat()) {
            assert!((s - 4.0 * m).abs() < 1e-12);
        }
    }

    #[test]
    fn label_permutation_leaves_loss_invariant() {
        let arch = tiny_arch();
        let params = ModelParams::<f64>::init(&arch, 13);
        let batch = random_batch::<f64>(3, 8, 14);
        let labels = [0, 1, 3];
        let perm = [2usize, 0, 3, 1];
        let mut permuted = params.clone();
        let c = 3;
        for j in 0..4 {
            let src_w = params.get("fc.weight").unwrap().data[j * c..(j + 1) * c].to_vec();
            permuted.get_mut("fc.weight").unwrap().data[perm[j] * c..(perm[j] + 1) * c].copy_from_slice(&src_w);
            permuted.get_mut("fc.bias").unwrap().data[perm[j]] = params.get("fc.bias").unwrap().data[j];
        }
        let plabels: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let a = cross_entropy(&forward(&params, &arch, &batch).unwrap(), &labels, 4).unwrap().0;
        let b = cross_entropy(&forward(&permuted, &arch, &batch).unwrap(), &plabels, 4).unwrap().0;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn optimizer_fixed_points_and_decay() {
        let arch = tiny_arch();
        let params = ModelParams::<f64>::init(&arch, 15);
        let zero = ModelParams::zeros(&arch);
        let cfg = TrainConfig {
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let mut p = params.clone();
        let mut st = AdamWState::new(&p);
        optimizer_step(&mut p, &zero, &mut st, &cfg, 1).unwrap();
        assert_eq!(p, params);

        let cfg = TrainConfig {
            weight_decay: 0.01,
            learning_rate: 0.001,
            ..TrainConfig::default()
        };
        let mut p = params.clone();
        let mut st = AdamWState::new(&p);
        optimizer_step(&mut p, &zero, &mut st, &cfg, 1).unwrap();
        for (a, b) in p.flat().iter().zip(params.flat()) {
            assert!((a - b * (1.0 - 1e-5)).abs() <= 1e-15 * b.abs().max(1e-300));
        }
        assert!(optimizer_step(&mut p, &zero, &mut st, &cfg, 0).is_err());
    }

    #[test]
    fn optimizer_matches_scalar_hand_trace() {
        // One-parameter model traced by hand through three steps.
        let cfg = TrainConfig {
            learning_rate: 0.1,
            weight_decay: 0.5,
            ..TrainConfig::default()
        };
        let grads = [0.5f64, -1.0, 2.0];
        let mut expected = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for (t, g) in grads.iter().enumerate() {
            let t = (t + 1) as i32;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let m_hat = m / (1.0 - 0.9f64.powi(t));
            let v_hat = v / (1.0 - 0.999f64.powi(t));
            expected = expected * (1.0 - 0.1 * 0.5) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        }
        let mut p = ModelParams {
            tensors: vec![Tensor { name: "w".into(), shape: vec![1], data: vec![1.0f64] }],
        };
        let mut st = AdamWState::new(&p);
        for (t, g) in grads.iter().enumerate() {
            let gp = ModelParams {
                tensors: vec![Tensor { name: "w".into(), shape: vec![1], data: vec![*g] }],
            };
            optimizer_step(&mut p, &gp, &mut st, &cfg, t as u64 + 1).unwrap();
        }
        assert!((p.tensors[0].data[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn init_is_seeded() {
        let arch = ModelArchitecture::default();
        assert_eq!(ModelParams::<f32>::init(&arch, 1), ModelParams::<f32>::init(&arch, 1));
        assert_ne!(ModelParams::<f32>::init(&arch, 1), ModelParams::<f32>::init(&arch, 2));
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let arch = tiny_arch();
        let data = LabeledImages {
            images: random_batch(4, 8, 16),
            labels: vec![0, 1, 2, 3],
        };
        let cfg = TrainConfig {
            epochs: 0,
            seed: 3,
            ..TrainConfig::default()
        };
        let out = train(&data, None, &arch, &cfg).unwrap();
        assert_eq!(out.params, ModelParams::init(&arch, seed::derive(3, INIT_STREAM)));
        assert!(out.log.is_empty());
    }

    #[test]
    fn checkpoint_roundtrip_and_corruption() {
        let arch = tiny_arch();
        let params = ModelParams::<f32>::init(&arch, 17);
        let bytes = encode_checkpoint(&params, &arch);
        let (p2, a2) = decode_checkpoint(&bytes).unwrap();
        assert_eq!(a2, arch);
        assert!(p2.flat().iter().zip(params.flat()).all(|(a, b)| a.to_bits() == b.to_bits()));

        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(decode_checkpoint(&bytes[..cut]), Err(Error::Checkpoint(_))));
        }
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(decode_checkpoint(&wrong_version).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn checkpoint_from_other_architecture_names_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let other = ModelArchitecture {
            input_size: 8,
            widths: vec![2, 5],
            num_classes: 4,
        };
        save_checkpoint(&ModelParams::init(&other, 1), &other, &path).unwrap();
        match load_checkpoint_for(&path, &tiny_arch()).unwrap_err() {
            Error::ShapeMismatch { name, .. } => assert_eq!(name, "conv2.weight"),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn train_log_format() {
        let log = [EpochLog { epoch: 1, train_loss: 1.5, val_accuracy: Some(0.875) }];
        assert_eq!(format_train_log(&log), "epoch\ttrain_loss\tval_accuracy\n1\t1.500000\t87.50\n");
    }
}
