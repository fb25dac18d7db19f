use std::fmt::Debug;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive};
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datasets::NormalizationStats;
use crate::imagecore::Image;
use crate::par::{self, Exec};
use crate::seeding;
use crate::NUM_CLASSES;

const C1: usize = 8;
const C2: usize = 16;
/// Samples per gradient work unit. Fixed so reductions never depend on the
/// thread count.
const GRAD_CHUNK: usize = 8;

pub trait Tensor: Float + FromPrimitive + AddAssign + Default + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + AddAssign + Default + Debug + Send + Sync + 'static> Tensor for T {}

#[inline]
fn cast<T: Tensor>(v: f64) -> T {
    T::from_f64(v).expect("representable")
}

pub type Normalization = NormalizationStats;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input is {got:?}, model expects {expected}x{expected}")]
    InputSize { expected: usize, got: (usize, usize) },
    #[error("input size {0} must be a positive multiple of 4")]
    BadSize(usize),
    #[error("label {0} out of range")]
    BadLabel(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Architecture {
    #[default]
    TinyCnn,
    /// Multinomial logistic regression on normalized pixels.
    Linear,
}

/// Parameter tensor shapes in storage order.
pub(crate) fn shapes(arch: Architecture, size: usize) -> Vec<Vec<usize>> {
    match arch {
        Architecture::TinyCnn => {
            let q = size / 4;
            vec![vec![C1, 3, 3, 3], vec![C1], vec![C2, C1, 3, 3], vec![C2], vec![NUM_CLASSES, C2 * q * q], vec![NUM_CLASSES]]
        }
        Architecture::Linear => vec![vec![NUM_CLASSES, 3 * size * size], vec![NUM_CLASSES]],
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    wd: usize,
    bd: usize,
    total: usize,
}

impl Layout {
    fn new(arch: Architecture, size: usize) -> Self {
        let mut offs = Vec::new();
        let mut at = 0;
        for s in shapes(arch, size) {
            offs.push(at);
            at += s.iter().product::<usize>();
        }
        match arch {
            Architecture::TinyCnn => {
                Layout { w1: offs[0], b1: offs[1], w2: offs[2], b2: offs[3], wd: offs[4], bd: offs[5], total: at }
            }
            Architecture::Linear => Layout { w1: 0, b1: 0, w2: 0, b2: 0, wd: offs[0], bd: offs[1], total: at },
        }
    }
}

/// Parameters, architecture and the input normalization they were trained with.
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T> {
    pub arch: Architecture,
    pub input_size: usize,
    pub params: Vec<T>,
    pub norm: Normalization,
}

/// Mean softmax cross-entropy of one logit row.
pub fn cross_entropy<T: Tensor>(logits: &[T], label: usize) -> T {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp()).ln() + max;
    lse - logits[label]
}

fn softmax_grad<T: Tensor>(logits: &[T], label: usize, scale: T, out: &mut [T]) {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let sum = logits.iter().fold(T::zero(), |a, &z| a + (z - max).exp());
    for (k, (o, &z)) in out.iter_mut().zip(logits).enumerate() {
        let p = (z - max).exp() / sum;
        *o = (p - if k == label { T::one() } else { T::zero() }) * scale;
    }
}

/// Per-sample activations and gradient buffers for the CNN.
struct Workspace<T> {
    xp: Vec<T>,
    z1: Vec<T>,
    arg1: Vec<u32>,
    p1p: Vec<T>,
    z2: Vec<T>,
    arg2: Vec<u32>,
    p2: Vec<T>,
    logits: Vec<T>,
    dlogits: Vec<T>,
    dz2: Vec<T>,
    dp1p: Vec<T>,
    dz1: Vec<T>,
}

impl<T: Tensor> Workspace<T> {
    fn new(size: usize) -> Self {
        let (h, q) = (size / 2, size / 4);
        let z = T::zero();
        Self {
            xp: vec![z; 3 * (size + 2) * (size + 2)],
            z1: vec![z; C1 * size * size],
            arg1: vec![0; C1 * h * h],
            p1p: vec![z; C1 * (h + 2) * (h + 2)],
            z2: vec![z; C2 * h * h],
            arg2: vec![0; C2 * q * q],
            p2: vec![z; C2 * q * q],
            logits: vec![z; NUM_CLASSES],
            dlogits: vec![z; NUM_CLASSES],
            dz2: vec![z; C2 * h * h],
            dp1p: vec![z; C1 * (h + 2) * (h + 2)],
            dz1: vec![z; C1 * size * size],
        }
    }
}

/// 3x3 "same" convolution over a zero-padded input.
fn conv_forward<T: Tensor>(inp_p: &[T], cin: usize, cout: usize, n: usize, w: &[T], b: &[T], out: &mut [T]) {
    let np = n + 2;
    for o in 0..cout {
        let plane = &mut out[o * n * n..(o + 1) * n * n];
        plane.fill(b[o]);
        for i in 0..cin {
            let src = &inp_p[i * np * np..(i + 1) * np * np];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = w[((o * cin + i) * 3 + ky) * 3 + kx];
                    for y in 0..n {
                        let row_in = &src[(y + ky) * np + kx..(y + ky) * np + kx + n];
                        let row_out = &mut plane[y * n..(y + 1) * n];
                        for (d, &s) in row_out.iter_mut().zip(row_in) {
                            *d += wv * s;
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight/bias gradients and, if `dinp_p` is given, the padded
/// input gradient.
#[allow(clippy::too_many_arguments)]
fn conv_backward<T: Tensor>(
    inp_p: &[T],
    cin: usize,
    cout: usize,
    n: usize,
    w: &[T],
    dz: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dinp_p: Option<&mut [T]>,
) {
    let np = n + 2;
    for o in 0..cout {
        let g = &dz[o * n * n..(o + 1) * n * n];
        db[o] += g.iter().fold(T::zero(), |a, &v| a + v);
        for i in 0..cin {
            let src = &inp_p[i * np * np..(i + 1) * np * np];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((o * cin + i) * 3 + ky) * 3 + kx;
                    let mut acc = T::zero();
                    for y in 0..n {
                        let row_in = &src[(y + ky) * np + kx..(y + ky) * np + kx + n];
                        let row_g = &g[y * n..(y + 1) * n];
                        for (&a, &b) in row_g.iter().zip(row_in) {
                            acc += a * b;
                        }
                    }
                    dw[widx] += acc;
                    if let Some(dinp) = dinp_p.as_deref_mut() {
                        let wv = w[widx];
                        let dst = &mut dinp[i * np * np..(i + 1) * np * np];
                        for y in 0..n {
                            let row_g = &g[y * n..(y + 1) * n];
                            let row_d = &mut dst[(y + ky) * np + kx..(y + ky) * np + kx + n];
                            for (d, &v) in row_d.iter_mut().zip(row_g) {
                                *d += wv * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2x2 max-pool of ReLU(z). Writes pooled values through `write` and the
/// winning flat index within each channel plane into `arg`.
fn relu_pool<T: Tensor>(z: &[T], ch: usize, n: usize, arg: &mut [u32], mut write: impl FnMut(usize, usize, usize, T)) {
    let m = n / 2;
    for c in 0..ch {
        let plane = &z[c * n * n..(c + 1) * n * n];
        for y in 0..m {
            for x in 0..m {
                let cands = [(2 * y) * n + 2 * x, (2 * y) * n + 2 * x + 1, (2 * y + 1) * n + 2 * x, (2 * y + 1) * n + 2 * x + 1];
                let mut best = cands[0];
                for &k in &cands[1..] {
                    if plane[k] > plane[best] {
                        best = k;
                    }
                }
                arg[(c * m + y) * m + x] = best as u32;
                write(c, y, x, plane[best].max(T::zero()));
            }
        }
    }
}

impl<T: Tensor> Model<T> {
    pub fn new(arch: Architecture, input_size: usize, norm: Normalization, seed: u64) -> Result<Self, ModelError> {
        if input_size == 0 || !input_size.is_multiple_of(4) {
            return Err(ModelError::BadSize(input_size));
        }
        let layout = Layout::new(arch, input_size);
        let mut params = vec![T::zero(); layout.total];
        let mut rng = seeding::rng(seeding::derive(seed, 0x1417));
        let mut he = |range: std::ops::Range<usize>, fan_in: usize, gain: f64| {
            let dist = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("valid std");
            for p in &mut params[range] {
                *p = cast(dist.sample(&mut rng));
            }
        };
        match arch {
            Architecture::TinyCnn => {
                he(layout.w1..layout.b1, 27, 2.0);
                he(layout.w2..layout.b2, C1 * 9, 2.0);
                he(layout.wd..layout.bd, layout.bd - layout.wd, 1.0 * NUM_CLASSES as f64);
            }
            Architecture::Linear => he(layout.wd..layout.bd, (layout.bd - layout.wd) / NUM_CLASSES, 1.0),
        }
        Ok(Self { arch, input_size, params, norm })
    }

    fn layout(&self) -> Layout {
        Layout::new(self.arch, self.input_size)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Offsets of the dense layer's weights and biases in `params`.
    pub fn dense_range(&self) -> std::ops::Range<usize> {
        let l = self.layout();
        l.wd..l.total
    }

    pub fn cast<U: Tensor>(&self) -> Model<U> {
        Model {
            arch: self.arch,
            input_size: self.input_size,
            params: self.params.iter().map(|p| cast(p.to_f64().expect("finite"))).collect(),
            norm: self.norm,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Normalized channel-major tensor for one image.
    pub fn prepare(&self, image: &Image) -> Result<Vec<T>, ModelError> {
        let n = self.input_size;
        if image.dims() != (n, n) {
            return Err(ModelError::InputSize { expected: n, got: image.dims() });
        }
        let mut out = vec![T::zero(); 3 * n * n];
        let scale: [f64; 3] = std::array::from_fn(|c| 1.0 / self.norm.std[c]);
        for (p, px) in image.data().chunks_exact(3).enumerate() {
            for c in 0..3 {
                out[c * n * n + p] = cast((f64::from(px[c]) - self.norm.mean[c]) * scale[c]);
            }
        }
        Ok(out)
    }

    fn forward_ws(&self, x: &[T], ws: &mut Workspace<T>) {
        let l = self.layout();
        let n = self.input_size;
        let (h, q) = (n / 2, n / 4);
        let p = &self.params;
        let np = n + 2;
        for c in 0..3 {
            for y in 0..n {
                let dst = &mut ws.xp[c * np * np + (y + 1) * np + 1..][..n];
                dst.copy_from_slice(&x[c * n * n + y * n..][..n]);
            }
        }
        conv_forward(&ws.xp, 3, C1, n, &p[l.w1..l.b1], &p[l.b1..l.w2], &mut ws.z1);
        let hp = h + 2;
        let p1p = &mut ws.p1p;
        relu_pool(&ws.z1, C1, n, &mut ws.arg1, |c, y, x, v| p1p[c * hp * hp + (y + 1) * hp + x + 1] = v);
        conv_forward(&ws.p1p, C1, C2, h, &p[l.w2..l.b2], &p[l.b2..l.wd], &mut ws.z2);
        let p2 = &mut ws.p2;
        relu_pool(&ws.z2, C2, h, &mut ws.arg2, |c, y, x, v| p2[(c * q + y) * q + x] = v);
        dense(&p[l.wd..l.bd], &p[l.bd..l.total], &ws.p2, &mut ws.logits);
    }

    fn backward_ws(&self, ws: &mut Workspace<T>, grad: &mut [T]) {
        let l = self.layout();
        let n = self.input_size;
        let (h, q) = (n / 2, n / 4);
        let hp = h + 2;
        let p = &self.params;
        let feat = ws.p2.len();
        // dense
        let mut dp2 = vec![T::zero(); feat];
        for k in 0..NUM_CLASSES {
            let g = ws.dlogits[k];
            grad[l.bd + k] += g;
            let wrow = &p[l.wd + k * feat..l.wd + (k + 1) * feat];
            let grow = &mut grad[l.wd + k * feat..l.wd + (k + 1) * feat];
            for j in 0..feat {
                grow[j] += g * ws.p2[j];
                dp2[j] += g * wrow[j];
            }
        }
        // pool2 + relu
        ws.dz2.fill(T::zero());
        for c in 0..C2 {
            for i in 0..q * q {
                let a = ws.arg2[c * q * q + i] as usize;
                if ws.z2[c * h * h + a] > T::zero() {
                    ws.dz2[c * h * h + a] = dp2[c * q * q + i];
                }
            }
        }
        ws.dp1p.fill(T::zero());
        let (gw2, rest) = grad[l.w2..l.wd].split_at_mut(l.b2 - l.w2);
        conv_backward(&ws.p1p, C1, C2, h, &p[l.w2..l.b2], &ws.dz2, gw2, rest, Some(&mut ws.dp1p));
        // pool1 + relu
        ws.dz1.fill(T::zero());
        for c in 0..C1 {
            for y in 0..h {
                for x in 0..h {
                    let a = ws.arg1[(c * h + y) * h + x] as usize;
                    if ws.z1[c * n * n + a] > T::zero() {
                        ws.dz1[c * n * n + a] = ws.dp1p[c * hp * hp + (y + 1) * hp + x + 1];
                    }
                }
            }
        }
        let (gw1, rest) = grad[l.w1..l.w2].split_at_mut(l.b1 - l.w1);
        conv_backward(&ws.xp, 3, C1, n, &p[l.w1..l.b1], &ws.dz1, gw1, rest, None);
    }

    /// Logits for one prepared tensor.
    pub fn logits_prepared(&self, x: &[T]) -> [T; NUM_CLASSES] {
        let mut out = [T::zero(); NUM_CLASSES];
        match self.arch {
            Architecture::TinyCnn => {
                let mut ws = Workspace::new(self.input_size);
                self.forward_ws(x, &mut ws);
                out.copy_from_slice(&ws.logits);
            }
            Architecture::Linear => {
                let l = self.layout();
                dense(&self.params[l.wd..l.bd], &self.params[l.bd..l.total], x, &mut out);
            }
        }
        out
    }

    /// Logits for a batch of images, shape (batch, 10).
    pub fn forward(&self, images: &[Image]) -> Result<Vec<[T; NUM_CLASSES]>, ModelError> {
        self.forward_with(images, Exec::default())
    }

    pub fn forward_with(&self, images: &[Image], exec: Exec) -> Result<Vec<[T; NUM_CLASSES]>, ModelError> {
        let n = self.input_size;
        if let Some(bad) = images.iter().find(|im| im.dims() != (n, n)) {
            return Err(ModelError::InputSize { expected: n, got: bad.dims() });
        }
        Ok(par::map(exec, images, |im| self.logits_prepared(&self.prepare(im).expect("checked dims"))))
    }

    /// Mean cross-entropy and its gradient for prepared inputs.
    pub fn loss_and_grad_prepared(&self, inputs: &[&[T]], labels: &[u8], exec: Exec) -> (T, Vec<T>) {
        assert_eq!(inputs.len(), labels.len());
        let batch = inputs.len();
        let scale = T::one() / cast(batch.max(1) as f64);
        let idx: Vec<usize> = (0..batch).collect();
        let chunks: Vec<&[usize]> = idx.chunks(GRAD_CHUNK).collect();
        let total = self.params.len();
        let partial = |chunk: &&[usize]| -> (T, Vec<T>) {
            let mut grad = vec![T::zero(); total];
            let mut loss = T::zero();
            let mut ws = (self.arch == Architecture::TinyCnn).then(|| Workspace::new(self.input_size));
            for &i in chunk.iter() {
                let label = usize::from(labels[i]);
                match ws.as_mut() {
                    Some(ws) => {
                        self.forward_ws(inputs[i], ws);
                        loss += cross_entropy(&ws.logits, label);
                        let logits = ws.logits.clone();
                        softmax_grad(&logits, label, scale, &mut ws.dlogits);
                        self.backward_ws(ws, &mut grad);
                    }
                    None => {
                        let l = self.layout();
                        let logits = self.logits_prepared(inputs[i]);
                        loss += cross_entropy(&logits, label);
                        let mut d = [T::zero(); NUM_CLASSES];
                        softmax_grad(&logits, label, scale, &mut d);
                        let feat = inputs[i].len();
                        for k in 0..NUM_CLASSES {
                            grad[l.bd + k] += d[k];
                            let row = &mut grad[l.wd + k * feat..l.wd + (k + 1) * feat];
                            for (g, &x) in row.iter_mut().zip(inputs[i]) {
                                *g += d[k] * x;
                            }
                        }
                    }
                }
            }
            (loss, grad)
        };
        let (loss, grad) = par::map_fold(exec, &chunks, partial, (T::zero(), vec![T::zero(); total]), |(la, mut ga), (lb, gb)| {
            for (a, b) in ga.iter_mut().zip(gb) {
                *a += b;
            }
            (la + lb, ga)
        });
        (loss * scale, grad)
    }

    /// Mean cross-entropy and gradients for a batch of images.
    pub fn loss_and_grad(&self, images: &[Image], labels: &[u8]) -> Result<(T, Vec<T>), ModelError> {
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= NUM_CLASSES) {
            return Err(ModelError::BadLabel(bad));
        }
        let prepared = images.iter().map(|im| self.prepare(im)).collect::<Result<Vec<_>, _>>()?;
        let refs: Vec<&[T]> = prepared.iter().map(|v| v.as_slice()).collect();
        Ok(self.loss_and_grad_prepared(&refs, labels, Exec::default()))
    }

    /// Mean loss only.
    pub fn loss_prepared(&self, inputs: &[&[T]], labels: &[u8], exec: Exec) -> T {
        let losses = par::map_range(exec, inputs.len(), |i| cross_entropy(&self.logits_prepared(inputs[i]), usize::from(labels[i])));
        losses.into_iter().fold(T::zero(), |a, b| a + b) / cast(inputs.len().max(1) as f64)
    }
}

fn dense<T: Tensor>(w: &[T], b: &[T], x: &[T], out: &mut [T]) {
    let feat = x.len();
    for k in 0..out.len() {
        let row = &w[k * feat..(k + 1) * feat];
        out[k] = b[k] + row.iter().zip(x).fold(T::zero(), |a, (&wi, &xi)| a + wi * xi);
    }
}
