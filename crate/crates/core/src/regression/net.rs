//! Convolutional feature extractor plus fully connected head, with a
//! hand-written backward pass. Activations are NHWC; every convolution is
//! 3×3, stride 2, padding 1, lowered to a GEMM through im2col.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::Rng;

use crate::rng::stream;

pub const KERNEL: usize = 3;
pub const STRIDE: usize = 2;
pub const PAD: usize = 1;

pub trait Scalar:
    Copy
    + Send
    + Sync
    + Default
    + PartialOrd
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;

    /// `c = a·b + beta·c` on row-major operands described by strides.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        a: &[Self],
        a_strides: (isize, isize),
        b: &[Self],
        b_strides: (isize, isize),
        beta: Self,
        c: &mut [Self],
    );
}

macro_rules! scalar_impl {
    ($t:ty, $gemm:ident, $exp:path) => {
        impl Scalar for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn exp(self) -> Self {
                $exp(self)
            }
            #[inline]
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            #[inline]
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn gemm(
                m: usize,
                k: usize,
                n: usize,
                a: &[Self],
                a_strides: (isize, isize),
                b: &[Self],
                b_strides: (isize, isize),
                beta: Self,
                c: &mut [Self],
            ) {
                assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
                if m == 0 || n == 0 {
                    return;
                }
                // SAFETY: the strides index within the asserted lengths, and
                // `c` is a distinct, densely packed m×n row-major block.
                unsafe {
                    matrixmultiply::$gemm(
                        m,
                        k,
                        n,
                        1.0,
                        a.as_ptr(),
                        a_strides.0,
                        a_strides.1,
                        b.as_ptr(),
                        b_strides.0,
                        b_strides.1,
                        beta,
                        c.as_mut_ptr(),
                        n as isize,
                        1,
                    );
                }
            }
        }
    };
}

scalar_impl!(f32, sgemm, exp_f32);
scalar_impl!(f64, dgemm, f64::exp);

/// Polynomial `exp` for single precision; within a few ulp of `f32::exp`
/// and cheap enough to vectorize.
#[inline]
fn exp_f32(x: f32) -> f32 {
    const LOG2E: f32 = std::f32::consts::LOG2_E;
    const LN2_HI: f32 = 0.693_359_4;
    const LN2_LO: f32 = -2.121_944_4e-4;
    // 1.5·2²³: adding it rounds to an integer held in the low mantissa bits
    const ROUND: f32 = 12_582_912.0;
    let x = x.clamp(-87.0, 88.0);
    let t = x * LOG2E + ROUND;
    let n = t - ROUND;
    let r = x - n * LN2_HI - n * LN2_LO;
    let p = 1.0
        + r * (1.0
            + r * (0.5
                + r * (1.0 / 6.0 + r * (1.0 / 24.0 + r * (1.0 / 120.0 + r * (1.0 / 720.0))))));
    let k = t.to_bits().wrapping_sub(ROUND.to_bits()).wrapping_add(127);
    p * f32::from_bits(k << 23)
}

/// `c (m×n) = op(a)·op(b) (+ c if accumulate)`, where `a` holds an m×k
/// matrix (k×m when `a_t`) and `b` a k×n matrix (n×k when `b_t`).
#[allow(clippy::too_many_arguments)]
fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    let sa = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let sb = if b_t { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { T::ONE } else { T::ZERO };
    T::gemm(m, k, n, a, sa, b, sb, beta, c);
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

/// SiLU derivative from the pre-activation `x` and its sigmoid `s`.
#[inline]
fn silu_grad<T: Scalar>(x: T, s: T) -> T {
    s * (T::ONE + x * (T::ONE - s))
}

/// Writes the sigmoid of `pre` to `sig` and its SiLU to `act`.
fn activate<T: Scalar>(pre: &[T], sig: &mut [T], act: &mut [T]) {
    let n = pre.len();
    let (sig, act) = (&mut sig[..n], &mut act[..n]);
    for i in 0..n {
        sig[i] = sigmoid(pre[i]);
    }
    for i in 0..n {
        act[i] = pre[i] * sig[i];
    }
}

/// `0.5·x²/β` inside `|x| < β`, `|x| − 0.5·β` outside.
#[inline]
pub fn smooth_l1<T: Scalar>(x: T, beta: T) -> T {
    let a = x.abs();
    let half = T::from_f64(0.5);
    if a < beta {
        half * x * x / beta
    } else {
        a - half * beta
    }
}

#[inline]
pub fn smooth_l1_grad<T: Scalar>(x: T, beta: T) -> T {
    if x.abs() < beta {
        x / beta
    } else if x > T::ZERO {
        T::ONE
    } else {
        -T::ONE
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvShape {
    pub h_in: usize,
    pub w_in: usize,
    pub c_in: usize,
    pub h_out: usize,
    pub w_out: usize,
    pub c_out: usize,
    /// Offset of the `[9·c_in, c_out]` weight block; the bias follows it.
    pub offset: usize,
}

impl ConvShape {
    fn patch(&self) -> usize {
        KERNEL * KERNEL * self.c_in
    }

    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.patch() * self.c_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let s = self.weights().end;
        s..s + self.c_out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseShape {
    pub n_in: usize,
    pub n_out: usize,
    pub activation: bool,
    pub offset: usize,
}

impl DenseShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.n_in * self.n_out
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let s = self.weights().end;
        s..s + self.n_out
    }
}

/// Layer shapes and the layout of the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Architecture {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub convs: Vec<ConvShape>,
    pub dense: Vec<DenseShape>,
    pub param_count: usize,
}

fn out_size(n: usize) -> usize {
    (n + 2 * PAD - KERNEL) / STRIDE + 1
}

impl Architecture {
    /// Every dense layer but the last is followed by SiLU.
    pub fn new(height: usize, width: usize, conv_widths: &[usize], fc_widths: &[usize]) -> Self {
        let (mut h, mut w, mut c) = (height, width, 3);
        let mut offset = 0;
        let mut convs = Vec::new();
        for &c_out in conv_widths {
            let s = ConvShape {
                h_in: h,
                w_in: w,
                c_in: c,
                h_out: out_size(h),
                w_out: out_size(w),
                c_out,
                offset,
            };
            offset = s.bias().end;
            (h, w, c) = (s.h_out, s.w_out, c_out);
            convs.push(s);
        }
        let mut n_in = h * w * c;
        let mut dense = Vec::new();
        for (i, &n_out) in fc_widths.iter().enumerate() {
            let s = DenseShape {
                n_in,
                n_out,
                activation: i + 1 < fc_widths.len(),
                offset,
            };
            offset = s.bias().end;
            n_in = n_out;
            dense.push(s);
        }
        Self {
            height,
            width,
            channels: 3,
            convs,
            dense,
            param_count: offset,
        }
    }

    pub fn input_len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn outputs(&self) -> usize {
        self.dense.last().map_or(0, |d| d.n_out)
    }

    /// Uniform in ±1/√fan_in for weights and biases; the output bias starts
    /// at 0.5, the middle of the label range.
    pub fn init<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut p = vec![T::ZERO; self.param_count];
        let mut rng = stream(seed, "regression/init", 0);
        let mut fill = |r: std::ops::Range<usize>, fan_in: usize, p: &mut [T]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for v in &mut p[r] {
                *v = T::from_f64(rng.random_range(-bound..bound));
            }
        };
        for c in &self.convs {
            fill(c.weights(), c.patch(), &mut p);
            fill(c.bias(), c.patch(), &mut p);
        }
        for d in &self.dense {
            fill(d.weights(), d.n_in, &mut p);
            fill(d.bias(), d.n_in, &mut p);
        }
        if let Some(last) = self.dense.last() {
            for v in &mut p[last.bias()] {
                *v = T::from_f64(0.5);
            }
        }
        p
    }
}

/// Input columns `[lo, hi)` covered by kernel taps of an output column,
/// plus the first tap index inside the image.
fn tap_span(o: usize, size: usize) -> (usize, usize, usize) {
    let start = (o * STRIDE) as isize - PAD as isize;
    let lo = start.max(0) as usize;
    let hi = ((start + KERNEL as isize) as usize).min(size);
    (lo, hi, (lo as isize - start) as usize)
}

fn im2col<T: Scalar>(x: &[T], n: usize, s: &ConvShape, cols: &mut [T]) {
    let patch = s.patch();
    let c = s.c_in;
    let mut rows = cols.chunks_exact_mut(patch);
    for b in 0..n {
        let image = &x[b * s.h_in * s.w_in * c..(b + 1) * s.h_in * s.w_in * c];
        for oy in 0..s.h_out {
            let (y_lo, y_hi, ky0) = tap_span(oy, s.h_in);
            for ox in 0..s.w_out {
                let (x_lo, x_hi, kx0) = tap_span(ox, s.w_in);
                let row = rows.next().expect("cols sized for n");
                if y_hi - y_lo < KERNEL || x_hi - x_lo < KERNEL {
                    row.fill(T::ZERO);
                }
                for (ky, iy) in (ky0..).zip(y_lo..y_hi) {
                    let src = &image[(iy * s.w_in + x_lo) * c..(iy * s.w_in + x_hi) * c];
                    let dst = (ky * KERNEL + kx0) * c;
                    row[dst..dst + src.len()].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im<T: Scalar>(cols: &[T], n: usize, s: &ConvShape, dx: &mut [T]) {
    dx.fill(T::ZERO);
    let patch = s.patch();
    let c = s.c_in;
    let mut rows = cols.chunks_exact(patch);
    for b in 0..n {
        let image = &mut dx[b * s.h_in * s.w_in * c..(b + 1) * s.h_in * s.w_in * c];
        for oy in 0..s.h_out {
            let (y_lo, y_hi, ky0) = tap_span(oy, s.h_in);
            for ox in 0..s.w_out {
                let (x_lo, x_hi, kx0) = tap_span(ox, s.w_in);
                let row = rows.next().expect("cols sized for n");
                for (ky, iy) in (ky0..).zip(y_lo..y_hi) {
                    let dst = &mut image[(iy * s.w_in + x_lo) * c..(iy * s.w_in + x_hi) * c];
                    let src = (ky * KERNEL + kx0) * c;
                    let len = dst.len();
                    for (d, v) in dst.iter_mut().zip(&row[src..src + len]) {
                        *d += *v;
                    }
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (v, b) in row.iter_mut().zip(bias) {
            *v += *b;
        }
    }
}

fn sum_rows<T: Scalar>(d: &[T], width: usize, into: &mut [T]) {
    for row in d.chunks_exact(width) {
        for (acc, v) in into.iter_mut().zip(row) {
            *acc += *v;
        }
    }
}

fn resize<T: Scalar>(v: &mut Vec<T>, len: usize) {
    v.clear();
    v.resize(len, T::ZERO);
}

/// Buffers for one forward/backward pass, kept between calls so repeated
/// passes do not allocate.
#[derive(Debug, Default)]
pub struct Workspace<T> {
    n: usize,
    cols: Vec<Vec<T>>,
    pre: Vec<Vec<T>>,
    sig: Vec<Vec<T>>,
    act: Vec<Vec<T>>,
    delta: Vec<Vec<T>>,
    dcols: Vec<T>,
    grad: Vec<T>,
    loss: T,
}

impl<T: Scalar> Workspace<T> {
    pub fn new() -> Self {
        Self {
            n: 0,
            cols: Vec::new(),
            pre: Vec::new(),
            sig: Vec::new(),
            act: Vec::new(),
            delta: Vec::new(),
            dcols: Vec::new(),
            grad: Vec::new(),
            loss: T::ZERO,
        }
    }

    /// Gradient from the last [`Workspace::loss_and_grad`] call.
    pub fn grad(&self) -> &[T] {
        &self.grad
    }

    /// Loss from the last [`Workspace::loss_and_grad`] call.
    pub fn loss(&self) -> T {
        self.loss
    }

    fn layout(&mut self, arch: &Architecture, n: usize) {
        let layers = arch.convs.len() + arch.dense.len();
        self.n = n;
        for v in [&mut self.pre, &mut self.sig, &mut self.act, &mut self.delta] {
            v.resize_with(layers, Vec::new);
        }
        self.cols.resize_with(arch.convs.len(), Vec::new);
        let widths = arch
            .convs
            .iter()
            .map(|s| n * s.h_out * s.w_out * s.c_out)
            .chain(arch.dense.iter().map(|d| n * d.n_out));
        for (l, len) in widths.enumerate() {
            resize(&mut self.pre[l], len);
            resize(&mut self.act[l], len);
            resize(&mut self.delta[l], len);
            resize(&mut self.sig[l], len);
        }
    }

    /// Raw (unclamped) outputs, `n × outputs` row-major.
    pub fn forward(&mut self, arch: &Architecture, params: &[T], x: &[T], n: usize) -> &[T] {
        assert_eq!(params.len(), arch.param_count);
        assert_eq!(x.len(), n * arch.input_len());
        self.layout(arch, n);
        for (l, s) in arch.convs.iter().enumerate() {
            let input = if l == 0 { x } else { &self.act[l - 1] };
            let rows = n * s.h_out * s.w_out;
            resize(&mut self.cols[l], rows * s.patch());
            im2col(input, n, s, &mut self.cols[l]);
            let pre = &mut self.pre[l];
            matmul(rows, s.patch(), s.c_out, &self.cols[l], false, &params[s.weights()], false, pre, false);
            add_bias(pre, &params[s.bias()]);
            activate(pre, &mut self.sig[l], &mut self.act[l]);
        }
        let base = arch.convs.len();
        for (j, d) in arch.dense.iter().enumerate() {
            let l = base + j;
            let (done, rest) = self.act.split_at_mut(l);
            let input = if l == 0 { x } else { &done[l - 1] };
            let pre = &mut self.pre[l];
            matmul(n, d.n_in, d.n_out, input, false, &params[d.weights()], false, pre, false);
            add_bias(pre, &params[d.bias()]);
            if d.activation {
                activate(pre, &mut self.sig[l], &mut rest[0]);
            } else {
                rest[0].copy_from_slice(pre);
            }
        }
        self.act.last().map_or(&[], Vec::as_slice)
    }

    /// Sum over the chunk of `smooth_l1(out − y)` and its gradient, both
    /// scaled by `scale`; read them back with [`Workspace::loss`] and
    /// [`Workspace::grad`]. With `scale = 1/(batch·outputs)` the chunk
    /// results add up to the batch mean loss and its gradient.
    #[allow(clippy::too_many_arguments)]
    pub fn loss_and_grad(
        &mut self,
        arch: &Architecture,
        params: &[T],
        x: &[T],
        y: &[T],
        n: usize,
        beta: T,
        scale: T,
    ) -> T {
        self.forward(arch, params, x, n);
        let last = arch.convs.len() + arch.dense.len() - 1;
        assert_eq!(y.len(), self.act[last].len());
        let mut loss = T::ZERO;
        for ((g, &o), &t) in self.delta[last].iter_mut().zip(&self.act[last]).zip(y) {
            loss += smooth_l1(o - t, beta);
            *g = smooth_l1_grad(o - t, beta) * scale;
        }
        self.loss = loss * scale;
        resize(&mut self.grad, arch.param_count);
        let grad = &mut self.grad;

        let base = arch.convs.len();
        for (j, d) in arch.dense.iter().enumerate().rev() {
            let l = base + j;
            let (below, here) = self.delta.split_at_mut(l);
            let delta = &mut here[0];
            if d.activation {
                silu_backward(delta, &self.pre[l], &self.sig[l]);
            }
            let input = if l == 0 { x } else { &self.act[l - 1] };
            matmul(d.n_in, n, d.n_out, input, true, delta, false, &mut grad[d.weights()], true);
            sum_rows(delta, d.n_out, &mut grad[d.bias()]);
            if l > 0 {
                matmul(n, d.n_out, d.n_in, delta, false, &params[d.weights()], true, &mut below[l - 1], false);
            }
        }
        for (l, s) in arch.convs.iter().enumerate().rev() {
            let (below, here) = self.delta.split_at_mut(l);
            let delta = &mut here[0];
            silu_backward(delta, &self.pre[l], &self.sig[l]);
            let rows = n * s.h_out * s.w_out;
            matmul(s.patch(), rows, s.c_out, &self.cols[l], true, delta, false, &mut grad[s.weights()], true);
            sum_rows(delta, s.c_out, &mut grad[s.bias()]);
            if l > 0 {
                resize(&mut self.dcols, rows * s.patch());
                matmul(rows, s.c_out, s.patch(), delta, false, &params[s.weights()], true, &mut self.dcols, false);
                col2im(&self.dcols, n, s, &mut below[l - 1]);
            }
        }
        self.loss
    }
}

fn silu_backward<T: Scalar>(delta: &mut [T], pre: &[T], sig: &[T]) {
    for ((g, &p), &s) in delta.iter_mut().zip(pre).zip(sig) {
        *g = *g * silu_grad(p, s);
    }
}

/// Raw (unclamped) outputs, `n × outputs` row-major.
pub fn forward<T: Scalar>(arch: &Architecture, params: &[T], x: &[T], n: usize) -> Vec<T> {
    Workspace::new().forward(arch, params, x, n).to_vec()
}

/// One-shot [`Workspace::loss_and_grad`].
pub fn loss_and_grad<T: Scalar>(
    arch: &Architecture,
    params: &[T],
    x: &[T],
    y: &[T],
    n: usize,
    beta: T,
    scale: T,
) -> (T, Vec<T>) {
    let mut ws = Workspace::new();
    let loss = ws.loss_and_grad(arch, params, x, y, n, beta, scale);
    (loss, ws.grad)
}

#[derive(Debug, Clone)]
pub struct Adam<T> {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: Vec<T>,
    v: Vec<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(n: usize, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: vec![T::ZERO; n],
            v: vec![T::ZERO; n],
        }
    }

    pub fn update(&mut self, params: &mut [T], grad: &[T]) {
        self.step += 1;
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let c1 = T::from_f64(1.0 - self.beta1.powi(self.step));
        let c2 = T::from_f64(1.0 - self.beta2.powi(self.step));
        let lr = T::from_f64(self.lr);
        let eps = T::from_f64(self.eps);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = b1 * *m + (T::ONE - b1) * *g;
            *v = b2 * *v + (T::ONE - b2) * *g * *g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p = *p - lr * mh / (vh.sqrt() + eps);
        }
    }
}
