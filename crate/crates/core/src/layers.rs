//! Differentiable layer primitives with hand-written backward passes.
//!
//! Every forward function is pure. Backward functions take the forward inputs
//! (or outputs, where cheaper) and an upstream gradient, and return gradients
//! co-shaped with the forward operands.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

/// Gradients produced by one layer's backward pass.
#[derive(Debug, Clone)]
pub struct LayerGrad<T: Real> {
    pub input_grad: Tensor<T>,
    pub param_grads: Vec<(&'static str, Tensor<T>)>,
}

impl<T: Real> LayerGrad<T> {
    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.param_grads
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
    }

    /// Removes and returns the named parameter gradient.
    pub fn take(&mut self, name: &str) -> Option<Tensor<T>> {
        let pos = self.param_grads.iter().position(|(n, _)| *n == name)?;
        Some(self.param_grads.swap_remove(pos).1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------------------
// Convolution
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(input: &[usize], kh: usize, kw: usize, stride: usize, pad: usize) -> Result<Self> {
        let &[channels, height, width] = input else {
            return Err(Error::Dimension(format!(
                "expected [C, H, W] input, got {input:?}"
            )));
        };
        if stride == 0 {
            return Err(Error::Config("stride must be positive".into()));
        }
        let (ph, pw) = (height + 2 * pad, width + 2 * pad);
        if kh > ph || kw > pw {
            return Err(Error::Dimension(format!(
                "kernel {kh}x{kw} larger than padded input {ph}x{pw}"
            )));
        }
        if (ph - kh) % stride != 0 || (pw - kw) % stride != 0 {
            return Err(Error::Config(format!(
                "stride {stride} does not tile padded input {ph}x{pw} with kernel {kh}x{kw}"
            )));
        }
        Ok(ConvGeometry {
            channels,
            height,
            width,
            kh,
            kw,
            stride,
            pad,
            out_h: (ph - kh) / stride + 1,
            out_w: (pw - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Input row/column read by output `o` at kernel tap `k`, if not padding.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    fn im2col<T: Real>(&self, input: &[T]) -> Vec<T> {
        let p = self.positions();
        let mut cols = vec![T::zero(); self.patch_len() * p];
        let plane = self.height * self.width;
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        let src = &input[c * plane + iy * self.width..];
                        for ox in 0..self.out_w {
                            if let Some(ix) = self.source(ox, kx, self.width) {
                                dst[oy * self.out_w + ox] = src[ix];
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im<T: Real>(&self, cols: &[T]) -> Vec<T> {
        let p = self.positions();
        let plane = self.height * self.width;
        let mut out = vec![T::zero(); self.channels * plane];
        for c in 0..self.channels {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let Some(iy) = self.source(oy, ky, self.height) else {
                            continue;
                        };
                        let dst = &mut out[c * plane + iy * self.width..];
                        for ox in 0..self.out_w {
                            if let Some(ix) = self.source(ox, kx, self.width) {
                                dst[ix] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

fn conv_operands<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<(ConvGeometry, usize)> {
    let &[k, kc, kh, kw] = kernels.shape() else {
        return Err(Error::Dimension(format!(
            "expected [K, C, kh, kw] kernels, got {:?}",
            kernels.shape()
        )));
    };
    let geo = ConvGeometry::new(input.shape(), kh, kw, stride, pad)?;
    if kc != geo.channels {
        return Err(Error::Dimension(format!(
            "kernel has {kc} channels, input has {}",
            geo.channels
        )));
    }
    Ok((geo, k))
}

/// 2-D cross-correlation: `out[k] = bias[k] + sum_c kernels[k, c] * input[c]`.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let (geo, k) = conv_operands(input, kernels, stride, pad)?;
    if bias.shape() != [k] {
        return Err(Error::Dimension(format!(
            "bias shape {:?}, expected [{k}]",
            bias.shape()
        )));
    }
    let p = geo.positions();
    let patch = geo.patch_len();
    let mut out = Vec::with_capacity(k * p);
    for &b in bias.data() {
        out.extend(std::iter::repeat_n(b, p));
    }
    let owned;
    let cols: &[T] = if geo.is_pointwise() {
        input.data()
    } else {
        owned = geo.im2col(input.data());
        &owned
    };
    T::gemm(
        k,
        patch,
        p,
        T::one(),
        kernels.data(),
        (patch as isize, 1),
        cols,
        (p as isize, 1),
        T::one(),
        &mut out,
    );
    Tensor::new(&[k, geo.out_h, geo.out_w], out)
}

/// Gradients of [`conv2d_forward`]: input, `"kernels"` and `"bias"`.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    out_grad: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<LayerGrad<T>> {
    let (geo, k) = conv_operands(input, kernels, stride, pad)?;
    if out_grad.shape() != [k, geo.out_h, geo.out_w] {
        return Err(Error::Dimension(format!(
            "conv out_grad {:?}, expected {:?}",
            out_grad.shape(),
            [k, geo.out_h, geo.out_w]
        )));
    }
    let p = geo.positions();
    let patch = geo.patch_len();
    let g = out_grad.data();

    let bias_grad: Vec<T> = g.chunks_exact(p).map(|row| row.iter().copied().sum()).collect();

    let owned;
    let cols: &[T] = if geo.is_pointwise() {
        input.data()
    } else {
        owned = geo.im2col(input.data());
        &owned
    };
    let mut kernel_grad = vec![T::zero(); k * patch];
    T::gemm(
        k,
        p,
        patch,
        T::one(),
        g,
        (p as isize, 1),
        cols,
        (1, p as isize),
        T::zero(),
        &mut kernel_grad,
    );

    let mut cols_grad = vec![T::zero(); patch * p];
    T::gemm(
        patch,
        k,
        p,
        T::one(),
        kernels.data(),
        (1, patch as isize),
        g,
        (p as isize, 1),
        T::zero(),
        &mut cols_grad,
    );
    let input_grad = if geo.is_pointwise() {
        cols_grad
    } else {
        geo.col2im(&cols_grad)
    };

    Ok(LayerGrad {
        input_grad: Tensor::new(input.shape(), input_grad)?,
        param_grads: vec![
            ("kernels", Tensor::new(kernels.shape(), kernel_grad)?),
            ("bias", Tensor::new(&[k], bias_grad)?),
        ],
    })
}

// ---------------------------------------------------------------------------
// Max pooling
// ---------------------------------------------------------------------------

/// Argmax routing recorded by [`maxpool_forward`].
#[derive(Debug, Clone)]
pub struct PoolIndices {
    input_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl PoolIndices {
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }
}

/// Unpadded max pooling.
pub fn maxpool_forward<T: Real>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
) -> Result<(Tensor<T>, PoolIndices)> {
    maxpool_padded(input, window, stride, 0)
}

/// Max pooling with implicit `-inf` padding. Output size is
/// `floor((H + 2 pad - window) / stride) + 1`. Ties go to the lowest linear
/// input index.
pub fn maxpool_padded<T: Real>(
    input: &Tensor<T>,
    window: usize,
    stride: usize,
    pad: usize,
) -> Result<(Tensor<T>, PoolIndices)> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Dimension(format!(
            "expected [C, H, W] input, got {:?}",
            input.shape()
        )));
    };
    if window == 0 || stride == 0 {
        return Err(Error::Config("pool window and stride must be positive".into()));
    }
    if pad >= window {
        return Err(Error::Config(format!(
            "pool padding {pad} must be smaller than window {window}"
        )));
    }
    if window > h + 2 * pad || window > w + 2 * pad {
        return Err(Error::Config(format!(
            "pool window {window} larger than padded input {}x{}",
            h + 2 * pad,
            w + 2 * pad
        )));
    }
    let out_h = (h + 2 * pad - window) / stride + 1;
    let out_w = (w + 2 * pad - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    let mut argmax = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..out_h {
            let y0 = (oy * stride) as isize - pad as isize;
            for ox in 0..out_w {
                let x0 = (ox * stride) as isize - pad as isize;
                let mut best = usize::MAX;
                let mut best_v = T::neg_infinity();
                // row-major scan with strict `>` keeps the lowest index on ties
                for dy in 0..window as isize {
                    let iy = y0 + dy;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for dx in 0..window as isize {
                        let ix = x0 + dx;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let idx = base + iy as usize * w + ix as usize;
                        if best == usize::MAX || x[idx] > best_v {
                            best = idx;
                            best_v = x[idx];
                        }
                    }
                }
                out.push(best_v);
                argmax.push(best);
            }
        }
    }
    Ok((
        Tensor::new(&[c, out_h, out_w], out)?,
        PoolIndices {
            input_shape: input.shape().to_vec(),
            argmax,
        },
    ))
}

/// Routes each output gradient to the input cell that won the forward max.
pub fn maxpool_backward<T: Real>(indices: &PoolIndices, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    if out_grad.len() != indices.argmax.len() {
        return Err(Error::Dimension(format!(
            "pool out_grad has {} values, forward produced {}",
            out_grad.len(),
            indices.argmax.len()
        )));
    }
    let mut grad = Tensor::zeros(&indices.input_shape);
    let g = grad.data_mut();
    for (&i, &v) in indices.argmax.iter().zip(out_grad.data()) {
        g[i] += v;
    }
    Ok(grad)
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

fn dense_shapes<T: Real>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize)> {
    let &[m, n] = weight.shape() else {
        return Err(Error::Dimension(format!(
            "expected [M, N] weight, got {:?}",
            weight.shape()
        )));
    };
    if input.len() != n {
        return Err(Error::Dimension(format!(
            "dense input has {} values, weight expects {n}",
            input.len()
        )));
    }
    Ok((m, n))
}

/// `y = W x + b`. Any input shape with `N` elements is accepted and read flat.
pub fn dense_forward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (m, n) = dense_shapes(input, weight)?;
    if bias.shape() != [m] {
        return Err(Error::Dimension(format!(
            "dense bias {:?}, expected [{m}]",
            bias.shape()
        )));
    }
    let mut out = bias.data().to_vec();
    T::gemm(
        m,
        n,
        1,
        T::one(),
        weight.data(),
        (n as isize, 1),
        input.data(),
        (1, 1),
        T::one(),
        &mut out,
    );
    Tensor::new(&[m], out)
}

/// Returns `W^T g` as input gradient, `"weight"` = `g x^T`, `"bias"` = `g`.
pub fn dense_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    out_grad: &Tensor<T>,
) -> Result<LayerGrad<T>> {
    let (m, n) = dense_shapes(input, weight)?;
    if out_grad.len() != m {
        return Err(Error::Dimension(format!(
            "dense out_grad has {} values, expected {m}",
            out_grad.len()
        )));
    }
    let g = out_grad.data();
    let mut input_grad = vec![T::zero(); n];
    T::gemm(
        n,
        m,
        1,
        T::one(),
        weight.data(),
        (1, n as isize),
        g,
        (1, 1),
        T::zero(),
        &mut input_grad,
    );
    let mut weight_grad = vec![T::zero(); m * n];
    T::gemm(
        m,
        1,
        n,
        T::one(),
        g,
        (1, 1),
        input.data(),
        (1, 1),
        T::zero(),
        &mut weight_grad,
    );
    Ok(LayerGrad {
        input_grad: Tensor::new(input.shape(), input_grad)?,
        param_grads: vec![
            ("weight", Tensor::new(&[m, n], weight_grad)?),
            ("bias", Tensor::new(&[m], g.to_vec())?),
        ],
    })
}

// ---------------------------------------------------------------------------
// Elementwise nonlinearities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Sigmoid,
    Tanh,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(Activation::Sigmoid),
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn apply<T: Real>(x: T, kind: Activation) -> T {
    match kind {
        Activation::Sigmoid => sigmoid(x),
        Activation::Tanh => x.tanh(),
        Activation::Relu => x.max(T::zero()),
    }
}

/// Derivative expressed through the forward output `y`.
#[inline]
fn derivative_from_output<T: Real>(y: T, kind: Activation) -> T {
    match kind {
        Activation::Sigmoid => y * (T::one() - y),
        Activation::Tanh => T::one() - y * y,
        Activation::Relu => {
            if y > T::zero() {
                T::one()
            } else {
                T::zero()
            }
        }
    }
}

pub fn activate<T: Real>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    input.map(|x| apply(x, kind))
}

pub fn activate_in_place<T: Real>(t: &mut Tensor<T>, kind: Activation) {
    for v in t.data_mut() {
        *v = apply(*v, kind);
    }
}

/// Backward of [`activate`] given the forward *output*.
pub fn activate_backward<T: Real>(
    output: &Tensor<T>,
    out_grad: &Tensor<T>,
    kind: Activation,
) -> Result<Tensor<T>> {
    output.zip_map(out_grad, |y, g| g * derivative_from_output(y, kind))
}

// ---------------------------------------------------------------------------
// Channel concatenation
// ---------------------------------------------------------------------------

/// Stacks `[C_i, H, W]` tensors along the channel axis in argument order.
pub fn channel_concat<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    let first = inputs
        .first()
        .ok_or_else(|| Error::Dimension("channel_concat of zero tensors".into()))?;
    if first.ndim() != 3 {
        return Err(Error::Dimension(format!(
            "channel_concat expects [C, H, W], got {:?}",
            first.shape()
        )));
    }
    let spatial = &first.shape()[1..];
    let mut channels = 0;
    for t in inputs {
        if t.ndim() != 3 || &t.shape()[1..] != spatial {
            return Err(Error::Dimension(format!(
                "channel_concat spatial mismatch: {:?} vs {:?}",
                t.shape(),
                first.shape()
            )));
        }
        channels += t.shape()[0];
    }
    let mut data = Vec::with_capacity(channels * spatial[0] * spatial[1]);
    for t in inputs {
        data.extend_from_slice(t.data());
    }
    Tensor::new(&[channels, spatial[0], spatial[1]], data)
}

/// Inverse of [`channel_concat`]: splits along channels into the given widths.
pub fn channel_split<T: Real>(grad: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let &[c, h, w] = grad.shape() else {
        return Err(Error::Dimension(format!(
            "channel_split expects [C, H, W], got {:?}",
            grad.shape()
        )));
    };
    if widths.iter().sum::<usize>() != c {
        return Err(Error::Dimension(format!(
            "split widths {widths:?} do not sum to {c} channels"
        )));
    }
    let plane = h * w;
    let mut offset = 0;
    widths
        .iter()
        .map(|&wc| {
            let part = grad.data()[offset * plane..(offset + wc) * plane].to_vec();
            offset += wc;
            Tensor::new(&[wc, h, w], part)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Per-element multipliers applied by [`dropout`]; `None` means identity.
#[derive(Debug, Clone)]
pub struct DropoutMask<T: Real> {
    scale: Option<Vec<T>>,
}

impl<T: Real> DropoutMask<T> {
    pub fn identity() -> Self {
        DropoutMask { scale: None }
    }

    pub fn is_identity(&self) -> bool {
        self.scale.is_none()
    }

    pub fn scales(&self) -> Option<&[T]> {
        self.scale.as_deref()
    }
}

/// Inverted dropout: in training mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`. Eval mode is identity.
pub fn dropout<T: Real>(
    input: &Tensor<T>,
    rate: f64,
    seed: u64,
    mode: Mode,
) -> Result<(Tensor<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((input.clone(), DropoutMask::identity()));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<T> = (0..input.len())
        .map(|_| {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let out = input
        .data()
        .iter()
        .zip(&scale)
        .map(|(&x, &s)| x * s)
        .collect();
    Ok((Tensor::new(input.shape(), out)?, DropoutMask { scale: Some(scale) }))
}

pub fn dropout_backward<T: Real>(mask: &DropoutMask<T>, out_grad: &Tensor<T>) -> Result<Tensor<T>> {
    match &mask.scale {
        None => Ok(out_grad.clone()),
        Some(scale) if scale.len() == out_grad.len() => Ok(Tensor::new(
            out_grad.shape(),
            out_grad
                .data()
                .iter()
                .zip(scale)
                .map(|(&g, &s)| g * s)
                .collect(),
        )?),
        Some(scale) => Err(Error::Dimension(format!(
            "dropout mask has {} entries, gradient has {}",
            scale.len(),
            out_grad.len()
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor::<f64>::full(&[1, 3, 3], 1.0);
        let out = conv2d_forward(&input, &t(&[1, 1, 1, 1], &[1.0]), &t(&[1], &[0.0]), 1, 0)
            .unwrap();
        assert_eq!(out.shape(), &[1, 3, 3]);
        assert!(out.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn conv_hand_cross_correlation() {
        let input = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let k = t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let out = conv2d_forward(&input, &k, &t(&[1], &[0.0]), 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv_is_not_flipped() {
        // A true convolution would give 1*4 + 4*1 = 8 with this kernel layout too,
        // so use an asymmetric kernel: cross-correlation picks input[0,0]*1.
        let input = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let k = t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 0.0]);
        let out = conv2d_forward(&input, &k, &t(&[1], &[0.0]), 1, 0).unwrap();
        assert_eq!(out.data(), &[1.0]);
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        let input = Tensor::<f64>::zeros(&[2, 4, 4]);
        let k = Tensor::<f64>::zeros(&[1, 3, 3, 3]);
        let b = Tensor::<f64>::zeros(&[1]);
        assert!(matches!(
            conv2d_forward(&input, &k, &b, 1, 0),
            Err(Error::Dimension(_))
        ));
        let k = Tensor::<f64>::zeros(&[1, 2, 2, 2]);
        assert!(matches!(
            conv2d_forward(&input, &k, &b, 3, 0),
            Err(Error::Config(_))
        ));
        let k = Tensor::<f64>::zeros(&[1, 2, 5, 5]);
        assert!(matches!(
            conv2d_forward(&input, &k, &b, 1, 0),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn conv_backward_scalar_chain_rule() {
        let input = t(&[1, 1, 1], &[3.0]);
        let k = t(&[1, 1, 1, 1], &[-2.0]);
        let g = conv2d_backward(&input, &k, &t(&[1, 1, 1], &[1.0]), 1, 0).unwrap();
        assert_eq!(g.param("kernels").unwrap().data(), &[3.0]);
        assert_eq!(g.input_grad.data(), &[-2.0]);
        assert_eq!(g.param("bias").unwrap().data(), &[1.0]);
    }

    #[test]
    fn conv_backward_zero_grad() {
        let input = Tensor::<f64>::from_fn(&[2, 5, 5], |i| i as f64 * 0.1);
        let k = Tensor::<f64>::from_fn(&[3, 2, 3, 3], |i| (i as f64).sin());
        let g = conv2d_backward(&input, &k, &Tensor::zeros(&[3, 5, 5]), 1, 1).unwrap();
        assert!(g.input_grad.data().iter().all(|&v| v == 0.0));
        for (_, p) in &g.param_grads {
            assert!(p.data().iter().all(|&v| v == 0.0));
        }
        assert!(conv2d_backward(&input, &k, &Tensor::zeros(&[3, 4, 4]), 1, 1).is_err());
    }

    #[test]
    fn maxpool_hand_cases() {
        let (out, idx) = maxpool_forward(&t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]), 2, 2).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(idx.argmax(), &[3]);
        let (out, _) = maxpool_forward(&Tensor::<f64>::full(&[2, 4, 4], 7.0), 2, 2).unwrap();
        assert!(out.data().iter().all(|&v| v == 7.0));
        assert!(matches!(
            maxpool_forward(&Tensor::<f64>::zeros(&[1, 2, 2]), 3, 1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn maxpool_ties_pick_lowest_index() {
        let (_, idx) = maxpool_forward(&Tensor::<f64>::full(&[1, 2, 2], 1.0), 2, 2).unwrap();
        assert_eq!(idx.argmax(), &[0]);
        let g = maxpool_backward(&idx, &t(&[1, 1, 1], &[5.0])).unwrap();
        assert_eq!(g.data(), &[5.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn padded_maxpool_keeps_size() {
        let x = Tensor::<f64>::from_fn(&[1, 4, 4], |i| -(i as f64));
        let (out, _) = maxpool_padded(&x, 3, 1, 1).unwrap();
        assert_eq!(out.shape(), &[1, 4, 4]);
        // all inputs negative: padding must never win
        assert_eq!(out.get(&[0, 0, 0]), 0.0);
        assert_eq!(out.get(&[0, 3, 3]), -10.0);
    }

    #[test]
    fn dense_hand_cases() {
        let x = t(&[2], &[1.0, 1.0]);
        let w = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = dense_forward(&x, &w, &t(&[2], &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[3.0, 7.0]);
        let eye = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let x = t(&[2], &[-0.5, 9.0]);
        assert_eq!(
            dense_forward(&x, &eye, &t(&[2], &[0.0, 0.0])).unwrap().data(),
            x.data()
        );
        let g = dense_backward(&x, &w, &t(&[2], &[1.0, -1.0])).unwrap();
        assert_eq!(g.input_grad.data(), &[-2.0, -2.0]);
        assert_eq!(g.param("weight").unwrap().data(), &[-0.5, 9.0, 0.5, -9.0]);
        assert!(dense_forward(&t(&[3], &[0.0; 3]), &w, &t(&[2], &[0.0; 2])).is_err());
    }

    #[test]
    fn activation_closed_forms() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert_eq!(0.0f64.tanh(), 0.0);
        assert!((sigmoid(3.0f64.ln()) - 0.75).abs() < 1e-15);
        // saturated inputs stay finite
        assert_eq!(sigmoid(-1000.0f64), 0.0);
        assert_eq!(sigmoid(1000.0f64), 1.0);
    }

    #[test]
    fn concat_preserves_values() {
        let a = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2, 2], &[5.0, 6.0, 7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = channel_concat(&[&a, &b]).unwrap();
        assert_eq!(c.shape(), &[3, 2, 2]);
        assert_eq!(c.get(&[0, 1, 0]), 3.0);
        assert_eq!(c.get(&[2, 0, 1]), 10.0);
        assert_eq!(channel_concat(&[&a]).unwrap(), a);
        let parts = channel_split(&c, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
        let bad = Tensor::<f64>::zeros(&[1, 3, 2]);
        assert!(channel_concat(&[&a, &bad]).is_err());
    }

    #[test]
    fn dropout_identity_cases() {
        let x = Tensor::<f64>::from_fn(&[10], |i| i as f64);
        let (y, m) = dropout(&x, 0.0, 1, Mode::Train).unwrap();
        assert_eq!(y, x);
        assert!(m.is_identity());
        let (y, _) = dropout(&x, 0.9, 1, Mode::Eval).unwrap();
        assert_eq!(y, x);
        assert!(dropout(&x, 1.0, 1, Mode::Train).is_err());
    }

    #[test]
    fn dropout_is_seeded() {
        let x = Tensor::<f64>::full(&[64], 1.0);
        let (a, _) = dropout(&x, 0.5, 42, Mode::Train).unwrap();
        let (b, _) = dropout(&x, 0.5, 42, Mode::Train).unwrap();
        let (c, _) = dropout(&x, 0.5, 43, Mode::Train).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
