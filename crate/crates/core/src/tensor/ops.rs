//! Forward kernels and their tape-recording wrappers.
//!
//! Feature maps are `[batch, channels, time]`. Convolutions only pad on the
//! left so every op is causal in time.

use crate::error::{Error, Result};
use crate::scalar::{sigmoid as sigmoid_scalar, Scalar};
use crate::tensor::{Array, Function, Tape, Var};

/// Stride, grouping and causal left padding of a 1-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub groups: usize,
    pub left_pad: usize,
}

impl ConvSpec {
    pub fn pointwise() -> Self {
        ConvSpec {
            stride: 1,
            groups: 1,
            left_pad: 0,
        }
    }
}

struct ConvGeometry {
    batch: usize,
    c_in: usize,
    t_in: usize,
    c_out: usize,
    c_in_group: usize,
    c_out_group: usize,
    k: usize,
    t_out: usize,
}

fn conv_geometry<T: Scalar>(x: &Array<T>, w: &Array<T>, bias: Option<&Array<T>>, spec: ConvSpec) -> Result<ConvGeometry> {
    let (batch, c_in, t_in) = x.dims3()?;
    let (c_out, c_in_group, k) = w.dims3()?;
    if spec.stride == 0 || spec.groups == 0 || k == 0 {
        return Err(Error::dim("conv1d needs stride >= 1, groups >= 1, K >= 1"));
    }
    if c_in % spec.groups != 0 || c_out % spec.groups != 0 {
        return Err(Error::dim(format!(
            "channels {c_in}->{c_out} not divisible by groups {}",
            spec.groups
        )));
    }
    if c_in / spec.groups != c_in_group {
        return Err(Error::dim(format!(
            "kernel expects {c_in_group} input channels per group, input has {}",
            c_in / spec.groups
        )));
    }
    if let Some(b) = bias {
        b.expect_shape(&[c_out])?;
    }
    if t_in + spec.left_pad < k {
        return Err(Error::TooShort(format!(
            "{t_in} steps (+{} padding) shorter than kernel {k}",
            spec.left_pad
        )));
    }
    let t_out = (t_in + spec.left_pad - k) / spec.stride + 1;
    Ok(ConvGeometry {
        batch,
        c_in,
        t_in,
        c_out,
        c_in_group,
        c_out_group: c_out / spec.groups,
        k,
        t_out,
    })
}

/// Grouped, strided, left-padded 1-D convolution.
///
/// `out[b,o,t] = sum_{i,k} w[o,i,k] * x[b, g*Cin/G + i, t*stride + k - left_pad] (+ bias[o])`,
/// with padded positions skipped. The sum runs over `i` then `k`, then adds the bias.
pub fn conv1d_forward<T: Scalar>(x: &Array<T>, w: &Array<T>, bias: Option<&Array<T>>, spec: ConvSpec) -> Result<Array<T>> {
    let g = conv_geometry(x, w, bias, spec)?;
    let xd = x.data();
    let wd = w.data();
    let mut out = vec![T::zero(); g.batch * g.c_out * g.t_out];
    for b in 0..g.batch {
        for o in 0..g.c_out {
            let first_in = (o / g.c_out_group) * g.c_in_group;
            let orow = (b * g.c_out + o) * g.t_out;
            for t in 0..g.t_out {
                let base = t * spec.stride;
                let mut acc = T::zero();
                for i in 0..g.c_in_group {
                    let xrow = (b * g.c_in + first_in + i) * g.t_in;
                    let wrow = (o * g.c_in_group + i) * g.k;
                    for k in 0..g.k {
                        let pos = base + k;
                        if pos < spec.left_pad {
                            continue;
                        }
                        acc += wd[wrow + k] * xd[xrow + pos - spec.left_pad];
                    }
                }
                if let Some(bias) = bias {
                    acc += bias.data()[o];
                }
                out[orow + t] = acc;
            }
        }
    }
    Array::new(&[g.batch, g.c_out, g.t_out], out)
}

struct Conv1dFn {
    spec: ConvSpec,
}

impl<T: Scalar> Function<T> for Conv1dFn {
    fn name(&self) -> &'static str {
        "conv1d"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let bias = inputs.get(2).copied();
        let g = conv_geometry(x, w, bias, self.spec).expect("validated in forward");
        let (xd, wd, gd) = (x.data(), w.data(), grad.data());
        let mut dx = vec![T::zero(); xd.len()];
        let mut dw = vec![T::zero(); wd.len()];
        let mut db = vec![T::zero(); g.c_out];
        for b in 0..g.batch {
            for o in 0..g.c_out {
                let first_in = (o / g.c_out_group) * g.c_in_group;
                let orow = (b * g.c_out + o) * g.t_out;
                for t in 0..g.t_out {
                    let go = gd[orow + t];
                    if go.is_zero() {
                        continue;
                    }
                    db[o] += go;
                    let base = t * self.spec.stride;
                    for i in 0..g.c_in_group {
                        let xrow = (b * g.c_in + first_in + i) * g.t_in;
                        let wrow = (o * g.c_in_group + i) * g.k;
                        for k in 0..g.k {
                            let pos = base + k;
                            if pos < self.spec.left_pad {
                                continue;
                            }
                            let xi = xrow + pos - self.spec.left_pad;
                            dx[xi] += wd[wrow + k] * go;
                            dw[wrow + k] += xd[xi] * go;
                        }
                    }
                }
            }
        }
        let mut grads = vec![
            Some(Array::new(x.shape(), dx).unwrap()),
            Some(Array::new(w.shape(), dw).unwrap()),
        ];
        if bias.is_some() {
            grads.push(Some(Array::new(&[g.c_out], db).unwrap()));
        }
        grads
    }
}

pub fn conv1d<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, bias: Option<Var>, spec: ConvSpec) -> Result<Var> {
    let out = conv1d_forward(tape.value(x), tape.value(w), bias.map(|b| tape.value(b)), spec)?;
    let mut inputs = vec![x, w];
    inputs.extend(bias);
    Ok(tape.push(out, inputs, Box::new(Conv1dFn { spec })))
}

/// Transposed convolution (overlap-add): `x[B,C,T]`, `w[C,Cout,K]` -> `[B,Cout,(T-1)*stride+K]`.
///
/// Frames are added in increasing time order; each frame's contribution
/// to a sample is summed over `c` first.
pub fn deconv1d_forward<T: Scalar>(x: &Array<T>, w: &Array<T>, stride: usize) -> Result<Array<T>> {
    let (batch, c, t_in) = x.dims3()?;
    let (wc, c_out, k) = w.dims3()?;
    if wc != c {
        return Err(Error::dim(format!("deconv kernel has {wc} input channels, input has {c}")));
    }
    if stride == 0 || k == 0 {
        return Err(Error::dim("deconv1d needs stride >= 1 and K >= 1"));
    }
    if t_in == 0 {
        return Err(Error::TooShort("deconv1d on zero frames".into()));
    }
    let t_out = (t_in - 1) * stride + k;
    let (xd, wd) = (x.data(), w.data());
    let mut out = vec![T::zero(); batch * c_out * t_out];
    for b in 0..batch {
        for t in 0..t_in {
            for o in 0..c_out {
                let orow = (b * c_out + o) * t_out + t * stride;
                for kk in 0..k {
                    let mut v = T::zero();
                    for ci in 0..c {
                        v += xd[(b * c + ci) * t_in + t] * wd[(ci * c_out + o) * k + kk];
                    }
                    out[orow + kk] += v;
                }
            }
        }
    }
    Array::new(&[batch, c_out, t_out], out)
}

struct Deconv1dFn {
    stride: usize,
}

impl<T: Scalar> Function<T> for Deconv1dFn {
    fn name(&self) -> &'static str {
        "deconv1d"
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let (batch, c, t_in) = x.dims3().unwrap();
        let (_, c_out, k) = w.dims3().unwrap();
        let t_out = output.shape()[2];
        let (xd, wd, gd) = (x.data(), w.data(), grad.data());
        let mut dx = vec![T::zero(); xd.len()];
        let mut dw = vec![T::zero(); wd.len()];
        for b in 0..batch {
            for t in 0..t_in {
                for o in 0..c_out {
                    let grow = (b * c_out + o) * t_out + t * self.stride;
                    for kk in 0..k {
                        let go = gd[grow + kk];
                        for ci in 0..c {
                            let xi = (b * c + ci) * t_in + t;
                            let wi = (ci * c_out + o) * k + kk;
                            dx[xi] += wd[wi] * go;
                            dw[wi] += xd[xi] * go;
                        }
                    }
                }
            }
        }
        vec![
            Some(Array::new(x.shape(), dx).unwrap()),
            Some(Array::new(w.shape(), dw).unwrap()),
        ]
    }
}

pub fn deconv1d<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, stride: usize) -> Result<Var> {
    let out = deconv1d_forward(tape.value(x), tape.value(w), stride)?;
    Ok(tape.push(out, vec![x, w], Box::new(Deconv1dFn { stride })))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Unary {
    Relu,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Binary {
    Add,
    Sub,
    Mul,
}

impl Unary {
    #[inline]
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Unary::Relu => x.max(T::zero()),
            Unary::Sigmoid => sigmoid_scalar(x),
        }
    }
}

impl Binary {
    #[inline]
    pub fn apply<T: Scalar>(self, a: T, b: T) -> T {
        match self {
            Binary::Add => a + b,
            Binary::Sub => a - b,
            Binary::Mul => a * b,
        }
    }
}

struct UnaryFn(Unary);

impl<T: Scalar> Function<T> for UnaryFn {
    fn name(&self) -> &'static str {
        match self.0 {
            Unary::Relu => "relu",
            Unary::Sigmoid => "sigmoid",
        }
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let dx = match self.0 {
            Unary::Relu => inputs[0]
                .zip_map(grad, |x, g| if x > T::zero() { g } else { T::zero() })
                .unwrap(),
            Unary::Sigmoid => output.zip_map(grad, |y, g| g * y * (T::one() - y)).unwrap(),
        };
        vec![Some(dx)]
    }
}

struct BinaryFn(Binary);

impl<T: Scalar> Function<T> for BinaryFn {
    fn name(&self) -> &'static str {
        match self.0 {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        }
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        match self.0 {
            Binary::Add => vec![Some(grad.clone()), Some(grad.clone())],
            Binary::Sub => vec![Some(grad.clone()), Some(grad.map(|g| -g))],
            Binary::Mul => vec![
                Some(inputs[1].zip_map(grad, |b, g| b * g).unwrap()),
                Some(inputs[0].zip_map(grad, |a, g| a * g).unwrap()),
            ],
        }
    }
}

pub fn unary_forward<T: Scalar>(op: Unary, x: &Array<T>) -> Array<T> {
    x.map(|v| op.apply(v))
}

pub fn binary_forward<T: Scalar>(op: Binary, a: &Array<T>, b: &Array<T>) -> Result<Array<T>> {
    a.zip_map(b, |x, y| op.apply(x, y))
}

pub fn unary<T: Scalar>(tape: &mut Tape<T>, op: Unary, x: Var) -> Var {
    let out = unary_forward(op, tape.value(x));
    tape.push(out, vec![x], Box::new(UnaryFn(op)))
}

pub fn binary<T: Scalar>(tape: &mut Tape<T>, op: Binary, a: Var, b: Var) -> Result<Var> {
    let out = binary_forward(op, tape.value(a), tape.value(b))?;
    Ok(tape.push(out, vec![a, b], Box::new(BinaryFn(op))))
}

pub fn relu<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Var {
    unary(tape, Unary::Relu, x)
}

pub fn sigmoid<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Var {
    unary(tape, Unary::Sigmoid, x)
}

pub fn add<T: Scalar>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, Binary::Add, a, b)
}

pub fn sub<T: Scalar>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, Binary::Sub, a, b)
}

pub fn mul<T: Scalar>(tape: &mut Tape<T>, a: Var, b: Var) -> Result<Var> {
    binary(tape, Binary::Mul, a, b)
}

struct SumFn;

impl<T: Scalar> Function<T> for SumFn {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        vec![Some(Array::full(inputs[0].shape(), grad.data()[0]))]
    }
}

/// Sum of all elements, as a one-element array.
pub fn sum<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Var {
    let out = Array::scalar(tape.value(x).sum());
    tape.push(out, vec![x], Box::new(SumFn))
}

/// Normalizes one `(b, t)` column across channels, then applies gain and bias.
/// Returns `(mean, 1/sqrt(var + eps))`.
#[inline]
pub(crate) fn normalize_column<T: Scalar>(col: &[T], gain: &[T], bias: &[T], eps: T, out: &mut [T]) -> (T, T) {
    let n = T::lit(col.len() as f64);
    let mean = col.iter().fold(T::zero(), |a, &x| a + x) / n;
    let var = col.iter().fold(T::zero(), |a, &x| a + (x - mean) * (x - mean)) / n;
    let rstd = T::one() / (var + eps).sqrt();
    for c in 0..col.len() {
        out[c] = (col[c] - mean) * rstd * gain[c] + bias[c];
    }
    (mean, rstd)
}

/// Per-time-step layer normalization over channels: causal by construction.
pub fn channel_layernorm_forward<T: Scalar>(x: &Array<T>, gain: &Array<T>, bias: &Array<T>, eps: T) -> Result<Array<T>> {
    let (batch, c, t_len) = x.dims3()?;
    if c == 0 {
        return Err(Error::dim("layernorm over zero channels"));
    }
    gain.expect_shape(&[c])?;
    bias.expect_shape(&[c])?;
    let xd = x.data();
    let mut out = vec![T::zero(); xd.len()];
    let mut col = vec![T::zero(); c];
    let mut res = vec![T::zero(); c];
    for b in 0..batch {
        for t in 0..t_len {
            for ch in 0..c {
                col[ch] = xd[(b * c + ch) * t_len + t];
            }
            normalize_column(&col, gain.data(), bias.data(), eps, &mut res);
            for ch in 0..c {
                out[(b * c + ch) * t_len + t] = res[ch];
            }
        }
    }
    Array::new(x.shape(), out)
}

struct LayerNormFn<T> {
    eps: T,
}

impl<T: Scalar> Function<T> for LayerNormFn<T> {
    fn name(&self) -> &'static str {
        "channel_layernorm"
    }

    fn backward(&self, inputs: &[&Array<T>], _output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (x, gain) = (inputs[0], inputs[1]);
        let (batch, c, t_len) = x.dims3().unwrap();
        let n = T::lit(c as f64);
        let (xd, gd, gn) = (x.data(), grad.data(), gain.data());
        let mut dx = vec![T::zero(); xd.len()];
        let mut dgain = vec![T::zero(); c];
        let mut dbias = vec![T::zero(); c];
        let mut xhat = vec![T::zero(); c];
        let mut dxhat = vec![T::zero(); c];
        for b in 0..batch {
            for t in 0..t_len {
                let idx = |ch: usize| (b * c + ch) * t_len + t;
                let mean = (0..c).fold(T::zero(), |a, ch| a + xd[idx(ch)]) / n;
                let var = (0..c).fold(T::zero(), |a, ch| {
                    let d = xd[idx(ch)] - mean;
                    a + d * d
                }) / n;
                let rstd = T::one() / (var + self.eps).sqrt();
                let mut mean_dxhat = T::zero();
                let mut mean_dxhat_xhat = T::zero();
                for ch in 0..c {
                    xhat[ch] = (xd[idx(ch)] - mean) * rstd;
                    let g = gd[idx(ch)];
                    dgain[ch] += g * xhat[ch];
                    dbias[ch] += g;
                    dxhat[ch] = g * gn[ch];
                    mean_dxhat += dxhat[ch];
                    mean_dxhat_xhat += dxhat[ch] * xhat[ch];
                }
                mean_dxhat /= n;
                mean_dxhat_xhat /= n;
                for ch in 0..c {
                    dx[idx(ch)] = rstd * (dxhat[ch] - mean_dxhat - xhat[ch] * mean_dxhat_xhat);
                }
            }
        }
        vec![
            Some(Array::new(x.shape(), dx).unwrap()),
            Some(Array::new(&[c], dgain).unwrap()),
            Some(Array::new(&[c], dbias).unwrap()),
        ]
    }
}

pub fn channel_layernorm<T: Scalar>(tape: &mut Tape<T>, x: Var, gain: Var, bias: Var, eps: T) -> Result<Var> {
    let out = channel_layernorm_forward(tape.value(x), tape.value(gain), tape.value(bias), eps)?;
    Ok(tape.push(out, vec![x, gain, bias], Box::new(LayerNormFn { eps })))
}

struct FitTimeFn;

impl<T: Scalar> Function<T> for FitTimeFn {
    fn name(&self) -> &'static str {
        "fit_time"
    }

    fn backward(&self, inputs: &[&Array<T>], output: &Array<T>, grad: &Array<T>) -> Vec<Option<Array<T>>> {
        let (batch, c, t_in) = inputs[0].dims3().unwrap();
        let t_out = output.shape()[2];
        let keep = t_in.min(t_out);
        let mut dx = vec![T::zero(); batch * c * t_in];
        for row in 0..batch * c {
            dx[row * t_in..row * t_in + keep].copy_from_slice(&grad.data()[row * t_out..row * t_out + keep]);
        }
        vec![Some(Array::new(inputs[0].shape(), dx).unwrap())]
    }
}

/// Truncates or zero-pads the time axis to `len` steps.
pub fn fit_time_forward<T: Scalar>(x: &Array<T>, len: usize) -> Result<Array<T>> {
    let (batch, c, t_in) = x.dims3()?;
    let keep = t_in.min(len);
    let mut out = vec![T::zero(); batch * c * len];
    for row in 0..batch * c {
        out[row * len..row * len + keep].copy_from_slice(&x.data()[row * t_in..row * t_in + keep]);
    }
    Array::new(&[batch, c, len], out)
}

pub fn fit_time<T: Scalar>(tape: &mut Tape<T>, x: Var, len: usize) -> Result<Var> {
    let out = fit_time_forward(tape.value(x), len)?;
    Ok(tape.push(out, vec![x], Box::new(FitTimeFn)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arr(shape: &[usize], v: &[f64]) -> Array<f64> {
        Array::new(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn zero_input_gives_zero_conv() {
        let x = Array::<f64>::zeros(&[1, 2, 7]);
        let w = Array::from_fn(&[3, 2, 3], |i| i as f64 - 4.0);
        let y = conv1d_forward(&x, &w, None, ConvSpec { stride: 2, groups: 1, left_pad: 2 }).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_identity_kernel_is_identity() {
        let x = Array::from_fn(&[2, 3, 5], |i| (i as f64).sin());
        let w = Array::from_fn(&[3, 3, 1], |i| if i / 3 == i % 3 { 1.0 } else { 0.0 });
        let y = conv1d_forward(&x, &w, None, ConvSpec::pointwise()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn output_length_formula() {
        let x = Array::<f64>::zeros(&[1, 1, 16000]);
        let w = Array::<f64>::zeros(&[4, 1, 80]);
        let y = conv1d_forward(&x, &w, None, ConvSpec { stride: 40, groups: 1, left_pad: 0 }).unwrap();
        assert_eq!(y.shape(), &[1, 4, 399]);
        let y = conv1d_forward(&x, &w, None, ConvSpec { stride: 40, groups: 1, left_pad: 40 }).unwrap();
        assert_eq!(y.shape(), &[1, 4, 400]);
    }

    #[test]
    fn conv_rejects_bad_groups() {
        let x = Array::<f64>::zeros(&[1, 3, 5]);
        let w = Array::<f64>::zeros(&[4, 1, 2]);
        let spec = ConvSpec { stride: 1, groups: 2, left_pad: 0 };
        assert!(matches!(conv1d_forward(&x, &w, None, spec), Err(Error::Dimension(_))));
    }

    #[test]
    fn deconv_single_step_is_scaled_kernel() {
        let x = arr(&[1, 2, 1], &[2.0, -1.0]);
        let w = arr(&[2, 1, 3], &[1.0, 2.0, 3.0, 0.5, 0.5, 0.5]);
        let y = deconv1d_forward(&x, &w, 2).unwrap();
        assert_eq!(y.data(), &[1.5, 3.5, 5.5]);
    }

    #[test]
    fn deconv_length_formula() {
        let x = Array::<f64>::zeros(&[1, 3, 399]);
        let w = Array::<f64>::zeros(&[3, 1, 80]);
        assert_eq!(deconv1d_forward(&x, &w, 40).unwrap().shape(), &[1, 1, 16000]);
    }

    #[test]
    fn elementwise_basics() {
        assert_eq!(Unary::Sigmoid.apply(0.0f64), 0.5);
        assert_eq!(Unary::Relu.apply(-1.0f64), 0.0);
        assert_eq!(Unary::Relu.apply(2.0f64), 2.0);
        let a = arr(&[2], &[1.0, 2.0]);
        let b = arr(&[3], &[1.0, 2.0, 3.0]);
        assert!(binary_forward(Binary::Mul, &a, &b).is_err());
    }

    #[test]
    fn layernorm_constant_column_gives_bias() {
        let x = Array::full(&[1, 4, 3], 7.0f64);
        let gain = arr(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let bias = arr(&[4], &[0.1, 0.2, 0.3, 0.4]);
        let y = channel_layernorm_forward(&x, &gain, &bias, 1e-5).unwrap();
        for c in 0..4 {
            for t in 0..3 {
                assert_eq!(y.at3(0, c, t), bias.data()[c]);
            }
        }
    }

    #[test]
    fn fit_time_pads_and_truncates() {
        let x = Array::from_fn(&[1, 2, 3], |i| i as f64 + 1.0);
        assert_eq!(fit_time_forward(&x, 2).unwrap().data(), &[1.0, 2.0, 4.0, 5.0]);
        assert_eq!(fit_time_forward(&x, 4).unwrap().data(), &[1.0, 2.0, 3.0, 0.0, 4.0, 5.0, 6.0, 0.0]);
    }
}
