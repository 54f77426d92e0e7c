//! Forward kernels on plain tensors.
//!
//! Every kernel here is also reachable through [`Graph`](super::Graph), which
//! records it and supplies the reverse-mode derivative. The functions in this
//! module are usable on their own for inference paths that never need
//! gradients.

use crate::error::{dim_err, Error, Result};
use crate::numerics::Tensor;

fn check_conv_shapes(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
    transposed: bool,
) -> Result<(usize, usize, usize, usize)> {
    if x.rank() != 2 || weight.rank() != 3 || bias.rank() != 1 {
        return dim_err(format!(
            "conv expects x rank 2, weight rank 3, bias rank 1; got {:?}, {:?}, {:?}",
            x.shape(),
            weight.shape(),
            bias.shape()
        ));
    }
    if dilation == 0 {
        return Err(Error::Contract("dilation must be >= 1".into()));
    }
    let (c_x, t) = (x.shape()[0], x.shape()[1]);
    let (w0, w1, k) = (weight.shape()[0], weight.shape()[1], weight.shape()[2]);
    if k == 0 || t == 0 {
        return Err(Error::Contract("kernel width and length must be >= 1".into()));
    }
    // forward: weight is [out, in, k]; transposed: weight is [in, out, k]
    let (c_in, c_out) = if transposed { (w0, w1) } else { (w1, w0) };
    if c_in != c_x {
        return dim_err(format!(
            "input has {c_x} channels but weight expects {c_in}"
        ));
    }
    if bias.len() != c_out {
        return dim_err(format!("bias has {} entries, expected {c_out}", bias.len()));
    }
    Ok((c_in, c_out, k, t))
}

/// Dilated causal 1-D convolution.
///
/// `x` is `C_in × T`, `weight` is `C_out × C_in × K`. The input is implicitly
/// left-padded with `(K−1)·dilation` zeros, so tap `k` reads
/// `x[i, t − (K−1−k)·dilation]` and the output at `t` only sees inputs at
/// times `≤ t`.
pub fn causal_conv1d(x: &Tensor, weight: &Tensor, bias: &Tensor, dilation: usize) -> Result<Tensor> {
    let (c_in, c_out, k, t) = check_conv_shapes(x, weight, bias, dilation, false)?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0; c_out * t];
    for c in 0..c_out {
        let row = &mut out[c * t..(c + 1) * t];
        row.fill(bias.data()[c]);
        for i in 0..c_in {
            let xi = &xd[i * t..(i + 1) * t];
            for tap in 0..k {
                let w = wd[(c * c_in + i) * k + tap];
                let shift = (k - 1 - tap) * dilation;
                if shift >= t {
                    continue;
                }
                for (o, &xv) in row[shift..].iter_mut().zip(xi) {
                    *o += w * xv;
                }
            }
        }
    }
    Tensor::new(vec![c_out, t], out)
}

/// Adjoint of [`causal_conv1d`] for the same weight tensor.
///
/// `x` is `C_in × T` and `weight` is `C_in × C_out × K` (the forward
/// convolution's `[out, in, k]` layout read from the other side). Tap `k`
/// reads `x[i, t + (K−1−k)·dilation]`, so influence flows from later to
/// earlier times inside the window.
pub fn causal_transposed_conv1d(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dilation: usize,
) -> Result<Tensor> {
    let (c_in, c_out, k, t) = check_conv_shapes(x, weight, bias, dilation, true)?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = vec![0.0; c_out * t];
    for o in 0..c_out {
        out[o * t..(o + 1) * t].fill(bias.data()[o]);
    }
    for i in 0..c_in {
        let xi = &xd[i * t..(i + 1) * t];
        for o in 0..c_out {
            let row = &mut out[o * t..(o + 1) * t];
            for tap in 0..k {
                let w = wd[(i * c_out + o) * k + tap];
                let shift = (k - 1 - tap) * dilation;
                if shift >= t {
                    continue;
                }
                for (r, &xv) in row[..t - shift].iter_mut().zip(&xi[shift..]) {
                    *r += w * xv;
                }
            }
        }
    }
    Tensor::new(vec![c_out, t], out)
}

/// `y = W x + b` for a vector `x`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.rank() != 1 || w.rank() != 2 || b.rank() != 1 {
        return dim_err(format!(
            "linear expects x rank 1, W rank 2, b rank 1; got {:?}, {:?}, {:?}",
            x.shape(),
            w.shape(),
            b.shape()
        ));
    }
    let (m, n) = (w.shape()[0], w.shape()[1]);
    if x.len() != n || b.len() != m {
        return dim_err(format!(
            "linear: W is {m}×{n}, x has {}, b has {}",
            x.len(),
            b.len()
        ));
    }
    let out = (0..m)
        .map(|r| {
            let row = w.row(r);
            b.data()[r] + row.iter().zip(x.data()).map(|(a, v)| a * v).sum::<f64>()
        })
        .collect();
    Ok(Tensor::vector(out))
}

/// Per-batch matrix product: `[B, R, S] × [B, S, M] → [B, R, M]`.
pub fn batch_matmul(a: &Tensor, x: &Tensor) -> Result<Tensor> {
    if a.rank() != 3 || x.rank() != 3 || a.shape()[0] != x.shape()[0] || a.shape()[2] != x.shape()[1]
    {
        return dim_err(format!(
            "batch_matmul of {:?} and {:?}",
            a.shape(),
            x.shape()
        ));
    }
    let (bn, r, s) = (a.shape()[0], a.shape()[1], a.shape()[2]);
    let m = x.shape()[2];
    let mut out = vec![0.0; bn * r * m];
    for b in 0..bn {
        let ab = &a.data()[b * r * s..(b + 1) * r * s];
        let xb = &x.data()[b * s * m..(b + 1) * s * m];
        let ob = &mut out[b * r * m..(b + 1) * r * m];
        for i in 0..r {
            for j in 0..s {
                let av = ab[i * s + j];
                for col in 0..m {
                    ob[i * m + col] += av * xb[j * m + col];
                }
            }
        }
    }
    Tensor::new(vec![bn, r, m], out)
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

pub fn tanh(x: &Tensor) -> Tensor {
    x.map(f64::tanh)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

pub fn softplus_scalar(v: f64) -> f64 {
    // log(1 + e^v) without overflow
    v.max(0.0) + (-v.abs()).exp().ln_1p()
}

pub fn softplus(x: &Tensor) -> Tensor {
    x.map(softplus_scalar)
}

pub fn abs(x: &Tensor) -> Tensor {
    x.map(f64::abs)
}

pub fn exp(x: &Tensor) -> Tensor {
    x.map(f64::exp)
}

pub fn log(x: &Tensor) -> Result<Tensor> {
    if let Some(v) = x.data().iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("log of non-positive value {v}")));
    }
    Ok(x.map(f64::ln))
}

pub fn scale(x: &Tensor, s: f64) -> Tensor {
    x.map(|v| v * s)
}

fn zip_same(a: &Tensor, b: &Tensor, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return dim_err(format!("{what} of {:?} and {:?}", a.shape(), b.shape()));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same(a, b, "add", |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same(a, b, "subtract", |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_same(a, b, "multiply", |x, y| x * y)
}

/// Checks that `b` equals `a`'s shape with the last dimension collapsed to 1
/// and returns the size of that last dimension in `a`.
pub(crate) fn trailing_broadcast(a: &Tensor, b: &Tensor) -> Result<usize> {
    let (sa, sb) = (a.shape(), b.shape());
    let ok = sa.len() == sb.len()
        && !sa.is_empty()
        && sb[sb.len() - 1] == 1
        && sa[..sa.len() - 1] == sb[..sb.len() - 1];
    if !ok {
        return dim_err(format!("cannot broadcast {sb:?} over {sa:?}"));
    }
    Ok(sa[sa.len() - 1])
}

/// `a + b` where `b` has a size-1 last dimension broadcast across `a`'s.
pub fn add_broadcast(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = trailing_broadcast(a, b)?;
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v + b.data()[i / m])
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

/// `a * b` with the same broadcasting rule as [`add_broadcast`].
pub fn mul_broadcast(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let m = trailing_broadcast(a, b)?;
    let data = a
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v * b.data()[i / m])
        .collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub fn sum(x: &Tensor) -> Result<f64> {
    if x.is_empty() {
        return Err(Error::Domain("sum of empty tensor".into()));
    }
    Ok(x.data().iter().sum())
}

pub fn mean(x: &Tensor) -> Result<f64> {
    Ok(sum(x)? / x.len() as f64)
}

/// Splits a shape around `axis` into `(outer, n, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return dim_err(format!("axis {axis} out of range for shape {shape:?}"));
    }
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    let n = shape[axis];
    if n == 0 || outer * inner == 0 {
        return Err(Error::Domain(format!("reduction over empty axis of {shape:?}")));
    }
    Ok((outer, n, inner))
}

fn reduced_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    s.remove(axis);
    s
}

pub fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let (outer, n, inner) = axis_split(x.shape(), axis)?;
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for j in 0..inner {
                out[o * inner + j] += x.data()[base + j];
            }
        }
    }
    Tensor::new(reduced_shape(x.shape(), axis), out)
}

pub fn mean_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    let n = x.shape().get(axis).copied().unwrap_or(1) as f64;
    Ok(scale(&sum_axis(x, axis)?, 1.0 / n))
}

/// Maximum along `axis` plus the flat index of the (first) maximising element
/// for every output slot.
pub(crate) fn max_axis_with_index(x: &Tensor, axis: usize) -> Result<(Tensor, Vec<usize>)> {
    let (outer, n, inner) = axis_split(x.shape(), axis)?;
    let mut out = vec![f64::NEG_INFINITY; outer * inner];
    let mut arg = vec![0usize; outer * inner];
    for o in 0..outer {
        for k in 0..n {
            let base = (o * n + k) * inner;
            for j in 0..inner {
                let v = x.data()[base + j];
                let slot = o * inner + j;
                if k == 0 || v > out[slot] {
                    out[slot] = v;
                    arg[slot] = base + j;
                }
            }
        }
    }
    Ok((Tensor::new(reduced_shape(x.shape(), axis), out)?, arg))
}

pub fn max_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    max_axis_with_index(x, axis).map(|(t, _)| t)
}
