//! Layer kernels. Sequence activations are `(len, channels)` row-major.
//!
//! Parameter layouts: conv weights are `[filters][kernel][in_channels]`,
//! dense weights are `[units][inputs]`; biases follow their weights.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activated value; ReLU has slope 0 at 0.
    #[inline]
    pub fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    Valid,
    /// Output length equals input length; an odd total padding puts the
    /// extra zero on the right.
    Same,
}

impl Padding {
    /// `(left padding, output length)`.
    pub fn geometry(self, len: usize, kernel: usize) -> Result<(usize, usize)> {
        match self {
            Padding::Valid => {
                if len < kernel {
                    return Err(Error::Shape(format!(
                        "kernel {kernel} does not fit sequence of length {len}"
                    )));
                }
                Ok((0, len - kernel + 1))
            }
            Padding::Same => Ok(((kernel - 1) / 2, len)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv1d {
        filters: usize,
        kernel_size: usize,
        padding: Padding,
        activation: Activation,
    },
    MaxPool1d {
        pool_size: usize,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
}

/// Geometry of a conv layer for one sample.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvDims {
    pub len_in: usize,
    pub ch_in: usize,
    pub len_out: usize,
    pub filters: usize,
    pub kernel: usize,
    pub pad_left: usize,
}

pub(crate) fn conv_forward(
    d: &ConvDims,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    act: Activation,
    out: &mut [f64],
) {
    let wk = d.kernel * d.ch_in;
    for p in 0..d.len_out {
        for f in 0..d.filters {
            let w = &weight[f * wk..(f + 1) * wk];
            let mut s = bias[f];
            for t in 0..d.kernel {
                let src = p + t;
                if src < d.pad_left || src - d.pad_left >= d.len_in {
                    continue;
                }
                let row = &input[(src - d.pad_left) * d.ch_in..(src - d.pad_left + 1) * d.ch_in];
                let wr = &w[t * d.ch_in..(t + 1) * d.ch_in];
                s += dot(row, wr);
            }
            out[p * d.filters + f] = act.apply(s);
        }
    }
}

/// `dpre` is the gradient w.r.t. pre-activations. Accumulates parameter
/// gradients and writes the input gradient when requested.
pub(crate) fn conv_backward(
    d: &ConvDims,
    input: &[f64],
    weight: &[f64],
    dpre: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let wk = d.kernel * d.ch_in;
    if let Some(di) = dinput.as_deref_mut() {
        di.fill(0.0);
    }
    for p in 0..d.len_out {
        for f in 0..d.filters {
            let g = dpre[p * d.filters + f];
            if g == 0.0 {
                continue;
            }
            dbias[f] += g;
            for t in 0..d.kernel {
                let src = p + t;
                if src < d.pad_left || src - d.pad_left >= d.len_in {
                    continue;
                }
                let r = src - d.pad_left;
                let row = &input[r * d.ch_in..(r + 1) * d.ch_in];
                let off = f * wk + t * d.ch_in;
                axpy(g, row, &mut dweight[off..off + d.ch_in]);
                if let Some(di) = dinput.as_deref_mut() {
                    axpy(g, &weight[off..off + d.ch_in], &mut di[r * d.ch_in..(r + 1) * d.ch_in]);
                }
            }
        }
    }
}

/// Channel-wise max over non-overlapping windows; `argmax` receives the
/// flat input index of each maximum (first index on ties).
pub(crate) fn maxpool_forward(
    len_in: usize,
    ch: usize,
    pool: usize,
    input: &[f64],
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let len_out = len_in / pool;
    for q in 0..len_out {
        for c in 0..ch {
            let mut best_i = (q * pool) * ch + c;
            let mut best = input[best_i];
            for r in 1..pool {
                let i = (q * pool + r) * ch + c;
                if input[i] > best {
                    best = input[i];
                    best_i = i;
                }
            }
            out[q * ch + c] = best;
            argmax[q * ch + c] = best_i;
        }
    }
}

/// Rows per parallel work unit in dense kernels. Fixed so that reductions
/// do not depend on the number of threads.
const DENSE_CHUNK: usize = 512;
const PARALLEL_MIN_UNITS: usize = 4096;

pub(crate) fn dense_forward(
    n_in: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    act: Activation,
    out: &mut [f64],
) {
    let body = |(chunk, out): (usize, &mut [f64])| {
        let base = chunk * DENSE_CHUNK;
        for (k, o) in out.iter_mut().enumerate() {
            let u = base + k;
            *o = act.apply(bias[u] + dot(&weight[u * n_in..(u + 1) * n_in], input));
        }
    };
    if out.len() >= PARALLEL_MIN_UNITS {
        out.par_chunks_mut(DENSE_CHUNK).enumerate().for_each(body);
    } else {
        out.chunks_mut(DENSE_CHUNK).enumerate().for_each(body);
    }
}

pub(crate) fn dense_backward(
    n_in: usize,
    input: &[f64],
    weight: &[f64],
    dpre: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let units = dpre.len();
    let parallel = units >= PARALLEL_MIN_UNITS;

    let accumulate = |(chunk, (dw, db)): (usize, (&mut [f64], &mut [f64]))| {
        let base = chunk * DENSE_CHUNK;
        for (k, b) in db.iter_mut().enumerate() {
            let g = dpre[base + k];
            if g != 0.0 {
                *b += g;
                axpy(g, input, &mut dw[k * n_in..(k + 1) * n_in]);
            }
        }
    };
    if parallel {
        dweight
            .par_chunks_mut(DENSE_CHUNK * n_in)
            .zip(dbias.par_chunks_mut(DENSE_CHUNK))
            .enumerate()
            .for_each(accumulate);
    } else {
        dweight
            .chunks_mut(DENSE_CHUNK * n_in)
            .zip(dbias.chunks_mut(DENSE_CHUNK))
            .enumerate()
            .for_each(accumulate);
    }

    if let Some(di) = dinput {
        let partial = |chunk: usize| {
            let mut acc = vec![0.0; n_in];
            let lo = chunk * DENSE_CHUNK;
            let hi = (lo + DENSE_CHUNK).min(units);
            for u in lo..hi {
                let g = dpre[u];
                if g != 0.0 {
                    axpy(g, &weight[u * n_in..(u + 1) * n_in], &mut acc);
                }
            }
            acc
        };
        let n_chunks = units.div_ceil(DENSE_CHUNK);
        let parts: Vec<Vec<f64>> = if parallel {
            (0..n_chunks).into_par_iter().map(partial).collect()
        } else {
            (0..n_chunks).map(partial).collect()
        };
        di.fill(0.0);
        for p in parts {
            for (d, v) in di.iter_mut().zip(p) {
                *d += v;
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for i in 0..chunks {
        let j = 4 * i;
        acc[0] += a[j] * b[j];
        acc[1] += a[j + 1] * b[j + 1];
        acc[2] += a[j + 2] * b[j + 2];
        acc[3] += a[j + 3] * b[j + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for j in 4 * chunks..n {
        s += a[j] * b[j];
    }
    s
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// 1D convolution (cross-correlation) of a `(len, ch_in)` tensor with
/// weights `(filters, kernel, ch_in)`.
pub fn conv1d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    padding: Padding,
    activation: Activation,
) -> Result<Tensor> {
    let (len_in, ch_in) = match input.shape[..] {
        [l, c] => (l, c),
        _ => return Err(Error::Shape(format!("conv input must be (len, ch), got {:?}", input.shape))),
    };
    let (filters, kernel) = match weight.shape[..] {
        [f, k, c] if c == ch_in => (f, k),
        _ => {
            return Err(Error::Shape(format!(
                "conv weight {:?} incompatible with {ch_in} input channels",
                weight.shape
            )))
        }
    };
    if bias.len() != filters {
        return Err(Error::Shape(format!("bias has {} entries, expected {filters}", bias.len())));
    }
    let (pad_left, len_out) = padding.geometry(len_in, kernel)?;
    let dims = ConvDims {
        len_in,
        ch_in,
        len_out,
        filters,
        kernel,
        pad_left,
    };
    let mut out = vec![0.0; len_out * filters];
    conv_forward(&dims, &input.data, &weight.data, bias, activation, &mut out);
    Tensor::new(vec![len_out, filters], out)
}

/// Max pooling over non-overlapping windows; returns the pooled tensor and
/// the flat input index selected for every output.
pub fn maxpool1d_forward(input: &Tensor, pool: usize) -> Result<(Tensor, Vec<usize>)> {
    let (len, ch) = match input.shape[..] {
        [l, c] => (l, c),
        _ => return Err(Error::Shape(format!("pool input must be (len, ch), got {:?}", input.shape))),
    };
    if pool == 0 || len < pool {
        return Err(Error::Shape(format!("pool {pool} does not fit length {len}")));
    }
    let n = (len / pool) * ch;
    let mut out = vec![0.0; n];
    let mut arg = vec![0; n];
    maxpool_forward(len, ch, pool, &input.data, &mut out, &mut arg);
    Ok((Tensor::new(vec![len / pool, ch], out)?, arg))
}

/// Affine map `W x + b` with `W` of shape `(units, inputs)`, then activation.
pub fn dense_forward_tensor(
    input: &[f64],
    weight: &Tensor,
    bias: &[f64],
    activation: Activation,
) -> Result<Vec<f64>> {
    let (units, n_in) = match weight.shape[..] {
        [u, i] if i == input.len() => (u, i),
        _ => {
            return Err(Error::Shape(format!(
                "dense weight {:?} incompatible with input of length {}",
                weight.shape,
                input.len()
            )))
        }
    };
    if bias.len() != units {
        return Err(Error::Shape(format!("bias has {} entries, expected {units}", bias.len())));
    }
    let mut out = vec![0.0; units];
    dense_forward(n_in, input, &weight.data, bias, activation, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct scalar reference: explicit zero-padded sequence, then sums.
    fn reference_conv(input: &[f64], filter: &[f64], pad_left: usize, pad_right: usize) -> Vec<f64> {
        let mut padded = vec![0.0; pad_left];
        padded.extend_from_slice(input);
        padded.extend(std::iter::repeat(0.0).take(pad_right));
        (0..=padded.len() - filter.len())
            .map(|p| (0..filter.len()).map(|t| padded[p + t] * filter[t]).sum())
            .collect()
    }

    #[test]
    fn conv_valid_and_same() {
        let x = Tensor::new(vec![4, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![1, 3, 1], vec![1.0, 1.0, 1.0]).unwrap();
        let valid = conv1d_forward(&x, &w, &[0.0], Padding::Valid, Activation::Linear).unwrap();
        assert_eq!(valid.data, vec![6.0, 9.0]);
        let same = conv1d_forward(&x, &w, &[0.0], Padding::Same, Activation::Linear).unwrap();
        assert_eq!(same.data, vec![3.0, 6.0, 9.0, 7.0]);
        assert_eq!(same.data, reference_conv(&x.data, &w.data, 1, 1));
    }

    #[test]
    fn same_padding_extra_zero_on_right() {
        // kernel 4: total padding 3 -> 1 left, 2 right.
        let x = Tensor::new(vec![5, 1], vec![1.0, -2.0, 3.0, 0.5, 2.0]).unwrap();
        let filt = [0.3, -1.0, 2.0, 0.7];
        let w = Tensor::new(vec![1, 4, 1], filt.to_vec()).unwrap();
        let same = conv1d_forward(&x, &w, &[0.0], Padding::Same, Activation::Linear).unwrap();
        let expect = reference_conv(&x.data, &filt, 1, 2);
        for (a, b) in same.data.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn conv_shape_errors() {
        let x = Tensor::new(vec![2, 1], vec![1.0, 2.0]).unwrap();
        let w = Tensor::new(vec![1, 3, 1], vec![1.0; 3]).unwrap();
        assert!(conv1d_forward(&x, &w, &[0.0], Padding::Valid, Activation::Linear).is_err());
        let w2 = Tensor::new(vec![1, 1, 2], vec![1.0; 2]).unwrap();
        assert!(conv1d_forward(&x, &w2, &[0.0], Padding::Valid, Activation::Linear).is_err());
        let w3 = Tensor::new(vec![2, 1, 1], vec![1.0; 2]).unwrap();
        assert!(conv1d_forward(&x, &w3, &[0.0], Padding::Valid, Activation::Linear).is_err());
    }

    #[test]
    fn maxpool_semantics() {
        let x = Tensor::new(vec![2, 1], vec![3.0, 5.0]).unwrap();
        let (y, arg) = maxpool1d_forward(&x, 2).unwrap();
        assert_eq!(y.data, vec![5.0]);
        assert_eq!(arg, vec![1]);
        let tie = Tensor::new(vec![2, 2], vec![4.0, 1.0, 4.0, 2.0]).unwrap();
        let (y, arg) = maxpool1d_forward(&tie, 2).unwrap();
        assert_eq!(y.shape, vec![1, 2]);
        assert_eq!(y.data, vec![4.0, 2.0]);
        assert_eq!(arg, vec![0, 3]);
        let wide = Tensor::zeros(vec![2, 80]).unwrap();
        assert_eq!(maxpool1d_forward(&wide, 2).unwrap().0.shape, vec![1, 80]);
        let short = Tensor::zeros(vec![1, 3]).unwrap();
        assert!(maxpool1d_forward(&short, 2).is_err());
    }

    #[test]
    fn dense_zero_weights_give_bias() {
        let w = Tensor::zeros(vec![3, 2]).unwrap();
        let y = dense_forward_tensor(&[1.0, -4.0], &w, &[0.5, -1.0, 2.0], Activation::Linear).unwrap();
        assert_eq!(y, vec![0.5, -1.0, 2.0]);
        let y = dense_forward_tensor(&[1.0, -4.0], &w, &[0.5, -1.0, 2.0], Activation::Relu).unwrap();
        assert_eq!(y, vec![0.5, 0.0, 2.0]);
        assert!(dense_forward_tensor(&[1.0], &w, &[0.0; 3], Activation::Linear).is_err());
    }

    #[test]
    fn parallel_dense_matches_serial() {
        let n_in = 7;
        let units = PARALLEL_MIN_UNITS + 123;
        let w: Vec<f64> = (0..units * n_in).map(|i| ((i * 37 % 101) as f64 - 50.0) / 50.0).collect();
        let x: Vec<f64> = (0..n_in).map(|i| i as f64 * 0.1 - 0.3).collect();
        let b = vec![0.01; units];
        let mut y = vec![0.0; units];
        dense_forward(n_in, &x, &w, &b, Activation::Linear, &mut y);
        for u in [0, 511, 512, units - 1] {
            let r: f64 = b[u] + dot(&w[u * n_in..(u + 1) * n_in], &x);
            assert_eq!(y[u], r);
        }
        let dpre: Vec<f64> = (0..units).map(|u| (u % 13) as f64 - 6.0).collect();
        let mut dw = vec![0.0; units * n_in];
        let mut db = vec![0.0; units];
        let mut dx = vec![0.0; n_in];
        dense_backward(n_in, &x, &w, &dpre, &mut dw, &mut db, Some(&mut dx));
        for i in 0..n_in {
            let r: f64 = (0..units).map(|u| w[u * n_in + i] * dpre[u]).sum();
            assert!((dx[i] - r).abs() < 1e-9 * r.abs().max(1.0));
        }
        assert_eq!(db, dpre);
    }
}
