//! Forward and backward kernels for the layer set used by the models.
//!
//! Every kernel accumulates in f64 and reduces in a fixed order, so results
//! do not depend on how work is scheduled.

use crate::error::{Error, Result};
use crate::nn::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Train,
    Eval,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

pub fn conv1d_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    (len + 2 * padding).checked_sub(kernel).map(|v| v / stride + 1)
}

/// Valid output positions `t` for kernel tap `k`, i.e. those with
/// `0 <= t*stride + k - padding < len`.
#[inline]
fn tap_range(len: usize, out_len: usize, k: usize, stride: usize, padding: usize) -> (usize, usize) {
    let lo = if padding > k { (padding - k).div_ceil(stride) } else { 0 };
    let hi = if len + padding > k { ((len + padding - k - 1) / stride + 1).min(out_len) } else { 0 };
    (lo, hi.max(lo))
}

fn conv_shapes(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize, usize, usize, usize, usize)> {
    input.expect_dims("conv1d input", 3)?;
    weight.expect_dims("conv1d weight", 3)?;
    let (b, cin, len) = (input.dim(0), input.dim(1), input.dim(2));
    let (cout, wcin, k) = (weight.dim(0), weight.dim(1), weight.dim(2));
    if cin != wcin {
        return Err(Error::Shape(format!("conv1d: input has {cin} channels, weight expects {wcin}")));
    }
    if stride == 0 {
        return Err(Error::Shape("conv1d: stride must be ≥ 1".into()));
    }
    let out_len = conv1d_output_len(len, k, stride, padding)
        .filter(|&l| l > 0)
        .ok_or_else(|| Error::Shape(format!("conv1d: length {len} too short for kernel {k}")))?;
    Ok((b, cin, len, cout, k, out_len))
}

/// 1D cross-correlation with zero padding and no bias.
pub fn conv1d(input: &Tensor, weight: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let (b, cin, len, cout, k, out_len) = conv_shapes(input, weight, stride, padding)?;
    let x = input.data();
    let w = weight.data();
    let mut out = vec![0.0; b * cout * out_len];
    for bi in 0..b {
        for co in 0..cout {
            let y = &mut out[(bi * cout + co) * out_len..][..out_len];
            for ci in 0..cin {
                let xr = &x[(bi * cin + ci) * len..][..len];
                let wr = &w[(co * cin + ci) * k..][..k];
                for (kk, &wv) in wr.iter().enumerate() {
                    let (lo, hi) = tap_range(len, out_len, kk, stride, padding);
                    if stride == 1 {
                        let off = lo + kk - padding;
                        for (yt, &xv) in y[lo..hi].iter_mut().zip(&xr[off..off + hi - lo]) {
                            *yt += wv * xv;
                        }
                    } else {
                        for t in lo..hi {
                            y[t] += wv * xr[t * stride + kk - padding];
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[b, cout, out_len], out)
}

/// Gradients of [`conv1d`] with respect to its input and weight.
pub fn conv1d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let (b, cin, len, cout, k, out_len) = conv_shapes(input, weight, stride, padding)?;
    if grad_out.dims() != [b, cout, out_len] {
        return Err(Error::Shape(format!(
            "conv1d backward: grad {:?} vs expected {:?}",
            grad_out.dims(),
            [b, cout, out_len]
        )));
    }
    let x = input.data();
    let w = weight.data();
    let gy = grad_out.data();
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    for bi in 0..b {
        for co in 0..cout {
            let g = &gy[(bi * cout + co) * out_len..][..out_len];
            for ci in 0..cin {
                let xbase = (bi * cin + ci) * len;
                let wbase = (co * cin + ci) * k;
                for kk in 0..k {
                    let (lo, hi) = tap_range(len, out_len, kk, stride, padding);
                    let wv = w[wbase + kk];
                    let mut acc = 0.0;
                    for t in lo..hi {
                        let xi = xbase + t * stride + kk - padding;
                        acc += g[t] * x[xi];
                        gx[xi] += wv * g[t];
                    }
                    gw[wbase + kk] += acc;
                }
            }
        }
    }
    Ok((Tensor::from_vec(input.dims(), gx)?, Tensor::from_vec(weight.dims(), gw)?))
}

/// Values saved by a batch-norm forward pass for its backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache {
    pub normalized: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub mode: Mode,
}

fn bn_shapes(input: &Tensor, gamma: &Tensor, beta: &Tensor) -> Result<(usize, usize, usize)> {
    input.expect_dims("batchnorm input", 3)?;
    let (b, c, l) = (input.dim(0), input.dim(1), input.dim(2));
    if gamma.dims() != [c] || beta.dims() != [c] {
        return Err(Error::Shape(format!(
            "batchnorm: {c} channels but gamma {:?}, beta {:?}",
            gamma.dims(),
            beta.dims()
        )));
    }
    Ok((b, c, l))
}

/// Batch normalization over (batch, length) for each channel.
///
/// In train mode the batch statistics (population variance) are used and
/// returned in the cache; in eval mode `running` supplies them.
pub fn batchnorm_forward(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: (&Tensor, &Tensor),
    mode: Mode,
    eps: f64,
) -> Result<(Tensor, BatchNormCache)> {
    if !(eps > 0.0) {
        return Err(Error::Parameter(format!("batchnorm eps must be > 0, got {eps}")));
    }
    let (b, c, l) = bn_shapes(input, gamma, beta)?;
    let n = b * l;
    let x = input.data();
    let (mean, var) = match mode {
        Mode::Train => {
            if n < 2 {
                return Err(Error::Shape(format!("batchnorm in train mode needs batch·length ≥ 2, got {n}")));
            }
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let mut s = 0.0;
                for bi in 0..b {
                    s += x[(bi * c + ch) * l..][..l].iter().sum::<f64>();
                }
                let m = s / n as f64;
                let mut v = 0.0;
                for bi in 0..b {
                    v += x[(bi * c + ch) * l..][..l].iter().map(|&xi| (xi - m) * (xi - m)).sum::<f64>();
                }
                mean[ch] = m;
                var[ch] = v / n as f64;
            }
            (mean, var)
        }
        Mode::Eval => {
            let (rm, rv) = running;
            if rm.dims() != [c] || rv.dims() != [c] {
                return Err(Error::Shape("batchnorm: running stats do not match channels".into()));
            }
            (rm.data().to_vec(), rv.data().to_vec())
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let (g, bt) = (gamma.data(), beta.data());
    let mut normalized = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * l;
            for i in base..base + l {
                let xh = (x[i] - mean[ch]) * inv_std[ch];
                normalized[i] = xh;
                out[i] = g[ch] * xh + bt[ch];
            }
        }
    }
    Ok((Tensor::from_vec(input.dims(), out)?, BatchNormCache { normalized, inv_std, mean, var, mode }))
}

/// Batch norm with running-statistics bookkeeping:
/// `running ← (1 − momentum)·running + momentum·batch` in train mode.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    mode: Mode,
    eps: f64,
    momentum: f64,
) -> Result<Tensor> {
    let (out, cache) = batchnorm_forward(input, gamma, beta, (running_mean, running_var), mode, eps)?;
    if mode == Mode::Train {
        update_running(running_mean, running_var, &cache, momentum);
    }
    Ok(out)
}

pub(crate) fn update_running(rm: &mut Tensor, rv: &mut Tensor, cache: &BatchNormCache, momentum: f64) {
    for (r, m) in rm.data_mut().iter_mut().zip(&cache.mean) {
        *r = (1.0 - momentum) * *r + momentum * m;
    }
    for (r, v) in rv.data_mut().iter_mut().zip(&cache.var) {
        *r = (1.0 - momentum) * *r + momentum * v;
    }
}

/// Returns (grad_input, grad_gamma, grad_beta).
pub fn batchnorm_backward(
    grad_out: &Tensor,
    gamma: &Tensor,
    cache: &BatchNormCache,
) -> Result<(Tensor, Tensor, Tensor)> {
    grad_out.expect_dims("batchnorm grad", 3)?;
    let (b, c, l) = (grad_out.dim(0), grad_out.dim(1), grad_out.dim(2));
    let gy = grad_out.data();
    let xh = &cache.normalized;
    let g = gamma.data();
    let n = (b * l) as f64;
    let mut ggamma = vec![0.0; c];
    let mut gbeta = vec![0.0; c];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * l;
            for i in base..base + l {
                ggamma[ch] += gy[i] * xh[i];
                gbeta[ch] += gy[i];
            }
        }
    }
    let mut gx = vec![0.0; gy.len()];
    for bi in 0..b {
        for ch in 0..c {
            let base = (bi * c + ch) * l;
            let s = g[ch] * cache.inv_std[ch];
            match cache.mode {
                Mode::Eval => {
                    for i in base..base + l {
                        gx[i] = s * gy[i];
                    }
                }
                Mode::Train => {
                    // dx = γ/σ · (dy − mean(dy) − x̂·mean(dy·x̂))
                    let mdy = gbeta[ch] / n;
                    let mdyx = ggamma[ch] / n;
                    for i in base..base + l {
                        gx[i] = s * (gy[i] - mdy - xh[i] * mdyx);
                    }
                }
            }
        }
    }
    Ok((Tensor::from_vec(grad_out.dims(), gx)?, Tensor::from_vec(&[c], ggamma)?, Tensor::from_vec(&[c], gbeta)?))
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(input.dims(), data).expect("same shape")
}

pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Tensor {
    let data = input.data().iter().zip(grad_out.data()).map(|(&x, &g)| if x > 0.0 { g } else { 0.0 }).collect();
    Tensor::from_vec(input.dims(), data).expect("same shape")
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("add: {:?} vs {:?}", a.dims(), b.dims())));
    }
    let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
    Tensor::from_vec(a.dims(), data)
}

/// Mean over the length axis: `[B, C, L] -> [B, C]`.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    input.expect_dims("global_avg_pool input", 3)?;
    let (b, c, l) = (input.dim(0), input.dim(1), input.dim(2));
    if l == 0 {
        return Err(Error::Shape("global_avg_pool over empty length".into()));
    }
    let data = input.data().chunks(l).map(|row| row.iter().sum::<f64>() / l as f64).collect();
    Tensor::from_vec(&[b, c], data)
}

pub fn global_avg_pool_backward(input_dims: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let l = input_dims[2];
    let mut gx = Vec::with_capacity(input_dims.iter().product());
    for &g in grad_out.data() {
        gx.extend(std::iter::repeat(g / l as f64).take(l));
    }
    Tensor::from_vec(input_dims, gx)
}

/// Affine map `x·W + b` with `W` of shape `[C, O]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    input.expect_dims("dense input", 2)?;
    weight.expect_dims("dense weight", 2)?;
    let (b, c) = (input.dim(0), input.dim(1));
    let o = weight.dim(1);
    if weight.dim(0) != c || bias.dims() != [o] {
        return Err(Error::Shape(format!(
            "dense: input {:?}, weight {:?}, bias {:?}",
            input.dims(),
            weight.dims(),
            bias.dims()
        )));
    }
    let (x, w) = (input.data(), weight.data());
    let mut out = Vec::with_capacity(b * o);
    for bi in 0..b {
        out.extend_from_slice(bias.data());
        let row = &mut out[bi * o..];
        for ci in 0..c {
            let xv = x[bi * c + ci];
            for (r, &wv) in row.iter_mut().zip(&w[ci * o..(ci + 1) * o]) {
                *r += xv * wv;
            }
        }
    }
    Tensor::from_vec(&[b, o], out)
}

/// Returns (grad_input, grad_weight, grad_bias).
pub fn dense_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (b, c, o) = (input.dim(0), input.dim(1), weight.dim(1));
    let (x, w, gy) = (input.data(), weight.data(), grad_out.data());
    let mut gx = vec![0.0; b * c];
    let mut gw = vec![0.0; c * o];
    let mut gb = vec![0.0; o];
    for bi in 0..b {
        let g = &gy[bi * o..(bi + 1) * o];
        for (acc, &gv) in gb.iter_mut().zip(g) {
            *acc += gv;
        }
        for ci in 0..c {
            let xv = x[bi * c + ci];
            let wr = &w[ci * o..(ci + 1) * o];
            let mut s = 0.0;
            for j in 0..o {
                s += wr[j] * g[j];
                gw[ci * o + j] += xv * g[j];
            }
            gx[bi * c + ci] = s;
        }
    }
    Ok((Tensor::from_vec(&[b, c], gx)?, Tensor::from_vec(&[c, o], gw)?, Tensor::from_vec(&[o], gb)?))
}

/// Row-wise softmax, stabilised by subtracting the row maximum.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    logits.expect_dims("softmax logits", 2)?;
    let o = logits.dim(1);
    if logits.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks(o) {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = row.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        out.extend(e.iter().map(|v| v / s));
    }
    Tensor::from_vec(logits.dims(), out)
}

/// Mean negative log-likelihood of the true class; returns the loss and the
/// softmax probabilities.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    logits.expect_dims("cross-entropy logits", 2)?;
    let (b, o) = (logits.dim(0), logits.dim(1));
    if b == 0 || labels.len() != b {
        return Err(Error::Shape(format!("cross-entropy: {b} rows, {} labels", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= o) {
        return Err(Error::Shape(format!("label {bad} out of range for {o} classes")));
    }
    let probs = softmax(logits)?;
    let mut loss = 0.0;
    for (row, &y) in logits.data().chunks(o).zip(labels) {
        // ln Σ exp(v − m) = ln(1 + Σ_{j≠argmax} exp(v_j − m)), accurate near zero loss
        let arg = row.iter().enumerate().fold(0, |a, (j, &v)| if v > row[a] { j } else { a });
        let m = row[arg];
        let rest: f64 = row.iter().enumerate().filter(|&(j, _)| j != arg).map(|(_, v)| (v - m).exp()).sum();
        loss += (m - row[y]) + rest.ln_1p();
    }
    Ok((loss / b as f64, probs))
}

/// `(softmax − onehot) / B`
pub fn softmax_cross_entropy_backward(probs: &Tensor, labels: &[usize]) -> Tensor {
    let (b, o) = (probs.dim(0), probs.dim(1));
    let mut g: Vec<f64> = probs.data().iter().map(|p| p / b as f64).collect();
    for (i, &y) in labels.iter().enumerate() {
        g[i * o + y] -= 1.0 / b as f64;
    }
    Tensor::from_vec(probs.dims(), g).expect("same shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], v: &[f64]) -> Tensor {
        Tensor::from_vec(dims, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let y = conv1d(&t(&[1, 1, 5], &[1., 2., 3., 4., 5.]), &t(&[1, 1, 3], &[0., 1., 0.]), 1, 1).unwrap();
        assert_eq!(y.data(), &[1., 2., 3., 4., 5.]);
    }

    #[test]
    fn strided_box_kernel() {
        // out[0] = x[-1]+x[0]+x[1] = 2, out[1] = x[1]+x[2]+x[3] = 3
        let y = conv1d(&t(&[1, 1, 4], &[1.; 4]), &t(&[1, 1, 3], &[1.; 3]), 2, 1).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2]);
        assert_eq!(y.data(), &[2., 3.]);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let r = conv1d(&Tensor::zeros(&[1, 2, 5]), &Tensor::zeros(&[1, 3, 3]), 1, 1);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn output_len_formula_halves_even_lengths() {
        for k in [1usize, 3, 7] {
            for len in (2..200).step_by(2) {
                assert_eq!(conv1d_output_len(len, k, 2, k / 2), Some(len / 2));
                assert_eq!(conv1d_output_len(len, k, 1, k / 2), Some(len));
            }
        }
    }

    #[test]
    fn batchnorm_train_stats() {
        let x: Vec<f64> = (0..2 * 3 * 10).map(|i| ((i * 37) % 11) as f64 * 3.0 - 10.0).collect();
        let x = t(&[2, 3, 10], &x);
        let (g, b) = (Tensor::filled(&[3], 1.0), Tensor::zeros(&[3]));
        let (mut rm, mut rv) = (Tensor::zeros(&[3]), Tensor::filled(&[3], 1.0));
        let y = batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, BN_EPS, BN_MOMENTUM).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = (0..2).flat_map(|bi| y.data()[(bi * 3 + ch) * 10..][..10].to_vec()).collect();
            let m = vals.iter().sum::<f64>() / 20.0;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 20.0;
            assert!(m.abs() < 1e-10);
            // var/(var + eps) with batch variance ~90
            assert!((v - 1.0).abs() < 1e-6, "var {v}");
        }
        assert!(rm.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn batchnorm_constant_channel_gives_beta() {
        let x = Tensor::filled(&[2, 1, 8], 3.7);
        let (g, b) = (Tensor::filled(&[1], 1.5), Tensor::filled(&[1], 0.25));
        let (mut rm, mut rv) = (Tensor::zeros(&[1]), Tensor::filled(&[1], 1.0));
        let y = batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, 1e-5, 0.1).unwrap();
        assert!(y.data().iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn batchnorm_eval_closed_form() {
        let xs = [-2.0, 0.0, 0.5, 3.0];
        let x = t(&[1, 1, 4], &xs);
        let (g, b) = (Tensor::filled(&[1], 2.0), Tensor::filled(&[1], 1.0));
        let (mut rm, mut rv) = (Tensor::zeros(&[1]), Tensor::filled(&[1], 1.0));
        let y = batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Eval, BN_EPS, BN_MOMENTUM).unwrap();
        for (yi, xi) in y.data().iter().zip(xs) {
            assert!((yi - (2.0 * xi / (1.0 + BN_EPS).sqrt() + 1.0)).abs() < 1e-12);
        }
        assert_eq!(rm.data(), &[0.0]);
    }

    #[test]
    fn batchnorm_errors() {
        let x = Tensor::zeros(&[1, 1, 1]);
        let (g, b) = (Tensor::filled(&[1], 1.0), Tensor::zeros(&[1]));
        let (mut rm, mut rv) = (Tensor::zeros(&[1]), Tensor::filled(&[1], 1.0));
        assert!(matches!(batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, BN_EPS, 0.1), Err(Error::Shape(_))));
        let x = Tensor::zeros(&[1, 1, 4]);
        assert!(matches!(batchnorm(&x, &g, &b, &mut rm, &mut rv, Mode::Train, 0.0, 0.1), Err(Error::Parameter(_))));
    }

    #[test]
    fn elementwise_ops() {
        assert_eq!(relu(&t(&[3], &[-1., 0., 2.])).data(), &[0., 0., 2.]);
        let x = t(&[3], &[1., -2., 3.]);
        assert_eq!(add(&x, &Tensor::zeros(&[3])).unwrap(), x);
        assert!(add(&x, &Tensor::zeros(&[2])).is_err());
        let p = global_avg_pool(&t(&[1, 1, 3], &[1., 2., 3.])).unwrap();
        assert_eq!(p.data(), &[2.0]);
        let d = dense(&t(&[1, 2], &[1., 2.]), &t(&[2, 2], &[1., 0., 0., 1.]), &t(&[2], &[0.5, -0.5])).unwrap();
        assert_eq!(d.data(), &[1.5, 1.5]);
    }

    #[test]
    fn cross_entropy_values() {
        let (loss, p) = softmax_cross_entropy(&t(&[1, 2], &[0., 0.]), &[1]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
        assert_eq!(p.data(), &[0.5, 0.5]);
        // -ln(1/(1+e^-20)) = ln(1+e^-20)
        let (loss, _) = softmax_cross_entropy(&t(&[1, 2], &[10., -10.]), &[0]).unwrap();
        assert!((loss - (-20f64).exp().ln_1p()).abs() < 1e-20);
        assert!((loss - 2.06e-9).abs() < 1e-11);
        let r = softmax_cross_entropy(&t(&[1, 2], &[f64::NAN, 0.]), &[0]);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
