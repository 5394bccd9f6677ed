//! Differentiable primitives.
//!
//! Each function computes its forward value eagerly and, when an input needs
//! a gradient, attaches the matching backward closure. Image tensors are
//! `[batch, channels, height, width]`, row-major.

use crate::error::TensorError;
use crate::rng::RngState;
use crate::scalar::Scalar;

use super::Tensor;

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<(), TensorError> {
    if a.shape() != b.shape() {
        return Err(TensorError::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn dims4<T: Scalar>(op: &'static str, t: &Tensor<T>) -> Result<[usize; 4], TensorError> {
    match *t.shape() {
        [b, c, h, w] => Ok([b, c, h, w]),
        _ => Err(TensorError::shape(op, format!("expected [B, C, H, W], got {:?}", t.shape()))),
    }
}

fn cast<T: Scalar>(v: f64) -> T {
    T::from_f64_lossy(v)
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("add", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect();
    Ok(Tensor::from_op(data, a.shape().to_vec(), "add", &[a, b], |g, needs| {
        needs.iter().map(|&n| n.then(|| g.to_vec())).collect()
    }))
}

pub fn sub<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    same_shape("sub", a, b)?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| x - y).collect();
    Ok(Tensor::from_op(data, a.shape().to_vec(), "sub", &[a, b], |g, needs| {
        vec![needs[0].then(|| g.to_vec()), needs[1].then(|| g.iter().map(|&v| -v).collect())]
    }))
}

/// Multiply by a constant.
pub fn scale<T: Scalar>(a: &Tensor<T>, factor: T) -> Tensor<T> {
    let data = a.data().iter().map(|&x| x * factor).collect();
    Tensor::from_op(data, a.shape().to_vec(), "scale", &[a], move |g, _| {
        vec![Some(g.iter().map(|&v| v * factor).collect())]
    })
}

pub fn square<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let x = a.data().to_vec();
    let data = x.iter().map(|&v| v * v).collect();
    Tensor::from_op(data, a.shape().to_vec(), "square", &[a], move |g, _| {
        let two = T::one() + T::one();
        vec![Some(g.iter().zip(&x).map(|(&gv, &xv)| two * xv * gv).collect())]
    })
}

/// Sum of all elements, shape `[1]`.
pub fn sum<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let total = a.data().iter().fold(T::zero(), |acc, &v| acc + v);
    let n = a.numel();
    Tensor::from_op(vec![total], vec![1], "sum", &[a], move |g, _| vec![Some(vec![g[0]; n])])
}

pub fn mean<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let n = cast::<T>(a.numel() as f64);
    scale(&sum(a), T::one() / n)
}

/// Elementwise `max(0, x)`; the subgradient at exactly zero is zero.
pub fn relu<T: Scalar>(a: &Tensor<T>) -> Tensor<T> {
    let data: Vec<T> = a.data().iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
    let mask: Vec<bool> = a.data().iter().map(|&v| v > T::zero()).collect();
    Tensor::from_op(data, a.shape().to_vec(), "relu", &[a], move |g, _| {
        vec![Some(g.iter().zip(&mask).map(|(&gv, &m)| if m { gv } else { T::zero() }).collect())]
    })
}

fn row_softmax<T: Scalar>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

fn last_axis<T: Scalar>(op: &'static str, a: &Tensor<T>) -> Result<usize, TensorError> {
    match a.shape().last() {
        Some(&c) if c >= 2 => Ok(c),
        _ => Err(TensorError::shape(op, format!("last axis must have >= 2 entries, got {:?}", a.shape()))),
    }
}

/// Softmax over the last axis with max subtraction.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let c = last_axis("softmax", logits)?;
    let mut probs = vec![T::zero(); logits.numel()];
    for (row, out) in logits.data().chunks(c).zip(probs.chunks_mut(c)) {
        row_softmax(row, out);
    }
    let saved = probs.clone();
    Ok(Tensor::from_op(probs, logits.shape().to_vec(), "softmax", &[logits], move |g, _| {
        let mut dx = vec![T::zero(); g.len()];
        for ((p, gr), d) in saved.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
            let dot = p.iter().zip(gr).fold(T::zero(), |acc, (&pv, &gv)| acc + pv * gv);
            for ((dv, &pv), &gv) in d.iter_mut().zip(p).zip(gr) {
                *dv = pv * (gv - dot);
            }
        }
        vec![Some(dx)]
    }))
}

/// `log(softmax(x))` over the last axis, computed as `x - max - log(sum(exp(x - max)))`.
pub fn log_softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let c = last_axis("log_softmax", logits)?;
    let mut out = vec![T::zero(); logits.numel()];
    for (row, o) in logits.data().chunks(c).zip(out.chunks_mut(c)) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = row.iter().fold(T::zero(), |acc, &v| acc + (v - max).exp()).ln() + max;
        for (ov, &v) in o.iter_mut().zip(row) {
            *ov = v - lse;
        }
    }
    let saved = out.clone();
    Ok(Tensor::from_op(out, logits.shape().to_vec(), "log_softmax", &[logits], move |g, _| {
        let mut dx = vec![T::zero(); g.len()];
        for ((lp, gr), d) in saved.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
            let total = gr.iter().fold(T::zero(), |acc, &v| acc + v);
            for ((dv, &l), &gv) in d.iter_mut().zip(lp).zip(gr) {
                *dv = gv - l.exp() * total;
            }
        }
        vec![Some(dx)]
    }))
}

/// `sum_i coef_i * x[row_i, col_i]` over a 2-D tensor, shape `[1]`.
pub fn pick_weighted_sum<T: Scalar>(
    x: &Tensor<T>,
    picks: &[(usize, usize, T)],
) -> Result<Tensor<T>, TensorError> {
    let [rows, cols] = match *x.shape() {
        [r, c] => [r, c],
        _ => return Err(TensorError::shape("pick_weighted_sum", format!("expected 2-D, got {:?}", x.shape()))),
    };
    if let Some(&(r, c, _)) = picks.iter().find(|&&(r, c, _)| r >= rows || c >= cols) {
        return Err(TensorError::shape(
            "pick_weighted_sum",
            format!("index ({r}, {c}) outside {:?}", x.shape()),
        ));
    }
    let total = picks.iter().fold(T::zero(), |acc, &(r, c, w)| acc + w * x.data()[r * cols + c]);
    let picks = picks.to_vec();
    let n = x.numel();
    Ok(Tensor::from_op(vec![total], vec![1], "pick_weighted_sum", &[x], move |g, _| {
        let mut dx = vec![T::zero(); n];
        for &(r, c, w) in &picks {
            dx[r * cols + c] += w * g[0];
        }
        vec![Some(dx)]
    }))
}

/// Inverted dropout. In training mode each element is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`; otherwise identity.
/// Masks are drawn sequentially from `rng`, one uniform per element.
pub fn dropout<T: Scalar>(
    input: &Tensor<T>,
    rate: f64,
    rng: &mut RngState,
    training: bool,
) -> Result<Tensor<T>, TensorError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(TensorError::invalid("dropout", format!("rate {rate} outside [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(input.clone());
    }
    let keep = cast::<T>(1.0 / (1.0 - rate));
    let threshold = rate as f32;
    let mask: Vec<T> = (0..input.numel())
        .map(|_| if rng.uniform_f32() < threshold { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    Ok(Tensor::from_op(data, input.shape().to_vec(), "dropout", &[input], move |g, _| {
        vec![Some(g.iter().zip(&mask).map(|(&gv, &m)| gv * m).collect())]
    }))
}

/// Result of [`batch_norm`]: the normalized tensor and the running statistics
/// after this call (unchanged in inference mode).
#[derive(Debug, Clone)]
pub struct BatchNormOutput<T: Scalar> {
    pub output: Tensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Per-channel batch normalization over `[B, C, H, W]`.
///
/// Training mode normalizes with the biased batch variance and blends the
/// unbiased batch variance into the running estimate:
/// `running = (1 - momentum) * running + momentum * batch`.
#[allow(clippy::too_many_arguments)]
pub fn batch_norm<T: Scalar>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &[T],
    running_var: &[T],
    training: bool,
    momentum: T,
    epsilon: T,
) -> Result<BatchNormOutput<T>, TensorError> {
    let [b, c, h, w] = dims4("batch_norm", input)?;
    if epsilon < T::zero() || (training && epsilon == T::zero()) || epsilon.is_nan() {
        return Err(TensorError::invalid("batch_norm", format!("epsilon must be positive, got {epsilon}")));
    }
    for (name, len) in [
        ("gamma", gamma.numel()),
        ("beta", beta.numel()),
        ("running_mean", running_mean.len()),
        ("running_var", running_var.len()),
    ] {
        if len != c {
            return Err(TensorError::shape("batch_norm", format!("{name} has {len} entries for {c} channels")));
        }
    }
    let hw = h * w;
    let count = b * hw;
    let x = input.data();
    let at = move |n: usize, ch: usize| (n * c + ch) * hw;

    let (mean, var) = if training {
        let mut mean = vec![T::zero(); c];
        let mut var = vec![T::zero(); c];
        let inv = T::one() / cast::<T>(count as f64);
        for ch in 0..c {
            let mut s = T::zero();
            for n in 0..b {
                s += x[at(n, ch)..at(n, ch) + hw].iter().fold(T::zero(), |a, &v| a + v);
            }
            let m = s * inv;
            let mut sq = T::zero();
            for n in 0..b {
                sq += x[at(n, ch)..at(n, ch) + hw].iter().fold(T::zero(), |a, &v| a + (v - m) * (v - m));
            }
            mean[ch] = m;
            var[ch] = sq * inv;
        }
        (mean, var)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + epsilon).sqrt()).collect();
    let g = gamma.data();
    let be = beta.data();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for n in 0..b {
        for ch in 0..c {
            let base = at(n, ch);
            for i in base..base + hw {
                let v = (x[i] - mean[ch]) * inv_std[ch];
                xhat[i] = v;
                out[i] = g[ch] * v + be[ch];
            }
        }
    }

    let (new_mean, new_var) = if training {
        let one = T::one();
        let unbias = if count > 1 { cast::<T>(count as f64 / (count as f64 - 1.0)) } else { one };
        let m: Vec<T> = running_mean
            .iter()
            .zip(&mean)
            .map(|(&r, &bm)| (one - momentum) * r + momentum * bm)
            .collect();
        let v: Vec<T> = running_var
            .iter()
            .zip(&var)
            .map(|(&r, &bv)| (one - momentum) * r + momentum * bv * unbias)
            .collect();
        (m, v)
    } else {
        (running_mean.to_vec(), running_var.to_vec())
    };

    let gamma_v = g.to_vec();
    let output = Tensor::from_op(out, input.shape().to_vec(), "batch_norm", &[input, gamma, beta], move |gy, needs| {
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        let mut dot = vec![T::zero(); c];
        for n in 0..b {
            for ch in 0..c {
                let base = at(n, ch);
                for i in base..base + hw {
                    dbeta[ch] += gy[i];
                    dot[ch] += gy[i] * xhat[i];
                }
            }
        }
        dgamma.copy_from_slice(&dot);
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); gy.len()];
            let inv_n = T::one() / cast::<T>(count as f64);
            for n in 0..b {
                for ch in 0..c {
                    let base = at(n, ch);
                    let k = gamma_v[ch] * inv_std[ch];
                    if training {
                        let mean_dy = dbeta[ch] * inv_n;
                        let mean_dy_xhat = dot[ch] * inv_n;
                        for i in base..base + hw {
                            dx[i] = k * (gy[i] - mean_dy - xhat[i] * mean_dy_xhat);
                        }
                    } else {
                        for i in base..base + hw {
                            dx[i] = k * gy[i];
                        }
                    }
                }
            }
            dx
        });
        vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
    });
    Ok(BatchNormOutput { output, running_mean: new_mean, running_var: new_var })
}

/// Max pooling with a square window. The gradient goes to the first maximum
/// of each window in row-major order.
pub fn max_pool2d<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<Tensor<T>, TensorError> {
    let [b, c, h, w] = dims4("max_pool2d", input)?;
    if window == 0 || stride == 0 {
        return Err(TensorError::invalid("max_pool2d", "window and stride must be positive"));
    }
    if window > h || window > w {
        return Err(TensorError::shape("max_pool2d", format!("window {window} larger than {h}x{w} input")));
    }
    let oh = (h - window) / stride + 1;
    let ow = (w - window) / stride + 1;
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut argmax = Vec::with_capacity(b * c * oh * ow);
    for plane in 0..b * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..window {
                    for kx in 0..window {
                        let i = base + (oy * stride + ky) * w + ox * stride + kx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let n = x.len();
    Ok(Tensor::from_op(out, vec![b, c, oh, ow], "max_pool2d", &[input], move |g, _| {
        let mut dx = vec![T::zero(); n];
        for (&i, &gv) in argmax.iter().zip(g) {
            dx[i] += gv;
        }
        vec![Some(dx)]
    }))
}

/// Spatial mean per channel: `[B, C, H, W] -> [B, C]`.
pub fn global_avg_pool<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let [b, c, h, w] = dims4("global_avg_pool", input)?;
    let hw = h * w;
    let inv = T::one() / cast::<T>(hw as f64);
    let out = input.data().chunks(hw).map(|p| p.iter().fold(T::zero(), |a, &v| a + v) * inv).collect();
    Ok(Tensor::from_op(out, vec![b, c], "global_avg_pool", &[input], move |g, _| {
        let mut dx = Vec::with_capacity(b * c * hw);
        for &gv in g {
            dx.extend(std::iter::repeat_n(gv * inv, hw));
        }
        vec![Some(dx)]
    }))
}

/// Affine map `input · weightᵀ + bias` with `input: [B, D]`, `weight: [K, D]`.
pub fn dense<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>, TensorError> {
    let (b, d) = match *input.shape() {
        [b, d] => (b, d),
        _ => return Err(TensorError::shape("dense", format!("input must be [B, D], got {:?}", input.shape()))),
    };
    let k = match *weight.shape() {
        [k, wd] if wd == d => k,
        _ => {
            return Err(TensorError::shape(
                "dense",
                format!("weight {:?} does not match input features {d}", weight.shape()),
            ))
        }
    };
    if bias.shape() != [k] {
        return Err(TensorError::shape("dense", format!("bias {:?}, expected [{k}]", bias.shape())));
    }
    let mut out = Vec::with_capacity(b * k);
    for _ in 0..b {
        out.extend_from_slice(bias.data());
    }
    let di = d as isize;
    let ki = k as isize;
    T::gemm(b, d, k, T::one(), input.data(), (di, 1), weight.data(), (1, di), T::one(), &mut out, (ki, 1));
    let x = input.data().to_vec();
    let wv = weight.data().to_vec();
    Ok(Tensor::from_op(out, vec![b, k], "dense", &[input, weight, bias], move |g, needs| {
        let dx = needs[0].then(|| {
            let mut dx = vec![T::zero(); b * d];
            T::gemm(b, k, d, T::one(), g, (ki, 1), &wv, (di, 1), T::zero(), &mut dx, (di, 1));
            dx
        });
        let dw = needs[1].then(|| {
            let mut dw = vec![T::zero(); k * d];
            T::gemm(k, b, d, T::one(), g, (1, ki), &x, (di, 1), T::zero(), &mut dw, (di, 1));
            dw
        });
        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); k];
            for row in g.chunks(k) {
                db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
            }
            db
        });
        vec![dx, dw, db]
    }))
}
