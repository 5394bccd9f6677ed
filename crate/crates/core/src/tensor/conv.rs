//! 2-D cross-correlation via im2col + GEMM.
//!
//! For each sample the input patches are unrolled into a
//! `[Cin * kH * kW, H' * W']` column matrix so the convolution becomes
//! `kernel[Cout, Cin * kH * kW] · cols + bias`. Backward recomputes the
//! columns instead of keeping them alive between passes.

use crate::error::TensorError;
use crate::scalar::Scalar;

use super::Tensor;

/// `floor((size + 2 * padding - kernel) / stride) + 1`, or `None` when the
/// kernel does not fit.
pub fn conv_output_size(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    (kernel <= padded && stride > 0).then(|| (padded - kernel) / stride + 1)
}

#[derive(Clone, Copy)]
struct Geometry {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    // Source column range [lo, hi) of output columns whose input x index lies
    // inside the image for kernel offset kx.
    fn valid_ox(&self, kx: usize) -> (usize, usize) {
        let mut lo = 0;
        while lo < self.ow && lo * self.stride + kx < self.padding {
            lo += 1;
        }
        let mut hi = self.ow;
        while hi > lo && (hi - 1) * self.stride + kx >= self.padding + self.w {
            hi -= 1;
        }
        (lo, hi)
    }

    fn im2col<T: Scalar>(&self, input: &[T], cols: &mut [T]) {
        let n = self.cols();
        for c in 0..self.cin {
            let plane = &input[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &mut cols[((c * self.kh + ky) * self.kw + kx) * n..][..n];
                    let (lo, hi) = self.valid_ox(kx);
                    for oy in 0..self.oh {
                        let out = &mut row[oy * self.ow..(oy + 1) * self.ow];
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= self.h {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        out[..lo].fill(T::zero());
                        out[hi..].fill(T::zero());
                        for (ox, o) in out.iter_mut().enumerate().take(hi).skip(lo) {
                            *o = src[ox * self.stride + kx - self.padding];
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], grad_input: &mut [T]) {
        let n = self.cols();
        for c in 0..self.cin {
            let plane = &mut grad_input[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = &cols[((c * self.kh + ky) * self.kw + kx) * n..][..n];
                    let (lo, hi) = self.valid_ox(kx);
                    for oy in 0..self.oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy as usize >= self.h {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let src = &row[oy * self.ow..(oy + 1) * self.ow];
                        for ox in lo..hi {
                            dst[ox * self.stride + kx - self.padding] += src[ox];
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation (no kernel flip) with zero padding.
///
/// `input: [B, Cin, H, W]`, `kernel: [Cout, Cin, kH, kW]`, `bias: [Cout]`;
/// output is `[B, Cout, H', W']` with `H' = floor((H + 2p - kH) / s) + 1`.
pub fn conv2d<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>, TensorError> {
    let [b, cin, h, w] = match *input.shape() {
        [b, c, h, w] => [b, c, h, w],
        _ => return Err(TensorError::shape("conv2d", format!("input must be [B, Cin, H, W], got {:?}", input.shape()))),
    };
    let [cout, kcin, kh, kw] = match *kernel.shape() {
        [o, i, kh, kw] => [o, i, kh, kw],
        _ => {
            return Err(TensorError::shape(
                "conv2d",
                format!("kernel must be [Cout, Cin, kH, kW], got {:?}", kernel.shape()),
            ))
        }
    };
    if kcin != cin {
        return Err(TensorError::shape(
            "conv2d",
            format!("input has {cin} channels but kernel {:?} expects {kcin}", kernel.shape()),
        ));
    }
    if bias.shape() != [cout] {
        return Err(TensorError::shape("conv2d", format!("bias {:?}, expected [{cout}]", bias.shape())));
    }
    if stride == 0 {
        return Err(TensorError::invalid("conv2d", "stride must be positive"));
    }
    let (Some(oh), Some(ow)) = (conv_output_size(h, kh, stride, padding), conv_output_size(w, kw, stride, padding))
    else {
        return Err(TensorError::shape(
            "conv2d",
            format!("kernel {kh}x{kw} does not fit {h}x{w} input with padding {padding}"),
        ));
    };
    let geo = Geometry { cin, h, w, kh, kw, oh, ow, stride, padding };
    let rows = geo.rows();
    let ncols = geo.cols();
    let in_len = cin * h * w;
    let out_len = cout * ncols;

    let mut out = vec![T::zero(); b * out_len];
    let mut cols = vec![T::zero(); rows * ncols];
    let x = input.data();
    let k = kernel.data();
    for n in 0..b {
        geo.im2col(&x[n * in_len..(n + 1) * in_len], &mut cols);
        let o = &mut out[n * out_len..(n + 1) * out_len];
        for (co, &bv) in bias.data().iter().enumerate() {
            o[co * ncols..(co + 1) * ncols].fill(bv);
        }
        T::gemm(cout, rows, ncols, T::one(), k, (rows as isize, 1), &cols, (ncols as isize, 1), T::one(), o, (ncols as isize, 1));
    }

    let xs = x.to_vec();
    let ks = k.to_vec();
    Ok(Tensor::from_op(out, vec![b, cout, oh, ow], "conv2d", &[input, kernel, bias], move |g, needs| {
        let mut dk = needs[1].then(|| vec![T::zero(); cout * rows]);
        let mut dx = needs[0].then(|| vec![T::zero(); b * in_len]);
        let db = needs[2].then(|| {
            let mut db = vec![T::zero(); cout];
            for n in 0..b {
                for (co, d) in db.iter_mut().enumerate() {
                    let s = &g[n * out_len + co * ncols..][..ncols];
                    *d += s.iter().fold(T::zero(), |a, &v| a + v);
                }
            }
            db
        });
        let mut cols = vec![T::zero(); rows * ncols];
        for n in 0..b {
            let gn = &g[n * out_len..(n + 1) * out_len];
            if let Some(dk) = dk.as_mut() {
                geo.im2col(&xs[n * in_len..(n + 1) * in_len], &mut cols);
                // dK += dOut_n · colsᵀ
                T::gemm(cout, ncols, rows, T::one(), gn, (ncols as isize, 1), &cols, (1, ncols as isize), T::one(), dk, (rows as isize, 1));
            }
            if let Some(dx) = dx.as_mut() {
                // dCols = Kᵀ · dOut_n
                T::gemm(rows, cout, ncols, T::one(), &ks, (1, rows as isize), gn, (ncols as isize, 1), T::zero(), &mut cols, (ncols as isize, 1));
                geo.col2im(&cols, &mut dx[n * in_len..(n + 1) * in_len]);
            }
        }
        vec![dx, dk, db]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(data: Vec<f64>, shape: &[usize]) -> Tensor<f64> {
        Tensor::new(data, shape).unwrap()
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = t(vec![1.0, 2.0, 3.0, 4.0], &[1, 1, 2, 2]);
        let y = conv2d(&x, &t(vec![1.0], &[1, 1, 1, 1]), &t(vec![0.0], &[1]), 1, 0).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn all_ones_two_by_two() {
        let x = t((1..=9).map(f64::from).collect(), &[1, 1, 3, 3]);
        let y = conv2d(&x, &t(vec![1.0; 4], &[1, 1, 2, 2]), &t(vec![0.0], &[1]), 1, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn stride_two_subsamples() {
        let x = t((0..25).map(f64::from).collect(), &[1, 1, 5, 5]);
        let y = conv2d(&x, &t(vec![1.0], &[1, 1, 1, 1]), &t(vec![0.0], &[1]), 2, 0).unwrap();
        assert_eq!(y.shape(), &[1, 1, 3, 3]);
        let expected: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |c| (2 * r * 5 + 2 * c) as f64)).collect();
        assert_eq!(y.data(), expected.as_slice());
    }

    #[test]
    fn padding_adds_zero_border() {
        let x = t(vec![1.0], &[1, 1, 1, 1]);
        let y = conv2d(&x, &t(vec![1.0; 9], &[1, 1, 3, 3]), &t(vec![0.5], &[1]), 1, 1).unwrap();
        assert_eq!(y.data(), &[1.5]);
    }

    #[test]
    fn channel_mismatch_is_rejected() {
        let x = t(vec![0.0; 8], &[1, 2, 2, 2]);
        let err = conv2d(&x, &t(vec![0.0; 3], &[1, 3, 1, 1]), &t(vec![0.0], &[1]), 1, 0).unwrap_err();
        assert!(err.to_string().contains("channels"));
    }

    #[test]
    fn oversized_kernel_is_rejected() {
        let x = t(vec![0.0; 4], &[1, 1, 2, 2]);
        assert!(conv2d(&x, &t(vec![0.0; 9], &[1, 1, 3, 3]), &t(vec![0.0], &[1]), 1, 0).is_err());
        assert!(conv2d(&x, &t(vec![0.0; 9], &[1, 1, 3, 3]), &t(vec![0.0], &[1]), 1, 1).is_ok());
    }

    #[test]
    fn output_size_formula() {
        assert_eq!(conv_output_size(32, 3, 1, 1), Some(32));
        assert_eq!(conv_output_size(32, 3, 2, 1), Some(16));
        assert_eq!(conv_output_size(2, 3, 1, 0), None);
    }
}
