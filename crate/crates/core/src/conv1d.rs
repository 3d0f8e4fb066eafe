//! One-dimensional strided, transposed and sub-pixel convolution.
//!
//! All convolutions here are cross-correlations: tap `t` of a filter meets
//! input sample `j * stride + t - pad_left`. Transposed and sub-pixel
//! convolutions share one crop convention: the uncropped output has length
//! `stride * (len(x) - 1) + len(f)`, and `crop.left` / `crop.right` samples are
//! removed from each end. A negative crop appends zeros instead.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A 1D filter with at least one tap.
#[derive(Clone, Debug, PartialEq)]
pub struct Filter1d(Tensor);

impl Filter1d {
    pub fn new(taps: &[f64]) -> Result<Self> {
        Ok(Filter1d(Tensor::vector(taps)?))
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        t.expect_rank(1, "filter")?;
        Ok(Filter1d(t))
    }

    pub fn taps(&self) -> &[f64] {
        self.0.data()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn as_tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Samples removed from each end of an upsampling convolution's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Crop1d {
    pub left: isize,
    pub right: isize,
}

impl Crop1d {
    pub fn new(left: isize, right: isize) -> Self {
        Crop1d { left, right }
    }

    /// Crop that yields `ratio * len(x)` outputs: total `filter_len - ratio`,
    /// split with the larger half on the left.
    pub fn default_for(filter_len: usize, ratio: usize) -> Self {
        let total = filter_len as isize - ratio as isize;
        let right = total.div_euclid(2);
        Crop1d {
            left: total - right,
            right,
        }
    }
}

/// Output length of [`conv1d`].
pub fn conv1d_output_len(
    input_len: usize,
    filter_len: usize,
    stride: usize,
    pad_left: usize,
    pad_right: usize,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let padded = input_len + pad_left + pad_right;
    if padded < filter_len {
        return Err(Error::WindowTooLarge {
            window: filter_len,
            padded,
        });
    }
    Ok((padded - filter_len) / stride + 1)
}

/// Output length of [`transposed_conv1d`] and [`subpixel_conv1d`].
pub fn upsampled_output_len(
    input_len: usize,
    filter_len: usize,
    stride: usize,
    crop: Crop1d,
) -> Result<usize> {
    if stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let uncropped = stride * (input_len - 1) + filter_len;
    let len = uncropped as isize - crop.left - crop.right;
    if len < 1 {
        return Err(Error::InvalidCrop {
            left: crop.left,
            right: crop.right,
            uncropped,
        });
    }
    Ok(len as usize)
}

/// Strided cross-correlation of `x` with `f` over a zero-padded input.
pub fn conv1d(
    x: &Tensor,
    f: &Filter1d,
    stride: usize,
    pad_left: usize,
    pad_right: usize,
) -> Result<Tensor> {
    x.expect_rank(1, "conv1d input")?;
    let n = x.len();
    let out_len = conv1d_output_len(n, f.len(), stride, pad_left, pad_right)?;
    let xs = x.data();
    let out: Vec<f64> = (0..out_len)
        .map(|j| {
            let mut acc = 0.0;
            for (t, &w) in f.taps().iter().enumerate() {
                let pos = (j * stride + t) as isize - pad_left as isize;
                if pos >= 0 && (pos as usize) < n {
                    acc += w * xs[pos as usize];
                }
            }
            acc
        })
        .collect();
    Tensor::vector(&out)
}

/// Matrix `M` with `conv1d(x, ...) == M x`; padding is folded in, so taps
/// that only ever meet padding do not appear.
pub fn conv1d_matrix(
    f: &Filter1d,
    input_len: usize,
    stride: usize,
    pad_left: usize,
    pad_right: usize,
) -> Result<Tensor> {
    if input_len == 0 {
        return Err(Error::InvalidArgument("input length must be positive".into()));
    }
    let rows = conv1d_output_len(input_len, f.len(), stride, pad_left, pad_right)?;
    let mut m = Tensor::zeros(&[rows, input_len])?;
    let data = m.data_mut();
    for j in 0..rows {
        for c in 0..input_len {
            let t = (c + pad_left) as isize - (j * stride) as isize;
            if t >= 0 && (t as usize) < f.len() {
                data[j * input_len + c] = f.taps()[t as usize];
            }
        }
    }
    Ok(m)
}

/// Scatter-accumulate `f` at stride `stride` for every input sample, then crop.
pub fn transposed_conv1d(x: &Tensor, f: &Filter1d, stride: usize, crop: Crop1d) -> Result<Tensor> {
    x.expect_rank(1, "transposed_conv1d input")?;
    let out_len = upsampled_output_len(x.len(), f.len(), stride, crop)?;
    let mut out = vec![0.0; out_len];
    for (i, &xi) in x.data().iter().enumerate() {
        for (t, &w) in f.taps().iter().enumerate() {
            let pos = (i * stride + t) as isize - crop.left;
            if pos >= 0 && (pos as usize) < out_len {
                out[pos as usize] += w * xi;
            }
        }
    }
    Tensor::vector(&out)
}

/// Places `x[i]` at `ratio * i` in a zero signal of length `ratio * len(x)`.
pub fn zero_interleave(x: &Tensor, ratio: usize) -> Result<Tensor> {
    x.expect_rank(1, "zero_interleave input")?;
    if ratio == 0 {
        return Err(Error::InvalidArgument("ratio must be positive".into()));
    }
    let mut out = vec![0.0; x.len() * ratio];
    for (i, &v) in x.data().iter().enumerate() {
        out[i * ratio] = v;
    }
    Tensor::vector(&out)
}

/// Fractional-stride convolution: correlate `f` with the zero-interleaved
/// input, padded by `len(f) - 1 - crop.left` on the left, keeping as many
/// samples as [`transposed_conv1d`] would with the same crop.
pub fn subpixel_conv1d(x: &Tensor, f: &Filter1d, ratio: usize, crop: Crop1d) -> Result<Tensor> {
    let out_len = upsampled_output_len(x.len(), f.len(), ratio, crop)?;
    let stuffed = zero_interleave(x, ratio)?;
    let offset = crop.left - (f.len() as isize - 1);
    Tensor::vector(&correlate_at(stuffed.data(), f.taps(), offset, out_len))
}

/// `out[c] = sum_t taps[t] * signal[c + offset + t]`, zero outside the signal.
pub(crate) fn correlate_at(signal: &[f64], taps: &[f64], offset: isize, out_len: usize) -> Vec<f64> {
    let n = signal.len() as isize;
    (0..out_len)
        .map(|c| {
            let mut acc = 0.0;
            for (t, &w) in taps.iter().enumerate() {
                let pos = c as isize + offset + t as isize;
                if (0..n).contains(&pos) {
                    acc += w * signal[pos as usize];
                }
            }
            acc
        })
        .collect()
}

pub fn reverse_filter(f: &Filter1d) -> Filter1d {
    let mut taps = f.taps().to_vec();
    taps.reverse();
    Filter1d(Tensor::vector(&taps).expect("filter is nonempty"))
}

/// Dense matrix of a linear map on 1D tensors, one column per unit input.
pub fn realize_matrix(
    input_len: usize,
    op: impl Fn(&Tensor) -> Result<Tensor>,
) -> Result<Tensor> {
    let mut columns = Vec::with_capacity(input_len);
    for c in 0..input_len {
        let unit = Tensor::zeros(&[input_len])?.set(&[c], 1.0)?;
        columns.push(op(&unit)?);
    }
    let rows = columns[0].len();
    let mut m = Tensor::zeros(&[rows, input_len])?;
    let data = m.data_mut();
    for (c, col) in columns.iter().enumerate() {
        col.expect_rank(1, "linear map output")?;
        if col.len() != rows {
            return Err(Error::InvalidArgument("linear map output length varies".into()));
        }
        for (r, &v) in col.data().iter().enumerate() {
            data[r * input_len + c] = v;
        }
    }
    Ok(m)
}

/// Transpose of a 2D tensor.
pub fn transpose(m: &Tensor) -> Result<Tensor> {
    m.expect_rank(2, "matrix")?;
    let (rows, cols) = (m.dims()[0], m.dims()[1]);
    let mut out = Tensor::zeros(&[cols, rows])?;
    let src = m.data();
    let dst = out.data_mut();
    for r in 0..rows {
        for c in 0..cols {
            dst[c * rows + r] = src[r * cols + c];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(values: &[f64]) -> Tensor {
        Tensor::vector(values).unwrap()
    }

    fn f(values: &[f64]) -> Filter1d {
        Filter1d::new(values).unwrap()
    }

    #[test]
    fn strided_conv_lengths() {
        let x = Tensor::new(&[8], 1.0).unwrap();
        let y = conv1d(&x, &f(&[1.0, 2.0, 3.0, 4.0]), 2, 2, 2).unwrap();
        assert_eq!(y.len(), 5);
    }

    #[test]
    fn identity_and_box_filters() {
        assert_eq!(conv1d(&v(&[5.0, 7.0]), &f(&[1.0]), 1, 0, 0).unwrap().data(), &[5.0, 7.0]);
        let y = conv1d(&v(&[1.0, 2.0, 3.0, 4.0]), &f(&[1.0, 1.0]), 1, 0, 0).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0, 7.0]);
    }

    #[test]
    fn window_longer_than_signal() {
        let err = conv1d(&v(&[1.0, 2.0]), &f(&[1.0, 1.0, 1.0]), 1, 0, 0).unwrap_err();
        assert!(matches!(err, Error::WindowTooLarge { window: 3, padded: 2 }));
        assert!(conv1d(&v(&[1.0]), &f(&[1.0]), 0, 0, 0).is_err());
    }

    #[test]
    fn identity_matrix() {
        let m = conv1d_matrix(&f(&[1.0]), 4, 1, 0, 0).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m.get(&[r, c]).unwrap(), if r == c { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn matrix_has_fig_shape_and_sparse_rows() {
        let m = conv1d_matrix(&f(&[1.0, 2.0, 3.0, 4.0]), 8, 2, 2, 2).unwrap();
        assert_eq!(m.dims(), &[5, 8]);
        // first row only sees taps 2 and 3, the rest fall on padding
        assert_eq!(&m.data()[..8], &[3.0, 4.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        for r in 0..5 {
            let nnz = m.data()[r * 8..(r + 1) * 8].iter().filter(|&&v| v != 0.0).count();
            assert!(nnz <= 4);
        }
    }

    #[test]
    fn transposed_length_and_zero_input() {
        let taps = f(&[1.0, 2.0, 3.0, 4.0]);
        let zeros = Tensor::zeros(&[5]).unwrap();
        // crops mirroring the (2, 2) padding of the 8 -> 5 strided conv
        let y = transposed_conv1d(&zeros, &taps, 2, Crop1d::new(2, 2)).unwrap();
        assert_eq!(y.len(), 8);
        assert!(y.data().iter().all(|&v| v == 0.0));
        let crop = Crop1d::default_for(4, 2);
        assert_eq!(crop, Crop1d::new(1, 1));
        assert_eq!(transposed_conv1d(&zeros, &taps, 2, crop).unwrap().len(), 10);
    }

    #[test]
    fn transposed_scatter_values() {
        // uncropped: x0*f at 0..4, x1*f at 2..6
        let y = transposed_conv1d(&v(&[1.0, 10.0]), &f(&[1.0, 2.0, 3.0, 4.0]), 2, Crop1d::new(0, 0))
            .unwrap();
        assert_eq!(y.data(), &[1.0, 2.0, 13.0, 24.0, 30.0, 40.0]);
        let cropped =
            transposed_conv1d(&v(&[1.0, 10.0]), &f(&[1.0, 2.0, 3.0, 4.0]), 2, Crop1d::new(1, 1))
                .unwrap();
        assert_eq!(cropped.data(), &[2.0, 13.0, 24.0, 30.0]);
    }

    #[test]
    fn negative_crop_pads_output() {
        let crop = Crop1d::default_for(1, 3);
        assert_eq!(crop, Crop1d::new(-1, -1));
        let y = transposed_conv1d(&v(&[1.0, 2.0]), &f(&[5.0]), 3, crop).unwrap();
        assert_eq!(y.data(), &[0.0, 5.0, 0.0, 0.0, 10.0, 0.0]);
    }

    #[test]
    fn invalid_crop_is_error() {
        let err = transposed_conv1d(&v(&[1.0]), &f(&[1.0, 2.0]), 2, Crop1d::new(1, 1)).unwrap_err();
        assert!(matches!(err, Error::InvalidCrop { .. }));
        assert!(subpixel_conv1d(&v(&[1.0]), &f(&[1.0, 2.0]), 2, Crop1d::new(2, 0)).is_err());
    }

    #[test]
    fn subpixel_lengths_and_impulse() {
        let x = v(&[1.0, 0.0, 0.0, 0.0, 0.0]);
        let taps = f(&[1.0, 2.0, 3.0, 4.0]);
        let y = subpixel_conv1d(&x, &taps, 2, Crop1d::new(2, 2)).unwrap();
        assert_eq!(y.len(), 8);
        // stuffed impulse at 0, padded by 4 - 1 - 2 = 1 on the left
        assert_eq!(y.data(), &[2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let y = subpixel_conv1d(&x, &taps, 2, Crop1d::default_for(4, 2)).unwrap();
        assert_eq!(y.len(), 10);
        assert_eq!(&y.data()[..4], &[3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn subpixel_at_unit_ratio_is_plain_conv() {
        let x = v(&[0.5, -1.0, 2.0, 0.25, 3.0]);
        let taps = f(&[1.0, -2.0, 0.5]);
        let crop = Crop1d::default_for(3, 1);
        assert_eq!(crop, Crop1d::new(1, 1));
        let a = subpixel_conv1d(&x, &taps, 1, crop).unwrap();
        let b = conv1d(&x, &taps, 1, 1, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn reversal() {
        assert_eq!(reverse_filter(&f(&[1.0, 2.0, 3.0, 4.0])).taps(), &[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(reverse_filter(&f(&[1.0, 2.0, 1.0])).taps(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn realize_and_transpose() {
        let taps = f(&[1.0, 2.0, 3.0]);
        let m = conv1d_matrix(&taps, 6, 2, 1, 1).unwrap();
        let realized = realize_matrix(6, |x| conv1d(x, &taps, 2, 1, 1)).unwrap();
        assert_eq!(m, realized);
        assert_eq!(transpose(&transpose(&m).unwrap()).unwrap(), m);
    }
}
