//! Multi-channel 2D convolution, transposed convolution and sub-pixel
//! convolution on `(channels, height, width)` feature maps.
//!
//! Kernels are `(out, in, kh, kw)` and are never flipped. Upsampling ops use
//! the same crop rule as [`crate::conv1d`] on each spatial axis.

use crate::conv1d::Crop1d;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which grid a kernel stack is meant to run on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Space {
    /// Deconvolution form `(o, i, K_h, K_w)`, applied at stride `r`.
    Hr,
    /// Split form `(o * r^2, i, k_h, k_w)`, applied at stride 1 on the LR grid.
    Lr,
}

impl Space {
    pub fn tag(self) -> &'static str {
        match self {
            Space::Hr => "HR",
            Space::Lr => "LR",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Space> {
        match tag {
            "HR" => Some(Space::Hr),
            "LR" => Some(Space::Lr),
            _ => None,
        }
    }
}

/// A 4-axis kernel tensor tagged with its space and upscale ratio.
///
/// LR stacks also remember the spatial size of the HR kernel they merge
/// back into. That size is `r * (kh, kw)` unless the HR kernel was not a
/// multiple of `r`, in which case short phases are zero-padded at the end.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelStack {
    weights: Tensor,
    space: Space,
    ratio: usize,
    hr_size: (usize, usize),
}

impl KernelStack {
    pub fn hr(weights: Tensor, ratio: usize) -> Result<Self> {
        weights.expect_rank(4, "kernel stack")?;
        check_ratio(ratio)?;
        let hr_size = (weights.dims()[2], weights.dims()[3]);
        Ok(KernelStack {
            weights,
            space: Space::Hr,
            ratio,
            hr_size,
        })
    }

    pub fn lr(weights: Tensor, ratio: usize) -> Result<Self> {
        weights.expect_rank(4, "kernel stack")?;
        let hr_size = (weights.dims()[2] * ratio, weights.dims()[3] * ratio);
        Self::lr_with_hr_size(weights, ratio, hr_size)
    }

    pub fn lr_with_hr_size(weights: Tensor, ratio: usize, hr_size: (usize, usize)) -> Result<Self> {
        weights.expect_rank(4, "kernel stack")?;
        check_ratio(ratio)?;
        let (kh, kw) = (weights.dims()[2], weights.dims()[3]);
        if hr_size.0.div_ceil(ratio) != kh || hr_size.1.div_ceil(ratio) != kw {
            return Err(Error::InvalidShape(format!(
                "LR sub-kernels {kh}x{kw} cannot merge into a {}x{} kernel at ratio {ratio}",
                hr_size.0, hr_size.1
            )));
        }
        Ok(KernelStack {
            weights,
            space: Space::Lr,
            ratio,
            hr_size,
        })
    }

    pub fn weights(&self) -> &Tensor {
        &self.weights
    }

    pub fn into_weights(self) -> Tensor {
        self.weights
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Spatial size of the HR (deconvolution) form of this stack.
    pub fn hr_size(&self) -> (usize, usize) {
        self.hr_size
    }

    /// `(o, i, kh, kw)`.
    pub fn dims(&self) -> [usize; 4] {
        let d = self.weights.dims();
        [d[0], d[1], d[2], d[3]]
    }
}

fn check_ratio(ratio: usize) -> Result<()> {
    if ratio == 0 {
        return Err(Error::InvalidArgument("upscale ratio must be positive".into()));
    }
    Ok(())
}

/// Zero padding on each side of a feature map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Padding2d {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

impl Padding2d {
    pub fn uniform(p: usize) -> Self {
        Padding2d {
            top: p,
            bottom: p,
            left: p,
            right: p,
        }
    }
}

/// Per-side crop of an upsampled output; negative values pad with zeros.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct Crop2d {
    pub top: isize,
    pub bottom: isize,
    pub left: isize,
    pub right: isize,
}

impl Crop2d {
    pub fn from_axes(rows: Crop1d, cols: Crop1d) -> Self {
        Crop2d {
            top: rows.left,
            bottom: rows.right,
            left: cols.left,
            right: cols.right,
        }
    }

    /// Per-axis [`Crop1d::default_for`]: output is `(r * H, r * W)`.
    pub fn default_for(kh: usize, kw: usize, ratio: usize) -> Self {
        Self::from_axes(Crop1d::default_for(kh, ratio), Crop1d::default_for(kw, ratio))
    }

    pub fn rows(&self) -> Crop1d {
        Crop1d::new(self.top, self.bottom)
    }

    pub fn cols(&self) -> Crop1d {
        Crop1d::new(self.left, self.right)
    }
}

fn feature_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    x.expect_rank(3, "feature map")?;
    let d = x.dims();
    Ok((d[0], d[1], d[2]))
}

fn kernel_dims(k: &Tensor) -> Result<[usize; 4]> {
    k.expect_rank(4, "kernel")?;
    let d = k.dims();
    Ok([d[0], d[1], d[2], d[3]])
}

/// Taps `t` in `0..k` with `origin + t` inside `0..len`, as a half-open range.
fn tap_range(origin: isize, k: usize, len: usize) -> (usize, usize) {
    let lo = (-origin).clamp(0, k as isize) as usize;
    let hi = (len as isize - origin).clamp(lo as isize, k as isize) as usize;
    (lo, hi)
}

/// Strided cross-correlation over a zero-padded `(c, H, W)` input.
pub fn conv2d(x: &Tensor, kernel: &Tensor, stride: usize, pad: Padding2d) -> Result<Tensor> {
    let (c, h, w) = feature_dims(x)?;
    let [o, i, kh, kw] = kernel_dims(kernel)?;
    if c != i {
        return Err(Error::ChannelMismatch { input: c, kernel: i });
    }
    let oh = crate::conv1d::conv1d_output_len(h, kh, stride, pad.top, pad.bottom)?;
    let ow = crate::conv1d::conv1d_output_len(w, kw, stride, pad.left, pad.right)?;
    let xs = x.data();
    let ks = kernel.data();
    let mut out = Tensor::zeros(&[o, oh, ow])?;
    let ys = out.data_mut();
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = (oy * stride) as isize - pad.top as isize;
                let x0 = (ox * stride) as isize - pad.left as isize;
                let (dy_lo, dy_hi) = tap_range(y0, kh, h);
                let (dx_lo, dx_hi) = tap_range(x0, kw, w);
                let mut acc = 0.0;
                for ic in 0..i {
                    for dy in dy_lo..dy_hi {
                        let x_row = (ic * h + (y0 + dy as isize) as usize) * w;
                        let k_row = ((oc * i + ic) * kh + dy) * kw;
                        let xb = x_row as isize + x0;
                        for dx in dx_lo..dx_hi {
                            acc += ks[k_row + dx] * xs[(xb + dx as isize) as usize];
                        }
                    }
                }
                ys[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

fn upsampled_dims(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    ratio: usize,
    crop: Crop2d,
) -> Result<(usize, usize)> {
    Ok((
        crate::conv1d::upsampled_output_len(h, kh, ratio, crop.rows())?,
        crate::conv1d::upsampled_output_len(w, kw, ratio, crop.cols())?,
    ))
}

/// Deconvolution: every input pixel scatters the kernel at stride `ratio`,
/// then the result is cropped.
pub fn transposed_conv2d(x: &Tensor, kernel: &Tensor, ratio: usize, crop: Crop2d) -> Result<Tensor> {
    let (c, h, w) = feature_dims(x)?;
    let [o, i, kh, kw] = kernel_dims(kernel)?;
    if c != i {
        return Err(Error::ChannelMismatch { input: c, kernel: i });
    }
    let (oh, ow) = upsampled_dims(h, w, kh, kw, ratio, crop)?;
    let xs = x.data();
    let ks = kernel.data();
    let mut out = Tensor::zeros(&[o, oh, ow])?;
    let ys = out.data_mut();
    // loop order (ic, iy, ix) fixes the summation order of every output pixel
    for ic in 0..i {
        for iy in 0..h {
            for ix in 0..w {
                let v = xs[(ic * h + iy) * w + ix];
                let y0 = (iy * ratio) as isize - crop.top;
                let x0 = (ix * ratio) as isize - crop.left;
                let (ty_lo, ty_hi) = tap_range(y0, kh, oh);
                let (tx_lo, tx_hi) = tap_range(x0, kw, ow);
                for oc in 0..o {
                    for ty in ty_lo..ty_hi {
                        let k_row = ((oc * i + ic) * kh + ty) * kw;
                        let yb = ((oc * oh) as isize + y0 + ty as isize) as usize * ow;
                        let yb = yb as isize + x0;
                        for tx in tx_lo..tx_hi {
                            ys[(yb + tx as isize) as usize] += ks[k_row + tx] * v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// `x~[c, r*Y, r*X] = x[c, Y, X]`, zeros at every other sub-pixel.
pub fn zero_stuff_2d(x: &Tensor, ratio: usize) -> Result<Tensor> {
    let (c, h, w) = feature_dims(x)?;
    check_ratio(ratio)?;
    let (sh, sw) = (h * ratio, w * ratio);
    let mut out = Tensor::zeros(&[c, sh, sw])?;
    let ys = out.data_mut();
    for (n, &v) in x.data().iter().enumerate() {
        let (ch, rem) = (n / (h * w), n % (h * w));
        let (yy, xx) = (rem / w, rem % w);
        ys[(ch * sh + yy * ratio) * sw + xx * ratio] = v;
    }
    Ok(out)
}

/// Stride-1 correlation over the zero-stuffed input. The sub-pixel image is
/// padded by `kh - 1 - crop.top` rows on top (likewise for columns) and the
/// output has the same size as [`transposed_conv2d`] with this crop.
pub fn subpixel_conv2d(x: &Tensor, kernel: &Tensor, ratio: usize, crop: Crop2d) -> Result<Tensor> {
    let (c, h, w) = feature_dims(x)?;
    let [o, i, kh, kw] = kernel_dims(kernel)?;
    if c != i {
        return Err(Error::ChannelMismatch { input: c, kernel: i });
    }
    let (oh, ow) = upsampled_dims(h, w, kh, kw, ratio, crop)?;
    let stuffed = zero_stuff_2d(x, ratio)?;
    let (sh, sw) = (h * ratio, w * ratio);
    let off_y = crop.top - (kh as isize - 1);
    let off_x = crop.left - (kw as isize - 1);
    let xs = stuffed.data();
    let ks = kernel.data();
    let mut out = Tensor::zeros(&[o, oh, ow])?;
    let ys = out.data_mut();
    for oc in 0..o {
        for oy in 0..oh {
            for ox in 0..ow {
                let y0 = oy as isize + off_y;
                let x0 = ox as isize + off_x;
                let (dy_lo, dy_hi) = tap_range(y0, kh, sh);
                let (dx_lo, dx_hi) = tap_range(x0, kw, sw);
                let mut acc = 0.0;
                for ic in 0..i {
                    for dy in dy_lo..dy_hi {
                        let x_row = (ic * sh + (y0 + dy as isize) as usize) * sw;
                        let k_row = ((oc * i + ic) * kh + dy) * kw;
                        let xb = x_row as isize + x0;
                        for dx in dx_lo..dx_hi {
                            acc += ks[k_row + dx] * xs[(xb + dx as isize) as usize];
                        }
                    }
                }
                ys[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

/// Reverses both spatial axes of an `(o, i, kh, kw)` kernel.
pub fn reverse_spatial(kernel: &Tensor) -> Result<Tensor> {
    let [o, i, kh, kw] = kernel_dims(kernel)?;
    let src = kernel.data();
    let mut out = Tensor::zeros(&[o, i, kh, kw])?;
    let dst = out.data_mut();
    for plane in 0..o * i {
        let base = plane * kh * kw;
        for y in 0..kh {
            for x in 0..kw {
                dst[base + y * kw + x] = src[base + (kh - 1 - y) * kw + (kw - 1 - x)];
            }
        }
    }
    Ok(out)
}
