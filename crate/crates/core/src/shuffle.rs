//! Periodic shuffle, filter and kernel splitting, and the low-resolution
//! pipeline that reproduces a deconvolution with plain convolutions.
//!
//! Phase conventions:
//!
//! * HR pixel `(Y, X)` belongs to channel offset `r * (Y mod r) + (X mod r)`.
//! * Sub-filter `s` of a split 1D filter holds the taps whose index is
//!   congruent to `r - 1 - s` modulo `r`, in their original order.
//! * A 2D split produces correlation-ready sub-kernels: the HR kernel is
//!   reversed on both axes and each axis is then sliced by the 1D rule, so
//!   channel `o * r^2 + r * sy + sx` computes HR phase `(sy, sx)`.

use crate::conv1d::{upsampled_output_len, Crop1d, Filter1d};
use crate::conv2d::{conv2d, reverse_spatial, Crop2d, KernelStack, Padding2d, Space};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Upscale ratio plus the fixed channel/phase bijection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShuffleSpec {
    ratio: usize,
}

impl ShuffleSpec {
    pub fn new(ratio: usize) -> Result<Self> {
        if ratio == 0 {
            return Err(Error::InvalidArgument("upscale ratio must be positive".into()));
        }
        Ok(ShuffleSpec { ratio })
    }

    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Number of phases, `r^2`.
    pub fn phases(&self) -> usize {
        self.ratio * self.ratio
    }

    /// Channel offset of HR phase `(y mod r, x mod r)`.
    pub fn phase_index(&self, phase_y: usize, phase_x: usize) -> usize {
        self.ratio * phase_y + phase_x
    }

    /// Inverse of [`ShuffleSpec::phase_index`].
    pub fn phase_of(&self, index: usize) -> (usize, usize) {
        (index / self.ratio, index % self.ratio)
    }
}

fn feature_dims(x: &Tensor) -> Result<(usize, usize, usize)> {
    x.expect_rank(3, "feature map")?;
    let d = x.dims();
    Ok((d[0], d[1], d[2]))
}

/// Depth-to-space: `(c * r^2, H, W) -> (c, r * H, r * W)`.
pub fn periodic_shuffle(x: &Tensor, ratio: usize) -> Result<Tensor> {
    let spec = ShuffleSpec::new(ratio)?;
    let (channels, h, w) = feature_dims(x)?;
    let phases = spec.phases();
    if channels % phases != 0 {
        return Err(Error::NotDivisible {
            what: "channel count",
            value: channels,
            divisor: phases,
        });
    }
    let c_out = channels / phases;
    let (oh, ow) = (h * ratio, w * ratio);
    let src = x.data();
    let mut out = Tensor::zeros(&[c_out, oh, ow])?;
    let dst = out.data_mut();
    for c in 0..c_out {
        for yy in 0..oh {
            for xx in 0..ow {
                let ch = c * phases + spec.phase_index(yy % ratio, xx % ratio);
                dst[(c * oh + yy) * ow + xx] = src[(ch * h + yy / ratio) * w + xx / ratio];
            }
        }
    }
    Ok(out)
}

/// Space-to-depth, the exact inverse of [`periodic_shuffle`].
pub fn periodic_unshuffle(y: &Tensor, ratio: usize) -> Result<Tensor> {
    let spec = ShuffleSpec::new(ratio)?;
    let (c, oh, ow) = feature_dims(y)?;
    for (what, value) in [("height", oh), ("width", ow)] {
        if value % ratio != 0 {
            return Err(Error::NotDivisible {
                what,
                value,
                divisor: ratio,
            });
        }
    }
    let (h, w) = (oh / ratio, ow / ratio);
    let phases = spec.phases();
    let src = y.data();
    let mut out = Tensor::zeros(&[c * phases, h, w])?;
    let dst = out.data_mut();
    for ch in 0..c * phases {
        let (py, px) = spec.phase_of(ch % phases);
        let plane = ch / phases;
        for yy in 0..h {
            for xx in 0..w {
                dst[(ch * h + yy) * w + xx] =
                    src[(plane * oh + yy * ratio + py) * ow + xx * ratio + px];
            }
        }
    }
    Ok(out)
}

/// `r` strided slices of one filter. Slices can be empty when the filter
/// is shorter than `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitFilterBank {
    ratio: usize,
    subs: Vec<Vec<f64>>,
}

impl SplitFilterBank {
    pub fn ratio(&self) -> usize {
        self.ratio
    }

    /// Taps of sub-filter `s`.
    pub fn taps(&self, s: usize) -> &[f64] {
        &self.subs[s]
    }

    pub fn sub_filter(&self, s: usize) -> Option<Filter1d> {
        Filter1d::new(&self.subs[s]).ok()
    }

    /// Length of the filter this bank was split from.
    pub fn filter_len(&self) -> usize {
        self.subs.iter().map(Vec::len).sum()
    }

    /// Tap residue class held by sub-filter `s`.
    pub fn residue(&self, s: usize) -> usize {
        self.ratio - 1 - s
    }

    /// Reassembles the original filter.
    pub fn merge(&self) -> Result<Filter1d> {
        let mut taps = vec![0.0; self.filter_len()];
        for s in 0..self.ratio {
            for (j, &v) in self.subs[s].iter().enumerate() {
                taps[j * self.ratio + self.residue(s)] = v;
            }
        }
        Filter1d::new(&taps)
    }
}

pub fn split_filter_1d(f: &Filter1d, ratio: usize) -> Result<SplitFilterBank> {
    ShuffleSpec::new(ratio)?;
    let subs = (0..ratio)
        .map(|s| {
            f.taps()
                .iter()
                .skip(ratio - 1 - s)
                .step_by(ratio)
                .copied()
                .collect()
        })
        .collect();
    Ok(SplitFilterBank { ratio, subs })
}

/// Per-phase outputs of a split transposed convolution.
///
/// Element `phi` is the stream landing on HR positions `r * m + phi` after
/// cropping with `crop`; it is the true convolution of `x` with the
/// sub-filter whose taps reach that phase, shifted by the crop.
pub fn phase_streams_1d(x: &Tensor, bank: &SplitFilterBank, crop: Crop1d) -> Result<Vec<Tensor>> {
    x.expect_rank(1, "phase stream input")?;
    let r = bank.ratio;
    let n = x.len() as isize;
    let out_len = upsampled_output_len(x.len(), bank.filter_len(), r, crop)?;
    if out_len < r {
        return Err(Error::InvalidArgument(format!(
            "output length {out_len} leaves some of the {r} phases empty"
        )));
    }
    let xs = x.data();
    let ri = r as isize;
    (0..r)
        .map(|phi| {
            let shifted = phi as isize + crop.left;
            let residue = shifted.rem_euclid(ri) as usize;
            let q = shifted.div_euclid(ri);
            let taps = bank.taps(r - 1 - residue);
            let len = (out_len - phi).div_ceil(r);
            let stream: Vec<f64> = (0..len as isize)
                .map(|m| {
                    let mut acc = 0.0;
                    // highest tap first, so inputs are visited in ascending order
                    for (j, &w) in taps.iter().enumerate().rev() {
                        let i = m + q - j as isize;
                        if (0..n).contains(&i) {
                            acc += w * xs[i as usize];
                        }
                    }
                    acc
                })
                .collect();
            Tensor::vector(&stream)
        })
        .collect()
}

/// Interleaves per-phase streams: `y[r * m + phi] = streams[phi][m]`.
///
/// Streams may differ in length only as an interleave of a signal whose
/// length is not a multiple of `r` would: earlier phases at most one longer.
pub fn combine_1d(bank: &SplitFilterBank, streams: &[Tensor]) -> Result<Tensor> {
    let r = bank.ratio;
    if streams.len() != r {
        return Err(Error::InvalidArgument(format!(
            "expected {r} phase streams, got {}",
            streams.len()
        )));
    }
    for s in streams {
        s.expect_rank(1, "phase stream")?;
    }
    let first = streams[0].len();
    let consistent = streams
        .windows(2)
        .all(|pair| pair[0].len() >= pair[1].len())
        && streams[r - 1].len() + 1 >= first;
    if !consistent {
        return Err(Error::ShapeMismatch {
            left: vec![first],
            right: streams.iter().map(Tensor::len).collect(),
        });
    }
    let total: usize = streams.iter().map(Tensor::len).sum();
    let mut out = vec![0.0; total];
    for (phi, s) in streams.iter().enumerate() {
        for (m, &v) in s.data().iter().enumerate() {
            out[r * m + phi] = v;
        }
    }
    Tensor::vector(&out)
}

/// Transposed convolution computed as split, per-phase convolution, combine.
pub fn lr_transposed_conv1d(x: &Tensor, f: &Filter1d, ratio: usize, crop: Crop1d) -> Result<Tensor> {
    let bank = split_filter_1d(f, ratio)?;
    let streams = phase_streams_1d(x, &bank, crop)?;
    combine_1d(&bank, &streams)
}

/// Splits an HR deconvolution kernel `(o, i, K_h, K_w)` into the LR form
/// `(o * r^2, i, ceil(K_h / r), ceil(K_w / r))`.
///
/// When `K` is not a multiple of `r`, phases with fewer taps are padded with
/// zeros after their last tap; the stack keeps `(K_h, K_w)` for merging.
pub fn split_kernel_2d(k: &KernelStack, ratio: usize) -> Result<KernelStack> {
    if k.space() != Space::Hr {
        return Err(Error::InvalidArgument("split expects an HR kernel stack".into()));
    }
    let spec = ShuffleSpec::new(ratio)?;
    let [o, i, big_h, big_w] = k.dims();
    let (kh, kw) = (big_h.div_ceil(ratio), big_w.div_ceil(ratio));
    let flipped = reverse_spatial(k.weights())?;
    let src = flipped.data();
    let mut out = Tensor::zeros(&[o * spec.phases(), i, kh, kw])?;
    let dst = out.data_mut();
    for oc in 0..o {
        for s in 0..spec.phases() {
            let (sy, sx) = spec.phase_of(s);
            let (ry, rx) = (ratio - 1 - sy, ratio - 1 - sx);
            let lc = oc * spec.phases() + s;
            for ic in 0..i {
                for jy in 0..kh {
                    let y = jy * ratio + ry;
                    if y >= big_h {
                        continue;
                    }
                    for jx in 0..kw {
                        let x = jx * ratio + rx;
                        if x >= big_w {
                            continue;
                        }
                        dst[((lc * i + ic) * kh + jy) * kw + jx] =
                            src[((oc * i + ic) * big_h + y) * big_w + x];
                    }
                }
            }
        }
    }
    KernelStack::lr_with_hr_size(out, ratio, (big_h, big_w))
}

/// Inverse of [`split_kernel_2d`].
pub fn merge_kernel_2d(k: &KernelStack, ratio: usize) -> Result<KernelStack> {
    if k.space() != Space::Lr {
        return Err(Error::InvalidArgument("merge expects an LR kernel stack".into()));
    }
    if k.ratio() != ratio {
        return Err(Error::InvalidArgument(format!(
            "kernel stack has ratio {}, merge requested ratio {ratio}",
            k.ratio()
        )));
    }
    let spec = ShuffleSpec::new(ratio)?;
    let [lo, i, kh, kw] = k.dims();
    if lo % spec.phases() != 0 {
        return Err(Error::NotDivisible {
            what: "LR output channels",
            value: lo,
            divisor: spec.phases(),
        });
    }
    let o = lo / spec.phases();
    let (big_h, big_w) = k.hr_size();
    let src = k.weights().data();
    let mut flipped = Tensor::zeros(&[o, i, big_h, big_w])?;
    let dst = flipped.data_mut();
    for lc in 0..lo {
        let (oc, s) = (lc / spec.phases(), lc % spec.phases());
        let (sy, sx) = spec.phase_of(s);
        let (ry, rx) = (ratio - 1 - sy, ratio - 1 - sx);
        for ic in 0..i {
            for jy in 0..kh {
                for jx in 0..kw {
                    let v = src[((lc * i + ic) * kh + jy) * kw + jx];
                    let (y, x) = (jy * ratio + ry, jx * ratio + rx);
                    if y >= big_h || x >= big_w {
                        if v != 0.0 {
                            return Err(Error::InvalidShape(format!(
                                "sub-kernel {lc} has a nonzero tap outside its {big_h}x{big_w} phase footprint"
                            )));
                        }
                        continue;
                    }
                    dst[((oc * i + ic) * big_h + y) * big_w + x] = v;
                }
            }
        }
    }
    KernelStack::hr(reverse_spatial(&flipped)?, ratio)
}

/// LR padding and matching deconvolution crop under which
/// [`lr_pipeline`] equals [`crate::conv2d::transposed_conv2d`].
///
/// Per axis, with HR kernel size `K` and sub-kernel size `k = ceil(K / r)`:
/// LR padding is `ceil((k - 1) / 2)` before and `floor((k - 1) / 2)` after;
/// the deconvolution crops `K - r * (pad_before + 1)` before and
/// `r * pad_before` after. Both sides keep the shape law `(r * H, r * W)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LrGeometry {
    pub pad: Padding2d,
    pub crop: Crop2d,
}

impl LrGeometry {
    pub fn for_kernel(hr_h: usize, hr_w: usize, ratio: usize) -> Result<Self> {
        ShuffleSpec::new(ratio)?;
        let (rows_pad, rows_crop) = axis_geometry(hr_h, ratio);
        let (cols_pad, cols_crop) = axis_geometry(hr_w, ratio);
        Ok(LrGeometry {
            pad: Padding2d {
                top: rows_pad.0,
                bottom: rows_pad.1,
                left: cols_pad.0,
                right: cols_pad.1,
            },
            crop: Crop2d::from_axes(rows_crop, cols_crop),
        })
    }

    pub fn for_stack(k: &KernelStack) -> Result<Self> {
        let (h, w) = k.hr_size();
        Self::for_kernel(h, w, k.ratio())
    }
}

fn axis_geometry(hr_len: usize, ratio: usize) -> ((usize, usize), Crop1d) {
    let k = hr_len.div_ceil(ratio);
    let before = k / 2;
    let after = (k - 1) / 2;
    let crop_left = hr_len as isize - (ratio * (before + 1)) as isize;
    let crop_right = (ratio * before) as isize;
    ((before, after), Crop1d::new(crop_left, crop_right))
}

/// LR convolution at stride 1 followed by a periodic shuffle.
pub fn lr_pipeline(x: &Tensor, k_lr: &KernelStack, pad: Padding2d) -> Result<Tensor> {
    if k_lr.space() != Space::Lr {
        return Err(Error::InvalidArgument("LR pipeline expects an LR kernel stack".into()));
    }
    let lr = conv2d(x, k_lr.weights(), 1, pad)?;
    periodic_shuffle(&lr, k_lr.ratio())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conv1d::transposed_conv1d;
    use crate::conv2d::transposed_conv2d;
    use crate::tensor::max_abs_diff;

    fn ramp(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|v| ((v * 7 % 11) as f64) - 5.0).collect()).unwrap()
    }

    #[test]
    fn shuffle_shapes() {
        let x = ramp(&[4, 4, 4]);
        let y = periodic_shuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), &[1, 8, 8]);
        assert_eq!(periodic_unshuffle(&y, 2).unwrap(), x);
        assert_eq!(periodic_shuffle(&x, 1).unwrap(), x);
        let z = ramp(&[2, 9, 9]);
        assert_eq!(periodic_unshuffle(&z, 3).unwrap().dims(), &[18, 3, 3]);
    }

    #[test]
    fn shuffle_index_map() {
        let x = ramp(&[8, 2, 3]);
        let y = periodic_shuffle(&x, 2).unwrap();
        // out[c, Y, X] = x[c*4 + 2*(Y%2) + X%2, Y/2, X/2]
        assert_eq!(y.get(&[1, 3, 2]).unwrap(), x.get(&[4 + 2, 1, 1]).unwrap());
        assert_eq!(y.get(&[0, 0, 5]).unwrap(), x.get(&[1, 0, 2]).unwrap());
    }

    #[test]
    fn shuffle_errors() {
        assert!(matches!(
            periodic_shuffle(&ramp(&[3, 2, 2]), 2),
            Err(Error::NotDivisible { .. })
        ));
        assert!(periodic_unshuffle(&ramp(&[1, 4, 5]), 2).is_err());
        assert!(periodic_shuffle(&ramp(&[4, 2, 2]), 0).is_err());
    }

    #[test]
    fn paper_filter_splits() {
        let bank = split_filter_1d(&Filter1d::new(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2).unwrap();
        assert_eq!(bank.taps(0), &[2.0, 4.0]);
        assert_eq!(bank.taps(1), &[1.0, 3.0]);
        let bank = split_filter_1d(&Filter1d::new(&[1.0, 2.0, 3.0]).unwrap(), 2).unwrap();
        assert_eq!(bank.taps(0), &[2.0]);
        assert_eq!(bank.taps(1), &[1.0, 3.0]);
        let f = Filter1d::new(&[1.0, 2.0, 3.0]).unwrap();
        let one = split_filter_1d(&f, 1).unwrap();
        assert_eq!(one.taps(0), f.taps());
        assert_eq!(bank.merge().unwrap(), f);
    }

    #[test]
    fn short_filter_leaves_empty_phases() {
        let bank = split_filter_1d(&Filter1d::new(&[9.0]).unwrap(), 3).unwrap();
        assert!(bank.taps(0).is_empty() && bank.taps(1).is_empty());
        assert_eq!(bank.taps(2), &[9.0]);
        assert!(bank.sub_filter(0).is_none());
    }

    #[test]
    fn combine_interleaves() {
        let bank = split_filter_1d(&Filter1d::new(&[1.0, 2.0, 3.0, 4.0]).unwrap(), 2).unwrap();
        let y0 = Tensor::vector(&[1.0, 2.0]).unwrap();
        let y1 = Tensor::vector(&[3.0, 4.0]).unwrap();
        let y = combine_1d(&bank, &[y0.clone(), y1.clone()]).unwrap();
        assert_eq!(y.data(), &[1.0, 3.0, 2.0, 4.0]);
        let single = split_filter_1d(&Filter1d::new(&[1.0]).unwrap(), 1).unwrap();
        assert_eq!(combine_1d(&single, std::slice::from_ref(&y0)).unwrap(), y0);
        let long = Tensor::vector(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(combine_1d(&bank, &[y0, long]).is_err());
        assert!(combine_1d(&bank, &[y1]).is_err());
    }

    #[test]
    fn split_filter_pipeline_matches_deconv() {
        let x = Tensor::vector(&[0.5, -1.0, 2.0, 0.25, 3.0]).unwrap();
        for taps in [&[1.0, 2.0, 3.0, 4.0][..], &[1.0, 2.0, 3.0][..]] {
            let f = Filter1d::new(taps).unwrap();
            let crop = Crop1d::default_for(f.len(), 2);
            let direct = transposed_conv1d(&x, &f, 2, crop).unwrap();
            let split = lr_transposed_conv1d(&x, &f, 2, crop).unwrap();
            assert_eq!(direct, split);
        }
    }

    #[test]
    fn kernel_split_shapes() {
        let k = KernelStack::hr(ramp(&[1, 1, 4, 4]), 2).unwrap();
        let lr = split_kernel_2d(&k, 2).unwrap();
        assert_eq!(lr.dims(), [4, 1, 2, 2]);
        assert_eq!(merge_kernel_2d(&lr, 2).unwrap(), k);

        let k = KernelStack::hr(ramp(&[1, 32, 9, 9]), 3).unwrap();
        let lr = split_kernel_2d(&k, 3).unwrap();
        assert_eq!(lr.dims(), [9, 32, 3, 3]);
        assert_eq!(merge_kernel_2d(&lr, 3).unwrap().dims(), [1, 32, 9, 9]);

        let k = KernelStack::hr(ramp(&[2, 3, 3, 5]), 1).unwrap();
        assert_eq!(split_kernel_2d(&k, 1).unwrap().dims(), [2, 3, 3, 5]);
    }

    #[test]
    fn split_picks_reversed_phase_taps() {
        // 1x1x4x4 kernel with value 10*row + col
        let w: Vec<f64> = (0..16).map(|n| (10 * (n / 4) + n % 4) as f64).collect();
        let k = KernelStack::hr(Tensor::from_vec(&[1, 1, 4, 4], w).unwrap(), 2).unwrap();
        let lr = split_kernel_2d(&k, 2).unwrap();
        // phase (0, 1) = channel 1 takes rows {2, 0}, cols {3, 1}
        let ch1: Vec<f64> = lr.weights().data()[4..8].to_vec();
        assert_eq!(ch1, vec![23.0, 21.0, 3.0, 1.0]);
    }

    #[test]
    fn merge_errors() {
        let lr = KernelStack::lr(ramp(&[3, 1, 2, 2]), 2).unwrap();
        assert!(matches!(merge_kernel_2d(&lr, 2), Err(Error::NotDivisible { .. })));
        let lr = KernelStack::lr(ramp(&[4, 1, 2, 2]), 2).unwrap();
        assert!(merge_kernel_2d(&lr, 3).is_err());
        // 5x5 at r=2: the padded taps of short phases must stay zero
        let lr = KernelStack::lr_with_hr_size(Tensor::new(&[4, 1, 3, 3], 1.0).unwrap(), 2, (5, 5))
            .unwrap();
        assert!(matches!(merge_kernel_2d(&lr, 2), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn geometry_for_paper_shapes() {
        let g = LrGeometry::for_kernel(4, 4, 2).unwrap();
        assert_eq!((g.pad.top, g.pad.bottom), (1, 0));
        assert_eq!((g.crop.top, g.crop.bottom), (0, 2));
        let g = LrGeometry::for_kernel(9, 9, 3).unwrap();
        assert_eq!((g.pad.left, g.pad.right), (1, 1));
        assert_eq!((g.crop.left, g.crop.right), (3, 3));
        let g = LrGeometry::for_kernel(1, 1, 2).unwrap();
        assert_eq!((g.crop.left, g.crop.right), (-1, 0));
    }

    #[test]
    fn pipeline_matches_deconv_small() {
        let x = ramp(&[1, 4, 4]);
        let k = KernelStack::hr(ramp(&[1, 1, 4, 4]), 2).unwrap();
        let lr = split_kernel_2d(&k, 2).unwrap();
        let g = LrGeometry::for_stack(&k).unwrap();
        let a = lr_pipeline(&x, &lr, g.pad).unwrap();
        let b = transposed_conv2d(&x, k.weights(), 2, g.crop).unwrap();
        assert_eq!(a.dims(), &[1, 8, 8]);
        assert_eq!(max_abs_diff(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn pipeline_requires_lr_stack() {
        let x = ramp(&[1, 4, 4]);
        let k = KernelStack::hr(ramp(&[1, 1, 4, 4]), 2).unwrap();
        assert!(lr_pipeline(&x, &k, Padding2d::default()).is_err());
        assert!(split_kernel_2d(&split_kernel_2d(&k, 2).unwrap(), 2).is_err());
    }
}
