//! Sweeps every exact identity between the convolution forms.

use std::fmt;

use crate::conv1d::{
    conv1d_matrix, conv1d_output_len, realize_matrix, reverse_filter, subpixel_conv1d,
    transpose, transposed_conv1d, Crop1d, Filter1d,
};
use crate::conv2d::{reverse_spatial, subpixel_conv2d, transposed_conv2d, Crop2d, KernelStack};
use crate::error::Result;
use crate::random::{seeded, uniform};
use crate::shuffle::{
    lr_pipeline, lr_transposed_conv1d, merge_kernel_2d, periodic_shuffle, periodic_unshuffle,
    split_kernel_2d, LrGeometry,
};
use crate::tensor::{max_abs_diff, Tensor};

/// Deviation bound for identities that are exact in real arithmetic.
pub const TOLERANCE: f64 = 1e-9;

pub const OUT_CHANNELS: [usize; 2] = [1, 2];
pub const IN_CHANNELS: [usize; 3] = [1, 3, 32];

#[derive(Clone, Debug)]
pub struct VerifyConfig {
    pub ratios: Vec<usize>,
    /// Sub-kernel sizes; HR kernels are these multiplied by the ratio.
    pub kernel_sizes: Vec<usize>,
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub inject_fault: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            ratios: vec![1, 2, 3, 4],
            kernel_sizes: vec![1, 2, 3],
            sizes: (1..=6).collect(),
            trials: 5,
            seed: crate::random::DEFAULT_SEED,
            inject_fault: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub identity: &'static str,
    pub point: String,
    pub max_dev: f64,
    pub bound: f64,
}

impl Record {
    pub fn passed(&self) -> bool {
        self.max_dev <= self.bound
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub records: Vec<Record>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.records.iter().all(Record::passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(|r| !r.passed())
    }

    /// Identity names in the order they were first recorded.
    pub fn identities(&self) -> Vec<&'static str> {
        let mut names = Vec::new();
        for r in &self.records {
            if !names.contains(&r.identity) {
                names.push(r.identity);
            }
        }
        names
    }

    fn push(&mut self, identity: &'static str, point: String, max_dev: f64, bound: f64) {
        self.records.push(Record {
            identity,
            point,
            max_dev,
            bound,
        });
    }
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for name in self.identities() {
            let recs: Vec<&Record> = self.records.iter().filter(|r| r.identity == name).collect();
            let worst = recs
                .iter()
                .max_by(|a, b| a.max_dev.total_cmp(&b.max_dev))
                .expect("identity has records");
            let failed = recs.iter().filter(|r| !r.passed()).count();
            writeln!(
                f,
                "{} {name} points={} failed={failed} max_dev={:.3e} bound={:.0e} worst=[{}]",
                if failed == 0 { "PASS" } else { "FAIL" },
                recs.len(),
                worst.max_dev,
                worst.bound,
                worst.point
            )?;
        }
        for rec in self.failures().take(20) {
            writeln!(
                f,
                "  failed {} [{}] dev={:.3e}",
                rec.identity, rec.point, rec.max_dev
            )?;
        }
        writeln!(
            f,
            "verify: {} ({} records)",
            if self.passed() { "PASS" } else { "FAIL" },
            self.records.len()
        )
    }
}

/// Every filter length the 1D sweeps use: `1..=max(k) * max(r)`.
fn filter_lengths(cfg: &VerifyConfig) -> Vec<usize> {
    let kmax = cfg.kernel_sizes.iter().copied().max().unwrap_or(1);
    let rmax = cfg.ratios.iter().copied().max().unwrap_or(1);
    (1..=kmax * rmax).collect()
}

pub fn run_verify(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let mut report = VerifyReport::default();
    let mut rng = seeded(cfg.seed);

    // conv1d matrix against the matrix realized by the transposed op
    for &len in &filter_lengths(cfg) {
        for &stride in &cfg.ratios {
            for &input_len in &cfg.sizes {
                let f = Filter1d::from_tensor(uniform(&mut rng, &[len])?)?;
                for (pl, pr) in pad_choices(len) {
                    let Ok(rows) = conv1d_output_len(input_len, len, stride, pl, pr) else {
                        continue;
                    };
                    let m = conv1d_matrix(&f, input_len, stride, pl, pr)?;
                    let crop = transposed_crop_for(input_len, len, stride, pl, pr);
                    let mt = realize_matrix(rows, |x| transposed_conv1d(x, &f, stride, crop))?;
                    let dev = max_abs_diff(&transpose(&m)?, &mt)?;
                    report.push(
                        "matrix-transpose-1d",
                        format!("len(f)={len} stride={stride} n={input_len} pad=({pl},{pr})"),
                        dev,
                        0.0,
                    );
                }
            }
        }
    }

    // transposed conv == sub-pixel conv with the reversed filter
    for &len in &filter_lengths(cfg) {
        for &r in &cfg.ratios {
            for &n in &cfg.sizes {
                for crop in [Crop1d::default_for(len, r), Crop1d::new(0, 0)] {
                    let mut dev = 0.0_f64;
                    for _ in 0..cfg.trials {
                        let f = Filter1d::from_tensor(uniform(&mut rng, &[len])?)?;
                        let x = uniform(&mut rng, &[n])?;
                        let a = transposed_conv1d(&x, &f, r, crop)?;
                        let b = subpixel_conv1d(&x, &reverse_filter(&f), r, crop)?;
                        dev = dev.max(max_abs_diff(&a, &b)?);
                    }
                    report.push(
                        "reversal-1d",
                        format!("len(f)={len} r={r} n={n} crop=({},{})", crop.left, crop.right),
                        dev,
                        TOLERANCE,
                    );
                }
            }
        }
    }

    // split / per-phase / combine against the direct transposed conv,
    // including filter lengths that are not multiples of r
    for &len in &filter_lengths(cfg) {
        for &r in &cfg.ratios {
            for &n in &cfg.sizes {
                let crop = Crop1d::default_for(len, r);
                let mut dev = 0.0_f64;
                for _ in 0..cfg.trials {
                    let f = Filter1d::from_tensor(uniform(&mut rng, &[len])?)?;
                    let x = uniform(&mut rng, &[n])?;
                    let a = transposed_conv1d(&x, &f, r, crop)?;
                    let b = lr_transposed_conv1d(&x, &f, r, crop)?;
                    dev = dev.max(max_abs_diff(&a, &b)?);
                }
                report.push(
                    "split-combine-1d",
                    format!("len(f)={len} r={r} n={n}"),
                    dev,
                    TOLERANCE,
                );
            }
        }
    }

    let rmax = cfg.ratios.iter().copied().max().unwrap_or(1);
    let kmax = cfg.kernel_sizes.iter().copied().max().unwrap_or(1);
    let small_sizes: Vec<usize> = cfg.sizes.iter().copied().filter(|&s| s <= 4).collect();

    // 2D reversal identity over every kernel extent up to max(k) * max(r)
    for kh in 1..=kmax * rmax {
        for kw in 1..=kmax * rmax {
            for &r in &cfg.ratios {
                for &s in &small_sizes {
                    let crop = Crop2d::default_for(kh, kw, r);
                    let mut dev = 0.0_f64;
                    for _ in 0..cfg.trials.min(2) {
                        let k = uniform(&mut rng, &[2, 2, kh, kw])?;
                        let x = uniform(&mut rng, &[2, s, s + 1])?;
                        let a = transposed_conv2d(&x, &k, r, crop)?;
                        let b = subpixel_conv2d(&x, &reverse_spatial(&k)?, r, crop)?;
                        dev = dev.max(max_abs_diff(&a, &b)?);
                    }
                    report.push(
                        "reversal-2d",
                        format!("kernel={kh}x{kw} r={r} input={s}x{}", s + 1),
                        dev,
                        TOLERANCE,
                    );
                }
            }
        }
    }

    // LR convolution + shuffle == deconvolution, the main equivalence
    for &o in &OUT_CHANNELS {
        for &i in &IN_CHANNELS {
            for &kh in &cfg.kernel_sizes {
                for &kw in &cfg.kernel_sizes {
                    for &r in &cfg.ratios {
                        for &h in &cfg.sizes {
                            for &w in &cfg.sizes {
                                let mut dev = 0.0_f64;
                                for _ in 0..cfg.trials {
                                    let k = KernelStack::hr(
                                        uniform(&mut rng, &[o, i, kh * r, kw * r])?,
                                        r,
                                    )?;
                                    let x = uniform(&mut rng, &[i, h, w])?;
                                    dev = dev.max(main_theorem_dev(&x, &k, cfg.inject_fault)?);
                                }
                                report.push(
                                    "main-theorem",
                                    format!(
                                        "o={o} i={i} kernel={}x{} r={r} input={h}x{w}",
                                        kh * r,
                                        kw * r
                                    ),
                                    dev,
                                    TOLERANCE,
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    // the same equivalence for HR kernels that are not multiples of r
    for &r in cfg.ratios.iter().filter(|&&r| r > 1) {
        for kh in 1..=kmax * r {
            for kw in 1..=kmax * r {
                if kh % r == 0 && kw % r == 0 {
                    continue;
                }
                for &s in &small_sizes {
                    let mut dev = 0.0_f64;
                    for _ in 0..cfg.trials.min(2) {
                        let k = KernelStack::hr(uniform(&mut rng, &[2, 3, kh, kw])?, r)?;
                        let x = uniform(&mut rng, &[3, s, s])?;
                        dev = dev.max(main_theorem_dev(&x, &k, false)?);
                    }
                    report.push(
                        "non-multiple-2d",
                        format!("kernel={kh}x{kw} r={r} input={s}x{s}"),
                        dev,
                        TOLERANCE,
                    );
                }
            }
        }
    }

    // exact round trips
    for &r in &cfg.ratios {
        for kh in 1..=kmax * r {
            for kw in [kh, (kh + 1).min(kmax * r)] {
                let k = KernelStack::hr(uniform(&mut rng, &[2, 3, kh, kw])?, r)?;
                let lr = split_kernel_2d(&k, r)?;
                let back = merge_kernel_2d(&lr, r)?;
                let mut dev = max_abs_diff(back.weights(), k.weights())?;
                if kh % r == 0 && kw % r == 0 {
                    let lr2 = KernelStack::lr(uniform(&mut rng, lr.weights().dims())?, r)?;
                    let again = split_kernel_2d(&merge_kernel_2d(&lr2, r)?, r)?;
                    dev = dev.max(max_abs_diff(again.weights(), lr2.weights())?);
                }
                report.push(
                    "split-merge-roundtrip",
                    format!("kernel={kh}x{kw} r={r}"),
                    dev,
                    0.0,
                );
            }
        }
        for &c in &[1, 3] {
            for &s in &cfg.sizes {
                let x = uniform(&mut rng, &[c * r * r, s, s + 1])?;
                let y = periodic_shuffle(&x, r)?;
                let mut dev = max_abs_diff(&periodic_unshuffle(&y, r)?, &x)?;
                let hr = uniform(&mut rng, &[c, s * r, (s + 1) * r])?;
                dev = dev.max(max_abs_diff(&periodic_shuffle(&periodic_unshuffle(&hr, r)?, r)?, &hr)?);
                report.push(
                    "shuffle-roundtrip",
                    format!("c={c} r={r} input={s}x{}", s + 1),
                    dev,
                    0.0,
                );
            }
        }
    }

    Ok(report)
}

/// Max deviation between the LR pipeline on the split kernel and the
/// deconvolution with the original kernel.
fn main_theorem_dev(x: &Tensor, k: &KernelStack, inject_fault: bool) -> Result<f64> {
    let r = k.ratio();
    let geometry = LrGeometry::for_stack(k)?;
    let mut lr = split_kernel_2d(k, r)?;
    if inject_fault {
        let w = lr.weights();
        let bumped = w.set(&[0, 0, 0, 0], w.data()[0] + 1e-3)?;
        lr = KernelStack::lr_with_hr_size(bumped, r, lr.hr_size())?;
    }
    let ours = lr_pipeline(x, &lr, geometry.pad)?;
    let reference = transposed_conv2d(x, k.weights(), r, geometry.crop)?;
    max_abs_diff(&ours, &reference)
}

fn pad_choices(len: usize) -> Vec<(usize, usize)> {
    let mut pads = vec![(0, 0), ((len - 1) / 2, len / 2), (len - 1, len - 1)];
    pads.dedup();
    pads
}

/// Crop that makes the transposed op produce exactly `input_len` samples for
/// the conv with padding `(pl, pr)`; the right crop absorbs the stride
/// remainder and may be negative.
pub fn transposed_crop_for(input_len: usize, len: usize, stride: usize, pl: usize, pr: usize) -> Crop1d {
    let rem = (input_len + pl + pr - len) % stride;
    Crop1d::new(pl as isize, pr as isize - rem as isize)
}
