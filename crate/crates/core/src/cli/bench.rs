//! Matched-budget timing of an LR network against its HR counterpart.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use crate::conv2d::{conv2d, transposed_conv2d, KernelStack, Padding2d};
use crate::cost::{mac_count, matched_hr_config, param_count, LayerConfig, NetworkConfig};
use crate::error::{Error, Result};
use crate::random::{seeded, uniform};
use crate::shuffle::{lr_pipeline, merge_kernel_2d, LrGeometry};
use crate::tensor::{max_abs_diff, Tensor};

pub const WARMUP_RUNS: usize = 2;
/// Kernel size of every LR layer.
pub const LR_KERNEL: usize = 3;

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub width: usize,
    pub height: usize,
    pub layers: usize,
    pub ratio: usize,
    pub channels: usize,
    pub iters: usize,
    pub seed: u64,
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.width, self.height, self.layers, self.ratio, self.channels, self.iters].contains(&0) {
            return Err(Error::InvalidArgument("bench parameters must be positive".into()));
        }
        let r2 = self.ratio * self.ratio;
        if !self.channels.is_multiple_of(r2) {
            return Err(Error::NotDivisible {
                what: "channels",
                value: self.channels,
                divisor: r2,
            });
        }
        for (what, value) in [("width", self.width), ("height", self.height)] {
            if value % self.ratio != 0 {
                return Err(Error::NotDivisible {
                    what,
                    value,
                    divisor: self.ratio,
                });
            }
        }
        Ok(())
    }

    /// `layers` hidden `(N, N, 3)` LR layers, then the `(r^2, N, 3)` projection.
    pub fn lr_network(&self) -> Result<NetworkConfig> {
        let n = self.channels;
        let mut layers = vec![LayerConfig::lr(n, n, LR_KERNEL); self.layers];
        layers.push(LayerConfig::lr(n, self.ratio * self.ratio, LR_KERNEL));
        NetworkConfig::new(layers, self.ratio, self.width, self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: &'static str,
    pub mac_count: u64,
    pub param_count: u64,
    pub median_us: f64,
    pub iqr_us: f64,
    /// Max abs difference against the deconvolution output, where comparable.
    pub agreement: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn row(&self, variant: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>14} {:>12} {:>12} {:>10} {:>12}",
            "variant", "mac_count", "params", "median_us", "iqr_us", "max_diff"
        )?;
        for row in &self.rows {
            let agreement = row
                .agreement
                .map_or_else(|| "-".to_string(), |d| format!("{d:.3e}"));
            writeln!(
                f,
                "{:<12} {:>14} {:>12} {:>12.1} {:>10.1} {:>12}",
                row.variant, row.mac_count, row.param_count, row.median_us, row.iqr_us, agreement
            )?;
        }
        for row in &self.rows {
            let v = row.variant;
            writeln!(f, "{v}.mac_count={}", row.mac_count)?;
            writeln!(f, "{v}.param_count={}", row.param_count)?;
            writeln!(f, "{v}.median_us={:.3}", row.median_us)?;
            writeln!(f, "{v}.iqr_us={:.3}", row.iqr_us)?;
            if let Some(d) = row.agreement {
                writeln!(f, "{v}.max_abs_diff={d:e}")?;
            }
        }
        if let (Some(lr), Some(hr)) = (self.row("lr-shuffle"), self.row("hr-matched")) {
            writeln!(f, "param_ratio={}", lr.param_count as f64 / hr.param_count as f64)?;
        }
        Ok(())
    }
}

/// Median and interquartile range of `iters` timed runs after the warmups.
fn time_runs(iters: usize, mut run: impl FnMut() -> Result<Tensor>) -> Result<(f64, f64)> {
    for _ in 0..WARMUP_RUNS {
        black_box(run()?);
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let start = Instant::now();
        black_box(run()?);
        samples.push(start.elapsed().as_secs_f64() * 1e6);
    }
    samples.sort_by(f64::total_cmp);
    Ok((quantile(&samples, 0.5), quantile(&samples, 0.75) - quantile(&samples, 0.25)))
}

/// Linear-interpolated quantile of sorted samples.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn same_padding(k: usize) -> Padding2d {
    let before = k / 2;
    Padding2d {
        top: before,
        bottom: k - 1 - before,
        left: before,
        right: k - 1 - before,
    }
}

/// Random weights scaled by `1 / sqrt(fan_in)`.
fn layer_weights(rng: &mut impl rand::Rng, dims: &[usize]) -> Result<Tensor> {
    let fan_in = (dims[1] * dims[2] * dims[3]) as f64;
    Ok(uniform(rng, dims)?.map(|v| v / fan_in.sqrt()))
}

fn run_stack(x: &Tensor, kernels: &[Tensor]) -> Result<Tensor> {
    let mut h = x.clone();
    for k in kernels {
        h = conv2d(&h, k, 1, same_padding(k.dims()[2]))?;
    }
    Ok(h)
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let r = cfg.ratio;
    let n = cfg.channels;
    let mut rng = seeded(cfg.seed);
    let lr_net = cfg.lr_network()?;
    let hr_net = matched_hr_config(&lr_net)?;

    let lr_input = uniform(&mut rng, &[n, cfg.height / r, cfg.width / r])?;
    let hidden: Vec<Tensor> = (0..cfg.layers)
        .map(|_| layer_weights(&mut rng, &[n, n, LR_KERNEL, LR_KERNEL]))
        .collect::<Result<_>>()?;
    let projection = KernelStack::lr(layer_weights(&mut rng, &[r * r, n, LR_KERNEL, LR_KERNEL])?, r)?;
    let deconv = merge_kernel_2d(&projection, r)?;
    let geometry = LrGeometry::for_stack(&projection)?;

    let lr_forward = || lr_pipeline(&run_stack(&lr_input, &hidden)?, &projection, geometry.pad);
    let deconv_forward =
        || transposed_conv2d(&run_stack(&lr_input, &hidden)?, deconv.weights(), r, geometry.crop);

    let lr_out = lr_forward()?;
    let deconv_out = deconv_forward()?;
    let agreement = max_abs_diff(&lr_out, &deconv_out)?;

    let (lr_median, lr_iqr) = time_runs(cfg.iters, lr_forward)?;
    let mut rows = vec![BenchRow {
        variant: "lr-shuffle",
        mac_count: mac_count(&lr_net),
        param_count: param_count(&lr_net),
        median_us: lr_median,
        iqr_us: lr_iqr,
        agreement: Some(agreement),
    }];
    if r == 1 {
        return Ok(BenchReport { rows });
    }

    // each LR pixel scatters through a (3r)^2 window, r^2 * N * 9 MACs, same as the projection
    let (dc_median, dc_iqr) = time_runs(cfg.iters, deconv_forward)?;
    rows.push(BenchRow {
        variant: "deconv",
        mac_count: mac_count(&lr_net),
        param_count: param_count(&lr_net),
        median_us: dc_median,
        iqr_us: dc_iqr,
        agreement: Some(0.0),
    });

    let hr_input = uniform(&mut rng, &[n / (r * r), cfg.height, cfg.width])?;
    let hr_kernels: Vec<Tensor> = hr_net
        .layers()
        .iter()
        .map(|l| layer_weights(&mut rng, &[l.c_out, l.c_in, l.k, l.k]))
        .collect::<Result<_>>()?;
    let (hr_median, hr_iqr) = time_runs(cfg.iters, || run_stack(&hr_input, &hr_kernels))?;
    rows.push(BenchRow {
        variant: "hr-matched",
        mac_count: mac_count(&hr_net),
        param_count: param_count(&hr_net),
        median_us: hr_median,
        iqr_us: hr_iqr,
        agreement: None,
    });
    Ok(BenchReport { rows })
}
