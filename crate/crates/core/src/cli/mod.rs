//! Command-line front end. Exit codes: 0 success, 1 verification failure,
//! 2 usage or input error.

pub mod bench;
pub mod verify;

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::conv1d::{conv1d_matrix, transpose, Filter1d};
use crate::conv2d::{transposed_conv2d, KernelStack, Space};
use crate::error::{Error, Result};
use crate::formats::{
    featuremap_to_image, image_to_featuremap, kernel_read, kernel_write, pgm_read, pgm_write,
};
use crate::shuffle::{lr_pipeline, merge_kernel_2d, split_kernel_2d, LrGeometry};
use crate::tensor::Tensor;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "subpixel", version, about = "Sub-pixel convolution and deconvolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every convolution identity over a parameter sweep.
    Verify {
        #[arg(long = "r", value_delimiter = ',', default_values_t = [1, 2, 3, 4])]
        ratios: Vec<usize>,
        /// Sub-kernel sizes; HR kernels are k * r.
        #[arg(long = "k", value_delimiter = ',', default_values_t = [1, 2, 3])]
        kernels: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 3, 4, 5, 6])]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = crate::random::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time an LR network, its deconvolution form and the matched HR network.
    Bench {
        #[arg(long, default_value_t = 32)]
        width: usize,
        #[arg(long, default_value_t = 32)]
        height: usize,
        #[arg(long, default_value_t = 3)]
        layers: usize,
        #[arg(long = "r", default_value_t = 2)]
        ratio: usize,
        #[arg(long, default_value_t = 32)]
        channels: usize,
        #[arg(long, default_value_t = 10)]
        iters: usize,
        #[arg(long, default_value_t = crate::random::DEFAULT_SEED)]
        seed: u64,
    },
    /// Convert a kernel file between HR deconvolution and LR split form.
    ConvertKernel {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        direction: Direction,
        #[arg(long = "r")]
        ratio: usize,
    },
    /// Upscale a PGM image with a kernel, by LR convolution + shuffle or by deconvolution.
    Upscale {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        kernel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long = "r")]
        ratio: usize,
    },
    /// Print the 1D convolution matrix and its transpose.
    Matrix {
        /// Comma-separated filter taps.
        #[arg(long)]
        filter: String,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long)]
        input_len: usize,
        #[arg(long, default_value_t = 0)]
        pad: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Direction {
    Split,
    Merge,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    LrShuffle,
    Deconv,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    match dispatch(cli.command, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Verify {
            ratios,
            kernels,
            sizes,
            trials,
            seed,
            inject_fault,
        } => {
            if trials == 0 {
                return Err(Error::InvalidArgument("--trials must be at least 1".into()));
            }
            for (flag, list) in [("--r", &ratios), ("--k", &kernels), ("--sizes", &sizes)] {
                if list.is_empty() || list.contains(&0) {
                    return Err(Error::InvalidArgument(format!(
                        "{flag} needs a list of positive integers"
                    )));
                }
            }
            let sorted = |mut v: Vec<usize>| {
                v.sort_unstable();
                v.dedup();
                v
            };
            let cfg = verify::VerifyConfig {
                ratios: sorted(ratios),
                kernel_sizes: sorted(kernels),
                sizes: sorted(sizes),
                trials,
                seed,
                inject_fault,
            };
            let report = verify::run_verify(&cfg)?;
            write!(out, "{report}")?;
            Ok(if report.passed() {
                EXIT_OK
            } else {
                EXIT_VERIFY_FAILED
            })
        }
        Command::Bench {
            width,
            height,
            layers,
            ratio,
            channels,
            iters,
            seed,
        } => {
            let cfg = bench::BenchConfig {
                width,
                height,
                layers,
                ratio,
                channels,
                iters,
                seed,
            };
            let report = bench::run_bench(&cfg)?;
            write!(out, "{report}")?;
            Ok(EXIT_OK)
        }
        Command::ConvertKernel {
            input,
            output,
            direction,
            ratio,
        } => {
            let k = kernel_read(&read_file(&input)?)?;
            if k.ratio() != ratio {
                return Err(Error::InvalidArgument(format!(
                    "kernel file records ratio {}, --r is {ratio}",
                    k.ratio()
                )));
            }
            let converted = match (direction, k.space()) {
                (Direction::Split, Space::Hr) => split_kernel_2d(&k, ratio)?,
                (Direction::Merge, Space::Lr) => merge_kernel_2d(&k, ratio)?,
                (d, s) => {
                    return Err(Error::InvalidArgument(format!(
                        "cannot {} a kernel tagged {}",
                        if d == Direction::Split { "split" } else { "merge" },
                        s.tag()
                    )))
                }
            };
            fs::write(&output, kernel_write(&converted))?;
            let [o, i, kh, kw] = converted.dims();
            writeln!(
                out,
                "wrote {} kernel ({o},{i},{kh},{kw}) to {}",
                converted.space().tag(),
                output.display()
            )?;
            Ok(EXIT_OK)
        }
        Command::Upscale {
            image,
            kernel,
            out: out_path,
            mode,
            ratio,
        } => {
            let img = pgm_read(&read_file(&image)?)?;
            let k = kernel_read(&read_file(&kernel)?)?;
            let fm = upscale(&image_to_featuremap(&img), &k, mode, ratio, err)?;
            let result = featuremap_to_image(&fm)?;
            fs::write(&out_path, pgm_write(&result))?;
            writeln!(
                out,
                "upscaled {}x{} -> {}x{} into {}",
                img.width(),
                img.height(),
                result.width(),
                result.height(),
                out_path.display()
            )?;
            Ok(EXIT_OK)
        }
        Command::Matrix {
            filter,
            stride,
            input_len,
            pad,
        } => {
            let taps = parse_filter(&filter)?;
            let f = Filter1d::new(&taps)?;
            let m = conv1d_matrix(&f, input_len, stride, pad, pad)?;
            let mt = transpose(&m)?;
            writeln!(out, "M ({}x{}):", m.dims()[0], m.dims()[1])?;
            write!(out, "{}", render_matrix(&m))?;
            writeln!(out, "M^T ({}x{}):", mt.dims()[0], mt.dims()[1])?;
            write!(out, "{}", render_matrix(&mt))?;
            Ok(EXIT_OK)
        }
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
}

fn upscale(
    fm: &Tensor,
    k: &KernelStack,
    mode: Mode,
    ratio: usize,
    err: &mut dyn Write,
) -> Result<Tensor> {
    if k.ratio() != ratio {
        return Err(Error::InvalidArgument(format!(
            "kernel file records ratio {}, --r is {ratio}",
            k.ratio()
        )));
    }
    let [o, i, _, _] = k.dims();
    let expected_o = match k.space() {
        Space::Hr => 1,
        Space::Lr => ratio * ratio,
    };
    if i != 1 || o != expected_o {
        return Err(Error::InvalidArgument(format!(
            "grayscale upscaling needs a ({expected_o},1,kh,kw) {} kernel, got ({o},{i},..)",
            k.space().tag()
        )));
    }
    let geometry = LrGeometry::for_stack(k)?;
    match (mode, k.space()) {
        (Mode::LrShuffle, Space::Lr) => lr_pipeline(fm, k, geometry.pad),
        (Mode::LrShuffle, Space::Hr) => {
            writeln!(err, "note: splitting HR kernel into LR form")?;
            lr_pipeline(fm, &split_kernel_2d(k, ratio)?, geometry.pad)
        }
        (Mode::Deconv, Space::Hr) => transposed_conv2d(fm, k.weights(), ratio, geometry.crop),
        (Mode::Deconv, Space::Lr) => {
            writeln!(err, "note: merging LR kernel into HR form")?;
            transposed_conv2d(fm, merge_kernel_2d(k, ratio)?.weights(), ratio, geometry.crop)
        }
    }
}

pub fn parse_filter(text: &str) -> Result<Vec<f64>> {
    let taps = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad filter tap {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if taps.is_empty() {
        return Err(Error::Parse("empty filter".into()));
    }
    Ok(taps)
}

/// Right-aligned columns, zeros shown as `.`.
pub fn render_matrix(m: &Tensor) -> String {
    let cols = m.dims()[1];
    let cells: Vec<String> = m
        .data()
        .iter()
        .map(|&v| if v == 0.0 { ".".to_string() } else { format!("{v}") })
        .collect();
    let width = cells.iter().map(String::len).max().unwrap_or(1);
    let mut text = String::new();
    for row in cells.chunks(cols) {
        let line: Vec<String> = row.iter().map(|c| format!("{c:>width$}")).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    text
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let mut argv = vec!["subpixel"];
        argv.extend_from_slice(args);
        let code = run(argv, &mut out, &mut err);
        (
            code,
            String::from_utf8(out).unwrap(),
            String::from_utf8(err).unwrap(),
        )
    }

    #[test]
    fn matrix_rendering() {
        let (code, out, _) = run_capture(&[
            "matrix", "--filter", "1,2,3,4", "--stride", "2", "--input-len", "8", "--pad", "2",
        ]);
        assert_eq!(code, 0);
        assert!(out.starts_with("M (5x8):\n3 4 . . . . . .\n"));
        assert!(out.contains("M^T (8x5):"));
    }

    #[test]
    fn identity_rendering() {
        let (code, out, _) = run_capture(&["matrix", "--filter", "1", "--input-len", "3"]);
        assert_eq!(code, 0);
        assert_eq!(
            out,
            "M (3x3):\n1 . .\n. 1 .\n. . 1\nM^T (3x3):\n1 . .\n. 1 .\n. . 1\n"
        );
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_capture(&["matrix", "--filter", "1,x", "--input-len", "3"]).0, 2);
        assert_eq!(run_capture(&["verify", "--trials", "0"]).0, 2);
        assert_eq!(run_capture(&["verify", "--r", "0"]).0, 2);
        assert_eq!(run_capture(&["bogus"]).0, 2);
        assert_eq!(run_capture(&["bench", "--channels", "6"]).0, 2);
        assert_eq!(run_capture(&["--help"]).0, 0);
    }

    #[test]
    fn small_verify_and_fault() {
        let args = ["verify", "--r", "1,2", "--k", "1,2", "--sizes", "1,2", "--trials", "1"];
        let (code, out, _) = run_capture(&args);
        assert_eq!(code, 0, "{out}");
        let mut faulty = args.to_vec();
        faulty.push("--inject-fault");
        let (code, out, _) = run_capture(&faulty);
        assert_eq!(code, 1);
        assert!(out.contains("FAIL main-theorem"));
    }

    #[test]
    fn filter_parsing() {
        assert_eq!(parse_filter("1, 2.5,-3").unwrap(), vec![1.0, 2.5, -3.0]);
        assert!(parse_filter("").is_err());
        assert!(parse_filter("1,,2").is_err());
    }
}
