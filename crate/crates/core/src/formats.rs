//! PGM images and the `SPKERN` text kernel format.

use std::fmt::Write as _;

use crate::conv2d::{KernelStack, Space};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const PGM_MAXVAL: u32 = 255;
pub const KERNEL_MAGIC: &str = "SPKERN";
pub const KERNEL_VERSION: &str = "v1";

/// 8-bit grayscale image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PgmImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PgmImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidShape("image dimensions must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{width}x{height} image needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(PgmImage {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }
}

struct HeaderReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' || c == b'\r' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Parse(format!("expected {what} at byte {start}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("{what} out of range")))
    }
}

/// Reads a P2 or P5 stream with maxval 255.
pub fn pgm_read(bytes: &[u8]) -> Result<PgmImage> {
    let binary = match bytes.get(..2) {
        Some(b"P2") => false,
        Some(b"P5") => true,
        _ => return Err(Error::Parse("bad PGM magic, expected P2 or P5".into())),
    };
    let mut header = HeaderReader { bytes, pos: 2 };
    let width = header.number("width")? as usize;
    let height = header.number("height")? as usize;
    let maxval = header.number("maxval")?;
    if maxval != PGM_MAXVAL {
        return Err(Error::Parse(format!("maxval must be 255, got {maxval}")));
    }
    let count = width * height;
    let pixels = if binary {
        if !bytes.get(header.pos).is_some_and(u8::is_ascii_whitespace) {
            return Err(Error::Parse("missing separator after maxval".into()));
        }
        let start = header.pos + 1;
        let data = bytes
            .get(start..start + count)
            .ok_or_else(|| Error::Parse(format!("truncated pixel data: need {count} bytes")))?;
        data.to_vec()
    } else {
        let mut pixels = Vec::with_capacity(count);
        for n in 0..count {
            let v = header.number("pixel").map_err(|_| {
                Error::Parse(format!("truncated pixel data: got {n} of {count} values"))
            })?;
            if v > PGM_MAXVAL {
                return Err(Error::Parse(format!("pixel {n} value {v} exceeds maxval")));
            }
            pixels.push(v as u8);
        }
        pixels
    };
    PgmImage::new(width, height, pixels)
}

/// Canonical P5: `P5 <w> <h> 255\n` followed by raw pixels.
pub fn pgm_write(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P5 {} {} {}\n", img.width, img.height, PGM_MAXVAL).into_bytes();
    out.extend_from_slice(&img.pixels);
    out
}

/// ASCII P2 encoding, one image row per line.
pub fn pgm_write_ascii(img: &PgmImage) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n{}\n", img.width, img.height, PGM_MAXVAL);
    for row in img.pixels.chunks(img.width) {
        let line: Vec<String> = row.iter().map(u8::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

/// `(1, H, W)` feature map with pixels scaled to `[0, 1]`.
pub fn image_to_featuremap(img: &PgmImage) -> Tensor {
    let data = img
        .pixels
        .iter()
        .map(|&p| f64::from(p) / f64::from(PGM_MAXVAL))
        .collect();
    Tensor::from_vec(&[1, img.height, img.width], data).expect("image dims are positive")
}

/// Clamps to `[0, 1]`, scales by 255 and rounds half away from zero.
pub fn featuremap_to_image(fm: &Tensor) -> Result<PgmImage> {
    fm.expect_rank(3, "feature map")?;
    let d = fm.dims();
    if d[0] != 1 {
        return Err(Error::InvalidArgument(format!(
            "only single-channel feature maps can be written, got {} channels",
            d[0]
        )));
    }
    let pixels = fm
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * f64::from(PGM_MAXVAL)).round() as u8)
        .collect();
    PgmImage::new(d[2], d[1], pixels)
}

/// Parses an `SPKERN v1` kernel file.
///
/// The header is `SPKERN v1 <HR|LR> <o> <i> <kh> <kw> <r>`. LR files whose
/// HR kernel is not `r * (kh, kw)` carry the HR size as two extra fields.
pub fn kernel_read(bytes: &[u8]) -> Result<KernelStack> {
    let text =
        std::str::from_utf8(bytes).map_err(|_| Error::Parse("kernel file is not UTF-8".into()))?;
    let (header, body) = text.split_once('\n').unwrap_or((text, ""));
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&KERNEL_MAGIC) {
        return Err(Error::Parse("missing SPKERN header".into()));
    }
    if fields.get(1) != Some(&KERNEL_VERSION) {
        return Err(Error::Parse(format!(
            "unsupported kernel format version {:?}",
            fields.get(1)
        )));
    }
    let space = fields
        .get(2)
        .and_then(|t| Space::from_tag(t))
        .ok_or_else(|| Error::Parse(format!("unknown space tag {:?}", fields.get(2))))?;
    let extra = match (space, fields.len()) {
        (_, 8) => false,
        (Space::Lr, 10) => true,
        _ => {
            return Err(Error::Parse(format!(
                "malformed kernel header with {} fields",
                fields.len()
            )))
        }
    };
    let ints = fields[3..]
        .iter()
        .map(|f| {
            f.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad header field {f:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let (o, i, kh, kw, r) = (ints[0], ints[1], ints[2], ints[3], ints[4]);
    let expected = o * i * kh * kw;
    let mut taps = Vec::with_capacity(expected);
    for token in body.split_whitespace() {
        let v: f64 = token
            .parse()
            .map_err(|_| Error::Parse(format!("bad tap {token:?}")))?;
        taps.push(v);
    }
    if taps.len() != expected {
        return Err(Error::Parse(format!(
            "header promises {expected} taps, file has {}",
            taps.len()
        )));
    }
    let weights = Tensor::from_vec(&[o, i, kh, kw], taps)?;
    match space {
        Space::Hr => KernelStack::hr(weights, r),
        Space::Lr if extra => KernelStack::lr_with_hr_size(weights, r, (ints[5], ints[6])),
        Space::Lr => KernelStack::lr(weights, r),
    }
}

/// Canonical encoding: header line, then one line of `kw` taps per kernel
/// row. Taps use the shortest decimal form that parses back to the same
/// `f64`.
pub fn kernel_write(k: &KernelStack) -> Vec<u8> {
    let [o, i, kh, kw] = k.dims();
    let mut out = format!(
        "{KERNEL_MAGIC} {KERNEL_VERSION} {} {o} {i} {kh} {kw} {}",
        k.space().tag(),
        k.ratio()
    );
    let (hh, hw) = k.hr_size();
    if k.space() == Space::Lr && (hh, hw) != (kh * k.ratio(), kw * k.ratio()) {
        let _ = write!(out, " {hh} {hw}");
    }
    out.push('\n');
    for row in k.weights().data().chunks(kw) {
        for (n, v) in row.iter().enumerate() {
            if n > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    out.into_bytes()
}
