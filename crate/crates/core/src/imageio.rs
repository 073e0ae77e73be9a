//! Reading and writing fields.
//!
//! Supported containers:
//!
//! - PNG, 8 or 16 bit, gray/RGB (alpha is dropped on load). Samples are
//!   normalized to `[0, 1]`.
//! - Radiance `.hdr` (RGBE). Decoding follows the reference `colr_color`
//!   convention: `(m + 0.5) * 2^(e - 136)`, with `e == 0` meaning black.
//! - `raw_f64`: the magic `SSF1`, three little-endian `u32` counts
//!   (height, width, channels), then `h*w*c` little-endian `f64` samples in
//!   planar channel order. Lossless.
//! - `csv_signal`: one line per sample of a 1D signal, channels separated by
//!   commas, written with 17 significant digits. Blank lines and lines
//!   starting with `#` are ignored on load.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::field::Field;

const RAW_MAGIC: &[u8; 4] = b"SSF1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Png8,
    Png16,
    RadianceHdr,
    RawF64,
    CsvSignal,
}

impl Format {
    /// Infers the format from a file extension. `.png` maps to 8-bit; loads
    /// detect the actual bit depth.
    pub fn from_path(path: &Path) -> Result<Format> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(Format::Png8),
            "hdr" | "pic" | "rgbe" => Ok(Format::RadianceHdr),
            "ssf" | "f64" | "raw" => Ok(Format::RawF64),
            "csv" | "txt" => Ok(Format::CsvSignal),
            _ => Err(Error::UnsupportedFormat(format!(
                "cannot infer a format from {}",
                path.display()
            ))),
        }
    }

    pub fn parse(name: &str) -> Result<Format> {
        match name.to_ascii_lowercase().as_str() {
            "png" | "png8" => Ok(Format::Png8),
            "png16" => Ok(Format::Png16),
            "hdr" | "radiance" | "radiance_hdr" => Ok(Format::RadianceHdr),
            "raw" | "raw_f64" | "ssf" => Ok(Format::RawF64),
            "csv" | "csv_signal" => Ok(Format::CsvSignal),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Interpretation of the samples in a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorSpace {
    #[default]
    Linear,
    Srgb,
    Log,
}

/// A file on disk together with its format and color interpretation.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterFile {
    pub path: PathBuf,
    pub format: Format,
    pub color: ColorSpace,
}

impl RasterFile {
    pub fn new(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let format = Format::from_path(&path)?;
        Ok(RasterFile {
            path,
            format,
            color: ColorSpace::Linear,
        })
    }

    pub fn with_format(mut self, format: Format) -> Self {
        self.format = format;
        self
    }

    pub fn with_color(mut self, color: ColorSpace) -> Self {
        self.color = color;
        self
    }

    pub fn load(&self) -> Result<Field> {
        load(
            &self.path,
            &LoadOptions {
                format: Some(self.format),
                srgb_to_linear: self.color == ColorSpace::Srgb,
            },
        )
    }

    pub fn save(&self, field: &Field, clamp: bool) -> Result<()> {
        save(
            field,
            &self.path,
            &SaveOptions {
                format: Some(self.format),
                clamp,
                linear_to_srgb: self.color == ColorSpace::Srgb,
            },
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Overrides extension-based detection.
    pub format: Option<Format>,
    /// Decode sRGB-encoded PNG samples to linear intensity.
    pub srgb_to_linear: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SaveOptions {
    pub format: Option<Format>,
    /// Clamp to `[0, 1]` before quantizing integer formats instead of failing.
    pub clamp: bool,
    pub linear_to_srgb: bool,
}

pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Field> {
    let path = path.as_ref();
    let format = match options.format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    let field = match format {
        Format::Png8 | Format::Png16 => {
            let f = load_png(path)?;
            if options.srgb_to_linear {
                f.map(srgb_to_linear)
            } else {
                f
            }
        }
        Format::RadianceHdr => {
            let bytes = std::fs::read(path)?;
            decode_hdr(&bytes).map_err(|reason| malformed(path, reason))?
        }
        Format::RawF64 => {
            let bytes = std::fs::read(path)?;
            decode_raw_f64(&bytes).map_err(|reason| malformed(path, reason))?
        }
        Format::CsvSignal => load_csv(path)?,
    };
    field.check_finite()?;
    Ok(field)
}

pub fn save(field: &Field, path: impl AsRef<Path>, options: &SaveOptions) -> Result<()> {
    let path = path.as_ref();
    field.check_finite()?;
    let format = match options.format {
        Some(f) => f,
        None => Format::from_path(path)?,
    };
    match format {
        Format::Png8 | Format::Png16 => {
            let f = if options.linear_to_srgb {
                field.map(|v| linear_to_srgb(v.clamp(0.0, 1.0)))
            } else {
                field.clone()
            };
            save_png(&f, path, format == Format::Png16, options.clamp)
        }
        Format::RadianceHdr => {
            let mut out = BufWriter::new(File::create(path)?);
            out.write_all(&encode_hdr(field)?)?;
            out.flush()?;
            Ok(())
        }
        Format::RawF64 => {
            let mut out = BufWriter::new(File::create(path)?);
            out.write_all(&encode_raw_f64(field))?;
            out.flush()?;
            Ok(())
        }
        Format::CsvSignal => save_csv(field, path),
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::Malformed {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        12.92 * v
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

// ---------------------------------------------------------------------------
// raw_f64

pub fn encode_raw_f64(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * field.len());
    out.extend_from_slice(RAW_MAGIC);
    for n in [field.height(), field.width(), field.channels()] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in field.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw_f64(bytes: &[u8]) -> std::result::Result<Field, String> {
    if bytes.len() < 16 || &bytes[..4] != RAW_MAGIC {
        return Err("missing SSF1 header".into());
    }
    let count = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    let (h, w, c) = (count(0), count(1), count(2));
    let n = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or("sample count overflows")?;
    let body = &bytes[16..];
    if body.len() != 8 * n {
        return Err(format!(
            "expected {} bytes of samples, found {}",
            8 * n,
            body.len()
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Field::new(h, w, c, data).map_err(|e| e.to_string())
}

// ---------------------------------------------------------------------------
// csv_signal

fn load_csv(path: &Path) -> Result<Field> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let row = t
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| malformed(path, format!("line {}: {e}", lineno + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(malformed(
                    path,
                    format!("line {} has {} columns, expected {}", lineno + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let channels = rows.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(malformed(path, "no samples"));
    }
    let mut data = vec![0.0; n * channels];
    for (i, row) in rows.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            data[c * n + i] = *v;
        }
    }
    Field::new(n, 1, channels, data)
}

fn save_csv(field: &Field, path: &Path) -> Result<()> {
    if field.width() != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "csv_signal holds 1D signals, got width {}",
            field.width()
        )));
    }
    let mut out = BufWriter::new(File::create(path)?);
    for i in 0..field.height() {
        let line = (0..field.channels())
            .map(|c| format!("{:.16e}", field.get(i, 0, c)))
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// PNG

fn load_png(path: &Path) -> Result<Field> {
    let file = BufReader::new(File::open(path)?);
    let mut decoder = png::Decoder::new(file);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder
        .read_info()
        .map_err(|e| malformed(path, e.to_string()))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| malformed(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| malformed(path, e.to_string()))?;
    let (h, w) = (info.height as usize, info.width as usize);
    let stored = info.color_type.samples();
    let channels = match info.color_type {
        png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => 1,
        _ => 3,
    };
    let wide = info.bit_depth == png::BitDepth::Sixteen;
    let bytes_per = if wide { 2 } else { 1 };
    let scale = if wide { 1.0 / 65535.0 } else { 1.0 / 255.0 };
    let mut data = vec![0.0; h * w * channels];
    for y in 0..h {
        let line = &buf[y * info.line_size..(y + 1) * info.line_size];
        for x in 0..w {
            for c in 0..channels {
                let off = (x * stored + c) * bytes_per;
                let raw = if wide {
                    u16::from_be_bytes([line[off], line[off + 1]]) as f64
                } else {
                    line[off] as f64
                };
                data[(c * h + y) * w + x] = raw * scale;
            }
        }
    }
    Field::new(h, w, channels, data)
}

fn save_png(field: &Field, path: &Path, sixteen: bool, clamp: bool) -> Result<()> {
    let color = match field.channels() {
        1 => png::ColorType::Grayscale,
        2 => png::ColorType::GrayscaleAlpha,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        c => {
            return Err(Error::UnsupportedFormat(format!(
                "PNG cannot hold {c} channels"
            )))
        }
    };
    let (h, w, channels) = (field.height(), field.width(), field.channels());
    let max = if sixteen { 65535.0 } else { 255.0 };
    let mut bytes = Vec::with_capacity(h * w * channels * if sixteen { 2 } else { 1 });
    for y in 0..h {
        for x in 0..w {
            for c in 0..channels {
                let i = field.index(y, x, c);
                let v = field.data()[i];
                let v = if clamp {
                    v.clamp(0.0, 1.0)
                } else if !(0.0..=1.0).contains(&v) {
                    return Err(Error::OutOfRange { index: i, value: v });
                } else {
                    v
                };
                let q = (v * max).round();
                if sixteen {
                    bytes.extend_from_slice(&(q as u16).to_be_bytes());
                } else {
                    bytes.push(q as u8);
                }
            }
        }
    }
    let out = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(out, w as u32, h as u32);
    encoder.set_color(color);
    encoder.set_depth(if sixteen {
        png::BitDepth::Sixteen
    } else {
        png::BitDepth::Eight
    });
    let io = |e: png::EncodingError| match e {
        png::EncodingError::IoError(e) => Error::Io(e),
        other => malformed(path, other.to_string()),
    };
    let mut writer = encoder.write_header().map_err(io)?;
    writer.write_image_data(&bytes).map_err(io)?;
    writer.finish().map_err(io)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Radiance RGBE

/// Decodes one RGBE pixel to linear radiance.
pub fn rgbe_to_rgb(rgbe: [u8; 4]) -> [f64; 3] {
    if rgbe[3] == 0 {
        return [0.0; 3];
    }
    let f = 2f64.powi(rgbe[3] as i32 - 136);
    [
        (rgbe[0] as f64 + 0.5) * f,
        (rgbe[1] as f64 + 0.5) * f,
        (rgbe[2] as f64 + 0.5) * f,
    ]
}

/// Encodes linear radiance to a shared-exponent RGBE pixel. Negative values
/// are stored as zero.
pub fn rgb_to_rgbe(rgb: [f64; 3]) -> [u8; 4] {
    let rgb = rgb.map(|v| v.max(0.0));
    let v = rgb[0].max(rgb[1]).max(rgb[2]);
    if v < 1e-32 {
        return [0; 4];
    }
    // v = m * 2^e with m in [0.5, 1)
    let mut e = v.log2().floor() as i32 + 1;
    let mut m = v / 2f64.powi(e);
    if m >= 1.0 {
        m /= 2.0;
        e += 1;
    } else if m < 0.5 {
        m *= 2.0;
        e -= 1;
    }
    if e + 128 > 255 {
        return [255, 255, 255, 255];
    }
    if e + 128 < 1 {
        return [0; 4];
    }
    let scale = m * 256.0 / v;
    let q = |c: f64| ((c * scale) as u32).min(255) as u8;
    [q(rgb[0]), q(rgb[1]), q(rgb[2]), (e + 128) as u8]
}

pub fn encode_hdr(field: &Field) -> Result<Vec<u8>> {
    let (h, w) = (field.height(), field.width());
    let channel = |y: usize, x: usize, c: usize| {
        if field.channels() == 3 {
            field.get(y, x, c)
        } else {
            field.get(y, x, 0)
        }
    };
    if field.channels() != 1 && field.channels() != 3 {
        return Err(Error::UnsupportedFormat(format!(
            "Radiance HDR needs 1 or 3 channels, got {}",
            field.channels()
        )));
    }
    let mut out = Vec::with_capacity(64 + 4 * h * w);
    out.extend_from_slice(b"#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n");
    out.extend_from_slice(format!("-Y {h} +X {w}\n").as_bytes());
    for y in 0..h {
        for x in 0..w {
            out.extend_from_slice(&rgb_to_rgbe([
                channel(y, x, 0),
                channel(y, x, 1),
                channel(y, x, 2),
            ]));
        }
    }
    Ok(out)
}

pub fn decode_hdr(bytes: &[u8]) -> std::result::Result<Field, String> {
    let mut cursor = std::io::Cursor::new(bytes);
    let mut line = String::new();
    cursor.read_line(&mut line).map_err(|e| e.to_string())?;
    if !line.starts_with("#?") {
        return Err("missing #? signature".into());
    }
    loop {
        line.clear();
        let n = cursor.read_line(&mut line).map_err(|e| e.to_string())?;
        if n == 0 {
            return Err("header ends before the resolution line".into());
        }
        let t = line.trim();
        if t.is_empty() {
            break;
        }
        if let Some(fmt) = t.strip_prefix("FORMAT=") {
            if fmt != "32-bit_rle_rgbe" {
                return Err(format!("unsupported pixel format {fmt}"));
            }
        }
    }
    line.clear();
    cursor.read_line(&mut line).map_err(|e| e.to_string())?;
    let parts: Vec<&str> = line.split_whitespace().collect();
    let (h, w) = match parts.as_slice() {
        ["-Y", h, "+X", w] => (
            h.parse::<usize>().map_err(|e| e.to_string())?,
            w.parse::<usize>().map_err(|e| e.to_string())?,
        ),
        _ => return Err(format!("unsupported resolution line {:?}", line.trim())),
    };
    if h == 0 || w == 0 {
        return Err("empty image".into());
    }
    let mut rest = Vec::new();
    cursor.read_to_end(&mut rest).map_err(|e| e.to_string())?;
    let mut pos = 0usize;
    let mut data = vec![0.0; 3 * h * w];
    let mut scan = vec![[0u8; 4]; w];
    for y in 0..h {
        read_scanline(&rest, &mut pos, &mut scan)?;
        for (x, px) in scan.iter().enumerate() {
            let rgb = rgbe_to_rgb(*px);
            for c in 0..3 {
                data[(c * h + y) * w + x] = rgb[c];
            }
        }
    }
    Field::new(h, w, 3, data).map_err(|e| e.to_string())
}

fn take<'a>(buf: &'a [u8], pos: &mut usize, n: usize) -> std::result::Result<&'a [u8], String> {
    if *pos + n > buf.len() {
        return Err("truncated pixel data".into());
    }
    let s = &buf[*pos..*pos + n];
    *pos += n;
    Ok(s)
}

fn read_scanline(
    buf: &[u8],
    pos: &mut usize,
    scan: &mut [[u8; 4]],
) -> std::result::Result<(), String> {
    let w = scan.len();
    let head = take(buf, pos, 4)?;
    let rle = (8..0x8000).contains(&w) && head[0] == 2 && head[1] == 2 && head[2] & 0x80 == 0;
    if !rle {
        scan[0].copy_from_slice(head);
        for px in scan.iter_mut().skip(1) {
            px.copy_from_slice(take(buf, pos, 4)?);
        }
        return Ok(());
    }
    let len = ((head[2] as usize) << 8) | head[3] as usize;
    if len != w {
        return Err(format!("scanline length {len} does not match width {w}"));
    }
    for c in 0..4 {
        let mut x = 0;
        while x < w {
            let n = take(buf, pos, 1)?[0] as usize;
            if n > 128 {
                let run = n - 128;
                let v = take(buf, pos, 1)?[0];
                if x + run > w {
                    return Err("run overflows scanline".into());
                }
                for px in &mut scan[x..x + run] {
                    px[c] = v;
                }
                x += run;
            } else {
                if n == 0 || x + n > w {
                    return Err("bad literal run".into());
                }
                let vals = take(buf, pos, n)?;
                for (px, v) in scan[x..x + n].iter_mut().zip(vals) {
                    px[c] = *v;
                }
                x += n;
            }
        }
    }
    Ok(())
}
