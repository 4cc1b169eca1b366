//! Image file I/O: PGM (P2/P5) read/write, 8-bit grayscale PNG read, and
//! the `<image>.meta` scale sidecar.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use super::{binarize, otsu_threshold, Micrograph};
use crate::error::{Error, Result};

/// Raw single-channel 8-bit intensities, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    pub height: usize,
    pub width: usize,
    pub maxval: u16,
    pub pixels: Vec<u8>,
}

impl IntensityImage {
    pub fn histogram(&self) -> Vec<u64> {
        let mut hist = vec![0u64; usize::from(self.maxval) + 1];
        for &v in &self.pixels {
            hist[usize::from(v)] += 1;
        }
        hist
    }
}

pub const DEFAULT_SCALE: f64 = 1.0;
const SCALE_KEY: &str = "scale_um_per_px";

/// Loads and binarizes a micrograph.
///
/// Without an explicit `threshold`, Otsu's method picks one from the
/// intensity histogram. The scale comes from `scale` if given, otherwise from
/// the sidecar file next to the image, otherwise defaults to 1 µm/pixel.
pub fn load_micrograph(
    path: impl AsRef<Path>,
    threshold: Option<u16>,
    scale: Option<f64>,
) -> Result<Micrograph> {
    let path = path.as_ref();
    let image = read_intensity_image(path)?;
    let threshold = threshold.unwrap_or_else(|| otsu_threshold(&image.histogram()));
    let scale = match scale {
        Some(s) => s,
        None => read_scale_sidecar(path)?.unwrap_or(DEFAULT_SCALE),
    };
    binarize(&image, threshold, scale)
}

/// Reads a PGM or PNG file, dispatching on its magic bytes.
pub fn read_intensity_image(path: impl AsRef<Path>) -> Result<IntensityImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        parse_pgm(&bytes).map_err(|msg| Error::format(path, msg))
    } else if bytes.starts_with(b"\x89PNG") {
        parse_png(&bytes).map_err(|msg| Error::format(path, msg))
    } else if bytes.starts_with(b"P3") || bytes.starts_with(b"P6") {
        Err(Error::format(
            path,
            "color PPM images are not supported: micrographs must have exactly one channel",
        ))
    } else {
        Err(Error::format(
            path,
            "unsupported image format (expected PGM P2/P5 or grayscale PNG)",
        ))
    }
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> std::result::Result<usize, String> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format!("malformed PGM header: bad {what}"))
    }
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<IntensityImage, String> {
    let binary = &bytes[..2] == b"P5";
    let mut cur = HeaderCursor { bytes, pos: 2 };
    let width = cur.number("width")?;
    let height = cur.number("height")?;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err("PGM image has zero size".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!(
            "PGM maxval {maxval} not supported: only 8-bit intensities are accepted"
        ));
    }
    let count = width * height;
    let pixels = if binary {
        // exactly one whitespace byte separates the header from the raster
        if cur.pos >= bytes.len() || !bytes[cur.pos].is_ascii_whitespace() {
            return Err("malformed PGM header: missing raster separator".into());
        }
        let start = cur.pos + 1;
        let raster = bytes
            .get(start..start + count)
            .ok_or_else(|| format!("truncated PGM raster: expected {count} bytes"))?;
        raster.to_vec()
    } else {
        (0..count)
            .map(|_| {
                let v = cur.number("pixel value")?;
                u8::try_from(v).map_err(|_| format!("pixel value {v} exceeds 255"))
            })
            .collect::<std::result::Result<Vec<u8>, String>>()?
    };
    if let Some(&v) = pixels.iter().find(|&&v| usize::from(v) > maxval) {
        return Err(format!("pixel value {v} exceeds maxval {maxval}"));
    }
    Ok(IntensityImage {
        height,
        width,
        maxval: maxval as u16,
        pixels,
    })
}

fn parse_png(bytes: &[u8]) -> std::result::Result<IntensityImage, String> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| e.to_string())?;
    let info = reader.info();
    match info.color_type {
        png::ColorType::Grayscale => {}
        other => {
            return Err(format!(
                "PNG color type {other:?} has more than one channel; \
                 micrographs must be single-channel grayscale"
            ))
        }
    }
    if info.bit_depth == png::BitDepth::Sixteen {
        return Err("16-bit PNG not supported: only 8-bit intensities are accepted".into());
    }
    let (width, height) = (info.width as usize, info.height as usize);
    let size = reader
        .output_buffer_size()
        .ok_or("PNG image too large to decode")?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(|e| e.to_string())?;
    if frame.color_type != png::ColorType::Grayscale || frame.bit_depth != png::BitDepth::Eight {
        return Err("PNG did not decode to 8-bit grayscale".into());
    }
    let mut pixels = Vec::with_capacity(width * height);
    for row in buf.chunks(frame.line_size).take(height) {
        pixels.extend_from_slice(&row[..width]);
    }
    Ok(IntensityImage {
        height,
        width,
        maxval: 255,
        pixels,
    })
}

/// Writes a binary P5 PGM with particles at 255 and matrix at 0.
pub fn save_pgm(m: &Micrograph, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = format!("P5\n{} {}\n255\n", m.width(), m.height()).into_bytes();
    out.extend(m.phases().iter().map(|&p| p * 255));
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// `<image>.meta`, i.e. the full image file name with `.meta` appended.
pub fn sidecar_path(image: impl AsRef<Path>) -> PathBuf {
    let mut s = image.as_ref().as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

pub fn write_scale_sidecar(image: impl AsRef<Path>, scale: f64) -> Result<()> {
    let path = sidecar_path(image);
    fs::write(&path, format!("{SCALE_KEY} = {scale}\n")).map_err(|e| Error::io(&path, e))
}

/// Returns `Ok(None)` when no sidecar exists.
pub fn read_scale_sidecar(image: impl AsRef<Path>) -> Result<Option<f64>> {
    let path = sidecar_path(image);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(Error::io(&path, e)),
    };
    for line in text.lines() {
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        if key.trim() == SCALE_KEY {
            let scale: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::format(&path, format!("bad {SCALE_KEY} value {value:?}")))?;
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::format(&path, "scale must be positive"));
            }
            return Ok(Some(scale));
        }
    }
    Err(Error::format(&path, format!("missing `{SCALE_KEY} = <float>` line")))
}
