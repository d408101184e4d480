//! Grayscale PGM (P2/P5) and PNG, colour PPM (P6) and PNG.

use std::fs;
use std::io::BufWriter;
use std::path::Path;

use aqtv_core::metrics::RgbImage;
use aqtv_core::raster::Raster;

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported bit depth (maxval {0})")]
    BitDepth(u32),
    #[error("unsupported PNG: {0}")]
    Png(String),
    #[error("truncated pixel data")]
    Truncated,
    #[error("unknown image extension: {0}")]
    Extension(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Png,
    Ppm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self, ImageError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        match ext.as_str() {
            "pgm" => Ok(Self::Pgm),
            "png" => Ok(Self::Png),
            "ppm" => Ok(Self::Ppm),
            _ => Err(ImageError::Extension(path.display().to_string())),
        }
    }
}

pub fn read_image(path: &Path) -> Result<Raster, ImageError> {
    let bytes = fs::read(path)?;
    match ImageFormat::from_path(path)? {
        ImageFormat::Png => decode_png(&bytes),
        _ => decode_pgm(&bytes),
    }
}

pub fn write_image(image: &Raster, path: &Path) -> Result<(), ImageError> {
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Png => encode_png_gray(image)?,
        ImageFormat::Pgm => encode_pgm(image),
        ImageFormat::Ppm => return Err(ImageError::Extension(path.display().to_string())),
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes a colour image as PPM (P6) or PNG.
pub fn write_rgb(image: &RgbImage, path: &Path) -> Result<(), ImageError> {
    let raw: Vec<u8> = image.data.iter().flatten().copied().collect();
    let bytes = match ImageFormat::from_path(path)? {
        ImageFormat::Png => encode_png(image.width, image.height, png::ColorType::Rgb, &raw)?,
        ImageFormat::Ppm => {
            let mut out = format!("P6\n{} {}\n255\n", image.width, image.height).into_bytes();
            out.extend_from_slice(&raw);
            out
        }
        ImageFormat::Pgm => return Err(ImageError::Extension(path.display().to_string())),
    };
    fs::write(path, bytes)?;
    Ok(())
}

/// `[0, 1]` to 8 bits, rounding to nearest.
pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space(&mut self) {
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

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::Header(format!("expected {what}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Raster, ImageError> {
    let ascii = match bytes.get(..2) {
        Some(b"P2") => true,
        Some(b"P5") => false,
        _ => return Err(ImageError::Header("expected P2 or P5".into())),
    };
    let mut h = Header { bytes, pos: 2 };
    let width = h.number("width")? as usize;
    let height = h.number("height")? as usize;
    let maxval = h.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::Header(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(ImageError::BitDepth(maxval));
    }
    let n = width * height;
    let max = maxval as f64;
    let mut data = Vec::with_capacity(n);
    if ascii {
        for _ in 0..n {
            let v = h.number("pixel").map_err(|_| ImageError::Truncated)?;
            if v > maxval {
                return Err(ImageError::Header(format!("pixel {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / max);
        }
    } else {
        // Exactly one whitespace byte separates the header from the raster.
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = n * if wide { 2 } else { 1 };
        let body = bytes.get(start..start + need).ok_or(ImageError::Truncated)?;
        if wide {
            data.extend(body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / max));
        } else {
            data.extend(body.iter().map(|&b| b as f64 / max));
        }
    }
    Ok(Raster::new(width, height, data))
}

/// Binary 8-bit PGM.
pub fn encode_pgm(image: &Raster) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| quantize(v)));
    out
}

/// ASCII 8-bit PGM.
pub fn encode_pgm_ascii(image: &Raster) -> Vec<u8> {
    let mut out = format!("P2\n{} {}\n255\n", image.width(), image.height());
    for row in image.data().chunks(image.width()) {
        let line: Vec<String> = row.iter().map(|&v| quantize(v).to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster, ImageError> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| ImageError::Png(e.to_string()))?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| ImageError::Png(e.to_string()))?;
    if info.color_type != png::ColorType::Grayscale {
        return Err(ImageError::Png(format!("colour type {:?}, expected grayscale", info.color_type)));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data: Vec<f64> = match info.bit_depth {
        png::BitDepth::Eight => buf[..w * h].iter().map(|&b| b as f64 / 255.0).collect(),
        png::BitDepth::Sixteen => {
            buf[..2 * w * h].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0).collect()
        }
        d => return Err(ImageError::BitDepth((1u32 << d as u32) - 1)),
    };
    Ok(Raster::new(w, h, data))
}

pub fn encode_png_gray(image: &Raster) -> Result<Vec<u8>, ImageError> {
    let raw: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    encode_png(image.width(), image.height(), png::ColorType::Grayscale, &raw)
}

fn encode_png(width: usize, height: usize, color: png::ColorType, raw: &[u8]) -> Result<Vec<u8>, ImageError> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), width as u32, height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
        w.write_image_data(raw).map_err(|e| ImageError::Png(e.to_string()))?;
        w.finish().map_err(|e| ImageError::Png(e.to_string()))?;
    }
    Ok(out)
}
