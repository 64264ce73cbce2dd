//! 8-bit raster images plus the binary PGM/PPM codecs used for sequence
//! storage. PNG support is feature-gated behind `png`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// 8-bit image, row-major, channel-interleaved. `channels` is 1 (gray) or 3 (RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || !(channels == 1 || channels == 3) {
            return Err(Error::Input(format!(
                "invalid image shape {width}x{height}x{channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::Input(format!(
                "image data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Self {
        Image {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> u8 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: u8) {
        self.data[(row * self.width + col) * self.channels + ch] = v;
    }

    /// Loads PGM (P5) or PPM (P6); with the `png` feature also `.png`.
    pub fn load(path: &Path) -> Result<Image> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or("")
            .to_ascii_lowercase();
        match ext.as_str() {
            "pgm" | "ppm" | "pnm" => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                decode_pnm(&bytes).map_err(|msg| Error::Ingest {
                    path: path.to_path_buf(),
                    line: None,
                    message: msg,
                })
            }
            #[cfg(feature = "png")]
            "png" => load_png(path),
            other => Err(Error::Ingest {
                path: path.to_path_buf(),
                line: None,
                message: format!("unsupported image extension '{other}'"),
            }),
        }
    }

    /// Writes binary PGM (1 channel) or PPM (3 channels).
    pub fn save_pnm(&self, path: &Path) -> Result<()> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = Vec::with_capacity(self.data.len() + 32);
        write!(out, "{}\n{} {}\n255\n", magic, self.width, self.height)
            .expect("in-memory write");
        out.extend_from_slice(&self.data);
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn decode_pnm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos).ok_or("missing magic")?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        m => return Err(format!("unsupported magic '{m}' (binary P5/P6 only)")),
    };
    let width: usize = next_token(bytes, &mut pos)
        .ok_or("missing width")?
        .parse()
        .map_err(|_| "bad width")?;
    let height: usize = next_token(bytes, &mut pos)
        .ok_or("missing height")?
        .parse()
        .map_err(|_| "bad height")?;
    let maxval: usize = next_token(bytes, &mut pos)
        .ok_or("missing maxval")?
        .parse()
        .map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("only maxval 255 supported, got {maxval}"));
    }
    // Single whitespace byte separates the header from the raster.
    pos += 1;
    let need = width * height * channels;
    if bytes.len() < pos + need {
        return Err(format!(
            "truncated raster: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        ));
    }
    Image::new(width, height, channels, bytes[pos..pos + need].to_vec())
        .map_err(|e| e.to_string())
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn next_token(bytes: &[u8], pos: &mut usize) -> Option<String> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if *pos > start {
        Some(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    } else {
        None
    }
}

#[cfg(feature = "png")]
fn load_png(path: &Path) -> Result<Image> {
    let img = image::open(path).map_err(|e| Error::Ingest {
        path: path.to_path_buf(),
        line: None,
        message: e.to_string(),
    })?;
    let rgb = img.to_rgb8();
    Image::new(
        rgb.width() as usize,
        rgb.height() as usize,
        3,
        rgb.into_raw(),
    )
}

/// In-place separable Gaussian blur on an interleaved f32 raster.
/// Edges clamp to the border sample. `sigma <= 0` is a no-op.
pub fn gaussian_blur_f32(data: &mut [f32], width: usize, height: usize, channels: usize, sigma: f32) {
    if sigma <= 0.0 {
        return;
    }
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0f64;
    for i in -radius..=radius {
        let x = i as f64 / sigma as f64;
        let v = (-0.5 * x * x).exp();
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }

    let mut tmp = vec![0.0f32; data.len()];
    // Horizontal pass.
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sc = (c as i64 + ki as i64 - radius).clamp(0, width as i64 - 1) as usize;
                    acc += kv * data[(r * width + sc) * channels + ch] as f64;
                }
                tmp[(r * width + c) * channels + ch] = acc as f32;
            }
        }
    }
    // Vertical pass.
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                let mut acc = 0.0f64;
                for (ki, kv) in kernel.iter().enumerate() {
                    let sr = (r as i64 + ki as i64 - radius).clamp(0, height as i64 - 1) as usize;
                    acc += kv * tmp[(sr * width + c) * channels + ch] as f64;
                }
                data[(r * width + c) * channels + ch] = acc as f32;
            }
        }
    }
}
