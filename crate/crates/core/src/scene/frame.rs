//! Synthetic video frames: one filled disk per source on a dark background,
//! stored as binary PPM (P6).

use std::path::Path;

use super::SceneDescriptor;
use crate::{Error, Result};

/// Per-class RGB colors; class ids wrap around.
pub const PALETTE: [[f32; 3]; 8] = [
    [0.90, 0.20, 0.20],
    [0.20, 0.75, 0.25],
    [0.25, 0.40, 0.95],
    [0.95, 0.85, 0.20],
    [0.80, 0.30, 0.85],
    [0.20, 0.85, 0.85],
    [0.95, 0.55, 0.15],
    [0.85, 0.85, 0.85],
];

const BACKGROUND: [f32; 3] = [0.08, 0.08, 0.10];

/// `height × width` RGB image with values in `[0, 1]`, stored row-major, channel-last.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameImage {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FrameImage {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("frame dimensions must be positive"));
        }
        if data.len() != height * width * 3 {
            return Err(Error::shape(format!(
                "{height}x{width} frame given {} values",
                data.len()
            )));
        }
        if data.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::format("frame", "pixel values must lie in [0, 1]"));
        }
        Ok(FrameImage { height, width, data })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let data = (0..height * width).flat_map(|_| rgb).collect();
        FrameImage { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, row: usize, col: usize) -> [f32; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, row: usize, col: usize, rgb: [f32; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Mirror image about the vertical axis.
    pub fn flip_horizontal(&self) -> FrameImage {
        let mut out = self.clone();
        for r in 0..self.height {
            for c in 0..self.width {
                out.set_pixel(r, self.width - 1 - c, self.pixel(r, c));
            }
        }
        out
    }

    /// Per-channel mean color.
    pub fn mean_color(&self) -> [f32; 3] {
        let mut acc = [0.0f64; 3];
        for px in self.data.chunks_exact(3) {
            for k in 0..3 {
                acc[k] += px[k] as f64;
            }
        }
        let n = (self.height * self.width) as f64;
        acc.map(|v| (v / n) as f32)
    }

    /// Copy with the rectangle `[row, row+size) × [col, col+size)` (clipped) painted `rgb`.
    pub fn occluded(&self, row: usize, col: usize, size: usize, rgb: [f32; 3]) -> FrameImage {
        let mut out = self.clone();
        for r in row..(row + size).min(self.height) {
            for c in col..(col + size).min(self.width) {
                out.set_pixel(r, c, rgb);
            }
        }
        out
    }

    /// Channel-first copy `[3, H, W]`.
    pub fn to_chw(&self) -> Vec<f32> {
        let plane = self.height * self.width;
        let mut out = vec![0.0; 3 * plane];
        for (p, px) in self.data.chunks_exact(3).enumerate() {
            for k in 0..3 {
                out[k * plane + p] = px[k];
            }
        }
        out
    }

    /// Binary PPM with maxval 255.
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.data.iter().map(|v| (v * 255.0).round() as u8));
        out
    }

    pub fn from_ppm(bytes: &[u8]) -> Result<FrameImage> {
        let mut pos = 0;
        let magic = ppm_token(bytes, &mut pos)?;
        if magic != b"P6" {
            return Err(Error::format("ppm", "expected P6 magic"));
        }
        let width = ppm_number(bytes, &mut pos)?;
        let height = ppm_number(bytes, &mut pos)?;
        let maxval = ppm_number(bytes, &mut pos)?;
        if !(1..=255).contains(&maxval) {
            return Err(Error::format("ppm", format!("unsupported maxval {maxval}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::format("ppm", "zero-sized image"));
        }
        // exactly one whitespace byte separates the header from the raster
        match bytes.get(pos) {
            Some(b) if b.is_ascii_whitespace() => pos += 1,
            _ => return Err(Error::format("ppm", "missing raster separator")),
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(3))
            .ok_or_else(|| Error::format("ppm", "dimensions overflow"))?;
        let raster = &bytes[pos..];
        if raster.len() != expected {
            return Err(Error::format(
                "ppm",
                format!("raster has {} bytes, header implies {expected}", raster.len()),
            ));
        }
        let scale = maxval as f32;
        let data = raster.iter().map(|&b| (b as f32 / scale).min(1.0)).collect();
        FrameImage::new(height, width, data)
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(Error::at_path(path))
    }

    pub fn read_ppm(path: impl AsRef<Path>) -> Result<FrameImage> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(Error::at_path(path))?;
        FrameImage::from_ppm(&bytes)
    }
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(_) => break,
            None => return Err(Error::format("ppm", "truncated header")),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#') {
        *pos += 1;
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    let tok = ppm_token(bytes, pos)?;
    if tok.is_empty() || tok.len() > 9 || !tok.iter().all(u8::is_ascii_digit) {
        return Err(Error::format(
            "ppm",
            format!("bad header field {:?}", String::from_utf8_lossy(tok)),
        ));
    }
    Ok(std::str::from_utf8(tok)
        .expect("ascii digits")
        .parse()
        .expect("at most 9 digits"))
}

/// Center `(x, y)` and radius, in pixels, of the disk drawn for a source at
/// `azimuth_deg`.
pub fn disk_geometry(azimuth_deg: f64, height: usize, width: usize) -> (f64, f64, f64) {
    (
        width as f64 * (azimuth_deg + 90.0) / 180.0,
        height as f64 / 2.0,
        width as f64 / 16.0,
    )
}

/// Paints each source as a disk of radius `W/16` centered at
/// `(W·(θ+90)/180, H/2)`, colored by class. Later sources are drawn on top.
pub fn render_frame(scene: &SceneDescriptor, height: usize, width: usize) -> FrameImage {
    let mut img = FrameImage::filled(height, width, BACKGROUND);
    for s in &scene.sources {
        let (cx, cy, radius) = disk_geometry(s.azimuth_deg, height, width);
        let color = PALETTE[s.class_id as usize % PALETTE.len()];
        for r in 0..height {
            for c in 0..width {
                let dx = c as f64 + 0.5 - cx;
                let dy = r as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= radius * radius {
                    img.set_pixel(r, c, color);
                }
            }
        }
    }
    img
}
