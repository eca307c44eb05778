//! Dense image containers and the on-disk formats: 8-bit PNG for color
//! (mapped to [0,1]) and single-channel 32-bit PFM for depth/alpha grids.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(#[from] image::ImageError),
    #[error("bad PFM header: {0}")]
    BadPfmHeader(String),
    #[error("PFM payload truncated: expected {expected} floats, got {got}")]
    PfmTruncated { expected: usize, got: usize },
}

/// Row-major RGB image with values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width * 3] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let mut img = Self::new(height, width);
        for r in 0..height {
            for c in 0..width {
                img.set(r, c, f(r, c));
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> [f64; 3] {
        let i = (row * self.width + col) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, rgb: [f64; 3]) {
        let i = (row * self.width + col) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
        let mut buf = image::RgbImage::new(self.width as u32, self.height as u32);
        for r in 0..self.height {
            for c in 0..self.width {
                let px = self.get(r, c);
                let to_u8 = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                buf.put_pixel(c as u32, r as u32, image::Rgb([to_u8(px[0]), to_u8(px[1]), to_u8(px[2])]));
            }
        }
        buf.save(path)?;
        Ok(())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImageIoError> {
        let buf = image::open(path)?.into_rgb8();
        let (w, h) = (buf.width() as usize, buf.height() as usize);
        let mut img = Self::new(h, w);
        for r in 0..h {
            for c in 0..w {
                let px = buf.get_pixel(c as u32, r as u32);
                img.set(r, c, [
                    px[0] as f64 / 255.0,
                    px[1] as f64 / 255.0,
                    px[2] as f64 / 255.0,
                ]);
            }
        }
        Ok(img)
    }
}

/// Row-major single-channel grid (depth, alpha, match scores).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut g = Self::new(height, width);
        for r in 0..height {
            for c in 0..width {
                g.set(r, c, f(r, c));
            }
        }
        g
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.data[row * self.width + col] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Writes a grayscale PFM ("Pf", little-endian, bottom-up rows).
    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<(), ImageIoError> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "Pf\n{} {}\n-1.0\n", self.width, self.height)?;
        for r in (0..self.height).rev() {
            for c in 0..self.width {
                out.write_all(&(self.get(r, c) as f32).to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Self, ImageIoError> {
        let mut reader = BufReader::new(File::open(path)?);
        let magic = read_pfm_token(&mut reader)?;
        if magic != "Pf" {
            return Err(ImageIoError::BadPfmHeader(format!(
                "expected grayscale magic 'Pf', got '{magic}'"
            )));
        }
        let parse = |tok: String| {
            tok.parse::<f64>()
                .map_err(|_| ImageIoError::BadPfmHeader(format!("bad numeric field '{tok}'")))
        };
        let w = parse(read_pfm_token(&mut reader)?)? as usize;
        let h = parse(read_pfm_token(&mut reader)?)? as usize;
        let scale = parse(read_pfm_token(&mut reader)?)?;
        if w == 0 || h == 0 {
            return Err(ImageIoError::BadPfmHeader("zero image dimension".into()));
        }
        let little_endian = scale < 0.0;

        let mut payload = Vec::new();
        reader.read_to_end(&mut payload)?;
        let expected = w * h;
        if payload.len() < expected * 4 {
            return Err(ImageIoError::PfmTruncated { expected, got: payload.len() / 4 });
        }
        let mut grid = Self::new(h, w);
        let mut idx = 0;
        for r in (0..h).rev() {
            for c in 0..w {
                let bytes: [u8; 4] = payload[idx..idx + 4].try_into().unwrap();
                let v = if little_endian {
                    f32::from_le_bytes(bytes)
                } else {
                    f32::from_be_bytes(bytes)
                };
                grid.set(r, c, v as f64);
                idx += 4;
            }
        }
        Ok(grid)
    }
}

/// Reads one whitespace-delimited PFM header token.
fn read_pfm_token(reader: &mut impl BufRead) -> Result<String, ImageIoError> {
    let mut tok = Vec::new();
    loop {
        let mut byte = [0u8; 1];
        match reader.read_exact(&mut byte) {
            Ok(()) => {}
            Err(e) => {
                return if tok.is_empty() {
                    Err(ImageIoError::BadPfmHeader(format!("unexpected end of header: {e}")))
                } else {
                    Ok(String::from_utf8_lossy(&tok).into_owned())
                };
            }
        }
        if byte[0].is_ascii_whitespace() {
            if !tok.is_empty() {
                return Ok(String::from_utf8_lossy(&tok).into_owned());
            }
        } else {
            tok.push(byte[0]);
        }
    }
}

/// Mean absolute difference between two same-shaped images.
pub fn mean_abs_diff(a: &Image, b: &Image) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let n = a.data().len() as f64;
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n
}
