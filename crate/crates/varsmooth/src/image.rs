//! Grayscale image buffers with PGM/CSV round trips, synthetic test images,
//! and seeded gaussian noise.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Row-major grayscale image, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    pixels: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    PiecewiseConstant,
    Checkerboard,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        Self::from_vector(height, width, DVector::from_vec(pixels))
    }

    pub fn from_vector(height: usize, width: usize, pixels: DVector<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if pixels.len() != height * width {
            return Err(Error::Dimension {
                context: "image pixels",
                expected: height * width,
                got: pixels.len(),
            });
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("image has non-finite pixels".into()));
        }
        Ok(ImageBuffer {
            height,
            width,
            pixels,
        })
    }

    pub fn constant(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::from_vector(height, width, DVector::from_element(height * width, value))
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &DVector<f64> {
        &self.pixels
    }

    pub fn pixel(&self, i: usize, j: usize) -> f64 {
        self.pixels[i * self.width + j]
    }

    /// Additive i.i.d. gaussian noise from a seeded generator; the result is
    /// not clamped (the downstream optimization problems are unconstrained).
    pub fn with_gaussian_noise(&self, sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("noise sigma must be >= 0, got {sigma}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Config(format!("invalid noise parameters: {e}")))?;
        let pixels = self.pixels.map(|v| v + normal.sample(&mut rng));
        Self::from_vector(self.height, self.width, pixels)
    }

    pub fn clamped_unit(&self) -> Self {
        ImageBuffer {
            height: self.height,
            width: self.width,
            pixels: self.pixels.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    /// Binary PGM (P5), maxval 255, linear quantization of `[0, 1]` with
    /// values clamped into range.
    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(file, "P5\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self
            .pixels
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        file.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_pgm(path: &Path) -> Result<Self> {
        let mut data = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut data)?;
        let bad = |msg: &str| Error::Config(format!("{}: {msg}", path.display()));

        let mut pos = 0usize;
        let mut token = |data: &[u8]| -> Result<String> {
            // skip whitespace and `#` comments
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    break;
                }
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::Config("unexpected end of pgm header".into()));
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };

        if token(&data)? != "P5" {
            return Err(bad("not a binary (P5) pgm file"));
        }
        let width: usize = token(&data)?.parse().map_err(|_| bad("bad width"))?;
        let height: usize = token(&data)?.parse().map_err(|_| bad("bad height"))?;
        let maxval: u32 = token(&data)?.parse().map_err(|_| bad("bad maxval"))?;
        if maxval == 0 || maxval > 255 {
            return Err(bad("maxval must be in 1..=255"));
        }
        pos += 1; // single whitespace byte after maxval
        let need = width * height;
        if data.len() < pos + need {
            return Err(bad("truncated pixel data"));
        }
        let pixels: Vec<f64> = data[pos..pos + need]
            .iter()
            .map(|&b| b as f64 / maxval as f64)
            .collect();
        Self::new(height, width, pixels)
    }

    /// One CSV row per image row; floats use the shortest round-trip
    /// representation, so CSV round trips are lossless.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|j| format!("{}", self.pixel(i, j)))
                .collect();
            writeln!(file, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|c| c.trim().parse::<f64>()).collect();
            let row = row.map_err(|e| {
                Error::Config(format!("{}: line {}: {e}", path.display(), lineno + 1))
            })?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(Error::Config(format!(
                        "{}: ragged row at line {}",
                        path.display(),
                        lineno + 1
                    )));
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Config(format!("{}: empty image", path.display())));
        }
        let (h, w) = (rows.len(), rows[0].len());
        Self::new(h, w, rows.into_iter().flatten().collect())
    }
}

/// Deterministic synthetic test images; the same seed always yields the same
/// buffer.
pub fn generate_synthetic_image(
    kind: SyntheticKind,
    height: usize,
    width: usize,
    seed: u64,
) -> Result<ImageBuffer> {
    if height < 2 || width < 2 {
        return Err(Error::Config(format!(
            "synthetic images need height, width >= 2, got {height}x{width}"
        )));
    }
    match kind {
        SyntheticKind::Checkerboard => {
            let pixels: Vec<f64> = (0..height * width)
                .map(|idx| {
                    let (i, j) = (idx / width, idx % width);
                    ((i + j) % 2) as f64
                })
                .collect();
            ImageBuffer::new(height, width, pixels)
        }
        SyntheticKind::PiecewiseConstant => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let background = rng.random_range(0.05..0.25);
            let mut img = ImageBuffer::constant(height, width, background)?;
            // a few bright axis-aligned rectangles on a dark background keeps
            // the gradient field sparse and the edges well separated from
            // typical noise levels
            for _ in 0..4 {
                let rh = rng.random_range(height / 6..=height / 2).max(1);
                let rw = rng.random_range(width / 6..=width / 2).max(1);
                let top = rng.random_range(0..height - rh + 1);
                let left = rng.random_range(0..width - rw + 1);
                let value = rng.random_range(0.5..0.95);
                for i in top..top + rh {
                    for j in left..left + rw {
                        img.pixels[i * width + j] = value;
                    }
                }
            }
            Ok(img)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::LinearOperator;

    #[test]
    fn checkerboard_two_by_two() {
        let img = generate_synthetic_image(SyntheticKind::Checkerboard, 2, 2, 0).unwrap();
        assert_eq!(img.pixels().as_slice(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        let a = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 16, 16, 7).unwrap();
        let b = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 16, 16, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 16, 16, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn piecewise_constant_has_sparse_gradient() {
        let img = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 32, 32, 7).unwrap();
        let grad = LinearOperator::grad2d(32, 32).unwrap();
        let g = grad.apply(img.pixels()).unwrap();
        let zeros = g.iter().filter(|v| **v == 0.0).count();
        assert!(
            zeros as f64 > 0.8 * g.len() as f64,
            "only {zeros}/{} gradient entries are zero",
            g.len()
        );
        assert!(img.pixels().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn noise_is_seed_reproducible() {
        let img = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 8, 8, 3).unwrap();
        let n1 = img.with_gaussian_noise(0.1, 42).unwrap();
        let n2 = img.with_gaussian_noise(0.1, 42).unwrap();
        assert_eq!(n1, n2);
        assert_ne!(n1, img.with_gaussian_noise(0.1, 43).unwrap());
    }

    #[test]
    fn pgm_roundtrip_quantizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        let img = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 5, 7, 1).unwrap();
        img.write_pgm(&path).unwrap();
        let back = ImageBuffer::read_pgm(&path).unwrap();
        assert_eq!((back.height(), back.width()), (5, 7));
        for (a, b) in img.pixels().iter().zip(back.pixels().iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn csv_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.csv");
        let img = generate_synthetic_image(SyntheticKind::PiecewiseConstant, 6, 4, 2)
            .unwrap()
            .with_gaussian_noise(0.2, 5)
            .unwrap();
        img.write_csv(&path).unwrap();
        let back = ImageBuffer::read_csv(&path).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn invalid_buffers_rejected() {
        assert!(ImageBuffer::new(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::new(2, 2, vec![0.0, 0.0, f64::NAN, 0.0]).is_err());
        assert!(generate_synthetic_image(SyntheticKind::Checkerboard, 1, 5, 0).is_err());
    }
}
