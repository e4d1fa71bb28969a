//! Real and complex 2-D grids and the latent tensor built from them.
//!
//! Grids are stored row-major. Row index is the first coordinate
//! everywhere (`p1` in the line model), column index the second.

mod fourier;
mod resample;
mod stats;

pub use fourier::{center_shift, dft2, idft2, idft2_with_tolerance, uncenter_shift, IDFT_IMAG_TOLERANCE};
pub use resample::{crop_center, pad_center, resize, gamma, rotate, sin_cos_deg, zoom_about_center, Interp};
pub use stats::{mean, normalize_unit, pearson, population_std};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real-valued grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl Grid2D {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::UnsupportedShape(format!("{height}x{width} grid")));
        }
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite value at cell {i}")));
        }
        Ok(Self { height, width, values })
    }

    /// Builds a grid from values already known to be finite and correctly sized.
    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self { height, width, values }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self::from_raw(height, width, vec![value; height * width])
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self::from_raw(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_raw(self.height, self.width, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn max_abs_diff(&self, other: &Grid2D) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Complex-valued grid, typically a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexGrid2D {
    height: usize,
    width: usize,
    values: Vec<Complex64>,
}

impl ComplexGrid2D {
    pub fn new(height: usize, width: usize, values: Vec<Complex64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::UnsupportedShape(format!("{height}x{width} grid")));
        }
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite spectrum value".into()));
        }
        Ok(Self { height, width, values })
    }

    pub(crate) fn from_raw(height: usize, width: usize, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), height * width);
        Self { height, width, values }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::from_raw(height, width, vec![Complex64::new(0.0, 0.0); height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.values[row * self.width + col] = v;
    }

    pub fn magnitudes(&self) -> Grid2D {
        Grid2D::from_raw(self.height, self.width, self.values.iter().map(|v| v.norm()).collect())
    }

    /// Largest `|G(k) - conj(G(-k))|` over all bins; zero for spectra of real grids.
    pub fn conjugate_symmetry_residue(&self) -> f64 {
        let (h, w) = self.dims();
        let mut worst = 0.0f64;
        for r in 0..h {
            for c in 0..w {
                let mirror = self.get((h - r) % h, (w - c) % w).conj();
                worst = worst.max((self.get(r, c) - mirror).norm());
            }
        }
        worst
    }
}

/// An `h x w x c` latent, one grid per channel. Square by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentTensor {
    channels: Vec<Grid2D>,
}

impl LatentTensor {
    pub fn new(channels: Vec<Grid2D>) -> Result<Self> {
        let first = channels
            .first()
            .ok_or_else(|| Error::UnsupportedShape("latent needs at least one channel".into()))?;
        let dims = first.dims();
        if dims.0 != dims.1 {
            return Err(Error::UnsupportedShape(format!(
                "latent must be square, got {}x{}",
                dims.0, dims.1
            )));
        }
        if let Some(bad) = channels.iter().find(|g| g.dims() != dims) {
            return Err(Error::ShapeMismatch(format!(
                "channel is {:?}, expected {:?}",
                bad.dims(),
                dims
            )));
        }
        Ok(Self { channels })
    }

    pub fn zeros(size: usize, channels: usize) -> Self {
        Self { channels: vec![Grid2D::zeros(size, size); channels] }
    }

    /// Builds a latent from channel-major values (`c`, then rows, then columns).
    pub fn from_values(size: usize, channels: usize, values: Vec<f64>) -> Result<Self> {
        let plane = size * size;
        if values.len() != plane * channels {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {size}x{size}x{channels} latent",
                values.len()
            )));
        }
        let grids = values
            .chunks(plane)
            .map(|chunk| Grid2D::new(size, size, chunk.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grids)
    }

    pub fn size(&self) -> usize {
        self.channels[0].height()
    }

    pub fn height(&self) -> usize {
        self.channels[0].height()
    }

    pub fn width(&self) -> usize {
        self.channels[0].width()
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    /// `(h, w, c)`
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height(), self.width(), self.num_channels())
    }

    pub fn len(&self) -> usize {
        self.height() * self.width() * self.num_channels()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> &[Grid2D] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &Grid2D {
        &self.channels[i]
    }

    pub fn channels_mut(&mut self) -> &mut [Grid2D] {
        &mut self.channels
    }

    pub fn into_channels(self) -> Vec<Grid2D> {
        self.channels
    }

    /// Channel-major flattening.
    pub fn to_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for ch in &self.channels {
            out.extend_from_slice(ch.values());
        }
        out
    }

    pub fn map_channels(&self, f: impl Fn(&Grid2D) -> Grid2D) -> Self {
        Self { channels: self.channels.iter().map(f).collect() }
    }

    pub fn try_map_channels(&self, f: impl Fn(usize, &Grid2D) -> Result<Grid2D>) -> Result<Self> {
        let channels = self
            .channels
            .iter()
            .enumerate()
            .map(|(i, g)| f(i, g))
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map_channels(|g| g.map(|v| v * k))
    }

    /// `self * a + other * b`, elementwise.
    pub fn axpby(&self, a: f64, other: &LatentTensor, b: f64) -> Self {
        assert_eq!(self.shape(), other.shape());
        let channels = self
            .channels
            .iter()
            .zip(&other.channels)
            .map(|(x, y)| {
                let values = x.values().iter().zip(y.values()).map(|(u, v)| a * u + b * v).collect();
                Grid2D::from_raw(x.height(), x.width(), values)
            })
            .collect();
        Self { channels }
    }

    pub fn max_abs_diff(&self, other: &LatentTensor) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.channels
            .iter()
            .zip(&other.channels)
            .map(|(a, b)| a.max_abs_diff(b))
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.channels.iter().all(Grid2D::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_rejects_bad_shapes_and_values() {
        assert!(matches!(Grid2D::new(0, 3, vec![]), Err(Error::UnsupportedShape(_))));
        assert!(matches!(Grid2D::new(2, 2, vec![1.0; 3]), Err(Error::ShapeMismatch(_))));
        assert!(matches!(
            Grid2D::new(1, 2, vec![1.0, f64::NAN]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn latent_requires_square_matching_channels() {
        let a = Grid2D::zeros(4, 4);
        let b = Grid2D::zeros(4, 2);
        assert!(LatentTensor::new(vec![b.clone()]).is_err());
        assert!(LatentTensor::new(vec![a.clone(), Grid2D::zeros(2, 2)]).is_err());
        assert!(LatentTensor::new(vec![]).is_err());
        let t = LatentTensor::new(vec![a.clone(), a]).unwrap();
        assert_eq!(t.shape(), (4, 4, 2));
    }

    #[test]
    fn latent_value_roundtrip_is_channel_major() {
        let values: Vec<f64> = (0..2 * 3 * 3).map(|i| i as f64).collect();
        let t = LatentTensor::from_values(3, 2, values.clone()).unwrap();
        assert_eq!(t.channel(1).get(0, 0), 9.0);
        assert_eq!(t.to_values(), values);
    }
}
