//! Image buffers, masks, kernels and the numeric routines shared by every
//! other module.
//!
//! Pixel values are `f64` intensities; decoded images are normalized to
//! `[0, 1]` by dividing by the maximum code value of their bit depth.
//! Storage is planar: channel `c` occupies
//! `data[c * width * height..(c + 1) * width * height]`, row-major.

mod color;
mod convolve;
pub mod io;

pub use color::{hsv_to_rgb, luminance, TransferMode, GAMMA};
pub use convolve::{fft_convolve, fft_size};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// All-zero image.
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        assert!(
            channels == 1 || channels == 3,
            "images have 1 or 3 channels, got {channels}"
        );
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::invalid("channels", format!("expected 1 or 3, got {channels}")));
        }
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} image needs {} values, got {}",
                width * height * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("data", format!("non-finite value at index {bad}")));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut image = Self::zeros(width, height, channels);
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    let v = f(x, y, c);
                    assert!(v.is_finite(), "non-finite value at ({x}, {y}, {c})");
                    image.data[(c * height + y) * width + x] = v;
                }
            }
        }
        image
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        debug_assert!(value.is_finite());
        self.data[(c * self.height + y) * self.width + x] = value;
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.width * self.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub(crate) fn ensure_same_shape(&self, other: &Image, what: &str) -> Result<()> {
        if self.same_dims(other) && self.channels == other.channels {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{what}: {}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    /// Per-pixel luminance `0.299 R + 0.587 G + 0.114 B`; single-channel
    /// images return their only plane.
    pub fn luminance(&self) -> Vec<f64> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let (r, g, b) = (self.plane(0), self.plane(1), self.plane(2));
        r.iter()
            .zip(g)
            .zip(b)
            .map(|((&r, &g), &b)| luminance(r, g, b))
            .collect()
    }

    /// Copy with one channel repeated to three; three-channel images are cloned.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image {
            width: self.width,
            height: self.height,
            channels: 3,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Image { data, ..*self }
    }

    /// `self += gain * other`, element-wise.
    pub fn add_scaled(&mut self, other: &Image, gain: f64) -> Result<()> {
        self.ensure_same_shape(other, "add_scaled")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += gain * b;
        }
        Ok(())
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.data.len(), other.data.len(), "shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Hex SHA-256 over the shape and the little-endian bit patterns of the
    /// samples. Two images share a digest only if they are bit-identical.
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        for dim in [self.width, self.height, self.channels] {
            hasher.update((dim as u64).to_le_bytes());
        }
        for v in &self.data {
            hasher.update(v.to_bits().to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }
}

/// Per-pixel boolean mask: `true` marks sky for sky masks and emitters for
/// light masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} mask needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self { width, height, bits }
    }

    /// Thresholds the luminance of `image` at 0.5.
    pub fn from_image(image: &Image) -> Self {
        Self::threshold(image, 0.5)
    }

    /// `true` where luminance is `>= threshold`.
    pub fn threshold(image: &Image, threshold: f64) -> Self {
        let bits = image.luminance().into_iter().map(|l| l >= threshold).collect();
        Self {
            width: image.width(),
            height: image.height(),
            bits,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn matches(&self, image: &Image) -> bool {
        self.width == image.width() && self.height == image.height()
    }

    pub fn to_image(&self) -> Image {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }
}

/// Square, odd-sized, non-negative convolution kernel. Row-major weights;
/// the center pixel sits at `(size / 2, size / 2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    size: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(size: usize, weights: Vec<f64>) -> Result<Self> {
        if size.is_multiple_of(2) {
            return Err(Error::invalid("size", format!("kernel size must be odd, got {size}")));
        }
        if weights.len() != size * size {
            return Err(Error::DimensionMismatch(format!(
                "{size}x{size} kernel needs {} weights, got {}",
                size * size,
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid(
                "weights",
                format!("weight {} at index {bad} is negative or non-finite", weights[bad]),
            ));
        }
        Ok(Self { size, weights })
    }

    /// 1x1 kernel with a single unit weight.
    pub fn identity() -> Self {
        Self {
            size: 1,
            weights: vec![1.0],
        }
    }

    pub fn from_fn(size: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut weights = Vec::with_capacity(size * size);
        for y in 0..size {
            for x in 0..size {
                weights.push(f(x, y));
            }
        }
        Self::new(size, weights)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn radius(&self) -> usize {
        self.size / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.weights[y * self.size + x]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Rescales to unit sum. A kernel with zero mass cannot be normalized.
    pub fn normalize(&mut self) -> Result<()> {
        let sum = self.sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Domain(format!("cannot normalize a kernel with sum {sum}")));
        }
        for w in &mut self.weights {
            *w /= sum;
        }
        Ok(())
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Horizontal and vertical cross-sections through the center pixel.
    pub fn cross_sections(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.radius();
        let horizontal = (0..self.size).map(|x| self.at(x, c)).collect();
        let vertical = (0..self.size).map(|y| self.at(c, y)).collect();
        (horizontal, vertical)
    }

    /// Mass in rows strictly above and strictly below the center row.
    pub fn vertical_mass_split(&self) -> (f64, f64) {
        let c = self.radius();
        let row_mass = |y: usize| -> f64 { self.weights[y * self.size..(y + 1) * self.size].iter().sum() };
        let above = (0..c).map(row_mass).sum();
        let below = (c + 1..self.size).map(row_mass).sum();
        (above, below)
    }
}

/// Bilinear interpolation of kernel weights at continuous pixel coordinates
/// `(u, v)` (column, row). Coordinates outside `[0, size - 1]^2` give 0.
pub fn sample_bilinear(kernel: &Kernel, u: f64, v: f64) -> f64 {
    let last = (kernel.size - 1) as f64;
    if !(u >= 0.0 && v >= 0.0 && u <= last && v <= last) {
        return 0.0;
    }
    if kernel.size == 1 {
        return kernel.weights[0];
    }
    // Upper cell index is capped so u == last interpolates within the final cell.
    let x0 = (u.floor() as usize).min(kernel.size - 2);
    let y0 = (v.floor() as usize).min(kernel.size - 2);
    let fx = u - x0 as f64;
    let fy = v - y0 as f64;
    let w00 = kernel.at(x0, y0);
    let w10 = kernel.at(x0 + 1, y0);
    let w01 = kernel.at(x0, y0 + 1);
    let w11 = kernel.at(x0 + 1, y0 + 1);
    let top = w00 * (1.0 - fx) + w10 * fx;
    let bottom = w01 * (1.0 - fx) + w11 * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_kernel() -> Kernel {
        Kernel::from_fn(5, |x, y| (x * 5 + y) as f64).unwrap()
    }

    #[test]
    fn image_rejects_bad_lengths_and_nan() {
        assert!(Image::from_vec(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(Image::from_vec(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(Image::from_vec(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(Image::from_vec(2, 1, 3, vec![0.5; 6]).is_ok());
    }

    #[test]
    fn planar_layout() {
        let img = Image::from_fn(3, 2, 3, |x, y, c| (c * 100 + y * 10 + x) as f64);
        assert_eq!(img.get(2, 1, 2), 212.0);
        assert_eq!(img.plane(1)[3 + 2], 112.0);
    }

    #[test]
    fn kernel_invariants() {
        assert!(Kernel::new(4, vec![0.0; 16]).is_err());
        assert!(Kernel::new(3, vec![-1.0; 9]).is_err());
        let mut k = Kernel::new(3, vec![2.0; 9]).unwrap();
        k.normalize().unwrap();
        assert!((k.sum() - 1.0).abs() <= 1e-9);
        assert!(Kernel::new(3, vec![0.0; 9]).unwrap().normalize().is_err());
    }

    #[test]
    fn bilinear_at_nodes_is_exact() {
        let k = ramp_kernel();
        for y in 0..5 {
            for x in 0..5 {
                assert_eq!(sample_bilinear(&k, x as f64, y as f64), k.at(x, y));
            }
        }
    }

    #[test]
    fn bilinear_midpoint_of_equal_weights() {
        let k = Kernel::new(3, vec![0.25; 9]).unwrap();
        assert_eq!(sample_bilinear(&k, 0.5, 1.0), 0.25);
        assert_eq!(sample_bilinear(&k, 1.5, 1.5), 0.25);
    }

    #[test]
    fn bilinear_outside_domain_is_zero() {
        let k = ramp_kernel();
        assert_eq!(sample_bilinear(&k, -1.0, 0.0), 0.0);
        assert_eq!(sample_bilinear(&k, 0.0, 4.0001), 0.0);
        assert_eq!(sample_bilinear(&k, f64::NAN, 1.0), 0.0);
    }

    #[test]
    fn mass_split_of_delta_is_empty() {
        let k = Kernel::identity();
        assert_eq!(k.vertical_mass_split(), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn bilinear_is_lipschitz_in_the_interior(
            weights in proptest::collection::vec(0.0f64..1.0, 25),
            u in 0.0f64..3.9,
            v in 0.0f64..4.0,
            eps in 0.0f64..0.1,
        ) {
            let k = Kernel::new(5, weights).unwrap();
            let max_step = (0..5)
                .flat_map(|y| (0..4).map(move |x| (x, y)))
                .map(|(x, y)| (k.at(x + 1, y) - k.at(x, y)).abs())
                .fold(0.0, f64::max);
            let delta = (sample_bilinear(&k, u + eps, v) - sample_bilinear(&k, u, v)).abs();
            prop_assert!(delta <= eps * max_step + 1e-12);
        }
    }
}
