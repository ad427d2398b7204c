//! Applying sampling tensors to images and label maps, and resizing tensors.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{ImageBuffer, LabelMap, PixelGrid};
use crate::solver::SamplingTensor;

/// Result of sampling an image: `C x h x w` values plus the tensor used.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledImage {
    channels: usize,
    values: Vec<f64>,
    source_tensor: SamplingTensor,
}

impl SampledImage {
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid_h(&self) -> usize {
        self.source_tensor.grid_h()
    }

    pub fn grid_w(&self) -> usize {
        self.source_tensor.grid_w()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source_tensor(&self) -> &SamplingTensor {
        &self.source_tensor
    }

    #[inline]
    pub fn get(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.values[(channel * self.grid_h() + i) * self.grid_w() + j]
    }

    /// The samples as an image buffer on the `h x w` grid.
    pub fn to_image(&self) -> Result<ImageBuffer> {
        let grid = PixelGrid::new(self.grid_h(), self.grid_w())?;
        ImageBuffer::new(grid, self.channels, self.values.clone())
    }
}

/// Flat source-pixel index for every sampling location, row-major over the tensor.
fn nearest_indices(grid: PixelGrid, phi: &SamplingTensor) -> Vec<usize> {
    let (h, w) = phi.shape();
    let mut out = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let [u, v] = phi.point(i, j);
            // feasible tensors never hold NaN
            let (r, c) = grid.nearest_pixel(u, v).expect("finite sampling coordinate");
            out.push(grid.index(r, c));
        }
    }
    out
}

/// `J_ij = I[phi_ij]`: nearest-pixel lookup at every sampling location.
pub fn sample_image(image: &ImageBuffer, phi: &SamplingTensor) -> SampledImage {
    let idx = nearest_indices(image.grid(), phi);
    let plane = image.grid().len();
    let mut values = Vec::with_capacity(image.channels() * idx.len());
    for c in 0..image.channels() {
        let channel = &image.values()[c * plane..(c + 1) * plane];
        values.extend(idx.iter().map(|&p| channel[p]));
    }
    SampledImage { channels: image.channels(), values, source_tensor: phi.clone() }
}

/// Nearest-pixel label lookup; class ids are never blended.
pub fn sample_labels(labels: &LabelMap, phi: &SamplingTensor) -> LabelMap {
    let idx = nearest_indices(labels.grid(), phi);
    let grid = PixelGrid::new(phi.grid_h(), phi.grid_w()).expect("tensor sides are at least 2");
    let out = idx.iter().map(|&p| labels.labels()[p]).collect();
    LabelMap::new(grid, out, labels.ignore_id()).expect("one label per location")
}

/// Bilinear resize with aligned corners: output `(i, j)` reads the input
/// field at `(i / (new_h - 1), j / (new_w - 1))`. Border lines map onto border
/// lines, so the covering constraints survive exactly.
pub fn resize_tensor(phi: &SamplingTensor, new_h: usize, new_w: usize) -> Result<SamplingTensor> {
    if new_h < 2 {
        return Err(Error::Size { what: "resized tensor height", value: new_h });
    }
    if new_w < 2 {
        return Err(Error::Size { what: "resized tensor width", value: new_w });
    }
    let (h, w) = phi.shape();
    if (h, w) == (new_h, new_w) {
        return Ok(phi.clone());
    }
    let rows: Vec<(usize, f64)> = (0..new_h).map(|i| source_position(i, new_h, h)).collect();
    let cols: Vec<(usize, f64)> = (0..new_w).map(|j| source_position(j, new_w, w)).collect();
    let mut out = Vec::with_capacity(2 * new_h * new_w);
    for c in 0..2 {
        for &(r0, tr) in &rows {
            for &(c0, tc) in &cols {
                let top = lerp(phi.get(c, r0, c0), phi.get(c, r0, c0 + 1), tc);
                let bottom = lerp(phi.get(c, r0 + 1, c0), phi.get(c, r0 + 1, c0 + 1), tc);
                out.push(lerp(top, bottom, tr).clamp(0.0, 1.0));
            }
        }
    }
    SamplingTensor::from_values(new_h, new_w, out)
}

/// Lower source cell index and fractional offset for output index `k`.
fn source_position(k: usize, new_len: usize, len: usize) -> (usize, f64) {
    // exact integer numerator keeps the last output on the last input
    let pos = (k * (len - 1)) as f64 / (new_len - 1) as f64;
    let cell = (libm::floor(pos) as usize).min(len - 2);
    (cell, pos - cell as f64)
}

/// `a + t (b - a)`; returns `a` unchanged when `a == b`.
#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}
