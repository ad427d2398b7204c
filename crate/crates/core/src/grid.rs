//! Pixel grids, the relative coordinate convention, and the dense containers
//! (images, label maps, score maps) shared by every other module.
//!
//! Coordinates are relative: pixel `(row, col)` of an `H x W` grid sits at
//! `(row / (H - 1), col / (W - 1))`, so the pixel centers span the unit square
//! exactly. Coordinate 0 always addresses rows, coordinate 1 columns. Indices in
//! the Rust API are 0-based.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Class identifier stored in a label map.
pub type ClassId = u32;

/// A point in relative coordinates, `[row, col]`.
pub type Point = [f64; 2];

/// Height and width of a pixel grid covering `[0, 1]^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelGrid {
    height: usize,
    width: usize,
}

impl PixelGrid {
    /// Both sides must be at least 2; the coordinate map divides by `H - 1` and `W - 1`.
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height < 2 {
            return Err(Error::Size { what: "grid height", value: height });
        }
        if width < 2 {
            return Err(Error::Size { what: "grid width", value: width });
        }
        Ok(PixelGrid { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    /// Relative coordinates of pixel `(row, col)`.
    pub fn coord_of(&self, row: usize, col: usize) -> Result<Point> {
        if row >= self.height || col >= self.width {
            return Err(Error::Index { row, col, height: self.height, width: self.width });
        }
        Ok([axis_coord(row, self.height), axis_coord(col, self.width)])
    }

    /// The pixel whose coordinates are closest to `(u, v)`.
    ///
    /// Equidistant candidates resolve to the smaller row, then the smaller
    /// column. Coordinates outside `[0, 1]` are clamped onto the square.
    pub fn nearest_pixel(&self, u: f64, v: f64) -> Result<(usize, usize)> {
        if u.is_nan() || v.is_nan() {
            return Err(Error::Domain("NaN coordinate"));
        }
        Ok((nearest_on_axis(u, self.height), nearest_on_axis(v, self.width)))
    }
}

#[inline]
pub(crate) fn axis_coord(index: usize, len: usize) -> f64 {
    index as f64 / (len - 1) as f64
}

/// Nearest index along one axis. Squared Euclidean distance separates per
/// axis, so the 2-D argmin (with the row-then-column tie-break) is the pair of
/// per-axis argmins with ties going to the smaller index.
///
/// Midpoints are detected on the scaled position `t * (len - 1)` with a few
/// ulps of slack, so a coordinate such as `i / (h - 1)` that is a midpoint in
/// exact arithmetic still resolves to the smaller index after rounding.
#[inline]
pub(crate) fn nearest_on_axis(t: f64, len: usize) -> usize {
    let last = len - 1;
    let s = t.clamp(0.0, 1.0) * last as f64;
    let k = (libm::floor(s) as usize).min(last);
    let slack = 8.0 * f64::EPSILON * (1.0 + s);
    if k < last && s - k as f64 > 0.5 + slack {
        k + 1
    } else {
        k
    }
}

/// Dense `C x H x W` image, channel-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    grid: PixelGrid,
    channels: usize,
    values: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(grid: PixelGrid, channels: usize, values: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::Size { what: "channel count", value: 0 });
        }
        if values.len() != channels * grid.len() {
            return Err(Error::Size { what: "image value count", value: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite image value"));
        }
        Ok(ImageBuffer { grid, channels, values })
    }

    pub fn filled(grid: PixelGrid, channels: usize, value: f64) -> Result<Self> {
        Self::new(grid, channels, vec![value; channels * grid.len()])
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f64 {
        self.values[channel * self.grid.len() + self.grid.index(row, col)]
    }
}

/// Dense `H x W` map of class ids with an optional ignore id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    grid: PixelGrid,
    labels: Vec<ClassId>,
    ignore_id: Option<ClassId>,
}

impl LabelMap {
    pub fn new(grid: PixelGrid, labels: Vec<ClassId>, ignore_id: Option<ClassId>) -> Result<Self> {
        if labels.len() != grid.len() {
            return Err(Error::Size { what: "label count", value: labels.len() });
        }
        Ok(LabelMap { grid, labels, ignore_id })
    }

    pub fn filled(grid: PixelGrid, class: ClassId, ignore_id: Option<ClassId>) -> Self {
        LabelMap { grid, labels: vec![class; grid.len()], ignore_id }
    }

    /// Builds a map by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(
        grid: PixelGrid,
        ignore_id: Option<ClassId>,
        mut f: impl FnMut(usize, usize) -> ClassId,
    ) -> Self {
        let mut labels = Vec::with_capacity(grid.len());
        for r in 0..grid.height() {
            for c in 0..grid.width() {
                labels.push(f(r, c));
            }
        }
        LabelMap { grid, labels, ignore_id }
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [ClassId] {
        &mut self.labels
    }

    pub fn ignore_id(&self) -> Option<ClassId> {
        self.ignore_id
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> ClassId {
        self.labels[self.grid.index(row, col)]
    }

    #[inline]
    pub fn is_ignored(&self, class: ClassId) -> bool {
        self.ignore_id == Some(class)
    }

    /// Largest non-ignored class id present, if any.
    pub fn max_class(&self) -> Option<ClassId> {
        self.labels.iter().copied().filter(|&c| !self.is_ignored(c)).max()
    }
}

/// Classes whose boundaries drive the sampling and the target-class metrics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TargetClassSet {
    ids: BTreeSet<ClassId>,
}

impl TargetClassSet {
    pub fn new(ids: impl IntoIterator<Item = ClassId>) -> Result<Self> {
        let ids: BTreeSet<ClassId> = ids.into_iter().collect();
        if ids.is_empty() {
            return Err(Error::Config("empty target class set"));
        }
        Ok(TargetClassSet { ids })
    }

    #[inline]
    pub fn contains(&self, class: ClassId) -> bool {
        self.ids.contains(&class)
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.ids.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Fails when the set names the label map's ignore id.
    pub fn check_against(&self, labels: &LabelMap) -> Result<()> {
        match labels.ignore_id() {
            Some(ignore) if self.contains(ignore) => {
                Err(Error::Config("target class set contains the ignore id"))
            }
            _ => Ok(()),
        }
    }
}

/// Per-class scores on an `h x w` grid, laid out `K x h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    grid_h: usize,
    grid_w: usize,
    num_classes: usize,
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(grid_h: usize, grid_w: usize, num_classes: usize, scores: Vec<f64>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::Size { what: "class count", value: 0 });
        }
        if scores.len() != num_classes * grid_h * grid_w {
            return Err(Error::Size { what: "score count", value: scores.len() });
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Domain("non-finite score"));
        }
        Ok(ScoreMap { grid_h, grid_w, num_classes, scores })
    }

    /// One-hot scores from hard labels. Labels equal to `ignore` (or outside
    /// `0..num_classes`) receive the uniform score `1 / K`.
    pub fn one_hot(
        grid_h: usize,
        grid_w: usize,
        num_classes: usize,
        labels: &[ClassId],
        ignore: Option<ClassId>,
    ) -> Result<Self> {
        let plane = grid_h * grid_w;
        if labels.len() != plane {
            return Err(Error::Size { what: "label count", value: labels.len() });
        }
        if num_classes == 0 {
            return Err(Error::Size { what: "class count", value: 0 });
        }
        let mut scores = vec![0.0; num_classes * plane];
        let uniform = 1.0 / num_classes as f64;
        for (p, &label) in labels.iter().enumerate() {
            if ignore == Some(label) || label as usize >= num_classes {
                for k in 0..num_classes {
                    scores[k * plane + p] = uniform;
                }
            } else {
                scores[label as usize * plane + p] = 1.0;
            }
        }
        Ok(ScoreMap { grid_h, grid_w, num_classes, scores })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    #[inline]
    pub fn get(&self, class: usize, row: usize, col: usize) -> f64 {
        self.scores[(class * self.grid_h + row) * self.grid_w + col]
    }

    /// Highest-scoring class at `(row, col)`; ties go to the lowest class id.
    pub fn argmax(&self, row: usize, col: usize) -> ClassId {
        let plane = self.grid_h * self.grid_w;
        let p = row * self.grid_w + col;
        let mut best = 0;
        let mut best_score = self.scores[p];
        for k in 1..self.num_classes {
            let s = self.scores[k * plane + p];
            if s > best_score {
                best = k;
                best_score = s;
            }
        }
        best as ClassId
    }

    /// Argmax at every location, as a label map on the score grid.
    pub fn argmax_labels(&self, ignore_id: Option<ClassId>) -> Result<LabelMap> {
        let grid = PixelGrid::new(self.grid_h, self.grid_w)?;
        Ok(LabelMap::from_fn(grid, ignore_id, |r, c| self.argmax(r, c)))
    }
}
