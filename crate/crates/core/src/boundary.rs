//! Semantic boundary maps and the nearest-boundary coordinate field.
//!
//! The nearest-boundary search is exact: distances are compared in integer
//! arithmetic after scaling both the pixel grid and the query grid onto a
//! common lattice, so ties resolve by the documented rule (smallest row, then
//! smallest column) instead of by floating-point noise.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{axis_coord, ClassId, LabelMap, PixelGrid, TargetClassSet};

/// Boolean boundary mask over a pixel grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundaryMap {
    grid: PixelGrid,
    mask: Vec<bool>,
}

impl BoundaryMap {
    pub fn new(grid: PixelGrid, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != grid.len() {
            return Err(Error::Size { what: "mask length", value: mask.len() });
        }
        Ok(BoundaryMap { grid, mask })
    }

    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[self.grid.index(row, col)]
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&m| m)
    }

    /// Boundary pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.grid.width();
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(move |(p, _)| (p / w, p % w))
    }
}

/// Boundary between target classes and anything else.
///
/// A pixel is marked when some 4-neighbor carries a different label, at least
/// one of the two labels is a target class, and neither is the ignore id. Both
/// sides of every transition are marked.
pub fn extract_boundary(labels: &LabelMap, targets: &TargetClassSet) -> Result<BoundaryMap> {
    targets.check_against(labels)?;
    Ok(extract_with(labels, |a, b| targets.contains(a) || targets.contains(b)))
}

/// Boundary between any two distinct non-ignored classes.
pub fn extract_boundary_all_classes(labels: &LabelMap) -> BoundaryMap {
    extract_with(labels, |_, _| true)
}

fn extract_with(labels: &LabelMap, relevant: impl Fn(ClassId, ClassId) -> bool) -> BoundaryMap {
    let grid = labels.grid();
    let (h, w) = grid.shape();
    let mut mask = vec![false; grid.len()];
    let mut visit = |p: usize, q: usize| {
        let (a, b) = (labels.labels()[p], labels.labels()[q]);
        if a != b && !labels.is_ignored(a) && !labels.is_ignored(b) && relevant(a, b) {
            mask[p] = true;
            mask[q] = true;
        }
    };
    for r in 0..h {
        for c in 0..w {
            let p = grid.index(r, c);
            if c + 1 < w {
                visit(p, p + 1);
            }
            if r + 1 < h {
                visit(p, p + w);
            }
        }
    }
    BoundaryMap { grid, mask }
}

/// Coordinates of the closest boundary pixel for every location of a uniform
/// `h x w` query grid, stored `2 x h x w`.
#[derive(Debug, Clone, PartialEq)]
pub struct NearestBoundaryField {
    grid_h: usize,
    grid_w: usize,
    b: Vec<f64>,
    source: Vec<Option<(usize, usize)>>,
}

impl NearestBoundaryField {
    /// Wraps an explicit `2 x h x w` field; entries must lie in `[0, 1]`.
    pub fn from_values(grid_h: usize, grid_w: usize, b: Vec<f64>) -> Result<Self> {
        if grid_h < 2 || grid_w < 2 {
            return Err(Error::Size { what: "field size", value: grid_h.min(grid_w) });
        }
        if b.len() != 2 * grid_h * grid_w {
            return Err(Error::Size { what: "field value count", value: b.len() });
        }
        if b.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("boundary coordinate outside [0, 1]"));
        }
        Ok(NearestBoundaryField { grid_h, grid_w, b, source: vec![None; grid_h * grid_w] })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    /// Raw `2 x h x w` values, channel-major.
    pub fn values(&self) -> &[f64] {
        &self.b
    }

    #[inline]
    pub fn get(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.b[(channel * self.grid_h + i) * self.grid_w + j]
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.get(0, i, j), self.get(1, i, j)]
    }

    /// Boundary pixel chosen for `(i, j)`, or `None` under the empty-mask fallback.
    pub fn source_pixel(&self, i: usize, j: usize) -> Option<(usize, usize)> {
        self.source[i * self.grid_w + j]
    }

    /// The field with rows and columns swapped (and the two channels exchanged).
    pub fn transposed(&self) -> Self {
        let (h, w) = (self.grid_h, self.grid_w);
        let mut b = vec![0.0; 2 * h * w];
        let mut source = vec![None; h * w];
        for i in 0..h {
            for j in 0..w {
                b[j * h + i] = self.get(1, i, j);
                b[(w + j) * h + i] = self.get(0, i, j);
                source[j * h + i] = self.source_pixel(i, j).map(|(r, c)| (c, r));
            }
        }
        NearestBoundaryField { grid_h: w, grid_w: h, b, source }
    }
}

/// Nearest boundary pixel (Euclidean, relative coordinates) for each location
/// `u_ij = (i / (h - 1), j / (w - 1))`.
///
/// Ties go to the boundary pixel with the smallest row, then column. An empty
/// mask yields `b = u`.
pub fn nearest_boundary_field(
    bmap: &BoundaryMap,
    grid_h: usize,
    grid_w: usize,
) -> Result<NearestBoundaryField> {
    if grid_h < 2 {
        return Err(Error::Size { what: "field height", value: grid_h });
    }
    if grid_w < 2 {
        return Err(Error::Size { what: "field width", value: grid_w });
    }
    let plane = grid_h * grid_w;
    let mut b = vec![0.0; 2 * plane];
    let mut source = vec![None; plane];

    if bmap.is_empty() {
        for i in 0..grid_h {
            for j in 0..grid_w {
                b[i * grid_w + j] = axis_coord(i, grid_h);
                b[plane + i * grid_w + j] = axis_coord(j, grid_w);
            }
        }
        return Ok(NearestBoundaryField { grid_h, grid_w, b, source });
    }

    let (big_h, big_w) = bmap.grid().shape();
    // Common lattice: a row offset of one pixel is (h-1) units, a query step
    // is (H-1) units. Distances are then scaled by the opposite axis factor so
    // both axes share one denominator.
    let row_unit = (grid_h - 1) as u128;
    let row_query = (big_h - 1) as u128;
    let col_unit = (grid_w - 1) as u128;
    let col_query = (big_w - 1) as u128;
    let row_scale = col_query * col_unit;
    let col_scale = row_query * row_unit;
    let bound = row_scale.checked_mul(col_scale);
    if !matches!(bound, Some(v) if v <= (1u128 << 62)) {
        return Err(Error::Size { what: "grid product for exact distance", value: big_h * big_w });
    }

    // Per pixel row and query column: nearest boundary column and its scaled
    // squared distance.
    let mut row_best: Vec<Option<(u128, usize)>> = vec![None; big_h * grid_w];
    let mut cols: Vec<usize> = Vec::new();
    for r in 0..big_h {
        cols.clear();
        cols.extend((0..big_w).filter(|&c| bmap.get(r, c)));
        if cols.is_empty() {
            continue;
        }
        for j in 0..grid_w {
            let target = j as u128 * col_query;
            // first boundary column at or past the query position
            let k = cols.partition_point(|&c| (c as u128 * col_unit) < target);
            let mut best: Option<(u128, usize)> = None;
            for &c in cols[k.saturating_sub(1)..(k + 1).min(cols.len())].iter() {
                let dc = (c as u128 * col_unit).abs_diff(target) * col_scale;
                let d = dc * dc;
                if best.is_none_or(|(bd, _)| d < bd) {
                    best = Some((d, c));
                }
            }
            row_best[r * grid_w + j] = best;
        }
    }

    for i in 0..grid_h {
        let target = i as u128 * row_query;
        let below = (target / row_unit) as usize;
        for j in 0..grid_w {
            let mut best: Option<(u128, usize, usize)> = None;
            let consider = |r: usize, best: &mut Option<(u128, usize, usize)>| -> bool {
                let dr = (r as u128 * row_unit).abs_diff(target) * row_scale;
                let row_term = dr * dr;
                if let Some((bd, _, _)) = *best {
                    if row_term > bd {
                        return false;
                    }
                }
                if let Some((g, c)) = row_best[r * grid_w + j] {
                    let d = row_term + g;
                    let better = match *best {
                        None => true,
                        Some((bd, br, _)) => d < bd || (d == bd && r < br),
                    };
                    if better {
                        *best = Some((d, r, c));
                    }
                }
                true
            };
            let mut r = below.min(big_h - 1) as isize;
            while r >= 0 && consider(r as usize, &mut best) {
                r -= 1;
            }
            let mut r = below + 1;
            while r < big_h && consider(r, &mut best) {
                r += 1;
            }
            let (_, br, bc) = best.expect("non-empty mask has a nearest pixel");
            b[i * grid_w + j] = axis_coord(br, big_h);
            b[plane + i * grid_w + j] = axis_coord(bc, big_w);
            source[i * grid_w + j] = Some((br, bc));
        }
    }
    Ok(NearestBoundaryField { grid_h, grid_w, b, source })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(h: usize, w: usize, f: impl FnMut(usize, usize) -> ClassId) -> LabelMap {
        LabelMap::from_fn(PixelGrid::new(h, w).unwrap(), Some(255), f)
    }

    fn targets(ids: &[ClassId]) -> TargetClassSet {
        TargetClassSet::new(ids.iter().copied()).unwrap()
    }

    #[test]
    fn constant_map_has_no_boundary() {
        let l = labels(6, 5, |_, _| 1);
        assert!(extract_boundary(&l, &targets(&[1])).unwrap().is_empty());
    }

    #[test]
    fn half_split_marks_the_two_middle_columns() {
        let l = labels(4, 4, |_, c| if c < 2 { 1 } else { 0 });
        let m = extract_boundary(&l, &targets(&[1])).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(m.get(r, c), c == 1 || c == 2, "({r},{c})");
            }
        }
    }

    #[test]
    fn small_square_marks_twelve_pixels() {
        let l = labels(8, 8, |r, c| u32::from((3..5).contains(&r) && (3..5).contains(&c)));
        let m = extract_boundary(&l, &targets(&[1])).unwrap();
        assert_eq!(m.count(), 12);
    }

    #[test]
    fn non_target_transitions_are_ignored() {
        let l = labels(4, 6, |_, c| (c / 2) as ClassId);
        let m = extract_boundary(&l, &targets(&[2])).unwrap();
        // only the 1|2 transition at columns 3/4 involves a target
        assert!(m.pixels().all(|(_, c)| c == 3 || c == 4));
        assert_eq!(m.count(), 8);
        assert_eq!(extract_boundary_all_classes(&l).count(), 16);
    }

    #[test]
    fn ignore_pixels_never_form_boundaries() {
        let l = labels(4, 4, |_, c| if c < 2 { 1 } else { 255 });
        assert!(extract_boundary(&l, &targets(&[1])).unwrap().is_empty());
        assert!(matches!(extract_boundary(&l, &targets(&[1, 255])), Err(Error::Config(_))));
    }

    #[test]
    fn empty_mask_falls_back_to_uniform() {
        let g = PixelGrid::new(10, 12).unwrap();
        let m = BoundaryMap::new(g, vec![false; g.len()]).unwrap();
        let f = nearest_boundary_field(&m, 8, 8).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                assert_eq!(f.point(i, j), [i as f64 / 7.0, j as f64 / 7.0]);
                assert_eq!(f.source_pixel(i, j), None);
            }
        }
    }

    #[test]
    fn single_pixel_attracts_everything() {
        let g = PixelGrid::new(9, 9).unwrap();
        let mut mask = vec![false; g.len()];
        mask[g.index(4, 4)] = true;
        let f = nearest_boundary_field(&BoundaryMap::new(g, mask).unwrap(), 5, 7).unwrap();
        for i in 0..5 {
            for j in 0..7 {
                assert_eq!(f.point(i, j), [0.5, 0.5]);
            }
        }
    }

    #[test]
    fn vertical_boundary_column() {
        let g = PixelGrid::new(16, 16).unwrap();
        let mask = (0..g.len()).map(|p| p % 16 == 7).collect();
        let f = nearest_boundary_field(&BoundaryMap::new(g, mask).unwrap(), 4, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                // query rows i/3 = 5i/15 land exactly on pixel rows
                assert_eq!(f.point(i, j), [(5 * i) as f64 / 15.0, 7.0 / 15.0]);
            }
        }
    }

    #[test]
    fn equidistant_pixels_resolve_to_smallest_row_then_column() {
        let g = PixelGrid::new(5, 5).unwrap();
        let mut mask = vec![false; g.len()];
        // four pixels symmetric around the center
        for (r, c) in [(1, 2), (2, 1), (2, 3), (3, 2)] {
            mask[g.index(r, c)] = true;
        }
        let f = nearest_boundary_field(&BoundaryMap::new(g, mask).unwrap(), 3, 3).unwrap();
        assert_eq!(f.source_pixel(1, 1), Some((1, 2)));
        let mut mask = vec![false; g.len()];
        for (r, c) in [(2, 1), (2, 3)] {
            mask[g.index(r, c)] = true;
        }
        let f = nearest_boundary_field(&BoundaryMap::new(g, mask).unwrap(), 3, 3).unwrap();
        assert_eq!(f.source_pixel(1, 1), Some((2, 1)));
    }
}
