//! Inverting a non-uniform sampling.
//!
//! Every cell of the sampling grid is split into two triangles and scan
//! converted onto the output pixel grid. Each output pixel records its
//! triangle and barycentric weights, and sparse scores at the sampling
//! locations are blended with those weights.
//!
//! Triangle `2k` of cell `k = i * (w - 1) + j` has vertices
//! `(i, j), (i + 1, j), (i, j + 1)`; triangle `2k + 1` has
//! `(i + 1, j), (i + 1, j + 1), (i, j + 1)`. Both are positively oriented on
//! the uniform tensor. Vertex ids are `i * w + j`.
//!
//! Pixels lying exactly on an edge are owned through a top-left style rule
//! evaluated on canonically ordered edges, so two triangles sharing an edge
//! always see bit-identical edge values of opposite sign.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{LabelMap, PixelGrid, ScoreMap};
use crate::solver::SamplingTensor;

const UNASSIGNED: u32 = u32::MAX;

/// Counters describing how the coverage was produced.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CoverageStats {
    pub triangles: usize,
    /// Triangles whose orientation is flipped relative to the uniform grid.
    pub inverted_triangles: usize,
    /// Triangles too thin to interpolate on (zero area up to rounding), never scan converted.
    pub degenerate_triangles: usize,
    /// Pixels claimed by more than one triangle (folded grids); the first claim wins.
    pub contested_pixels: usize,
    /// Pixels outside every scan-converted triangle, assigned to the nearest triangle.
    pub fallback_pixels: usize,
    /// Largest distance (pixels) from a fallback pixel to its assigned triangle.
    pub max_fallback_distance: f64,
    /// Pixel tests performed while scan converting.
    pub tested_pixels: usize,
}

/// Triangle assignment and barycentric weights for every output pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterCoverage {
    grid: PixelGrid,
    src_h: usize,
    src_w: usize,
    tri: Vec<u32>,
    bary: Vec<[f64; 3]>,
    stats: CoverageStats,
}

impl RasterCoverage {
    pub fn grid(&self) -> PixelGrid {
        self.grid
    }

    /// Shape of the sampling grid the coverage was built from.
    pub fn source_shape(&self) -> (usize, usize) {
        (self.src_h, self.src_w)
    }

    pub fn stats(&self) -> CoverageStats {
        self.stats
    }

    pub fn triangle_count(&self) -> usize {
        2 * (self.src_h - 1) * (self.src_w - 1)
    }

    /// Triangle index per output pixel, row-major.
    pub fn triangles(&self) -> &[u32] {
        &self.tri
    }

    /// Barycentric weights per output pixel, ordered like [`Self::triangle_vertices`].
    pub fn weights(&self) -> &[[f64; 3]] {
        &self.bary
    }

    pub fn triangle_vertices(&self, t: usize) -> [usize; 3] {
        triangle_vertices(t, self.src_w)
    }

    /// Vertex ids and weights covering pixel `(row, col)`.
    pub fn at(&self, row: usize, col: usize) -> ([usize; 3], [f64; 3]) {
        let p = self.grid.index(row, col);
        (self.triangle_vertices(self.tri[p] as usize), self.bary[p])
    }
}

/// Vertex ids of triangle `t` on a sampling grid of width `w`.
pub fn triangle_vertices(t: usize, w: usize) -> [usize; 3] {
    let cell = t / 2;
    let (i, j) = (cell / (w - 1), cell % (w - 1));
    let v = |i: usize, j: usize| i * w + j;
    if t.is_multiple_of(2) {
        [v(i, j), v(i + 1, j), v(i, j + 1)]
    } else {
        [v(i + 1, j), v(i + 1, j + 1), v(i, j + 1)]
    }
}

/// Sampling locations in output pixel units, `[row, col]`.
fn vertex_positions(phi: &SamplingTensor, grid: PixelGrid) -> Vec<[f64; 2]> {
    let (h, w) = phi.shape();
    let sy = (grid.height() - 1) as f64;
    let sx = (grid.width() - 1) as f64;
    let mut pos = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let [u, v] = phi.point(i, j);
            pos.push([u * sy, v * sx]);
        }
    }
    pos
}

/// Twice the signed area of `(a, b, p)` in `[row, col]` coordinates.
#[inline]
fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Edge function of the directed edge `from -> to`, always evaluated from the
/// lower vertex id so both triangles sharing the edge agree bit for bit.
#[inline]
fn edge_value(pos: &[[f64; 2]], from: usize, to: usize, p: [f64; 2]) -> f64 {
    if from < to {
        orient(pos[from], pos[to], p)
    } else {
        -orient(pos[to], pos[from], p)
    }
}

/// Whether a pixel lying exactly on directed edge `from -> to` belongs to
/// the triangle on its positive side. Edges along the grid's outer border have
/// no neighbor across them and are always owned.
#[inline]
fn owns_edge(pos: &[[f64; 2]], shape: (usize, usize), from: usize, to: usize) -> bool {
    let (h, w) = shape;
    let (fi, fj, ti, tj) = (from / w, from % w, to / w, to % w);
    if (fi == ti && (fi == 0 || fi == h - 1)) || (fj == tj && (fj == 0 || fj == w - 1)) {
        return true;
    }
    let dy = pos[to][0] - pos[from][0];
    let dx = pos[to][1] - pos[from][1];
    dy > 0.0 || (dy == 0.0 && dx < 0.0)
}

/// A triangle prepared for inclusion tests: vertices reordered so the
/// traversal is positive, plus the permutation back to canonical order.
#[derive(Clone, Copy)]
struct Prepared {
    verts: [usize; 3],
    /// `slot[k]` is the canonical position of `verts[k]`.
    slot: [usize; 3],
    inverted: bool,
}

/// Relative thinness below which a triangle counts as zero-area.
///
/// Edge functions carry an absolute rounding error of about `eps * M * L` for
/// coordinates of magnitude `M` and edges of length `L`, which moves the
/// interpolated point by about `eps * M * L^2 / (2 * area)`. Requiring
/// `2 * area > 1e-9 * M * L^2` keeps that below `1e-6` pixels.
const DEGENERATE_RATIO: f64 = 1e-9;

fn prepare(pos: &[[f64; 2]], canon: [usize; 3], magnitude: f64) -> Option<Prepared> {
    let [a, b, c] = canon.map(|v| pos[v]);
    let area = orient(a, b, c);
    let longest = dist2(a, b).max(dist2(b, c)).max(dist2(c, a));
    if libm::fabs(area) <= DEGENERATE_RATIO * magnitude * longest {
        return None;
    }
    if area > 0.0 {
        Some(Prepared { verts: canon, slot: [0, 1, 2], inverted: false })
    } else if area < 0.0 {
        Some(Prepared { verts: [canon[0], canon[2], canon[1]], slot: [0, 2, 1], inverted: true })
    } else {
        None
    }
}

/// Inclusion test with edge ownership; returns canonical-order weights.
#[inline]
fn weights_if_inside(pos: &[[f64; 2]], shape: (usize, usize), tri: &Prepared, p: [f64; 2]) -> Option<[f64; 3]> {
    let [a, b, c] = tri.verts;
    // weight of each vertex is the edge function of the opposite edge
    let edges = [(b, c), (c, a), (a, b)];
    let mut e = [0.0; 3];
    for (k, &(from, to)) in edges.iter().enumerate() {
        let v = edge_value(pos, from, to, p);
        if v < 0.0 || (v == 0.0 && !owns_edge(pos, shape, from, to)) {
            return None;
        }
        e[k] = v;
    }
    let sum = e[0] + e[1] + e[2];
    if sum <= 0.0 {
        return None;
    }
    let mut out = [0.0; 3];
    for k in 0..3 {
        out[tri.slot[k]] = e[k] / sum;
    }
    Some(out)
}

/// Scan converts the sampling grid's triangles onto `out_grid`.
///
/// Non-inverted triangles are drawn first, then inverted ones, each in index
/// order, and a pixel keeps its first claim. Pixels left uncovered by
/// floating-point slivers or (numerically) zero-area triangles go to the nearest
/// triangle.
pub fn build_coverage(phi: &SamplingTensor, out_grid: PixelGrid) -> RasterCoverage {
    let (h, w) = phi.shape();
    let pos = vertex_positions(phi, out_grid);
    let n_tri = 2 * (h - 1) * (w - 1);
    let (big_h, big_w) = out_grid.shape();
    let mut tri = vec![UNASSIGNED; out_grid.len()];
    let mut bary = vec![[0.0; 3]; out_grid.len()];
    let mut stats = CoverageStats { triangles: n_tri, ..CoverageStats::default() };

    let magnitude = 1.0 + big_h.max(big_w) as f64;
    let mut prepared: Vec<Option<Prepared>> = Vec::with_capacity(n_tri);
    for t in 0..n_tri {
        let p = prepare(&pos, triangle_vertices(t, w), magnitude);
        match p {
            None => stats.degenerate_triangles += 1,
            Some(ref q) if q.inverted => stats.inverted_triangles += 1,
            _ => {}
        }
        prepared.push(p);
    }

    for pass_inverted in [false, true] {
        for (t, p) in prepared.iter().enumerate() {
            let Some(p) = p else { continue };
            if p.inverted != pass_inverted {
                continue;
            }
            let corners = p.verts.map(|v| pos[v]);
            let y_min = corners.iter().map(|c| c[0]).fold(f64::INFINITY, f64::min);
            let y_max = corners.iter().map(|c| c[0]).fold(f64::NEG_INFINITY, f64::max);
            let Some((r0, r1)) = pixel_span(y_min, y_max, big_h) else { continue };
            for r in r0..=r1 {
                let y = r as f64;
                let Some((x_lo, x_hi)) = row_extent(&corners, y) else { continue };
                let Some((c0, c1)) = pixel_span(x_lo, x_hi, big_w) else { continue };
                for c in c0..=c1 {
                    stats.tested_pixels += 1;
                    if let Some(wts) = weights_if_inside(&pos, (h, w), p, [y, c as f64]) {
                        let idx = r * big_w + c;
                        if tri[idx] == UNASSIGNED {
                            tri[idx] = t as u32;
                            bary[idx] = wts;
                        } else {
                            stats.contested_pixels += 1;
                        }
                    }
                }
            }
        }
    }

    for idx in 0..tri.len() {
        if tri[idx] != UNASSIGNED {
            continue;
        }
        stats.fallback_pixels += 1;
        let p = [(idx / big_w) as f64, (idx % big_w) as f64];
        let (t, wts, d2) = nearest_triangle(&pos, &prepared, w, p);
        stats.max_fallback_distance = stats.max_fallback_distance.max(libm::sqrt(d2));
        tri[idx] = t as u32;
        bary[idx] = wts;
    }

    RasterCoverage { grid: out_grid, src_h: h, src_w: w, tri, bary, stats }
}

/// Integer pixel range covering `[lo, hi]` with a small outward margin, clipped to `0..len`.
fn pixel_span(lo: f64, hi: f64, len: usize) -> Option<(usize, usize)> {
    let margin = 1e-7 * (1.0 + libm::fabs(lo).max(libm::fabs(hi)));
    let a = libm::ceil(lo - margin).max(0.0);
    let b = libm::floor(hi + margin).min((len - 1) as f64);
    if a > b {
        None
    } else {
        Some((a as usize, b as usize))
    }
}

/// Column interval where the horizontal line `row = y` meets the triangle.
fn row_extent(corners: &[[f64; 2]; 3], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let margin = 1e-7 * (1.0 + libm::fabs(y));
    for k in 0..3 {
        let a = corners[k];
        let b = corners[(k + 1) % 3];
        let (ya, yb) = (a[0], b[0]);
        if y < ya.min(yb) - margin || y > ya.max(yb) + margin {
            continue;
        }
        if ya == yb {
            lo = lo.min(a[1].min(b[1]));
            hi = hi.max(a[1].max(b[1]));
        } else {
            let t = ((y - ya) / (yb - ya)).clamp(0.0, 1.0);
            let x = a[1] + t * (b[1] - a[1]);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn nearest_triangle(
    pos: &[[f64; 2]],
    prepared: &[Option<Prepared>],
    w: usize,
    p: [f64; 2],
) -> (usize, [f64; 3], f64) {
    let mut best_t = 0;
    let mut best_d = f64::INFINITY;
    let mut best_w = [1.0, 0.0, 0.0];
    for (t, prep) in prepared.iter().enumerate() {
        let canon = triangle_vertices(t, w);
        let (d, wts) = match prep {
            Some(prep) => distance_to_triangle(pos, prep, canon, p),
            None => {
                // zero area: snap to the nearest vertex
                let (mut k_best, mut d_best) = (0, f64::INFINITY);
                for (k, &v) in canon.iter().enumerate() {
                    let d = dist2(pos[v], p);
                    if d < d_best {
                        k_best = k;
                        d_best = d;
                    }
                }
                let mut wts = [0.0; 3];
                wts[k_best] = 1.0;
                (d_best, wts)
            }
        };
        if d < best_d {
            best_t = t;
            best_d = d;
            best_w = wts;
        }
    }
    (best_t, best_w, best_d)
}

#[inline]
fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dy = a[0] - b[0];
    let dx = a[1] - b[1];
    dy * dy + dx * dx
}

/// Squared distance from `p` to a non-degenerate triangle and the canonical
/// weights of the closest point.
fn distance_to_triangle(
    pos: &[[f64; 2]],
    prep: &Prepared,
    canon: [usize; 3],
    p: [f64; 2],
) -> (f64, [f64; 3]) {
    let [a, b, c] = prep.verts;
    let e = [edge_value(pos, b, c, p), edge_value(pos, c, a, p), edge_value(pos, a, b, p)];
    if e.iter().all(|&v| v >= 0.0) {
        let sum = e[0] + e[1] + e[2];
        let mut wts = [0.0; 3];
        for k in 0..3 {
            wts[prep.slot[k]] = e[k] / sum;
        }
        return (0.0, wts);
    }
    let mut best = (f64::INFINITY, [0.0; 3]);
    for (k0, k1) in [(0usize, 1usize), (1, 2), (2, 0)] {
        let (va, vb) = (canon[k0], canon[k1]);
        let (pa, pb) = (pos[va], pos[vb]);
        let d = [pb[0] - pa[0], pb[1] - pa[1]];
        let len2 = d[0] * d[0] + d[1] * d[1];
        let t = if len2 > 0.0 {
            (((p[0] - pa[0]) * d[0] + (p[1] - pa[1]) * d[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [pa[0] + t * d[0], pa[1] + t * d[1]];
        let dd = dist2(q, p);
        if dd < best.0 {
            let mut wts = [0.0; 3];
            wts[k0] = 1.0 - t;
            wts[k1] = t;
            best = (dd, wts);
        }
    }
    best
}

/// `v0 + w1 (v1 - v0) + w2 (v2 - v0)`: equal vertex values come back unchanged.
#[inline]
fn blend(wts: [f64; 3], v: [f64; 3]) -> f64 {
    v[0] + wts[1] * (v[1] - v[0]) + wts[2] * (v[2] - v[0])
}

fn check_source(scores: &ScoreMap, coverage: &RasterCoverage) -> Result<()> {
    let found = (scores.grid_h(), scores.grid_w());
    if found != coverage.source_shape() {
        return Err(Error::Shape { expected: coverage.source_shape(), found });
    }
    Ok(())
}

/// Barycentric blend of the vertex score vectors at every output pixel.
pub fn upsample_scores(scores: &ScoreMap, coverage: &RasterCoverage) -> Result<ScoreMap> {
    check_source(scores, coverage)?;
    let k = scores.num_classes();
    let src_plane = scores.grid_h() * scores.grid_w();
    let (big_h, big_w) = coverage.grid.shape();
    let plane = big_h * big_w;
    let src = scores.scores();
    let mut out = vec![0.0; k * plane];
    for p in 0..plane {
        let verts = coverage.triangle_vertices(coverage.tri[p] as usize);
        let wts = coverage.bary[p];
        for class in 0..k {
            let base = class * src_plane;
            out[class * plane + p] = blend(wts, verts.map(|v| src[base + v]));
        }
    }
    ScoreMap::new(big_h, big_w, k, out)
}

/// Argmax of the blended scores; ties go to the lowest class id.
pub fn upsample_labels(scores: &ScoreMap, coverage: &RasterCoverage) -> Result<LabelMap> {
    check_source(scores, coverage)?;
    let k = scores.num_classes();
    let src_plane = scores.grid_h() * scores.grid_w();
    let src = scores.scores();
    let grid = coverage.grid;
    let labels = (0..grid.len())
        .map(|p| {
            let verts = coverage.triangle_vertices(coverage.tri[p] as usize);
            let wts = coverage.bary[p];
            let mut best = 0;
            let mut best_score = f64::NEG_INFINITY;
            for class in 0..k {
                let base = class * src_plane;
                let s = blend(wts, verts.map(|v| src[base + v]));
                if s > best_score {
                    best = class;
                    best_score = s;
                }
            }
            best as u32
        })
        .collect();
    LabelMap::new(grid, labels, None)
}
