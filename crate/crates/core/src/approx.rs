//! Boundary approximation error experiments.
//!
//! Piecewise-linear chains with vertices on the curve at uniform arc-length
//! spacing approximate a smooth boundary with error `O(kappa l^2 / M^2)` for
//! `M` segments. Uniform sampling grids, by contrast, localize a boundary only
//! to within `O(D / sqrt(N))` for `N` samples. This module measures both.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::boundary::{extract_boundary, nearest_boundary_field};
use crate::error::{Error, Result};
use crate::grid::{LabelMap, ScoreMap, TargetClassSet};
use crate::resample::sample_labels;
use crate::solver::{solve_sampling_tensor, EnergyParams, SamplingTensor};
use crate::upsample::{build_coverage, upsample_labels};

pub type Vec2 = [f64; 2];

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const GOLDEN_STEPS: usize = 80;

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Line { from: Vec2, to: Vec2 },
    Arc { center: Vec2, radius: f64, start: f64, sweep: f64 },
    Ellipse { center: Vec2, a: f64, b: f64, table: ArcTable },
}

/// A plane curve parameterized by arc length `s` in `[0, length]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    shape: Shape,
    length: f64,
    max_curvature: f64,
    closed: bool,
}

impl CurveSpec {
    pub fn line(from: Vec2, to: Vec2) -> Result<Self> {
        let length = libm::hypot(to[0] - from[0], to[1] - from[1]);
        if length == 0.0 || !length.is_finite() {
            return Err(Error::Domain("line endpoints must differ"));
        }
        Ok(CurveSpec { shape: Shape::Line { from, to }, length, max_curvature: 0.0, closed: false })
    }

    /// Full circle traversed counter-clockwise from angle 0.
    pub fn circle(center: Vec2, radius: f64) -> Result<Self> {
        let mut c = Self::arc(center, radius, 0.0, TAU)?;
        c.closed = true;
        Ok(c)
    }

    /// Circular arc starting at angle `start` and spanning `sweep` radians (`0 < sweep <= 2 pi`).
    pub fn arc(center: Vec2, radius: f64, start: f64, sweep: f64) -> Result<Self> {
        if !radius.is_finite() || radius <= 0.0 {
            return Err(Error::Domain("radius must be positive"));
        }
        if !(sweep > 0.0 && sweep <= TAU) {
            return Err(Error::Domain("arc sweep must lie in (0, 2 pi]"));
        }
        Ok(CurveSpec {
            shape: Shape::Arc { center, radius, start, sweep },
            length: radius * sweep,
            max_curvature: 1.0 / radius,
            closed: false,
        })
    }

    /// Axis-aligned ellipse with semi-axes `a` (rows) and `b` (columns). Arc
    /// length comes from Gauss-Legendre quadrature of the parametric speed.
    pub fn ellipse(center: Vec2, a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain("semi-axes must be positive"));
        }
        let table = ArcTable::new(a, b, 2048);
        let length = table.total();
        let (long, short) = if a >= b { (a, b) } else { (b, a) };
        Ok(CurveSpec {
            shape: Shape::Ellipse { center, a, b, table },
            length,
            max_curvature: long / (short * short),
            closed: true,
        })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn max_curvature(&self) -> f64 {
        self.max_curvature
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Point at arc length `s`, clamped to `[0, length]`.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length);
        match &self.shape {
            Shape::Line { from, to } => {
                let t = s / self.length;
                [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])]
            }
            Shape::Arc { center, radius, start, .. } => {
                let theta = start + s / radius;
                [center[0] + radius * libm::sin(theta), center[1] + radius * libm::cos(theta)]
            }
            Shape::Ellipse { center, a, b, table } => {
                let theta = table.angle_at(s);
                [center[0] + a * libm::sin(theta), center[1] + b * libm::cos(theta)]
            }
        }
    }
}

/// Cumulative arc length of `theta -> (a sin theta, b cos theta)` on a uniform angle grid.
#[derive(Debug, Clone, PartialEq)]
struct ArcTable {
    a: f64,
    b: f64,
    step: f64,
    cumulative: Vec<f64>,
}

// 5-point Gauss-Legendre nodes and weights on [-1, 1]
const GL_NODES: [f64; 5] = [
    0.0,
    -0.538_469_310_105_683_1,
    0.538_469_310_105_683_1,
    -0.906_179_845_938_664,
    0.906_179_845_938_664,
];
const GL_WEIGHTS: [f64; 5] = [
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
    0.236_926_885_056_189_1,
];

impl ArcTable {
    fn new(a: f64, b: f64, intervals: usize) -> Self {
        let step = TAU / intervals as f64;
        let mut cumulative = Vec::with_capacity(intervals + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        let mut t = ArcTable { a, b, step, cumulative: Vec::new() };
        for k in 0..intervals {
            acc += t.integrate(k as f64 * step, (k + 1) as f64 * step);
            cumulative.push(acc);
        }
        t.cumulative = cumulative;
        t
    }

    fn speed(&self, theta: f64) -> f64 {
        libm::hypot(self.a * libm::cos(theta), self.b * libm::sin(theta))
    }

    fn integrate(&self, lo: f64, hi: f64) -> f64 {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        GL_NODES.iter().zip(GL_WEIGHTS).map(|(x, w)| w * self.speed(mid + half * x)).sum::<f64>() * half
    }

    fn total(&self) -> f64 {
        *self.cumulative.last().expect("non-empty table")
    }

    fn angle_at(&self, s: f64) -> f64 {
        let n = self.cumulative.len() - 1;
        let k = self.cumulative.partition_point(|&c| c <= s).saturating_sub(1).min(n - 1);
        let base = k as f64 * self.step;
        let mut theta = base + self.step * (s - self.cumulative[k]) / (self.cumulative[k + 1] - self.cumulative[k]);
        for _ in 0..8 {
            let f = self.cumulative[k] + self.integrate(base, theta) - s;
            let next = theta - f / self.speed(theta);
            if libm::fabs(next - theta) < 1e-15 {
                theta = next;
                break;
            }
            theta = next;
        }
        theta
    }
}

/// Piecewise-linear chain of `M` segments. Closed chains repeat their first vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyChain {
    vertices: Vec<Vec2>,
}

impl PolyChain {
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::Size { what: "chain vertex count", value: vertices.len() });
        }
        if vertices.windows(2).any(|p| p[0] == p[1]) {
            return Err(Error::Domain("consecutive chain vertices coincide"));
        }
        Ok(PolyChain { vertices })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn segment_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// Sampling-point budget for this chain: three points per corner.
    pub fn sample_budget(&self) -> usize {
        3 * self.segment_count()
    }

    fn point(&self, segment: usize, t: f64) -> Vec2 {
        let a = self.vertices[segment];
        let b = self.vertices[segment + 1];
        [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

/// Chain with vertices at arc lengths `k * l / M`, `k = 0..=M`.
pub fn approximate_curve(curve: &CurveSpec, segments: usize) -> Result<PolyChain> {
    if segments == 0 {
        return Err(Error::Size { what: "segment count", value: 0 });
    }
    let step = curve.length / segments as f64;
    let mut vertices: Vec<Vec2> = (0..segments).map(|k| curve.point_at(k as f64 * step)).collect();
    vertices.push(if curve.closed { vertices[0] } else { curve.point_at(curve.length) });
    PolyChain::new(vertices)
}

/// One-sided chain-to-curve error with the resolution used to compute it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApproxError {
    pub epsilon: f64,
    pub samples_per_segment: usize,
    pub curve_samples: usize,
}

pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 64;
pub const DEFAULT_CURVE_SAMPLES: usize = 4096;

/// Dense samples of a curve grouped into chunks with bounding circles, for
/// nearest-point queries that skip far chunks.
struct CurveIndex<'a> {
    curve: &'a CurveSpec,
    s: Vec<f64>,
    pts: Vec<Vec2>,
    chunks: Vec<(usize, usize, Vec2, f64)>,
}

const CHUNK: usize = 32;

impl<'a> CurveIndex<'a> {
    fn new(curve: &'a CurveSpec, samples: usize) -> Self {
        let s: Vec<f64> = (0..=samples).map(|k| curve.length * k as f64 / samples as f64).collect();
        let pts: Vec<Vec2> = s.iter().map(|&s| curve.point_at(s)).collect();
        let mut chunks = Vec::new();
        let mut lo = 0;
        while lo < pts.len() {
            let hi = (lo + CHUNK).min(pts.len());
            let n = (hi - lo) as f64;
            let c = pts[lo..hi].iter().fold([0.0, 0.0], |acc, p| [acc[0] + p[0] / n, acc[1] + p[1] / n]);
            let r = pts[lo..hi].iter().map(|p| dist(*p, c)).fold(0.0, f64::max);
            chunks.push((lo, hi, c, r));
            lo = hi;
        }
        CurveIndex { curve, s, pts, chunks }
    }

    /// `inf_s |q - f(s)|`: nearest dense sample, then golden-section refinement
    /// over the two neighboring sample intervals.
    fn distance(&self, q: Vec2) -> f64 {
        let first = self
            .chunks
            .iter()
            .enumerate()
            .map(|(k, &(_, _, c, r))| (k, dist(q, c) - r))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
            .0;
        let mut best = (f64::INFINITY, 0usize);
        let scan = |k: usize, best: &mut (f64, usize)| {
            let (lo, hi, c, r) = self.chunks[k];
            if dist(q, c) - r >= best.0 {
                return;
            }
            for i in lo..hi {
                let d = dist(q, self.pts[i]);
                if d < best.0 {
                    *best = (d, i);
                }
            }
        };
        scan(first, &mut best);
        for k in 0..self.chunks.len() {
            if k != first {
                scan(k, &mut best);
            }
        }
        let i = best.1;
        let last = self.s.len() - 1;
        let (lo, hi) = if self.curve.closed {
            // allow the bracket to wrap around the seam
            let step = self.s[1];
            (self.s[i] - step, self.s[i] + step)
        } else {
            (self.s[i.saturating_sub(1)], self.s[(i + 1).min(last)])
        };
        let len = self.curve.length;
        let closed = self.curve.closed;
        let f = |s: f64| {
            let s = if closed { s - len * libm::floor(s / len) } else { s };
            dist(q, self.curve.point_at(s))
        };
        let (_, refined) = golden_min(&f, lo, hi);
        refined.min(best.0)
    }
}

#[inline]
fn dist(a: Vec2, b: Vec2) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

/// Golden-section search for the minimum of `f` on `[lo, hi]`; returns `(x, f(x))`.
fn golden_min(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN * (hi - lo);
    let mut x2 = lo + GOLDEN * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..GOLDEN_STEPS {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - GOLDEN * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + GOLDEN * (hi - lo);
            f2 = f(x2);
        }
    }
    if f1 <= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// `sup_t inf_s |p(t) - f(s)|` by dense sampling along the chain and the curve,
/// with one golden-section refinement of the worst chain location.
pub fn approx_error(curve: &CurveSpec, chain: &PolyChain, samples_per_segment: usize) -> Result<ApproxError> {
    approx_error_with(curve, chain, samples_per_segment, DEFAULT_CURVE_SAMPLES)
}

pub fn approx_error_with(
    curve: &CurveSpec,
    chain: &PolyChain,
    samples_per_segment: usize,
    curve_samples: usize,
) -> Result<ApproxError> {
    if samples_per_segment < 2 {
        return Err(Error::Size { what: "samples per segment", value: samples_per_segment });
    }
    if curve_samples < 2 {
        return Err(Error::Size { what: "curve samples", value: curve_samples });
    }
    let index = CurveIndex::new(curve, curve_samples);
    let mut worst = (f64::NEG_INFINITY, 0usize, 0.0);
    for seg in 0..chain.segment_count() {
        for k in 0..=samples_per_segment {
            let t = k as f64 / samples_per_segment as f64;
            let d = index.distance(chain.point(seg, t));
            if d > worst.0 {
                worst = (d, seg, t);
            }
        }
    }
    let (d0, seg, t0) = worst;
    let dt = 1.0 / samples_per_segment as f64;
    let neg = |t: f64| -index.distance(chain.point(seg, t));
    let (_, refined) = golden_min(&neg, (t0 - dt).max(0.0), (t0 + dt).min(1.0));
    Ok(ApproxError { epsilon: d0.max(-refined), samples_per_segment, curve_samples })
}

/// One row of the chain-approximation experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub segments: usize,
    /// Sampling points needed for this chain (three per corner).
    pub sample_points: usize,
    pub epsilon: f64,
    /// `(1 - cos alpha) / kappa` with `alpha = kappa l / (2 M)`.
    pub arc_bound: f64,
    /// Small-angle form `kappa l^2 / (8 M^2)`.
    pub small_angle_bound: f64,
    /// `epsilon * M^2`, which settles to a constant at second-order convergence.
    pub scaled_error: f64,
    /// `epsilon(previous M) / epsilon(M)`.
    pub ratio_to_previous: Option<f64>,
}

/// `(1 - cos alpha) / kappa` for `alpha = kappa l / (2 M)`; zero for straight curves.
pub fn arc_bound(curve: &CurveSpec, segments: usize) -> f64 {
    let kappa = curve.max_curvature;
    if kappa == 0.0 {
        return 0.0;
    }
    let alpha = kappa * curve.length / (2.0 * segments as f64);
    (1.0 - libm::cos(alpha)) / kappa
}

pub fn bound_experiment(curve: &CurveSpec, segment_counts: &[usize]) -> Result<Vec<BoundRow>> {
    if segment_counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("segment counts must be strictly increasing"));
    }
    let mut rows: Vec<BoundRow> = Vec::with_capacity(segment_counts.len());
    for &m in segment_counts {
        let chain = approximate_curve(curve, m)?;
        let samples = DEFAULT_CURVE_SAMPLES.max(8 * m);
        let eps = approx_error_with(curve, &chain, DEFAULT_SAMPLES_PER_SEGMENT, samples)?.epsilon;
        let kappa = curve.max_curvature;
        let mf = m as f64;
        let ratio = rows.last().and_then(|prev| (eps > 0.0).then(|| prev.epsilon / eps));
        rows.push(BoundRow {
            segments: m,
            sample_points: 3 * m,
            epsilon: eps,
            arc_bound: arc_bound(curve, m),
            small_angle_bound: kappa * curve.length * curve.length / (8.0 * mf * mf),
            scaled_error: eps * mf * mf,
            ratio_to_previous: ratio,
        });
    }
    Ok(rows)
}

/// Closed-form error of an `M`-gon inscribed in a circle of radius `r`.
pub fn inscribed_polygon_error(radius: f64, segments: usize) -> f64 {
    radius * (1.0 - libm::cos(PI / segments as f64))
}

/// How the sampling grid is chosen in [`uniform_grid_boundary_error`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSampling {
    Uniform,
    /// Solve the boundary-attraction energy on the `side x side` grid.
    Adaptive(EnergyParams),
}

/// Localization error for one sampling budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalizationRow {
    pub requested: usize,
    /// Side of the square sampling grid actually used.
    pub side: usize,
    pub samples: usize,
    /// Largest distance (pixels) from a misclassified pixel to the true boundary.
    pub error: f64,
    pub misclassified: usize,
}

/// Samples the ground truth on a `sqrt(N) x sqrt(N)` grid, classifies each
/// sample by its true label, upsamples, and measures how far misclassified
/// pixels lie from the true boundary. Non-square `N` use the nearest square.
pub fn uniform_grid_boundary_error(
    shape: &LabelMap,
    targets: &TargetClassSet,
    budgets: &[usize],
    sampling: GridSampling,
) -> Result<Vec<LocalizationRow>> {
    let boundary = extract_boundary(shape, targets)?;
    let boundary_px: Vec<(usize, usize)> = boundary.pixels().collect();
    let grid = shape.grid();
    let classes = shape.max_class().map_or(1, |c| c as usize + 1);
    let mut rows = Vec::with_capacity(budgets.len());
    for &n in budgets {
        let side = (libm::round(libm::sqrt(n as f64)) as usize).max(2);
        let phi = match sampling {
            GridSampling::Uniform => SamplingTensor::uniform(side, side)?,
            GridSampling::Adaptive(params) => {
                let b = nearest_boundary_field(&boundary, side, side)?;
                solve_sampling_tensor(&b, &params)?
            }
        };
        let sampled = sample_labels(shape, &phi);
        let scores = ScoreMap::one_hot(side, side, classes, sampled.labels(), shape.ignore_id())?;
        let pred = upsample_labels(&scores, &build_coverage(&phi, grid))?;
        let mut error: f64 = 0.0;
        let mut misclassified = 0;
        for (p, (&g, &q)) in shape.labels().iter().zip(pred.labels()).enumerate() {
            if shape.is_ignored(g) || g == q {
                continue;
            }
            misclassified += 1;
            let (r, c) = ((p / grid.width()) as f64, (p % grid.width()) as f64);
            let d2 = boundary_px
                .iter()
                .map(|&(br, bc)| {
                    let (dr, dc) = (br as f64 - r, bc as f64 - c);
                    dr * dr + dc * dc
                })
                .fold(f64::INFINITY, f64::min);
            if d2.is_finite() {
                error = error.max(libm::sqrt(d2));
            }
        }
        rows.push(LocalizationRow { requested: n, side, samples: side * side, error, misclassified });
    }
    Ok(rows)
}

/// Least-squares slope of `ln(error)` against `ln(samples)`, over rows with positive error.
pub fn log_log_slope(rows: &[LocalizationRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.error > 0.0)
        .map(|r| (libm::log(r.samples as f64), libm::log(r.error)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chain_is_the_segment() {
        let line = CurveSpec::line([0.0, 0.0], [3.0, 4.0]).unwrap();
        let chain = approximate_curve(&line, 5).unwrap();
        assert_eq!(chain.segment_count(), 5);
        for v in chain.vertices() {
            assert!((v[0] * 4.0 - v[1] * 3.0).abs() < 1e-12);
        }
        assert!(approx_error(&line, &chain, 8).unwrap().epsilon < 1e-12);
    }

    #[test]
    fn circle_square_and_hexagon() {
        let circle = CurveSpec::circle([0.0, 0.0], 1.0).unwrap();
        let sq = approximate_curve(&circle, 4).unwrap();
        let expect = [[0.0, 1.0], [1.0, 0.0], [0.0, -1.0], [-1.0, 0.0], [0.0, 1.0]];
        for (v, e) in sq.vertices().iter().zip(expect) {
            assert!((v[0] - e[0]).abs() < 1e-12 && (v[1] - e[1]).abs() < 1e-12);
        }
        let hex = approximate_curve(&circle, 6).unwrap();
        for w in hex.vertices().windows(2) {
            assert!((dist(w[0], w[1]) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn inscribed_square_error() {
        let circle = CurveSpec::circle([0.0, 0.0], 1.0).unwrap();
        let chain = approximate_curve(&circle, 4).unwrap();
        let eps = approx_error(&circle, &chain, 64).unwrap().epsilon;
        assert!((eps - (1.0 - libm::cos(PI / 4.0))).abs() < 1e-9, "{eps}");
    }

    #[test]
    fn ellipse_length_against_ramanujan() {
        let (a, b) = (3.0, 1.0);
        let e = CurveSpec::ellipse([0.0, 0.0], a, b).unwrap();
        let h = ((a - b) / (a + b)) * ((a - b) / (a + b));
        let ramanujan = PI * (a + b) * (1.0 + 3.0 * h / (10.0 + libm::sqrt(4.0 - 3.0 * h)));
        assert!((e.length() - ramanujan).abs() < 1e-4 * ramanujan);
        // arc-length parameterization: equal steps give equal chord lengths for small steps
        let p0 = e.point_at(0.0);
        let p1 = e.point_at(1e-3);
        assert!((dist(p0, p1) - 1e-3).abs() < 1e-8);
        assert!((e.max_curvature() - 3.0).abs() < 1e-15);
    }

    #[test]
    fn bad_inputs() {
        assert!(CurveSpec::circle([0.0, 0.0], 0.0).is_err());
        assert!(approximate_curve(&CurveSpec::circle([0.0, 0.0], 1.0).unwrap(), 0).is_err());
        let c = CurveSpec::circle([0.0, 0.0], 1.0).unwrap();
        let chain = approximate_curve(&c, 4).unwrap();
        assert!(approx_error(&c, &chain, 1).is_err());
        assert!(bound_experiment(&c, &[8, 4]).is_err());
    }
}
