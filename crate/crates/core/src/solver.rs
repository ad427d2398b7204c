//! Sampling tensors and the boundary-attraction energy.
//!
//! The energy is `sum |phi_ij - b_ij|^2 + lambda * sum |phi_p - phi_q|^2` over
//! unordered 4-neighbor pairs `(p, q)`, minimized under the covering
//! constraints: channel 0 is pinned to 0 on the first row and 1 on the last,
//! channel 1 to 0 on the first column and 1 on the last. The channels do not
//! interact, so each one is a separate symmetric positive-definite system
//! `(I + lambda L) x = rhs` over its free entries.

use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::NearestBoundaryField;
use crate::error::{Error, Result};
use crate::grid::axis_coord;

/// Tolerance used when checking solved entries against the unit interval.
pub const RANGE_SLACK: f64 = 1e-9;

/// A `2 x h x w` array of sampling coordinates satisfying the covering
/// constraints. Channel 0 holds row coordinates, channel 1 column coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingTensor {
    grid_h: usize,
    grid_w: usize,
    phi: Vec<f64>,
}

impl SamplingTensor {
    /// Evenly spaced tensor `u`; sampling with it is plain nearest-neighbor downsampling.
    pub fn uniform(grid_h: usize, grid_w: usize) -> Result<Self> {
        check_size(grid_h, grid_w)?;
        let plane = grid_h * grid_w;
        let mut phi = vec![0.0; 2 * plane];
        for i in 0..grid_h {
            for j in 0..grid_w {
                phi[i * grid_w + j] = axis_coord(i, grid_h);
                phi[plane + i * grid_w + j] = axis_coord(j, grid_w);
            }
        }
        Ok(SamplingTensor { grid_h, grid_w, phi })
    }

    /// Validates an explicit tensor: entries in `[0, 1]` and border lines
    /// exactly at their constrained values.
    pub fn from_values(grid_h: usize, grid_w: usize, phi: Vec<f64>) -> Result<Self> {
        check_size(grid_h, grid_w)?;
        if phi.len() != 2 * grid_h * grid_w {
            return Err(Error::Size { what: "tensor value count", value: phi.len() });
        }
        if phi.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain("sampling coordinate outside [0, 1]"));
        }
        let t = SamplingTensor { grid_h, grid_w, phi };
        for j in 0..grid_w {
            if t.get(0, 0, j) != 0.0 || t.get(0, grid_h - 1, j) != 1.0 {
                return Err(Error::Domain("row coordinates violate the covering constraint"));
            }
        }
        for i in 0..grid_h {
            if t.get(1, i, 0) != 0.0 || t.get(1, i, grid_w - 1) != 1.0 {
                return Err(Error::Domain("column coordinates violate the covering constraint"));
            }
        }
        Ok(t)
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
        &self.phi
    }

    pub fn into_values(self) -> Vec<f64> {
        self.phi
    }

    #[inline]
    pub fn get(&self, channel: usize, i: usize, j: usize) -> f64 {
        self.phi[(channel * self.grid_h + i) * self.grid_w + j]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.get(0, i, j), self.get(1, i, j)]
    }

    /// Swaps rows with columns and exchanges the channels; the result is again feasible.
    pub fn transposed(&self) -> Self {
        let (h, w) = self.shape();
        let mut phi = vec![0.0; 2 * h * w];
        for i in 0..h {
            for j in 0..w {
                phi[j * h + i] = self.get(1, i, j);
                phi[(w + j) * h + i] = self.get(0, i, j);
            }
        }
        SamplingTensor { grid_h: w, grid_w: h, phi }
    }

    /// Largest absolute componentwise difference to another tensor of the same shape.
    pub fn max_abs_diff(&self, other: &SamplingTensor) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::Shape { expected: self.shape(), found: other.shape() });
        }
        Ok(self.phi.iter().zip(&other.phi).map(|(a, b)| libm::fabs(a - b)).fold(0.0, f64::max))
    }
}

fn check_size(grid_h: usize, grid_w: usize) -> Result<()> {
    if grid_h < 2 {
        return Err(Error::Size { what: "tensor height", value: grid_h });
    }
    if grid_w < 2 {
        return Err(Error::Size { what: "tensor width", value: grid_w });
    }
    Ok(())
}

/// Smoothness weight of the energy. `f64::INFINITY` selects the uniform tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    lambda: f64,
}

impl EnergyParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::Config("lambda must be non-negative"));
        }
        Ok(EnergyParams { lambda })
    }

    pub fn infinite() -> Self {
        EnergyParams { lambda: f64::INFINITY }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams { lambda: 1.0 }
    }
}

fn check_shapes(phi: &SamplingTensor, b: &NearestBoundaryField) -> Result<()> {
    if phi.shape() != b.shape() {
        return Err(Error::Shape { expected: b.shape(), found: phi.shape() });
    }
    Ok(())
}

/// `sum_ij |phi_ij - b_ij|^2`.
pub fn data_term(phi: &SamplingTensor, b: &NearestBoundaryField) -> Result<f64> {
    check_shapes(phi, b)?;
    Ok(phi.values().iter().zip(b.values()).map(|(p, q)| (p - q) * (p - q)).sum())
}

/// `sum |phi_p - phi_q|^2` over unordered 4-neighbor pairs, both channels.
pub fn smoothness_term(phi: &SamplingTensor) -> f64 {
    let (h, w) = phi.shape();
    let mut s = 0.0;
    for c in 0..2 {
        for i in 0..h {
            for j in 0..w {
                let v = phi.get(c, i, j);
                if i + 1 < h {
                    let d = v - phi.get(c, i + 1, j);
                    s += d * d;
                }
                if j + 1 < w {
                    let d = v - phi.get(c, i, j + 1);
                    s += d * d;
                }
            }
        }
    }
    s
}

/// Total energy. With an infinite `lambda` this is `+inf` unless the tensor has
/// no smoothness cost at all, which no feasible tensor achieves.
pub fn energy(phi: &SamplingTensor, b: &NearestBoundaryField, params: &EnergyParams) -> Result<f64> {
    let data = data_term(phi, b)?;
    let smooth = smoothness_term(phi);
    if params.lambda.is_infinite() {
        return Ok(if smooth == 0.0 { data } else { f64::INFINITY });
    }
    Ok(data + params.lambda * smooth)
}

/// How the per-channel linear systems are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolverMethod {
    /// Dense Cholesky for grids with fewer than 256 locations, conjugate gradient otherwise.
    #[default]
    Auto,
    Dense,
    ConjugateGradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolverMethod,
    /// Relative residual `|r| / |rhs|` at which conjugate gradient stops.
    pub tolerance: f64,
    /// Iteration cap for conjugate gradient; `None` means `10 * h * w`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { method: SolverMethod::Auto, tolerance: 1e-10, max_iterations: None }
    }
}

/// Solver output with diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub tensor: SamplingTensor,
    /// Conjugate gradient iterations per channel (0 for direct or closed-form solves).
    pub iterations: [usize; 2],
    /// Infinity norm of `(I + lambda L) x - rhs` per channel, before clamping.
    pub residual: [f64; 2],
    /// Smallest and largest free entry before clamping into `[0, 1]`.
    pub raw_range: (f64, f64),
}

/// Global minimizer of the energy under the covering constraints.
pub fn solve_sampling_tensor(b: &NearestBoundaryField, params: &EnergyParams) -> Result<SamplingTensor> {
    solve_sampling_tensor_with(b, params, &SolverOptions::default()).map(|r| r.tensor)
}

pub fn solve_sampling_tensor_with(
    b: &NearestBoundaryField,
    params: &EnergyParams,
    options: &SolverOptions,
) -> Result<SolveReport> {
    let (h, w) = b.shape();
    if params.lambda.is_infinite() {
        return Ok(SolveReport {
            tensor: SamplingTensor::uniform(h, w)?,
            iterations: [0, 0],
            residual: [0.0, 0.0],
            raw_range: (0.0, 1.0),
        });
    }
    let plane = h * w;
    let mut phi = vec![0.0; 2 * plane];
    let mut iterations = [0; 2];
    let mut residual = [0.0; 2];
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for channel in 0..2 {
        let system = ChannelSystem::new(b, channel, params.lambda);
        let x = if params.lambda == 0.0 {
            // the system is the identity
            system.rhs.clone()
        } else {
            let use_dense = match options.method {
                SolverMethod::Dense => true,
                SolverMethod::ConjugateGradient => false,
                SolverMethod::Auto => plane < 256,
            };
            if use_dense {
                system.solve_dense()
            } else {
                let cap = options.max_iterations.unwrap_or(10 * plane);
                let (x, its) = system.solve_cg(options.tolerance, cap)?;
                iterations[channel] = its;
                x
            }
        };
        residual[channel] = system.residual_inf(&x);
        for (k, &(i, j)) in system.free.iter().enumerate() {
            lo = lo.min(x[k]);
            hi = hi.max(x[k]);
            phi[channel * plane + i * w + j] = x[k];
        }
        for &(i, j, v) in &system.fixed {
            phi[channel * plane + i * w + j] = v;
        }
    }
    if lo > hi {
        (lo, hi) = (0.0, 1.0);
    }
    debug_assert!(
        lo >= -RANGE_SLACK && hi <= 1.0 + RANGE_SLACK,
        "solution escaped the unit interval: [{lo}, {hi}]"
    );
    for v in phi.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    Ok(SolveReport {
        tensor: SamplingTensor { grid_h: h, grid_w: w, phi },
        iterations,
        residual,
        raw_range: (lo, hi),
    })
}

/// One channel's reduced system over its free entries.
struct ChannelSystem {
    h: usize,
    w: usize,
    lambda: f64,
    /// Grid position of each unknown.
    free: Vec<(usize, usize)>,
    /// Unknown index per grid location, `usize::MAX` when fixed.
    slot: Vec<usize>,
    fixed: Vec<(usize, usize, f64)>,
    fixed_value: Vec<f64>,
    rhs: Vec<f64>,
}

impl ChannelSystem {
    fn new(b: &NearestBoundaryField, channel: usize, lambda: f64) -> Self {
        let (h, w) = b.shape();
        let pinned = |i: usize, j: usize| -> Option<f64> {
            let (pos, last) = if channel == 0 { (i, h - 1) } else { (j, w - 1) };
            match pos {
                0 => Some(0.0),
                p if p == last => Some(1.0),
                _ => None,
            }
        };
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut slot = vec![usize::MAX; h * w];
        let mut fixed_value = vec![0.0; h * w];
        for i in 0..h {
            for j in 0..w {
                match pinned(i, j) {
                    Some(v) => {
                        fixed.push((i, j, v));
                        fixed_value[i * w + j] = v;
                    }
                    None => {
                        slot[i * w + j] = free.len();
                        free.push((i, j));
                    }
                }
            }
        }
        let mut sys = ChannelSystem { h, w, lambda, free, slot, fixed, fixed_value, rhs: Vec::new() };
        let rhs = sys
            .free
            .iter()
            .map(|&(i, j)| {
                let mut r = b.get(channel, i, j);
                if lambda != 0.0 {
                    sys.for_each_neighbor(i, j, |n| {
                        if sys.slot[n] == usize::MAX {
                            r += lambda * sys.fixed_value[n];
                        }
                    });
                }
                r
            })
            .collect();
        sys.rhs = rhs;
        sys
    }

    #[inline]
    fn for_each_neighbor(&self, i: usize, j: usize, mut f: impl FnMut(usize)) {
        let w = self.w;
        if i > 0 {
            f((i - 1) * w + j);
        }
        if i + 1 < self.h {
            f((i + 1) * w + j);
        }
        if j > 0 {
            f(i * w + j - 1);
        }
        if j + 1 < w {
            f(i * w + j + 1);
        }
    }

    fn degree(&self, i: usize, j: usize) -> f64 {
        let mut d = 0.0;
        self.for_each_neighbor(i, j, |_| d += 1.0);
        d
    }

    fn diagonal(&self) -> Vec<f64> {
        self.free.iter().map(|&(i, j)| 1.0 + self.lambda * self.degree(i, j)).collect()
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (k, &(i, j)) in self.free.iter().enumerate() {
            let mut acc = (1.0 + self.lambda * self.degree(i, j)) * x[k];
            self.for_each_neighbor(i, j, |n| {
                let s = self.slot[n];
                if s != usize::MAX {
                    acc -= self.lambda * x[s];
                }
            });
            out[k] = acc;
        }
    }

    fn residual_inf(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.apply(x, &mut ax);
        ax.iter().zip(&self.rhs).map(|(a, r)| libm::fabs(a - r)).fold(0.0, f64::max)
    }

    fn solve_dense(&self) -> Vec<f64> {
        let n = self.free.len();
        let mut a = vec![0.0; n * n];
        for (k, &(i, j)) in self.free.iter().enumerate() {
            a[k * n + k] = 1.0 + self.lambda * self.degree(i, j);
            self.for_each_neighbor(i, j, |nb| {
                let s = self.slot[nb];
                if s != usize::MAX {
                    a[k * n + s] -= self.lambda;
                }
            });
        }
        cholesky_solve(&mut a, n, &self.rhs)
    }

    /// Jacobi-preconditioned conjugate gradient.
    fn solve_cg(&self, tolerance: f64, max_iterations: usize) -> Result<(Vec<f64>, usize)> {
        let n = self.free.len();
        if n == 0 {
            return Ok((Vec::new(), 0));
        }
        let inv_diag: Vec<f64> = self.diagonal().iter().map(|d| 1.0 / d).collect();
        let rhs_norm = norm(&self.rhs);
        if rhs_norm == 0.0 {
            return Ok((vec![0.0; n], 0));
        }
        let target = tolerance * rhs_norm;
        // start from the preconditioned right-hand side
        let mut x: Vec<f64> = self.rhs.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut ax = vec![0.0; n];
        self.apply(&x, &mut ax);
        let mut r: Vec<f64> = self.rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for it in 0..max_iterations {
            if norm(&r) <= target {
                return Ok((x, it));
            }
            self.apply(&p, &mut ap);
            let alpha = rz / dot(&p, &ap);
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        let res = norm(&r);
        if res <= target {
            Ok((x, max_iterations))
        } else {
            Err(Error::Convergence { iterations: max_iterations, residual: res / rhs_norm })
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

/// In-place Cholesky factorization of the SPD matrix `a` (row-major, `n x n`)
/// followed by forward and back substitution.
fn cholesky_solve(a: &mut [f64], n: usize, rhs: &[f64]) -> Vec<f64> {
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        for k in 0..i {
            y[i] -= a[i * n + k] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            y[i] -= a[k * n + i] * y[k];
        }
        y[i] /= a[i * n + i];
    }
    y
}

/// Infinity norm of the energy gradient (halved) over the free entries of
/// `phi`. Zero exactly at the constrained minimizer.
pub fn stationarity_residual(
    phi: &SamplingTensor,
    b: &NearestBoundaryField,
    params: &EnergyParams,
) -> Result<f64> {
    check_shapes(phi, b)?;
    let (h, w) = phi.shape();
    let lambda = params.lambda;
    let mut worst: f64 = 0.0;
    for c in 0..2 {
        for i in 0..h {
            for j in 0..w {
                let pinned = if c == 0 { i == 0 || i == h - 1 } else { j == 0 || j == w - 1 };
                if pinned {
                    continue;
                }
                let v = phi.get(c, i, j);
                let mut g = v - b.get(c, i, j);
                let mut pull = 0.0;
                for (di, dj) in [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)] {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                        continue;
                    }
                    pull += v - phi.get(c, ni as usize, nj as usize);
                }
                if lambda != 0.0 {
                    g += lambda * pull;
                }
                worst = worst.max(libm::fabs(g));
            }
        }
    }
    Ok(worst)
}

/// Projects an arbitrary `2 x h x w` array onto the feasible set: clamp into
/// `[0, 1]`, then overwrite the four constrained border lines.
pub fn project_constraints(grid_h: usize, grid_w: usize, raw: &[f64]) -> Result<SamplingTensor> {
    check_size(grid_h, grid_w)?;
    if raw.len() != 2 * grid_h * grid_w {
        return Err(Error::Size { what: "tensor value count", value: raw.len() });
    }
    if raw.iter().any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN tensor entry"));
    }
    let plane = grid_h * grid_w;
    let mut phi: Vec<f64> = raw.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    for j in 0..grid_w {
        phi[j] = 0.0;
        phi[(grid_h - 1) * grid_w + j] = 1.0;
    }
    for i in 0..grid_h {
        phi[plane + i * grid_w] = 0.0;
        phi[plane + i * grid_w + grid_w - 1] = 1.0;
    }
    Ok(SamplingTensor { grid_h, grid_w, phi })
}
