//! Boundary-driven adaptive downsampling.
//!
//! A sampling tensor places `h x w` sampling locations inside the unit
//! square. This crate computes tensors that crowd around the boundaries of
//! target classes (by minimizing a quadratic energy under covering
//! constraints), applies them to images and label maps, inverts the sampling
//! by rasterizing the sampling grid's triangles, and measures the result with
//! boundary-aware segmentation metrics.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the synthetic
//! scene generator and the command line pipeline live in the `adsample` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod approx;
pub mod boundary;
mod error;
pub mod grid;
pub mod metrics;
pub mod resample;
pub mod solver;
pub mod upsample;

pub use crate::boundary::{extract_boundary, extract_boundary_all_classes, nearest_boundary_field, BoundaryMap, NearestBoundaryField};
pub use crate::error::{Error, Result};
pub use crate::grid::{ClassId, ImageBuffer, LabelMap, PixelGrid, Point, ScoreMap, TargetClassSet};
pub use crate::metrics::{iou, object_recall, trimap_accuracy, IoUReport, ObjectRecallReport, TrimapCurve};
pub use crate::resample::{resize_tensor, sample_image, sample_labels, SampledImage};
pub use crate::solver::{
    energy, project_constraints, solve_sampling_tensor, solve_sampling_tensor_with, EnergyParams,
    SamplingTensor, SolveReport, SolverMethod, SolverOptions,
};
pub use crate::upsample::{build_coverage, upsample_labels, upsample_scores, RasterCoverage};
