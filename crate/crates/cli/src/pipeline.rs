//! Per-image adaptive and uniform pipelines and their aggregated results.

use std::path::{Path, PathBuf};

use adsample_core::metrics::{object_records, target_objects, ConfusionCounts, ObjectRecord};
use adsample_core::{
    build_coverage, extract_boundary, extract_boundary_all_classes, nearest_boundary_field, resize_tensor,
    sample_image, solve_sampling_tensor_with, ClassId, upsample_labels, EnergyParams, ImageBuffer, IoUReport, LabelMap,
    ObjectRecallReport, SamplingTensor, SolverOptions, TargetClassSet, TrimapCurve,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::manifest::DatasetManifest;
use crate::oracle::{oracle_classify, OracleMode};
use crate::smpt;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Smoothness weight; `f64::INFINITY` gives the uniform tensor.
    pub lambda: f64,
    /// Grid on which the tensor is solved before resizing.
    pub tensor_size: (usize, usize),
    /// Downsampled resolution.
    pub resolution: (usize, usize),
    pub trimap_widths: Vec<usize>,
    pub recall_bins: usize,
    pub oracle: OracleMode,
    pub seed: u64,
    pub center_crop_square: bool,
    /// Attract samples to the boundaries of every class, not only the targets.
    pub all_class_boundaries: bool,
    /// Directory of solved tensors, read when present and written otherwise.
    pub tensor_cache: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda: 1.0,
            tensor_size: (8, 8),
            resolution: (64, 64),
            trimap_widths: vec![1, 2, 4, 8, 16, 32, 64],
            recall_bins: 5,
            oracle: OracleMode::GroundTruth,
            seed: 0,
            center_crop_square: false,
            all_class_boundaries: false,
            tensor_cache: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(m.to_string()));
        if self.lambda.is_nan() || self.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.tensor_size.0 < 2 || self.tensor_size.1 < 2 || self.resolution.0 < 2 || self.resolution.1 < 2 {
            return bad("tensor sizes must be at least 2x2");
        }
        if self.trimap_widths.contains(&0) {
            return bad("trimap widths must be positive");
        }
        if self.recall_bins == 0 {
            return bad("object recall needs at least one bin");
        }
        Ok(())
    }

    fn energy(&self) -> Result<EnergyParams> {
        Ok(if self.lambda.is_infinite() { EnergyParams::infinite() } else { EnergyParams::new(self.lambda)? })
    }
}

/// One input image with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub image: ImageBuffer,
    pub labels: LabelMap,
}

/// Work counts for one arm on one image.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ArmCost {
    pub solver_calls: usize,
    /// Unknowns of the solved linear systems (both channels).
    pub solver_unknowns: usize,
    pub solver_iterations: usize,
    pub cache_hits: usize,
    pub samples: usize,
    pub triangles: usize,
    /// Pixel-in-triangle tests made by the rasterizer.
    pub tested_pixels: usize,
    pub fallback_pixels: usize,
    pub contested_pixels: usize,
    pub inverted_triangles: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArmResult {
    /// Tensor at the downsampled resolution.
    pub tensor: SamplingTensor,
    pub downsampled: ImageBuffer,
    pub prediction: LabelMap,
    pub confusion: ConfusionCounts,
    pub iou: IoUReport,
    pub trimap: TrimapCurve,
    pub objects: Vec<ObjectRecord>,
    pub cost: ArmCost,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageStatus {
    Done { adaptive: Box<ArmResult>, uniform: Box<ArmResult> },
    /// Input could not be read or was inconsistent.
    Failed(String),
    /// The solver did not converge.
    Skipped(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub name: String,
    pub status: ImageStatus,
}

/// Metrics summed over all completed images.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub confusion: ConfusionCounts,
    pub iou: IoUReport,
    pub trimap: TrimapCurve,
    /// `None` when no target objects exist.
    pub recall: Option<ObjectRecallReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub config: PipelineConfig,
    pub images: Vec<ImageResult>,
    pub adaptive: Aggregate,
    pub uniform: Aggregate,
}

impl PipelineReport {
    pub fn completed(&self) -> impl Iterator<Item = (&str, &ArmResult, &ArmResult)> {
        self.images.iter().filter_map(|r| match &r.status {
            ImageStatus::Done { adaptive, uniform } => Some((r.name.as_str(), &**adaptive, &**uniform)),
            _ => None,
        })
    }
}

/// Everything shared by the images of one run.
struct RunContext<'a> {
    config: &'a PipelineConfig,
    targets: &'a TargetClassSet,
    num_classes: usize,
    params: EnergyParams,
}

fn cache_path(dir: &Path, name: &str, config: &PipelineConfig) -> PathBuf {
    let stem: String = name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' }).collect();
    let (h, w) = config.tensor_size;
    let scope = if config.all_class_boundaries { "all" } else { "targets" };
    dir.join(format!("{stem}-{h}x{w}-{scope}-{:016x}.smpt", config.lambda.to_bits()))
}

/// Solved tensor at `tensor_size`, with the solver work it took.
fn solve_for(sample: &Sample, ctx: &RunContext, cost: &mut ArmCost) -> Result<SamplingTensor> {
    let cached = ctx.config.tensor_cache.as_ref().map(|d| cache_path(d, &sample.name, ctx.config));
    if let Some(path) = cached.as_ref().filter(|p| p.is_file()) {
        let t = smpt::read(path)?;
        if t.shape() == ctx.config.tensor_size {
            cost.cache_hits += 1;
            return Ok(t);
        }
    }
    let boundary = if ctx.config.all_class_boundaries {
        extract_boundary_all_classes(&sample.labels)
    } else {
        extract_boundary(&sample.labels, ctx.targets)?
    };
    let (h0, w0) = ctx.config.tensor_size;
    let b = nearest_boundary_field(&boundary, h0, w0)?;
    let report = solve_sampling_tensor_with(&b, &ctx.params, &SolverOptions::default())?;
    cost.solver_calls += 1;
    cost.solver_unknowns += (h0 - 2) * w0 + h0 * (w0 - 2);
    cost.solver_iterations += report.iterations[0] + report.iterations[1];
    if let Some(path) = cached {
        smpt::write(&path, &report.tensor)?;
    }
    Ok(report.tensor)
}

fn run_arm(
    sample: &Sample,
    phi: SamplingTensor,
    objects: &[(ClassId, Vec<usize>)],
    ctx: &RunContext,
    rng: &mut ChaCha8Rng,
    mut cost: ArmCost,
) -> Result<ArmResult> {
    let downsampled = sample_image(&sample.image, &phi).to_image()?;
    let scores = oracle_classify(&sample.labels, &phi, ctx.num_classes, ctx.config.oracle, rng)?;
    let coverage = build_coverage(&phi, sample.labels.grid());
    let prediction = upsample_labels(&scores, &coverage)?;
    let confusion = ConfusionCounts::from_maps(&prediction, &sample.labels)?;
    let iou = confusion.report(ctx.targets);
    let trimap = adsample_core::trimap_accuracy(&prediction, &sample.labels, ctx.targets, &ctx.config.trimap_widths)?;
    let stats = coverage.stats();
    cost.samples += phi.grid_h() * phi.grid_w();
    cost.triangles += stats.triangles;
    cost.tested_pixels += stats.tested_pixels;
    cost.fallback_pixels += stats.fallback_pixels;
    cost.contested_pixels += stats.contested_pixels;
    cost.inverted_triangles += stats.inverted_triangles;
    Ok(ArmResult {
        tensor: phi,
        downsampled,
        objects: object_records(&prediction, objects),
        prediction,
        confusion,
        iou,
        trimap,
        cost,
    })
}

fn process(sample: &Sample, index: usize, ctx: &RunContext) -> Result<(ArmResult, ArmResult)> {
    if sample.image.grid() != sample.labels.grid() {
        return Err(Error::Usage(format!(
            "image is {:?} but labels are {:?}",
            sample.image.grid().shape(),
            sample.labels.grid().shape()
        )));
    }
    let (h, w) = ctx.config.resolution;
    let objects = target_objects(&sample.labels, ctx.targets);
    // both arms see the same noise stream, so identical tensors give identical results
    let mut base_rng = ChaCha8Rng::seed_from_u64(ctx.config.seed);
    base_rng.set_stream(index as u64);

    let mut cost = ArmCost::default();
    let solved = solve_for(sample, ctx, &mut cost)?;
    let adaptive = run_arm(sample, resize_tensor(&solved, h, w)?, &objects, ctx, &mut base_rng.clone(), cost)?;
    let uniform =
        run_arm(sample, SamplingTensor::uniform(h, w)?, &objects, ctx, &mut base_rng, ArmCost::default())?;
    Ok((adaptive, uniform))
}

fn aggregate<'a>(arms: impl Iterator<Item = &'a ArmResult> + Clone, config: &PipelineConfig, targets: &TargetClassSet) -> Result<Aggregate> {
    let mut confusion = ConfusionCounts::default();
    let mut band_pixels = vec![0u64; config.trimap_widths.len()];
    let mut correct_pixels = vec![0u64; config.trimap_widths.len()];
    let mut records = Vec::new();
    for arm in arms {
        confusion.merge(&arm.confusion);
        for k in 0..band_pixels.len() {
            band_pixels[k] += arm.trimap.band_pixels[k];
            correct_pixels[k] += arm.trimap.correct_pixels[k];
        }
        records.extend_from_slice(&arm.objects);
    }
    let accuracy = band_pixels
        .iter()
        .zip(&correct_pixels)
        .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    let trimap = TrimapCurve { widths: config.trimap_widths.clone(), accuracy, band_pixels, correct_pixels };
    let recall = if records.is_empty() { None } else { Some(ObjectRecallReport::from_records(&records, config.recall_bins)?) };
    Ok(Aggregate { iou: confusion.report(targets), confusion, trimap, recall })
}

/// Runs both arms on `count` images produced by `load`, in parallel, and
/// reduces the results in index order.
pub fn run_samples<F>(
    count: usize,
    load: F,
    config: &PipelineConfig,
    targets: &TargetClassSet,
    num_classes: usize,
) -> Result<PipelineReport>
where
    F: Fn(usize) -> Result<Sample> + Sync,
{
    config.validate()?;
    if let Some(dir) = &config.tensor_cache {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let ctx = RunContext { config, targets, num_classes, params: config.energy()? };
    let images: Vec<ImageResult> = (0..count)
        .into_par_iter()
        .map(|k| {
            let sample = match load(k) {
                Ok(s) => s,
                Err(e) => return ImageResult { name: format!("#{k}"), status: ImageStatus::Failed(e.to_string()) },
            };
            let status = match process(&sample, k, &ctx) {
                Ok((a, u)) => ImageStatus::Done { adaptive: Box::new(a), uniform: Box::new(u) },
                Err(Error::Core(e @ adsample_core::Error::Convergence { .. })) => ImageStatus::Skipped(e.to_string()),
                Err(e) => ImageStatus::Failed(e.to_string()),
            };
            ImageResult { name: sample.name, status }
        })
        .collect();
    for r in &images {
        match &r.status {
            ImageStatus::Failed(m) => log::warn!("{}: failed: {m}", r.name),
            ImageStatus::Skipped(m) => log::warn!("{}: skipped: {m}", r.name),
            ImageStatus::Done { .. } => {}
        }
    }
    let done: Vec<(&ArmResult, &ArmResult)> = images
        .iter()
        .filter_map(|r| match &r.status {
            ImageStatus::Done { adaptive, uniform } => Some((&**adaptive, &**uniform)),
            _ => None,
        })
        .collect();
    let adaptive = aggregate(done.iter().map(|d| d.0), config, targets)?;
    let mut uniform = aggregate(done.iter().map(|d| d.1), config, targets)?;
    let adaptive = match (adaptive.recall.clone(), uniform.recall.as_ref()) {
        (Some(a), Some(u)) => Aggregate { recall: Some(a.with_baseline(u)?), ..adaptive },
        _ => adaptive,
    };
    if let Some(u) = uniform.recall.take() {
        uniform.recall = Some(u.clone().with_baseline(&u)?);
    }
    Ok(PipelineReport { config: config.clone(), images, adaptive, uniform })
}

/// Reads one manifest item, applying the optional center crop.
pub fn load_item(manifest: &DatasetManifest, index: usize, center_crop: bool) -> Result<Sample> {
    let item = &manifest.items[index];
    let image = io::read_image(&manifest.image_path(item))?;
    let labels = io::read_labels(&manifest.label_path(item), manifest.ignore)?;
    manifest.check_labels(&labels)?;
    let (image, labels) =
        if center_crop { (io::center_crop_image(&image)?, io::center_crop_labels(&labels)?) } else { (image, labels) };
    let name = item.image.file_stem().map_or_else(|| format!("#{index}"), |s| s.to_string_lossy().into_owned());
    Ok(Sample { name, image, labels })
}

/// Runs the pipeline over every item of a manifest.
pub fn run_pipeline(manifest: &DatasetManifest, config: &PipelineConfig) -> Result<PipelineReport> {
    let targets = manifest.target_set()?;
    run_samples(
        manifest.items.len(),
        |k| load_item(manifest, k, config.center_crop_square),
        config,
        &targets,
        manifest.num_classes(),
    )
}
