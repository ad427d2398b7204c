//! CSV reports (one file per metric family) and the run-level JSON manifest.

use std::fs;
use std::path::{Path, PathBuf};

use adsample_core::{IoUReport, ObjectRecallReport, TrimapCurve};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pipeline::{ImageStatus, PipelineConfig, PipelineReport};

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

/// `arm,metric,class,value` rows: per-class IoU, then the means and pixel accuracy.
pub fn write_iou(path: &Path, arms: &[(&str, &IoUReport)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["arm", "metric", "class", "value"])?;
    for (arm, rep) in arms {
        for (class, v) in &rep.per_class {
            w.write_record([*arm, "iou", &class.to_string(), &v.to_string()])?;
        }
        w.write_record([*arm, "mean_iou_all", "", &opt(rep.mean_all)])?;
        w.write_record([*arm, "mean_iou_target", "", &opt(rep.mean_target)])?;
        w.write_record([*arm, "pixel_accuracy", "", &opt(rep.pixel_accuracy)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per band width and arm.
pub fn write_trimap(path: &Path, arms: &[(&str, &TrimapCurve)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["arm", "width", "band_pixels", "correct_pixels", "accuracy"])?;
    for (arm, curve) in arms {
        for k in 0..curve.widths.len() {
            w.write_record([
                *arm,
                &curve.widths[k].to_string(),
                &curve.band_pixels[k].to_string(),
                &curve.correct_pixels[k].to_string(),
                &opt(curve.accuracy[k]),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per size bin and arm; `relative` is the ratio to the baseline arm when attached.
pub fn write_object_recall(path: &Path, arms: &[(&str, &ObjectRecallReport)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["arm", "bin", "objects", "min_area", "max_area", "recall", "relative"])?;
    for (arm, rep) in arms {
        for b in 0..rep.bins {
            let rel = rep.relative.as_ref().and_then(|r| r[b]);
            w.write_record([
                *arm,
                &b.to_string(),
                &rep.bin_objects[b].to_string(),
                &rep.bin_areas[b].0.to_string(),
                &rep.bin_areas[b].1.to_string(),
                &rep.per_bin[b].to_string(),
                &opt(rel),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_per_image(path: &Path, report: &PipelineReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "image",
        "status",
        "detail",
        "adaptive_mean_iou_target",
        "uniform_mean_iou_target",
        "adaptive_pixel_accuracy",
        "uniform_pixel_accuracy",
    ])?;
    for r in &report.images {
        match &r.status {
            ImageStatus::Done { adaptive, uniform } => w.write_record([
                r.name.as_str(),
                "ok",
                "",
                &opt(adaptive.iou.mean_target),
                &opt(uniform.iou.mean_target),
                &opt(adaptive.iou.pixel_accuracy),
                &opt(uniform.iou.pixel_accuracy),
            ])?,
            ImageStatus::Failed(m) => w.write_record([r.name.as_str(), "failed", m, "", "", "", ""])?,
            ImageStatus::Skipped(m) => w.write_record([r.name.as_str(), "skipped", m, "", "", "", ""])?,
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_cost(path: &Path, report: &PipelineReport) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record([
        "image",
        "arm",
        "solver_calls",
        "solver_unknowns",
        "solver_iterations",
        "cache_hits",
        "samples",
        "triangles",
        "tested_pixels",
        "fallback_pixels",
        "contested_pixels",
        "inverted_triangles",
    ])?;
    for (name, adaptive, uniform) in report.completed() {
        for (arm, r) in [("adaptive", adaptive), ("uniform", uniform)] {
            let c = r.cost;
            let nums = [
                c.solver_calls,
                c.solver_unknowns,
                c.solver_iterations,
                c.cache_hits,
                c.samples,
                c.triangles,
                c.tested_pixels,
                c.fallback_pixels,
                c.contested_pixels,
                c.inverted_triangles,
            ]
            .map(|n| n.to_string());
            let mut row = vec![name.to_string(), arm.to_string()];
            row.extend(nums);
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a PipelineConfig,
    oracle_seed: u64,
    images: usize,
    completed: usize,
    failed: usize,
    skipped: usize,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
}

pub const REPORT_FILES: [&str; 5] = ["iou.csv", "trimap.csv", "object_recall.csv", "per_image.csv", "cost.csv"];

/// Writes every report family into `out_dir` plus `run.json`, which records
/// the configuration and SHA-256 hashes of `inputs` and of the written reports.
pub fn write_reports(report: &PipelineReport, out_dir: &Path, inputs: &[PathBuf]) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (a, u) = (&report.adaptive, &report.uniform);
    write_iou(&out_dir.join(REPORT_FILES[0]), &[("adaptive", &a.iou), ("uniform", &u.iou)])?;
    write_trimap(&out_dir.join(REPORT_FILES[1]), &[("adaptive", &a.trimap), ("uniform", &u.trimap)])?;
    let recall: Vec<(&str, &ObjectRecallReport)> =
        [("adaptive", a.recall.as_ref()), ("uniform", u.recall.as_ref())]
            .into_iter()
            .filter_map(|(n, r)| r.map(|r| (n, r)))
            .collect();
    write_object_recall(&out_dir.join(REPORT_FILES[2]), &recall)?;
    write_per_image(&out_dir.join(REPORT_FILES[3]), report)?;
    write_cost(&out_dir.join(REPORT_FILES[4]), report)?;

    let hash = |p: &Path, shown: String| sha256_file(p).map(|sha256| FileHash { path: shown, sha256 });
    let count = |f: fn(&ImageStatus) -> bool| report.images.iter().filter(|r| f(&r.status)).count();
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        oracle_seed: report.config.seed,
        images: report.images.len(),
        completed: count(|s| matches!(s, ImageStatus::Done { .. })),
        failed: count(|s| matches!(s, ImageStatus::Failed(_))),
        skipped: count(|s| matches!(s, ImageStatus::Skipped(_))),
        inputs: inputs
            .iter()
            .filter(|p| p.is_file())
            .map(|p| hash(p, p.display().to_string()))
            .collect::<Result<_>>()?,
        outputs: REPORT_FILES
            .iter()
            .map(|f| hash(&out_dir.join(f), f.to_string()))
            .collect::<Result<_>>()?,
    };
    let path = out_dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
