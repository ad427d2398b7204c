use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adsample::core::approx::{bound_experiment, CurveSpec};
use adsample::core::{
    build_coverage, extract_boundary, extract_boundary_all_classes, nearest_boundary_field, object_recall,
    resize_tensor, sample_image, solve_sampling_tensor, trimap_accuracy, upsample_labels, ClassId, EnergyParams,
    LabelMap, ScoreMap, TargetClassSet,
};
use adsample::error::{Error, Result};
use adsample::pipeline::ImageStatus;
use adsample::{io, report, smpt, DatasetManifest, ManifestItem, OracleMode, PipelineConfig, SyntheticScene};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adsample", version, about = "Boundary-adaptive downsampling and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ClassArgs {
    /// Target class ids, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    targets: Vec<ClassId>,
    /// Label value excluded from evaluation.
    #[arg(long, default_value_t = io::DEFAULT_IGNORE_ID)]
    ignore: ClassId,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a sampling tensor from a label map.
    SolveTensor {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_delimiter = ',')]
        targets: Vec<ClassId>,
        /// Use the boundaries of every class.
        #[arg(long)]
        all_classes: bool,
        #[arg(long, default_value_t = io::DEFAULT_IGNORE_ID)]
        ignore: ClassId,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [8, 8])]
        tensor_size: Vec<usize>,
        #[arg(long)]
        center_crop_square: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample an image at the locations of a tensor.
    Downsample {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        tensor: PathBuf,
        /// Resize the tensor to this resolution first.
        #[arg(long, num_args = 2, value_names = ["H", "W"])]
        resolution: Option<Vec<usize>>,
        #[arg(long)]
        center_crop_square: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Interpolate low-resolution labels back to full resolution.
    Upsample {
        /// Labels on the tensor grid.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        tensor: PathBuf,
        /// Output size.
        #[arg(long, num_args = 2, value_names = ["H", "W"], required = true)]
        resolution: Vec<usize>,
        /// Number of classes; defaults to the largest label plus one.
        #[arg(long)]
        classes: Option<usize>,
        #[arg(long, default_value_t = io::DEFAULT_IGNORE_ID)]
        ignore: ClassId,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-class IoU of a prediction.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        classes: ClassArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy in bands around the ground-truth boundaries.
    Trimap {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        classes: ClassArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8, 16, 32, 64])]
        widths: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Object recall in size bins.
    ObjectRecall {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        classes: ClassArgs,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Polyline approximation error against segment count.
    BoundExperiment {
        /// circle:R, arc:R,SWEEP, ellipse:A,B or line:LENGTH
        #[arg(long, default_value = "circle:1")]
        curve: String,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32, 64, 128, 256, 512])]
        segments: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write seeded synthetic scenes and a manifest.
    GenScenes {
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [256, 256])]
        size: Vec<usize>,
        #[arg(long, default_value_t = 6)]
        min_objects: usize,
        #[arg(long, default_value_t = 12)]
        max_objects: usize,
        #[arg(long, default_value_t = 2.0)]
        min_radius: f64,
        #[arg(long, default_value_t = 64.0)]
        max_radius: f64,
        /// Fraction of objects drawn as regular polygons.
        #[arg(long, default_value_t = 0.0)]
        polygons: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Paired adaptive and uniform evaluation over a dataset manifest.
    Pipeline {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [8, 8])]
        tensor_size: Vec<usize>,
        #[arg(long, num_args = 2, value_names = ["H", "W"], default_values_t = [64, 64])]
        resolution: Vec<usize>,
        #[arg(long, default_value = "gt")]
        oracle: OracleMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_values_t = [1, 2, 4, 8, 16, 32, 64])]
        widths: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        bins: usize,
        #[arg(long)]
        center_crop_square: bool,
        #[arg(long)]
        all_classes: bool,
        /// Directory for solved tensors in SMPT format.
        #[arg(long)]
        tensor_cache: Option<PathBuf>,
        /// Also write downsampled images and predictions.
        #[arg(long)]
        save_images: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

fn pair(v: &[usize]) -> (usize, usize) {
    (v[0], v[1])
}

fn maybe_crop_labels(labels: LabelMap, crop: bool) -> Result<LabelMap> {
    if crop {
        io::center_crop_labels(&labels)
    } else {
        Ok(labels)
    }
}

fn target_set(ids: &[ClassId]) -> Result<TargetClassSet> {
    TargetClassSet::new(ids.iter().copied()).map_err(|_| Error::Usage("--targets needs at least one class".into()))
}

fn parse_curve(text: &str) -> Result<CurveSpec> {
    let bad = || Error::Usage(format!("cannot parse curve {text:?}"));
    let (kind, args) = text.split_once(':').ok_or_else(bad)?;
    let nums: Vec<f64> = args.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?;
    let curve = match (kind, nums.as_slice()) {
        ("circle", [r]) => CurveSpec::circle([0.0, 0.0], *r),
        ("arc", [r, sweep]) => CurveSpec::arc([0.0, 0.0], *r, 0.0, *sweep),
        ("ellipse", [a, b]) => CurveSpec::ellipse([0.0, 0.0], *a, *b),
        ("line", [len]) => CurveSpec::line([0.0, 0.0], [0.0, *len]),
        _ => return Err(bad()),
    };
    Ok(curve?)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SolveTensor { labels, targets, all_classes, ignore, lambda, tensor_size, center_crop_square, out } => {
            let labels = maybe_crop_labels(io::read_labels(&labels, Some(ignore))?, center_crop_square)?;
            let boundary = if all_classes {
                extract_boundary_all_classes(&labels)
            } else {
                extract_boundary(&labels, &target_set(&targets)?)?
            };
            let (h, w) = pair(&tensor_size);
            let b = nearest_boundary_field(&boundary, h, w)?;
            let params = if lambda.is_infinite() { EnergyParams::infinite() } else { EnergyParams::new(lambda)? };
            let phi = solve_sampling_tensor(&b, &params)?;
            smpt::write(&out, &phi)?;
            println!("wrote {h}x{w} tensor ({} boundary pixels) to {}", boundary.count(), out.display());
        }
        Command::Downsample { image, tensor, resolution, center_crop_square, out } => {
            let mut img = io::read_image(&image)?;
            if center_crop_square {
                img = io::center_crop_image(&img)?;
            }
            let mut phi = smpt::read(&tensor)?;
            if let Some(r) = resolution {
                phi = resize_tensor(&phi, r[0], r[1])?;
            }
            io::write_image(&out, &sample_image(&img, &phi).to_image()?)?;
            println!("wrote {}x{} samples to {}", phi.grid_h(), phi.grid_w(), out.display());
        }
        Command::Upsample { labels, tensor, resolution, classes, ignore, out } => {
            let low = io::read_labels(&labels, Some(ignore))?;
            let phi = smpt::read(&tensor)?;
            if low.grid().shape() != phi.shape() {
                return Err(Error::Usage(format!(
                    "labels are {:?} but the tensor is {:?}",
                    low.grid().shape(),
                    phi.shape()
                )));
            }
            let k = classes.unwrap_or_else(|| {
                low.labels().iter().filter(|&&l| l != ignore).max().map_or(1, |&m| m as usize + 1)
            });
            let scores = ScoreMap::one_hot(phi.grid_h(), phi.grid_w(), k, low.labels(), Some(ignore))?;
            let grid = adsample::core::PixelGrid::new(resolution[0], resolution[1])?;
            let coverage = build_coverage(&phi, grid);
            io::write_labels(&out, &upsample_labels(&scores, &coverage)?)?;
            let s = coverage.stats();
            println!("wrote {}x{} labels ({} fallback pixels) to {}", grid.height(), grid.width(), s.fallback_pixels, out.display());
        }
        Command::Evaluate { pred, gt, classes, out } => {
            let (p, g) = (io::read_labels(&pred, None)?, io::read_labels(&gt, Some(classes.ignore))?);
            let rep = adsample::core::iou(&p, &g, &target_set(&classes.targets)?)?;
            report::write_iou(&out, &[("prediction", &rep)])?;
            println!("mean IoU {:?}, target mean IoU {:?}", rep.mean_all, rep.mean_target);
        }
        Command::Trimap { pred, gt, classes, widths, out } => {
            let (p, g) = (io::read_labels(&pred, None)?, io::read_labels(&gt, Some(classes.ignore))?);
            let curve = trimap_accuracy(&p, &g, &target_set(&classes.targets)?, &widths)?;
            report::write_trimap(&out, &[("prediction", &curve)])?;
        }
        Command::ObjectRecall { pred, gt, classes, bins, out } => {
            let (p, g) = (io::read_labels(&pred, None)?, io::read_labels(&gt, Some(classes.ignore))?);
            let rep = object_recall(&p, &g, &target_set(&classes.targets)?, bins)?;
            report::write_object_recall(&out, &[("prediction", &rep)])?;
        }
        Command::BoundExperiment { curve, segments, out } => {
            let rows = bound_experiment(&parse_curve(&curve)?, &segments)?;
            let mut w = csv::Writer::from_path(&out)?;
            w.write_record(["segments", "sample_points", "epsilon", "arc_bound", "small_angle_bound", "scaled_error", "ratio_to_previous"])?;
            for r in &rows {
                w.write_record([
                    r.segments.to_string(),
                    r.sample_points.to_string(),
                    r.epsilon.to_string(),
                    r.arc_bound.to_string(),
                    r.small_angle_bound.to_string(),
                    r.scaled_error.to_string(),
                    r.ratio_to_previous.map_or_else(String::new, |v| v.to_string()),
                ])?;
            }
            w.flush().map_err(|e| Error::io(&out, e))?;
        }
        Command::GenScenes { count, seed, size, min_objects, max_objects, min_radius, max_radius, polygons, out } => {
            fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut items = Vec::with_capacity(count);
            for k in 0..count {
                let spec = SyntheticScene {
                    objects: (min_objects, max_objects),
                    radius: (min_radius, max_radius),
                    polygon_fraction: polygons,
                    ..SyntheticScene::disks(seed.wrapping_add(k as u64), size[0], size[1])
                };
                let (image, labels) = adsample::generate_scene(&spec)?;
                let item = ManifestItem {
                    image: PathBuf::from(format!("scene_{k:04}.png")),
                    label: PathBuf::from(format!("scene_{k:04}_label.png")),
                };
                io::write_image(&out.join(&item.image), &image)?;
                io::write_labels(&out.join(&item.label), &labels)?;
                items.push(item);
            }
            let manifest = DatasetManifest {
                root: PathBuf::from("."),
                items,
                classes: [(0, "background"), (1, "disc_a"), (2, "disc_b")]
                    .into_iter()
                    .map(|(k, v)| (k, v.to_string()))
                    .collect(),
                targets: vec![1, 2],
                ignore: Some(io::DEFAULT_IGNORE_ID),
            };
            manifest.save(&out.join("manifest.json"))?;
            println!("wrote {count} scenes to {}", out.display());
        }
        Command::Pipeline {
            manifest,
            lambda,
            tensor_size,
            resolution,
            oracle,
            seed,
            widths,
            bins,
            center_crop_square,
            all_classes,
            tensor_cache,
            save_images,
            out,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let config = PipelineConfig {
                lambda,
                tensor_size: pair(&tensor_size),
                resolution: pair(&resolution),
                trimap_widths: widths,
                recall_bins: bins,
                oracle,
                seed,
                center_crop_square,
                all_class_boundaries: all_classes,
                tensor_cache,
            };
            let rep = adsample::run_pipeline(&m, &config)?;
            let mut inputs = vec![manifest.clone()];
            for item in &m.items {
                inputs.push(m.image_path(item));
                inputs.push(m.label_path(item));
            }
            let run_json = report::write_reports(&rep, &out, &inputs)?;
            if save_images {
                save_outputs(&rep, &out.join("images"))?;
            }
            print_summary(&rep);
            println!("wrote reports and {}", run_json.display());
        }
    }
    Ok(())
}

fn save_outputs(rep: &adsample::PipelineReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, adaptive, uniform) in rep.completed() {
        for (arm, r) in [("adaptive", adaptive), ("uniform", uniform)] {
            io::write_image(&dir.join(format!("{name}_{arm}_downsampled.png")), &r.downsampled)?;
            io::write_labels(&dir.join(format!("{name}_{arm}_prediction.png")), &r.prediction)?;
            smpt::write(&dir.join(format!("{name}_{arm}.smpt")), &r.tensor)?;
        }
    }
    Ok(())
}

fn print_summary(rep: &adsample::PipelineReport) {
    let failed = rep.images.iter().filter(|r| !matches!(r.status, ImageStatus::Done { .. })).count();
    println!("{} images, {} not completed", rep.images.len(), failed);
    for (arm, agg) in [("adaptive", &rep.adaptive), ("uniform", &rep.uniform)] {
        println!(
            "{arm}: target mIoU {:?}, mIoU {:?}, pixel accuracy {:?}",
            agg.iou.mean_target, agg.iou.mean_all, agg.iou.pixel_accuracy
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
