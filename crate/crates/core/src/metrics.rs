//! Segmentation quality measures: confusion-count IoU, trimap (boundary band)
//! accuracy and size-binned object recall.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;

use crate::boundary::extract_boundary;
use crate::error::{Error, Result};
use crate::grid::{ClassId, LabelMap, TargetClassSet};

fn check_same_grid(pred: &LabelMap, gt: &LabelMap) -> Result<()> {
    if pred.grid() != gt.grid() {
        return Err(Error::Shape { expected: gt.grid().shape(), found: pred.grid().shape() });
    }
    Ok(())
}

/// Per-class pixel counts; merge across images by summing, then derive IoU.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    /// class -> (intersection, ground-truth pixels, predicted pixels)
    counts: BTreeMap<ClassId, (u64, u64, u64)>,
    total: u64,
    correct: u64,
}

impl ConfusionCounts {
    /// Counts every pixel whose ground truth is not the ignore id.
    pub fn from_maps(pred: &LabelMap, gt: &LabelMap) -> Result<Self> {
        check_same_grid(pred, gt)?;
        let mut out = ConfusionCounts::default();
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if gt.is_ignored(g) {
                continue;
            }
            out.total += 1;
            out.counts.entry(g).or_default().1 += 1;
            if !gt.is_ignored(p) {
                out.counts.entry(p).or_default().2 += 1;
            }
            if p == g {
                out.correct += 1;
                out.counts.entry(g).or_default().0 += 1;
            }
        }
        Ok(out)
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (&class, &(i, g, p)) in &other.counts {
            let e = self.counts.entry(class).or_default();
            e.0 += i;
            e.1 += g;
            e.2 += p;
        }
        self.total += other.total;
        self.correct += other.correct;
    }

    /// `(intersection, union)` for a class.
    pub fn class_counts(&self, class: ClassId) -> (u64, u64) {
        self.counts.get(&class).map_or((0, 0), |&(i, g, p)| (i, g + p - i))
    }

    pub fn pixel_accuracy(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    pub fn report(&self, targets: &TargetClassSet) -> IoUReport {
        let per_class: BTreeMap<ClassId, f64> = self
            .counts
            .keys()
            .filter_map(|&c| {
                let (i, u) = self.class_counts(c);
                (u > 0).then(|| (c, i as f64 / u as f64))
            })
            .collect();
        let mean = |it: &mut dyn Iterator<Item = f64>| {
            let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
            (n > 0).then(|| sum / n as f64)
        };
        let mean_all = mean(&mut per_class.values().copied());
        let mean_target = mean(&mut per_class.iter().filter(|(c, _)| targets.contains(**c)).map(|(_, v)| *v));
        IoUReport { per_class, mean_all, mean_target, pixel_accuracy: self.pixel_accuracy() }
    }
}

/// IoU per class plus the means over all present classes and over target classes.
/// Classes with an empty union are left out of both means.
#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    pub per_class: BTreeMap<ClassId, f64>,
    pub mean_all: Option<f64>,
    pub mean_target: Option<f64>,
    pub pixel_accuracy: Option<f64>,
}

pub fn iou(pred: &LabelMap, gt: &LabelMap, targets: &TargetClassSet) -> Result<IoUReport> {
    Ok(ConfusionCounts::from_maps(pred, gt)?.report(targets))
}

/// Accuracy inside bands of growing width around the ground-truth boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimapCurve {
    pub widths: Vec<usize>,
    /// `None` where the band holds no evaluated pixel.
    pub accuracy: Vec<Option<f64>>,
    /// Non-ignored pixels inside each band.
    pub band_pixels: Vec<u64>,
    pub correct_pixels: Vec<u64>,
}

/// Chessboard distance from every pixel to the nearest marked pixel, by
/// 8-connected breadth-first search. Unreachable pixels get `usize::MAX`.
pub fn chessboard_distance(mask: &[bool], height: usize, width: usize) -> Vec<usize> {
    let mut dist = vec![usize::MAX; height * width];
    let mut queue = VecDeque::new();
    for (p, &m) in mask.iter().enumerate() {
        if m {
            dist[p] = 0;
            queue.push_back(p);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (r, c) = ((p / width) as isize, (p % width) as isize);
        let next = dist[p] + 1;
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= height as isize || nc >= width as isize {
                    continue;
                }
                let q = nr as usize * width + nc as usize;
                if dist[q] == usize::MAX {
                    dist[q] = next;
                    queue.push_back(q);
                }
            }
        }
    }
    dist
}

pub fn trimap_accuracy(
    pred: &LabelMap,
    gt: &LabelMap,
    targets: &TargetClassSet,
    widths: &[usize],
) -> Result<TrimapCurve> {
    check_same_grid(pred, gt)?;
    if widths.contains(&0) {
        return Err(Error::Config("trimap widths must be positive"));
    }
    let boundary = extract_boundary(gt, targets)?;
    let (h, w) = gt.grid().shape();
    let dist = chessboard_distance(boundary.mask(), h, w);
    let mut band_pixels = vec![0u64; widths.len()];
    let mut correct_pixels = vec![0u64; widths.len()];
    for (p, &d) in dist.iter().enumerate() {
        let g = gt.labels()[p];
        if d == usize::MAX || gt.is_ignored(g) {
            continue;
        }
        let ok = pred.labels()[p] == g;
        for (k, &width) in widths.iter().enumerate() {
            if d <= width {
                band_pixels[k] += 1;
                correct_pixels[k] += u64::from(ok);
            }
        }
    }
    let accuracy = band_pixels
        .iter()
        .zip(&correct_pixels)
        .map(|(&n, &c)| (n > 0).then(|| c as f64 / n as f64))
        .collect();
    Ok(TrimapCurve { widths: widths.to_vec(), accuracy, band_pixels, correct_pixels })
}

/// One ground-truth object and how much of it was recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRecord {
    pub class: ClassId,
    pub area: usize,
    pub correct: usize,
    /// Row-major index of the object's first pixel, used to order equal areas.
    pub anchor: usize,
}

impl ObjectRecord {
    pub fn recall(&self) -> f64 {
        self.correct as f64 / self.area as f64
    }
}

/// 4-connected components of same-class target pixels, as lists of pixel indices.
pub fn target_objects(gt: &LabelMap, targets: &TargetClassSet) -> Vec<(ClassId, Vec<usize>)> {
    let (h, w) = gt.grid().shape();
    let labels = gt.labels();
    let mut seen = vec![false; labels.len()];
    let mut objects = Vec::new();
    let mut stack = Vec::new();
    for start in 0..labels.len() {
        let class = labels[start];
        if seen[start] || !targets.contains(class) || gt.is_ignored(class) {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(p) = stack.pop() {
            pixels.push(p);
            let (r, c) = (p / w, p % w);
            let mut push = |q: usize| {
                if !seen[q] && labels[q] == class {
                    seen[q] = true;
                    stack.push(q);
                }
            };
            if r > 0 {
                push(p - w);
            }
            if r + 1 < h {
                push(p + w);
            }
            if c > 0 {
                push(p - 1);
            }
            if c + 1 < w {
                push(p + 1);
            }
        }
        pixels.sort_unstable();
        objects.push((class, pixels));
    }
    objects
}

/// Groups target pixels by an instance map instead of connected components.
/// Instance id 0 means "no instance".
pub fn instance_objects(
    gt: &LabelMap,
    instances: &[u32],
    targets: &TargetClassSet,
) -> Result<Vec<(ClassId, Vec<usize>)>> {
    if instances.len() != gt.labels().len() {
        return Err(Error::Size { what: "instance map length", value: instances.len() });
    }
    let mut groups: BTreeMap<(u32, ClassId), Vec<usize>> = BTreeMap::new();
    for (p, (&inst, &class)) in instances.iter().zip(gt.labels()).enumerate() {
        if inst != 0 && targets.contains(class) && !gt.is_ignored(class) {
            groups.entry((inst, class)).or_default().push(p);
        }
    }
    let mut out: Vec<(ClassId, Vec<usize>)> = groups.into_iter().map(|((_, c), px)| (c, px)).collect();
    out.sort_by_key(|(_, px)| px[0]);
    Ok(out)
}

/// Recall of each object: pixels predicted as the object's class over its area.
pub fn object_records(pred: &LabelMap, objects: &[(ClassId, Vec<usize>)]) -> Vec<ObjectRecord> {
    objects
        .iter()
        .map(|(class, pixels)| ObjectRecord {
            class: *class,
            area: pixels.len(),
            correct: pixels.iter().filter(|&&p| pred.labels()[p] == *class).count(),
            anchor: pixels[0],
        })
        .collect()
}

/// Mean object recall in equal-count bins ordered by area (bin 0 = smallest).
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectRecallReport {
    pub bins: usize,
    /// Set when fewer objects than requested bins were available.
    pub reduced_from: Option<usize>,
    pub per_bin: Vec<f64>,
    pub bin_objects: Vec<usize>,
    /// Smallest and largest area in each bin.
    pub bin_areas: Vec<(usize, usize)>,
    /// Mean recall per class and bin; `None` where the class has no object in the bin.
    pub per_class_per_bin: BTreeMap<ClassId, Vec<Option<f64>>>,
    /// Per-bin ratio to a baseline report, once [`Self::with_baseline`] is applied.
    pub relative: Option<Vec<Option<f64>>>,
}

impl ObjectRecallReport {
    /// Objects are ordered by area (then first pixel, then image order) and split
    /// into `num_bins` bins whose sizes differ by at most one.
    pub fn from_records(records: &[ObjectRecord], num_bins: usize) -> Result<Self> {
        if num_bins == 0 {
            return Err(Error::Config("object recall needs at least one bin"));
        }
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by_key(|&k| (records[k].area, records[k].anchor, k));
        let bins = num_bins.min(records.len());
        let reduced_from = (bins < num_bins).then_some(num_bins);
        let mut per_bin = Vec::with_capacity(bins);
        let mut bin_objects = Vec::with_capacity(bins);
        let mut bin_areas = Vec::with_capacity(bins);
        let mut per_class: BTreeMap<ClassId, Vec<(f64, usize)>> = BTreeMap::new();
        for b in 0..bins {
            let lo = b * records.len() / bins;
            let hi = (b + 1) * records.len() / bins;
            let members = &order[lo..hi];
            let sum: f64 = members.iter().map(|&k| records[k].recall()).sum();
            per_bin.push(sum / members.len() as f64);
            bin_objects.push(members.len());
            bin_areas.push((records[members[0]].area, records[members[members.len() - 1]].area));
            for &k in members {
                let e = per_class.entry(records[k].class).or_insert_with(|| vec![(0.0, 0); bins]);
                e[b].0 += records[k].recall();
                e[b].1 += 1;
            }
        }
        let per_class_per_bin = per_class
            .into_iter()
            .map(|(c, v)| (c, v.into_iter().map(|(s, n)| (n > 0).then(|| s / n as f64)).collect()))
            .collect();
        Ok(ObjectRecallReport {
            bins,
            reduced_from,
            per_bin,
            bin_objects,
            bin_areas,
            per_class_per_bin,
            relative: None,
        })
    }

    /// Attaches per-bin ratios `self / baseline`; bins must line up.
    pub fn with_baseline(mut self, baseline: &ObjectRecallReport) -> Result<Self> {
        if baseline.bins != self.bins {
            return Err(Error::Shape { expected: (baseline.bins, 1), found: (self.bins, 1) });
        }
        self.relative = Some(
            self.per_bin
                .iter()
                .zip(&baseline.per_bin)
                .map(|(&a, &b)| (b > 0.0).then(|| a / b))
                .collect(),
        );
        Ok(self)
    }
}

/// Size-binned recall of the 4-connected target objects of `gt`.
pub fn object_recall(
    pred: &LabelMap,
    gt: &LabelMap,
    targets: &TargetClassSet,
    num_bins: usize,
) -> Result<ObjectRecallReport> {
    check_same_grid(pred, gt)?;
    let objects = target_objects(gt, targets);
    ObjectRecallReport::from_records(&object_records(pred, &objects), num_bins)
}
