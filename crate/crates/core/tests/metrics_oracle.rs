use adsample_core::metrics::{chessboard_distance, object_records, target_objects, ConfusionCounts};
use adsample_core::{
    extract_boundary, iou, object_recall, trimap_accuracy, ClassId, LabelMap, PixelGrid, TargetClassSet,
};
use proptest::prelude::*;
use std::collections::BTreeMap;

const IGNORE: ClassId = 255;

fn label_map(h: usize, w: usize, raw: &[u8], classes: u8) -> LabelMap {
    let labels = raw[..h * w].iter().map(|&b| if b == 0 { IGNORE } else { ClassId::from(b % classes) }).collect();
    LabelMap::new(PixelGrid::new(h, w).unwrap(), labels, Some(IGNORE)).unwrap()
}

/// Blocky maps so that objects and boundaries have some extent.
fn blocky(h: usize, w: usize, raw: &[u8], classes: u8) -> LabelMap {
    let bw = w.div_ceil(4);
    LabelMap::from_fn(PixelGrid::new(h, w).unwrap(), Some(IGNORE), |r, c| {
        ClassId::from(raw[(r / 4) * bw + c / 4] % classes)
    })
}

fn brute_iou(pred: &LabelMap, gt: &LabelMap) -> BTreeMap<ClassId, f64> {
    let mut classes: Vec<ClassId> = gt.labels().iter().chain(pred.labels()).copied().filter(|&c| c != IGNORE).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = BTreeMap::new();
    for c in classes {
        let (mut inter, mut union) = (0u64, 0u64);
        for (&p, &g) in pred.labels().iter().zip(gt.labels()) {
            if g == IGNORE {
                continue;
            }
            inter += u64::from(p == c && g == c);
            union += u64::from(p == c || g == c);
        }
        if union > 0 {
            out.insert(c, inter as f64 / union as f64);
        }
    }
    out
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    let mut y = x;
    while parent[y] != r {
        let next = parent[y];
        parent[y] = r;
        y = next;
    }
    r
}

fn union_find_objects(gt: &LabelMap, targets: &TargetClassSet) -> Vec<Vec<usize>> {
    let (h, w) = gt.grid().shape();
    let l = gt.labels();
    let keep = |p: usize| targets.contains(l[p]) && l[p] != IGNORE;
    let mut parent: Vec<usize> = (0..l.len()).collect();
    for p in 0..l.len() {
        if !keep(p) {
            continue;
        }
        for q in [(p % w + 1 < w).then(|| p + 1), (p / w + 1 < h).then(|| p + w)].into_iter().flatten() {
            if keep(q) && l[q] == l[p] {
                let (a, b) = (find(&mut parent, p), find(&mut parent, q));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for p in (0..l.len()).filter(|&p| keep(p)) {
        let root = find(&mut parent, p);
        groups.entry(root).or_default().push(p);
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort();
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn iou_matches_direct_counting(
        h in 2usize..24, w in 2usize..24, classes in 2u8..6,
        a in proptest::collection::vec(any::<u8>(), 576), b in proptest::collection::vec(any::<u8>(), 576),
    ) {
        let gt = label_map(h, w, &a, classes);
        let pred = label_map(h, w, &b, classes);
        let targets = TargetClassSet::new([1]).unwrap();
        let rep = iou(&pred, &gt, &targets).unwrap();
        let oracle = brute_iou(&pred, &gt);
        prop_assert_eq!(rep.per_class.len(), oracle.len());
        for (c, v) in &oracle {
            prop_assert!((rep.per_class[c] - v).abs() < 1e-15);
        }
    }

    #[test]
    fn merged_counts_equal_counts_of_the_stacked_maps(
        h1 in 2usize..16, h2 in 2usize..16, w in 2usize..16,
        a in proptest::collection::vec(any::<u8>(), 512), b in proptest::collection::vec(any::<u8>(), 512),
    ) {
        let gt1 = label_map(h1, w, &a, 4);
        let gt2 = label_map(h2, w, &a[256..], 4);
        let p1 = label_map(h1, w, &b, 4);
        let p2 = label_map(h2, w, &b[256..], 4);
        let mut merged = ConfusionCounts::from_maps(&p1, &gt1).unwrap();
        merged.merge(&ConfusionCounts::from_maps(&p2, &gt2).unwrap());
        let stack = |x: &LabelMap, y: &LabelMap| {
            let labels = x.labels().iter().chain(y.labels()).copied().collect();
            LabelMap::new(PixelGrid::new(h1 + h2, w).unwrap(), labels, Some(IGNORE)).unwrap()
        };
        let whole = ConfusionCounts::from_maps(&stack(&p1, &p2), &stack(&gt1, &gt2)).unwrap();
        prop_assert_eq!(merged, whole);
    }

    #[test]
    fn trimap_bands_match_brute_force(
        h in 2usize..28, w in 2usize..28, a in proptest::collection::vec(any::<u8>(), 64),
        b in proptest::collection::vec(any::<u8>(), 784),
    ) {
        let gt = blocky(h, w, &a, 3);
        let pred = label_map(h, w, &b, 3);
        let targets = TargetClassSet::new([1, 2]).unwrap();
        let widths = [1, 2, 3, 5, 8, 40];
        let curve = trimap_accuracy(&pred, &gt, &targets, &widths).unwrap();
        let bmap = extract_boundary(&gt, &targets).unwrap();
        let boundary: Vec<(usize, usize)> =
            (0..h * w).filter(|&p| bmap.mask()[p]).map(|p| (p / w, p % w)).collect();
        for (k, &width) in widths.iter().enumerate() {
            let (mut n, mut ok) = (0u64, 0u64);
            for r in 0..h {
                for c in 0..w {
                    let near = boundary.iter().any(|&(br, bc)| r.abs_diff(br).max(c.abs_diff(bc)) <= width);
                    if near && gt.get(r, c) != IGNORE {
                        n += 1;
                        ok += u64::from(pred.get(r, c) == gt.get(r, c));
                    }
                }
            }
            prop_assert_eq!(curve.band_pixels[k], n);
            prop_assert_eq!(curve.correct_pixels[k], ok);
        }
    }

    #[test]
    fn chessboard_distance_matches_brute_force(
        h in 2usize..20, w in 2usize..20, mask in proptest::collection::vec(any::<u8>(), 400),
    ) {
        let m: Vec<bool> = mask[..h * w].iter().map(|&b| b < 20).collect();
        let d = chessboard_distance(&m, h, w);
        for (p, &dp) in d.iter().enumerate() {
            let brute = (0..h * w)
                .filter(|&q| m[q])
                .map(|q| (p / w).abs_diff(q / w).max((p % w).abs_diff(q % w)))
                .min()
                .unwrap_or(usize::MAX);
            prop_assert_eq!(dp, brute);
        }
    }

    #[test]
    fn objects_match_union_find(
        h in 2usize..30, w in 2usize..30, a in proptest::collection::vec(any::<u8>(), 900),
    ) {
        let gt = label_map(h, w, &a, 3);
        let targets = TargetClassSet::new([1, 2]).unwrap();
        let mut found: Vec<Vec<usize>> = target_objects(&gt, &targets).into_iter().map(|(_, px)| px).collect();
        found.sort();
        prop_assert_eq!(found, union_find_objects(&gt, &targets));
    }

    #[test]
    fn iou_is_symmetric_under_class_permutation(
        h in 2usize..20, w in 2usize..20,
        a in proptest::collection::vec(any::<u8>(), 400), b in proptest::collection::vec(any::<u8>(), 400),
    ) {
        let perm = [3, 0, 2, 1];
        let gt = label_map(h, w, &a, 4);
        let pred = label_map(h, w, &b, 4);
        let relabel = |m: &LabelMap| {
            let labels = m.labels().iter().map(|&c| if c == IGNORE { c } else { perm[c as usize] }).collect();
            LabelMap::new(m.grid(), labels, Some(IGNORE)).unwrap()
        };
        let t = TargetClassSet::new([1, 2]).unwrap();
        let tp = TargetClassSet::new([perm[1], perm[2]]).unwrap();
        let r1 = iou(&pred, &gt, &t).unwrap();
        let r2 = iou(&relabel(&pred), &relabel(&gt), &tp).unwrap();
        for (c, v) in &r1.per_class {
            prop_assert_eq!(r2.per_class[&perm[*c as usize]], *v);
        }
        prop_assert!((r1.mean_all.unwrap() - r2.mean_all.unwrap()).abs() < 1e-15);
        prop_assert_eq!(r1.mean_target.is_some(), r2.mean_target.is_some());
        if let (Some(x), Some(y)) = (r1.mean_target, r2.mean_target) {
            prop_assert!((x - y).abs() < 1e-15);
        }
        let w1 = trimap_accuracy(&pred, &gt, &t, &[1, 4]).unwrap();
        let w2 = trimap_accuracy(&relabel(&pred), &relabel(&gt), &tp, &[1, 4]).unwrap();
        prop_assert_eq!(w1, w2);
    }

    #[test]
    fn recall_ignores_confusions_among_other_classes(
        h in 4usize..24, w in 4usize..24, a in proptest::collection::vec(any::<u8>(), 36),
        b in proptest::collection::vec(any::<u8>(), 576), bins in 2usize..6,
    ) {
        let gt = blocky(h, w, &a, 4);
        let pred = label_map(h, w, &b, 4);
        let targets = TargetClassSet::new([1, 2]).unwrap();
        // swapping classes 0 and 3 in the prediction changes no target pixel hit
        let swapped = LabelMap::new(
            pred.grid(),
            pred.labels().iter().map(|&c| match c { 0 => 3, 3 => 0, c => c }).collect(),
            Some(IGNORE),
        )
        .unwrap();
        let objects = target_objects(&gt, &targets);
        prop_assume!(!objects.is_empty());
        let r1 = object_recall(&pred, &gt, &targets, bins).unwrap();
        let r2 = object_recall(&swapped, &gt, &targets, bins).unwrap();
        prop_assert_eq!(&r1, &r2);
        // equal-count bins: the count-weighted bin mean is the overall mean recall
        let records = object_records(&pred, &objects);
        let overall: f64 = records.iter().map(|r| r.recall()).sum::<f64>() / records.len() as f64;
        let weighted: f64 = r1.per_bin.iter().zip(&r1.bin_objects).map(|(m, &n)| m * n as f64).sum::<f64>()
            / records.len() as f64;
        prop_assert!((overall - weighted).abs() < 1e-12);
        let counts = &r1.bin_objects;
        prop_assert!(counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1);
        prop_assert!(r1.bin_areas.windows(2).all(|p| p[0].1 <= p[1].0));
    }
}

#[test]
fn perfect_prediction_scores_one_everywhere() {
    let gt = blocky(20, 20, &[1, 2, 0, 1, 2, 2, 0, 1, 1, 0, 2, 1, 0, 0, 1, 2, 1, 2, 0, 1, 2, 2, 1, 0, 1], 3);
    let targets = TargetClassSet::new([1, 2]).unwrap();
    let rep = iou(&gt, &gt, &targets).unwrap();
    assert!(rep.per_class.values().all(|&v| v == 1.0));
    let curve = trimap_accuracy(&gt, &gt, &targets, &[1, 3, 100]).unwrap();
    assert!(curve.accuracy.iter().all(|a| *a == Some(1.0)));
    let rec = object_recall(&gt, &gt, &targets, 3).unwrap();
    assert!(rec.per_bin.iter().all(|&v| v == 1.0));
}
