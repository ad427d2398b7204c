//! Seeded synthetic scenes of discs and convex polygons.

use adsample_core::{ClassId, ImageBuffer, LabelMap, PixelGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Scene parameters. The output is a pure function of these values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScene {
    pub seed: u64,
    pub height: usize,
    pub width: usize,
    /// Inclusive range for the number of objects.
    pub objects: (usize, usize),
    /// Inclusive radius range in pixels; radii are drawn log-uniformly.
    pub radius: (f64, f64),
    /// Each object takes one of these classes with equal probability.
    pub classes: Vec<ClassId>,
    pub background: ClassId,
    /// Probability that an object is a regular polygon instead of a disc.
    pub polygon_fraction: f64,
    /// Half-width of the uniform per-channel noise added to the base colors.
    pub noise: f64,
}

impl SyntheticScene {
    /// Discs of classes 1 and 2 on background 0, radii spanning 2 to 64 px.
    pub fn disks(seed: u64, height: usize, width: usize) -> Self {
        SyntheticScene {
            seed,
            height,
            width,
            objects: (6, 12),
            radius: (2.0, 64.0),
            classes: vec![1, 2],
            background: 0,
            polygon_fraction: 0.0,
            noise: 12.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Usage(format!("scene: {m}")));
        if self.height < 2 || self.width < 2 {
            return bad("canvas sides must be at least 2");
        }
        if self.objects.0 > self.objects.1 {
            return bad("object count range is reversed");
        }
        if !(self.radius.0 > 0.0 && self.radius.0 <= self.radius.1 && self.radius.1.is_finite()) {
            return bad("radius range must be positive and ordered");
        }
        if self.objects.1 > 0 && self.classes.is_empty() {
            return bad("objects need at least one class");
        }
        if !(0.0..=1.0).contains(&self.polygon_fraction) || self.noise.is_nan() || self.noise < 0.0 {
            return bad("polygon fraction must lie in [0, 1] and noise must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Outline {
    Disc,
    /// Regular polygon with this many corners and a rotation.
    Polygon(usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Object {
    center: (f64, f64),
    radius: f64,
    class: ClassId,
    outline: Outline,
}

impl Object {
    fn contains(&self, r: f64, c: f64) -> bool {
        let (dy, dx) = (r - self.center.0, c - self.center.1);
        match self.outline {
            Outline::Disc => dy * dy + dx * dx <= self.radius * self.radius,
            Outline::Polygon(n, rot) => {
                // inside every edge's half-plane; apothem = R cos(pi / n)
                let apothem = self.radius * (std::f64::consts::PI / n as f64).cos();
                (0..n).all(|k| {
                    let a = rot + (2 * k + 1) as f64 * std::f64::consts::PI / n as f64;
                    dy * a.sin() + dx * a.cos() <= apothem
                })
            }
        }
    }
}

/// Base color of a class, spread over the RGB cube.
fn class_color(class: ClassId) -> [f64; 3] {
    let k = u64::from(class);
    [(k * 97 + 40) % 216, (k * 57 + 90) % 216, (k * 151 + 20) % 216].map(|v| v as f64 + 20.0)
}

/// Renders the scene: labels from painting objects in order over the
/// background, image from class colors plus seeded noise.
pub fn generate_scene(spec: &SyntheticScene) -> Result<(ImageBuffer, LabelMap)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let count = rng.random_range(spec.objects.0..=spec.objects.1);
    let (ln_lo, ln_hi) = (spec.radius.0.ln(), spec.radius.1.ln());
    let objects: Vec<Object> = (0..count)
        .map(|_| {
            let radius = (ln_lo + (ln_hi - ln_lo) * rng.random::<f64>()).exp();
            let center = (
                rng.random::<f64>() * (spec.height - 1) as f64,
                rng.random::<f64>() * (spec.width - 1) as f64,
            );
            let class = spec.classes[rng.random_range(0..spec.classes.len())];
            let outline = if rng.random::<f64>() < spec.polygon_fraction {
                Outline::Polygon(rng.random_range(3..=6), rng.random::<f64>() * std::f64::consts::TAU)
            } else {
                Outline::Disc
            };
            Object { center, radius, class, outline }
        })
        .collect();

    let grid = PixelGrid::new(spec.height, spec.width)?;
    let labels = LabelMap::from_fn(grid, None, |r, c| {
        objects
            .iter()
            .rev()
            .find(|o| o.contains(r as f64, c as f64))
            .map_or(spec.background, |o| o.class)
    });

    let plane = grid.len();
    let mut values = vec![0.0; 3 * plane];
    for (p, &class) in labels.labels().iter().enumerate() {
        let base = class_color(class);
        for (ch, &b) in base.iter().enumerate() {
            let n = (rng.random::<f64>() * 2.0 - 1.0) * spec.noise;
            values[ch * plane + p] = (b + n).round().clamp(0.0, 255.0);
        }
    }
    Ok((ImageBuffer::new(grid, 3, values)?, labels))
}
