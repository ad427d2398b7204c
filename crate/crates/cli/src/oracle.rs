//! Classification by ground truth at the sampling locations.

use std::fmt;
use std::str::FromStr;

use adsample_core::{sample_labels, ClassId, LabelMap, SamplingTensor, ScoreMap};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How sampled labels are turned into scores.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum OracleMode {
    /// The ground-truth label at each sample.
    #[default]
    GroundTruth,
    /// The ground-truth label, replaced by a different random class with this probability.
    Noisy(f64),
}

impl FromStr for OracleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "gt-at-sample" => Ok(OracleMode::GroundTruth),
            _ => {
                let p = s
                    .strip_prefix("noisy:")
                    .or_else(|| s.strip_prefix("noisy-gt:"))
                    .and_then(|p| p.parse::<f64>().ok())
                    .ok_or_else(|| Error::Usage(format!("oracle must be gt or noisy:<p>, got {s:?}")))?;
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Usage(format!("flip probability {p} is outside [0, 1]")));
                }
                Ok(OracleMode::Noisy(p))
            }
        }
    }
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleMode::GroundTruth => f.write_str("gt"),
            OracleMode::Noisy(p) => write!(f, "noisy:{p}"),
        }
    }
}

/// One-hot scores of the labels sampled at `phi`; ignored samples score `1/K`.
/// `rng` is only drawn from in noisy mode.
pub fn oracle_classify(
    labels: &LabelMap,
    phi: &SamplingTensor,
    num_classes: usize,
    mode: OracleMode,
    rng: &mut impl Rng,
) -> Result<ScoreMap> {
    if labels.max_class().is_some_and(|m| !labels.is_ignored(m) && m as usize >= num_classes) {
        return Err(Error::Usage(format!("{num_classes} classes cannot hold label {}", labels.max_class().unwrap())));
    }
    let mut sampled = sample_labels(labels, phi);
    if let OracleMode::Noisy(p) = mode {
        if num_classes > 1 {
            for l in sampled.labels_mut() {
                if labels.is_ignored(*l) || rng.random::<f64>() >= p {
                    continue;
                }
                // uniform over the other classes
                let k = rng.random_range(0..num_classes - 1) as ClassId;
                *l = if k >= *l { k + 1 } else { k };
            }
        }
    }
    Ok(ScoreMap::one_hot(phi.grid_h(), phi.grid_w(), num_classes, sampled.labels(), labels.ignore_id())?)
}
