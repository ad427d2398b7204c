//! File formats, synthetic scenes, the paired adaptive/uniform evaluation
//! pipeline and report writing, built on `adsample-core`.

pub mod error;
pub mod io;
pub mod manifest;
pub mod oracle;
pub mod pipeline;
pub mod report;
pub mod scene;
pub mod smpt;

pub use adsample_core as core;
pub use error::{Error, Result};
pub use manifest::{DatasetManifest, ManifestItem};
pub use oracle::{oracle_classify, OracleMode};
pub use pipeline::{run_pipeline, run_samples, ArmCost, ArmResult, ImageStatus, PipelineConfig, PipelineReport, Sample};
pub use scene::{generate_scene, SyntheticScene};
