//! Configuration, datasets and the end-to-end train/detect/evaluate flow.

pub mod config;
pub mod dataset;
pub mod report;
pub mod run;
pub mod synth;

pub use self::config::{EvalConfig, FeatureMode, PipelineConfig};
pub use self::dataset::{load_dataset, Dataset, DatasetManifest, LoadedImage, ManifestRecord};
pub use self::report::{evaluate_images, evaluate_lesions, read_detections, write_detections, EvaluationSummary};
pub use self::run::{
    analyze, analyze_dataset, feature_table, run_detect, train_cnn_stage, train_forest_stage, train_models, ImageAnalysis,
    ImageDetections, TrainedModels,
};
pub use self::synth::{generate_synthetic, synthesize, SynthParams, SyntheticImage};

#[cfg(test)]
mod tests;
