//! Three-stage pseudo-label curation as deterministic manifest dataflow.
//!
//! Neural labelers and the depth-quality scorer are external processes bound
//! by small file contracts (see [`CommandTemplate`]), so the pipeline itself
//! is fully testable with stub executables: given identical configs,
//! fixtures, and seeds it produces byte-identical manifests.

mod manifest;
mod pipeline;
mod stages;

pub use manifest::{Domain, Provenance, SampleManifest, SampleRecord, Source};
pub use pipeline::{
    run_pipeline, LabelerConfig, MixConfig, PipelineConfig, PipelineSettings, ScorerConfig,
    SelectConfig, StageConfig, StageInput, StageOutput, STAGE_NAMES,
};
pub use stages::{invoke_labeler, mix_datasets, score_samples, select_top_k, CommandTemplate};
