//! End-to-end composition: synthetic data → training → projection →
//! inference → bundle.

use serde::{Deserialize, Serialize};

use crate::bundle::{build_bundle, default_quiz, BundleInputs, NarrativePack, StoryBundle};
use crate::dataset::{generate_synthetic, synthetic_image, Image, LabeledDataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::inference::{build_inference, InferenceResult, DEFAULT_K};
use crate::net::{EmbeddingNet, NetArchitecture};
use crate::projection::{project_run, FramesFile, TsneConfig};
use crate::trainer::{train, HyperParams, TrainingRun};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub synthetic: SyntheticConfig,
    pub architecture: NetArchitecture,
    /// Seeds the network initialization.
    pub net_seed: u64,
    pub hyperparams: HyperParams,
    pub tsne: TsneConfig,
    pub k: usize,
    /// Class and seed of the synthetic query image.
    pub query_class: usize,
    pub query_seed: u64,
    pub include_quiz: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            synthetic: SyntheticConfig::default(),
            architecture: NetArchitecture::default(),
            net_seed: 42,
            hyperparams: HyperParams::default(),
            tsne: TsneConfig::default(),
            k: DEFAULT_K,
            query_class: 0,
            query_seed: 1_000_003,
            include_quiz: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dataset: LabeledDataset,
    pub run: TrainingRun,
    pub frames: FramesFile,
    pub query: Image,
    pub inference: InferenceResult,
    pub bundle: StoryBundle,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<Artifacts> {
    let dataset = generate_synthetic(&config.synthetic)?;
    let shape = dataset
        .input_shape()
        .ok_or_else(|| Error::Dataset("empty dataset".into()))?;
    let net = EmbeddingNet::init(config.architecture.clone(), shape, config.net_seed)?;
    let run = train(&net, &dataset, &config.hyperparams)?;
    let frames = FramesFile::new(
        dataset.fingerprint(),
        config.tsne,
        project_run(&run, &config.tsne)?,
    );
    let query = synthetic_image(&config.synthetic, config.query_class, config.query_seed)?;
    let inference = build_inference(&run.final_net, &dataset, &frames.frames, &query, config.k)?;
    let narrative = NarrativePack::default();
    let bundle = build_bundle(&BundleInputs {
        run: &run,
        frames: &frames,
        inference: &inference,
        dataset: &dataset,
        narrative: &narrative,
        quiz: config.include_quiz.then(default_quiz),
    })?;
    Ok(Artifacts {
        dataset,
        run,
        frames,
        query,
        inference,
        bundle,
    })
}
