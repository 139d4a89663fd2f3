//! Temporal-order information: can the model tell a sequence from its reverse?
//!
//! On the temporal-order dataset both classes share the same frame multiset,
//! so any order-invariant model is capped at chance. The temporal pipeline and
//! the frame-averaging baseline are trained with the same budget and scored
//! on held-out pairs.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::ResultRow;
use crate::datakit::{synth_temporal_order_dataset, LabeledEmbeddingDataset, ASCENDING_CLASS, DEFAULT_TEXT_DIM};
use crate::error::{Error, Result};
use crate::evalkit::top_k_accuracy;
use crate::model::{ModelConfig, TemporalPromptParams, TpClip, Variant, VideoEmbedding};
use crate::ndmath::AdamWConfig;
use crate::objective::eval_logits;
use crate::seed;
use crate::training::{TrainConfig, Trainer, TrainingSet};

#[derive(Clone, Debug, PartialEq)]
pub struct InfoSpec {
    pub frames: usize,
    pub dim: usize,
    pub videos_per_class: usize,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
}

impl Default for InfoSpec {
    fn default() -> Self {
        Self {
            frames: 8,
            dim: 32,
            videos_per_class: 200,
            steps: 500,
            batch_size: 16,
            lr: 1e-2,
            seeds: (0..10).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoSeed {
    pub seed: u64,
    pub temporal: f64,
    pub baseline: f64,
    pub oracle: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InfoReport {
    /// Mean held-out accuracy of the temporal pipeline.
    pub temporal_accuracy: f64,
    /// Mean held-out accuracy of the frame-averaging baseline.
    pub baseline_accuracy: f64,
    pub chance: f64,
    /// Accuracy of a direct first-vs-last frame comparison.
    pub oracle_accuracy: f64,
    /// `1 - temporal / oracle`.
    pub delta_proxy: f64,
    /// Held-out videos per seed.
    pub test_size: usize,
    pub per_seed: Vec<InfoSeed>,
}

impl InfoReport {
    /// Upper edge of chance plus three binomial standard deviations.
    pub fn chance_band(&self) -> f64 {
        self.chance + 3.0 * (self.chance * (1.0 - self.chance) / self.test_size as f64).sqrt()
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for s in &self.per_seed {
            rows.push(ResultRow::new("info", Some(s.seed), None, "temporal_accuracy", s.temporal));
            rows.push(ResultRow::new("info", Some(s.seed), None, "baseline_accuracy", s.baseline));
            rows.push(ResultRow::new("info", Some(s.seed), None, "oracle_accuracy", s.oracle));
        }
        rows.push(ResultRow::new("info", None, None, "temporal_accuracy", self.temporal_accuracy));
        rows.push(ResultRow::new("info", None, None, "baseline_accuracy", self.baseline_accuracy));
        rows.push(ResultRow::new("info", None, None, "chance", self.chance));
        rows.push(ResultRow::new("info", None, None, "delta_proxy", self.delta_proxy));
        rows
    }
}

/// Splits videos by pair, so a sequence and its reverse land on the same side.
fn split_pairs(ds: &LabeledEmbeddingDataset, seed_value: u64) -> (Vec<&VideoEmbedding>, Vec<&VideoEmbedding>) {
    let pairs = ds.videos.len() / 2;
    let mut order: Vec<usize> = (0..pairs).collect();
    order.shuffle(&mut seed::rng(seed_value, "info-split"));
    let n_train = pairs / 2;
    let pick = |ps: &[usize]| -> Vec<&VideoEmbedding> {
        let mut ps = ps.to_vec();
        ps.sort_unstable();
        ps.iter().flat_map(|&p| [&ds.videos[2 * p], &ds.videos[2 * p + 1]]).collect()
    };
    (pick(&order[..n_train]), pick(&order[n_train..]))
}

fn order_oracle(videos: &[&VideoEmbedding]) -> f64 {
    let hits = videos
        .iter()
        .filter(|v| {
            let first = v.frames.row(0)[0];
            let last = v.frames.row(v.len() - 1)[0];
            let predicted = if first <= last { ASCENDING_CLASS } else { 1 - ASCENDING_CLASS };
            predicted == v.class_id
        })
        .count();
    hits as f64 / videos.len() as f64
}

fn run_seed(spec: &InfoSpec, seed_value: u64) -> Result<InfoSeed> {
    let ds = synth_temporal_order_dataset(
        2 * spec.videos_per_class,
        spec.frames,
        spec.dim,
        DEFAULT_TEXT_DIM,
        seed_value,
    )?;
    let cfg = ModelConfig {
        frames: spec.frames,
        dim: spec.dim,
        seed: seed_value,
        text_feat_dim: DEFAULT_TEXT_DIM,
        ..ModelConfig::default()
    };
    let tp = TpClip::new(cfg.clone())?;
    let class_stub = tp.encode_text_stub(&ds.text_matrix(&ds.class_ids())?)?;
    let (train, test) = split_pairs(&ds, seed_value);
    let targets = |vs: &[&VideoEmbedding]| vs.iter().map(|v| v.class_id as usize).collect::<Vec<_>>();
    let data = TrainingSet {
        videos: train.clone(),
        targets: targets(&train),
        class_stub: class_stub.clone(),
    };
    let accuracy = |variant: Variant| -> Result<f64> {
        let config = TrainConfig {
            adam: AdamWConfig {
                lr: spec.lr,
                ..AdamWConfig::default()
            },
            steps: spec.steps,
            batch_size: spec.batch_size,
            seed: seed_value,
            variant,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(TemporalPromptParams::init(&cfg)?, config);
        trainer.run(&data)?;
        let logits = eval_logits(&trainer.params, &test, &class_stub, variant)?;
        top_k_accuracy(&logits, &targets(&test), 1)
    };
    Ok(InfoSeed {
        seed: seed_value,
        temporal: accuracy(Variant::Temporal)?,
        baseline: accuracy(Variant::FrameAverage)?,
        oracle: order_oracle(&test),
    })
}

pub fn information_preservation_experiment(spec: &InfoSpec) -> Result<InfoReport> {
    if spec.frames < 2 {
        return Err(Error::Config(format!("temporal order needs T >= 2, got {}", spec.frames)));
    }
    if spec.seeds.is_empty() || spec.videos_per_class < 2 {
        return Err(Error::Config("information experiment needs seeds and at least 2 videos per class".into()));
    }
    let per_seed = spec
        .seeds
        .par_iter()
        .map(|&s| run_seed(spec, s))
        .collect::<Result<Vec<_>>>()?;
    let mean = |f: fn(&InfoSeed) -> f64| per_seed.iter().map(f).sum::<f64>() / per_seed.len() as f64;
    let (temporal, baseline, oracle) = (mean(|s| s.temporal), mean(|s| s.baseline), mean(|s| s.oracle));
    let pairs = spec.videos_per_class;
    let report = InfoReport {
        temporal_accuracy: temporal,
        baseline_accuracy: baseline,
        chance: 0.5,
        oracle_accuracy: oracle,
        delta_proxy: 1.0 - temporal / oracle,
        test_size: 2 * (pairs - pairs / 2),
        per_seed,
    };
    let band = report.chance_band();
    if let Some(s) = report.per_seed.iter().find(|s| s.baseline > band) {
        return Err(Error::Leakage(format!(
            "order-invariant baseline reached {:.3} > {band:.3} on seed {}; the dataset leaks order-free label information",
            s.baseline, s.seed
        )));
    }
    Ok(report)
}
