//! Protocol runners. Each seed trains a private copy of the parameters; runs
//! may execute in parallel and are joined in seed order.

use std::collections::BTreeSet;

use rayon::prelude::*;

use super::metrics::{mean_class_accuracy, seen_unseen_accuracy, top_k_accuracy};
use super::report::{Protocol, ProtocolReport, RunMetrics};
use crate::datakit::{make_base_novel_split, sample_k_shot, LabeledEmbeddingDataset, SplitKind, SplitSpec};
use crate::error::{Error, Result};
use crate::model::{TemporalPromptParams, TpClip};
use crate::ndmath::Tensor;
use crate::objective::eval_logits;
use crate::training::{TrainConfig, Trainer, TrainingSet};

/// Shared inputs of every protocol run.
#[derive(Clone)]
pub struct ProtocolSetup<'a> {
    pub model: &'a TpClip,
    pub dataset: &'a LabeledEmbeddingDataset,
    /// Training schedule; its seed is replaced by the run seed.
    pub train: TrainConfig,
    /// Starting parameters. When absent each run initializes from its seed.
    pub initial: Option<&'a TemporalPromptParams>,
    pub seeds: Vec<u64>,
    /// When set, each run trains for `epochs · ⌈train videos / batch⌉` steps
    /// instead of `train.steps`.
    pub epochs: Option<u64>,
    pub fingerprint: String,
}

struct Evaluation {
    logits: Tensor,
    targets: Vec<usize>,
}

fn position(space: &[u32], class: u32) -> Option<usize> {
    space.binary_search(&class).ok()
}

impl ProtocolSetup<'_> {
    fn check_compat(&self) -> Result<()> {
        let (cfg, ds) = (&self.model.config, self.dataset);
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if ds.videos.is_empty() {
            return Err(Error::Config("dataset has no videos".into()));
        }
        if ds.frames != cfg.frames || ds.dim != cfg.dim {
            return Err(Error::Config(format!(
                "dataset videos are [{}, {}], model expects [{}, {}]",
                ds.frames, ds.dim, cfg.frames, cfg.dim
            )));
        }
        if ds.text_dim != self.model.text_stub.input_dim() {
            return Err(Error::Config(format!(
                "dataset text features have width {}, text stub expects {}",
                ds.text_dim,
                self.model.text_stub.input_dim()
            )));
        }
        Ok(())
    }

    fn class_stub(&self, space: &[u32]) -> Result<Tensor> {
        self.model.encode_text_stub(&self.dataset.text_matrix(space)?)
    }

    /// Trains on `train_ids` with targets in the sorted label space `space`.
    pub fn train_run(&self, seed: u64, train_ids: &[u64], space: &[u32]) -> Result<TemporalPromptParams> {
        let params = match self.initial {
            Some(p) => p.clone(),
            None => {
                let mut cfg = self.model.config.clone();
                cfg.seed = seed;
                TemporalPromptParams::init(&cfg)?
            }
        };
        let steps = match self.epochs {
            Some(e) => e * train_ids.len().div_ceil(self.train.batch_size.max(1)) as u64,
            None => self.train.steps,
        };
        if steps == 0 || train_ids.is_empty() {
            return Ok(params);
        }
        let videos = self.dataset.select(train_ids)?;
        let targets = videos
            .iter()
            .map(|v| {
                position(space, v.class_id)
                    .ok_or_else(|| Error::Contract(format!("train video {} outside the label space", v.id)))
            })
            .collect::<Result<_>>()?;
        let data = TrainingSet {
            videos,
            targets,
            class_stub: self.class_stub(space)?,
        };
        let config = TrainConfig {
            seed,
            steps,
            ..self.train.clone()
        };
        let mut trainer = Trainer::new(params, config);
        trainer.run(&data)?;
        Ok(trainer.params)
    }

    /// Logits of the eval videos whose class lies in `space`, over `space`.
    fn evaluate(&self, params: &TemporalPromptParams, eval_ids: &[u64], space: &[u32]) -> Result<Evaluation> {
        let videos: Vec<_> = self
            .dataset
            .select(eval_ids)?
            .into_iter()
            .filter(|v| position(space, v.class_id).is_some())
            .collect();
        if videos.is_empty() {
            return Err(Error::Contract("no evaluation videos in the label space".into()));
        }
        let targets = videos.iter().map(|v| position(space, v.class_id).unwrap()).collect();
        let logits = eval_logits(params, &videos, &self.class_stub(space)?, self.train.variant)?;
        Ok(Evaluation { logits, targets })
    }
}

fn standard_metrics(seed: u64, k: Option<usize>, ev: &Evaluation) -> Result<RunMetrics> {
    let m = ev.logits.cols();
    let mc = mean_class_accuracy(&ev.logits, &ev.targets)?;
    Ok(RunMetrics {
        seed,
        k,
        top1: top_k_accuracy(&ev.logits, &ev.targets, 1)?,
        top5: top_k_accuracy(&ev.logits, &ev.targets, m.min(5))?,
        mean_class: mc.value,
        pair: None,
        empty_classes: mc.has_empty_classes(),
    })
}

fn par_runs<T, F>(cells: Vec<T>, f: F) -> Result<Vec<RunMetrics>>
where
    T: Send,
    F: Fn(T) -> Result<RunMetrics> + Sync + Send,
{
    cells.into_par_iter().map(f).collect()
}

/// Zero-shot: train on the seen classes, evaluate unseen videos against the
/// unseen class embeddings only. Accepts `zsl` and `truze` splits.
pub fn run_zsl(setup: &ProtocolSetup, split: &SplitSpec) -> Result<ProtocolReport> {
    let protocol = match split.kind {
        SplitKind::Zsl => Protocol::Zsl,
        SplitKind::Truze => Protocol::Truze,
        other => return Err(Error::Config(format!("zero-shot evaluation needs a zsl or truze split, got {other}"))),
    };
    setup.check_compat()?;
    split.validate(setup.dataset)?;
    let runs = par_runs(setup.seeds.clone(), |seed| {
        let params = setup.train_run(seed, &split.train, &split.seen)?;
        let ev = setup.evaluate(&params, &split.eval, &split.unseen)?;
        standard_metrics(seed, None, &ev)
    })?;
    Ok(ProtocolReport {
        protocol,
        runs,
        fingerprint: setup.fingerprint.clone(),
    })
}

/// Generalized zero-shot: evaluate over the union of seen and unseen classes
/// and report unseen (u) and seen (s) mean-class accuracy.
pub fn run_gzsl(setup: &ProtocolSetup, split: &SplitSpec) -> Result<ProtocolReport> {
    if split.kind != SplitKind::Gzsl {
        return Err(Error::Config(format!("gzsl evaluation needs a gzsl split, got {}", split.kind)));
    }
    setup.check_compat()?;
    split.validate(setup.dataset)?;
    let union: Vec<u32> = split.seen.iter().chain(&split.unseen).copied().collect::<BTreeSet<_>>().into_iter().collect();
    let unseen_cols: Vec<bool> = union.iter().map(|c| split.unseen.contains(c)).collect();
    let runs = par_runs(setup.seeds.clone(), |seed| {
        let params = setup.train_run(seed, &split.train, &split.seen)?;
        let ev = setup.evaluate(&params, &split.eval, &union)?;
        let mut metrics = standard_metrics(seed, None, &ev)?;
        metrics.pair = Some(seen_unseen_accuracy(&ev.logits, &ev.targets, &unseen_cols)?);
        Ok(metrics)
    })?;
    Ok(ProtocolReport {
        protocol: Protocol::Gzsl,
        runs,
        fingerprint: setup.fingerprint.clone(),
    })
}

/// Few-shot: for every K and seed, train on K videos per class and evaluate
/// top-1 on the held-out videos of the same classes. Rows are K-major.
pub fn run_few_shot(setup: &ProtocolSetup, ks: &[usize]) -> Result<ProtocolReport> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::Config("K values must be a non-empty list of positive integers".into()));
    }
    setup.check_compat()?;
    let classes = setup.dataset.class_ids();
    let cells: Vec<(usize, u64)> = ks.iter().flat_map(|&k| setup.seeds.iter().map(move |&s| (k, s))).collect();
    let runs = par_runs(cells, |(k, seed)| {
        let split = sample_k_shot(setup.dataset, &classes, k, seed)?;
        if split.eval.is_empty() {
            return Err(Error::Config(format!("K={k} leaves no held-out videos to evaluate")));
        }
        let params = setup.train_run(seed, &split.train, &split.seen)?;
        let ev = setup.evaluate(&params, &split.eval, &split.seen)?;
        standard_metrics(seed, Some(k), &ev)
    })?;
    Ok(ProtocolReport {
        protocol: Protocol::FewShot,
        runs,
        fingerprint: setup.fingerprint.clone(),
    })
}

/// Base-to-novel: train with `k` shots per base class, then report base
/// top-1 (base label space), novel top-1 (novel label space) and HM.
pub fn run_base_to_novel(setup: &ProtocolSetup, k: usize) -> Result<ProtocolReport> {
    setup.check_compat()?;
    let runs = par_runs(setup.seeds.clone(), |seed| {
        let split = make_base_novel_split(setup.dataset, k, seed)?;
        let params = setup.train_run(seed, &split.train, &split.seen)?;
        let base = setup.evaluate(&params, &split.eval, &split.seen)?;
        let novel = setup.evaluate(&params, &split.eval, &split.unseen)?;
        let mut metrics = standard_metrics(seed, Some(k), &base)?;
        let novel_top1 = top_k_accuracy(&novel.logits, &novel.targets, 1)?;
        metrics.pair = Some((metrics.top1, novel_top1));
        Ok(metrics)
    })?;
    Ok(ProtocolReport {
        protocol: Protocol::BaseNovel,
        runs,
        fingerprint: setup.fingerprint.clone(),
    })
}
