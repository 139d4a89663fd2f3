//! AdamW training of the prompt parameters on the contrastive objective.

use rand::seq::index;

use crate::error::{Error, Result};
use crate::model::{OptimizerSnapshot, PromptSlots, TemporalPromptParams, Variant, VideoEmbedding};
use crate::ndmath::{adamw_step, AdamWConfig, AdamWState, Graph, MathError, Tensor};
use crate::objective::{frame_contrastive_loss, video_contrastive_loss, Batch};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// Contrast the temporally averaged video embedding.
    Video,
    /// Contrast every fused frame separately.
    Frame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub adam: AdamWConfig,
    pub steps: u64,
    pub batch_size: usize,
    /// Seeds batch selection; step `s` always sees the same batch.
    pub seed: u64,
    pub log_every: u64,
    pub variant: Variant,
    pub objective: Objective,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamWConfig::default(),
            steps: 200,
            batch_size: 16,
            seed: 0,
            log_every: 20,
            variant: Variant::Temporal,
            objective: Objective::Video,
        }
    }
}

/// Videos, their targets (rows of `class_stub`) and the frozen class matrix.
#[derive(Clone, Debug)]
pub struct TrainingSet<'a> {
    pub videos: Vec<&'a VideoEmbedding>,
    pub targets: Vec<usize>,
    pub class_stub: Tensor,
}

impl TrainingSet<'_> {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainLog {
    /// `(step, loss before the update of that step)`
    pub losses: Vec<(u64, f64)>,
}

impl TrainLog {
    pub fn first(&self) -> Option<f64> {
        self.losses.first().map(|l| l.1)
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().map(|l| l.1)
    }
}

pub struct Trainer {
    pub params: TemporalPromptParams,
    pub states: PromptSlots<AdamWState>,
    pub step: u64,
    pub config: TrainConfig,
}

impl Trainer {
    pub fn new(params: TemporalPromptParams, config: TrainConfig) -> Self {
        let states = PromptSlots::from_array(params.as_array().map(|t| AdamWState::new(t.shape(), config.adam)));
        Self {
            params,
            states,
            step: 0,
            config,
        }
    }

    /// Continues from saved optimizer state.
    pub fn resume(params: TemporalPromptParams, snapshot: &OptimizerSnapshot, config: TrainConfig) -> Result<Self> {
        let mut trainer = Self::new(params, config);
        if snapshot.states.len() != 12 {
            return Err(Error::Contract("optimizer snapshot has wrong state count".into()));
        }
        for (slot, saved) in trainer.states.as_array_mut().into_iter().zip(&snapshot.states) {
            *slot = AdamWState {
                config: trainer.config.adam,
                ..saved.clone()
            };
        }
        trainer.step = snapshot.step;
        Ok(trainer)
    }

    pub fn snapshot(&self) -> OptimizerSnapshot {
        OptimizerSnapshot {
            config: self.config.adam,
            step: self.step,
            states: self.states.as_array().into_iter().cloned().collect(),
        }
    }

    fn batch_indices(&self, n: usize) -> Vec<usize> {
        if self.config.batch_size >= n {
            return (0..n).collect();
        }
        let mut rng = seed::rng_indexed(self.config.seed, "batch", self.step);
        let mut picked = index::sample(&mut rng, n, self.config.batch_size).into_vec();
        picked.sort_unstable();
        picked
    }

    /// Loss of a batch and the parameter gradients.
    pub fn loss_and_grads(&self, batch: &Batch) -> Result<(f64, TemporalPromptParams), MathError> {
        let mut g = Graph::new();
        let nodes = self.params.register(&mut g);
        let loss = match self.config.objective {
            Objective::Video => video_contrastive_loss(&mut g, &nodes, batch, self.config.variant)?,
            Objective::Frame => frame_contrastive_loss(&mut g, &nodes, batch, self.config.variant)?,
        };
        g.backward(loss)?;
        Ok((g.value(loss).item(), TemporalPromptParams::grads(&nodes, &g)))
    }

    /// One optimizer step. Parameters are only touched if the loss and every
    /// gradient are finite.
    pub fn train_step(&mut self, data: &TrainingSet) -> Result<f64> {
        if data.is_empty() {
            return Err(Error::Contract("training set is empty".into()));
        }
        let idx = self.batch_indices(data.len());
        let videos = idx.iter().map(|&i| data.videos[i]).collect();
        let targets = idx.iter().map(|&i| data.targets[i]).collect();
        let batch = Batch::new(videos, targets, &data.class_stub)?;
        let (loss, grads) = self.loss_and_grads(&batch).map_err(|e| match e {
            MathError::NonFinite(m) => Error::Numerical(format!("step {}: {m}", self.step)),
            other => other.into(),
        })?;
        if !loss.is_finite() {
            return Err(Error::Numerical(format!("step {}: loss is {loss}", self.step)));
        }
        if let Some((name, _)) = grads.named().find(|(_, t)| !t.is_finite()) {
            return Err(Error::Numerical(format!("step {}: gradient of {name} is not finite", self.step)));
        }
        for ((param, grad), state) in self
            .params
            .as_array_mut()
            .into_iter()
            .zip(grads.as_array())
            .zip(self.states.as_array_mut())
        {
            adamw_step(param, grad, state)?;
        }
        self.params.clamp_logit_scale();
        self.step += 1;
        Ok(loss)
    }

    /// Trains until `self.step == until`, calling `on_log` every `log_every` steps
    /// and on the final step.
    pub fn run_until(
        &mut self,
        data: &TrainingSet,
        until: u64,
        mut on_log: impl FnMut(u64, f64),
    ) -> Result<TrainLog> {
        let mut log = TrainLog::default();
        while self.step < until {
            let step = self.step;
            let loss = self.train_step(data)?;
            let every = self.config.log_every.max(1);
            if step.is_multiple_of(every) || self.step == until {
                on_log(step, loss);
            }
            log.losses.push((step, loss));
        }
        Ok(log)
    }

    pub fn run(&mut self, data: &TrainingSet) -> Result<TrainLog> {
        let until = self.step + self.config.steps;
        self.run_until(data, until, |_, _| {})
    }
}

/// Full-set loss without updating anything.
pub fn dataset_loss(params: &TemporalPromptParams, data: &TrainingSet, variant: Variant) -> Result<f64> {
    let mut g = Graph::new();
    let nodes = crate::model::register_frozen(params, &mut g);
    let batch = Batch::new(data.videos.clone(), data.targets.clone(), &data.class_stub)?;
    let loss = video_contrastive_loss(&mut g, &nodes, &batch, variant)?;
    Ok(g.value(loss).item())
}
