//! The temporal prompting model: frozen stubs plus the trainable pipeline.

mod accounting;
mod checkpoint;
mod config;
mod forward;
mod params;
mod stub;

pub use accounting::{
    count_parameters, estimate_flops, flops_t_independent, flops_t_proportional, frozen_closed_form,
    tunable_closed_form, ParamCount,
};
pub use checkpoint::{Checkpoint, OptimizerSnapshot, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, StubMode, DEFAULT_STUB_SEED};
pub use forward::{
    class_embedding, class_embeddings, fuse_frame, fuse_rows, fused_frames, temporal_context,
    video_embedding, Variant,
};
pub use params::{
    param_shapes, ParamNodes, PromptSlots, TemporalPromptParams, INIT_TEMPERATURE, MAX_TEMPERATURE,
    MIN_TEMPERATURE, PARAM_NAMES,
};
pub use stub::FrozenEncoderStub;

use crate::error::{Error, Result};
use crate::ndmath::{Graph, Tensor};

/// Frozen per-frame embeddings of one video.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoEmbedding {
    pub id: u64,
    pub class_id: u32,
    /// `[T, D]`
    pub frames: Tensor,
}

impl VideoEmbedding {
    pub fn new(id: u64, class_id: u32, frames: Tensor) -> Result<Self> {
        if frames.rank() != 2 || frames.shape()[0] == 0 {
            return Err(Error::Config(format!(
                "video {id}: frames must be a non-empty [T, D] matrix, got {:?}",
                frames.shape()
            )));
        }
        if !frames.is_finite() {
            return Err(Error::Numerical(format!("video {id} has non-finite frames")));
        }
        Ok(Self { id, class_id, frames })
    }

    pub fn len(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.shape()[1]
    }
}

/// A configured model with its two frozen stubs.
#[derive(Clone, Debug)]
pub struct TpClip {
    pub config: ModelConfig,
    pub image_stub: FrozenEncoderStub,
    pub text_stub: FrozenEncoderStub,
}

impl TpClip {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            image_stub: FrozenEncoderStub::image(&config)?,
            text_stub: FrozenEncoderStub::text(&config)?,
            config,
        })
    }

    /// Raw frame features `[T, F]` to frozen embeddings `[T, D]`.
    pub fn encode_frames_stub(&self, raw: &Tensor) -> Result<Tensor> {
        self.image_stub.encode(raw)
    }

    /// Raw class text features `[m, F']` (or `[F']`) to frozen embeddings.
    pub fn encode_text_stub(&self, raw: &Tensor) -> Result<Tensor> {
        self.text_stub.encode(raw)
    }

    /// Trainable class embedding for raw text features, evaluated without gradients.
    pub fn class_embedding(&self, params: &TemporalPromptParams, text: &Tensor) -> Result<Tensor> {
        let stub_out = self.encode_text_stub(text)?;
        let mut g = Graph::new();
        let p = register_frozen(params, &mut g);
        let s = g.constant(stub_out);
        let y = if text.rank() == 1 {
            class_embedding(&mut g, &p, s)?
        } else {
            class_embeddings(&mut g, &p, s)?
        };
        Ok(g.value(y).clone())
    }

    pub fn validate_video(&self, video: &VideoEmbedding) -> Result<()> {
        if video.len() != self.config.frames || video.dim() != self.config.dim {
            return Err(Error::Config(format!(
                "video {} has shape {:?}, model expects [{}, {}]",
                video.id,
                video.frames.shape(),
                self.config.frames,
                self.config.dim
            )));
        }
        Ok(())
    }
}

/// Adds a parameter set to `graph` as frozen constants (evaluation only).
pub fn register_frozen(params: &TemporalPromptParams, graph: &mut Graph) -> ParamNodes {
    ParamNodes::from_array(params.as_array().map(|t| graph.constant(t.clone())))
}

/// `v_avg` for one video, without gradients.
pub fn embed_video(params: &TemporalPromptParams, frames: &Tensor, variant: Variant) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = register_frozen(params, &mut g);
    let x = g.constant(frames.clone());
    let v = video_embedding(&mut g, &p, x, variant)?;
    Ok(g.value(v).clone())
}

/// Temporal context vector for one video, without gradients.
pub fn context_vector(params: &TemporalPromptParams, frames: &Tensor) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = register_frozen(params, &mut g);
    let x = g.constant(frames.clone());
    let c = temporal_context(&mut g, &p, x)?;
    Ok(g.value(c).clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> ModelConfig {
        ModelConfig {
            frames: 3,
            dim: 2,
            ctx_dim: 1,
            kernel: 1,
            conv_channels: 1,
            adapter_ratio: 2,
            image_feat_dim: 4,
            text_feat_dim: 3,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn temporal_context_hand_unrolled() {
        // k = 1, Co = 1, d = 1: ctx = relu(w_fc * (mean_t(x_t · w_k) + b_k) + b_fc)
        let c = toy();
        let mut p = TemporalPromptParams::init(&c).unwrap();
        p.conv_weight = Tensor::new(&[1, 2, 1], vec![0.5, -1.0]).unwrap();
        p.conv_bias = Tensor::vector(vec![0.25]);
        p.fc_weight = Tensor::new(&[1, 1], vec![2.0]).unwrap();
        p.fc_bias = Tensor::vector(vec![0.1]);
        let frames = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0], vec![2.0, 1.0]]).unwrap();
        let conv = [1.0 * 0.5 + 0.25, 1.0 + 0.25, 2.0 * 0.5 - 1.0 + 0.25];
        let pooled = (conv[0] + conv[1] + conv[2]) / 3.0;
        let expected = (2.0 * pooled + 0.1f64).max(0.0);
        let got = context_vector(&p, &frames).unwrap();
        assert!((got.data()[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn zero_frames_zero_biases_give_zero_context() {
        let c = ModelConfig {
            frames: 4,
            dim: 5,
            ctx_dim: 3,
            conv_channels: 4,
            image_feat_dim: 5,
            text_feat_dim: 5,
            ..ModelConfig::default()
        };
        let mut p = TemporalPromptParams::init(&c).unwrap();
        p.conv_bias = Tensor::zeros(&[4]);
        p.fc_bias = Tensor::zeros(&[3]);
        let ctx = context_vector(&p, &Tensor::zeros(&[4, 5])).unwrap();
        assert!(ctx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fuse_frame_identity_path() {
        let c = ModelConfig {
            frames: 1,
            dim: 3,
            ctx_dim: 2,
            conv_channels: 2,
            ..toy()
        };
        let p = TemporalPromptParams::init(&c).unwrap();
        let mut g = Graph::new();
        let nodes = register_frozen(&p, &mut g);
        let e = g.constant(Tensor::vector(vec![1.0, -2.0, 2.0]));
        let ctx = g.constant(Tensor::zeros(&[2]));
        let out = fuse_frame(&mut g, &nodes, e, ctx).unwrap();
        let expected = Tensor::vector(vec![1.0 / 3.0, -2.0 / 3.0, 2.0 / 3.0]);
        assert!(g.value(out).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn fuse_frame_hand_computed() {
        // D = 2, d = 1, h = 1
        let c = toy();
        let mut p = TemporalPromptParams::init(&c).unwrap();
        p.fusion_weight = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![1.0, -1.0]]).unwrap();
        p.fusion_bias = Tensor::vector(vec![0.0, 0.5]);
        p.adapter_down_weight = Tensor::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        p.adapter_down_bias = Tensor::vector(vec![0.0]);
        p.adapter_up_weight = Tensor::from_rows(&[vec![0.5, 0.0]]).unwrap();
        p.adapter_up_bias = Tensor::vector(vec![0.0, 0.0]);
        // e = [1, 1], ctx = [0.5]
        // z = [1 + 0.5, 2 - 0.5 + 0.5] = [1.5, 2.0]
        // down = 3.5, relu 3.5, up = [1.75, 0]; residual [3.25, 2.0]
        let norm = (3.25f64 * 3.25 + 4.0).sqrt();
        let expected = Tensor::vector(vec![3.25 / norm, 2.0 / norm]);
        let mut g = Graph::new();
        let nodes = register_frozen(&p, &mut g);
        let e = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let ctx = g.constant(Tensor::vector(vec![0.5]));
        let out = fuse_frame(&mut g, &nodes, e, ctx).unwrap();
        assert!(g.value(out).max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn fuse_frame_zero_residual_is_degenerate() {
        let c = toy();
        let mut p = TemporalPromptParams::init(&c).unwrap();
        p.fusion_weight = Tensor::zeros(&[3, 2]);
        let mut g = Graph::new();
        let nodes = register_frozen(&p, &mut g);
        let e = g.constant(Tensor::vector(vec![1.0, 1.0]));
        let ctx = g.constant(Tensor::vector(vec![0.5]));
        let err = fuse_frame(&mut g, &nodes, e, ctx).unwrap_err();
        assert!(matches!(err, crate::ndmath::MathError::Degenerate(_)));
    }

    #[test]
    fn closed_form_matches_leaf_walk_for_reference_config() {
        let c = ModelConfig {
            dim: 8,
            ctx_dim: 4,
            kernel: 3,
            conv_channels: 8,
            adapter_ratio: 4,
            ..ModelConfig::default()
        };
        let p = TemporalPromptParams::init(&c).unwrap();
        let counted = count_parameters(&p, &c).unwrap();
        assert_eq!(counted.tunable, p.leaf_count() as u64);
        // 192 + 8 + 32 + 4 + 96 + 8 + 16 + 2 + 16 + 8 + 8 + 1
        assert_eq!(counted.tunable, 391);
    }

    #[test]
    fn frozen_count_matches_stub_weights() {
        let c = ModelConfig::default();
        let m = TpClip::new(c.clone()).unwrap();
        let stub_total = (m.image_stub.weight_count() + m.text_stub.weight_count()) as u64;
        assert_eq!(frozen_closed_form(&c), stub_total);
    }
}
