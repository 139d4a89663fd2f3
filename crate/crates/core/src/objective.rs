//! Contrastive objectives between video embeddings and class text embeddings.
//!
//! The video-level loss is one-directional (video → text) and contrasts each
//! video against the whole class embedding matrix:
//!
//! ```text
//! L = −(1/N) Σ_i log softmax_j( ⟨v_i, y_j⟩ / τ )[y(i)]
//! ```

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{
    class_embeddings, fused_frames, video_embedding, ModelConfig, ParamNodes, TemporalPromptParams, Variant,
    VideoEmbedding,
};
use crate::ndmath::{grad_check_with_fault, GradCheck, Graph, MathError, NodeId, OpKind, Tensor};
use crate::seed;

/// Allowed deviation from unit norm for rows entering [`similarity_logits`].
pub const UNIT_NORM_TOLERANCE: f64 = 1e-6;

/// A training or evaluation batch.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub videos: Vec<&'a VideoEmbedding>,
    /// Row of `class_stub` each video belongs to.
    pub targets: Vec<usize>,
    /// Frozen text-stub outputs `[m, D]` for the classes of the task.
    pub class_stub: &'a Tensor,
}

impl<'a> Batch<'a> {
    pub fn new(videos: Vec<&'a VideoEmbedding>, targets: Vec<usize>, class_stub: &'a Tensor) -> Result<Self> {
        if videos.is_empty() {
            return Err(Error::Contract("batch is empty".into()));
        }
        if videos.len() != targets.len() {
            return Err(Error::Contract(format!(
                "{} videos but {} targets",
                videos.len(),
                targets.len()
            )));
        }
        let m = class_stub.rows();
        if class_stub.rank() != 2 {
            return Err(Error::Contract("class matrix must be [m, D]".into()));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= m) {
            return Err(MathError::Index { index: bad, bound: m }.into());
        }
        Ok(Self {
            videos,
            targets,
            class_stub,
        })
    }
}

fn check_unit_rows(t: &Tensor, what: &str) -> Result<(), MathError> {
    for (i, n) in t.row_norms().into_iter().enumerate() {
        if (n - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(MathError::Contract(format!("{what} row {i} has norm {n}, expected 1")));
        }
    }
    Ok(())
}

/// `logits[i, j] = exp(logit_scale) · ⟨v_i, y_j⟩`; both inputs must have unit rows.
pub fn similarity_logits(
    g: &mut Graph,
    videos: NodeId,
    classes: NodeId,
    logit_scale: NodeId,
) -> Result<NodeId, MathError> {
    check_unit_rows(g.value(videos), "video embedding")?;
    check_unit_rows(g.value(classes), "class embedding")?;
    let cos = g.matmul_nt(videos, classes)?;
    g.scale(cos, logit_scale)
}

/// Stacked video embeddings `[n, D]` for a batch.
pub fn batch_video_embeddings(
    g: &mut Graph,
    p: &ParamNodes,
    videos: &[&VideoEmbedding],
    variant: Variant,
) -> Result<NodeId, MathError> {
    let mut rows = Vec::with_capacity(videos.len());
    for v in videos {
        let x = g.constant(v.frames.clone());
        rows.push(video_embedding(g, p, x, variant)?);
    }
    g.stack(&rows)
}

/// Video-level contrastive loss (mean over the batch).
pub fn video_contrastive_loss(
    g: &mut Graph,
    p: &ParamNodes,
    batch: &Batch,
    variant: Variant,
) -> Result<NodeId, MathError> {
    let v = batch_video_embeddings(g, p, &batch.videos, variant)?;
    let stub = g.constant(batch.class_stub.clone());
    let y = class_embeddings(g, p, stub)?;
    let logits = similarity_logits(g, v, y, p.logit_scale)?;
    g.cross_entropy(logits, &batch.targets)
}

/// Frame-level variant: every fused frame is contrasted on its own against
/// the class matrix, with its video's label.
pub fn frame_contrastive_loss(
    g: &mut Graph,
    p: &ParamNodes,
    batch: &Batch,
    variant: Variant,
) -> Result<NodeId, MathError> {
    let mut blocks = Vec::with_capacity(batch.videos.len());
    let mut targets = Vec::new();
    for (v, &t) in batch.videos.iter().zip(&batch.targets) {
        let x = g.constant(v.frames.clone());
        blocks.push(fused_frames(g, p, x, variant)?);
        targets.extend(std::iter::repeat_n(t, v.len()));
    }
    let frames = g.concat(&blocks, 0)?;
    let stub = g.constant(batch.class_stub.clone());
    let y = class_embeddings(g, p, stub)?;
    let logits = similarity_logits(g, frames, y, p.logit_scale)?;
    g.cross_entropy(logits, &targets)
}

/// Expected loss of an uninformed model over `m` classes, `ln(m)`.
pub fn initial_loss_sanity(m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {m}")));
    }
    Ok((m as f64).ln())
}

/// Similarity logits `[n, m]` for evaluation, without gradients.
pub fn eval_logits(
    params: &crate::model::TemporalPromptParams,
    videos: &[&VideoEmbedding],
    class_stub: &Tensor,
    variant: Variant,
) -> Result<Tensor> {
    let mut g = Graph::new();
    let p = crate::model::register_frozen(params, &mut g);
    let v = batch_video_embeddings(&mut g, &p, videos, variant)?;
    let stub = g.constant(class_stub.clone());
    let y = class_embeddings(&mut g, &p, stub)?;
    let logits = similarity_logits(&mut g, v, y, p.logit_scale)?;
    Ok(g.value(logits).clone())
}

/// Finite-difference check of the video contrastive loss with respect to
/// every trainable parameter, on a small random model and batch.
///
/// Parameters that start at zero are randomized so every path carries
/// gradient; the temperature is set to 1 to keep logits moderate.
pub fn pipeline_grad_check(seed: u64, fault: Option<OpKind>) -> Result<GradCheck> {
    let config = ModelConfig {
        frames: 4,
        dim: 6,
        ctx_dim: 3,
        kernel: 3,
        conv_channels: 3,
        adapter_ratio: 2,
        seed,
        image_feat_dim: 10,
        text_feat_dim: 7,
        ..ModelConfig::default()
    };
    let mut rng = seed::rng(seed, "pipeline-gradcheck");
    let mut params = TemporalPromptParams::init(&config)?;
    for t in params.as_array_mut() {
        for x in t.data_mut() {
            *x += 0.3 * rng.sample::<f64, _>(StandardNormal);
        }
    }
    params.set_temperature(1.0);
    let unit_rows = |rng: &mut rand_chacha::ChaCha8Rng, n: usize, dim: usize| -> Result<Tensor> {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        Ok(Tensor::from_rows(&rows)?)
    };
    let videos = (0..3)
        .map(|i| VideoEmbedding::new(i, i as u32, unit_rows(&mut rng, config.frames, config.dim)?))
        .collect::<Result<Vec<_>>>()?;
    let class_stub = unit_rows(&mut rng, 3, config.dim)?;
    let batch = Batch::new(videos.iter().collect(), vec![0, 1, 2], &class_stub)?;
    let tensors: Vec<Tensor> = params.as_array().into_iter().cloned().collect();
    Ok(grad_check_with_fault(&tensors, fault, |g, ids| {
        let nodes = ParamNodes::from_array(std::array::from_fn(|i| ids[i]));
        video_contrastive_loss(g, &nodes, &batch, Variant::Temporal)
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn similarity_hand_cases() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let y = g.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let tau_one = g.constant(Tensor::scalar(0.0));
        let l = similarity_logits(&mut g, v, y, tau_one).unwrap();
        assert_eq!(g.value(l).data(), &[1.0, 0.0]);

        let ls = g.constant(Tensor::scalar((1.0f64 / 0.07).ln()));
        let l = similarity_logits(&mut g, v, y, ls).unwrap();
        assert!((g.value(l).data()[0] - 1.0 / 0.07).abs() < 1e-12);
        assert_eq!(g.value(l).data()[1], 0.0);
    }

    #[test]
    fn similarity_rejects_non_unit_rows() {
        let mut g = Graph::new();
        let v = g.constant(Tensor::from_rows(&[vec![2.0, 0.0]]).unwrap());
        let y = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let s = g.constant(Tensor::scalar(0.0));
        assert!(matches!(similarity_logits(&mut g, v, y, s), Err(MathError::Contract(_))));
    }

    #[test]
    fn ln_m_helper() {
        assert!((initial_loss_sanity(2).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!((initial_loss_sanity(101).unwrap() - 4.615).abs() < 1e-3);
        assert!((initial_loss_sanity(51).unwrap() - 3.932).abs() < 1e-3);
        assert!(initial_loss_sanity(1).is_err());
    }

    #[test]
    fn pipeline_gradients_match() {
        let r = pipeline_grad_check(0, None).unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
        let broken = pipeline_grad_check(0, Some(OpKind::Conv1d)).unwrap();
        assert!(broken.max_rel_error > 1e-2);
    }
}
