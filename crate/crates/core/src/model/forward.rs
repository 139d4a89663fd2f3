//! Graph builders for the temporal prompting pipeline.
//!
//! Per video with frames `E: [T, D]`:
//!
//! ```text
//! ctx   = ReLU(FC(mean_t(Conv1d(E))))                  [d]
//! z_t   = W_f · [e_t ; ctx] + b_f                      [D]
//! z_t  += Up(ReLU(Down(z_t)))                          adapter, residual
//! v_avg = normalize(mean_t(normalize(z_t)))            [D]
//! ```

use super::params::ParamNodes;
use crate::ndmath::{Graph, MathError, NodeId, Tensor};

/// Which video encoder to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// Full pipeline with the temporal context.
    Temporal,
    /// Ablation: the context input is pinned to zero, so the video
    /// embedding is a symmetric function of its frames.
    FrameAverage,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Temporal => "temporal",
            Variant::FrameAverage => "frame-average",
        }
    }
}

/// `ReLU(FC(mean_t(Conv1d(frames))))`, shape `[d]`.
pub fn temporal_context(g: &mut Graph, p: &ParamNodes, frames: NodeId) -> Result<NodeId, MathError> {
    let conv = g.conv1d(frames, p.conv_weight, p.conv_bias)?;
    let pooled = g.mean_axis(conv, 0)?;
    let fc = g.affine(pooled, p.fc_weight, p.fc_bias)?;
    g.relu(fc)
}

/// Fuses frame embeddings with context rows: concat, fusion projection,
/// residual adapter, row normalization. Accepts `[T, D]` with `[T, d]`, or
/// a single frame `[D]` with `[d]`.
pub fn fuse_rows(g: &mut Graph, p: &ParamNodes, frames: NodeId, ctx: NodeId) -> Result<NodeId, MathError> {
    let axis = g.value(frames).rank() - 1;
    let cat = g.concat(&[frames, ctx], axis)?;
    let fused = g.affine(cat, p.fusion_weight, p.fusion_bias)?;
    let down = g.affine(fused, p.adapter_down_weight, p.adapter_down_bias)?;
    let hidden = g.relu(down)?;
    let up = g.affine(hidden, p.adapter_up_weight, p.adapter_up_bias)?;
    let residual = g.add(fused, up)?;
    g.l2_normalize(residual)
}

/// Fused encoding of one frame `e_t: [D]` given the context `[d]`.
pub fn fuse_frame(g: &mut Graph, p: &ParamNodes, frame: NodeId, ctx: NodeId) -> Result<NodeId, MathError> {
    fuse_rows(g, p, frame, ctx)
}

/// Fused, normalized per-frame encodings `[T, D]`.
pub fn fused_frames(
    g: &mut Graph,
    p: &ParamNodes,
    frames: NodeId,
    variant: Variant,
) -> Result<NodeId, MathError> {
    let t_len = g.value(frames).rows();
    let ctx = match variant {
        Variant::Temporal => temporal_context(g, p, frames)?,
        Variant::FrameAverage => {
            let d = g.value(p.fc_bias).numel();
            g.constant(Tensor::zeros(&[d]))
        }
    };
    let tiled = g.repeat_rows(ctx, t_len)?;
    fuse_rows(g, p, frames, tiled)
}

/// Video-level embedding `v_avg`, shape `[D]`.
pub fn video_embedding(
    g: &mut Graph,
    p: &ParamNodes,
    frames: NodeId,
    variant: Variant,
) -> Result<NodeId, MathError> {
    let fused = fused_frames(g, p, frames, variant)?;
    let mean = g.mean_axis(fused, 0)?;
    g.l2_normalize(mean)
}

/// Class embeddings `normalize(stub_out + offset)` for `stub_out: [m, D]`.
pub fn class_embeddings(g: &mut Graph, p: &ParamNodes, stub_out: NodeId) -> Result<NodeId, MathError> {
    let m = g.value(stub_out).rows();
    let offsets = g.repeat_rows(p.text_offset, m)?;
    let shifted = g.add(stub_out, offsets)?;
    g.l2_normalize(shifted)
}

/// Class embedding for a single stub output `[D]`.
pub fn class_embedding(g: &mut Graph, p: &ParamNodes, stub_out: NodeId) -> Result<NodeId, MathError> {
    let shifted = g.add(stub_out, p.text_offset)?;
    g.l2_normalize(shifted)
}
