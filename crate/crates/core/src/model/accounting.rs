//! Parameter and FLOP accounting.

use super::config::{ModelConfig, StubMode};
use super::params::TemporalPromptParams;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParamCount {
    pub tunable: u64,
    pub frozen: u64,
    /// `tunable / (tunable + frozen)`
    pub ratio: f64,
}

/// Closed-form number of trainable scalars.
pub fn tunable_closed_form(c: &ModelConfig) -> u64 {
    let (k, dim, d, co, h) = (
        c.kernel as u64,
        c.dim as u64,
        c.ctx_dim as u64,
        c.conv_channels as u64,
        c.bottleneck() as u64,
    );
    k * dim * co + co + co * d + d + (dim + d) * dim + dim + 2 * dim * h + h + dim + dim + 1
}

/// Weights held by the two frozen stubs.
pub fn frozen_closed_form(c: &ModelConfig) -> u64 {
    match c.stub_mode {
        StubMode::SeededProjection => ((c.image_feat_dim + c.text_feat_dim) * c.dim) as u64,
        StubMode::FileBacked => 0,
    }
}

/// Counts parameters and checks the closed form against the registered leaves.
pub fn count_parameters(params: &TemporalPromptParams, config: &ModelConfig) -> Result<ParamCount> {
    let tunable = tunable_closed_form(config);
    let walked = params.leaf_count() as u64;
    if walked != tunable {
        return Err(Error::Contract(format!(
            "closed-form tunable count {tunable} disagrees with leaf walk {walked}"
        )));
    }
    let frozen = frozen_closed_form(config);
    Ok(ParamCount {
        tunable,
        frozen,
        ratio: tunable as f64 / (tunable + frozen) as f64,
    })
}

/// Multiply-add weighted forward cost of the trainable path for one video:
///
/// ```text
/// conv        2·T·k·D·Co
/// time pool   T·Co
/// FC          2·Co·d
/// fusion      2·T·(D+d)·D
/// adapter     4·T·D·⌊D/r⌋
/// residual    T·D
/// normalize   3·T·D  (per frame)  + 3·D (video)
/// frame mean  T·D
/// ```
///
/// Bias additions and ReLUs are not counted.
pub fn estimate_flops(c: &ModelConfig) -> u64 {
    let (t, k, dim, d, co, h) = (
        c.frames as u64,
        c.kernel as u64,
        c.dim as u64,
        c.ctx_dim as u64,
        c.conv_channels as u64,
        c.bottleneck() as u64,
    );
    let conv = 2 * t * k * dim * co;
    let pool = t * co;
    let fc = 2 * co * d;
    let fusion = 2 * t * (dim + d) * dim;
    let adapter = 4 * t * dim * h;
    let residual = t * dim;
    let normalize = 3 * t * dim + 3 * dim;
    let frame_mean = t * dim;
    conv + pool + fc + fusion + adapter + residual + normalize + frame_mean
}

/// Share of [`estimate_flops`] that scales with `T`.
pub fn flops_t_proportional(c: &ModelConfig) -> u64 {
    estimate_flops(c) - flops_t_independent(c)
}

pub fn flops_t_independent(c: &ModelConfig) -> u64 {
    2 * (c.conv_channels * c.ctx_dim) as u64 + 3 * c.dim as u64
}
