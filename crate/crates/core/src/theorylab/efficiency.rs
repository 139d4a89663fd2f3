//! Parameter and FLOP accounting for a configuration.

use std::fmt::Write as _;

use super::ResultRow;
use crate::error::Result;
use crate::model::{count_parameters, estimate_flops, flops_t_independent, flops_t_proportional, ModelConfig, TemporalPromptParams};

/// Tunable and total parameters (millions) of the published full-scale model.
pub const REFERENCE_TUNABLE_M: f64 = 4.4;
pub const REFERENCE_TOTAL_M: f64 = 81.2;

#[derive(Clone, Debug, PartialEq)]
pub struct EfficiencyReport {
    pub tunable: u64,
    pub frozen: u64,
    pub ratio: f64,
    pub flops_per_video: u64,
    pub flops_t_proportional: u64,
    pub flops_t_independent: u64,
}

impl EfficiencyReport {
    pub fn rows(&self) -> Vec<ResultRow> {
        vec![
            ResultRow::new("efficiency", None, None, "tunable", self.tunable as f64),
            ResultRow::new("efficiency", None, None, "frozen", self.frozen as f64),
            ResultRow::new("efficiency", None, None, "ratio", self.ratio),
            ResultRow::new("efficiency", None, None, "flops_per_video", self.flops_per_video as f64),
        ]
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Quantity | Value |\n|---|---|\n");
        let _ = writeln!(out, "| tunable params | {} |", self.tunable);
        let _ = writeln!(out, "| frozen params | {} |", self.frozen);
        let _ = writeln!(out, "| tunable / total | {:.4} |", self.ratio);
        let _ = writeln!(out, "| FLOPs per video | {} |", self.flops_per_video);
        let _ = writeln!(out, "| FLOPs growing with T | {} |", self.flops_t_proportional);
        let _ = writeln!(out, "| FLOPs independent of T | {} |", self.flops_t_independent);
        let _ = writeln!(
            out,
            "| reference tunable / total (M) | {REFERENCE_TUNABLE_M} / {REFERENCE_TOTAL_M} |"
        );
        out.push_str("| throughput | not measured |\n");
        out
    }
}

pub fn efficiency_report(config: &ModelConfig) -> Result<EfficiencyReport> {
    let params = TemporalPromptParams::init(config)?;
    let count = count_parameters(&params, config)?;
    Ok(EfficiencyReport {
        tunable: count.tunable,
        frozen: count.frozen,
        ratio: count.tunable as f64 / (count.tunable + count.frozen) as f64,
        flops_per_video: estimate_flops(config),
        flops_t_proportional: flops_t_proportional(config),
        flops_t_independent: flops_t_independent(config),
    })
}
