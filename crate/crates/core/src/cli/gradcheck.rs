//! The gradient-check suite: every differentiable op plus the full loss.

use rayon::prelude::*;

use crate::error::Result;
use crate::ndmath::{check_op, OpKind};
use crate::objective::pipeline_grad_check;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct GradRow {
    pub name: &'static str,
    /// Worst relative error over all seeds.
    pub max_rel_error: f64,
    pub seeds: usize,
}

impl GradRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE
    }
}

/// One row per differentiable op, then a `pipeline` row for the end-to-end loss.
pub fn gradcheck_suite(seeds: u64, fault: Option<OpKind>) -> Result<Vec<GradRow>> {
    let mut names: Vec<Option<OpKind>> = OpKind::DIFFERENTIABLE.iter().copied().map(Some).collect();
    names.push(None);
    names
        .par_iter()
        .map(|&kind| {
            let mut worst: f64 = 0.0;
            for seed in 0..seeds {
                let r = match kind {
                    Some(k) => check_op(k, seed, fault)?,
                    None => pipeline_grad_check(seed, fault)?,
                };
                worst = worst.max(r.max_rel_error);
            }
            Ok(GradRow {
                name: kind.map_or("pipeline", OpKind::name),
                max_rel_error: worst,
                seeds: seeds as usize,
            })
        })
        .collect()
}
