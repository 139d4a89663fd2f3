//! Desk-scale experiments behind the capacity, temporal-information and
//! efficiency claims.

mod capacity;
mod efficiency;
mod info;
mod scaling;

use std::fmt::Write as _;

pub use capacity::{capacity_scaling_experiment, CapacityCurve, CapacitySpec};
pub use efficiency::{efficiency_report, EfficiencyReport, REFERENCE_TOTAL_M, REFERENCE_TUNABLE_M};
pub use info::{information_preservation_experiment, InfoReport, InfoSeed, InfoSpec};
pub use scaling::{cross_attention_count, interpolate, parameter_scaling_check, ScalingVerdict};

/// One line of an experiment CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub seed: Option<u64>,
    pub d: Option<usize>,
    pub metric: String,
    pub value: f64,
}

impl ResultRow {
    pub fn new(experiment: &str, seed: Option<u64>, d: Option<usize>, metric: &str, value: f64) -> Self {
        Self {
            experiment: experiment.into(),
            seed,
            d,
            metric: metric.into(),
            value,
        }
    }
}

/// `experiment,seed,d,metric,value`, empty cells for aggregate rows.
pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("experiment,seed,d,metric,value\n");
    for r in rows {
        let seed = r.seed.map(|s| s.to_string()).unwrap_or_default();
        let d = r.d.map(|d| d.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{seed},{d},{},{}", r.experiment, r.metric, r.value);
    }
    out
}

/// Slope of the least-squares line through `(xs, ys)`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
