//! Exact polynomial degree of the tunable parameter count in the context width.

use num_rational::Ratio;

use super::ResultRow;
use crate::error::{Error, Result};
use crate::model::{tunable_closed_form, ModelConfig};

type Q = Ratio<i128>;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingVerdict {
    pub dims: Vec<usize>,
    pub counts: Vec<u64>,
    /// Monomial coefficients `c_0 + c_1 d + c_2 d² + …` of the interpolant.
    pub coefficients: Vec<Q>,
    pub degree: usize,
    /// Count of a per-frame cross-attention block, `T · (4d² + 4d)`.
    pub cross_attention: Vec<u64>,
    /// Part of our count that depends on `d`: `tunable(d) - tunable(0)`.
    pub d_dependent: Vec<u64>,
}

impl ScalingVerdict {
    pub fn passes(&self) -> bool {
        self.degree <= 2
    }

    pub fn verdict_line(&self) -> String {
        format!("degree ≤ 2: {}", if self.passes() { "PASS" } else { "FAIL" })
    }

    pub fn rows(&self) -> Vec<ResultRow> {
        let mut rows = Vec::new();
        for (i, &d) in self.dims.iter().enumerate() {
            rows.push(ResultRow::new("scaling", None, Some(d), "tunable", self.counts[i] as f64));
            rows.push(ResultRow::new("scaling", None, Some(d), "d_dependent", self.d_dependent[i] as f64));
            rows.push(ResultRow::new("scaling", None, Some(d), "cross_attention", self.cross_attention[i] as f64));
        }
        for (p, c) in self.coefficients.iter().enumerate() {
            rows.push(ResultRow::new(
                "scaling",
                None,
                None,
                &format!("coefficient_{p}"),
                *c.numer() as f64 / *c.denom() as f64,
            ));
        }
        rows.push(ResultRow::new("scaling", None, None, "degree", self.degree as f64));
        rows
    }
}

/// Newton divided differences, converted to monomial coefficients.
pub fn interpolate(xs: &[i128], ys: &[i128]) -> Vec<Q> {
    let n = xs.len();
    let mut table: Vec<Q> = ys.iter().map(|&y| Q::from_integer(y)).collect();
    for level in 1..n {
        for i in (level..n).rev() {
            table[i] = (table[i] - table[i - 1]) / Q::from_integer(xs[i] - xs[i - level]);
        }
    }
    // Horner expansion of the Newton form.
    let mut coeffs = vec![Q::from_integer(0); n];
    for i in (0..n).rev() {
        // coeffs = coeffs * (x - xs[i]) + table[i]
        let mut next = vec![Q::from_integer(0); n];
        for p in 0..n {
            if p + 1 < n {
                next[p + 1] += coeffs[p];
            }
            next[p] -= coeffs[p] * Q::from_integer(xs[i]);
        }
        next[0] += table[i];
        coeffs = next;
    }
    coeffs
}

pub fn cross_attention_count(frames: usize, d: usize) -> u64 {
    let d = d as u64;
    frames as u64 * (4 * d * d + 4 * d)
}

/// Interpolates `tunable(d)` over `dims` with everything else fixed.
pub fn parameter_scaling_check(base: &ModelConfig, dims: &[usize]) -> Result<ScalingVerdict> {
    if dims.len() < 3 {
        return Err(Error::Config(format!("scaling check needs at least 3 widths, got {}", dims.len())));
    }
    let mut sorted = dims.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != dims.len() {
        return Err(Error::Config("scaling widths must be distinct".into()));
    }
    let count = |d: usize| {
        tunable_closed_form(&ModelConfig {
            ctx_dim: d,
            ..base.clone()
        })
    };
    let counts: Vec<u64> = dims.iter().map(|&d| count(d)).collect();
    let xs: Vec<i128> = dims.iter().map(|&d| d as i128).collect();
    let ys: Vec<i128> = counts.iter().map(|&c| c as i128).collect();
    let coefficients = interpolate(&xs, &ys);
    let degree = coefficients.iter().rposition(|c| *c != Q::from_integer(0)).unwrap_or(0);
    let zero = count(0);
    let verdict = ScalingVerdict {
        dims: dims.to_vec(),
        d_dependent: counts.iter().map(|c| c - zero).collect(),
        cross_attention: dims.iter().map(|&d| cross_attention_count(base.frames, d)).collect(),
        counts,
        coefficients,
        degree,
    };
    if !verdict.passes() {
        return Err(Error::Contract(format!(
            "tunable count grows with degree {} in the context width (expected at most 2)",
            verdict.degree
        )));
    }
    Ok(verdict)
}
