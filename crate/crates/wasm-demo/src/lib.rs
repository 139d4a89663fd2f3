//! Browser bindings for three small tempoprompt operations.
//!
//! Each export has a plain Rust twin returning `tempoprompt::Result` so the
//! logic is testable without a JS host.

use tempoprompt::evalkit::harmonic_mean;
use tempoprompt::model::{context_vector, embed_video, ModelConfig, TemporalPromptParams, Variant};
use tempoprompt::ndmath::Tensor;
use tempoprompt::seed;
use tempoprompt::theorylab::parameter_scaling_check;
use tempoprompt::{Error, Result};
use wasm_bindgen::prelude::*;

fn js_err(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Harmonic mean of two accuracies given in percent.
pub fn harmonic_percent(a: f64, b: f64) -> Result<f64> {
    if !(0.0..=100.0).contains(&a) || !(0.0..=100.0).contains(&b) {
        return Err(Error::Config(format!("accuracies must lie in [0, 100], got {a} and {b}")));
    }
    Ok(100.0 * harmonic_mean(a / 100.0, b / 100.0))
}

/// Deterministic pseudo-random frames `[T, D]` in `[-1, 1)` with a drift along time.
pub fn demo_frames(frames: usize, dim: usize, seed_value: u64) -> Result<Tensor> {
    let mut data = Vec::with_capacity(frames * dim);
    for t in 0..frames {
        for j in 0..dim {
            let h = seed::mix(seed::derive(seed_value, (t * dim + j) as u64));
            let noise = (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
            let drift = if j % 2 == 0 { t as f64 / frames as f64 } else { 0.0 };
            data.push(noise + 2.0 * drift);
        }
    }
    Ok(Tensor::new(&[frames, dim], data)?)
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb).max(1e-300)
}

fn reversed(frames: &Tensor) -> Result<Tensor> {
    let (t, d) = (frames.shape()[0], frames.shape()[1]);
    let data = frames.data();
    let out = (0..t).rev().flat_map(|i| data[i * d..(i + 1) * d].iter().copied()).collect();
    Ok(Tensor::new(&[t, d], out)?)
}

/// How a video embedding changes when its frames are played backwards.
#[derive(Clone, Debug, PartialEq)]
pub struct OrderProbe {
    /// Cosine between forward and reversed embeddings, full model.
    pub temporal_cosine: f64,
    /// Same for the frame-average ablation (always 1 up to rounding).
    pub average_cosine: f64,
    /// L2 distance between the forward and reversed context vectors.
    pub context_shift: f64,
}

pub fn order_probe(frames: usize, dim: usize, seed_value: u64) -> Result<OrderProbe> {
    let cfg = ModelConfig {
        frames,
        dim,
        seed: seed_value,
        ..ModelConfig::default()
    };
    cfg.validate()?;
    let params = TemporalPromptParams::init(&cfg)?;
    let fwd = demo_frames(frames, dim, seed_value)?;
    let bwd = reversed(&fwd)?;
    let emb = |x: &Tensor, v| embed_video(&params, x, v);
    let tc = cosine(emb(&fwd, Variant::Temporal)?.data(), emb(&bwd, Variant::Temporal)?.data());
    let ac = cosine(
        emb(&fwd, Variant::FrameAverage)?.data(),
        emb(&bwd, Variant::FrameAverage)?.data(),
    );
    let cf = context_vector(&params, &fwd)?;
    let cb = context_vector(&params, &bwd)?;
    let shift = cf.data().iter().zip(cb.data()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(OrderProbe {
        temporal_cosine: tc,
        average_cosine: ac,
        context_shift: shift,
    })
}

/// Tunable parameter counts over the context widths in `dims` (comma separated),
/// plus the fitted polynomial degree.
pub fn scaling_table(dims: &str, frames: usize) -> Result<String> {
    let dims = dims
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<usize>().map_err(|_| Error::Config(format!("bad width `{s}`"))))
        .collect::<Result<Vec<_>>>()?;
    let base = ModelConfig {
        frames,
        ..ModelConfig::default()
    };
    let v = parameter_scaling_check(&base, &dims)?;
    let mut out = format!("{}\n\nd\ttunable\td-dependent\tcross-attention\n", v.verdict_line());
    for i in 0..v.dims.len() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            v.dims[i], v.counts[i], v.d_dependent[i], v.cross_attention[i]
        ));
    }
    Ok(out)
}

#[wasm_bindgen(js_name = harmonicMean)]
pub fn harmonic_mean_js(a: f64, b: f64) -> Result<f64, JsValue> {
    harmonic_percent(a, b).map_err(js_err)
}

#[wasm_bindgen(js_name = orderProbe)]
pub fn order_probe_js(frames: usize, dim: usize, seed_value: u64) -> Result<Vec<f64>, JsValue> {
    let p = order_probe(frames, dim, seed_value).map_err(js_err)?;
    Ok(vec![p.temporal_cosine, p.average_cosine, p.context_shift])
}

#[wasm_bindgen(js_name = scalingTable)]
pub fn scaling_table_js(dims: &str, frames: usize) -> Result<String, JsValue> {
    scaling_table(dims, frames).map_err(js_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_matches_closed_form() {
        let h = harmonic_percent(60.0, 40.0).unwrap();
        assert!((h - 48.0).abs() < 1e-12);
        assert_eq!(harmonic_percent(0.0, 90.0).unwrap(), 0.0);
        assert!(harmonic_percent(101.0, 5.0).is_err());
    }

    #[test]
    fn reversal_moves_only_the_temporal_embedding() {
        let p = order_probe(8, 16, 3).unwrap();
        assert!((p.average_cosine - 1.0).abs() < 1e-12, "{p:?}");
        assert!(p.context_shift > 0.0, "{p:?}");
        assert!(p.temporal_cosine < 1.0 - 1e-9, "{p:?}");
    }

    #[test]
    fn scaling_table_reports_pass() {
        let t = scaling_table("4, 8,16", 8).unwrap();
        assert!(t.starts_with("degree ≤ 2: PASS"), "{t}");
        assert_eq!(t.lines().count(), 6);
        assert!(scaling_table("4,x", 8).is_err());
    }
}
