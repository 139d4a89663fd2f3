//! Synthetic embedding datasets.

use rand::Rng;
use rand_distr::StandardNormal;

use super::dataset::{round_f32, ClassEntry, LabeledEmbeddingDataset};
use crate::error::{Error, Result};
use crate::model::{FrozenEncoderStub, VideoEmbedding};
use crate::ndmath::Tensor;
use crate::seed;

pub const DEFAULT_TEXT_DIM: usize = 512;

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
}

/// Seeded raw text features for a class name.
pub fn class_text_features(seed: u64, name: &str, text_dim: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed::derive(seed, seed::tag(name)), "class-text");
    gaussian(&mut rng, text_dim).into_iter().map(round_f32).collect()
}

#[derive(Clone, Debug)]
pub struct AppearanceSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    pub frames: usize,
    pub dim: usize,
    pub text_dim: usize,
    pub seed: u64,
    /// Noise scale σ relative to the unit anchor.
    pub sigma: f64,
    /// When set, each class anchor is this stub's encoding of the class text
    /// features, so frozen text and frame geometry agree (as for a pretrained
    /// dual encoder). Otherwise anchors are independent random directions.
    pub text_stub: Option<FrozenEncoderStub>,
}

/// Per class a unit anchor; every frame is `normalize(anchor + σ·ξ)` with
/// `ξ ~ N(0, I/D)`.
pub fn synth_appearance_dataset(spec: &AppearanceSpec) -> Result<LabeledEmbeddingDataset> {
    if spec.classes < 2 {
        return Err(Error::Config(format!(
            "appearance dataset needs at least 2 classes, got {}",
            spec.classes
        )));
    }
    if spec.frames == 0 || spec.dim == 0 || spec.text_dim == 0 {
        return Err(Error::Config("frames, dim and text dim must be positive".into()));
    }
    if let Some(stub) = &spec.text_stub {
        if stub.input_dim() != spec.text_dim || stub.output_dim() != spec.dim {
            return Err(Error::Config("text stub dimensions do not match the dataset".into()));
        }
    }
    let mut anchor_rng = seed::rng(spec.seed, "appearance-anchor");
    let mut classes = Vec::with_capacity(spec.classes);
    let mut anchors = Vec::with_capacity(spec.classes);
    for c in 0..spec.classes {
        let name = format!("class_{c:03}");
        let text = class_text_features(spec.seed, &name, spec.text_dim);
        let anchor = match &spec.text_stub {
            Some(stub) => stub.encode(&Tensor::vector(text.clone()))?.into_data(),
            None => {
                let mut a = gaussian(&mut anchor_rng, spec.dim);
                normalize(&mut a);
                a
            }
        };
        anchors.push(anchor);
        classes.push(ClassEntry { name, text });
    }

    let scale = spec.sigma / (spec.dim as f64).sqrt();
    let mut videos = Vec::with_capacity(spec.classes * spec.videos_per_class);
    let mut id = 0u64;
    for (c, anchor) in anchors.iter().enumerate() {
        for _ in 0..spec.videos_per_class {
            let mut rng = seed::rng_indexed(spec.seed, "appearance-video", id);
            let mut data = Vec::with_capacity(spec.frames * spec.dim);
            for _ in 0..spec.frames {
                let mut f: Vec<f64> = anchor
                    .iter()
                    .map(|a| a + scale * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                normalize(&mut f);
                data.extend(f.into_iter().map(round_f32));
            }
            let frames = Tensor::new(&[spec.frames, spec.dim], data)?;
            videos.push(VideoEmbedding::new(id, c as u32, frames)?);
            id += 1;
        }
    }
    let ds = LabeledEmbeddingDataset {
        classes,
        text_dim: spec.text_dim,
        frames: spec.frames,
        dim: spec.dim,
        videos,
    };
    ds.validate()?;
    Ok(ds)
}

pub const ASCENDING_CLASS: u32 = 0;
pub const DESCENDING_CLASS: u32 = 1;

/// Two classes over identical frame multisets.
///
/// Videos come in pairs `(2p, 2p+1)` sharing the same frames. Each frame is
/// `normalize([s, ξ])` with `s ~ U(-1, 1)` and `ξ ~ N(0, I/(D-1))`, so its
/// first coordinate (the scalar feature) is monotone in `s`. Class 0 shows
/// the frames sorted ascending by that feature, class 1 descending.
pub fn synth_temporal_order_dataset(
    videos: usize,
    frames: usize,
    dim: usize,
    text_dim: usize,
    seed: u64,
) -> Result<LabeledEmbeddingDataset> {
    if frames < 2 {
        return Err(Error::Config(format!("temporal-order dataset needs T >= 2, got {frames}")));
    }
    if dim < 2 || text_dim == 0 {
        return Err(Error::Config("temporal-order dataset needs D >= 2 and a text dim".into()));
    }
    if !videos.is_multiple_of(2) {
        return Err(Error::Config(format!("video count {videos} must be even (videos come in pairs)")));
    }
    let classes = ["ascending", "descending"]
        .iter()
        .map(|name| ClassEntry {
            name: name.to_string(),
            text: class_text_features(seed, name, text_dim),
        })
        .collect();
    let tail_scale = ((dim - 1) as f64).sqrt().recip();
    let mut out = Vec::with_capacity(videos);
    for pair in 0..(videos / 2) as u64 {
        let mut rng = seed::rng_indexed(seed, "temporal-order-pair", pair);
        let mut rows: Vec<Vec<f64>> = (0..frames)
            .map(|_| {
                let mut f = Vec::with_capacity(dim);
                f.push(rng.random_range(-1.0..1.0));
                f.extend((1..dim).map(|_| tail_scale * rng.sample::<f64, _>(StandardNormal)));
                normalize(&mut f);
                f.into_iter().map(round_f32).collect()
            })
            .collect();
        rows.sort_by(|a: &Vec<f64>, b| a[0].total_cmp(&b[0]));
        let ascending = Tensor::from_rows(&rows)?;
        rows.reverse();
        let descending = Tensor::from_rows(&rows)?;
        out.push(VideoEmbedding::new(2 * pair, ASCENDING_CLASS, ascending)?);
        out.push(VideoEmbedding::new(2 * pair + 1, DESCENDING_CLASS, descending)?);
    }
    let ds = LabeledEmbeddingDataset {
        classes,
        text_dim,
        frames,
        dim,
        videos: out,
    };
    ds.validate()?;
    Ok(ds)
}
