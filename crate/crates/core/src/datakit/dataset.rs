use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::model::VideoEmbedding;
use crate::ndmath::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassEntry {
    pub name: String,
    /// Raw text features (width `text_dim`), f32-representable.
    pub text: Vec<f64>,
}

/// Videos with frozen frame embeddings plus the class catalog.
///
/// Class ids are catalog indices. All payload values are exactly
/// representable as `f32`, which is what the on-disk format stores.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct LabeledEmbeddingDataset {
    pub classes: Vec<ClassEntry>,
    pub text_dim: usize,
    /// Frames per video (T); 0 only for an empty dataset.
    pub frames: usize,
    /// Embedding width (D); 0 only for an empty dataset.
    pub dim: usize,
    pub videos: Vec<VideoEmbedding>,
}

/// Rounds through `f32` so values survive the on-disk format unchanged.
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}

impl LabeledEmbeddingDataset {
    pub fn validate(&self) -> Result<()> {
        for (i, c) in self.classes.iter().enumerate() {
            if c.text.len() != self.text_dim {
                return Err(Error::Config(format!(
                    "class {i} ({}) has {} text features, expected {}",
                    c.name,
                    c.text.len(),
                    self.text_dim
                )));
            }
        }
        let mut seen_ids = HashMap::with_capacity(self.videos.len());
        for v in &self.videos {
            if v.class_id as usize >= self.classes.len() {
                return Err(Error::Config(format!(
                    "video {} references class {} but the catalog has {} classes",
                    v.id,
                    v.class_id,
                    self.classes.len()
                )));
            }
            if v.frames.shape() != [self.frames, self.dim] {
                return Err(Error::Config(format!(
                    "video {} has shape {:?}, dataset is [{}, {}]",
                    v.id,
                    v.frames.shape(),
                    self.frames,
                    self.dim
                )));
            }
            if seen_ids.insert(v.id, ()).is_some() {
                return Err(Error::Config(format!("duplicate video id {}", v.id)));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        (0..self.classes.len() as u32).collect()
    }

    /// Videos per class id, including classes with none.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for v in &self.videos {
            counts[v.class_id as usize] += 1;
        }
        counts
    }

    /// Video ids of each class, in dataset order.
    pub fn videos_by_class(&self) -> BTreeMap<u32, Vec<u64>> {
        let mut out: BTreeMap<u32, Vec<u64>> = self.class_ids().into_iter().map(|c| (c, Vec::new())).collect();
        for v in &self.videos {
            out.entry(v.class_id).or_default().push(v.id);
        }
        out
    }

    pub fn index(&self) -> HashMap<u64, usize> {
        self.videos.iter().enumerate().map(|(i, v)| (v.id, i)).collect()
    }

    /// Looks up videos by id, in the given order.
    pub fn select(&self, ids: &[u64]) -> Result<Vec<&VideoEmbedding>> {
        let index = self.index();
        ids.iter()
            .map(|id| {
                index
                    .get(id)
                    .map(|&i| &self.videos[i])
                    .ok_or_else(|| Error::Config(format!("unknown video id {id}")))
            })
            .collect()
    }

    /// Raw text features of the given classes, `[m, text_dim]`.
    pub fn text_matrix(&self, class_ids: &[u32]) -> Result<Tensor> {
        let mut data = Vec::with_capacity(class_ids.len() * self.text_dim);
        for &c in class_ids {
            let entry = self
                .classes
                .get(c as usize)
                .ok_or_else(|| Error::Config(format!("unknown class id {c}")))?;
            data.extend_from_slice(&entry.text);
        }
        Ok(Tensor::new(&[class_ids.len(), self.text_dim], data)?)
    }

    pub fn class_name(&self, id: u32) -> &str {
        &self.classes[id as usize].name
    }
}
