//! `EMB1` embedding dataset files.
//!
//! ```text
//! "EMB1" | u32 version = 1
//! u32 class count m | u32 text dim F'
//! m × (u32 name len | name bytes | F' × f32)
//! u32 video count n | u32 T | u32 D
//! n × (u64 video id | u32 class id | T·D × f32)
//! ```
//!
//! Little-endian throughout. An optional sidecar text file holds one UTF-8
//! class description per line, line `i` describing class id `i`.

use std::fs;
use std::path::Path;

use super::dataset::{ClassEntry, LabeledEmbeddingDataset};
use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::VideoEmbedding;
use crate::ndmath::Tensor;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;

pub fn encode_emb1(ds: &LabeledEmbeddingDataset) -> Result<Vec<u8>> {
    ds.validate()?;
    let mut w = Writer::default();
    w.bytes(EMB1_MAGIC);
    w.u32(EMB1_VERSION);
    w.u32(len_u32(ds.classes.len(), "class count")?);
    w.u32(len_u32(ds.text_dim, "text dim")?);
    for c in &ds.classes {
        w.string(&c.name);
        for &x in &c.text {
            w.f32(x as f32);
        }
    }
    w.u32(len_u32(ds.videos.len(), "video count")?);
    w.u32(len_u32(ds.frames, "frame count")?);
    w.u32(len_u32(ds.dim, "embedding dim")?);
    for v in &ds.videos {
        w.u64(v.id);
        w.u32(v.class_id);
        for &x in v.frames.data() {
            w.f32(x as f32);
        }
    }
    Ok(w.buf)
}

pub fn decode_emb1(bytes: &[u8]) -> Result<LabeledEmbeddingDataset> {
    let mut r = Reader::new(bytes);
    if r.take(4, "magic")? != EMB1_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, expected EMB1".into(),
        });
    }
    let version = r.u32("version")?;
    if version != EMB1_VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported EMB1 version {version}"),
        });
    }
    let m = r.u32("class count")? as usize;
    let text_dim = r.u32("text dim")? as usize;
    let mut classes = Vec::new();
    for _ in 0..m {
        let name = r.string("class name")?;
        let text = r.f32s(text_dim, "class text features")?;
        classes.push(ClassEntry {
            name,
            text: text.into_iter().map(f64::from).collect(),
        });
    }
    let n = r.u32("video count")? as usize;
    let frames = r.u32("frame count")? as usize;
    let dim = r.u32("embedding dim")? as usize;
    let per_video = frames.checked_mul(dim);
    let Some(per_video) = per_video else {
        return r.fail(format!("T·D overflows for T={frames}, D={dim}"));
    };
    let mut videos = Vec::new();
    for _ in 0..n {
        let id = r.u64("video id")?;
        let class_id = r.u32("class id")?;
        let at = r.offset();
        let data = r.f32s(per_video, "frame embeddings")?;
        let tensor = Tensor::new(&[frames, dim], data.into_iter().map(f64::from).collect())?;
        let video = VideoEmbedding::new(id, class_id, tensor).map_err(|e| Error::Format {
            offset: at,
            message: e.to_string(),
        })?;
        videos.push(video);
    }
    r.expect_end()?;
    let ds = LabeledEmbeddingDataset {
        classes,
        text_dim,
        frames,
        dim,
        videos,
    };
    ds.validate().map_err(|e| Error::Format {
        offset: bytes.len() as u64,
        message: e.to_string(),
    })?;
    Ok(ds)
}

pub fn write_emb1(ds: &LabeledEmbeddingDataset, path: &Path) -> Result<()> {
    fs::write(path, encode_emb1(ds)?)?;
    Ok(())
}

pub fn read_emb1(path: &Path) -> Result<LabeledEmbeddingDataset> {
    decode_emb1(&fs::read(path)?)
}

/// Writes one description per line; descriptions must not contain newlines.
pub fn write_descriptions(descriptions: &[String], path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, d) in descriptions.iter().enumerate() {
        if d.contains('\n') {
            return Err(Error::Config(format!("description {i} contains a newline")));
        }
        out.push_str(d);
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_descriptions(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::to_string).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_round_trips() {
        let ds = LabeledEmbeddingDataset::default();
        let bytes = encode_emb1(&ds).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 8 + 12);
        assert_eq!(decode_emb1(&bytes).unwrap(), ds);
    }

    #[test]
    fn truncated_file_names_lengths() {
        let ds = LabeledEmbeddingDataset {
            classes: vec![ClassEntry {
                name: "walk".into(),
                text: vec![0.5, -1.0],
            }],
            text_dim: 2,
            frames: 2,
            dim: 3,
            videos: vec![VideoEmbedding::new(9, 0, Tensor::full(&[2, 3], 0.25)).unwrap()],
        };
        let bytes = encode_emb1(&ds).unwrap();
        let err = decode_emb1(&bytes[..bytes.len() - 5]).unwrap_err().to_string();
        assert!(err.contains("expected 24 bytes") && err.contains("only 19 remain"), "{err}");
        let mut bad = bytes.clone();
        bad[3] = b'2';
        assert!(matches!(decode_emb1(&bad), Err(Error::Format { offset: 0, .. })));
        let mut bad_version = bytes;
        bad_version[4] = 2;
        assert!(matches!(decode_emb1(&bad_version), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn unknown_class_is_rejected() {
        let ds = LabeledEmbeddingDataset {
            classes: vec![],
            text_dim: 0,
            frames: 1,
            dim: 1,
            videos: vec![VideoEmbedding::new(0, 3, Tensor::full(&[1, 1], 1.0)).unwrap()],
        };
        assert!(encode_emb1(&ds).is_err());
    }
}
