//! Embedding datasets: containers, the `EMB1` file format, synthetic
//! generators and protocol splits.

mod dataset;
mod emb1;
mod split;
mod synth;

pub use dataset::{round_f32, ClassEntry, LabeledEmbeddingDataset};
pub use emb1::{
    decode_emb1, encode_emb1, read_descriptions, read_emb1, write_descriptions, write_emb1, EMB1_MAGIC,
    EMB1_VERSION,
};
pub use split::{
    make_base_novel_split, make_gzsl_split, make_truze_like_split, make_zsl_split, sample_k_shot, SplitKind,
    SplitSpec,
};
pub use synth::{
    class_text_features, synth_appearance_dataset, synth_temporal_order_dataset, AppearanceSpec, ASCENDING_CLASS,
    DEFAULT_TEXT_DIM, DESCENDING_CLASS,
};
