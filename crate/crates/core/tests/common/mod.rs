//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use tempoprompt::datakit::{
    make_base_novel_split, make_gzsl_split, make_truze_like_split, make_zsl_split, sample_k_shot,
    synth_appearance_dataset, AppearanceSpec, ClassEntry, LabeledEmbeddingDataset, SplitKind, SplitSpec,
};
use tempoprompt::model::{ModelConfig, TpClip, VideoEmbedding};
use tempoprompt::ndmath::Tensor;
use tempoprompt::seed;

pub const KINDS: [SplitKind; 5] = [
    SplitKind::Zsl,
    SplitKind::Gzsl,
    SplitKind::KShot,
    SplitKind::BaseNovel,
    SplitKind::Truze,
];

/// Tiny dataset (T=1, D=2) with the given per-class video counts.
pub fn counted(counts: &[usize]) -> LabeledEmbeddingDataset {
    let classes = (0..counts.len())
        .map(|c| ClassEntry {
            name: format!("class_{c:03}"),
            text: vec![c as f64],
        })
        .collect();
    let mut videos = Vec::new();
    let mut id = 0u64;
    for (c, &n) in counts.iter().enumerate() {
        for _ in 0..n {
            let frames = Tensor::new(&[1, 2], vec![c as f64, id as f64]).unwrap();
            videos.push(VideoEmbedding::new(id, c as u32, frames).unwrap());
            id += 1;
        }
    }
    LabeledEmbeddingDataset {
        classes,
        text_dim: 1,
        frames: 1,
        dim: 2,
        videos,
    }
}

/// One randomized split construction of `kind`, drawn from `trial`.
pub fn random_split(kind: SplitKind, trial: u64) -> (LabeledEmbeddingDataset, SplitSpec) {
    let mut rng = seed::rng_indexed(trial, "random-split", kind as u64);
    let m = rng.random_range(2..=24);
    let counts: Vec<usize> = (0..m).map(|_| rng.random_range(1..=10)).collect();
    let ds = counted(&counts);
    let split_seed = rng.random::<u64>();
    // A fraction that leaves both sides non-empty; edge fractions are covered by unit tests.
    let fraction = rng.random_range(1..m) as f64 / m as f64;
    let spec = match kind {
        SplitKind::Zsl => make_zsl_split(&ds, fraction, split_seed),
        SplitKind::Gzsl => make_gzsl_split(&ds, fraction, rng.random_range(0.0..0.6), split_seed),
        SplitKind::KShot => {
            let all = ds.class_ids();
            let n = rng.random_range(1..=m);
            let picked = rand::seq::index::sample(&mut rng, m, n).into_iter().map(|i| all[i]).collect::<Vec<_>>();
            sample_k_shot(&ds, &picked, rng.random_range(1..=8), split_seed)
        }
        SplitKind::BaseNovel => make_base_novel_split(&ds, rng.random_range(1..=8), split_seed),
        SplitKind::Truze => {
            let train = rng.random_range(1..m);
            let test = rng.random_range(1..=m - train);
            make_truze_like_split(&ds, train, test, &[], split_seed)
        }
    }
    .unwrap_or_else(|e| panic!("{kind} trial {trial}: {e}"));
    (ds, spec)
}

/// Checks split invariants from scratch, without going through `SplitSpec::validate`.
pub fn violations(ds: &LabeledEmbeddingDataset, s: &SplitSpec) -> Vec<String> {
    let mut out = Vec::new();
    let class_of: BTreeMap<u64, u32> = ds.videos.iter().map(|v| (v.id, v.class_id)).collect();
    let mut per_class: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
    for v in &ds.videos {
        per_class.entry(v.class_id).or_default().push(v.id);
    }
    let seen: BTreeSet<u32> = s.seen.iter().copied().collect();
    let unseen: BTreeSet<u32> = s.unseen.iter().copied().collect();
    let train: BTreeSet<u64> = s.train.iter().copied().collect();
    let eval: BTreeSet<u64> = s.eval.iter().copied().collect();
    if seen.intersection(&unseen).next().is_some() {
        out.push("seen/unseen overlap".to_string());
    }
    if train.intersection(&eval).next().is_some() {
        out.push("train/eval overlap".to_string());
    }
    if train.len() != s.train.len() || eval.len() != s.eval.len() {
        out.push("duplicate video".to_string());
    }
    for id in &train {
        match class_of.get(id) {
            Some(c) if seen.contains(c) => {}
            _ => out.push(format!("train video {id} outside seen classes")),
        }
    }
    let in_classes = |set: &BTreeSet<u32>| -> BTreeSet<u64> {
        set.iter().flat_map(|c| per_class[c].iter().copied()).collect()
    };
    let all: BTreeSet<u32> = (0..ds.classes.len() as u32).collect();
    match s.kind {
        SplitKind::Zsl => {
            if seen.union(&unseen).count() != all.len() {
                out.push("zsl split does not cover every class".into());
            }
            if train != in_classes(&seen) || eval != in_classes(&unseen) {
                out.push("zsl sides are not whole classes".into());
            }
        }
        SplitKind::Truze => {
            if train != in_classes(&seen) || eval != in_classes(&unseen) {
                out.push("truze sides are not whole classes".into());
            }
        }
        SplitKind::Gzsl => {
            if seen.union(&unseen).count() != all.len() {
                out.push("gzsl split does not cover every class".into());
            }
            let covered: BTreeSet<u64> = train.union(&eval).copied().collect();
            if covered != class_of.keys().copied().collect() {
                out.push("gzsl split drops videos".into());
            }
            if !in_classes(&unseen).is_subset(&eval) {
                out.push("unseen video missing from eval".into());
            }
        }
        SplitKind::BaseNovel => {
            if seen.union(&unseen).copied().collect::<BTreeSet<_>>() != all {
                out.push("base ∪ novel does not cover every class".into());
            }
            let covered: BTreeSet<u64> = train.union(&eval).copied().collect();
            if covered != class_of.keys().copied().collect() {
                out.push("base-novel split drops videos".into());
            }
            let min_base = seen.iter().map(|c| per_class[c].len()).min().unwrap_or(0);
            let max_novel = unseen.iter().map(|c| per_class[c].len()).max().unwrap_or(0);
            if !unseen.is_empty() && min_base < max_novel {
                out.push("a novel class is more frequent than a base class".into());
            }
        }
        SplitKind::KShot => {
            if !unseen.is_empty() {
                out.push("k-shot split lists unseen classes".into());
            }
            let covered: BTreeSet<u64> = train.union(&eval).copied().collect();
            if covered != in_classes(&seen) {
                out.push("k-shot split drops videos".into());
            }
        }
    }
    if let Some(k) = s.k {
        let deficient: BTreeSet<u32> = s.deficient.iter().copied().collect();
        for c in &seen {
            let got = train.iter().filter(|id| class_of[id] == *c).count();
            let available = per_class[c].len();
            let want = k.min(available);
            if got != want || deficient.contains(c) != (available < k) {
                out.push(format!("class {c}: {got} shots, expected {want}"));
            }
        }
    }
    out
}

/// Default-shaped model plus a separable appearance dataset aligned with its text stub.
pub fn appearance(classes: usize, videos_per_class: usize, seed_value: u64) -> (TpClip, LabeledEmbeddingDataset) {
    let tp = TpClip::new(ModelConfig::default()).unwrap();
    let cfg = &tp.config;
    let ds = synth_appearance_dataset(&AppearanceSpec {
        classes,
        videos_per_class,
        frames: cfg.frames,
        dim: cfg.dim,
        text_dim: cfg.text_feat_dim,
        seed: seed_value,
        sigma: 0.05,
        text_stub: Some(tp.text_stub.clone()),
    })
    .unwrap();
    (tp, ds)
}
