//! Class and video splits for every evaluation protocol.
//!
//! Every constructor runs [`SplitSpec::validate`] before returning, and the
//! same validator runs on imported split files.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::seq::{index, SliceRandom};

use super::dataset::LabeledEmbeddingDataset;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SplitKind {
    Zsl,
    Gzsl,
    KShot,
    BaseNovel,
    Truze,
}

impl SplitKind {
    pub const ALL: [SplitKind; 5] = [
        SplitKind::Zsl,
        SplitKind::Gzsl,
        SplitKind::KShot,
        SplitKind::BaseNovel,
        SplitKind::Truze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Zsl => "zsl",
            SplitKind::Gzsl => "gzsl",
            SplitKind::KShot => "kshot",
            SplitKind::BaseNovel => "base-novel",
            SplitKind::Truze => "truze",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split kind `{s}`")))
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A validated split. Class lists and video lists are sorted ascending.
///
/// For `base-novel`, `seen` holds the base classes and `unseen` the novel
/// ones. For `truze`, `seen`/`unseen` are the training/testing classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seen: Vec<u32>,
    pub unseen: Vec<u32>,
    pub train: Vec<u64>,
    pub eval: Vec<u64>,
    pub seed: u64,
    /// Shots per class, for `kshot` and the training side of `base-novel`.
    pub k: Option<usize>,
    /// Classes that had fewer than `k` videos; all of their videos were used.
    pub deficient: Vec<u32>,
}

fn sorted<T: Ord + Copy>(mut v: Vec<T>) -> Vec<T> {
    v.sort_unstable();
    v
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl SplitSpec {
    /// Checks the kind-specific invariants against a dataset.
    ///
    /// Any overlap between the training side and the evaluation side of a
    /// zero-shot split is reported as [`Error::Leakage`]; other violations
    /// are contract errors.
    pub fn validate(&self, ds: &LabeledEmbeddingDataset) -> Result<()> {
        let contract = |msg: String| Err(Error::Contract(format!("{} split: {msg}", self.kind)));
        let m = ds.num_classes() as u32;
        if let Some(c) = self.seen.iter().chain(&self.unseen).find(|&&c| c >= m) {
            return contract(format!("class {c} not in catalog of {m}"));
        }
        let seen: BTreeSet<u32> = self.seen.iter().copied().collect();
        let unseen: BTreeSet<u32> = self.unseen.iter().copied().collect();
        if seen.len() != self.seen.len() || unseen.len() != self.unseen.len() {
            return contract("duplicate class ids".into());
        }
        let overlap: Vec<u32> = seen.intersection(&unseen).copied().collect();
        if !overlap.is_empty() {
            return Err(Error::Leakage(format!(
                "{} split: classes {} are both seen and unseen",
                self.kind,
                join(&overlap)
            )));
        }

        let index = ds.index();
        let class_of = |id: &u64| -> Result<u32> {
            index
                .get(id)
                .map(|&i| ds.videos[i].class_id)
                .ok_or_else(|| Error::Contract(format!("{} split: unknown video id {id}", self.kind)))
        };
        let train: BTreeSet<u64> = self.train.iter().copied().collect();
        let eval: BTreeSet<u64> = self.eval.iter().copied().collect();
        if train.len() != self.train.len() || eval.len() != self.eval.len() {
            return contract("duplicate video ids".into());
        }
        let shared: Vec<u64> = train.intersection(&eval).copied().collect();
        if !shared.is_empty() {
            return Err(Error::Leakage(format!(
                "{} split: videos {} are in both train and eval",
                self.kind,
                join(&shared)
            )));
        }

        let mut train_per_class: HashMap<u32, usize> = HashMap::new();
        for id in &self.train {
            let c = class_of(id)?;
            if !seen.contains(&c) {
                let what = if unseen.contains(&c) { "an unseen" } else { "an unlisted" };
                return Err(Error::Leakage(format!(
                    "{} split: train video {id} belongs to {what} class {c} ({})",
                    self.kind,
                    ds.class_name(c)
                )));
            }
            *train_per_class.entry(c).or_default() += 1;
        }
        let mut eval_classes = BTreeSet::new();
        for id in &self.eval {
            eval_classes.insert(class_of(id)?);
        }

        match self.kind {
            SplitKind::Zsl | SplitKind::Truze => {
                let leaked: Vec<u32> = eval_classes.iter().filter(|c| !unseen.contains(c)).copied().collect();
                if !leaked.is_empty() {
                    let names: Vec<&str> = leaked.iter().map(|&c| ds.class_name(c)).collect();
                    return Err(Error::Leakage(format!(
                        "{} split: eval videos from non-unseen classes {}",
                        self.kind,
                        names.join(", ")
                    )));
                }
                if seen.is_empty() || unseen.is_empty() {
                    return contract("needs at least one seen and one unseen class".into());
                }
            }
            SplitKind::Gzsl => {
                if let Some(c) = eval_classes.iter().find(|c| !seen.contains(c) && !unseen.contains(c)) {
                    return contract(format!("eval class {c} outside seen ∪ unseen"));
                }
                if seen.is_empty() || unseen.is_empty() {
                    return contract("needs at least one seen and one unseen class".into());
                }
            }
            SplitKind::BaseNovel => {
                let covered = seen.len() + unseen.len();
                if covered as u32 != m {
                    return contract(format!("base ∪ novel covers {covered} of {m} classes"));
                }
                if let Some(c) = eval_classes.iter().find(|c| !seen.contains(c) && !unseen.contains(c)) {
                    return contract(format!("eval class {c} outside base ∪ novel"));
                }
            }
            SplitKind::KShot => {
                if !matches!(self.k, Some(k) if k >= 1) {
                    return contract("needs k >= 1".into());
                }
                if !unseen.is_empty() {
                    return contract("k-shot splits have no unseen classes".into());
                }
                if let Some(c) = eval_classes.iter().find(|c| !seen.contains(c)) {
                    return contract(format!("eval video from class {c} outside the sampled classes"));
                }
            }
        }

        if let Some(k) = self.k {
            let counts = ds.class_counts();
            let deficient: BTreeSet<u32> = self.deficient.iter().copied().collect();
            for &c in &self.seen {
                let got = train_per_class.get(&c).copied().unwrap_or(0);
                let available = counts[c as usize];
                let ok = if deficient.contains(&c) {
                    available < k && got == available
                } else {
                    got == k
                };
                if !ok {
                    return contract(format!(
                        "class {c} has {got} train videos, expected {k} (available {available})"
                    ));
                }
            }
        }
        Ok(())
    }

    /// Class ids that appear in the evaluation set.
    pub fn eval_classes(&self, ds: &LabeledEmbeddingDataset) -> Result<Vec<u32>> {
        let set: BTreeSet<u32> = ds.select(&self.eval)?.iter().map(|v| v.class_id).collect();
        Ok(set.into_iter().collect())
    }

    /// Line-oriented `key = value` text form.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# tempoprompt split v1\n");
        out.push_str(&format!("kind = {}\n", self.kind));
        out.push_str(&format!("seed = {}\n", self.seed));
        if let Some(k) = self.k {
            out.push_str(&format!("k = {k}\n"));
        }
        out.push_str(&format!("seen = {}\n", join(&self.seen)));
        out.push_str(&format!("unseen = {}\n", join(&self.unseen)));
        out.push_str(&format!("train = {}\n", join(&self.train)));
        out.push_str(&format!("eval = {}\n", join(&self.eval)));
        out.push_str(&format!("deficient = {}\n", join(&self.deficient)));
        out
    }

    /// Parses the text form and validates it against `ds`.
    pub fn import(text: &str, ds: &LabeledEmbeddingDataset) -> Result<Self> {
        let spec = Self::parse_text(text)?;
        spec.validate(ds)?;
        Ok(spec)
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    s.parse()
                        .map_err(|_| Error::Config(format!("split file: bad entry `{s}` in `{key}`")))
                })
                .collect()
        }
        let mut kind = None;
        let mut spec = SplitSpec {
            kind: SplitKind::Zsl,
            seen: Vec::new(),
            unseen: Vec::new(),
            train: Vec::new(),
            eval: Vec::new(),
            seed: 0,
            k: None,
            deficient: Vec::new(),
        };
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("split file line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "kind" => kind = Some(SplitKind::parse(value)?),
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| Error::Config(format!("split file: bad seed `{value}`")))?
                }
                "k" => {
                    spec.k = Some(
                        value
                            .parse()
                            .map_err(|_| Error::Config(format!("split file: bad k `{value}`")))?,
                    )
                }
                "seen" => spec.seen = list(key, value)?,
                "unseen" => spec.unseen = list(key, value)?,
                "train" => spec.train = list(key, value)?,
                "eval" => spec.eval = list(key, value)?,
                "deficient" => spec.deficient = list(key, value)?,
                other => return Err(Error::Config(format!("split file: unknown key `{other}`"))),
            }
        }
        spec.kind = kind.ok_or_else(|| Error::Config("split file: missing `kind`".into()))?;
        Ok(spec)
    }
}

fn shuffled_classes(ds: &LabeledEmbeddingDataset, seed: u64, stream: &str) -> Vec<u32> {
    let mut ids = ds.class_ids();
    ids.shuffle(&mut seed::rng(seed, stream));
    ids
}

fn videos_of(ds: &LabeledEmbeddingDataset, classes: &[u32]) -> Vec<u64> {
    let set: BTreeSet<u32> = classes.iter().copied().collect();
    sorted(ds.videos.iter().filter(|v| set.contains(&v.class_id)).map(|v| v.id).collect())
}

fn unseen_count(m: usize, fraction: f64) -> Result<usize> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("unseen fraction {fraction} outside [0, 1]")));
    }
    let n = (m as f64 * fraction).round() as usize;
    if n == 0 || n >= m {
        return Err(Error::Config(format!(
            "unseen fraction {fraction} of {m} classes leaves an empty side"
        )));
    }
    Ok(n)
}

/// Random class partition; train on every video of the seen classes,
/// evaluate on every video of the unseen ones.
pub fn make_zsl_split(ds: &LabeledEmbeddingDataset, unseen_fraction: f64, seed: u64) -> Result<SplitSpec> {
    let m = ds.num_classes();
    if m < 2 {
        return Err(Error::Config(format!("zsl split needs at least 2 classes, got {m}")));
    }
    let n_unseen = unseen_count(m, unseen_fraction)?;
    let order = shuffled_classes(ds, seed, "zsl-split");
    let unseen = sorted(order[..n_unseen].to_vec());
    let seen = sorted(order[n_unseen..].to_vec());
    let spec = SplitSpec {
        kind: SplitKind::Zsl,
        train: videos_of(ds, &seen),
        eval: videos_of(ds, &unseen),
        seen,
        unseen,
        seed,
        k: None,
        deficient: Vec::new(),
    };
    spec.validate(ds)?;
    Ok(spec)
}

/// Generalized zero-shot: a random class partition, a held-out share of every
/// seen class plus all unseen videos are evaluated over the union label space.
pub fn make_gzsl_split(
    ds: &LabeledEmbeddingDataset,
    unseen_fraction: f64,
    seen_eval_fraction: f64,
    seed: u64,
) -> Result<SplitSpec> {
    let m = ds.num_classes();
    if m < 2 {
        return Err(Error::Config(format!("gzsl split needs at least 2 classes, got {m}")));
    }
    if !(0.0..1.0).contains(&seen_eval_fraction) {
        return Err(Error::Config(format!(
            "seen eval fraction {seen_eval_fraction} outside [0, 1)"
        )));
    }
    let n_unseen = unseen_count(m, unseen_fraction)?;
    let order = shuffled_classes(ds, seed, "gzsl-split");
    let unseen = sorted(order[..n_unseen].to_vec());
    let seen = sorted(order[n_unseen..].to_vec());
    let by_class = ds.videos_by_class();
    let mut train = Vec::new();
    let mut eval = videos_of(ds, &unseen);
    for &c in &seen {
        let vids = &by_class[&c];
        let n_eval = ((vids.len() as f64) * seen_eval_fraction).round() as usize;
        let n_eval = n_eval.min(vids.len().saturating_sub(1));
        let mut rng = seed::rng_indexed(seed, "gzsl-heldout", c as u64);
        let held: BTreeSet<usize> = index::sample(&mut rng, vids.len(), n_eval).into_iter().collect();
        for (i, &id) in vids.iter().enumerate() {
            if held.contains(&i) {
                eval.push(id);
            } else {
                train.push(id);
            }
        }
    }
    let spec = SplitSpec {
        kind: SplitKind::Gzsl,
        seen,
        unseen,
        train: sorted(train),
        eval: sorted(eval),
        seed,
        k: None,
        deficient: Vec::new(),
    };
    spec.validate(ds)?;
    Ok(spec)
}

/// Disjoint class split with exact cardinalities. `pretrain_classes` names
/// classes a model was exposed to before this split; any of them among the
/// test classes is leakage.
pub fn make_truze_like_split(
    ds: &LabeledEmbeddingDataset,
    train_count: usize,
    test_count: usize,
    pretrain_classes: &[String],
    seed: u64,
) -> Result<SplitSpec> {
    let m = ds.num_classes();
    if train_count == 0 || test_count == 0 || train_count + test_count > m {
        return Err(Error::Config(format!(
            "truze split {train_count}/{test_count} does not fit {m} classes"
        )));
    }
    let order = shuffled_classes(ds, seed, "truze-split");
    let seen = sorted(order[..train_count].to_vec());
    let unseen = sorted(order[train_count..train_count + test_count].to_vec());
    let pretrain: BTreeSet<&str> = pretrain_classes.iter().map(String::as_str).collect();
    let leaked: Vec<&str> = unseen
        .iter()
        .map(|&c| ds.class_name(c))
        .filter(|n| pretrain.contains(n))
        .collect();
    if !leaked.is_empty() {
        return Err(Error::Leakage(format!(
            "pretraining classes overlap the test classes: {}",
            leaked.join(", ")
        )));
    }
    let spec = SplitSpec {
        kind: SplitKind::Truze,
        train: videos_of(ds, &seen),
        eval: videos_of(ds, &unseen),
        seen,
        unseen,
        seed,
        k: None,
        deficient: Vec::new(),
    };
    spec.validate(ds)?;
    Ok(spec)
}

/// Picks `k` videos per class (fewer only for deficient classes), returning
/// `(train, rest, deficient)`.
fn pick_shots(
    ds: &LabeledEmbeddingDataset,
    classes: &[u32],
    k: usize,
    seed: u64,
    stream: &str,
) -> (Vec<u64>, Vec<u64>, Vec<u32>) {
    let by_class = ds.videos_by_class();
    let (mut train, mut rest, mut deficient) = (Vec::new(), Vec::new(), Vec::new());
    for &c in classes {
        let vids = &by_class[&c];
        if vids.len() < k {
            deficient.push(c);
            train.extend_from_slice(vids);
            continue;
        }
        let mut rng = seed::rng_indexed(seed, stream, c as u64);
        let picked: BTreeSet<usize> = index::sample(&mut rng, vids.len(), k).into_iter().collect();
        for (i, &id) in vids.iter().enumerate() {
            if picked.contains(&i) {
                train.push(id);
            } else {
                rest.push(id);
            }
        }
    }
    (sorted(train), sorted(rest), sorted(deficient))
}

/// Exactly `k` train videos per class, sampled without replacement; the
/// remaining videos of those classes form the evaluation set.
pub fn sample_k_shot(ds: &LabeledEmbeddingDataset, classes: &[u32], k: usize, seed: u64) -> Result<SplitSpec> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if classes.is_empty() {
        return Err(Error::Config("k-shot sampling needs at least one class".into()));
    }
    let classes = sorted(classes.to_vec());
    let (train, eval, deficient) = pick_shots(ds, &classes, k, seed, "kshot");
    let spec = SplitSpec {
        kind: SplitKind::KShot,
        seen: classes,
        unseen: Vec::new(),
        train,
        eval,
        seed,
        k: Some(k),
        deficient,
    };
    spec.validate(ds)?;
    Ok(spec)
}

/// Base classes are the most frequent half (the larger half when `m` is odd),
/// ties broken by ascending class id. Training takes `k` shots per base
/// class; the rest of the base videos and every novel video are evaluated.
pub fn make_base_novel_split(ds: &LabeledEmbeddingDataset, k: usize, seed: u64) -> Result<SplitSpec> {
    let m = ds.num_classes();
    if m < 2 {
        return Err(Error::Config(format!("base-novel split needs at least 2 classes, got {m}")));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let counts = ds.class_counts();
    let mut order = ds.class_ids();
    order.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
    let n_base = m.div_ceil(2);
    let base = sorted(order[..n_base].to_vec());
    let novel = sorted(order[n_base..].to_vec());
    let (train, rest, deficient) = pick_shots(ds, &base, k, seed, "base-shots");
    let mut eval = rest;
    eval.extend(videos_of(ds, &novel));
    let spec = SplitSpec {
        kind: SplitKind::BaseNovel,
        seen: base,
        unseen: novel,
        train,
        eval: sorted(eval),
        seed,
        k: Some(k),
        deficient,
    };
    spec.validate(ds)?;
    Ok(spec)
}
