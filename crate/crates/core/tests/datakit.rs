mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use tempoprompt::datakit::{
    decode_emb1, encode_emb1, make_base_novel_split, make_truze_like_split, make_zsl_split, read_emb1, round_f32,
    synth_appearance_dataset, synth_temporal_order_dataset, write_emb1, AppearanceSpec, SplitKind, SplitSpec,
    ASCENDING_CLASS, DESCENDING_CLASS,
};
use tempoprompt::Error;

use common::{counted, random_split, violations, KINDS};

#[test]
fn thousand_random_splits_per_kind_hold_their_invariants() {
    for kind in KINDS {
        for trial in 0..1000 {
            let (ds, spec) = random_split(kind, trial);
            let v = violations(&ds, &spec);
            assert!(v.is_empty(), "{kind} trial {trial}: {v:?}");
            spec.validate(&ds).unwrap();
        }
    }
}

#[test]
fn split_construction_is_pure() {
    for kind in KINDS {
        for trial in [0, 17, 999] {
            assert_eq!(random_split(kind, trial), random_split(kind, trial));
        }
    }
    let ds = counted(&[5; 12]);
    let a = make_zsl_split(&ds, 0.5, 3).unwrap();
    let b = make_zsl_split(&ds, 0.5, 4).unwrap();
    assert_ne!(a.unseen, b.unseen, "different seeds should usually differ");
}

#[test]
fn base_and_novel_partition_the_classes() {
    for trial in 0..100 {
        let (ds, s) = random_split(SplitKind::BaseNovel, trial);
        let base: BTreeSet<u32> = s.seen.iter().copied().collect();
        let novel: BTreeSet<u32> = s.unseen.iter().copied().collect();
        assert!(base.is_disjoint(&novel));
        let all: BTreeSet<u32> = base.union(&novel).copied().collect();
        assert_eq!(all, ds.class_ids().into_iter().collect());
    }
}

#[test]
fn text_round_trip_for_random_splits() {
    for kind in KINDS {
        for trial in 0..50 {
            let (ds, s) = random_split(kind, trial);
            assert_eq!(SplitSpec::import(&s.to_text(), &ds).unwrap(), s);
        }
    }
}

#[test]
fn importing_a_leaky_split_fails_with_leakage() {
    let ds = counted(&[4; 6]);
    let s = make_zsl_split(&ds, 0.5, 0).unwrap();
    let mut bad = s.clone();
    bad.train.push(s.eval[0]);
    bad.train.sort_unstable();
    let err = SplitSpec::import(&bad.to_text(), &ds).unwrap_err();
    assert!(matches!(err, Error::Leakage(_)), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn truze_rejects_pretrain_overlap_by_name() {
    let ds = counted(&[2; 20]);
    let s = make_truze_like_split(&ds, 12, 8, &[], 1).unwrap();
    let leaked = ds.class_name(s.unseen[0]).to_string();
    let err = make_truze_like_split(&ds, 12, 8, std::slice::from_ref(&leaked), 1).unwrap_err();
    assert!(matches!(&err, Error::Leakage(m) if m.contains(&leaked)), "{err}");
}

#[test]
fn base_classes_are_the_frequent_half() {
    let ds = counted(&[3, 9, 4, 8, 2, 7, 7]);
    let s = make_base_novel_split(&ds, 2, 0).unwrap();
    assert_eq!(s.seen, vec![1, 3, 5, 6]);
    assert_eq!(s.unseen, vec![0, 2, 4]);
}

#[test]
fn single_class_appearance_is_a_config_error() {
    let err = synth_appearance_dataset(&AppearanceSpec {
        classes: 1,
        videos_per_class: 3,
        frames: 4,
        dim: 8,
        text_dim: 5,
        seed: 0,
        sigma: 0.05,
        text_stub: None,
    })
    .unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
}

#[test]
fn temporal_order_pairs_share_their_frames_exactly() {
    let ds = synth_temporal_order_dataset(40, 8, 32, 16, 5).unwrap();
    assert_eq!(ds.videos.len(), 40);
    for pair in ds.videos.chunks(2) {
        let (a, b) = (&pair[0], &pair[1]);
        assert_eq!(
            BTreeSet::from([a.class_id, b.class_id]),
            BTreeSet::from([ASCENDING_CLASS, DESCENDING_CLASS])
        );
        let rows = |v: &tempoprompt::model::VideoEmbedding| {
            let mut r: Vec<Vec<u64>> = (0..v.len()).map(|i| v.frames.row(i).iter().map(|x| x.to_bits()).collect()).collect();
            r.sort();
            r
        };
        assert_eq!(rows(a), rows(b), "pair {} / {}", a.id, b.id);
        // Any symmetric statistic evaluated in a canonical order agrees bit for bit.
        let canonical_mean = |v| -> Vec<u64> {
            let r = rows(v);
            (0..ds.dim)
                .map(|j| (r.iter().map(|row| f64::from_bits(row[j])).sum::<f64>() / r.len() as f64).to_bits())
                .collect()
        };
        assert_eq!(canonical_mean(a), canonical_mean(b));
        assert_ne!(a.frames, b.frames, "pair frames should differ in order");
    }
}

#[test]
fn emb1_file_round_trip() {
    let ds = synth_temporal_order_dataset(10, 4, 6, 3, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.emb1");
    write_emb1(&ds, &path).unwrap();
    assert_eq!(read_emb1(&path).unwrap(), ds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emb1_bytes_round_trip_bit_exact(
        counts in prop::collection::vec(1usize..4, 1..6),
        values in prop::collection::vec(-1e6f64..1e6, 64),
    ) {
        let mut ds = counted(&counts);
        let mut it = values.iter().cycle();
        for v in &mut ds.videos {
            for x in v.frames.data_mut() {
                *x = round_f32(*it.next().unwrap());
            }
        }
        for c in &mut ds.classes {
            c.text = vec![round_f32(*it.next().unwrap())];
        }
        let bytes = encode_emb1(&ds).unwrap();
        let back = decode_emb1(&bytes).unwrap();
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(encode_emb1(&back).unwrap(), bytes);
    }

    #[test]
    fn zsl_eval_classes_are_unseen(trial in 0u64..10_000) {
        let (ds, s) = random_split(SplitKind::Zsl, trial);
        let unseen: BTreeSet<u32> = s.unseen.iter().copied().collect();
        for c in s.eval_classes(&ds).unwrap() {
            prop_assert!(unseen.contains(&c));
        }
    }

    #[test]
    fn truncated_emb1_is_a_format_error(cut in 1usize..64) {
        let ds = counted(&[2, 3]);
        let bytes = encode_emb1(&ds).unwrap();
        let n = bytes.len().saturating_sub(cut);
        let is_format = matches!(decode_emb1(&bytes[..n]), Err(Error::Format { .. }));
        prop_assert!(is_format);
    }
}
