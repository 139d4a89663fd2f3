use proptest::prelude::*;
use tempoprompt::model::{register_frozen, ModelConfig, TemporalPromptParams, VideoEmbedding, Variant};
use tempoprompt::ndmath::{grad_check, Graph, Tensor};
use tempoprompt::objective::{
    eval_logits, frame_contrastive_loss, initial_loss_sanity, pipeline_grad_check, similarity_logits,
    video_contrastive_loss, Batch,
};

fn unit_rows(n: usize, d: usize, seed: u64) -> Tensor {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let v: Vec<f64> = (0..d)
                .map(|j| ((seed as f64 + 1.0) * 0.61 + i as f64 * 1.7 + j as f64 * 0.29).sin() + 0.05 * j as f64)
                .collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect();
    Tensor::from_rows(&rows).unwrap()
}

fn toy() -> ModelConfig {
    ModelConfig {
        frames: 4,
        dim: 8,
        ctx_dim: 3,
        conv_channels: 4,
        image_feat_dim: 10,
        text_feat_dim: 6,
        ..ModelConfig::default()
    }
}

fn videos(cfg: &ModelConfig, n: usize) -> Vec<VideoEmbedding> {
    (0..n)
        .map(|i| VideoEmbedding::new(i as u64, (i % 3) as u32, unit_rows(cfg.frames, cfg.dim, 100 + i as u64)).unwrap())
        .collect()
}

#[test]
fn ln_m_for_reference_class_counts() {
    assert!((initial_loss_sanity(2).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
    assert!((initial_loss_sanity(51).unwrap() - 3.9318).abs() < 1e-4);
    assert!((initial_loss_sanity(101).unwrap() - 4.6151).abs() < 1e-4);
    assert!(initial_loss_sanity(1).is_err());
}

#[test]
fn logit_scale_gradient_matches_differences() {
    let v = unit_rows(5, 6, 1);
    let y = unit_rows(3, 6, 2);
    for s in [-1.0, 0.0, 1.5, 3.0] {
        let r = grad_check(&[Tensor::scalar(s)], |g, ids| {
            let vi = g.constant(v.clone());
            let yi = g.constant(y.clone());
            let l = similarity_logits(g, vi, yi, ids[0])?;
            g.cross_entropy(l, &[0, 1, 2, 0, 1])
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "scale {s}: {r:?}");
    }
}

#[test]
fn end_to_end_gradients_match_on_several_seeds() {
    for seed in 0..5 {
        let r = pipeline_grad_check(seed, None).unwrap();
        assert!(r.max_rel_error < 1e-4, "seed {seed}: {r:?}");
    }
}

#[test]
fn non_unit_rows_are_rejected() {
    let mut g = Graph::new();
    let v = g.constant(unit_rows(2, 4, 0).map(|x| 2.0 * x));
    let y = g.constant(unit_rows(3, 4, 1));
    let s = g.constant(Tensor::scalar(0.0));
    assert!(similarity_logits(&mut g, v, y, s).is_err());
}

#[test]
fn frame_objective_is_finite_and_positive() {
    let cfg = toy();
    let vids = videos(&cfg, 4);
    let stub = unit_rows(3, cfg.dim, 7);
    let params = TemporalPromptParams::init(&cfg).unwrap();
    let batch = Batch::new(vids.iter().collect(), vec![0, 1, 2, 0], &stub).unwrap();
    let mut g = Graph::new();
    let p = register_frozen(&params, &mut g);
    let l = frame_contrastive_loss(&mut g, &p, &batch, Variant::Temporal).unwrap();
    let v = g.value(l).item();
    assert!(v.is_finite() && v > 0.0);
}

#[test]
fn batch_contract_errors() {
    let stub = unit_rows(3, 8, 0);
    let cfg = toy();
    let vids = videos(&cfg, 2);
    assert!(Batch::new(Vec::new(), Vec::new(), &stub).is_err());
    assert!(Batch::new(vids.iter().collect(), vec![0], &stub).is_err());
    assert!(Batch::new(vids.iter().collect(), vec![0, 3], &stub).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn loss_ignores_batch_order(perm_seed in any::<u64>(), n in 2usize..7) {
        let cfg = toy();
        let vids = videos(&cfg, n);
        let stub = unit_rows(3, cfg.dim, 5);
        let targets: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = tempoprompt::seed::mix(s);
            order.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let params = TemporalPromptParams::init(&cfg).unwrap();
        let loss = |idx: &[usize]| {
            let b = Batch::new(idx.iter().map(|&i| &vids[i]).collect(), idx.iter().map(|&i| targets[i]).collect(), &stub).unwrap();
            let mut g = Graph::new();
            let p = register_frozen(&params, &mut g);
            let l = video_contrastive_loss(&mut g, &p, &b, Variant::Temporal).unwrap();
            g.value(l).item()
        };
        let base: Vec<usize> = (0..n).collect();
        prop_assert!((loss(&base) - loss(&order)).abs() < 1e-12);
    }

    #[test]
    fn argmax_is_independent_of_temperature(seed in any::<u64>(), s1 in -2.0f64..4.6, s2 in -2.0f64..4.6) {
        let v = unit_rows(6, 5, seed % 1000);
        let argmax_rows = |scale: f64| {
            let mut g = Graph::new();
            let vi = g.constant(v.clone());
            let yi = g.constant(v.clone());
            let si = g.constant(Tensor::scalar(scale));
            let l = similarity_logits(&mut g, vi, yi, si).unwrap();
            let t = g.value(l).clone();
            (0..t.rows())
                .map(|i| (0..t.cols()).max_by(|&a, &b| t.get2(i, a).total_cmp(&t.get2(i, b))).unwrap())
                .collect::<Vec<_>>()
        };
        let a = argmax_rows(s1);
        prop_assert_eq!(&a, &argmax_rows(s2));
        prop_assert_eq!(a, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn eval_logits_are_bounded_by_scale(seed in any::<u64>()) {
        let cfg = ModelConfig { seed, ..toy() };
        let vids = videos(&cfg, 3);
        let stub = unit_rows(4, cfg.dim, seed % 97);
        let params = TemporalPromptParams::init(&cfg).unwrap();
        let l = eval_logits(&params, &vids.iter().collect::<Vec<_>>(), &stub, Variant::Temporal).unwrap();
        let bound = 1.0 / params.temperature() + 1e-9;
        prop_assert!(l.data().iter().all(|x| x.abs() <= bound));
    }
}
