//! Acceptance suite. Runs every headline criterion and prints one line each.
//!
//! Built with `harness = false` so the lines show up in plain `cargo test`
//! output; the process exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use tempoprompt::cli::{gradcheck_suite, run, GRADCHECK_TOLERANCE};
use tempoprompt::datakit::{make_truze_like_split, make_zsl_split, synth_appearance_dataset, AppearanceSpec, SplitSpec};
use tempoprompt::evalkit::{harmonic_mean, run_zsl, ProtocolSetup};
use tempoprompt::model::{ModelConfig, TemporalPromptParams, TpClip, Variant};
use tempoprompt::theorylab::{
    capacity_scaling_experiment, efficiency_report, information_preservation_experiment, parameter_scaling_check,
    CapacitySpec, InfoSpec,
};
use tempoprompt::training::{dataset_loss, TrainConfig, Trainer, TrainingSet};
use tempoprompt::Error;

use common::{appearance, counted, random_split, violations, KINDS};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let rows = gradcheck_suite(20, None).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = rows
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .ok_or("no rows")?;
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    check(
        failed.is_empty() && elapsed < Duration::from_secs(30),
        format!(
            "{} checks x 20 seeds, worst {} at {:.2e} (< {GRADCHECK_TOLERANCE:e}), failed {:?}, {}",
            rows.len(),
            worst.name,
            worst.max_rel_error,
            failed,
            secs(elapsed)
        ),
    )
}

fn harmonic_and_truze() -> Outcome {
    let rows = [((52.8, 57.8), 55.1), ((23.1, 55.1), 32.5)];
    let mut ok = true;
    let mut parts = Vec::new();
    for ((u, s), want) in rows {
        let h = 100.0 * harmonic_mean(u / 100.0, s / 100.0);
        ok &= (h - want).abs() <= 0.1;
        parts.push(format!("H({u}, {s}) = {h:.2}"));
    }
    for (m, train, test) in [(101, 70, 31), (51, 29, 22)] {
        let ds = counted(&vec![2; m]);
        let split = make_truze_like_split(&ds, train, test, &[], 0).map_err(|e| e.to_string())?;
        ok &= split.seen.len() == train && split.unseen.len() == test;
        parts.push(format!("{m} classes -> {}/{}", split.seen.len(), split.unseen.len()));
    }
    check(ok, parts.join(", "))
}

fn temporal_separation() -> Outcome {
    let start = Instant::now();
    let r = information_preservation_experiment(&InfoSpec::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let worst = r.per_seed.iter().map(|s| s.temporal).fold(f64::INFINITY, f64::min);
    check(
        (0.40..=0.60).contains(&r.baseline_accuracy)
            && r.temporal_accuracy >= 0.95
            && r.per_seed.len() == 10
            && elapsed < Duration::from_secs(120),
        format!(
            "frame-average {:.3}, temporal {:.3} (worst seed {worst:.3}), {} seeds, {}",
            r.baseline_accuracy,
            r.temporal_accuracy,
            r.per_seed.len(),
            secs(elapsed)
        ),
    )
}

fn capacity_scaling() -> Outcome {
    let start = Instant::now();
    let c = capacity_scaling_experiment(&CapacitySpec::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let first = c.errors[0];
    let last = *c.errors.last().ok_or("no errors")?;
    let errs: Vec<String> = c.errors.iter().map(|e| format!("{e:.4}")).collect();
    check(
        c.is_non_increasing() && last < first / 2.0 && c.slope <= -0.5 && elapsed < Duration::from_secs(300),
        format!(
            "err over d={:?}: [{}], slope {:.3}, {}",
            c.dims,
            errs.join(", "),
            c.slope,
            secs(elapsed)
        ),
    )
}

fn parameter_efficiency() -> Outcome {
    let base = ModelConfig::default();
    let v = parameter_scaling_check(&base, &[4, 8, 16, 32, 64]).map_err(|e| e.to_string())?;
    let e = efficiency_report(&base).map_err(|e| e.to_string())?;
    check(
        v.passes() && e.ratio < 0.10,
        format!(
            "{}, tunable/total {} / {} = {:.2}% at the default config",
            v.verdict_line(),
            e.tunable,
            e.tunable + e.frozen,
            100.0 * e.ratio
        ),
    )
}

/// Tampers with a valid split so that evaluation data reaches training.
fn inject_leakage(ds: &tempoprompt::datakit::LabeledEmbeddingDataset, s: &SplitSpec, trial: u64) -> Option<SplitSpec> {
    let mut bad = s.clone();
    let outside = ds.videos.iter().find(|v| !s.seen.contains(&v.class_id)).map(|v| v.id);
    match trial % 3 {
        0 if !s.eval.is_empty() => bad.train.push(s.eval[trial as usize % s.eval.len()]),
        1 if !s.unseen.is_empty() => bad.seen.push(s.unseen[trial as usize % s.unseen.len()]),
        _ => match (outside, s.eval.first()) {
            (Some(id), _) => bad.train.push(id),
            (None, Some(&id)) => bad.train.push(id),
            (None, None) => return None,
        },
    }
    bad.train.sort_unstable();
    bad.seen.sort_unstable();
    Some(bad)
}

fn cli_leakage_exit_codes() -> Result<usize, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().to_str().ok_or("non-utf8 temp dir")?;
    let data = format!("{out}/d.emb1");
    let mut sink = Vec::new();
    let code = run(
        ["tempoprompt", "--out", out, "gen-data", "--kind", "appearance", "--classes", "8", "--videos-per-class", "4", "--output", &data],
        &mut sink,
        &mut Vec::new(),
    );
    if code != 0 {
        return Err(format!("gen-data exited {code}"));
    }
    let ds = tempoprompt::datakit::read_emb1(Path::new(&data)).map_err(|e| e.to_string())?;
    let mut runs = 0;
    for trial in 0..6u64 {
        let split = make_zsl_split(&ds, 0.5, trial).map_err(|e| e.to_string())?;
        let bad = inject_leakage(&ds, &split, trial).ok_or("no leakage injectable")?;
        let path = format!("{out}/bad{trial}.txt");
        fs::write(&path, bad.to_text()).map_err(|e| e.to_string())?;
        let mut err = Vec::new();
        let code = run(
            ["tempoprompt", "--out", out, "--set", "optim.steps=1", "eval", "--protocol", "zsl", "--dataset", &data, "--split", &path],
            &mut Vec::new(),
            &mut err,
        );
        if code != 3 {
            return Err(format!("tampered split {trial} exited {code}: {}", String::from_utf8_lossy(&err)));
        }
        runs += 1;
    }
    Ok(runs)
}

fn protocol_integrity() -> Outcome {
    let mut constructed = 0;
    let mut bad = Vec::new();
    let (mut injected, mut detected) = (0, 0);
    for kind in KINDS {
        for trial in 0..1000u64 {
            let (ds, spec) = random_split(kind, trial);
            constructed += 1;
            let v = violations(&ds, &spec);
            if !v.is_empty() {
                bad.push(format!("{kind}#{trial}: {}", v.join("; ")));
            }
            if let Some(leaky) = inject_leakage(&ds, &spec, trial) {
                injected += 1;
                match leaky.validate(&ds) {
                    Err(e @ Error::Leakage(_)) if e.exit_code() == 3 => detected += 1,
                    other => bad.push(format!("{kind}#{trial}: leakage not flagged ({other:?})")),
                }
            }
        }
    }
    let cli_runs = cli_leakage_exit_codes()?;
    bad.truncate(3);
    check(
        bad.is_empty() && detected == injected,
        format!(
            "{constructed} splits, invariant violations {:?}, leakage detected {detected}/{injected}, CLI exit 3 on {cli_runs}/{cli_runs} tampered splits",
            bad
        ),
    )
}

fn loss_sanity() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [2usize, 51, 101] {
        let cfg = ModelConfig {
            seed: m as u64,
            ..ModelConfig::default()
        };
        let tp = TpClip::new(cfg.clone()).map_err(|e| e.to_string())?;
        let ds = synth_appearance_dataset(&AppearanceSpec {
            classes: m,
            videos_per_class: 4,
            frames: cfg.frames,
            dim: cfg.dim,
            text_dim: cfg.text_feat_dim,
            seed: 1000 + m as u64,
            sigma: 0.05,
            text_stub: None,
        })
        .map_err(|e| e.to_string())?;
        let mut params = TemporalPromptParams::init(&cfg).map_err(|e| e.to_string())?;
        params.set_temperature(1.0);
        let class_stub = tp
            .encode_text_stub(&ds.text_matrix(&ds.class_ids()).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
        let data = TrainingSet {
            videos: ds.videos.iter().collect(),
            targets: ds.videos.iter().map(|v| v.class_id as usize).collect(),
            class_stub,
        };
        let loss = dataset_loss(&params, &data, Variant::Temporal).map_err(|e| e.to_string())?;
        let ln_m = (m as f64).ln();
        let rel = (loss - ln_m).abs() / ln_m;
        ok &= rel < 0.10;
        parts.push(format!("m={m}: {loss:.4} vs ln m {ln_m:.4}"));
    }

    let (tp, ds) = appearance(16, 20, 7);
    let split = make_zsl_split(&ds, 0.5, 0).map_err(|e| e.to_string())?;
    let train_cfg = TrainConfig {
        steps: 200,
        ..TrainConfig::default()
    };
    let videos = ds.select(&split.train).map_err(|e| e.to_string())?;
    let targets = videos
        .iter()
        .map(|v| split.seen.binary_search(&v.class_id).unwrap())
        .collect();
    let class_stub = tp
        .encode_text_stub(&ds.text_matrix(&split.seen).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let data = TrainingSet {
        videos,
        targets,
        class_stub,
    };
    let init = TemporalPromptParams::init(&tp.config).map_err(|e| e.to_string())?;
    let before = dataset_loss(&init, &data, Variant::Temporal).map_err(|e| e.to_string())?;
    let mut trainer = Trainer::new(init, train_cfg.clone());
    trainer.run(&data).map_err(|e| e.to_string())?;
    let after = dataset_loss(&trainer.params, &data, Variant::Temporal).map_err(|e| e.to_string())?;
    ok &= after < before;
    parts.push(format!("200 steps: {before:.3e} -> {after:.3e}"));

    let setup = ProtocolSetup {
        model: &tp,
        dataset: &ds,
        train: train_cfg,
        initial: None,
        seeds: vec![0],
        epochs: None,
        fingerprint: String::new(),
    };
    let report = run_zsl(&setup, &split).map_err(|e| e.to_string())?;
    let top1 = report.top1(None).mean;
    ok &= top1 > 0.9;
    parts.push(format!("unseen top-1 {top1:.3}"));
    check(ok, parts.join(", "))
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("run");
    let o = out.to_str().ok_or("non-utf8 temp dir")?.to_string();
    let app = format!("{o}/app.emb1");
    let ord = format!("{o}/ord.emb1");
    let ck = format!("{o}/checkpoint.tpck");
    let commands: Vec<Vec<&str>> = vec![
        vec!["gen-data", "--kind", "appearance", "--classes", "10", "--videos-per-class", "18", "--output", &app],
        vec!["gen-data", "--kind", "temporal-order", "--videos", "40", "--output", &ord],
        vec!["--set", "optim.steps=20", "train", "--dataset", &app],
        vec!["--set", "optim.steps=30", "train", "--dataset", &app, "--resume", &ck],
        vec!["--set", "optim.steps=5", "eval", "--protocol", "zsl", "--dataset", &app, "--checkpoint", &ck],
        vec!["--set", "optim.steps=5", "eval", "--protocol", "gzsl", "--dataset", &app],
        vec!["--set", "optim.steps=5", "--set", "protocol.runs=2", "eval", "--protocol", "fewshot", "--dataset", &app, "--k", "2,4"],
        vec!["--set", "optim.steps=5", "eval", "--protocol", "base-novel", "--dataset", &app],
        vec!["--set", "optim.steps=5", "--set", "protocol.truze_train=6", "--set", "protocol.truze_test=4", "eval", "--protocol", "truze", "--dataset", &app],
        vec!["theory", "--experiment", "scaling"],
        vec!["theory", "--experiment", "efficiency"],
        vec!["theory", "--experiment", "info", "--seeds", "2", "--steps", "40"],
        vec!["theory", "--experiment", "capacity", "--dims", "4,8,16", "--seeds", "1", "--steps", "40"],
        vec!["gradcheck", "--seeds", "2"],
        vec!["report"],
    ];
    let mut attempts = Vec::new();
    for _ in 0..2 {
        if out.exists() {
            fs::remove_dir_all(&out).map_err(|e| e.to_string())?;
        }
        let mut stdout = Vec::new();
        for cmd in &commands {
            let mut args = vec!["tempoprompt", "--out", o.as_str()];
            args.extend(cmd.iter().copied());
            let mut err = Vec::new();
            let code = run(&args, &mut stdout, &mut err);
            if code != 0 {
                return Err(format!("{cmd:?} exited {code}: {}", String::from_utf8_lossy(&err)));
            }
        }
        attempts.push((snapshot(&out), stdout));
    }
    let (a, b) = (&attempts[0], &attempts[1]);
    let differing: Vec<&str> = a
        .0
        .iter()
        .zip(&b.0)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        a.0.len() == b.0.len() && differing.is_empty() && a.1 == b.1,
        format!(
            "{} commands, {} output files, differing {:?}, stdout identical: {}",
            commands.len(),
            a.0.len(),
            differing,
            a.1 == b.1
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("gradient suite", gradient_suite),
        ("harmonic mean and TruZe cardinalities", harmonic_and_truze),
        ("temporal-information separation", temporal_separation),
        ("capacity scaling", capacity_scaling),
        ("parameter efficiency", parameter_efficiency),
        ("protocol integrity", protocol_integrity),
        ("loss sanity", loss_sanity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let (tag, detail) = match f() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("acceptance {tag} {name}: {detail} [{}]", secs(start.elapsed()));
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
