use std::fs;
use std::path::Path;

use tempoprompt::cli::{run, RunConfig};
use tempoprompt::model::{Checkpoint, TemporalPromptParams};

struct Out {
    code: i32,
    stdout: String,
    stderr: String,
}

fn tp(args: &[&str]) -> Out {
    let mut argv = vec!["tempoprompt"];
    argv.extend_from_slice(args);
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let code = run(&argv, &mut o, &mut e);
    Out {
        code,
        stdout: String::from_utf8(o).unwrap(),
        stderr: String::from_utf8(e).unwrap(),
    }
}

fn ok(args: &[&str]) -> String {
    let r = tp(args);
    assert_eq!(r.code, 0, "{args:?}: {}", r.stderr);
    r.stdout
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path) -> String {
    let data = dir.join("d.emb1");
    ok(&["--out", s(dir), "gen-data", "--kind", "appearance", "--classes", "8", "--videos-per-class", "8", "--output", s(&data)]);
    s(&data).to_string()
}

#[test]
fn gen_data_writes_names_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("o.emb1");
    let out = ok(&["--out", s(dir.path()), "gen-data", "--kind", "temporal-order", "--videos", "20", "--output", s(&data)]);
    assert!(out.contains("classes=2 videos=20 T=8 D=64"), "{out}");
    let names = fs::read_to_string(dir.path().join("o.emb1.classes.txt")).unwrap();
    assert_eq!(names.lines().count(), 2);
}

#[test]
fn zero_step_training_saves_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    let ck = dir.path().join("c.tpck");
    ok(&["--out", s(dir.path()), "--seed", "5", "train", "--dataset", &data, "--steps", "0", "--checkpoint", s(&ck)]);
    let saved = Checkpoint::load(&ck).unwrap();
    let cfg = RunConfig {
        seed: 5,
        ..RunConfig::default()
    };
    assert_eq!(saved.params, TemporalPromptParams::init(&cfg.model_config()).unwrap());
    assert_eq!(saved.optimizer.unwrap().step, 0);
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let lr = "optim.lr=0.001";
    ok(&["--out", s(&a), "--set", lr, "train", "--dataset", &data, "--steps", "30"]);
    ok(&["--out", s(&b), "--set", lr, "train", "--dataset", &data, "--steps", "18"]);
    let ck = b.join("checkpoint.tpck");
    ok(&["--out", s(&b), "--set", lr, "train", "--dataset", &data, "--split", s(&b.join("split.txt")), "--steps", "30", "--resume", s(&ck)]);
    assert_eq!(fs::read(a.join("checkpoint.tpck")).unwrap(), fs::read(&ck).unwrap());
    let metrics = fs::read_to_string(a.join("metrics.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    assert_eq!(first["step"], 0);
    assert!(first["loss"].as_f64().unwrap().is_finite());
}

#[test]
fn train_logs_step_lines_and_respects_epochs() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    // 4 seen classes x 8 videos = 32 train videos, batch 16: two steps per epoch.
    let out = ok(&["--out", s(dir.path()), "--set", "optim.epochs=3", "--set", "optim.log_every=1", "train", "--dataset", &data]);
    let steps: Vec<&str> = out.lines().filter(|l| l.starts_with("step=")).collect();
    assert_eq!(steps.len(), 6, "{out}");
    assert!(steps[0].starts_with("step=0 loss="));
}

#[test]
fn numerical_blowup_exits_2_and_keeps_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    let r = tp(&["--out", s(dir.path()), "--set", "optim.lr=1e300", "train", "--dataset", &data, "--steps", "20"]);
    assert_eq!(r.code, 2, "{} / {}", r.stdout, r.stderr);
    assert!(r.stdout.contains("last good checkpoint"), "{}", r.stdout);
    let ck = Checkpoint::load(&dir.path().join("checkpoint.tpck")).unwrap();
    assert!(ck.params.as_array().iter().all(|t| t.is_finite()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    assert_eq!(tp(&["--out", o, "eval", "--protocol", "zsl", "--dataset", "missing.emb1"]).code, 1);
    assert_eq!(tp(&["--out", o, "--set", "model.bogus=1", "theory", "--experiment", "scaling"]).code, 1);
    assert_eq!(tp(&["--out", o, "gradcheck", "--seeds", "1", "--inject-fault", "nonsense"]).code, 1);
    assert_eq!(tp(&["--help"]).code, 0);
    assert_eq!(tp(&["frobnicate"]).code, 1);

    let r = tp(&["gradcheck", "--seeds", "2", "--inject-fault", "l2_normalize"]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("l2_normalize"), "{}", r.stderr);
    let fail_rows: Vec<&str> = r.stdout.lines().filter(|l| l.ends_with("FAIL")).collect();
    assert!(fail_rows.iter().any(|l| l.starts_with("l2_normalize")), "{}", r.stdout);

    let clean = ok(&["gradcheck", "--seeds", "2"]);
    assert_eq!(clean.lines().filter(|l| l.ends_with("PASS")).count(), 15, "{clean}");
}

#[test]
fn leaky_split_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    ok(&["--out", s(dir.path()), "train", "--dataset", &data, "--steps", "0"]);
    let split = fs::read_to_string(dir.path().join("split.txt")).unwrap();
    let unseen = split.lines().find_map(|l| l.strip_prefix("unseen = ")).unwrap();
    let first_unseen = unseen.split(',').next().unwrap();
    let leaky: String = split
        .lines()
        .map(|l| match l.strip_prefix("seen = ") {
            Some(rest) => {
                let mut ids: Vec<u32> = rest.split(',').map(|x| x.trim().parse().unwrap()).collect();
                ids.push(first_unseen.trim().parse().unwrap());
                ids.sort_unstable();
                format!("seen = {}\n", ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","))
            }
            None => format!("{l}\n"),
        })
        .collect();
    let path = dir.path().join("leaky.txt");
    fs::write(&path, leaky).unwrap();
    let r = tp(&["--out", s(dir.path()), "eval", "--protocol", "zsl", "--dataset", &data, "--split", s(&path)]);
    assert_eq!(r.code, 3, "{}", r.stderr);
    assert!(r.stderr.contains("leakage"), "{}", r.stderr);
    let r = tp(&["--out", s(dir.path()), "eval", "--protocol", "gzsl", "--dataset", &data, "--split", s(&dir.path().join("split.txt"))]);
    assert_eq!(r.code, 1, "protocol/split kind mismatch: {}", r.stderr);
}

#[test]
fn report_fingerprint_matches_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    let cfg_path = dir.path().join("run.ini");
    fs::write(
        &cfg_path,
        format!(
            "seed = 3\n\n[optim]\nsteps = 4\nlr = 0.001\n\n[protocol]\nruns = 2\n\n[paths]\ndataset = {data}\nreport_dir = {}\n",
            s(&dir.path().join("reports"))
        ),
    )
    .unwrap();
    ok(&["--config", s(&cfg_path), "eval", "--protocol", "zsl"]);
    let md = fs::read_to_string(dir.path().join("reports/zsl.md")).unwrap();
    let expected = RunConfig::load(&cfg_path).unwrap().fingerprint();
    assert!(md.contains(&expected), "{md}");
    assert!(md.contains("- seeds: 3, 4"), "{md}");
    let csv = fs::read_to_string(dir.path().join("reports/zsl.csv")).unwrap();
    assert!(csv.starts_with("protocol,seed,k,metric,value\n"));

    let summary = ok(&["--config", s(&cfg_path), "report", "--dir", s(&dir.path().join("reports"))]);
    assert!(summary.contains(&expected));
    assert!(dir.path().join("reports/summary.md").is_file());
}

#[test]
fn commands_leave_the_dataset_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let data = gen(dir.path());
    let before = fs::read(&data).unwrap();
    let o = s(dir.path());
    ok(&["--out", o, "train", "--dataset", &data, "--steps", "3"]);
    for p in ["zsl", "gzsl", "base-novel"] {
        ok(&["--out", o, "--set", "optim.steps=2", "--set", "protocol.base_k=4", "eval", "--protocol", p, "--dataset", &data]);
    }
    assert_eq!(fs::read(&data).unwrap(), before);
}

#[test]
fn theory_outputs_and_verdict_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    let out = ok(&["--out", o, "theory", "--experiment", "scaling"]);
    assert!(out.starts_with("degree ≤ 2: PASS"), "{out}");
    let csv = fs::read_to_string(dir.path().join("theory_scaling.csv")).unwrap();
    assert!(csv.starts_with("experiment,seed,d,metric,value\n"));
    let out = ok(&["--out", o, "theory", "--experiment", "efficiency"]);
    assert!(out.contains("4.4 / 81.2"));
}
