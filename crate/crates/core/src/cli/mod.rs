//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration or contract error, 2 numerical
//! failure, 3 leakage detected.

mod config;
mod gradcheck;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

pub use config::{parse_list, parse_variant, OptimConfig, PathsConfig, ProtocolConfig, RunConfig};
pub use gradcheck::{gradcheck_suite, GradRow, GRADCHECK_TOLERANCE};

use crate::datakit::{
    make_gzsl_split, make_truze_like_split, make_zsl_split, read_descriptions, read_emb1, synth_appearance_dataset,
    synth_temporal_order_dataset, write_descriptions, write_emb1, AppearanceSpec, LabeledEmbeddingDataset, SplitKind,
    SplitSpec,
};
use crate::error::{Error, Result};
use crate::evalkit::{run_base_to_novel, run_few_shot, run_gzsl, run_zsl, Protocol, ProtocolReport, ProtocolSetup};
use crate::model::{Checkpoint, TemporalPromptParams, TpClip};
use crate::ndmath::OpKind;
use crate::theorylab::{
    capacity_scaling_experiment, efficiency_report, information_preservation_experiment, parameter_scaling_check,
    rows_to_csv, CapacitySpec, InfoSpec,
};
use crate::training::{Trainer, TrainingSet};

#[derive(Debug, Parser)]
#[command(name = "tempoprompt", version, about = "Temporal prompt tuning over frozen embeddings")]
pub struct Cli {
    /// INI config file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "tempoprompt-out")]
    pub out: PathBuf,
    /// Config override, e.g. `--set model.dim=32`. Repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic embedding dataset.
    GenData(GenDataArgs),
    /// Train the prompt parameters and write a checkpoint.
    Train(TrainArgs),
    /// Run an evaluation protocol and write CSV and Markdown reports.
    Eval(EvalArgs),
    /// Run a theory experiment.
    Theory(TheoryArgs),
    /// Finite-difference check of every differentiable op and the full loss.
    Gradcheck(GradcheckArgs),
    /// Re-render every report CSV in a directory into one summary.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DataKind {
    Appearance,
    TemporalOrder,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long, value_enum)]
    pub kind: DataKind,
    /// Number of classes (appearance).
    #[arg(long, default_value_t = 16)]
    pub classes: usize,
    #[arg(long, default_value_t = 20)]
    pub videos_per_class: usize,
    /// Total videos (temporal-order; must be even).
    #[arg(long, default_value_t = 400)]
    pub videos: usize,
    /// Frame noise scale (appearance).
    #[arg(long, default_value_t = 0.05)]
    pub sigma: f64,
    /// Draw class anchors independently of the text stub.
    #[arg(long)]
    pub unaligned: bool,
    /// Output file (default: paths.dataset, else OUT/dataset.emb1).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Split file; default is a fresh zero-shot split written to OUT/split.txt.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Total steps to reach (including resumed ones).
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Continue from this checkpoint's parameters and optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Checkpoint to write (default: paths.checkpoint, else OUT/checkpoint.tpck).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// zsl, gzsl, fewshot, base-novel or truze.
    #[arg(long)]
    pub protocol: String,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Starting parameters for every run.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Comma-separated K values (fewshot).
    #[arg(long)]
    pub k: Option<String>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Experiment {
    Capacity,
    Info,
    Scaling,
    Efficiency,
}

#[derive(Debug, Args)]
pub struct TheoryArgs {
    #[arg(long, value_enum)]
    pub experiment: Experiment,
    /// Comma-separated context widths (capacity, scaling).
    #[arg(long)]
    pub dims: Option<String>,
    /// Number of seeds (capacity, info).
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Training steps per run (capacity, info).
    #[arg(long)]
    pub steps: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    pub seeds: u64,
    /// Scale one op's backward rule by a wrong factor (harness self-test).
    #[arg(long, hide = true, value_name = "OP")]
    pub inject_fault: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report CSVs (default: OUT).
    #[arg(long)]
    pub dir: Option<PathBuf>,
}

fn io_ctx(path: &Path, e: std::io::Error) -> Error {
    Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_ctx(path, e))
}

fn require_file(what: &str, path: &Path) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!("{what} {} does not exist", path.display())));
    }
    Ok(())
}

fn descriptions_path(dataset: &Path) -> PathBuf {
    let mut name = dataset.file_name().unwrap_or_default().to_os_string();
    name.push(".classes.txt");
    dataset.with_file_name(name)
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
}

impl Context {
    fn from_cli(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        for o in &cli.overrides {
            cfg.set_dotted(o)?;
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        Ok(Self {
            cfg,
            out: cli.out.clone(),
        })
    }

    fn dataset_path(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        let path = flag
            .clone()
            .or_else(|| self.cfg.paths.dataset.clone())
            .ok_or_else(|| Error::Config("no dataset given (--dataset or paths.dataset)".into()))?;
        require_file("dataset", &path)?;
        Ok(path)
    }

    fn report_dir(&self) -> PathBuf {
        self.cfg.paths.report_dir.clone().unwrap_or_else(|| self.out.clone())
    }
}

fn check_dataset(tp: &TpClip, ds: &LabeledEmbeddingDataset) -> Result<()> {
    let cfg = &tp.config;
    if ds.frames != cfg.frames || ds.dim != cfg.dim || ds.text_dim != tp.text_stub.input_dim() {
        return Err(Error::Config(format!(
            "dataset is T={} D={} text={}, model expects T={} D={} text={}",
            ds.frames,
            ds.dim,
            ds.text_dim,
            cfg.frames,
            cfg.dim,
            tp.text_stub.input_dim()
        )));
    }
    Ok(())
}

fn cmd_gen_data(ctx: &Context, args: &GenDataArgs, w: &mut dyn Write) -> Result<()> {
    ctx.cfg.validate()?;
    let model = ctx.cfg.model_config();
    let path = args
        .output
        .clone()
        .or_else(|| ctx.cfg.paths.dataset.clone())
        .unwrap_or_else(|| ctx.out.join("dataset.emb1"));
    let ds = match args.kind {
        DataKind::Appearance => {
            let tp = TpClip::new(model.clone())?;
            synth_appearance_dataset(&AppearanceSpec {
                classes: args.classes,
                videos_per_class: args.videos_per_class,
                frames: model.frames,
                dim: model.dim,
                text_dim: model.text_feat_dim,
                seed: ctx.cfg.seed,
                sigma: args.sigma,
                text_stub: (!args.unaligned).then(|| tp.text_stub.clone()),
            })?
        }
        DataKind::TemporalOrder => {
            synth_temporal_order_dataset(args.videos, model.frames, model.dim, model.text_feat_dim, ctx.cfg.seed)?
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_ctx(parent, e))?;
    }
    write_emb1(&ds, &path)?;
    let names: Vec<String> = ds.classes.iter().map(|c| c.name.clone()).collect();
    write_descriptions(&names, &descriptions_path(&path))?;
    writeln!(
        w,
        "wrote {}: classes={} videos={} T={} D={}",
        path.display(),
        ds.num_classes(),
        ds.videos.len(),
        ds.frames,
        ds.dim
    )?;
    Ok(())
}

fn load_split(path: &Path, ds: &LabeledEmbeddingDataset) -> Result<SplitSpec> {
    require_file("split", path)?;
    let text = fs::read_to_string(path).map_err(|e| io_ctx(path, e))?;
    SplitSpec::import(&text, ds)
}

fn cmd_train(ctx: &Context, args: &TrainArgs, w: &mut dyn Write) -> Result<()> {
    let mut cfg = ctx.cfg.clone();
    if let Some(s) = args.steps {
        cfg.optim.steps = s;
        cfg.optim.epochs = None;
    }
    if let Some(lr) = args.lr {
        cfg.optim.adam.lr = lr;
    }
    cfg.validate()?;
    let dataset = ctx.dataset_path(&args.dataset)?;
    let split_path = args.split.clone().or_else(|| cfg.paths.split.clone());
    if let Some(p) = &split_path {
        require_file("split", p)?;
    }
    if let Some(p) = &args.resume {
        require_file("checkpoint", p)?;
    }
    let ckpt_path = args
        .checkpoint
        .clone()
        .or_else(|| cfg.paths.checkpoint.clone())
        .unwrap_or_else(|| ctx.out.join("checkpoint.tpck"));

    let model_cfg = cfg.model_config();
    let tp = TpClip::new(model_cfg.clone())?;
    let ds = read_emb1(&dataset)?;
    check_dataset(&tp, &ds)?;
    let split = match &split_path {
        Some(p) => load_split(p, &ds)?,
        None => {
            let s = make_zsl_split(&ds, cfg.protocol.unseen_fraction, cfg.seed)?;
            write_file(&ctx.out.join("split.txt"), s.to_text())?;
            s
        }
    };
    let space = &split.seen;
    let videos = ds.select(&split.train)?;
    let targets = videos
        .iter()
        .map(|v| space.binary_search(&v.class_id).map_err(|_| Error::Contract("train video outside seen classes".into())))
        .collect::<Result<Vec<_>>>()?;
    let data = TrainingSet {
        class_stub: tp.encode_text_stub(&ds.text_matrix(space)?)?,
        videos,
        targets,
    };
    let train_cfg = cfg.optim.train_config(cfg.seed, data.len());
    let total = train_cfg.steps;
    let mut trainer = match &args.resume {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config != model_cfg {
                return Err(Error::Config("checkpoint model config differs from the run config".into()));
            }
            let snap = ck
                .optimizer
                .ok_or_else(|| Error::Config("checkpoint has no optimizer state to resume from".into()))?;
            Trainer::resume(ck.params, &snap, train_cfg)?
        }
        None => Trainer::new(TemporalPromptParams::init(&model_cfg)?, train_cfg),
    };

    let mut logged = Vec::new();
    let outcome = trainer.run_until(&data, total, |step, loss| {
        let _ = writeln!(w, "step={step} loss={loss:.6}");
        logged.push((step, loss));
    });
    let checkpoint = Checkpoint {
        config: model_cfg,
        params: trainer.params.clone(),
        optimizer: Some(trainer.snapshot()),
    };
    let mut jsonl = String::new();
    for (step, loss) in &logged {
        jsonl.push_str(&serde_json::json!({ "step": step, "loss": loss }).to_string());
        jsonl.push('\n');
    }
    write_file(&ctx.out.join("metrics.jsonl"), jsonl)?;
    write_file(&ckpt_path, checkpoint.to_bytes()?)?;
    match outcome {
        Ok(_) => {
            writeln!(w, "saved checkpoint {} at step {}", ckpt_path.display(), trainer.step)?;
            Ok(())
        }
        Err(e) => {
            writeln!(
                w,
                "training stopped; last good checkpoint (step {}) saved to {}",
                trainer.step,
                ckpt_path.display()
            )?;
            Err(e)
        }
    }
}

fn expect_kind(protocol: Protocol, split: &SplitSpec, want: SplitKind) -> Result<()> {
    if split.kind != want {
        return Err(Error::Config(format!(
            "protocol {} needs a {want} split, got a {} split",
            protocol.name(),
            split.kind
        )));
    }
    Ok(())
}

fn cmd_eval(ctx: &Context, args: &EvalArgs, w: &mut dyn Write) -> Result<()> {
    let protocol = Protocol::parse(&args.protocol)?;
    let mut cfg = ctx.cfg.clone();
    if let Some(s) = args.steps {
        cfg.optim.steps = s;
        cfg.optim.epochs = None;
    }
    if let Some(r) = args.runs {
        cfg.protocol.runs = r;
        cfg.protocol.seeds = None;
    }
    if let Some(k) = &args.k {
        cfg.protocol.k_list = parse_list("k", k)?;
    }
    cfg.validate()?;
    let dataset = ctx.dataset_path(&args.dataset)?;
    let split_path = args.split.clone().or_else(|| cfg.paths.split.clone());
    if let Some(p) = &split_path {
        require_file("split", p)?;
    }
    let ckpt_path = args.checkpoint.clone().or_else(|| cfg.paths.checkpoint.clone());
    if let Some(p) = &ckpt_path {
        require_file("checkpoint", p)?;
    }
    if let Some(p) = &cfg.paths.pretrain_classes {
        require_file("pretrain class list", p)?;
    }

    let model_cfg = cfg.model_config();
    let tp = TpClip::new(model_cfg.clone())?;
    let ds = read_emb1(&dataset)?;
    check_dataset(&tp, &ds)?;
    let initial = match &ckpt_path {
        Some(p) => {
            let ck = Checkpoint::load(p)?;
            if ck.config.dim != model_cfg.dim || ck.config.frames != model_cfg.frames || ck.config.ctx_dim != model_cfg.ctx_dim {
                return Err(Error::Config("checkpoint model config differs from the run config".into()));
            }
            Some(ck.params)
        }
        None => None,
    };
    let train_cfg = cfg.optim.train_config(cfg.seed, 0);
    let setup = ProtocolSetup {
        model: &tp,
        dataset: &ds,
        train: train_cfg,
        initial: initial.as_ref(),
        seeds: cfg.run_seeds(),
        epochs: cfg.optim.epochs,
        fingerprint: cfg.fingerprint(),
    };
    let split = match &split_path {
        Some(p) if matches!(protocol, Protocol::Zsl | Protocol::Gzsl | Protocol::Truze) => Some(load_split(p, &ds)?),
        _ => None,
    };
    let report = match protocol {
        Protocol::Zsl => {
            let split = match split {
                Some(s) => s,
                None => make_zsl_split(&ds, cfg.protocol.unseen_fraction, cfg.seed)?,
            };
            expect_kind(protocol, &split, SplitKind::Zsl)?;
            run_zsl(&setup, &split)?
        }
        Protocol::Truze => {
            let split = match split {
                Some(s) => s,
                None => {
                    let pretrain = match &cfg.paths.pretrain_classes {
                        Some(p) => read_descriptions(p)?,
                        None => Vec::new(),
                    };
                    make_truze_like_split(&ds, cfg.protocol.truze_train, cfg.protocol.truze_test, &pretrain, cfg.seed)?
                }
            };
            expect_kind(protocol, &split, SplitKind::Truze)?;
            run_zsl(&setup, &split)?
        }
        Protocol::Gzsl => {
            let split = match split {
                Some(s) => s,
                None => make_gzsl_split(&ds, cfg.protocol.unseen_fraction, cfg.protocol.seen_eval_fraction, cfg.seed)?,
            };
            expect_kind(protocol, &split, SplitKind::Gzsl)?;
            run_gzsl(&setup, &split)?
        }
        Protocol::FewShot => run_few_shot(&setup, &cfg.protocol.k_list)?,
        Protocol::BaseNovel => run_base_to_novel(&setup, cfg.protocol.base_k)?,
    };
    let dir = ctx.report_dir();
    let stem = protocol.name();
    write_file(&dir.join(format!("{stem}.csv")), report.to_csv())?;
    let md = report.to_markdown();
    write_file(&dir.join(format!("{stem}.md")), &md)?;
    w.write_all(md.as_bytes())?;
    Ok(())
}

fn cmd_theory(ctx: &Context, args: &TheoryArgs, w: &mut dyn Write) -> Result<()> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let dims: Option<Vec<usize>> = args.dims.as_deref().map(|d| parse_list("dims", d)).transpose()?;
    let (name, rows, summary) = match args.experiment {
        Experiment::Capacity => {
            let mut spec = CapacitySpec::default();
            if let Some(d) = dims {
                spec.dims = d;
            }
            if let Some(n) = args.seeds {
                spec.seeds = (0..n).map(|i| cfg.seed + i).collect();
            }
            if let Some(s) = args.steps {
                spec.steps = s as usize;
            }
            let curve = capacity_scaling_experiment(&spec)?;
            let mut md = String::from("| d | mean val MSE |\n|---|---|\n");
            for (d, e) in curve.dims.iter().zip(&curve.errors) {
                md.push_str(&format!("| {d} | {e:.6} |\n"));
            }
            md.push_str(&format!(
                "\nlog-log slope: {:.3}\nnon-increasing: {}\ntarget Lipschitz estimate: {:.3}\nnoise floor: {:.4}\n",
                curve.slope,
                curve.is_non_increasing(),
                curve.lipschitz_estimate,
                curve.noise_floor
            ));
            if !curve.non_convergent.is_empty() {
                md.push_str(&format!("non-convergent cells (seed, d): {:?}\n", curve.non_convergent));
            }
            ("capacity", curve.rows(), md)
        }
        Experiment::Info => {
            let mut spec = InfoSpec::default();
            if let Some(n) = args.seeds {
                spec.seeds = (0..n).map(|i| cfg.seed + i).collect();
            }
            if let Some(s) = args.steps {
                spec.steps = s;
            }
            let r = information_preservation_experiment(&spec)?;
            let md = format!(
                "| model | test accuracy |\n|---|---|\n| temporal | {:.4} |\n| frame average | {:.4} |\n| chance | {:.4} |\n| order oracle | {:.4} |\n\ndelta proxy: {:.4}\n",
                r.temporal_accuracy, r.baseline_accuracy, r.chance, r.oracle_accuracy, r.delta_proxy
            );
            ("info", r.rows(), md)
        }
        Experiment::Scaling => {
            let dims = dims.unwrap_or_else(|| vec![4, 8, 16, 32, 64]);
            let v = parameter_scaling_check(&cfg.model_config(), &dims)?;
            let mut md = format!("{}\n\n| d | tunable | d-dependent | cross-attention |\n|---|---|---|---|\n", v.verdict_line());
            for i in 0..v.dims.len() {
                md.push_str(&format!(
                    "| {} | {} | {} | {} |\n",
                    v.dims[i], v.counts[i], v.d_dependent[i], v.cross_attention[i]
                ));
            }
            let coeffs: Vec<String> = v.coefficients.iter().map(|c| c.to_string()).collect();
            md.push_str(&format!("\ncoefficients (constant first): {}\n", coeffs.join(", ")));
            ("scaling", v.rows(), md)
        }
        Experiment::Efficiency => {
            let r = efficiency_report(&cfg.model_config())?;
            ("efficiency", r.rows(), r.to_markdown())
        }
    };
    write_file(&ctx.out.join(format!("theory_{name}.csv")), rows_to_csv(&rows))?;
    write_file(&ctx.out.join(format!("theory_{name}.md")), &summary)?;
    w.write_all(summary.as_bytes())?;
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs, w: &mut dyn Write) -> Result<()> {
    let fault = match &args.inject_fault {
        Some(name) => Some(OpKind::from_name(name).ok_or_else(|| Error::Config(format!("unknown op `{name}`")))?),
        None => None,
    };
    let rows = gradcheck_suite(args.seeds, fault)?;
    writeln!(w, "{:<14} {:>14}  status", "op", "max_rel_error")?;
    for r in &rows {
        writeln!(
            w,
            "{:<14} {:>14.3e}  {}",
            r.name,
            r.max_rel_error,
            if r.passed() { "PASS" } else { "FAIL" }
        )?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.passed()).map(|r| r.name).collect();
    if failed.is_empty() {
        writeln!(w, "all {} checks passed over {} seeds", rows.len(), args.seeds)?;
        Ok(())
    } else {
        Err(Error::Numerical(format!("gradient check failed for: {}", failed.join(", "))))
    }
}

fn cmd_report(ctx: &Context, args: &ReportArgs, w: &mut dyn Write) -> Result<()> {
    let dir = args.dir.clone().unwrap_or_else(|| ctx.report_dir());
    if !dir.is_dir() {
        return Err(Error::Config(format!("report directory {} does not exist", dir.display())));
    }
    let mut csvs: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| io_ctx(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    csvs.sort();
    let fingerprint = ctx.cfg.fingerprint();
    let mut out = String::from("# Summary\n");
    for path in &csvs {
        let text = fs::read_to_string(path).map_err(|e| io_ctx(path, e))?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        if text.starts_with("protocol,") {
            let report = ProtocolReport::from_csv(&text, &fingerprint)?;
            out.push_str(&format!("\n## {name}\n\n"));
            out.push_str(&report.to_markdown());
        } else if text.starts_with("experiment,") {
            out.push_str(&format!("\n## {name}\n\n| seed | d | metric | value |\n|---|---|---|---|\n"));
            for line in text.lines().skip(1) {
                let cells: Vec<&str> = line.splitn(5, ',').collect();
                if let [_, seed, d, metric, value] = cells[..] {
                    out.push_str(&format!("| {seed} | {d} | {metric} | {value} |\n"));
                }
            }
        }
    }
    write_file(&dir.join("summary.md"), &out)?;
    w.write_all(out.as_bytes())?;
    Ok(())
}

/// Runs a parsed command line, writing human-readable output to `w`.
pub fn execute(cli: &Cli, w: &mut dyn Write) -> Result<()> {
    let ctx = Context::from_cli(cli)?;
    match &cli.command {
        Command::GenData(a) => cmd_gen_data(&ctx, a, w),
        Command::Train(a) => cmd_train(&ctx, a, w),
        Command::Eval(a) => cmd_eval(&ctx, a, w),
        Command::Theory(a) => cmd_theory(&ctx, a, w),
        Command::Gradcheck(a) => cmd_gradcheck(a, w),
        Command::Report(a) => cmd_report(&ctx, a, w),
    }
}

/// Caps rayon's global pool from `TEMPOPROMPT_THREADS` (default 1).
pub fn init_threads() {
    let n = std::env::var("TEMPOPROMPT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1);
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
