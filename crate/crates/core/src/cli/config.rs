//! Run configuration: a flat INI file with `[model]`, `[optim]`, `[protocol]`
//! and `[paths]` sections, plus a top-level `seed`.
//!
//! Every key has a default. The canonical text form lists every key in a
//! fixed order; its SHA-256 is the config fingerprint stamped on reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, StubMode, Variant};
use crate::ndmath::AdamWConfig;
use crate::training::{Objective, TrainConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct OptimConfig {
    pub adam: AdamWConfig,
    pub steps: u64,
    /// When set, overrides `steps` with `epochs · ⌈train videos / batch⌉`.
    pub epochs: Option<u64>,
    pub batch_size: usize,
    pub log_every: u64,
    pub variant: Variant,
    pub objective: Objective,
}

impl Default for OptimConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            adam: t.adam,
            steps: t.steps,
            epochs: None,
            batch_size: t.batch_size,
            log_every: t.log_every,
            variant: t.variant,
            objective: t.objective,
        }
    }
}

impl OptimConfig {
    pub fn steps_for(&self, train_videos: usize) -> u64 {
        match self.epochs {
            Some(e) => e * (train_videos.div_ceil(self.batch_size.max(1))) as u64,
            None => self.steps,
        }
    }

    pub fn train_config(&self, seed: u64, train_videos: usize) -> TrainConfig {
        TrainConfig {
            adam: self.adam,
            steps: self.steps_for(train_videos),
            batch_size: self.batch_size,
            seed,
            log_every: self.log_every,
            variant: self.variant,
            objective: self.objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub k_list: Vec<usize>,
    /// Shots per base class for base-to-novel.
    pub base_k: usize,
    pub unseen_fraction: f64,
    pub seen_eval_fraction: f64,
    pub runs: usize,
    /// Explicit run seeds; otherwise `seed, seed+1, …` for `runs` runs.
    pub seeds: Option<Vec<u64>>,
    pub truze_train: usize,
    pub truze_test: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            k_list: vec![2, 4, 8, 16],
            base_k: 16,
            unseen_fraction: 0.5,
            seen_eval_fraction: 0.2,
            runs: 1,
            seeds: None,
            truze_train: 0,
            truze_test: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathsConfig {
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub report_dir: Option<PathBuf>,
    /// Class names seen during pretraining, one per line (TruZe splits).
    pub pretrain_classes: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub optim: OptimConfig,
    pub protocol: ProtocolConfig,
    pub paths: PathsConfig,
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

pub fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_num(key, s))
        .collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn path_text(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

pub fn parse_variant(v: &str) -> Result<Variant> {
    match v {
        "temporal" => Ok(Variant::Temporal),
        "frame-average" => Ok(Variant::FrameAverage),
        _ => Err(Error::Config(format!("unknown variant `{v}` (temporal, frame-average)"))),
    }
}

fn parse_objective(v: &str) -> Result<Objective> {
    match v {
        "video" => Ok(Objective::Video),
        "frame" => Ok(Objective::Frame),
        _ => Err(Error::Config(format!("unknown objective `{v}` (video, frame)"))),
    }
}

fn objective_name(o: Objective) -> &'static str {
    match o {
        Objective::Video => "video",
        Objective::Frame => "frame",
    }
}

impl RunConfig {
    /// Sets one `section.key` (top-level keys have an empty section).
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let full = if section.is_empty() { key.to_string() } else { format!("{section}.{key}") };
        let k = full.as_str();
        match k {
            "seed" => self.seed = parse_num(k, v)?,
            "model.frames" => self.model.frames = parse_num(k, v)?,
            "model.dim" => self.model.dim = parse_num(k, v)?,
            "model.ctx_dim" => self.model.ctx_dim = parse_num(k, v)?,
            "model.kernel" => self.model.kernel = parse_num(k, v)?,
            "model.conv_channels" => self.model.conv_channels = parse_num(k, v)?,
            "model.adapter_ratio" => self.model.adapter_ratio = parse_num(k, v)?,
            "model.image_feat_dim" => self.model.image_feat_dim = parse_num(k, v)?,
            "model.text_feat_dim" => self.model.text_feat_dim = parse_num(k, v)?,
            "model.stub_mode" => self.model.stub_mode = StubMode::parse(v)?,
            "model.stub_seed" => self.model.stub_seed = parse_num(k, v)?,
            "optim.lr" => self.optim.adam.lr = parse_num(k, v)?,
            "optim.weight_decay" => self.optim.adam.weight_decay = parse_num(k, v)?,
            "optim.beta1" => self.optim.adam.beta1 = parse_num(k, v)?,
            "optim.beta2" => self.optim.adam.beta2 = parse_num(k, v)?,
            "optim.eps" => self.optim.adam.eps = parse_num(k, v)?,
            "optim.steps" => self.optim.steps = parse_num(k, v)?,
            "optim.epochs" => self.optim.epochs = if v.is_empty() { None } else { Some(parse_num(k, v)?) },
            "optim.batch_size" => self.optim.batch_size = parse_num(k, v)?,
            "optim.log_every" => self.optim.log_every = parse_num(k, v)?,
            "optim.variant" => self.optim.variant = parse_variant(v)?,
            "optim.objective" => self.optim.objective = parse_objective(v)?,
            "protocol.k_list" => self.protocol.k_list = parse_list(k, v)?,
            "protocol.base_k" => self.protocol.base_k = parse_num(k, v)?,
            "protocol.unseen_fraction" => self.protocol.unseen_fraction = parse_num(k, v)?,
            "protocol.seen_eval_fraction" => self.protocol.seen_eval_fraction = parse_num(k, v)?,
            "protocol.runs" => self.protocol.runs = parse_num(k, v)?,
            "protocol.seeds" => {
                let seeds: Vec<u64> = parse_list(k, v)?;
                self.protocol.seeds = (!seeds.is_empty()).then_some(seeds);
            }
            "protocol.truze_train" => self.protocol.truze_train = parse_num(k, v)?,
            "protocol.truze_test" => self.protocol.truze_test = parse_num(k, v)?,
            "paths.dataset" => self.paths.dataset = opt_path(v),
            "paths.checkpoint" => self.paths.checkpoint = opt_path(v),
            "paths.split" => self.paths.split = opt_path(v),
            "paths.report_dir" => self.paths.report_dir = opt_path(v),
            "paths.pretrain_classes" => self.paths.pretrain_classes = opt_path(v),
            _ => return Err(Error::Config(format!("unknown config key `{k}`"))),
        }
        Ok(())
    }

    /// Applies a `section.key=value` override.
    pub fn set_dotted(&mut self, assignment: &str) -> Result<()> {
        let (lhs, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        let lhs = lhs.trim();
        let (section, key) = lhs.split_once('.').unwrap_or(("", lhs));
        self.set(section, key, value)
    }

    pub fn parse_ini(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section = String::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !["model", "optim", "protocol", "paths"].contains(&name) {
                    return Err(Error::Config(format!("line {}: unknown section [{name}]", n + 1)));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            cfg.set(&section, key.trim(), value)
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse_ini(&text)
    }

    /// Every key in a fixed order; parsing it back gives the same config.
    pub fn canonical_text(&self) -> String {
        let (m, o, p, a) = (&self.model, &self.optim, &self.protocol, &self.optim.adam);
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "\n[model]");
        let _ = writeln!(s, "frames = {}", m.frames);
        let _ = writeln!(s, "dim = {}", m.dim);
        let _ = writeln!(s, "ctx_dim = {}", m.ctx_dim);
        let _ = writeln!(s, "kernel = {}", m.kernel);
        let _ = writeln!(s, "conv_channels = {}", m.conv_channels);
        let _ = writeln!(s, "adapter_ratio = {}", m.adapter_ratio);
        let _ = writeln!(s, "image_feat_dim = {}", m.image_feat_dim);
        let _ = writeln!(s, "text_feat_dim = {}", m.text_feat_dim);
        let _ = writeln!(s, "stub_mode = {}", m.stub_mode.name());
        let _ = writeln!(s, "stub_seed = {}", m.stub_seed);
        let _ = writeln!(s, "\n[optim]");
        let _ = writeln!(s, "lr = {:?}", a.lr);
        let _ = writeln!(s, "weight_decay = {:?}", a.weight_decay);
        let _ = writeln!(s, "beta1 = {:?}", a.beta1);
        let _ = writeln!(s, "beta2 = {:?}", a.beta2);
        let _ = writeln!(s, "eps = {:?}", a.eps);
        let _ = writeln!(s, "steps = {}", o.steps);
        let _ = writeln!(s, "epochs = {}", o.epochs.map(|e| e.to_string()).unwrap_or_default());
        let _ = writeln!(s, "batch_size = {}", o.batch_size);
        let _ = writeln!(s, "log_every = {}", o.log_every);
        let _ = writeln!(s, "variant = {}", o.variant.name());
        let _ = writeln!(s, "objective = {}", objective_name(o.objective));
        let _ = writeln!(s, "\n[protocol]");
        let _ = writeln!(s, "k_list = {}", join(&p.k_list));
        let _ = writeln!(s, "base_k = {}", p.base_k);
        let _ = writeln!(s, "unseen_fraction = {:?}", p.unseen_fraction);
        let _ = writeln!(s, "seen_eval_fraction = {:?}", p.seen_eval_fraction);
        let _ = writeln!(s, "runs = {}", p.runs);
        let _ = writeln!(s, "seeds = {}", p.seeds.as_deref().map(join).unwrap_or_default());
        let _ = writeln!(s, "truze_train = {}", p.truze_train);
        let _ = writeln!(s, "truze_test = {}", p.truze_test);
        let _ = writeln!(s, "\n[paths]");
        let _ = writeln!(s, "dataset = {}", path_text(&self.paths.dataset));
        let _ = writeln!(s, "checkpoint = {}", path_text(&self.paths.checkpoint));
        let _ = writeln!(s, "split = {}", path_text(&self.paths.split));
        let _ = writeln!(s, "report_dir = {}", path_text(&self.paths.report_dir));
        let _ = writeln!(s, "pretrain_classes = {}", path_text(&self.paths.pretrain_classes));
        s
    }

    /// Hex SHA-256 of the canonical text.
    pub fn fingerprint(&self) -> String {
        Sha256::digest(self.canonical_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    /// Model config with the global seed as the initialization seed.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            seed: self.seed,
            ..self.model.clone()
        }
    }

    pub fn run_seeds(&self) -> Vec<u64> {
        match &self.protocol.seeds {
            Some(s) => s.clone(),
            None => (0..self.protocol.runs as u64).map(|i| self.seed + i).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.optim.batch_size == 0 {
            return Err(Error::Config("optim.batch_size must be at least 1".into()));
        }
        if self.protocol.runs == 0 && self.protocol.seeds.is_none() {
            return Err(Error::Config("protocol.runs must be at least 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_text() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse_ini(&cfg.canonical_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.fingerprint(), cfg.fingerprint());
        assert_eq!(cfg.optim.adam.lr, 8e-6);
        assert_eq!(cfg.optim.adam.weight_decay, 0.001);
    }

    #[test]
    fn overrides_and_errors() {
        let mut cfg = RunConfig::parse_ini("seed = 3\n[model]\ndim = 32\n# comment\n[protocol]\nk_list = 2, 4\n").unwrap();
        assert_eq!((cfg.seed, cfg.model.dim, cfg.protocol.k_list.clone()), (3, 32, vec![2, 4]));
        cfg.set_dotted("optim.steps=7").unwrap();
        assert_eq!(cfg.optim.steps, 7);
        assert!(RunConfig::parse_ini("[bogus]\n").is_err());
        assert!(RunConfig::parse_ini("[model]\nwidth = 3\n").is_err());
        assert!(cfg.set_dotted("model.dim=abc").is_err());
    }

    #[test]
    fn epochs_derive_steps() {
        let o = OptimConfig {
            epochs: Some(3),
            batch_size: 16,
            ..OptimConfig::default()
        };
        assert_eq!(o.steps_for(40), 9);
    }
}
