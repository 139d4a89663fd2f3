//! `TPCK` checkpoint files.
//!
//! ```text
//! "TPCK" | u32 version
//! config: u32 T, D, d, k, Co, r, F, F', stub mode | u64 seed, stub seed
//! u32 n_params, then per parameter:
//!     u32 name len | name | u32 rank | rank × u32 dims | numel × f64
//! u32 has_optimizer
//!     if 1: f64 lr, β1, β2, ε, weight decay | u64 step
//!           per parameter (same order): m tensor, v tensor (encoded as above,
//!           named "m/<name>" and "v/<name>")
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::config::{ModelConfig, StubMode};
use super::params::{TemporalPromptParams, PARAM_NAMES};
use crate::binio::{len_u32, Reader, Writer};
use crate::error::{Error, Result};
use crate::ndmath::{AdamWConfig, AdamWState, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"TPCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot {
    pub config: AdamWConfig,
    pub step: u64,
    /// One state per parameter, in [`PARAM_NAMES`] order.
    pub states: Vec<AdamWState>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: TemporalPromptParams,
    pub optimizer: Option<OptimizerSnapshot>,
}

fn write_tensor(w: &mut Writer, name: &str, t: &Tensor) -> Result<()> {
    w.string(name);
    w.u32(len_u32(t.rank(), "rank")?);
    for &d in t.shape() {
        w.u32(len_u32(d, "dimension")?);
    }
    for &v in t.data() {
        w.f64(v);
    }
    Ok(())
}

fn read_tensor(r: &mut Reader) -> Result<(String, Tensor)> {
    let name = r.string("tensor name")?;
    let rank = r.u32("tensor rank")? as usize;
    if rank > 8 {
        return r.fail(format!("tensor `{name}` has implausible rank {rank}"));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.u32("tensor dimension")? as usize);
    }
    let numel = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
    let Some(numel) = numel else {
        return r.fail(format!("tensor `{name}` shape {shape:?} overflows"));
    };
    let data = r.f64s(numel, "tensor data")?;
    Ok((name, Tensor::new(&shape, data)?))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let c = &self.config;
        let mut w = Writer::default();
        w.bytes(CHECKPOINT_MAGIC);
        w.u32(CHECKPOINT_VERSION);
        for v in [
            c.frames,
            c.dim,
            c.ctx_dim,
            c.kernel,
            c.conv_channels,
            c.adapter_ratio,
            c.image_feat_dim,
            c.text_feat_dim,
        ] {
            w.u32(len_u32(v, "config field")?);
        }
        w.u32(c.stub_mode.code());
        w.u64(c.seed);
        w.u64(c.stub_seed);

        w.u32(PARAM_NAMES.len() as u32);
        for (name, t) in self.params.named() {
            write_tensor(&mut w, name, t)?;
        }
        match &self.optimizer {
            None => w.u32(0),
            Some(opt) => {
                w.u32(1);
                let a = opt.config;
                for v in [a.lr, a.beta1, a.beta2, a.eps, a.weight_decay] {
                    w.f64(v);
                }
                w.u64(opt.step);
                if opt.states.len() != PARAM_NAMES.len() {
                    return Err(Error::Contract("optimizer state count mismatch".into()));
                }
                for (name, s) in PARAM_NAMES.iter().zip(&opt.states) {
                    write_tensor(&mut w, &format!("m/{name}"), &s.m)?;
                    write_tensor(&mut w, &format!("v/{name}"), &s.v)?;
                }
            }
        }
        Ok(w.buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected TPCK".into(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let mut f = [0usize; 8];
        for v in &mut f {
            *v = r.u32("config field")? as usize;
        }
        let mode_code = r.u32("stub mode")?;
        let Some(stub_mode) = StubMode::from_code(mode_code) else {
            return r.fail(format!("unknown stub mode code {mode_code}"));
        };
        let config = ModelConfig {
            frames: f[0],
            dim: f[1],
            ctx_dim: f[2],
            kernel: f[3],
            conv_channels: f[4],
            adapter_ratio: f[5],
            image_feat_dim: f[6],
            text_feat_dim: f[7],
            stub_mode,
            seed: r.u64("seed")?,
            stub_seed: r.u64("stub seed")?,
        };
        config.validate()?;

        let n = r.u32("parameter count")? as usize;
        if n != PARAM_NAMES.len() {
            return r.fail(format!("expected {} parameters, found {n}", PARAM_NAMES.len()));
        }
        let mut named = Vec::with_capacity(n);
        for _ in 0..n {
            named.push(read_tensor(&mut r)?);
        }
        let params = TemporalPromptParams::from_named(&config, named)?;

        let optimizer = match r.u32("optimizer flag")? {
            0 => None,
            1 => {
                let mut a = [0.0; 5];
                for v in &mut a {
                    *v = r.f64("optimizer config")?;
                }
                let adam = AdamWConfig {
                    lr: a[0],
                    beta1: a[1],
                    beta2: a[2],
                    eps: a[3],
                    weight_decay: a[4],
                };
                let step = r.u64("optimizer step")?;
                let mut states = Vec::with_capacity(PARAM_NAMES.len());
                for (name, p) in params.named() {
                    let (mname, m) = read_tensor(&mut r)?;
                    let (vname, v) = read_tensor(&mut r)?;
                    if mname != format!("m/{name}") || vname != format!("v/{name}") {
                        return r.fail(format!("optimizer state out of order at `{name}`"));
                    }
                    if m.shape() != p.shape() || v.shape() != p.shape() {
                        return r.fail(format!("optimizer state shape mismatch for `{name}`"));
                    }
                    states.push(AdamWState {
                        step,
                        m,
                        v,
                        config: adam,
                    });
                }
                Some(OptimizerSnapshot {
                    config: adam,
                    step,
                    states,
                })
            }
            other => return r.fail(format!("bad optimizer flag {other}")),
        };
        r.expect_end()?;
        Ok(Self {
            config,
            params,
            optimizer,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
