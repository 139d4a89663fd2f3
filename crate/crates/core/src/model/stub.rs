//! Frozen stand-ins for the pretrained image and text towers.

use rand::Rng;
use rand_distr::StandardNormal;

use super::config::{ModelConfig, StubMode};
use crate::error::{Error, Result};
use crate::ndmath::{MathError, Tensor, MIN_NORM};
use crate::seed;

/// A deterministic, never-trained encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenEncoderStub {
    mode: StubMode,
    seed: u64,
    input_dim: usize,
    output_dim: usize,
    /// `[input_dim, output_dim]`, only for seeded projections.
    projection: Option<Tensor>,
}

impl FrozenEncoderStub {
    pub fn new(mode: StubMode, seed: u64, input_dim: usize, output_dim: usize) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Config("stub dimensions must be positive".into()));
        }
        let projection = match mode {
            StubMode::SeededProjection => {
                let mut rng = seed::rng(seed, "frozen-stub");
                let data = (0..input_dim * output_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Some(Tensor::new(&[input_dim, output_dim], data)?)
            }
            StubMode::FileBacked => {
                if input_dim != output_dim {
                    return Err(Error::Config(format!(
                        "file-backed stub expects pre-encoded inputs: input dim {input_dim} != output dim {output_dim}"
                    )));
                }
                None
            }
        };
        Ok(Self {
            mode,
            seed,
            input_dim,
            output_dim,
            projection,
        })
    }

    pub fn image(config: &ModelConfig) -> Result<Self> {
        Self::new(
            config.stub_mode,
            seed::derive(config.stub_seed, seed::tag("image")),
            config.image_feat_dim,
            config.dim,
        )
    }

    pub fn text(config: &ModelConfig) -> Result<Self> {
        Self::new(
            config.stub_mode,
            seed::derive(config.stub_seed, seed::tag("text")),
            config.text_feat_dim,
            config.dim,
        )
    }

    pub fn mode(&self) -> StubMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    /// Number of frozen weights.
    pub fn weight_count(&self) -> usize {
        self.projection.as_ref().map_or(0, Tensor::numel)
    }

    /// Encodes rows of `[n, input_dim]` (or a single `[input_dim]` vector)
    /// into unit-norm rows of width `output_dim`.
    pub fn encode(&self, raw: &Tensor) -> Result<Tensor> {
        if raw.rank() == 0 || raw.rank() > 2 || raw.cols() != self.input_dim {
            return Err(Error::Config(format!(
                "stub expects rows of width {}, got shape {:?}",
                self.input_dim,
                raw.shape()
            )));
        }
        let rows = raw.rows();
        let matrix = raw.clone().reshape(&[rows, self.input_dim])?;
        let mut out = match &self.projection {
            Some(p) => matrix.matmul(p)?,
            None => matrix,
        };
        let cols = self.output_dim;
        let norms = out.row_norms();
        for (i, norm) in norms.into_iter().enumerate() {
            if norm.is_nan() || norm < MIN_NORM {
                return Err(MathError::Degenerate(format!("stub input row {i} encodes to zero")).into());
            }
            out.data_mut()[i * cols..(i + 1) * cols]
                .iter_mut()
                .for_each(|x| *x /= norm);
        }
        if raw.rank() == 1 {
            Ok(out.reshape(&[cols])?)
        } else {
            Ok(out)
        }
    }
}
