use crate::error::{Error, Result};

/// How a frozen encoder turns raw features into embeddings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StubMode {
    /// Fixed Gaussian projection drawn from the stub seed, then row-normalized.
    SeededProjection,
    /// Inputs were already embedded by an external frozen encoder; the stub
    /// only checks the width and row-normalizes.
    FileBacked,
}

impl StubMode {
    pub fn name(self) -> &'static str {
        match self {
            StubMode::SeededProjection => "seeded-projection",
            StubMode::FileBacked => "file-backed",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "seeded-projection" => Ok(StubMode::SeededProjection),
            "file-backed" => Ok(StubMode::FileBacked),
            other => Err(Error::Config(format!("unknown stub mode `{other}`"))),
        }
    }

    pub(crate) fn code(self) -> u32 {
        match self {
            StubMode::SeededProjection => 0,
            StubMode::FileBacked => 1,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(StubMode::SeededProjection),
            1 => Some(StubMode::FileBacked),
            _ => None,
        }
    }
}

pub const DEFAULT_STUB_SEED: u64 = 0x00C1_1F00_5EED;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Frames per video (T).
    pub frames: usize,
    /// Frozen embedding width (D).
    pub dim: usize,
    /// Temporal context width (d).
    pub ctx_dim: usize,
    /// Temporal kernel size (k), odd.
    pub kernel: usize,
    /// Convolution output channels (Co).
    pub conv_channels: usize,
    /// Adapter bottleneck ratio (r).
    pub adapter_ratio: usize,
    /// Seed for trainable-parameter initialization.
    pub seed: u64,
    /// Raw per-frame feature width fed to the image stub.
    pub image_feat_dim: usize,
    /// Raw class text feature width fed to the text stub.
    pub text_feat_dim: usize,
    pub stub_seed: u64,
    pub stub_mode: StubMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            frames: 8,
            dim: 64,
            ctx_dim: 16,
            kernel: 3,
            conv_channels: 16,
            adapter_ratio: 4,
            seed: 0,
            image_feat_dim: 2048,
            text_feat_dim: 512,
            stub_seed: DEFAULT_STUB_SEED,
            stub_mode: StubMode::SeededProjection,
        }
    }
}

impl ModelConfig {
    /// Adapter hidden width, `max(1, ⌊D/r⌋)`.
    pub fn bottleneck(&self) -> usize {
        (self.dim / self.adapter_ratio.max(1)).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("frames", self.frames),
            ("dim", self.dim),
            ("ctx_dim", self.ctx_dim),
            ("kernel", self.kernel),
            ("conv_channels", self.conv_channels),
            ("adapter_ratio", self.adapter_ratio),
            ("image_feat_dim", self.image_feat_dim),
            ("text_feat_dim", self.text_feat_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel size {} must be odd", self.kernel)));
        }
        if self.kernel > 2 * self.frames + 1 {
            return Err(Error::Config(format!(
                "kernel size {} exceeds 2T+1 = {}",
                self.kernel,
                2 * self.frames + 1
            )));
        }
        if self.stub_mode == StubMode::FileBacked
            && (self.image_feat_dim != self.dim || self.text_feat_dim != self.dim)
        {
            return Err(Error::Config(
                "file-backed stubs need feature widths equal to dim".into(),
            ));
        }
        Ok(())
    }
}
