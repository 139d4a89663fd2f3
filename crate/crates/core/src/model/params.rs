//! The trainable temporal-prompt parameter set.

use rand::Rng;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::ndmath::{Graph, NodeId, Tensor};
use crate::seed;

/// Initial temperature τ; the logit scale starts at `ln(1/τ)`.
pub const INIT_TEMPERATURE: f64 = 0.07;
pub const MIN_TEMPERATURE: f64 = 0.01;
pub const MAX_TEMPERATURE: f64 = 1.0;

pub const PARAM_NAMES: [&str; 12] = [
    "conv.weight",
    "conv.bias",
    "fc.weight",
    "fc.bias",
    "fusion.weight",
    "fusion.bias",
    "adapter.down.weight",
    "adapter.down.bias",
    "adapter.up.weight",
    "adapter.up.bias",
    "text.offset",
    "logit_scale",
];

/// One slot per trainable leaf. Instantiated with [`Tensor`] for the values
/// and with [`NodeId`] for their handles inside a [`Graph`].
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSlots<T> {
    /// `[k, D, Co]`
    pub conv_weight: T,
    pub conv_bias: T,
    /// `[Co, d]`
    pub fc_weight: T,
    pub fc_bias: T,
    /// `[D + d, D]`
    pub fusion_weight: T,
    pub fusion_bias: T,
    /// `[D, D/r]`
    pub adapter_down_weight: T,
    pub adapter_down_bias: T,
    /// `[D/r, D]`
    pub adapter_up_weight: T,
    pub adapter_up_bias: T,
    /// `[D]`, shared additive prompt on the class text embedding.
    pub text_offset: T,
    /// Scalar `ln(1/τ)`.
    pub logit_scale: T,
}

pub type TemporalPromptParams = PromptSlots<Tensor>;
pub type ParamNodes = PromptSlots<NodeId>;

impl<T> PromptSlots<T> {
    pub fn as_array(&self) -> [&T; 12] {
        [
            &self.conv_weight,
            &self.conv_bias,
            &self.fc_weight,
            &self.fc_bias,
            &self.fusion_weight,
            &self.fusion_bias,
            &self.adapter_down_weight,
            &self.adapter_down_bias,
            &self.adapter_up_weight,
            &self.adapter_up_bias,
            &self.text_offset,
            &self.logit_scale,
        ]
    }

    pub fn as_array_mut(&mut self) -> [&mut T; 12] {
        [
            &mut self.conv_weight,
            &mut self.conv_bias,
            &mut self.fc_weight,
            &mut self.fc_bias,
            &mut self.fusion_weight,
            &mut self.fusion_bias,
            &mut self.adapter_down_weight,
            &mut self.adapter_down_bias,
            &mut self.adapter_up_weight,
            &mut self.adapter_up_bias,
            &mut self.text_offset,
            &mut self.logit_scale,
        ]
    }

    pub fn from_array(a: [T; 12]) -> Self {
        let [conv_weight, conv_bias, fc_weight, fc_bias, fusion_weight, fusion_bias, adapter_down_weight, adapter_down_bias, adapter_up_weight, adapter_up_bias, text_offset, logit_scale] =
            a;
        Self {
            conv_weight,
            conv_bias,
            fc_weight,
            fc_bias,
            fusion_weight,
            fusion_bias,
            adapter_down_weight,
            adapter_down_bias,
            adapter_up_weight,
            adapter_up_bias,
            text_offset,
            logit_scale,
        }
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, &T)> {
        PARAM_NAMES.into_iter().zip(self.as_array())
    }
}

/// Expected shape of every slot for a configuration.
pub fn param_shapes(config: &ModelConfig) -> [Vec<usize>; 12] {
    let (k, dim, d, co, h) = (
        config.kernel,
        config.dim,
        config.ctx_dim,
        config.conv_channels,
        config.bottleneck(),
    );
    [
        vec![k, dim, co],
        vec![co],
        vec![co, d],
        vec![d],
        vec![dim + d, dim],
        vec![dim],
        vec![dim, h],
        vec![h],
        vec![h, dim],
        vec![dim],
        vec![dim],
        vec![],
    ]
}

fn uniform(rng: &mut impl Rng, shape: &[usize], bound: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("shape and length agree")
}

impl TemporalPromptParams {
    /// Seeded initialization.
    ///
    /// Conv, FC and the adapter down-projection draw from
    /// `U(-1/√fan_in, 1/√fan_in)`. The fusion projection passes the frame
    /// block through unchanged (identity) and draws the context block from
    /// the same uniform law, so an untrained model keeps the frozen
    /// embedding geometry. The adapter up-projection and the text offset
    /// start at zero.
    pub fn init(config: &ModelConfig) -> Result<Self> {
        config.validate()?;
        let shapes = param_shapes(config);
        let mut rng = seed::rng(config.seed, "prompt-init");
        let (dim, d) = (config.dim, config.ctx_dim);
        let conv_fan = (config.kernel * dim) as f64;
        let conv_weight = uniform(&mut rng, &shapes[0], conv_fan.sqrt().recip());
        let conv_bias = uniform(&mut rng, &shapes[1], conv_fan.sqrt().recip());
        let fc_fan = config.conv_channels as f64;
        let fc_weight = uniform(&mut rng, &shapes[2], fc_fan.sqrt().recip());
        let fc_bias = uniform(&mut rng, &shapes[3], fc_fan.sqrt().recip());

        let ctx_block = uniform(&mut rng, &[d, dim], ((dim + d) as f64).sqrt().recip());
        let mut fusion = Tensor::identity(dim).into_data();
        fusion.extend_from_slice(ctx_block.data());
        let fusion_weight = Tensor::new(&shapes[4], fusion)?;

        let adapter_down_weight = uniform(&mut rng, &shapes[6], (dim as f64).sqrt().recip());
        Ok(Self {
            conv_weight,
            conv_bias,
            fc_weight,
            fc_bias,
            fusion_weight,
            fusion_bias: Tensor::zeros(&shapes[5]),
            adapter_down_weight,
            adapter_down_bias: Tensor::zeros(&shapes[7]),
            adapter_up_weight: Tensor::zeros(&shapes[8]),
            adapter_up_bias: Tensor::zeros(&shapes[9]),
            text_offset: Tensor::zeros(&shapes[10]),
            logit_scale: Tensor::scalar(INIT_TEMPERATURE.recip().ln()),
        })
    }

    /// Rebuilds a parameter set from named tensors, checking names and shapes.
    pub fn from_named(config: &ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        let shapes = param_shapes(config);
        let mut slots: [Option<Tensor>; 12] = Default::default();
        for (name, tensor) in named {
            let idx = PARAM_NAMES
                .iter()
                .position(|n| *n == name)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
            if tensor.shape() != shapes[idx].as_slice() {
                return Err(Error::Config(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    tensor.shape(),
                    shapes[idx]
                )));
            }
            if slots[idx].replace(tensor).is_some() {
                return Err(Error::Config(format!("parameter `{name}` appears twice")));
            }
        }
        let mut out = Vec::with_capacity(12);
        for (idx, slot) in slots.into_iter().enumerate() {
            out.push(slot.ok_or_else(|| {
                Error::Config(format!("missing parameter `{}`", PARAM_NAMES[idx]))
            })?);
        }
        let array: [Tensor; 12] = out.try_into().expect("twelve slots");
        Ok(Self::from_array(array))
    }

    /// Adds every slot to `graph` as a trainable leaf.
    pub fn register(&self, graph: &mut Graph) -> ParamNodes {
        let ids = self.as_array().map(|t| graph.param(t.clone()));
        ParamNodes::from_array(ids)
    }

    /// Reads the gradients of registered slots back out of `graph`.
    pub fn grads(nodes: &ParamNodes, graph: &Graph) -> TemporalPromptParams {
        TemporalPromptParams::from_array(nodes.as_array().map(|&id| graph.grad(id).clone()))
    }

    /// Total number of trainable scalars, by walking the leaves.
    pub fn leaf_count(&self) -> usize {
        self.as_array().iter().map(|t| t.numel()).sum()
    }

    pub fn temperature(&self) -> f64 {
        (-self.logit_scale.item()).exp()
    }

    /// Keeps τ within `[MIN_TEMPERATURE, MAX_TEMPERATURE]`.
    pub fn clamp_logit_scale(&mut self) {
        let lo = MAX_TEMPERATURE.recip().ln();
        let hi = MIN_TEMPERATURE.recip().ln();
        let v = &mut self.logit_scale.data_mut()[0];
        *v = v.clamp(lo, hi);
    }

    pub fn set_temperature(&mut self, tau: f64) {
        self.logit_scale.data_mut()[0] = tau.recip().ln();
        self.clamp_logit_scale();
    }
}
