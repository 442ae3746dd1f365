use candle_core::{Module, Tensor, D};
use candle_nn::{Embedding, Linear};

use super::params::{Init, ParamStore};
use super::{CnnSpec, PoolMode, Result, NUM_CLASSES};
use crate::featurize::EmbeddingMatrix;

/// embedding → conv1d + ReLU → global pooling → dense (logits)
pub(crate) struct CnnNet {
    embedding: Embedding,
    conv_weight: Tensor,
    conv_bias: Tensor,
    dense: Linear,
    kernel_width: usize,
    pool: PoolMode,
}

pub(crate) fn embedding_layer(
    params: &mut ParamStore,
    vocab_size: usize,
    dim: usize,
    trainable: bool,
    pretrained: Option<&EmbeddingMatrix>,
) -> Result<Embedding> {
    let weight = match pretrained {
        Some(emb) => {
            let init = Tensor::from_vec(emb.data.clone(), (emb.vocab_size, emb.dim), params.device())?;
            params.get_or_value("embedding.weight", init, trainable)?
        }
        None => params.get("embedding.weight", &[vocab_size, dim], Init::Uniform(0.05), trainable)?,
    };
    Ok(Embedding::new(weight, dim))
}

impl CnnNet {
    pub(crate) fn new(
        spec: &CnnSpec,
        vocab_size: usize,
        pretrained: Option<&EmbeddingMatrix>,
        params: &mut ParamStore,
    ) -> Result<Self> {
        let d = spec.embedding.dim;
        let (f, k) = (spec.filters, spec.kernel_width);
        let embedding = embedding_layer(params, vocab_size, d, spec.embedding.trainable, pretrained)?;
        let conv_weight = params.get(
            "conv.weight",
            &[f, d, k],
            Init::GlorotUniform { fan_in: d * k, fan_out: f * k },
            true,
        )?;
        let conv_bias = params.get("conv.bias", &[f], Init::Zeros, true)?;
        let w = params.get(
            "dense.weight",
            &[NUM_CLASSES, f],
            Init::GlorotUniform { fan_in: f, fan_out: NUM_CLASSES },
            true,
        )?;
        let b = params.get("dense.bias", &[NUM_CLASSES], Init::Zeros, true)?;
        Ok(CnnNet {
            embedding,
            conv_weight,
            conv_bias,
            dense: Linear::new(w, Some(b)),
            kernel_width: k,
            pool: spec.pool,
        })
    }

    /// `ids`: (N, L) u32 → logits (N, 3).
    pub(crate) fn forward(&self, ids: &Tensor) -> Result<Tensor> {
        let (_, len) = ids.dims2()?;
        // rows shorter than the kernel are extended with padding ids
        let ids = if len < self.kernel_width {
            ids.pad_with_zeros(1, 0, self.kernel_width - len)?
        } else {
            ids.clone()
        };
        let x = self.embedding.forward(&ids)?.transpose(1, 2)?.contiguous()?;
        let x = x.conv1d(&self.conv_weight, 0, 1, 1, 1)?;
        let x = x.broadcast_add(&self.conv_bias.reshape((1, (), 1))?)?.relu()?;
        let pooled = match self.pool {
            PoolMode::GlobalMax => x.max(D::Minus1)?,
            PoolMode::GlobalAverage => x.mean(D::Minus1)?,
        };
        Ok(self.dense.forward(&pooled)?)
    }
}

/// Closed-form parameter count of a CNN built from `spec`.
pub(crate) fn cnn_parameter_count(spec: &CnnSpec, vocab_size: usize) -> usize {
    let (d, f, k) = (spec.embedding.dim, spec.filters, spec.kernel_width);
    vocab_size * d + (f * d * k + f) + (f * NUM_CLASSES + NUM_CLASSES)
}
