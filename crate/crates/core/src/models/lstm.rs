use candle_core::{DType, Module, Tensor, D};
use candle_nn::{Embedding, Linear};

use super::cnn::embedding_layer;
use super::params::{Init, ParamStore};
use super::{LstmSpec, Result, NUM_CLASSES};
use crate::featurize::EmbeddingMatrix;

/// embedding → LSTM → ReLU dense → dense (logits)
///
/// The cell keeps the usual sigmoid/tanh gates (PyTorch gate order i, f, g, o);
/// the ReLU sits in the dense projection after the recurrent layer. The
/// readout is the hidden state at each row's last non-padding position.
pub(crate) struct LstmNet {
    embedding: Embedding,
    w_ih: Tensor,
    w_hh: Tensor,
    b_ih: Tensor,
    b_hh: Tensor,
    hidden: usize,
    projection: Linear,
    dense: Linear,
}

impl LstmNet {
    pub(crate) fn new(
        spec: &LstmSpec,
        vocab_size: usize,
        pretrained: Option<&EmbeddingMatrix>,
        params: &mut ParamStore,
    ) -> Result<Self> {
        let d = spec.embedding.dim;
        let h = spec.hidden_units;
        let embedding = embedding_layer(params, vocab_size, d, spec.embedding.trainable, pretrained)?;
        let bound = 1.0 / (h as f32).sqrt();
        let w_ih = params.get("lstm.weight_ih", &[4 * h, d], Init::GlorotUniform { fan_in: d, fan_out: 4 * h }, true)?;
        let w_hh = params.get("lstm.weight_hh", &[4 * h, h], Init::Uniform(bound), true)?;
        // forget-gate bias starts at 1
        let mut bias = vec![0f32; 4 * h];
        bias[h..2 * h].fill(1.0);
        let b_ih = params.get_or_value("lstm.bias_ih", Tensor::from_vec(bias, 4 * h, params.device())?, true)?;
        let b_hh = params.get("lstm.bias_hh", &[4 * h], Init::Zeros, true)?;
        let pw = params.get("projection.weight", &[h, h], Init::GlorotUniform { fan_in: h, fan_out: h }, true)?;
        let pb = params.get("projection.bias", &[h], Init::Zeros, true)?;
        let dw = params.get(
            "dense.weight",
            &[NUM_CLASSES, h],
            Init::GlorotUniform { fan_in: h, fan_out: NUM_CLASSES },
            true,
        )?;
        let db = params.get("dense.bias", &[NUM_CLASSES], Init::Zeros, true)?;
        Ok(LstmNet {
            embedding,
            w_ih,
            w_hh,
            b_ih,
            b_hh,
            hidden: h,
            projection: Linear::new(pw, Some(pb)),
            dense: Linear::new(dw, Some(db)),
        })
    }

    /// `ids`: (N, L) u32, `lengths`: real tokens per row → logits (N, 3).
    pub(crate) fn forward(&self, ids: &Tensor, lengths: &[usize]) -> Result<Tensor> {
        let (n, len) = ids.dims2()?;
        let dev = ids.device();
        let x = self.embedding.forward(ids)?;
        // input contribution for all steps at once: (N, L, 4H)
        let gates_x = x
            .broadcast_matmul(&self.w_ih.t()?)?
            .broadcast_add(&(&self.b_ih + &self.b_hh)?)?;
        let w_hh_t = self.w_hh.t()?;
        let mut h = Tensor::zeros((n, self.hidden), DType::F32, dev)?;
        let mut c = h.clone();
        let mut states = Vec::with_capacity(len);
        for t in 0..len {
            let gates = (gates_x.narrow(1, t, 1)?.squeeze(1)? + h.matmul(&w_hh_t)?)?;
            let chunks = gates.chunk(4, D::Minus1)?;
            let i = candle_nn::ops::sigmoid(&chunks[0])?;
            let f = candle_nn::ops::sigmoid(&chunks[1])?;
            let g = chunks[2].tanh()?;
            let o = candle_nn::ops::sigmoid(&chunks[3])?;
            c = ((f * &c)? + (i * g)?)?;
            h = (o * c.tanh()?)?;
            states.push(h.clone());
        }
        // select state at position max(len, 1) - 1 of every row
        let mut mask = vec![0f32; n * len];
        for (r, &l) in lengths.iter().enumerate() {
            mask[r * len + l.clamp(1, len) - 1] = 1.0;
        }
        let mask = Tensor::from_vec(mask, (n, len, 1), dev)?;
        let all = Tensor::stack(&states, 1)?;
        let last = all.broadcast_mul(&mask)?.sum(1)?;
        let hidden = self.projection.forward(&last)?.relu()?;
        Ok(self.dense.forward(&hidden)?)
    }
}

pub(crate) fn lstm_parameter_count(spec: &LstmSpec, vocab_size: usize) -> usize {
    let (d, h) = (spec.embedding.dim, spec.hidden_units);
    vocab_size * d + 4 * h * (d + h) + 8 * h + (h * h + h) + (h * NUM_CLASSES + NUM_CLASSES)
}
