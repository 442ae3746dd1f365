//! BERT and ALBERT encoders, parameter-compatible with Hugging Face
//! checkpoints (`bert.*` and `albert.*` weight names).

use candle_core::{DType, Module, Tensor, D};
use candle_nn::{Embedding, Linear};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::{Init, ParamStore};
use super::{ModelError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderArchitecture {
    Bert,
    Albert,
}

impl EncoderArchitecture {
    pub fn prefix(self) -> &'static str {
        match self {
            EncoderArchitecture::Bert => "bert",
            EncoderArchitecture::Albert => "albert",
        }
    }
}

/// The subset of a Hugging Face `config.json` the encoder needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    #[serde(rename = "model_type")]
    pub architecture: EncoderArchitecture,
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    #[serde(default = "default_act")]
    pub hidden_act: String,
    #[serde(default = "default_dropout")]
    pub hidden_dropout_prob: f32,
    #[serde(default = "default_dropout")]
    pub attention_probs_dropout_prob: f32,
    #[serde(default = "default_max_positions")]
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_init_range")]
    pub initializer_range: f32,
    /// ALBERT factorized embedding width.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_size: Option<usize>,
    #[serde(default = "one")]
    pub num_hidden_groups: usize,
    #[serde(default = "one")]
    pub inner_group_num: usize,
}

fn default_act() -> String {
    "gelu".into()
}
fn default_dropout() -> f32 {
    0.1
}
fn default_max_positions() -> usize {
    512
}
fn default_type_vocab() -> usize {
    2
}
fn default_ln_eps() -> f64 {
    1e-12
}
fn default_init_range() -> f32 {
    0.02
}
fn one() -> usize {
    1
}

impl EncoderConfig {
    pub fn embedding_width(&self) -> usize {
        match self.architecture {
            EncoderArchitecture::Bert => self.hidden_size,
            EncoderArchitecture::Albert => self.embedding_size.unwrap_or(128),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::InvalidSpec(m));
        if self.hidden_size == 0 || self.num_attention_heads == 0 || self.hidden_size % self.num_attention_heads != 0 {
            return bad(format!(
                "hidden_size {} must be a positive multiple of num_attention_heads {}",
                self.hidden_size, self.num_attention_heads
            ));
        }
        if self.num_hidden_layers == 0 || self.vocab_size == 0 || self.max_position_embeddings == 0 {
            return bad("layer count, vocab size and positions must be ≥ 1".into());
        }
        if self.num_hidden_groups == 0 || self.num_hidden_layers % self.num_hidden_groups != 0 {
            return bad("num_hidden_layers must be a multiple of num_hidden_groups".into());
        }
        if self.inner_group_num == 0 {
            return bad("inner_group_num must be ≥ 1".into());
        }
        Activation::parse(&self.hidden_act)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum Activation {
    GeluErf,
    GeluTanh,
    Relu,
}

impl Activation {
    fn parse(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Activation::GeluErf),
            "gelu_new" | "gelu_pytorch_tanh" | "gelu_fast" => Ok(Activation::GeluTanh),
            "relu" => Ok(Activation::Relu),
            other => Err(ModelError::InvalidSpec(format!("unsupported activation {other:?}"))),
        }
    }

    fn apply(self, x: &Tensor) -> Result<Tensor> {
        Ok(match self {
            Activation::GeluErf => x.gelu_erf()?,
            Activation::GeluTanh => x.gelu()?,
            Activation::Relu => x.relu()?,
        })
    }
}

/// Layer normalization built from differentiable primitives.
struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
    eps: f64,
}

impl LayerNorm {
    fn new(params: &mut ParamStore, name: &str, dim: usize, eps: f64) -> Result<Self> {
        Ok(LayerNorm {
            weight: params.get(&format!("{name}.weight"), &[dim], Init::Ones, true)?,
            bias: params.get(&format!("{name}.bias"), &[dim], Init::Zeros, true)?,
            eps,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centered = x.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(D::Minus1)?;
        let normed = centered.broadcast_div(&(var + self.eps)?.sqrt()?)?;
        Ok(normed.broadcast_mul(&self.weight)?.broadcast_add(&self.bias)?)
    }
}

fn linear(params: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize, std: f32) -> Result<Linear> {
    let w = params.get(&format!("{name}.weight"), &[fan_out, fan_in], Init::Normal(std), true)?;
    let b = params.get(&format!("{name}.bias"), &[fan_out], Init::Zeros, true)?;
    Ok(Linear::new(w, Some(b)))
}

/// Inverted dropout with a caller-supplied, seeded RNG. `None` = inference.
pub(crate) fn dropout(x: &Tensor, p: f32, rng: Option<&mut ChaCha8Rng>) -> Result<Tensor> {
    let Some(rng) = rng else { return Ok(x.clone()) };
    if p <= 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - p;
    let mask: Vec<f32> = (0..x.elem_count())
        .map(|_| if rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mask = Tensor::from_vec(mask, x.shape(), x.device())?;
    Ok((x * mask)?)
}

struct EncoderLayer {
    query: Linear,
    key: Linear,
    value: Linear,
    attn_out: Linear,
    attn_norm: LayerNorm,
    ffn_in: Linear,
    ffn_out: Linear,
    out_norm: LayerNorm,
}

impl EncoderLayer {
    fn new(params: &mut ParamStore, cfg: &EncoderConfig, names: &LayerNames) -> Result<Self> {
        let (h, i, std) = (cfg.hidden_size, cfg.intermediate_size, cfg.initializer_range);
        Ok(EncoderLayer {
            query: linear(params, &names.query, h, h, std)?,
            key: linear(params, &names.key, h, h, std)?,
            value: linear(params, &names.value, h, h, std)?,
            attn_out: linear(params, &names.attn_out, h, h, std)?,
            attn_norm: LayerNorm::new(params, &names.attn_norm, h, cfg.layer_norm_eps)?,
            ffn_in: linear(params, &names.ffn_in, h, i, std)?,
            ffn_out: linear(params, &names.ffn_out, i, h, std)?,
            out_norm: LayerNorm::new(params, &names.out_norm, h, cfg.layer_norm_eps)?,
        })
    }

    fn forward(
        &self,
        x: &Tensor,
        mask_bias: &Tensor,
        cfg: &EncoderConfig,
        act: Activation,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let (n, len, h) = x.dims3()?;
        let heads = cfg.num_attention_heads;
        let dh = h / heads;
        let split = |t: Tensor| -> Result<Tensor> {
            Ok(t.reshape((n, len, heads, dh))?.transpose(1, 2)?.contiguous()?)
        };
        let q = split(self.query.forward(x)?)?;
        let k = split(self.key.forward(x)?)?;
        let v = split(self.value.forward(x)?)?;
        let scores = (q.matmul(&k.t()?.contiguous()?)? / (dh as f64).sqrt())?;
        let scores = scores.broadcast_add(mask_bias)?;
        let probs = candle_nn::ops::softmax(&scores, D::Minus1)?;
        let probs = dropout(&probs, cfg.attention_probs_dropout_prob, rng.as_deref_mut())?;
        let ctx = probs.matmul(&v)?.transpose(1, 2)?.contiguous()?.reshape((n, len, h))?;
        let attn = dropout(&self.attn_out.forward(&ctx)?, cfg.hidden_dropout_prob, rng.as_deref_mut())?;
        let x = self.attn_norm.forward(&(attn + x)?)?;
        let inner = act.apply(&self.ffn_in.forward(&x)?)?;
        let out = dropout(&self.ffn_out.forward(&inner)?, cfg.hidden_dropout_prob, rng.as_deref_mut())?;
        self.out_norm.forward(&(out + x)?)
    }
}

struct LayerNames {
    query: String,
    key: String,
    value: String,
    attn_out: String,
    attn_norm: String,
    ffn_in: String,
    ffn_out: String,
    out_norm: String,
}

impl LayerNames {
    fn bert(layer: usize) -> Self {
        let p = format!("bert.encoder.layer.{layer}");
        LayerNames {
            query: format!("{p}.attention.self.query"),
            key: format!("{p}.attention.self.key"),
            value: format!("{p}.attention.self.value"),
            attn_out: format!("{p}.attention.output.dense"),
            attn_norm: format!("{p}.attention.output.LayerNorm"),
            ffn_in: format!("{p}.intermediate.dense"),
            ffn_out: format!("{p}.output.dense"),
            out_norm: format!("{p}.output.LayerNorm"),
        }
    }

    fn albert(group: usize, inner: usize) -> Self {
        let p = format!("albert.encoder.albert_layer_groups.{group}.albert_layers.{inner}");
        LayerNames {
            query: format!("{p}.attention.query"),
            key: format!("{p}.attention.key"),
            value: format!("{p}.attention.value"),
            attn_out: format!("{p}.attention.dense"),
            attn_norm: format!("{p}.attention.LayerNorm"),
            ffn_in: format!("{p}.ffn"),
            ffn_out: format!("{p}.ffn_output"),
            out_norm: format!("{p}.full_layer_layer_norm"),
        }
    }
}

/// Token, position and segment embeddings followed by the layer stack.
pub(crate) struct TransformerEncoder {
    cfg: EncoderConfig,
    act: Activation,
    word: Embedding,
    position: Embedding,
    token_type: Embedding,
    emb_norm: LayerNorm,
    /// ALBERT projection from the embedding width to the hidden width.
    emb_projection: Option<Linear>,
    /// BERT: one entry per layer. ALBERT: one entry per group, each holding
    /// `inner_group_num` layers, reused across the depth.
    groups: Vec<Vec<EncoderLayer>>,
}

impl TransformerEncoder {
    pub(crate) fn new(cfg: &EncoderConfig, params: &mut ParamStore) -> Result<Self> {
        cfg.validate()?;
        let prefix = cfg.architecture.prefix();
        let e = cfg.embedding_width();
        let std = cfg.initializer_range;
        let mut emb = |name: &str, rows: usize| -> Result<Embedding> {
            let w = params.get(&format!("{prefix}.embeddings.{name}.weight"), &[rows, e], Init::Normal(std), true)?;
            Ok(Embedding::new(w, e))
        };
        let word = emb("word_embeddings", cfg.vocab_size)?;
        let position = emb("position_embeddings", cfg.max_position_embeddings)?;
        let token_type = emb("token_type_embeddings", cfg.type_vocab_size)?;
        let emb_norm = LayerNorm::new(params, &format!("{prefix}.embeddings.LayerNorm"), e, cfg.layer_norm_eps)?;
        let (emb_projection, groups) = match cfg.architecture {
            EncoderArchitecture::Bert => {
                let layers = (0..cfg.num_hidden_layers)
                    .map(|l| Ok(vec![EncoderLayer::new(params, cfg, &LayerNames::bert(l))?]))
                    .collect::<Result<Vec<_>>>()?;
                (None, layers)
            }
            EncoderArchitecture::Albert => {
                let proj = linear(params, "albert.encoder.embedding_hidden_mapping_in", e, cfg.hidden_size, std)?;
                let groups = (0..cfg.num_hidden_groups)
                    .map(|g| {
                        (0..cfg.inner_group_num)
                            .map(|j| EncoderLayer::new(params, cfg, &LayerNames::albert(g, j)))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?;
                (Some(proj), groups)
            }
        };
        Ok(TransformerEncoder {
            act: Activation::parse(&cfg.hidden_act)?,
            cfg: cfg.clone(),
            word,
            position,
            token_type,
            emb_norm,
            emb_projection,
            groups,
        })
    }

    pub(crate) fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// `ids`, `type_ids`: (N, L) u32; `mask`: (N, L) f32 with 1 on real
    /// tokens. Returns hidden states (N, L, H).
    pub(crate) fn forward(
        &self,
        ids: &Tensor,
        type_ids: &Tensor,
        mask: &Tensor,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        let (n, len) = ids.dims2()?;
        if len > self.cfg.max_position_embeddings {
            return Err(ModelError::ShapeMismatch(format!(
                "sequence length {len} exceeds {} positions",
                self.cfg.max_position_embeddings
            )));
        }
        let positions = Tensor::arange(0u32, len as u32, ids.device())?;
        let x = self
            .word
            .forward(ids)?
            .broadcast_add(&self.position.forward(&positions)?)?
            .add(&self.token_type.forward(type_ids)?)?;
        let x = self.emb_norm.forward(&x)?;
        let mut x = dropout(&x, self.cfg.hidden_dropout_prob, rng.as_deref_mut())?;
        if let Some(p) = &self.emb_projection {
            x = p.forward(&x)?;
        }
        // 0 for real tokens, a large negative for padding: (N, 1, 1, L)
        let mask_bias = ((mask.to_dtype(DType::F32)? - 1.0)? * 10_000.0)?.reshape((n, 1, 1, len))?;
        let per_group = self.cfg.num_hidden_layers / self.groups.len();
        for layer_idx in 0..self.cfg.num_hidden_layers {
            let group = &self.groups[(layer_idx / per_group).min(self.groups.len() - 1)];
            for layer in group {
                x = layer.forward(&x, &mask_bias, &self.cfg, self.act, rng.as_deref_mut())?;
            }
        }
        Ok(x)
    }
}
