//! The reaction encoder: per-molecule GCN with jumping knowledge and
//! attention pooling, a padded set Transformer per side, and a
//! difference/concatenation interaction head that yields the embedding.

mod checkpoint;
mod features;
mod layers;
mod model;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{Tensor, TensorError};

pub use checkpoint::{read_checkpoint, write_checkpoint, CheckpointError};
pub use features::{featurize_atoms, normalize_adjacency, ATOM_FEATURE_DIM};
pub use layers::{
    attention_pool, classify_real, gcn_forward, interaction_embed, jumping_knowledge, pad_molecule_set, side_pool,
    transformer_layer, LayerNames,
};
pub use model::{
    classify_probability, embed_reaction, forward, AttentionBundle, ForwardPass, InferenceSession, LayerAttention,
    MoleculeAttention, Padding, ReactionEmbedding, Side, SideTrace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JkMode {
    /// Learned linear map of the concatenated layer outputs.
    ConcatProject,
    /// Final GCN layer only.
    Last,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SidePool {
    Mean,
    Sum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub gnn_hidden: usize,
    pub gnn_layers: usize,
    pub jk_mode: JkMode,
    pub d_model: usize,
    pub tf_layers: usize,
    pub tf_heads: usize,
    pub ffn_dim: usize,
    pub emb_dim: usize,
    pub max_components: usize,
    pub activation: Activation,
    pub side_pool: SidePool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            gnn_hidden: 64,
            gnn_layers: 4,
            jk_mode: JkMode::ConcatProject,
            d_model: 64,
            tf_layers: 4,
            tf_heads: 4,
            ffn_dim: 128,
            emb_dim: 128,
            max_components: 16,
            activation: Activation::Relu,
            side_pool: SidePool::Mean,
        }
    }
}

impl EncoderConfig {
    pub fn atom_feature_dim(&self) -> usize {
        ATOM_FEATURE_DIM
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let dims = [
            ("gnn_hidden", self.gnn_hidden),
            ("gnn_layers", self.gnn_layers),
            ("d_model", self.d_model),
            ("tf_layers", self.tf_layers),
            ("tf_heads", self.tf_heads),
            ("ffn_dim", self.ffn_dim),
            ("emb_dim", self.emb_dim),
            ("max_components", self.max_components),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(EncoderError::Config(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.tf_heads) {
            return Err(EncoderError::Config(format!(
                "d_model {} is not divisible by tf_heads {}",
                self.d_model, self.tf_heads
            )));
        }
        Ok(())
    }

    /// Name and shape of every trainable tensor, in sorted name order.
    pub fn parameter_shapes(&self) -> BTreeMap<String, Vec<usize>> {
        let mut out = BTreeMap::new();
        let h = self.gnn_hidden;
        let d = self.d_model;
        for side in [Side::Reactants, Side::Products] {
            let p = side.prefix();
            for l in 0..self.gnn_layers {
                let d_in = if l == 0 { ATOM_FEATURE_DIM } else { h };
                out.insert(format!("{p}.gcn.{l}.weight"), vec![d_in, h]);
                out.insert(format!("{p}.gcn.{l}.bias"), vec![1, h]);
            }
            if self.jk_mode == JkMode::ConcatProject {
                out.insert(format!("{p}.jk.weight"), vec![self.gnn_layers * h, h]);
                out.insert(format!("{p}.jk.bias"), vec![1, h]);
            }
            out.insert(format!("{p}.pool.gate.weight"), vec![h, 1]);
            out.insert(format!("{p}.pool.gate.bias"), vec![1, 1]);
            out.insert(format!("{p}.pool.value.weight"), vec![h, d]);
            for l in 0..self.tf_layers {
                let t = format!("{p}.tf.{l}");
                for ln in ["ln1", "ln2"] {
                    out.insert(format!("{t}.{ln}.gamma"), vec![1, d]);
                    out.insert(format!("{t}.{ln}.beta"), vec![1, d]);
                }
                for w in ["q", "k", "v", "o"] {
                    out.insert(format!("{t}.attn.{w}.weight"), vec![d, d]);
                    out.insert(format!("{t}.attn.{w}.bias"), vec![1, d]);
                }
                out.insert(format!("{t}.ffn.0.weight"), vec![d, self.ffn_dim]);
                out.insert(format!("{t}.ffn.0.bias"), vec![1, self.ffn_dim]);
                out.insert(format!("{t}.ffn.1.weight"), vec![self.ffn_dim, d]);
                out.insert(format!("{t}.ffn.1.bias"), vec![1, d]);
            }
        }
        out.insert("interaction.0.weight".into(), vec![3 * d, self.emb_dim]);
        out.insert("interaction.0.bias".into(), vec![1, self.emb_dim]);
        out.insert("interaction.norm.gamma".into(), vec![1, self.emb_dim]);
        out.insert("interaction.norm.beta".into(), vec![1, self.emb_dim]);
        out.insert("interaction.1.weight".into(), vec![self.emb_dim, self.emb_dim]);
        out.insert("interaction.1.bias".into(), vec![1, self.emb_dim]);
        out.insert("classifier.weight".into(), vec![self.emb_dim, 1]);
        out.insert("classifier.bias".into(), vec![1, 1]);
        out
    }
}

/// Uniform init bound. Maps feeding a rectifier use He scaling; GCN maps
/// additionally get a factor 3 in variance, roughly `1 + mean degree`,
/// because symmetric-normalized aggregation averages that many weakly
/// correlated rows and would otherwise shrink node states about 3× per
/// layer. Everything else is Glorot.
fn init_limit(name: &str, fan_in: usize, fan_out: usize) -> f64 {
    let variance = if name.contains(".gcn.") {
        6.0 / fan_in as f64
    } else if name.contains(".ffn.0.") {
        2.0 / fan_in as f64
    } else {
        2.0 / (fan_in + fan_out) as f64
    };
    (3.0 * variance).sqrt()
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("{side:?} side has {count} components, more than the maximum {max}")]
    TooManyComponents { side: Side, count: usize, max: usize },
    #[error("expected {expected} GCN layer outputs, got {got}")]
    LayerCountMismatch { expected: usize, got: usize },
    #[error("missing parameter {0}")]
    MissingParameter(String),
    #[error("parameter {name} has shape {got:?}, expected {expected:?}")]
    ParameterShape { name: String, expected: Vec<usize>, got: Vec<usize> },
    #[error("invalid encoder config: {0}")]
    Config(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Trained (or freshly initialized) model state.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub config: EncoderConfig,
    pub params: BTreeMap<String, Tensor<f32>>,
    pub seed: u64,
}

impl ModelCheckpoint {
    /// Uniform weights (see [`init_limit`]), zero biases, unit layer-norm
    /// gains. Tensors
    /// are drawn in sorted name order from one seeded stream.
    pub fn init(config: EncoderConfig, seed: u64) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for (name, shape) in config.parameter_shapes() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".gamma") {
                vec![1.0f32; n]
            } else if name.ends_with(".bias") || name.ends_with(".beta") {
                vec![0.0f32; n]
            } else {
                let limit = init_limit(&name, shape[0], shape[1]) as f32;
                let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
                (0..n).map(|_| dist.sample(&mut rng)).collect()
            };
            params.insert(name, Tensor::new(&shape, data)?);
        }
        Ok(ModelCheckpoint { config, params, seed })
    }

    /// Every expected tensor is present with the configured shape.
    pub fn validate(&self) -> Result<(), EncoderError> {
        self.config.validate()?;
        let shapes = self.config.parameter_shapes();
        for (name, expected) in &shapes {
            let t = self.params.get(name).ok_or_else(|| EncoderError::MissingParameter(name.clone()))?;
            if t.shape() != expected.as_slice() {
                return Err(EncoderError::ParameterShape {
                    name: name.clone(),
                    expected: expected.clone(),
                    got: t.shape().to_vec(),
                });
            }
        }
        if let Some(extra) = self.params.keys().find(|k| !shapes.contains_key(*k)) {
            return Err(EncoderError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }
}
