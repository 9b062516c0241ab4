//! Tensor-name presets mapping logical MLP/embedding tensors onto the names
//! used by a model family's safetensors checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ActivationKind;
use crate::error::{Error, Result};

/// Placeholder substituted with the layer index in name templates.
pub const LAYER_PLACEHOLDER: &str = "{layer}";

/// Where one logical tensor lives on disk.
///
/// After the optional transpose, MLP tensors must have shape
/// `[d_mlp, d_model]`, embedding tensors `[d_vocab, d_model]` and query
/// projections `[n_heads * d_head, d_model]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSource {
    pub name: String,
    #[serde(default)]
    pub transpose: bool,
}

impl TensorSource {
    fn new(name: &str, transpose: bool) -> Self {
        Self {
            name: name.to_string(),
            transpose,
        }
    }

    pub fn resolve(&self, layer: usize) -> String {
        self.name.replace(LAYER_PLACEHOLDER, &layer.to_string())
    }
}

/// Pre-MLP normalization gain, optionally folded into the reading weights.
///
/// The effective gain is `weight + offset` (Gemma stores `gain - 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSource {
    pub name: String,
    #[serde(default)]
    pub offset: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    #[serde(default = "generic_name")]
    pub name: String,
    pub gate: TensorSource,
    #[serde(rename = "in")]
    pub up: TensorSource,
    #[serde(rename = "out")]
    pub down: TensorSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unembed: Option<TensorSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed: Option<TensorSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attn_query: Option<TensorSource>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_norm: Option<NormSource>,
    /// Alias the unembedding to the embedding when the checkpoint has no
    /// separate unembedding tensor.
    #[serde(default)]
    pub tie_embeddings: bool,
    #[serde(default)]
    pub activation: ActivationKind,
}

fn generic_name() -> String {
    "generic".to_string()
}

/// Names of the built-in presets accepted by [`Preset::builtin`].
pub const BUILTIN_PRESETS: &[&str] = &["llama", "olmo", "gemma", "qwen"];

impl Preset {
    fn hf_style(name: &str, activation: ActivationKind, norm_offset: Option<f32>) -> Self {
        Self {
            name: name.to_string(),
            gate: TensorSource::new("model.layers.{layer}.mlp.gate_proj.weight", false),
            up: TensorSource::new("model.layers.{layer}.mlp.up_proj.weight", false),
            down: TensorSource::new("model.layers.{layer}.mlp.down_proj.weight", true),
            unembed: Some(TensorSource::new("lm_head.weight", false)),
            embed: Some(TensorSource::new("model.embed_tokens.weight", false)),
            attn_query: Some(TensorSource::new("model.layers.{layer}.self_attn.q_proj.weight", false)),
            mlp_norm: norm_offset.map(|offset| NormSource {
                name: "model.layers.{layer}.post_attention_layernorm.weight".to_string(),
                offset,
            }),
            tie_embeddings: true,
            activation,
        }
    }

    /// Looks up a built-in family preset. `generic` is not built in: it
    /// needs a mapping file, see [`Preset::from_file`].
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "llama" => Ok(Self::hf_style("llama", ActivationKind::Swish, Some(0.0))),
            "qwen" => Ok(Self::hf_style("qwen", ActivationKind::Swish, Some(0.0))),
            // OLMo uses a non-parametric layer norm, so there is no gain to fold.
            "olmo" => Ok(Self {
                tie_embeddings: false,
                ..Self::hf_style("olmo", ActivationKind::Swish, None)
            }),
            "gemma" => {
                let mut p = Self::hf_style("gemma", ActivationKind::Gelu, Some(1.0));
                if let Some(norm) = p.mlp_norm.as_mut() {
                    norm.name = "model.layers.{layer}.pre_feedforward_layernorm.weight".into();
                }
                // Gemma 1 names the pre-MLP norm differently; the gemma-2 name wins.
                Ok(p)
            }
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }

    /// The layout written by [`super::save_model`].
    pub fn generic() -> Self {
        Self {
            name: generic_name(),
            gate: TensorSource::new("layers.{layer}.mlp.gate", false),
            up: TensorSource::new("layers.{layer}.mlp.in", false),
            down: TensorSource::new("layers.{layer}.mlp.out", false),
            unembed: Some(TensorSource::new("unembed", false)),
            embed: Some(TensorSource::new("embed", false)),
            attn_query: Some(TensorSource::new("layers.{layer}.attn.query", false)),
            mlp_norm: None,
            tie_embeddings: false,
            activation: ActivationKind::Swish,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut preset: Preset =
            serde_json::from_str(&text).map_err(|e| Error::malformed(format!("preset file {}", path.display()), e))?;
        if preset.name.is_empty() {
            preset.name = generic_name();
        }
        Ok(preset)
    }

    /// Resolves a preset name; `generic` reads `mapping` (or
    /// `<model_dir>/preset.json` when no mapping path is given).
    pub fn resolve(name: &str, model_dir: &Path, mapping: Option<&Path>) -> Result<Self> {
        match (name, mapping) {
            ("generic", Some(path)) => Self::from_file(path),
            ("generic", None) => Self::from_file(&model_dir.join("preset.json")),
            (other, _) => Self::builtin(other),
        }
    }
}
