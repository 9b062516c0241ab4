//! Read-only store of the MLP, embedding and attention-query weights of a
//! gated-MLP transformer.
//!
//! Every matrix keeps one vector per row: the neuron's `w_gate`, `w_in` and
//! `w_out` for MLP layers, and one token vector per row for the
//! (un)embedding. Bias terms and layer-norm parameters are ignored unless
//! norm folding is requested through [`LoadOptions`].

mod matrix;
pub mod preset;
mod store;
mod vocab;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use matrix::Matrix;
pub use preset::{NormSource, Preset, TensorSource, BUILTIN_PRESETS};
pub use store::{load_bos_keys, load_model, save_model};
pub use vocab::{load_vocab, Vocabulary};

use crate::error::{Error, Result};
use crate::geometry::WeightTriple;

/// Activation applied to the gate pre-activation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[default]
    Swish,
    Gelu,
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ActivationKind::Swish => "swish",
            ActivationKind::Gelu => "gelu",
        })
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "swish" | "silu" => Ok(ActivationKind::Swish),
            "gelu" => Ok(ActivationKind::Gelu),
            other => Err(Error::InvalidParameter(format!("unknown activation `{other}`"))),
        }
    }
}

/// A neuron address, rendered `layer.index` (e.g. `28.4737`). Serializes
/// as that string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> Self {
        Self { layer, index }
    }
}

impl fmt::Display for NeuronId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.layer, self.index)
    }
}

impl FromStr for NeuronId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("neuron id `{s}` is not LAYER.INDEX"));
        let (layer, index) = s.split_once('.').ok_or_else(bad)?;
        Ok(Self {
            layer: layer.parse().map_err(|_| bad())?,
            index: index.parse().map_err(|_| bad())?,
        })
    }
}

impl Serialize for NeuronId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NeuronId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// The three per-neuron matrices of one MLP layer, each `d_mlp x d_model`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    w_gate_all: Matrix,
    w_in_all: Matrix,
    w_out_all: Matrix,
}

impl LayerWeights {
    pub fn new(w_gate_all: Matrix, w_in_all: Matrix, w_out_all: Matrix) -> Result<Self> {
        for (name, m) in [("in", &w_in_all), ("out", &w_out_all)] {
            if m.shape() != w_gate_all.shape() {
                return Err(Error::ShapeMismatch {
                    tensor: format!("layer {name} matrix"),
                    expected: w_gate_all.shape().to_vec(),
                    found: m.shape().to_vec(),
                });
            }
        }
        Ok(Self {
            w_gate_all,
            w_in_all,
            w_out_all,
        })
    }

    pub fn d_mlp(&self) -> usize {
        self.w_gate_all.rows()
    }

    pub fn d_model(&self) -> usize {
        self.w_gate_all.cols()
    }

    pub fn w_gate_all(&self) -> &Matrix {
        &self.w_gate_all
    }

    pub fn w_in_all(&self) -> &Matrix {
        &self.w_in_all
    }

    pub fn w_out_all(&self) -> &Matrix {
        &self.w_out_all
    }

    /// Borrowed view of neuron `i`. Panics if `i >= d_mlp`.
    pub fn triple(&self, i: usize) -> WeightTriple<&[f32]> {
        WeightTriple {
            w_gate: self.w_gate_all.row(i),
            w_in: self.w_in_all.row(i),
            w_out: self.w_out_all.row(i),
        }
    }
}

/// k_BOS vectors keyed by `(layer, head)`.
pub type BosKeys = BTreeMap<(usize, usize), Vec<f32>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub name: String,
    pub n_layers: usize,
    pub d_model: usize,
    pub d_mlp: usize,
    pub d_vocab: usize,
    pub activation: ActivationKind,
}

/// Options for [`load_model`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Explicit mapping file for the `generic` preset.
    pub mapping: Option<PathBuf>,
    /// k_BOS sidecar; when set, query projections are loaded as well.
    pub bos_keys: Option<PathBuf>,
    /// Load query projections even without a sidecar.
    pub load_attention: bool,
    /// Multiply reading weights by the pre-MLP norm gain.
    pub fold_norm: bool,
    /// Overrides the preset's tied-embedding flag.
    pub tie_embeddings: Option<bool>,
    /// Overrides the model name (defaults to the directory name).
    pub name: Option<String>,
}

/// Immutable weight store. Construct with [`ModelWeights::new`] or
/// [`load_model`]; all accessors borrow.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    meta: ModelMeta,
    layers: Vec<LayerWeights>,
    unembed: Option<Matrix>,
    embed: Option<Matrix>,
    attn_query: Option<Vec<Matrix>>,
    bos_keys: Option<BosKeys>,
}

impl ModelWeights {
    /// Validates and assembles a store. `unembed` and `embed` hold one
    /// token vector per row (`d_vocab x d_model`).
    pub fn new(
        name: impl Into<String>,
        activation: ActivationKind,
        layers: Vec<LayerWeights>,
        unembed: Option<Matrix>,
        embed: Option<Matrix>,
    ) -> Result<Self> {
        let d_model = layers
            .first()
            .map(|l| l.d_model())
            .or_else(|| unembed.as_ref().map(|m| m.cols()))
            .unwrap_or(0);
        let d_mlp = layers.first().map_or(0, |l| l.d_mlp());
        for (i, layer) in layers.iter().enumerate() {
            if layer.d_model() != d_model || layer.d_mlp() != d_mlp {
                return Err(Error::ShapeMismatch {
                    tensor: format!("layer {i} MLP"),
                    expected: vec![d_mlp, d_model],
                    found: vec![layer.d_mlp(), layer.d_model()],
                });
            }
            for (what, m) in [
                ("gate", layer.w_gate_all()),
                ("in", layer.w_in_all()),
                ("out", layer.w_out_all()),
            ] {
                check_finite(&format!("layer {i} {what}"), m)?;
            }
        }
        for (what, m) in [("unembed", &unembed), ("embed", &embed)] {
            if let Some(m) = m {
                if m.cols() != d_model {
                    return Err(Error::ShapeMismatch {
                        tensor: what.to_string(),
                        expected: vec![m.rows(), d_model],
                        found: m.shape().to_vec(),
                    });
                }
                check_finite(what, m)?;
            }
        }
        if let (Some(u), Some(e)) = (&unembed, &embed) {
            if u.rows() != e.rows() {
                return Err(Error::ShapeMismatch {
                    tensor: "embed".into(),
                    expected: vec![u.rows(), d_model],
                    found: e.shape().to_vec(),
                });
            }
        }
        let d_vocab = unembed.as_ref().or(embed.as_ref()).map_or(0, |m| m.rows());
        Ok(Self {
            meta: ModelMeta {
                name: name.into(),
                n_layers: layers.len(),
                d_model,
                d_mlp,
                d_vocab,
                activation,
            },
            layers,
            unembed,
            embed,
            attn_query: None,
            bos_keys: None,
        })
    }

    /// Attaches per-layer query projections (`n_heads * d_head x d_model`)
    /// and optional k_BOS vectors.
    pub fn with_attention(mut self, attn_query: Vec<Matrix>, bos_keys: Option<BosKeys>) -> Result<Self> {
        if attn_query.len() != self.meta.n_layers {
            return Err(Error::LengthMismatch {
                left: self.meta.n_layers,
                right: attn_query.len(),
            });
        }
        for (i, q) in attn_query.iter().enumerate() {
            if q.cols() != self.meta.d_model {
                return Err(Error::ShapeMismatch {
                    tensor: format!("layer {i} attn_query"),
                    expected: vec![q.rows(), self.meta.d_model],
                    found: q.shape().to_vec(),
                });
            }
            check_finite(&format!("layer {i} attn_query"), q)?;
        }
        if let Some(keys) = &bos_keys {
            for (&(layer, head), k) in keys {
                let q = attn_query
                    .get(layer)
                    .ok_or_else(|| Error::malformed("k_BOS sidecar", format!("layer {layer} does not exist")))?;
                if k.is_empty() || q.rows() % k.len() != 0 || (head + 1) * k.len() > q.rows() {
                    return Err(Error::malformed(
                        "k_BOS sidecar",
                        format!(
                            "key {layer}.{head} of length {} does not fit query rows {}",
                            k.len(),
                            q.rows()
                        ),
                    ));
                }
                if let Some(pos) = k.iter().position(|x| !x.is_finite()) {
                    return Err(Error::NonFinite {
                        tensor: format!("k_BOS {layer}.{head}"),
                        index: pos,
                    });
                }
            }
        }
        self.attn_query = Some(attn_query);
        self.bos_keys = bos_keys;
        Ok(self)
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn n_layers(&self) -> usize {
        self.meta.n_layers
    }

    pub fn layers(&self) -> &[LayerWeights] {
        &self.layers
    }

    pub fn layer(&self, i: usize) -> Option<&LayerWeights> {
        self.layers.get(i)
    }

    /// Unembedding, one token vector per row (the columns of W_U).
    pub fn unembed(&self) -> Option<&Matrix> {
        self.unembed.as_ref()
    }

    /// Embedding, one token vector per row (the rows of W_E).
    pub fn embed(&self) -> Option<&Matrix> {
        self.embed.as_ref()
    }

    pub fn attn_query(&self) -> Option<&[Matrix]> {
        self.attn_query.as_deref()
    }

    pub fn bos_keys(&self) -> Option<&BosKeys> {
        self.bos_keys.as_ref()
    }

    /// `W_Q k_BOS` for one head, as a `d_model` vector.
    pub fn bos_query_direction(&self, layer: usize, head: usize) -> Result<Vec<f64>> {
        let q = self
            .attn_query
            .as_ref()
            .and_then(|q| q.get(layer))
            .ok_or_else(|| Error::Unavailable(format!("query projection of layer {layer}")))?;
        let k = self
            .bos_keys
            .as_ref()
            .and_then(|keys| keys.get(&(layer, head)))
            .ok_or_else(|| Error::Unavailable(format!("k_BOS for head {layer}.{head}")))?;
        let d_head = k.len();
        let mut out = vec![0.0f64; self.meta.d_model];
        for (j, &kj) in k.iter().enumerate() {
            let row = q.row(head * d_head + j);
            for (o, &w) in out.iter_mut().zip(row) {
                *o += kj as f64 * w as f64;
            }
        }
        Ok(out)
    }

    pub fn neuron_triple(&self, id: NeuronId) -> Result<WeightTriple<&[f32]>> {
        match self.layers.get(id.layer) {
            Some(layer) if id.index < layer.d_mlp() => Ok(layer.triple(id.index)),
            _ => Err(Error::NeuronOutOfBounds {
                id: id.to_string(),
                n_layers: self.meta.n_layers,
                d_mlp: self.meta.d_mlp,
            }),
        }
    }
}

/// Free-function form of [`ModelWeights::neuron_triple`].
pub fn neuron_triple(model: &ModelWeights, id: NeuronId) -> Result<WeightTriple<&[f32]>> {
    model.neuron_triple(id)
}

fn check_finite(tensor: &str, m: &Matrix) -> Result<()> {
    match m.as_slice().iter().position(|x| !x.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            tensor: tensor.to_string(),
            index,
        }),
        None => Ok(()),
    }
}
