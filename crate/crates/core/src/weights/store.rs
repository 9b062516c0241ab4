//! safetensors ingestion and the toy on-disk layout used by fixtures.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use half::{bf16, f16};
use safetensors::tensor::{Dtype, TensorView};
use safetensors::SafeTensors;

use super::{BosKeys, LayerWeights, LoadOptions, Matrix, ModelWeights, NeuronId, Preset, TensorSource};
use crate::error::{Error, Result};

/// Memory-resident set of safetensors shards with a name index.
struct Shards {
    buffers: Vec<(PathBuf, Vec<u8>)>,
    index: HashMap<String, usize>,
}

impl Shards {
    fn open(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|x| x == "safetensors") {
                paths.push(path);
            }
        }
        if paths.is_empty() {
            return Err(Error::malformed(
                "model directory",
                format!("no .safetensors files in {}", dir.display()),
            ));
        }
        paths.sort();

        let mut buffers = Vec::with_capacity(paths.len());
        let mut index = HashMap::new();
        for (i, path) in paths.into_iter().enumerate() {
            let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let st = SafeTensors::deserialize(&bytes)?;
            for name in st.names() {
                index.insert(name.clone(), i);
            }
            log::debug!("indexed {} ({} tensors)", path.display(), st.len());
            buffers.push((path, bytes));
        }
        Ok(Self { buffers, index })
    }

    fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    /// Reads a tensor as `f32` with its on-disk shape.
    fn read(&self, name: &str) -> Result<Option<(Vec<usize>, Vec<f32>)>> {
        let Some(&file) = self.index.get(name) else {
            return Ok(None);
        };
        let st = SafeTensors::deserialize(&self.buffers[file].1)?;
        let view = st.tensor(name)?;
        let data = decode(name, &view)?;
        if let Some(index) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                tensor: name.to_string(),
                index,
            });
        }
        Ok(Some((view.shape().to_vec(), data)))
    }

    /// Reads a 2-D tensor and applies the source's orientation.
    fn matrix(&self, source: &TensorSource, layer: usize) -> Result<Option<Matrix>> {
        let name = source.resolve(layer);
        let Some((shape, data)) = self.read(&name)? else {
            return Ok(None);
        };
        if shape.len() != 2 {
            return Err(Error::ShapeMismatch {
                tensor: name,
                expected: vec![0, 0],
                found: shape,
            });
        }
        let m = Matrix::new(shape[0], shape[1], data)?;
        Ok(Some(if source.transpose { m.transpose() } else { m }))
    }
}

fn decode(name: &str, view: &TensorView<'_>) -> Result<Vec<f32>> {
    let bytes = view.data();
    let out = match view.dtype() {
        Dtype::F32 => bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect(),
        Dtype::F16 => bytes
            .chunks_exact(2)
            .map(|b| f16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect(),
        Dtype::BF16 => bytes
            .chunks_exact(2)
            .map(|b| bf16::from_le_bytes([b[0], b[1]]).to_f32())
            .collect(),
        other => {
            return Err(Error::UnsupportedDtype {
                tensor: name.to_string(),
                dtype: format!("{other:?}"),
            })
        }
    };
    Ok(out)
}

/// Loads a model directory of safetensors shards using `preset`
/// (a built-in family name or `generic`).
pub fn load_model(dir: &Path, preset: &str, options: &LoadOptions) -> Result<ModelWeights> {
    let preset = Preset::resolve(preset, dir, options.mapping.as_deref())?;
    load_with_preset(dir, &preset, options)
}

pub(crate) fn load_with_preset(dir: &Path, preset: &Preset, options: &LoadOptions) -> Result<ModelWeights> {
    let shards = Shards::open(dir)?;
    let roles = [("gate", &preset.gate), ("in", &preset.up), ("out", &preset.down)];

    let n_layers = (0..)
        .take_while(|&i| roles.iter().any(|(_, src)| shards.contains(&src.resolve(i))))
        .count();

    let missing = |what: String, name: String| Error::MissingTensor {
        what,
        name,
        preset: preset.name.clone(),
    };

    let mut layers = Vec::with_capacity(n_layers);
    let mut expected: Option<[usize; 2]> = None;
    for layer in 0..n_layers {
        let mut mats = Vec::with_capacity(3);
        for (what, src) in roles {
            let m = shards
                .matrix(src, layer)?
                .ok_or_else(|| missing(format!("layer {layer} {what}"), src.resolve(layer)))?;
            let want = *expected.get_or_insert(m.shape());
            if m.shape() != want {
                return Err(Error::ShapeMismatch {
                    tensor: src.resolve(layer),
                    expected: want.to_vec(),
                    found: m.shape().to_vec(),
                });
            }
            mats.push(m);
        }
        let out = mats.pop().unwrap();
        let mut up = mats.pop().unwrap();
        let mut gate = mats.pop().unwrap();
        if options.fold_norm {
            let norm = preset
                .mlp_norm
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("preset `{}` has no MLP norm to fold", preset.name)))?;
            let name = norm.name.replace(super::preset::LAYER_PLACEHOLDER, &layer.to_string());
            let (_, gain) = shards
                .read(&name)?
                .ok_or_else(|| missing(format!("layer {layer} mlp norm"), name.clone()))?;
            if gain.len() != gate.cols() {
                return Err(Error::ShapeMismatch {
                    tensor: name,
                    expected: vec![gate.cols()],
                    found: vec![gain.len()],
                });
            }
            let gain: Vec<f32> = gain.iter().map(|g| g + norm.offset).collect();
            gate.scale_columns(&gain);
            up.scale_columns(&gain);
        }
        layers.push(LayerWeights::new(gate, up, out)?);
    }

    let optional = |src: &Option<TensorSource>| -> Result<Option<Matrix>> {
        match src {
            Some(src) => shards.matrix(src, 0),
            None => Ok(None),
        }
    };
    let embed = optional(&preset.embed)?;
    let mut unembed = optional(&preset.unembed)?;
    if unembed.is_none() && options.tie_embeddings.unwrap_or(preset.tie_embeddings) {
        unembed = embed.clone();
    }

    let name = options.name.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".to_string())
    });
    let mut model = ModelWeights::new(name, preset.activation, layers, unembed, embed)?;

    if options.load_attention || options.bos_keys.is_some() {
        let src = preset
            .attn_query
            .as_ref()
            .ok_or_else(|| Error::Unavailable(format!("preset `{}` query projection", preset.name)))?;
        let mut queries = Vec::with_capacity(n_layers);
        for layer in 0..n_layers {
            queries.push(
                shards
                    .matrix(src, layer)?
                    .ok_or_else(|| missing(format!("layer {layer} attn_query"), src.resolve(layer)))?,
            );
        }
        let keys = options.bos_keys.as_deref().map(load_bos_keys).transpose()?;
        model = model.with_attention(queries, keys)?;
    }
    Ok(model)
}

/// Reads a k_BOS sidecar: `{"layer.head": [f32; d_head], ...}`.
pub fn load_bos_keys(path: &Path) -> Result<BosKeys> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: BTreeMap<String, Vec<f32>> =
        serde_json::from_str(&text).map_err(|e| Error::malformed("k_BOS sidecar", e))?;
    raw.into_iter()
        .map(|(key, v)| {
            let id: NeuronId = key
                .parse()
                .map_err(|_| Error::malformed("k_BOS sidecar", format!("key `{key}` is not LAYER.HEAD")))?;
            Ok(((id.layer, id.index), v))
        })
        .collect()
}

fn f32_bytes(data: &[f32]) -> Vec<u8> {
    data.iter().flat_map(|x| x.to_le_bytes()).collect()
}

/// Writes `model` as `model.safetensors` (F32) plus a `preset.json`
/// mapping for the `generic` preset, and `bos_keys.json` when present.
pub fn save_model(model: &ModelWeights, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut preset = Preset::generic();
    preset.activation = model.meta().activation;

    let mut tensors: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    let mut push = |name: String, m: &Matrix| tensors.push((name, m.shape().to_vec(), f32_bytes(m.as_slice())));
    for (i, layer) in model.layers().iter().enumerate() {
        push(preset.gate.resolve(i), layer.w_gate_all());
        push(preset.up.resolve(i), layer.w_in_all());
        push(preset.down.resolve(i), layer.w_out_all());
    }
    if let Some(m) = model.unembed() {
        push(preset.unembed.as_ref().unwrap().resolve(0), m);
    }
    if let Some(m) = model.embed() {
        push(preset.embed.as_ref().unwrap().resolve(0), m);
    }
    if let Some(qs) = model.attn_query() {
        for (i, q) in qs.iter().enumerate() {
            push(preset.attn_query.as_ref().unwrap().resolve(i), q);
        }
    }

    let views = tensors
        .iter()
        .map(|(name, shape, bytes)| Ok((name.clone(), TensorView::new(Dtype::F32, shape.clone(), bytes)?)))
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join("model.safetensors");
    safetensors::serialize_to_file(views, &None, &path)?;

    let preset_path = dir.join("preset.json");
    std::fs::write(&preset_path, serde_json::to_string_pretty(&preset)?).map_err(|e| Error::io(&preset_path, e))?;

    if let Some(keys) = model.bos_keys() {
        let raw: BTreeMap<String, &Vec<f32>> = keys.iter().map(|(&(l, h), v)| (format!("{l}.{h}"), v)).collect();
        let keys_path = dir.join("bos_keys.json");
        std::fs::write(&keys_path, serde_json::to_string(&raw)?).map_err(|e| Error::io(&keys_path, e))?;
    }
    Ok(())
}
