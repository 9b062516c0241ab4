//! IO classes of gated neurons from their weight cosines.
//!
//! A neuron's class is fixed by `cos(w_in, w_out)` (positive, negative or
//! near zero) and `|cos(w_gate, w_out)|` (large or near zero). The third
//! cosine, `|cos(w_gate, w_in)|`, only decides whether the neuron is a
//! typical or an atypical member of that class.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{cosine_triples, CosineTriple};
use crate::weights::{ModelWeights, NeuronId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IoClass {
    Enrichment,
    ConditionalEnrichment,
    Depletion,
    ConditionalDepletion,
    ProportionalChange,
    OrthogonalOutput,
}

impl IoClass {
    pub const ALL: [IoClass; 6] = [
        IoClass::Enrichment,
        IoClass::ConditionalEnrichment,
        IoClass::Depletion,
        IoClass::ConditionalDepletion,
        IoClass::ProportionalChange,
        IoClass::OrthogonalOutput,
    ];

    pub fn key(self) -> &'static str {
        match self {
            IoClass::Enrichment => "enrichment",
            IoClass::ConditionalEnrichment => "conditional_enrichment",
            IoClass::Depletion => "depletion",
            IoClass::ConditionalDepletion => "conditional_depletion",
            IoClass::ProportionalChange => "proportional_change",
            IoClass::OrthogonalOutput => "orthogonal_output",
        }
    }

    /// Whether the typical member of this class has `|cos(w_gate, w_in)|`
    /// above the threshold.
    fn typical_reading_weights_aligned(self) -> bool {
        matches!(self, IoClass::Enrichment | IoClass::Depletion)
    }
}

impl fmt::Display for IoClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for IoClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        IoClass::ALL
            .into_iter()
            .find(|c| c.key() == s)
            .ok_or_else(|| Error::malformed("IO class", format!("unknown class `{s}`")))
    }
}

/// One of the eleven IO labels: a base class plus the atypical flag.
/// Orthogonal output has no atypical variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IoLabel {
    base: IoClass,
    atypical: bool,
}

impl IoLabel {
    /// All labels, in the row order of the role contingency table.
    pub const ALL: [IoLabel; 11] = [
        IoLabel::typical(IoClass::Depletion),
        IoLabel {
            base: IoClass::Depletion,
            atypical: true,
        },
        IoLabel::typical(IoClass::ConditionalDepletion),
        IoLabel {
            base: IoClass::ConditionalDepletion,
            atypical: true,
        },
        IoLabel::typical(IoClass::OrthogonalOutput),
        IoLabel::typical(IoClass::ProportionalChange),
        IoLabel {
            base: IoClass::ProportionalChange,
            atypical: true,
        },
        IoLabel::typical(IoClass::ConditionalEnrichment),
        IoLabel {
            base: IoClass::ConditionalEnrichment,
            atypical: true,
        },
        IoLabel::typical(IoClass::Enrichment),
        IoLabel {
            base: IoClass::Enrichment,
            atypical: true,
        },
    ];

    pub const fn typical(base: IoClass) -> Self {
        Self { base, atypical: false }
    }

    pub fn new(base: IoClass, atypical: bool) -> Result<Self> {
        if atypical && base == IoClass::OrthogonalOutput {
            return Err(Error::malformed(
                "IO label",
                "orthogonal output has no atypical variant",
            ));
        }
        Ok(Self { base, atypical })
    }

    pub fn base(self) -> IoClass {
        self.base
    }

    pub fn is_atypical(self) -> bool {
        self.atypical
    }

    /// Position in [`IoLabel::ALL`].
    pub fn ordinal(self) -> usize {
        IoLabel::ALL
            .iter()
            .position(|&l| l == self)
            .expect("label is one of ALL")
    }

    /// Stable machine key, e.g. `atypical_conditional_depletion`.
    pub fn key(self) -> String {
        if self.atypical {
            format!("atypical_{}", self.base.key())
        } else {
            self.base.key().to_string()
        }
    }

    pub fn from_key(key: &str) -> Result<Self> {
        match key.strip_prefix("atypical_") {
            Some(base) => IoLabel::new(base.parse()?, true),
            None => Ok(IoLabel::typical(key.parse()?)),
        }
    }
}

impl fmt::Display for IoLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.atypical {
            f.write_str("atypical ")?;
        }
        f.write_str(&self.base.key().replace('_', " "))
    }
}

impl Serialize for IoLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.key())
    }
}

impl<'de> Deserialize<'de> for IoLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let key = String::deserialize(d)?;
        IoLabel::from_key(&key).map_err(serde::de::Error::custom)
    }
}

/// Cosine-magnitude threshold separating "near zero" from "clearly nonzero".
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Tau(f64);

impl Tau {
    pub const DEFAULT: Tau = Tau(0.5);

    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(Tau(tau))
        } else {
            Err(Error::InvalidParameter(format!("tau must lie in (0, 1), got {tau}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Tau {
    fn default() -> Self {
        Tau::DEFAULT
    }
}

impl TryFrom<f64> for Tau {
    type Error = Error;

    fn try_from(v: f64) -> Result<Self> {
        Tau::new(v)
    }
}

impl From<Tau> for f64 {
    fn from(t: Tau) -> f64 {
        t.0
    }
}

/// Assigns the IO label of a cosine triple. A magnitude exactly equal to
/// `tau` counts as near zero.
pub fn classify(t: &CosineTriple, tau: Tau) -> IoLabel {
    let tau = tau.get();
    let gate_out_large = t.gate_out.abs() > tau;
    let base = if t.in_out > tau {
        if gate_out_large {
            IoClass::Enrichment
        } else {
            IoClass::ConditionalEnrichment
        }
    } else if t.in_out < -tau {
        if gate_out_large {
            IoClass::Depletion
        } else {
            IoClass::ConditionalDepletion
        }
    } else if gate_out_large {
        IoClass::ProportionalChange
    } else {
        IoClass::OrthogonalOutput
    };
    let atypical =
        base != IoClass::OrthogonalOutput && (t.gate_in.abs() > tau) != base.typical_reading_weights_aligned();
    IoLabel { base, atypical }
}

/// True for every class that writes to a direction it reads.
pub fn is_input_manipulator(label: IoLabel) -> bool {
    label.base != IoClass::OrthogonalOutput
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeuronRecord {
    pub id: NeuronId,
    pub cosines: CosineTriple,
    pub label: IoLabel,
}

/// Labels of every non-degenerate neuron of a model, ordered by
/// `(layer, index)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTable {
    pub model: String,
    pub tau: Tau,
    pub n_layers: usize,
    pub records: Vec<NeuronRecord>,
    /// Neurons with a zero-norm weight vector, excluded from `records`.
    pub degenerate: Vec<NeuronId>,
}

impl ClassificationTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records of one layer (records are sorted, so this is a contiguous run).
    pub fn layer(&self, layer: usize) -> &[NeuronRecord] {
        let start = self.records.partition_point(|r| r.id.layer < layer);
        let end = self.records.partition_point(|r| r.id.layer <= layer);
        &self.records[start..end]
    }

    pub fn get(&self, id: NeuronId) -> Option<&NeuronRecord> {
        self.records
            .binary_search_by(|r| r.id.cmp(&id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// Writes the per-neuron CSV
    /// (`layer,index,cos_gate_in,cos_gate_out,cos_in_out,base_class,atypical`).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.id.layer.to_string(),
                r.id.index.to_string(),
                format!("{:.6}", r.cosines.gate_in),
                format!("{:.6}", r.cosines.gate_out),
                format!("{:.6}", r.cosines.in_out),
                r.label.base.key().to_string(),
                r.label.atypical.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Reads a CSV written by [`ClassificationTable::write_csv`]. Labels
    /// are taken from the file, not recomputed.
    pub fn read_csv<R: Read>(input: R, model: impl Into<String>, tau: Tau) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().ne(CSV_HEADER) {
            return Err(Error::malformed("classes CSV", format!("unexpected header {header:?}")));
        }
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row?;
            let field = |i: usize| row.get(i).unwrap_or_default();
            let bad = |what: &str| Error::malformed("classes CSV", format!("row {}: bad {what}", line + 2));
            let num = |i: usize, what: &str| field(i).parse::<f64>().map_err(|_| bad(what));
            let id = NeuronId::new(
                field(0).parse().map_err(|_| bad("layer"))?,
                field(1).parse().map_err(|_| bad("index"))?,
            );
            let cosines = CosineTriple::new(num(2, "cos_gate_in")?, num(3, "cos_gate_out")?, num(4, "cos_in_out")?)?;
            let atypical = field(6).parse::<bool>().map_err(|_| bad("atypical"))?;
            let label = IoLabel::new(field(5).parse()?, atypical)?;
            records.push(NeuronRecord { id, cosines, label });
        }
        records.sort_by_key(|r| r.id);
        let n_layers = records.last().map_or(0, |r| r.id.layer + 1);
        Ok(Self {
            model: model.into(),
            tau,
            n_layers,
            records,
            degenerate: Vec::new(),
        })
    }
}

pub const CSV_HEADER: [&str; 7] = [
    "layer",
    "index",
    "cos_gate_in",
    "cos_gate_out",
    "cos_in_out",
    "base_class",
    "atypical",
];

/// Classifies every neuron of every layer.
pub fn classify_model(model: &ModelWeights, tau: Tau) -> ClassificationTable {
    let mut records = Vec::new();
    let mut degenerate = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        for (i, t) in cosine_triples(layer).into_iter().enumerate() {
            let id = NeuronId::new(l, i);
            match t {
                Some(cosines) => records.push(NeuronRecord {
                    id,
                    cosines,
                    label: classify(&cosines, tau),
                }),
                None => degenerate.push(id),
            }
        }
    }
    if !degenerate.is_empty() {
        log::info!("{} degenerate neurons excluded", degenerate.len());
    }
    ClassificationTable {
        model: model.meta().name.clone(),
        tau,
        n_layers: model.n_layers(),
        records,
        degenerate,
    }
}
