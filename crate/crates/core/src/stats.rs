//! Layer-level summaries of a classification: label counts, cosine
//! boxplots, median `cos(w_in, w_out)` curves over depth and the IO-label
//! by role contingency table.

use std::fmt;

use rayon::prelude::*;
use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::roles::{Role, RoleRecord};
use crate::taxonomy::{classify, ClassificationTable, IoLabel, NeuronRecord, Tau};
use crate::weights::NeuronId;

/// Neuron counts for each of the eleven labels, in [`IoLabel::ALL`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts(pub [usize; 11]);

impl LabelCounts {
    pub fn get(&self, label: IoLabel) -> usize {
        self.0[label.ordinal()]
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (IoLabel, usize)> + '_ {
        IoLabel::ALL.iter().copied().zip(self.0.iter().copied())
    }

    /// Neurons whose class is anything but orthogonal output.
    pub fn input_manipulators(&self) -> usize {
        self.iter()
            .filter(|(l, _)| crate::taxonomy::is_input_manipulator(*l))
            .map(|(_, n)| n)
            .sum()
    }
}

impl Serialize for LabelCounts {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(11))?;
        for (label, n) in self.iter() {
            map.serialize_entry(&label.key(), &n)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for LabelCounts {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct CountsVisitor;
        impl<'de> Visitor<'de> for CountsVisitor {
            type Value = LabelCounts;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map from IO label to count")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut m: A) -> std::result::Result<LabelCounts, A::Error> {
                let mut counts = LabelCounts::default();
                while let Some((key, n)) = m.next_entry::<String, usize>()? {
                    let label = IoLabel::from_key(&key).map_err(serde::de::Error::custom)?;
                    counts.0[label.ordinal()] = n;
                }
                Ok(counts)
            }
        }
        d.deserialize_map(CountsVisitor)
    }
}

/// Label counts of every layer, indexed by layer.
pub fn class_distribution(table: &ClassificationTable) -> Result<Vec<LabelCounts>> {
    if table.is_empty() {
        return Err(Error::Empty("classification table".into()));
    }
    let mut layers = vec![LabelCounts::default(); table.n_layers.max(1)];
    for r in &table.records {
        if r.id.layer >= layers.len() {
            layers.resize(r.id.layer + 1, LabelCounts::default());
        }
        layers[r.id.layer].0[r.label.ordinal()] += 1;
    }
    Ok(layers)
}

/// Tukey boxplot summary. Quartiles interpolate linearly at position
/// `(n - 1) p` of the sorted data; whiskers reach the most extreme datum
/// within 1.5 IQR of the box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<(NeuronId, f64)>,
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = (sorted.len() - 1) as f64 * p;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn box_stats(values: &[(NeuronId, f64)]) -> Result<BoxStats> {
    if values.is_empty() {
        return Err(Error::Empty("boxplot data".into()));
    }
    if let Some((id, _)) = values.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::Numerical(format!("non-finite value for neuron {id}")));
    }
    let mut sorted: Vec<f64> = values.iter().map(|&(_, v)| v).collect();
    sorted.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&sorted, 0.25), quantile(&sorted, 0.5), quantile(&sorted, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = |v: f64| v >= lo_fence && v <= hi_fence;
    let whisker_low = sorted.iter().copied().find(|&v| inside(v)).unwrap_or(q1);
    let whisker_high = sorted.iter().rev().copied().find(|&v| inside(v)).unwrap_or(q3);
    let mut outliers: Vec<(NeuronId, f64)> = values.iter().copied().filter(|&(_, v)| !inside(v)).collect();
    outliers.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    Ok(BoxStats {
        n: values.len(),
        median,
        q1,
        q3,
        whisker_low,
        whisker_high,
        outliers,
    })
}

/// The three plotted cosine channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    AbsCosGateIn,
    AbsCosGateOut,
    CosInOut,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::AbsCosGateIn, Channel::AbsCosGateOut, Channel::CosInOut];

    pub fn value(self, r: &NeuronRecord) -> f64 {
        match self {
            Channel::AbsCosGateIn => r.cosines.gate_in.abs(),
            Channel::AbsCosGateOut => r.cosines.gate_out.abs(),
            Channel::CosInOut => r.cosines.in_out,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Channel::AbsCosGateIn => "abs_cos_gate_in",
            Channel::AbsCosGateOut => "abs_cos_gate_out",
            Channel::CosInOut => "cos_in_out",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelBoxes {
    pub abs_cos_gate_in: BoxStats,
    pub abs_cos_gate_out: BoxStats,
    pub cos_in_out: BoxStats,
}

impl ChannelBoxes {
    pub fn get(&self, c: Channel) -> &BoxStats {
        match c {
            Channel::AbsCosGateIn => &self.abs_cos_gate_in,
            Channel::AbsCosGateOut => &self.abs_cos_gate_out,
            Channel::CosInOut => &self.cos_in_out,
        }
    }
}

fn channel_boxes(records: &[NeuronRecord]) -> Result<ChannelBoxes> {
    let boxes = |c: Channel| box_stats(&records.iter().map(|r| (r.id, c.value(r))).collect::<Vec<_>>());
    Ok(ChannelBoxes {
        abs_cos_gate_in: boxes(Channel::AbsCosGateIn)?,
        abs_cos_gate_out: boxes(Channel::AbsCosGateOut)?,
        cos_in_out: boxes(Channel::CosInOut)?,
    })
}

fn check_layers(table: &ClassificationTable) -> Result<()> {
    if table.is_empty() {
        return Err(Error::Empty("classification table".into()));
    }
    match (0..table.n_layers).find(|&l| table.layer(l).is_empty()) {
        Some(l) => Err(Error::Empty(format!("layer {l} has no classified neurons"))),
        None => Ok(()),
    }
}

/// Boxplots of every layer, indexed by layer.
pub fn layer_boxstats(table: &ClassificationTable) -> Result<Vec<ChannelBoxes>> {
    check_layers(table)?;
    (0..table.n_layers)
        .into_par_iter()
        .map(|l| channel_boxes(table.layer(l)))
        .collect()
}

/// `layer / (n_layers - 1)`, or 0 for a single-layer model.
pub fn relative_depth(layer: usize, n_layers: usize) -> f64 {
    if n_layers <= 1 {
        0.0
    } else {
        layer as f64 / (n_layers - 1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MedianCurve {
    pub model: String,
    /// `(relative depth, median cos(w_in, w_out))`, one per layer.
    pub points: Vec<(f64, f64)>,
}

pub fn median_curve(table: &ClassificationTable) -> Result<MedianCurve> {
    check_layers(table)?;
    let points = (0..table.n_layers)
        .map(|l| {
            let mut v: Vec<f64> = table.layer(l).iter().map(|r| r.cosines.in_out).collect();
            v.sort_by(f64::total_cmp);
            (relative_depth(l, table.n_layers), quantile(&v, 0.5))
        })
        .collect();
    Ok(MedianCurve {
        model: table.model.clone(),
        points,
    })
}

pub fn median_curves(tables: &[ClassificationTable]) -> Result<Vec<MedianCurve>> {
    tables.par_iter().map(median_curve).collect()
}

/// Counts of IO label (rows, [`IoLabel::ALL`] order) against role
/// (columns, [`Role::ALL`] order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub counts: [[usize; 7]; 11],
}

impl ContingencyTable {
    pub fn cell(&self, label: IoLabel, role: Role) -> usize {
        self.counts[label.ordinal()][role.ordinal()]
    }

    pub fn row_total(&self, label: IoLabel) -> usize {
        self.counts[label.ordinal()].iter().sum()
    }

    pub fn column_total(&self, role: Role) -> usize {
        self.counts.iter().map(|row| row[role.ordinal()]).sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Label rows with role columns plus totals, as CSV.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["label".to_string()];
        header.extend(Role::ALL.iter().map(|r| r.key().to_string()));
        header.push("total".into());
        w.write_record(&header)?;
        for label in IoLabel::ALL {
            let mut row = vec![label.key()];
            row.extend(Role::ALL.iter().map(|&r| self.cell(label, r).to_string()));
            row.push(self.row_total(label).to_string());
            w.write_record(&row)?;
        }
        let mut row = vec!["total".to_string()];
        row.extend(Role::ALL.iter().map(|&r| self.column_total(r).to_string()));
        row.push(self.total().to_string());
        w.write_record(&row)?;
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

pub fn contingency(io: &ClassificationTable, roles: &[RoleRecord]) -> Result<ContingencyTable> {
    if io.len() != roles.len() {
        return Err(Error::UniverseMismatch(format!(
            "{} classified neurons but {} role records",
            io.len(),
            roles.len()
        )));
    }
    let mut counts = [[0usize; 7]; 11];
    for (c, r) in io.records.iter().zip(roles) {
        if c.id != r.id {
            return Err(Error::UniverseMismatch(format!(
                "neuron {} classified but role given for {}",
                c.id, r.id
            )));
        }
        counts[c.label.ordinal()][r.role.ordinal()] += 1;
    }
    Ok(ContingencyTable { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub counts: LabelCounts,
    #[serde(rename = "box")]
    pub boxes: ChannelBoxes,
}

/// Label totals over the whole table at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauCounts {
    pub tau: Tau,
    pub counts: LabelCounts,
}

/// Reclassifies the table's cosines at each threshold in `taus`.
pub fn tau_sensitivity(table: &ClassificationTable, taus: &[Tau]) -> Vec<TauCounts> {
    taus.iter()
        .map(|&tau| {
            let mut counts = LabelCounts::default();
            for r in &table.records {
                counts.0[classify(&r.cosines, tau).ordinal()] += 1;
            }
            TauCounts { tau, counts }
        })
        .collect()
}

/// The JSON summary written by `neuron-io stats`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: String,
    pub tau: Tau,
    /// How the median curves' x axis is derived from layer indices.
    pub depth_normalization: String,
    pub layers: Vec<LayerSummary>,
    pub medians: Vec<MedianCurve>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contingency: Option<ContingencyTable>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sensitivity: Vec<TauCounts>,
}

pub const DEPTH_NORMALIZATION: &str = "layer/(n_layers-1)";

impl Report {
    pub fn build(table: &ClassificationTable, roles: Option<&[RoleRecord]>) -> Result<Self> {
        let counts = class_distribution(table)?;
        let boxes = layer_boxstats(table)?;
        let layers = counts
            .into_iter()
            .zip(boxes)
            .enumerate()
            .map(|(layer, (counts, boxes))| LayerSummary { layer, counts, boxes })
            .collect();
        Ok(Self {
            model: table.model.clone(),
            tau: table.tau,
            depth_normalization: DEPTH_NORMALIZATION.into(),
            layers,
            medians: vec![median_curve(table)?],
            contingency: roles.map(|r| contingency(table, r)).transpose()?,
            sensitivity: Vec::new(),
        })
    }

    /// Label totals over all layers.
    pub fn overall_counts(&self) -> LabelCounts {
        let mut total = LabelCounts::default();
        for l in &self.layers {
            for (t, n) in total.0.iter_mut().zip(l.counts.0) {
                *t += n;
            }
        }
        total
    }
}
