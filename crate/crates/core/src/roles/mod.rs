//! Output-weight functional roles: prediction, suppression, partition,
//! entropy and attention (de)activation.
//!
//! Roles are assigned in precedence order partition, then
//! prediction/suppression, then attention (de)activation, then entropy;
//! every remaining neuron is `other`. All statistics are cosine-based, so
//! positive rescaling of any weight vector changes nothing.

mod moments;
mod nullspace;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use moments::{moments, MomentAccumulator, Moments};
pub use nullspace::{null_space_fraction, NullSpace};

use crate::error::{Error, Result};
use crate::geometry::{clamp_cosine, cosine, dot, norm_sq};
use crate::taxonomy::ClassificationTable;
use crate::weights::{Matrix, ModelWeights, NeuronId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Prediction,
    Suppression,
    Partition,
    Entropy,
    AttentionDeactivation,
    AttentionActivation,
    Other,
}

impl Role {
    pub const ALL: [Role; 7] = [
        Role::Prediction,
        Role::Suppression,
        Role::Partition,
        Role::Entropy,
        Role::AttentionDeactivation,
        Role::AttentionActivation,
        Role::Other,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Role::Prediction => "prediction",
            Role::Suppression => "suppression",
            Role::Partition => "partition",
            Role::Entropy => "entropy",
            Role::AttentionDeactivation => "attention_deactivation",
            Role::AttentionActivation => "attention_activation",
            Role::Other => "other",
        }
    }

    pub fn ordinal(self) -> usize {
        self as usize
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Role::ALL
            .into_iter()
            .find(|r| r.key() == s)
            .ok_or_else(|| Error::malformed("role", format!("unknown role `{s}`")))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// `cos(w_out, t_j)` for every token vector `t_j` (column of W_U).
#[derive(Debug, Clone, PartialEq)]
pub struct VocabProfile {
    pub values: Vec<f64>,
    /// Token ids whose vector has zero norm; their entry is 0.
    pub zero_columns: Vec<usize>,
}

/// Token vectors with cached squared norms, for repeated profiles.
#[derive(Debug, Clone)]
pub struct TokenBasis<'a> {
    tokens: &'a Matrix,
    norms_sq: Vec<f64>,
}

impl<'a> TokenBasis<'a> {
    pub fn new(tokens: &'a Matrix) -> Self {
        let norms_sq = tokens.row_iter().map(norm_sq).collect();
        Self { tokens, norms_sq }
    }

    pub fn tokens(&self) -> &Matrix {
        self.tokens
    }

    /// Cosine of `w` with every token vector.
    pub fn profile(&self, w: &[f32]) -> Result<VocabProfile> {
        let mut values = Vec::with_capacity(self.tokens.rows());
        let zero_columns = self.profile_into(w, &mut values)?;
        Ok(VocabProfile { values, zero_columns })
    }

    fn profile_into(&self, w: &[f32], values: &mut Vec<f64>) -> Result<Vec<usize>> {
        if w.len() != self.tokens.cols() {
            return Err(Error::LengthMismatch {
                left: self.tokens.cols(),
                right: w.len(),
            });
        }
        let nw = norm_sq(w);
        if nw == 0.0 {
            return Err(Error::ZeroNorm("w_out in vocabulary profile".into()));
        }
        let nw = nw.sqrt();
        values.clear();
        let mut zero = Vec::new();
        for (j, (row, &nt)) in self.tokens.row_iter().zip(&self.norms_sq).enumerate() {
            if nt == 0.0 {
                zero.push(j);
                values.push(0.0);
            } else {
                values.push(clamp_cosine(dot(w, row) / (nw * nt.sqrt()))?);
            }
        }
        Ok(zero)
    }

    /// Moments of the profile without keeping it.
    pub fn profile_moments(&self, w: &[f32]) -> Result<Moments> {
        let mut buf = Vec::with_capacity(self.tokens.rows());
        self.profile_into(w, &mut buf)?;
        moments(&buf)
    }
}

pub fn vocab_profile(w_out: &[f32], unembed: &Matrix) -> Result<VocabProfile> {
    TokenBasis::new(unembed).profile(w_out)
}

/// The `n`-th largest variance. Neurons at or above it (with positive
/// variance) are partition candidates; ties may admit more than `n`.
pub fn partition_cutoff(variances: &[f64], n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("partition count must be positive".into()));
    }
    if n > variances.len() {
        return Err(Error::InvalidParameter(format!(
            "partition count {n} exceeds neuron count {}",
            variances.len()
        )));
    }
    let mut sorted = variances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(sorted[n - 1])
}

/// Largest excess kurtosis among partition neurons, or `-inf` when there
/// are none. Prediction/suppression neurons must lie strictly above it.
pub fn kurtosis_cutoff<I: IntoIterator<Item = Option<f64>>>(partition_kurtoses: I) -> f64 {
    partition_kurtoses
        .into_iter()
        .flatten()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Prediction if `sign(cos(w_gate, w_in) * skew) >= 0`, else suppression.
pub fn prediction_or_suppression(c_gi: f64, skew: Option<f64>) -> Result<Role> {
    let skew = skew.ok_or_else(|| Error::Numerical("skew undefined for a zero-variance profile".into()))?;
    Ok(if c_gi * skew < 0.0 {
        Role::Suppression
    } else {
        Role::Prediction
    })
}

/// Cosine between `w_out` and the BOS-attention query direction `W_Q k_BOS`.
pub fn attention_score(w_out: &[f32], query_direction: &[f64]) -> Result<f64> {
    cosine(w_out, query_direction)
}

/// Sign of `cos(w_gate, w_in)` with zero counted as positive.
fn reading_sign(c_gi: f64) -> f64 {
    if c_gi < 0.0 {
        -1.0
    } else {
        1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleParams {
    pub partition_n: usize,
    pub null_k: usize,
    pub entropy_n: usize,
    pub attention_cutoff: f64,
    /// Lower bound on the kurtosis cutoff, used when it would be `-inf`.
    pub kurtosis_floor: Option<f64>,
}

impl Default for RoleParams {
    fn default() -> Self {
        Self {
            partition_n: 1000,
            null_k: 40,
            entropy_n: 2,
            attention_cutoff: std::f64::consts::FRAC_1_SQRT_2,
            kurtosis_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleRecord {
    pub id: NeuronId,
    pub role: Role,
    pub variance: f64,
    pub skew: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    /// Only computed for last-layer neurons.
    pub null_fraction: Option<f64>,
    /// Sign-adjusted score of the head with the largest `|score|`, over
    /// heads in later layers; `None` without attention data.
    pub max_attention_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleTable {
    pub records: Vec<RoleRecord>,
    pub params: RoleParams,
    pub variance_cutoff: f64,
    /// Effective cutoff; `None` encodes `-inf`.
    pub kurtosis_cutoff: Option<f64>,
    pub attention_available: bool,
}

impl RoleTable {
    pub fn counts(&self) -> BTreeMap<Role, usize> {
        let mut counts: BTreeMap<Role, usize> = Role::ALL.iter().map(|&r| (r, 0)).collect();
        for r in &self.records {
            *counts.get_mut(&r.role).unwrap() += 1;
        }
        counts
    }

    pub fn get(&self, id: NeuronId) -> Option<&RoleRecord> {
        self.records
            .binary_search_by(|r| r.id.cmp(&id))
            .ok()
            .map(|i| &self.records[i])
    }

    /// `layer,index,role,variance,skew,excess_kurtosis,null_fraction,max_attention_score`;
    /// undefined values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(ROLE_CSV_HEADER)?;
        for r in &self.records {
            w.write_record([
                r.id.layer.to_string(),
                r.id.index.to_string(),
                r.role.key().to_string(),
                r.variance.to_string(),
                opt(r.skew),
                opt(r.excess_kurtosis),
                opt(r.null_fraction),
                opt(r.max_attention_score),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// Per-neuron columns of a role CSV, without the run parameters.
pub fn read_role_records<R: Read>(input: R) -> Result<Vec<RoleRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(ROLE_CSV_HEADER) {
        return Err(Error::malformed("roles CSV", format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::malformed("roles CSV", format!("row {}: bad {what}", line + 2));
        let field = |i: usize| row.get(i).unwrap_or_default();
        let opt = |i: usize, what: &str| -> Result<Option<f64>> {
            match field(i) {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad(what)),
            }
        };
        records.push(RoleRecord {
            id: NeuronId::new(
                field(0).parse().map_err(|_| bad("layer"))?,
                field(1).parse().map_err(|_| bad("index"))?,
            ),
            role: field(2).parse()?,
            variance: field(3).parse().map_err(|_| bad("variance"))?,
            skew: opt(4, "skew")?,
            excess_kurtosis: opt(5, "excess_kurtosis")?,
            null_fraction: opt(6, "null_fraction")?,
            max_attention_score: opt(7, "max_attention_score")?,
        });
    }
    records.sort_by_key(|r| r.id);
    Ok(records)
}

pub const ROLE_CSV_HEADER: [&str; 8] = [
    "layer",
    "index",
    "role",
    "variance",
    "skew",
    "excess_kurtosis",
    "null_fraction",
    "max_attention_score",
];

type QueryDirections = Vec<((usize, usize), Vec<f64>)>;

/// Normalized `W_Q k_BOS` directions keyed by `(layer, head)`.
fn query_directions(model: &ModelWeights) -> Result<Option<QueryDirections>> {
    let Some(keys) = model.bos_keys() else {
        return Ok(None);
    };
    if model.attn_query().is_none() {
        return Ok(None);
    }
    let mut dirs = Vec::with_capacity(keys.len());
    for &(layer, head) in keys.keys() {
        let q = model.bos_query_direction(layer, head)?;
        let n = norm_sq(&q).sqrt();
        if n == 0.0 {
            log::warn!("head {layer}.{head}: W_Q k_BOS is zero; skipped");
            continue;
        }
        dirs.push(((layer, head), q.into_iter().map(|x| x / n).collect()));
    }
    Ok(Some(dirs))
}

/// Applies the full role procedure to every classified neuron.
pub fn assign_roles(model: &ModelWeights, io: &ClassificationTable, params: &RoleParams) -> Result<RoleTable> {
    let unembed = model
        .unembed()
        .ok_or_else(|| Error::Unavailable("unembedding matrix".into()))?;
    if io.is_empty() {
        return Err(Error::Empty("classification table".into()));
    }
    let basis = TokenBasis::new(unembed);

    let stats = io
        .records
        .par_iter()
        .map(|r| {
            let t = model.neuron_triple(r.id)?;
            basis.profile_moments(t.w_out)
        })
        .collect::<Result<Vec<Moments>>>()?;

    let variances: Vec<f64> = stats.iter().map(|m| m.variance).collect();
    let variance_cutoff = partition_cutoff(&variances, params.partition_n)?;
    let mut roles = vec![Role::Other; stats.len()];
    for (role, m) in roles.iter_mut().zip(&stats) {
        if m.variance > 0.0 && m.variance >= variance_cutoff {
            *role = Role::Partition;
        }
    }
    let partition_count = roles.iter().filter(|&&r| r == Role::Partition).count();
    if partition_count != params.partition_n {
        log::info!(
            "{partition_count} partition neurons (requested {}) at variance cutoff {variance_cutoff}",
            params.partition_n
        );
    }

    let raw_cutoff = kurtosis_cutoff(
        roles
            .iter()
            .zip(&stats)
            .filter(|(r, _)| **r == Role::Partition)
            .map(|(_, m)| m.excess_kurtosis),
    );
    let k_cutoff = params.kurtosis_floor.map_or(raw_cutoff, |f| raw_cutoff.max(f));
    for ((role, m), rec) in roles.iter_mut().zip(&stats).zip(&io.records) {
        if *role == Role::Other {
            if let Some(k) = m.excess_kurtosis {
                if k > k_cutoff {
                    *role = prediction_or_suppression(rec.cosines.gate_in, m.skew)?;
                }
            }
        }
    }

    let directions = query_directions(model)?;
    let attention: Vec<Option<f64>> = match &directions {
        None => vec![None; stats.len()],
        Some(dirs) => io
            .records
            .par_iter()
            .map(|rec| {
                let w_out = model.neuron_triple(rec.id)?.w_out;
                let nw = norm_sq(w_out).sqrt();
                let sign = reading_sign(rec.cosines.gate_in);
                let best = dirs
                    .iter()
                    .filter(|((layer, _), _)| *layer > rec.id.layer)
                    .map(|(_, q)| sign * (dot(w_out, q) / nw).clamp(-1.0, 1.0))
                    .fold(None, |acc: Option<f64>, s| match acc {
                        Some(a) if a.abs() >= s.abs() => Some(a),
                        _ => Some(s),
                    });
                Ok(best)
            })
            .collect::<Result<Vec<_>>>()?,
    };
    for (role, score) in roles.iter_mut().zip(&attention) {
        if let (Role::Other, Some(s)) = (*role, score) {
            if s.abs() >= params.attention_cutoff {
                *role = if *s > 0.0 {
                    Role::AttentionDeactivation
                } else {
                    Role::AttentionActivation
                };
            }
        }
    }

    let mut null_fraction = vec![None; stats.len()];
    if params.entropy_n > 0 && io.n_layers > 0 {
        let last = io.n_layers - 1;
        let null_space = NullSpace::from_unembed(unembed, params.null_k)?;
        let mut ranked = Vec::new();
        for (i, rec) in io.records.iter().enumerate() {
            if rec.id.layer == last {
                let f = null_space.fraction(model.neuron_triple(rec.id)?.w_out)?;
                null_fraction[i] = Some(f);
                if roles[i] == Role::Other {
                    ranked.push((f, i));
                }
            }
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in ranked.iter().take(params.entropy_n) {
            roles[i] = Role::Entropy;
        }
    }

    let records = io
        .records
        .iter()
        .enumerate()
        .map(|(i, rec)| RoleRecord {
            id: rec.id,
            role: roles[i],
            variance: stats[i].variance,
            skew: stats[i].skew,
            excess_kurtosis: stats[i].excess_kurtosis,
            null_fraction: null_fraction[i],
            max_attention_score: attention[i],
        })
        .collect();
    Ok(RoleTable {
        records,
        params: params.clone(),
        variance_cutoff,
        kurtosis_cutoff: k_cutoff.is_finite().then_some(k_cutoff),
        attention_available: directions.is_some(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    #[test]
    fn profile_of_two_token_unembed() {
        let u = Matrix::from_rows(&[[1.0f32, 0.0], [FRAC_1_SQRT_2 as f32, FRAC_1_SQRT_2 as f32]]).unwrap();
        let p = vocab_profile(&[1.0, 0.0], &u).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!((p.values[1] - FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn profile_matches_token_and_flags_zero_columns() {
        let u = Matrix::from_rows(&[[0.0f32, 0.0, 1.0], [0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]).unwrap();
        let p = vocab_profile(&[0.0, 3.0, 0.0], &u).unwrap();
        assert_eq!(p.values, vec![0.0, 0.0, 0.0]);
        assert_eq!(p.zero_columns, vec![1]);
        let p = vocab_profile(&[4.0, 0.0, 0.0], &u).unwrap();
        assert_eq!(p.values[2], 1.0);
        assert!(vocab_profile(&[0.0; 3], &u).is_err());
    }

    #[test]
    fn partition_cutoffs() {
        assert_eq!(partition_cutoff(&[0.5, 0.4, 0.3], 2).unwrap(), 0.4);
        assert_eq!(partition_cutoff(&[0.5, 0.4, 0.3], 3).unwrap(), 0.3);
        assert!(partition_cutoff(&[0.5], 0).is_err());
        assert!(partition_cutoff(&[0.5], 2).is_err());
    }

    #[test]
    fn kurtosis_cutoff_is_partition_maximum() {
        let cutoff = kurtosis_cutoff([Some(10.0), Some(230.0), None]);
        assert_eq!(cutoff, 230.0);
        let others = [5.0, 300.0];
        assert_eq!(others.iter().filter(|&&k| k > cutoff).count(), 1);
        assert_eq!(kurtosis_cutoff(std::iter::empty()), f64::NEG_INFINITY);
    }

    #[test]
    fn prediction_sign_rule() {
        assert_eq!(prediction_or_suppression(0.4, Some(3.0)).unwrap(), Role::Prediction);
        assert_eq!(prediction_or_suppression(-0.4, Some(3.0)).unwrap(), Role::Suppression);
        assert_eq!(prediction_or_suppression(0.0, Some(-3.0)).unwrap(), Role::Prediction);
        assert!(prediction_or_suppression(0.4, None).is_err());
    }

    #[test]
    fn attention_scores() {
        assert!((attention_score(&[2.0, 0.0], &[0.5, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(attention_score(&[0.0, 1.0], &[3.0, 0.0]).unwrap(), 0.0);
        // adjusted score 0.8 * sign(0.3) = 0.8 >= 1/sqrt(2): deactivation
        let adjusted = 0.8 * reading_sign(0.3);
        assert!(adjusted >= FRAC_1_SQRT_2);
        assert!(attention_score(&[1.0, 0.0], &[0.0, 0.0]).is_err());
    }
}
