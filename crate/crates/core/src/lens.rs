//! Vocabulary projections of neuron weight vectors.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::roles::TokenBasis;
use crate::weights::{ModelWeights, NeuronId, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Unembed,
    Embed,
}

/// Which of a neuron's three weight vectors to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightVector {
    Gate,
    In,
    Out,
}

macro_rules! keyed_enum {
    ($ty:ty, $what:literal, $($variant:path => $key:literal),+) => {
        impl $ty {
            pub fn key(self) -> &'static str {
                match self { $($variant => $key),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.key())
            }
        }

        impl FromStr for $ty {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($key => Ok($variant),)+
                    _ => Err(Error::InvalidParameter(format!("unknown {} `{s}`", $what))),
                }
            }
        }
    };
}

keyed_enum!(Direction, "direction", Direction::Positive => "positive", Direction::Negative => "negative");
keyed_enum!(Basis, "basis", Basis::Unembed => "unembed", Basis::Embed => "embed");
keyed_enum!(WeightVector, "weight vector", WeightVector::Gate => "gate", WeightVector::In => "in", WeightVector::Out => "out");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenEntry {
    pub token: String,
    pub id: usize,
    pub cos: f64,
}

/// The `k` tokens whose vectors are most (positive) or least (negative)
/// aligned with a weight vector. Entries hold `cos(w, t)`, descending for
/// positive and ascending for negative; ties go to the lower id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenRanking {
    pub direction: Direction,
    pub basis: Basis,
    pub entries: Vec<TokenEntry>,
}

pub fn top_tokens(
    w: &[f32],
    model: &ModelWeights,
    vocab: &Vocabulary,
    k: usize,
    direction: Direction,
    basis: Basis,
) -> Result<TokenRanking> {
    let tokens = match basis {
        Basis::Unembed => model.unembed(),
        Basis::Embed => model.embed(),
    }
    .ok_or_else(|| Error::Unavailable(format!("{basis} matrix")))?;
    if vocab.len() != tokens.rows() {
        return Err(Error::VocabMismatch {
            vocab: vocab.len(),
            unembed: tokens.rows(),
        });
    }
    rank(&TokenBasis::new(tokens), w, vocab, k, direction, basis)
}

/// Ranking against a prepared basis, for projecting many vectors.
pub fn rank(
    tokens: &TokenBasis<'_>,
    w: &[f32],
    vocab: &Vocabulary,
    k: usize,
    direction: Direction,
    basis: Basis,
) -> Result<TokenRanking> {
    let d_vocab = tokens.tokens().rows();
    if k == 0 || k > d_vocab {
        return Err(Error::InvalidParameter(format!(
            "top-k must lie in 1..={d_vocab}, got {k}"
        )));
    }
    let cos = tokens.profile(w)?.values;
    let mut order: Vec<usize> = (0..d_vocab).collect();
    match direction {
        Direction::Positive => order.sort_by(|&a, &b| cos[b].total_cmp(&cos[a]).then(a.cmp(&b))),
        Direction::Negative => order.sort_by(|&a, &b| cos[a].total_cmp(&cos[b]).then(a.cmp(&b))),
    }
    let entries = order
        .into_iter()
        .take(k)
        .map(|id| TokenEntry {
            token: vocab.token(id).unwrap_or_default().to_string(),
            id,
            cos: cos[id],
        })
        .collect();
    Ok(TokenRanking {
        direction,
        basis,
        entries,
    })
}

/// The JSON written by `neuron-io project`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub neuron: NeuronId,
    pub vector: WeightVector,
    pub direction: Direction,
    pub basis: Basis,
    pub entries: Vec<TokenEntry>,
}

pub fn project_neuron(
    model: &ModelWeights,
    vocab: &Vocabulary,
    neuron: NeuronId,
    vector: WeightVector,
    k: usize,
    direction: Direction,
    basis: Basis,
) -> Result<Projection> {
    let t = model.neuron_triple(neuron)?;
    let w = match vector {
        WeightVector::Gate => t.w_gate,
        WeightVector::In => t.w_in,
        WeightVector::Out => t.w_out,
    };
    let ranking = top_tokens(w, model, vocab, k, direction, basis)?;
    Ok(Projection {
        neuron,
        vector,
        direction,
        basis,
        entries: ranking.entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{ActivationKind, LayerWeights, Matrix};
    use std::f64::consts::FRAC_1_SQRT_2;

    fn toy() -> (ModelWeights, Vocabulary) {
        let h = FRAC_1_SQRT_2 as f32;
        let unembed = Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [h, h]]).unwrap();
        let m = Matrix::from_rows(&[[1.0f32, 0.0]]).unwrap();
        let layer = LayerWeights::new(m.clone(), m.clone(), m).unwrap();
        let model = ModelWeights::new("toy", ActivationKind::Swish, vec![layer], Some(unembed), None).unwrap();
        let vocab = Vocabulary::new(vec!["a".into(), "b".into(), "ab".into()]).unwrap();
        (model, vocab)
    }

    #[test]
    fn ranks_hand_computed_cosines() {
        let (model, vocab) = toy();
        let r = top_tokens(&[1.0, 0.0], &model, &vocab, 2, Direction::Positive, Basis::Unembed).unwrap();
        assert_eq!(r.entries[0].id, 0);
        assert_eq!(r.entries[0].cos, 1.0);
        assert_eq!(r.entries[1].id, 2);
        assert!((r.entries[1].cos - FRAC_1_SQRT_2).abs() < 1e-7);
    }

    #[test]
    fn negative_direction_lists_lowest_first() {
        let (model, vocab) = toy();
        let r = top_tokens(&[1.0, 0.0], &model, &vocab, 3, Direction::Negative, Basis::Unembed).unwrap();
        let ids: Vec<usize> = r.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![1, 2, 0]);
    }

    #[test]
    fn ties_break_by_id() {
        let (model, vocab) = toy();
        let r = top_tokens(&[1.0, 1.0], &model, &vocab, 3, Direction::Positive, Basis::Unembed).unwrap();
        let ids: Vec<usize> = r.entries.iter().map(|e| e.id).collect();
        assert_eq!(ids, vec![2, 0, 1]);
    }

    #[test]
    fn errors() {
        let (model, vocab) = toy();
        let e = top_tokens(&[1.0, 0.0], &model, &vocab, 4, Direction::Positive, Basis::Unembed);
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
        let e = top_tokens(&[1.0, 0.0], &model, &vocab, 0, Direction::Positive, Basis::Unembed);
        assert!(matches!(e, Err(Error::InvalidParameter(_))));
        let e = top_tokens(&[1.0, 0.0], &model, &vocab, 1, Direction::Positive, Basis::Embed);
        assert!(matches!(e, Err(Error::Unavailable(_))));
    }

    #[test]
    fn parses_keys() {
        assert_eq!("out".parse::<WeightVector>().unwrap(), WeightVector::Out);
        assert_eq!("embed".parse::<Basis>().unwrap(), Basis::Embed);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
