//! Cosine geometry of neuron weight vectors.
//!
//! All reductions accumulate in `f64` regardless of the storage type.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weights::LayerWeights;

/// Slack allowed beyond `[-1, 1]` before a cosine is treated as corrupt.
pub const COSINE_SLACK: f64 = 1e-6;

/// Numeric element readable as `f64`.
pub trait Scalar: Copy + Send + Sync {
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dot product with four independent `f64` lanes.
pub fn dot<A: Scalar, B: Scalar>(u: &[A], v: &[B]) -> f64 {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = [0.0f64; 4];
    let chunks = u.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += u[i].to_f64() * v[i].to_f64();
        acc[1] += u[i + 1].to_f64() * v[i + 1].to_f64();
        acc[2] += u[i + 2].to_f64() * v[i + 2].to_f64();
        acc[3] += u[i + 3].to_f64() * v[i + 3].to_f64();
    }
    let mut tail = 0.0;
    for i in chunks * 4..u.len() {
        tail += u[i].to_f64() * v[i].to_f64();
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_sq<A: Scalar>(u: &[A]) -> f64 {
    dot(u, u)
}

/// Cosine from a precomputed dot product and squared norms. Both norms
/// must be positive.
pub(crate) fn cosine_from_parts(dot: f64, norm_sq_u: f64, norm_sq_v: f64) -> Result<f64> {
    clamp_cosine(dot / (norm_sq_u.sqrt() * norm_sq_v.sqrt()))
}

pub(crate) fn clamp_cosine(c: f64) -> Result<f64> {
    if c.is_nan() || c.abs() > 1.0 + COSINE_SLACK {
        return Err(Error::CosineOutOfRange { value: c });
    }
    Ok(c.clamp(-1.0, 1.0))
}

/// `u·v / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine<A: Scalar, B: Scalar>(u: &[A], v: &[B]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::LengthMismatch {
            left: u.len(),
            right: v.len(),
        });
    }
    let (nu, nv) = (norm_sq(u), norm_sq(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroNorm(format!(
            "cosine of vectors with squared norms {nu} and {nv}"
        )));
    }
    cosine_from_parts(dot(u, v), nu, nv)
}

/// The gate, linear-input and output weight vectors of one neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTriple<V = Vec<f32>> {
    pub w_gate: V,
    pub w_in: V,
    pub w_out: V,
}

impl<V: AsRef<[f32]>> WeightTriple<V> {
    pub fn d_model(&self) -> usize {
        self.w_gate.as_ref().len()
    }

    pub fn to_owned(&self) -> WeightTriple<Vec<f32>> {
        WeightTriple {
            w_gate: self.w_gate.as_ref().to_vec(),
            w_in: self.w_in.as_ref().to_vec(),
            w_out: self.w_out.as_ref().to_vec(),
        }
    }

    /// Checks equal lengths and strictly positive norms.
    pub fn validate(&self) -> Result<()> {
        let d = self.d_model();
        for (name, v) in self.named() {
            if v.len() != d {
                return Err(Error::LengthMismatch {
                    left: d,
                    right: v.len(),
                });
            }
            if norm_sq(v) == 0.0 {
                return Err(Error::ZeroNorm(format!("w_{name}")));
            }
        }
        Ok(())
    }

    fn named(&self) -> [(&'static str, &[f32]); 3] {
        [
            ("gate", self.w_gate.as_ref()),
            ("in", self.w_in.as_ref()),
            ("out", self.w_out.as_ref()),
        ]
    }

    /// The three pairwise cosines; fails on zero norms or length mismatch.
    pub fn cosines(&self) -> Result<CosineTriple> {
        self.validate()?;
        triple_cosines(self.w_gate.as_ref(), self.w_in.as_ref(), self.w_out.as_ref())
    }
}

impl WeightTriple<Vec<f32>> {
    /// The triple with `w_in` and `w_out` negated.
    pub fn sign_flipped(&self) -> Self {
        Self {
            w_gate: self.w_gate.clone(),
            w_in: self.w_in.iter().map(|x| -x).collect(),
            w_out: self.w_out.iter().map(|x| -x).collect(),
        }
    }
}

/// Shared by the pointwise and bulk paths so both produce identical bits.
fn triple_cosines(g: &[f32], i: &[f32], o: &[f32]) -> Result<CosineTriple> {
    let (ng, ni, no) = (norm_sq(g), norm_sq(i), norm_sq(o));
    if ng == 0.0 || ni == 0.0 || no == 0.0 {
        return Err(Error::ZeroNorm("neuron weight vector".into()));
    }
    Ok(CosineTriple {
        gate_in: cosine_from_parts(dot(g, i), ng, ni)?,
        gate_out: cosine_from_parts(dot(g, o), ng, no)?,
        in_out: cosine_from_parts(dot(i, o), ni, no)?,
    })
}

/// `(cos(w_gate, w_in), cos(w_gate, w_out), cos(w_in, w_out))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineTriple {
    pub gate_in: f64,
    pub gate_out: f64,
    pub in_out: f64,
}

impl CosineTriple {
    pub fn new(gate_in: f64, gate_out: f64, in_out: f64) -> Result<Self> {
        Ok(Self {
            gate_in: clamp_cosine(gate_in)?,
            gate_out: clamp_cosine(gate_out)?,
            in_out: clamp_cosine(in_out)?,
        })
    }

    /// Determinant of the 3x3 Gram matrix of the unit-normalized vectors.
    pub fn gram_determinant(&self) -> f64 {
        let (a, b, c) = (self.gate_in, self.gate_out, self.in_out);
        1.0 + 2.0 * a * b * c - a * a - b * b - c * c
    }

    /// Whether some three vectors can realize these cosines.
    pub fn is_realizable(&self) -> bool {
        self.gram_determinant() >= -1e-6
    }

    /// Cosines after negating `w_in` and `w_out`.
    pub fn sign_flipped(&self) -> Self {
        Self {
            gate_in: -self.gate_in,
            gate_out: -self.gate_out,
            in_out: self.in_out,
        }
    }
}

/// Per-neuron cosines of one layer. `None` marks a degenerate neuron (a
/// zero-norm weight vector); such neurons are excluded from statistics.
pub fn cosine_triples(layer: &LayerWeights) -> Vec<Option<CosineTriple>> {
    (0..layer.d_mlp())
        .into_par_iter()
        .map(|i| {
            let t = layer.triple(i);
            match triple_cosines(t.w_gate, t.w_in, t.w_out) {
                Ok(c) => Some(c),
                Err(Error::ZeroNorm(_)) => None,
                Err(e) => {
                    log::warn!("neuron {i}: {e}; flagged as degenerate");
                    None
                }
            }
        })
        .collect()
}
