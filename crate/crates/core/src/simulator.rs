//! Single gated neurons executed on synthetic normalized residual vectors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, WeightTriple};
use crate::taxonomy::IoClass;
use crate::weights::ActivationKind;

/// `x * sigmoid(x)` (Swish with beta = 1, i.e. SiLU).
pub fn swish(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

/// `x * Phi(x)` with the exact error-function form of the normal CDF.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2))
}

pub fn activate(kind: ActivationKind, x: f64) -> f64 {
    match kind {
        ActivationKind::Swish => swish(x),
        ActivationKind::Gelu => gelu(x),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedNeuron<V = Vec<f32>> {
    triple: WeightTriple<V>,
    kind: ActivationKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronOutput {
    /// `Act(w_gate · x) * (w_in · x)`.
    pub activation: f64,
    /// `activation * w_out`, the update added to the residual stream.
    pub delta: Vec<f64>,
}

impl<V: AsRef<[f32]>> GatedNeuron<V> {
    pub fn new(triple: WeightTriple<V>, kind: ActivationKind) -> Result<Self> {
        triple.validate()?;
        Ok(Self { triple, kind })
    }

    pub fn triple(&self) -> &WeightTriple<V> {
        &self.triple
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn activation(&self, x_norm: &[f64]) -> Result<f64> {
        let d = self.triple.d_model();
        if x_norm.len() != d {
            return Err(Error::LengthMismatch {
                left: d,
                right: x_norm.len(),
            });
        }
        let x_gate = dot(self.triple.w_gate.as_ref(), x_norm);
        let x_in = dot(self.triple.w_in.as_ref(), x_norm);
        Ok(activate(self.kind, x_gate) * x_in)
    }

    pub fn output(&self, x_norm: &[f64]) -> Result<NeuronOutput> {
        let activation = self.activation(x_norm)?;
        let delta = self
            .triple
            .w_out
            .as_ref()
            .iter()
            .map(|&w| activation * w as f64)
            .collect();
        Ok(NeuronOutput { activation, delta })
    }
}

pub fn neuron_output<V: AsRef<[f32]>>(n: &GatedNeuron<V>, x_norm: &[f64]) -> Result<NeuronOutput> {
    n.output(x_norm)
}

fn unit_gaussian(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Removes the components along `basis` (orthonormal) and renormalizes.
fn orthonormalize(mut v: Vec<f64>, basis: &[&[f64]]) -> Option<Vec<f64>> {
    // two passes of Gram-Schmidt to keep the residual overlap at rounding level
    for _ in 0..2 {
        for b in basis {
            let p: f64 = v.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b.iter()).for_each(|(x, y)| *x -= p * y);
        }
    }
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 1e-6).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Deterministic orthonormal vectors `u`, `v`, `w` in dimension `d >= 3`.
pub fn orthonormal_frame(d: usize, seed: u64) -> Result<[Vec<f64>; 3]> {
    if d < 3 {
        return Err(Error::InvalidParameter(format!(
            "prototype dimension must be at least 3, got {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = unit_gaussian(&mut rng, d);
    let v = loop {
        if let Some(v) = orthonormalize(unit_gaussian(&mut rng, d), &[&u]) {
            break v;
        }
    };
    let w = loop {
        if let Some(w) = orthonormalize(unit_gaussian(&mut rng, d), &[&u, &v]) {
            break w;
        }
    };
    Ok([u, v, w])
}

/// Unit weight vectors realizing the prototypical geometry of `class`,
/// with `u`, `v` (and `w`) drawn from `seed`:
///
/// | class                  | w_gate | w_in | w_out |
/// |------------------------|--------|------|-------|
/// | enrichment             | u      | u    | u     |
/// | depletion              | u      | u    | -u    |
/// | conditional enrichment | v      | u    | u     |
/// | conditional depletion  | v      | u    | -u    |
/// | proportional change    | u      | v    | u     |
/// | orthogonal output      | u      | v    | w     |
pub fn prototype_triple(class: IoClass, d: usize, seed: u64) -> Result<WeightTriple> {
    let [u, v, w] = orthonormal_frame(d, seed)?;
    let f = |x: &[f64]| -> Vec<f32> { x.iter().map(|&c| c as f32).collect() };
    let neg = |x: &[f64]| -> Vec<f32> { x.iter().map(|&c| -c as f32).collect() };
    let (w_gate, w_in, w_out) = match class {
        IoClass::Enrichment => (f(&u), f(&u), f(&u)),
        IoClass::Depletion => (f(&u), f(&u), neg(&u)),
        IoClass::ConditionalEnrichment => (f(&v), f(&u), f(&u)),
        IoClass::ConditionalDepletion => (f(&v), f(&u), neg(&u)),
        IoClass::ProportionalChange => (f(&u), f(&v), f(&u)),
        IoClass::OrthogonalOutput => (f(&u), f(&v), f(&w)),
    };
    Ok(WeightTriple { w_gate, w_in, w_out })
}

/// Neuron specification inside a simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScenarioNeuron {
    Vectors {
        gate: Vec<f32>,
        #[serde(rename = "in")]
        input: Vec<f32>,
        out: Vec<f32>,
    },
    Prototype {
        prototype: IoClass,
        dim: usize,
        #[serde(default)]
        seed: u64,
    },
}

/// JSON scenario for the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub neuron: ScenarioNeuron,
    #[serde(default)]
    pub activation: ActivationKind,
    pub inputs: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub activation_kind: ActivationKind,
    pub w_gate: Vec<f32>,
    pub w_in: Vec<f32>,
    pub w_out: Vec<f32>,
    pub outputs: Vec<NeuronOutput>,
}

impl Scenario {
    pub fn neuron(&self) -> Result<GatedNeuron> {
        let triple = match &self.neuron {
            ScenarioNeuron::Vectors { gate, input, out } => WeightTriple {
                w_gate: gate.clone(),
                w_in: input.clone(),
                w_out: out.clone(),
            },
            ScenarioNeuron::Prototype { prototype, dim, seed } => prototype_triple(*prototype, *dim, *seed)?,
        };
        GatedNeuron::new(triple, self.activation)
    }

    pub fn run(&self) -> Result<ScenarioResult> {
        let neuron = self.neuron()?;
        let outputs = self
            .inputs
            .iter()
            .map(|x| neuron.output(x))
            .collect::<Result<Vec<_>>>()?;
        let t = neuron.triple();
        Ok(ScenarioResult {
            activation_kind: self.activation,
            w_gate: t.w_gate.clone(),
            w_in: t.w_in.clone(),
            w_out: t.w_out.clone(),
            outputs,
        })
    }
}
