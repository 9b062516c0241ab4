#![allow(dead_code)]

use neuron_io::geometry::WeightTriple;
use neuron_io::simulator::{orthonormal_frame, prototype_triple};
use neuron_io::taxonomy::IoClass;
use neuron_io::weights::{ActivationKind, LayerWeights, Matrix, ModelWeights};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Unit vectors in `d >= 3` dimensions whose pairwise cosines are the given
/// triple: the Cholesky factor of the Gram matrix, rotated into a seeded
/// orthonormal frame.
pub fn triple_with_cosines(c_gi: f64, c_go: f64, c_io: f64, d: usize, seed: u64) -> WeightTriple {
    let b2 = (1.0 - c_gi * c_gi).sqrt();
    let c2 = (c_io - c_gi * c_go) / b2;
    let c3 = (1.0 - c_go * c_go - c2 * c2).max(0.0).sqrt();
    let coords = [[1.0, 0.0, 0.0], [c_gi, b2, 0.0], [c_go, c2, c3]];
    let frame = orthonormal_frame(d, seed).unwrap();
    let embed = |c: [f64; 3]| -> Vec<f32> {
        (0..d)
            .map(|j| (c[0] * frame[0][j] + c[1] * frame[1][j] + c[2] * frame[2][j]) as f32)
            .collect()
    };
    WeightTriple {
        w_gate: embed(coords[0]),
        w_in: embed(coords[1]),
        w_out: embed(coords[2]),
    }
}

pub fn layer_from_triples(triples: &[WeightTriple]) -> LayerWeights {
    let gate: Vec<&[f32]> = triples.iter().map(|t| t.w_gate.as_slice()).collect();
    let input: Vec<&[f32]> = triples.iter().map(|t| t.w_in.as_slice()).collect();
    let out: Vec<&[f32]> = triples.iter().map(|t| t.w_out.as_slice()).collect();
    LayerWeights::new(
        Matrix::from_rows(&gate).unwrap(),
        Matrix::from_rows(&input).unwrap(),
        Matrix::from_rows(&out).unwrap(),
    )
    .unwrap()
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect::<Vec<f32>>();
    Matrix::new(rows, cols, data).unwrap()
}

/// I.i.d. standard-normal weights, with a Gaussian unembedding and
/// embedding when `d_vocab > 0`.
pub fn gaussian_model(n_layers: usize, d_model: usize, d_mlp: usize, d_vocab: usize, seed: u64) -> ModelWeights {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layers = (0..n_layers)
        .map(|_| {
            LayerWeights::new(
                gaussian_matrix(d_mlp, d_model, &mut rng),
                gaussian_matrix(d_mlp, d_model, &mut rng),
                gaussian_matrix(d_mlp, d_model, &mut rng),
            )
            .unwrap()
        })
        .collect();
    let (unembed, embed) = if d_vocab > 0 {
        (
            Some(gaussian_matrix(d_vocab, d_model, &mut rng)),
            Some(gaussian_matrix(d_vocab, d_model, &mut rng)),
        )
    } else {
        (None, None)
    };
    ModelWeights::new("gaussian", ActivationKind::Swish, layers, unembed, embed).unwrap()
}

/// `per_class` prototype neurons of every base class in every layer, in
/// [`IoClass::ALL`] order, with a Gaussian unembedding of `d_vocab` tokens.
pub fn prototype_model(n_layers: usize, per_class: usize, d_model: usize, d_vocab: usize) -> ModelWeights {
    let layers = (0..n_layers)
        .map(|l| {
            let triples: Vec<WeightTriple> = IoClass::ALL
                .iter()
                .flat_map(|&class| {
                    (0..per_class).map(move |k| prototype_triple(class, d_model, (l * 1000 + k) as u64 + 1).unwrap())
                })
                .collect();
            layer_from_triples(&triples)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let unembed = (d_vocab > 0).then(|| gaussian_matrix(d_vocab, d_model, &mut rng));
    ModelWeights::new("prototypes", ActivationKind::Swish, layers, unembed, None).unwrap()
}

pub fn token_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("tok{i}")).collect()
}
