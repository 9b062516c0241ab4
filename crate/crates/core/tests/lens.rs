mod common;

use neuron_io::geometry::WeightTriple;
use neuron_io::lens::{project_neuron, top_tokens, Basis, Direction, WeightVector};
use neuron_io::weights::{ActivationKind, Matrix, ModelWeights, NeuronId, Vocabulary};
use neuron_io::Error;
use proptest::prelude::*;
use std::f64::consts::FRAC_1_SQRT_2;

fn model_with(unembed: Matrix, embed: Option<Matrix>) -> ModelWeights {
    let d = unembed.cols();
    let mut e1 = vec![0.0f32; d];
    e1[0] = 1.0;
    let layer = common::layer_from_triples(&[WeightTriple {
        w_gate: e1.clone(),
        w_in: e1.clone(),
        w_out: e1,
    }]);
    ModelWeights::new("lens", ActivationKind::Swish, vec![layer], Some(unembed), embed).unwrap()
}

fn vocab(n: usize) -> Vocabulary {
    Vocabulary::new(common::token_names(n)).unwrap()
}

#[test]
fn a_token_vector_ranks_itself_first() {
    let model = common::gaussian_model(1, 16, 4, 50, 5);
    let mut names = common::token_names(50);
    names[17] = "review".into();
    let vocab = Vocabulary::new(names).unwrap();
    let w = model.unembed().unwrap().row(17).to_vec();

    let r = top_tokens(&w, &model, &vocab, 1, Direction::Positive, Basis::Unembed).unwrap();
    assert_eq!(r.entries.len(), 1);
    assert_eq!((r.entries[0].token.as_str(), r.entries[0].id), ("review", 17));
    assert!((r.entries[0].cos - 1.0).abs() < 1e-12);

    let r = top_tokens(&w, &model, &vocab, 5, Direction::Negative, Basis::Unembed).unwrap();
    assert!(r.entries.iter().all(|e| e.id != 17));
    assert!(r.entries.windows(2).all(|p| p[0].cos <= p[1].cos));
    let floor = (0..50)
        .map(|j| {
            let t = model.unembed().unwrap().row(j);
            let dot: f64 = w.iter().zip(t).map(|(&a, &b)| a as f64 * b as f64).sum();
            let n = |v: &[f32]| v.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            dot / (n(&w) * n(t))
        })
        .fold(f64::INFINITY, f64::min);
    assert!((r.entries[0].cos - floor).abs() < 1e-12);
}

#[test]
fn three_token_toy() {
    let h = FRAC_1_SQRT_2 as f32;
    let unembed = Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0], [h, h]]).unwrap();
    let model = model_with(unembed, None);
    let r = top_tokens(&[1.0, 0.0], &model, &vocab(3), 2, Direction::Positive, Basis::Unembed).unwrap();
    let ids: Vec<usize> = r.entries.iter().map(|e| e.id).collect();
    assert_eq!(ids, vec![0, 2]);
    assert_eq!(r.entries[0].cos, 1.0);
    assert!((r.entries[1].cos - FRAC_1_SQRT_2).abs() < 1e-7);
    assert_eq!(r.direction, Direction::Positive);
    assert_eq!(r.basis, Basis::Unembed);
}

#[test]
fn ties_go_to_the_lower_id() {
    let unembed = Matrix::from_rows(&[[0.0f32, 1.0], [1.0, 0.0], [2.0, 0.0], [0.0, -1.0]]).unwrap();
    let model = model_with(unembed, None);
    let r = top_tokens(&[1.0, 0.0], &model, &vocab(4), 4, Direction::Positive, Basis::Unembed).unwrap();
    assert_eq!(r.entries.iter().map(|e| e.id).collect::<Vec<_>>(), vec![1, 2, 0, 3]);
    let r = top_tokens(&[1.0, 0.0], &model, &vocab(4), 4, Direction::Negative, Basis::Unembed).unwrap();
    assert_eq!(r.entries.iter().map(|e| e.id).collect::<Vec<_>>(), vec![0, 3, 1, 2]);
}

#[test]
fn embed_basis_and_missing_basis() {
    let unembed = Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]]).unwrap();
    let embed = Matrix::from_rows(&[[0.0f32, 1.0], [1.0, 0.0]]).unwrap();
    let model = model_with(unembed.clone(), Some(embed));
    let v = vocab(2);
    let u = project_neuron(
        &model,
        &v,
        NeuronId::new(0, 0),
        WeightVector::Out,
        1,
        Direction::Positive,
        Basis::Unembed,
    )
    .unwrap();
    let e = project_neuron(
        &model,
        &v,
        NeuronId::new(0, 0),
        WeightVector::In,
        1,
        Direction::Positive,
        Basis::Embed,
    )
    .unwrap();
    assert_eq!(u.entries[0].id, 0);
    assert_eq!(e.entries[0].id, 1);
    assert_eq!(e.basis, Basis::Embed);

    let no_embed = model_with(unembed, None);
    assert!(matches!(
        top_tokens(&[1.0, 0.0], &no_embed, &v, 1, Direction::Positive, Basis::Embed),
        Err(Error::Unavailable(_))
    ));
    assert!(project_neuron(
        &no_embed,
        &v,
        NeuronId::new(3, 0),
        WeightVector::Out,
        1,
        Direction::Positive,
        Basis::Unembed
    )
    .is_err());
}

#[test]
fn k_and_vocabulary_are_validated() {
    let model = model_with(Matrix::from_rows(&[[1.0f32, 0.0], [0.0, 1.0]]).unwrap(), None);
    for k in [0, 3] {
        assert!(matches!(
            top_tokens(&[1.0, 0.0], &model, &vocab(2), k, Direction::Positive, Basis::Unembed),
            Err(Error::InvalidParameter(_))
        ));
    }
    assert!(matches!(
        top_tokens(&[1.0, 0.0], &model, &vocab(3), 1, Direction::Positive, Basis::Unembed),
        Err(Error::VocabMismatch { vocab: 3, unembed: 2 })
    ));
    assert!(top_tokens(&[0.0, 0.0], &model, &vocab(2), 1, Direction::Positive, Basis::Unembed).is_err());
    assert!("sideways".parse::<Direction>().is_err());
    assert_eq!("embed".parse::<Basis>().unwrap(), Basis::Embed);
}

#[test]
fn projection_json_shape() {
    let model = common::gaussian_model(2, 8, 3, 20, 6);
    let p = project_neuron(
        &model,
        &vocab(20),
        NeuronId::new(1, 2),
        WeightVector::Gate,
        3,
        Direction::Negative,
        Basis::Unembed,
    )
    .unwrap();
    let json = serde_json::to_value(&p).unwrap();
    assert_eq!(json["neuron"], "1.2");
    assert_eq!(json["vector"], "gate");
    assert_eq!(json["direction"], "negative");
    assert_eq!(json["entries"].as_array().unwrap().len(), 3);
    assert_eq!(serde_json::from_value::<neuron_io::lens::Projection>(json).unwrap(), p);
}

fn fixture() -> (ModelWeights, Vocabulary) {
    (common::gaussian_model(1, 12, 1, 40, 8), vocab(40))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn negative_of_w_is_positive_of_minus_w(w in prop::collection::vec(-2.0f32..2.0, 12), k in 1usize..=40) {
        prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
        let (model, vocab) = fixture();
        let minus: Vec<f32> = w.iter().map(|x| -x).collect();
        let neg = top_tokens(&w, &model, &vocab, k, Direction::Negative, Basis::Unembed).unwrap();
        let pos = top_tokens(&minus, &model, &vocab, k, Direction::Positive, Basis::Unembed).unwrap();
        prop_assert_eq!(neg.entries.len(), k);
        for (a, b) in neg.entries.iter().zip(&pos.entries) {
            prop_assert_eq!(a.id, b.id);
            prop_assert_eq!(&a.token, &b.token);
            prop_assert_eq!(a.cos, -b.cos);
        }
    }

    #[test]
    fn rankings_ignore_positive_scale(w in prop::collection::vec(-2.0f32..2.0, 12), scale in 0.01f32..100.0) {
        prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
        let (model, vocab) = fixture();
        let scaled: Vec<f32> = w.iter().map(|x| x * scale).collect();
        for direction in [Direction::Positive, Direction::Negative] {
            let a = top_tokens(&w, &model, &vocab, 40, direction, Basis::Unembed).unwrap();
            let b = top_tokens(&scaled, &model, &vocab, 40, direction, Basis::Unembed).unwrap();
            for (x, y) in a.entries.iter().zip(&b.entries) {
                prop_assert!((x.cos - y.cos).abs() < 1e-5);
            }
            // same order up to near-ties introduced by f32 rounding of the scaled vector
            for (x, y) in a.entries.iter().zip(&b.entries) {
                if x.id != y.id {
                    let cx = a.entries.iter().find(|e| e.id == y.id).unwrap().cos;
                    prop_assert!((cx - x.cos).abs() < 1e-5);
                }
            }
        }
    }

    #[test]
    fn rankings_are_sorted_with_length_k(w in prop::collection::vec(-2.0f32..2.0, 12), k in 1usize..=40) {
        prop_assume!(w.iter().any(|x| x.abs() > 1e-3));
        let (model, vocab) = fixture();
        let pos = top_tokens(&w, &model, &vocab, k, Direction::Positive, Basis::Unembed).unwrap();
        let neg = top_tokens(&w, &model, &vocab, k, Direction::Negative, Basis::Unembed).unwrap();
        prop_assert_eq!(pos.entries.len(), k);
        prop_assert!(pos.entries.windows(2).all(|p| p[0].cos >= p[1].cos));
        prop_assert!(neg.entries.windows(2).all(|p| p[0].cos <= p[1].cos));
        prop_assert!(pos.entries.iter().chain(&neg.entries).all(|e| (-1.0..=1.0).contains(&e.cos)));
    }
}
