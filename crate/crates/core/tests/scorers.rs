mod common;

use clic_core::eval::{
    recall_at_k, score_embeddings, sugarcrepe_itt, sugarcrepepp_itt, sugarcrepepp_tot, winoground_scores, EvalQuadruple,
    WinoGroundItem,
};
use clic_core::train::{make_toy_world, Category, WorldConfig};
use clic_core::{eval::evaluate_suite, Error, Exec, Matrix};
use common::{random_sc_pp_itt, recall_oracle_mismatches, scorer_invariant_failures};

/// Unit vectors in 3-d whose inner products with `e1` are the given sims.
fn with_sims(sims: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let img = vec![1.0, 0.0, 0.0];
    let vs = sims.iter().map(|&s| vec![s, (1.0 - s * s).sqrt(), 0.0]).collect();
    (img, vs)
}

fn quad(sims: [f64; 3]) -> EvalQuadruple {
    let (img, v) = with_sims(&sims);
    EvalQuadruple::new(img, v[0].clone(), v[1].clone(), v[2].clone()).unwrap()
}

#[test]
fn sugarcrepe_examples() {
    assert!(sugarcrepe_itt(&quad([0.8, 0.0, 0.5])));
    assert!(!sugarcrepe_itt(&quad([0.5, 0.0, 0.5])));
    assert!(!sugarcrepe_itt(&quad([0.4, 0.0, 0.6])));
    assert!(sugarcrepepp_itt(&quad([0.8, 0.7, 0.5])));
    assert!(!sugarcrepepp_itt(&quad([0.8, 0.4, 0.5])));
    assert!(!sugarcrepepp_itt(&quad([0.4, 0.7, 0.5])));
}

#[test]
fn tot_examples() {
    let e = |k: usize| (0..3).map(|i| f64::from(u8::from(i == k))).collect::<Vec<f64>>();
    let q = EvalQuadruple::new(e(0), e(1), e(1), e(2)).unwrap();
    assert!(sugarcrepepp_tot(&q));
    let q = EvalQuadruple::new(e(0), e(1), e(2), e(2)).unwrap();
    assert!(!sugarcrepepp_tot(&q));
}

#[test]
fn winoground_examples() {
    let e = |k: usize| (0..2).map(|i| f64::from(u8::from(i == k))).collect::<Vec<f64>>();
    let s = winoground_scores(&WinoGroundItem::new(e(0), e(1), e(0), e(1)).unwrap());
    assert!(s.text && s.image && s.group);
    let s = winoground_scores(&WinoGroundItem::new(e(0), e(0), e(0), e(0)).unwrap());
    assert!(!s.text && !s.image && !s.group);
    let s = winoground_scores(&WinoGroundItem::new(e(1), e(0), e(0), e(1)).unwrap());
    assert!(!s.text && !s.image && !s.group);
}

#[test]
fn recall_examples_and_errors() {
    let id = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    assert_eq!(recall_at_k(&id, &[0, 1, 2], 1).unwrap(), 1.0);
    assert_eq!(recall_at_k(&id, &[2, 1, 0], 1).unwrap(), 1.0 / 3.0);
    let anti = Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]]);
    assert_eq!(recall_at_k(&anti, &[0, 2, 1], 1).unwrap(), 0.0);
    assert!(matches!(recall_at_k(&id, &[0, 1, 2], 0), Err(Error::KOutOfRange { .. })));
    assert!(matches!(recall_at_k(&id, &[0, 1, 2], 4), Err(Error::KOutOfRange { .. })));
}

#[test]
fn recall_matches_full_sort() {
    assert_eq!(recall_oracle_mismatches(50, 1), 0);
}

#[test]
fn randomized_invariants() {
    let fails = scorer_invariant_failures(500, 2);
    assert!(fails.is_empty(), "{fails:#?}");
}

#[test]
fn random_encoder_scores_a_third() {
    // the negative is the smallest of three exchangeable scores
    let acc = random_sc_pp_itt(10_000, 16, 3);
    assert!((acc - 1.0 / 3.0).abs() < 0.05, "{acc}");
}

#[test]
fn empty_suite_is_an_error() {
    assert!(matches!(score_embeddings(&[], &[], None), Err(Error::EmptySuite)));
    let (cats, ..) = score_embeddings(&[(Category::SwapAtt, quad([0.8, 0.7, 0.5]))], &[], None).unwrap();
    assert_eq!(cats["swap-att"].pp_itt, 1.0);
}

#[test]
fn oracle_encoders_are_perfect_without_noise() {
    let world = make_toy_world(&WorldConfig {
        noise_sigma: 0.0,
        n_scenes: 200,
        eval_scenes: 60,
        ..WorldConfig::default()
    })
    .unwrap();
    let (t, i) = world.oracle_encoders();
    let r = evaluate_suite(&t, &i, &world.eval, "oracle", 0, Exec::Parallel).unwrap();
    for c in Category::ALL {
        assert_eq!(r.categories[c.as_str()].itt, 1.0, "{}", c.as_str());
        assert_eq!(r.categories[c.as_str()].pp_itt, 1.0, "{}", c.as_str());
    }
    assert_eq!(r.retrieval.i2t_r1, 1.0);
}
