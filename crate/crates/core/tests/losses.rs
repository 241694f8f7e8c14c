mod common;

use clic_core::losses::{
    clic_total, clip_loss, multi_positive_contrastive, negclip_batch_loss, single_neg_loss, uni_modal_loss,
    EmbeddingBatch, LossWeights,
};
use clic_core::Matrix;
use common::{clic_fixture, oracle, rel, rng, unit_rows};

const TOL: f64 = 1e-12;

fn e(rows: &[[f64; 2]]) -> Matrix {
    Matrix::from_rows(rows)
}

#[test]
fn clip_hand_values() {
    let v = clip_loss(&e(&[[1.0, 0.0]]), &e(&[[0.6, 0.8]]), 1.0).unwrap().value;
    assert!(v.abs() < TOL);
    let id = e(&[[1.0, 0.0], [0.0, 1.0]]);
    let v = clip_loss(&id, &id, 1.0).unwrap().value;
    assert!(rel(v, (1.0 + (-1.0f64).exp()).ln()) < TOL);
    assert!((v - 0.313262).abs() < 1e-6);
}

#[test]
fn negclip_hand_value_and_large_tau_limit() {
    let a = e(&[[1.0, 0.0]]);
    let v = negclip_batch_loss(&a, &a, &a, 1.0).unwrap().value;
    assert!(rel(v, 0.5 * 2f64.ln()) < TOL);

    // negatives orthogonal to every image and text row
    let img = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
    let txt = Matrix::from_rows(&[[0.8, 0.6, 0.0], [0.6, 0.8, 0.0]]);
    let neg = Matrix::from_rows(&[[0.0, 0.0, 1.0], [0.0, 0.0, 1.0]]);
    let tau = 50.0;
    let v = negclip_batch_loss(&img, &txt, &neg, tau).unwrap().value;
    let half = oracle::i2t_half(&img, &txt, tau);
    // both rows see e^40 on the diagonal, e^30 off it and two e^0 negatives
    let direct = 0.5 * ((-10.0f64).exp() + 2.0 * (-40.0f64).exp()).ln_1p();
    // lse - s_ii cancels near 40, so compare absolutely
    assert!((v - direct).abs() < 1e-13, "{v} vs {direct}");
    assert!((v - half).abs() < 1e-6 * half.max(1e-300) + 1e-9, "{v} vs {half}");
}

#[test]
fn single_neg_hand_values() {
    let a = e(&[[1.0, 0.0]]);
    let v = single_neg_loss(&a, std::slice::from_ref(&a), &a, 1.0).unwrap().value;
    assert!(rel(v, 2f64.ln()) < TOL);
    let v = single_neg_loss(&a, std::slice::from_ref(&a), &e(&[[-1.0, 0.0]]), 1.0).unwrap().value;
    assert!(rel(v, (1.0 + (-2.0f64).exp()).ln()) < TOL);
    assert!((v - 0.126928).abs() < 1e-6);
}

#[test]
fn uni_hand_values() {
    let a = e(&[[1.0, 0.0]]);
    let out = uni_modal_loss(&a, &a).unwrap();
    assert_eq!(out.value, 0.0);
    assert!(out.grads.iter().all(|g| g.as_slice().iter().all(|x| *x == 0.0)));
    let v = uni_modal_loss(&a, &e(&[[0.0, 1.0]])).unwrap().value;
    assert!(rel(v, 2f64.sqrt()) < TOL);
}

#[test]
fn every_loss_matches_brute_force() {
    let mut r = rng(11);
    for k in 0..60 {
        let (m, d, tau) = ([1, 2, 5, 7][k % 4], [3, 8, 16][k % 3], [0.5, 1.0, 3.0][k % 3]);
        let img = unit_rows(m, d, &mut r);
        let pos: Vec<Matrix> = (0..4).map(|_| unit_rows(m, d, &mut r)).collect();
        let neg = unit_rows(m, d, &mut r);
        let check = |got: f64, want: f64, what: &str| assert!(rel(got, want) < TOL, "{what} #{k}: {got} vs {want}");
        check(clip_loss(&img, &pos[0], tau).unwrap().value, oracle::clip(&img, &pos[0], tau), "clip");
        check(
            multi_positive_contrastive(&img, &pos, tau).unwrap().value,
            oracle::multi_positive(&img, &pos, tau),
            "multi",
        );
        check(
            negclip_batch_loss(&img, &pos[0], &neg, tau).unwrap().value,
            oracle::negclip(&img, &pos[0], &neg, tau),
            "negclip",
        );
        check(
            single_neg_loss(&img, &pos, &neg, tau).unwrap().value,
            oracle::single_neg(&img, &pos, &neg, tau),
            "single_neg",
        );
        check(uni_modal_loss(&pos[0], &pos[1]).unwrap().value, oracle::uni(&pos[0], &pos[1]), "uni");
        let batch = EmbeddingBatch {
            image: img.clone(),
            positives: pos.clone(),
            negative: Some(neg.clone()),
            temperature: tau,
        };
        let w = LossWeights::default();
        check(
            clic_total(&batch, &w).unwrap().total.value,
            oracle::clic_total(&img, &pos, &neg, tau, (w.cont, w.sneg, w.uni)),
            "clic_total",
        );
    }
}

#[test]
fn golden_weighted_loss() {
    let f = clic_fixture();
    let batch = EmbeddingBatch {
        image: f.image.clone(),
        positives: f.positives.clone(),
        negative: Some(f.negative.clone()),
        temperature: f.tau,
    };
    let w = LossWeights::new(f.weights.0, f.weights.1, f.weights.2).unwrap();
    let out = clic_total(&batch, &w).unwrap();
    assert!(rel(out.cont, f.cont) < TOL, "{} vs {}", out.cont, f.cont);
    assert!(rel(out.sneg, f.sneg) < TOL);
    assert!(rel(out.uni, f.uni) < TOL);
    assert!(rel(out.total.value, f.total) < TOL);
}

#[test]
fn reductions() {
    let mut r = rng(5);
    for k in 0..20 {
        let (m, d, tau) = (1 + k % 6, 4 + k % 5, 0.5 + k as f64 / 4.0);
        let img = unit_rows(m, d, &mut r);
        let p = unit_rows(m, d, &mut r);
        let neg = unit_rows(m, d, &mut r);
        let same = vec![p.clone(); 4];
        let clip = clip_loss(&img, &p, tau).unwrap().value;
        assert!(rel(multi_positive_contrastive(&img, &same, tau).unwrap().value, clip) < TOL);
        let batch = EmbeddingBatch {
            image: img.clone(),
            positives: same.clone(),
            negative: Some(neg.clone()),
            temperature: tau,
        };
        let total = clic_total(&batch, &LossWeights::new(1.0, 0.0, 0.0).unwrap()).unwrap().total.value;
        assert!(rel(total, clip) < TOL);

        let q = unit_rows(m, d, &mut r);
        let batch = EmbeddingBatch {
            positives: vec![p.clone(), q.clone(), p.clone(), q.clone()],
            ..batch
        };
        let uni = clic_total(&batch, &LossWeights::new(0.0, 0.0, 1.0).unwrap()).unwrap().total.value;
        assert!(rel(uni, uni_modal_loss(&p, &q).unwrap().value) < TOL);

        // L = 4 is the mean of four L = 1 calls
        let pos: Vec<Matrix> = (0..4).map(|_| unit_rows(m, d, &mut r)).collect();
        let l4 = single_neg_loss(&img, &pos, &neg, tau).unwrap().value;
        let mean = pos.iter().map(|x| single_neg_loss(&img, std::slice::from_ref(x), &neg, tau).unwrap().value).sum::<f64>() / 4.0;
        assert!(rel(l4, mean) < TOL);
    }
}

#[test]
fn row_permutation_equivariance() {
    let mut r = rng(9);
    let (m, d, tau) = (6, 8, 2.0);
    let img = unit_rows(m, d, &mut r);
    let pos: Vec<Matrix> = (0..4).map(|_| unit_rows(m, d, &mut r)).collect();
    let neg = unit_rows(m, d, &mut r);
    let perm = [3, 0, 5, 1, 4, 2];
    let batch = |img: &Matrix, pos: &[Matrix], neg: &Matrix| EmbeddingBatch {
        image: img.clone(),
        positives: pos.to_vec(),
        negative: Some(neg.clone()),
        temperature: tau,
    };
    let w = LossWeights::default();
    let a = clic_total(&batch(&img, &pos, &neg), &w).unwrap();
    let pp: Vec<Matrix> = pos.iter().map(|p| p.permute_rows(&perm)).collect();
    let b = clic_total(&batch(&img.permute_rows(&perm), &pp, &neg.permute_rows(&perm)), &w).unwrap();
    assert!(rel(b.total.value, a.total.value) < TOL);
    for (ga, gb) in a.total.grads.iter().zip(&b.total.grads) {
        assert!(ga.permute_rows(&perm).max_abs_diff(gb) < TOL);
    }
    let ca = negclip_batch_loss(&img, &pos[0], &neg, tau).unwrap();
    let cb = negclip_batch_loss(&img.permute_rows(&perm), &pp[0], &neg.permute_rows(&perm), tau).unwrap();
    assert!(rel(cb.value, ca.value) < TOL);
    for (ga, gb) in ca.grads.iter().zip(&cb.grads) {
        assert!(ga.permute_rows(&perm).max_abs_diff(gb) < TOL);
    }
}

#[test]
fn hard_negative_loss_grows_with_negative_similarity() {
    let (tau, m) = (3.0, 4);
    let mut r = rng(21);
    let img = unit_rows(m, 2, &mut r);
    let pos = unit_rows(m, 2, &mut r);
    let mut last = f64::NEG_INFINITY;
    // rotate the negative of row 0 toward its image, others fixed
    let base = unit_rows(m, 2, &mut r);
    let (u0, u1) = (img.get(0, 0), img.get(0, 1));
    for step in 0..=20 {
        let angle = std::f64::consts::PI * (1.0 - step as f64 / 20.0);
        let (c, s) = (angle.cos(), angle.sin());
        let mut neg = base.clone();
        neg.set(0, 0, c * u0 - s * u1);
        neg.set(0, 1, s * u0 + c * u1);
        let v = single_neg_loss(&img, std::slice::from_ref(&pos), &neg, tau).unwrap().value;
        assert!(v > last, "step {step}: {v} <= {last}");
        last = v;
    }
}

#[test]
fn repeated_evaluation_is_bit_identical() {
    let mut r = rng(2);
    let img = unit_rows(5, 16, &mut r);
    let pos: Vec<Matrix> = (0..4).map(|_| unit_rows(5, 16, &mut r)).collect();
    let batch = EmbeddingBatch {
        image: img,
        positives: pos,
        negative: Some(unit_rows(5, 16, &mut r)),
        temperature: 4.0,
    };
    let a = clic_total(&batch, &LossWeights::default()).unwrap();
    for _ in 0..5 {
        assert_eq!(clic_total(&batch, &LossWeights::default()).unwrap(), a);
    }
}

#[test]
fn shape_and_norm_errors() {
    let a = e(&[[1.0, 0.0]]);
    let b = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
    assert!(matches!(clip_loss(&a, &b, 1.0), Err(clic_core::Error::ShapeMismatch { .. })));
    assert!(matches!(clip_loss(&a, &e(&[[2.0, 0.0]]), 1.0), Err(clic_core::Error::NotNormalized { .. })));
}
