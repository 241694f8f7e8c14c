//! Central finite-difference checks for every loss and for the full
//! encoder-plus-loss composition.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::Result;
use crate::exec::Exec;
use crate::linalg::{normalize, Matrix};
use crate::losses::{raw, LossOutput, LossWeights};
use crate::rng::{child_rng, Rng, Stream};
use crate::train::encoder::{image_backward, image_forward, text_backward, text_forward};

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOL: f64 = 1e-6;
/// Denominator floor of the relative error, for gradients that vanish.
pub const REL_FLOOR: f64 = 1e-8;

/// Numerical gradient of `f` at `inputs` by central differences.
pub fn central_difference(f: &dyn Fn(&[Matrix]) -> f64, inputs: &[Matrix], h: f64) -> Vec<Matrix> {
    let mut work = inputs.to_vec();
    let mut grads = Vec::with_capacity(inputs.len());
    for a in 0..inputs.len() {
        let mut g = Matrix::zeros(inputs[a].rows(), inputs[a].cols());
        for k in 0..inputs[a].as_slice().len() {
            let x = inputs[a].as_slice()[k];
            work[a].as_mut_slice()[k] = x + h;
            let fp = f(&work);
            work[a].as_mut_slice()[k] = x - h;
            let fm = f(&work);
            work[a].as_mut_slice()[k] = x;
            g.as_mut_slice()[k] = (fp - fm) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// `|a - n| / max(|a|, |n|, REL_FLOOR)` over all matrices flattened into
/// one vector.
pub fn relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for (a, n) in analytic.iter().zip(numeric) {
        for (x, y) in a.as_slice().iter().zip(n.as_slice()) {
            diff += (x - y) * (x - y);
            na += x * x;
            nn += y * y;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub instance: usize,
    pub m: usize,
    pub d: usize,
    pub rel_err: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.rel_err < FD_TOL
    }
}

pub const CHECKS: [&str; 9] = [
    "clip_loss",
    "multi_positive_contrastive",
    "negclip_batch_loss",
    "text_to_image_loss",
    "single_neg_loss_l1",
    "single_neg_loss_l4",
    "uni_modal_loss",
    "clic_total",
    "encoder_end_to_end",
];

fn unit_rows(m: usize, d: usize, rng: &mut Rng) -> Matrix {
    let mut out = Matrix::zeros(m, d);
    for r in 0..m {
        let row = out.row_mut(r);
        row.iter_mut().for_each(|x| *x = StandardNormal.sample(rng));
        normalize(row);
    }
    out
}

fn gaussian(m: usize, d: usize, sigma: f64, rng: &mut Rng) -> Matrix {
    let data = (0..m * d)
        .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
        .collect();
    Matrix::from_vec(m, d, data).expect("sized")
}

/// Shape and temperature of instance `k`; cycles through every
/// `d in {4, 8, 16}`, `m in {1, 2, 5}` combination.
pub fn instance_shape(k: usize) -> (usize, usize, f64) {
    let d = [4, 8, 16][k % 3];
    let m = [1, 2, 5][(k / 3) % 3];
    let tau = [1.0, 2.5, 5.0][(k / 9) % 3];
    (m, d, tau)
}

fn check_loss(name: &'static str, k: usize, m: usize, d: usize, inputs: Vec<Matrix>, f: impl Fn(&[Matrix]) -> LossOutput) -> CheckResult {
    let analytic = f(&inputs).grads;
    let numeric = central_difference(&|x| f(x).value, &inputs, FD_STEP);
    CheckResult {
        name,
        instance: k,
        m,
        d,
        rel_err: relative_error(&analytic, &numeric),
    }
}

/// Runs check `name` on instance `k` drawn from `seed`.
pub fn run_check(name: &'static str, k: usize, seed: u64) -> Result<CheckResult> {
    let idx = CHECKS.iter().position(|c| *c == name).expect("known check") as u64;
    let mut rng = child_rng(seed, Stream::GradCheck, &[idx, k as u64]);
    let (m, d, tau) = instance_shape(k);
    let u = |n: usize, rng: &mut Rng| (0..n).map(|_| unit_rows(m, d, rng)).collect::<Vec<_>>();
    let w = LossWeights::default();
    Ok(match name {
        "clip_loss" => check_loss(name, k, m, d, u(2, &mut rng), |x| raw::clip(&x[0], &x[1], tau)),
        "multi_positive_contrastive" => {
            check_loss(name, k, m, d, u(5, &mut rng), |x| raw::multi_positive(&x[0], &x[1..], tau))
        }
        "negclip_batch_loss" => check_loss(name, k, m, d, u(3, &mut rng), |x| raw::negclip(&x[0], &x[1], &x[2], tau)),
        "text_to_image_loss" => {
            check_loss(name, k, m, d, u(2, &mut rng), |x| raw::contrastive(&x[0], &x[1], tau, 0.0, 0.5))
        }
        "single_neg_loss_l1" => {
            check_loss(name, k, m, d, u(3, &mut rng), |x| raw::single_neg(&x[0], &x[1..2], &x[2], tau))
        }
        "single_neg_loss_l4" => {
            check_loss(name, k, m, d, u(6, &mut rng), |x| raw::single_neg(&x[0], &x[1..5], &x[5], tau))
        }
        "uni_modal_loss" => check_loss(name, k, m, d, u(2, &mut rng), |x| raw::uni_modal(&x[0], &x[1])),
        "clic_total" => check_loss(name, k, m, d, u(6, &mut rng), |x| {
            raw::clic_total(&x[0], &x[1..5], Some(&x[5]), tau, &w).total
        }),
        "encoder_end_to_end" => end_to_end(k, m, d, tau, &mut rng)?,
        _ => unreachable!(),
    })
}

/// Gradient of the weighted objective w.r.t. both encoder weight matrices.
fn end_to_end(k: usize, m: usize, d: usize, tau: f64, rng: &mut Rng) -> Result<CheckResult> {
    let (vocab, feats, n_texts) = (12, 6, 5);
    let ids: Vec<Vec<Vec<usize>>> = (0..n_texts)
        .map(|_| {
            (0..m)
                .map(|_| (0..rng.random_range(1..5)).map(|_| rng.random_range(0..vocab)).collect())
                .collect()
        })
        .collect();
    // two feature blocks per image, as for a concatenated pair
    let images: Vec<Vec<f64>> = (0..m).map(|_| gaussian(1, 2 * feats, 1.0, rng).into_vec()).collect();
    let w = gaussian(vocab, d, 1.0 / (d as f64).sqrt(), rng);
    let v = gaussian(feats, d, 1.0 / (d as f64).sqrt(), rng);
    let weights = LossWeights::default();

    let objective = |x: &[Matrix]| -> Result<LossOutput> {
        let img: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
        let ie = image_forward(&x[1], &img, Exec::Serial)?;
        let te = ids
            .iter()
            .map(|g| text_forward(&x[0], g, Exec::Serial))
            .collect::<Result<Vec<_>>>()?;
        let pos: Vec<Matrix> = te[..4].iter().map(|e| e.emb.clone()).collect();
        let out = raw::clic_total(&ie.emb, &pos, Some(&te[4].emb), tau, &weights).total;
        let mut gw = Matrix::zeros(x[0].rows(), x[0].cols());
        for (j, (g, e)) in ids.iter().zip(&te).enumerate() {
            text_backward(g, e, &out.grads[j + 1], &mut gw);
        }
        let mut gv = Matrix::zeros(x[1].rows(), x[1].cols());
        image_backward(&img, &ie, &out.grads[0], &mut gv);
        Ok(LossOutput {
            value: out.value,
            grads: vec![gw, gv],
        })
    };
    let inputs = vec![w, v];
    let analytic = objective(&inputs)?.grads;
    let numeric = central_difference(&|x| objective(x).map_or(f64::NAN, |o| o.value), &inputs, FD_STEP);
    Ok(CheckResult {
        name: "encoder_end_to_end",
        instance: k,
        m,
        d,
        rel_err: relative_error(&analytic, &numeric),
    })
}

/// `per_check` instances of every check.
pub fn run_suite(per_check: usize, seed: u64, exec: Exec) -> Result<Vec<CheckResult>> {
    let jobs: Vec<(&'static str, usize)> = CHECKS.iter().flat_map(|&c| (0..per_check).map(move |k| (c, k))).collect();
    exec.map_slice(&jobs, |&(c, k)| run_check(c, k, seed)).into_iter().collect()
}
