//! Contrastive, hard-negative and uni-modal losses with analytic gradients.
//!
//! All losses take row-normalized embedding matrices (one row per batch
//! element) and scale every inner product by a temperature `tau`. The
//! public functions check shapes, finiteness and unit norms; [`raw`] holds
//! the unchecked kernels used by the finite-difference suite.
//!
//! Gradients are returned in argument order. Summation order is fixed
//! (ascending row, then positive index), so repeated calls are
//! bit-identical.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Rows must have unit norm to within this tolerance.
pub const NORM_TOL: f64 = 1e-9;

/// Below this distance the uni-modal gradient is defined as zero.
pub const UNI_SINGULAR_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub value: f64,
    pub grads: Vec<Matrix>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub cont: f64,
    pub sneg: f64,
    pub uni: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            cont: 0.5,
            sneg: 0.5,
            uni: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(cont: f64, sneg: f64, uni: f64) -> Result<Self> {
        let w = Self { cont, sneg, uni };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.cont, self.sneg, self.uni];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) || ws.iter().all(|w| *w == 0.0) {
            return Err(Error::Config(format!(
                "loss weights must be non-negative with one positive, got {ws:?}"
            )));
        }
        Ok(())
    }
}

/// Image rows, one or more positive text matrices, an optional hard
/// negative matrix and the temperature.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub image: Matrix,
    pub positives: Vec<Matrix>,
    pub negative: Option<Matrix>,
    pub temperature: f64,
}

/// Component values of the weighted objective.
#[derive(Debug, Clone, PartialEq)]
pub struct ClicLoss {
    /// Weighted total; grads are `[image, positives..., negative]` (the
    /// negative gradient is omitted when the batch has no negative).
    pub total: LossOutput,
    pub cont: f64,
    pub sneg: f64,
    pub uni: f64,
}

fn check_matrix(what: &'static str, m: &Matrix, like: &Matrix) -> Result<()> {
    if m.shape() != like.shape() {
        return Err(Error::ShapeMismatch {
            what,
            expected: like.shape(),
            found: m.shape(),
        });
    }
    check_unit(what, m)
}

fn check_unit(what: &'static str, m: &Matrix) -> Result<()> {
    if !m.is_finite() {
        return Err(Error::NonFinite(what));
    }
    for r in 0..m.rows() {
        let n = crate::linalg::norm(m.row(r));
        if (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { what, row: r, norm: n });
        }
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

fn check_batch(img: &Matrix) -> Result<()> {
    if img.rows() == 0 {
        return Err(Error::ShapeMismatch {
            what: "image embeddings",
            expected: (1, img.cols()),
            found: img.shape(),
        });
    }
    check_unit("image embeddings", img)
}

fn finite(out: LossOutput, what: &'static str) -> Result<LossOutput> {
    if !out.value.is_finite() || out.grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    Ok(out)
}

/// Symmetric contrastive loss between matched image and text rows.
pub fn clip_loss(img: &Matrix, txt: &Matrix, tau: f64) -> Result<LossOutput> {
    check_tau(tau)?;
    check_batch(img)?;
    check_matrix("text embeddings", txt, img)?;
    finite(raw::clip(img, txt, tau), "contrastive loss")
}

/// Contrastive loss averaged over several positive caption sets.
pub fn multi_positive_contrastive(img: &Matrix, positives: &[Matrix], tau: f64) -> Result<LossOutput> {
    check_tau(tau)?;
    check_batch(img)?;
    if positives.is_empty() {
        return Err(Error::Config("need at least one positive matrix".into()));
    }
    for p in positives {
        check_matrix("positive embeddings", p, img)?;
    }
    finite(raw::multi_positive(img, positives, tau), "contrastive loss")
}

/// Image-to-text softmax over the batch captions plus every hard negative,
/// with the `1/(2m)` normalization.
pub fn negclip_batch_loss(img: &Matrix, txt: &Matrix, txt_neg: &Matrix, tau: f64) -> Result<LossOutput> {
    check_tau(tau)?;
    check_batch(img)?;
    check_matrix("text embeddings", txt, img)?;
    check_matrix("negative embeddings", txt_neg, img)?;
    finite(raw::negclip(img, txt, txt_neg, tau), "batch-negative loss")
}

/// Text-to-image half of [`clip_loss`] (coefficient `1/(2m)`).
pub fn text_to_image_loss(img: &Matrix, txt: &Matrix, tau: f64) -> Result<LossOutput> {
    check_tau(tau)?;
    check_batch(img)?;
    check_matrix("text embeddings", txt, img)?;
    finite(raw::contrastive(img, txt, tau, 0.0, 0.5), "contrastive loss")
}

/// Two-way softmax of each positive against the example's own negative,
/// averaged over positives and rows.
pub fn single_neg_loss(img: &Matrix, positives: &[Matrix], txt_neg: &Matrix, tau: f64) -> Result<LossOutput> {
    check_tau(tau)?;
    check_batch(img)?;
    if positives.is_empty() {
        return Err(Error::Config("need at least one positive matrix".into()));
    }
    for p in positives {
        check_matrix("positive embeddings", p, img)?;
    }
    check_matrix("negative embeddings", txt_neg, img)?;
    finite(raw::single_neg(img, positives, txt_neg, tau), "hard-negative loss")
}

/// Mean Euclidean distance between matching rows.
pub fn uni_modal_loss(p1: &Matrix, p2: &Matrix) -> Result<LossOutput> {
    check_batch(p1)?;
    check_matrix("shuffled positive embeddings", p2, p1)?;
    finite(raw::uni_modal(p1, p2), "uni-modal loss")
}

/// Weighted sum of the multi-positive contrastive, hard-negative and
/// uni-modal terms. The uni-modal term uses the first two positives.
pub fn clic_total(batch: &EmbeddingBatch, w: &LossWeights) -> Result<ClicLoss> {
    w.validate()?;
    check_tau(batch.temperature)?;
    check_batch(&batch.image)?;
    if batch.positives.is_empty() {
        return Err(Error::Config("need at least one positive matrix".into()));
    }
    for p in &batch.positives {
        check_matrix("positive embeddings", p, &batch.image)?;
    }
    if let Some(n) = &batch.negative {
        check_matrix("negative embeddings", n, &batch.image)?;
    } else if w.sneg > 0.0 {
        return Err(Error::Config("hard-negative weight set but batch has no negative".into()));
    }
    if w.uni > 0.0 && batch.positives.len() < 2 {
        return Err(Error::Config("uni-modal term needs two positives".into()));
    }
    let out = raw::clic_total(&batch.image, &batch.positives, batch.negative.as_ref(), batch.temperature, w);
    finite(out.total.clone(), "weighted loss")?;
    Ok(out)
}

/// Unchecked kernels. Inputs need not be normalized.
pub mod raw {
    use super::*;
    use crate::linalg::{dot, log_sum_exp};

    /// `-(1/m) sum_i [w_it (S_ii - lse_j S_ij) + w_ti (S_ii - lse_j S_ji)]`
    /// with `S = tau * img * txt^T`.
    pub fn contrastive(img: &Matrix, txt: &Matrix, tau: f64, w_it: f64, w_ti: f64) -> LossOutput {
        let m = img.rows();
        let mut s = img.matmul_t(txt);
        s.scale(tau);
        let inv_m = 1.0 / m as f64;
        let mut g = Matrix::zeros(m, m);
        let mut value = 0.0;
        if w_it != 0.0 {
            for i in 0..m {
                let row = s.row(i);
                let lse = log_sum_exp(row.iter().copied());
                value -= w_it * (row[i] - lse);
                for j in 0..m {
                    let p = (row[j] - lse).exp();
                    g.set(i, j, g.get(i, j) + w_it * inv_m * (p - if i == j { 1.0 } else { 0.0 }));
                }
            }
        }
        if w_ti != 0.0 {
            for i in 0..m {
                let col = (0..m).map(|j| s.get(j, i));
                let lse = log_sum_exp(col);
                value -= w_ti * (s.get(i, i) - lse);
                for j in 0..m {
                    let p = (s.get(j, i) - lse).exp();
                    g.set(j, i, g.get(j, i) + w_ti * inv_m * (p - if i == j { 1.0 } else { 0.0 }));
                }
            }
        }
        let mut g_img = g.matmul(txt);
        g_img.scale(tau);
        let mut g_txt = g.transpose().matmul(img);
        g_txt.scale(tau);
        LossOutput {
            value: value * inv_m,
            grads: vec![g_img, g_txt],
        }
    }

    pub fn clip(img: &Matrix, txt: &Matrix, tau: f64) -> LossOutput {
        contrastive(img, txt, tau, 0.5, 0.5)
    }

    /// Mean of [`clip`] over the positive sets (`1/(2Lm)` overall).
    pub fn multi_positive(img: &Matrix, positives: &[Matrix], tau: f64) -> LossOutput {
        let l = positives.len() as f64;
        let mut value = 0.0;
        let mut g_img = Matrix::zeros(img.rows(), img.cols());
        let mut grads = vec![];
        for p in positives {
            let out = clip(img, p, tau);
            value += out.value;
            g_img.add_scaled(&out.grads[0], 1.0 / l);
            let mut gp = out.grads[1].clone();
            gp.scale(1.0 / l);
            grads.push(gp);
        }
        grads.insert(0, g_img);
        LossOutput { value: value / l, grads }
    }

    pub fn negclip(img: &Matrix, txt: &Matrix, neg: &Matrix, tau: f64) -> LossOutput {
        let m = img.rows();
        let mut s = img.matmul_t(txt);
        s.scale(tau);
        let mut n = img.matmul_t(neg);
        n.scale(tau);
        let c = 1.0 / (2.0 * m as f64);
        let mut gs = Matrix::zeros(m, m);
        let mut gn = Matrix::zeros(m, m);
        let mut value = 0.0;
        for i in 0..m {
            let lse = log_sum_exp(s.row(i).iter().chain(n.row(i)).copied());
            value -= s.get(i, i) - lse;
            for j in 0..m {
                let ps = (s.get(i, j) - lse).exp();
                gs.set(i, j, c * (ps - if i == j { 1.0 } else { 0.0 }));
                gn.set(i, j, c * (n.get(i, j) - lse).exp());
            }
        }
        let mut g_img = gs.matmul(txt);
        g_img.add_scaled(&gn.matmul(neg), 1.0);
        g_img.scale(tau);
        let mut g_txt = gs.transpose().matmul(img);
        g_txt.scale(tau);
        let mut g_neg = gn.transpose().matmul(img);
        g_neg.scale(tau);
        LossOutput {
            value: value * c,
            grads: vec![g_img, g_txt, g_neg],
        }
    }

    /// `-log(e^a / (e^a + e^b))`, stabilized.
    fn two_way_nll(a: f64, b: f64) -> f64 {
        let hi = a.max(b);
        hi + ((a - hi).exp() + (b - hi).exp()).ln() - a
    }

    pub fn single_neg(img: &Matrix, positives: &[Matrix], neg: &Matrix, tau: f64) -> LossOutput {
        let (m, d) = img.shape();
        let c = 1.0 / (positives.len() * m) as f64;
        let mut value = 0.0;
        let mut g_img = Matrix::zeros(m, d);
        let mut g_pos: Vec<Matrix> = positives.iter().map(|_| Matrix::zeros(m, d)).collect();
        let mut g_neg = Matrix::zeros(m, d);
        for i in 0..m {
            let u = img.row(i);
            let sn = tau * dot(u, neg.row(i));
            for (l, p) in positives.iter().enumerate() {
                let sp = tau * dot(u, p.row(i));
                value += two_way_nll(sp, sn);
                // d/d(sp) = -(1 - sigma(sp - sn)), d/d(sn) = +(1 - sigma(sp - sn))
                let q = 1.0 / (1.0 + (sp - sn).exp());
                let k = c * tau * q;
                for a in 0..d {
                    g_img.row_mut(i)[a] += k * (neg.get(i, a) - p.get(i, a));
                    g_pos[l].row_mut(i)[a] -= k * u[a];
                    g_neg.row_mut(i)[a] += k * u[a];
                }
            }
        }
        let mut grads = vec![g_img];
        grads.extend(g_pos);
        grads.push(g_neg);
        LossOutput {
            value: value * c,
            grads,
        }
    }

    pub fn uni_modal(p1: &Matrix, p2: &Matrix) -> LossOutput {
        let (m, d) = p1.shape();
        let c = 1.0 / m as f64;
        let mut value = 0.0;
        let mut g1 = Matrix::zeros(m, d);
        let mut g2 = Matrix::zeros(m, d);
        for i in 0..m {
            let diff: Vec<f64> = p1.row(i).iter().zip(p2.row(i)).map(|(a, b)| a - b).collect();
            let dist = crate::linalg::norm(&diff);
            value += dist;
            if dist < UNI_SINGULAR_EPS {
                continue;
            }
            for a in 0..d {
                g1.row_mut(i)[a] = c * diff[a] / dist;
                g2.row_mut(i)[a] = -c * diff[a] / dist;
            }
        }
        LossOutput {
            value: value * c,
            grads: vec![g1, g2],
        }
    }

    /// Unchecked [`super::clic_total`]. Terms with zero weight contribute
    /// neither value nor gradient to the total but are still reported.
    pub fn clic_total(img: &Matrix, positives: &[Matrix], neg: Option<&Matrix>, tau: f64, w: &LossWeights) -> ClicLoss {
        let (m, d) = img.shape();
        let l = positives.len();
        let mut grads: Vec<Matrix> = (0..l + 1 + usize::from(neg.is_some())).map(|_| Matrix::zeros(m, d)).collect();

        let cont = multi_positive(img, positives, tau);
        for (g, c) in grads.iter_mut().zip(&cont.grads) {
            g.add_scaled(c, w.cont);
        }

        let sneg = neg.map(|n| single_neg(img, positives, n, tau));
        if let Some(s) = &sneg {
            for (g, c) in grads.iter_mut().zip(&s.grads) {
                g.add_scaled(c, w.sneg);
            }
        }

        let uni = (l >= 2).then(|| uni_modal(&positives[0], &positives[1]));
        if let Some(u) = &uni {
            grads[1].add_scaled(&u.grads[0], w.uni);
            grads[2].add_scaled(&u.grads[1], w.uni);
        }

        let (sneg_v, uni_v) = (sneg.map_or(0.0, |s| s.value), uni.map_or(0.0, |u| u.value));
        ClicLoss {
            total: LossOutput {
                value: w.cont * cont.value + w.sneg * sneg_v + w.uni * uni_v,
                grads,
            },
            cont: cont.value,
            sneg: sneg_v,
            uni: uni_v,
        }
    }
}
