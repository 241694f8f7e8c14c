//! Benchmark scorers over embeddings and the toy evaluation report.
//!
//! Every comparison is strict, so ties count as failures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, norm, Matrix};
use crate::losses::NORM_TOL;
use crate::train::world::{Category, EvalSet};
use crate::train::{ImageEncoder, TextEncoder};

fn check_unit(what: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite(what));
    }
    let n = norm(v);
    if (n - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { what, row: 0, norm: n });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalQuadruple {
    pub image: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub n: Vec<f64>,
}

impl EvalQuadruple {
    pub fn new(image: Vec<f64>, p1: Vec<f64>, p2: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        for (w, v) in [("image", &image), ("p1", &p1), ("p2", &p2), ("negative", &n)] {
            check_unit(w, v)?;
            if v.len() != image.len() {
                return Err(Error::DimensionMismatch {
                    left: image.len(),
                    right: v.len(),
                });
            }
        }
        Ok(Self { image, p1, p2, n })
    }
}

/// Image prefers `p1` over the negative.
pub fn sugarcrepe_itt(q: &EvalQuadruple) -> bool {
    dot(&q.image, &q.p1) > dot(&q.image, &q.n)
}

/// Image prefers both positives over the negative.
pub fn sugarcrepepp_itt(q: &EvalQuadruple) -> bool {
    let sn = dot(&q.image, &q.n);
    dot(&q.image, &q.p1) > sn && dot(&q.image, &q.p2) > sn
}

/// The two positives are closer to each other than either is to the
/// negative.
pub fn sugarcrepepp_tot(q: &EvalQuadruple) -> bool {
    let pp = dot(&q.p1, &q.p2);
    pp > dot(&q.p1, &q.n) && pp > dot(&q.p2, &q.n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WinoGroundItem {
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
    pub i0: Vec<f64>,
    pub i1: Vec<f64>,
}

impl WinoGroundItem {
    pub fn new(c0: Vec<f64>, c1: Vec<f64>, i0: Vec<f64>, i1: Vec<f64>) -> Result<Self> {
        for (w, v) in [("c0", &c0), ("c1", &c1), ("i0", &i0), ("i1", &i1)] {
            check_unit(w, v)?;
            if v.len() != c0.len() {
                return Err(Error::DimensionMismatch {
                    left: c0.len(),
                    right: v.len(),
                });
            }
        }
        Ok(Self { c0, c1, i0, i1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WinoScores {
    pub text: bool,
    pub image: bool,
    pub group: bool,
}

pub fn winoground_scores(w: &WinoGroundItem) -> WinoScores {
    let s = |c: &[f64], i: &[f64]| dot(c, i);
    let text = s(&w.c0, &w.i0) > s(&w.c1, &w.i0) && s(&w.c1, &w.i1) > s(&w.c0, &w.i1);
    let image = s(&w.c0, &w.i0) > s(&w.c0, &w.i1) && s(&w.c1, &w.i1) > s(&w.c1, &w.i0);
    WinoScores {
        text,
        image,
        group: text && image,
    }
}

/// Fraction of rows whose gold column is among the `k` best. Ties go to
/// the lower column index.
pub fn recall_at_k(sim: &Matrix, gold: &[usize], k: usize) -> Result<f64> {
    let (rows, cols) = sim.shape();
    if k == 0 || k > cols {
        return Err(Error::KOutOfRange { k, max: cols });
    }
    if gold.len() != rows {
        return Err(Error::ShapeMismatch {
            what: "gold indices",
            expected: (rows, 1),
            found: (gold.len(), 1),
        });
    }
    if rows == 0 {
        return Err(Error::EmptySuite);
    }
    let mut hits = 0usize;
    for (r, &g) in gold.iter().enumerate() {
        if g >= cols {
            return Err(Error::KOutOfRange { k: g, max: cols });
        }
        let row = sim.row(r);
        let sg = row[g];
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(j, &s)| s > sg || (s == sg && j < g))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / rows as f64)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryScores {
    pub count: usize,
    pub itt_correct: usize,
    pub pp_itt_correct: usize,
    pub pp_tot_correct: usize,
    pub itt: f64,
    pub pp_itt: f64,
    pub pp_tot: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub itt: f64,
    pub pp_itt: f64,
    pub pp_tot: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WinoSummary {
    pub count: usize,
    pub text: f64,
    pub image: f64,
    pub group: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RetrievalSummary {
    pub count: usize,
    pub i2t_r1: f64,
    pub i2t_r5: f64,
    pub t2i_r1: f64,
    pub t2i_r5: f64,
}

/// Scoring rules that are conventions rather than fixed definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionFlags {
    pub tot_rule: String,
    pub winoground_rule: String,
    pub ties: String,
}

impl Default for DecisionFlags {
    fn default() -> Self {
        Self {
            tot_rule: "s(p1,p2) > s(p1,n) and s(p1,p2) > s(p2,n)".into(),
            winoground_rule: "text: c0/c1 ranked per image; image: i0/i1 ranked per caption; group: both".into(),
            ties: "fail".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub config_hash: String,
    pub seed: u64,
    pub categories: BTreeMap<String, CategoryScores>,
    /// Mean over categories.
    pub average_equal: Averages,
    /// Pooled over all quadruples.
    pub average_weighted: Averages,
    pub winoground: WinoSummary,
    pub retrieval: RetrievalSummary,
    pub decisions: DecisionFlags,
}

fn frac(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Scores quadruples grouped by category, WinoGround items and a
/// retrieval similarity matrix (gold on the diagonal).
pub fn score_embeddings(
    quads: &[(Category, EvalQuadruple)],
    wino: &[WinoGroundItem],
    retrieval: Option<&Matrix>,
) -> Result<(BTreeMap<String, CategoryScores>, Averages, Averages, WinoSummary, RetrievalSummary)> {
    if quads.is_empty() {
        return Err(Error::EmptySuite);
    }
    let mut cats: BTreeMap<String, CategoryScores> = BTreeMap::new();
    for (c, q) in quads {
        let e = cats.entry(c.as_str().to_string()).or_default();
        e.count += 1;
        e.itt_correct += usize::from(sugarcrepe_itt(q));
        e.pp_itt_correct += usize::from(sugarcrepepp_itt(q));
        e.pp_tot_correct += usize::from(sugarcrepepp_tot(q));
    }
    let (mut eq, mut pooled) = (Averages::default(), (0usize, 0usize, 0usize, 0usize));
    for s in cats.values_mut() {
        s.itt = frac(s.itt_correct, s.count);
        s.pp_itt = frac(s.pp_itt_correct, s.count);
        s.pp_tot = frac(s.pp_tot_correct, s.count);
        eq.itt += s.itt;
        eq.pp_itt += s.pp_itt;
        eq.pp_tot += s.pp_tot;
        pooled.0 += s.count;
        pooled.1 += s.itt_correct;
        pooled.2 += s.pp_itt_correct;
        pooled.3 += s.pp_tot_correct;
    }
    let k = cats.len() as f64;
    eq.itt /= k;
    eq.pp_itt /= k;
    eq.pp_tot /= k;
    let weighted = Averages {
        itt: frac(pooled.1, pooled.0),
        pp_itt: frac(pooled.2, pooled.0),
        pp_tot: frac(pooled.3, pooled.0),
    };

    let mut ws = WinoSummary {
        count: wino.len(),
        ..Default::default()
    };
    let (mut t, mut i, mut g) = (0, 0, 0);
    for w in wino {
        let s = winoground_scores(w);
        t += usize::from(s.text);
        i += usize::from(s.image);
        g += usize::from(s.group);
    }
    ws.text = frac(t, wino.len());
    ws.image = frac(i, wino.len());
    ws.group = frac(g, wino.len());

    let mut rs = RetrievalSummary::default();
    if let Some(sim) = retrieval {
        let n = sim.rows();
        if n > 0 {
            let gold: Vec<usize> = (0..n).collect();
            let k5 = 5.min(sim.cols());
            let st = sim.transpose();
            rs = RetrievalSummary {
                count: n,
                i2t_r1: recall_at_k(sim, &gold, 1)?,
                i2t_r5: recall_at_k(sim, &gold, k5)?,
                t2i_r1: recall_at_k(&st, &gold, 1)?,
                t2i_r5: recall_at_k(&st, &gold, k5.min(st.cols()))?,
            };
        }
    }
    Ok((cats, eq, weighted, ws, rs))
}

/// Encodes a toy evaluation suite and scores it.
pub fn evaluate_suite(
    text: &TextEncoder,
    image: &ImageEncoder,
    suite: &EvalSet,
    config_hash: &str,
    seed: u64,
    exec: Exec,
) -> Result<Report> {
    if suite.quadruples.is_empty() {
        return Err(Error::EmptySuite);
    }
    let enc_text = |ts: Vec<&str>| text.encode(&ts, exec);
    let enc_img = |xs: Vec<&[f64]>| image.encode(&xs, exec);

    let q = &suite.quadruples;
    let imgs = enc_img(q.iter().map(|x| x.image.as_slice()).collect())?;
    let p1 = enc_text(q.iter().map(|x| x.p1.as_str()).collect())?;
    let p2 = enc_text(q.iter().map(|x| x.p2.as_str()).collect())?;
    let n = enc_text(q.iter().map(|x| x.n.as_str()).collect())?;
    let quads = (0..q.len())
        .map(|k| {
            Ok((
                q[k].category,
                EvalQuadruple::new(imgs.row(k).to_vec(), p1.row(k).to_vec(), p2.row(k).to_vec(), n.row(k).to_vec())?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let w = &suite.wino;
    let c0 = enc_text(w.iter().map(|x| x.c0.as_str()).collect())?;
    let c1 = enc_text(w.iter().map(|x| x.c1.as_str()).collect())?;
    let i0 = enc_img(w.iter().map(|x| x.i0.as_slice()).collect())?;
    let i1 = enc_img(w.iter().map(|x| x.i1.as_slice()).collect())?;
    let wino = (0..w.len())
        .map(|k| WinoGroundItem::new(c0.row(k).to_vec(), c1.row(k).to_vec(), i0.row(k).to_vec(), i1.row(k).to_vec()))
        .collect::<Result<Vec<_>>>()?;

    let r = &suite.retrieval;
    let sim = if r.images.is_empty() {
        None
    } else {
        let ri = enc_img(r.images.iter().map(Vec::as_slice).collect())?;
        let rt = enc_text(r.texts.iter().map(String::as_str).collect())?;
        Some(ri.matmul_t(&rt))
    };

    let (categories, average_equal, average_weighted, winoground, retrieval) =
        score_embeddings(&quads, &wino, sim.as_ref())?;
    Ok(Report {
        config_hash: config_hash.to_string(),
        seed,
        categories,
        average_equal,
        average_weighted,
        winoground,
        retrieval,
        decisions: DecisionFlags::default(),
    })
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned plain-text rendering.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "config {}  seed {}", self.config_hash, self.seed);
        let _ = writeln!(s, "{:<16} {:>6} {:>8} {:>8} {:>8}", "category", "n", "itt", "pp-itt", "pp-tot");
        let mut row = |name: &str, n: String, a: &Averages| {
            let _ = writeln!(
                s,
                "{:<16} {:>6} {:>8.4} {:>8.4} {:>8.4}",
                name, n, a.itt, a.pp_itt, a.pp_tot
            );
        };
        for (name, c) in &self.categories {
            row(
                name,
                c.count.to_string(),
                &Averages {
                    itt: c.itt,
                    pp_itt: c.pp_itt,
                    pp_tot: c.pp_tot,
                },
            );
        }
        row("average", "-".into(), &self.average_equal);
        row("pooled", "-".into(), &self.average_weighted);
        let w = &self.winoground;
        let _ = writeln!(
            s,
            "winoground       {:>6} text {:.4}  image {:.4}  group {:.4}",
            w.count, w.text, w.image, w.group
        );
        let r = &self.retrieval;
        let _ = writeln!(
            s,
            "retrieval        {:>6} i2t R@1 {:.4} R@5 {:.4}  t2i R@1 {:.4} R@5 {:.4}",
            r.count, r.i2t_r1, r.i2t_r5, r.t2i_r1, r.t2i_r5
        );
        let _ = writeln!(s, "tot rule: {}", self.decisions.tot_rule);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Unit vectors in the plane with prescribed inner products against e1.
    fn at(s: f64) -> Vec<f64> {
        vec![s, (1.0 - s * s).sqrt()]
    }

    fn quad(s1: f64, s2: f64, sn: f64) -> EvalQuadruple {
        EvalQuadruple {
            image: vec![1.0, 0.0],
            p1: at(s1),
            p2: at(s2),
            n: at(sn),
        }
    }

    #[test]
    fn itt_examples() {
        assert!(sugarcrepe_itt(&quad(0.8, 0.0, 0.5)));
        assert!(!sugarcrepe_itt(&quad(0.5, 0.0, 0.5)));
        assert!(!sugarcrepe_itt(&quad(0.4, 0.0, 0.6)));
        assert!(sugarcrepepp_itt(&quad(0.8, 0.7, 0.5)));
        assert!(!sugarcrepepp_itt(&quad(0.8, 0.4, 0.5)));
        assert!(!sugarcrepepp_itt(&quad(0.4, 0.7, 0.5)));
    }

    #[test]
    fn tot_examples() {
        let e1 = vec![1.0, 0.0, 0.0];
        let e2 = vec![0.0, 1.0, 0.0];
        let q = EvalQuadruple::new(e1.clone(), e1.clone(), e1.clone(), e2.clone()).unwrap();
        assert!(sugarcrepepp_tot(&q));
        let q = EvalQuadruple::new(e1.clone(), e1.clone(), e2.clone(), e2.clone()).unwrap();
        assert!(!sugarcrepepp_tot(&q));
    }

    #[test]
    fn wino_examples() {
        let (e1, e2) = (vec![1.0, 0.0], vec![0.0, 1.0]);
        let w = WinoGroundItem::new(e1.clone(), e2.clone(), e1.clone(), e2.clone()).unwrap();
        let all = |s: WinoScores| (s.text, s.image, s.group);
        assert_eq!(all(winoground_scores(&w)), (true, true, true));
        let w = WinoGroundItem::new(e1.clone(), e1.clone(), e1.clone(), e1.clone()).unwrap();
        assert_eq!(all(winoground_scores(&w)), (false, false, false));
        let w = WinoGroundItem::new(e2.clone(), e1.clone(), e1.clone(), e2.clone()).unwrap();
        assert_eq!(all(winoground_scores(&w)), (false, false, false));
    }

    #[test]
    fn recall_examples() {
        let eye = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(recall_at_k(&eye, &[0, 1, 2], 1).unwrap(), 1.0);
        assert_eq!(recall_at_k(&eye, &[2, 1, 0], 1).unwrap(), 1.0 / 3.0);
        let rev = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]);
        assert_eq!(recall_at_k(&rev, &[0, 1], 1).unwrap(), 0.0);
        assert!(matches!(recall_at_k(&eye, &[0, 1, 2], 0), Err(Error::KOutOfRange { .. })));
        assert!(matches!(recall_at_k(&eye, &[0, 1, 2], 4), Err(Error::KOutOfRange { .. })));
        // ties fall to the lower column
        let tie = Matrix::from_rows(&[[0.5, 0.5]]);
        assert_eq!(recall_at_k(&tie, &[1], 1).unwrap(), 0.0);
        assert_eq!(recall_at_k(&tie, &[0], 1).unwrap(), 1.0);
    }

    #[test]
    fn validation() {
        assert!(EvalQuadruple::new(vec![1.0, 1.0], at(0.1), at(0.2), at(0.3)).is_err());
        assert!(EvalQuadruple::new(vec![1.0], at(0.1), at(0.2), at(0.3)).is_err());
        assert!(matches!(score_embeddings(&[], &[], None), Err(Error::EmptySuite)));
    }
}
