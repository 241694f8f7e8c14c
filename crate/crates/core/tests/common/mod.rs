//! Oracles and fixtures shared by the integration tests and the acceptance
//! runner. The loss oracles evaluate each formula literally, with plain
//! `exp`/`ln` and no shared code with the library kernels.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use clic_core::batch::{build_batch, Batch, GenConfig, TrainingExample};
use clic_core::corpus::{Dataset, ImageSource, Item};
use clic_core::image::FeatureImage;
use clic_core::text::{Lexicon, TagSet, Tagger};
use clic_core::{Exec, Matrix};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TestRng = ChaCha8Rng;

pub fn rng(seed: u64) -> TestRng {
    TestRng::seed_from_u64(seed)
}

/// Standard normal via Box-Muller, so the oracles do not lean on the
/// library's sampler.
pub fn normal(r: &mut TestRng) -> f64 {
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn unit_rows(m: usize, d: usize, r: &mut TestRng) -> Matrix {
    let mut out = Matrix::zeros(m, d);
    for i in 0..m {
        let row: Vec<f64> = (0..d).map(|_| normal(r)).collect();
        let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (a, x) in row.iter().enumerate() {
            out.set(i, a, x / n);
        }
    }
    out
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn sim(a: &Matrix, i: usize, b: &Matrix, j: usize, tau: f64) -> f64 {
    tau * a.row(i).iter().zip(b.row(j)).map(|(x, y)| x * y).sum::<f64>()
}

pub mod oracle {
    use super::*;

    /// `1/(2m) sum_i [-log softmax_j S_ij + -log softmax_j S_ji]` at the diagonal.
    pub fn clip(img: &Matrix, txt: &Matrix, tau: f64) -> f64 {
        let m = img.rows();
        let mut v = 0.0;
        for i in 0..m {
            let num = sim(img, i, txt, i, tau).exp();
            let row: f64 = (0..m).map(|j| sim(img, i, txt, j, tau).exp()).sum();
            let col: f64 = (0..m).map(|j| sim(img, j, txt, i, tau).exp()).sum();
            v -= (num / row).ln() + (num / col).ln();
        }
        v / (2.0 * m as f64)
    }

    /// Sum over positives of both directions, times `1/(2 L m)`.
    pub fn multi_positive(img: &Matrix, pos: &[Matrix], tau: f64) -> f64 {
        pos.iter().map(|p| clip(img, p, tau)).sum::<f64>() / pos.len() as f64
    }

    pub fn negclip(img: &Matrix, txt: &Matrix, neg: &Matrix, tau: f64) -> f64 {
        let m = img.rows();
        let mut v = 0.0;
        for i in 0..m {
            let num = sim(img, i, txt, i, tau).exp();
            let den: f64 = (0..m).map(|j| sim(img, i, txt, j, tau).exp() + sim(img, i, neg, j, tau).exp()).sum();
            v -= (num / den).ln();
        }
        v / (2.0 * m as f64)
    }

    /// Image-to-text half of `clip` with the same `1/(2m)` weight.
    pub fn i2t_half(img: &Matrix, txt: &Matrix, tau: f64) -> f64 {
        let m = img.rows();
        let mut v = 0.0;
        for i in 0..m {
            let num = sim(img, i, txt, i, tau).exp();
            let den: f64 = (0..m).map(|j| sim(img, i, txt, j, tau).exp()).sum();
            v -= (num / den).ln();
        }
        v / (2.0 * m as f64)
    }

    pub fn single_neg(img: &Matrix, pos: &[Matrix], neg: &Matrix, tau: f64) -> f64 {
        let m = img.rows();
        let mut v = 0.0;
        for i in 0..m {
            let en = sim(img, i, neg, i, tau).exp();
            for p in pos {
                let ep = sim(img, i, p, i, tau).exp();
                v -= (ep / (ep + en)).ln();
            }
        }
        v / (pos.len() * m) as f64
    }

    pub fn uni(p1: &Matrix, p2: &Matrix) -> f64 {
        let m = p1.rows();
        (0..m)
            .map(|i| p1.row(i).iter().zip(p2.row(i)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
            .sum::<f64>()
            / m as f64
    }

    pub fn clic_total(img: &Matrix, pos: &[Matrix], neg: &Matrix, tau: f64, w: (f64, f64, f64)) -> f64 {
        w.0 * multi_positive(img, pos, tau) + w.1 * single_neg(img, pos, neg, tau) + w.2 * uni(&pos[0], &pos[1])
    }

    /// Recall@k by sorting every row in full: descending score, ties
    /// broken by ascending column.
    pub fn recall(sim: &Matrix, gold: &[usize], k: usize) -> f64 {
        let mut hits = 0;
        for r in 0..sim.rows() {
            let mut cols: Vec<usize> = (0..sim.cols()).collect();
            cols.sort_by(|&a, &b| sim.get(r, b).partial_cmp(&sim.get(r, a)).unwrap().then(a.cmp(&b)));
            if cols[..k].contains(&gold[r]) {
                hits += 1;
            }
        }
        hits as f64 / sim.rows() as f64
    }
}

/// The frozen weighted-loss fixture: inputs and the reference values.
pub struct ClicFixture {
    pub tau: f64,
    pub weights: (f64, f64, f64),
    pub image: Matrix,
    pub positives: Vec<Matrix>,
    pub negative: Matrix,
    pub cont: f64,
    pub sneg: f64,
    pub uni: f64,
    pub total: f64,
}

pub fn clic_fixture() -> ClicFixture {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/clic_fixture.txt");
    let text = std::fs::read_to_string(&path).expect("fixture present");
    let mut lines = text.lines();
    let mut scalars: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut mats: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut current = None;
    while let Some(line) = lines.next() {
        let mut parts = line.split_whitespace();
        let head = parts.next().expect("non-empty line").to_string();
        let rest: Vec<f64> = parts.map(|x| x.parse().expect("decimal literal")).collect();
        if rest.is_empty() {
            current = Some(head.clone());
            mats.insert(head, Vec::new());
        } else if head.parse::<f64>().is_ok() {
            let mut row = vec![head.parse().unwrap()];
            row.extend(rest);
            mats.get_mut(current.as_ref().expect("matrix header")).unwrap().push(row);
        } else {
            scalars.insert(head, rest);
        }
    }
    let mat = |k: &str| Matrix::from_rows(&mats[k]);
    let s = |k: &str| scalars[k][0];
    let w = &scalars["weights"];
    ClicFixture {
        tau: s("tau"),
        weights: (w[0], w[1], w[2]),
        image: mat("image"),
        positives: (0..4).map(|k| mat(&format!("positive{k}"))).collect(),
        negative: mat("negative"),
        cont: s("cont"),
        sneg: s("sneg"),
        uni: s("uni"),
        total: s("total"),
    }
}

const ADJ: [&str; 10] = ["red", "blue", "green", "yellow", "small", "large", "old", "young", "wooden", "shiny"];
const NOUN: [&str; 14] = [
    "dog", "cat", "horse", "bus", "table", "chair", "bird", "man", "woman", "child", "car", "boat", "field", "river",
];
const VERB: [&str; 6] = ["runs", "sits", "sleeps", "stands", "waits", "jumps"];
const ADP: [&str; 4] = ["near", "beside", "under", "behind"];
const PLACE: [&str; 4] = ["street", "room", "beach", "garden"];

fn pick<'a>(xs: &[&'a str], r: &mut TestRng) -> &'a str {
    xs[r.random_range(0..xs.len())]
}

/// One synthetic caption of two to four sentences.
pub fn synthetic_caption(r: &mut TestRng) -> String {
    let cap = |w: &str| {
        let mut c = w.chars();
        c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
    };
    let first = format!(
        "{} {} {} {} {} the {} {}.",
        cap(pick(&["the", "a"], r)),
        pick(&ADJ, r),
        pick(&NOUN, r),
        pick(&VERB, r),
        pick(&ADP, r),
        pick(&ADJ, r),
        pick(&NOUN, r)
    );
    let mut out = first;
    for _ in 0..r.random_range(1..4) {
        out.push_str(&format!(" The {} is in the {}.", pick(&NOUN, r), pick(&PLACE, r)));
    }
    out
}

/// `n` feature-image items with synthetic captions.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let lex = Lexicon::bundled();
    let items = (0..n)
        .map(|i| {
            let caption = synthetic_caption(&mut r);
            let feats: Vec<f64> = (0..4).map(|_| normal(&mut r)).collect();
            Item::new(
                format!("s{i:04}"),
                caption,
                ImageSource::Features(FeatureImage::new(feats).unwrap()),
                &lex,
            )
            .unwrap()
        })
        .collect();
    Dataset::new(items).unwrap()
}

/// Words and sentence-final periods, split independently of the library
/// tokenizer. Valid for the synthetic corpus, which has no other
/// punctuation.
pub fn words(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in s.split_whitespace() {
        match chunk.strip_suffix('.') {
            Some(w) => {
                out.push(w.to_string());
                out.push(".".to_string());
            }
            None => out.push(chunk.to_string()),
        }
    }
    out
}

fn multiset(ws: &[String]) -> BTreeMap<&str, usize> {
    let mut m = BTreeMap::new();
    for w in ws {
        *m.entry(w.as_str()).or_insert(0) += 1;
    }
    m
}

/// Violations of the hard-negative contract for one concatenated example.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct Violations {
    pub multiset: usize,
    pub two_positions: usize,
    pub tag_agreement: usize,
    pub identity_swap: usize,
    pub shared_noun_swapped: usize,
}

impl Violations {
    pub fn total(&self) -> usize {
        self.multiset + self.two_positions + self.tag_agreement + self.identity_swap + self.shared_noun_swapped
    }

    pub fn add(&mut self, o: Violations) {
        self.multiset += o.multiset;
        self.two_positions += o.two_positions;
        self.tag_agreement += o.tag_agreement;
        self.identity_swap += o.identity_swap;
        self.shared_noun_swapped += o.shared_noun_swapped;
    }
}

/// Checks one example built in concatenation mode against its source
/// first sentences.
pub fn check_example(ds: &Dataset, ex: &TrainingExample) -> Violations {
    let lex = Lexicon::bundled();
    let excluded = TagSet::swap_excluded();
    let mut v = Violations::default();
    let sa = ds.item(ex.provenance.index_a).caption.first();
    let sb = ds.item(ex.provenance.index_b).caption.first();
    let (wa, wb) = (words(sa), words(sb));
    let p: Vec<String> = wa.iter().chain(&wb).cloned().collect();
    let n = words(&ex.negative.text);

    if words(&ex.positives.p1) != p || multiset(&p) != multiset(&n) {
        v.multiset += 1;
    }
    let diff: Vec<usize> = (0..p.len().min(n.len())).filter(|&k| p[k] != n[k]).collect();
    let swapped_ok = diff.len() == 2 && diff[0] < wa.len() && diff[1] >= wa.len() && p[diff[0]] == n[diff[1]] && p[diff[1]] == n[diff[0]];
    if p.len() != n.len() || !swapped_ok {
        v.two_positions += 1;
    }
    let (x, y) = (&ex.negative.words.0, &ex.negative.words.1);
    if x == y {
        v.identity_swap += 1;
    }
    let forbidden: BTreeSet<String> = ex.shared_nouns.iter().cloned().collect();
    if forbidden.contains(&x.to_lowercase()) || forbidden.contains(&y.to_lowercase()) {
        v.shared_noun_swapped += 1;
    }

    let is_word = |w: &String| w != ".";
    let ok = |w: &String| is_word(w) && !forbidden.contains(&w.to_lowercase()) && !excluded.contains(lex.tag_word(w));
    let common = wa.iter().filter(|a| ok(a)).any(|a| wb.iter().filter(|b| ok(b)).any(|b| a != b && lex.tag_word(a) == lex.tag_word(b)));
    if common {
        let (tx, ty) = (lex.tag_word(x), lex.tag_word(y));
        if tx != ty || ex.negative.swapped.tag != Some(tx) {
            v.tag_agreement += 1;
        }
    }
    v
}

/// Stable text rendering of a batch, used for byte comparisons.
pub fn render(batch: &Batch) -> String {
    format!("{batch:?}")
}

/// Builds `count` examples cycling over the dataset, in `chunk`-sized
/// batches seeded from `seed`.
pub fn generate(ds: &Dataset, cfg: &GenConfig, count: usize, seed: u64, exec: Exec) -> Vec<Batch> {
    let chunk = 1000;
    (0..count.div_ceil(chunk))
        .map(|c| {
            let idx: Vec<usize> = (c * chunk..((c + 1) * chunk).min(count)).map(|k| k % ds.len()).collect();
            build_batch(ds, &idx, cfg, seed.wrapping_add(c as u64), exec).unwrap()
        })
        .collect()
}

/// Haar-ish random orthogonal matrix by Gram-Schmidt on gaussian columns.
pub fn random_orthogonal(d: usize, r: &mut TestRng) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| normal(r)).collect();
        for b in &q {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

pub fn rotate(q: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    q.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn unit_vec(d: usize, r: &mut TestRng) -> Vec<f64> {
    unit_rows(1, d, r).row(0).to_vec()
}

/// Matrices among `count` random 20x20 cases where `recall_at_k`
/// disagrees with the full-sort oracle for some k. Scores are rounded to
/// a coarse grid so ties occur.
pub fn recall_oracle_mismatches(count: usize, seed: u64) -> usize {
    let mut r = rng(seed);
    let mut bad = 0;
    for _ in 0..count {
        let coarse = r.random_bool(0.5);
        let mut sim = Matrix::zeros(20, 20);
        for i in 0..20 {
            for j in 0..20 {
                let x = normal(&mut r);
                sim.set(i, j, if coarse { (x * 2.0).round() / 2.0 } else { x });
            }
        }
        let gold: Vec<usize> = (0..20).map(|_| r.random_range(0..20)).collect();
        let ok = (1..=20).all(|k| clic_core::eval::recall_at_k(&sim, &gold, k).unwrap() == oracle::recall(&sim, &gold, k));
        bad += usize::from(!ok);
    }
    bad
}

/// Every randomized scorer invariant; returns descriptions of failures.
pub fn scorer_invariant_failures(trials: usize, seed: u64) -> Vec<String> {
    use clic_core::eval::*;
    let mut r = rng(seed);
    let mut fails = Vec::new();
    for t in 0..trials {
        let d = [3, 8, 16][t % 3];
        let q = random_orthogonal(d, &mut r);
        let v: Vec<Vec<f64>> = (0..4).map(|_| unit_vec(d, &mut r)).collect();
        let quad = EvalQuadruple::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()).unwrap();
        let rot = |x: &Vec<f64>| rotate(&q, x);
        let quad_r = EvalQuadruple::new(rot(&v[0]), rot(&v[1]), rot(&v[2]), rot(&v[3])).unwrap();
        let verdicts = |x: &EvalQuadruple| (sugarcrepe_itt(x), sugarcrepepp_itt(x), sugarcrepepp_tot(x));
        if verdicts(&quad) != verdicts(&quad_r) {
            fails.push(format!("trial {t}: quadruple verdict changed under rotation"));
        }
        if sugarcrepepp_itt(&quad) && !sugarcrepe_itt(&quad) {
            fails.push(format!("trial {t}: SC++ ITT without SC ITT"));
        }
        let w = WinoGroundItem::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()).unwrap();
        let w_r = WinoGroundItem::new(rot(&v[0]), rot(&v[1]), rot(&v[2]), rot(&v[3])).unwrap();
        if winoground_scores(&w) != winoground_scores(&w_r) {
            fails.push(format!("trial {t}: winoground verdict changed under rotation"));
        }

        // ties: negative equal to a positive, or duplicated captions
        let tie = EvalQuadruple::new(v[0].clone(), v[1].clone(), v[1].clone(), v[1].clone()).unwrap();
        if sugarcrepe_itt(&tie) || sugarcrepepp_itt(&tie) || sugarcrepepp_tot(&tie) {
            fails.push(format!("trial {t}: a tie counted as success"));
        }
        let wt = WinoGroundItem::new(v[0].clone(), v[0].clone(), v[2].clone(), v[3].clone()).unwrap();
        let s = winoground_scores(&wt);
        if s.text || s.group {
            fails.push(format!("trial {t}: winoground tie counted as success"));
        }

        let n = 2 + t % 12;
        let mut sim = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                sim.set(i, j, normal(&mut r));
            }
        }
        let gold: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
        let rs: Vec<f64> = (1..=n).map(|k| recall_at_k(&sim, &gold, k).unwrap()).collect();
        if rs.windows(2).any(|w| w[1] < w[0]) || rs[n - 1] != 1.0 {
            fails.push(format!("trial {t}: recall not monotone or below 1 at k = n"));
        }
        let flat = Matrix::zeros(n, n);
        let last: Vec<usize> = vec![n - 1; n];
        if recall_at_k(&flat, &last, n - 1).unwrap() != 0.0 {
            fails.push(format!("trial {t}: all-tie row ranked the last column inside top n-1"));
        }
    }
    fails
}

/// SC++ ITT accuracy of `count` quadruples of independent random unit
/// vectors.
pub fn random_sc_pp_itt(count: usize, d: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut hits = 0;
    for _ in 0..count {
        let v: Vec<Vec<f64>> = (0..4).map(|_| unit_vec(d, &mut r)).collect();
        let q = clic_core::eval::EvalQuadruple::new(v[0].clone(), v[1].clone(), v[2].clone(), v[3].clone()).unwrap();
        hits += usize::from(clic_core::eval::sugarcrepepp_itt(&q));
    }
    hits as f64 / count as f64
}
