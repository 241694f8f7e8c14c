//! Linear toy encoders with L2-normalized outputs.

use std::collections::BTreeMap;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

pub const UNK: &str = "<unk>";

/// Lowercased word unigrams followed by adjacent bigrams (`"red ball"`).
///
/// Words are maximal runs of alphanumeric characters, so punctuation and
/// sentence boundaries are ignored.
pub fn text_tokens(text: &str) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect();
    let mut out = words.clone();
    out.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Ordered vocabulary; index 0 is the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set = std::collections::BTreeSet::new();
        for t in texts {
            set.extend(text_tokens(t));
        }
        let tokens: Vec<String> = std::iter::once(UNK.to_string()).chain(set).collect();
        Self::from_tokens(tokens).expect("fresh vocabulary is valid")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Checkpoint(format!("vocabulary must start with {UNK}")));
        }
        let index: BTreeMap<String, usize> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        if index.len() != tokens.len() {
            return Err(Error::Checkpoint("duplicate vocabulary entry".into()));
        }
        Ok(Self { tokens, index })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Token ids of `text`; unknown tokens become id 0.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text_tokens(text).iter().map(|t| self.id(t).unwrap_or(0)).collect()
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    let normal = Normal::new(0.0, 1.0 / (cols as f64).sqrt()).expect("valid sigma");
    let data = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

/// Normalizes row `h` in place and returns the pre-normalization norm.
fn normalize_row(h: &mut [f64], what: &'static str) -> Result<f64> {
    let n = dot(h, h).sqrt();
    if !(n.is_finite() && n > 1e-12) {
        return Err(Error::NonFinite(what));
    }
    h.iter_mut().for_each(|x| *x /= n);
    Ok(n)
}

/// `(dphi - phi <phi, dphi>) / norm`
fn normalize_backward(phi: &[f64], dphi: &[f64], norm: f64) -> Vec<f64> {
    let p = dot(phi, dphi);
    phi.iter().zip(dphi).map(|(f, g)| (g - f * p) / norm).collect()
}

/// Forward results kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub emb: Matrix,
    pub norms: Vec<f64>,
}

/// Bag-of-tokens mean of embedding rows, then L2 normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEncoder {
    pub vocab: Vocab,
    pub w: Matrix,
}

impl TextEncoder {
    pub fn random(vocab: Vocab, dim: usize, rng: &mut Rng) -> Self {
        let w = gaussian_matrix(vocab.len(), dim, rng);
        Self { vocab, w }
    }

    pub fn dim(&self) -> usize {
        self.w.cols()
    }

    pub fn tokenize(&self, texts: &[&str]) -> Vec<Vec<usize>> {
        texts.iter().map(|t| self.vocab.encode(t)).collect()
    }

    pub fn forward(&self, ids: &[Vec<usize>], exec: Exec) -> Result<Encoded> {
        text_forward(&self.w, ids, exec)
    }

    pub fn encode(&self, texts: &[&str], exec: Exec) -> Result<Matrix> {
        Ok(self.forward(&self.tokenize(texts), exec)?.emb)
    }

    /// Accumulates the gradient w.r.t. `w` into `grad`.
    pub fn backward(&self, ids: &[Vec<usize>], enc: &Encoded, d_emb: &Matrix, grad: &mut Matrix) {
        text_backward(ids, enc, d_emb, grad)
    }
}

/// Forward pass of the text encoder for an explicit weight matrix.
pub fn text_forward(w: &Matrix, ids: &[Vec<usize>], exec: Exec) -> Result<Encoded> {
    let d = w.cols();
    let rows: Vec<Result<(Vec<f64>, f64)>> = exec.map_slice(ids, |toks| {
        let mut h = vec![0.0; d];
        let toks: &[usize] = if toks.is_empty() { &[0] } else { toks };
        for &t in toks {
            h.iter_mut().zip(w.row(t)).for_each(|(a, b)| *a += b);
        }
        let k = toks.len() as f64;
        h.iter_mut().for_each(|x| *x /= k);
        let n = normalize_row(&mut h, "text embedding")?;
        Ok((h, n))
    });
    collect_rows(rows, d)
}

pub fn text_backward(ids: &[Vec<usize>], enc: &Encoded, d_emb: &Matrix, grad: &mut Matrix) {
    for (i, toks) in ids.iter().enumerate() {
        let dh = normalize_backward(enc.emb.row(i), d_emb.row(i), enc.norms[i]);
        let toks: &[usize] = if toks.is_empty() { &[0] } else { toks };
        let k = toks.len() as f64;
        for &t in toks {
            grad.row_mut(t).iter_mut().zip(&dh).for_each(|(g, x)| *g += x / k);
        }
    }
}

fn collect_rows(rows: Vec<Result<(Vec<f64>, f64)>>, d: usize) -> Result<Encoded> {
    let mut data = Vec::with_capacity(rows.len() * d);
    let mut norms = Vec::with_capacity(rows.len());
    for r in rows {
        let (h, n) = r?;
        data.extend(h);
        norms.push(n);
    }
    Ok(Encoded {
        emb: Matrix::from_vec(norms.len(), d, data)?,
        norms,
    })
}

/// Linear map over feature blocks: an input of `k * F` features is split
/// into `k` blocks whose projections are summed before normalization, so
/// concatenated and single images share one weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEncoder {
    pub v: Matrix,
}

impl ImageEncoder {
    pub fn random(features: usize, dim: usize, rng: &mut Rng) -> Self {
        Self {
            v: gaussian_matrix(features, dim, rng),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.cols()
    }

    pub fn features(&self) -> usize {
        self.v.rows()
    }

    pub fn forward(&self, inputs: &[&[f64]], exec: Exec) -> Result<Encoded> {
        image_forward(&self.v, inputs, exec)
    }

    pub fn encode(&self, inputs: &[&[f64]], exec: Exec) -> Result<Matrix> {
        Ok(self.forward(inputs, exec)?.emb)
    }

    pub fn backward(&self, inputs: &[&[f64]], enc: &Encoded, d_emb: &Matrix, grad: &mut Matrix) {
        image_backward(inputs, enc, d_emb, grad)
    }
}

pub fn image_forward(v: &Matrix, inputs: &[&[f64]], exec: Exec) -> Result<Encoded> {
    let (f, d) = v.shape();
    for x in inputs {
        if x.is_empty() || x.len() % f != 0 {
            return Err(Error::DimensionMismatch {
                left: x.len(),
                right: f,
            });
        }
    }
    let rows = exec.map_slice(inputs, |x| {
        let mut h = vec![0.0; d];
        for block in x.chunks(f) {
            for (a, &xa) in block.iter().enumerate() {
                if xa != 0.0 {
                    h.iter_mut().zip(v.row(a)).for_each(|(o, w)| *o += xa * w);
                }
            }
        }
        let n = normalize_row(&mut h, "image embedding")?;
        Ok((h, n))
    });
    collect_rows(rows, d)
}

pub fn image_backward(inputs: &[&[f64]], enc: &Encoded, d_emb: &Matrix, grad: &mut Matrix) {
    let f = grad.rows();
    for (i, x) in inputs.iter().enumerate() {
        let dh = normalize_backward(enc.emb.row(i), d_emb.row(i), enc.norms[i]);
        for block in x.chunks(f) {
            for (a, &xa) in block.iter().enumerate() {
                if xa != 0.0 {
                    grad.row_mut(a).iter_mut().zip(&dh).for_each(|(g, y)| *g += xa * y);
                }
            }
        }
    }
}
