//! Hard negatives by swapping one same-category word across two sentences.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng as _;
use serde::Serialize;

use super::positives::join_sentences;
use super::tag::{detokenize, TagSet, TaggedSentence, Token, UposTag};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Swap {
    /// Token position in the concatenated token sequence (first sentence's
    /// tokens, then the second's).
    pub index_a: usize,
    pub index_b: usize,
    /// The shared category, or `None` when the random fallback was used.
    pub tag: Option<UposTag>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HardNegative {
    pub text: String,
    pub swapped: Swap,
    /// The two surfaces that traded places, `(from a, from b)`.
    pub words: (String, String),
}

/// Which pairs a swap may be drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwapPlan {
    /// Qualifying `(i, j)` pairs per shared category.
    ByTag(BTreeMap<UposTag, Vec<(usize, usize)>>),
    /// No shared category: any pair of non-excluded words with distinct
    /// surfaces.
    Fallback(Vec<(usize, usize)>),
}

impl SwapPlan {
    pub fn is_empty(&self) -> bool {
        match self {
            SwapPlan::ByTag(m) => m.is_empty(),
            SwapPlan::Fallback(v) => v.is_empty(),
        }
    }

    /// Every `(i, j, tag)` the sampler can return.
    pub fn outcomes(&self) -> Vec<(usize, usize, Option<UposTag>)> {
        match self {
            SwapPlan::ByTag(m) => m
                .iter()
                .flat_map(|(&t, ps)| ps.iter().map(move |&(i, j)| (i, j, Some(t))))
                .collect(),
            SwapPlan::Fallback(v) => v.iter().map(|&(i, j)| (i, j, None)).collect(),
        }
    }

    /// Uniform category, then a uniform first word among those with a
    /// partner, then a uniform partner.
    fn sample(&self, rng: &mut Rng) -> Option<(usize, usize, Option<UposTag>)> {
        match self {
            SwapPlan::ByTag(m) => {
                if m.is_empty() {
                    return None;
                }
                let (&tag, pairs) = m.iter().nth(rng.random_range(0..m.len()))?;
                let firsts: Vec<usize> = pairs
                    .iter()
                    .map(|p| p.0)
                    .collect::<BTreeSet<_>>()
                    .into_iter()
                    .collect();
                let i = firsts[rng.random_range(0..firsts.len())];
                let partners: Vec<usize> = pairs.iter().filter(|p| p.0 == i).map(|p| p.1).collect();
                let j = partners[rng.random_range(0..partners.len())];
                Some((i, j, Some(tag)))
            }
            SwapPlan::Fallback(v) => {
                if v.is_empty() {
                    return None;
                }
                let (i, j) = v[rng.random_range(0..v.len())];
                Some((i, j, None))
            }
        }
    }
}

fn allowed(t: &Token, forbidden: &HashSet<String>) -> bool {
    t.is_word && !forbidden.contains(&t.surface.to_lowercase())
}

/// Builds the candidate set for swapping `left[i]` with `right[j]`. With
/// `same_sentence`, only `i < j` is considered.
fn plan(
    left: &[Token],
    right: &[Token],
    same_sentence: bool,
    excluded: TagSet,
    forbidden: &HashSet<String>,
) -> SwapPlan {
    let mut by_tag: BTreeMap<UposTag, Vec<(usize, usize)>> = BTreeMap::new();
    let mut any = Vec::new();
    for (i, a) in left.iter().enumerate() {
        if !allowed(a, forbidden) {
            continue;
        }
        for (j, b) in right.iter().enumerate() {
            if (same_sentence && j <= i) || !allowed(b, forbidden) || a.surface == b.surface {
                continue;
            }
            if excluded.contains(a.tag) || excluded.contains(b.tag) {
                continue;
            }
            any.push((i, j));
            if a.tag == b.tag {
                by_tag.entry(a.tag).or_default().push((i, j));
            }
        }
    }
    if by_tag.is_empty() {
        SwapPlan::Fallback(any)
    } else {
        SwapPlan::ByTag(by_tag)
    }
}

pub fn cross_plan(
    sa: &TaggedSentence,
    sb: &TaggedSentence,
    excluded: TagSet,
    forbidden: &HashSet<String>,
) -> SwapPlan {
    plan(&sa.tokens, &sb.tokens, false, excluded, forbidden)
}

pub fn within_plan(s: &TaggedSentence, excluded: TagSet, forbidden: &HashSet<String>) -> SwapPlan {
    plan(&s.tokens, &s.tokens, true, excluded, forbidden)
}

/// Swaps one word of `sa` with one word of `sb` and returns the joined
/// pair `sa' sb'`. Prefers a randomly chosen category shared by both
/// sentences; falls back to any pair of distinct non-excluded words.
pub fn make_hard_negative(
    sa: &TaggedSentence,
    sb: &TaggedSentence,
    excluded: TagSet,
    forbidden: &HashSet<String>,
    rng: &mut Rng,
) -> Result<HardNegative> {
    let (i, j, tag) = cross_plan(sa, sb, excluded, forbidden)
        .sample(rng)
        .ok_or(Error::NoSwapPossible)?;
    Ok(apply_cross_swap(sa, sb, i, j, tag))
}

pub fn apply_cross_swap(
    sa: &TaggedSentence,
    sb: &TaggedSentence,
    i: usize,
    j: usize,
    tag: Option<UposTag>,
) -> HardNegative {
    let mut a = sa.tokens.clone();
    let mut b = sb.tokens.clone();
    std::mem::swap(&mut a[i].surface, &mut b[j].surface);
    std::mem::swap(&mut a[i].tag, &mut b[j].tag);
    HardNegative {
        text: join_sentences(&detokenize(&a), &detokenize(&b)),
        swapped: Swap {
            index_a: i,
            index_b: sa.tokens.len() + j,
            tag,
        },
        words: (sa.tokens[i].surface.clone(), sb.tokens[j].surface.clone()),
    }
}

/// Single-sentence variant: two words of `s` trade places.
pub fn make_hard_negative_within(
    s: &TaggedSentence,
    excluded: TagSet,
    forbidden: &HashSet<String>,
    rng: &mut Rng,
) -> Result<HardNegative> {
    let (i, j, tag) = within_plan(s, excluded, forbidden)
        .sample(rng)
        .ok_or(Error::NoSwapPossible)?;
    let mut t = s.tokens.clone();
    let (left, right) = t.split_at_mut(j);
    std::mem::swap(&mut left[i].surface, &mut right[0].surface);
    std::mem::swap(&mut left[i].tag, &mut right[0].tag);
    Ok(HardNegative {
        text: detokenize(&t),
        swapped: Swap {
            index_a: i,
            index_b: j,
            tag,
        },
        words: (s.tokens[i].surface.clone(), s.tokens[j].surface.clone()),
    })
}
