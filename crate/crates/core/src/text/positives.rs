//! Positive captions for a concatenated pair.

use rand::seq::index;
use rand::Rng as _;
use serde::Serialize;

use super::clean::Caption;
use crate::error::{Error, Result};
use crate::rng::Rng;

pub const MAX_EXTRA_POSITIVES: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PositiveSet {
    /// First sentences, `a` then `b`.
    pub p1: String,
    /// First sentences, `b` then `a`.
    pub p2: String,
    /// One further sentence from each caption per entry (`p3`, `p4`, ...).
    pub extra: Vec<String>,
    /// Set when a caption had too few sentences and extras were sampled
    /// with repetition.
    pub degraded: bool,
}

impl PositiveSet {
    /// `p1, p2, p3, ...` in order.
    pub fn all(&self) -> impl Iterator<Item = &str> {
        [self.p1.as_str(), self.p2.as_str()]
            .into_iter()
            .chain(self.extra.iter().map(String::as_str))
    }

    pub fn len(&self) -> usize {
        2 + self.extra.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

pub fn join_sentences(a: &str, b: &str) -> String {
    format!("{a} {b}")
}

fn check_k(k_extra: usize) -> Result<()> {
    if k_extra > MAX_EXTRA_POSITIVES {
        return Err(Error::Config(format!(
            "k_extra = {k_extra} exceeds {MAX_EXTRA_POSITIVES}"
        )));
    }
    Ok(())
}

/// Picks `k` non-first sentence indices. Without repetition when possible;
/// otherwise with repetition (and `true` is returned). A one-sentence
/// caption can only offer its first sentence.
fn sample_extra(cap: &Caption, k: usize, rng: &mut Rng) -> (Vec<usize>, bool) {
    let available = cap.len() - 1;
    if available >= k {
        let picks = index::sample(rng, available, k)
            .into_iter()
            .map(|i| i + 1)
            .collect();
        (picks, false)
    } else if available == 0 {
        (vec![0; k], true)
    } else {
        let picks = (0..k).map(|_| 1 + rng.random_range(0..available)).collect();
        (picks, true)
    }
}

/// Builds `p1`, `p2` and `k_extra` further positives from two captions.
pub fn make_positives(
    cap_a: &Caption,
    cap_b: &Caption,
    k_extra: usize,
    rng: &mut Rng,
) -> Result<PositiveSet> {
    check_k(k_extra)?;
    let (a, b) = (cap_a.first(), cap_b.first());
    let (picks_a, degraded_a) = sample_extra(cap_a, k_extra, rng);
    let (picks_b, degraded_b) = sample_extra(cap_b, k_extra, rng);
    let extra = picks_a
        .iter()
        .zip(&picks_b)
        .map(|(&ka, &kb)| {
            let (sa, sb) = (&cap_a.sentences()[ka], &cap_b.sentences()[kb]);
            if rng.random_bool(0.5) {
                join_sentences(sa, sb)
            } else {
                join_sentences(sb, sa)
            }
        })
        .collect();
    Ok(PositiveSet {
        p1: join_sentences(a, b),
        p2: join_sentences(b, a),
        extra,
        degraded: degraded_a || degraded_b,
    })
}

/// Single-image analogue: `p1 = p2 =` first sentence, extras are single
/// further sentences of the same caption.
pub fn make_single_positives(cap: &Caption, k_extra: usize, rng: &mut Rng) -> Result<PositiveSet> {
    check_k(k_extra)?;
    let (picks, degraded) = sample_extra(cap, k_extra, rng);
    Ok(PositiveSet {
        p1: cap.first().to_string(),
        p2: cap.first().to_string(),
        extra: picks.iter().map(|&k| cap.sentences()[k].clone()).collect(),
        degraded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{child_rng, Stream};
    use std::collections::BTreeSet;

    fn cap(s: &[&str]) -> Caption {
        Caption::new(s.iter().map(|x| x.to_string()).collect())
    }

    #[test]
    fn first_sentence_pair_and_reverse() {
        let a = cap(&["X.", "Y."]);
        let b = cap(&["U.", "V."]);
        // every order the rng can pick for p3
        let allowed: BTreeSet<&str> = ["Y. V.", "V. Y."].into();
        let mut seen = BTreeSet::new();
        for seed in 0..64 {
            let p = make_positives(&a, &b, 1, &mut child_rng(seed, Stream::Example, &[])).unwrap();
            assert_eq!(p.p1, "X. U.");
            assert_eq!(p.p2, "U. X.");
            assert_eq!(p.extra.len(), 1);
            assert!(allowed.contains(p.extra[0].as_str()));
            assert!(!p.degraded);
            seen.insert(p.extra[0].clone());
        }
        assert_eq!(seen.len(), 2, "both orders reachable");
    }

    #[test]
    fn zero_extra() {
        let p = make_positives(
            &cap(&["X.", "Y."]),
            &cap(&["U."]),
            0,
            &mut child_rng(0, Stream::Example, &[]),
        )
        .unwrap();
        assert_eq!(p.len(), 2);
        assert!(!p.degraded);
        assert_eq!(p.all().collect::<Vec<_>>(), ["X. U.", "U. X."]);
    }

    #[test]
    fn short_caption_degrades() {
        let p = make_positives(
            &cap(&["A."]),
            &cap(&["B.", "C.", "D."]),
            2,
            &mut child_rng(3, Stream::Example, &[]),
        )
        .unwrap();
        assert!(p.degraded);
        assert_eq!(p.extra.len(), 2);
        for e in &p.extra {
            assert!(e.contains("A."));
        }
        let p = make_positives(
            &cap(&["A.", "E."]),
            &cap(&["B.", "C.", "D."]),
            2,
            &mut child_rng(3, Stream::Example, &[]),
        )
        .unwrap();
        assert!(p.degraded);
        assert!(p.extra.iter().all(|e| e.contains("E.")));
    }

    #[test]
    fn extras_without_repetition() {
        let a = cap(&["a0.", "a1.", "a2.", "a3."]);
        let b = cap(&["b0.", "b1.", "b2.", "b3."]);
        for seed in 0..50 {
            let p = make_positives(&a, &b, 3, &mut child_rng(seed, Stream::Example, &[])).unwrap();
            let from_a: BTreeSet<_> = p
                .extra
                .iter()
                .map(|e| e.split(' ').find(|w| w.starts_with('a')).unwrap().to_string())
                .collect();
            assert_eq!(from_a.len(), 3);
            assert!(!from_a.contains("a0."));
        }
    }

    #[test]
    fn k_extra_bounded() {
        let c = cap(&["A."]);
        assert!(make_positives(&c, &c, 4, &mut child_rng(0, Stream::Example, &[])).is_err());
    }

    #[test]
    fn single_image_positives() {
        let c = cap(&["A.", "B.", "C."]);
        let p = make_single_positives(&c, 2, &mut child_rng(0, Stream::Example, &[])).unwrap();
        assert_eq!(p.p1, "A.");
        assert_eq!(p.p2, "A.");
        let extra: BTreeSet<_> = p.extra.iter().map(String::as_str).collect();
        assert_eq!(extra, ["B.", "C."].into());
    }
}
