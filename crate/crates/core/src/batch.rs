//! Training-example assembly: partner selection, image concatenation,
//! positives and hard negative per example, and batches built in parallel.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng as _, SeedableRng};
use serde::Serialize;

use crate::corpus::{Dataset, ImageSource};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::image::{concat_features, concat_images, resize_bilinear, FeatureImage, Order, RasterImage};
use crate::rng::{derive_seed, Rng, Stream};
use crate::text::{
    make_hard_negative, make_hard_negative_within, make_positives, make_single_positives, HardNegative,
    PositiveSet, TagSet,
};

/// Orientation-matching resample budget before falling back.
pub const MAX_PARTNER_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PairingStrategy {
    #[default]
    RandomSameOrientation,
    CommonNoun { max_candidates: usize },
}

/// Example-generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Further positives beyond `p1`/`p2` (0..=3).
    pub k_extra: usize,
    pub pairing: PairingStrategy,
    /// `false` selects single-image mode (no partner, within-sentence swap).
    pub concat: bool,
    pub excluded: TagSet,
    /// Applied to concatenated raster images.
    pub final_resize: Option<(usize, usize)>,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            k_extra: 2,
            pairing: PairingStrategy::RandomSameOrientation,
            concat: true,
            excluded: TagSet::swap_excluded(),
            final_resize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partner {
    pub index: usize,
    /// Orientation could not be matched.
    pub degraded: bool,
    /// Nouns shared with the query under common-noun pairing.
    pub shared_nouns: Vec<String>,
}

fn uniform_other(i: usize, n: usize, rng: &mut Rng) -> usize {
    let j = rng.random_range(0..n - 1);
    if j >= i {
        j + 1
    } else {
        j
    }
}

/// Chooses the item to pair with `i`.
pub fn pick_partner(i: usize, dataset: &Dataset, strategy: PairingStrategy, rng: &mut Rng) -> Result<Partner> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::DatasetTooSmall(n));
    }
    if let PairingStrategy::CommonNoun { max_candidates } = strategy {
        let cands = dataset.noun_neighbours(i);
        if !cands.is_empty() {
            let k = max_candidates.max(1).min(cands.len());
            let shortlist: Vec<usize> = index::sample(rng, cands.len(), k).into_iter().map(|c| cands[c]).collect();
            let j = shortlist[rng.random_range(0..shortlist.len())];
            let shared = dataset
                .item(i)
                .nouns
                .intersection(&dataset.item(j).nouns)
                .cloned()
                .collect();
            return Ok(Partner {
                index: j,
                degraded: false,
                shared_nouns: shared,
            });
        }
    }
    let want = dataset.item(i).image.orientation_class();
    for _ in 0..MAX_PARTNER_ATTEMPTS {
        let j = uniform_other(i, n, rng);
        let got = dataset.item(j).image.orientation_class();
        if want.is_none() || got.is_none() || want == got {
            return Ok(Partner {
                index: j,
                degraded: false,
                shared_nouns: Vec::new(),
            });
        }
    }
    Ok(Partner {
        index: uniform_other(i, n, rng),
        degraded: true,
        shared_nouns: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExampleImage {
    Raster(RasterImage),
    Features(FeatureImage),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub index_a: usize,
    /// Equal to `index_a` in single-image mode.
    pub index_b: usize,
    /// Seed of the stream that built the example.
    pub seed: u64,
    pub order: Order,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub image: ExampleImage,
    pub positives: PositiveSet,
    pub negative: HardNegative,
    pub provenance: Provenance,
    pub degraded: bool,
    pub shared_nouns: Vec<String>,
}

fn join_images(a: &ImageSource, b: &ImageSource, order: Order, cfg: &GenConfig) -> Result<ExampleImage> {
    match (a, b) {
        (ImageSource::Features(fa), ImageSource::Features(fb)) => {
            Ok(ExampleImage::Features(concat_features(fa, fb, order)?))
        }
        (ImageSource::Raster { image: ia, .. }, ImageSource::Raster { image: ib, .. }) => {
            let mut img = concat_images(ia, ib, order)?;
            if let Some((w, h)) = cfg.final_resize {
                img = resize_bilinear(&img, w, h);
            }
            Ok(ExampleImage::Raster(img))
        }
        _ => Err(Error::Image("cannot pair a raster image with a feature image".into())),
    }
}

fn single_image(a: &ImageSource, cfg: &GenConfig) -> ExampleImage {
    match a {
        ImageSource::Features(f) => ExampleImage::Features(f.clone()),
        ImageSource::Raster { image, .. } => ExampleImage::Raster(match cfg.final_resize {
            Some((w, h)) => resize_bilinear(image, w, h),
            None => image.clone(),
        }),
    }
}

/// Builds the example for items `i` and `j` from `seed`.
///
/// Draw order: image order, positives, negative. Shared nouns are barred
/// from the swap.
pub fn build_example(
    i: usize,
    j: usize,
    dataset: &Dataset,
    cfg: &GenConfig,
    seed: u64,
    shared_nouns: &[String],
) -> Result<TrainingExample> {
    let mut rng = Rng::seed_from_u64(seed);
    let a = dataset.item(i);
    if !cfg.concat {
        let positives = make_single_positives(&a.caption, cfg.k_extra, &mut rng)?;
        let negative = make_hard_negative_within(&a.first_tagged, cfg.excluded, &HashSet::new(), &mut rng)?;
        return Ok(TrainingExample {
            image: single_image(&a.image, cfg),
            degraded: positives.degraded,
            positives,
            negative,
            provenance: Provenance {
                index_a: i,
                index_b: i,
                seed,
                order: Order::AB,
            },
            shared_nouns: Vec::new(),
        });
    }
    if i == j {
        return Err(Error::Config(format!("item {i} paired with itself")));
    }
    let b = dataset.item(j);
    let order = if rng.random_bool(0.5) { Order::AB } else { Order::BA };
    let image = join_images(&a.image, &b.image, order, cfg)?;
    let positives = make_positives(&a.caption, &b.caption, cfg.k_extra, &mut rng)?;
    let forbidden: HashSet<String> = shared_nouns.iter().cloned().collect();
    let negative = make_hard_negative(&a.first_tagged, &b.first_tagged, cfg.excluded, &forbidden, &mut rng)?;
    Ok(TrainingExample {
        image,
        degraded: positives.degraded,
        positives,
        negative,
        provenance: Provenance {
            index_a: i,
            index_b: j,
            seed,
            order,
        },
        shared_nouns: shared_nouns.to_vec(),
    })
}

/// Picks a partner for `i` and builds the example, both from `seed`.
pub fn build_for(i: usize, dataset: &Dataset, cfg: &GenConfig, seed: u64) -> Result<TrainingExample> {
    if !cfg.concat {
        return build_example(i, i, dataset, cfg, seed, &[]);
    }
    let mut prng = Rng::seed_from_u64(derive_seed(seed, Stream::Partner, &[]));
    let partner = pick_partner(i, dataset, cfg.pairing, &mut prng)?;
    let mut ex = build_example(i, partner.index, dataset, cfg, seed, &partner.shared_nouns)?;
    ex.degraded |= partner.degraded;
    Ok(ex)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub examples: Vec<TrainingExample>,
    /// Positions in the requested index list that were skipped for lack of
    /// a possible swap.
    pub skipped: Vec<usize>,
}

/// Builds one example per entry of `indices`. Example `k` draws from the
/// child stream `(seed, k)`, so the result does not depend on `exec`.
pub fn build_batch(dataset: &Dataset, indices: &[usize], cfg: &GenConfig, seed: u64, exec: Exec) -> Result<Batch> {
    if indices.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    if cfg.concat && dataset.len() < 2 {
        return Err(Error::DatasetTooSmall(dataset.len()));
    }
    let results = exec.map(indices.len(), |k| {
        build_for(indices[k], dataset, cfg, derive_seed(seed, Stream::Example, &[k as u64]))
    });
    let mut batch = Batch::default();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(ex) => batch.examples.push(ex),
            Err(Error::NoSwapPossible) => batch.skipped.push(k),
            Err(e) => return Err(e),
        }
    }
    Ok(batch)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Item;
    use crate::rng::child_rng;
    use crate::text::Lexicon;

    fn raster(w: usize, h: usize) -> ImageSource {
        ImageSource::Raster {
            path: "x.ppm".into(),
            image: RasterImage::from_fn(w, h, |x, y| [x as u8, y as u8, 0]),
        }
    }

    fn feats(v: f64) -> ImageSource {
        ImageSource::Features(FeatureImage::new(vec![v, 1.0]).unwrap())
    }

    fn ds(items: &[(&str, ImageSource)]) -> Dataset {
        let lex = Lexicon::bundled();
        Dataset::new(
            items
                .iter()
                .enumerate()
                .map(|(k, (c, img))| Item::new(format!("i{k}"), c.to_string(), img.clone(), &lex).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn two_items_pair_with_each_other() {
        let d = ds(&[("A dog runs.", raster(4, 2)), ("A cat sits.", raster(6, 3))]);
        for seed in 0..20 {
            let p = pick_partner(0, &d, PairingStrategy::RandomSameOrientation, &mut child_rng(seed, Stream::Partner, &[])).unwrap();
            assert_eq!(p.index, 1);
            assert!(!p.degraded);
        }
    }

    #[test]
    fn orientation_fallback_is_degraded() {
        let d = ds(&[
            ("A dog runs.", raster(4, 2)),
            ("A cat sits.", raster(2, 4)),
            ("A man waves.", raster(3, 5)),
        ]);
        let p = pick_partner(0, &d, PairingStrategy::RandomSameOrientation, &mut child_rng(1, Stream::Partner, &[])).unwrap();
        assert!(p.degraded);
        assert_ne!(p.index, 0);
    }

    #[test]
    fn common_noun_finds_the_only_match() {
        let d = ds(&[
            ("A dog runs in the park.", feats(0.0)),
            ("A cat sits on a mat.", feats(1.0)),
            ("The dog sleeps.", feats(2.0)),
            ("A man holds a kite.", feats(3.0)),
        ]);
        for seed in 0..50 {
            let p = pick_partner(
                0,
                &d,
                PairingStrategy::CommonNoun { max_candidates: 5 },
                &mut child_rng(seed, Stream::Partner, &[]),
            )
            .unwrap();
            assert_eq!(p.index, 2);
            assert_eq!(p.shared_nouns, vec!["dog".to_string()]);
        }
        // no shared noun: falls back to random pairing
        let p = pick_partner(3, &d, PairingStrategy::CommonNoun { max_candidates: 5 }, &mut child_rng(0, Stream::Partner, &[])).unwrap();
        assert!(p.shared_nouns.is_empty());
    }

    #[test]
    fn tiny_dataset_rejected() {
        let d = ds(&[("A dog runs.", feats(0.0))]);
        assert!(matches!(
            pick_partner(0, &d, PairingStrategy::RandomSameOrientation, &mut child_rng(0, Stream::Partner, &[])),
            Err(Error::DatasetTooSmall(1))
        ));
        assert!(matches!(
            build_batch(&d, &[0], &GenConfig::default(), 0, Exec::Serial),
            Err(Error::DatasetTooSmall(1))
        ));
    }

    #[test]
    fn shared_noun_is_never_swapped() {
        let d = ds(&[("The dog chases a cat.", feats(0.0)), ("A dog holds a red kite.", feats(1.0))]);
        let cfg = GenConfig {
            pairing: PairingStrategy::CommonNoun { max_candidates: 5 },
            k_extra: 0,
            ..GenConfig::default()
        };
        for seed in 0..200 {
            let ex = build_for(0, &d, &cfg, seed).unwrap();
            assert_eq!(ex.shared_nouns, vec!["dog".to_string()]);
            assert_ne!(ex.negative.words.0.to_lowercase(), "dog");
            assert_ne!(ex.negative.words.1.to_lowercase(), "dog");
        }
    }

    #[test]
    fn unswappable_pairs_are_skipped() {
        let d = ds(&[("A cat.", feats(0.0)), ("A cat.", feats(1.0))]);
        let b = build_batch(&d, &[0, 1], &GenConfig::default(), 5, Exec::Serial).unwrap();
        assert!(b.examples.is_empty());
        assert_eq!(b.skipped, vec![0, 1]);
    }

    #[test]
    fn provenance_reproduces_example() {
        let d = ds(&[
            ("A dog runs. It is fast. The sky is blue.", feats(0.0)),
            ("A cat sits. It is gray. The mat is red.", feats(1.0)),
            ("A man waves. He is tall. The car is old.", feats(2.0)),
        ]);
        let cfg = GenConfig::default();
        let batch = build_batch(&d, &[0, 1, 2, 0], &cfg, 11, Exec::Parallel).unwrap();
        assert_eq!(batch.examples.len(), 4);
        for ex in &batch.examples {
            let p = ex.provenance;
            let again = build_example(p.index_a, p.index_b, &d, &cfg, p.seed, &ex.shared_nouns).unwrap();
            assert_eq!(&again, ex);
        }
        assert_eq!(batch, build_batch(&d, &[0, 1, 2, 0], &cfg, 11, Exec::Serial).unwrap());
    }

    #[test]
    fn single_image_mode() {
        let d = ds(&[("The horse is eating the grass. It is sunny.", feats(0.0)), ("A cat sits.", feats(1.0))]);
        let cfg = GenConfig {
            concat: false,
            k_extra: 1,
            ..GenConfig::default()
        };
        let ex = build_for(0, &d, &cfg, 3).unwrap();
        assert_eq!(ex.negative.text, "The grass is eating the horse.");
        assert_eq!(ex.positives.p1, ex.positives.p2);
        assert_eq!(ex.positives.extra, vec!["It is sunny.".to_string()]);
        assert_eq!(ex.image, ExampleImage::Features(FeatureImage::new(vec![0.0, 1.0]).unwrap()));
    }

    #[test]
    fn final_resize_applies_after_concat() {
        let d = ds(&[("A dog runs.", raster(4, 2)), ("A cat sits.", raster(4, 2))]);
        let cfg = GenConfig {
            final_resize: Some((3, 3)),
            k_extra: 0,
            ..GenConfig::default()
        };
        match build_for(0, &d, &cfg, 0).unwrap().image {
            ExampleImage::Raster(img) => assert_eq!((img.width(), img.height()), (3, 3)),
            _ => panic!("expected raster"),
        }
    }
}
