//! Synthetic attribute-object scenes with feature images.
//!
//! A scene binds two distinct attributes to two distinct objects. Its
//! feature vector has a bag-of-concepts block (attribute and object
//! counts) followed by a bound-pair block (one slot per attribute-object
//! combination), plus optional gaussian noise. Only the second block
//! separates a scene from its attribute-swapped twin.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, ImageSource, Item};
use crate::error::{Error, Result};
use crate::image::FeatureImage;
use crate::linalg::Matrix;
use crate::rng::{child_rng, Rng, Stream};
use crate::text::{join_sentences, Lexicon};

use super::encoder::{ImageEncoder, TextEncoder, Vocab};

pub const ATTRIBUTES: [&str; 11] = [
    "red", "blue", "green", "yellow", "purple", "pink", "brown", "black", "white", "gray", "orange",
];

pub const OBJECTS: [&str; 16] = [
    "ball", "cube", "cone", "star", "box", "cup", "hat", "key", "bell", "drum", "kite", "vase", "lamp", "book", "shoe",
    "bowl",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_objects: usize,
    pub n_attributes: usize,
    pub n_scenes: usize,
    pub noise_sigma: f64,
    /// Magnitude of the bound-pair slots relative to the concept counts.
    pub binding_strength: f64,
    /// Held-out scenes for evaluation (rounded down to an even count,
    /// since each scene is held out together with its swapped twin).
    pub eval_scenes: usize,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_objects: 8,
            n_attributes: 8,
            n_scenes: 2000,
            noise_sigma: 0.05,
            binding_strength: 1.0,
            eval_scenes: 200,
            seed: 0,
        }
    }
}

/// Two `(attribute, object)` bindings in caption order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Scene {
    pub bindings: [(usize, usize); 2],
}

impl Scene {
    pub fn swapped(self) -> Scene {
        let [(a1, o1), (a2, o2)] = self.bindings;
        Scene {
            bindings: [(a2, o1), (a1, o2)],
        }
    }

    pub fn reversed(self) -> Scene {
        let [x, y] = self.bindings;
        Scene { bindings: [y, x] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    SwapAtt,
    ReplaceAtt,
    ReplaceObj,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::SwapAtt, Category::ReplaceAtt, Category::ReplaceObj];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::SwapAtt => "swap-att",
            Category::ReplaceAtt => "replace-att",
            Category::ReplaceObj => "replace-obj",
        }
    }
}

/// Image features with a correct caption, its clause-reversed paraphrase
/// and a hard negative.
#[derive(Debug, Clone, PartialEq)]
pub struct TextQuadruple {
    pub category: Category,
    pub image: Vec<f64>,
    pub p1: String,
    pub p2: String,
    pub n: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextWinoItem {
    pub c0: String,
    pub c1: String,
    pub i0: Vec<f64>,
    pub i1: Vec<f64>,
}

/// Row `k` of `images` matches entry `k` of `texts`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RetrievalSet {
    pub images: Vec<Vec<f64>>,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalSet {
    pub quadruples: Vec<TextQuadruple>,
    pub wino: Vec<TextWinoItem>,
    pub retrieval: RetrievalSet,
}

#[derive(Debug, Clone)]
pub struct ToyWorld {
    pub config: WorldConfig,
    pub dataset: Dataset,
    /// Same images as `dataset`, captions that never pair an attribute
    /// with its object.
    pub pretrain: Dataset,
    pub train_scenes: Vec<Scene>,
    pub eval_scenes: Vec<Scene>,
    pub eval: EvalSet,
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(2..=OBJECTS.len()).contains(&self.n_objects) {
            return Err(Error::Config(format!("n_objects must lie in 2..={}", OBJECTS.len())));
        }
        if !(2..=ATTRIBUTES.len()).contains(&self.n_attributes) {
            return Err(Error::Config(format!("n_attributes must lie in 2..={}", ATTRIBUTES.len())));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Config("noise_sigma must be non-negative".into()));
        }
        if !(self.binding_strength.is_finite() && self.binding_strength > 0.0) {
            return Err(Error::Config("binding_strength must be positive".into()));
        }
        if self.n_scenes < 2 {
            return Err(Error::Config("n_scenes must be at least 2".into()));
        }
        if self.eval_scenes / 2 >= self.orbits() {
            return Err(Error::Config(format!(
                "eval_scenes leaves no training scenes ({} swap pairs available)",
                self.orbits()
            )));
        }
        Ok(())
    }

    fn orbits(&self) -> usize {
        let c2 = |n: usize| n * (n - 1) / 2;
        c2(self.n_objects) * c2(self.n_attributes)
    }

    /// Feature dimension of one scene.
    pub fn feature_dim(&self) -> usize {
        self.n_attributes + self.n_objects + self.n_attributes * self.n_objects
    }

    pub fn bound_slot(&self, attr: usize, obj: usize) -> usize {
        self.n_attributes + self.n_objects + attr * self.n_objects + obj
    }
}

pub fn sentence(bindings: &[(usize, usize); 2]) -> String {
    let [(a1, o1), (a2, o2)] = *bindings;
    format!("the {} {} and the {} {}.", ATTRIBUTES[a1], OBJECTS[o1], ATTRIBUTES[a2], OBJECTS[o2])
}

/// Caption naming the concepts without tying attributes to objects.
pub fn loose_caption(scene: Scene, rng: &mut Rng) -> String {
    let [(a1, o1), (a2, o2)] = scene.bindings;
    let (x, y) = if rng.random_bool(0.5) { (a1, a2) } else { (a2, a1) };
    format!(
        "a {} and a {} in {} and {}. the {} is here. the {} is here.",
        OBJECTS[o1], OBJECTS[o2], ATTRIBUTES[x], ATTRIBUTES[y], OBJECTS[o1], OBJECTS[o2]
    )
}

/// Three-sentence training caption.
pub fn caption(scene: Scene) -> String {
    let [(a1, o1), (a2, o2)] = scene.bindings;
    format!(
        "{} there is a {} {}. there is a {} {}.",
        sentence(&scene.bindings),
        ATTRIBUTES[a1],
        OBJECTS[o1],
        ATTRIBUTES[a2],
        OBJECTS[o2]
    )
}

pub fn scene_features(cfg: &WorldConfig, scene: Scene, rng: &mut Rng) -> Vec<f64> {
    let mut x = vec![0.0; cfg.feature_dim()];
    for (a, o) in scene.bindings {
        x[a] += 1.0;
        x[cfg.n_attributes + o] += 1.0;
        x[cfg.bound_slot(a, o)] += cfg.binding_strength;
    }
    if cfg.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_sigma).expect("valid sigma");
        x.iter_mut().for_each(|v| *v += normal.sample(rng));
    }
    x
}

fn pick_other(n: usize, avoid: [usize; 2], rng: &mut Rng) -> usize {
    loop {
        let k = rng.random_range(0..n);
        if !avoid.contains(&k) {
            return k;
        }
    }
}

/// Builds the training dataset and the held-out evaluation suites.
pub fn make_toy_world(cfg: &WorldConfig) -> Result<ToyWorld> {
    cfg.validate()?;
    // one orbit = an object pair and an attribute pair; its two scenes are
    // swaps of each other and are held out together
    let mut orbits = Vec::with_capacity(cfg.orbits());
    for o1 in 0..cfg.n_objects {
        for o2 in o1 + 1..cfg.n_objects {
            for a1 in 0..cfg.n_attributes {
                for a2 in a1 + 1..cfg.n_attributes {
                    orbits.push(Scene {
                        bindings: [(a1, o1), (a2, o2)],
                    });
                }
            }
        }
    }
    let mut rng = child_rng(cfg.seed, Stream::World, &[0]);
    orbits.shuffle(&mut rng);
    let (held, train) = orbits.split_at(cfg.eval_scenes / 2);
    let pool: Vec<Scene> = train.iter().flat_map(|&s| [s, s.swapped()]).collect();

    let lex = Lexicon::bundled();
    let mut train_scenes = Vec::with_capacity(cfg.n_scenes);
    let mut items = Vec::with_capacity(cfg.n_scenes);
    let mut loose = Vec::with_capacity(cfg.n_scenes);
    for k in 0..cfg.n_scenes {
        let mut s = pool[rng.random_range(0..pool.len())];
        if rng.random_bool(0.5) {
            s = s.reversed();
        }
        let image = ImageSource::Features(FeatureImage::new(scene_features(cfg, s, &mut rng))?);
        loose.push(Item::new(format!("s{k:05}"), loose_caption(s, &mut rng), image.clone(), &lex)?);
        items.push(Item::new(format!("s{k:05}"), caption(s), image, &lex)?);
        train_scenes.push(s);
    }
    let dataset = Dataset::new(items)?;
    let pretrain = Dataset::new(loose)?;

    let mut erng = child_rng(cfg.seed, Stream::World, &[1]);
    let eval_scenes: Vec<Scene> = held.iter().flat_map(|&s| [s, s.swapped()]).collect();
    let mut eval = EvalSet::default();
    let images: Vec<Vec<f64>> = eval_scenes.iter().map(|&s| scene_features(cfg, s, &mut erng)).collect();
    for (s, img) in eval_scenes.iter().zip(&images) {
        let [(a1, o1), (a2, o2)] = s.bindings;
        let p1 = sentence(&s.bindings);
        let p2 = sentence(&s.reversed().bindings);
        let ra = pick_other(cfg.n_attributes, [a1, a2], &mut erng);
        let ro = pick_other(cfg.n_objects, [o1, o2], &mut erng);
        for (category, neg) in [
            (Category::SwapAtt, [(a2, o1), (a1, o2)]),
            (Category::ReplaceAtt, [(ra, o1), (a2, o2)]),
            (Category::ReplaceObj, [(a1, ro), (a2, o2)]),
        ] {
            eval.quadruples.push(TextQuadruple {
                category,
                image: img.clone(),
                p1: p1.clone(),
                p2: p2.clone(),
                n: sentence(&neg),
            });
        }
        eval.retrieval.images.push(img.clone());
        eval.retrieval.texts.push(p1);
    }
    for pair in images.chunks(2).zip(eval_scenes.chunks(2)) {
        let (imgs, scenes) = pair;
        eval.wino.push(TextWinoItem {
            c0: sentence(&scenes[0].bindings),
            c1: sentence(&scenes[1].bindings),
            i0: imgs[0].clone(),
            i1: imgs[1].clone(),
        });
    }
    Ok(ToyWorld {
        config: *cfg,
        dataset,
        pretrain,
        train_scenes,
        eval_scenes,
        eval,
    })
}

impl ToyWorld {
    /// Every sentence of both caption sets, plus the bigram where one
    /// first sentence meets the next in a concatenated caption. Without
    /// it `p1` and `p2` would share one bag of tokens.
    pub fn vocab(&self) -> Vocab {
        let head = self.dataset.item(0).caption.first();
        let junctions: Vec<String> = self
            .dataset
            .items()
            .iter()
            .map(|it| join_sentences(it.caption.first(), head))
            .collect();
        Vocab::from_texts(
            [&self.dataset, &self.pretrain]
                .into_iter()
                .flat_map(|d| d.items())
                .flat_map(|it| it.caption.sentences().iter().map(String::as_str))
                .chain(junctions.iter().map(String::as_str)),
        )
    }

    /// Hand-built encoders that read bindings exactly: the text side maps
    /// each `attribute object` bigram to its own axis, the image side maps
    /// the matching bound-pair slot to the same axis. All other tokens share
    /// one small extra axis so every caption has a non-zero embedding.
    pub fn oracle_encoders(&self) -> (TextEncoder, ImageEncoder) {
        let c = &self.config;
        let d = c.n_attributes * c.n_objects + 1;
        let vocab = self.vocab();
        let mut w = Matrix::zeros(vocab.len(), d);
        for (t, tok) in vocab.tokens().iter().enumerate() {
            let axis = tok.split_once(' ').and_then(|(a, o)| {
                let a = ATTRIBUTES[..c.n_attributes].iter().position(|x| *x == a)?;
                let o = OBJECTS[..c.n_objects].iter().position(|x| *x == o)?;
                Some(a * c.n_objects + o)
            });
            match axis {
                Some(k) => w.set(t, k, 1.0),
                None => w.set(t, d - 1, 1e-3),
            }
        }
        let mut v = Matrix::zeros(c.feature_dim(), d);
        for a in 0..c.n_attributes {
            for o in 0..c.n_objects {
                v.set(c.bound_slot(a, o), a * c.n_objects + o, 1.0);
            }
        }
        (TextEncoder { vocab, w }, ImageEncoder { v })
    }
}
