//! Image-caption corpora: JSONL ingestion and the in-memory dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{read_ppm, FeatureImage, Orientation, RasterImage};
use crate::text::{parse_caption, tag_sentence, Caption, RawCaption, TaggedSentence, Tagger, UposTag};

/// One JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub caption: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Raster { path: PathBuf, image: RasterImage },
    Features(FeatureImage),
}

impl ImageSource {
    /// `None` for feature images, which pair with anything.
    pub fn orientation_class(&self) -> Option<Orientation> {
        match self {
            ImageSource::Raster { image, .. } => Some(image.orientation().class()),
            ImageSource::Features(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Item {
    pub id: String,
    pub raw_caption: String,
    pub caption: Caption,
    pub first_tagged: TaggedSentence,
    /// Lowercased NOUN surfaces of the first sentence.
    pub nouns: BTreeSet<String>,
    pub image: ImageSource,
}

impl Item {
    pub fn new<T: Tagger + ?Sized>(id: String, caption: String, image: ImageSource, tagger: &T) -> Result<Self> {
        let parsed = parse_caption(&RawCaption {
            id: id.clone(),
            text: caption.clone(),
        })?;
        let first_tagged = tag_sentence(parsed.first(), tagger)?;
        let nouns = first_tagged.words_with_tag(UposTag::Noun).into_iter().collect();
        Ok(Self {
            id,
            raw_caption: caption,
            caption: parsed,
            first_tagged,
            nouns,
            image,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    items: Vec<Item>,
    by_noun: BTreeMap<String, Vec<usize>>,
}

impl Dataset {
    pub fn new(items: Vec<Item>) -> Result<Self> {
        let dims: BTreeSet<usize> = items
            .iter()
            .filter_map(|it| match &it.image {
                ImageSource::Features(f) => Some(f.dim()),
                _ => None,
            })
            .collect();
        if dims.len() > 1 {
            return Err(Error::Corpus {
                line: 0,
                reason: format!("feature dimensions differ: {dims:?}"),
            });
        }
        let mut by_noun: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, it) in items.iter().enumerate() {
            for n in &it.nouns {
                by_noun.entry(n.clone()).or_default().push(i);
            }
        }
        Ok(Self { items, by_noun })
    }

    /// Reads a JSONL corpus; image paths are relative to the file's folder.
    pub fn from_jsonl<T: Tagger + ?Sized>(path: &Path, tagger: &T) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        let mut items = Vec::new();
        for (no, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Corpus { line: no + 1, reason };
            let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            let image = match (rec.image, rec.features) {
                (Some(p), None) => {
                    let full = base.join(&p);
                    let image = read_ppm(&full)?;
                    ImageSource::Raster {
                        path: PathBuf::from(p),
                        image,
                    }
                }
                (None, Some(f)) => ImageSource::Features(FeatureImage::new(f).map_err(|e| bad(e.to_string()))?),
                _ => return Err(bad("need exactly one of `image` or `features`".into())),
            };
            items.push(Item::new(rec.id, rec.caption, image, tagger).map_err(|e| bad(e.to_string()))?);
        }
        Self::new(items)
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &Item {
        &self.items[i]
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.items.iter().position(|it| it.id == id)
    }

    /// Items (other than `i`) whose first sentence shares a noun with `i`'s.
    pub fn noun_neighbours(&self, i: usize) -> Vec<usize> {
        let set: BTreeSet<usize> = self.items[i]
            .nouns
            .iter()
            .filter_map(|n| self.by_noun.get(n))
            .flatten()
            .copied()
            .filter(|&j| j != i)
            .collect();
        set.into_iter().collect()
    }

    /// Content hash over ids, captions and image data.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for it in &self.items {
            h.update(it.id.as_bytes());
            h.update([0]);
            h.update(it.raw_caption.as_bytes());
            h.update([0]);
            match &it.image {
                ImageSource::Raster { image, .. } => {
                    h.update((image.width() as u64).to_le_bytes());
                    h.update((image.height() as u64).to_le_bytes());
                    h.update(image.data());
                }
                ImageSource::Features(f) => {
                    for x in &f.features {
                        h.update(x.to_le_bytes());
                    }
                }
            }
        }
        hex16(&h.finalize())
    }
}

pub(crate) fn hex16(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
