//! Universal POS tags, the whitespace tokenizer and the lexicon tagger.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 17 coarse universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum UposTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl UposTag {
    pub const ALL: [UposTag; 17] = [
        UposTag::Adj,
        UposTag::Adp,
        UposTag::Adv,
        UposTag::Aux,
        UposTag::Cconj,
        UposTag::Det,
        UposTag::Intj,
        UposTag::Noun,
        UposTag::Num,
        UposTag::Part,
        UposTag::Pron,
        UposTag::Propn,
        UposTag::Punct,
        UposTag::Sconj,
        UposTag::Sym,
        UposTag::Verb,
        UposTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            UposTag::Adj => "ADJ",
            UposTag::Adp => "ADP",
            UposTag::Adv => "ADV",
            UposTag::Aux => "AUX",
            UposTag::Cconj => "CCONJ",
            UposTag::Det => "DET",
            UposTag::Intj => "INTJ",
            UposTag::Noun => "NOUN",
            UposTag::Num => "NUM",
            UposTag::Part => "PART",
            UposTag::Pron => "PRON",
            UposTag::Propn => "PROPN",
            UposTag::Punct => "PUNCT",
            UposTag::Sconj => "SCONJ",
            UposTag::Sym => "SYM",
            UposTag::Verb => "VERB",
            UposTag::X => "X",
        }
    }

    fn bit(self) -> u32 {
        1 << (self as u32)
    }
}

impl fmt::Display for UposTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UposTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UposTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown POS tag `{s}`"))
    }
}

/// A set of tags, stored as a bitmask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TagSet(u32);

impl TagSet {
    pub const EMPTY: TagSet = TagSet(0);

    /// Categories never nominated for a swap.
    pub fn swap_excluded() -> Self {
        [
            UposTag::Aux,
            UposTag::Cconj,
            UposTag::Det,
            UposTag::Intj,
            UposTag::Part,
            UposTag::Punct,
            UposTag::Sconj,
            UposTag::Sym,
            UposTag::X,
        ]
        .into_iter()
        .collect()
    }

    pub fn contains(self, tag: UposTag) -> bool {
        self.0 & tag.bit() != 0
    }

    pub fn insert(&mut self, tag: UposTag) {
        self.0 |= tag.bit();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Members in declaration order.
    pub fn iter(self) -> impl Iterator<Item = UposTag> {
        UposTag::ALL.into_iter().filter(move |t| self.contains(*t))
    }
}

impl FromIterator<UposTag> for TagSet {
    fn from_iter<I: IntoIterator<Item = UposTag>>(iter: I) -> Self {
        let mut s = TagSet::EMPTY;
        for t in iter {
            s.insert(t);
        }
        s
    }
}

/// Anything that can assign a tag to a single word.
pub trait Tagger {
    fn tag_word(&self, word: &str) -> UposTag;
}

/// Exact-match lexicon with ordered suffix fallbacks.
#[derive(Debug, Clone)]
pub struct Lexicon {
    entries: HashMap<String, UposTag>,
    suffix_rules: Vec<(String, UposTag)>,
    default_tag: UposTag,
}

const BUNDLED: &str = include_str!("../../data/lexicon.tsv");

impl Lexicon {
    pub fn empty(default_tag: UposTag) -> Self {
        Self {
            entries: HashMap::new(),
            suffix_rules: Vec::new(),
            default_tag,
        }
    }

    /// The lexicon shipped with the crate; unknown words default to NOUN.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, UposTag::Noun).expect("bundled lexicon parses")
    }

    pub fn from_path(path: &Path, default_tag: UposTag) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, default_tag)
    }

    /// Parses the `word<TAB>TAG` format. A `[suffix]` section header switches
    /// to `-suffix<TAB>TAG` rules; `[words]` switches back. Lines starting
    /// with `#` and blank lines are ignored. The first entry for a word wins.
    pub fn parse(text: &str, default_tag: UposTag) -> Result<Self> {
        let mut lex = Self::empty(default_tag);
        let mut in_suffix = false;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            match trimmed {
                "[suffix]" => {
                    in_suffix = true;
                    continue;
                }
                "[words]" => {
                    in_suffix = false;
                    continue;
                }
                _ => {}
            }
            let bad = |reason: String| Error::Lexicon {
                line: no + 1,
                reason,
            };
            let (key, tag) = line
                .split_once('\t')
                .ok_or_else(|| bad("expected `word<TAB>TAG`".into()))?;
            let tag: UposTag = tag.trim().parse().map_err(bad)?;
            if in_suffix {
                let suffix = key
                    .strip_prefix('-')
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| bad("suffix rules look like `-ing<TAB>VERB`".into()))?;
                lex.suffix_rules.push((suffix.to_lowercase(), tag));
            } else {
                if key.is_empty() || key.chars().any(char::is_whitespace) {
                    return Err(bad(format!("invalid word `{key}`")));
                }
                lex.entries.entry(key.to_lowercase()).or_insert(tag);
            }
        }
        Ok(lex)
    }

    pub fn insert(&mut self, word: &str, tag: UposTag) {
        self.entries.insert(word.to_lowercase(), tag);
    }

    pub fn push_suffix_rule(&mut self, suffix: &str, tag: UposTag) {
        self.suffix_rules.push((suffix.to_lowercase(), tag));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn default_tag(&self) -> UposTag {
        self.default_tag
    }
}

impl Tagger for Lexicon {
    fn tag_word(&self, word: &str) -> UposTag {
        let lower = word.to_lowercase();
        if let Some(&t) = self.entries.get(&lower) {
            return t;
        }
        self.suffix_rules
            .iter()
            .find(|(suffix, _)| lower.len() > suffix.len() && lower.ends_with(suffix.as_str()))
            .map_or(self.default_tag, |&(_, t)| t)
    }
}

/// One token plus the whitespace that preceded it in the source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub surface: String,
    pub tag: UposTag,
    /// Whitespace between the previous token and this one.
    pub space_before: String,
    /// False for punctuation split off a word's edge (or a pure-punctuation chunk).
    pub is_word: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TaggedSentence {
    pub tokens: Vec<Token>,
    pub source: String,
}

impl TaggedSentence {
    pub fn detokenize(&self) -> String {
        detokenize(&self.tokens)
    }

    /// Indices of word tokens.
    pub fn word_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.tokens
            .iter()
            .enumerate()
            .filter(|(_, t)| t.is_word)
            .map(|(i, _)| i)
    }

    /// Lowercased surfaces of all words tagged `tag`.
    pub fn words_with_tag(&self, tag: UposTag) -> Vec<String> {
        self.tokens
            .iter()
            .filter(|t| t.is_word && t.tag == tag)
            .map(|t| t.surface.to_lowercase())
            .collect()
    }
}

pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&t.space_before);
        out.push_str(&t.surface);
    }
    out
}

fn is_edge_punct(c: char) -> bool {
    matches!(
        c,
        '.' | ','
            | ';'
            | ':'
            | '!'
            | '?'
            | '"'
            | '\''
            | '('
            | ')'
            | '['
            | ']'
            | '{'
            | '}'
            | '…'
            | '–'
            | '—'
            | '“'
            | '”'
            | '‘'
            | '’'
            | '«'
            | '»'
    )
}

/// Untagged token: `(surface, space_before, is_word)`.
pub type RawToken = (String, String, bool);

/// Splits on whitespace; a run of punctuation at either edge of a chunk
/// becomes its own token.
pub fn tokenize(s: &str) -> Vec<RawToken> {
    let mut out = Vec::new();
    let mut rest = s;
    loop {
        let ws_len = rest.len() - rest.trim_start().len();
        let (ws, after) = rest.split_at(ws_len);
        if after.is_empty() {
            break;
        }
        let chunk_len = after.find(char::is_whitespace).unwrap_or(after.len());
        let (chunk, tail) = after.split_at(chunk_len);
        rest = tail;

        let lead_len = chunk.len() - chunk.trim_start_matches(is_edge_punct).len();
        let (lead, body) = chunk.split_at(lead_len);
        let trail_len = body.len() - body.trim_end_matches(is_edge_punct).len();
        let (core, trail) = body.split_at(body.len() - trail_len);

        let mut space = ws.to_string();
        for (piece, is_word) in [(lead, false), (core, true), (trail, false)] {
            if piece.is_empty() {
                continue;
            }
            out.push((piece.to_string(), std::mem::take(&mut space), is_word));
        }
    }
    out
}

/// Tokenizes and tags one sentence.
pub fn tag_sentence<T: Tagger + ?Sized>(sentence: &str, tagger: &T) -> Result<TaggedSentence> {
    if sentence.trim().is_empty() {
        return Err(Error::EmptySentence);
    }
    let tokens = tokenize(sentence)
        .into_iter()
        .map(|(surface, space_before, is_word)| {
            let tag = if is_word {
                tagger.tag_word(&surface)
            } else {
                UposTag::Punct
            };
            Token {
                surface,
                tag,
                space_before,
                is_word,
            }
        })
        .collect();
    Ok(TaggedSentence {
        tokens,
        source: sentence.to_string(),
    })
}
