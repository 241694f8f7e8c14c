//! Caption side of the data pipeline: cleaning, sentence splitting, POS
//! tagging, positive construction and swap-based hard negatives.

pub mod clean;
pub mod negative;
pub mod positives;
pub mod tag;

pub use clean::{clean_caption, parse_caption, split_sentences, Caption, RawCaption, DEFAULT_PREFIXES};
pub use negative::{
    cross_plan, make_hard_negative, make_hard_negative_within, within_plan, HardNegative, Swap,
    SwapPlan,
};
pub use positives::{join_sentences, make_positives, make_single_positives, PositiveSet, MAX_EXTRA_POSITIVES};
pub use tag::{detokenize, tag_sentence, tokenize, Lexicon, TagSet, TaggedSentence, Tagger, Token, UposTag};
