//! Training configuration and the named ablation presets.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batch::{GenConfig, PairingStrategy};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::text::{TagSet, MAX_EXTRA_POSITIVES};

use super::optim::{AdamW, Schedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Freeze {
    #[default]
    None,
    Vision,
    Text,
}

impl Freeze {
    pub fn as_str(self) -> &'static str {
        match self {
            Freeze::None => "none",
            Freeze::Vision => "vision",
            Freeze::Text => "text",
        }
    }

    pub fn text_trainable(self) -> bool {
        self != Freeze::Text
    }

    pub fn vision_trainable(self) -> bool {
        self != Freeze::Vision
    }
}

impl FromStr for Freeze {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Freeze::None),
            "vision" => Ok(Freeze::Vision),
            "text" => Ok(Freeze::Text),
            _ => Err(Error::Config(format!("unknown freeze mode `{s}`"))),
        }
    }
}

/// What the non-alternating steps optimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Weighted contrastive / hard-negative / uni-modal objective on
    /// generated examples.
    #[default]
    Clic,
    /// Batch-negative image-to-text loss plus the text-to-image
    /// contrastive half, on single images.
    NegClip,
    /// Plain contrastive loss on single images and first sentences.
    Clip,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Clic => "clic",
            Objective::NegClip => "negclip",
            Objective::Clip => "clip",
        }
    }
}

impl FromStr for Objective {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clic" => Ok(Objective::Clic),
            "negclip" => Ok(Objective::NegClip),
            "clip" => Ok(Objective::Clip),
            _ => Err(Error::Config(format!("unknown objective `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub schedule: Schedule,
    pub adamw: AdamW,
    pub weights: Weights,
    pub freeze: Freeze,
    /// Odd iterations run plain contrastive steps on single images.
    pub alternate: bool,
    pub k_extra: usize,
    /// Use `p1, p2, extras...` as positives instead of `p1` alone.
    pub multi_positive: bool,
    /// `false` builds single-image examples.
    pub concat: bool,
    pub pairing: Pairing,
    pub objective: Objective,
    pub temperature: f64,
    pub embed_dim: usize,
    pub seed: u64,
}

/// Serializable mirror of [`LossWeights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub cont: f64,
    pub sneg: f64,
    pub uni: f64,
}

impl From<Weights> for LossWeights {
    fn from(w: Weights) -> Self {
        LossWeights {
            cont: w.cont,
            sneg: w.sneg,
            uni: w.uni,
        }
    }
}

impl From<LossWeights> for Weights {
    fn from(w: LossWeights) -> Self {
        Weights {
            cont: w.cont,
            sneg: w.sneg,
            uni: w.uni,
        }
    }
}

/// Serializable mirror of [`PairingStrategy`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pairing {
    #[default]
    Random,
    CommonNoun { max_candidates: usize },
}

impl From<Pairing> for PairingStrategy {
    fn from(p: Pairing) -> Self {
        match p {
            Pairing::Random => PairingStrategy::RandomSameOrientation,
            Pairing::CommonNoun { max_candidates } => PairingStrategy::CommonNoun { max_candidates },
        }
    }
}

impl Default for TrainConfig {
    /// Full method with the published optimizer settings.
    fn default() -> Self {
        Self {
            batch_size: 64,
            schedule: Schedule::default(),
            adamw: AdamW::default(),
            weights: LossWeights::default().into(),
            freeze: Freeze::Vision,
            alternate: true,
            k_extra: 2,
            multi_positive: true,
            concat: true,
            pairing: Pairing::Random,
            objective: Objective::Clic,
            temperature: 1.0,
            embed_dim: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        self.adamw.validate()?;
        LossWeights::from(self.weights).validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if self.embed_dim == 0 {
            return Err(Error::Config("embed_dim must be at least 1".into()));
        }
        if self.k_extra > MAX_EXTRA_POSITIVES {
            return Err(Error::Config(format!("k_extra must be at most {MAX_EXTRA_POSITIVES}")));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        if self.weights.uni > 0.0 && !self.multi_positive {
            return Err(Error::Config("the uni-modal term needs multi_positive".into()));
        }
        if let Pairing::CommonNoun { max_candidates: 0 } = self.pairing {
            return Err(Error::Config("max_candidates must be at least 1".into()));
        }
        Ok(())
    }

    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            k_extra: self.k_extra,
            pairing: self.pairing.into(),
            concat: self.concat,
            excluded: TagSet::swap_excluded(),
            final_resize: None,
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        self.weights.into()
    }

    /// Short content hash of every field.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        crate::corpus::hex16(&digest)
    }

    /// Desk-scale optimizer settings shared by the toy presets.
    pub fn toy() -> Self {
        Self {
            schedule: Schedule {
                total_steps: 2000,
                warmup_frac: 0.2,
                lr_start: 3e-6,
                lr_peak: 3e-4,
                lr_end: 3e-7,
            },
            temperature: 100.0,
            ..Self::default()
        }
    }

    pub fn preset(p: Preset) -> Self {
        let base = Self::toy();
        let w = |c, s, u| Weights { cont: c, sneg: s, uni: u };
        let ablation = |concat, weights, multi: bool, alternate| Self {
            concat,
            weights,
            multi_positive: multi,
            k_extra: if multi { 2 } else { 0 },
            alternate,
            ..base.clone()
        };
        match p {
            Preset::C1 => ablation(true, w(1.0, 0.0, 0.0), false, false),
            Preset::C2 => ablation(true, w(0.5, 0.5, 0.0), false, false),
            Preset::C3 => ablation(true, w(0.5, 0.5, 0.0), true, false),
            Preset::C4 => ablation(true, w(0.5, 0.5, 1.0), true, false),
            Preset::C5 => ablation(true, w(0.5, 0.5, 1.0), true, true),
            Preset::B1 => ablation(false, w(1.0, 0.0, 0.0), false, false),
            Preset::B2 => ablation(false, w(0.5, 0.5, 0.0), false, false),
            Preset::B3 => ablation(false, w(0.5, 0.5, 0.0), true, false),
            Preset::B4 => ablation(false, w(0.5, 0.5, 0.0), true, true),
            Preset::NegClip => Self {
                objective: Objective::NegClip,
                concat: false,
                alternate: false,
                multi_positive: false,
                k_extra: 0,
                weights: w(1.0, 0.0, 0.0),
                ..base
            },
            Preset::Pretrain => Self {
                schedule: Schedule {
                    total_steps: 500,
                    warmup_frac: 0.2,
                    lr_start: 1e-4,
                    lr_peak: 1e-2,
                    lr_end: 1e-5,
                },
                temperature: 10.0,
                objective: Objective::Clip,
                freeze: Freeze::Vision,
                concat: false,
                alternate: false,
                multi_positive: false,
                k_extra: 0,
                weights: w(1.0, 0.0, 0.0),
                ..base
            },
        }
    }
}

/// Named configurations of the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    C1,
    C2,
    C3,
    C4,
    C5,
    B1,
    B2,
    B3,
    B4,
    NegClip,
    /// Warm start: plain contrastive on the text side; vision keeps its
    /// random init.
    Pretrain,
}

impl Preset {
    pub const ALL: [Preset; 11] = [
        Preset::C1,
        Preset::C2,
        Preset::C3,
        Preset::C4,
        Preset::C5,
        Preset::B1,
        Preset::B2,
        Preset::B3,
        Preset::B4,
        Preset::NegClip,
        Preset::Pretrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::C1 => "c1",
            Preset::C2 => "c2",
            Preset::C3 => "c3",
            Preset::C4 => "c4",
            Preset::C5 => "c5",
            Preset::B1 => "b1",
            Preset::B2 => "b2",
            Preset::B3 => "b3",
            Preset::B4 => "b4",
            Preset::NegClip => "negclip",
            Preset::Pretrain => "pretrain",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for Preset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown preset `{s}`")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_differ() {
        let hashes: std::collections::BTreeSet<String> =
            Preset::ALL.iter().map(|p| TrainConfig::preset(*p).hash()).collect();
        assert_eq!(hashes.len(), Preset::ALL.len());
        for p in Preset::ALL {
            TrainConfig::preset(p).validate().unwrap();
            assert_eq!(p.as_str().parse::<Preset>().unwrap(), p);
        }
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = TrainConfig::preset(Preset::C1);
        c.weights.uni = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig { k_extra: 4, ..TrainConfig::default() };
        assert!(c.validate().is_err());
        let mut c = TrainConfig::default();
        c.schedule.warmup_frac = 1.0;
        assert!(c.validate().is_err());
        let c = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
