//! Flat `key = value` run configuration shared by every command.
//!
//! A file holds one `key = value` pair per line; `#` starts a comment and
//! blank lines are skipped. Unknown and repeated keys are errors. The
//! optional `preset` key picks the base training configuration and every
//! other key overrides one field of it, independent of line order.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{hex16, Dataset};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::text::{Lexicon, UposTag};
use crate::train::{Pairing, Preset, TrainConfig, WorldConfig};

/// Every accepted key with a one-line description, in rendering order.
pub const KEYS: [(&str, &str); 39] = [
    ("preset", "base configuration: c1..c5, b1..b4, negclip, pretrain"),
    ("seed", "master seed for every random stream"),
    ("batch_size", "examples per step"),
    ("steps", "total optimizer steps"),
    ("warmup_frac", "fraction of steps spent in linear warmup"),
    ("lr_start", "learning rate at step 0"),
    ("lr_peak", "learning rate at the end of warmup"),
    ("lr_end", "learning rate at the final step"),
    ("beta1", "AdamW first-moment decay"),
    ("beta2", "AdamW second-moment decay"),
    ("eps", "AdamW denominator epsilon"),
    ("weight_decay", "decoupled weight decay"),
    ("w_cont", "weight of the multi-positive contrastive term"),
    ("w_sneg", "weight of the single hard-negative term"),
    ("w_uni", "weight of the uni-modal term"),
    ("freeze", "none, vision or text"),
    ("alternate", "run a plain contrastive step every second iteration"),
    ("k_extra", "extra positives beyond p1 and p2 (0..=3)"),
    ("multi_positive", "train on every positive instead of p1 alone"),
    ("concat", "join two images per example; false selects single-image mode"),
    ("pairing", "random or common-noun"),
    ("max_candidates", "candidate pool for common-noun pairing"),
    ("objective", "clic, negclip or clip"),
    ("temperature", "logit scale applied to inner products"),
    ("embed_dim", "embedding width of both encoders"),
    ("warm_start_steps", "plain contrastive warm-start steps on the toy world (0 skips)"),
    ("world_objects", "toy world object vocabulary size"),
    ("world_attributes", "toy world attribute vocabulary size"),
    ("world_scenes", "toy world training scenes"),
    ("world_noise", "std of gaussian feature noise"),
    ("world_binding", "magnitude of bound attribute-object features"),
    ("world_eval_scenes", "held-out evaluation scenes"),
    ("world_seed", "seed of the toy world generator"),
    ("dataset", "JSONL corpus; empty uses the toy world"),
    ("lexicon", "tab-separated lexicon; empty uses the bundled one"),
    ("checkpoint", "checkpoint path"),
    ("metrics", "metrics CSV path"),
    ("report", "evaluation report JSON path"),
    ("threads", "worker threads; 1 runs serially, 0 uses every core"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Config {
    pub preset: Preset,
    pub train: TrainConfig,
    pub world: WorldConfig,
    pub warm_start_steps: u64,
    pub dataset: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub report: PathBuf,
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        let preset = Preset::C5;
        Self {
            preset,
            train: TrainConfig::preset(preset),
            world: WorldConfig::default(),
            warm_start_steps: TrainConfig::preset(Preset::Pretrain).schedule.total_steps,
            dataset: None,
            lexicon: None,
            checkpoint: PathBuf::from("model.ckpt"),
            metrics: PathBuf::from("metrics.csv"),
            report: PathBuf::from("report.json"),
            threads: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("`{key}`: cannot parse `{value}`: {e}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or(String::new(), |p| p.display().to_string())
}

impl Config {
    /// Parses `key = value` text; relative paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", no + 1)))?;
            let (k, v) = (k.trim(), v.trim().trim_matches('"'));
            if !KEYS.iter().any(|(name, _)| *name == k) {
                return Err(Error::Config(format!("line {}: unknown key `{k}`", no + 1)));
            }
            if pairs.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: key `{k}` repeated", no + 1)));
            }
        }
        let mut cfg = Config::default();
        if let Some(p) = pairs.remove("preset") {
            cfg.preset = p.parse()?;
            cfg.train = TrainConfig::preset(cfg.preset);
        }
        // max_candidates only means something together with pairing
        let candidates = pairs.remove("max_candidates");
        for (k, v) in &pairs {
            cfg.set(k, v)?;
        }
        if let Some(c) = candidates {
            match &mut cfg.train.pairing {
                Pairing::CommonNoun { max_candidates } => *max_candidates = parse("max_candidates", &c)?,
                Pairing::Random => return Err(Error::Config("`max_candidates` needs `pairing = common-noun`".into())),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        cfg.dataset.as_mut().map(resolve);
        cfg.lexicon.as_mut().map(resolve);
        resolve(&mut cfg.checkpoint);
        resolve(&mut cfg.metrics);
        resolve(&mut cfg.report);
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "seed" => t.seed = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "steps" => t.schedule.total_steps = parse(key, v)?,
            "warmup_frac" => t.schedule.warmup_frac = parse(key, v)?,
            "lr_start" => t.schedule.lr_start = parse(key, v)?,
            "lr_peak" => t.schedule.lr_peak = parse(key, v)?,
            "lr_end" => t.schedule.lr_end = parse(key, v)?,
            "beta1" => t.adamw.beta1 = parse(key, v)?,
            "beta2" => t.adamw.beta2 = parse(key, v)?,
            "eps" => t.adamw.eps = parse(key, v)?,
            "weight_decay" => t.adamw.weight_decay = parse(key, v)?,
            "w_cont" => t.weights.cont = parse(key, v)?,
            "w_sneg" => t.weights.sneg = parse(key, v)?,
            "w_uni" => t.weights.uni = parse(key, v)?,
            "freeze" => t.freeze = v.parse()?,
            "alternate" => t.alternate = parse(key, v)?,
            "k_extra" => t.k_extra = parse(key, v)?,
            "multi_positive" => t.multi_positive = parse(key, v)?,
            "concat" => t.concat = parse(key, v)?,
            "pairing" => {
                t.pairing = match v {
                    "random" => Pairing::Random,
                    "common-noun" => Pairing::CommonNoun { max_candidates: 10 },
                    _ => return Err(Error::Config(format!("unknown pairing `{v}`"))),
                }
            }
            "objective" => t.objective = v.parse()?,
            "temperature" => t.temperature = parse(key, v)?,
            "embed_dim" => t.embed_dim = parse(key, v)?,
            "warm_start_steps" => self.warm_start_steps = parse(key, v)?,
            "world_objects" => self.world.n_objects = parse(key, v)?,
            "world_attributes" => self.world.n_attributes = parse(key, v)?,
            "world_scenes" => self.world.n_scenes = parse(key, v)?,
            "world_noise" => self.world.noise_sigma = parse(key, v)?,
            "world_binding" => self.world.binding_strength = parse(key, v)?,
            "world_eval_scenes" => self.world.eval_scenes = parse(key, v)?,
            "world_seed" => self.world.seed = parse(key, v)?,
            "dataset" => self.dataset = opt_path(v),
            "lexicon" => self.lexicon = opt_path(v),
            "checkpoint" => self.checkpoint = PathBuf::from(v),
            "metrics" => self.metrics = PathBuf::from(v),
            "report" => self.report = PathBuf::from(v),
            "threads" => self.threads = parse(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let t = &self.train;
        match key {
            "preset" => self.preset.as_str().to_string(),
            "seed" => t.seed.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "steps" => t.schedule.total_steps.to_string(),
            "warmup_frac" => t.schedule.warmup_frac.to_string(),
            "lr_start" => format!("{:e}", t.schedule.lr_start),
            "lr_peak" => format!("{:e}", t.schedule.lr_peak),
            "lr_end" => format!("{:e}", t.schedule.lr_end),
            "beta1" => t.adamw.beta1.to_string(),
            "beta2" => t.adamw.beta2.to_string(),
            "eps" => format!("{:e}", t.adamw.eps),
            "weight_decay" => t.adamw.weight_decay.to_string(),
            "w_cont" => t.weights.cont.to_string(),
            "w_sneg" => t.weights.sneg.to_string(),
            "w_uni" => t.weights.uni.to_string(),
            "freeze" => t.freeze.as_str().to_string(),
            "alternate" => t.alternate.to_string(),
            "k_extra" => t.k_extra.to_string(),
            "multi_positive" => t.multi_positive.to_string(),
            "concat" => t.concat.to_string(),
            "pairing" => match t.pairing {
                Pairing::Random => "random".into(),
                Pairing::CommonNoun { .. } => "common-noun".into(),
            },
            "max_candidates" => match t.pairing {
                Pairing::Random => String::new(),
                Pairing::CommonNoun { max_candidates } => max_candidates.to_string(),
            },
            "objective" => t.objective.as_str().to_string(),
            "temperature" => t.temperature.to_string(),
            "embed_dim" => t.embed_dim.to_string(),
            "warm_start_steps" => self.warm_start_steps.to_string(),
            "world_objects" => self.world.n_objects.to_string(),
            "world_attributes" => self.world.n_attributes.to_string(),
            "world_scenes" => self.world.n_scenes.to_string(),
            "world_noise" => self.world.noise_sigma.to_string(),
            "world_binding" => self.world.binding_strength.to_string(),
            "world_eval_scenes" => self.world.eval_scenes.to_string(),
            "world_seed" => self.world.seed.to_string(),
            "dataset" => show_path(&self.dataset),
            "lexicon" => show_path(&self.lexicon),
            "checkpoint" => self.checkpoint.display().to_string(),
            "metrics" => self.metrics.display().to_string(),
            "report" => self.report.display().to_string(),
            "threads" => self.threads.to_string(),
            _ => unreachable!("key table and getter disagree"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.warm_start_steps == 1 {
            return Err(Error::Config("warm_start_steps must be 0 or at least 2".into()));
        }
        if self.dataset.is_none() {
            self.world.validate()?;
        }
        Ok(())
    }

    /// Renders every key with its current value and description; parsing
    /// the output yields `self` again.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (key, doc) in KEYS {
            let value = self.get(key);
            if key == "max_candidates" && value.is_empty() {
                out.push_str(&format!("# {doc}\n# {key} =\n"));
            } else {
                out.push_str(&format!("# {doc}\n{key} = {value}\n"));
            }
        }
        out
    }

    /// Content hash of every setting that influences results; output
    /// paths and the thread count are left out.
    pub fn hash(&self) -> String {
        #[derive(Serialize)]
        struct Hashed<'a> {
            train: &'a TrainConfig,
            world: &'a WorldConfig,
            warm_start_steps: u64,
            dataset: Option<String>,
            lexicon: Option<String>,
        }
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
        };
        let h = Hashed {
            train: &self.train,
            world: &self.world,
            warm_start_steps: self.warm_start_steps,
            dataset: name(&self.dataset),
            lexicon: name(&self.lexicon),
        };
        let json = serde_json::to_string(&h).expect("config serializes");
        hex16(&Sha256::digest(json.as_bytes()))
    }

    pub fn exec(&self) -> Exec {
        Exec::from_threads(self.threads)
    }

    pub fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Lexicon::from_path(p, UposTag::Noun),
            None => Ok(Lexicon::bundled()),
        }
    }

    /// The configured JSONL corpus, if any.
    pub fn load_dataset(&self) -> Result<Option<Dataset>> {
        match &self.dataset {
            Some(p) => Ok(Some(Dataset::from_jsonl(p, &self.lexicon()?)?)),
            None => Ok(None),
        }
    }
}
