//! The alternating training loop.

use rand::seq::index::sample;

use crate::batch::{build_batch, ExampleImage, TrainingExample};
use crate::corpus::{Dataset, ImageSource};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::Matrix;
use crate::losses::{self, EmbeddingBatch, LossOutput};
use crate::rng::{child_rng, derive_seed, Stream};

use super::config::{Objective, TrainConfig};
use super::encoder::{ImageEncoder, TextEncoder, Vocab};
use super::optim::Moments;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Clic,
    NegClip,
    Clip,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub kind: StepKind,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_cont: f64,
    pub loss_sneg: f64,
    pub loss_uni: f64,
    /// Examples dropped because no swap existed.
    pub skipped: usize,
}

pub const METRICS_HEADER: &str = "step,lr,loss_total,loss_cont,loss_sneg,loss_uni";

impl StepMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e}",
            self.step, self.lr, self.loss_total, self.loss_cont, self.loss_sneg, self.loss_uni
        )
    }
}

/// Encoders, optimizer moments and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub config: TrainConfig,
    pub text: TextEncoder,
    pub image: ImageEncoder,
    pub text_moments: Moments,
    pub image_moments: Moments,
    /// Next step to run.
    pub step: u64,
}

fn feature_dim(ds: &Dataset) -> Result<usize> {
    match ds.items().first().map(|it| &it.image) {
        Some(ImageSource::Features(f)) => Ok(f.dim()),
        Some(ImageSource::Raster { .. }) => Err(Error::Config("training needs feature images".into())),
        None => Err(Error::DatasetTooSmall(0)),
    }
}

/// Vocabulary over every caption sentence of `ds`.
pub fn dataset_vocab(ds: &Dataset) -> Vocab {
    Vocab::from_texts(ds.items().iter().flat_map(|it| it.caption.sentences().iter().map(String::as_str)))
}

impl TrainState {
    /// Fresh gaussian encoders drawn from the config seed.
    pub fn init(config: TrainConfig, ds: &Dataset) -> Result<Self> {
        Self::init_with_vocab(config, ds, dataset_vocab(ds))
    }

    pub fn init_with_vocab(config: TrainConfig, ds: &Dataset, vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let f = feature_dim(ds)?;
        let mut rng = child_rng(config.seed, Stream::Init, &[]);
        let text = TextEncoder::random(vocab, config.embed_dim, &mut rng);
        let image = ImageEncoder::random(f, config.embed_dim, &mut rng);
        Self::from_encoders(config, text, image)
    }

    /// Starts a run from given encoders with zeroed moments.
    pub fn from_encoders(config: TrainConfig, text: TextEncoder, image: ImageEncoder) -> Result<Self> {
        config.validate()?;
        if text.dim() != image.dim() {
            return Err(Error::DimensionMismatch {
                left: text.dim(),
                right: image.dim(),
            });
        }
        Ok(Self {
            text_moments: Moments::zeros_like(&text.w),
            image_moments: Moments::zeros_like(&image.v),
            config,
            text,
            image,
            step: 0,
        })
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.config.schedule.total_steps
    }

    pub fn kind_at(&self, step: u64) -> StepKind {
        if self.config.alternate && step % 2 == 1 {
            return StepKind::Clip;
        }
        match self.config.objective {
            Objective::Clic => StepKind::Clic,
            Objective::NegClip => StepKind::NegClip,
            Objective::Clip => StepKind::Clip,
        }
    }

    fn batch_indices(&self, ds: &Dataset, step: u64) -> Result<Vec<usize>> {
        let m = self.config.batch_size;
        if ds.len() < m.max(2) {
            return Err(Error::DatasetTooSmall(ds.len()));
        }
        let mut rng = child_rng(self.config.seed, Stream::Batch, &[step]);
        Ok(sample(&mut rng, ds.len(), m).into_vec())
    }

    /// Runs one step and advances the counter.
    pub fn step(&mut self, ds: &Dataset, exec: Exec) -> Result<StepMetrics> {
        let step = self.step;
        if self.is_done() {
            return Err(Error::StepOutOfRange {
                step,
                total: self.config.schedule.total_steps,
            });
        }
        let lr = self.config.schedule.lr_at(step)?;
        let kind = self.kind_at(step);
        let indices = self.batch_indices(ds, step)?;
        let (images, texts, skipped) = match kind {
            StepKind::Clip => {
                let images = indices.iter().map(|&i| features_of(&ds.item(i).image)).collect::<Result<_>>()?;
                let firsts = indices.iter().map(|&i| ds.item(i).caption.first().to_string()).collect();
                (images, vec![firsts], 0)
            }
            StepKind::Clic | StepKind::NegClip => {
                let mut gen = self.config.gen_config();
                if kind == StepKind::NegClip {
                    gen.concat = false;
                }
                let batch = build_batch(ds, &indices, &gen, derive_seed(self.config.seed, Stream::Example, &[step]), exec)?;
                if batch.examples.is_empty() {
                    return Err(Error::NoSwapPossible);
                }
                let (images, texts) = example_inputs(&batch.examples, self.config.multi_positive)?;
                (images, texts, batch.skipped.len())
            }
        };

        let img_refs: Vec<&[f64]> = images.iter().map(Vec::as_slice).collect();
        let img_enc = self.image.forward(&img_refs, exec)?;
        let text_ids: Vec<Vec<Vec<usize>>> = texts
            .iter()
            .map(|group| group.iter().map(|t| self.text.vocab.encode(t)).collect())
            .collect();
        let text_enc = exec
            .map_slice(&text_ids, |ids| self.text.forward(ids, Exec::Serial))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        let tau = self.config.temperature;
        let (out, cont, sneg, uni) = match kind {
            StepKind::Clip => {
                let o = losses::clip_loss(&img_enc.emb, &text_enc[0].emb, tau)?;
                let v = o.value;
                (o, v, 0.0, 0.0)
            }
            StepKind::Clic => {
                let l = text_enc.len() - 1;
                let batch = EmbeddingBatch {
                    image: img_enc.emb.clone(),
                    positives: text_enc[..l].iter().map(|e| e.emb.clone()).collect(),
                    negative: Some(text_enc[l].emb.clone()),
                    temperature: tau,
                };
                let c = losses::clic_total(&batch, &self.config.loss_weights())?;
                (c.total, c.cont, c.sneg, c.uni)
            }
            StepKind::NegClip => {
                let (img, pos, neg) = (&img_enc.emb, &text_enc[0].emb, &text_enc[1].emb);
                let a = losses::negclip_batch_loss(img, pos, neg, tau)?;
                let b = losses::text_to_image_loss(img, pos, tau)?;
                let mut g_img = a.grads[0].clone();
                g_img.add_scaled(&b.grads[0], 1.0);
                let mut g_pos = a.grads[1].clone();
                g_pos.add_scaled(&b.grads[1], 1.0);
                let total = LossOutput {
                    value: a.value + b.value,
                    grads: vec![g_img, g_pos, a.grads[2].clone()],
                };
                (total, b.value, a.value, 0.0)
            }
        };

        let freeze = self.config.freeze;
        if freeze.text_trainable() {
            let mut g = Matrix::zeros(self.text.w.rows(), self.text.w.cols());
            for (k, (ids, enc)) in text_ids.iter().zip(&text_enc).enumerate() {
                self.text.backward(ids, enc, &out.grads[k + 1], &mut g);
            }
            self.config.adamw.step(&mut self.text.w, &g, &mut self.text_moments, lr)?;
            if !self.text.w.is_finite() {
                return Err(Error::NonFinite("text encoder weights"));
            }
        }
        if freeze.vision_trainable() {
            let mut g = Matrix::zeros(self.image.v.rows(), self.image.v.cols());
            self.image.backward(&img_refs, &img_enc, &out.grads[0], &mut g);
            self.config.adamw.step(&mut self.image.v, &g, &mut self.image_moments, lr)?;
            if !self.image.v.is_finite() {
                return Err(Error::NonFinite("image encoder weights"));
            }
        }
        self.step += 1;
        Ok(StepMetrics {
            step,
            kind,
            lr,
            loss_total: out.value,
            loss_cont: cont,
            loss_sneg: sneg,
            loss_uni: uni,
            skipped,
        })
    }

    /// Steps until `until` (capped at the configured total).
    pub fn run_until(
        &mut self,
        ds: &Dataset,
        until: u64,
        exec: Exec,
        mut on_step: impl FnMut(&StepMetrics),
    ) -> Result<()> {
        let until = until.min(self.config.schedule.total_steps);
        while self.step < until {
            let m = self.step(ds, exec)?;
            on_step(&m);
        }
        Ok(())
    }
}

fn features_of(src: &ImageSource) -> Result<Vec<f64>> {
    match src {
        ImageSource::Features(f) => Ok(f.features.clone()),
        ImageSource::Raster { .. } => Err(Error::Config("training needs feature images".into())),
    }
}

/// Image features plus text groups `[positives..., negative]`.
fn example_inputs(examples: &[TrainingExample], multi: bool) -> Result<(Vec<Vec<f64>>, Vec<Vec<String>>)> {
    let n_pos = if multi { examples[0].positives.len() } else { 1 };
    let mut texts = vec![Vec::with_capacity(examples.len()); n_pos + 1];
    let mut images = Vec::with_capacity(examples.len());
    for ex in examples {
        match &ex.image {
            ExampleImage::Features(f) => images.push(f.features.clone()),
            ExampleImage::Raster(_) => return Err(Error::Config("training needs feature images".into())),
        }
        let all: Vec<&str> = ex.positives.all().collect();
        if all.len() < n_pos {
            return Err(Error::Config("examples disagree on positive count".into()));
        }
        for (l, t) in all.iter().take(n_pos).enumerate() {
            texts[l].push(t.to_string());
        }
        texts[n_pos].push(ex.negative.text.clone());
    }
    Ok((images, texts))
}

/// Runs a full schedule from fresh encoders.
pub fn train(ds: &Dataset, config: TrainConfig, exec: Exec) -> Result<(TrainState, Vec<StepMetrics>)> {
    let mut state = TrainState::init(config, ds)?;
    let mut log = Vec::new();
    let total = state.config.schedule.total_steps;
    state.run_until(ds, total, exec, |m| log.push(*m))?;
    Ok((state, log))
}
