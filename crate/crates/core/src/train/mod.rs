//! Toy encoders, optimizer, schedule, configuration, checkpoints and the
//! alternating training loop.

pub mod checkpoint;
pub mod config;
pub mod encoder;
pub mod optim;
pub mod trainer;
pub mod world;

pub use config::{Freeze, Objective, Pairing, Preset, TrainConfig, Weights};
pub use encoder::{ImageEncoder, TextEncoder, Vocab};
pub use optim::{AdamW, Moments, Schedule};
pub use trainer::{dataset_vocab, train, StepKind, StepMetrics, TrainState, METRICS_HEADER};
pub use world::{make_toy_world, Category, ToyWorld, WorldConfig};

use crate::corpus::Dataset;
use crate::error::Result;
use crate::exec::Exec;

/// Plain contrastive warm start of the text encoder against a frozen
/// random image encoder; stands in for a pretrained model. `vocab` fixes
/// the token set of later runs.
pub fn warm_start(
    ds: &Dataset,
    vocab: Vocab,
    steps: u64,
    embed_dim: usize,
    seed: u64,
    exec: Exec,
) -> Result<(TextEncoder, ImageEncoder)> {
    let mut cfg = TrainConfig::preset(Preset::Pretrain);
    cfg.schedule.total_steps = steps;
    cfg.embed_dim = embed_dim;
    cfg.seed = seed;
    let mut state = TrainState::init_with_vocab(cfg, ds, vocab)?;
    state.run_until(ds, steps, exec, |_| {})?;
    Ok((state.text, state.image))
}

/// Initial state for a run of `config` on the toy world: warm-started
/// from the loose-caption corpus when `warm_steps > 0`, fresh otherwise.
pub fn toy_state(world: &ToyWorld, config: TrainConfig, warm_steps: u64, exec: Exec) -> Result<TrainState> {
    if warm_steps == 0 {
        return TrainState::init_with_vocab(config, &world.dataset, world.vocab());
    }
    let (text, image) = warm_start(&world.pretrain, world.vocab(), warm_steps, config.embed_dim, config.seed, exec)?;
    TrainState::from_encoders(config, text, image)
}
