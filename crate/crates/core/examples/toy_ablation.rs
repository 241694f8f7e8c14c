//! Warm-starts toy encoders, fine-tunes them under each preset per seed
//! and prints swap ITT, TOT and retrieval for each run.
//!
//! cargo run --release -p clic-core --example toy_ablation -- [seeds] [steps] [presets...]

use std::collections::BTreeMap;
use std::time::Instant;

use clic_core::eval::evaluate_suite;
use clic_core::train::{make_toy_world, warm_start, Preset, TrainConfig, TrainState, WorldConfig};
use clic_core::Exec;

fn main() -> clic_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let seeds: u64 = args.first().map_or(5, |s| s.parse().expect("seed count"));
    let steps: u64 = args.get(1).map_or(2000, |s| s.parse().expect("step count"));
    let presets: Vec<Preset> = if args.len() > 2 {
        args[2..].iter().map(|p| p.parse()).collect::<Result<_, _>>()?
    } else {
        vec![Preset::C1, Preset::C5]
    };
    let world = make_toy_world(&WorldConfig::default())?;
    let warm_steps = TrainConfig::preset(Preset::Pretrain).schedule.total_steps;
    let exec = Exec::Parallel;
    let t0 = Instant::now();
    let mut sums: BTreeMap<&str, [f64; 2]> = BTreeMap::new();
    for seed in 0..seeds {
        let (text, image) = warm_start(&world.pretrain, world.vocab(), warm_steps, TrainConfig::toy().embed_dim, seed, exec)?;
        for p in &presets {
            let mut cfg = TrainConfig::preset(*p);
            cfg.seed = seed;
            cfg.schedule.total_steps = steps;
            let mut st = TrainState::from_encoders(cfg, text.clone(), image.clone())?;
            st.run_until(&world.dataset, steps, exec, |_| {})?;
            let r = evaluate_suite(&st.text, &st.image, &world.eval, &st.config.hash(), seed, exec)?;
            let swap = &r.categories["swap-att"];
            println!(
                "seed {seed} {:<8} swap-itt {:.3} tot {:.3} r@1 {:.3}",
                p.as_str(),
                swap.pp_itt,
                swap.pp_tot,
                r.retrieval.i2t_r1
            );
            let e = sums.entry(p.as_str()).or_default();
            e[0] += swap.pp_itt;
            e[1] += r.retrieval.i2t_r1;
        }
    }
    for (name, [swap, r1]) in &sums {
        println!("mean {name:<8} swap-itt {:.3} r@1 {:.3}", swap / seeds as f64, r1 / seeds as f64);
    }
    println!("elapsed {:.1}s", t0.elapsed().as_secs_f64());
    Ok(())
}
