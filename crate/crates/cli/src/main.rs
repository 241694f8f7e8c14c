//! `clic`: generate examples, train, evaluate and inspect.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use clic_core::batch::{build_for, ExampleImage, TrainingExample};
use clic_core::config::Config;
use clic_core::corpus::Dataset;
use clic_core::eval::evaluate_suite;
use clic_core::gradcheck::{self, CHECKS, FD_TOL};
use clic_core::rng::{derive_seed, Stream};
use clic_core::text::{detokenize, TaggedSentence};
use clic_core::train::{checkpoint, dataset_vocab, make_toy_world, toy_state, TrainState, METRICS_HEADER};
use clic_core::{Error, Result};

#[derive(Parser)]
#[command(name = "clic", version, about = "Concatenated-pair compositional fine-tuning, desk scale")]
struct Cli {
    /// `key = value` config file; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Materialize training examples as JSONL.
    Gen {
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and write a checkpoint plus a metrics CSV.
    Train {
        /// Write the analytic oracle encoders of the toy world instead.
        #[arg(long)]
        oracle: bool,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop (and save) once this many steps are done.
        #[arg(long)]
        stop_after: Option<u64>,
        /// Skip the config hash check on resume.
        #[arg(long)]
        force: bool,
    },
    /// Score a checkpoint on the toy suite, or run the gradient checks.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Suite::Toy)]
        suite: Suite,
        /// Accept a checkpoint trained under a different config.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Random instances per gradient check.
        #[arg(long, default_value_t = 100)]
        instances: usize,
    },
    /// Trace how one corpus item turns into a training example.
    Inspect {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Item id; the first item when omitted.
        #[arg(long)]
        id: Option<String>,
    },
    /// Print every config key with its default and description.
    Defaults,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    Toy,
    Gradcheck,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Corpus { .. } | Error::Image(_) | Error::Checkpoint(_) | Error::Json(_) => 2,
        Error::Config(_) | Error::Lexicon { .. } => 3,
        Error::NonFinite(_)
        | Error::NotNormalized { .. }
        | Error::ShapeMismatch { .. }
        | Error::DimensionMismatch { .. } => 4,
        Error::HashMismatch { .. } => 5,
        Error::UnknownId(_) => 6,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    if cfg.threads > 1 {
        clic_core::exec::set_threads(cfg.threads);
    }
    match cli.cmd {
        Cmd::Gen { count, out } => gen(&cfg, count, &out).map(|_| 0),
        Cmd::Train {
            oracle,
            resume,
            stop_after,
            force,
        } => train(&cfg, oracle, resume.as_deref(), stop_after, force).map(|_| 0),
        Cmd::Eval {
            checkpoint,
            suite,
            force,
            report,
            instances,
        } => {
            let report = report.unwrap_or_else(|| cfg.report.clone());
            match suite {
                Suite::Toy => eval_toy(&cfg, checkpoint.as_deref().unwrap_or(&cfg.checkpoint), force, &report),
                Suite::Gradcheck => eval_gradcheck(&cfg, instances, &report),
            }
        }
        Cmd::Inspect { dataset, id } => inspect(&cfg, dataset.as_deref(), id.as_deref()).map(|_| 0),
        Cmd::Defaults => {
            print!("{}", Config::default().render());
            Ok(0)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(bytes).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// The configured corpus, or the toy world's training corpus.
fn corpus(cfg: &Config, override_path: Option<&Path>) -> Result<Dataset> {
    if let Some(p) = override_path {
        return Dataset::from_jsonl(p, &cfg.lexicon()?);
    }
    match cfg.load_dataset()? {
        Some(d) => Ok(d),
        None => Ok(make_toy_world(&cfg.world)?.dataset),
    }
}

fn image_summary(img: &ExampleImage) -> serde_json::Value {
    match img {
        ExampleImage::Raster(r) => json!({ "width": r.width(), "height": r.height() }),
        ExampleImage::Features(f) => json!({ "features": f.dim() }),
    }
}

fn example_json(ds: &Dataset, ex: &TrainingExample, hash: &str, seed: u64, k: usize) -> serde_json::Value {
    let p = &ex.provenance;
    json!({
        "config_hash": hash,
        "seed": seed,
        "k": k,
        "id_a": ds.item(p.index_a).id,
        "id_b": ds.item(p.index_b).id,
        "order": p.order,
        "image": image_summary(&ex.image),
        "positives": ex.positives.all().collect::<Vec<_>>(),
        "negative": ex.negative.text,
        "swap": {
            "index_a": ex.negative.swapped.index_a,
            "index_b": ex.negative.swapped.index_b,
            "tag": ex.negative.swapped.tag,
            "words": [ex.negative.words.0, ex.negative.words.1],
        },
        "degraded": ex.degraded,
        "shared_nouns": ex.shared_nouns,
    })
}

/// Attempts per requested example before giving up on a corpus.
const GEN_ATTEMPTS: usize = 8;

fn gen(cfg: &Config, count: usize, out: &Path) -> Result<()> {
    let ds = corpus(cfg, None)?;
    if ds.is_empty() {
        return Err(Error::DatasetTooSmall(0));
    }
    let (seed, hash, gc) = (cfg.train.seed, cfg.hash(), cfg.train.gen_config());
    let mut w = create(out)?;
    let (mut written, mut skipped, mut degraded) = (0usize, 0usize, 0usize);
    let mut tags: BTreeMap<String, usize> = BTreeMap::new();
    let mut k = 0usize;
    while written < count {
        if k >= count * GEN_ATTEMPTS {
            return Err(Error::Config(format!("only {written} of {count} examples could be built")));
        }
        let i = k % ds.len();
        match build_for(i, &ds, &gc, derive_seed(seed, Stream::Example, &[k as u64])) {
            Ok(ex) => {
                let line = example_json(&ds, &ex, &hash, seed, k).to_string();
                writeln!(w, "{line}").map_err(|e| Error::io(out, e))?;
                written += 1;
                degraded += usize::from(ex.degraded);
                let tag = ex.negative.swapped.tag.map_or("fallback".to_string(), |t| t.to_string());
                *tags.entry(tag).or_default() += 1;
            }
            Err(Error::NoSwapPossible) => skipped += 1,
            Err(e) => return Err(e),
        }
        k += 1;
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    let rate = |n: usize| if k == 0 { 0.0 } else { n as f64 / k as f64 };
    println!("config {hash} seed {seed}");
    println!("examples {written} attempts {k}");
    println!("skip rate {:.4}", rate(skipped));
    println!("degraded rate {:.4}", if written == 0 { 0.0 } else { degraded as f64 / written as f64 });
    for (t, n) in &tags {
        println!("tag {t:<8} {n}");
    }
    Ok(())
}

fn train(cfg: &Config, oracle: bool, resume: Option<&Path>, stop_after: Option<u64>, force: bool) -> Result<()> {
    let exec = cfg.exec();
    let hash = cfg.hash();
    let seed = cfg.train.seed;
    let dataset = cfg.load_dataset()?;
    let world = match dataset {
        Some(_) => None,
        None => Some(make_toy_world(&cfg.world)?),
    };
    let ds = dataset.as_ref().or(world.as_ref().map(|w| &w.dataset)).expect("one source");

    if oracle {
        let w = world
            .as_ref()
            .ok_or_else(|| Error::Config("--oracle needs the toy world (no `dataset`)".into()))?;
        let (text, image) = w.oracle_encoders();
        let mut train_cfg = cfg.train.clone();
        train_cfg.embed_dim = text.dim();
        let state = TrainState::from_encoders(train_cfg, text, image)?;
        checkpoint::save(&cfg.checkpoint, &state)?;
        println!("config {hash} seed {seed}");
        println!("oracle checkpoint {}", cfg.checkpoint.display());
        return Ok(());
    }

    let mut state = match resume {
        Some(p) => {
            let s = checkpoint::load(p)?;
            check_hash(&s, cfg, force)?;
            s
        }
        None => match &world {
            Some(w) => toy_state(w, cfg.train.clone(), cfg.warm_start_steps, exec)?,
            None => TrainState::init_with_vocab(cfg.train.clone(), ds, dataset_vocab(ds))?,
        },
    };

    let append = resume.is_some() && cfg.metrics.exists();
    let mut csv = if append {
        BufWriter::new(
            OpenOptions::new()
                .append(true)
                .open(&cfg.metrics)
                .map_err(|e| Error::io(&cfg.metrics, e))?,
        )
    } else {
        let mut w = create(&cfg.metrics)?;
        writeln!(w, "# config_hash={hash} seed={seed}").map_err(|e| Error::io(&cfg.metrics, e))?;
        writeln!(w, "{METRICS_HEADER}").map_err(|e| Error::io(&cfg.metrics, e))?;
        w
    };
    let until = stop_after.unwrap_or(u64::MAX);
    let mut last = None;
    let mut io_err = None;
    let outcome = state.run_until(ds, until, exec, |m| {
        if io_err.is_none() {
            io_err = writeln!(csv, "{}", m.csv_row()).err();
        }
        last = Some(*m);
    });
    csv.flush().map_err(|e| Error::io(&cfg.metrics, e))?;
    if let Some(e) = io_err {
        return Err(Error::io(&cfg.metrics, e));
    }
    outcome?;
    checkpoint::save(&cfg.checkpoint, &state)?;
    println!("config {hash} seed {seed}");
    println!("steps {}/{}", state.step, state.config.schedule.total_steps);
    if let Some(m) = last {
        println!(
            "final loss_total {:.6} loss_cont {:.6} loss_sneg {:.6} loss_uni {:.6}",
            m.loss_total, m.loss_cont, m.loss_sneg, m.loss_uni
        );
    }
    println!("checkpoint {}", cfg.checkpoint.display());
    Ok(())
}

fn check_hash(state: &TrainState, cfg: &Config, force: bool) -> Result<()> {
    let (expected, found) = (state.config.hash(), cfg.train.hash());
    if expected != found && !force {
        return Err(Error::HashMismatch { expected, found });
    }
    Ok(())
}

fn eval_toy(cfg: &Config, ckpt: &Path, force: bool, report: &Path) -> Result<u8> {
    let state = checkpoint::load(ckpt)?;
    // oracle checkpoints carry their own width; compare the rest
    let mut expect = cfg.train.clone();
    expect.embed_dim = state.config.embed_dim;
    let (expected, found) = (state.config.hash(), expect.hash());
    if expected != found && !force {
        return Err(Error::HashMismatch { expected, found });
    }
    let world = make_toy_world(&cfg.world)?;
    let r = evaluate_suite(&state.text, &state.image, &world.eval, &cfg.hash(), cfg.train.seed, cfg.exec())?;
    write_all(report, r.to_json().as_bytes())?;
    print!("{}", r.render_table());
    Ok(0)
}

fn eval_gradcheck(cfg: &Config, instances: usize, report: &Path) -> Result<u8> {
    let results = gradcheck::run_suite(instances, cfg.train.seed, cfg.exec())?;
    let mut summary = Vec::new();
    let mut failed = 0;
    println!("config {} seed {}", cfg.hash(), cfg.train.seed);
    println!("{:<28} {:>9} {:>6} {:>12}", "check", "instances", "failed", "max_rel_err");
    for name in CHECKS {
        let rs: Vec<_> = results.iter().filter(|r| r.name == name).collect();
        let bad = rs.iter().filter(|r| !r.passed()).count();
        let worst = rs.iter().map(|r| r.rel_err).fold(0.0, f64::max);
        failed += bad;
        println!("{name:<28} {:>9} {bad:>6} {worst:>12.3e}", rs.len());
        summary.push(json!({ "check": name, "instances": rs.len(), "failed": bad, "max_rel_err": worst }));
    }
    let doc = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.train.seed,
        "tolerance": FD_TOL,
        "checks": summary,
        "failed": failed,
    });
    write_all(report, serde_json::to_string_pretty(&doc)?.as_bytes())?;
    println!("{}", if failed == 0 { "gradcheck PASS" } else { "gradcheck FAIL" });
    Ok(if failed == 0 { 0 } else { 4 })
}

/// Renders `a ++ b` with the two swapped tokens exchanged and bracketed.
fn highlighted(a: &TaggedSentence, b: Option<&TaggedSentence>, i: usize, j: usize) -> String {
    let mut toks = a.tokens.clone();
    toks.extend(b.map_or(&[][..], |b| &b.tokens[..]).iter().cloned());
    let (wi, wj) = (toks[i].surface.clone(), toks[j].surface.clone());
    toks[i].surface = format!("[{wj}]");
    toks[j].surface = format!("[{wi}]");
    let cut = a.tokens.len();
    match b {
        Some(_) => format!("{} {}", detokenize(&toks[..cut]), detokenize(&toks[cut..])),
        None => detokenize(&toks),
    }
}

fn inspect(cfg: &Config, dataset: Option<&Path>, id: Option<&str>) -> Result<()> {
    let ds = corpus(cfg, dataset)?;
    if ds.is_empty() {
        return Err(Error::DatasetTooSmall(0));
    }
    let i = match id {
        Some(id) => ds.position(id).ok_or_else(|| Error::UnknownId(id.to_string()))?,
        None => 0,
    };
    let item = ds.item(i);
    let seed = cfg.train.seed;
    println!("config {} seed {seed}", cfg.hash());
    println!("id       {}", item.id);
    println!("caption  {}", item.raw_caption);
    for (k, s) in item.caption.sentences().iter().enumerate() {
        println!("  s{k}     {s}");
    }
    let tags: Vec<String> = item
        .first_tagged
        .tokens
        .iter()
        .map(|t| format!("{}/{}", t.surface, t.tag))
        .collect();
    println!("tags     {}", tags.join(" "));
    let gc = cfg.train.gen_config();
    match build_for(i, &ds, &gc, derive_seed(seed, Stream::Example, &[i as u64])) {
        Ok(ex) => {
            let p = &ex.provenance;
            let partner = (p.index_b != p.index_a).then(|| ds.item(p.index_b));
            match partner {
                Some(b) => println!("partner  {} ({:?})", b.id, p.order),
                None => println!("partner  none (single image)"),
            }
            let sw = &ex.negative.swapped;
            let tag = sw.tag.map_or("fallback".to_string(), |t| t.to_string());
            println!(
                "swap     {} <-> {} ({tag}, tokens {} and {})",
                ex.negative.words.0, ex.negative.words.1, sw.index_a, sw.index_b
            );
            for (k, pos) in ex.positives.all().enumerate() {
                println!("  p{}     {pos}", k + 1);
            }
            println!("negative {}", ex.negative.text);
            println!(
                "marked   {}",
                highlighted(&item.first_tagged, partner.map(|b| &b.first_tagged), sw.index_a, sw.index_b)
            );
            if ex.degraded {
                println!("degraded yes");
            }
        }
        Err(Error::NoSwapPossible) => println!("swap     none possible; example skipped"),
        Err(e) => return Err(e),
    }
    Ok(())
}
