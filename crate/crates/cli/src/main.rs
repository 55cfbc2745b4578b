mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mmpop_core::data::{load_dataset, save_dataset, split_dataset, Dataset, Split};
use mmpop_core::features::SentimentLexicon;
use mmpop_core::model::{Checkpoint, FeatureCache, ModelConfig};
use mmpop_core::nn::Mode;
use mmpop_core::providers::{tokenize, EmbeddingProvider};
use mmpop_core::synth;
use mmpop_core::train::{
    ablate, correlate_features, correlations_csv, evaluate, train, AblationData, Variant,
};

use config::{keys_help, RunConfig};

/// Multimodal popularity regression: feature preparation, training,
/// evaluation, ablation and attention inspection.
#[derive(Parser, Debug)]
#[command(name = "mmpop", version, after_long_help = keys_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Training seed (overrides `seed`)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Corpus path (overrides `corpus`)
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Checkpoint path (overrides `checkpoint`)
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output directory (overrides `out_dir`; the cache and checkpoint live
    /// in <out>/cache and <out>/model.ckpt unless set explicitly)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra key=value overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split the corpus and build the feature cache from the training split
    Prepare(Common),
    /// Train a model and write the best checkpoint and history
    Train {
        #[command(flatten)]
        common: Common,
        /// Train a single variant (e.g. `na`, `no_demographics`)
        #[arg(long)]
        variant: Option<String>,
    },
    /// Print metrics for a checkpoint on one split
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = SplitName::Test)]
        split: SplitName,
    },
    /// Train and evaluate several variants under shared seeds
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Comma-separated variants (overrides `variants`)
        #[arg(long)]
        variant: Option<String>,
    },
    /// Print text and image attention weights for one post
    InspectAttention {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        post_id: String,
    },
    /// Spearman correlation of raw features with popularity
    Correlate(Common),
    /// Write a synthetic corpus
    Synth {
        #[arg(long, value_enum, default_value_t = SynthKind::Sample)]
        kind: SynthKind,
        #[arg(long, default_value_t = 60)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitName {
    Train,
    Val,
    Test,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SynthKind {
    Sample,
    Linear,
    Signal,
}

/// Marks errors caused by the invocation rather than the data.
#[derive(Debug)]
struct UsageError(anyhow::Error);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:#}", self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(e: anyhow::Error) -> anyhow::Error {
    anyhow!(UsageError(e))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut rc = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))
                .map_err(usage)?;
            RunConfig::parse(&text)
                .with_context(|| format!("in {}", p.display()))
                .map_err(usage)?
        }
        None => RunConfig::default(),
    };
    let config_text = c.config.as_ref().and_then(|p| fs::read_to_string(p).ok());
    let explicit = |key: &str| {
        c.sets.iter().any(|s| s.starts_with(&format!("{key}=")))
            || config_text
                .as_deref()
                .is_some_and(|t| t.lines().any(|l| l.trim_start().starts_with(key)))
    };
    if let Some(s) = c.seed {
        rc.train.seed = s;
    }
    if let Some(p) = &c.corpus {
        rc.corpus = p.clone();
    }
    if let Some(p) = &c.checkpoint {
        rc.checkpoint = p.clone();
    }
    if let Some(p) = &c.out {
        rc.out_dir = p.clone();
        if !explicit("cache_dir") {
            rc.cache_dir = p.join("cache");
        }
        if c.checkpoint.is_none() && !explicit("checkpoint") {
            rc.checkpoint = p.join("model.ckpt");
        }
    }
    for kv in &c.sets {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(anyhow!("--set expects KEY=VALUE, got {kv:?}")))?;
        rc.set(k.trim(), v.trim()).map_err(usage)?;
    }
    rc.validate().map_err(usage)?;
    Ok(rc)
}

fn load_split(rc: &RunConfig) -> Result<Split> {
    let report = load_dataset(&rc.corpus)
        .with_context(|| format!("loading corpus {}", rc.corpus.display()))?;
    if !report.skipped.is_empty() {
        eprintln!(
            "warning: skipped {} malformed line(s) in {} (first: line {}: {})",
            report.skipped.len(),
            rc.corpus.display(),
            report.skipped[0].0,
            report.skipped[0].1
        );
    }
    Ok(split_dataset(&report.dataset, rc.fractions, rc.split_seed)?)
}

fn lexicon(rc: &RunConfig) -> Result<SentimentLexicon> {
    match &rc.lexicon {
        Some(p) => Ok(SentimentLexicon::load(p)?),
        None => Ok(SentimentLexicon::bundled()),
    }
}

const CACHE_CONFIG: &str = "model.cfg";

fn load_cache(rc: &RunConfig, cfg: &ModelConfig) -> Result<FeatureCache> {
    let dir = &rc.cache_dir;
    let recorded = dir.join(CACHE_CONFIG);
    if !recorded.exists() {
        bail!(
            "no feature cache in {}; run `mmpop prepare` with the same configuration first",
            dir.display()
        );
    }
    let text = fs::read_to_string(&recorded)?;
    let cached =
        ModelConfig::from_text(&text).with_context(|| format!("reading {}", recorded.display()))?;
    let diff = cached.diff(cfg);
    if !diff.is_empty() {
        bail!(
            "feature cache in {} was prepared with a different model configuration ({}); rerun `mmpop prepare`",
            dir.display(),
            diff.join(", ")
        );
    }
    Ok(FeatureCache::load(dir, cfg)?)
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn apply_variant(rc: &mut RunConfig, variant: Option<&str>) -> Result<()> {
    if let Some(v) = variant {
        let v = Variant::parse(v).map_err(|e| usage(e.into()))?;
        rc.model = v.apply(&rc.model);
    }
    Ok(())
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare(c) => cmd_prepare(&load_config(&c)?),
        Command::Train { common, variant } => {
            let mut rc = load_config(&common)?;
            apply_variant(&mut rc, variant.as_deref())?;
            cmd_train(&rc)
        }
        Command::Evaluate { common, split } => cmd_evaluate(&load_config(&common)?, split),
        Command::Ablate { common, variant } => {
            let mut rc = load_config(&common)?;
            if let Some(v) = variant {
                rc.set("variants", &v).map_err(usage)?;
            }
            cmd_ablate(&rc)
        }
        Command::InspectAttention { common, post_id } => {
            cmd_inspect(&load_config(&common)?, &post_id)
        }
        Command::Correlate(c) => cmd_correlate(&load_config(&c)?),
        Command::Synth { kind, n, seed, out } => {
            let ds = match kind {
                SynthKind::Sample => synth::sample_corpus(n, seed),
                SynthKind::Linear => synth::linear_social_corpus(n, seed),
                SynthKind::Signal => {
                    let cfg = ModelConfig::desk();
                    synth::hashtag_signal_corpus(
                        n,
                        seed,
                        &EmbeddingProvider::stub(cfg.provider_seed),
                        cfg.embed_dim,
                        cfg.max_tokens,
                    )?
                }
            };
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            save_dataset(&ds, &out)?;
            println!("wrote {} posts to {}", ds.len(), out.display());
            Ok(())
        }
    }
}

fn cmd_prepare(rc: &RunConfig) -> Result<()> {
    let split = load_split(rc)?;
    let cache = FeatureCache::build_with(
        &split.train,
        &rc.model,
        EmbeddingProvider::stub(rc.model.provider_seed),
        lexicon(rc)?,
    )?;
    cache.save(&rc.cache_dir)?;
    write(&rc.cache_dir.join(CACHE_CONFIG), &rc.model.to_text())?;
    println!(
        "split train={} val={} test={}",
        split.train.len(),
        split.val.len(),
        split.test.len()
    );
    println!(
        "graph nodes={} edges={}",
        cache.graph.nodes.len(),
        cache.graph.edges.len()
    );
    println!("cache {} digest={}", rc.cache_dir.display(), cache.digest());
    Ok(())
}

fn cmd_train(rc: &RunConfig) -> Result<()> {
    println!("{}", rc.header());
    let split = load_split(rc)?;
    let cache = load_cache(rc, &rc.model)?;
    let tr = cache.prepare_all(&split.train, &rc.model)?;
    let va = cache.prepare_all(&split.val, &rc.model)?;
    let out = train(&tr, &va, &rc.model, &rc.train, &cache)?;
    for e in &out.history.epochs {
        println!(
            "epoch {:>3}  train_loss {:.6}  val_mse {:.6}",
            e.epoch, e.train_loss, e.val_mse
        );
    }
    if let Some(dir) = rc.checkpoint.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    out.best.save(&rc.checkpoint, rc.precision)?;
    let history = rc.out_dir.join("history.csv");
    write(&history, &out.history.to_csv())?;
    println!(
        "best epoch {} val_mse {:.6}; checkpoint {}; history {}",
        out.best_epoch,
        out.best_val_mse,
        rc.checkpoint.display(),
        history.display()
    );
    Ok(())
}

fn load_checkpoint(rc: &RunConfig) -> Result<(Checkpoint, FeatureCache)> {
    let ck = Checkpoint::load(&rc.checkpoint)
        .with_context(|| format!("loading checkpoint {}", rc.checkpoint.display()))?;
    let cache = load_cache(rc, &ck.model.config)?;
    if cache.digest() != ck.cache_digest {
        bail!(
            "checkpoint was trained against feature cache {} but {} holds {}",
            ck.cache_digest,
            rc.cache_dir.display(),
            cache.digest()
        );
    }
    Ok((ck, cache))
}

fn cmd_evaluate(rc: &RunConfig, which: SplitName) -> Result<()> {
    let split = load_split(rc)?;
    let (ck, cache) = load_checkpoint(rc)?;
    let ds = match which {
        SplitName::Train => &split.train,
        SplitName::Val => &split.val,
        SplitName::Test => &split.test,
    };
    if ds.is_empty() {
        bail!("the {which:?} split is empty");
    }
    let posts = cache.prepare_all(ds, &ck.model.config)?;
    let m = evaluate(&ck.model, &posts)?;
    print!("{}", m.table());
    println!("{}", m.to_json());
    Ok(())
}

fn cmd_ablate(rc: &RunConfig) -> Result<()> {
    println!("{}", rc.header());
    let split = load_split(rc)?;
    let data = AblationData {
        train: &split.train,
        val: &split.val,
        eval: &split.test,
    };
    if split.test.is_empty() {
        bail!("the test split is empty");
    }
    let report = ablate(
        data,
        &rc.model,
        &rc.train,
        &rc.variants,
        &rc.ablation_seeds,
        |v, r| {
            println!(
                "variant {} seed {} best_epoch {} mse {:.6}",
                v, r.seed, r.best_epoch, r.metrics.mse
            )
        },
    )?;
    let table = report.table();
    print!("{table}");
    write(&rc.out_dir.join("ablation.csv"), &report.to_csv())?;
    write(&rc.out_dir.join("ablation.txt"), &table)?;
    Ok(())
}

fn find_post<'a>(split: &'a Split, id: &str) -> Option<&'a mmpop_core::data::Post> {
    [&split.train, &split.val, &split.test]
        .into_iter()
        .find_map(|d: &Dataset| d.find(id))
}

fn cmd_inspect(rc: &RunConfig, post_id: &str) -> Result<()> {
    let split = load_split(rc)?;
    let (ck, cache) = load_checkpoint(rc)?;
    let cfg = &ck.model.config;
    let post = find_post(&split, post_id).ok_or_else(|| anyhow!("no post with id `{post_id}`"))?;
    let prepared = cache.prepare(post, cfg)?;
    let trace = ck.model.forward(&prepared, Mode::Infer, 0)?;
    let at = trace
        .attention
        .ok_or_else(|| anyhow!("the checkpoint's model has the content branch disabled"))?;
    let out = &at.output;
    let tokens = tokenize(&post.caption);
    let mut s = String::new();
    let _ = writeln!(s, "post {post_id}  attention {}", cfg.attention.name());
    let _ = writeln!(s, "text attention:");
    for (i, (&a, &real)) in out.alpha_text.iter().zip(&prepared.tokens.mask).enumerate() {
        if real {
            let _ = writeln!(s, "  {:<20} {a:.6}", tokens[i]);
        }
    }
    let _ = writeln!(s, "  sum {:.6}", out.alpha_text.iter().sum::<f64>());
    let _ = writeln!(s, "image attention:");
    for (k, a) in out.alpha_image.iter().enumerate() {
        let _ = writeln!(s, "  region {k:<13} {a:.6}");
    }
    let _ = writeln!(s, "  sum {:.6}", out.alpha_image.iter().sum::<f64>());
    if post.hashtags.is_empty() {
        let _ = writeln!(s, "hashtag influence: none");
    } else {
        let tags: Vec<String> = post.hashtags.iter().map(|t| format!("#{t}")).collect();
        let _ = writeln!(s, "hashtag influence: {}", tags.join(" "));
    }
    let _ = writeln!(
        s,
        "prediction {:.6}  target {:.6}",
        trace.prediction, post.popularity
    );
    print!("{s}");
    Ok(())
}

fn cmd_correlate(rc: &RunConfig) -> Result<()> {
    let report = load_dataset(&rc.corpus)?;
    let rows = correlate_features(&report.dataset, &lexicon(rc)?)?;
    let csv = correlations_csv(&rows);
    print!("{csv}");
    write(&rc.out_dir.join("correlations.csv"), &csv)?;
    Ok(())
}
