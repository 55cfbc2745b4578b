//! `key=value` run configuration: model, training, split and path settings.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use mmpop_core::data::SplitFractions;
use mmpop_core::model::{ModelConfig, Precision};
use mmpop_core::train::{TrainConfig, Variant};

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub preset: String,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub cache_dir: PathBuf,
    pub checkpoint: PathBuf,
    pub out_dir: PathBuf,
    pub split_seed: u64,
    pub fractions: SplitFractions,
    pub precision: Precision,
    pub variants: Vec<Variant>,
    pub ablation_seeds: Vec<u64>,
}

/// Keys handled here rather than by the model configuration, with their
/// defaults and a one-line description.
const RUN_KEYS: &[(&str, &str, &str)] = &[
    (
        "preset",
        "desk",
        "model size preset: desk, tiny or full (applied before other keys)",
    ),
    ("corpus", "data/sample_corpus.jsonl", "JSON-lines corpus"),
    (
        "lexicon",
        "",
        "sentiment lexicon TSV (word<TAB>class 0-4); empty = bundled",
    ),
    ("cache_dir", "out/cache", "feature cache directory"),
    ("checkpoint", "out/model.ckpt", "checkpoint path"),
    ("out_dir", "out", "directory for reports and history"),
    ("split_seed", "0", "seed of the train/val/test shuffle"),
    ("train_fraction", "0.8", "training share of the corpus"),
    ("val_fraction", "0.1", "validation share"),
    ("test_fraction", "0.1", "test share"),
    ("learning_rate", "0.0001", "Adam learning rate"),
    ("batch_size", "20", "mini-batch size"),
    ("max_epochs", "30", "epoch limit"),
    (
        "patience",
        "5",
        "epochs without validation improvement before stopping",
    ),
    ("seed", "0", "initialisation, shuffle and dropout seed"),
    (
        "precision",
        "64",
        "checkpoint value width in bits: 64 or 32",
    ),
    (
        "variants",
        "full,no_demographics,no_hashtags,no_social,no_sentiment,hga,sa,na",
        "ablation variants, comma separated",
    ),
    ("ablation_seeds", "0,1,2,3,4", "seeds per ablation variant"),
];

fn preset(name: &str) -> Result<ModelConfig> {
    Ok(match name {
        "desk" => ModelConfig::desk(),
        "tiny" => ModelConfig::tiny(),
        "full" => ModelConfig::full(),
        _ => bail!("unknown preset `{name}` (expected desk, tiny or full)"),
    })
}

fn list<T>(value: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(f)
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut c = Self {
            preset: String::new(),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            corpus: PathBuf::new(),
            lexicon: None,
            cache_dir: PathBuf::new(),
            checkpoint: PathBuf::new(),
            out_dir: PathBuf::new(),
            split_seed: 0,
            fractions: SplitFractions::default(),
            precision: Precision::F64,
            variants: Vec::new(),
            ablation_seeds: Vec::new(),
        };
        for (k, v, _) in RUN_KEYS {
            c.set(k, v).expect("defaults are valid");
        }
        c.model.dropout = c.train.dropout;
        c
    }
}

impl RunConfig {
    /// Parses `key=value` lines (`#` starts a comment) on top of the
    /// defaults. `preset` is applied first wherever it appears.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got {raw:?}", i + 1))?;
            pairs.push((k.trim().to_owned(), v.trim().to_owned()));
        }
        let mut c = Self::default();
        if let Some((_, v)) = pairs.iter().rev().find(|(k, _)| k == "preset") {
            c.set("preset", v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            c.set(k, v)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let int = || {
            value
                .parse::<u64>()
                .with_context(|| format!("`{key}` expects an integer"))
        };
        let real = || {
            value
                .parse::<f64>()
                .with_context(|| format!("`{key}` expects a number"))
        };
        let path = || PathBuf::from(value);
        let fraction = |f: &mut SplitFractions, which: usize| -> Result<()> {
            let v = real()?;
            match which {
                0 => f.train = v,
                1 => f.val = v,
                _ => f.test = v,
            }
            Ok(())
        };
        match key {
            "preset" => {
                let dropout = self.model.dropout;
                self.model = preset(value)?;
                self.model.dropout = dropout;
                self.preset = value.to_owned();
            }
            "corpus" => self.corpus = path(),
            "lexicon" => self.lexicon = (!value.is_empty()).then(path),
            "cache_dir" => self.cache_dir = path(),
            "checkpoint" => self.checkpoint = path(),
            "out_dir" => self.out_dir = path(),
            "split_seed" => self.split_seed = int()?,
            "train_fraction" => fraction(&mut self.fractions, 0)?,
            "val_fraction" => fraction(&mut self.fractions, 1)?,
            "test_fraction" => fraction(&mut self.fractions, 2)?,
            "learning_rate" => self.train.learning_rate = real()?,
            "batch_size" => self.train.batch_size = int()? as usize,
            "max_epochs" => self.train.max_epochs = int()? as usize,
            "patience" => self.train.patience = int()? as usize,
            "seed" => self.train.seed = int()?,
            "dropout" => {
                self.train.dropout = real()?;
                self.model.dropout = self.train.dropout;
            }
            "precision" => {
                self.precision = match value {
                    "64" => Precision::F64,
                    "32" => Precision::F32,
                    _ => bail!("`precision` must be 64 or 32"),
                }
            }
            "variants" => self.variants = list(value, |s| Ok(Variant::parse(s)?))?,
            "ablation_seeds" => {
                self.ablation_seeds = list(value, |s| {
                    s.parse().with_context(|| format!("bad seed {s:?}"))
                })?
            }
            _ => {
                if !self.model.set(key, value)? {
                    bail!("unknown configuration key `{key}` (see `mmpop --help`)");
                }
            }
        }
        Ok(())
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        SplitFractions::new(
            self.fractions.train,
            self.fractions.val,
            self.fractions.test,
        )?;
        self.model.validate()?;
        self.train.validate()?;
        Ok(())
    }

    /// Lines echoed at the start of a run.
    pub fn header(&self) -> String {
        let t = &self.train;
        format!(
            "preset={} lr={} batch={} max_epochs={} patience={} dropout={} seed={} attention={}",
            self.preset,
            t.learning_rate,
            t.batch_size,
            t.max_epochs,
            t.patience,
            t.dropout,
            t.seed,
            self.model.attention.name()
        )
    }
}

/// Help text listing every key and its default.
pub fn keys_help() -> String {
    let mut s = String::from("Configuration keys (key=value, one per line; --set overrides):\n");
    for (k, v, d) in RUN_KEYS {
        s.push_str(&format!("  {k:<24} {d} [default: {v}]\n"));
    }
    s.push_str(
        "  dropout                  dropout rate shared by model and trainer [default: 0.2]\n",
    );
    let desk = ModelConfig::desk();
    for (k, v) in desk.to_pairs() {
        if k == "dropout" {
            continue;
        }
        s.push_str(&format!("  {k:<24} model setting [desk default: {v}]\n"));
    }
    s
}
