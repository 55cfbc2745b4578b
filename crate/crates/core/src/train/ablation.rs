//! Feature and attention ablations under shared seeds and splits.

use std::fmt::{self, Write as _};

use super::metrics::{fmt_opt, Metrics};
use super::trainer::{evaluate, train, TrainConfig};
use crate::attention::AttentionVariant;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{FeatureCache, ModelConfig};

/// A named modification of the base configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Full,
    Attention(AttentionVariant),
    NoDemographics,
    NoHashtags,
    NoSocial,
    NoSentiment,
    NoSentimentText,
    NoSentimentHashtags,
    NoContent,
}

impl Variant {
    pub const ALL: [Variant; 11] = [
        Variant::Full,
        Variant::Attention(AttentionVariant::Hga),
        Variant::Attention(AttentionVariant::Sa),
        Variant::Attention(AttentionVariant::Na),
        Variant::NoDemographics,
        Variant::NoHashtags,
        Variant::NoSocial,
        Variant::NoSentiment,
        Variant::NoSentimentText,
        Variant::NoSentimentHashtags,
        Variant::NoContent,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Attention(a) => a.name(),
            Variant::NoDemographics => "no_demographics",
            Variant::NoHashtags => "no_hashtags",
            Variant::NoSocial => "no_social",
            Variant::NoSentiment => "no_sentiment",
            Variant::NoSentimentText => "no_sentiment_text",
            Variant::NoSentimentHashtags => "no_sentiment_hashtags",
            Variant::NoContent => "no_content",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                Error::Config(format!(
                    "unknown variant `{s}` (known: {})",
                    names.join(", ")
                ))
            })
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        let f = &mut c.features;
        match self {
            Variant::Full => {}
            Variant::Attention(a) => c.attention = a,
            Variant::NoDemographics => f.demographics = false,
            Variant::NoHashtags => f.hashtags = false,
            Variant::NoSocial => f.social = false,
            Variant::NoSentiment => {
                f.sentiment_text = false;
                f.sentiment_hashtags = false;
            }
            Variant::NoSentimentText => f.sentiment_text = false,
            Variant::NoSentimentHashtags => f.sentiment_hashtags = false,
            Variant::NoContent => f.content = false,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub metrics: Metrics,
    pub best_epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub variant: Variant,
    pub runs: Vec<SeedResult>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

impl AblationRow {
    pub fn median_mse(&self) -> f64 {
        median(self.runs.iter().map(|r| r.metrics.mse).collect())
    }

    pub fn median_mae(&self) -> f64 {
        median(self.runs.iter().map(|r| r.metrics.mae).collect())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    /// One line per (variant, seed).
    pub fn to_csv(&self) -> String {
        let mut s = format!("variant,seed,best_epoch,{}\n", Metrics::CSV_HEADER);
        for row in &self.rows {
            for r in &row.runs {
                let _ = writeln!(
                    s,
                    "{},{},{},{}",
                    row.variant,
                    r.seed,
                    r.best_epoch,
                    r.metrics.csv_row()
                );
            }
        }
        s
    }

    /// Median over seeds per variant, in the order the variants were given.
    pub fn table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>10} {:>10} {:>10}  seeds\n",
            "variant", "MSE", "MAE", "SRCC"
        );
        for row in &self.rows {
            let srcc: Vec<f64> = row.runs.iter().filter_map(|r| r.metrics.srcc).collect();
            let srcc = (!srcc.is_empty()).then(|| median(srcc));
            let seeds: Vec<String> = row.runs.iter().map(|r| r.seed.to_string()).collect();
            let _ = writeln!(
                s,
                "{:<24} {:>10.4} {:>10.4} {:>10}  {}",
                row.variant.name(),
                row.median_mse(),
                row.median_mae(),
                srcc.map_or_else(|| fmt_opt(None), |v| format!("{v:.4}")),
                seeds.join(" ")
            );
        }
        s
    }
}

/// Training, validation (early stopping) and evaluation datasets.
#[derive(Clone, Copy, Debug)]
pub struct AblationData<'a> {
    pub train: &'a Dataset,
    pub val: &'a Dataset,
    pub eval: &'a Dataset,
}

/// Trains every variant once per seed and evaluates on `data.eval`.
/// `progress` is called after each run.
pub fn ablate(
    data: AblationData<'_>,
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    variants: &[Variant],
    seeds: &[u64],
    mut progress: impl FnMut(Variant, &SeedResult),
) -> Result<AblationReport> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "ablation needs at least one variant and seed".into(),
        ));
    }
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = variant.apply(base);
        cfg.validate()?;
        let cache = FeatureCache::build(data.train, &cfg)?;
        let tr = cache.prepare_all(data.train, &cfg)?;
        let va = cache.prepare_all(data.val, &cfg)?;
        let ev = cache.prepare_all(data.eval, &cfg)?;
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let tc = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let out = train(&tr, &va, &cfg, &tc, &cache)?;
            let r = SeedResult {
                seed,
                metrics: evaluate(&out.best.model, &ev)?,
                best_epoch: out.best_epoch,
            };
            progress(variant, &r);
            runs.push(r);
        }
        rows.push(AblationRow { variant, runs });
    }
    Ok(AblationReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, SplitFractions};

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(Variant::parse(v.name()).unwrap(), v);
        }
        assert!(Variant::parse("bogus").is_err());
    }

    #[test]
    fn apply_toggles() {
        let base = ModelConfig::desk();
        assert_eq!(Variant::Full.apply(&base), base);
        assert!(!Variant::NoDemographics.apply(&base).features.demographics);
        assert_eq!(
            Variant::Attention(AttentionVariant::Na)
                .apply(&base)
                .attention,
            AttentionVariant::Na
        );
        let c = Variant::NoSentiment.apply(&base);
        assert!(!c.features.sentiment());
    }

    #[test]
    fn duplicate_variant_gives_identical_rows() {
        let ds = crate::synth::sample_corpus(40, 2);
        let s = split_dataset(&ds, SplitFractions::default(), 1).unwrap();
        let data = AblationData {
            train: &s.train,
            val: &s.val,
            eval: &s.test,
        };
        let tc = TrainConfig {
            learning_rate: 1e-2,
            max_epochs: 2,
            patience: 1,
            ..TrainConfig::default()
        };
        let mut calls = 0;
        let r = ablate(
            data,
            &ModelConfig::tiny(),
            &tc,
            &[Variant::Full, Variant::Full],
            &[4],
            |_, _| calls += 1,
        )
        .unwrap();
        assert_eq!(calls, 2);
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[0].runs, r.rows[1].runs);
        assert_eq!(r.to_csv().lines().count(), 3);
        assert!(r.table().lines().nth(1).unwrap().starts_with("full"));
    }
}
