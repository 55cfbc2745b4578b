//! Model shape and feature configuration.

use std::collections::BTreeMap;

use sha2::{Digest, Sha256};

use crate::attention::AttentionVariant;
use crate::error::{Error, Result};
use crate::features::sentiment::SENTIMENT_CLASSES;
use crate::features::DemographicMode;
use crate::nn::ConvShape;

/// Published head layer sizes for the 27104-long merged vector.
pub const FULL_HEAD_SIZES: [usize; 12] =
    [13552, 6776, 3388, 1694, 847, 424, 212, 106, 53, 27, 13, 1];

/// Filter widths and channel counts for the three stacked 1-D convolutions
/// of one feature branch.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BranchSpec {
    pub widths: [usize; 3],
    pub channels: [usize; 3],
}

impl BranchSpec {
    pub const fn new(widths: [usize; 3], channels: [usize; 3]) -> Self {
        Self { widths, channels }
    }

    pub fn conv_shapes(&self) -> [ConvShape; 3] {
        let mut ch_in = 1;
        std::array::from_fn(|i| {
            let s = ConvShape {
                ch_in,
                ch_out: self.channels[i],
                width: self.widths[i],
            };
            ch_in = self.channels[i];
            s
        })
    }

    /// Flattened output length for an input of `len` values, or `None` if
    /// the filters do not fit.
    pub fn output_len(&self, len: usize) -> Option<usize> {
        let mut l = len;
        for s in self.conv_shapes() {
            if s.ch_out == 0 {
                return None;
            }
            l = s.output_len(l)?;
        }
        Some(l * self.channels[2])
    }

    fn to_text(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(usize::to_string).collect();
        let c: Vec<String> = self.channels.iter().map(usize::to_string).collect();
        format!("{}/{}", w.join(","), c.join(","))
    }

    fn parse(s: &str) -> Option<Self> {
        let (w, c) = s.split_once('/')?;
        let parse3 = |s: &str| -> Option<[usize; 3]> {
            let v: Vec<usize> = s
                .split(',')
                .map(|x| x.trim().parse().ok())
                .collect::<Option<_>>()?;
            v.try_into().ok()
        };
        Some(Self {
            widths: parse3(w)?,
            channels: parse3(c)?,
        })
    }
}

/// Which feature families feed the merged vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FeatureToggles {
    pub sentiment_hashtags: bool,
    pub sentiment_text: bool,
    pub demographics: bool,
    pub hashtags: bool,
    pub social: bool,
    pub content: bool,
}

impl Default for FeatureToggles {
    fn default() -> Self {
        Self {
            sentiment_hashtags: true,
            sentiment_text: true,
            demographics: true,
            hashtags: true,
            social: true,
            content: true,
        }
    }
}

impl FeatureToggles {
    pub fn any(&self) -> bool {
        self.sentiment_hashtags
            || self.sentiment_text
            || self.demographics
            || self.hashtags
            || self.social
            || self.content
    }

    pub fn sentiment(&self) -> bool {
        self.sentiment_hashtags || self.sentiment_text
    }
}

/// The four convolutional branches, in merge order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Branch {
    Social,
    Demographic,
    Hashtag,
    Sentiment,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch::Social,
        Branch::Demographic,
        Branch::Hashtag,
        Branch::Sentiment,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Social => "social",
            Branch::Demographic => "demographic",
            Branch::Hashtag => "hashtag",
            Branch::Sentiment => "sentiment",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Caption tokens kept per post (M).
    pub max_tokens: usize,
    /// Image regions (K).
    pub regions: usize,
    /// Channels per region before projection (N).
    pub region_channels: usize,
    /// Hashtags kept per post for attention (L).
    pub max_hashtags: usize,
    /// Shared embedding and hidden size (D).
    pub embed_dim: usize,
    /// Attention units (A).
    pub attention_units: usize,
    pub topic_dim: usize,
    pub structure_dim: usize,
    pub graph_base_dim: usize,
    pub graph_hops: usize,
    pub pca_components: usize,
    pub demographic_mode: DemographicMode,
    pub attention: AttentionVariant,
    pub features: FeatureToggles,
    pub social_branch: BranchSpec,
    pub demographic_branch: BranchSpec,
    pub hashtag_branch: BranchSpec,
    pub sentiment_branch: BranchSpec,
    /// Number of dense head layers when `head_sizes` is empty.
    pub head_layers: usize,
    /// Explicit head output sizes; the last must be 1.
    pub head_sizes: Vec<usize>,
    pub dropout: f64,
    /// Parameters are initialised uniformly in [-init_scale, init_scale].
    pub init_scale: f64,
    pub provider_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::full()
    }
}

impl ModelConfig {
    /// Full-size configuration: M=15, D=768, K=49, N=512, L=60, A=768, a
    /// 27104-long merged vector and the 12-layer head.
    pub fn full() -> Self {
        Self {
            max_tokens: 15,
            regions: 49,
            region_channels: 512,
            max_hashtags: 60,
            embed_dim: 768,
            attention_units: 768,
            topic_dim: 768,
            structure_dim: 50,
            graph_base_dim: 64,
            graph_hops: 2,
            pca_components: 6,
            demographic_mode: DemographicMode::OneHot,
            attention: AttentionVariant::Hga,
            features: FeatureToggles::default(),
            social_branch: BranchSpec::new([1, 1, 1], [2, 2, 2]),
            demographic_branch: BranchSpec::new([1, 1, 1], [1, 1, 1]),
            hashtag_branch: BranchSpec::new([3, 3, 3], [8, 16, 32]),
            sentiment_branch: BranchSpec::new([2, 2, 2], [8, 16, 32]),
            head_layers: FULL_HEAD_SIZES.len(),
            head_sizes: FULL_HEAD_SIZES.to_vec(),
            dropout: 0.2,
            init_scale: 1.0,
            provider_seed: 0,
        }
    }

    /// Small configuration for desk-scale training and tests.
    pub fn desk() -> Self {
        Self {
            max_tokens: 8,
            regions: 4,
            region_channels: 6,
            max_hashtags: 6,
            embed_dim: 8,
            attention_units: 8,
            topic_dim: 8,
            structure_dim: 4,
            graph_base_dim: 8,
            graph_hops: 2,
            pca_components: 6,
            demographic_mode: DemographicMode::Ordinal,
            attention: AttentionVariant::Hga,
            features: FeatureToggles::default(),
            social_branch: BranchSpec::new([2, 2, 2], [4, 4, 4]),
            demographic_branch: BranchSpec::new([1, 1, 1], [2, 2, 2]),
            hashtag_branch: BranchSpec::new([3, 3, 3], [2, 2, 2]),
            sentiment_branch: BranchSpec::new([2, 2, 2], [2, 2, 2]),
            head_layers: 3,
            head_sizes: Vec::new(),
            dropout: 0.2,
            init_scale: 0.3,
            provider_seed: 0,
        }
    }

    /// The tiny configuration used for gradient checking: M=3, K=4, L=2,
    /// D=5, A=6, two width-2 filters per conv layer, head (·, 4, 1).
    pub fn tiny() -> Self {
        Self {
            max_tokens: 3,
            regions: 4,
            region_channels: 3,
            max_hashtags: 2,
            embed_dim: 5,
            attention_units: 6,
            topic_dim: 4,
            structure_dim: 3,
            graph_base_dim: 4,
            graph_hops: 1,
            pca_components: 4,
            demographic_mode: DemographicMode::OneHot,
            attention: AttentionVariant::Hga,
            features: FeatureToggles::default(),
            social_branch: BranchSpec::new([2, 2, 2], [2, 2, 2]),
            demographic_branch: BranchSpec::new([2, 2, 2], [2, 2, 2]),
            hashtag_branch: BranchSpec::new([2, 2, 2], [2, 2, 2]),
            sentiment_branch: BranchSpec::new([2, 2, 2], [2, 2, 2]),
            head_layers: 2,
            head_sizes: vec![4, 1],
            dropout: 0.0,
            init_scale: 0.5,
            provider_seed: 0,
        }
    }

    pub fn branch_spec(&self, b: Branch) -> &BranchSpec {
        match b {
            Branch::Social => &self.social_branch,
            Branch::Demographic => &self.demographic_branch,
            Branch::Hashtag => &self.hashtag_branch,
            Branch::Sentiment => &self.sentiment_branch,
        }
    }

    pub fn branch_enabled(&self, b: Branch) -> bool {
        match b {
            Branch::Social => self.features.social,
            Branch::Demographic => self.features.demographics,
            Branch::Hashtag => self.features.hashtags,
            Branch::Sentiment => self.features.sentiment(),
        }
    }

    /// Length of the raw vector entering branch `b`.
    pub fn branch_input_len(&self, b: Branch) -> usize {
        match b {
            Branch::Social => self.pca_components,
            Branch::Demographic => self.demographic_mode.dim(),
            Branch::Hashtag => self.topic_dim + self.structure_dim,
            Branch::Sentiment => {
                SENTIMENT_CLASSES
                    * (usize::from(self.features.sentiment_text)
                        + usize::from(self.features.sentiment_hashtags))
            }
        }
    }

    pub fn enabled_branches(&self) -> impl Iterator<Item = Branch> + '_ {
        Branch::ALL.into_iter().filter(|&b| self.branch_enabled(b))
    }

    /// Flattened output length of branch `b` (0 when disabled).
    pub fn branch_output_len(&self, b: Branch) -> Result<usize> {
        if !self.branch_enabled(b) {
            return Ok(0);
        }
        let len = self.branch_input_len(b);
        self.branch_spec(b).output_len(len).ok_or_else(|| {
            Error::Config(format!(
                "{} branch filters {:?} do not fit an input of length {len}",
                b.name(),
                self.branch_spec(b)
            ))
        })
    }

    /// Segment lengths of the merged vector in merge order: social,
    /// demographic, hashtag, sentiment, content.
    pub fn merge_layout(&self) -> Result<[usize; 5]> {
        Ok([
            self.branch_output_len(Branch::Social)?,
            self.branch_output_len(Branch::Demographic)?,
            self.branch_output_len(Branch::Hashtag)?,
            self.branch_output_len(Branch::Sentiment)?,
            if self.features.content {
                self.embed_dim
            } else {
                0
            },
        ])
    }

    pub fn merged_len(&self) -> Result<usize> {
        Ok(self.merge_layout()?.iter().sum())
    }

    /// Output size of every dense head layer; the last is 1.
    pub fn head_layer_sizes(&self) -> Result<Vec<usize>> {
        if !self.head_sizes.is_empty() {
            if self.head_sizes.last() != Some(&1) || self.head_sizes.contains(&0) {
                return Err(Error::Config(format!(
                    "head sizes {:?} must be positive and end in 1",
                    self.head_sizes
                )));
            }
            return Ok(self.head_sizes.clone());
        }
        halving_sizes(self.merged_len()?, self.head_layers)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("max_tokens", self.max_tokens),
            ("regions", self.regions),
            ("region_channels", self.region_channels),
            ("max_hashtags", self.max_hashtags),
            ("embed_dim", self.embed_dim),
            ("attention_units", self.attention_units),
            ("topic_dim", self.topic_dim),
            ("structure_dim", self.structure_dim),
            ("graph_base_dim", self.graph_base_dim),
            ("graph_hops", self.graph_hops),
            ("pca_components", self.pca_components),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        if !self.features.any() {
            return Err(Error::Config("at least one feature must be enabled".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return Err(Error::Config("init_scale must be finite and >= 0".into()));
        }
        self.merge_layout()?;
        self.head_layer_sizes()?;
        Ok(())
    }

    /// Canonical `key=value` pairs, sorted by key.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let f = &self.features;
        let sizes: Vec<String> = self.head_sizes.iter().map(usize::to_string).collect();
        BTreeMap::from([
            ("max_tokens", self.max_tokens.to_string()),
            ("regions", self.regions.to_string()),
            ("region_channels", self.region_channels.to_string()),
            ("max_hashtags", self.max_hashtags.to_string()),
            ("embed_dim", self.embed_dim.to_string()),
            ("attention_units", self.attention_units.to_string()),
            ("topic_dim", self.topic_dim.to_string()),
            ("structure_dim", self.structure_dim.to_string()),
            ("graph_base_dim", self.graph_base_dim.to_string()),
            ("graph_hops", self.graph_hops.to_string()),
            ("pca_components", self.pca_components.to_string()),
            (
                "demographic_mode",
                match self.demographic_mode {
                    DemographicMode::OneHot => "onehot".into(),
                    DemographicMode::Ordinal => "ordinal".into(),
                },
            ),
            ("attention", self.attention.name().into()),
            ("use_sentiment_hashtags", f.sentiment_hashtags.to_string()),
            ("use_sentiment_text", f.sentiment_text.to_string()),
            ("use_demographics", f.demographics.to_string()),
            ("use_hashtags", f.hashtags.to_string()),
            ("use_social", f.social.to_string()),
            ("use_content", f.content.to_string()),
            ("social_branch", self.social_branch.to_text()),
            ("demographic_branch", self.demographic_branch.to_text()),
            ("hashtag_branch", self.hashtag_branch.to_text()),
            ("sentiment_branch", self.sentiment_branch.to_text()),
            ("head_layers", self.head_layers.to_string()),
            ("head_sizes", sizes.join(",")),
            ("dropout", self.dropout.to_string()),
            ("init_scale", self.init_scale.to_string()),
            ("provider_seed", self.provider_seed.to_string()),
        ])
    }

    /// Sets one key. Returns `Ok(false)` if the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let bad = || Error::Config(format!("invalid value {value:?} for `{key}`"));
        let num = || value.trim().parse::<usize>().map_err(|_| bad());
        let flag = || value.trim().parse::<bool>().map_err(|_| bad());
        let branch = || BranchSpec::parse(value).ok_or_else(bad);
        match key {
            "max_tokens" => self.max_tokens = num()?,
            "regions" => self.regions = num()?,
            "region_channels" => self.region_channels = num()?,
            "max_hashtags" => self.max_hashtags = num()?,
            "embed_dim" => self.embed_dim = num()?,
            "attention_units" => self.attention_units = num()?,
            "topic_dim" => self.topic_dim = num()?,
            "structure_dim" => self.structure_dim = num()?,
            "graph_base_dim" => self.graph_base_dim = num()?,
            "graph_hops" => self.graph_hops = num()?,
            "pca_components" => self.pca_components = num()?,
            "demographic_mode" => {
                self.demographic_mode = match value.trim() {
                    "onehot" => DemographicMode::OneHot,
                    "ordinal" => DemographicMode::Ordinal,
                    _ => return Err(bad()),
                }
            }
            "attention" => {
                self.attention = AttentionVariant::parse(value.trim()).ok_or_else(bad)?
            }
            "use_sentiment_hashtags" => self.features.sentiment_hashtags = flag()?,
            "use_sentiment_text" => self.features.sentiment_text = flag()?,
            "use_demographics" => self.features.demographics = flag()?,
            "use_hashtags" => self.features.hashtags = flag()?,
            "use_social" => self.features.social = flag()?,
            "use_content" => self.features.content = flag()?,
            "social_branch" => self.social_branch = branch()?,
            "demographic_branch" => self.demographic_branch = branch()?,
            "hashtag_branch" => self.hashtag_branch = branch()?,
            "sentiment_branch" => self.sentiment_branch = branch()?,
            "head_layers" => self.head_layers = num()?,
            "head_sizes" => {
                self.head_sizes = if value.trim().is_empty() {
                    Vec::new()
                } else {
                    value
                        .split(',')
                        .map(|x| x.trim().parse().map_err(|_| bad()))
                        .collect::<Result<_>>()?
                }
            }
            "dropout" => self.dropout = value.trim().parse().map_err(|_| bad())?,
            "init_scale" => self.init_scale = value.trim().parse().map_err(|_| bad())?,
            "provider_seed" => self.provider_seed = value.trim().parse().map_err(|_| bad())?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs()
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::full();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            if !cfg.set(k.trim(), v)? {
                return Err(Error::Config(format!("unknown model key `{}`", k.trim())));
            }
        }
        Ok(cfg)
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    /// Keys whose values differ between two configurations.
    pub fn diff(&self, other: &ModelConfig) -> Vec<String> {
        let (a, b) = (self.to_pairs(), other.to_pairs());
        a.iter()
            .filter(|(k, v)| b.get(*k) != Some(v))
            .map(|(k, v)| format!("{k}: {v} vs {}", b[k]))
            .collect()
    }
}

/// `count` layer sizes obtained by repeatedly halving (rounding up) from
/// `merged`, with the final layer forced to 1.
pub fn halving_sizes(merged: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 {
        return Err(Error::Config("head needs at least one layer".into()));
    }
    let mut sizes = Vec::with_capacity(count);
    let mut cur = merged;
    for _ in 0..count - 1 {
        cur = cur.div_ceil(2).max(1);
        sizes.push(cur);
    }
    sizes.push(1);
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_merged_length() {
        let c = ModelConfig::full();
        assert_eq!(c.merge_layout().unwrap(), [12, 116, 25984, 224, 768]);
        assert_eq!(c.merged_len().unwrap(), 27104);
        assert_eq!(c.head_layer_sizes().unwrap(), FULL_HEAD_SIZES.to_vec());
        assert_eq!(c.head_layer_sizes().unwrap()[0] * 2, 27104);
    }

    #[test]
    fn toggling_changes_length_by_branch_output() {
        let mut c = ModelConfig::desk();
        let full = c.merged_len().unwrap();
        let demo = c.branch_output_len(Branch::Demographic).unwrap();
        c.features.demographics = false;
        assert_eq!(c.merged_len().unwrap(), full - demo);
    }

    #[test]
    fn halving() {
        assert_eq!(halving_sizes(40, 3).unwrap(), vec![20, 10, 1]);
        assert_eq!(halving_sizes(7, 4).unwrap(), vec![4, 2, 1, 1]);
    }

    #[test]
    fn text_round_trip() {
        for c in [
            ModelConfig::full(),
            ModelConfig::desk(),
            ModelConfig::tiny(),
        ] {
            let back = ModelConfig::from_text(&c.to_text()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.digest(), c.digest());
        }
        assert!(ModelConfig::from_text("bogus=1\n").is_err());
        assert!(ModelConfig::from_text("embed_dim=x\n").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::tiny();
        c.validate().unwrap();
        c.features = FeatureToggles {
            sentiment_hashtags: false,
            sentiment_text: false,
            demographics: false,
            hashtags: false,
            social: false,
            content: false,
        };
        assert!(c.validate().is_err());
        let mut c = ModelConfig::tiny();
        c.social_branch = BranchSpec::new([3, 3, 3], [1, 1, 1]);
        assert!(c.validate().is_err());
    }
}
