//! Lexicon-based five-class sentiment distributions.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::data::Post;
use crate::error::{Error, Result};
use crate::providers::tokenize;

pub const SENTIMENT_CLASSES: usize = 5;

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");

/// Word to sentiment class, 0 = very negative through 4 = very positive.
#[derive(Clone, Debug, PartialEq)]
pub struct SentimentLexicon {
    words: HashMap<String, u8>,
}

impl SentimentLexicon {
    /// Parses `word<TAB>class` lines. Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> std::result::Result<Self, String> {
        let mut words = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, class) = line
                .split_once('\t')
                .ok_or_else(|| format!("line {}: expected word<TAB>class", i + 1))?;
            let class: u8 = class
                .trim()
                .parse()
                .ok()
                .filter(|&c| (c as usize) < SENTIMENT_CLASSES)
                .ok_or_else(|| format!("line {}: class must be 0-4", i + 1))?;
            words.insert(word.trim().to_lowercase(), class);
        }
        Ok(Self { words })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|reason| Error::malformed(path, reason))
    }

    /// The lexicon shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED_LEXICON).expect("bundled lexicon is well formed")
    }

    pub fn class_of(&self, word: &str) -> Option<u8> {
        self.words.get(word).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, u8)> {
        self.words.iter().map(|(w, &c)| (w.as_str(), c))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Add-one smoothed class distribution of lexicon hits in `text`.
pub fn sentiment_scores(text: &str, lexicon: &SentimentLexicon) -> [f64; SENTIMENT_CLASSES] {
    let mut counts = [1.0; SENTIMENT_CLASSES];
    for tok in tokenize(text) {
        if let Some(c) = lexicon.class_of(&tok) {
            counts[c as usize] += 1.0;
        }
    }
    let total: f64 = counts.iter().sum();
    counts.map(|c| c / total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SentimentVector {
    pub caption: [f64; SENTIMENT_CLASSES],
    pub hashtags: [f64; SENTIMENT_CLASSES],
}

impl SentimentVector {
    pub fn combined(&self) -> Vec<f64> {
        self.caption.iter().chain(&self.hashtags).copied().collect()
    }
}

/// Caption distribution and hashtag distribution (hashtags read as one
/// space-joined sentence).
pub fn sentiment_feature(post: &Post, lexicon: &SentimentLexicon) -> SentimentVector {
    SentimentVector {
        caption: sentiment_scores(&post.caption, lexicon),
        hashtags: sentiment_scores(&post.hashtags.join(" "), lexicon),
    }
}
