//! Post records, corpus I/O and deterministic splitting.
//!
//! A corpus is a UTF-8 file with one JSON object per line. Lines that fail
//! to parse or validate are skipped and counted; a duplicate `post_id`
//! rejects the whole corpus.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Emotion {
    Fear,
    Sadness,
    Happiness,
    Anger,
    Disgust,
    Surprise,
    Neutral,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Black,
    White,
    Asian,
    MiddleEastern,
    Indian,
    Latino,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl Emotion {
    pub const ALL: [Emotion; 7] = [
        Emotion::Fear,
        Emotion::Sadness,
        Emotion::Happiness,
        Emotion::Anger,
        Emotion::Disgust,
        Emotion::Surprise,
        Emotion::Neutral,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl Race {
    pub const ALL: [Race; 6] = [
        Race::Black,
        Race::White,
        Race::Asian,
        Race::MiddleEastern,
        Race::Indian,
        Race::Latino,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

pub const MAX_AGE: u32 = 100;

/// Attributes of one detected face, as produced by an external face analyser.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FaceAnnotation {
    pub gender: Gender,
    pub age: u32,
    pub emotion: Emotion,
    pub race: Race,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PostMetadata {
    pub avg_views: f64,
    pub group_count: u64,
    pub avg_member_count: f64,
    pub tag_count: u64,
    pub title_length: u64,
    pub description_length: u64,
    pub tagged_people: u8,
    pub comment_count: u64,
    /// 0 = Monday.
    pub post_day: u8,
    /// 0 = January.
    pub post_month: u8,
    pub post_hour: u8,
    pub post_duration_days: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub post_id: String,
    pub user_id: String,
    pub caption: String,
    #[serde(default)]
    pub hashtags: Vec<String>,
    pub image_ref: String,
    #[serde(default)]
    pub faces: Vec<FaceAnnotation>,
    pub metadata: PostMetadata,
    /// Log-normalised view count; the regression target.
    pub popularity: f64,
}

impl Post {
    /// Strips `#` prefixes and lowercases hashtags, then checks every field
    /// invariant.
    pub fn normalize_and_validate(&mut self) -> std::result::Result<(), String> {
        for tag in &mut self.hashtags {
            *tag = tag.trim_start_matches('#').to_lowercase();
        }
        self.validate()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.post_id.is_empty() {
            return Err("empty post_id".into());
        }
        if !self.popularity.is_finite() {
            return Err("popularity is not finite".into());
        }
        for tag in &self.hashtags {
            if tag.is_empty() || tag.chars().any(char::is_whitespace) {
                return Err(format!("invalid hashtag {tag:?}"));
            }
            if tag.starts_with('#') || tag.chars().any(char::is_uppercase) {
                return Err(format!("hashtag {tag:?} is not normalised"));
            }
        }
        for face in &self.faces {
            if face.age > MAX_AGE {
                return Err(format!("face age {} outside [0, {MAX_AGE}]", face.age));
            }
        }
        let m = &self.metadata;
        if m.tag_count != self.hashtags.len() as u64 {
            return Err(format!(
                "tag_count {} but {} hashtags",
                m.tag_count,
                self.hashtags.len()
            ));
        }
        if m.post_day > 6 || m.post_month > 11 || m.post_hour > 23 {
            return Err("calendar field out of range".into());
        }
        if m.tagged_people > 1 {
            return Err("tagged_people must be 0 or 1".into());
        }
        for (name, v) in [
            ("avg_views", m.avg_views),
            ("avg_member_count", m.avg_member_count),
            ("post_duration_days", m.post_duration_days),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub posts: Vec<Post>,
}

impl Dataset {
    /// Builds a dataset, rejecting duplicate ids.
    pub fn new(name: impl Into<String>, posts: Vec<Post>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &posts {
            if !seen.insert(p.post_id.as_str()) {
                return Err(Error::DuplicatePostId(p.post_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            posts,
        })
    }

    pub fn len(&self) -> usize {
        self.posts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posts.is_empty()
    }

    pub fn find(&self, post_id: &str) -> Option<&Post> {
        self.posts.iter().find(|p| p.post_id == post_id)
    }

    pub fn targets(&self) -> Vec<f64> {
        self.posts.iter().map(|p| p.popularity).collect()
    }
}

/// Outcome of reading a corpus file.
#[derive(Debug)]
pub struct LoadReport {
    pub dataset: Dataset,
    /// Malformed lines, as (1-based line number, reason).
    pub skipped: Vec<(usize, String)>,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<LoadReport> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut posts = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Post>(line)
            .map_err(|e| e.to_string())
            .and_then(|mut p| p.normalize_and_validate().map(|_| p));
        match parsed {
            Ok(p) => posts.push(p),
            Err(reason) => skipped.push((i + 1, reason)),
        }
    }
    if posts.is_empty() {
        return Err(Error::EmptyCorpus {
            path: path.to_owned(),
            skipped: skipped.len(),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(LoadReport {
        dataset: Dataset::new(name, posts)?,
        skipped,
    })
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for p in &ds.posts {
        serde_json::to_writer(&mut out, p)
            .map_err(|e| Error::InvalidArgument(format!("serialising {}: {e}", p.post_id)))?;
        out.push(b'\n');
    }
    fs::File::create(path)
        .and_then(|mut f| f.write_all(&out))
        .map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let f = Self { train, val, test };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        if [self.train, self.val, self.test]
            .iter()
            .any(|&x| x <= 0.0 || !x.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "split fractions must be positive, got {self:?}"
            )));
        }
        if (self.train + self.val + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Partition sizes for `n` posts: validation and test sizes are `n·f`
    /// rounded to nearest, train takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let val = (n as f64 * self.val).round() as usize;
        let test = ((n as f64 * self.test).round() as usize).min(n - val.min(n));
        let val = val.min(n);
        (n - val - test, val, test)
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Sorts by `post_id`, shuffles under `seed`, then cuts train/val/test.
pub fn split_dataset(ds: &Dataset, fractions: SplitFractions, seed: u64) -> Result<Split> {
    fractions.check()?;
    let mut posts = ds.posts.clone();
    posts.sort_by(|a, b| a.post_id.cmp(&b.post_id));
    posts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (n_train, n_val, _) = fractions.sizes(posts.len());
    let test = posts.split_off(n_train + n_val);
    let val = posts.split_off(n_train);
    Ok(Split {
        train: Dataset {
            name: format!("{}/train", ds.name),
            posts,
        },
        val: Dataset {
            name: format!("{}/val", ds.name),
            posts: val,
        },
        test: Dataset {
            name: format!("{}/test", ds.name),
            posts: test,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn post(id: &str) -> Post {
        Post {
            post_id: id.into(),
            user_id: "u1".into(),
            caption: "holi festival in madrid".into(),
            hashtags: vec!["spain".into(), "holi".into()],
            image_ref: format!("img-{id}"),
            faces: vec![FaceAnnotation {
                gender: Gender::Female,
                age: 30,
                emotion: Emotion::Happiness,
                race: Race::Asian,
            }],
            metadata: PostMetadata {
                avg_views: 120.5,
                group_count: 3,
                avg_member_count: 1500.0,
                tag_count: 2,
                title_length: 4,
                description_length: 12,
                tagged_people: 1,
                comment_count: 7,
                post_day: 5,
                post_month: 2,
                post_hour: 14,
                post_duration_days: 31.25,
            },
            popularity: 3.7,
        }
    }

    fn ds(n: usize) -> Dataset {
        Dataset::new("t", (0..n).map(|i| post(&format!("p{i:03}"))).collect()).unwrap()
    }

    #[test]
    fn split_sizes() {
        let f = SplitFractions::default();
        assert_eq!(f.sizes(10), (8, 1, 1));
        let f = SplitFractions::new(0.34, 0.33, 0.33).unwrap();
        assert_eq!(f.sizes(3), (1, 1, 1));
    }

    #[test]
    fn split_is_deterministic() {
        let d = ds(10);
        let a = split_dataset(&d, SplitFractions::default(), 7).unwrap();
        let b = split_dataset(&d, SplitFractions::default(), 7).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.val, b.val);
        assert_eq!(a.test, b.test);
        assert_eq!((a.train.len(), a.val.len(), a.test.len()), (8, 1, 1));
    }

    #[test]
    fn non_positive_fraction_rejected() {
        assert!(SplitFractions::new(1.0, 0.0, 0.0).is_err());
        assert!(SplitFractions::new(0.5, 0.3, 0.3).is_err());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = Dataset::new("d", vec![post("a"), post("a")]).unwrap_err();
        assert!(matches!(err, Error::DuplicatePostId(id) if id == "a"));
    }

    #[test]
    fn hashtags_normalised() {
        let mut p = post("x");
        p.hashtags = vec!["#Spain".into(), "Holi".into()];
        p.normalize_and_validate().unwrap();
        assert_eq!(p.hashtags, vec!["spain", "holi"]);
    }

    #[test]
    fn validation_rules() {
        let mut p = post("x");
        p.faces[0].age = 101;
        assert!(p.validate().is_err());
        let mut p = post("x");
        p.metadata.tag_count = 5;
        assert!(p.validate().is_err());
        let mut p = post("x");
        p.metadata.post_hour = 24;
        assert!(p.validate().is_err());
        let mut p = post("x");
        p.popularity = f64::NAN;
        assert!(p.validate().is_err());
    }
}
