//! User, post and time metadata as a fixed-length vector.
//!
//! Layout (33 values): nine z-scored numerics (user id hash, average views,
//! group count, average member count, tag count, title length, description
//! length, tagged people, comment count), day-of-week one-hot (7), month
//! one-hot (12), time-of-day one-hot (4), z-scored post duration.

use crate::data::Post;
use crate::error::{Error, Result};
use crate::providers::stable_hash;

pub const NUMERIC_FIELDS: [&str; 9] = [
    "user_id",
    "avg_views",
    "group_count",
    "avg_member_count",
    "tag_count",
    "title_length",
    "description_length",
    "tagged_people",
    "comment_count",
];
pub const DAY_OFFSET: usize = NUMERIC_FIELDS.len();
pub const MONTH_OFFSET: usize = DAY_OFFSET + 7;
pub const SEGMENT_OFFSET: usize = MONTH_OFFSET + 12;
pub const DURATION_INDEX: usize = SEGMENT_OFFSET + 4;
pub const SOCIAL_RAW_DIM: usize = DURATION_INDEX + 1;

/// Positions that are z-scored; the one-hot blocks are left alone.
fn scaled_positions() -> impl Iterator<Item = usize> {
    (0..NUMERIC_FIELDS.len()).chain(std::iter::once(DURATION_INDEX))
}

/// Maps a user id to [0, 1).
pub fn user_id_unit(user_id: &str) -> f64 {
    (stable_hash(0, "user", user_id) >> 11) as f64 / (1u64 << 53) as f64
}

/// Six-hour blocks starting at midnight: night, morning, afternoon, evening.
pub fn time_segment(hour: u8) -> usize {
    usize::from(hour.min(23)) / 6
}

/// The unnormalised social vector.
pub fn social_raw(post: &Post) -> Vec<f64> {
    let m = &post.metadata;
    let mut v = vec![0.0; SOCIAL_RAW_DIM];
    v[..NUMERIC_FIELDS.len()].copy_from_slice(&[
        user_id_unit(&post.user_id),
        m.avg_views,
        m.group_count as f64,
        m.avg_member_count,
        m.tag_count as f64,
        m.title_length as f64,
        m.description_length as f64,
        f64::from(m.tagged_people),
        m.comment_count as f64,
    ]);
    v[DAY_OFFSET + usize::from(m.post_day.min(6))] = 1.0;
    v[MONTH_OFFSET + usize::from(m.post_month.min(11))] = 1.0;
    v[SEGMENT_OFFSET + time_segment(m.post_hour)] = 1.0;
    v[DURATION_INDEX] = m.post_duration_days;
    v
}

/// Training-split mean and standard deviation of the numeric positions.
#[derive(Clone, Debug, PartialEq)]
pub struct SocialNormalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl SocialNormalizer {
    /// Identity transform.
    pub fn identity() -> Self {
        Self {
            mean: vec![0.0; SOCIAL_RAW_DIM],
            std: vec![1.0; SOCIAL_RAW_DIM],
        }
    }

    pub fn fit(raw_rows: &[Vec<f64>]) -> Result<Self> {
        if raw_rows.is_empty() {
            return Err(Error::EmptyDataset("social normalizer needs rows".into()));
        }
        let n = raw_rows.len() as f64;
        let mut norm = Self::identity();
        for i in scaled_positions() {
            let mean = raw_rows.iter().map(|r| r[i]).sum::<f64>() / n;
            let var = raw_rows.iter().map(|r| (r[i] - mean).powi(2)).sum::<f64>() / n;
            norm.mean[i] = mean;
            norm.std[i] = if var > 0.0 { var.sqrt() } else { 1.0 };
        }
        Ok(norm)
    }

    pub fn apply(&self, raw: &[f64]) -> Result<Vec<f64>> {
        if raw.len() != self.mean.len() {
            return Err(Error::Shape(format!(
                "social vector of length {}, expected {}",
                raw.len(),
                self.mean.len()
            )));
        }
        Ok(raw
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}
