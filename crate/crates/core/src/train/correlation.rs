//! Rank correlation of raw post features with popularity.

use std::fmt::Write as _;

use super::metrics::{fmt_opt, spearman};
use crate::data::Dataset;
use crate::error::Result;
use crate::features::sentiment::SentimentLexicon;
use crate::features::social::{social_raw, NUMERIC_FIELDS};
use crate::features::{demographic_vector, sentiment_feature, DemographicMode};
use crate::nn::l2_norm;
use crate::providers::tokenize;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCorrelation {
    pub feature: String,
    /// `None` for a constant feature.
    pub srcc: Option<f64>,
}

/// Spearman correlation of each scalar feature with popularity. Vector
/// features (demographics, sentiment) are summarised by their L2 norm.
pub fn correlate_features(
    ds: &Dataset,
    lexicon: &SentimentLexicon,
) -> Result<Vec<FeatureCorrelation>> {
    let y = ds.targets();
    let mut columns: Vec<(String, Vec<f64>)> = NUMERIC_FIELDS
        .iter()
        .map(|n| (n.to_string(), Vec::with_capacity(y.len())))
        .collect();
    for extra in [
        "post_day",
        "post_month",
        "post_hour",
        "post_duration_days",
        "face_count",
        "caption_tokens",
        "demographic_norm",
        "sentiment_norm",
    ] {
        columns.push((extra.to_owned(), Vec::with_capacity(y.len())));
    }
    for p in &ds.posts {
        let raw = social_raw(p);
        let m = &p.metadata;
        let extras = [
            f64::from(m.post_day),
            f64::from(m.post_month),
            f64::from(m.post_hour),
            m.post_duration_days,
            p.faces.len() as f64,
            tokenize(&p.caption).len() as f64,
            l2_norm(&demographic_vector(&p.faces, DemographicMode::OneHot)),
            l2_norm(&sentiment_feature(p, lexicon).combined()),
        ];
        for (col, v) in columns
            .iter_mut()
            .zip(raw[..NUMERIC_FIELDS.len()].iter().chain(&extras))
        {
            col.1.push(*v);
        }
    }
    columns
        .into_iter()
        .map(|(feature, x)| {
            Ok(FeatureCorrelation {
                srcc: spearman(&x, &y)?,
                feature,
            })
        })
        .collect()
}

pub fn correlations_csv(rows: &[FeatureCorrelation]) -> String {
    let mut s = String::from("feature,srcc\n");
    for r in rows {
        let _ = writeln!(s, "{},{}", r.feature, fmt_opt(r.srcc));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::sample_corpus;

    fn get<'a>(rows: &'a [FeatureCorrelation], name: &str) -> &'a FeatureCorrelation {
        rows.iter().find(|r| r.feature == name).unwrap()
    }

    #[test]
    fn popularity_equal_to_tag_count() {
        let mut ds = sample_corpus(60, 5);
        for p in &mut ds.posts {
            p.popularity = p.metadata.tag_count as f64;
        }
        let rows = correlate_features(&ds, &SentimentLexicon::bundled()).unwrap();
        assert!((get(&rows, "tag_count").srcc.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_feature_is_undefined() {
        let mut ds = sample_corpus(30, 5);
        for p in &mut ds.posts {
            p.metadata.group_count = 7;
        }
        let rows = correlate_features(&ds, &SentimentLexicon::bundled()).unwrap();
        assert_eq!(get(&rows, "group_count").srcc, None);
        assert!(correlations_csv(&rows).contains("group_count,NaN"));
    }
}
