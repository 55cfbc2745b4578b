//! Demographic, sentiment and social encoders, and PCA.

pub mod demographic;
pub mod pca;
pub mod sentiment;
pub mod social;

pub use demographic::{demographic_vector, DemographicMode, DEMOGRAPHIC_DIM};
pub use pca::{fit_pca, PcaModel};
pub use sentiment::{sentiment_feature, sentiment_scores, SentimentLexicon, SentimentVector};
pub use social::{social_raw, SocialNormalizer, SOCIAL_RAW_DIM};
