//! Seeded synthetic corpora for tests, demos and the constructed-signal
//! experiments.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Emotion, FaceAnnotation, Gender, Post, PostMetadata, Race};
use crate::error::Result;
use crate::providers::EmbeddingProvider;

const WORDS: &[&str] = &[
    "sunset", "coffee", "street", "friends", "beach", "city", "music", "dinner", "weekend",
    "travel", "morning", "garden", "light", "river", "market", "road", "winter", "summer",
];
const MOOD_WORDS: &[&str] = &[
    "love",
    "happy",
    "beautiful",
    "sad",
    "terrible",
    "great",
    "awful",
];
const TAGS: &[&str] = &[
    "travel", "food", "spain", "madrid", "photo", "nature", "art", "sky", "portrait", "street",
    "music", "fashion",
];

fn random_faces(rng: &mut ChaCha8Rng) -> Vec<FaceAnnotation> {
    (0..rng.gen_range(0..3))
        .map(|_| FaceAnnotation {
            gender: *Gender::ALL.choose(rng).unwrap(),
            age: rng.gen_range(5..80),
            emotion: *Emotion::ALL.choose(rng).unwrap(),
            race: *Race::ALL.choose(rng).unwrap(),
        })
        .collect()
}

fn random_metadata(rng: &mut ChaCha8Rng, tag_count: usize) -> PostMetadata {
    PostMetadata {
        avg_views: rng.gen_range(0.0..5000.0),
        group_count: rng.gen_range(0..50),
        avg_member_count: rng.gen_range(0.0..20000.0),
        tag_count: tag_count as u64,
        title_length: rng.gen_range(0..60),
        description_length: rng.gen_range(0..400),
        tagged_people: rng.gen_range(0..2),
        comment_count: rng.gen_range(0..100),
        post_day: rng.gen_range(0..7),
        post_month: rng.gen_range(0..12),
        post_hour: rng.gen_range(0..24),
        post_duration_days: rng.gen_range(0.0..900.0),
    }
}

fn random_post(rng: &mut ChaCha8Rng, i: usize) -> Post {
    let n_words = rng.gen_range(2..9);
    let mut words: Vec<&str> = (0..n_words).map(|_| *WORDS.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.6) {
        words.push(MOOD_WORDS.choose(rng).unwrap());
    }
    let n_tags = rng.gen_range(0..4);
    let hashtags: Vec<String> = TAGS
        .choose_multiple(rng, n_tags)
        .map(|t| t.to_string())
        .collect();
    let metadata = random_metadata(rng, hashtags.len());
    Post {
        post_id: format!("p{i:05}"),
        user_id: format!("u{}", rng.gen_range(0..25)),
        caption: words.join(" "),
        image_ref: format!("img/{i:05}.jpg"),
        faces: random_faces(rng),
        hashtags,
        metadata,
        popularity: 0.0,
    }
}

/// A small mixed corpus whose popularity depends loosely on views, tags,
/// comments and a little noise.
pub fn sample_corpus(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = (0..n)
        .map(|i| {
            let mut p = random_post(&mut rng, i);
            let m = &p.metadata;
            p.popularity = 0.4 * (1.0 + m.avg_views).ln()
                + 0.3 * m.tag_count as f64
                + 0.01 * m.comment_count as f64
                + rng.gen_range(-0.3..0.3);
            p
        })
        .collect();
    Dataset::new("sample", posts).expect("generated ids are unique")
}

/// Popularity is an exact linear function of `title_length`.
pub fn linear_social_corpus(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = (0..n)
        .map(|i| {
            let mut p = random_post(&mut rng, i);
            p.popularity = 0.1 * p.metadata.title_length as f64 - 3.0;
            p
        })
        .collect();
    Dataset::new("linear-social", posts).expect("generated ids are unique")
}

/// Number of topics in [`hashtag_signal_corpus`].
pub const SIGNAL_TOPICS: usize = 4;
const SIGNAL_WORDS_PER_TOPIC: usize = 6;
const DISTRACTORS: usize = 12;

pub fn signal_word(topic: usize, k: usize) -> String {
    format!("w{topic}x{k}")
}

/// Every caption holds one word from each topic vocabulary plus distractors,
/// in random order. The post's single hashtag names a topic, and popularity
/// is the projection of that topic's word embedding onto a fixed direction.
/// Only attention guided by the hashtag can tell which word matters.
pub fn hashtag_signal_corpus(
    n: usize,
    seed: u64,
    provider: &EmbeddingProvider,
    embed_dim: usize,
    max_tokens: usize,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let direction = crate::providers::stub_vector(seed, "signal-direction", "", embed_dim);
    let norm = crate::nn::l2_norm(&direction).max(1e-12);
    // uniform [-1, 1] entries give a projection variance of 1/3 per unit norm
    let scale = 3f64.sqrt() / norm;
    let extra = max_tokens.saturating_sub(SIGNAL_TOPICS).min(3);
    let mut posts = Vec::with_capacity(n);
    for i in 0..n {
        let topic = rng.gen_range(0..SIGNAL_TOPICS);
        let chosen: Vec<String> = (0..SIGNAL_TOPICS)
            .map(|t| signal_word(t, rng.gen_range(0..SIGNAL_WORDS_PER_TOPIC)))
            .collect();
        let mut words = chosen.clone();
        for _ in 0..rng.gen_range(0..=extra) {
            words.push(format!("noise{}", rng.gen_range(0..DISTRACTORS)));
        }
        words.shuffle(&mut rng);
        let emb = provider.token_vector(&chosen[topic], embed_dim)?;
        let hashtags = vec![format!("topic{topic}")];
        let mut p = Post {
            post_id: format!("s{i:05}"),
            user_id: format!("u{}", rng.gen_range(0..25)),
            caption: words.join(" "),
            image_ref: format!("img/s{i:05}.jpg"),
            faces: Vec::new(),
            metadata: random_metadata(&mut rng, hashtags.len()),
            hashtags,
            popularity: 0.0,
        };
        p.popularity = scale * crate::nn::dot(&direction, &emb);
        posts.push(p);
    }
    Dataset::new("hashtag-signal", posts)
}
